//! 32-bit float WAV I/O. FOA files are stored in ACN order (W, Y, Z, X).

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};
use crate::foa::FoaSignal;

/// ACN index of each in-memory channel (W, X, Y, Z).
const ACN_OF_INTERNAL: [usize; 4] = [0, 3, 1, 2];

fn float_spec(channels: u16, sample_rate: u32) -> WavSpec {
    WavSpec {
        channels,
        sample_rate,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    }
}

fn wav_err(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other}", path.display())),
    }
}

pub fn write_foa(path: impl AsRef<Path>, signal: &FoaSignal) -> Result<()> {
    write_foa_group(path, std::slice::from_ref(signal))
}

/// Writes several equally long FOA signals into one file, four ACN channels
/// per signal.
pub fn write_foa_group(path: impl AsRef<Path>, signals: &[FoaSignal]) -> Result<()> {
    let path = path.as_ref();
    let first = signals
        .first()
        .ok_or_else(|| Error::InvalidInput("no signals to write".into()))?;
    if signals
        .iter()
        .any(|s| s.len() != first.len() || s.sample_rate() != first.sample_rate())
    {
        return Err(Error::Mismatch(
            "grouped FOA signals differ in length or rate".into(),
        ));
    }
    let count = u16::try_from(4 * signals.len())
        .map_err(|_| Error::InvalidInput("too many signals for one file".into()))?;
    let mut writer = WavWriter::create(path, float_spec(count, first.sample_rate()))
        .map_err(|e| wav_err(path, e))?;
    let acn: Vec<[&Vec<f64>; 4]> = signals
        .iter()
        .map(|s| {
            let ch = s.channels();
            [&ch[0], &ch[2], &ch[3], &ch[1]]
        })
        .collect();
    for i in 0..first.len() {
        for c in acn.iter().flatten() {
            writer
                .write_sample(c[i] as f32)
                .map_err(|e| wav_err(path, e))?;
        }
    }
    writer.finalize().map_err(|e| wav_err(path, e))
}

pub fn read_foa(path: impl AsRef<Path>) -> Result<FoaSignal> {
    let path = path.as_ref();
    let mut group = read_foa_group(path)?;
    if group.len() != 1 {
        return Err(Error::Format(format!(
            "{}: expected 4 channels, found {}",
            path.display(),
            4 * group.len()
        )));
    }
    Ok(group.remove(0))
}

/// Reads a file written by [`write_foa_group`].
pub fn read_foa_group(path: impl AsRef<Path>) -> Result<Vec<FoaSignal>> {
    let path = path.as_ref();
    let mut reader = WavReader::open(path).map_err(|e| wav_err(path, e))?;
    let spec = reader.spec();
    let n = spec.channels as usize;
    if n == 0 || !n.is_multiple_of(4) {
        return Err(Error::Format(format!(
            "{}: expected 4 channels per signal, found {n}",
            path.display()
        )));
    }
    check_float(path, &spec)?;
    let frames = reader.duration() as usize;
    let mut acn: Vec<Vec<f64>> = (0..n).map(|_| Vec::with_capacity(frames)).collect();
    for (i, s) in reader.samples::<f32>().enumerate() {
        let s = s.map_err(|e| wav_err(path, e))?;
        acn[i % n].push(s as f64);
    }
    if acn.iter().any(|c| c.len() != frames) {
        return Err(Error::Format(format!(
            "{}: truncated data ({} of {frames} frames)",
            path.display(),
            acn[n - 1].len(),
        )));
    }
    acn.chunks_exact_mut(4)
        .map(|g| {
            let channels = std::array::from_fn(|c| std::mem::take(&mut g[ACN_OF_INTERNAL[c]]));
            FoaSignal::new(channels, spec.sample_rate)
        })
        .collect()
}

fn check_float(path: &Path, spec: &WavSpec) -> Result<()> {
    if spec.sample_format != SampleFormat::Float || spec.bits_per_sample != 32 {
        return Err(Error::Format(format!(
            "{}: unsupported encoding ({:?}, {} bits); expected 32-bit float",
            path.display(),
            spec.sample_format,
            spec.bits_per_sample
        )));
    }
    Ok(())
}

pub fn write_mono(path: impl AsRef<Path>, samples: &[f64], sample_rate: u32) -> Result<()> {
    let path = path.as_ref();
    let mut writer =
        WavWriter::create(path, float_spec(1, sample_rate)).map_err(|e| wav_err(path, e))?;
    for &s in samples {
        writer
            .write_sample(s as f32)
            .map_err(|e| wav_err(path, e))?;
    }
    writer.finalize().map_err(|e| wav_err(path, e))
}

pub fn read_mono(path: impl AsRef<Path>) -> Result<(Vec<f64>, u32)> {
    let path = path.as_ref();
    let mut reader = WavReader::open(path).map_err(|e| wav_err(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::Format(format!(
            "{}: expected 1 channel, found {}",
            path.display(),
            spec.channels
        )));
    }
    check_float(path, &spec)?;
    let samples = reader
        .samples::<f32>()
        .map(|s| s.map(|v| v as f64).map_err(|e| wav_err(path, e)))
        .collect::<Result<Vec<_>>>()?;
    Ok((samples, spec.sample_rate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::foa::{encode_plane_wave, Direction};

    #[test]
    fn round_trip_is_bit_exact_for_f32_samples() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let mono: Vec<f64> = (0..1000).map(|i| ((i as f64) * 0.01).sin()).collect();
        let sig = encode_plane_wave(&mono, &Direction::from_degrees(40.0, 20.0), 16_000)
            .unwrap()
            .quantized_f32();
        write_foa(&path, &sig).unwrap();
        let back = read_foa(&path).unwrap();
        assert_eq!(back, sig);
        assert_eq!(back.sample_rate(), 16_000);
        assert_eq!(back.len(), 1000);
    }

    #[test]
    fn group_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.wav");
        let mono: Vec<f64> = (0..300).map(|i| ((i as f64) * 0.03).cos()).collect();
        let a = encode_plane_wave(&mono, &Direction::from_degrees(10.0, 0.0), 16_000)
            .unwrap()
            .quantized_f32();
        let b = encode_plane_wave(&mono, &Direction::from_degrees(-120.0, 30.0), 16_000)
            .unwrap()
            .quantized_f32();
        write_foa_group(&path, &[a.clone(), b.clone()]).unwrap();
        assert_eq!(read_foa_group(&path).unwrap(), vec![a, b]);
        assert!(read_foa(&path).is_err());
    }

    #[test]
    fn rejects_wrong_channel_count() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stereo.wav");
        let mut w = WavWriter::create(&path, float_spec(2, 16_000)).unwrap();
        for _ in 0..8 {
            w.write_sample(0.5f32).unwrap();
        }
        w.finalize().unwrap();
        let err = read_foa(&path).unwrap_err().to_string();
        assert!(err.contains("expected 4 channels"), "{err}");
    }

    #[test]
    fn rejects_integer_pcm() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pcm.wav");
        let spec = WavSpec {
            channels: 4,
            sample_rate: 16_000,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(&path, spec).unwrap();
        for _ in 0..8 {
            w.write_sample(1i16).unwrap();
        }
        w.finalize().unwrap();
        assert!(matches!(read_foa(&path), Err(Error::Format(_))));
    }

    #[test]
    fn acn_channel_one_is_internal_y() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("acn.wav");
        let mut w = WavWriter::create(&path, float_spec(4, 16_000)).unwrap();
        for _ in 0..16 {
            for acn in 0..4 {
                w.write_sample(if acn == 1 { 0.25f32 } else { 0.0 })
                    .unwrap();
            }
        }
        w.finalize().unwrap();
        let sig = read_foa(&path).unwrap();
        assert!(sig.y().iter().all(|v| *v == 0.25));
        assert!(sig
            .w()
            .iter()
            .chain(sig.x())
            .chain(sig.z())
            .all(|v| *v == 0.0));
    }

    #[test]
    fn truncated_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        let sig = FoaSignal::silence(256, 16_000);
        write_foa(&path, &sig).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 10]).unwrap();
        assert!(read_foa(&path).is_err());
    }

    #[test]
    fn mono_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.wav");
        write_mono(&path, &[0.5, -0.25, 0.125], 16_000).unwrap();
        let (s, sr) = read_mono(&path).unwrap();
        assert_eq!(s, vec![0.5, -0.25, 0.125]);
        assert_eq!(sr, 16_000);
    }
}
