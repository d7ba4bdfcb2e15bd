//! Parametric harmonic voices used in place of recorded speech.
//!
//! A voice is an f0 pulse train driving parallel two-pole formant resonators.
//! Speech-like variation comes from syllables: each syllable re-draws small
//! formant and pitch perturbations and carries a raised-sine envelope at the
//! voice's modulation rate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Target RMS of a rendered voice over its active samples.
pub const VOICE_RMS: f64 = 0.1;

const EDGE_FADE_MS: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Formant {
    pub center_hz: f64,
    pub bandwidth_hz: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerSpec {
    pub speaker_id: u32,
    pub f0: f64,
    pub formants: Vec<Formant>,
    pub am_rate: f64,
}

impl SpeakerSpec {
    pub fn validate(&self) -> Result<()> {
        if !(80.0..=320.0).contains(&self.f0) {
            return Err(Error::InvalidInput(format!(
                "speaker {}: f0 {} Hz outside [80, 320]",
                self.speaker_id, self.f0
            )));
        }
        if self.formants.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "speaker {}: needs at least 2 formants",
                self.speaker_id
            )));
        }
        if self
            .formants
            .iter()
            .any(|f| !(f.gain > 0.0) || !(f.bandwidth_hz > 0.0) || !(f.center_hz > 0.0))
        {
            return Err(Error::InvalidInput(format!(
                "speaker {}: formant gains, bandwidths and centers must be positive",
                self.speaker_id
            )));
        }
        if !(self.am_rate > 0.0) {
            return Err(Error::InvalidInput(format!(
                "speaker {}: modulation rate must be positive",
                self.speaker_id
            )));
        }
        Ok(())
    }

    /// Deterministic voice for a numeric identity; the voice bank is the
    /// function `id -> SpeakerSpec`.
    pub fn from_id(speaker_id: u32) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_F00D ^ ((speaker_id as u64) << 16));
        // Log-uniform f0 covers low and high voices evenly.
        let f0 = (80f64.ln() + rng.random::<f64>() * (320f64.ln() - 80f64.ln())).exp();
        let ranges = [
            (280.0, 900.0, 60.0, 140.0),
            (850.0, 2400.0, 80.0, 200.0),
            (2200.0, 3400.0, 120.0, 260.0),
            (3300.0, 4600.0, 150.0, 320.0),
        ];
        let formants = ranges
            .iter()
            .map(|&(lo, hi, blo, bhi)| Formant {
                center_hz: rng.random_range(lo..hi),
                bandwidth_hz: rng.random_range(blo..bhi),
                gain: rng.random_range(0.25..1.0),
            })
            .collect();
        Self {
            speaker_id,
            f0,
            formants,
            am_rate: rng.random_range(3.0..6.0),
        }
    }
}

/// Two-pole resonator with unity peak gain (approximately).
struct Resonator {
    a1: f64,
    a2: f64,
    norm: f64,
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn new() -> Self {
        Self {
            a1: 0.0,
            a2: 0.0,
            norm: 0.0,
            y1: 0.0,
            y2: 0.0,
        }
    }

    fn tune(&mut self, center_hz: f64, bandwidth_hz: f64, gain: f64, sample_rate: f64) {
        let nyq_guard = 0.45 * sample_rate;
        let fc = center_hz.min(nyq_guard);
        let r = (-std::f64::consts::PI * bandwidth_hz / sample_rate).exp();
        let theta = 2.0 * std::f64::consts::PI * fc / sample_rate;
        self.a1 = 2.0 * r * theta.cos();
        self.a2 = -r * r;
        self.norm = gain * (1.0 - r);
    }

    fn process(&mut self, x: f64) -> f64 {
        let y = self.norm * x + self.a1 * self.y1 + self.a2 * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

/// Renders `spec` over `duration_s`, active only inside `intervals` (seconds).
/// Samples outside the intervals are exactly zero.
pub fn synth_voice(
    spec: &SpeakerSpec,
    intervals: &[(f64, f64)],
    duration_s: f64,
    sample_rate: u32,
    seed: u64,
) -> Result<Vec<f64>> {
    spec.validate()?;
    let sr = sample_rate as f64;
    let n = (duration_s * sr).round() as usize;
    let mut out = vec![0.0; n];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let breath = Normal::new(0.0, 1.0).expect("unit normal");

    for &(start_s, end_s) in intervals {
        let start = ((start_s * sr).round() as usize).min(n);
        let end = ((end_s * sr).round() as usize).min(n);
        if end <= start {
            continue;
        }
        let mut resonators: Vec<Resonator> =
            spec.formants.iter().map(|_| Resonator::new()).collect();
        let mut phase = rng.random::<f64>();
        let mut t = start;
        while t < end {
            let syll_len = ((sr / spec.am_rate) * rng.random_range(0.7..1.3)).round() as usize;
            let syll_end = (t + syll_len.max(1)).min(end);
            let pitch = spec.f0 * rng.random_range(0.9..1.1);
            let amp = rng.random_range(0.55..1.0);
            for (res, f) in resonators.iter_mut().zip(&spec.formants) {
                let shift = rng.random_range(0.88..1.12);
                res.tune(f.center_hz * shift, f.bandwidth_hz, f.gain, sr);
            }
            let len = (syll_end - t) as f64;
            for (k, sample) in out[t..syll_end].iter_mut().enumerate() {
                let u = (k as f64 + 0.5) / len;
                let env = amp * (0.2 + 0.8 * (std::f64::consts::PI * u).sin());
                // Slow vibrato around the syllable pitch.
                let f_inst =
                    pitch * (1.0 + 0.01 * (2.0 * std::f64::consts::PI * 5.0 * k as f64 / sr).sin());
                phase += f_inst / sr;
                let mut excitation = 0.02 * breath.sample(&mut rng);
                if phase >= 1.0 {
                    phase -= 1.0;
                    excitation += 1.0;
                }
                let voiced: f64 = resonators.iter_mut().map(|r| r.process(excitation)).sum();
                *sample = env * voiced;
            }
            t = syll_end;
        }
        let fade = ((EDGE_FADE_MS / 1000.0 * sr) as usize).min((end - start) / 2);
        for k in 0..fade {
            let g = k as f64 / fade as f64;
            out[start + k] *= g;
            out[end - 1 - k] *= g;
        }
    }

    let active: usize = intervals
        .iter()
        .map(|&(s, e)| {
            let a = ((s * sr).round() as usize).min(n);
            let b = ((e * sr).round() as usize).min(n);
            b.saturating_sub(a)
        })
        .sum();
    if active > 0 {
        let energy: f64 = out.iter().map(|v| v * v).sum();
        if energy > 0.0 {
            let gain = VOICE_RMS / (energy / active as f64).sqrt();
            out.iter_mut().for_each(|v| *v *= gain);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_intervals_give_silence() {
        let s = synth_voice(&SpeakerSpec::from_id(1), &[], 1.0, 16_000, 3).unwrap();
        assert_eq!(s.len(), 16_000);
        assert!(s.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = SpeakerSpec::from_id(7);
        let a = synth_voice(&spec, &[(0.1, 0.9)], 1.0, 16_000, 42).unwrap();
        let b = synth_voice(&spec, &[(0.1, 0.9)], 1.0, 16_000, 42).unwrap();
        assert_eq!(a, b);
        let c = synth_voice(&spec, &[(0.1, 0.9)], 1.0, 16_000, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_outside_intervals_and_normalized() {
        let spec = SpeakerSpec::from_id(11);
        let s = synth_voice(&spec, &[(0.25, 0.75), (1.0, 1.5)], 2.0, 16_000, 5).unwrap();
        assert!(s[..4000].iter().all(|v| *v == 0.0));
        assert!(s[12_000..16_000].iter().all(|v| *v == 0.0));
        assert!(s[24_000..].iter().all(|v| *v == 0.0));
        assert!(s[4000..12_000].iter().any(|v| *v != 0.0));
        let rms = (s.iter().map(|v| v * v).sum::<f64>() / 16_000.0).sqrt();
        assert!((rms - VOICE_RMS).abs() < 1e-9);
    }

    #[test]
    fn voice_bank_is_valid_and_stable() {
        for id in 0..200 {
            let spec = SpeakerSpec::from_id(id);
            spec.validate().unwrap();
            assert_eq!(spec, SpeakerSpec::from_id(id));
        }
    }

    #[test]
    fn validation_rejects_bad_specs() {
        let mut spec = SpeakerSpec::from_id(0);
        spec.f0 = 50.0;
        assert!(spec.validate().is_err());
        let mut spec = SpeakerSpec::from_id(0);
        spec.formants.truncate(1);
        assert!(spec.validate().is_err());
        let mut spec = SpeakerSpec::from_id(0);
        spec.formants[0].gain = 0.0;
        assert!(spec.validate().is_err());
    }
}
