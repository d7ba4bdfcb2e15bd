//! Log mel-band energies and statistics pooling.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub n_bands: usize,
    pub frame_ms: u32,
    pub hop_ms: u32,
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    pub sample_rate: u32,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            n_bands: 24,
            frame_ms: 32,
            hop_ms: 16,
            fmin_hz: 50.0,
            fmax_hz: 8000.0,
            sample_rate: 16_000,
        }
    }
}

impl FeatureConfig {
    pub fn frame_samples(&self) -> usize {
        self.sample_rate as usize * self.frame_ms as usize / 1000
    }

    pub fn hop_samples(&self) -> usize {
        self.sample_rate as usize * self.hop_ms as usize / 1000
    }

    pub fn pooled_dim(&self) -> usize {
        2 * self.n_bands
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Band edges `(lower, center, upper)` in Hz, equally spaced on the mel scale.
pub fn band_edges(cfg: &FeatureConfig) -> Vec<(f64, f64, f64)> {
    let lo = hz_to_mel(cfg.fmin_hz);
    let hi = hz_to_mel(cfg.fmax_hz.min(cfg.sample_rate as f64 / 2.0));
    let step = (hi - lo) / (cfg.n_bands + 1) as f64;
    (0..cfg.n_bands)
        .map(|b| {
            (
                mel_to_hz(lo + step * b as f64),
                mel_to_hz(lo + step * (b + 1) as f64),
                mel_to_hz(lo + step * (b + 2) as f64),
            )
        })
        .collect()
}

/// Log band energies, one row per analysis frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFrameSeq {
    pub frames: Vec<Vec<f64>>,
    /// Frames whose every band sits at the log floor (digital silence).
    pub silent: Vec<bool>,
}

impl FeatureFrameSeq {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn n_bands(&self) -> usize {
        self.frames.first().map(Vec::len).unwrap_or(0)
    }
}

/// Windowed-FFT triangular filterbank. Cheap to clone; shareable across threads.
#[derive(Clone)]
pub struct FeatureExtractor {
    cfg: FeatureConfig,
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    /// Per band: first FFT bin and its weights.
    bands: Vec<(usize, Vec<f64>)>,
}

impl std::fmt::Debug for FeatureExtractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FeatureExtractor")
            .field("cfg", &self.cfg)
            .finish()
    }
}

impl FeatureExtractor {
    pub fn new(cfg: FeatureConfig) -> Self {
        let n = cfg.frame_samples();
        let fft = FftPlanner::new().plan_fft_forward(n);
        let window = (0..n)
            .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
            .collect();
        let bin_hz = cfg.sample_rate as f64 / n as f64;
        let bands = band_edges(&cfg)
            .into_iter()
            .map(|(lo, c, hi)| {
                let first = (lo / bin_hz).ceil() as usize;
                let last = ((hi / bin_hz).floor() as usize).min(n / 2);
                let weights = (first..=last)
                    .map(|k| {
                        let f = k as f64 * bin_hz;
                        if f <= c {
                            ((f - lo) / (c - lo)).max(0.0)
                        } else {
                            ((hi - f) / (hi - c)).max(0.0)
                        }
                    })
                    .collect();
                (first, weights)
            })
            .collect();
        Self {
            cfg,
            fft,
            window,
            bands,
        }
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.cfg
    }

    /// Filterbank weight of `band` at FFT bin `bin`.
    pub fn weight(&self, band: usize, bin: usize) -> f64 {
        let (first, w) = &self.bands[band];
        if bin < *first {
            0.0
        } else {
            w.get(bin - first).copied().unwrap_or(0.0)
        }
    }

    pub fn frame_count(&self, samples: usize) -> usize {
        let n = self.cfg.frame_samples();
        if samples < n {
            0
        } else {
            (samples - n) / self.cfg.hop_samples() + 1
        }
    }

    pub fn features(&self, mono: &[f64], sample_rate: u32) -> Result<FeatureFrameSeq> {
        if sample_rate != self.cfg.sample_rate {
            return Err(Error::Mismatch(format!(
                "features configured for {} Hz, got {sample_rate} Hz",
                self.cfg.sample_rate
            )));
        }
        let n = self.cfg.frame_samples();
        if mono.len() < n {
            return Err(Error::TooShort(format!(
                "{} samples, need at least one {n}-sample frame",
                mono.len()
            )));
        }
        let hop = self.cfg.hop_samples();
        let count = self.frame_count(mono.len());
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut frames = Vec::with_capacity(count);
        let mut silent = Vec::with_capacity(count);
        for i in 0..count {
            let seg = &mono[i * hop..i * hop + n];
            for ((b, s), w) in buf.iter_mut().zip(seg).zip(&self.window) {
                *b = Complex::new(s * w, 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            let mut row = Vec::with_capacity(self.bands.len());
            let mut all_floor = true;
            for (first, weights) in &self.bands {
                let e: f64 = weights
                    .iter()
                    .enumerate()
                    .map(|(k, w)| w * buf[first + k].norm_sqr())
                    .sum::<f64>()
                    / n as f64;
                if e > LOG_FLOOR {
                    all_floor = false;
                }
                row.push(e.max(LOG_FLOOR).ln());
            }
            frames.push(row);
            silent.push(all_floor);
        }
        Ok(FeatureFrameSeq { frames, silent })
    }
}

/// Per-band mean followed by per-band population standard deviation.
pub fn stats_pool(f: &FeatureFrameSeq) -> Result<Vec<f64>> {
    pool_rows(f.frames.iter().map(Vec::as_slice), f.n_bands(), f.len())
}

/// Frames further than this below the loud frames of a window are treated as
/// pauses by [`pool_voiced`].
pub const VOICED_RANGE_DB: f64 = 15.0;
/// Percentile of frame energies that anchors the voiced range.
const VOICED_REFERENCE_PERCENTILE: f64 = 0.9;

fn frame_log_energy(row: &[f64]) -> f64 {
    let peak = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    peak + row.iter().map(|v| (v - peak).exp()).sum::<f64>().ln()
}

/// Which frames [`pool_voiced`] keeps: not digital silence, and within
/// [`VOICED_RANGE_DB`] of the window's 90th-percentile frame energy.
pub fn voiced_frames(f: &FeatureFrameSeq) -> Vec<bool> {
    let energy: Vec<f64> = f.frames.iter().map(|r| frame_log_energy(r)).collect();
    let mut loud: Vec<f64> = energy
        .iter()
        .zip(&f.silent)
        .filter(|(_, s)| !**s)
        .map(|(e, _)| *e)
        .collect();
    if loud.is_empty() {
        return vec![false; f.len()];
    }
    loud.sort_by(f64::total_cmp);
    let reference = loud[((loud.len() - 1) as f64 * VOICED_REFERENCE_PERCENTILE).round() as usize];
    let floor = reference - VOICED_RANGE_DB * std::f64::consts::LN_10 / 10.0;
    energy
        .iter()
        .zip(&f.silent)
        .map(|(e, s)| !*s && *e >= floor)
        .collect()
}

/// Pools only voiced frames (see [`voiced_frames`]), falling back to all
/// frames when fewer than two qualify.
pub fn pool_voiced(f: &FeatureFrameSeq) -> Result<Vec<f64>> {
    let keep = voiced_frames(f);
    let voiced = keep.iter().filter(|k| **k).count();
    if voiced >= 2 {
        pool_rows(
            f.frames
                .iter()
                .zip(&keep)
                .filter(|(_, k)| **k)
                .map(|(r, _)| r.as_slice()),
            f.n_bands(),
            voiced,
        )
    } else {
        stats_pool(f)
    }
}

fn pool_rows<'a>(
    rows: impl Iterator<Item = &'a [f64]> + Clone,
    bands: usize,
    count: usize,
) -> Result<Vec<f64>> {
    if count < 2 {
        return Err(Error::TooShort(format!(
            "statistics pooling needs at least 2 frames, got {count}"
        )));
    }
    let mut mean = vec![0.0; bands];
    for r in rows.clone() {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= count as f64);
    let mut var = vec![0.0; bands];
    for r in rows {
        for ((acc, v), m) in var.iter_mut().zip(r).zip(&mean) {
            *acc += (v - m) * (v - m);
        }
    }
    let mut out = mean;
    out.extend(var.into_iter().map(|v| (v / count as f64).sqrt()));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn extractor() -> FeatureExtractor {
        FeatureExtractor::new(FeatureConfig::default())
    }

    #[test]
    fn zero_signal_sits_at_floor() {
        let f = extractor().features(&vec![0.0; 4000], 16_000).unwrap();
        assert_eq!(f.len(), (4000 - 512) / 256 + 1);
        assert!(f.frames.iter().flatten().all(|v| *v == LOG_FLOOR.ln()));
        assert!(f.silent.iter().all(|s| *s));
    }

    #[test]
    fn doubling_amplitude_shifts_by_log_four() {
        let s: Vec<f64> = (0..4000)
            .map(|i| ((i * 7919 % 1000) as f64 / 1000.0) - 0.5)
            .collect();
        let s2: Vec<f64> = s.iter().map(|v| 2.0 * v).collect();
        let e = extractor();
        let a = e.features(&s, 16_000).unwrap();
        let b = e.features(&s2, 16_000).unwrap();
        for (ra, rb) in a.frames.iter().zip(&b.frames) {
            for (x, y) in ra.iter().zip(rb) {
                assert!((y - x - 4f64.ln()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn tone_at_band_center_dominates_that_band() {
        let cfg = FeatureConfig::default();
        let e = extractor();
        let edges = band_edges(&cfg);
        let bin_hz = 16_000.0 / 512.0;
        for band in [3usize, 8, 12, 17, 22] {
            let (lo, c, hi) = edges[band];
            // Oracle: triangular response at the tone bin, computed directly.
            let tone_bin = (c / bin_hz).round();
            let f = tone_bin * bin_hz;
            let tri = |lo: f64, c: f64, hi: f64| {
                if f <= lo || f >= hi {
                    0.0
                } else if f <= c {
                    (f - lo) / (c - lo)
                } else {
                    (hi - f) / (hi - c)
                }
            };
            let expected = (0..cfg.n_bands)
                .max_by(|&a, &b| {
                    let (la, ca, ha) = edges[a];
                    let (lb, cb, hb) = edges[b];
                    tri(la, ca, ha).total_cmp(&tri(lb, cb, hb))
                })
                .unwrap();
            assert!(tri(lo, c, hi) > 0.0);
            let s: Vec<f64> = (0..8000)
                .map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / 16_000.0).sin())
                .collect();
            let feats = e.features(&s, 16_000).unwrap();
            let pooled = stats_pool(&feats).unwrap();
            let argmax = (0..cfg.n_bands)
                .max_by(|&a, &b| pooled[a].total_cmp(&pooled[b]))
                .unwrap();
            assert_eq!(argmax, expected, "band {band}");
        }
    }

    #[test]
    fn too_short_input_is_an_error() {
        assert!(matches!(
            extractor().features(&[0.0; 100], 16_000),
            Err(Error::TooShort(_))
        ));
    }

    #[test]
    fn pooling_examples() {
        let seq = FeatureFrameSeq {
            frames: vec![vec![1.0, 5.0], vec![3.0, 5.0]],
            silent: vec![false, false],
        };
        assert_eq!(stats_pool(&seq).unwrap(), vec![2.0, 5.0, 1.0, 0.0]);
        let one = FeatureFrameSeq {
            frames: vec![vec![1.0]],
            silent: vec![false],
        };
        assert!(stats_pool(&one).is_err());
    }

    #[test]
    fn voiced_pooling_skips_digital_silence() {
        let seq = FeatureFrameSeq {
            frames: vec![vec![-23.0], vec![1.0], vec![3.0]],
            silent: vec![true, false, false],
        };
        assert_eq!(pool_voiced(&seq).unwrap(), vec![2.0, 1.0]);
    }

    #[test]
    fn voiced_pooling_skips_quiet_frames() {
        // Two bands; the quiet frame sits 20 dB (a factor of 100) below.
        let loud = vec![0.0, 0.0];
        let quiet = vec![-(100f64.ln()), -(100f64.ln())];
        let seq = FeatureFrameSeq {
            frames: vec![loud.clone(), quiet, loud.clone(), vec![0.5, 0.5]],
            silent: vec![false; 4],
        };
        assert_eq!(voiced_frames(&seq), vec![true, false, true, true]);
    }

    proptest! {
        #[test]
        fn pooling_is_order_invariant(rows in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 3), 2..12),
                                      rot in 0usize..12) {
            let n = rows.len();
            let seq = FeatureFrameSeq { frames: rows.clone(), silent: vec![false; n] };
            let mut rotated = rows.clone();
            rotated.rotate_left(rot % n);
            rotated.reverse();
            let seq2 = FeatureFrameSeq { frames: rotated, silent: vec![false; n] };
            let a = stats_pool(&seq).unwrap();
            let b = stats_pool(&seq2).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn constant_features_have_zero_spread(v in -10.0f64..10.0, n in 2usize..20) {
            let seq = FeatureFrameSeq { frames: vec![vec![v; 4]; n], silent: vec![false; n] };
            let p = stats_pool(&seq).unwrap();
            prop_assert!(p[4..].iter().all(|s| s.abs() < 1e-12));
        }
    }
}
