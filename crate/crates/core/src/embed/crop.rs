//! Random training crops with an activity constraint.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::foa::FrameGrid;

pub const CROP_DURATIONS_MS: [f64; 7] = [250.0, 500.0, 750.0, 1000.0, 1500.0, 2000.0, 8000.0];
pub const MAX_CROP_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CropSpec {
    pub durations_ms: Vec<f64>,
    pub min_active_fraction: f64,
}

impl Default for CropSpec {
    fn default() -> Self {
        Self {
            durations_ms: CROP_DURATIONS_MS.to_vec(),
            min_active_fraction: 0.5,
        }
    }
}

/// Fraction of samples in `[start, end)` that fall on active frames.
pub fn active_fraction(activity: &[bool], grid: FrameGrid, start: usize, end: usize) -> f64 {
    if end <= start {
        return 0.0;
    }
    let n = grid.frame_samples();
    let mut active = 0usize;
    let mut f = start / n;
    while f * n < end && f < activity.len() {
        if activity[f] {
            let a = (f * n).max(start);
            let b = ((f + 1) * n).min(end);
            active += b - a;
        }
        f += 1;
    }
    active as f64 / (end - start) as f64
}

/// Rejection-samples a crop `(start_ms, dur_ms)` of a signal with
/// `len_samples` samples and frame-wise `activity`.
pub fn sample_crop<R: Rng>(
    len_samples: usize,
    activity: &[bool],
    grid: FrameGrid,
    spec: &CropSpec,
    rng: &mut R,
) -> Result<(f64, f64)> {
    sample_crop_aligned(len_samples, activity, grid, spec, 1, rng)
}

/// As [`sample_crop`], with the start restricted to multiples of `align`
/// samples.
pub fn sample_crop_aligned<R: Rng>(
    len_samples: usize,
    activity: &[bool],
    grid: FrameGrid,
    spec: &CropSpec,
    align: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    let align = align.max(1);
    let sr = grid.sample_rate as f64;
    let feasible: Vec<f64> = spec
        .durations_ms
        .iter()
        .copied()
        .filter(|d| grid.ms_to_samples(*d) <= len_samples)
        .collect();
    if feasible.is_empty() {
        return Err(Error::TooShort(format!(
            "{len_samples} samples cannot hold the shortest crop"
        )));
    }
    for _ in 0..MAX_CROP_ATTEMPTS {
        let dur_ms = feasible[rng.random_range(0..feasible.len())];
        let dur = grid.ms_to_samples(dur_ms);
        let start = rng.random_range(0..=(len_samples - dur) / align) * align;
        if active_fraction(activity, grid, start, start + dur) >= spec.min_active_fraction {
            return Ok((start as f64 * 1000.0 / sr, dur_ms));
        }
    }
    Err(Error::Infeasible(format!(
        "no crop with active fraction >= {} after {MAX_CROP_ATTEMPTS} attempts",
        spec.min_active_fraction
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid() -> FrameGrid {
        FrameGrid::default()
    }

    #[test]
    fn fully_active_accepts_first_draw() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut twin = rng.clone();
        let len = 16_000 * 10;
        let act = vec![true; grid().frame_count(len)];
        let (start, dur) = sample_crop(len, &act, grid(), &CropSpec::default(), &mut rng).unwrap();
        // The accepted crop is exactly the first proposal.
        let dur0 = CROP_DURATIONS_MS[twin.random_range(0..CROP_DURATIONS_MS.len())];
        let start0 = twin.random_range(0..=len - grid().ms_to_samples(dur0));
        assert_eq!(dur, dur0);
        assert_eq!(start, start0 as f64 / 16.0);
    }

    #[test]
    fn silent_signal_gives_up() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let len = 16_000 * 10;
        let act = vec![false; grid().frame_count(len)];
        let err = sample_crop(len, &act, grid(), &CropSpec::default(), &mut rng).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)));
    }

    #[test]
    fn half_active_crops_respect_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let len = 16_000 * 10;
        let frames = grid().frame_count(len);
        let act: Vec<bool> = (0..frames).map(|f| (f / 20) % 2 == 0).collect();
        for _ in 0..200 {
            let (s, d) = sample_crop(len, &act, grid(), &CropSpec::default(), &mut rng).unwrap();
            let a = grid().ms_to_samples(s);
            let b = a + grid().ms_to_samples(d);
            assert!(active_fraction(&act, grid(), a, b) >= 0.5);
        }
    }

    #[test]
    fn aligned_starts() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let len = 16_000 * 10;
        let act = vec![true; grid().frame_count(len)];
        for _ in 0..100 {
            let (s, d) =
                sample_crop_aligned(len, &act, grid(), &CropSpec::default(), 256, &mut rng)
                    .unwrap();
            let a = grid().ms_to_samples(s);
            assert_eq!(a % 256, 0);
            assert!(a + grid().ms_to_samples(d) <= len);
        }
    }

    #[test]
    fn too_short_signal() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!(sample_crop(1000, &[true], grid(), &CropSpec::default(), &mut rng).is_err());
    }
}
