//! Tracker simulation: replays ground truth on two output branches and injects
//! the failure modes of a blockwise permutation-invariant tracker.
//!
//! * branch permutations, decided independently per permutation block with
//!   probability `1 − exp(−λ·L)` where L is the block length in frames;
//! * tangent-plane Gaussian jitter on active directions;
//! * per-frame missed detections.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::foa::Direction;
use crate::scene::{derive_seed, GroundTruth};
use crate::track::Track;

pub const BRANCHES: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErrorModel {
    /// Granularity, in frames, at which branch permutations may happen.
    pub perm_block_frames: usize,
    /// Rate of the block-length dependent swap probability.
    pub perm_lambda: f64,
    /// Replaces `1 − exp(−λ·L)` when set.
    pub perm_prob: Option<f64>,
    pub angle_noise_deg: f64,
    pub miss_prob: f64,
    pub seed: u64,
}

impl Default for ErrorModel {
    fn default() -> Self {
        Self {
            perm_block_frames: 25,
            perm_lambda: 0.004,
            perm_prob: None,
            angle_noise_deg: 5.0,
            miss_prob: 0.02,
            seed: 0,
        }
    }
}

impl ErrorModel {
    /// A tracker that reproduces ground truth exactly.
    pub fn perfect() -> Self {
        Self {
            perm_prob: Some(0.0),
            angle_noise_deg: 0.0,
            miss_prob: 0.0,
            ..Self::default()
        }
    }

    /// Swap probability per permutation block.
    pub fn swap_probability(&self) -> f64 {
        self.perm_prob
            .unwrap_or_else(|| 1.0 - (-self.perm_lambda * self.perm_block_frames as f64).exp())
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.swap_probability();
        if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&self.miss_prob) {
            return Err(Error::InvalidInput(format!(
                "probabilities must lie in [0, 1] (swap {p}, miss {})",
                self.miss_prob
            )));
        }
        if self.perm_block_frames == 0 {
            return Err(Error::InvalidInput(
                "perm_block_frames must be positive".into(),
            ));
        }
        if !(self.angle_noise_deg >= 0.0) || !(self.perm_lambda >= 0.0) {
            return Err(Error::InvalidInput(
                "noise and λ must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Simulated tracker output plus the injection log.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedTracks {
    pub tracks: Vec<Track>,
    /// Permutation blocks at whose start the branch assignment flipped.
    pub swap_blocks: Vec<usize>,
    /// Per frame, the branch carrying each ground-truth speaker.
    pub branch_of_speaker: Vec<Vec<usize>>,
}

fn jitter<R: Rng>(d: &Direction, sigma_rad: f64, normal: &Normal<f64>, rng: &mut R) -> Direction {
    if sigma_rad == 0.0 {
        return *d;
    }
    let v = d.unit_vector();
    // Orthonormal tangent basis at v.
    let helper = if v[2].abs() < 0.9 {
        [0.0, 0.0, 1.0]
    } else {
        [1.0, 0.0, 0.0]
    };
    let mut e1 = [
        helper[1] * v[2] - helper[2] * v[1],
        helper[2] * v[0] - helper[0] * v[2],
        helper[0] * v[1] - helper[1] * v[0],
    ];
    let n1 = (e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]).sqrt();
    e1.iter_mut().for_each(|c| *c /= n1);
    let e2 = [
        v[1] * e1[2] - v[2] * e1[1],
        v[2] * e1[0] - v[0] * e1[2],
        v[0] * e1[1] - v[1] * e1[0],
    ];
    let a = sigma_rad * normal.sample(rng);
    let b = sigma_rad * normal.sample(rng);
    Direction::from_vector(std::array::from_fn(|i| v[i] + a * e1[i] + b * e2[i]))
}

pub fn simulate_tracker(gt: &GroundTruth, em: &ErrorModel) -> Result<SimulatedTracks> {
    em.validate()?;
    if gt.tracks.len() > BRANCHES {
        return Err(Error::InvalidInput(format!(
            "{} speakers but only {BRANCHES} tracker branches",
            gt.tracks.len()
        )));
    }
    let frames = gt.frames();
    let p = em.swap_probability();
    let mut swap_rng = ChaCha8Rng::seed_from_u64(derive_seed(em.seed, 1));
    let mut jitter_rng = ChaCha8Rng::seed_from_u64(derive_seed(em.seed, 2));
    let mut miss_rng = ChaCha8Rng::seed_from_u64(derive_seed(em.seed, 3));
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let sigma = em.angle_noise_deg.to_radians();

    let mut tracks: Vec<Track> = (0..BRANCHES).map(|b| Track::inactive(b, frames)).collect();
    let mut held: Vec<Option<Direction>> = vec![None; BRANCHES];
    let mut swapped = false;
    let mut swap_blocks = Vec::new();
    let mut branch_of_speaker = Vec::with_capacity(frames);

    for f in 0..frames {
        if f % em.perm_block_frames == 0 {
            let block = f / em.perm_block_frames;
            if swap_rng.random::<f64>() < p {
                swapped = !swapped;
                swap_blocks.push(block);
            }
        }
        let mut owners = Vec::with_capacity(gt.tracks.len());
        let mut written = [false; BRANCHES];
        for (s, t) in gt.tracks.iter().enumerate() {
            let branch = if swapped { (s + 1) % BRANCHES } else { s };
            owners.push(branch);
            let out = &mut tracks[branch];
            if t.active[f] {
                let d = jitter(&t.directions[f], sigma, &normal, &mut jitter_rng);
                let missed = em.miss_prob > 0.0 && miss_rng.random::<f64>() < em.miss_prob;
                out.directions[f] = d;
                out.active[f] = !missed;
                held[branch] = Some(d);
                written[branch] = true;
            }
        }
        for (b, w) in written.iter().enumerate() {
            if !w {
                let fallback = gt
                    .tracks
                    .get(b)
                    .map(|t| t.directions[f])
                    .unwrap_or_default();
                tracks[b].directions[f] = held[b].unwrap_or(fallback);
            }
        }
        branch_of_speaker.push(owners);
    }
    Ok(SimulatedTracks {
        tracks,
        swap_blocks,
        branch_of_speaker,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{ground_truth, SceneSampler};

    fn truth(seed: u64) -> GroundTruth {
        ground_truth(&SceneSampler::default().sample(seed).unwrap())
    }

    #[test]
    fn perfect_tracker_reproduces_truth() {
        let gt = truth(1);
        let sim = simulate_tracker(&gt, &ErrorModel::perfect()).unwrap();
        assert!(sim.swap_blocks.is_empty());
        for (a, b) in gt.tracks.iter().zip(&sim.tracks) {
            assert_eq!(a.active, b.active);
            for f in 0..a.len() {
                if a.active[f] {
                    assert_eq!(a.directions[f], b.directions[f]);
                }
            }
        }
    }

    #[test]
    fn certain_swap_in_single_block_exchanges_branches() {
        let gt = truth(2);
        let em = ErrorModel {
            perm_prob: Some(1.0),
            perm_block_frames: gt.frames(),
            angle_noise_deg: 0.0,
            miss_prob: 0.0,
            ..Default::default()
        };
        let sim = simulate_tracker(&gt, &em).unwrap();
        assert_eq!(sim.swap_blocks, vec![0]);
        assert_eq!(sim.tracks[1].active, gt.tracks[0].active);
        assert_eq!(sim.tracks[0].active, gt.tracks[1].active);
    }

    #[test]
    fn swap_probability_formula() {
        let em = ErrorModel {
            perm_block_frames: 100,
            perm_lambda: 0.004,
            ..Default::default()
        };
        assert!((em.swap_probability() - (1.0 - (-0.4f64).exp())).abs() < 1e-15);
        assert!((em.swap_probability() - 0.330).abs() < 1e-3);
    }

    #[test]
    fn measured_swap_rate_matches_probability() {
        let gt = truth(3);
        let em = ErrorModel {
            perm_block_frames: 100,
            ..Default::default()
        };
        let blocks = gt.frames().div_ceil(100);
        let mut swaps = 0usize;
        for seed in 0..1000 {
            let sim = simulate_tracker(&gt, &ErrorModel { seed, ..em.clone() }).unwrap();
            swaps += sim.swap_blocks.len();
        }
        let rate = swaps as f64 / (1000 * blocks) as f64;
        assert!((rate - em.swap_probability()).abs() < 0.03, "rate {rate}");
    }

    #[test]
    fn jitter_never_changes_activity() {
        let gt = truth(4);
        let em = ErrorModel {
            perm_prob: Some(0.0),
            angle_noise_deg: 20.0,
            miss_prob: 0.0,
            ..Default::default()
        };
        let sim = simulate_tracker(&gt, &em).unwrap();
        for (a, b) in gt.tracks.iter().zip(&sim.tracks) {
            assert_eq!(a.active, b.active);
        }
    }

    #[test]
    fn jitter_spread_matches_sigma() {
        let d = Direction::from_degrees(30.0, 70.0);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let sigma = 5f64.to_radians();
        let n = 20_000;
        let ms: f64 = (0..n)
            .map(|_| jitter(&d, sigma, &normal, &mut rng).angle_to(&d).powi(2))
            .sum::<f64>()
            / n as f64;
        // Two tangent axes each with variance σ².
        assert!((ms / (2.0 * sigma * sigma) - 1.0).abs() < 0.05);
    }

    #[test]
    fn deterministic_and_rejects_three_speakers() {
        let gt = truth(5);
        let em = ErrorModel {
            seed: 9,
            ..Default::default()
        };
        assert_eq!(
            simulate_tracker(&gt, &em).unwrap(),
            simulate_tracker(&gt, &em).unwrap()
        );
        let mut three = gt.clone();
        three.tracks.push(gt.tracks[0].clone());
        three.speaker_ids.push(99);
        assert!(simulate_tracker(&three, &em).is_err());
    }

    #[test]
    fn invalid_probabilities_rejected() {
        let em = ErrorModel {
            miss_prob: 1.5,
            ..Default::default()
        };
        assert!(em.validate().is_err());
    }
}
