//! Enrollment-identification accuracy: how often an extractor picks the right
//! speaker from a scene's enrollment pool, given short beamformed crops or
//! full clean signals.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LoadedScene;
use crate::beamform::{beamform, SteeringTrajectory, DEFAULT_PATTERN};
use crate::embed::{sample_crop_aligned, CropSpec, SpeakerEmbedder};
use crate::error::{Error, Result};
use crate::parallel::{collect_results, map_indexed};
use crate::reassign::{build_enrollments, EnrollmentPool};
use crate::scene::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdentificationConfig {
    pub crop_ms: f64,
    pub crops_per_speaker: usize,
    pub min_active_fraction: f64,
    pub enroll_min_ms: f64,
    pub pattern: f64,
    pub seed: u64,
}

impl Default for IdentificationConfig {
    fn default() -> Self {
        Self {
            crop_ms: 250.0,
            crops_per_speaker: 20,
            min_active_fraction: 0.5,
            enroll_min_ms: 2000.0,
            pattern: DEFAULT_PATTERN,
            seed: 0,
        }
    }
}

/// Correct decisions out of attempts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub correct: usize,
    pub total: usize,
}

impl Tally {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }

    fn add(mut self, other: Tally) -> Tally {
        self.correct += other.correct;
        self.total += other.total;
        self
    }
}

fn tally_scenes<F>(scenes: &[LoadedScene], workers: usize, per_scene: F) -> Result<Tally>
where
    F: Fn(usize, &LoadedScene) -> Result<Tally> + Sync + Send,
{
    let parts = collect_results(map_indexed(scenes, workers, per_scene))?;
    Ok(parts.into_iter().fold(Tally::default(), Tally::add))
}

fn pool_for<E: SpeakerEmbedder + ?Sized>(
    s: &LoadedScene,
    extractor: &E,
    cfg: &IdentificationConfig,
) -> Result<EnrollmentPool> {
    let r = &s.scene;
    build_enrollments(
        &r.mixture,
        &r.truth,
        extractor,
        cfg.enroll_min_ms,
        cfg.pattern,
    )
}

/// Identification from fixed-length crops of the mixture beamformed along each
/// speaker's true trajectory. Crop positions depend only on the scenes and
/// the seed, so different extractors see the same crops.
pub fn crop_identification<E: SpeakerEmbedder + Sync + ?Sized>(
    scenes: &[LoadedScene],
    extractor: &E,
    cfg: &IdentificationConfig,
    workers: usize,
) -> Result<Tally> {
    let spec = CropSpec {
        durations_ms: vec![cfg.crop_ms],
        min_active_fraction: cfg.min_active_fraction,
    };
    tally_scenes(scenes, workers, |i, s| {
        let pool = pool_for(s, extractor, cfg)?;
        let truth = &s.scene.truth;
        let sr = s.scene.mixture.sample_rate();
        let mut tally = Tally::default();
        for (k, track) in truth.tracks.iter().enumerate() {
            let traj = SteeringTrajectory::new(
                track.directions.clone(),
                track.active.clone(),
                truth.grid,
            )?;
            let mono = beamform(&s.scene.mixture, &traj, cfg.pattern)?;
            let want = truth.label_of(k);
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(derive_seed(cfg.seed, i as u64), k as u64));
            for _ in 0..cfg.crops_per_speaker {
                let (start_ms, dur_ms) =
                    sample_crop_aligned(mono.len(), &track.active, truth.grid, &spec, 1, &mut rng)?;
                let a = truth.grid.ms_to_samples(start_ms);
                let b = a + truth.grid.ms_to_samples(dur_ms);
                let d = pool.decide(&extractor.embed(&mono[a..b], sr)?)?;
                tally.correct += usize::from(d.label == want);
                tally.total += 1;
            }
        }
        Ok(tally)
    })
}

/// Identification from each speaker's complete clean signal (W channel of the
/// wet render). Enrollments come from the same clean signals, cut to each
/// speaker's longest solo span, so nothing in this condition is degraded.
pub fn clean_identification<E: SpeakerEmbedder + Sync + ?Sized>(
    scenes: &[LoadedScene],
    extractor: &E,
    cfg: &IdentificationConfig,
    workers: usize,
) -> Result<Tally> {
    tally_scenes(scenes, workers, |_, s| {
        let truth = &s.scene.truth;
        let sr = s.scene.mixture.sample_rate();
        let n = truth.grid.frame_samples();
        let mut pool = EnrollmentPool::default();
        for (k, wet) in s.scene.wet.iter().enumerate() {
            let (a, b) = truth
                .longest_solo_span(k)
                .filter(|(a, b)| truth.grid.frames_to_ms(b - a) >= cfg.enroll_min_ms)
                .ok_or_else(|| {
                    Error::Infeasible(format!("{}: speaker {k} has no enrollment span", s.id))
                })?;
            pool.push(
                truth.label_of(k),
                extractor.embed(&wet.w()[a * n..(b * n).min(wet.len())], sr)?,
            )?;
        }
        pool.sort_by_label();
        let mut tally = Tally::default();
        for (k, wet) in s.scene.wet.iter().enumerate() {
            let d = pool.decide(&extractor.embed(wet.w(), sr)?)?;
            tally.correct += usize::from(d.label == truth.label_of(k));
            tally.total += 1;
        }
        Ok(tally)
    })
}
