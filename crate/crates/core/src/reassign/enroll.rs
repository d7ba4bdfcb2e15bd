//! Enrollment embeddings from oracle speech spans.

use super::pool::EnrollmentPool;
use crate::beamform::{beamform, SteeringTrajectory};
use crate::embed::{Embedding, SpeakerEmbedder, SteeredRequest};
use crate::error::{Error, Result};
use crate::foa::{Direction, FoaSignal};
use crate::scene::{render_solo, GroundTruth};
use crate::voice::SpeakerSpec;

/// One embedding per ground-truth speaker, taken from its longest solo span
/// of the mixture beamformed along the true trajectory. Entries are sorted by
/// label.
pub fn build_enrollments<E: SpeakerEmbedder + ?Sized>(
    mixture: &FoaSignal,
    truth: &GroundTruth,
    extractor: &E,
    min_dur_ms: f64,
    pattern: f64,
) -> Result<EnrollmentPool> {
    let mut pool = EnrollmentPool::default();
    for (s, track) in truth.tracks.iter().enumerate() {
        let label = truth.label_of(s);
        let (a, b) = truth
            .longest_solo_span(s)
            .filter(|(a, b)| truth.grid.frames_to_ms(b - a) >= min_dur_ms)
            .ok_or_else(|| {
                Error::Infeasible(format!(
                    "speaker {label} has no solo span of {min_dur_ms} ms for enrollment"
                ))
            })?;
        let req = SteeredRequest {
            mixture,
            grid: truth.grid,
            origin_frame: 0,
            start_frame: a,
            directions: &track.directions[a..b],
            active: &track.active[a..b],
            crop: None,
            pattern,
        };
        pool.push(label, extractor.embed_steered(&req)?)?;
    }
    pool.sort_by_label();
    Ok(pool)
}

/// Enrollment of a speaker absent from the scene, recorded alone.
pub fn enroll_solo<E: SpeakerEmbedder + ?Sized>(
    voice: &SpeakerSpec,
    direction: Direction,
    duration_s: f64,
    snr_db: Option<f64>,
    seed: u64,
    extractor: &E,
    pattern: f64,
) -> Result<Embedding> {
    let scene = render_solo(voice, direction, duration_s, snr_db, seed)?;
    let traj = SteeringTrajectory::fixed(direction, scene.truth.frames(), scene.truth.grid);
    let mono = beamform(&scene.mixture, &traj, pattern)?;
    extractor.embed(&mono, scene.mixture.sample_rate())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::foa::FrameGrid;
    use crate::track::Track;

    fn truth(a: Vec<bool>, b: Vec<bool>) -> GroundTruth {
        let n = a.len();
        GroundTruth {
            grid: FrameGrid::default(),
            tracks: vec![
                Track::new(0, vec![Direction::default(); n], a).unwrap(),
                Track::new(1, vec![Direction::default(); n], b).unwrap(),
            ],
            speaker_ids: vec![1, 2],
        }
    }

    #[test]
    fn solo_span_excludes_overlap() {
        let a: Vec<bool> = (0..20).map(|f| f < 12).collect();
        let b: Vec<bool> = (0..20).map(|f| (4..6).contains(&f) || f >= 15).collect();
        let gt = truth(a, b);
        assert_eq!(gt.longest_solo_span(0), Some((6, 12)));
        assert_eq!(gt.longest_solo_span(1), Some((15, 20)));
    }

    #[test]
    fn missing_span_is_an_error() {
        struct Unit;
        impl SpeakerEmbedder for Unit {
            fn embed(&self, _: &[f64], _: u32) -> Result<Embedding> {
                Embedding::normalize(vec![1.0, 0.0])
            }
        }
        let gt = truth(vec![true; 20], vec![false; 20]);
        let mix = FoaSignal::silence(20 * 512, 16_000);
        assert!(build_enrollments(&mix, &gt, &Unit, 2000.0, 0.5).is_err());
    }
}
