//! An extractor with perfect information, for checking the pipeline around it.

use super::pool::EnrollmentPool;
use crate::embed::{Embedding, SpeakerEmbedder, SteeredRequest};
use crate::error::{Error, Result};
use crate::scene::GroundTruth;

/// Default tolerance between a steering direction and a true source.
pub const ORACLE_ANGLE_DEG: f64 = 20.0;

/// Identifies the speaker a request is steered at by looking up the ground
/// truth, and returns that speaker's reference vector. Each label gets its own
/// basis vector, so its enrollment matches exactly.
#[derive(Debug, Clone)]
pub struct OracleExtractor {
    truth: GroundTruth,
    labels: Vec<String>,
    angle_deg: f64,
}

impl OracleExtractor {
    /// `extra_labels` are identities that exist in the pool but not in the scene.
    pub fn new(truth: GroundTruth, extra_labels: &[String]) -> Self {
        let mut labels: Vec<String> = (0..truth.tracks.len()).map(|s| truth.label_of(s)).collect();
        labels.extend(extra_labels.iter().cloned());
        labels.sort();
        labels.dedup();
        Self {
            truth,
            labels,
            angle_deg: ORACLE_ANGLE_DEG,
        }
    }

    fn basis(&self, index: Option<usize>) -> Embedding {
        let dim = self.labels.len().max(2);
        let v = match index {
            Some(i) => (0..dim).map(|k| if k == i { 1.0 } else { 0.0 }).collect(),
            None => vec![1.0; dim],
        };
        Embedding::normalize(v).expect("nonzero basis vector")
    }

    /// The reference vector of every known identity, sorted by label.
    pub fn pool(&self) -> EnrollmentPool {
        let mut pool = EnrollmentPool::default();
        for (i, l) in self.labels.iter().enumerate() {
            pool.push(l.clone(), self.basis(Some(i)))
                .expect("unique labels");
        }
        pool
    }

    /// Ground-truth speaker most often within the angle tolerance of the
    /// steering direction over the kept frames.
    pub fn identify(&self, req: &SteeredRequest<'_>) -> Option<usize> {
        let limit = self.angle_deg.to_radians();
        let mut votes = vec![0usize; self.truth.tracks.len()];
        for i in req.kept_frames() {
            let f = req.absolute_frame(i);
            if f >= self.truth.frames() {
                continue;
            }
            for (s, t) in self.truth.tracks.iter().enumerate() {
                if t.active[f] && t.directions[f].angle_to(&req.directions[i]) < limit {
                    votes[s] += 1;
                }
            }
        }
        let best = (0..votes.len()).max_by_key(|&s| (votes[s], std::cmp::Reverse(s)))?;
        (votes[best] > 0).then_some(best)
    }
}

impl SpeakerEmbedder for OracleExtractor {
    fn embed(&self, _mono: &[f64], _sample_rate: u32) -> Result<Embedding> {
        Err(Error::InvalidInput(
            "the oracle extractor only embeds spatially described requests".into(),
        ))
    }

    /// With no speaker in view, returns an equal-similarity vector (the pool's
    /// tie rule then picks the first entry).
    fn embed_steered(&self, req: &SteeredRequest<'_>) -> Result<Embedding> {
        let index = self.identify(req).map(|s| {
            let label = self.truth.label_of(s);
            self.labels
                .iter()
                .position(|l| *l == label)
                .expect("speaker label known")
        });
        Ok(self.basis(index))
    }
}
