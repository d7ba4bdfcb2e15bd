//! Speaker embeddings: the extractor interface, a frozen long-context teacher,
//! a small trainable student, and the distillation loop that trains it.

pub mod crop;
pub mod features;
pub mod student;
pub mod teacher;
pub mod train;
pub mod vad;

use serde::{Deserialize, Serialize};

use crate::beamform::beamform_frames;
use crate::error::{Error, Result};
use crate::foa::{Direction, FoaSignal, FrameGrid};

pub use crop::{sample_crop, sample_crop_aligned, CropSpec};
pub use features::{stats_pool, FeatureConfig, FeatureExtractor, FeatureFrameSeq};
pub use student::{kd_grad, kd_loss, Gradients, StudentModel};
pub use teacher::{Teacher, TeacherConfig};
pub use train::{train_student, TrainConfig, TrainItemSource, TrainReport};
pub use vad::vad_mask;

/// Minimum audio an extractor accepts.
pub const MIN_EXTRACT_MS: f64 = 250.0;
const DEGENERATE_NORM: f64 = 1e-12;

/// Unit-norm speaker embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Embedding(Vec<f64>);

impl Embedding {
    /// L2-normalizes `raw`; fails for (near-)zero vectors.
    pub fn normalize(raw: Vec<f64>) -> Result<Self> {
        let norm = l2(&raw);
        if !(norm >= DEGENERATE_NORM) {
            return Err(Error::Degenerate(norm));
        }
        Ok(Self(raw.into_iter().map(|v| v / norm).collect()))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn dot(&self, other: &Embedding) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    /// Cosine similarity; equal to the dot product for unit vectors.
    pub fn cosine(&self, other: &Embedding) -> f64 {
        self.dot(other)
    }
}

impl TryFrom<Vec<f64>> for Embedding {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Embedding::normalize(v)
    }
}

impl From<Embedding> for Vec<f64> {
    fn from(e: Embedding) -> Self {
        e.0
    }
}

pub(crate) fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Audio to embed, described spatially: a window of the mixture together with
/// the directions to steer along.
#[derive(Debug, Clone, Copy)]
pub struct SteeredRequest<'a> {
    pub mixture: &'a FoaSignal,
    pub grid: FrameGrid,
    /// Absolute frame index of the first sample of `mixture` (nonzero when
    /// `mixture` is one block of a longer stream).
    pub origin_frame: usize,
    /// First frame of the window, relative to `mixture`.
    pub start_frame: usize,
    /// One per frame of the window.
    pub directions: &'a [Direction],
    pub active: &'a [bool],
    /// Sample range inside the window to keep, `None` for all of it.
    pub crop: Option<(usize, usize)>,
    pub pattern: f64,
}

impl SteeredRequest<'_> {
    pub fn frames(&self) -> std::ops::Range<usize> {
        self.start_frame..self.start_frame + self.directions.len()
    }

    /// Window-relative frame range covered by the kept samples.
    pub fn kept_frames(&self) -> std::ops::Range<usize> {
        let n = self.grid.frame_samples();
        match self.crop {
            None => 0..self.directions.len(),
            Some((a, b)) => a / n..b.div_ceil(n).min(self.directions.len()),
        }
    }

    /// Absolute frame index of window frame `i`.
    pub fn absolute_frame(&self, i: usize) -> usize {
        self.origin_frame + self.start_frame + i
    }

    /// Beamformed mono for the kept sample range.
    pub fn beamformed(&self) -> Result<Vec<f64>> {
        let mono = beamform_frames(
            self.mixture,
            self.grid,
            self.start_frame,
            self.directions,
            self.active,
            self.pattern,
        )?;
        Ok(match self.crop {
            None => mono,
            Some((a, b)) => {
                if a > b || b > mono.len() {
                    return Err(Error::InvalidInput(format!(
                        "crop [{a}, {b}) outside window of {} samples",
                        mono.len()
                    )));
                }
                mono[a..b].to_vec()
            }
        })
    }
}

/// Anything that maps audio to a speaker embedding.
pub trait SpeakerEmbedder: Sync {
    fn embed(&self, mono: &[f64], sample_rate: u32) -> Result<Embedding>;

    fn min_duration_ms(&self) -> f64 {
        MIN_EXTRACT_MS
    }

    /// Embeds a spatially described window. Audio extractors beamform and
    /// delegate to [`SpeakerEmbedder::embed`].
    fn embed_steered(&self, req: &SteeredRequest<'_>) -> Result<Embedding> {
        let mono = req.beamformed()?;
        self.embed(&mono, req.mixture.sample_rate())
    }
}

impl<T: SpeakerEmbedder + ?Sized> SpeakerEmbedder for &T {
    fn embed(&self, mono: &[f64], sample_rate: u32) -> Result<Embedding> {
        (**self).embed(mono, sample_rate)
    }

    fn min_duration_ms(&self) -> f64 {
        (**self).min_duration_ms()
    }

    fn embed_steered(&self, req: &SteeredRequest<'_>) -> Result<Embedding> {
        (**self).embed_steered(req)
    }
}

pub(crate) fn check_min_length(mono: &[f64], sample_rate: u32, min_ms: f64) -> Result<()> {
    let need = (min_ms * sample_rate as f64 / 1000.0).round() as usize;
    if mono.len() < need {
        return Err(Error::TooShort(format!(
            "{} samples, extractor needs {min_ms} ms ({need} samples)",
            mono.len()
        )));
    }
    Ok(())
}
