//! Two-layer student extractor and its distillation gradient.
//!
//! `pooled → standardize → W₁ᵀx + b₁ → tanh → W₂ᵀh + b₂ → L2 normalize`.
//! The standardization is copied from the teacher at initialization and stays
//! frozen.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::features::{pool_voiced, FeatureConfig, FeatureExtractor};
use super::teacher::PoolNormalizer;
use super::{check_min_length, l2, Embedding, SpeakerEmbedder, MIN_EXTRACT_MS};
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_HIDDEN: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentModel {
    pub format_version: u32,
    pub features: FeatureConfig,
    pub input_dim: usize,
    pub hidden: usize,
    pub dim: usize,
    pub input_mean: Vec<f64>,
    pub input_scale: Vec<f64>,
    /// Row-major `(input_dim × hidden)`.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// Row-major `(hidden × dim)`.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// Gradients with the same layout as the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(m: &StudentModel) -> Self {
        Self {
            w1: vec![0.0; m.w1.len()],
            b1: vec![0.0; m.b1.len()],
            w2: vec![0.0; m.w2.len()],
            b2: vec![0.0; m.b2.len()],
        }
    }

    pub fn add_scaled(&mut self, other: &Gradients, k: f64) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += k * y);
        }
    }

    pub fn tensors(&self) -> [&[f64]; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }
}

struct Forward {
    x: Vec<f64>,
    h: Vec<f64>,
    z: Vec<f64>,
}

impl StudentModel {
    /// Seeded initialization with fan-in scaled Gaussian weights and zero biases.
    pub fn init(
        features: FeatureConfig,
        normalizer: &PoolNormalizer,
        hidden: usize,
        dim: usize,
        seed: u64,
    ) -> Result<Self> {
        let input_dim = features.pooled_dim();
        if normalizer.mean.len() != input_dim || normalizer.scale.len() != input_dim {
            return Err(Error::Mismatch(format!(
                "normalizer has {} dims, features pool to {input_dim}",
                normalizer.mean.len()
            )));
        }
        if hidden == 0 || dim < 2 {
            return Err(Error::InvalidInput(
                "hidden width and dimension must be positive".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n1 = Normal::new(0.0, 1.0 / (input_dim as f64).sqrt()).expect("valid std");
        let n2 = Normal::new(0.0, 1.0 / (hidden as f64).sqrt()).expect("valid std");
        Ok(Self {
            format_version: MODEL_FORMAT_VERSION,
            features,
            input_dim,
            hidden,
            dim,
            input_mean: normalizer.mean.clone(),
            input_scale: normalizer.scale.clone(),
            w1: (0..input_dim * hidden)
                .map(|_| n1.sample(&mut rng))
                .collect(),
            b1: vec![0.0; hidden],
            w2: (0..hidden * dim).map(|_| n2.sample(&mut rng)).collect(),
            b2: vec![0.0; dim],
        })
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.format_version == MODEL_FORMAT_VERSION
            && self.input_dim == self.features.pooled_dim()
            && self.input_mean.len() == self.input_dim
            && self.input_scale.len() == self.input_dim
            && self.w1.len() == self.input_dim * self.hidden
            && self.b1.len() == self.hidden
            && self.w2.len() == self.hidden * self.dim
            && self.b2.len() == self.dim;
        if !ok {
            return Err(Error::InvalidInput(
                "student model dimensions are inconsistent".into(),
            ));
        }
        let finite = [
            &self.w1,
            &self.b1,
            &self.w2,
            &self.b2,
            &self.input_mean,
            &self.input_scale,
        ]
        .iter()
        .all(|t| t.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::InvalidInput(
                "student model has non-finite parameters".into(),
            ));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: StudentModel = serde_json::from_str(&text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn parameters(&self) -> [&[f64]; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn parameters_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    fn forward(&self, pooled: &[f64]) -> Forward {
        let x: Vec<f64> = pooled
            .iter()
            .zip(&self.input_mean)
            .zip(&self.input_scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect();
        let mut a = self.b1.clone();
        for (i, xi) in x.iter().enumerate() {
            let row = &self.w1[i * self.hidden..(i + 1) * self.hidden];
            a.iter_mut().zip(row).for_each(|(aj, w)| *aj += xi * w);
        }
        let h: Vec<f64> = a.iter().map(|v| v.tanh()).collect();
        let mut z = self.b2.clone();
        for (j, hj) in h.iter().enumerate() {
            let row = &self.w2[j * self.dim..(j + 1) * self.dim];
            z.iter_mut().zip(row).for_each(|(zk, w)| *zk += hj * w);
        }
        Forward { x, h, z }
    }

    pub fn embed_pooled(&self, pooled: &[f64]) -> Result<Embedding> {
        if pooled.len() != self.input_dim {
            return Err(Error::Mismatch(format!(
                "pooled input has {} dims, model expects {}",
                pooled.len(),
                self.input_dim
            )));
        }
        Embedding::normalize(self.forward(pooled).z)
    }

    /// Student extractor bound to a feature front end.
    pub fn extractor(&self) -> StudentExtractor<'_> {
        StudentExtractor {
            model: self,
            features: FeatureExtractor::new(self.features.clone()),
        }
    }
}

/// Mean squared error between two embeddings.
pub fn kd_loss(pred: &Embedding, target: &Embedding) -> Result<f64> {
    if pred.dim() != target.dim() {
        return Err(Error::Mismatch(format!(
            "embedding dims {} vs {}",
            pred.dim(),
            target.dim()
        )));
    }
    Ok(pred
        .values()
        .iter()
        .zip(target.values())
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / pred.dim() as f64)
}

/// Loss and full backpropagated gradient for one pooled input.
pub fn kd_grad(
    model: &StudentModel,
    pooled: &[f64],
    target: &Embedding,
) -> Result<(f64, Gradients)> {
    if target.dim() != model.dim {
        return Err(Error::Mismatch(format!(
            "target has {} dims, model outputs {}",
            target.dim(),
            model.dim
        )));
    }
    if pooled.len() != model.input_dim {
        return Err(Error::Mismatch(format!(
            "pooled input has {} dims, model expects {}",
            pooled.len(),
            model.input_dim
        )));
    }
    let Forward { x, h, z } = model.forward(pooled);
    let norm = l2(&z);
    if !(norm >= 1e-12) {
        return Err(Error::Degenerate(norm));
    }
    let d = model.dim as f64;
    let e: Vec<f64> = z.iter().map(|v| v / norm).collect();
    let t = target.values();
    let loss = e.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / d;

    // dL/de, then through the normalization: dz = (g − e(e·g)) / ‖z‖.
    let g: Vec<f64> = e.iter().zip(t).map(|(a, b)| 2.0 * (a - b) / d).collect();
    let eg: f64 = e.iter().zip(&g).map(|(a, b)| a * b).sum();
    let dz: Vec<f64> = g
        .iter()
        .zip(&e)
        .map(|(gi, ei)| (gi - ei * eg) / norm)
        .collect();

    let mut grads = Gradients::zeros_like(model);
    grads.b2.copy_from_slice(&dz);
    let mut dh = vec![0.0; model.hidden];
    for j in 0..model.hidden {
        let row = &model.w2[j * model.dim..(j + 1) * model.dim];
        let grow = &mut grads.w2[j * model.dim..(j + 1) * model.dim];
        for k in 0..model.dim {
            grow[k] = h[j] * dz[k];
            dh[j] += row[k] * dz[k];
        }
    }
    let da: Vec<f64> = dh
        .iter()
        .zip(&h)
        .map(|(g, hj)| g * (1.0 - hj * hj))
        .collect();
    grads.b1.copy_from_slice(&da);
    for (i, xi) in x.iter().enumerate() {
        let grow = &mut grads.w1[i * model.hidden..(i + 1) * model.hidden];
        grow.iter_mut().zip(&da).for_each(|(gw, a)| *gw = xi * a);
    }
    Ok((loss, grads))
}

pub struct StudentExtractor<'a> {
    model: &'a StudentModel,
    features: FeatureExtractor,
}

impl StudentExtractor<'_> {
    pub fn pooled(&self, mono: &[f64], sample_rate: u32) -> Result<Vec<f64>> {
        pool_voiced(&self.features.features(mono, sample_rate)?)
    }
}

impl SpeakerEmbedder for StudentExtractor<'_> {
    fn embed(&self, mono: &[f64], sample_rate: u32) -> Result<Embedding> {
        check_min_length(mono, sample_rate, MIN_EXTRACT_MS)?;
        self.model.embed_pooled(&self.pooled(mono, sample_rate)?)
    }
}
