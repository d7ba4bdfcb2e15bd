//! Frozen long-context teacher: pooled band statistics, standardized against a
//! fixed reference set of voices, then a seeded projection with orthonormal
//! columns. Never trained.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::features::{pool_voiced, FeatureConfig, FeatureExtractor};
use super::{check_min_length, Embedding, SpeakerEmbedder, MIN_EXTRACT_MS};
use crate::error::{Error, Result};
use crate::voice::{synth_voice, SpeakerSpec};

/// Voice-bank ids reserved for the teacher's reference statistics.
pub const REFERENCE_VOICE_BASE: u32 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeacherConfig {
    pub features: FeatureConfig,
    pub dim: usize,
    pub seed: u64,
    pub reference_voices: u32,
    pub reference_duration_s: f64,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        Self {
            features: FeatureConfig::default(),
            dim: 16,
            seed: 7,
            reference_voices: 24,
            reference_duration_s: 4.0,
        }
    }
}

/// Per-dimension standardization of pooled statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolNormalizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl PoolNormalizer {
    pub fn apply(&self, pooled: &[f64]) -> Vec<f64> {
        pooled
            .iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((x, m), s)| (x - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Teacher {
    cfg: TeacherConfig,
    extractor: FeatureExtractor,
    normalizer: PoolNormalizer,
    /// Row-major `(2F × D)`.
    projection: Vec<f64>,
}

fn reference_normalizer(
    cfg: &TeacherConfig,
    extractor: &FeatureExtractor,
) -> Result<PoolNormalizer> {
    let dim = cfg.features.pooled_dim();
    let sr = cfg.features.sample_rate;
    let mut rows = Vec::with_capacity(cfg.reference_voices as usize);
    for k in 0..cfg.reference_voices {
        let voice = SpeakerSpec::from_id(REFERENCE_VOICE_BASE + k);
        let mono = synth_voice(
            &voice,
            &[(0.0, cfg.reference_duration_s)],
            cfg.reference_duration_s,
            sr,
            k as u64,
        )?;
        rows.push(pool_voiced(&extractor.features(&mono, sr)?)?);
    }
    let n = rows.len().max(1) as f64;
    let mean: Vec<f64> = (0..dim)
        .map(|i| rows.iter().map(|r| r[i]).sum::<f64>() / n)
        .collect();
    let scale = (0..dim)
        .map(|i| {
            let var = rows.iter().map(|r| (r[i] - mean[i]).powi(2)).sum::<f64>() / n;
            var.sqrt().max(1e-3)
        })
        .collect();
    Ok(PoolNormalizer { mean, scale })
}

fn orthonormalize(vectors: &mut [Vec<f64>], fixed: &[Vec<f64>]) {
    for i in 0..vectors.len() {
        let (done, rest) = vectors.split_at_mut(i);
        let v = &mut rest[0];
        for u in fixed.iter().chain(done.iter()) {
            let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
        }
        let n = super::l2(v);
        v.iter_mut().for_each(|a| *a /= n);
    }
}

/// Seeded `(in_dim × out_dim)` projection whose output ignores the `null`
/// direction of the input space. Columns are orthonormal when
/// `out_dim < in_dim`; otherwise the map is an isometry on the complement of
/// `null`.
fn seeded_projection(in_dim: usize, out_dim: usize, null: &[f64], seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let null_norm = super::l2(null);
    let null_unit: Vec<f64> = null.iter().map(|v| v / null_norm).collect();
    let mut p = vec![0.0; in_dim * out_dim];
    if out_dim < in_dim {
        let mut cols: Vec<Vec<f64>> = (0..out_dim)
            .map(|_| (0..in_dim).map(|_| normal.sample(&mut rng)).collect())
            .collect();
        orthonormalize(&mut cols, std::slice::from_ref(&null_unit));
        for (j, c) in cols.iter().enumerate() {
            for (i, v) in c.iter().enumerate() {
                p[i * out_dim + j] = *v;
            }
        }
    } else {
        // Q: in_dim orthonormal vectors in R^out_dim; P = (I − n nᵀ) Qᵀ.
        let mut q: Vec<Vec<f64>> = (0..in_dim)
            .map(|_| (0..out_dim).map(|_| normal.sample(&mut rng)).collect())
            .collect();
        orthonormalize(&mut q, &[]);
        for i in 0..in_dim {
            for j in 0..out_dim {
                let proj: f64 = (0..in_dim)
                    .map(|k| null_unit[i] * null_unit[k] * q[k][j])
                    .sum();
                p[i * out_dim + j] = q[i][j] - proj;
            }
        }
    }
    p
}

impl Teacher {
    pub fn new(cfg: TeacherConfig) -> Result<Self> {
        let in_dim = cfg.features.pooled_dim();
        if cfg.dim < 2 {
            return Err(Error::InvalidInput(
                "embedding dimension must be at least 2".into(),
            ));
        }
        let extractor = FeatureExtractor::new(cfg.features.clone());
        let normalizer = reference_normalizer(&cfg, &extractor)?;
        // Uniform level offsets move every band mean by the same amount; the
        // projection is blind to that direction.
        let bands = cfg.features.n_bands;
        let level: Vec<f64> = (0..in_dim)
            .map(|i| {
                if i < bands {
                    1.0 / normalizer.scale[i]
                } else {
                    0.0
                }
            })
            .collect();
        let projection = seeded_projection(in_dim, cfg.dim, &level, cfg.seed);
        Ok(Self {
            cfg,
            extractor,
            normalizer,
            projection,
        })
    }

    pub fn config(&self) -> &TeacherConfig {
        &self.cfg
    }

    pub fn dim(&self) -> usize {
        self.cfg.dim
    }

    pub fn normalizer(&self) -> &PoolNormalizer {
        &self.normalizer
    }

    pub fn feature_extractor(&self) -> &FeatureExtractor {
        &self.extractor
    }

    /// Voiced-frame statistics of `mono`, the input of both extractors.
    pub fn pooled(&self, mono: &[f64], sample_rate: u32) -> Result<Vec<f64>> {
        pool_voiced(&self.extractor.features(mono, sample_rate)?)
    }

    pub fn embed_pooled(&self, pooled: &[f64]) -> Result<Embedding> {
        let x = self.normalizer.apply(pooled);
        let d = self.cfg.dim;
        let mut out = vec![0.0; d];
        for (i, xi) in x.iter().enumerate() {
            for (j, o) in out.iter_mut().enumerate() {
                *o += xi * self.projection[i * d + j];
            }
        }
        Embedding::normalize(out)
    }
}

impl SpeakerEmbedder for Teacher {
    fn embed(&self, mono: &[f64], sample_rate: u32) -> Result<Embedding> {
        check_min_length(mono, sample_rate, MIN_EXTRACT_MS)?;
        self.embed_pooled(&self.pooled(mono, sample_rate)?)
    }
}
