//! Knowledge-distillation training of the student.
//!
//! Each training item picks a scene and a target speaker, takes the teacher's
//! embedding of that speaker's clean signal (W channel, whole scene) as the
//! target, beamforms the mixture along the speaker's ground-truth trajectory,
//! draws a random crop with enough target activity, and regresses the
//! student's embedding of the crop onto the target with an MSE loss and Adam.
//!
//! Crops start on the feature hop grid, so the features of a crop are exactly
//! a sub-range of the features of the whole beamformed signal; scenes are
//! featurized once up front.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::crop::{sample_crop_aligned, CropSpec};
use super::features::{pool_voiced, FeatureFrameSeq};
use super::student::{kd_grad, Gradients, StudentModel, DEFAULT_HIDDEN};
use super::teacher::Teacher;
use super::{Embedding, SpeakerEmbedder};
use crate::beamform::{beamform, SteeringTrajectory, DEFAULT_PATTERN};
use crate::error::{Error, Result};
use crate::foa::FrameGrid;
use crate::parallel::{collect_results, map_range};
use crate::scene::{derive_seed, render_scene, RenderedScene, SceneSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
    pub items_per_scene: usize,
    pub hidden: usize,
    pub pattern: f64,
    pub crop: CropSpec,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            lr: 1e-3,
            batch: 16,
            seed: 0,
            items_per_scene: 32,
            hidden: DEFAULT_HIDDEN,
            pattern: DEFAULT_PATTERN,
            crop: CropSpec::default(),
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Indexable collection of training scenes.
pub trait TrainItemSource: Sync {
    fn scene_count(&self) -> usize;
    fn scene(&self, index: usize) -> Result<RenderedScene>;
}

impl TrainItemSource for [RenderedScene] {
    fn scene_count(&self) -> usize {
        self.len()
    }

    fn scene(&self, index: usize) -> Result<RenderedScene> {
        Ok(self[index].clone())
    }
}

impl TrainItemSource for [SceneSpec] {
    fn scene_count(&self) -> usize {
        self.len()
    }

    fn scene(&self, index: usize) -> Result<RenderedScene> {
        render_scene(&self[index])
    }
}

/// What training needs from one speaker of one scene.
#[derive(Debug, Clone)]
pub struct PreparedSpeaker {
    pub features: FeatureFrameSeq,
    pub activity: Vec<bool>,
    pub target: Embedding,
    pub len_samples: usize,
}

/// Featurizes the beamformed mixture for every active speaker of a scene.
pub fn prepare_scene(
    scene: &RenderedScene,
    teacher: &Teacher,
    pattern: f64,
) -> Result<Vec<PreparedSpeaker>> {
    let sr = scene.mixture.sample_rate();
    let mut out = Vec::new();
    for (track, wet) in scene.truth.tracks.iter().zip(&scene.wet) {
        if track.active_frames() == 0 {
            continue;
        }
        let traj = SteeringTrajectory::new(
            track.directions.clone(),
            track.active.clone(),
            scene.truth.grid,
        )?;
        let mono = beamform(&scene.mixture, &traj, pattern)?;
        out.push(PreparedSpeaker {
            features: teacher.feature_extractor().features(&mono, sr)?,
            activity: track.active.clone(),
            target: teacher.embed(wet.w(), sr)?,
            len_samples: mono.len(),
        });
    }
    Ok(out)
}

/// A crop's pooled statistics taken from precomputed features.
pub fn pooled_crop(
    speaker: &PreparedSpeaker,
    teacher: &Teacher,
    start_ms: f64,
    dur_ms: f64,
) -> Result<Vec<f64>> {
    let fc = teacher.feature_extractor().config();
    let hop = fc.hop_samples();
    let start = (start_ms * fc.sample_rate as f64 / 1000.0).round() as usize;
    let len = (dur_ms * fc.sample_rate as f64 / 1000.0).round() as usize;
    if !start.is_multiple_of(hop) {
        return Err(Error::InvalidInput(format!(
            "crop start {start} not on the {hop}-sample hop grid"
        )));
    }
    let first = start / hop;
    let count = teacher.feature_extractor().frame_count(len);
    let end = first + count;
    if end > speaker.features.len() {
        return Err(Error::InvalidInput("crop extends past the signal".into()));
    }
    let sub = FeatureFrameSeq {
        frames: speaker.features.frames[first..end].to_vec(),
        silent: speaker.features.silent[first..end].to_vec(),
    };
    pool_voiced(&sub)
}

/// One regression example: pooled crop statistics and the teacher target.
#[derive(Debug, Clone)]
pub struct TrainItem {
    pub pooled: Vec<f64>,
    pub target: Embedding,
}

fn draw_item(
    prepared: &[Vec<PreparedSpeaker>],
    teacher: &Teacher,
    cfg: &TrainConfig,
    grid: FrameGrid,
    seed: u64,
) -> Result<TrainItem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hop = teacher.feature_extractor().config().hop_samples();
    // A scene/speaker with no feasible crop is skipped in favor of another draw.
    for _ in 0..32 {
        let scene = &prepared[rng.random_range(0..prepared.len())];
        if scene.is_empty() {
            continue;
        }
        let spk = &scene[rng.random_range(0..scene.len())];
        match sample_crop_aligned(
            spk.len_samples,
            &spk.activity,
            grid,
            &cfg.crop,
            hop,
            &mut rng,
        ) {
            Ok((start_ms, dur_ms)) => {
                return Ok(TrainItem {
                    pooled: pooled_crop(spk, teacher, start_ms, dur_ms)?,
                    target: spk.target.clone(),
                });
            }
            Err(Error::Infeasible(_)) | Err(Error::TooShort(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Infeasible(
        "no scene yields a feasible training crop".into(),
    ))
}

/// Adam optimizer state.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Gradients,
    v: Gradients,
    t: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(model: &StudentModel, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            m: Gradients::zeros_like(model),
            v: Gradients::zeros_like(model),
            t: 0,
            lr,
            beta1,
            beta2,
            eps,
        }
    }

    pub fn step(&mut self, model: &mut StudentModel, grad: &Gradients) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let params = model.parameters_mut();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for (((p, g), m), v) in params.into_iter().zip(grad.tensors()).zip(ms).zip(vs) {
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

/// Mean loss and mean gradient over a batch.
pub fn batch_gradient(model: &StudentModel, items: &[TrainItem]) -> Result<(f64, Gradients)> {
    let mut total = Gradients::zeros_like(model);
    let mut loss = 0.0;
    let k = 1.0 / items.len() as f64;
    for item in items {
        let (l, g) = kd_grad(model, &item.pooled, &item.target)?;
        loss += l * k;
        total.add_scaled(&g, k);
    }
    Ok((loss, total))
}

pub fn mean_loss(model: &StudentModel, items: &[TrainItem]) -> Result<f64> {
    let mut acc = 0.0;
    for item in items {
        acc += super::kd_loss(&model.embed_pooled(&item.pooled)?, &item.target)?;
    }
    Ok(acc / items.len().max(1) as f64)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepLoss {
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub model: StudentModel,
    pub steps: Vec<StepLoss>,
    /// Mean of step losses per epoch.
    pub epoch_losses: Vec<f64>,
    /// Loss of the initial and final model on the first epoch's items.
    pub initial_loss: f64,
    pub final_loss: f64,
}

impl TrainReport {
    pub fn loss_log_csv(&self) -> Result<Vec<u8>> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        for s in &self.steps {
            wtr.serialize(s)?;
        }
        wtr.into_inner()
            .map_err(|e| Error::io("<loss log>", e.into_error()))
    }
}

/// Distills `teacher` into a freshly initialized student.
pub fn train_student<S: TrainItemSource + ?Sized>(
    scenes: &S,
    teacher: &Teacher,
    cfg: &TrainConfig,
    workers: usize,
) -> Result<TrainReport> {
    let init = StudentModel::init(
        teacher.config().features.clone(),
        teacher.normalizer(),
        cfg.hidden,
        teacher.dim(),
        derive_seed(cfg.seed, 0x1417),
    )?;
    train_from(init, scenes, teacher, cfg, workers)
}

/// Prepares every scene (in parallel, joined in index order).
pub fn prepare_all<S: TrainItemSource + ?Sized>(
    scenes: &S,
    teacher: &Teacher,
    pattern: f64,
    workers: usize,
) -> Result<Vec<Vec<PreparedSpeaker>>> {
    collect_results(map_range(scenes.scene_count(), workers, |i| {
        prepare_scene(&scenes.scene(i)?, teacher, pattern)
    }))
}

pub fn train_from<S: TrainItemSource + ?Sized>(
    init: StudentModel,
    scenes: &S,
    teacher: &Teacher,
    cfg: &TrainConfig,
    workers: usize,
) -> Result<TrainReport> {
    if scenes.scene_count() == 0 {
        return Err(Error::InvalidInput("no training scenes".into()));
    }
    if cfg.batch == 0 {
        return Err(Error::InvalidInput("batch size must be positive".into()));
    }
    let prepared = prepare_all(scenes, teacher, cfg.pattern, workers)?;
    train_prepared(init, &prepared, teacher, cfg, workers)
}

pub fn train_prepared(
    init: StudentModel,
    prepared: &[Vec<PreparedSpeaker>],
    teacher: &Teacher,
    cfg: &TrainConfig,
    workers: usize,
) -> Result<TrainReport> {
    if prepared.is_empty() {
        return Err(Error::InvalidInput("no training scenes".into()));
    }
    let grid = FrameGrid::new(
        crate::foa::DEFAULT_FRAME_MS,
        teacher.config().features.sample_rate,
    );
    let per_epoch = (prepared.len() * cfg.items_per_scene).max(cfg.batch);
    let items_for = |epoch: usize| -> Result<Vec<TrainItem>> {
        collect_results(map_range(per_epoch, workers, |i| {
            let seed = derive_seed(derive_seed(cfg.seed, epoch as u64 + 1), i as u64);
            draw_item(prepared, teacher, cfg, grid, seed)
        }))
    };

    let mut model = init;
    let mut adam = Adam::new(&model, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
    let mut steps = Vec::new();
    let mut epoch_losses = Vec::new();
    let reference = items_for(0)?;
    let initial_loss = mean_loss(&model, &reference)?;
    let mut step = 0usize;
    for epoch in 0..cfg.epochs {
        let items = if epoch == 0 {
            reference.clone()
        } else {
            items_for(epoch)?
        };
        let mut acc = 0.0;
        let mut batches = 0usize;
        for batch in items.chunks(cfg.batch) {
            let (loss, grad) = batch_gradient(&model, batch)?;
            adam.step(&mut model, &grad);
            steps.push(StepLoss { epoch, step, loss });
            step += 1;
            acc += loss;
            batches += 1;
        }
        epoch_losses.push(acc / batches as f64);
    }
    let final_loss = mean_loss(&model, &reference)?;
    Ok(TrainReport {
        model,
        steps,
        epoch_losses,
        initial_loss,
        final_loss,
    })
}
