//! The experiment harness behind the command line: batch generation,
//! training, reassignment runs, sweeps and re-evaluation.

pub mod config;
pub mod distill;
pub mod io;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::embed::student::StudentExtractor;
use crate::embed::{
    train_student, Embedding, SpeakerEmbedder, SteeredRequest, StudentModel, Teacher,
};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, write_report, ReportRow, Summary};
use crate::parallel::{collect_results, map_range};
use crate::reassign::{
    build_enrollments, enroll_solo, fragment_tracks, reassign_blockwise, reassign_fragments,
    EnrollmentPool, OracleExtractor, ReassignedTimeline, SceneBlocks, StartPolicy,
};
use crate::scene::{
    derive_seed, render_scene, speaker_label, GroundTruth, SceneSampler, SceneSpec,
};
use crate::track::{read_tracks, read_tracks_from, write_tracks_to, Track};
use crate::tracker::{simulate_tracker, ErrorModel};

pub use config::{
    ExperimentConfig, ExtractorConfig, ExtractorKind, MetricsConfig, ReassignConfig, ReassignMode,
    ScenesConfig, SweepAxis, SweepConfig,
};
pub use io::{load_scene, save_scene, scene_id, write_atomic, LoadedScene, SceneBatch};

pub const TRACKS_FILE: &str = "tracks.csv";
pub const TIMELINE_FILE: &str = "timeline.csv";
pub const POOL_FILE: &str = "pool.json";
pub const REPORT_FILE: &str = "report.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const BASELINE: &str = "baseline";

const TRACKER_SALT: u64 = 0x7AC4;
const DISTRACTOR_SALT: u64 = 0xD157;
const FRAGMENT_SALT: u64 = 0xF4A6;

/// Seeds of the scenes in a batch.
pub fn scene_seed(batch_seed: u64, index: usize) -> u64 {
    derive_seed(batch_seed, index as u64)
}

pub fn generate_specs(cfg: &ExperimentConfig) -> Result<Vec<SceneSpec>> {
    // Scenes must leave room for the enrollment span of every speaker.
    let sampler = SceneSampler {
        min_solo_s: cfg.reassign.enroll_min_ms / 1000.0,
        ..cfg.scenes.sampler()
    };
    (0..cfg.scenes.count)
        .map(|i| sampler.sample(scene_seed(cfg.seed, i)))
        .collect()
}

impl LoadedScene {
    /// Renders `spec` exactly as it reads back after a round trip through
    /// disk: f32 audio and truth directions at CSV precision.
    pub fn from_spec(id: String, spec: SceneSpec) -> Result<Self> {
        let mut scene = render_scene(&spec)?;
        scene.mixture = scene.mixture.quantized_f32();
        scene.wet = scene.wet.iter().map(|w| w.quantized_f32()).collect();
        let mut csv = Vec::new();
        write_tracks_to(&mut csv, &scene.truth.tracks)?;
        scene.truth.tracks = read_tracks_from(&csv[..], "<memory>")?;
        Ok(Self { id, spec, scene })
    }
}

/// An embedding extractor chosen by configuration.
#[derive(Debug, Clone)]
pub enum Extractor {
    Teacher(Box<Teacher>),
    Student(Box<StudentModel>),
    Oracle,
}

impl Extractor {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        Ok(match cfg.extractor.kind {
            ExtractorKind::Teacher => {
                Extractor::Teacher(Box::new(Teacher::new(cfg.extractor.teacher.clone())?))
            }
            ExtractorKind::Student => {
                Extractor::Student(Box::new(StudentModel::load(cfg.model_path())?))
            }
            ExtractorKind::Oracle => Extractor::Oracle,
        })
    }

    fn for_scene(&self, scene: &LoadedScene) -> SceneEmbedder<'_> {
        match self {
            Extractor::Teacher(t) => SceneEmbedder::Teacher(t),
            Extractor::Student(m) => SceneEmbedder::Student(m.extractor()),
            Extractor::Oracle => {
                let extra: Vec<String> = scene
                    .spec
                    .distractors
                    .iter()
                    .map(|d| speaker_label(d.speaker_id))
                    .collect();
                SceneEmbedder::Oracle(OracleExtractor::new(scene.scene.truth.clone(), &extra))
            }
        }
    }
}

enum SceneEmbedder<'a> {
    Teacher(&'a Teacher),
    Student(StudentExtractor<'a>),
    Oracle(OracleExtractor),
}

impl SpeakerEmbedder for SceneEmbedder<'_> {
    fn embed(&self, mono: &[f64], sample_rate: u32) -> Result<Embedding> {
        match self {
            SceneEmbedder::Teacher(t) => t.embed(mono, sample_rate),
            SceneEmbedder::Student(s) => s.embed(mono, sample_rate),
            SceneEmbedder::Oracle(o) => o.embed(mono, sample_rate),
        }
    }

    fn embed_steered(&self, req: &SteeredRequest<'_>) -> Result<Embedding> {
        match self {
            SceneEmbedder::Teacher(t) => t.embed_steered(req),
            SceneEmbedder::Student(s) => s.embed_steered(req),
            SceneEmbedder::Oracle(o) => o.embed_steered(req),
        }
    }
}

/// Report condition name and its block/context column for a config.
pub fn condition(cfg: &ExperimentConfig) -> (String, String) {
    let r = &cfg.reassign;
    match r.mode {
        ReassignMode::Blockwise => (
            "blockwise".into(),
            format!(
                "{}",
                r.block_frames as u64 * crate::foa::DEFAULT_FRAME_MS as u64
            ),
        ),
        ReassignMode::Fragment => {
            let start = match r.start_policy {
                StartPolicy::Beginning => "beginning",
                StartPolicy::Random => "random",
            };
            (format!("fragment-{start}"), r.context.to_string())
        }
    }
}

/// The enrollment pool of a scene: its own speakers from their solo spans,
/// distractors from separate solo recordings.
pub fn scene_pool<E: SpeakerEmbedder + ?Sized>(
    scene: &LoadedScene,
    extractor: &E,
    cfg: &ReassignConfig,
) -> Result<EnrollmentPool> {
    let s = &scene.scene;
    let mut pool = build_enrollments(
        &s.mixture,
        &s.truth,
        extractor,
        cfg.enroll_min_ms,
        cfg.pattern,
    )?;
    for (k, voice) in scene.spec.distractors.iter().enumerate() {
        let seed = derive_seed(scene.spec.seed, DISTRACTOR_SALT + k as u64);
        let dir = random_direction(seed);
        let e = enroll_solo(
            voice,
            dir,
            cfg.distractor_enroll_s,
            scene.spec.snr_db,
            seed,
            extractor,
            cfg.pattern,
        )?;
        pool.push(speaker_label(voice.speaker_id), e)?;
    }
    pool.sort_by_label();
    Ok(pool)
}

fn random_direction(seed: u64) -> crate::foa::Direction {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let z: f64 = rng.random_range(-1.0..1.0);
    let az: f64 = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    crate::foa::Direction::new(az, z.asin())
}

pub fn tracker_model(cfg: &ExperimentConfig, spec: &SceneSpec) -> ErrorModel {
    ErrorModel {
        seed: derive_seed(spec.seed, TRACKER_SALT ^ cfg.tracker.seed),
        ..cfg.tracker.clone()
    }
}

/// Everything a run produces for one scene.
#[derive(Debug, Clone)]
pub struct SceneOutcome {
    pub id: String,
    pub tracks: Vec<Track>,
    pub swap_blocks: Vec<usize>,
    pub pool: EnrollmentPool,
    pub timeline: ReassignedTimeline,
    pub method: ReportRow,
    pub baseline: ReportRow,
}

/// Reassigns the tracker output of one scene, given tracker tracks.
pub fn reassign_scene<E: SpeakerEmbedder + ?Sized>(
    scene: &LoadedScene,
    tracks: &[Track],
    pool: &EnrollmentPool,
    extractor: &E,
    cfg: &ExperimentConfig,
) -> Result<ReassignedTimeline> {
    let s = &scene.scene;
    let grid = s.truth.grid;
    match cfg.reassign.mode {
        ReassignMode::Blockwise => {
            let mut src = SceneBlocks::new(&s.mixture, tracks, grid, cfg.reassign.block_frames)?;
            reassign_blockwise(&mut src, pool, extractor, &cfg.reassign.blockwise(), |_| {})
        }
        ReassignMode::Fragment => {
            let frags = fragment_tracks(tracks, cfg.reassign.gap_tolerance_frames);
            let fcfg = cfg
                .reassign
                .fragment(derive_seed(scene.spec.seed, FRAGMENT_SALT));
            // Scenes already run in parallel.
            reassign_fragments(&s.mixture, grid, tracks, &frags, pool, extractor, &fcfg, 1)
        }
    }
}

fn score_rows(
    id: &str,
    truth: &GroundTruth,
    timeline: &ReassignedTimeline,
    tracks: &[Track],
    cfg: &ExperimentConfig,
) -> Result<(ReportRow, ReportRow)> {
    let (cond, ms) = condition(cfg);
    let m = cfg.metrics.matching();
    let (r, swaps) = evaluate(truth, timeline, &m)?;
    let (b, bswaps) = evaluate(truth, &ReassignedTimeline::baseline(tracks), &m)?;
    let row = |condition: String, assa: f64, swaps: usize| ReportRow {
        scene_id: id.to_string(),
        condition,
        block_or_context_ms: ms.clone(),
        assa,
        swaps,
    };
    Ok((
        row(cond, r.assa, swaps),
        row(BASELINE.into(), b.assa, bswaps),
    ))
}

pub fn evaluate_scene(
    scene: &LoadedScene,
    cfg: &ExperimentConfig,
    ex: &Extractor,
) -> Result<SceneOutcome> {
    let sim = simulate_tracker(&scene.scene.truth, &tracker_model(cfg, &scene.spec))?;
    let embedder = ex.for_scene(scene);
    let pool = match &embedder {
        SceneEmbedder::Oracle(o) => o.pool(),
        other => scene_pool(scene, other, &cfg.reassign)?,
    };
    let timeline = reassign_scene(scene, &sim.tracks, &pool, &embedder, cfg)?;
    let (method, baseline) =
        score_rows(&scene.id, &scene.scene.truth, &timeline, &sim.tracks, cfg)?;
    Ok(SceneOutcome {
        id: scene.id.clone(),
        tracks: sim.tracks,
        swap_blocks: sim.swap_blocks,
        pool,
        timeline,
        method,
        baseline,
    })
}

/// Evaluates `count` scenes produced by `load`, in parallel, results in index
/// order. `on_scene` sees each outcome (e.g. to write it out) before the scene
/// is dropped.
pub fn run_batch<L, W>(
    count: usize,
    load: L,
    cfg: &ExperimentConfig,
    ex: &Extractor,
    on_scene: W,
) -> Result<Vec<SceneOutcome>>
where
    L: Fn(usize) -> Result<LoadedScene> + Sync,
    W: Fn(&SceneOutcome) -> Result<()> + Sync,
{
    collect_results(map_range(count, cfg.workers, |i| {
        let scene = load(i)?;
        let out = evaluate_scene(&scene, cfg, ex)?;
        on_scene(&out)?;
        Ok(out)
    }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryFile {
    pub summaries: Vec<Summary>,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub rows: Vec<ReportRow>,
    pub summaries: Vec<Summary>,
}

impl RunOutcome {
    pub fn mean(&self, condition: &str) -> Option<f64> {
        self.summaries
            .iter()
            .find(|s| s.condition == condition)
            .map(|s| s.mean_assa)
    }
}

fn rows_of(outcomes: &[SceneOutcome]) -> Vec<ReportRow> {
    let mut rows: Vec<ReportRow> = outcomes.iter().map(|o| o.method.clone()).collect();
    rows.extend(outcomes.iter().map(|o| o.baseline.clone()));
    rows
}

fn write_summary(
    dir: &Path,
    name: &str,
    rows: &[ReportRow],
    cfg: &ExperimentConfig,
) -> Result<Vec<Summary>> {
    let m = &cfg.metrics;
    let summaries =
        Summary::from_rows(rows, m.bootstrap_iterations, m.bootstrap_fraction, cfg.seed);
    let file = SummaryFile {
        summaries: summaries.clone(),
        config: cfg.clone(),
    };
    write_atomic(
        &dir.join(name),
        serde_json::to_string_pretty(&file)?.as_bytes(),
    )?;
    Ok(summaries)
}

fn write_resolved(dir: &Path, command: &str, cfg: &ExperimentConfig) -> Result<()> {
    write_atomic(
        &dir.join(format!("{command}.resolved.toml")),
        cfg.to_toml()?.as_bytes(),
    )
}

/// Runs and writes per-scene artifacts plus report and summary into `dir`.
pub fn run_into<L>(dir: &Path, count: usize, load: L, cfg: &ExperimentConfig) -> Result<RunOutcome>
where
    L: Fn(usize) -> Result<LoadedScene> + Sync,
{
    let ex = Extractor::from_config(cfg)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_resolved(dir, "run", cfg)?;
    let outcomes = run_batch(count, load, cfg, &ex, |o| {
        let sd = dir.join(&o.id);
        let mut csv = Vec::new();
        write_tracks_to(&mut csv, &o.tracks)?;
        write_atomic(&sd.join(TRACKS_FILE), &csv)?;
        write_atomic(&sd.join(TIMELINE_FILE), &o.timeline.to_csv_bytes()?)?;
        write_atomic(&sd.join(POOL_FILE), o.pool.to_json()?.as_bytes())
    })?;
    let rows = rows_of(&outcomes);
    let mut csv = Vec::new();
    write_report(&mut csv, &rows)?;
    write_atomic(&dir.join(REPORT_FILE), &csv)?;
    let summaries = write_summary(dir, SUMMARY_FILE, &rows, cfg)?;
    Ok(RunOutcome {
        dir: dir.to_path_buf(),
        rows,
        summaries,
    })
}

#[derive(Debug, Clone)]
pub struct GenOutcome {
    pub dir: PathBuf,
    pub scenes: usize,
    pub mean_overlap: f64,
}

/// Renders the configured batch to `<batch_dir>/scene_NNNN/`.
pub fn cmd_gen(cfg: &ExperimentConfig) -> Result<GenOutcome> {
    let dir = cfg.batch_dir();
    let specs = generate_specs(cfg)?;
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let overlaps = collect_results(map_range(specs.len(), cfg.workers, |i| {
        let scene = render_scene(&specs[i])?;
        save_scene(&dir.join(scene_id(i)), &specs[i], &scene)?;
        Ok::<f64, Error>(scene.truth.overlap_ratio())
    }))?;
    write_resolved(&cfg.out, "gen", cfg)?;
    Ok(GenOutcome {
        dir,
        scenes: specs.len(),
        mean_overlap: overlaps.iter().sum::<f64>() / overlaps.len().max(1) as f64,
    })
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model_path: PathBuf,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub epoch_losses: Vec<f64>,
    pub epochs: usize,
}

impl TrainOutcome {
    /// Training ran but did not lower the loss.
    pub fn failed(&self) -> bool {
        self.epochs > 0 && !(self.final_loss < self.initial_loss)
    }
}

pub const LOSS_LOG_FILE: &str = "train_loss.csv";

/// Distills a student on the batch and writes the model and loss log.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainOutcome> {
    let batch = SceneBatch::open(&cfg.batch_dir())?;
    let teacher = Teacher::new(cfg.extractor.teacher.clone())?;
    let tcfg = crate::embed::TrainConfig {
        seed: derive_seed(cfg.seed, cfg.train.seed),
        ..cfg.train.clone()
    };
    let report = train_student(&batch, &teacher, &tcfg, cfg.workers)?;
    let path = cfg.model_path();
    write_atomic(&path, report.model.to_json()?.as_bytes())?;
    write_atomic(&cfg.out.join(LOSS_LOG_FILE), &report.loss_log_csv()?)?;
    write_resolved(&cfg.out, "train", cfg)?;
    Ok(TrainOutcome {
        model_path: path,
        initial_loss: report.initial_loss,
        final_loss: report.final_loss,
        epoch_losses: report.epoch_losses,
        epochs: cfg.train.epochs,
    })
}

pub fn run_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out.join("run")
}

/// Simulates, reassigns and scores every scene of the batch.
pub fn cmd_run(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let batch = SceneBatch::open(&cfg.batch_dir())?;
    run_into(&run_dir(cfg), batch.len(), |i| batch.load(i), cfg)
}

/// Re-scores the artifacts of a previous run from disk.
pub fn cmd_eval(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let batch = SceneBatch::open(&cfg.batch_dir())?;
    let dir = run_dir(cfg);
    let pairs = collect_results(map_range(batch.len(), cfg.workers, |i| {
        let scene = batch.load(i)?;
        let sd = dir.join(&scene.id);
        let tracks = read_tracks(sd.join(TRACKS_FILE))?;
        let timeline = ReassignedTimeline::read(sd.join(TIMELINE_FILE), &tracks)?;
        score_rows(&scene.id, &scene.scene.truth, &timeline, &tracks, cfg)
    }))?;
    let mut rows: Vec<ReportRow> = pairs.iter().map(|p| p.0.clone()).collect();
    rows.extend(pairs.into_iter().map(|p| p.1));
    let mut csv = Vec::new();
    write_report(&mut csv, &rows)?;
    write_atomic(&dir.join("eval_report.csv"), &csv)?;
    let summaries = write_summary(&dir, "eval_summary.json", &rows, cfg)?;
    Ok(RunOutcome {
        dir,
        rows,
        summaries,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: String,
    pub condition: String,
    pub block_or_context_ms: String,
    pub scenes: usize,
    pub mean_assa: f64,
    pub std_assa: Option<f64>,
    pub mean_swaps: f64,
}

fn value_label(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// `cfg` with the sweep axis set to `value`.
pub fn with_axis_value(
    cfg: &ExperimentConfig,
    axis: SweepAxis,
    value: &toml::Value,
) -> Result<ExperimentConfig> {
    let (key, mode) = match axis {
        SweepAxis::BlockFrames => ("reassign.block_frames", Some("blockwise")),
        SweepAxis::ContextMs => ("reassign.context", Some("fragment")),
        SweepAxis::Overlap => ("scenes.overlap", None),
        SweepAxis::PermLambda => ("tracker.perm_lambda", None),
    };
    let mut ov = vec![(key.to_string(), value.clone())];
    if let Some(m) = mode {
        ov.push(("reassign.mode".into(), toml::Value::String(m.into())));
    }
    cfg.with_values(&ov)
}

pub struct SweepOutcome {
    pub csv_path: PathBuf,
    pub rows: Vec<SweepRow>,
}

/// Runs once per axis value into `<out>/sweep/<axis>=<value>/` and writes the
/// consolidated table `<out>/sweep_<axis>.csv`.
pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<SweepOutcome> {
    let axis = cfg.sweep.axis;
    if cfg.sweep.values.is_empty() {
        return Err(Error::Config("sweep.values is empty".into()));
    }
    let mut rows = Vec::new();
    for value in &cfg.sweep.values {
        let vcfg = with_axis_value(cfg, axis, value)?;
        let label = value_label(value);
        let dir = cfg
            .out
            .join("sweep")
            .join(format!("{}={label}", axis.name()));
        let run = if axis == SweepAxis::Overlap {
            // The batch depends on the axis value; render it in memory.
            let specs = generate_specs(&vcfg)?;
            run_into(
                &dir,
                specs.len(),
                |i| LoadedScene::from_spec(scene_id(i), specs[i].clone()),
                &vcfg,
            )?
        } else {
            let batch = SceneBatch::open(&vcfg.batch_dir())?;
            run_into(&dir, batch.len(), |i| batch.load(i), &vcfg)?
        };
        for s in run.summaries {
            rows.push(SweepRow {
                axis: axis.name().into(),
                value: label.clone(),
                condition: s.condition,
                block_or_context_ms: s.block_or_context_ms,
                scenes: s.scenes,
                mean_assa: s.mean_assa,
                std_assa: s.bootstrap.map(|b| b.std),
                mean_swaps: s.mean_swaps,
            });
        }
    }
    let mut wtr = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        wtr.serialize(r)?;
    }
    let bytes = wtr
        .into_inner()
        .map_err(|e| Error::io("<sweep>", e.into_error()))?;
    let csv_path = cfg.out.join(format!("sweep_{}.csv", axis.name()));
    write_atomic(&csv_path, &bytes)?;
    write_resolved(&cfg.out, "sweep", cfg)?;
    Ok(SweepOutcome { csv_path, rows })
}
