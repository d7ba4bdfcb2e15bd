//! Experiment configuration: one TOML file plus dotted-key overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::beamform::DEFAULT_PATTERN;
use crate::embed::{TeacherConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::metrics::MatchConfig;
use crate::reassign::{
    BlockwiseConfig, Context, FragmentConfig, StartPolicy, DEFAULT_GAP_TOLERANCE,
};
use crate::scene::{ActivityParams, SceneSampler, DEFAULT_SNR_DB};
use crate::tracker::ErrorModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenesConfig {
    pub count: usize,
    pub duration_s: f64,
    pub n_speakers: usize,
    pub overlap: f64,
    /// `inf` disables the noise floor.
    pub snr_db: f64,
    pub pool_size: usize,
    pub voice_ids: (u32, u32),
    pub activity: ActivityParams,
}

impl Default for ScenesConfig {
    fn default() -> Self {
        let s = SceneSampler::default();
        Self {
            count: 50,
            duration_s: s.duration_s,
            n_speakers: s.n_speakers,
            overlap: s.overlap_target,
            snr_db: DEFAULT_SNR_DB,
            pool_size: s.pool_size,
            voice_ids: s.voice_ids,
            activity: s.activity,
        }
    }
}

impl ScenesConfig {
    pub fn sampler(&self) -> SceneSampler {
        SceneSampler {
            n_speakers: self.n_speakers,
            duration_s: self.duration_s,
            overlap_target: self.overlap,
            snr_db: self.snr_db.is_finite().then_some(self.snr_db),
            pool_size: self.pool_size,
            voice_ids: self.voice_ids,
            activity: self.activity.clone(),
            ..SceneSampler::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtractorKind {
    Teacher,
    Student,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractorConfig {
    pub kind: ExtractorKind,
    /// Student model file; defaults to `<out>/student.json`.
    pub model: Option<PathBuf>,
    pub teacher: TeacherConfig,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        Self {
            kind: ExtractorKind::Teacher,
            model: None,
            teacher: TeacherConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReassignMode {
    Blockwise,
    Fragment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReassignConfig {
    pub mode: ReassignMode,
    pub block_frames: usize,
    pub min_active_fraction: f64,
    pub exclusive: bool,
    pub context: Context,
    pub start_policy: StartPolicy,
    pub gap_tolerance_frames: usize,
    pub pattern: f64,
    pub enroll_min_ms: f64,
    /// Length of the solo recording used to enroll speakers absent from a scene.
    pub distractor_enroll_s: f64,
}

impl Default for ReassignConfig {
    fn default() -> Self {
        Self {
            mode: ReassignMode::Blockwise,
            block_frames: 25,
            min_active_fraction: 0.25,
            exclusive: false,
            context: Context::Fixed { ms: 250.0 },
            start_policy: StartPolicy::Beginning,
            gap_tolerance_frames: DEFAULT_GAP_TOLERANCE,
            pattern: DEFAULT_PATTERN,
            enroll_min_ms: 2000.0,
            distractor_enroll_s: 4.0,
        }
    }
}

impl ReassignConfig {
    pub fn blockwise(&self) -> BlockwiseConfig {
        BlockwiseConfig {
            block_frames: self.block_frames,
            min_active_fraction: self.min_active_fraction,
            pattern: self.pattern,
            exclusive: self.exclusive,
        }
    }

    pub fn fragment(&self, seed: u64) -> FragmentConfig {
        FragmentConfig {
            context: self.context,
            start_policy: self.start_policy,
            seed,
            gap_tolerance_frames: self.gap_tolerance_frames,
            pattern: self.pattern,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub angle_threshold_deg: f64,
    pub bootstrap_iterations: usize,
    pub bootstrap_fraction: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            angle_threshold_deg: MatchConfig::default().angle_threshold_deg,
            bootstrap_iterations: 100,
            bootstrap_fraction: 0.8,
        }
    }
}

impl MetricsConfig {
    pub fn matching(&self) -> MatchConfig {
        MatchConfig {
            angle_threshold_deg: self.angle_threshold_deg,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    BlockFrames,
    ContextMs,
    Overlap,
    PermLambda,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::BlockFrames => "block_frames",
            SweepAxis::ContextMs => "context_ms",
            SweepAxis::Overlap => "overlap",
            SweepAxis::PermLambda => "perm_lambda",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    /// Numbers, or `"whole"` on the context axis.
    pub values: Vec<toml::Value>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            axis: SweepAxis::BlockFrames,
            values: [8, 25, 50, 100, 200]
                .into_iter()
                .map(toml::Value::Integer)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// 0 lets the runtime pick.
    pub workers: usize,
    pub out: PathBuf,
    /// Scene batch location; defaults to `<out>/scenes`.
    pub batch_dir: Option<PathBuf>,
    pub scenes: ScenesConfig,
    pub tracker: ErrorModel,
    pub extractor: ExtractorConfig,
    pub reassign: ReassignConfig,
    pub metrics: MetricsConfig,
    pub train: TrainConfig,
    pub sweep: SweepConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: 0,
            out: PathBuf::from("out"),
            batch_dir: None,
            scenes: ScenesConfig::default(),
            tracker: ErrorModel::default(),
            extractor: ExtractorConfig::default(),
            reassign: ReassignConfig::default(),
            metrics: MetricsConfig::default(),
            train: TrainConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

/// Parses an override value as a TOML literal, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t
            .remove("v")
            .unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_dotted(root: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key '{key}'")));
    }
    let mut table = root;
    for p in &parts[..parts.len() - 1] {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override '{key}': '{p}' is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl ExperimentConfig {
    /// Builds a config from optional TOML text and `(dotted.key, value)`
    /// overrides applied in order.
    pub fn resolve(text: Option<&str>, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table = match text {
            Some(t) => toml::from_str(t).map_err(|e| Error::Config(e.to_string()))?,
            None => toml::Table::new(),
        };
        for (k, v) in overrides {
            set_dotted(&mut table, k, parse_value(v))?;
        }
        Self::from_table(table)
    }

    /// A copy with typed values set at dotted keys.
    pub fn with_values(&self, values: &[(String, toml::Value)]) -> Result<Self> {
        let mut table = toml::Table::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        for (k, v) in values {
            set_dotted(&mut table, k, v.clone())?;
        }
        Self::from_table(table)
    }

    fn from_table(table: toml::Table) -> Result<Self> {
        let cfg: ExperimentConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let text = match path {
            Some(p) => Some(std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?),
            None => None,
        };
        Self::resolve(text.as_deref(), overrides)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.scenes.n_speakers == 1 && self.scenes.overlap != 0.0 {
            return bad("scenes.overlap must be 0 for single-speaker scenes".into());
        }
        if !(0.0..1.0).contains(&self.scenes.overlap) {
            return bad(format!(
                "scenes.overlap {} outside [0, 1)",
                self.scenes.overlap
            ));
        }
        if self.scenes.pool_size < self.scenes.n_speakers {
            return bad("scenes.pool_size smaller than n_speakers".into());
        }
        self.tracker
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.reassign.block_frames == 0 {
            return bad("reassign.block_frames must be positive".into());
        }
        if !(self.metrics.angle_threshold_deg > 0.0) {
            return bad("metrics.angle_threshold_deg must be positive".into());
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn batch_dir(&self) -> PathBuf {
        self.batch_dir
            .clone()
            .unwrap_or_else(|| self.out.join("scenes"))
    }

    pub fn model_path(&self) -> PathBuf {
        self.extractor
            .model
            .clone()
            .unwrap_or_else(|| self.out.join("student.json"))
    }
}
