//! Scene batches on disk and atomic file output.

use std::path::{Path, PathBuf};

use crate::embed::TrainItemSource;
use crate::error::{Error, Result};
use crate::scene::{GroundTruth, RenderedScene, SceneSpec};
use crate::track::{read_tracks, write_tracks_to};
use crate::wav::{read_foa, read_foa_group, write_foa_group};

pub const MIXTURE_FILE: &str = "mixture.wav";
pub const TRUTH_FILE: &str = "truth.csv";
pub const SPEC_FILE: &str = "spec.json";

/// Every speaker's wet signal, four channels per speaker in speaker order.
pub const WET_FILE: &str = "wet.wav";

pub fn scene_id(i: usize) -> String {
    format!("scene_{i:04}")
}

fn temp_path(path: &Path) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

/// Writes `bytes` to a sibling temp file, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = temp_path(path);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn write_foa_atomic(path: &Path, signals: &[crate::foa::FoaSignal]) -> Result<()> {
    let tmp = temp_path(path);
    write_foa_group(&tmp, signals)?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// A scene together with its identifier.
#[derive(Debug, Clone)]
pub struct LoadedScene {
    pub id: String,
    pub spec: SceneSpec,
    pub scene: RenderedScene,
}

/// Writes a rendered scene as `mixture.wav`, `wet.wav`, `truth.csv` and
/// `spec.json` under `dir`.
pub fn save_scene(dir: &Path, spec: &SceneSpec, scene: &RenderedScene) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_foa_atomic(
        &dir.join(MIXTURE_FILE),
        std::slice::from_ref(&scene.mixture),
    )?;
    write_foa_atomic(&dir.join(WET_FILE), &scene.wet)?;
    let mut csv = Vec::new();
    write_tracks_to(&mut csv, &scene.truth.tracks)?;
    write_atomic(&dir.join(TRUTH_FILE), &csv)?;
    write_atomic(
        &dir.join(SPEC_FILE),
        serde_json::to_string_pretty(spec)?.as_bytes(),
    )
}

pub fn load_scene(dir: &Path) -> Result<LoadedScene> {
    let spec_path = dir.join(SPEC_FILE);
    let text = std::fs::read_to_string(&spec_path).map_err(|e| Error::io(&spec_path, e))?;
    let spec: SceneSpec = serde_json::from_str(&text)?;
    let mixture = read_foa(dir.join(MIXTURE_FILE))?;
    let wet = read_foa_group(dir.join(WET_FILE))?;
    if wet.len() != spec.speakers.len() {
        return Err(Error::Mismatch(format!(
            "{}: {} wet signals for {} speakers",
            dir.display(),
            wet.len(),
            spec.speakers.len()
        )));
    }
    let tracks = read_tracks(dir.join(TRUTH_FILE))?;
    if tracks.len() != spec.speakers.len() {
        return Err(Error::Mismatch(format!(
            "{}: {} truth tracks for {} speakers",
            dir.display(),
            tracks.len(),
            spec.speakers.len()
        )));
    }
    let truth = GroundTruth {
        grid: spec.grid(),
        tracks,
        speaker_ids: spec.speakers.iter().map(|s| s.voice.speaker_id).collect(),
    };
    Ok(LoadedScene {
        id: dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        spec,
        scene: RenderedScene {
            mixture,
            wet,
            truth,
        },
    })
}

/// The scene directories of a batch, sorted by name.
#[derive(Debug, Clone)]
pub struct SceneBatch {
    pub dirs: Vec<PathBuf>,
}

impl SceneBatch {
    pub fn open(root: &Path) -> Result<Self> {
        let entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
        let mut dirs = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(root, e))?;
            let path = entry.path();
            if path.is_dir() && path.join(SPEC_FILE).is_file() {
                dirs.push(path);
            }
        }
        dirs.sort();
        if dirs.is_empty() {
            return Err(Error::InvalidInput(format!(
                "no scenes found in {}",
                root.display()
            )));
        }
        Ok(Self { dirs })
    }

    pub fn len(&self) -> usize {
        self.dirs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dirs.is_empty()
    }

    pub fn load(&self, i: usize) -> Result<LoadedScene> {
        load_scene(&self.dirs[i])
    }
}

impl TrainItemSource for SceneBatch {
    fn scene_count(&self) -> usize {
        self.len()
    }

    fn scene(&self, index: usize) -> Result<RenderedScene> {
        Ok(self.load(index)?.scene)
    }
}
