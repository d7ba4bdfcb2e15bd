//! Fragment-level reassignment: each period of activity of a track gets one
//! identity decision.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::pool::EnrollmentPool;
use super::timeline::ReassignedTimeline;
use super::{embed_window, extend_range_left, DEFAULT_GAP_TOLERANCE};
use crate::beamform::DEFAULT_PATTERN;
use crate::embed::SpeakerEmbedder;
use crate::error::{Error, Result};
use crate::foa::{Direction, FoaSignal, FrameGrid};
use crate::parallel::{collect_results, map_indexed};
use crate::scene::derive_seed;
use crate::track::Track;

/// A run of activity on one track; short gaps inside it are bridged.
#[derive(Debug, Clone, PartialEq)]
pub struct Fragment {
    pub source_track_id: usize,
    pub start_frame: usize,
    pub end_frame: usize,
    /// One per frame; bridged gaps hold the last active direction.
    pub directions: Vec<Direction>,
}

impl Fragment {
    pub fn len(&self) -> usize {
        self.end_frame - self.start_frame
    }

    pub fn is_empty(&self) -> bool {
        self.end_frame == self.start_frame
    }
}

/// Maximal active runs per track, merging gaps of at most `gap_tolerance`
/// frames. Sorted by start frame, then track id.
pub fn fragment_tracks(tracks: &[Track], gap_tolerance: usize) -> Vec<Fragment> {
    let mut out = Vec::new();
    for t in tracks {
        let mut runs: Vec<(usize, usize)> = Vec::new();
        let mut f = 0;
        while f < t.len() {
            if !t.active[f] {
                f += 1;
                continue;
            }
            let s = f;
            while f < t.len() && t.active[f] {
                f += 1;
            }
            match runs.last_mut() {
                Some(last) if s - last.1 <= gap_tolerance => last.1 = f,
                _ => runs.push((s, f)),
            }
        }
        for (s, e) in runs {
            let mut held = t.directions[s];
            let directions = (s..e)
                .map(|f| {
                    if t.active[f] {
                        held = t.directions[f];
                    }
                    held
                })
                .collect();
            out.push(Fragment {
                source_track_id: t.track_id,
                start_frame: s,
                end_frame: e,
                directions,
            });
        }
    }
    out.sort_by_key(|fr| (fr.start_frame, fr.source_track_id));
    out
}

/// How much of a fragment is embedded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ContextRepr", into = "ContextRepr")]
pub enum Context {
    Fixed { ms: f64 },
    Whole,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ContextRepr {
    Ms(f64),
    Name(String),
}

impl TryFrom<ContextRepr> for Context {
    type Error = String;

    fn try_from(r: ContextRepr) -> std::result::Result<Self, String> {
        match r {
            ContextRepr::Ms(ms) if ms > 0.0 => Ok(Context::Fixed { ms }),
            ContextRepr::Ms(ms) => Err(format!("context must be positive, got {ms}")),
            ContextRepr::Name(s) if s == "whole" => Ok(Context::Whole),
            ContextRepr::Name(s) => s
                .parse::<f64>()
                .map_err(|_| format!("context must be a duration in ms or \"whole\", got '{s}'"))
                .and_then(|ms| Context::try_from(ContextRepr::Ms(ms))),
        }
    }
}

impl From<Context> for ContextRepr {
    fn from(c: Context) -> Self {
        match c {
            Context::Fixed { ms } => ContextRepr::Ms(ms),
            Context::Whole => ContextRepr::Name("whole".into()),
        }
    }
}

impl std::fmt::Display for Context {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Context::Fixed { ms } => write!(f, "{ms}"),
            Context::Whole => f.write_str("whole"),
        }
    }
}

/// Where the context window starts inside a fragment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StartPolicy {
    Beginning,
    /// Uniform over the whole fragment, so windows near its end are cut
    /// short. Per-fragment streams derive from the seed.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FragmentConfig {
    pub context: Context,
    pub start_policy: StartPolicy,
    pub seed: u64,
    pub gap_tolerance_frames: usize,
    pub pattern: f64,
}

impl Default for FragmentConfig {
    fn default() -> Self {
        Self {
            context: Context::Whole,
            start_policy: StartPolicy::Beginning,
            seed: 0,
            gap_tolerance_frames: DEFAULT_GAP_TOLERANCE,
            pattern: DEFAULT_PATTERN,
        }
    }
}

/// Sample window `[a, b)` embedded for `fragment`.
pub fn fragment_window(
    fragment: &Fragment,
    index: usize,
    grid: FrameGrid,
    total_samples: usize,
    min_ms: f64,
    cfg: &FragmentConfig,
) -> (usize, usize) {
    let n = grid.frame_samples();
    let fa = fragment.start_frame * n;
    let fb = (fragment.end_frame * n).min(total_samples);
    let (a, b) = match cfg.context {
        Context::Whole => (fa, fb),
        Context::Fixed { ms } => {
            let len = grid.ms_to_samples(ms);
            let a = match cfg.start_policy {
                StartPolicy::Beginning => fa,
                StartPolicy::Random => {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, index as u64));
                    rng.random_range(fa..fb.max(fa + 1))
                }
            };
            (a, (a + len).min(fb))
        }
    };
    // Windows below the extractor minimum grow back into the fragment first.
    extend_range_left(a, b, grid.ms_to_samples(min_ms), total_samples)
}

/// Decides an identity per fragment and labels all its active frames.
#[allow(clippy::too_many_arguments)]
pub fn reassign_fragments<E: SpeakerEmbedder + ?Sized>(
    mixture: &FoaSignal,
    grid: FrameGrid,
    tracks: &[Track],
    fragments: &[Fragment],
    pool: &EnrollmentPool,
    extractor: &E,
    cfg: &FragmentConfig,
    workers: usize,
) -> Result<ReassignedTimeline> {
    let min_ms = extractor.min_duration_ms();
    if let Context::Fixed { ms } = cfg.context {
        if ms < min_ms {
            return Err(Error::InvalidInput(format!(
                "context {ms} ms is shorter than the extractor minimum {min_ms} ms"
            )));
        }
    }
    if pool.is_empty() {
        return Err(Error::InvalidInput("empty enrollment pool".into()));
    }
    let decisions = collect_results(map_indexed(fragments, workers, |i, fr| {
        let (a, b) = fragment_window(fr, i, grid, mixture.len(), min_ms, cfg);
        let e = embed_window(
            extractor,
            mixture,
            grid,
            0,
            a,
            b,
            &fr.directions,
            fr.start_frame,
            cfg.pattern,
        )?;
        pool.decide(&e)
    }))?;
    let mut tl = ReassignedTimeline::unlabeled(tracks);
    for (fr, d) in fragments.iter().zip(decisions) {
        let t = tl
            .tracks
            .iter_mut()
            .find(|t| t.track_id == fr.source_track_id)
            .ok_or_else(|| {
                Error::Mismatch(format!("fragment of unknown track {}", fr.source_track_id))
            })?;
        t.assign(fr.start_frame..fr.end_frame, &d.label, Some(d.similarity));
    }
    Ok(tl)
}
