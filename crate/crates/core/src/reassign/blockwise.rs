//! Streaming reassignment in fixed-size blocks.
//!
//! Blocks are pulled from a [`BlockSource`] one at a time. All decisions for
//! block k are handed to the sink before block k+1 is requested, so latency is
//! bounded by the block size.

use serde::{Deserialize, Serialize};

use super::pool::{Decision, EnrollmentPool};
use super::timeline::{ReassignedTimeline, TimelineTrack};
use super::{embed_window, extend_range};
use crate::beamform::DEFAULT_PATTERN;
use crate::embed::{Embedding, SpeakerEmbedder};
use crate::error::{Error, Result};
use crate::foa::{Direction, FoaSignal, FrameGrid};
use crate::track::Track;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlockwiseConfig {
    pub block_frames: usize,
    /// Portions active on less than this fraction of the block inherit the
    /// track's previous decision, when there is one, instead of being embedded.
    pub min_active_fraction: f64,
    pub pattern: f64,
    /// Simultaneous portions of a block receive distinct identities.
    pub exclusive: bool,
}

impl Default for BlockwiseConfig {
    fn default() -> Self {
        Self {
            block_frames: 25,
            min_active_fraction: 0.25,
            pattern: DEFAULT_PATTERN,
            exclusive: false,
        }
    }
}

/// Audio and tracker output for one block.
#[derive(Debug, Clone)]
pub struct BlockInput {
    pub index: usize,
    pub start_frame: usize,
    pub audio: FoaSignal,
    /// Tracks restricted to the block's frames.
    pub tracks: Vec<Track>,
}

pub trait BlockSource {
    fn grid(&self) -> FrameGrid;
    fn next_block(&mut self) -> Result<Option<BlockInput>>;
}

/// Serves a recorded scene block by block.
pub struct SceneBlocks<'a> {
    mixture: &'a FoaSignal,
    tracks: &'a [Track],
    grid: FrameGrid,
    block_frames: usize,
    next: usize,
}

impl<'a> SceneBlocks<'a> {
    pub fn new(
        mixture: &'a FoaSignal,
        tracks: &'a [Track],
        grid: FrameGrid,
        block_frames: usize,
    ) -> Result<Self> {
        if block_frames == 0 {
            return Err(Error::InvalidInput("block size must be positive".into()));
        }
        let frames = tracks.first().map(Track::len).unwrap_or(0);
        if tracks.iter().any(|t| t.len() != frames) {
            return Err(Error::Mismatch(
                "tracks cover different frame counts".into(),
            ));
        }
        if grid.frame_count(mixture.len()) < frames {
            return Err(Error::Mismatch(format!(
                "{frames} track frames but audio holds {}",
                grid.frame_count(mixture.len())
            )));
        }
        Ok(Self {
            mixture,
            tracks,
            grid,
            block_frames,
            next: 0,
        })
    }
}

impl BlockSource for SceneBlocks<'_> {
    fn grid(&self) -> FrameGrid {
        self.grid
    }

    fn next_block(&mut self) -> Result<Option<BlockInput>> {
        let frames = self.tracks.first().map(Track::len).unwrap_or(0);
        let start = self.next * self.block_frames;
        if start >= frames {
            return Ok(None);
        }
        let end = (start + self.block_frames).min(frames);
        let n = self.grid.frame_samples();
        let audio = self
            .mixture
            .slice(start * n, (end * n).min(self.mixture.len()))?;
        let tracks = self
            .tracks
            .iter()
            .map(|t| Track {
                track_id: t.track_id,
                directions: t.directions[start..end].to_vec(),
                active: t.active[start..end].to_vec(),
            })
            .collect();
        let block = BlockInput {
            index: self.next,
            start_frame: start,
            audio,
            tracks,
        };
        self.next += 1;
        Ok(Some(block))
    }
}

/// The active part of one track within a block.
#[derive(Debug, Clone, PartialEq)]
pub struct Portion {
    pub source_track_id: usize,
    /// Block-relative `[first active, last active + 1)`.
    pub first: usize,
    pub end: usize,
    pub active_frames: usize,
    /// One per frame of `[first, end)`, holding through inactive frames.
    pub directions: Vec<Direction>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockView {
    pub block_index: usize,
    pub start_frame: usize,
    pub end_frame: usize,
    /// Ordered by first active frame, then track id.
    pub portions: Vec<Portion>,
}

pub fn block_view(block: &BlockInput) -> BlockView {
    let frames = block.tracks.first().map(Track::len).unwrap_or(0);
    let mut portions: Vec<Portion> = block
        .tracks
        .iter()
        .filter_map(|t| {
            let first = t.active.iter().position(|a| *a)?;
            let end = t.active.iter().rposition(|a| *a)? + 1;
            let mut held = t.directions[first];
            let directions = (first..end)
                .map(|f| {
                    if t.active[f] {
                        held = t.directions[f];
                    }
                    held
                })
                .collect();
            Some(Portion {
                source_track_id: t.track_id,
                first,
                end,
                active_frames: t.active.iter().filter(|a| **a).count(),
                directions,
            })
        })
        .collect();
    portions.sort_by_key(|p| (p.first, p.source_track_id));
    BlockView {
        block_index: block.index,
        start_frame: block.start_frame,
        end_frame: block.start_frame + frames,
        portions,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PortionDecision {
    pub source_track_id: usize,
    pub first: usize,
    pub end: usize,
    /// `None` only when the block audio is too short to embed.
    pub label: Option<String>,
    pub similarity: Option<f64>,
    pub inherited: bool,
}

/// Everything decided for one block, in portion order.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDecisions {
    pub block_index: usize,
    pub start_frame: usize,
    pub end_frame: usize,
    pub portions: Vec<PortionDecision>,
}

fn embed_portion<E: SpeakerEmbedder + ?Sized>(
    extractor: &E,
    block: &BlockInput,
    grid: FrameGrid,
    p: &Portion,
    pattern: f64,
) -> Result<Embedding> {
    let n = grid.frame_samples();
    let total = block.audio.len();
    let (a, b) = extend_range(
        p.first * n,
        (p.end * n).min(total),
        grid.ms_to_samples(extractor.min_duration_ms()),
        total,
    );
    embed_window(
        extractor,
        &block.audio,
        grid,
        block.start_frame,
        a,
        b,
        &p.directions,
        p.first,
        pattern,
    )
}

/// Runs the streaming engine to exhaustion of `source`, passing each block's
/// decisions to `sink` as soon as they are made.
pub fn reassign_blockwise<S, E, F>(
    source: &mut S,
    pool: &EnrollmentPool,
    extractor: &E,
    cfg: &BlockwiseConfig,
    mut sink: F,
) -> Result<ReassignedTimeline>
where
    S: BlockSource + ?Sized,
    E: SpeakerEmbedder + ?Sized,
    F: FnMut(&BlockDecisions),
{
    let grid = source.grid();
    let min_ms = extractor.min_duration_ms();
    if grid.frames_to_ms(cfg.block_frames) < min_ms {
        return Err(Error::InvalidInput(format!(
            "block of {} frames ({} ms) is shorter than the extractor minimum {min_ms} ms",
            cfg.block_frames,
            grid.frames_to_ms(cfg.block_frames)
        )));
    }
    if pool.is_empty() {
        return Err(Error::InvalidInput("empty enrollment pool".into()));
    }
    let mut timeline = ReassignedTimeline::default();
    let mut previous: Vec<(usize, Decision)> = Vec::new();
    while let Some(block) = source.next_block()? {
        let view = block_view(&block);
        let block_len = view.end_frame - view.start_frame;
        let min_samples = grid.ms_to_samples(min_ms);

        let mut fresh: Vec<(usize, Embedding)> = Vec::new();
        for (i, p) in view.portions.iter().enumerate() {
            // A sparse portion reuses the track's last decision; without one
            // it is embedded after all rather than left unlabeled.
            let enough = p.active_frames as f64 >= cfg.min_active_fraction * block_len as f64;
            let has_previous = previous.iter().any(|(id, _)| *id == p.source_track_id);
            if (enough || !has_previous) && block.audio.len() >= min_samples {
                fresh.push((i, embed_portion(extractor, &block, grid, p, cfg.pattern)?));
            }
        }
        let decided: Vec<Decision> = if cfg.exclusive {
            let items: Vec<Embedding> = fresh.iter().map(|(_, e)| e.clone()).collect();
            pool.decide_exclusive(&items)?
        } else {
            fresh
                .iter()
                .map(|(_, e)| pool.decide(e))
                .collect::<Result<_>>()?
        };
        let mut by_portion: Vec<Option<Decision>> = vec![None; view.portions.len()];
        for ((i, _), d) in fresh.iter().zip(decided) {
            by_portion[*i] = Some(d);
        }

        let mut out = Vec::with_capacity(view.portions.len());
        for (p, d) in view.portions.iter().zip(by_portion) {
            let inherited = d.is_none();
            let d = d.or_else(|| {
                previous
                    .iter()
                    .find(|(id, _)| *id == p.source_track_id)
                    .map(|(_, d)| d.clone())
            });
            if let Some(d) = &d {
                match previous.iter_mut().find(|(id, _)| *id == p.source_track_id) {
                    Some(slot) => slot.1 = d.clone(),
                    None => previous.push((p.source_track_id, d.clone())),
                }
            }
            out.push(PortionDecision {
                source_track_id: p.source_track_id,
                first: p.first,
                end: p.end,
                similarity: d.as_ref().map(|d| d.similarity),
                label: d.map(|d| d.label),
                inherited,
            });
        }

        // Extend the timeline with this block.
        if timeline.tracks.is_empty() {
            timeline.tracks = block
                .tracks
                .iter()
                .map(|t| TimelineTrack::unlabeled(&Track::inactive(t.track_id, 0)))
                .collect();
        }
        for (tt, t) in timeline.tracks.iter_mut().zip(&block.tracks) {
            let base = tt.len();
            tt.directions.extend_from_slice(&t.directions);
            tt.active.extend_from_slice(&t.active);
            tt.labels.extend(std::iter::repeat_n(None, t.len()));
            tt.similarity.extend(std::iter::repeat_n(None, t.len()));
            for pd in out.iter().filter(|pd| pd.source_track_id == t.track_id) {
                if let Some(label) = &pd.label {
                    tt.assign(base + pd.first..base + pd.end, label, pd.similarity);
                }
            }
        }
        sink(&BlockDecisions {
            block_index: view.block_index,
            start_frame: view.start_frame,
            end_frame: view.end_frame,
            portions: out,
        });
    }
    Ok(timeline)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> FrameGrid {
        FrameGrid::default()
    }

    #[test]
    fn blocks_cover_scene() {
        let frames = 60;
        let audio = FoaSignal::silence(frames * 512, 16_000);
        let tracks = vec![Track::inactive(0, frames), Track::inactive(1, frames)];
        let mut src = SceneBlocks::new(&audio, &tracks, grid(), 25).unwrap();
        let mut sizes = Vec::new();
        while let Some(b) = src.next_block().unwrap() {
            assert_eq!(b.audio.len(), b.tracks[0].len() * 512);
            sizes.push((b.start_frame, b.tracks[0].len()));
        }
        assert_eq!(sizes, [(0, 25), (25, 25), (50, 10)]);
    }

    #[test]
    fn portions_in_first_active_order() {
        let d = Direction::default();
        let e = Direction::from_degrees(50.0, 0.0);
        let block = BlockInput {
            index: 0,
            start_frame: 0,
            audio: FoaSignal::silence(6 * 512, 16_000),
            tracks: vec![
                Track::new(0, vec![d; 6], vec![false, false, true, false, true, false]).unwrap(),
                Track::new(
                    1,
                    vec![d, e, d, d, d, d],
                    vec![false, true, false, true, false, false],
                )
                .unwrap(),
            ],
        };
        let v = block_view(&block);
        assert_eq!(v.portions[0].source_track_id, 1);
        assert_eq!((v.portions[0].first, v.portions[0].end), (1, 4));
        assert_eq!(v.portions[0].directions, vec![e, e, d]);
        assert_eq!(
            (
                v.portions[1].first,
                v.portions[1].end,
                v.portions[1].active_frames
            ),
            (2, 5, 2)
        );
    }

    #[test]
    fn block_below_extractor_minimum_rejected() {
        struct Never;
        impl SpeakerEmbedder for Never {
            fn embed(&self, _: &[f64], _: u32) -> Result<Embedding> {
                unreachable!()
            }
        }
        let audio = FoaSignal::silence(512 * 20, 16_000);
        let tracks = vec![Track::inactive(0, 20)];
        let mut pool = EnrollmentPool::default();
        pool.push("a", Embedding::normalize(vec![1.0]).unwrap())
            .unwrap();
        let mut src = SceneBlocks::new(&audio, &tracks, grid(), 7).unwrap();
        let cfg = BlockwiseConfig {
            block_frames: 7,
            ..Default::default()
        };
        assert!(reassign_blockwise(&mut src, &pool, &Never, &cfg, |_| {}).is_err());
    }
}
