//! Identity reassignment of tracker output against an enrollment pool.
//!
//! Two engines: per-fragment decisions over whole activity periods, and a
//! streaming engine that decides block by block.

pub mod blockwise;
pub mod enroll;
pub mod fragment;
pub mod oracle;
pub mod pool;
pub mod timeline;

use crate::embed::{Embedding, SpeakerEmbedder, SteeredRequest};
use crate::error::Result;
use crate::foa::{Direction, FoaSignal, FrameGrid};

pub use blockwise::{
    block_view, reassign_blockwise, BlockDecisions, BlockInput, BlockSource, BlockView,
    BlockwiseConfig, Portion, PortionDecision, SceneBlocks,
};
pub use enroll::{build_enrollments, enroll_solo};
pub use fragment::{
    fragment_tracks, reassign_fragments, Context, Fragment, FragmentConfig, StartPolicy,
};
pub use oracle::OracleExtractor;
pub use pool::{Decision, EnrollmentPool, PoolEntry};
pub use timeline::{branch_label, ReassignedTimeline, TimelineTrack};

pub const DEFAULT_GAP_TOLERANCE: usize = 8;

/// Grows `[a, b)` to at least `min_len` inside `[0, total)`, first to the
/// right, then to the left.
pub(crate) fn extend_range(a: usize, b: usize, min_len: usize, total: usize) -> (usize, usize) {
    if b - a >= min_len {
        return (a, b);
    }
    let b = (a + min_len).min(total);
    let a = b.saturating_sub(min_len).min(a);
    (a, b)
}

/// As [`extend_range`], growing to the left first.
pub(crate) fn extend_range_left(
    a: usize,
    b: usize,
    min_len: usize,
    total: usize,
) -> (usize, usize) {
    if b - a >= min_len {
        return (a, b);
    }
    let a = b.saturating_sub(min_len).min(a);
    let b = (a + min_len).min(total).max(b);
    (a, b)
}

/// Directions for a window of frames, holding the nearest defined direction.
/// `known` covers frames `[first, first + known.len())`.
pub(crate) fn window_directions(
    known: &[Direction],
    first: usize,
    window: std::ops::Range<usize>,
) -> Vec<Direction> {
    let last = known.len() - 1;
    window
        .map(|f| known[f.saturating_sub(first).min(last)])
        .collect()
}

/// Embeds samples `[a, b)` of `mixture` (a signal whose frame 0 is absolute
/// frame `origin_frame`), steering along `known` directions defined from frame
/// `first` onward.
#[allow(clippy::too_many_arguments)]
pub(crate) fn embed_window<E: SpeakerEmbedder + ?Sized>(
    extractor: &E,
    mixture: &FoaSignal,
    grid: FrameGrid,
    origin_frame: usize,
    a: usize,
    b: usize,
    known: &[Direction],
    first: usize,
    pattern: f64,
) -> Result<Embedding> {
    let n = grid.frame_samples();
    let f0 = a / n;
    let f1 = b.div_ceil(n);
    let directions = window_directions(known, first, f0..f1);
    let active = vec![true; directions.len()];
    let req = SteeredRequest {
        mixture,
        grid,
        origin_frame,
        start_frame: f0,
        directions: &directions,
        active: &active,
        crop: Some((a - f0 * n, b - f0 * n)),
        pattern,
    };
    extractor.embed_steered(&req)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_extension() {
        assert_eq!(extend_range(10, 30, 8, 100), (10, 30));
        assert_eq!(extend_range(10, 12, 8, 100), (10, 18));
        assert_eq!(extend_range(95, 98, 8, 100), (92, 100));
        assert_eq!(extend_range(0, 2, 8, 5), (0, 5));
        assert_eq!(extend_range_left(10, 12, 8, 100), (4, 12));
        assert_eq!(extend_range_left(2, 4, 8, 100), (0, 8));
        assert_eq!(extend_range_left(1, 3, 8, 5), (0, 5));
    }

    #[test]
    fn held_window_directions() {
        let d: Vec<Direction> = (0..3)
            .map(|i| Direction::from_degrees(i as f64 * 10.0, 0.0))
            .collect();
        let w = window_directions(&d, 5, 3..10);
        assert_eq!(w[0], d[0]);
        assert_eq!(w[2], d[0]);
        assert_eq!(w[3], d[1]);
        assert_eq!(w[6], d[2]);
    }
}
