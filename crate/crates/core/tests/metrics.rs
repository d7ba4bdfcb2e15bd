use foa_reid::foa::{Direction, FrameGrid};
use foa_reid::metrics::hungarian::hungarian;
use foa_reid::metrics::{assa, count_swaps, match_frames, MatchConfig};
use foa_reid::reassign::ReassignedTimeline;
use foa_reid::scene::GroundTruth;
use foa_reid::track::Track;
use proptest::prelude::*;

const LABELS: [&str; 3] = ["p", "q", "r"];

/// Ground truth with two speakers at fixed directions and a timeline whose
/// tracks follow them with per-frame labels drawn from `LABELS`.
fn case(
    frames: usize,
    active: &[bool],
    labels: &[usize],
    offsets: &[f64],
) -> (GroundTruth, ReassignedTimeline) {
    let dirs = [
        Direction::from_degrees(-40.0, 0.0),
        Direction::from_degrees(50.0, 10.0),
    ];
    let gt_tracks: Vec<Track> = (0..2)
        .map(|k| {
            let act = (0..frames)
                .map(|f| active[(2 * f + k) % active.len()])
                .collect();
            Track::new(k, vec![dirs[k]; frames], act).unwrap()
        })
        .collect();
    let pred: Vec<Track> = (0..2)
        .map(|k| {
            let d = (0..frames)
                .map(|f| {
                    let o = offsets[(2 * f + k) % offsets.len()];
                    Direction::from_degrees(
                        dirs[k].azimuth().to_degrees() + o,
                        dirs[k].elevation().to_degrees(),
                    )
                })
                .collect();
            Track::new(k, d, gt_tracks[k].active.clone()).unwrap()
        })
        .collect();
    let mut tl = ReassignedTimeline::unlabeled(&pred);
    for (k, t) in tl.tracks.iter_mut().enumerate() {
        for f in 0..frames {
            t.assign(f..f + 1, LABELS[labels[(2 * f + k) % labels.len()]], None);
        }
    }
    let gt = GroundTruth {
        grid: FrameGrid::default(),
        tracks: gt_tracks,
        speaker_ids: vec![1, 2],
    };
    (gt, tl)
}

fn relabel(tl: &ReassignedTimeline, perm: &[usize]) -> ReassignedTimeline {
    let mut out = tl.clone();
    for t in &mut out.tracks {
        for l in t.labels.iter_mut().flatten() {
            let i = LABELS.iter().position(|x| x == l).unwrap();
            *l = LABELS[perm[i]].to_string();
        }
    }
    out
}

fn greedy_total(cost: &[f64], rows: usize, cols: usize) -> f64 {
    let mut pairs: Vec<(f64, usize, usize)> = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (cost[r * cols + c], r, c)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (mut ru, mut cu) = (vec![false; rows], vec![false; cols]);
    let mut total = 0.0;
    for (v, r, c) in pairs {
        if !ru[r] && !cu[c] {
            ru[r] = true;
            cu[c] = true;
            total += v;
        }
    }
    total
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn assa_bounded_and_label_permutation_invariant(
        frames in 1usize..120,
        active in prop::collection::vec(prop::bool::weighted(0.8), 1..40),
        labels in prop::collection::vec(0usize..3, 1..40),
        offsets in prop::collection::vec(-15.0f64..15.0, 1..20),
        perm in Just(vec![0usize, 1, 2]).prop_shuffle(),
    ) {
        let (gt, tl) = case(frames, &active, &labels, &offsets);
        let cfg = MatchConfig::default();
        let m = match_frames(&gt, &tl, &cfg).unwrap();
        let r = assa(&m);
        prop_assert!((0.0..=1.0).contains(&r.assa));
        let m2 = match_frames(&gt, &relabel(&tl, &perm), &cfg).unwrap();
        let r2 = assa(&m2);
        prop_assert!((r.assa - r2.assa).abs() < 1e-12);
        prop_assert_eq!(r.tp_count, r2.tp_count);
        prop_assert_eq!(count_swaps(&m), count_swaps(&m2));
    }

    #[test]
    fn hungarian_never_worse_than_greedy(
        rows in 1usize..6,
        cols in 1usize..6,
        values in prop::collection::vec(0.0f64..100.0, 36),
    ) {
        let cost = &values[..rows * cols];
        let assign = hungarian(cost, rows, cols);
        let total: f64 = assign
            .iter()
            .enumerate()
            .filter_map(|(r, c)| c.map(|c| cost[r * cols + c]))
            .sum();
        prop_assert_eq!(assign.iter().flatten().count(), rows.min(cols));
        prop_assert!(total <= greedy_total(cost, rows, cols) + 1e-9);
    }
}

#[test]
fn consistent_wrong_identity_still_scores_one() {
    let (gt, tl) = case(50, &[true], &[2, 0], &[0.0]);
    let m = match_frames(&gt, &tl, &MatchConfig::default()).unwrap();
    assert_eq!(assa(&m).assa, 1.0);
    assert_eq!(count_swaps(&m), 0);
}
