//! Identity-sensitive evaluation: per-frame matching against ground truth,
//! association accuracy, label-change counting and bootstrap statistics.

pub mod hungarian;
pub mod report;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reassign::ReassignedTimeline;
use crate::scene::GroundTruth;

pub use hungarian::hungarian;
pub use report::{read_report, write_report, ReportRow, Summary};

/// Cost given to pairs beyond the threshold; larger than any real total.
const FORBIDDEN: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchConfig {
    pub angle_threshold_deg: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            angle_threshold_deg: 10.0,
        }
    }
}

/// One frame's outcome, in ground-truth speaker indices and predicted labels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameMatch {
    pub matched: Vec<(usize, String)>,
    pub missed: Vec<usize>,
    pub false_positives: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matches {
    pub gt_labels: Vec<String>,
    pub frames: Vec<FrameMatch>,
}

/// A predicted point: track index and label.
struct Pred<'a> {
    track: usize,
    label: &'a str,
}

/// Optimal one-to-one matching per frame between active ground-truth points
/// and labeled predicted points closer than the threshold. Active predicted
/// frames without a label are not predictions.
pub fn match_frames(
    gt: &GroundTruth,
    timeline: &ReassignedTimeline,
    cfg: &MatchConfig,
) -> Result<Matches> {
    if !(cfg.angle_threshold_deg > 0.0) {
        return Err(Error::InvalidInput(
            "angle threshold must be positive".into(),
        ));
    }
    if timeline.frames() != gt.frames() && !timeline.tracks.is_empty() {
        return Err(Error::Mismatch(format!(
            "timeline has {} frames, ground truth {}",
            timeline.frames(),
            gt.frames()
        )));
    }
    let limit = cfg.angle_threshold_deg.to_radians();
    let mut frames = Vec::with_capacity(gt.frames());
    for f in 0..gt.frames() {
        let gts: Vec<usize> = (0..gt.tracks.len())
            .filter(|&s| gt.tracks[s].active[f])
            .collect();
        let preds: Vec<Pred<'_>> = timeline
            .tracks
            .iter()
            .enumerate()
            .filter_map(|(k, t)| match (&t.labels[f], t.active[f]) {
                (Some(l), true) => Some(Pred { track: k, label: l }),
                _ => None,
            })
            .collect();
        let mut cost = Vec::with_capacity(gts.len() * preds.len());
        for &s in &gts {
            for p in &preds {
                let a =
                    gt.tracks[s].directions[f].angle_to(&timeline.tracks[p.track].directions[f]);
                cost.push(if a < limit { a } else { FORBIDDEN });
            }
        }
        let assign = hungarian(&cost, gts.len(), preds.len());
        let mut fm = FrameMatch::default();
        let mut used = vec![false; preds.len()];
        for (r, &s) in gts.iter().enumerate() {
            match assign[r] {
                Some(c) if cost[r * preds.len() + c] < FORBIDDEN => {
                    used[c] = true;
                    fm.matched.push((s, preds[c].label.to_string()));
                }
                _ => fm.missed.push(s),
            }
        }
        for (c, p) in preds.iter().enumerate() {
            if !used[c] {
                fm.false_positives.push(p.label.to_string());
            }
        }
        frames.push(fm);
    }
    Ok(Matches {
        gt_labels: (0..gt.tracks.len()).map(|s| gt.label_of(s)).collect(),
        frames,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairStats {
    pub gt_id: String,
    pub pred_label: String,
    pub tpa: usize,
    pub fna: usize,
    pub fpa: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssAReport {
    pub assa: f64,
    pub tp_count: usize,
    pub pairs: Vec<PairStats>,
}

/// Association accuracy: mean over true positives c = (g, p) of
/// TPA / (TPA + FNA + FPA), zero when there are no true positives.
pub fn assa(m: &Matches) -> AssAReport {
    let mut tpa: BTreeMap<(usize, &str), usize> = BTreeMap::new();
    let mut gt_points = vec![0usize; m.gt_labels.len()];
    let mut pred_points: BTreeMap<&str, usize> = BTreeMap::new();
    for fm in &m.frames {
        for (s, l) in &fm.matched {
            *tpa.entry((*s, l.as_str())).or_default() += 1;
            gt_points[*s] += 1;
            *pred_points.entry(l.as_str()).or_default() += 1;
        }
        for s in &fm.missed {
            gt_points[*s] += 1;
        }
        for l in &fm.false_positives {
            *pred_points.entry(l.as_str()).or_default() += 1;
        }
    }
    let tp_count: usize = tpa.values().sum();
    let mut weighted = 0.0;
    let pairs = tpa
        .iter()
        .map(|(&(s, l), &t)| {
            let fna = gt_points[s] - t;
            let fpa = pred_points[l] - t;
            weighted += t as f64 * t as f64 / (t + fna + fpa) as f64;
            PairStats {
                gt_id: m.gt_labels[s].clone(),
                pred_label: l.to_string(),
                tpa: t,
                fna,
                fpa,
            }
        })
        .collect();
    AssAReport {
        assa: if tp_count == 0 {
            0.0
        } else {
            weighted / tp_count as f64
        },
        tp_count,
        pairs,
    }
}

/// Number of matched frames at which a speaker's assigned label differs from
/// its label at the previous matched frame, summed over speakers.
pub fn count_swaps(m: &Matches) -> usize {
    let mut last: Vec<Option<&str>> = vec![None; m.gt_labels.len()];
    let mut swaps = 0;
    for fm in &m.frames {
        for (s, l) in &fm.matched {
            if last[*s].is_some_and(|prev| prev != l) {
                swaps += 1;
            }
            last[*s] = Some(l);
        }
    }
    swaps
}

/// Matches and scores one timeline.
pub fn evaluate(
    gt: &GroundTruth,
    timeline: &ReassignedTimeline,
    cfg: &MatchConfig,
) -> Result<(AssAReport, usize)> {
    let m = match_frames(gt, timeline, cfg)?;
    Ok((assa(&m), count_swaps(&m)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bootstrap {
    pub mean: f64,
    pub std: f64,
}

pub const MIN_BOOTSTRAP_SCENES: usize = 5;

/// Repeatedly averages a random `fraction` of the scores (drawn without
/// replacement); returns mean and population standard deviation of those
/// averages.
pub fn bootstrap_assa(
    scores: &[f64],
    fraction: f64,
    iterations: usize,
    seed: u64,
) -> Result<Bootstrap> {
    if scores.len() < MIN_BOOTSTRAP_SCENES {
        return Err(Error::InvalidInput(format!(
            "bootstrap needs at least {MIN_BOOTSTRAP_SCENES} scenes, got {}",
            scores.len()
        )));
    }
    if !(fraction > 0.0 && fraction <= 1.0) || iterations == 0 {
        return Err(Error::InvalidInput(format!(
            "bootstrap fraction {fraction} / iterations {iterations}"
        )));
    }
    let k = ((scores.len() as f64 * fraction).round() as usize).clamp(1, scores.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means: Vec<f64> = (0..iterations)
        .map(|_| {
            rand::seq::index::sample(&mut rng, scores.len(), k)
                .iter()
                .map(|i| scores[i])
                .sum::<f64>()
                / k as f64
        })
        .collect();
    let mean = means.iter().sum::<f64>() / iterations as f64;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / iterations as f64;
    Ok(Bootstrap {
        mean,
        std: var.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::foa::{Direction, FrameGrid};
    use crate::reassign::ReassignedTimeline;
    use crate::track::Track;

    fn gt_two(frames: usize, a: Direction, b: Direction) -> GroundTruth {
        GroundTruth {
            grid: FrameGrid::default(),
            tracks: vec![
                Track::new(0, vec![a; frames], vec![true; frames]).unwrap(),
                Track::new(1, vec![b; frames], vec![true; frames]).unwrap(),
            ],
            speaker_ids: vec![1, 2],
        }
    }

    fn labeled(gt: &GroundTruth, f: impl Fn(usize, usize) -> &'static str) -> ReassignedTimeline {
        let mut tl = ReassignedTimeline::unlabeled(&gt.tracks);
        for (k, t) in tl.tracks.iter_mut().enumerate() {
            for fr in 0..gt.frames() {
                t.assign(fr..fr + 1, f(k, fr), None);
            }
        }
        tl
    }

    #[test]
    fn perfect_and_empty() {
        let gt = gt_two(
            10,
            Direction::from_degrees(0.0, 0.0),
            Direction::from_degrees(90.0, 0.0),
        );
        let tl = labeled(&gt, |k, _| if k == 0 { "spk1" } else { "spk2" });
        let (r, swaps) = evaluate(&gt, &tl, &MatchConfig::default()).unwrap();
        assert_eq!((r.assa, r.tp_count, swaps), (1.0, 20, 0));
        let none = ReassignedTimeline::unlabeled(&gt.tracks);
        assert_eq!(
            evaluate(&gt, &none, &MatchConfig::default())
                .unwrap()
                .0
                .assa,
            0.0
        );
    }

    #[test]
    fn half_swap_is_one_third() {
        let gt = gt_two(
            100,
            Direction::from_degrees(0.0, 0.0),
            Direction::from_degrees(90.0, 0.0),
        );
        let tl = labeled(&gt, |k, f| if (k == 0) == (f < 50) { "x" } else { "y" });
        let m = match_frames(&gt, &tl, &MatchConfig::default()).unwrap();
        let r = assa(&m);
        assert!((r.assa - 1.0 / 3.0).abs() < 1e-12);
        assert!(r
            .pairs
            .iter()
            .all(|p| p.tpa == 50 && p.fna == 50 && p.fpa == 50));
        assert_eq!(count_swaps(&m), 2);
    }

    #[test]
    fn far_prediction_unmatched() {
        let d = Direction::from_degrees(0.0, 0.0);
        let gt = GroundTruth {
            grid: FrameGrid::default(),
            tracks: vec![Track::new(0, vec![d], vec![true]).unwrap()],
            speaker_ids: vec![1],
        };
        let mut tl =
            ReassignedTimeline::unlabeled(
                &[Track::new(0, vec![d.antipode()], vec![true]).unwrap()],
            );
        tl.tracks[0].assign(0..1, "spk1", None);
        let m = match_frames(&gt, &tl, &MatchConfig::default()).unwrap();
        assert_eq!(m.frames[0].missed, vec![0]);
        assert_eq!(m.frames[0].false_positives, vec!["spk1".to_string()]);
    }

    #[test]
    fn nearest_pairing_beats_cross_pairing() {
        let g0 = Direction::from_degrees(0.0, 0.0);
        let g1 = Direction::from_degrees(40.0, 0.0);
        let gt = gt_two(1, g0, g1);
        // Track 0 sits near g1, track 1 near g0.
        let tracks = vec![
            Track::new(0, vec![Direction::from_degrees(38.0, 0.0)], vec![true]).unwrap(),
            Track::new(1, vec![Direction::from_degrees(2.0, 0.0)], vec![true]).unwrap(),
        ];
        let mut tl = ReassignedTimeline::unlabeled(&tracks);
        tl.tracks[0].assign(0..1, "a", None);
        tl.tracks[1].assign(0..1, "b", None);
        let m = match_frames(
            &gt,
            &tl,
            &MatchConfig {
                angle_threshold_deg: 50.0,
            },
        )
        .unwrap();
        assert_eq!(
            m.frames[0].matched,
            vec![(0, "b".to_string()), (1, "a".to_string())]
        );
    }

    #[test]
    fn bootstrap_examples() {
        let same = vec![0.7; 20];
        let b = bootstrap_assa(&same, 0.8, 100, 1).unwrap();
        assert!((b.mean - 0.7).abs() < 1e-12 && b.std < 1e-12);
        let scores: Vec<f64> = (0..100).map(|i| (i % 2) as f64).collect();
        assert_eq!(
            bootstrap_assa(&scores, 0.8, 100, 5).unwrap(),
            bootstrap_assa(&scores, 0.8, 100, 5).unwrap()
        );
        // Hypergeometric: Var = p(1-p)/k · (N-k)/(N-1).
        let expect = (0.25 / 80.0 * 20.0 / 99.0f64).sqrt();
        let got = bootstrap_assa(&scores, 0.8, 100, 9).unwrap().std;
        assert!((got / expect - 1.0).abs() < 0.3, "{got} vs {expect}");
        assert!(bootstrap_assa(&[1.0; 4], 0.8, 100, 0).is_err());
    }
}
