//! Synthetic FOA scenes with intermittent speakers that relocate while silent.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::foa::{encode_plane_wave, Direction, FoaSignal, FrameGrid, DEFAULT_SAMPLE_RATE};
use crate::track::Track;
use crate::voice::{synth_voice, SpeakerSpec};

pub const DEFAULT_SNR_DB: f64 = 15.0;
pub const MIN_SEPARATION_DEG: f64 = 30.0;

/// Diffuse-field weight of X, Y and Z relative to W under SN3D (−4.77 dB).
pub const DIFFUSE_DIPOLE_GAIN: f64 = 0.577_350_269_189_625_8;

/// One activity interval of a speaker, spoken from a single position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start_s: f64,
    pub end_s: f64,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerPlan {
    pub voice: SpeakerSpec,
    pub segments: Vec<Segment>,
}

impl SpeakerPlan {
    pub fn intervals(&self) -> Vec<(f64, f64)> {
        self.segments.iter().map(|s| (s.start_s, s.end_s)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub duration_s: f64,
    pub sample_rate: u32,
    pub frame_ms: u32,
    /// `None` disables the noise field (infinite SNR).
    pub snr_db: Option<f64>,
    pub speakers: Vec<SpeakerPlan>,
    /// Voices absent from the scene that still populate the enrollment pool.
    #[serde(default)]
    pub distractors: Vec<SpeakerSpec>,
    pub seed: u64,
}

impl SceneSpec {
    pub fn grid(&self) -> FrameGrid {
        FrameGrid::new(self.frame_ms, self.sample_rate)
    }

    pub fn samples(&self) -> usize {
        (self.duration_s * self.sample_rate as f64).round() as usize
    }

    pub fn frames(&self) -> usize {
        self.grid().frame_count(self.samples())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s > 0.0) {
            return Err(Error::InvalidInput(
                "scene duration must be positive".into(),
            ));
        }
        if self.speakers.is_empty() || self.speakers.len() > 2 {
            return Err(Error::InvalidInput(format!(
                "scenes hold 1 or 2 speakers, got {}",
                self.speakers.len()
            )));
        }
        if let Some(snr) = self.snr_db {
            if !snr.is_finite() {
                return Err(Error::InvalidInput("use no snr_db to disable noise".into()));
            }
        }
        for (i, sp) in self.speakers.iter().enumerate() {
            sp.voice.validate()?;
            let mut prev_end = f64::NEG_INFINITY;
            for seg in &sp.segments {
                if !(seg.start_s < seg.end_s)
                    || seg.start_s < 0.0
                    || seg.end_s > self.duration_s + 1e-9
                {
                    return Err(Error::InvalidInput(format!(
                        "speaker {i}: bad segment [{}, {})",
                        seg.start_s, seg.end_s
                    )));
                }
                if seg.start_s < prev_end {
                    return Err(Error::InvalidInput(format!(
                        "speaker {i}: overlapping or unsorted activity at {} s",
                        seg.start_s
                    )));
                }
                prev_end = seg.end_s;
            }
        }
        Ok(())
    }
}

/// Per-frame reference tracks, one per speaker, in speaker order.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub grid: FrameGrid,
    pub tracks: Vec<Track>,
    pub speaker_ids: Vec<u32>,
}

impl GroundTruth {
    pub fn frames(&self) -> usize {
        self.tracks.first().map(Track::len).unwrap_or(0)
    }

    /// Frames where both of two speakers talk divided by frames where any talks.
    pub fn overlap_ratio(&self) -> f64 {
        let mut any = 0usize;
        let mut both = 0usize;
        for f in 0..self.frames() {
            let n = self.tracks.iter().filter(|t| t.active[f]).count();
            if n > 0 {
                any += 1;
            }
            if n > 1 {
                both += 1;
            }
        }
        if any == 0 {
            0.0
        } else {
            both as f64 / any as f64
        }
    }

    /// Longest run of frames where `speaker` talks and nobody else does.
    pub fn longest_solo_span(&self, speaker: usize) -> Option<(usize, usize)> {
        let solo = |f: usize| {
            self.tracks[speaker].active[f]
                && self
                    .tracks
                    .iter()
                    .enumerate()
                    .all(|(j, t)| j == speaker || !t.active[f])
        };
        let mut best: Option<(usize, usize)> = None;
        let mut f = 0;
        let frames = self.frames();
        while f < frames {
            if !solo(f) {
                f += 1;
                continue;
            }
            let s = f;
            while f < frames && solo(f) {
                f += 1;
            }
            if best.is_none_or(|(a, b)| f - s > b - a) {
                best = Some((s, f));
            }
        }
        best
    }

    pub fn label_of(&self, track_index: usize) -> String {
        speaker_label(self.speaker_ids[track_index])
    }
}

pub fn speaker_label(speaker_id: u32) -> String {
    format!("spk{speaker_id}")
}

/// Ground-truth tracks implied by a scene spec: a frame is active when its
/// center lies inside an activity segment.
pub fn ground_truth(spec: &SceneSpec) -> GroundTruth {
    let grid = spec.grid();
    let frames = spec.frames();
    let frame_s = grid.frame_len_ms as f64 / 1000.0;
    let tracks = spec
        .speakers
        .iter()
        .enumerate()
        .map(|(i, sp)| {
            let mut directions = Vec::with_capacity(frames);
            let mut active = Vec::with_capacity(frames);
            let mut held = sp.segments.first().map(|s| s.direction).unwrap_or_default();
            for f in 0..frames {
                let center = (f as f64 + 0.5) * frame_s;
                match sp
                    .segments
                    .iter()
                    .find(|s| s.start_s <= center && center < s.end_s)
                {
                    Some(seg) => {
                        held = seg.direction;
                        directions.push(seg.direction);
                        active.push(true);
                    }
                    None => {
                        directions.push(held);
                        active.push(false);
                    }
                }
            }
            Track {
                track_id: i,
                directions,
                active,
            }
        })
        .collect();
    GroundTruth {
        grid,
        tracks,
        speaker_ids: spec.speakers.iter().map(|s| s.voice.speaker_id).collect(),
    }
}

#[derive(Debug, Clone)]
pub struct RenderedScene {
    pub mixture: FoaSignal,
    /// Each speaker's spatialized signal before mixing.
    pub wet: Vec<FoaSignal>,
    pub truth: GroundTruth,
}

/// Child seed of `base` for the stream named by `salt`.
pub fn derive_seed(base: u64, salt: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = base
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(salt.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Spatializes one mono source segment by segment.
pub fn spatialize(mono: &[f64], segments: &[Segment], sample_rate: u32) -> Result<FoaSignal> {
    let n = mono.len();
    let sr = sample_rate as f64;
    let mut channels: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; n]);
    for seg in segments {
        let a = ((seg.start_s * sr).round() as usize).min(n);
        let b = ((seg.end_s * sr).round() as usize).min(n);
        let enc = encode_plane_wave(&mono[a..b], &seg.direction, sample_rate)?;
        for (dst, src) in channels.iter_mut().zip(enc.channels()) {
            dst[a..b].copy_from_slice(src);
        }
    }
    FoaSignal::new(channels, sample_rate)
}

/// Isotropic noise: independent white channels with diffuse-field SN3D weights.
pub fn diffuse_noise(len: usize, sample_rate: u32, seed: u64) -> FoaSignal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let gains = [
        1.0,
        DIFFUSE_DIPOLE_GAIN,
        DIFFUSE_DIPOLE_GAIN,
        DIFFUSE_DIPOLE_GAIN,
    ];
    let channels = std::array::from_fn(|c| {
        (0..len)
            .map(|_| gains[c] * normal.sample(&mut rng))
            .collect()
    });
    FoaSignal::new(channels, sample_rate).expect("finite noise")
}

/// Sample mask of frames where any speaker is active.
fn active_sample_mask(truth: &GroundTruth, len: usize) -> Vec<bool> {
    let n = truth.grid.frame_samples();
    let mut mask = vec![false; len];
    for f in 0..truth.frames() {
        if truth.tracks.iter().any(|t| t.active[f]) {
            mask[f * n..(f + 1) * n].iter_mut().for_each(|m| *m = true);
        }
    }
    mask
}

/// Speech-to-noise ratio on the W channel over frames with any active speaker.
pub fn measured_snr_db(wet: &[FoaSignal], noise: &FoaSignal, truth: &GroundTruth) -> f64 {
    let mask = active_sample_mask(truth, noise.len());
    let count = mask.iter().filter(|m| **m).count().max(1) as f64;
    let power = |s: &[f64]| -> f64 {
        s.iter()
            .zip(&mask)
            .filter(|(_, m)| **m)
            .map(|(v, _)| v * v)
            .sum::<f64>()
            / count
    };
    let speech: f64 = wet.iter().map(|w| power(w.w())).sum();
    10.0 * (speech / power(noise.w())).log10()
}

pub fn render_scene(spec: &SceneSpec) -> Result<RenderedScene> {
    spec.validate()?;
    let truth = ground_truth(spec);
    let n = spec.samples();
    let wet = spec
        .speakers
        .iter()
        .enumerate()
        .map(|(i, sp)| {
            let mono = synth_voice(
                &sp.voice,
                &sp.intervals(),
                spec.duration_s,
                spec.sample_rate,
                derive_seed(spec.seed, 1 + i as u64),
            )?;
            spatialize(&mono[..n.min(mono.len())], &sp.segments, spec.sample_rate)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut mixture = crate::foa::mix(&wet)?;
    if let Some(snr_db) = spec.snr_db {
        let noise = diffuse_noise(n, spec.sample_rate, derive_seed(spec.seed, 0xA015E));
        let mask = active_sample_mask(&truth, n);
        let count = mask.iter().filter(|m| **m).count();
        if count > 0 {
            let power = |s: &[f64]| -> f64 {
                s.iter()
                    .zip(&mask)
                    .filter(|(_, m)| **m)
                    .map(|(v, _)| v * v)
                    .sum::<f64>()
                    / count as f64
            };
            let speech: f64 = wet.iter().map(|w| power(w.w())).sum();
            let noise_power = power(noise.w());
            let gain = (speech / (noise_power * 10f64.powf(snr_db / 10.0))).sqrt();
            mixture = crate::foa::mix(&[mixture, noise.scaled(gain)])?;
        }
    }
    Ok(RenderedScene {
        mixture,
        wet,
        truth,
    })
}

/// Renders a single voice alone at `direction` for enrollment of speakers that
/// are not part of a scene.
pub fn render_solo(
    voice: &SpeakerSpec,
    direction: Direction,
    duration_s: f64,
    snr_db: Option<f64>,
    seed: u64,
) -> Result<RenderedScene> {
    let spec = SceneSpec {
        duration_s,
        sample_rate: DEFAULT_SAMPLE_RATE,
        frame_ms: crate::foa::DEFAULT_FRAME_MS,
        snr_db,
        speakers: vec![SpeakerPlan {
            voice: voice.clone(),
            segments: vec![Segment {
                start_s: 0.0,
                end_s: duration_s,
                direction,
            }],
        }],
        distractors: Vec::new(),
        seed,
    };
    render_scene(&spec)
}

/// Turn-taking statistics of the scene generator, in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActivityParams {
    pub solo_s: (f64, f64),
    pub overlap_s: (f64, f64),
    pub gap_s: (f64, f64),
    pub lead_in_s: (f64, f64),
}

impl Default for ActivityParams {
    fn default() -> Self {
        Self {
            solo_s: (1.0, 3.0),
            overlap_s: (0.5, 1.5),
            gap_s: (0.4, 1.2),
            lead_in_s: (0.2, 0.8),
        }
    }
}

/// Draws random scene specs for evaluation and training batches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSampler {
    pub n_speakers: usize,
    pub duration_s: f64,
    pub overlap_target: f64,
    pub snr_db: Option<f64>,
    /// Enrollment pool size; voices beyond the scene's speakers are distractors.
    pub pool_size: usize,
    /// Voice bank ids `[start, end)` to draw speakers from.
    pub voice_ids: (u32, u32),
    pub activity: ActivityParams,
    /// Every speaker gets an uninterrupted solo stretch at least this long.
    pub min_solo_s: f64,
}

impl Default for SceneSampler {
    fn default() -> Self {
        Self {
            n_speakers: 2,
            duration_s: 20.0,
            overlap_target: 0.3,
            snr_db: Some(DEFAULT_SNR_DB),
            pool_size: 2,
            voice_ids: (0, 1000),
            activity: ActivityParams::default(),
            min_solo_s: 0.0,
        }
    }
}

const MAX_LAYOUT_ATTEMPTS: usize = 100;

fn uniform_direction<R: Rng>(rng: &mut R) -> Direction {
    let z: f64 = rng.random_range(-1.0..1.0);
    let az: f64 = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    Direction::new(az, z.asin())
}

impl SceneSampler {
    pub fn sample(&self, seed: u64) -> Result<SceneSpec> {
        if !(0.0..1.0).contains(&self.overlap_target) {
            return Err(Error::InvalidInput(format!(
                "overlap target {} outside [0, 1)",
                self.overlap_target
            )));
        }
        if self.n_speakers == 1 && self.overlap_target != 0.0 {
            return Err(Error::Infeasible(
                "a single speaker cannot overlap; overlap target must be 0".into(),
            ));
        }
        if !(1..=2).contains(&self.n_speakers) {
            return Err(Error::InvalidInput(format!(
                "n_speakers must be 1 or 2, got {}",
                self.n_speakers
            )));
        }
        let (id_lo, id_hi) = self.voice_ids;
        let wanted = self.pool_size.max(self.n_speakers);
        if id_hi.saturating_sub(id_lo) < wanted as u32 {
            return Err(Error::InvalidInput(
                "voice id range too small for pool".into(),
            ));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ids = BTreeSet::new();
        let mut order = Vec::new();
        while order.len() < wanted {
            let id = rng.random_range(id_lo..id_hi);
            if ids.insert(id) {
                order.push(id);
            }
        }
        let voices: Vec<SpeakerSpec> = order.iter().map(|&id| SpeakerSpec::from_id(id)).collect();

        let grid = FrameGrid::default();
        for _ in 0..MAX_LAYOUT_ATTEMPTS {
            let spec = self.layout(&voices, &mut rng, seed);
            spec.validate()?;
            let gt = ground_truth(&spec);
            let solo_ok = self.min_solo_s <= 0.0
                || (0..self.n_speakers).all(|s| {
                    gt.longest_solo_span(s)
                        .is_some_and(|(a, b)| grid.frames_to_ms(b - a) >= self.min_solo_s * 1000.0)
                });
            if solo_ok {
                return Ok(spec);
            }
        }
        Err(Error::Infeasible(format!(
            "no layout with a {} s solo stretch per speaker in {MAX_LAYOUT_ATTEMPTS} attempts",
            self.min_solo_s
        )))
    }

    fn layout<R: Rng>(&self, voices: &[SpeakerSpec], rng: &mut R, seed: u64) -> SceneSpec {
        let intervals = self.sample_activity(rng);
        let grid = FrameGrid::default();
        let frame_s = grid.frame_len_ms as f64 / 1000.0;
        let snap = |t: f64| (t / frame_s).round() * frame_s;

        // Place segments in time order so each one can be kept away from the
        // other speaker's simultaneous positions.
        let mut all: Vec<(usize, f64, f64)> = intervals
            .iter()
            .enumerate()
            .flat_map(|(spk, iv)| iv.iter().map(move |&(a, b)| (spk, a, b)))
            .map(|(spk, a, b)| (spk, snap(a), snap(b)))
            .filter(|(_, a, b)| b > a)
            .collect();
        all.sort_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)));
        let mut plans: Vec<Vec<Segment>> = vec![Vec::new(); self.n_speakers];
        for (spk, a, b) in all {
            let mut direction = uniform_direction(rng);
            for _ in 0..1000 {
                let clash = plans.iter().enumerate().any(|(other, segs)| {
                    other != spk
                        && segs.iter().any(|s| {
                            s.start_s <= b
                                && a <= s.end_s
                                && s.direction.angle_to(&direction).to_degrees()
                                    < MIN_SEPARATION_DEG
                        })
                });
                if !clash {
                    break;
                }
                direction = uniform_direction(rng);
            }
            plans[spk].push(Segment {
                start_s: a,
                end_s: b,
                direction,
            });
        }

        let speakers = voices[..self.n_speakers]
            .iter()
            .cloned()
            .zip(plans)
            .map(|(voice, segments)| SpeakerPlan { voice, segments })
            .collect();
        SceneSpec {
            duration_s: self.duration_s,
            sample_rate: grid.sample_rate,
            frame_ms: grid.frame_len_ms,
            snr_db: self.snr_db,
            speakers,
            distractors: voices[self.n_speakers..].to_vec(),
            seed: derive_seed(seed, 0x5CE4E),
        }
    }

    /// Activity intervals per speaker, in seconds.
    ///
    /// Two-speaker scenes are a sequence of episodes: the leader talks alone,
    /// the follower joins (overlap), the leader stops, the follower finishes,
    /// then both are silent. Overlap durations are rescaled so that overlap
    /// time over any-speaker time equals the target.
    fn sample_activity<R: Rng>(&self, rng: &mut R) -> Vec<Vec<(f64, f64)>> {
        let p = &self.activity;
        let draw = |rng: &mut R, r: (f64, f64)| {
            if r.1 > r.0 {
                rng.random_range(r.0..r.1)
            } else {
                r.0
            }
        };
        let lead = draw(rng, p.lead_in_s);
        let r = self.overlap_target;
        let mean = |r: (f64, f64)| 0.5 * (r.0 + r.1);
        let episode_mean = if self.n_speakers == 1 {
            mean(p.solo_s) + mean(p.gap_s)
        } else {
            let solo = 2.0 * mean(p.solo_s);
            solo + solo * r / (1.0 - r) + mean(p.gap_s)
        };
        let k = ((self.duration_s - lead) / episode_mean).round().max(1.0) as usize;

        struct Episode {
            a: f64,
            b: f64,
            c: f64,
            g: f64,
        }
        let mut eps: Vec<Episode> = (0..k)
            .map(|_| Episode {
                a: draw(rng, p.solo_s),
                b: draw(rng, p.overlap_s),
                c: if self.n_speakers == 2 {
                    draw(rng, p.solo_s)
                } else {
                    0.0
                },
                g: draw(rng, p.gap_s),
            })
            .collect();
        if self.n_speakers == 1 || r == 0.0 {
            eps.iter_mut().for_each(|e| e.b = 0.0);
        } else {
            let solo: f64 = eps.iter().map(|e| e.a + e.c).sum();
            let raw: f64 = eps.iter().map(|e| e.b).sum();
            let scale = solo * r / (1.0 - r) / raw;
            eps.iter_mut().for_each(|e| e.b *= scale);
        }
        // Stretch the episode sequence to fill the scene, leaving a short tail.
        let total: f64 = eps.iter().map(|e| e.a + e.b + e.c + e.g).sum();
        let stretch = (self.duration_s - lead) / total;

        let mut out = vec![Vec::new(); self.n_speakers];
        let mut leader = rng.random_range(0..self.n_speakers);
        let mut t = lead;
        for e in &eps {
            let (a, b, c, g) = (e.a * stretch, e.b * stretch, e.c * stretch, e.g * stretch);
            if self.n_speakers == 1 {
                out[0].push((t, t + a));
            } else {
                let follower = 1 - leader;
                out[leader].push((t, t + a + b));
                out[follower].push((t + a, t + a + b + c));
                leader = follower;
            }
            t += a + b + c + g;
        }
        out
    }
}
