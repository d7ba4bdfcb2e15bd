//! Steered first-order beamformer following a frame-wise trajectory.
//!
//! Output at sample t with steering unit vector u:
//! `b(t) = p·W(t) + (1 − p)·(uₓX(t) + u_yY(t) + u_zZ(t))`, with p the pattern
//! (0.5 is a cardioid). The steering vector is cross-faded linearly over the
//! first 8 ms of each frame whose direction differs from the previous one.

use crate::error::{Error, Result};
use crate::foa::{Direction, FoaSignal, FrameGrid};

pub const DEFAULT_PATTERN: f64 = 0.5;
pub const CROSSFADE_MS: u32 = 8;

/// One steering direction per frame plus an activity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringTrajectory {
    directions: Vec<Direction>,
    active: Vec<bool>,
    grid: FrameGrid,
}

impl SteeringTrajectory {
    pub fn new(directions: Vec<Direction>, active: Vec<bool>, grid: FrameGrid) -> Result<Self> {
        if directions.len() != active.len() {
            return Err(Error::Mismatch(format!(
                "{} directions but {} activity flags",
                directions.len(),
                active.len()
            )));
        }
        Ok(Self {
            directions,
            active,
            grid,
        })
    }

    /// A trajectory that points at `d` on every frame.
    pub fn fixed(d: Direction, frames: usize, grid: FrameGrid) -> Self {
        Self {
            directions: vec![d; frames],
            active: vec![true; frames],
            grid,
        }
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn grid(&self) -> FrameGrid {
        self.grid
    }

    pub fn directions(&self) -> &[Direction] {
        &self.directions
    }

    pub fn active(&self) -> &[bool] {
        &self.active
    }

    /// Steering vectors actually used per frame: inactive frames hold the most
    /// recent active direction; frames before the first active one use it.
    pub fn effective_vectors(&self) -> Result<Vec<[f64; 3]>> {
        let first = self
            .active
            .iter()
            .position(|&a| a)
            .ok_or_else(|| Error::InvalidInput("trajectory has no active frame".into()))?;
        let mut current = self.directions[first].unit_vector();
        Ok(self
            .directions
            .iter()
            .zip(&self.active)
            .map(|(d, &a)| {
                if a {
                    current = d.unit_vector();
                }
                current
            })
            .collect())
    }
}

struct Steering {
    vectors: Vec<[f64; 3]>,
    frame_samples: usize,
    ramp: usize,
}

impl Steering {
    fn new(traj: &SteeringTrajectory) -> Result<Self> {
        let grid = traj.grid;
        let ramp = (grid.sample_rate as usize * CROSSFADE_MS as usize) / 1000;
        Ok(Self {
            vectors: traj.effective_vectors()?,
            frame_samples: grid.frame_samples(),
            ramp: ramp.max(1),
        })
    }

    fn at(&self, t: usize) -> [f64; 3] {
        let frame = (t / self.frame_samples).min(self.vectors.len() - 1);
        let offset = t - frame * self.frame_samples;
        let cur = self.vectors[frame];
        if frame == 0 || offset >= self.ramp {
            return cur;
        }
        let prev = self.vectors[frame - 1];
        if prev == cur {
            return cur;
        }
        let alpha = (offset + 1) as f64 / self.ramp as f64;
        std::array::from_fn(|i| prev[i] + alpha * (cur[i] - prev[i]))
    }
}

fn check_pattern(pattern: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&pattern) {
        return Err(Error::InvalidInput(format!(
            "beam pattern {pattern} outside [0, 1]"
        )));
    }
    Ok(())
}

fn check_lengths(y: &FoaSignal, traj: &SteeringTrajectory) -> Result<()> {
    let frames = traj.grid.frame_count(y.len());
    if traj.is_empty() {
        return Err(Error::InvalidInput("empty steering trajectory".into()));
    }
    if frames != traj.len() {
        return Err(Error::Mismatch(format!(
            "trajectory has {} frames, signal has {frames}",
            traj.len()
        )));
    }
    if traj.grid.sample_rate != y.sample_rate() {
        return Err(Error::Mismatch(format!(
            "trajectory grid at {} Hz, signal at {} Hz",
            traj.grid.sample_rate,
            y.sample_rate()
        )));
    }
    Ok(())
}

fn render(y: &FoaSignal, steering: &Steering, pattern: f64, start: usize, end: usize) -> Vec<f64> {
    let [w, x, yy, z] = y.channels();
    let dipole = 1.0 - pattern;
    (start..end)
        .map(|t| {
            let u = steering.at(t);
            pattern * w[t] + dipole * (u[0] * x[t] + u[1] * yy[t] + u[2] * z[t])
        })
        .collect()
}

/// Beamforms the whole signal along `traj`.
pub fn beamform(y: &FoaSignal, traj: &SteeringTrajectory, pattern: f64) -> Result<Vec<f64>> {
    check_pattern(pattern)?;
    check_lengths(y, traj)?;
    let steering = Steering::new(traj)?;
    Ok(render(y, &steering, pattern, 0, y.len()))
}

/// Beamformed samples of the window `[start_ms, start_ms + dur_ms)`. Identical
/// to slicing the output of [`beamform`].
pub fn beamform_crop(
    y: &FoaSignal,
    traj: &SteeringTrajectory,
    pattern: f64,
    start_ms: f64,
    dur_ms: f64,
) -> Result<Vec<f64>> {
    check_pattern(pattern)?;
    check_lengths(y, traj)?;
    if start_ms < 0.0 || dur_ms <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "crop window start {start_ms} ms, duration {dur_ms} ms"
        )));
    }
    let start = traj.grid.ms_to_samples(start_ms);
    let end = start + traj.grid.ms_to_samples(dur_ms);
    beamform_samples(y, traj, pattern, start, end)
}

/// Beamformed samples `[start, end)` along a trajectory covering the whole signal.
pub fn beamform_samples(
    y: &FoaSignal,
    traj: &SteeringTrajectory,
    pattern: f64,
    start: usize,
    end: usize,
) -> Result<Vec<f64>> {
    check_pattern(pattern)?;
    check_lengths(y, traj)?;
    if start > end || end > y.len() {
        return Err(Error::InvalidInput(format!(
            "crop [{start}, {end}) outside signal of {} samples",
            y.len()
        )));
    }
    let steering = Steering::new(traj)?;
    Ok(render(y, &steering, pattern, start, end))
}

/// Beamforms frames `[start_frame, start_frame + directions.len())` of `y` along
/// a trajectory local to that window (no cross-fade into the first frame).
pub fn beamform_frames(
    y: &FoaSignal,
    grid: FrameGrid,
    start_frame: usize,
    directions: &[Direction],
    active: &[bool],
    pattern: f64,
) -> Result<Vec<f64>> {
    check_pattern(pattern)?;
    let traj = SteeringTrajectory::new(directions.to_vec(), active.to_vec(), grid)?;
    if traj.is_empty() {
        return Err(Error::InvalidInput("empty steering trajectory".into()));
    }
    let n = grid.frame_samples();
    let start = start_frame * n;
    let end = (start_frame + traj.len()) * n;
    if end > y.len() {
        return Err(Error::InvalidInput(format!(
            "frames [{start_frame}, {}) outside signal of {} frames",
            start_frame + traj.len(),
            grid.frame_count(y.len())
        )));
    }
    let steering = Steering::new(&traj)?;
    let [w, x, yy, z] = y.channels();
    let dipole = 1.0 - pattern;
    Ok((start..end)
        .map(|t| {
            let u = steering.at(t - start);
            pattern * w[t] + dipole * (u[0] * x[t] + u[1] * yy[t] + u[2] * z[t])
        })
        .collect())
}

/// Amplitude gain of the steered pattern for a plane wave arriving `angle`
/// radians away from the look direction.
pub fn pattern_gain(pattern: f64, angle: f64) -> f64 {
    pattern + (1.0 - pattern) * angle.cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::foa::{encode_plane_wave, mix};
    use proptest::prelude::*;

    fn tone(n: usize, f: f64) -> Vec<f64> {
        (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / 16_000.0).sin())
            .collect()
    }

    fn grid() -> FrameGrid {
        FrameGrid::default()
    }

    #[test]
    fn exact_recovery_on_target() {
        let s = tone(512 * 10, 440.0);
        let d = Direction::from_degrees(63.0, 21.0);
        let y = encode_plane_wave(&s, &d, 16_000).unwrap();
        let out = beamform(&y, &SteeringTrajectory::fixed(d, 10, grid()), 0.5).unwrap();
        for (a, b) in out.iter().zip(&s) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn cardioid_null_at_antipode() {
        let s = tone(512 * 10, 300.0);
        let d = Direction::from_degrees(-120.0, 35.0);
        let y = encode_plane_wave(&s, &d, 16_000).unwrap();
        let out = beamform(
            &y,
            &SteeringTrajectory::fixed(d.antipode(), 10, grid()),
            0.5,
        )
        .unwrap();
        assert!(out.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn interferer_at_ninety_degrees_is_halved() {
        let s1 = tone(512 * 4, 200.0);
        let s2 = tone(512 * 4, 730.0);
        let d1 = Direction::from_degrees(0.0, 0.0);
        let d2 = Direction::from_degrees(90.0, 0.0);
        let y = mix(&[
            encode_plane_wave(&s1, &d1, 16_000).unwrap(),
            encode_plane_wave(&s2, &d2, 16_000).unwrap(),
        ])
        .unwrap();
        let out = beamform(&y, &SteeringTrajectory::fixed(d1, 4, grid()), 0.5).unwrap();
        for i in 0..out.len() {
            assert!((out[i] - (s1[i] + 0.5 * s2[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn crop_examples() {
        let s = tone(16_000, 250.0);
        let d = Direction::from_degrees(10.0, 0.0);
        let y = encode_plane_wave(&s, &d, 16_000).unwrap();
        let frames = grid().frame_count(y.len());
        let traj = SteeringTrajectory::fixed(d, frames, grid());
        let full = beamform(&y, &traj, 0.5).unwrap();
        let whole = beamform_crop(&y, &traj, 0.5, 0.0, 1000.0).unwrap();
        assert_eq!(whole, full);
        let c = beamform_crop(&y, &traj, 0.5, 100.0, 250.0).unwrap();
        assert_eq!(c.len(), 4000);
        assert_eq!(&c[..], &full[1600..5600]);
        assert!(beamform_crop(&y, &traj, 0.5, 900.0, 250.0).is_err());

        let null = SteeringTrajectory::fixed(d.antipode(), frames, grid());
        let c = beamform_crop(&y, &null, 0.5, 300.0, 250.0).unwrap();
        let energy: f64 = c.iter().map(|v| v * v).sum();
        assert!(energy < 1e-20);
    }

    #[test]
    fn crop_matches_full_output_with_moving_trajectory() {
        let s = tone(512 * 12, 500.0);
        let y = encode_plane_wave(&s, &Direction::from_degrees(30.0, 0.0), 16_000).unwrap();
        let dirs: Vec<_> = (0..12)
            .map(|f| Direction::from_degrees(f as f64 * 15.0, 0.0))
            .collect();
        let mut active = vec![true; 12];
        active[5] = false;
        let traj = SteeringTrajectory::new(dirs, active, grid()).unwrap();
        let full = beamform(&y, &traj, 0.5).unwrap();
        let part = beamform_samples(&y, &traj, 0.5, 1000, 4000).unwrap();
        assert_eq!(&part[..], &full[1000..4000]);
    }

    #[test]
    fn inactive_frames_hold_last_direction() {
        let d0 = Direction::from_degrees(0.0, 0.0);
        let d1 = Direction::from_degrees(170.0, 0.0);
        let traj = SteeringTrajectory::new(
            vec![d1, d0, d1, d1],
            vec![false, true, false, false],
            grid(),
        )
        .unwrap();
        let v = traj.effective_vectors().unwrap();
        assert!(v.iter().all(|u| *u == d0.unit_vector()));
    }

    #[test]
    fn errors() {
        let y = FoaSignal::silence(512 * 4, 16_000);
        let none_active =
            SteeringTrajectory::new(vec![Direction::default(); 4], vec![false; 4], grid()).unwrap();
        assert!(beamform(&y, &none_active, 0.5).is_err());
        let wrong_len = SteeringTrajectory::fixed(Direction::default(), 3, grid());
        assert!(matches!(
            beamform(&y, &wrong_len, 0.5),
            Err(Error::Mismatch(_))
        ));
        let empty = SteeringTrajectory::fixed(Direction::default(), 0, grid());
        assert!(beamform(&FoaSignal::silence(0, 16_000), &empty, 0.5).is_err());
    }

    #[test]
    fn crossfade_is_continuous() {
        let n = 512 * 4;
        let s = vec![1.0; n];
        let y = encode_plane_wave(&s, &Direction::from_degrees(0.0, 0.0), 16_000).unwrap();
        let dirs = vec![
            Direction::from_degrees(0.0, 0.0),
            Direction::from_degrees(0.0, 0.0),
            Direction::from_degrees(180.0, 0.0),
            Direction::from_degrees(180.0, 0.0),
        ];
        let traj = SteeringTrajectory::new(dirs, vec![true; 4], grid()).unwrap();
        let out = beamform(&y, &traj, 0.5).unwrap();
        let max_step = out
            .windows(2)
            .map(|w| (w[1] - w[0]).abs())
            .fold(0.0, f64::max);
        assert!(max_step <= 1.0 / 128.0 + 1e-12, "step {max_step}");
        assert!(out[1024 + 128..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn suppression_monotone_in_separation() {
        let mut prev = f64::INFINITY;
        for deg in 0..=180 {
            let g = pattern_gain(0.5, (deg as f64).to_radians()).abs();
            assert!(g <= prev + 1e-15);
            prev = g;
        }
    }

    proptest! {
        #[test]
        fn linear_in_input(a in -2.0f64..2.0, b in -2.0f64..2.0, seed in 0u64..1000) {
            let n = 512 * 3;
            let s: Vec<f64> = (0..n).map(|i| ((i as u64 * 7919 + seed) % 97) as f64 / 97.0 - 0.5).collect();
            let t: Vec<f64> = (0..n).map(|i| ((i as u64 * 104_729 + seed) % 89) as f64 / 89.0 - 0.5).collect();
            let y1 = encode_plane_wave(&s, &Direction::from_degrees(20.0, 5.0), 16_000).unwrap();
            let y2 = encode_plane_wave(&t, &Direction::from_degrees(-75.0, 40.0), 16_000).unwrap();
            let dirs = vec![Direction::from_degrees(0.0, 0.0), Direction::from_degrees(60.0, 0.0), Direction::from_degrees(-90.0, 10.0)];
            let traj = SteeringTrajectory::new(dirs, vec![true; 3], grid()).unwrap();
            let lhs = beamform(&mix(&[y1.scaled(a), y2.scaled(b)]).unwrap(), &traj, 0.5).unwrap();
            let r1 = beamform(&y1, &traj, 0.5).unwrap();
            let r2 = beamform(&y2, &traj, 0.5).unwrap();
            for i in 0..n {
                prop_assert!((lhs[i] - (a * r1[i] + b * r2[i])).abs() < 1e-12);
            }
        }
    }
}
