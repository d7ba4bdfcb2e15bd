//! First-order ambisonic signals, plane-wave encoding and the frame grid.
//!
//! Channels are held in memory as (W, X, Y, Z) with SN3D normalization. The
//! on-disk channel order (ACN) is handled by [`crate::wav`].

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;
pub const DEFAULT_FRAME_MS: u32 = 32;

/// A direction of arrival on the unit sphere.
///
/// Azimuth lies in (-π, π] and is measured counter-clockwise from the +X axis;
/// elevation lies in [-π/2, π/2]. Both are normalized on construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawDirection")]
pub struct Direction {
    azimuth: f64,
    elevation: f64,
}

#[derive(Deserialize)]
struct RawDirection {
    azimuth: f64,
    elevation: f64,
}

impl From<RawDirection> for Direction {
    fn from(raw: RawDirection) -> Self {
        Direction::new(raw.azimuth, raw.elevation)
    }
}

fn wrap_azimuth(az: f64) -> f64 {
    PI - (PI - az).rem_euclid(2.0 * PI)
}

impl Direction {
    /// Builds a direction from radians. Elevations past the poles are folded
    /// back over the pole (adding π to the azimuth).
    ///
    /// Panics on non-finite input; use [`Direction::try_new`] for untrusted data.
    pub fn new(azimuth: f64, elevation: f64) -> Self {
        Self::try_new(azimuth, elevation).expect("direction angles must be finite")
    }

    pub fn try_new(azimuth: f64, elevation: f64) -> Result<Self> {
        if !azimuth.is_finite() || !elevation.is_finite() {
            return Err(Error::InvalidInput(format!(
                "non-finite direction ({azimuth}, {elevation})"
            )));
        }
        let mut az = azimuth;
        let mut el = wrap_azimuth(elevation);
        if el > FRAC_PI_2 {
            el = PI - el;
            az += PI;
        } else if el < -FRAC_PI_2 {
            el = -PI - el;
            az += PI;
        }
        Ok(Self {
            azimuth: wrap_azimuth(az),
            elevation: el,
        })
    }

    pub fn from_degrees(azimuth_deg: f64, elevation_deg: f64) -> Self {
        Self::new(azimuth_deg.to_radians(), elevation_deg.to_radians())
    }

    /// Direction of a (not necessarily normalized) Cartesian vector.
    pub fn from_vector(v: [f64; 3]) -> Self {
        let horizontal = v[0].hypot(v[1]);
        Self::new(v[1].atan2(v[0]), v[2].atan2(horizontal))
    }

    pub fn azimuth(&self) -> f64 {
        self.azimuth
    }

    pub fn elevation(&self) -> f64 {
        self.elevation
    }

    pub fn azimuth_deg(&self) -> f64 {
        self.azimuth.to_degrees()
    }

    pub fn elevation_deg(&self) -> f64 {
        self.elevation.to_degrees()
    }

    pub fn unit_vector(&self) -> [f64; 3] {
        let (sa, ca) = self.azimuth.sin_cos();
        let (se, ce) = self.elevation.sin_cos();
        [ca * ce, sa * ce, se]
    }

    pub fn antipode(&self) -> Self {
        let [x, y, z] = self.unit_vector();
        Self::from_vector([-x, -y, -z])
    }

    /// Great-circle angle to `other`, in radians.
    pub fn angle_to(&self, other: &Direction) -> f64 {
        let a = self.unit_vector();
        let b = other.unit_vector();
        let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
        let cross = [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ];
        let cross_norm = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
        cross_norm.atan2(dot)
    }
}

impl Default for Direction {
    fn default() -> Self {
        Self::new(0.0, 0.0)
    }
}

/// Four-channel first-order ambisonic buffer in (W, X, Y, Z) order.
#[derive(Debug, Clone, PartialEq)]
pub struct FoaSignal {
    channels: [Vec<f64>; 4],
    sample_rate: u32,
}

impl FoaSignal {
    pub fn new(channels: [Vec<f64>; 4], sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidInput("sample rate must be positive".into()));
        }
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::Mismatch("FOA channels differ in length".into()));
        }
        if channels.iter().flatten().any(|s| !s.is_finite()) {
            return Err(Error::InvalidInput("non-finite FOA sample".into()));
        }
        Ok(Self {
            channels,
            sample_rate,
        })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Self {
        Self {
            channels: std::array::from_fn(|_| vec![0.0; len]),
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn channels(&self) -> &[Vec<f64>; 4] {
        &self.channels
    }

    pub fn into_channels(self) -> [Vec<f64>; 4] {
        self.channels
    }

    pub fn w(&self) -> &[f64] {
        &self.channels[0]
    }

    pub fn x(&self) -> &[f64] {
        &self.channels[1]
    }

    pub fn y(&self) -> &[f64] {
        &self.channels[2]
    }

    pub fn z(&self) -> &[f64] {
        &self.channels[3]
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate as f64
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            channels: std::array::from_fn(|c| self.channels[c].iter().map(|s| s * gain).collect()),
            sample_rate: self.sample_rate,
        }
    }

    /// Copy of samples `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start > end || end > self.len() {
            return Err(Error::InvalidInput(format!(
                "sample window [{start}, {end}) outside signal of length {}",
                self.len()
            )));
        }
        Ok(Self {
            channels: std::array::from_fn(|c| self.channels[c][start..end].to_vec()),
            sample_rate: self.sample_rate,
        })
    }

    /// Rounds every sample through `f32`, matching what a WAV round trip stores.
    pub fn quantized_f32(&self) -> Self {
        Self {
            channels: std::array::from_fn(|c| {
                self.channels[c].iter().map(|&s| s as f32 as f64).collect()
            }),
            sample_rate: self.sample_rate,
        }
    }
}

/// Non-overlapping analysis frames shared by every frame-indexed structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameGrid {
    pub frame_len_ms: u32,
    pub sample_rate: u32,
}

impl Default for FrameGrid {
    fn default() -> Self {
        Self {
            frame_len_ms: DEFAULT_FRAME_MS,
            sample_rate: DEFAULT_SAMPLE_RATE,
        }
    }
}

impl FrameGrid {
    pub fn new(frame_len_ms: u32, sample_rate: u32) -> Self {
        Self {
            frame_len_ms,
            sample_rate,
        }
    }

    pub fn frame_samples(&self) -> usize {
        (self.sample_rate as usize * self.frame_len_ms as usize) / 1000
    }

    pub fn frame_count(&self, samples: usize) -> usize {
        samples / self.frame_samples()
    }

    pub fn frame_start(&self, frame: usize) -> usize {
        frame * self.frame_samples()
    }

    /// Frame index containing time `t_s` (seconds), rounded to the nearest boundary.
    pub fn frame_at(&self, t_s: f64) -> usize {
        let frame_s = self.frame_len_ms as f64 / 1000.0;
        (t_s / frame_s).round().max(0.0) as usize
    }

    pub fn ms_to_samples(&self, ms: f64) -> usize {
        (ms * self.sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn frames_to_ms(&self, frames: usize) -> f64 {
        frames as f64 * self.frame_len_ms as f64
    }
}

/// SN3D gains of a plane wave from `d`, in (W, X, Y, Z) order.
pub fn plane_wave_gains(d: &Direction) -> [f64; 4] {
    let [x, y, z] = d.unit_vector();
    [1.0, x, y, z]
}

/// Encodes a mono source arriving from `d` as an SN3D plane wave.
pub fn encode_plane_wave(mono: &[f64], d: &Direction, sample_rate: u32) -> Result<FoaSignal> {
    if mono.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidInput("non-finite mono sample".into()));
    }
    let gains = plane_wave_gains(d);
    let channels = std::array::from_fn(|c| mono.iter().map(|s| s * gains[c]).collect());
    FoaSignal::new(channels, sample_rate)
}

/// Sample-wise sum of equally sized signals.
pub fn mix(signals: &[FoaSignal]) -> Result<FoaSignal> {
    let first = signals
        .first()
        .ok_or_else(|| Error::InvalidInput("cannot mix an empty list".into()))?;
    let mut out = first.clone();
    for s in &signals[1..] {
        if s.sample_rate != first.sample_rate {
            return Err(Error::Mismatch(format!(
                "sample rate {} vs {}",
                s.sample_rate, first.sample_rate
            )));
        }
        if s.len() != first.len() {
            return Err(Error::Mismatch(format!(
                "length {} vs {}",
                s.len(),
                first.len()
            )));
        }
        for (acc, ch) in out.channels.iter_mut().zip(&s.channels) {
            for (a, b) in acc.iter_mut().zip(ch) {
                *a += b;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(n: usize) -> Vec<f64> {
        (0..n).map(|i| (i as f64 * 0.37).sin()).collect()
    }

    #[test]
    fn encode_on_axis_lateral_zenith() {
        let s = ramp(64);
        let front = encode_plane_wave(&s, &Direction::new(0.0, 0.0), 16_000).unwrap();
        assert_eq!(front.w(), &s[..]);
        assert_eq!(front.x(), &s[..]);
        assert!(front.y().iter().all(|v| *v == 0.0));
        assert!(front.z().iter().all(|v| *v == 0.0));

        let side = encode_plane_wave(&s, &Direction::new(FRAC_PI_2, 0.0), 16_000).unwrap();
        for (i, v) in s.iter().enumerate() {
            assert!(side.x()[i].abs() < 1e-15);
            assert!((side.y()[i] - v).abs() < 1e-15);
        }

        let up = encode_plane_wave(&s, &Direction::new(1.234, FRAC_PI_2), 16_000).unwrap();
        for (i, v) in s.iter().enumerate() {
            assert_eq!(up.w()[i], *v);
            assert!(up.x()[i].abs() < 1e-15 && up.y()[i].abs() < 1e-15);
            assert!((up.z()[i] - v).abs() < 1e-15);
        }
    }

    #[test]
    fn encode_rejects_non_finite() {
        let err = encode_plane_wave(&[0.0, f64::NAN], &Direction::default(), 16_000);
        assert!(err.is_err());
    }

    #[test]
    fn mix_examples() {
        let a = encode_plane_wave(&ramp(32), &Direction::from_degrees(30.0, 10.0), 16_000).unwrap();
        let silent = FoaSignal::silence(32, 16_000);
        assert_eq!(mix(&[a.clone(), silent]).unwrap(), a);
        let doubled = mix(&[a.clone(), a.clone()]).unwrap();
        assert_eq!(doubled, a.scaled(2.0));
        let short = FoaSignal::silence(31, 16_000);
        assert!(matches!(mix(&[a.clone(), short]), Err(Error::Mismatch(_))));
        let other_rate = FoaSignal::silence(32, 8_000);
        assert!(matches!(mix(&[a, other_rate]), Err(Error::Mismatch(_))));
    }

    #[test]
    fn direction_normalization() {
        let d = Direction::new(3.0 * PI, 0.0);
        assert!((d.azimuth() - PI).abs() < 1e-12);
        let d = Direction::new(-PI, 0.0);
        assert_eq!(d.azimuth(), PI);
        let d = Direction::new(0.0, 2.0);
        assert!(d.elevation() <= FRAC_PI_2);
        assert!((d.elevation() - (PI - 2.0)).abs() < 1e-12);
        assert!((d.azimuth() - PI).abs() < 1e-12);
        assert!(Direction::try_new(f64::INFINITY, 0.0).is_err());
    }

    #[test]
    fn angle_between_directions() {
        let a = Direction::from_degrees(0.0, 0.0);
        let b = Direction::from_degrees(90.0, 0.0);
        assert!((a.angle_to(&b).to_degrees() - 90.0).abs() < 1e-9);
        assert!((a.angle_to(&a.antipode()).to_degrees() - 180.0).abs() < 1e-9);
    }

    #[test]
    fn frame_grid_counts() {
        let g = FrameGrid::default();
        assert_eq!(g.frame_samples(), 512);
        assert_eq!(g.frame_count(512 * 10 + 511), 10);
        assert_eq!(g.frames_to_ms(25), 800.0);
    }

    proptest! {
        #[test]
        fn direction_ranges_and_unit_norm(az in -20.0f64..20.0, el in -20.0f64..20.0) {
            let d = Direction::new(az, el);
            prop_assert!(d.azimuth() > -PI && d.azimuth() <= PI);
            prop_assert!(d.elevation() >= -FRAC_PI_2 && d.elevation() <= FRAC_PI_2);
            let v = d.unit_vector();
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            prop_assert!((n - 1.0).abs() < 1e-9);
            // Folding must not move the point on the sphere.
            let raw = [el.cos() * az.cos(), el.cos() * az.sin(), el.sin()];
            for i in 0..3 {
                prop_assert!((raw[i] - v[i]).abs() < 1e-9);
            }
        }

        #[test]
        fn plane_wave_energy_identity(az in -4.0f64..4.0, el in -2.0f64..2.0,
                                      s in proptest::collection::vec(-1.0f64..1.0, 1..64)) {
            let foa = encode_plane_wave(&s, &Direction::new(az, el), 16_000).unwrap();
            for i in 0..s.len() {
                let w2 = foa.w()[i] * foa.w()[i];
                let xyz = foa.x()[i].powi(2) + foa.y()[i].powi(2) + foa.z()[i].powi(2);
                prop_assert!((xyz - w2).abs() <= 1e-9 * w2.max(f64::MIN_POSITIVE));
            }
        }

        #[test]
        fn encoding_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0,
                              s in proptest::collection::vec(-1.0f64..1.0, 16),
                              t in proptest::collection::vec(-1.0f64..1.0, 16)) {
            let d = Direction::from_degrees(47.0, -12.0);
            let combo: Vec<f64> = s.iter().zip(&t).map(|(x, y)| a * x + b * y).collect();
            let lhs = encode_plane_wave(&combo, &d, 16_000).unwrap();
            let rhs = mix(&[
                encode_plane_wave(&s, &d, 16_000).unwrap().scaled(a),
                encode_plane_wave(&t, &d, 16_000).unwrap().scaled(b),
            ]).unwrap();
            for c in 0..4 {
                for i in 0..16 {
                    prop_assert!((lhs.channels()[c][i] - rhs.channels()[c][i]).abs() < 1e-12);
                }
            }
        }
    }
}
