//! Energy voice-activity detection on the 32 ms frame grid.

use crate::foa::FrameGrid;

/// Margin above the noise-floor estimate, in dB.
pub const VAD_MARGIN_DB: f64 = 6.0;
/// Percentile of frame energies taken as the noise floor.
pub const NOISE_FLOOR_PERCENTILE: f64 = 0.2;

fn frame_energy_db(frame: &[f64]) -> f64 {
    let p = frame.iter().map(|v| v * v).sum::<f64>() / frame.len() as f64;
    10.0 * p.max(1e-20).log10()
}

/// A frame is active when its energy exceeds the 20th-percentile frame energy
/// by more than 6 dB.
pub fn vad_mask(mono: &[f64], sample_rate: u32) -> Vec<bool> {
    let grid = FrameGrid::new(crate::foa::DEFAULT_FRAME_MS, sample_rate);
    let n = grid.frame_samples();
    let energies: Vec<f64> = mono.chunks_exact(n).map(frame_energy_db).collect();
    if energies.is_empty() {
        return Vec::new();
    }
    let mut sorted = energies.clone();
    sorted.sort_by(f64::total_cmp);
    let floor = sorted[((sorted.len() - 1) as f64 * NOISE_FLOOR_PERCENTILE).floor() as usize];
    energies
        .iter()
        .map(|e| *e > floor + VAD_MARGIN_DB)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::voice::{synth_voice, SpeakerSpec};

    #[test]
    fn silence_is_inactive() {
        assert!(vad_mask(&vec![0.0; 16_000], 16_000).iter().all(|a| !a));
    }

    #[test]
    fn constant_tone_is_inactive() {
        // Every 32 ms frame holds exactly 8 periods of a 250 Hz tone.
        let s: Vec<f64> = (0..16_384)
            .map(|i| (2.0 * std::f64::consts::PI * 250.0 * i as f64 / 16_000.0).sin())
            .collect();
        let m = vad_mask(&s, 16_000);
        assert_eq!(m.len(), 32);
        assert!(m.iter().all(|a| !a));
    }

    #[test]
    fn agrees_with_known_voice_intervals() {
        let intervals = [(0.512, 2.048), (3.008, 4.992), (6.016, 7.488)];
        let mut agree = 0;
        let mut total = 0;
        for id in 0..5 {
            let s = synth_voice(
                &SpeakerSpec::from_id(id),
                &intervals,
                8.0,
                16_000,
                id as u64,
            )
            .unwrap();
            let m = vad_mask(&s, 16_000);
            for (f, a) in m.iter().enumerate() {
                let c = (f as f64 + 0.5) * 0.032;
                let truth = intervals.iter().any(|(s, e)| *s <= c && c < *e);
                agree += usize::from(*a == truth);
                total += 1;
            }
        }
        assert!(agree as f64 / total as f64 >= 0.9, "{agree}/{total}");
    }
}
