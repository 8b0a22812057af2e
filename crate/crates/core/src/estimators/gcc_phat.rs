//! Time-of-arrival estimation by generalized cross-correlation with phase
//! transform weighting.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::forward_model::ChannelVector;

/// Spectral bins weaker than this fraction of the strongest are zeroed
/// instead of whitened.
const PHAT_FLOOR: f64 = 1e-12;

/// Arrival time, in seconds, of `reference` within `channel`.
///
/// Returns `None` for an all-zero channel or reference.
pub fn gcc_phat_toa(channel: &[f64], reference: &[f64], fs: f64) -> Option<f64> {
    if channel.iter().all(|&v| v == 0.0) || reference.iter().all(|&v| v == 0.0) {
        return None;
    }
    let len = (channel.len() + reference.len()).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(len);
    let ifft = planner.plan_fft_inverse(len);

    let pad = |x: &[f64]| {
        let mut buf = vec![Complex64::default(); len];
        for (b, &v) in buf.iter_mut().zip(x) {
            b.re = v;
        }
        buf
    };
    let mut x = pad(channel);
    let mut r = pad(reference);
    fft.process(&mut x);
    fft.process(&mut r);

    let mut cross: Vec<Complex64> = x.iter().zip(&r).map(|(a, b)| a * b.conj()).collect();
    let peak = cross.iter().map(|c| c.norm()).fold(0.0, f64::max);
    for c in &mut cross {
        let mag = c.norm();
        *c = if mag > PHAT_FLOOR * peak { *c / mag } else { Complex64::default() };
    }
    ifft.process(&mut cross);

    // lags from -(reference.len() - 1) to channel.len() - 1
    let min_lag = -(reference.len() as isize - 1);
    let max_lag = channel.len() as isize - 1;
    let at = |lag: isize| cross[lag.rem_euclid(len as isize) as usize].re;
    let best = (min_lag..=max_lag).max_by(|&a, &b| at(a).total_cmp(&at(b)).then(b.cmp(&a)))?;

    let (a, b, c) = (at(best - 1), at(best), at(best + 1));
    let denom = a - 2.0 * b + c;
    let offset = if denom < 0.0 { (0.5 * (a - c) / denom).clamp(-0.5, 0.5) } else { 0.0 };
    Some((best as f64 + offset) / fs)
}

/// Per-microphone arrival times.
pub fn gcc_phat_toas(h: &ChannelVector, reference: &[f64], fs: f64) -> Vec<Option<f64>> {
    (0..h.mics()).map(|m| gcc_phat_toa(h.channel(m), reference, fs)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::directivity::{synth_directivity, SynthPattern};

    const FS: f64 = 48_000.0;

    fn pulse() -> Vec<f64> {
        synth_directivity(&SynthPattern::default()).unwrap().row(0).to_vec()
    }

    fn shifted(x: &[f64], by: usize, gain: f64, len: usize) -> Vec<f64> {
        let mut out = vec![0.0; len];
        for (i, &v) in x.iter().enumerate() {
            out[i + by] += gain * v;
        }
        out
    }

    #[test]
    fn integer_delay() {
        let p = pulse();
        let ch = shifted(&p, 17, 1.0, 128);
        let toa = gcc_phat_toa(&ch, &p, FS).unwrap();
        assert!((toa * FS - 17.0).abs() < 0.1);
    }

    #[test]
    fn amplitude_invariant() {
        let p = pulse();
        let base = gcc_phat_toa(&shifted(&p, 23, 1.0, 128), &p, FS).unwrap();
        for g in [0.01, 0.3, 5.0] {
            let toa = gcc_phat_toa(&shifted(&p, 23, g, 128), &p, FS).unwrap();
            assert!((toa - base).abs() < 1e-12);
        }
    }

    #[test]
    fn overlapping_echoes_yield_one_biased_toa() {
        let p = pulse();
        let mut ch = shifted(&p, 30, 1.0, 128);
        for (a, b) in ch.iter_mut().zip(shifted(&p, 32, 0.8, 128)) {
            *a += b;
        }
        let toa = gcc_phat_toa(&ch, &p, FS).unwrap() * FS;
        assert!((29.0..=33.0).contains(&toa), "toa {toa}");
    }

    #[test]
    fn zero_channel_has_no_toa() {
        assert!(gcc_phat_toa(&[0.0; 64], &pulse(), FS).is_none());
        assert!(gcc_phat_toa(&[1.0; 64], &[0.0; 4], FS).is_none());
    }
}
