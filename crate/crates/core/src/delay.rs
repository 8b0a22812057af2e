//! Integer and band-limited fractional delays.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Length of the windowed-sinc interpolation kernel.
pub const SINC_TAPS: usize = 32;

/// How non-integer delays are realized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayMode {
    /// Hann-windowed sinc interpolation over [`SINC_TAPS`] taps.
    #[default]
    BandLimited,
    /// Round every delay to the nearest sample.
    GridRounded,
}

fn sinc(t: f64) -> f64 {
    if t == 0.0 {
        1.0
    } else {
        (PI * t).sin() / (PI * t)
    }
}

/// Kernel weights for offsets `k = -(SINC_TAPS/2 - 1) ..= SINC_TAPS/2`
/// around `floor(delay)`, for fractional part `frac` in `(0, 1)`.
fn sinc_kernel(frac: f64) -> [f64; SINC_TAPS] {
    let half = (SINC_TAPS / 2) as f64;
    let mut w = [0.0; SINC_TAPS];
    for (j, wj) in w.iter_mut().enumerate() {
        let k = j as f64 - (half - 1.0);
        let t = k - frac;
        let window = 0.5 * (1.0 + (PI * t / half).cos());
        *wj = sinc(t) * window;
    }
    w
}

/// Accumulates `gain · x` delayed by `delay` samples into `out`.
///
/// Samples landing outside `out` are dropped. Integer delays are exact shifts
/// in both modes.
pub fn add_delayed(out: &mut [f64], x: &[f64], delay: f64, gain: f64, mode: DelayMode) {
    let len = out.len() as isize;
    let whole = delay.floor();
    let frac = delay - whole;
    let integer = match mode {
        DelayMode::GridRounded => Some(delay.round() as isize),
        DelayMode::BandLimited if frac == 0.0 => Some(whole as isize),
        DelayMode::BandLimited => None,
    };
    if let Some(shift) = integer {
        for (i, &xi) in x.iter().enumerate() {
            let n = i as isize + shift;
            if (0..len).contains(&n) {
                out[n as usize] += gain * xi;
            }
        }
        return;
    }

    let kernel = sinc_kernel(frac);
    let base = whole as isize - (SINC_TAPS as isize / 2 - 1);
    for (i, &xi) in x.iter().enumerate() {
        let g = gain * xi;
        if g == 0.0 {
            continue;
        }
        for (j, &w) in kernel.iter().enumerate() {
            let n = base + i as isize + j as isize;
            if (0..len).contains(&n) {
                out[n as usize] += g * w;
            }
        }
    }
}

/// Returns `gain · x` delayed by `delay` samples, `out_len` samples long.
pub fn delayed(x: &[f64], delay: f64, gain: f64, out_len: usize, mode: DelayMode) -> Vec<f64> {
    let mut out = vec![0.0; out_len];
    add_delayed(&mut out, x, delay, gain, mode);
    out
}
