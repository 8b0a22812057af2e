//! Sampled far-field loudspeaker response `γ0(t, φ)`.
//!
//! A table holds one impulse response per measurement angle, angles uniform
//! over `[0, 2π)` with angle `i` at `2πi / n_angles`, all measured at the
//! reference distance `R0`. Sample `n` of every row is the response at
//! `n / fs` in the table's own time base. The table frame is fixed to the
//! array frame.
//!
//! Time origin: the forward model and the simulator both express delays
//! relative to the same constant latency, so the absolute offset between the
//! measurement time base and the channel time base never needs to be known.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::delay::{self, DelayMode};
use crate::error::{Error, Result};
use crate::grid::wrap_angle;

#[derive(Debug, Clone, PartialEq)]
pub struct DirectivityTable {
    r0: f64,
    fs: f64,
    n_angles: usize,
    n_taps: usize,
    samples: Vec<f64>,
}

impl DirectivityTable {
    /// Builds a table from row-major samples (`n_angles` rows of `n_taps`).
    pub fn new(r0: f64, fs: f64, n_angles: usize, n_taps: usize, samples: Vec<f64>) -> Result<Self> {
        if !(r0.is_finite() && r0 > 0.0) {
            return Err(Error::InvalidParameter(format!("reference distance {r0}")));
        }
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::InvalidParameter(format!("sample rate {fs}")));
        }
        if n_angles == 0 || n_taps == 0 {
            return Err(Error::InvalidParameter(format!(
                "table shape {n_angles}x{n_taps} must be non-empty"
            )));
        }
        if samples.len() != n_angles * n_taps {
            return Err(Error::DimensionMismatch {
                expected: n_angles * n_taps,
                actual: samples.len(),
            });
        }
        if let Some(bad) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite sample at angle {}, tap {}",
                bad / n_taps,
                bad % n_taps
            )));
        }
        Ok(Self {
            r0,
            fs,
            n_angles,
            n_taps,
            samples,
        })
    }

    /// Ideal omnidirectional table: a single unit impulse.
    pub fn impulse(r0: f64, fs: f64) -> Self {
        Self::new(r0, fs, 1, 1, vec![1.0]).expect("valid impulse table")
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn n_angles(&self) -> usize {
        self.n_angles
    }

    /// Samples per response, `N_v`.
    pub fn n_taps(&self) -> usize {
        self.n_taps
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn row(&self, angle_index: usize) -> &[f64] {
        &self.samples[angle_index * self.n_taps..(angle_index + 1) * self.n_taps]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.samples.chunks_exact(self.n_taps)
    }

    /// Response at an arbitrary angle, linearly interpolated between the two
    /// neighbouring measured angles (circularly).
    pub fn response_at(&self, angle: f64) -> Vec<f64> {
        let mut pos = wrap_angle(angle) / TAU * self.n_angles as f64;
        if (pos - pos.round()).abs() < 1e-9 {
            pos = pos.round();
        }
        let lower = pos.floor();
        let frac = pos - lower;
        let i0 = (lower as usize) % self.n_angles;
        if frac == 0.0 {
            return self.row(i0).to_vec();
        }
        let i1 = (i0 + 1) % self.n_angles;
        self.row(i0)
            .iter()
            .zip(self.row(i1))
            .map(|(&a, &b)| (1.0 - frac) * a + frac * b)
            .collect()
    }

    /// Resamples onto `target_angles` uniform angles; row `p` is the response
    /// at `2πp / target_angles`.
    pub fn resample_angles(&self, target_angles: usize) -> Result<Self> {
        if target_angles == 0 {
            return Err(Error::InvalidParameter("target angle count must be >= 1".into()));
        }
        let samples = (0..target_angles)
            .flat_map(|p| self.response_at(TAU * p as f64 / target_angles as f64))
            .collect();
        Self::new(self.r0, self.fs, target_angles, self.n_taps, samples)
    }

    /// Response at distance `radius` and angle `angle`: scaled by `R0/R` and
    /// delayed by `(R − R0)/vc` seconds.
    pub fn extrapolate(
        &self,
        radius: f64,
        angle: f64,
        vc: f64,
        out_len: usize,
        mode: DelayMode,
    ) -> Result<Vec<f64>> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidParameter(format!("radius {radius} must be > 0")));
        }
        let response = self.response_at(angle);
        let delay = (radius - self.r0) / vc * self.fs;
        Ok(delay::delayed(&response, delay, self.r0 / radius, out_len, mode))
    }

    /// Angle-averaged single-row table.
    pub fn omni_collapse(&self) -> Self {
        let scale = 1.0 / self.n_angles as f64;
        let mut mean = vec![0.0; self.n_taps];
        for row in self.rows() {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m *= scale);
        Self::new(self.r0, self.fs, 1, self.n_taps, mean).expect("mean of a valid table")
    }

    /// Parses the text format: header `R0 fs n_angles N_v`, then one line of
    /// `N_v` samples per angle.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let err = |message: String| Error::Parse {
            path: origin.to_path_buf(),
            message,
        };
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| err("empty file".into()))?
            .split_whitespace()
            .collect();
        if header.len() != 4 {
            return Err(err(format!("header has {} fields, expected 4", header.len())));
        }
        let num = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| err(format!("bad {what} '{s}'")))
        };
        let count = |s: &str, what: &str| -> Result<usize> {
            let v = num(s, what)?;
            if v.fract() != 0.0 || v < 1.0 {
                return Err(err(format!("{what} must be a positive integer, got '{s}'")));
            }
            Ok(v as usize)
        };
        let r0 = num(header[0], "R0")?;
        let fs = num(header[1], "fs")?;
        let n_angles = count(header[2], "n_angles")?;
        let n_taps = count(header[3], "N_v")?;

        let mut samples = Vec::with_capacity(n_angles * n_taps);
        let mut rows = 0;
        for (i, line) in lines.enumerate() {
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|s| num(s, "sample"))
                .collect::<Result<_>>()?;
            if row.len() != n_taps {
                return Err(err(format!("row {i} has {} samples, expected {n_taps}", row.len())));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(err(format!("row {i} contains a non-finite sample")));
            }
            samples.extend(row);
            rows += 1;
        }
        if rows != n_angles {
            return Err(err(format!("found {rows} rows, header declares {n_angles}")));
        }
        Self::new(r0, fs, n_angles, n_taps, samples).map_err(|e| err(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&fs::read_to_string(path)?, path)
    }

    /// Text form that parses back to a bit-identical table.
    pub fn to_text(&self) -> String {
        let mut out = format!("{:e} {:e} {} {}\n", self.r0, self.fs, self.n_angles, self.n_taps);
        for row in self.rows() {
            let mut first = true;
            for v in row {
                if !first {
                    out.push(' ');
                }
                first = false;
                write!(out, "{v:e}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Cardioid-like gain `α + (1 − α)·cos²(φ/2)`.
pub fn cardioid_gain(alpha: f64, angle: f64) -> f64 {
    alpha + (1.0 - alpha) * (0.5 * angle).cos().powi(2)
}

/// Parameters of the synthetic directive loudspeaker.
///
/// Each angle gets a Hann-windowed low-pass pulse whose taps sum to the
/// cardioid gain `g(φ)`. Off-axis radiation reaches the array by diffraction
/// around the enclosure, modelled as an extra pulse delay of
/// `diffraction_delay · (1 − g(φ))` samples; with `alpha = 1` every angle is
/// identical.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthPattern {
    pub n_angles: usize,
    pub n_taps: usize,
    pub fs: f64,
    pub r0: f64,
    /// Rear-to-front gain ratio, in `(0, 1]`.
    pub alpha: f64,
    /// Pulse cutoff as a fraction of `fs`, in `(0, 0.5]`.
    pub cutoff: f64,
    /// On-axis pulse centre, also the window half-width, in samples.
    pub onset: f64,
    /// Extra delay of fully rear radiation, in samples.
    pub diffraction_delay: f64,
}

impl Default for SynthPattern {
    fn default() -> Self {
        Self {
            n_angles: 12,
            n_taps: 50,
            fs: 48_000.0,
            r0: 1.0,
            alpha: 0.3,
            cutoff: 0.3,
            onset: 6.0,
            diffraction_delay: 30.0,
        }
    }
}

/// Deterministic synthetic directivity table.
pub fn synth_directivity(pattern: &SynthPattern) -> Result<DirectivityTable> {
    let SynthPattern {
        n_angles,
        n_taps,
        fs,
        r0,
        alpha,
        cutoff,
        onset,
        diffraction_delay,
    } = *pattern;
    if n_angles == 0 || n_taps == 0 {
        return Err(Error::InvalidParameter("n_angles and n_taps must be >= 1".into()));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParameter(format!("alpha {alpha} not in (0, 1]")));
    }
    if !(cutoff > 0.0 && cutoff <= 0.5) {
        return Err(Error::InvalidParameter(format!("cutoff {cutoff} not in (0, 0.5]")));
    }
    if !(onset >= 0.0 && diffraction_delay >= 0.0) {
        return Err(Error::InvalidParameter(
            "onset and diffraction_delay must be >= 0".into(),
        ));
    }

    let mut samples = Vec::with_capacity(n_angles * n_taps);
    for i in 0..n_angles {
        let angle = TAU * i as f64 / n_angles as f64;
        let gain = cardioid_gain(alpha, angle);
        let centre = onset + diffraction_delay * (1.0 - gain);
        let mut row: Vec<f64> = (0..n_taps)
            .map(|n| {
                let t = n as f64 - centre;
                let window = if onset > 0.0 && t.abs() < onset {
                    0.5 * (1.0 + (std::f64::consts::PI * t / onset).cos())
                } else if onset == 0.0 && t == 0.0 {
                    1.0
                } else {
                    0.0
                };
                let x = 2.0 * cutoff * t;
                let sinc = if x == 0.0 {
                    1.0
                } else {
                    (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x)
                };
                window * sinc
            })
            .collect();
        let sum: f64 = row.iter().sum();
        if sum.abs() < 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "pulse at angle {i} falls outside {n_taps} taps"
            )));
        }
        row.iter_mut().for_each(|v| *v *= gain / sum);
        samples.extend(row);
    }
    DirectivityTable::new(r0, fs, n_angles, n_taps, samples)
}
