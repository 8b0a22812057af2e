//! Polar discretization of candidate image-source locations.
//!
//! Radii are sampled every `vc / fs` metres starting at the array radius and
//! angles every `2π / (M·P)` radians starting at the positive x-axis,
//! counter-clockwise. Candidate `(q, p)` maps to linear index `p·T + q`, the
//! order in which per-angle radial profiles are stacked in a source vector.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default speed of sound in m/s.
pub const DEFAULT_SPEED_OF_SOUND: f64 = 343.0;

/// Delays closer than this (in samples) to an integer are treated as that
/// integer before ceiling, so that the same geometric delay computed along
/// different code paths rounds identically.
pub const DELAY_SNAP: f64 = 1e-9;

/// Ceiling of a non-negative sample delay, snapping near-integers first.
pub fn ceil_delay(delay: f64) -> usize {
    let nearest = delay.round();
    let snapped = if (delay - nearest).abs() <= DELAY_SNAP {
        nearest
    } else {
        delay.ceil()
    };
    snapped.max(0.0) as usize
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_angle(angle: f64) -> f64 {
    let wrapped = angle.rem_euclid(TAU);
    // rem_euclid can return TAU itself for tiny negative inputs
    if wrapped >= TAU {
        0.0
    } else {
        wrapped
    }
}

/// Sampling constants of the candidate grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridParams {
    /// Sample rate in Hz.
    pub fs: f64,
    /// Speed of sound in m/s.
    pub vc: f64,
    /// Radius of the circular microphone array in m.
    pub array_radius: f64,
    /// Number of microphones.
    pub mics: usize,
    /// Angular upsampling factor relative to the microphone spacing.
    pub upsampling: usize,
    /// Number of radial bins.
    pub radial_bins: usize,
}

impl Default for GridParams {
    fn default() -> Self {
        Self {
            fs: 48_000.0,
            vc: DEFAULT_SPEED_OF_SOUND,
            array_radius: 0.035,
            mics: 6,
            upsampling: 2,
            radial_bins: 78,
        }
    }
}

/// Uniform polar grid of `T × M·P` candidate image-source positions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarGrid {
    params: GridParams,
}

impl PolarGrid {
    pub fn new(params: GridParams) -> Result<Self> {
        let GridParams {
            fs,
            vc,
            array_radius,
            mics,
            upsampling,
            radial_bins,
        } = params;
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::InvalidParameter(format!("sample rate {fs}")));
        }
        if !(vc.is_finite() && vc > 0.0) {
            return Err(Error::InvalidParameter(format!("speed of sound {vc}")));
        }
        if !(array_radius.is_finite() && array_radius >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "array radius {array_radius}"
            )));
        }
        if mics == 0 || upsampling == 0 || radial_bins == 0 {
            return Err(Error::InvalidParameter(format!(
                "mics={mics}, upsampling={upsampling}, radial_bins={radial_bins} must all be >= 1"
            )));
        }
        Ok(Self { params })
    }

    pub fn params(&self) -> &GridParams {
        &self.params
    }

    pub fn fs(&self) -> f64 {
        self.params.fs
    }

    pub fn vc(&self) -> f64 {
        self.params.vc
    }

    pub fn array_radius(&self) -> f64 {
        self.params.array_radius
    }

    /// Microphone count `M`.
    pub fn mics(&self) -> usize {
        self.params.mics
    }

    /// Angular upsampling factor `P`.
    pub fn upsampling(&self) -> usize {
        self.params.upsampling
    }

    /// Radial bin count `T`.
    pub fn radial_bins(&self) -> usize {
        self.params.radial_bins
    }

    /// Number of angular bins, `M·P`.
    pub fn angular_bins(&self) -> usize {
        self.params.mics * self.params.upsampling
    }

    /// Total number of candidate locations, `T·M·P`.
    pub fn len(&self) -> usize {
        self.radial_bins() * self.angular_bins()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Radial step in metres (one sample of propagation).
    pub fn radial_step(&self) -> f64 {
        self.params.vc / self.params.fs
    }

    /// Angular step in radians.
    pub fn angular_step(&self) -> f64 {
        TAU / self.angular_bins() as f64
    }

    pub fn min_radius(&self) -> f64 {
        self.params.array_radius
    }

    pub fn max_radius(&self) -> f64 {
        self.radial_bins() as f64 * self.radial_step() + self.params.array_radius
    }

    /// Angle of microphone `m`, which coincides with angular bin `m·P`.
    pub fn mic_angle(&self, m: usize) -> f64 {
        TAU * m as f64 / self.params.mics as f64
    }

    /// Cartesian microphone positions.
    pub fn mic_positions(&self) -> Vec<[f64; 2]> {
        (0..self.mics())
            .map(|m| {
                let a = self.mic_angle(m);
                [self.params.array_radius * a.cos(), self.params.array_radius * a.sin()]
            })
            .collect()
    }

    /// Unrounded array delay, in samples, for a relative angle between a
    /// microphone and a source direction: `fs·Ra/vc·(1 − cos Δ)`.
    pub fn array_delay(&self, relative_angle: f64) -> f64 {
        self.params.fs * self.params.array_radius / self.params.vc * (1.0 - relative_angle.cos())
    }

    /// Number of time taps needed to hold every array delay.
    pub fn array_taps(&self) -> usize {
        (self.params.fs * 2.0 * self.params.array_radius / self.params.vc).ceil() as usize + 1
    }

    pub fn linear_index(&self, q: usize, p: usize) -> Result<usize> {
        self.check(q, p)?;
        Ok(p * self.radial_bins() + q)
    }

    pub fn split_index(&self, index: usize) -> Result<(usize, usize)> {
        if index >= self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                actual: index,
            });
        }
        Ok((index % self.radial_bins(), index / self.radial_bins()))
    }

    fn check(&self, q: usize, p: usize) -> Result<()> {
        if q >= self.radial_bins() || p >= self.angular_bins() {
            return Err(Error::IndexOutOfRange {
                q,
                p,
                radial: self.radial_bins(),
                angular: self.angular_bins(),
            });
        }
        Ok(())
    }

    /// Polar coordinates `(R, φ)` of generator `(q, p)`.
    pub fn generator_point(&self, q: usize, p: usize) -> Result<(f64, f64)> {
        self.check(q, p)?;
        Ok((
            q as f64 * self.radial_step() + self.min_radius(),
            p as f64 * self.angular_step(),
        ))
    }

    /// Nearest generator to the polar point `(radius, angle)` in the plane.
    ///
    /// Every ray of the grid is scanned: along a ray the distance is convex
    /// in radius, so the closest generator on it is the clamped rounding of
    /// the point's projection onto the ray. The overall minimum is the exact
    /// Voronoi cell. Ties go to the lower linear index.
    pub fn quantize(&self, radius: f64, angle: f64) -> Result<(usize, usize)> {
        let step = self.radial_step();
        let lo = self.min_radius() - 0.5 * step;
        let hi = self.max_radius() + 0.5 * step;
        if !(radius.is_finite() && angle.is_finite()) || radius < lo || radius > hi {
            return Err(Error::OutOfGrid {
                radius,
                min: lo,
                max: hi,
            });
        }
        let angle = wrap_angle(angle);
        let last = (self.radial_bins() - 1) as f64;
        let mut best = (0, 0);
        let mut best_dist = f64::INFINITY;
        for p in 0..self.angular_bins() {
            let cos_d = (angle - p as f64 * self.angular_step()).cos();
            let along = radius * cos_d;
            let q = ((along - self.min_radius()) / step).round().clamp(0.0, last);
            let r_q = q * step + self.min_radius();
            let dist = radius * radius + r_q * r_q - 2.0 * radius * r_q * cos_d;
            if dist < best_dist {
                best_dist = dist;
                best = (q as usize, p);
            }
        }
        Ok(best)
    }
}

/// Cartesian coordinates of a polar point.
pub fn to_cartesian(radius: f64, angle: f64) -> [f64; 2] {
    [radius * angle.cos(), radius * angle.sin()]
}

/// Polar coordinates of a Cartesian point, angle in `[0, 2π)`.
pub fn to_polar(point: [f64; 2]) -> (f64, f64) {
    (point[0].hypot(point[1]), wrap_angle(point[1].atan2(point[0])))
}
