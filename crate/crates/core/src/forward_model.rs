//! Discrete measurement operator mapping candidate image sources to stacked
//! microphone impulse responses.
//!
//! The operator factors as
//!
//! 1. zero-padding of every per-angle radial profile to `N_h` samples,
//! 2. per-angle time convolution with the directivity response `v[·, p]`,
//! 3. a circular two-dimensional (time, angle) convolution with the array
//!    sampling function `μ`,
//! 4. selection of every `P`-th angle channel, one per microphone.
//!
//! Steps 2 and 3 are diagonal in the Fourier domain, which is how
//! [`ForwardOperator::apply`] and [`ForwardOperator::adjoint`] evaluate them.
//! [`ForwardOperator::apply_direct`] evaluates the same sums literally in the
//! time domain and backs [`ForwardOperator::build_dense`].

use std::sync::Arc;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::directivity::DirectivityTable;
use crate::error::{Error, Result};
use crate::grid::{ceil_delay, PolarGrid};
use crate::simulator::ImageSource;

/// Default column cap for [`ForwardOperator::build_dense`].
pub const DENSE_COLUMN_CAP: usize = 5000;

/// Candidate-source amplitudes, angle-major: entry `p·T + q` is `s[q, p]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceVector {
    values: Vec<f64>,
}

impl SourceVector {
    pub fn new(grid: &PolarGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite source amplitude".into()));
        }
        Ok(Self { values })
    }

    pub fn zeros(grid: &PolarGrid) -> Self {
        Self {
            values: vec![0.0; grid.len()],
        }
    }

    pub fn one_hot(grid: &PolarGrid, q: usize, p: usize, amplitude: f64) -> Result<Self> {
        let mut s = Self::zeros(grid);
        s.values[grid.linear_index(q, p)?] = amplitude;
        Ok(s)
    }

    /// Assigns each source to its Voronoi cell with amplitude
    /// `gain · R0 / R`, summing sources that share a cell.
    pub fn from_sources(grid: &PolarGrid, sources: &[ImageSource], r0: f64) -> Result<Self> {
        let mut s = Self::zeros(grid);
        for src in sources {
            let (q, p) = grid.quantize(src.radius, src.angle)?;
            s.values[grid.linear_index(q, p)?] += src.gain * r0 / src.radius;
        }
        Ok(s)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Microphone impulse responses, microphone-major: entry `m·N_h + n` is
/// `h[n, m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelVector {
    values: Vec<f64>,
    n_h: usize,
}

impl ChannelVector {
    pub fn new(values: Vec<f64>, n_h: usize) -> Result<Self> {
        if n_h == 0 || values.len() % n_h != 0 {
            return Err(Error::DimensionMismatch {
                expected: n_h,
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite channel sample".into()));
        }
        Ok(Self { values, n_h })
    }

    pub fn zeros(mics: usize, n_h: usize) -> Self {
        Self {
            values: vec![0.0; mics * n_h],
            n_h,
        }
    }

    /// Samples per microphone, `N_h`.
    pub fn n_h(&self) -> usize {
        self.n_h
    }

    pub fn mics(&self) -> usize {
        self.values.len() / self.n_h
    }

    pub fn channel(&self, m: usize) -> &[f64] {
        &self.values[m * self.n_h..(m + 1) * self.n_h]
    }

    pub fn channel_mut(&mut self, m: usize) -> &mut [f64] {
        &mut self.values[m * self.n_h..(m + 1) * self.n_h]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.values
    }

    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }
}

/// Binary array sampling function `μ[n, p]`: exactly one unit tap per
/// relative angle `2πp/(MP)`, at the ceiled array delay.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArraySampling {
    n_taps: usize,
    delays: Vec<usize>,
}

impl ArraySampling {
    /// Time taps `N_μ`.
    pub fn n_taps(&self) -> usize {
        self.n_taps
    }

    /// Delay index of relative angle bin `p`.
    pub fn delay(&self, p: usize) -> usize {
        self.delays[p]
    }

    pub fn delays(&self) -> &[usize] {
        &self.delays
    }

    pub fn value(&self, n: usize, p: usize) -> f64 {
        if self.delays[p] == n {
            1.0
        } else {
            0.0
        }
    }
}

pub fn mic_sampling_function(grid: &PolarGrid) -> ArraySampling {
    let delays = (0..grid.angular_bins())
        .map(|p| ceil_delay(grid.array_delay(p as f64 * grid.angular_step())))
        .collect();
    ArraySampling {
        n_taps: grid.array_taps(),
        delays,
    }
}

/// Smallest `N_h` that keeps every convolution linear.
pub fn min_output_len(grid: &PolarGrid, directivity_taps: usize) -> usize {
    directivity_taps + grid.radial_bins() + grid.array_taps() - 2
}

/// Default `N_h`: the minimum rounded up to an even count.
pub fn default_output_len(grid: &PolarGrid, directivity_taps: usize) -> usize {
    let n = min_output_len(grid, directivity_taps);
    n + n % 2
}

/// Matrix-free measurement operator `Φ` of size `N_h·M × T·M·P`.
pub struct ForwardOperator {
    grid: PolarGrid,
    n_h: usize,
    directivity: DirectivityTable,
    sampling: ArraySampling,
    /// `[p][k]`: time spectrum of `v[·, p]`.
    directivity_spectra: Vec<Complex64>,
    /// `[k][j]`: 2-D spectrum of `μ`, time bin `k`, angle bin `j`.
    sampling_spectra: Vec<Complex64>,
    time_fft: Arc<dyn Fft<f64>>,
    time_ifft: Arc<dyn Fft<f64>>,
    angle_fft: Arc<dyn Fft<f64>>,
    angle_ifft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for ForwardOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ForwardOperator")
            .field("grid", &self.grid)
            .field("n_h", &self.n_h)
            .field("directivity_taps", &self.directivity.n_taps())
            .finish()
    }
}

impl ForwardOperator {
    /// Builds the operator. The directivity table is resampled onto the
    /// grid's `M·P` angles; `n_h = None` selects [`default_output_len`].
    pub fn new(grid: PolarGrid, directivity: &DirectivityTable, n_h: Option<usize>) -> Result<Self> {
        let n_h = n_h.unwrap_or_else(|| default_output_len(&grid, directivity.n_taps()));
        let required = min_output_len(&grid, directivity.n_taps());
        if n_h < required {
            return Err(Error::InsufficientPadding { n_h, required });
        }
        Self::new_circular(grid, directivity, n_h)
    }

    /// Like [`ForwardOperator::new`] but without the padding check: with
    /// `n_h` below [`min_output_len`] the time axis wraps around.
    pub fn new_circular(grid: PolarGrid, directivity: &DirectivityTable, n_h: usize) -> Result<Self> {
        if (directivity.fs() - grid.fs()).abs() > 1e-9 * grid.fs() {
            return Err(Error::InvalidParameter(format!(
                "directivity sampled at {} Hz, grid at {} Hz",
                directivity.fs(),
                grid.fs()
            )));
        }
        if n_h < directivity.n_taps().max(grid.radial_bins()).max(grid.array_taps()) {
            return Err(Error::InvalidParameter(format!(
                "output length {n_h} shorter than an individual kernel"
            )));
        }
        let mp = grid.angular_bins();
        let directivity = directivity.resample_angles(mp)?;
        let sampling = mic_sampling_function(&grid);

        let mut planner = FftPlanner::new();
        let time_fft = planner.plan_fft_forward(n_h);
        let time_ifft = planner.plan_fft_inverse(n_h);
        let angle_fft = planner.plan_fft_forward(mp);
        let angle_ifft = planner.plan_fft_inverse(mp);

        let mut directivity_spectra = vec![Complex64::default(); mp * n_h];
        for (p, row) in directivity.rows().enumerate() {
            for (dst, &v) in directivity_spectra[p * n_h..].iter_mut().zip(row) {
                *dst = Complex64::new(v, 0.0);
            }
        }
        time_fft.process(&mut directivity_spectra);

        // μ laid out [p][n], time transform, then transpose to [k][p] and
        // transform along angle
        let mut mu = vec![Complex64::default(); mp * n_h];
        for p in 0..mp {
            mu[p * n_h + sampling.delay(p)] = Complex64::new(1.0, 0.0);
        }
        time_fft.process(&mut mu);
        let mut sampling_spectra = transpose(&mu, mp, n_h);
        angle_fft.process(&mut sampling_spectra);

        Ok(Self {
            grid,
            n_h,
            directivity,
            sampling,
            directivity_spectra,
            sampling_spectra,
            time_fft,
            time_ifft,
            angle_fft,
            angle_ifft,
        })
    }

    pub fn grid(&self) -> &PolarGrid {
        &self.grid
    }

    pub fn n_h(&self) -> usize {
        self.n_h
    }

    /// Directivity resampled onto the grid angles, `v[n, p]`.
    pub fn directivity(&self) -> &DirectivityTable {
        &self.directivity
    }

    pub fn sampling(&self) -> &ArraySampling {
        &self.sampling
    }

    /// Rows of `Φ`, `N_h·M`.
    pub fn rows(&self) -> usize {
        self.n_h * self.grid.mics()
    }

    /// Columns of `Φ`, `T·M·P`.
    pub fn cols(&self) -> usize {
        self.grid.len()
    }

    fn check_len(expected: usize, actual: usize) -> Result<()> {
        if expected != actual {
            return Err(Error::DimensionMismatch { expected, actual });
        }
        Ok(())
    }

    /// `Φ s` on raw slices.
    pub fn apply_slice(&self, s: &[f64]) -> Result<Vec<f64>> {
        Self::check_len(self.cols(), s.len())?;
        let (t, mp, n_h, p_up) = (
            self.grid.radial_bins(),
            self.grid.angular_bins(),
            self.n_h,
            self.grid.upsampling(),
        );

        let mut work = vec![Complex64::default(); mp * n_h];
        for p in 0..mp {
            for (dst, &v) in work[p * n_h..p * n_h + t].iter_mut().zip(&s[p * t..(p + 1) * t]) {
                *dst = Complex64::new(v, 0.0);
            }
        }
        self.time_fft.process(&mut work);
        for (w, d) in work.iter_mut().zip(&self.directivity_spectra) {
            *w *= d;
        }

        let mut freq = transpose(&work, mp, n_h);
        self.angle_fft.process(&mut freq);
        for (w, m) in freq.iter_mut().zip(&self.sampling_spectra) {
            *w *= m;
        }
        self.angle_ifft.process(&mut freq);

        let mics = self.grid.mics();
        let mut out = vec![Complex64::default(); mics * n_h];
        for m in 0..mics {
            for k in 0..n_h {
                out[m * n_h + k] = freq[k * mp + m * p_up];
            }
        }
        self.time_ifft.process(&mut out);
        Ok(real_part(&out, 1.0 / (mp * n_h) as f64))
    }

    /// `Φᵀ h` on raw slices.
    pub fn adjoint_slice(&self, h: &[f64]) -> Result<Vec<f64>> {
        Self::check_len(self.rows(), h.len())?;
        let (t, mp, n_h, p_up, mics) = (
            self.grid.radial_bins(),
            self.grid.angular_bins(),
            self.n_h,
            self.grid.upsampling(),
            self.grid.mics(),
        );

        let mut chans: Vec<Complex64> = h.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.time_fft.process(&mut chans);

        // embed microphone m at angle channel m·P, layout [k][p]
        let mut freq = vec![Complex64::default(); mp * n_h];
        for m in 0..mics {
            for k in 0..n_h {
                freq[k * mp + m * p_up] = chans[m * n_h + k];
            }
        }
        self.angle_fft.process(&mut freq);
        for (w, m) in freq.iter_mut().zip(&self.sampling_spectra) {
            *w *= m.conj();
        }
        self.angle_ifft.process(&mut freq);

        let mut work = transpose(&freq, n_h, mp);
        for (w, d) in work.iter_mut().zip(&self.directivity_spectra) {
            *w *= d.conj();
        }
        self.time_ifft.process(&mut work);

        let scale = 1.0 / (mp * n_h) as f64;
        let mut s = Vec::with_capacity(mp * t);
        for p in 0..mp {
            s.extend(real_part(&work[p * n_h..p * n_h + t], scale));
        }
        Ok(s)
    }

    pub fn apply(&self, s: &SourceVector) -> Result<ChannelVector> {
        Ok(ChannelVector {
            values: self.apply_slice(s.as_slice())?,
            n_h: self.n_h,
        })
    }

    pub fn adjoint(&self, h: &ChannelVector) -> Result<SourceVector> {
        Ok(SourceVector {
            values: self.adjoint_slice(h.as_slice())?,
        })
    }

    /// Time-domain evaluation of the triple sum defining `Φ s`, with linear
    /// (non-wrapping) convolutions truncated to `N_h` samples.
    pub fn apply_direct(&self, s: &[f64]) -> Result<Vec<f64>> {
        Self::check_len(self.cols(), s.len())?;
        let (t, mp, n_h, p_up, mics) = (
            self.grid.radial_bins(),
            self.grid.angular_bins(),
            self.n_h,
            self.grid.upsampling(),
            self.grid.mics(),
        );

        // u[·, p] = v[·, p] * s[·, p]
        let mut u = vec![0.0; mp * n_h];
        for p in 0..mp {
            let v = self.directivity.row(p);
            for (q, &sq) in s[p * t..(p + 1) * t].iter().enumerate() {
                if sq == 0.0 {
                    continue;
                }
                for (n, &vn) in v.iter().enumerate().take(n_h.saturating_sub(q)) {
                    u[p * n_h + q + n] += vn * sq;
                }
            }
        }

        // h[n, m] = Σ_p' Σ_n' μ[n − n', (mP − p') mod MP] u[n', p']
        let mut h = vec![0.0; mics * n_h];
        for m in 0..mics {
            for p in 0..mp {
                let rel = (m * p_up + mp - p) % mp;
                let d = self.sampling.delay(rel);
                for n in d..n_h {
                    h[m * n_h + n] += u[p * n_h + n - d];
                }
            }
        }
        Ok(h)
    }

    /// Dense `Φ`, column `j` equal to [`ForwardOperator::apply_direct`] of
    /// the `j`-th unit vector.
    pub fn build_dense(&self, column_cap: usize) -> Result<DMatrix<f64>> {
        let cols = self.cols();
        if cols > column_cap {
            return Err(Error::DenseTooLarge {
                columns: cols,
                cap: column_cap,
            });
        }
        let mut dense = DMatrix::zeros(self.rows(), cols);
        let mut e = vec![0.0; cols];
        for j in 0..cols {
            e[j] = 1.0;
            let col = self.apply_direct(&e)?;
            dense.column_mut(j).copy_from_slice(&col);
            e[j] = 0.0;
        }
        Ok(dense)
    }

    /// Column `j` of `Φ`.
    pub fn column(&self, j: usize) -> Result<Vec<f64>> {
        let mut e = vec![0.0; self.cols()];
        *e.get_mut(j).ok_or(Error::DimensionMismatch {
            expected: self.cols(),
            actual: j,
        })? = 1.0;
        self.apply_slice(&e)
    }
}

fn transpose(src: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    let mut dst = vec![Complex64::default(); src.len()];
    for r in 0..rows {
        for c in 0..cols {
            dst[c * rows + r] = src[r * cols + c];
        }
    }
    dst
}

fn real_part(x: &[Complex64], scale: f64) -> Vec<f64> {
    debug_assert!({
        let peak = x.iter().map(|c| c.norm()).fold(0.0, f64::max);
        x.iter().all(|c| c.im.abs() <= 1e-12 * peak.max(f64::MIN_POSITIVE))
    });
    x.iter().map(|c| c.re * scale).collect()
}
