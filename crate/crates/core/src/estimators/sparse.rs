//! ℓ1-regularized least squares,
//! `argmin ½‖h − Φs‖² + λ‖s‖₁`, by accelerated proximal gradient.
//!
//! Momentum is reset whenever a step would increase the objective, which
//! keeps the accepted iterates monotone. Once the support stops changing the
//! solver tries to finish exactly: it solves the optimality equations
//! restricted to the current support and sign pattern and accepts the result
//! only if it satisfies the full subgradient conditions.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::EstimateMap;
use crate::error::{Error, Result};
use crate::forward_model::{ChannelVector, ForwardOperator};

/// Largest support the exact finishing step will attempt.
const POLISH_MAX_SUPPORT: usize = 400;
/// Iterations between finishing attempts.
const POLISH_EVERY: usize = 20;
/// Relative slack on the subgradient conditions for accepting a solution.
const KKT_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Regularization weight λ ≥ 0.
    pub lambda: f64,
    pub max_iters: usize,
    /// Stop when the relative objective change falls below this.
    pub rel_tol: f64,
    /// Power iterations used to estimate the step size.
    pub power_iters: usize,
    /// Multiplier on the estimated Lipschitz constant.
    pub lipschitz_safety: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            max_iters: 5000,
            rel_tol: 1e-12,
            power_iters: 50,
            lipschitz_safety: 1.05,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SparseResult {
    pub map: EstimateMap,
    pub iterations: usize,
    pub objective: f64,
    pub converged: bool,
    /// Objective of the accepted iterate after each iteration.
    pub history: Vec<f64>,
}

/// `λ = fraction · ‖Φᵀh‖∞`.
pub fn default_lambda(h: &ChannelVector, op: &ForwardOperator, fraction: f64) -> Result<f64> {
    let back = op.adjoint(h)?;
    Ok(fraction * back.as_slice().iter().fold(0.0, |m: f64, v| m.max(v.abs())))
}

/// `½‖h − Φs‖² + λ‖s‖₁`.
pub fn lasso_objective(h: &[f64], phi_s: &[f64], s: &[f64], lambda: f64) -> f64 {
    let misfit: f64 = h.iter().zip(phi_s).map(|(a, b)| (a - b).powi(2)).sum();
    0.5 * misfit + lambda * s.iter().map(|v| v.abs()).sum::<f64>()
}

/// Estimate of `‖ΦᵀΦ‖₂` by power iteration from a fixed start vector.
pub fn lipschitz_constant(op: &ForwardOperator, iters: usize) -> Result<f64> {
    let n = op.cols();
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i * 7919) % 13) as f64 / 13.0).collect();
    let mut estimate = 0.0;
    for _ in 0..iters.max(1) {
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Ok(0.0);
        }
        x.iter_mut().for_each(|v| *v /= norm);
        let y = op.adjoint_slice(&op.apply_slice(&x)?)?;
        estimate = x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>();
        x = y;
    }
    Ok(estimate)
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

pub fn sparse_solve(h: &ChannelVector, op: &ForwardOperator, cfg: &SolverConfig) -> Result<SparseResult> {
    let l = lipschitz_constant(op, cfg.power_iters)? * cfg.lipschitz_safety;
    sparse_solve_with_lipschitz(h, op, cfg, l)
}

/// [`sparse_solve`] with a precomputed step-size constant (already including
/// any safety factor).
pub fn sparse_solve_with_lipschitz(
    h: &ChannelVector,
    op: &ForwardOperator,
    cfg: &SolverConfig,
    lipschitz: f64,
) -> Result<SparseResult> {
    if !(cfg.lambda >= 0.0 && cfg.lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda {}", cfg.lambda)));
    }
    if cfg.max_iters == 0 {
        return Err(Error::InvalidParameter("max_iters must be >= 1".into()));
    }
    let hv = h.as_slice();
    if hv.len() != op.rows() {
        return Err(Error::DimensionMismatch {
            expected: op.rows(),
            actual: hv.len(),
        });
    }
    let n = op.cols();
    let lambda = cfg.lambda;

    // zero is optimal when every correlation is within λ
    let corr0 = op.adjoint_slice(hv)?;
    let zero_obj = lasso_objective(hv, &vec![0.0; hv.len()], &[], 0.0);
    if corr0.iter().all(|c| c.abs() <= lambda) || lipschitz <= 0.0 {
        return Ok(SparseResult {
            map: EstimateMap::new(vec![0.0; n]),
            iterations: 0,
            objective: zero_obj,
            converged: true,
            history: vec![zero_obj],
        });
    }

    let step = 1.0 / lipschitz;
    let mut x = vec![0.0; n];
    let mut phi_x = vec![0.0; hv.len()];
    let mut y = x.clone();
    let mut phi_y = phi_x.clone();
    let mut t = 1.0_f64;
    let mut obj = zero_obj;
    let mut history = Vec::new();
    let mut last_support: Option<Vec<usize>> = None;

    for iter in 1..=cfg.max_iters {
        // gradient step at y, then shrink
        let resid: Vec<f64> = phi_y.iter().zip(hv).map(|(a, b)| a - b).collect();
        let grad = op.adjoint_slice(&resid)?;
        let z: Vec<f64> = y
            .iter()
            .zip(&grad)
            .map(|(yi, gi)| soft_threshold(yi - step * gi, step * lambda))
            .collect();
        let phi_z = op.apply_slice(&z)?;
        let z_obj = lasso_objective(hv, &phi_z, &z, lambda);

        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        if z_obj <= obj {
            let x_prev = std::mem::replace(&mut x, z);
            let phi_x_prev = std::mem::replace(&mut phi_x, phi_z);
            let beta = (t - 1.0) / t_next;
            for i in 0..n {
                y[i] = x[i] + beta * (x[i] - x_prev[i]);
            }
            for i in 0..phi_y.len() {
                phi_y[i] = phi_x[i] + beta * (phi_x[i] - phi_x_prev[i]);
            }
            t = t_next;
        } else {
            // restart momentum from the last accepted iterate
            y.copy_from_slice(&x);
            phi_y.copy_from_slice(&phi_x);
            t = 1.0;
        }
        let prev_obj = obj;
        obj = obj.min(z_obj);
        history.push(obj);

        if iter % POLISH_EVERY == 0 {
            let support: Vec<usize> = (0..n).filter(|&i| x[i] != 0.0).collect();
            if last_support.as_ref() == Some(&support) {
                if let Some((xs, phi_xs)) = polish(op, hv, &x, &support, lambda)? {
                    let polished_obj = lasso_objective(hv, &phi_xs, &xs, lambda);
                    if polished_obj <= obj * (1.0 + 1e-12) {
                        history.push(polished_obj.min(obj));
                        return Ok(SparseResult {
                            map: EstimateMap::new(xs),
                            iterations: iter,
                            objective: polished_obj,
                            converged: true,
                            history,
                        });
                    }
                }
            }
            last_support = Some(support);
        }

        let change = (prev_obj - obj).abs();
        if z_obj <= prev_obj && change <= cfg.rel_tol * obj.abs().max(f64::MIN_POSITIVE) {
            let converged = kkt_violation(op, hv, &x, &phi_x, lambda)? <= 1e-4;
            return Ok(SparseResult {
                map: EstimateMap::new(x),
                iterations: iter,
                objective: obj,
                converged,
                history,
            });
        }
    }

    let converged = kkt_violation(op, hv, &x, &phi_x, lambda)? <= 1e-4;
    Ok(SparseResult {
        map: EstimateMap::new(x),
        iterations: cfg.max_iters,
        objective: obj,
        converged,
        history,
    })
}

/// Largest subgradient-condition violation relative to λ.
fn kkt_violation(op: &ForwardOperator, h: &[f64], x: &[f64], phi_x: &[f64], lambda: f64) -> Result<f64> {
    let resid: Vec<f64> = h.iter().zip(phi_x).map(|(a, b)| a - b).collect();
    let corr = op.adjoint_slice(&resid)?;
    let scale = if lambda > 0.0 {
        lambda
    } else {
        corr.iter().fold(0.0, |m: f64, v| m.max(v.abs())).max(f64::MIN_POSITIVE)
    };
    let worst = x
        .iter()
        .zip(&corr)
        .map(|(&xi, &ci)| {
            if xi == 0.0 {
                (ci.abs() - lambda).max(0.0)
            } else {
                (ci - lambda * xi.signum()).abs()
            }
        })
        .fold(0.0, f64::max);
    Ok(worst / scale)
}

/// Solves the optimality equations on a fixed support and sign pattern.
/// Returns the candidate and its image if it is sign-consistent and
/// satisfies the subgradient conditions everywhere.
fn polish(
    op: &ForwardOperator,
    h: &[f64],
    x: &[f64],
    support: &[usize],
    lambda: f64,
) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
    let k = support.len();
    if k == 0 || k > POLISH_MAX_SUPPORT || k > op.rows() {
        return Ok(None);
    }
    let rows = op.rows();
    let mut cols = DMatrix::zeros(rows, k);
    for (c, &j) in support.iter().enumerate() {
        cols.column_mut(c).copy_from_slice(&op.column(j)?);
    }
    let gram = cols.transpose() * &cols;
    let hv = DVector::from_column_slice(h);
    let signs = DVector::from_iterator(k, support.iter().map(|&j| x[j].signum()));
    let rhs = cols.transpose() * &hv - signs.scale(lambda);
    let Some(chol) = gram.cholesky() else {
        return Ok(None);
    };
    let w = chol.solve(&rhs);
    if w.iter().zip(signs.iter()).any(|(wi, si)| wi * si <= 0.0) {
        return Ok(None);
    }
    let mut xs = vec![0.0; op.cols()];
    for (c, &j) in support.iter().enumerate() {
        xs[j] = w[c];
    }
    let phi_xs = (&cols * &w).as_slice().to_vec();
    if kkt_violation(op, h, &xs, &phi_xs, lambda)? > KKT_TOL {
        return Ok(None);
    }
    Ok(Some((xs, phi_xs)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::directivity::{synth_directivity, SynthPattern};
    use crate::forward_model::SourceVector;
    use crate::grid::{GridParams, PolarGrid};

    fn setup() -> (PolarGrid, ForwardOperator) {
        let grid = PolarGrid::new(GridParams {
            radial_bins: 8,
            mics: 4,
            upsampling: 2,
            ..GridParams::default()
        })
        .unwrap();
        let table = synth_directivity(&SynthPattern {
            n_taps: 20,
            onset: 4.0,
            diffraction_delay: 8.0,
            ..SynthPattern::default()
        })
        .unwrap();
        (grid, ForwardOperator::new(grid, &table, None).unwrap())
    }

    #[test]
    fn lambda_above_threshold_gives_zero() {
        let (grid, op) = setup();
        let h = op.apply(&SourceVector::one_hot(&grid, 3, 2, 1.0).unwrap()).unwrap();
        let lmax = default_lambda(&h, &op, 1.0).unwrap();
        for lambda in [lmax, 2.0 * lmax] {
            let res = sparse_solve(&h, &op, &SolverConfig { lambda, ..SolverConfig::default() }).unwrap();
            assert!(res.map.as_slice().iter().all(|&v| v == 0.0));
            assert_eq!(res.iterations, 0);
        }
    }

    #[test]
    fn objective_never_increases() {
        let (grid, op) = setup();
        let mut s = SourceVector::zeros(&grid).into_inner();
        s[grid.linear_index(2, 1).unwrap()] = 1.0;
        s[grid.linear_index(5, 6).unwrap()] = -0.4;
        let mut h = op.apply_slice(&s).unwrap();
        for (i, v) in h.iter_mut().enumerate() {
            *v += 0.01 * ((i * 31 % 17) as f64 - 8.0);
        }
        let h = ChannelVector::new(h, op.n_h()).unwrap();
        let lambda = default_lambda(&h, &op, 0.05).unwrap();
        let res = sparse_solve(&h, &op, &SolverConfig { lambda, ..SolverConfig::default() }).unwrap();
        assert!(res.converged);
        for w in res.history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "{} -> {}", w[0], w[1]);
        }
    }

    /// Cyclic coordinate descent on the dense matrix.
    fn coordinate_descent(phi: &DMatrix<f64>, h: &[f64], lambda: f64, sweeps: usize) -> Vec<f64> {
        let n = phi.ncols();
        let norms: Vec<f64> = (0..n).map(|j| phi.column(j).norm_squared()).collect();
        let mut x = vec![0.0; n];
        let mut r = DVector::from_column_slice(h);
        for _ in 0..sweeps {
            for j in 0..n {
                if norms[j] == 0.0 {
                    continue;
                }
                let col = phi.column(j);
                let rho = col.dot(&r) + norms[j] * x[j];
                let new = soft_threshold(rho, lambda) / norms[j];
                if new != x[j] {
                    r.axpy(x[j] - new, &col, 1.0);
                    x[j] = new;
                }
            }
        }
        x
    }

    #[test]
    fn matches_coordinate_descent() {
        let (grid, op) = setup();
        let phi = op.build_dense(crate::forward_model::DENSE_COLUMN_CAP).unwrap();
        let mut s = SourceVector::zeros(&grid).into_inner();
        s[grid.linear_index(4, 3).unwrap()] = 2.0;
        s[grid.linear_index(6, 0).unwrap()] = 0.7;
        let h = ChannelVector::new(op.apply_slice(&s).unwrap(), op.n_h()).unwrap();
        for frac in [0.01, 0.1, 0.5] {
            let lambda = default_lambda(&h, &op, frac).unwrap();
            let res = sparse_solve(&h, &op, &SolverConfig { lambda, ..SolverConfig::default() }).unwrap();
            assert!(res.converged);
            let cd = coordinate_descent(&phi, h.as_slice(), lambda, 20_000);
            let cd_obj = lasso_objective(h.as_slice(), (&phi * DVector::from_column_slice(&cd)).as_slice(), &cd, lambda);
            assert!((res.objective - cd_obj).abs() <= 1e-8 * cd_obj, "{} vs {}", res.objective, cd_obj);
            for (a, b) in res.map.as_slice().iter().zip(&cd) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn rejects_negative_lambda() {
        let (_, op) = setup();
        let h = ChannelVector::zeros(4, op.n_h());
        assert!(sparse_solve(&h, &op, &SolverConfig { lambda: -1.0, ..SolverConfig::default() }).is_err());
    }

    #[test]
    fn power_iteration_bounds_rayleigh_quotients() {
        let (_, op) = setup();
        let l = lipschitz_constant(&op, 200).unwrap();
        for k in 0..5 {
            let x: Vec<f64> = (0..op.cols()).map(|i| ((i * (k + 3)) % 7) as f64 - 3.0).collect();
            let ax = op.apply_slice(&x).unwrap();
            let rq = ax.iter().map(|v| v * v).sum::<f64>() / x.iter().map(|v| v * v).sum::<f64>();
            assert!(rq <= l * (1.0 + 1e-9));
        }
    }
}
