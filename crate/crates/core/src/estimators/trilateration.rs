use nalgebra::{DMatrix, DVector};

use crate::grid::to_polar;

/// Relative singular-value floor below which the geometry is rank deficient.
const RANK_TOL: f64 = 1e-12;

/// Source position from per-microphone arrival times.
///
/// Ranges are modelled as `d_m = vc·toa_m + c` with a common unknown offset
/// `c`. The squared-range equations, differenced against the first valid
/// microphone, are linear in `(x, y, c)`; their least-squares solution is
/// refined by one Gauss-Newton step on the unsquared residuals. Returns
/// `(R, φ)`, or `None` for fewer than three arrival times or degenerate
/// geometry.
pub fn trilaterate(toas: &[Option<f64>], mics: &[[f64; 2]], vc: f64) -> Option<(f64, f64)> {
    let obs: Vec<([f64; 2], f64)> = toas
        .iter()
        .zip(mics)
        .filter_map(|(t, &p)| t.filter(|v| v.is_finite()).map(|t| (p, vc * t)))
        .collect();
    if obs.len() < 3 {
        return None;
    }

    let (p0, d0) = obs[0];
    let rows = obs.len() - 1;
    let mut a = DMatrix::zeros(rows, 3);
    let mut b = DVector::zeros(rows);
    for (i, &(p, d)) in obs[1..].iter().enumerate() {
        a[(i, 0)] = 2.0 * (p[0] - p0[0]);
        a[(i, 1)] = 2.0 * (p[1] - p0[1]);
        a[(i, 2)] = 2.0 * (d - d0);
        let pp = p[0] * p[0] + p[1] * p[1];
        let pp0 = p0[0] * p0[0] + p0[1] * p0[1];
        b[i] = pp - pp0 - (d * d - d0 * d0);
    }
    let mut sol = solve_ls(a, b)?;

    // one Gauss-Newton step on |r − p_m| − d_m − c
    let mut jac = DMatrix::zeros(obs.len(), 3);
    let mut res = DVector::zeros(obs.len());
    for (i, &(p, d)) in obs.iter().enumerate() {
        let dx = sol[0] - p[0];
        let dy = sol[1] - p[1];
        let dist = dx.hypot(dy);
        if dist == 0.0 {
            return None;
        }
        jac[(i, 0)] = dx / dist;
        jac[(i, 1)] = dy / dist;
        jac[(i, 2)] = -1.0;
        res[i] = dist - d - sol[2];
    }
    if let Some(delta) = solve_ls(jac, -res) {
        sol += delta;
    }
    Some(to_polar([sol[0], sol[1]]))
}

fn solve_ls(a: DMatrix<f64>, b: DVector<f64>) -> Option<DVector<f64>> {
    if a.nrows() < a.ncols() {
        return None;
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    if !(smax > 0.0) || svd.singular_values.min() <= RANK_TOL * smax {
        return None;
    }
    svd.solve(&b, 0.0).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{to_cartesian, GridParams, PolarGrid};
    use rand::{Rng, SeedableRng};

    const VC: f64 = 343.0;

    fn mics() -> Vec<[f64; 2]> {
        PolarGrid::new(GridParams::default()).unwrap().mic_positions()
    }

    fn exact_toas(r: f64, phi: f64, offset: f64) -> Vec<Option<f64>> {
        let s = to_cartesian(r, phi);
        mics()
            .iter()
            .map(|p| Some(((s[0] - p[0]).hypot(s[1] - p[1]) - offset) / VC))
            .collect()
    }

    fn err(a: (f64, f64), b: (f64, f64)) -> f64 {
        let (x, y) = (to_cartesian(a.0, a.1), to_cartesian(b.0, b.1));
        (x[0] - y[0]).hypot(x[1] - y[1])
    }

    #[test]
    fn recovers_exact_source() {
        let est = trilaterate(&exact_toas(1.0, 0.0, 0.0), &mics(), VC).unwrap();
        assert!(err(est, (1.0, 0.0)) < 1e-3, "{est:?}");
        let est = trilaterate(&exact_toas(0.5, 2.1, 0.02), &mics(), VC).unwrap();
        assert!(err(est, (0.5, 2.1)) < 1e-3, "{est:?}");
    }

    #[test]
    fn equal_toas_are_degenerate() {
        let toas = vec![Some(0.001); 6];
        assert!(trilaterate(&toas, &mics(), VC).is_none());
    }

    #[test]
    fn too_few_toas() {
        let mut toas = exact_toas(1.0, 0.0, 0.0);
        for t in toas.iter_mut().skip(2) {
            *t = None;
        }
        assert!(trilaterate(&toas, &mics(), VC).is_none());
    }

    #[test]
    fn half_sample_jitter_degrades_position() {
        // sensitivity sweep: record how far half-sample TOA errors push the fix
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let truth = (0.5, 1.0);
        let clean = exact_toas(truth.0, truth.1, 0.0);
        let mut errors = Vec::new();
        for _ in 0..200 {
            let noisy: Vec<Option<f64>> = clean
                .iter()
                .map(|t| t.map(|v| v + rng.random_range(-0.5..0.5) / 48_000.0))
                .collect();
            let e = trilaterate(&noisy, &mics(), VC).map_or(f64::INFINITY, |est| err(est, truth));
            errors.push(e);
        }
        errors.sort_by(f64::total_cmp);
        let median = errors[errors.len() / 2];
        let exact = err(trilaterate(&clean, &mics(), VC).unwrap(), truth);
        assert!(median > 10.0 * exact.max(1e-9), "median {median}");
    }
}
