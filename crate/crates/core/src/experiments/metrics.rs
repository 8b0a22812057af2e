use itertools::Itertools;

use crate::grid::to_cartesian;

/// Squared-error threshold above which a localization is incorrect (m²).
pub const ERROR_THRESHOLD: f64 = 0.01;

/// Squared Euclidean distance between two polar points `(R, φ)`.
pub fn mse(truth: (f64, f64), estimate: (f64, f64)) -> f64 {
    let a = to_cartesian(truth.0, truth.1);
    let b = to_cartesian(estimate.0, estimate.1);
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// A localization is correct unless its squared error strictly exceeds the
/// threshold.
pub fn is_correct(sq_err: f64) -> bool {
    !(sq_err > ERROR_THRESHOLD)
}

/// Fraction of incorrect entries; a missing error counts as incorrect.
pub fn error_rate(sq_errors: &[Option<f64>]) -> f64 {
    if sq_errors.is_empty() {
        return 0.0;
    }
    let wrong = sq_errors.iter().filter(|e| !e.is_some_and(is_correct)).count();
    wrong as f64 / sq_errors.len() as f64
}

/// Assigns estimates to true sources minimizing the total squared error.
/// Entry `i` of the result is the estimate matched to `truths[i]`; missing
/// estimates are assigned last.
pub fn match_estimates(truths: &[(f64, f64)], estimates: &[Option<(f64, f64)>]) -> Vec<Option<(f64, f64)>> {
    let k = truths.len();
    let mut slots: Vec<Option<(f64, f64)>> = estimates.to_vec();
    slots.resize(k.max(slots.len()), None);
    if k <= 1 {
        slots.truncate(k);
        return slots;
    }
    let cost = |perm: &[usize]| -> (usize, f64) {
        let mut missing = 0;
        let mut total = 0.0;
        for (i, &j) in perm.iter().enumerate() {
            match slots[j] {
                Some(e) => total += mse(truths[i], e),
                None => missing += 1,
            }
        }
        (missing, total)
    };
    let best = (0..slots.len())
        .permutations(k)
        .min_by(|a, b| {
            let (ma, ca) = cost(a);
            let (mb, cb) = cost(b);
            ma.cmp(&mb).then(ca.total_cmp(&cb))
        })
        .expect("at least one permutation");
    best.into_iter().map(|j| slots[j]).collect()
}
