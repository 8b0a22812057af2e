use serde::{Deserialize, Serialize};

use super::EstimateMap;
use crate::error::{Error, Result};
use crate::grid::PolarGrid;

/// Half-widths of the non-maximum suppression window, in bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NmsWindow {
    pub radial: usize,
    pub angular: usize,
}

impl Default for NmsWindow {
    fn default() -> Self {
        Self {
            radial: 4,
            angular: 2,
        }
    }
}

fn angular_gap(a: usize, b: usize, bins: usize) -> usize {
    let d = a.abs_diff(b);
    d.min(bins - d)
}

/// Picks up to `k` peaks as `(R, φ)`, strongest first.
///
/// Candidates are positive cells that are at least as large as their eight
/// neighbours (angle wraps). They are taken greedily by value, each pick
/// suppressing every candidate inside its window. Slots left when candidates
/// run out are `None`.
pub fn peak_pick(map: &EstimateMap, grid: &PolarGrid, k: usize, nms: NmsWindow) -> Result<Vec<Option<(f64, f64)>>> {
    if k == 0 {
        return Err(Error::InvalidParameter("peak count must be >= 1".into()));
    }
    if map.len() != grid.len() {
        return Err(Error::DimensionMismatch {
            expected: grid.len(),
            actual: map.len(),
        });
    }
    let (t, mp) = (grid.radial_bins(), grid.angular_bins());
    let vals = map.as_slice();
    let at = |q: usize, p: usize| vals[p * t + q];

    let mut candidates: Vec<(usize, usize)> = Vec::new();
    for p in 0..mp {
        for q in 0..t {
            let v = at(q, p);
            if !(v > 0.0) {
                continue;
            }
            let mut is_max = true;
            'nb: for dp in [mp - 1, 0, 1] {
                for dq in [-1isize, 0, 1] {
                    let qq = q as isize + dq;
                    if (dp == 0 && dq == 0) || qq < 0 || qq >= t as isize {
                        continue;
                    }
                    if at(qq as usize, (p + dp) % mp) > v {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            if is_max {
                candidates.push((q, p));
            }
        }
    }
    candidates.sort_by(|a, b| at(b.0, b.1).total_cmp(&at(a.0, a.1)).then((a.1 * t + a.0).cmp(&(b.1 * t + b.0))));

    let mut picks: Vec<(usize, usize)> = Vec::with_capacity(k);
    for (q, p) in candidates {
        if picks.len() == k {
            break;
        }
        let suppressed = picks
            .iter()
            .any(|&(pq, pp)| pq.abs_diff(q) <= nms.radial && angular_gap(pp, p, mp) <= nms.angular);
        if !suppressed {
            picks.push((q, p));
        }
    }

    let mut out = picks
        .into_iter()
        .map(|(q, p)| grid.generator_point(q, p).map(Some))
        .collect::<Result<Vec<_>>>()?;
    out.resize(k, None);
    Ok(out)
}
