//! Image-source localizers.
//!
//! | method        | loudspeaker model | deconvolution     | localization     |
//! |---------------|-------------------|-------------------|------------------|
//! | GCC-PHAT      | angle-averaged    | phase transform   | LS trilateration |
//! | CC-DAS-OMNI   | angle-averaged    | cross-correlation | delay and sum    |
//! | CC-DAS        | per angle         | cross-correlation | delay and sum    |
//! | L1-OMNI       | angle-averaged    | sparse (lasso)    | plane wave       |
//! | L1            | per angle         | sparse (lasso)    | plane wave       |
//!
//! The omnidirectional variants run the same code on an operator rebuilt from
//! [`DirectivityTable::omni_collapse`](crate::directivity::DirectivityTable::omni_collapse).

mod gcc_phat;
mod peaks;
mod sparse;
mod trilateration;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::forward_model::{ChannelVector, ForwardOperator};

pub use gcc_phat::{gcc_phat_toa, gcc_phat_toas};
pub use peaks::{peak_pick, NmsWindow};
pub use sparse::{
    default_lambda, lasso_objective, lipschitz_constant, sparse_solve, sparse_solve_with_lipschitz,
    SolverConfig, SparseResult,
};
pub use trilateration::trilaterate;

/// Score per grid cell, in the grid's linear order.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateMap {
    values: Vec<f64>,
}

impl EstimateMap {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
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

    /// Index of the largest value; first one wins ties.
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &v) in self.values.iter().enumerate() {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
        best.map(|(i, _)| i)
    }
}

/// Localization methods compared by the experiment harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "GCC-PHAT")]
    GccPhat,
    #[serde(rename = "CC-DAS-OMNI")]
    CcDasOmni,
    #[serde(rename = "CC-DAS")]
    CcDas,
    #[serde(rename = "L1-OMNI")]
    L1Omni,
    #[serde(rename = "L1")]
    L1,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::GccPhat,
        Method::CcDasOmni,
        Method::CcDas,
        Method::L1Omni,
        Method::L1,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::GccPhat => "GCC-PHAT",
            Method::CcDasOmni => "CC-DAS-OMNI",
            Method::CcDas => "CC-DAS",
            Method::L1Omni => "L1-OMNI",
            Method::L1 => "L1",
        }
    }

    /// Whether the method models the loudspeaker per emission angle.
    pub fn directivity_aware(&self) -> bool {
        matches!(self, Method::CcDas | Method::L1)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_uppercase().replace('_', "-");
        Method::ALL
            .into_iter()
            .find(|m| m.name() == norm)
            .ok_or_else(|| format!("unknown method '{s}'"))
    }
}

/// Cross-correlation delay-and-sum map `|Φᵀ h|`.
pub fn cc_das(h: &ChannelVector, op: &ForwardOperator) -> Result<EstimateMap> {
    let back = op.adjoint(h)?;
    Ok(EstimateMap::new(back.as_slice().iter().map(|v| v.abs()).collect()))
}
