//! Mixed linear complementarity problems `w = M z + q` with per-row bounds on
//! `z`, and the solvers used for them.

mod active_set;
mod pgs;
mod pivoting;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use active_set::refine_active_set;
pub use pgs::{solve_pgs, solve_pgs_warm, PgsParams};
pub use pivoting::{solve_enumerate, solve_lemke};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    /// `0 <= z ⊥ w >= 0`
    Unilateral,
    /// `z` free, `w = 0`
    Bilateral,
    /// `|z| <= mu * z[normal_row]`
    Boxed { normal_row: usize, mu: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlcpProblem {
    pub m: DMatrix<f64>,
    pub q: DVector<f64>,
    pub kinds: Vec<RowKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlcpSolution {
    pub z: DVector<f64>,
    pub w: DVector<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

#[derive(Serialize, Deserialize)]
struct ProblemDump {
    #[serde(rename = "M")]
    m: Vec<Vec<f64>>,
    q: Vec<f64>,
    kinds: Vec<RowKind>,
}

impl MlcpProblem {
    pub fn new(m: DMatrix<f64>, q: DVector<f64>, kinds: Vec<RowKind>) -> Result<Self> {
        let p = Self { m, q, kinds };
        p.validate()?;
        Ok(p)
    }

    /// Problem made of unilateral rows only.
    pub fn unilateral(m: DMatrix<f64>, q: DVector<f64>) -> Result<Self> {
        let n = q.len();
        Self::new(m, q, vec![RowKind::Unilateral; n])
    }

    pub fn empty() -> Self {
        Self {
            m: DMatrix::zeros(0, 0),
            q: DVector::zeros(0),
            kinds: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.q.len();
        if self.m.nrows() != p || self.m.ncols() != p || self.kinds.len() != p {
            return Err(Error::MalformedProblem(format!(
                "M is {}x{}, q has {} rows, {} row kinds",
                self.m.nrows(),
                self.m.ncols(),
                p,
                self.kinds.len()
            )));
        }
        for (i, k) in self.kinds.iter().enumerate() {
            if let RowKind::Boxed { normal_row, mu } = *k {
                if normal_row >= p || self.kinds[normal_row] != RowKind::Unilateral {
                    return Err(Error::MalformedProblem(format!(
                        "row {i}: boxed row must reference a unilateral row, got {normal_row}"
                    )));
                }
                if !(mu >= 0.0) {
                    return Err(Error::MalformedProblem(format!(
                        "row {i}: friction must be >= 0"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn is_unilateral(&self) -> bool {
        self.kinds.iter().all(|k| *k == RowKind::Unilateral)
    }

    /// `w = M z + q`.
    pub fn slack(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.m * z + &self.q
    }

    /// Bounds of row `i` given the current iterate.
    pub fn bounds(&self, i: usize, z: &DVector<f64>) -> (f64, f64) {
        match self.kinds[i] {
            RowKind::Unilateral => (0.0, f64::INFINITY),
            RowKind::Bilateral => (f64::NEG_INFINITY, f64::INFINITY),
            RowKind::Boxed { normal_row, mu } => {
                let c = mu * z[normal_row].max(0.0);
                (-c, c)
            }
        }
    }

    /// Largest per-row violation of the complementarity conditions, measured
    /// by the natural map `|z - clamp(z - w)|` plus any bound violation.
    pub fn residual(&self, z: &DVector<f64>) -> f64 {
        let w = self.slack(z);
        (0..self.len())
            .map(|i| {
                let (lo, hi) = self.bounds(i, z);
                let natural = (z[i] - (z[i] - w[i]).clamp(lo, hi)).abs();
                let outside = (lo - z[i]).max(z[i] - hi).max(0.0);
                natural.max(outside)
            })
            .fold(0.0, f64::max)
    }

    pub fn solution(&self, z: DVector<f64>, iterations: usize, tol: f64) -> MlcpSolution {
        let w = self.slack(&z);
        let residual = self.residual(&z);
        MlcpSolution {
            z,
            w,
            iterations,
            residual,
            converged: residual < tol,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let dump = ProblemDump {
            m: self
                .m
                .row_iter()
                .map(|r| r.iter().cloned().collect())
                .collect(),
            q: self.q.iter().cloned().collect(),
            kinds: self.kinds.clone(),
        };
        Ok(serde_json::to_string(&dump)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let dump: ProblemDump = serde_json::from_str(text)?;
        let p = dump.q.len();
        if dump.m.len() != p || dump.m.iter().any(|r| r.len() != p) {
            return Err(Error::MalformedProblem(
                "M must be square and match q".into(),
            ));
        }
        let m = DMatrix::from_fn(p, p, |i, j| dump.m[i][j]);
        Self::new(m, DVector::from_vec(dump.q), dump.kinds)
    }
}
