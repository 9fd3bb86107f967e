use nalgebra::DVector;

use super::{MlcpProblem, MlcpSolution};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgsParams {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for PgsParams {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol: 1e-8,
        }
    }
}

/// Projected Gauss-Seidel from a cold start.
pub fn solve_pgs(problem: &MlcpProblem, max_iter: usize, tol: f64) -> Result<MlcpSolution> {
    solve_pgs_warm(problem, max_iter, tol, None)
}

/// Projected Gauss-Seidel starting from `initial` when given.
pub fn solve_pgs_warm(
    problem: &MlcpProblem,
    max_iter: usize,
    tol: f64,
    initial: Option<&DVector<f64>>,
) -> Result<MlcpSolution> {
    problem.validate()?;
    let p = problem.len();
    for i in 0..p {
        let d = problem.m[(i, i)];
        if !(d > 0.0) {
            return Err(Error::ZeroDiagonal { row: i, value: d });
        }
    }
    let mut z = match initial {
        Some(z0) if z0.len() == p => z0.clone(),
        _ => DVector::zeros(p),
    };
    for i in 0..p {
        let (lo, hi) = problem.bounds(i, &z);
        z[i] = z[i].clamp(lo, hi);
    }
    if p == 0 {
        return Ok(problem.solution(z, 0, tol));
    }
    let mut w = problem.slack(&z);
    let mut residual = problem.residual(&z);
    let mut iterations = 0;
    while residual >= tol && iterations < max_iter {
        for i in 0..p {
            let (lo, hi) = problem.bounds(i, &z);
            let new = (z[i] - w[i] / problem.m[(i, i)]).clamp(lo, hi);
            let dz = new - z[i];
            if dz != 0.0 {
                z[i] = new;
                w.axpy(dz, &problem.m.column(i), 1.0);
            }
        }
        iterations += 1;
        residual = problem.residual(&z);
    }
    Ok(problem.solution(z, iterations, tol))
}
