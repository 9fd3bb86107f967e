use nalgebra::{DMatrix, DVector};

use super::{MlcpProblem, MlcpSolution};
use crate::error::{Error, Result};

const PIVOT_EPS: f64 = 1e-12;

fn require_unilateral(problem: &MlcpProblem, solver: &str) -> Result<()> {
    problem.validate()?;
    if !problem.is_unilateral() {
        return Err(Error::MalformedProblem(format!(
            "{solver} accepts unilateral rows only"
        )));
    }
    Ok(())
}

/// Lemke's complementary pivoting method with the covering vector `e = 1`.
pub fn solve_lemke(problem: &MlcpProblem) -> Result<MlcpSolution> {
    require_unilateral(problem, "Lemke")?;
    let p = problem.len();
    if problem.q.iter().all(|&v| v >= 0.0) {
        return Ok(problem
            .solution(DVector::zeros(p), 0, f64::INFINITY)
            .checked());
    }

    // Columns: w (0..p), z (p..2p), z0 (2p), rhs (2p+1).
    let cols = 2 * p + 2;
    let z0 = 2 * p;
    let rhs = 2 * p + 1;
    let mut t = DMatrix::zeros(p, cols);
    for i in 0..p {
        t[(i, i)] = 1.0;
        for j in 0..p {
            t[(i, p + j)] = -problem.m[(i, j)];
        }
        t[(i, z0)] = -1.0;
        t[(i, rhs)] = problem.q[i];
    }
    let mut basis: Vec<usize> = (0..p).collect();

    let pivot = |t: &mut DMatrix<f64>, r: usize, c: usize| {
        let d = t[(r, c)];
        for j in 0..cols {
            t[(r, j)] /= d;
        }
        for i in 0..p {
            if i != r {
                let f = t[(i, c)];
                if f != 0.0 {
                    for j in 0..cols {
                        t[(i, j)] -= f * t[(r, j)];
                    }
                }
            }
        }
    };

    let mut leave = (0..p)
        .min_by(|&a, &b| problem.q[a].total_cmp(&problem.q[b]))
        .unwrap();
    pivot(&mut t, leave, z0);
    let mut leaving_var = basis[leave];
    basis[leave] = z0;

    let max_pivots = 50 * (p + 1);
    for it in 1..=max_pivots {
        let entering = if leaving_var < p {
            leaving_var + p
        } else {
            leaving_var - p
        };
        let mut best: Option<(f64, usize)> = None;
        for i in 0..p {
            let a = t[(i, entering)];
            if a > PIVOT_EPS {
                let ratio = t[(i, rhs)] / a;
                let better = match best {
                    None => true,
                    Some((r, bi)) => {
                        ratio < r - 1e-12
                            || ((ratio - r).abs() <= 1e-12
                                && (basis[i] == z0 || (basis[bi] != z0 && i < bi)))
                    }
                };
                if better {
                    best = Some((ratio, i));
                }
            }
        }
        let Some((_, r)) = best else {
            return Err(Error::NoSolution("Lemke: ray termination".into()));
        };
        leave = r;
        pivot(&mut t, leave, entering);
        leaving_var = basis[leave];
        basis[leave] = entering;
        if leaving_var == z0 {
            let mut z = DVector::zeros(p);
            for (i, &b) in basis.iter().enumerate() {
                if (p..2 * p).contains(&b) {
                    z[b - p] = t[(i, rhs)].max(0.0);
                }
            }
            return Ok(problem.solution(z, it, f64::INFINITY).checked());
        }
    }
    Err(Error::NoSolution("Lemke: pivot limit reached".into()))
}

/// Brute force over every active set. Intended as a test oracle.
pub fn solve_enumerate(problem: &MlcpProblem) -> Result<MlcpSolution> {
    require_unilateral(problem, "enumeration")?;
    let p = problem.len();
    if p > 12 {
        return Err(Error::MalformedProblem(format!(
            "enumeration limited to 12 rows, got {p}"
        )));
    }
    let tol = 1e-10;
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1 << p) {
        let active: Vec<usize> = (0..p).filter(|i| mask & (1 << i) != 0).collect();
        let mut z = DVector::zeros(p);
        if !active.is_empty() {
            let k = active.len();
            let a = DMatrix::from_fn(k, k, |i, j| problem.m[(active[i], active[j])]);
            let b = DVector::from_fn(k, |i, _| -problem.q[active[i]]);
            let Some(sol) = a.lu().solve(&b) else {
                continue;
            };
            for (i, &r) in active.iter().enumerate() {
                z[r] = sol[i];
            }
        }
        if z.iter().any(|v| !v.is_finite() || *v < -tol) {
            continue;
        }
        let w = problem.slack(&z);
        if w.iter().any(|v| *v < -tol) {
            continue;
        }
        for i in 0..p {
            z[i] = z[i].max(0.0);
        }
        let r = problem.residual(&z);
        if best.as_ref().is_none_or(|(br, _)| r < *br) {
            best = Some((r, z));
        }
    }
    match best {
        Some((_, z)) => Ok(problem.solution(z, 1 << p, f64::INFINITY).checked()),
        None => Err(Error::NoSolution("no feasible active set".into())),
    }
}

impl MlcpSolution {
    fn checked(mut self) -> Self {
        self.converged = self.residual < 1e-8;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_d() -> MlcpProblem {
        MlcpProblem::unilateral(
            DMatrix::from_element(1, 1, 2.0),
            DVector::from_element(1, -4.0),
        )
        .unwrap()
    }

    #[test]
    fn lemke_one_dimensional() {
        let s = solve_lemke(&one_d()).unwrap();
        assert!((s.z[0] - 2.0).abs() < 1e-12);
        assert!(s.w[0].abs() < 1e-12);
    }

    #[test]
    fn lemke_decoupled_rows() {
        let p =
            MlcpProblem::unilateral(DMatrix::identity(2, 2), DVector::from_vec(vec![-1.0, 1.0]))
                .unwrap();
        let s = solve_lemke(&p).unwrap();
        assert_eq!(s.z, DVector::from_vec(vec![1.0, 0.0]));
        assert_eq!(s.w, DVector::from_vec(vec![0.0, 1.0]));
    }

    #[test]
    fn lemke_reports_ray_termination() {
        let p = MlcpProblem::unilateral(
            DMatrix::from_element(1, 1, -1.0),
            DVector::from_element(1, -1.0),
        )
        .unwrap();
        assert!(matches!(solve_lemke(&p), Err(Error::NoSolution(_))));
    }

    #[test]
    fn enumerate_one_dimensional() {
        assert!((solve_enumerate(&one_d()).unwrap().z[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn enumerate_infeasible() {
        let p = MlcpProblem::unilateral(
            DMatrix::from_element(1, 1, -1.0),
            DVector::from_element(1, -1.0),
        )
        .unwrap();
        assert!(matches!(solve_enumerate(&p), Err(Error::NoSolution(_))));
    }
}
