use nalgebra::{DMatrix, DVector};

use super::{MlcpProblem, MlcpSolution, RowKind};

#[derive(Debug, Clone, Copy, PartialEq)]
enum RowState {
    /// `w = 0`, `z` unknown.
    Equation,
    /// `z = 0`.
    Zero,
    /// Boxed row at `sign * mu * z_normal`.
    Clamped(f64),
}

/// Primal-dual active-set iterations starting from `initial`, usually a PGS
/// iterate. Each iteration guesses which bounds are active, solves the
/// resulting linear system exactly and reclassifies. Returns the best iterate.
pub fn refine_active_set(
    problem: &MlcpProblem,
    initial: &DVector<f64>,
    max_iter: usize,
    tol: f64,
) -> MlcpSolution {
    let p = problem.len();
    let mut best = problem.solution(initial.clone(), 0, tol);
    if p == 0 || best.converged {
        return best;
    }
    let mut z = initial.clone();
    let mut previous: Option<Vec<RowState>> = None;
    for it in 1..=max_iter {
        let w = problem.slack(&z);
        let states = classify(problem, &z, &w);
        if previous.as_ref() == Some(&states) {
            break;
        }
        let Some(next) = solve_with(problem, &states) else {
            break;
        };
        z = next;
        let candidate = problem.solution(z.clone(), it, tol);
        if candidate.residual < best.residual {
            best = candidate;
        }
        if best.converged {
            break;
        }
        previous = Some(states);
    }
    best
}

fn classify(problem: &MlcpProblem, z: &DVector<f64>, w: &DVector<f64>) -> Vec<RowState> {
    let p = problem.len();
    let mut states = vec![RowState::Equation; p];
    for i in 0..p {
        let y = z[i] - w[i] / problem.m[(i, i)];
        states[i] = match problem.kinds[i] {
            RowKind::Bilateral => RowState::Equation,
            RowKind::Unilateral => {
                if y > 0.0 {
                    RowState::Equation
                } else {
                    RowState::Zero
                }
            }
            RowKind::Boxed { .. } => RowState::Equation,
        };
    }
    for i in 0..p {
        if let RowKind::Boxed { normal_row, mu } = problem.kinds[i] {
            let y = z[i] - w[i] / problem.m[(i, i)];
            let b = mu * z[normal_row].max(0.0);
            states[i] = if states[normal_row] != RowState::Equation || mu == 0.0 {
                RowState::Zero
            } else if y >= b {
                RowState::Clamped(1.0)
            } else if y <= -b {
                RowState::Clamped(-1.0)
            } else {
                RowState::Equation
            };
        }
    }
    states
}

fn solve_with(problem: &MlcpProblem, states: &[RowState]) -> Option<DVector<f64>> {
    let p = problem.len();
    let unknowns: Vec<usize> = (0..p)
        .filter(|&i| states[i] == RowState::Equation)
        .collect();
    let mut index = vec![usize::MAX; p];
    for (k, &i) in unknowns.iter().enumerate() {
        index[i] = k;
    }
    // Column of each unknown, including clamped friction rows tied to it.
    let k = unknowns.len();
    let mut a = DMatrix::zeros(k, k);
    let mut b = DVector::zeros(k);
    for (r, &i) in unknowns.iter().enumerate() {
        b[r] = -problem.q[i];
        for (c, &j) in unknowns.iter().enumerate() {
            a[(r, c)] = problem.m[(i, j)];
        }
        for t in 0..p {
            if let (RowState::Clamped(sign), RowKind::Boxed { normal_row, mu }) =
                (states[t], problem.kinds[t])
            {
                a[(r, index[normal_row])] += problem.m[(i, t)] * sign * mu;
            }
        }
    }
    let sol = if k > 0 {
        a.lu().solve(&b)?
    } else {
        DVector::zeros(0)
    };
    let mut z = DVector::zeros(p);
    for (r, &i) in unknowns.iter().enumerate() {
        z[i] = sol[r];
    }
    for t in 0..p {
        if let (RowState::Clamped(sign), RowKind::Boxed { normal_row, mu }) =
            (states[t], problem.kinds[t])
        {
            z[t] = sign * mu * z[normal_row];
        }
    }
    z.iter().all(|v| v.is_finite()).then_some(z)
}
