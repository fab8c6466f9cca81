//! Small dense strictly convex QPs
//! `min ½xᵀHx + gᵀx  s.t.  Ax ≤ b`, solved with the Goldfarb–Idnani dual
//! active-set method.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::QpError;

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// One multiplier per row of `A` (zero for inactive rows).
    pub multipliers: DVector<f64>,
    pub active: Vec<usize>,
    /// True when the slack-relaxed fallback produced the point.
    pub relaxed: bool,
}

/// Feasibility tolerance for declaring a row satisfied.
const FEAS_TOL: f64 = 1e-12;

fn check_dims(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
) -> Result<(), QpError> {
    let n = g.len();
    if h.shape() != (n, n) || a.ncols() != n || a.nrows() != b.len() {
        return Err(QpError::Dimension(format!(
            "H {:?}, g {}, A {:?}, b {}",
            h.shape(),
            n,
            a.shape(),
            b.len()
        )));
    }
    Ok(())
}

/// Solves the QP exactly or reports infeasibility.
pub fn solve_qp(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
) -> Result<QpSolution, QpError> {
    check_dims(h, g, a, b)?;
    let n = g.len();
    let m = b.len();
    let chol = h.clone().cholesky().ok_or(QpError::NotPositiveDefinite)?;
    let mut x = -chol.solve(g);
    let mut active: Vec<usize> = Vec::new();
    let mut mu: Vec<f64> = Vec::new();
    let row = |j: usize| a.row(j).transpose();
    let max_steps = 50 * (m + n) + 100;
    let mut steps = 0;

    loop {
        // most violated inactive row
        let mut p = None;
        let mut worst = 0.0;
        for j in 0..m {
            if active.contains(&j) {
                continue;
            }
            let v = row(j).dot(&x) - b[j];
            if v > FEAS_TOL * (1.0 + b[j].abs()) && v > worst {
                worst = v;
                p = Some(j);
            }
        }
        let Some(p) = p else { break };
        let ap = row(p);
        let hinv_ap = chol.solve(&ap);
        let curvature = ap.dot(&hinv_ap);
        let mut mu_p = 0.0;

        loop {
            steps += 1;
            if steps > max_steps {
                return Err(QpError::IterationLimit);
            }
            let (z, r) = step_direction(&chol, a, &active, &ap, &hinv_ap)?;
            let mut t1 = f64::INFINITY;
            let mut drop = None;
            for (s, &rs) in r.iter().enumerate() {
                if rs > 1e-14 {
                    let t = mu[s] / rs;
                    if t < t1 {
                        t1 = t;
                        drop = Some(s);
                    }
                }
            }
            let az = ap.dot(&z);
            let violation = ap.dot(&x) - b[p];
            let t2 = if az < -1e-12 * curvature.max(f64::MIN_POSITIVE) {
                violation.max(0.0) / -az
            } else {
                f64::INFINITY
            };
            let t = t1.min(t2);
            if !t.is_finite() {
                return Err(QpError::Infeasible);
            }
            if t2.is_finite() {
                x.axpy(t, &z, 1.0);
            }
            for (s, &rs) in r.iter().enumerate() {
                mu[s] -= t * rs;
            }
            mu_p += t;
            if t2 <= t1 {
                active.push(p);
                mu.push(mu_p);
                break;
            }
            let d = drop.expect("finite t1 implies a blocking multiplier");
            active.remove(d);
            mu.remove(d);
        }
    }
    let mut multipliers = DVector::zeros(m);
    for (s, &j) in active.iter().enumerate() {
        multipliers[j] = mu[s].max(0.0);
    }
    Ok(QpSolution {
        x,
        multipliers,
        active,
        relaxed: false,
    })
}

/// Primal direction `z` and active-multiplier direction `r` for adding `a_p`.
fn step_direction(
    chol: &Cholesky<f64, Dyn>,
    a: &DMatrix<f64>,
    active: &[usize],
    ap: &DVector<f64>,
    hinv_ap: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>), QpError> {
    if active.is_empty() {
        return Ok((-hinv_ap, DVector::zeros(0)));
    }
    let n = ap.len();
    let s = active.len();
    let mut nt = DMatrix::zeros(n, s);
    for (c, &j) in active.iter().enumerate() {
        nt.set_column(c, &a.row(j).transpose());
    }
    let hinv_n = chol.solve(&nt);
    let gram = nt.tr_mul(&hinv_n);
    let rhs = nt.tr_mul(hinv_ap);
    let r = match gram.clone().cholesky() {
        Some(c) => c.solve(&rhs),
        None => gram.lu().solve(&rhs).ok_or(QpError::NotPositiveDefinite)?,
    };
    let z = -(hinv_ap - hinv_n * &r);
    Ok((z, r))
}

/// Least-violation fallback: adds one slack per row,
/// `min ½xᵀHx + gᵀx + ½w‖s‖²  s.t.  Ax − s ≤ b, s ≥ 0`.
pub fn solve_relaxed(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    slack_weight: f64,
) -> Result<QpSolution, QpError> {
    check_dims(h, g, a, b)?;
    let (n, m) = (g.len(), b.len());
    let mut hr = DMatrix::zeros(n + m, n + m);
    hr.view_mut((0, 0), (n, n)).copy_from(h);
    for i in 0..m {
        hr[(n + i, n + i)] = slack_weight;
    }
    let mut gr = DVector::zeros(n + m);
    gr.rows_mut(0, n).copy_from(g);
    let mut ar = DMatrix::zeros(2 * m, n + m);
    ar.view_mut((0, 0), (m, n)).copy_from(a);
    let mut br = DVector::zeros(2 * m);
    br.rows_mut(0, m).copy_from(b);
    for i in 0..m {
        ar[(i, n + i)] = -1.0;
        ar[(m + i, n + i)] = -1.0;
    }
    let sol = solve_qp(&hr, &gr, &ar, &br)?;
    Ok(QpSolution {
        x: sol.x.rows(0, n).into_owned(),
        multipliers: sol.multipliers.rows(0, m).into_owned(),
        active: sol.active.into_iter().filter(|&j| j < m).collect(),
        relaxed: true,
    })
}

/// Exact solve, falling back to the relaxed problem when infeasible.
pub fn solve_or_relax(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
) -> Result<QpSolution, QpError> {
    match solve_qp(h, g, a, b) {
        Err(QpError::Infeasible) | Err(QpError::IterationLimit) => {
            let scale = (0..h.nrows()).map(|i| h[(i, i)].abs()).fold(1.0, f64::max);
            solve_relaxed(h, g, a, b, 1e6 * scale)
        }
        other => other,
    }
}

/// Stationarity residual `‖Hx + g + Aᵀμ‖∞` of a solution.
pub fn kkt_stationarity(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    a: &DMatrix<f64>,
    sol: &QpSolution,
) -> f64 {
    (h * &sol.x + g + a.tr_mul(&sol.multipliers)).amax()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unconstrained_minimum() {
        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 4.0]));
        let g = DVector::from_vec(vec![-2.0, 4.0]);
        let sol = solve_qp(&h, &g, &DMatrix::zeros(0, 2), &DVector::zeros(0)).unwrap();
        assert!((sol.x - DVector::from_vec(vec![1.0, -1.0])).norm() < 1e-14);
    }

    #[test]
    fn projection_onto_half_space() {
        // project (2, 2) onto x + y ≤ 2 → (1, 1)
        let h = DMatrix::identity(2, 2);
        let g = DVector::from_vec(vec![-2.0, -2.0]);
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let sol = solve_qp(&h, &g, &a, &DVector::from_element(1, 2.0)).unwrap();
        assert!((&sol.x - DVector::from_vec(vec![1.0, 1.0])).norm() < 1e-14);
        assert!((sol.multipliers[0] - 1.0).abs() < 1e-14);
        assert!(kkt_stationarity(&h, &g, &a, &sol) < 1e-12);
    }

    #[test]
    fn degenerate_duplicate_rows() {
        let h = DMatrix::identity(2, 2);
        let g = DVector::from_vec(vec![-3.0, 0.0]);
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 0.0, 2.0, 0.0]);
        let b = DVector::from_vec(vec![1.0, 1.0, 2.0]);
        let sol = solve_qp(&h, &g, &a, &b).unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-14);
        assert!(kkt_stationarity(&h, &g, &a, &sol) < 1e-12);
    }

    #[test]
    fn infeasible_then_relaxed() {
        let h = DMatrix::identity(1, 1);
        let g = DVector::zeros(1);
        let a = DMatrix::from_column_slice(2, 1, &[1.0, -1.0]);
        let b = DVector::from_vec(vec![-1.0, -1.0]); // x ≤ −1 and x ≥ 1
        assert_eq!(solve_qp(&h, &g, &a, &b), Err(QpError::Infeasible));
        let sol = solve_or_relax(&h, &g, &a, &b).unwrap();
        assert!(sol.relaxed);
        assert!(sol.x[0].abs() < 1e-6);
    }
}
