//! Per-timestep safe-set projections with diagonal weights.

use nalgebra::{DMatrix, DVector};

use crate::constraints::BoxConstraint;
use crate::error::QpError;
use crate::qp;

/// Outcome of one weighted projection.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub point: DVector<f64>,
    /// Least-violation fallback was used.
    pub relaxed: bool,
}

/// `argmin ½‖v − t‖²_H  s.t.  a_r·v ≤ b_r` with diagonal `H > 0`.
///
/// Only coordinates touched by some row enter the QP; the rest equal the
/// target. Falls back to a slack-relaxed solve when the rows conflict.
pub fn project_weighted(
    h: &DVector<f64>,
    target: &DVector<f64>,
    rows: &[(DVector<f64>, f64)],
) -> Result<Projection, QpError> {
    let n = target.len();
    if h.len() != n || rows.iter().any(|(a, _)| a.len() != n) {
        return Err(QpError::Dimension(
            "projection rows do not match the target".into(),
        ));
    }
    if h.iter().any(|&w| !(w > 0.0)) {
        return Err(QpError::NotPositiveDefinite);
    }
    let violated = rows
        .iter()
        .any(|(a, b)| a.dot(target) - b > 1e-12 * (1.0 + b.abs()));
    if !violated {
        return Ok(Projection {
            point: target.clone(),
            relaxed: false,
        });
    }
    let used: Vec<usize> = (0..n)
        .filter(|&c| rows.iter().any(|(a, _)| a[c] != 0.0))
        .collect();
    let r = used.len();
    let hm = DMatrix::from_diagonal(&DVector::from_iterator(r, used.iter().map(|&c| h[c])));
    let g = DVector::from_iterator(r, used.iter().map(|&c| -h[c] * target[c]));
    let mut a = DMatrix::zeros(rows.len(), r);
    let mut b = DVector::zeros(rows.len());
    for (i, (row, bi)) in rows.iter().enumerate() {
        for (j, &c) in used.iter().enumerate() {
            a[(i, j)] = row[c];
        }
        b[i] = *bi;
    }
    let sol = qp::solve_or_relax(&hm, &g, &a, &b)?;
    let mut point = target.clone();
    for (j, &c) in used.iter().enumerate() {
        point[c] = sol.x[j];
    }
    Ok(Projection {
        point,
        relaxed: sol.relaxed,
    })
}

/// Safe control: clamp for plain boxes, exact QP for mapped ones.
pub fn project_control(
    weight: &DVector<f64>,
    target: &DVector<f64>,
    bounds: Option<&BoxConstraint>,
) -> Result<Projection, QpError> {
    match bounds {
        None => Ok(Projection {
            point: target.clone(),
            relaxed: false,
        }),
        Some(b) if b.map.is_none() => {
            let mut v = target.clone();
            b.clamp(&mut v);
            Ok(Projection {
                point: v,
                relaxed: false,
            })
        }
        Some(b) => project_weighted(weight, target, &b.as_rows(target.len())),
    }
}

/// Weighted combination `(w_a ⊙ a + w_b ⊙ b) / (w_a + w_b)`.
pub fn blend(
    wa: &DVector<f64>,
    a: &DVector<f64>,
    wb: &DVector<f64>,
    b: &DVector<f64>,
) -> DVector<f64> {
    (a.component_mul(wa) + b.component_mul(wb)).component_div(&(wa + wb))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::{wheel_speed_map, Target};

    #[test]
    fn interior_target_is_returned() {
        let t = DVector::from_vec(vec![0.2, 0.3]);
        let rows = vec![(DVector::from_vec(vec![1.0, 0.0]), 1.0)];
        let p = project_weighted(&DVector::from_element(2, 3.0), &t, &rows).unwrap();
        assert_eq!(p.point, t);
    }

    #[test]
    fn uniform_weights_give_euclidean_projection() {
        let t = DVector::from_vec(vec![2.0, 2.0, 5.0]);
        let a = DVector::from_vec(vec![1.0, 1.0, 0.0]);
        let p = project_weighted(&DVector::from_element(3, 7.0), &t, &[(a.clone(), 2.0)]).unwrap();
        let expect = &t - &a * ((a.dot(&t) - 2.0) / a.norm_squared());
        assert!((p.point - expect).norm() < 1e-12);
    }

    #[test]
    fn clamp_example() {
        let b = BoxConstraint::new(
            Target::Control,
            vec![0],
            vec![-10.0],
            vec![10.0],
            None,
            None,
        )
        .unwrap();
        let p = project_control(
            &DVector::from_element(1, 1.0),
            &DVector::from_element(1, 15.0),
            Some(&b),
        )
        .unwrap();
        assert_eq!(p.point[0], 10.0);
    }

    #[test]
    fn wheel_box_projection_is_feasible() {
        let c = wheel_speed_map(0.016, 0.11);
        let b = BoxConstraint::new(
            Target::Control,
            vec![0, 1],
            vec![-12.5; 2],
            vec![12.5; 2],
            Some(c.clone()),
            None,
        )
        .unwrap();
        let t = DVector::from_vec(vec![0.5, 2.0]);
        let p = project_control(&DVector::from_vec(vec![100.0, 10.0]), &t, Some(&b)).unwrap();
        assert!(b.contains(&p.point, 1e-9));
        assert!(!b.contains(&t, 0.0));
    }
}
