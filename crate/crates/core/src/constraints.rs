//! Inequality constraints `s(x, u, k) ≤ 0` and their half-space
//! linearizations.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::ConstraintError;

/// Value reported by rows outside their activation window.
pub const INACTIVE: f64 = -1e9;
/// Floor on distances used in gradients of distance rows.
pub const DISTANCE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    State,
    Control,
}

/// Inclusive range of timesteps `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: usize,
    pub end: usize,
}

impl Window {
    pub fn contains(&self, k: usize) -> bool {
        k >= self.start && k <= self.end
    }
}

/// Componentwise bounds `lower ≤ C v ≤ upper` on selected components `v`.
///
/// Infinite bounds produce no row. Rows are laid out per mapped component:
/// the upper row first, then the lower row.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxConstraint {
    pub target: Target,
    pub indices: Vec<usize>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub map: Option<DMatrix<f64>>,
    pub window: Option<Window>,
}

impl BoxConstraint {
    pub fn new(
        target: Target,
        indices: Vec<usize>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        map: Option<DMatrix<f64>>,
        window: Option<Window>,
    ) -> Result<Self, ConstraintError> {
        let n = indices.len();
        if lower.len() != n || upper.len() != n {
            return Err(ConstraintError::Invalid(
                "box bounds must match the selected components".into(),
            ));
        }
        if lower
            .iter()
            .zip(&upper)
            .any(|(l, u)| l > u || l.is_nan() || u.is_nan())
        {
            return Err(ConstraintError::Invalid(
                "box lower bound exceeds upper bound".into(),
            ));
        }
        if let Some(c) = &map {
            if c.shape() != (n, n) {
                return Err(ConstraintError::Invalid(
                    "box map must be square over the selected components".into(),
                ));
            }
            if c.clone().lu().determinant().abs() < 1e-12 {
                return Err(ConstraintError::Invalid(
                    "box map must be invertible".into(),
                ));
            }
        }
        Ok(Self {
            target,
            indices,
            lower,
            upper,
            map,
            window,
        })
    }

    /// Mapped values `C v` (or `v`).
    pub fn mapped(&self, v: &DVector<f64>) -> DVector<f64> {
        let sel = DVector::from_iterator(self.indices.len(), self.indices.iter().map(|&i| v[i]));
        match &self.map {
            Some(c) => c * sel,
            None => sel,
        }
    }

    /// True when `v` satisfies the bounds up to `tol`.
    pub fn contains(&self, v: &DVector<f64>, tol: f64) -> bool {
        let m = self.mapped(v);
        m.iter()
            .enumerate()
            .all(|(c, &x)| x <= self.upper[c] + tol && x >= self.lower[c] - tol)
    }

    /// Clamps the selected components into the box; only valid without a map.
    pub fn clamp(&self, v: &mut DVector<f64>) {
        debug_assert!(self.map.is_none());
        for (c, &i) in self.indices.iter().enumerate() {
            v[i] = v[i].clamp(self.lower[c], self.upper[c]);
        }
    }

    fn row_layout(&self) -> Vec<(usize, bool)> {
        let mut rows = Vec::new();
        for c in 0..self.indices.len() {
            if self.upper[c].is_finite() {
                rows.push((c, true));
            }
            if self.lower[c].is_finite() {
                rows.push((c, false));
            }
        }
        rows
    }

    /// Rows `a·v ≤ b` in the full vector space of dimension `dim`.
    pub fn as_rows(&self, dim: usize) -> Vec<(DVector<f64>, f64)> {
        self.row_layout()
            .into_iter()
            .map(|(c, upper)| {
                let mut a = DVector::zeros(dim);
                for (j, &i) in self.indices.iter().enumerate() {
                    a[i] = match &self.map {
                        Some(m) => m[(c, j)],
                        None if j == c => 1.0,
                        None => 0.0,
                    };
                }
                if upper {
                    (a, self.upper[c])
                } else {
                    (-a, -self.lower[c])
                }
            })
            .collect()
    }
}

/// Keeps a point at least `radius + clearance` from `center`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleConstraint {
    /// State indices holding the position.
    pub position: Vec<usize>,
    pub center: DVector<f64>,
    pub radius: f64,
    pub clearance: f64,
    pub window: Option<Window>,
}

impl ObstacleConstraint {
    pub fn new(
        position: Vec<usize>,
        center: DVector<f64>,
        radius: f64,
        clearance: f64,
    ) -> Result<Self, ConstraintError> {
        if position.len() != center.len() || !(2..=3).contains(&center.len()) {
            return Err(ConstraintError::Invalid(
                "obstacle center must be 2D or 3D and match the position slice".into(),
            ));
        }
        if !(radius > 0.0) || !(clearance >= 0.0) {
            return Err(ConstraintError::Invalid(
                "obstacle radius must be positive and clearance nonnegative".into(),
            ));
        }
        Ok(Self {
            position,
            center,
            radius,
            clearance,
            window: None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterAgentKind {
    /// `‖p_i − p_j‖ ≥ d`.
    Collision,
    /// `‖p_i − p_j‖ ≤ d`.
    Connectivity,
}

/// Distance constraint between two position slices of one state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct InterAgentConstraint {
    pub kind: InterAgentKind,
    pub threshold: f64,
    pub own: Vec<usize>,
    pub other: Vec<usize>,
    /// Agent id of the other party.
    pub neighbor: usize,
    pub window: Option<Window>,
}

/// One constraint family entry.
#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    Box(BoxConstraint),
    Obstacle(ObstacleConstraint),
    InterAgent(InterAgentConstraint),
}

fn distance(x: &DVector<f64>, a: &[usize], b: &[usize]) -> (f64, DVector<f64>) {
    let d = DVector::from_iterator(a.len(), a.iter().zip(b).map(|(&i, &j)| x[i] - x[j]));
    (d.norm(), d)
}

impl Constraint {
    pub fn rows(&self) -> usize {
        match self {
            Constraint::Box(b) => b.row_layout().len(),
            _ => 1,
        }
    }

    pub fn window(&self) -> Option<Window> {
        match self {
            Constraint::Box(b) => b.window,
            Constraint::Obstacle(o) => o.window,
            Constraint::InterAgent(c) => c.window,
        }
    }

    fn uses_control(&self) -> bool {
        matches!(self, Constraint::Box(b) if b.target == Target::Control)
    }

    /// Active at step `k`; control rows are never active at the terminal step.
    pub fn is_active(&self, k: usize, terminal: bool) -> bool {
        if terminal && self.uses_control() {
            return false;
        }
        self.window().is_none_or(|w| w.contains(k))
    }

    fn eval_into(&self, x: &DVector<f64>, u: Option<&DVector<f64>>, out: &mut [f64]) {
        match self {
            Constraint::Box(b) => {
                let v = match b.target {
                    Target::State => x,
                    Target::Control => u.expect("control row evaluated without control"),
                };
                let m = b.mapped(v);
                for (r, (c, upper)) in b.row_layout().into_iter().enumerate() {
                    out[r] = if upper {
                        m[c] - b.upper[c]
                    } else {
                        b.lower[c] - m[c]
                    };
                }
            }
            Constraint::Obstacle(o) => {
                let p = DVector::from_iterator(o.position.len(), o.position.iter().map(|&i| x[i]));
                out[0] = o.radius + o.clearance - (p - &o.center).norm();
            }
            Constraint::InterAgent(c) => {
                let (d, _) = distance(x, &c.own, &c.other);
                out[0] = match c.kind {
                    InterAgentKind::Collision => c.threshold - d,
                    InterAgentKind::Connectivity => d - c.threshold,
                };
            }
        }
    }

    fn jacobian_into(
        &self,
        x: &DVector<f64>,
        row0: usize,
        jx: &mut DMatrix<f64>,
        ju: &mut DMatrix<f64>,
    ) {
        match self {
            Constraint::Box(b) => {
                let target = if b.target == Target::State { jx } else { ju };
                for (r, (c, upper)) in b.row_layout().into_iter().enumerate() {
                    let sign = if upper { 1.0 } else { -1.0 };
                    for (j, &i) in b.indices.iter().enumerate() {
                        let coef = match &b.map {
                            Some(m) => m[(c, j)],
                            None if j == c => 1.0,
                            None => 0.0,
                        };
                        target[(row0 + r, i)] = sign * coef;
                    }
                }
            }
            Constraint::Obstacle(o) => {
                let p = DVector::from_iterator(o.position.len(), o.position.iter().map(|&i| x[i]));
                let d = p - &o.center;
                let n = d.norm().max(DISTANCE_FLOOR);
                for (j, &i) in o.position.iter().enumerate() {
                    jx[(row0, i)] = -d[j] / n;
                }
            }
            Constraint::InterAgent(c) => {
                let (dist, d) = distance(x, &c.own, &c.other);
                let n = dist.max(DISTANCE_FLOOR);
                let sign = match c.kind {
                    InterAgentKind::Collision => -1.0,
                    InterAgentKind::Connectivity => 1.0,
                };
                for j in 0..d.len() {
                    jx[(row0, c.own[j])] += sign * d[j] / n;
                    jx[(row0, c.other[j])] -= sign * d[j] / n;
                }
            }
        }
    }

    /// Same constraint acting on a larger vector where this one's state
    /// and control components start at the given offsets.
    pub fn shifted(&self, state_offset: usize, control_offset: usize) -> Self {
        let shift = |v: &[usize], o: usize| v.iter().map(|i| i + o).collect::<Vec<_>>();
        match self {
            Constraint::Box(b) => {
                let o = if b.target == Target::State {
                    state_offset
                } else {
                    control_offset
                };
                Constraint::Box(BoxConstraint {
                    indices: shift(&b.indices, o),
                    ..b.clone()
                })
            }
            Constraint::Obstacle(ob) => Constraint::Obstacle(ObstacleConstraint {
                position: shift(&ob.position, state_offset),
                ..ob.clone()
            }),
            Constraint::InterAgent(c) => Constraint::InterAgent(InterAgentConstraint {
                own: shift(&c.own, state_offset),
                other: shift(&c.other, state_offset),
                ..c.clone()
            }),
        }
    }
}

/// Ordered list of constraints with a fixed row layout.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConstraintStack {
    pub constraints: Vec<Constraint>,
}

impl ConstraintStack {
    pub fn new(constraints: Vec<Constraint>) -> Self {
        Self { constraints }
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.constraints.iter().map(Constraint::rows).sum()
    }

    /// Stacked values at step `k`; pass `u = None` at the terminal step.
    pub fn eval(&self, x: &DVector<f64>, u: Option<&DVector<f64>>, k: usize) -> DVector<f64> {
        let mut out = DVector::from_element(self.rows(), INACTIVE);
        let mut r = 0;
        for c in &self.constraints {
            let n = c.rows();
            if c.is_active(k, u.is_none()) {
                c.eval_into(x, u, &mut out.as_mut_slice()[r..r + n]);
            }
            r += n;
        }
        out
    }

    /// Jacobians `(∂s/∂x, ∂s/∂u)`; inactive rows are zero.
    pub fn jacobians(
        &self,
        x: &DVector<f64>,
        u: Option<&DVector<f64>>,
        k: usize,
        q: usize,
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        let rows = self.rows();
        let mut jx = DMatrix::zeros(rows, x.len());
        let mut ju = DMatrix::zeros(rows, q);
        let mut r = 0;
        for c in &self.constraints {
            if c.is_active(k, u.is_none()) {
                c.jacobian_into(x, r, &mut jx, &mut ju);
            }
            r += c.rows();
        }
        (jx, ju)
    }

    /// Largest row value over a trajectory (0 when empty).
    pub fn max_violation(&self, states: &[DVector<f64>], controls: &[DVector<f64>]) -> f64 {
        let mut worst: f64 = 0.0;
        for (k, x) in states.iter().enumerate() {
            let s = self.eval(x, controls.get(k), k);
            worst = s.iter().fold(worst, |a, &b| a.max(b));
        }
        worst
    }
}

/// Convenience wrapper matching the stacked evaluation signature.
pub fn eval_stack(
    stack: &ConstraintStack,
    x: &DVector<f64>,
    u: Option<&DVector<f64>>,
    k: usize,
) -> DVector<f64> {
    stack.eval(x, u, k)
}

/// `normal · (x[plus] − x[minus]) ≤ offset` at step `k`; `minus` may be empty.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpace {
    pub normal: DVector<f64>,
    pub offset: f64,
    pub plus: Vec<usize>,
    pub minus: Vec<usize>,
    pub step: usize,
}

impl HalfSpace {
    /// Dense row `a` with `a·x ≤ offset`.
    pub fn row(&self, dim: usize) -> DVector<f64> {
        let mut a = DVector::zeros(dim);
        for (j, &i) in self.plus.iter().enumerate() {
            a[i] += self.normal[j];
        }
        for (j, &i) in self.minus.iter().enumerate() {
            a[i] -= self.normal[j];
        }
        a
    }

    /// `normal·(x[plus] − x[minus]) − offset`; positive means violated.
    pub fn residual(&self, x: &DVector<f64>) -> f64 {
        let mut v = -self.offset;
        for (j, &i) in self.plus.iter().enumerate() {
            v += self.normal[j] * x[i];
        }
        for (j, &i) in self.minus.iter().enumerate() {
            v -= self.normal[j] * x[i];
        }
        v
    }
}

fn unit_between(
    a: &DVector<f64>,
    b: &DVector<f64>,
    step: usize,
) -> Result<DVector<f64>, ConstraintError> {
    let d = a - b;
    let n = d.norm();
    if n <= DISTANCE_FLOOR {
        return Err(ConstraintError::Degenerate { step });
    }
    Ok(d / n)
}

/// Linearizes an inter-agent row around reference positions.
///
/// Collision yields `n·(p_i − p_j) ≥ d_col`, connectivity
/// `n·(p_i − p_j) ≤ d_con`, with `n` the unit vector from `p̄_j` to `p̄_i`.
/// Indices are taken from `c`, so the half-space acts on the same vector.
pub fn linearize_interagent(
    c: &InterAgentConstraint,
    ref_own: &DVector<f64>,
    ref_other: &DVector<f64>,
    step: usize,
) -> Result<HalfSpace, ConstraintError> {
    let n = unit_between(ref_own, ref_other, step)?;
    Ok(match c.kind {
        InterAgentKind::Collision => HalfSpace {
            normal: -n,
            offset: -c.threshold,
            plus: c.own.clone(),
            minus: c.other.clone(),
            step,
        },
        InterAgentKind::Connectivity => HalfSpace {
            normal: n,
            offset: c.threshold,
            plus: c.own.clone(),
            minus: c.other.clone(),
            step,
        },
    })
}

/// Linearizes an obstacle row around a reference position:
/// `n·(p − p_o) ≥ r_o + d_o`.
pub fn linearize_obstacle(
    o: &ObstacleConstraint,
    reference: &DVector<f64>,
    step: usize,
) -> Result<HalfSpace, ConstraintError> {
    let n = unit_between(reference, &o.center, step)?;
    let offset = -(o.radius + o.clearance) - n.dot(&o.center);
    Ok(HalfSpace {
        normal: -n,
        offset,
        plus: o.position.clone(),
        minus: vec![],
        step,
    })
}

/// Fixed outer polytope of the ball `‖p_i − p_j‖ ≤ d`: tangent planes along
/// 8 directions in 2D or the 26 grid directions in 3D.
pub fn connectivity_polytope(c: &InterAgentConstraint, step: usize) -> Vec<HalfSpace> {
    let dim = c.own.len();
    let dirs: Vec<DVector<f64>> = if dim == 2 {
        (0..8)
            .map(|m| {
                let a = m as f64 * std::f64::consts::FRAC_PI_4;
                DVector::from_vec(vec![a.cos(), a.sin()])
            })
            .collect()
    } else {
        let mut v = Vec::new();
        for a in -1..=1 {
            for b in -1..=1 {
                for cc in -1..=1 {
                    if (a, b, cc) != (0, 0, 0) {
                        v.push(DVector::from_vec(vec![a as f64, b as f64, cc as f64]).normalize());
                    }
                }
            }
        }
        v
    };
    dirs.into_iter()
        .map(|n| HalfSpace {
            normal: n,
            offset: c.threshold,
            plus: c.own.clone(),
            minus: c.other.clone(),
            step,
        })
        .collect()
}

/// Wheel-speed map `C = 1/(2R) [[2, L], [2, −L]]` for `(v, ω)` controls.
pub fn wheel_speed_map(wheel_radius: f64, axle_length: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[2.0, axle_length, 2.0, -axle_length]) / (2.0 * wheel_radius)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(kind: InterAgentKind, d: f64) -> InterAgentConstraint {
        InterAgentConstraint {
            kind,
            threshold: d,
            own: vec![0, 1],
            other: vec![2, 3],
            neighbor: 1,
            window: None,
        }
    }

    #[test]
    fn obstacle_boundary_row_is_zero() {
        let o = ObstacleConstraint::new(vec![0, 1], DVector::from_vec(vec![1.0, 1.0]), 0.5, 0.3)
            .unwrap();
        let stack = ConstraintStack::new(vec![Constraint::Obstacle(o)]);
        let x = DVector::from_vec(vec![1.8, 1.0, 0.0]);
        assert!(stack.eval(&x, None, 0)[0].abs() < 1e-15);
    }

    #[test]
    fn collision_row_value() {
        let stack = ConstraintStack::new(vec![Constraint::InterAgent(pair(
            InterAgentKind::Collision,
            0.3,
        ))]);
        let x = DVector::from_vec(vec![0.5, 0.0, 0.0, 0.0]);
        assert!((stack.eval(&x, None, 0)[0] + 0.2).abs() < 1e-15);
    }

    #[test]
    fn window_deactivates_rows() {
        let gate = BoxConstraint::new(
            Target::State,
            vec![1],
            vec![-1.0],
            vec![1.0],
            None,
            Some(Window {
                start: 30,
                end: 100,
            }),
        )
        .unwrap();
        let stack = ConstraintStack::new(vec![Constraint::Box(gate)]);
        let x = DVector::from_vec(vec![0.0, 5.0]);
        assert!(stack.eval(&x, None, 29).iter().all(|&v| v == INACTIVE));
        assert!(stack.eval(&x, None, 101).iter().all(|&v| v == INACTIVE));
        assert_eq!(stack.eval(&x, None, 30)[0], 4.0);
    }

    #[test]
    fn control_rows_inactive_at_terminal() {
        let b = BoxConstraint::new(Target::Control, vec![0], vec![-1.0], vec![1.0], None, None)
            .unwrap();
        let stack = ConstraintStack::new(vec![Constraint::Box(b)]);
        assert!(stack
            .eval(&DVector::zeros(2), None, 10)
            .iter()
            .all(|&v| v == INACTIVE));
    }

    #[test]
    fn linearization_example() {
        let c = pair(InterAgentKind::Collision, 0.3);
        let h = linearize_interagent(
            &c,
            &DVector::from_vec(vec![1.0, 0.0]),
            &DVector::zeros(2),
            0,
        )
        .unwrap();
        // x-component(p_i − p_j) ≥ 0.3
        let x = DVector::from_vec(vec![0.3, 5.0, 0.0, -2.0]);
        assert!(h.residual(&x).abs() < 1e-15);
        assert!(h.residual(&DVector::from_vec(vec![0.4, 0.0, 0.0, 0.0])) < 0.0);
        assert!((h.normal.norm() - 1.0).abs() < 1e-9);
        assert_eq!(
            linearize_interagent(&c, &DVector::zeros(2), &DVector::zeros(2), 4),
            Err(ConstraintError::Degenerate { step: 4 })
        );
    }

    #[test]
    fn invalid_boxes_are_rejected() {
        assert!(
            BoxConstraint::new(Target::Control, vec![0], vec![1.0], vec![0.0], None, None).is_err()
        );
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(BoxConstraint::new(
            Target::Control,
            vec![0, 1],
            vec![-1.0; 2],
            vec![1.0; 2],
            Some(singular),
            None
        )
        .is_err());
    }

    #[test]
    fn polytope_contains_ball() {
        let c = pair(InterAgentKind::Connectivity, 2.0);
        for h in connectivity_polytope(&c, 0) {
            for m in 0..32 {
                let a = m as f64 * 0.196;
                let x = DVector::from_vec(vec![2.0 * a.cos(), 2.0 * a.sin(), 0.0, 0.0]);
                assert!(h.residual(&x) <= 1e-12);
            }
        }
        let c3 = InterAgentConstraint {
            own: vec![0, 1, 2],
            other: vec![3, 4, 5],
            ..c
        };
        assert_eq!(connectivity_polytope(&c3, 0).len(), 26);
    }
}
