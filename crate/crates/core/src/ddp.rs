//! Unconstrained iLQR-style DDP: backward pass, forward pass, and the
//! regularized, line-searched outer loop.

use nalgebra::{DMatrix, DVector};

use crate::cost::{Cost, RunningExpansion};
use crate::dynamics::Dynamics;
use crate::error::DdpError;

/// States `x_0..x_K` and controls `u_0..u_{K-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    pub controls: Vec<DVector<f64>>,
    pub dt: f64,
}

impl Trajectory {
    /// Builds a trajectory after checking lengths and dimensions.
    pub fn new(
        states: Vec<DVector<f64>>,
        controls: Vec<DVector<f64>>,
        dt: f64,
    ) -> Result<Self, DdpError> {
        if controls.is_empty() || states.len() != controls.len() + 1 {
            return Err(DdpError::Dimension(format!(
                "{} states for {} controls (need K+1 states, K ≥ 1)",
                states.len(),
                controls.len()
            )));
        }
        let (p, q) = (states[0].len(), controls[0].len());
        if states.iter().any(|s| s.len() != p) || controls.iter().any(|c| c.len() != q) {
            return Err(DdpError::Dimension(
                "ragged state or control sequence".into(),
            ));
        }
        Ok(Self {
            states,
            controls,
            dt,
        })
    }

    /// Rolls `controls` out from `x0`.
    pub fn rollout(
        dynamics: &dyn Dynamics,
        x0: &DVector<f64>,
        controls: Vec<DVector<f64>>,
        dt: f64,
    ) -> Self {
        let mut states = Vec::with_capacity(controls.len() + 1);
        states.push(x0.clone());
        for u in &controls {
            let next = dynamics.step(states.last().unwrap(), u);
            states.push(next);
        }
        Self {
            states,
            controls,
            dt,
        }
    }

    /// Zero controls rolled out from `x0`.
    pub fn zero_controls(
        dynamics: &dyn Dynamics,
        x0: &DVector<f64>,
        horizon: usize,
        dt: f64,
    ) -> Self {
        let controls = vec![DVector::zeros(dynamics.control_dim()); horizon];
        Self::rollout(dynamics, x0, controls, dt)
    }

    pub fn horizon(&self) -> usize {
        self.controls.len()
    }
    pub fn state_dim(&self) -> usize {
        self.states[0].len()
    }
    pub fn control_dim(&self) -> usize {
        self.controls[0].len()
    }

    /// Total cost `Σ ℓ + φ`.
    pub fn cost(&self, cost: &dyn Cost) -> f64 {
        let running: f64 = self
            .controls
            .iter()
            .enumerate()
            .map(|(k, u)| cost.running(&self.states[k], u, k))
            .sum();
        running + cost.terminal(self.states.last().unwrap())
    }

    /// Extracts components `range` of every state and `crange` of every control.
    pub fn slice(&self, range: std::ops::Range<usize>, crange: std::ops::Range<usize>) -> Self {
        Self {
            states: self
                .states
                .iter()
                .map(|s| s.rows(range.start, range.len()).into_owned())
                .collect(),
            controls: self
                .controls
                .iter()
                .map(|c| c.rows(crange.start, crange.len()).into_owned())
                .collect(),
            dt: self.dt,
        }
    }
}

/// Affine time-varying policy `u_k = ū_k + α k_k + K_k (x_k − x̄_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlLaw {
    pub feedforward: Vec<DVector<f64>>,
    pub feedback: Vec<DMatrix<f64>>,
    /// `Σ Q_uᵀk`; the expected reduction at step size α is
    /// `−(α·linear + α²·quadratic)`.
    pub reduction_linear: f64,
    /// `Σ ½ kᵀQ_uu k`.
    pub reduction_quadratic: f64,
}

impl ControlLaw {
    pub fn zeros(horizon: usize, p: usize, q: usize) -> Self {
        Self {
            feedforward: vec![DVector::zeros(q); horizon],
            feedback: vec![DMatrix::zeros(q, p); horizon],
            reduction_linear: 0.0,
            reduction_quadratic: 0.0,
        }
    }

    pub fn horizon(&self) -> usize {
        self.feedforward.len()
    }

    /// Predicted cost reduction (positive means improvement) for step `alpha`.
    pub fn expected_cost_reduction(&self, alpha: f64) -> f64 {
        -(alpha * self.reduction_linear + alpha * alpha * self.reduction_quadratic)
    }

    /// Keeps feedforward rows `crange` and the `(crange, range)` feedback block.
    pub fn slice(&self, range: std::ops::Range<usize>, crange: std::ops::Range<usize>) -> Self {
        Self {
            feedforward: self
                .feedforward
                .iter()
                .map(|k| k.rows(crange.start, crange.len()).into_owned())
                .collect(),
            feedback: self
                .feedback
                .iter()
                .map(|m| {
                    m.view((crange.start, range.start), (crange.len(), range.len()))
                        .into_owned()
                })
                .collect(),
            reduction_linear: self.reduction_linear,
            reduction_quadratic: self.reduction_quadratic,
        }
    }
}

/// Quadratic model of the cost-to-go along a nominal trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueExpansion {
    pub value: Vec<f64>,
    pub gradient: Vec<DVector<f64>>,
    pub hessian: Vec<DMatrix<f64>>,
}

/// Q-function expansion at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct QExpansion {
    pub qx: DVector<f64>,
    pub qu: DVector<f64>,
    pub qxx: DMatrix<f64>,
    pub quu: DMatrix<f64>,
    pub qux: DMatrix<f64>,
}

/// Assembles the Q-expansion from the running-cost expansion, the dynamics
/// jacobians and the next value expansion. First-order dynamics only.
pub fn q_expansion(
    l: &RunningExpansion,
    fx: &DMatrix<f64>,
    fu: &DMatrix<f64>,
    vx: &DVector<f64>,
    vxx: &DMatrix<f64>,
) -> QExpansion {
    let vxx_fx = vxx * fx;
    let vxx_fu = vxx * fu;
    QExpansion {
        qx: &l.lx + fx.tr_mul(vx),
        qu: &l.lu + fu.tr_mul(vx),
        qxx: &l.lxx + fx.tr_mul(&vxx_fx),
        quu: &l.luu + fu.tr_mul(&vxx_fu),
        qux: &l.lux + fu.tr_mul(&vxx_fx),
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let a = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = a;
            m[(j, i)] = a;
        }
    }
}

/// Backward pass around `nominal` with `Q_uu + reg·I`.
pub fn backward_pass(
    nominal: &Trajectory,
    cost: &dyn Cost,
    dynamics: &dyn Dynamics,
    reg: f64,
) -> Result<(ControlLaw, ValueExpansion), DdpError> {
    let horizon = nominal.horizon();
    let (p, q) = (nominal.state_dim(), nominal.control_dim());
    if dynamics.state_dim() != p
        || dynamics.control_dim() != q
        || cost.state_dim() != p
        || cost.control_dim() != q
    {
        return Err(DdpError::Dimension(
            "trajectory, cost and dynamics dimensions differ".into(),
        ));
    }
    let xk = nominal.states.last().unwrap();
    let term = cost.terminal_expansion(xk);
    let mut value = vec![0.0; horizon + 1];
    let mut gradient = vec![DVector::zeros(p); horizon + 1];
    let mut hessian = vec![DMatrix::zeros(p, p); horizon + 1];
    value[horizon] = cost.terminal(xk);
    gradient[horizon] = term.lx;
    hessian[horizon] = term.lxx;
    symmetrize(&mut hessian[horizon]);

    let mut law = ControlLaw::zeros(horizon, p, q);
    for k in (0..horizon).rev() {
        let (x, u) = (&nominal.states[k], &nominal.controls[k]);
        let (fx, fu) = dynamics.jacobians(x, u);
        let l = cost.running_expansion(x, u, k);
        let qe = q_expansion(&l, &fx, &fu, &gradient[k + 1], &hessian[k + 1]);
        let mut quu = qe.quu.clone();
        symmetrize(&mut quu);
        for i in 0..q {
            quu[(i, i)] += reg;
        }
        let chol = quu
            .clone()
            .cholesky()
            .ok_or(DdpError::NotPositiveDefinite { step: k, reg })?;
        let ff = -chol.solve(&qe.qu);
        let fb = -chol.solve(&qe.qux);

        // value backpropagation with the regularized Q_uu in the gain terms
        let quu_ff = &quu * &ff;
        let mut vx = &qe.qx + fb.tr_mul(&quu_ff) + fb.tr_mul(&qe.qu) + qe.qux.tr_mul(&ff);
        let mut vxx = &qe.qxx + fb.tr_mul(&(&quu * &fb)) + fb.tr_mul(&qe.qux) + qe.qux.tr_mul(&fb);
        symmetrize(&mut vxx);
        if vx.iter().chain(vxx.iter()).any(|v| !v.is_finite()) {
            return Err(DdpError::NonFinite { step: k });
        }
        std::mem::swap(&mut gradient[k], &mut vx);
        std::mem::swap(&mut hessian[k], &mut vxx);

        let lin = qe.qu.dot(&ff);
        let quad = 0.5 * ff.dot(&quu_ff);
        value[k] = cost.running(x, u, k) + value[k + 1] + lin + quad;
        law.reduction_linear += lin;
        law.reduction_quadratic += quad;
        law.feedforward[k] = ff;
        law.feedback[k] = fb;
    }
    Ok((
        law,
        ValueExpansion {
            value,
            gradient,
            hessian,
        },
    ))
}

/// Rolls the policy `law` out around `nominal` with step size `alpha`.
pub fn forward_pass(
    nominal: &Trajectory,
    law: &ControlLaw,
    dynamics: &dyn Dynamics,
    alpha: f64,
) -> Result<Trajectory, DdpError> {
    if law.horizon() != nominal.horizon() {
        return Err(DdpError::Dimension(
            "control law horizon differs from nominal".into(),
        ));
    }
    let horizon = nominal.horizon();
    let mut states = Vec::with_capacity(horizon + 1);
    let mut controls = Vec::with_capacity(horizon);
    states.push(nominal.states[0].clone());
    for k in 0..horizon {
        let x = &states[k];
        let dx = x - &nominal.states[k];
        let u = &nominal.controls[k] + &law.feedforward[k] * alpha + &law.feedback[k] * dx;
        let next = dynamics.step(x, &u);
        if next.iter().chain(u.iter()).any(|v| !v.is_finite()) {
            return Err(DdpError::NonFinite { step: k });
        }
        controls.push(u);
        states.push(next);
    }
    Ok(Trajectory {
        states,
        controls,
        dt: nominal.dt,
    })
}

/// Solver settings.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DdpSettings {
    pub max_iterations: usize,
    pub reg_init: f64,
    pub reg_min: f64,
    pub reg_max: f64,
    pub reg_increase: f64,
    pub reg_decrease: f64,
    pub line_search: Vec<f64>,
    pub abs_tolerance: f64,
    pub rel_tolerance: f64,
    /// Start from the controls of the supplied trajectory instead of zeros.
    pub warmstart: bool,
}

impl Default for DdpSettings {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            reg_init: 1e-6,
            reg_min: 1e-8,
            reg_max: 1e8,
            reg_increase: 10.0,
            reg_decrease: 2.0,
            line_search: (0..=10).map(|i| 0.5f64.powi(i)).collect(),
            abs_tolerance: 1e-6,
            rel_tolerance: 1e-8,
            warmstart: true,
        }
    }
}

impl DdpSettings {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.reg_min > 0.0 && self.reg_min <= self.reg_init && self.reg_init <= self.reg_max) {
            return Err("regularization must satisfy 0 < min ≤ init ≤ max".into());
        }
        if self.reg_increase <= 1.0 || self.reg_decrease <= 1.0 {
            return Err("regularization factors must exceed 1".into());
        }
        if self.line_search.is_empty() || self.line_search.iter().any(|&a| !(a > 0.0 && a <= 1.0)) {
            return Err("line-search candidates must lie in (0, 1]".into());
        }
        Ok(())
    }
}

/// Result of [`solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct DdpSolution {
    pub trajectory: Trajectory,
    /// Law from a backward pass at the returned trajectory.
    pub law: ControlLaw,
    pub iterations: usize,
    pub cost: f64,
    /// Cost after every accepted iteration, starting with the initial cost.
    pub cost_history: Vec<f64>,
}

fn backward_with_escalation(
    traj: &Trajectory,
    cost: &dyn Cost,
    dynamics: &dyn Dynamics,
    reg: &mut f64,
    s: &DdpSettings,
) -> Result<ControlLaw, DdpError> {
    loop {
        match backward_pass(traj, cost, dynamics, *reg) {
            Ok((law, _)) => return Ok(law),
            Err(DdpError::NotPositiveDefinite { step, .. }) => {
                if *reg >= s.reg_max {
                    return Err(DdpError::NotPositiveDefinite { step, reg: *reg });
                }
                *reg = (*reg * s.reg_increase).min(s.reg_max);
            }
            Err(e) => return Err(e),
        }
    }
}

/// Iterates backward and line-searched forward passes from `initial`.
pub fn solve(
    initial: &Trajectory,
    cost: &dyn Cost,
    dynamics: &dyn Dynamics,
    settings: &DdpSettings,
) -> Result<DdpSolution, DdpError> {
    let x0 = &initial.states[0];
    let mut traj = if settings.warmstart {
        Trajectory::rollout(dynamics, x0, initial.controls.clone(), initial.dt)
    } else {
        Trajectory::zero_controls(dynamics, x0, initial.horizon(), initial.dt)
    };
    if traj.states.iter().any(|s| s.iter().any(|v| !v.is_finite())) {
        return Err(DdpError::NonFinite { step: 0 });
    }
    let mut j = traj.cost(cost);
    let mut history = vec![j];
    let mut reg = settings.reg_init;
    let mut iterations = 0;
    let mut current_law: Option<ControlLaw> = None;

    while iterations < settings.max_iterations {
        let law = backward_with_escalation(&traj, cost, dynamics, &mut reg, settings)?;
        let expected = law.expected_cost_reduction(1.0);
        if expected < settings.abs_tolerance || expected < settings.rel_tolerance * j.abs() {
            current_law = Some(law);
            break;
        }
        let mut accepted = None;
        let mut any_finite = false;
        for &alpha in &settings.line_search {
            if let Ok(t) = forward_pass(&traj, &law, dynamics, alpha) {
                let jn = t.cost(cost);
                if jn.is_finite() {
                    any_finite = true;
                    if jn < j {
                        accepted = Some((t, jn));
                        break;
                    }
                }
            }
        }
        match accepted {
            Some((t, jn)) => {
                let decrease = j - jn;
                traj = t;
                j = jn;
                history.push(j);
                iterations += 1;
                reg = (reg / settings.reg_decrease).max(settings.reg_min);
                if decrease < settings.abs_tolerance || decrease < settings.rel_tolerance * j.abs()
                {
                    break;
                }
            }
            None => {
                if reg >= settings.reg_max {
                    if any_finite {
                        current_law = Some(law);
                        break;
                    }
                    return Err(DdpError::Diverged);
                }
                reg = (reg * settings.reg_increase).min(settings.reg_max);
            }
        }
    }
    let law = match current_law {
        Some(l) => l,
        None => backward_with_escalation(&traj, cost, dynamics, &mut reg, settings)?,
    };
    Ok(DdpSolution {
        trajectory: traj,
        law,
        iterations,
        cost: j,
        cost_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::QuadraticCost;
    use crate::dynamics::{DubinsCar, LinearDynamics};

    fn scalar_problem() -> (LinearDynamics, QuadraticCost) {
        let dynamics = LinearDynamics::new(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
        );
        let cost = QuadraticCost::diagonal(&[1.0], &[1.0], &[1.0], DVector::zeros(1));
        (dynamics, cost)
    }

    #[test]
    fn scalar_gains_match_hand_riccati() {
        // x+ = x + u, ℓ = x² + u², φ = x², K = 2. Value P_k x²:
        // P_2 = 1, gain g = P/(1+P), P_k = 1 + P - P²/(1+P).
        let (dynamics, cost) = scalar_problem();
        let nominal = Trajectory::rollout(
            &dynamics,
            &DVector::from_element(1, 1.0),
            vec![DVector::zeros(1); 2],
            1.0,
        );
        let (law, value) = backward_pass(&nominal, &cost, &dynamics, 0.0).unwrap();
        let p2 = 1.0;
        let g1 = p2 / (1.0 + p2);
        let p1 = 1.0 + p2 - p2 * p2 / (1.0 + p2);
        let g0 = p1 / (1.0 + p1);
        assert!((law.feedback[1][(0, 0)] + g1).abs() < 1e-14);
        assert!((law.feedback[0][(0, 0)] + g0).abs() < 1e-14);
        assert!((value.hessian[1][(0, 0)] - 2.0 * p1).abs() < 1e-14);
    }

    #[test]
    fn zero_cost_gives_zero_law() {
        let dynamics = DubinsCar { dt: 0.1 };
        let cost = QuadraticCost::diagonal(&[0.0; 4], &[0.0; 2], &[0.0; 4], DVector::zeros(4));
        let x0 = DVector::from_vec(vec![0.0, 0.0, 0.3, 1.0]);
        let nominal = Trajectory::zero_controls(&dynamics, &x0, 5, 0.1);
        let (law, value) = backward_pass(&nominal, &cost, &dynamics, 1e-6).unwrap();
        assert!(law.feedforward.iter().all(|k| k.iter().all(|&v| v == 0.0)));
        assert!(law.feedback.iter().all(|k| k.iter().all(|&v| v == 0.0)));
        assert!(value.value.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn indefinite_quu_is_reported() {
        let (dynamics, _) = scalar_problem();
        let cost = QuadraticCost::diagonal(&[0.0], &[-1.0], &[0.0], DVector::zeros(1));
        let nominal = Trajectory::zero_controls(&dynamics, &DVector::zeros(1), 3, 1.0);
        assert!(matches!(
            backward_pass(&nominal, &cost, &dynamics, 0.0),
            Err(DdpError::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn alpha_zero_is_identity_on_consistent_nominal() {
        let dynamics = DubinsCar { dt: 0.02 };
        let cost = QuadraticCost::diagonal(
            &[30.0, 30.0, 0.0, 6.0],
            &[0.5, 0.5],
            &[100.0, 100.0, 0.0, 100.0],
            DVector::from_vec(vec![3.0, 1.0, 0.0, 0.0]),
        );
        let controls = (0..20)
            .map(|k| DVector::from_vec(vec![0.1 * k as f64, -0.05]))
            .collect();
        let nominal = Trajectory::rollout(
            &dynamics,
            &DVector::from_vec(vec![0.0, 0.0, 0.1, 1.0]),
            controls,
            0.02,
        );
        let (law, _) = backward_pass(&nominal, &cost, &dynamics, 1e-6).unwrap();
        let t = forward_pass(&nominal, &law, &dynamics, 0.0).unwrap();
        assert_eq!(t, nominal);
        let zero = ControlLaw::zeros(20, 4, 2);
        assert_eq!(
            forward_pass(&nominal, &zero, &dynamics, 1.0).unwrap(),
            nominal
        );
    }

    #[test]
    fn dubins_solve_is_monotone_and_stationary() {
        let dynamics = DubinsCar { dt: 0.02 };
        let cost = QuadraticCost::diagonal(
            &[30.0, 30.0, 0.0, 6.0],
            &[0.5, 0.5],
            &[100.0, 100.0, 0.0, 100.0],
            DVector::from_vec(vec![2.0, 1.0, 0.0, 0.0]),
        );
        let init = Trajectory::zero_controls(
            &dynamics,
            &DVector::from_vec(vec![0.0, 0.0, 0.0, 0.5]),
            100,
            0.02,
        );
        let settings = DdpSettings {
            max_iterations: 500,
            abs_tolerance: 1e-12,
            rel_tolerance: 0.0,
            ..Default::default()
        };
        let sol = solve(&init, &cost, &dynamics, &settings).unwrap();
        assert!(sol.cost_history.windows(2).all(|w| w[1] <= w[0]));
        assert!(sol.cost < init.cost(&cost));
        // stationarity: gradient of the cost w.r.t. each control through the dynamics
        let (law, value) = backward_pass(&sol.trajectory, &cost, &dynamics, 0.0).unwrap();
        for k in 0..sol.trajectory.horizon() {
            let (x, u) = (&sol.trajectory.states[k], &sol.trajectory.controls[k]);
            let (fx, fu) = dynamics.jacobians(x, u);
            let qe = q_expansion(
                &cost.running_expansion(x, u, k),
                &fx,
                &fu,
                &value.gradient[k + 1],
                &value.hessian[k + 1],
            );
            assert!(qe.qu.norm() <= 1e-6, "k={k} |Q_u|={}", qe.qu.norm());
        }
        for h in &value.hessian {
            assert_eq!(h, &h.transpose());
        }
        assert_eq!(law.horizon(), 100);
    }
}
