//! Discrete-time dynamics models with analytic jacobians.
//!
//! All models are Euler discretizations `x+ = x + dt * f(x, u)`. Angles are
//! left unwrapped.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// A discrete-time system `x_{k+1} = f(x_k, u_k)`.
pub trait Dynamics: Send + Sync {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;
    /// Returns `(f_x, f_u)`.
    fn jacobians(&self, x: &DVector<f64>, u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>);

    fn jacobian_x(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        self.jacobians(x, u).0
    }
    fn jacobian_u(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        self.jacobians(x, u).1
    }
}

/// `x+ = A x + B u`.
#[derive(Debug, Clone)]
pub struct LinearDynamics {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl LinearDynamics {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Self {
        assert!(
            a.is_square() && a.nrows() == b.nrows(),
            "A must be p×p and B p×q"
        );
        Self { a, b }
    }
}

impl Dynamics for LinearDynamics {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }
    fn control_dim(&self) -> usize {
        self.b.ncols()
    }
    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u
    }
    fn jacobians(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        (self.a.clone(), self.b.clone())
    }
}

/// Planar car state `(x, y, θ, v)` driven by acceleration and turn rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DubinsCarState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
}

impl DubinsCarState {
    pub fn to_vector(self) -> DVector<f64> {
        DVector::from_vec(vec![self.x, self.y, self.theta, self.v])
    }
    pub fn from_slice(s: &[f64]) -> Self {
        Self {
            x: s[0],
            y: s[1],
            theta: s[2],
            v: s[3],
        }
    }
}

/// One Euler step of the car model; `u = (a, ω)`.
pub fn dubins_step(x: DubinsCarState, u: [f64; 2], dt: f64) -> DubinsCarState {
    let (s, c) = x.theta.sin_cos();
    DubinsCarState {
        x: x.x + dt * x.v * c,
        y: x.y + dt * x.v * s,
        theta: x.theta + dt * u[1],
        v: x.v + dt * u[0],
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DubinsCar {
    pub dt: f64,
}

impl Dynamics for DubinsCar {
    fn state_dim(&self) -> usize {
        4
    }
    fn control_dim(&self) -> usize {
        2
    }
    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        dubins_step(
            DubinsCarState::from_slice(x.as_slice()),
            [u[0], u[1]],
            self.dt,
        )
        .to_vector()
    }
    fn jacobians(&self, x: &DVector<f64>, _u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let dt = self.dt;
        let (s, c) = x[2].sin_cos();
        let v = x[3];
        let mut fx = DMatrix::identity(4, 4);
        fx[(0, 2)] = -dt * v * s;
        fx[(0, 3)] = dt * c;
        fx[(1, 2)] = dt * v * c;
        fx[(1, 3)] = dt * s;
        let mut fu = DMatrix::zeros(4, 2);
        fu[(3, 0)] = dt;
        fu[(2, 1)] = dt;
        (fx, fu)
    }
}

/// Unicycle state `(x, y, θ)` driven by forward speed and turn rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnicycleState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl UnicycleState {
    pub fn to_vector(self) -> DVector<f64> {
        DVector::from_vec(vec![self.x, self.y, self.theta])
    }
    pub fn from_slice(s: &[f64]) -> Self {
        Self {
            x: s[0],
            y: s[1],
            theta: s[2],
        }
    }
}

/// One Euler step of the unicycle; `u = (v, ω)`.
pub fn unicycle_step(x: UnicycleState, u: [f64; 2], dt: f64) -> UnicycleState {
    let (s, c) = x.theta.sin_cos();
    UnicycleState {
        x: x.x + dt * u[0] * c,
        y: x.y + dt * u[0] * s,
        theta: x.theta + dt * u[1],
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Unicycle {
    pub dt: f64,
}

impl Dynamics for Unicycle {
    fn state_dim(&self) -> usize {
        3
    }
    fn control_dim(&self) -> usize {
        2
    }
    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        unicycle_step(
            UnicycleState::from_slice(x.as_slice()),
            [u[0], u[1]],
            self.dt,
        )
        .to_vector()
    }
    fn jacobians(&self, x: &DVector<f64>, u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let dt = self.dt;
        let (s, c) = x[2].sin_cos();
        let mut fx = DMatrix::identity(3, 3);
        fx[(0, 2)] = -dt * u[0] * s;
        fx[(1, 2)] = dt * u[0] * c;
        let mut fu = DMatrix::zeros(3, 2);
        fu[(0, 0)] = dt * c;
        fu[(1, 0)] = dt * s;
        fu[(2, 1)] = dt;
        (fx, fu)
    }
}

/// Rigid-body quadrotor parameters.
///
/// Defaults follow the widely used 0.468 kg "X4" model (arm 0.225 m, thrust
/// factor 2.98e-6, drag factor 1.14e-7). They are a stand-in: the values
/// behind the reference experiments are not published.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadrotorParams {
    pub mass: f64,
    /// Diagonal inertia `(Ixx, Iyy, Izz)`.
    pub inertia: [f64; 3],
    pub arm_length: f64,
    /// Yaw torque per newton of rotor thrust.
    pub torque_coefficient: f64,
    pub gravity: f64,
}

impl Default for QuadrotorParams {
    fn default() -> Self {
        Self {
            mass: 0.468,
            inertia: [4.856e-3, 4.856e-3, 8.801e-3],
            arm_length: 0.225,
            torque_coefficient: 1.14e-7 / 2.98e-6,
            gravity: 9.81,
        }
    }
}

impl QuadrotorParams {
    pub fn is_valid(&self) -> bool {
        self.mass > 0.0
            && self.inertia.iter().all(|&i| i > 0.0)
            && self.arm_length > 0.0
            && self.torque_coefficient > 0.0
            && self.gravity > 0.0
    }

    /// Per-rotor thrust that balances gravity.
    pub fn hover_thrust(&self) -> f64 {
        self.mass * self.gravity / 4.0
    }
}

/// Quadrotor state: position, linear velocity, ZYX Euler angles
/// `(φ, θ, ψ)` and body angular rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadrotorState {
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    pub euler: [f64; 3],
    pub rates: [f64; 3],
}

impl QuadrotorState {
    pub fn to_vector(self) -> DVector<f64> {
        let mut v = Vec::with_capacity(12);
        v.extend_from_slice(&self.position);
        v.extend_from_slice(&self.velocity);
        v.extend_from_slice(&self.euler);
        v.extend_from_slice(&self.rates);
        DVector::from_vec(v)
    }
    pub fn from_slice(s: &[f64]) -> Self {
        Self {
            position: [s[0], s[1], s[2]],
            velocity: [s[3], s[4], s[5]],
            euler: [s[6], s[7], s[8]],
            rates: [s[9], s[10], s[11]],
        }
    }
}

fn quadrotor_field(x: &[f64], u: &[f64], p: &QuadrotorParams) -> [f64; 12] {
    let (sf, cf) = x[6].sin_cos();
    let (st, ct) = x[7].sin_cos();
    let (sp, cp) = x[8].sin_cos();
    let tt = st / ct;
    let (wp, wq, wr) = (x[9], x[10], x[11]);
    let [ixx, iyy, izz] = p.inertia;
    let thrust = u[0] + u[1] + u[2] + u[3];
    let a = thrust / p.mass;
    let tau = [
        p.arm_length * (u[3] - u[1]),
        p.arm_length * (u[2] - u[0]),
        p.torque_coefficient * (u[0] - u[1] + u[2] - u[3]),
    ];
    [
        x[3],
        x[4],
        x[5],
        a * (cp * st * cf + sp * sf),
        a * (sp * st * cf - cp * sf),
        a * ct * cf - p.gravity,
        wp + sf * tt * wq + cf * tt * wr,
        cf * wq - sf * wr,
        (sf * wq + cf * wr) / ct,
        (tau[0] - (izz - iyy) * wq * wr) / ixx,
        (tau[1] - (ixx - izz) * wp * wr) / iyy,
        (tau[2] - (iyy - ixx) * wp * wq) / izz,
    ]
}

/// One Euler step of the quadrotor with rotor thrusts `u`.
pub fn quadrotor_step(
    x: QuadrotorState,
    u: [f64; 4],
    dt: f64,
    params: &QuadrotorParams,
) -> QuadrotorState {
    let xv = x.to_vector();
    let f = quadrotor_field(xv.as_slice(), &u, params);
    let next: Vec<f64> = xv.iter().zip(f.iter()).map(|(a, b)| a + dt * b).collect();
    QuadrotorState::from_slice(&next)
}

#[derive(Debug, Clone, Copy)]
pub struct Quadrotor {
    pub dt: f64,
    pub params: QuadrotorParams,
}

impl Quadrotor {
    /// Continuous-time vector field, exposed for consistency checks.
    pub fn vector_field(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_row_slice(&quadrotor_field(x.as_slice(), u.as_slice(), &self.params))
    }
}

impl Dynamics for Quadrotor {
    fn state_dim(&self) -> usize {
        12
    }
    fn control_dim(&self) -> usize {
        4
    }
    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let f = quadrotor_field(x.as_slice(), u.as_slice(), &self.params);
        DVector::from_iterator(12, x.iter().zip(f.iter()).map(|(a, b)| a + self.dt * b))
    }

    fn jacobians(&self, x: &DVector<f64>, u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let p = &self.params;
        let dt = self.dt;
        let (sf, cf) = x[6].sin_cos();
        let (st, ct) = x[7].sin_cos();
        let (sp, cp) = x[8].sin_cos();
        let tt = st / ct;
        let (wp, wq, wr) = (x[9], x[10], x[11]);
        let [ixx, iyy, izz] = p.inertia;
        let a = (u[0] + u[1] + u[2] + u[3]) / p.mass;

        let mut dfx = DMatrix::<f64>::zeros(12, 12);
        for i in 0..3 {
            dfx[(i, 3 + i)] = 1.0;
        }
        // thrust direction R(η) e_z and its partials in φ, θ, ψ
        let r = [cp * st * cf + sp * sf, sp * st * cf - cp * sf, ct * cf];
        let dr_dphi = [-cp * st * sf + sp * cf, -sp * st * sf - cp * cf, -ct * sf];
        let dr_dtheta = [cp * ct * cf, sp * ct * cf, -st * cf];
        let dr_dpsi = [-sp * st * cf + cp * sf, cp * st * cf + sp * sf, 0.0];
        for i in 0..3 {
            dfx[(3 + i, 6)] = a * dr_dphi[i];
            dfx[(3 + i, 7)] = a * dr_dtheta[i];
            dfx[(3 + i, 8)] = a * dr_dpsi[i];
        }
        let sec2 = 1.0 / (ct * ct);
        dfx[(6, 6)] = cf * tt * wq - sf * tt * wr;
        dfx[(6, 7)] = (sf * wq + cf * wr) * sec2;
        dfx[(7, 6)] = -sf * wq - cf * wr;
        dfx[(8, 6)] = (cf * wq - sf * wr) / ct;
        dfx[(8, 7)] = (sf * wq + cf * wr) * st * sec2;
        dfx[(6, 9)] = 1.0;
        dfx[(6, 10)] = sf * tt;
        dfx[(6, 11)] = cf * tt;
        dfx[(7, 10)] = cf;
        dfx[(7, 11)] = -sf;
        dfx[(8, 10)] = sf / ct;
        dfx[(8, 11)] = cf / ct;
        dfx[(9, 10)] = -(izz - iyy) * wr / ixx;
        dfx[(9, 11)] = -(izz - iyy) * wq / ixx;
        dfx[(10, 9)] = -(ixx - izz) * wr / iyy;
        dfx[(10, 11)] = -(ixx - izz) * wp / iyy;
        dfx[(11, 9)] = -(iyy - ixx) * wq / izz;
        dfx[(11, 10)] = -(iyy - ixx) * wp / izz;

        let mut dfu = DMatrix::<f64>::zeros(12, 4);
        let (l, c) = (p.arm_length, p.torque_coefficient);
        for j in 0..4 {
            for i in 0..3 {
                dfu[(3 + i, j)] = r[i] / p.mass;
            }
        }
        dfu[(9, 1)] = -l / ixx;
        dfu[(9, 3)] = l / ixx;
        dfu[(10, 0)] = -l / iyy;
        dfu[(10, 2)] = l / iyy;
        for (j, sign) in [1.0, -1.0, 1.0, -1.0].iter().enumerate() {
            dfu[(11, j)] = sign * c / izz;
        }

        let mut fx = DMatrix::identity(12, 12);
        fx += dfx * dt;
        (fx, dfu * dt)
    }
}

/// Several independent systems stacked into one block-diagonal system.
#[derive(Clone)]
pub struct BlockDynamics {
    members: Vec<Arc<dyn Dynamics>>,
    state_offsets: Vec<usize>,
    control_offsets: Vec<usize>,
}

impl BlockDynamics {
    pub fn new(members: Vec<Arc<dyn Dynamics>>) -> Self {
        let mut state_offsets = vec![0];
        let mut control_offsets = vec![0];
        for m in &members {
            state_offsets.push(state_offsets.last().unwrap() + m.state_dim());
            control_offsets.push(control_offsets.last().unwrap() + m.control_dim());
        }
        Self {
            members,
            state_offsets,
            control_offsets,
        }
    }

    pub fn members(&self) -> &[Arc<dyn Dynamics>] {
        &self.members
    }

    pub fn state_range(&self, block: usize) -> std::ops::Range<usize> {
        self.state_offsets[block]..self.state_offsets[block + 1]
    }

    pub fn control_range(&self, block: usize) -> std::ops::Range<usize> {
        self.control_offsets[block]..self.control_offsets[block + 1]
    }
}

impl Dynamics for BlockDynamics {
    fn state_dim(&self) -> usize {
        *self.state_offsets.last().unwrap()
    }
    fn control_dim(&self) -> usize {
        *self.control_offsets.last().unwrap()
    }
    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.state_dim());
        for (b, m) in self.members.iter().enumerate() {
            let (sr, cr) = (self.state_range(b), self.control_range(b));
            let xb = DVector::from_column_slice(&x.as_slice()[sr.clone()]);
            let ub = DVector::from_column_slice(&u.as_slice()[cr]);
            out.rows_mut(sr.start, sr.len())
                .copy_from(&m.step(&xb, &ub));
        }
        out
    }
    fn jacobians(&self, x: &DVector<f64>, u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let (p, q) = (self.state_dim(), self.control_dim());
        let mut fx = DMatrix::zeros(p, p);
        let mut fu = DMatrix::zeros(p, q);
        for (b, m) in self.members.iter().enumerate() {
            let (sr, cr) = (self.state_range(b), self.control_range(b));
            let xb = DVector::from_column_slice(&x.as_slice()[sr.clone()]);
            let ub = DVector::from_column_slice(&u.as_slice()[cr.clone()]);
            let (jx, ju) = m.jacobians(&xb, &ub);
            fx.view_mut((sr.start, sr.start), (sr.len(), sr.len()))
                .copy_from(&jx);
            fu.view_mut((sr.start, cr.start), (sr.len(), cr.len()))
                .copy_from(&ju);
        }
        (fx, fu)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn dubins_straight_and_axis_aligned() {
        let x = dubins_step(
            DubinsCarState {
                x: 0.0,
                y: 0.0,
                theta: 0.0,
                v: 1.0,
            },
            [0.0, 0.0],
            0.02,
        );
        assert_eq!(
            x,
            DubinsCarState {
                x: 0.02,
                y: 0.0,
                theta: 0.0,
                v: 1.0
            }
        );
        let half_pi = std::f64::consts::FRAC_PI_2;
        let x = dubins_step(
            DubinsCarState {
                x: 0.0,
                y: 0.0,
                theta: half_pi,
                v: 2.0,
            },
            [0.0, 0.0],
            0.02,
        );
        assert!(x.x.abs() < 1e-12);
        assert_relative_eq!(x.y, 0.04, epsilon = 1e-12);
        assert_eq!(x.theta, half_pi);
    }

    #[test]
    fn unicycle_examples() {
        let x = unicycle_step(
            UnicycleState {
                x: 0.0,
                y: 0.0,
                theta: 0.0,
            },
            [1.0, 0.0],
            0.033,
        );
        assert_eq!(
            x,
            UnicycleState {
                x: 0.033,
                y: 0.0,
                theta: 0.0
            }
        );
        let x = unicycle_step(
            UnicycleState {
                x: 1.0,
                y: 2.0,
                theta: 0.3,
            },
            [0.0, 2.0],
            0.033,
        );
        assert_eq!((x.x, x.y), (1.0, 2.0));
        assert_relative_eq!(x.theta, 0.3 + 0.066, epsilon = 1e-15);
    }

    #[test]
    fn quadrotor_hover_and_free_fall() {
        let p = QuadrotorParams::default();
        let s = QuadrotorState {
            position: [1.0, -2.0, 3.0],
            velocity: [0.0; 3],
            euler: [0.0; 3],
            rates: [0.0; 3],
        };
        let h = p.hover_thrust();
        let next = quadrotor_step(s, [h; 4], 0.02, &p);
        for i in 0..3 {
            assert_relative_eq!(next.position[i], s.position[i], epsilon = 1e-14);
            assert!(next.velocity[i].abs() < 1e-14);
        }
        let next = quadrotor_step(s, [0.0; 4], 0.02, &p);
        assert_relative_eq!(next.velocity[2], -p.gravity * 0.02, epsilon = 1e-15);
    }

    #[test]
    fn block_dynamics_is_block_diagonal() {
        let b = BlockDynamics::new(vec![
            Arc::new(DubinsCar { dt: 0.1 }),
            Arc::new(Unicycle { dt: 0.1 }),
        ]);
        assert_eq!((b.state_dim(), b.control_dim()), (7, 4));
        let x = DVector::from_fn(7, |i, _| 0.1 * i as f64 + 0.2);
        let u = DVector::from_fn(4, |i, _| 0.3 - 0.1 * i as f64);
        let (fx, fu) = b.jacobians(&x, &u);
        for r in 0..4 {
            for c in 4..7 {
                assert_eq!(fx[(r, c)], 0.0);
                assert_eq!(fx[(c, r)], 0.0);
            }
            assert_eq!(fu[(r, 2)], 0.0);
        }
        let next = b.step(&x, &u);
        let car = DubinsCar { dt: 0.1 }.step(&x.rows(0, 4).into(), &u.rows(0, 2).into());
        assert_eq!(next.rows(0, 4), car.rows(0, 4));
    }
}
