//! Central finite differences against the analytic derivatives.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use distddp::al::{penalized_cost, AlState};
use distddp::constraints::{
    wheel_speed_map, BoxConstraint, Constraint, ConstraintStack, InterAgentConstraint,
    InterAgentKind, ObstacleConstraint, Target,
};
use distddp::cost::{BlockCost, Cost, ProximalCost, QuadraticCost};
use distddp::dynamics::{
    BlockDynamics, DubinsCar, Dynamics, LinearDynamics, Quadrotor, QuadrotorParams, Unicycle,
};

const H: f64 = 1e-6;

/// `max |a − b| / max(1, |b|)` over entries.
pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs() / y.abs().max(1.0))
        .fold(0.0, f64::max)
}

/// Jacobian of `f` at `v` by central differences.
pub fn jacobian(f: impl Fn(&DVector<f64>) -> DVector<f64>, v: &DVector<f64>) -> DMatrix<f64> {
    let m = f(v).len();
    let mut j = DMatrix::zeros(m, v.len());
    for c in 0..v.len() {
        let (mut a, mut b) = (v.clone(), v.clone());
        a[c] += H;
        b[c] -= H;
        j.set_column(c, &((f(&a) - f(&b)) / (2.0 * H)));
    }
    j
}

fn gradient(f: impl Fn(&DVector<f64>) -> f64, v: &DVector<f64>) -> DVector<f64> {
    let j = jacobian(|w| DVector::from_element(1, f(w)), v);
    j.row(0).transpose()
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(lo..hi))
}

fn col(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v.as_slice())
}

fn check_dynamics(d: &dyn Dynamics, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
    let (fx, fu) = d.jacobians(x, u);
    let nx = jacobian(|v| d.step(v, u), x);
    let nu = jacobian(|v| d.step(x, v), u);
    rel_err(&fx, &nx).max(rel_err(&fu, &nu))
}

/// Gradient and Hessian blocks of the running and terminal terms.
fn check_cost(c: &dyn Cost, x: &DVector<f64>, u: &DVector<f64>, hessians: bool) -> f64 {
    let e = c.running_expansion(x, u, 0);
    let t = c.terminal_expansion(x);
    let mut err = rel_err(&col(&e.lx), &col(&gradient(|v| c.running(v, u, 0), x)))
        .max(rel_err(
            &col(&e.lu),
            &col(&gradient(|v| c.running(x, v, 0), u)),
        ))
        .max(rel_err(&col(&t.lx), &col(&gradient(|v| c.terminal(v), x))));
    if hessians {
        let hxx = jacobian(|v| c.running_expansion(v, u, 0).lx, x);
        let huu = jacobian(|v| c.running_expansion(x, v, 0).lu, u);
        let hux = jacobian(|v| c.running_expansion(v, u, 0).lu, x);
        let htt = jacobian(|v| c.terminal_expansion(v).lx, x);
        err = err
            .max(rel_err(&e.lxx, &hxx))
            .max(rel_err(&e.luu, &huu))
            .max(rel_err(&e.lux, &hux))
            .max(rel_err(&t.lxx, &htt));
    }
    err
}

fn check_stack(s: &ConstraintStack, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
    let (jx, ju) = s.jacobians(x, Some(u), 0, u.len());
    let nx = jacobian(|v| s.eval(v, Some(u), 0), x);
    let nu = jacobian(|v| s.eval(x, Some(v), 0), u);
    rel_err(&jx, &nx).max(rel_err(&ju, &nu))
}

fn car_cost(goal: DVector<f64>) -> QuadraticCost {
    QuadraticCost::diagonal(
        &[30.0, 30.0, 0.0, 6.0],
        &[0.5, 0.5],
        &[100.0, 100.0, 0.0, 100.0],
        goal,
    )
}

/// Constraint stack over two stacked 2D positions `[p_i, p_j]` (plus a
/// heading entry), with mapped control boxes.
fn pair_stack() -> ConstraintStack {
    let inter = |kind, threshold| {
        Constraint::InterAgent(InterAgentConstraint {
            kind,
            threshold,
            own: vec![0, 1],
            other: vec![3, 4],
            neighbor: 1,
            window: None,
        })
    };
    ConstraintStack::new(vec![
        Constraint::Box(
            BoxConstraint::new(
                Target::State,
                vec![0, 2],
                vec![-1.0, -2.0],
                vec![1.0, 2.0],
                None,
                None,
            )
            .unwrap(),
        ),
        Constraint::Box(
            BoxConstraint::new(
                Target::Control,
                vec![0, 1],
                vec![-12.5, -12.5],
                vec![12.5, 12.5],
                Some(wheel_speed_map(0.016, 0.11)),
                None,
            )
            .unwrap(),
        ),
        Constraint::Obstacle(
            ObstacleConstraint::new(vec![0, 1], DVector::from_vec(vec![0.3, -0.2]), 0.4, 0.1)
                .unwrap(),
        ),
        inter(InterAgentKind::Collision, 0.3),
        inter(InterAgentKind::Connectivity, 2.0),
    ])
}

/// Worst relative error per component over `points` random evaluations.
pub fn suite(points: usize, seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = super::rng(seed);
    let mut worst = vec![
        ("linear dynamics", 0.0),
        ("dubins car", 0.0),
        ("unicycle", 0.0),
        ("quadrotor", 0.0),
        ("block dynamics", 0.0),
        ("quadratic cost", 0.0),
        ("block cost", 0.0),
        ("proximal cost", 0.0),
        ("penalized cost gradient", 0.0),
        ("constraint stack", 0.0),
    ];
    let lin = LinearDynamics::new(
        DMatrix::from_fn(3, 3, |i, j| (i * 3 + j) as f64 * 0.1),
        DMatrix::from_fn(3, 2, |i, j| (i + j) as f64),
    );
    let car = DubinsCar { dt: 0.02 };
    let uni = Unicycle { dt: 0.033 };
    let quad = Quadrotor {
        dt: 0.02,
        params: QuadrotorParams::default(),
    };
    let hover = quad.params.hover_thrust();
    let block = BlockDynamics::new(vec![Arc::new(car), Arc::new(uni)]);
    let stack = pair_stack();
    for _ in 0..points {
        let xc = uniform(&mut rng, 4, -2.0, 2.0);
        let uc = uniform(&mut rng, 2, -3.0, 3.0);
        let xu = uniform(&mut rng, 3, -2.0, 2.0);
        let mut xq = uniform(&mut rng, 12, -1.0, 1.0);
        for a in 6..9 {
            xq[a] *= 0.5;
        }
        let uq = uniform(&mut rng, 4, 0.5 * hover, 1.5 * hover);
        let errs = [
            check_dynamics(&lin, &xu, &uc),
            check_dynamics(&car, &xc, &uc),
            check_dynamics(&uni, &xu, &uc),
            check_dynamics(&quad, &xq, &uq),
            check_dynamics(
                &block,
                &DVector::from_iterator(7, xc.iter().chain(xu.iter()).copied()),
                &uniform(&mut rng, 4, -3.0, 3.0),
            ),
        ];
        for (w, e) in worst.iter_mut().zip(errs) {
            w.1 = f64::max(w.1, e);
        }

        let goal = uniform(&mut rng, 4, -2.0, 2.0);
        let quad_cost = car_cost(goal.clone());
        worst[5].1 = f64::max(worst[5].1, check_cost(&quad_cost, &xc, &uc, true));

        let bc = BlockCost::new(vec![
            (Arc::new(car_cost(goal.clone())), 1.0),
            (Arc::new(car_cost(-goal.clone())), 0.5),
        ]);
        let x8 = uniform(&mut rng, 8, -2.0, 2.0);
        let u4 = uniform(&mut rng, 4, -2.0, 2.0);
        worst[6].1 = f64::max(worst[6].1, check_cost(&bc, &x8, &u4, true));

        let prox = ProximalCost {
            base: car_cost(goal.clone()),
            state_weight: uniform(&mut rng, 4, 1.0, 50.0),
            state_target: vec![
                uniform(&mut rng, 4, -1.0, 1.0),
                uniform(&mut rng, 4, -1.0, 1.0),
            ],
            state_dual: vec![
                uniform(&mut rng, 4, -5.0, 5.0),
                uniform(&mut rng, 4, -5.0, 5.0),
            ],
            control_weight: uniform(&mut rng, 2, 1.0, 10.0),
            control_target: vec![uniform(&mut rng, 2, -1.0, 1.0)],
            control_dual: vec![uniform(&mut rng, 2, -5.0, 5.0)],
        };
        worst[7].1 = f64::max(worst[7].1, check_cost(&prox, &xc, &uc, true));

        // positions spread enough that no distance row sits on its floor
        let mut xp = uniform(&mut rng, 6, -1.5, 1.5);
        while (xp[0] - xp[3]).hypot(xp[1] - xp[4]) < 0.05 || (xp[0] - 0.3).hypot(xp[1] + 0.2) < 0.05
        {
            xp = uniform(&mut rng, 6, -1.5, 1.5);
        }
        let up = uniform(&mut rng, 2, -1.0, 1.0);
        worst[9].1 = f64::max(worst[9].1, check_stack(&stack, &xp, &up));

        let mut al = AlState::new(1, stack.rows(), 10.0);
        for k in 0..2 {
            al.multipliers[k] = uniform(&mut rng, stack.rows(), 0.0, 3.0);
        }
        let base = QuadraticCost::diagonal(&[1.0; 6], &[0.1, 0.1], &[2.0; 6], DVector::zeros(6));
        let pc = penalized_cost(&base, &stack, &al);
        worst[8].1 = f64::max(worst[8].1, check_cost(&pc, &xp, &(up * 0.3), false));
    }
    worst
}
