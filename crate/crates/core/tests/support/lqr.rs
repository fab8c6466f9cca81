//! Discrete-time Riccati recursion on the affine-augmented state `[x; 1]`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use distddp::cost::QuadraticCost;
use distddp::ddp::{self, DdpSettings, Trajectory};
use distddp::dynamics::LinearDynamics;

pub struct Instance {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub cost: QuadraticCost,
    pub x0: DVector<f64>,
    pub horizon: usize,
}

fn randn(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn spd(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> DMatrix<f64> {
    let l = randn(rng, n, n);
    &l * l.transpose() * 0.5 + DMatrix::identity(n, n) * floor
}

pub fn instance(rng: &mut ChaCha8Rng) -> Instance {
    let p = rng.gen_range(1..=6);
    let q = rng.gen_range(1..=3);
    let horizon = rng.gen_range(1..=50);
    let a = DMatrix::identity(p, p) + randn(rng, p, p) * 0.1;
    let b = randn(rng, p, q) * 0.5;
    // PSD running weight, SPD control and terminal weights
    let mut qm = spd(rng, p, 0.0);
    if rng.gen_bool(0.3) {
        qm[(0, 0)] = 0.0;
        qm.row_mut(0).fill(0.0);
        qm.column_mut(0).fill(0.0);
    }
    let r = spd(rng, q, 0.1);
    let qf = spd(rng, p, 1.0);
    let goal = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let x0 = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
    Instance {
        a,
        b,
        cost: QuadraticCost::new(qm, r, qf, goal),
        x0,
        horizon,
    }
}

/// Optimal trajectory and cost from the Riccati recursion.
pub fn riccati(inst: &Instance) -> (Trajectory, f64) {
    let (p, q) = (inst.a.nrows(), inst.b.ncols());
    let n = p + 1;
    let mut at = DMatrix::zeros(n, n);
    at.view_mut((0, 0), (p, p)).copy_from(&inst.a);
    at[(p, p)] = 1.0;
    let mut bt = DMatrix::zeros(n, q);
    bt.view_mut((0, 0), (p, q)).copy_from(&inst.b);
    let lift = |w: &DMatrix<f64>| {
        // (x − g)ᵀW(x − g) as a quadratic form in [x; 1]
        let g = &inst.cost.goal;
        let wg = w * g;
        let mut m = DMatrix::zeros(n, n);
        m.view_mut((0, 0), (p, p)).copy_from(w);
        m.view_mut((0, p), (p, 1)).copy_from(&(-&wg));
        m.view_mut((p, 0), (1, p)).copy_from(&(-wg.transpose()));
        m[(p, p)] = g.dot(&(w * g));
        m
    };
    let qt = lift(&inst.cost.q);
    let r = &inst.cost.r;
    let mut pk = lift(&inst.cost.qf);
    let mut gains = vec![DMatrix::zeros(q, n); inst.horizon];
    for k in (0..inst.horizon).rev() {
        let s = r + bt.transpose() * &pk * &bt;
        let kk = s
            .clone()
            .lu()
            .solve(&(bt.transpose() * &pk * &at))
            .expect("R + BᵀPB is invertible");
        let acl = &at - &bt * &kk;
        pk = &qt + kk.transpose() * r * &kk + acl.transpose() * &pk * &acl;
        gains[k] = kk;
    }
    let mut xt = inst.x0.clone().insert_row(p, 1.0);
    let cost = xt.dot(&(&pk * &xt));
    let mut states = vec![inst.x0.clone()];
    let mut controls = Vec::with_capacity(inst.horizon);
    for g in &gains {
        let u = -(g * &xt);
        xt = &at * &xt + &bt * &u;
        states.push(xt.rows(0, p).into_owned());
        controls.push(u);
    }
    (
        Trajectory {
            states,
            controls,
            dt: 1.0,
        },
        cost,
    )
}

pub struct LqrReport {
    pub worst_cost_rel: f64,
    pub worst_traj_inf: f64,
}

/// Compares the DDP solver against the oracle on `count` random instances.
pub fn compare(count: usize, seed: u64) -> LqrReport {
    let mut rng = super::rng(seed);
    let mut rep = LqrReport {
        worst_cost_rel: 0.0,
        worst_traj_inf: 0.0,
    };
    for _ in 0..count {
        let inst = instance(&mut rng);
        let (oracle, j_star) = riccati(&inst);
        let dyn_ = LinearDynamics::new(inst.a.clone(), inst.b.clone());
        let init = Trajectory::zero_controls(&dyn_, &inst.x0, inst.horizon, 1.0);
        // the default stopping test trades ~1e-6 of trajectory accuracy for speed
        let settings = DdpSettings {
            abs_tolerance: 1e-12,
            rel_tolerance: 1e-14,
            ..DdpSettings::default()
        };
        let sol = ddp::solve(&init, &inst.cost, &dyn_, &settings).expect("LQ solve");
        rep.worst_cost_rel = rep
            .worst_cost_rel
            .max((sol.cost - j_star).abs() / j_star.abs().max(1e-12));
        let dx = sol
            .trajectory
            .states
            .iter()
            .zip(&oracle.states)
            .map(|(a, b)| (a - b).amax());
        let du = sol
            .trajectory
            .controls
            .iter()
            .zip(&oracle.controls)
            .map(|(a, b)| (a - b).amax());
        rep.worst_traj_inf = dx.chain(du).fold(rep.worst_traj_inf, f64::max);
    }
    rep
}
