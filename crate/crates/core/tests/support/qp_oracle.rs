//! Brute-force active-set enumeration for small strictly convex QPs.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-9;

fn subsets(m: usize, size: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if cur.len() == size {
        out.push(cur.clone());
        return;
    }
    for j in start..m {
        cur.push(j);
        subsets(m, size, j + 1, cur, out);
        cur.pop();
    }
}

/// `argmin ½xᵀHx + gᵀx  s.t.  Ax ≤ b` by trying every active set, smallest
/// first, until one satisfies the KKT conditions.
pub fn brute_force(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
) -> Option<DVector<f64>> {
    let (n, m) = (g.len(), b.len());
    for size in 0..=n.min(m) {
        let mut sets = Vec::new();
        subsets(m, size, 0, &mut Vec::new(), &mut sets);
        for s in sets {
            let k = s.len();
            let mut kkt = DMatrix::zeros(n + k, n + k);
            let mut rhs = DVector::zeros(n + k);
            kkt.view_mut((0, 0), (n, n)).copy_from(h);
            rhs.rows_mut(0, n).copy_from(&(-g));
            for (r, &j) in s.iter().enumerate() {
                for c in 0..n {
                    kkt[(n + r, c)] = a[(j, c)];
                    kkt[(c, n + r)] = a[(j, c)];
                }
                rhs[n + r] = b[j];
            }
            let Some(sol) = kkt.lu().solve(&rhs) else {
                continue;
            };
            if sol.iter().any(|v| !v.is_finite()) {
                continue;
            }
            let x = sol.rows(0, n).into_owned();
            let dual_ok = (0..k).all(|r| sol[n + r] >= -TOL);
            let primal_ok =
                (0..m).all(|j| a.row(j).transpose().dot(&x) - b[j] <= TOL * (1.0 + b[j].abs()));
            if dual_ok && primal_ok {
                return Some(x);
            }
        }
    }
    None
}

/// A random weighted projection: diagonal weights, a far target, up to four
/// half-spaces and a box on some coordinates, all containing a common point.
pub struct Projection {
    pub weights: DVector<f64>,
    pub target: DVector<f64>,
    pub rows: Vec<(DVector<f64>, f64)>,
}

pub fn random_projection(rng: &mut ChaCha8Rng) -> Projection {
    let n = rng.gen_range(1..=6);
    let inside = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let weights = DVector::from_fn(n, |_, _| rng.gen_range(0.1..50.0));
    let target = DVector::from_fn(n, |_, _| rng.gen_range(-4.0..4.0));
    let mut rows = Vec::new();
    for _ in 0..rng.gen_range(0..=4) {
        let mut a = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        // sparse rows like the pairwise linearizations
        if n > 2 && rng.gen_bool(0.5) {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(rng);
            for &c in &idx[2..] {
                a[c] = 0.0;
            }
        }
        if a.norm() < 1e-3 {
            continue;
        }
        let b = a.dot(&inside) + rng.gen_range(0.0..0.5);
        rows.push((a, b));
    }
    for c in 0..n {
        if rng.gen_bool(0.5) {
            let mut e = DVector::zeros(n);
            e[c] = 1.0;
            rows.push((e.clone(), inside[c] + rng.gen_range(0.05..1.0)));
            rows.push((-e, -(inside[c] - rng.gen_range(0.05..1.0))));
        }
    }
    Projection {
        weights,
        target,
        rows,
    }
}

/// The projection as a dense QP in standard form.
pub fn as_qp(p: &Projection) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>, DVector<f64>) {
    let n = p.target.len();
    let h = DMatrix::from_diagonal(&p.weights);
    let g = -p.target.component_mul(&p.weights);
    let mut a = DMatrix::zeros(p.rows.len(), n);
    let mut b = DVector::zeros(p.rows.len());
    for (i, (row, bi)) in p.rows.iter().enumerate() {
        a.set_row(i, &row.transpose());
        b[i] = *bi;
    }
    (h, g, a, b)
}

/// Worst ∞-norm gap between `project_weighted` and the oracle.
pub fn compare_projections(count: usize, seed: u64) -> f64 {
    let mut rng = super::rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let p = random_projection(&mut rng);
        let (h, g, a, b) = as_qp(&p);
        let oracle = brute_force(&h, &g, &a, &b).expect("feasible by construction");
        let got = distddp::projection::project_weighted(&p.weights, &p.target, &p.rows)
            .expect("projection");
        assert!(!got.relaxed);
        worst = worst.max((got.point - oracle).amax());
    }
    worst
}
