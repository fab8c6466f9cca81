//! Cost interface and the concrete costs used by the solvers.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

/// Second-order expansion of a running cost at `(x, u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningExpansion {
    pub lx: DVector<f64>,
    pub lu: DVector<f64>,
    pub lxx: DMatrix<f64>,
    pub luu: DMatrix<f64>,
    /// Mixed block, `q × p`.
    pub lux: DMatrix<f64>,
}

impl RunningExpansion {
    pub fn zeros(p: usize, q: usize) -> Self {
        Self {
            lx: DVector::zeros(p),
            lu: DVector::zeros(q),
            lxx: DMatrix::zeros(p, p),
            luu: DMatrix::zeros(q, q),
            lux: DMatrix::zeros(q, p),
        }
    }
}

/// Second-order expansion of a terminal cost.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalExpansion {
    pub lx: DVector<f64>,
    pub lxx: DMatrix<f64>,
}

/// Stage-wise cost `Σ_k ℓ(x_k, u_k, k) + φ(x_K)`.
pub trait Cost: Send + Sync {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn running(&self, x: &DVector<f64>, u: &DVector<f64>, k: usize) -> f64;
    fn terminal(&self, x: &DVector<f64>) -> f64;
    fn running_expansion(&self, x: &DVector<f64>, u: &DVector<f64>, k: usize) -> RunningExpansion;
    fn terminal_expansion(&self, x: &DVector<f64>) -> TerminalExpansion;
}

impl<C: Cost + ?Sized> Cost for &C {
    fn state_dim(&self) -> usize {
        (**self).state_dim()
    }
    fn control_dim(&self) -> usize {
        (**self).control_dim()
    }
    fn running(&self, x: &DVector<f64>, u: &DVector<f64>, k: usize) -> f64 {
        (**self).running(x, u, k)
    }
    fn terminal(&self, x: &DVector<f64>) -> f64 {
        (**self).terminal(x)
    }
    fn running_expansion(&self, x: &DVector<f64>, u: &DVector<f64>, k: usize) -> RunningExpansion {
        (**self).running_expansion(x, u, k)
    }
    fn terminal_expansion(&self, x: &DVector<f64>) -> TerminalExpansion {
        (**self).terminal_expansion(x)
    }
}

/// `(x − g)ᵀQ(x − g) + uᵀRu` per step and `(x − g)ᵀQ_f(x − g)` at the end.
///
/// No ½ factor, so `ℓ_xx = 2Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticCost {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub qf: DMatrix<f64>,
    pub goal: DVector<f64>,
}

impl QuadraticCost {
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>, qf: DMatrix<f64>, goal: DVector<f64>) -> Self {
        assert!(
            q.is_square() && r.is_square() && qf.shape() == q.shape() && goal.len() == q.nrows()
        );
        Self { q, r, qf, goal }
    }

    pub fn diagonal(q: &[f64], r: &[f64], qf: &[f64], goal: DVector<f64>) -> Self {
        let d = |v: &[f64]| DMatrix::from_diagonal(&DVector::from_column_slice(v));
        Self::new(d(q), d(r), d(qf), goal)
    }
}

impl Cost for QuadraticCost {
    fn state_dim(&self) -> usize {
        self.q.nrows()
    }
    fn control_dim(&self) -> usize {
        self.r.nrows()
    }
    fn running(&self, x: &DVector<f64>, u: &DVector<f64>, _k: usize) -> f64 {
        let e = x - &self.goal;
        e.dot(&(&self.q * &e)) + u.dot(&(&self.r * u))
    }
    fn terminal(&self, x: &DVector<f64>) -> f64 {
        let e = x - &self.goal;
        e.dot(&(&self.qf * &e))
    }
    fn running_expansion(&self, x: &DVector<f64>, u: &DVector<f64>, _k: usize) -> RunningExpansion {
        let e = x - &self.goal;
        RunningExpansion {
            lx: (&self.q + self.q.transpose()) * e,
            lu: (&self.r + self.r.transpose()) * u,
            lxx: &self.q + self.q.transpose(),
            luu: &self.r + self.r.transpose(),
            lux: DMatrix::zeros(self.r.nrows(), self.q.nrows()),
        }
    }
    fn terminal_expansion(&self, x: &DVector<f64>) -> TerminalExpansion {
        let e = x - &self.goal;
        TerminalExpansion {
            lx: (&self.qf + self.qf.transpose()) * e,
            lxx: &self.qf + self.qf.transpose(),
        }
    }
}

/// Weighted sum of member costs acting on consecutive state/control blocks.
#[derive(Clone)]
pub struct BlockCost {
    members: Vec<(Arc<dyn Cost>, f64)>,
    state_offsets: Vec<usize>,
    control_offsets: Vec<usize>,
}

impl BlockCost {
    pub fn new(members: Vec<(Arc<dyn Cost>, f64)>) -> Self {
        let mut state_offsets = vec![0];
        let mut control_offsets = vec![0];
        for (m, _) in &members {
            state_offsets.push(state_offsets.last().unwrap() + m.state_dim());
            control_offsets.push(control_offsets.last().unwrap() + m.control_dim());
        }
        Self {
            members,
            state_offsets,
            control_offsets,
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        self.members.iter().map(|(_, w)| *w).collect()
    }

    fn blocks<'a>(
        &'a self,
        x: &'a DVector<f64>,
        u: Option<&'a DVector<f64>>,
    ) -> impl Iterator<Item = (usize, &'a dyn Cost, f64, DVector<f64>, Option<DVector<f64>>)> + 'a
    {
        self.members.iter().enumerate().map(move |(b, (m, w))| {
            let (s0, s1) = (self.state_offsets[b], self.state_offsets[b + 1]);
            let (c0, c1) = (self.control_offsets[b], self.control_offsets[b + 1]);
            let xb = DVector::from_column_slice(&x.as_slice()[s0..s1]);
            let ub = u.map(|u| DVector::from_column_slice(&u.as_slice()[c0..c1]));
            (b, m.as_ref(), *w, xb, ub)
        })
    }
}

impl Cost for BlockCost {
    fn state_dim(&self) -> usize {
        *self.state_offsets.last().unwrap()
    }
    fn control_dim(&self) -> usize {
        *self.control_offsets.last().unwrap()
    }
    fn running(&self, x: &DVector<f64>, u: &DVector<f64>, k: usize) -> f64 {
        self.blocks(x, Some(u))
            .map(|(_, m, w, xb, ub)| w * m.running(&xb, &ub.unwrap(), k))
            .sum()
    }
    fn terminal(&self, x: &DVector<f64>) -> f64 {
        self.blocks(x, None)
            .map(|(_, m, w, xb, _)| w * m.terminal(&xb))
            .sum()
    }
    fn running_expansion(&self, x: &DVector<f64>, u: &DVector<f64>, k: usize) -> RunningExpansion {
        let mut out = RunningExpansion::zeros(self.state_dim(), self.control_dim());
        for (b, m, w, xb, ub) in self.blocks(x, Some(u)) {
            let e = m.running_expansion(&xb, &ub.unwrap(), k);
            let (s0, c0) = (self.state_offsets[b], self.control_offsets[b]);
            let (p, q) = (xb.len(), e.lu.len());
            out.lx.rows_mut(s0, p).copy_from(&(e.lx * w));
            out.lu.rows_mut(c0, q).copy_from(&(e.lu * w));
            out.lxx.view_mut((s0, s0), (p, p)).copy_from(&(e.lxx * w));
            out.luu.view_mut((c0, c0), (q, q)).copy_from(&(e.luu * w));
            out.lux.view_mut((c0, s0), (q, p)).copy_from(&(e.lux * w));
        }
        out
    }
    fn terminal_expansion(&self, x: &DVector<f64>) -> TerminalExpansion {
        let p = self.state_dim();
        let mut out = TerminalExpansion {
            lx: DVector::zeros(p),
            lxx: DMatrix::zeros(p, p),
        };
        for (b, m, w, xb, _) in self.blocks(x, None) {
            let e = m.terminal_expansion(&xb);
            let (s0, n) = (self.state_offsets[b], xb.len());
            out.lx.rows_mut(s0, n).copy_from(&(e.lx * w));
            out.lxx.view_mut((s0, s0), (n, n)).copy_from(&(e.lxx * w));
        }
        out
    }
}

/// Quadratic consensus terms used by the ADMM local steps.
///
/// Per step it adds `½‖x − a_k + P⁻¹λ_k‖²_P` and `½‖u − b_k + T⁻¹ξ_k‖²_T`
/// with diagonal weights `P`, `T`. Up to a constant this equals
/// `½‖x − a_k‖²_P + λ_kᵀx`; the completed square keeps uniform-weight and
/// scalar-penalty runs bit-identical.
#[derive(Clone)]
pub struct ProximalCost<C> {
    pub base: C,
    pub state_weight: DVector<f64>,
    pub state_target: Vec<DVector<f64>>,
    pub state_dual: Vec<DVector<f64>>,
    pub control_weight: DVector<f64>,
    pub control_target: Vec<DVector<f64>>,
    pub control_dual: Vec<DVector<f64>>,
}

fn shifted_gap(
    v: &DVector<f64>,
    w: &DVector<f64>,
    t: &DVector<f64>,
    d: &DVector<f64>,
) -> DVector<f64> {
    v - t + d.component_div(w)
}

fn proximal_value(v: &DVector<f64>, w: &DVector<f64>, t: &DVector<f64>, d: &DVector<f64>) -> f64 {
    let e = shifted_gap(v, w, t, d);
    0.5 * e.component_mul(&e).dot(w)
}

fn proximal_gradient(
    v: &DVector<f64>,
    w: &DVector<f64>,
    t: &DVector<f64>,
    d: &DVector<f64>,
) -> DVector<f64> {
    shifted_gap(v, w, t, d).component_mul(w)
}

fn add_diagonal(m: &mut DMatrix<f64>, d: &DVector<f64>) {
    for i in 0..d.len() {
        m[(i, i)] += d[i];
    }
}

impl<C: Cost> Cost for ProximalCost<C> {
    fn state_dim(&self) -> usize {
        self.base.state_dim()
    }
    fn control_dim(&self) -> usize {
        self.base.control_dim()
    }
    fn running(&self, x: &DVector<f64>, u: &DVector<f64>, k: usize) -> f64 {
        self.base.running(x, u, k)
            + proximal_value(
                x,
                &self.state_weight,
                &self.state_target[k],
                &self.state_dual[k],
            )
            + proximal_value(
                u,
                &self.control_weight,
                &self.control_target[k],
                &self.control_dual[k],
            )
    }
    fn terminal(&self, x: &DVector<f64>) -> f64 {
        let k = self.state_target.len() - 1;
        self.base.terminal(x)
            + proximal_value(
                x,
                &self.state_weight,
                &self.state_target[k],
                &self.state_dual[k],
            )
    }
    fn running_expansion(&self, x: &DVector<f64>, u: &DVector<f64>, k: usize) -> RunningExpansion {
        let mut e = self.base.running_expansion(x, u, k);
        e.lx += proximal_gradient(
            x,
            &self.state_weight,
            &self.state_target[k],
            &self.state_dual[k],
        );
        e.lu += proximal_gradient(
            u,
            &self.control_weight,
            &self.control_target[k],
            &self.control_dual[k],
        );
        add_diagonal(&mut e.lxx, &self.state_weight);
        add_diagonal(&mut e.luu, &self.control_weight);
        e
    }
    fn terminal_expansion(&self, x: &DVector<f64>) -> TerminalExpansion {
        let k = self.state_target.len() - 1;
        let mut e = self.base.terminal_expansion(x);
        e.lx += proximal_gradient(
            x,
            &self.state_weight,
            &self.state_target[k],
            &self.state_dual[k],
        );
        add_diagonal(&mut e.lxx, &self.state_weight);
        e
    }
}
