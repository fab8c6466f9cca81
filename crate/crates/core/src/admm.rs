//! Pieces shared by both consensus solvers: penalty tuning, residual
//! bookkeeping, adaptation, acceleration and message payloads.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::network::Payload;

/// How consensus penalties are represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyMode {
    /// Diagonal matrices derived from the cost weights.
    #[default]
    Matrix,
    /// Uniform scalars; the global update keeps its dual terms.
    Scalar,
}

/// Penalty bases. In matrix mode the bases are `scale · diag(weight)` with
/// each entry floored at `floor`; in scalar mode the constants are used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenaltySettings {
    pub mode: PenaltyMode,
    /// Multiplier on `R` for the control-consensus block.
    pub control_scale: f64,
    /// Multiplier on `Q` for the own-state block.
    pub state_scale: f64,
    /// Multiplier on the `Q` blocks for the copy/global block.
    pub copy_scale: f64,
    pub floor: f64,
    pub tau: f64,
    pub rho: f64,
    pub mu: f64,
}

impl Default for PenaltySettings {
    fn default() -> Self {
        Self {
            mode: PenaltyMode::Matrix,
            control_scale: 2.0,
            state_scale: 8.0,
            copy_scale: 8.0,
            floor: 1.0,
            tau: 1.0,
            rho: 240.0,
            mu: 240.0,
        }
    }
}

impl PenaltySettings {
    pub fn validate(&self) -> Result<(), String> {
        let all = [
            self.control_scale,
            self.state_scale,
            self.copy_scale,
            self.floor,
            self.tau,
            self.rho,
            self.mu,
        ];
        if all.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err("penalty scales, floor and scalars must be positive and finite".into());
        }
        Ok(())
    }

    /// Base diagonal from a weight diagonal.
    pub fn base(&self, weights: &DVector<f64>, scale: f64, scalar: f64) -> DVector<f64> {
        match self.mode {
            PenaltyMode::Matrix => weights.map(|w| (scale * w).max(self.floor)),
            PenaltyMode::Scalar => DVector::from_element(weights.len(), scalar),
        }
    }
}

/// Residual-balancing settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptationSettings {
    pub chi_increase: f64,
    pub chi_decrease: f64,
    pub sigma_increase: [f64; 3],
    pub sigma_decrease: [f64; 3],
    /// Adapt every `interval` iterations.
    pub interval: usize,
    pub min_scale: f64,
    pub max_scale: f64,
}

impl Default for AdaptationSettings {
    fn default() -> Self {
        Self {
            chi_increase: 2.0,
            chi_decrease: 2.0,
            sigma_increase: [1.0 / 200.0, 1.0 / 200.0, 1.0 / 20.0],
            sigma_decrease: [1.0 / 50.0, 1.0 / 50.0, 1.0 / 5.0],
            interval: 10,
            min_scale: 1.0 / 64.0,
            max_scale: 64.0,
        }
    }
}

impl AdaptationSettings {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.chi_increase >= 1.0) || !(self.chi_decrease >= 1.0) {
            return Err("adaptation factors must be at least 1".into());
        }
        if self.interval == 0 {
            return Err("adaptation interval must be positive".into());
        }
        if !(self.min_scale > 0.0) || self.min_scale > 1.0 || self.max_scale < 1.0 {
            return Err("adaptation bounds must bracket 1".into());
        }
        if self
            .sigma_increase
            .iter()
            .chain(&self.sigma_decrease)
            .any(|s| !(*s >= 0.0))
        {
            return Err("adaptation thresholds must be nonnegative".into());
        }
        Ok(())
    }

    /// One balancing step on a scale factor; increase takes precedence.
    pub fn adapt(&self, block: usize, scale: f64, primal: f64, dual: f64) -> f64 {
        let next = if primal > self.sigma_increase[block] * dual {
            scale * self.chi_increase
        } else if primal < self.sigma_decrease[block] * dual {
            scale / self.chi_decrease
        } else {
            scale
        };
        next.clamp(self.min_scale, self.max_scale)
    }
}

/// Residual thresholds for the optional global stop test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopThresholds {
    pub primal: [f64; 3],
    pub dual: [f64; 3],
}

impl StopThresholds {
    /// Reference values for 256 agents, scaled linearly to `agents`.
    pub fn scaled(agents: usize) -> Self {
        let s = agents as f64 / 256.0;
        Self {
            primal: [5.0 * s, 10.0 * s, 10.0 * s],
            dual: [50.0 * s, 1e3 * s, 1e3 * s],
        }
    }

    pub fn satisfied(&self, r: &Residuals) -> bool {
        (0..3).all(|b| r.primal[b] <= self.primal[b] && r.dual[b] <= self.dual[b])
    }
}

/// Primal and dual residual norms per block (control, state, global).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub primal: [f64; 3],
    pub dual: [f64; 3],
}

impl Residuals {
    /// Norm of the concatenation over agents.
    pub fn total(per_agent: &[Residuals]) -> Residuals {
        let mut t = Residuals::default();
        for r in per_agent {
            for b in 0..3 {
                t.primal[b] += r.primal[b] * r.primal[b];
                t.dual[b] += r.dual[b] * r.dual[b];
            }
        }
        for b in 0..3 {
            t.primal[b] = t.primal[b].sqrt();
            t.dual[b] = t.dual[b].sqrt();
        }
        t
    }
}

/// `‖[a_0 − b_0; …]‖₂` over a trajectory.
pub fn gap_norm(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm_squared())
        .sum::<f64>()
        .sqrt()
}

/// `‖[W(a_0 − b_0); …]‖₂` with diagonal `W`.
pub fn weighted_gap_norm(w: &DVector<f64>, a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).component_mul(w).norm_squared())
        .sum::<f64>()
        .sqrt()
}

/// Momentum sequence `α_{n+1} = (1 + √(1 + 4α_n²))/2`, `γ_n = η(α_n − 1)/α_{n+1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nesterov {
    pub eta: f64,
    pub alpha: f64,
}

impl Nesterov {
    pub fn new(eta: f64) -> Self {
        Self { eta, alpha: 1.0 }
    }

    /// Advances the sequence and returns `γ_n`.
    pub fn next_gamma(&mut self) -> f64 {
        let next = 0.5 * (1.0 + (1.0 + 4.0 * self.alpha * self.alpha).sqrt());
        let gamma = self.eta * (self.alpha - 1.0) / next;
        self.alpha = next;
        gamma
    }

    pub fn restart(&mut self) {
        self.alpha = 1.0;
    }
}

/// `v + γ(v − v_prev)`, or a plain copy when `γ = 0`.
pub fn extrapolate(v: &[DVector<f64>], prev: &[DVector<f64>], gamma: f64) -> Vec<DVector<f64>> {
    if gamma == 0.0 {
        return v.to_vec();
    }
    v.iter()
        .zip(prev)
        .map(|(a, b)| a + (a - b) * gamma)
        .collect()
}

/// Guard that fires when the total primal residual grows tenfold within a
/// five-iteration window.
#[derive(Debug, Clone, Default)]
pub struct DivergenceGuard {
    history: Vec<f64>,
}

impl DivergenceGuard {
    pub fn push(&mut self, total_primal: f64) -> bool {
        self.history.push(total_primal);
        let n = self.history.len();
        if n < 6 {
            return false;
        }
        let base = self.history[n - 6];
        let fired = base > 0.0 && total_primal > 10.0 * base;
        if fired {
            self.history.clear();
        }
        fired
    }
}

/// Blocks of a consensus vector sent from a copy holder to the owner.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CopyMessage {
    pub states: Vec<DVector<f64>>,
    pub state_duals: Vec<DVector<f64>>,
    pub state_weight: DVector<f64>,
    pub controls: Vec<DVector<f64>>,
    pub control_duals: Vec<DVector<f64>>,
    pub control_weight: DVector<f64>,
}

impl Payload for CopyMessage {
    fn byte_size(&self) -> usize {
        self.states.byte_size()
            + self.state_duals.byte_size()
            + self.state_weight.byte_size()
            + self.controls.byte_size()
            + self.control_duals.byte_size()
            + self.control_weight.byte_size()
    }
}

/// One copy's trajectory, duals and penalty weights.
pub type WeightedCopy<'a> = (&'a [DVector<f64>], &'a [DVector<f64>], &'a DVector<f64>);

/// Consensus average of copies `v_j` with weights `W_j` and duals `d_j`.
///
/// Matrix mode: `(Σ W_j)⁻¹ Σ W_j v_j`. Scalar mode: `(1/n) Σ (v_j + d_j/W_j)`.
pub fn consensus_average(mode: PenaltyMode, copies: &[WeightedCopy]) -> Vec<DVector<f64>> {
    let (first, _, _) = copies[0];
    let len = first.len();
    let dim = first.first().map_or(0, |v| v.len());
    match mode {
        PenaltyMode::Matrix => {
            let total_w = copies
                .iter()
                .fold(DVector::zeros(dim), |acc, (_, _, w)| acc + *w);
            (0..len)
                .map(|k| {
                    let num = copies.iter().fold(DVector::zeros(dim), |acc, (v, _, w)| {
                        acc + v[k].component_mul(w)
                    });
                    num.component_div(&total_w)
                })
                .collect()
        }
        PenaltyMode::Scalar => {
            let n = copies.len() as f64;
            (0..len)
                .map(|k| {
                    let sum = copies.iter().fold(DVector::zeros(dim), |acc, (v, d, w)| {
                        acc + &v[k] + d[k].component_div(w)
                    });
                    sum / n
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_sequence() {
        let mut n = Nesterov::new(0.2);
        assert_eq!(n.next_gamma(), 0.0);
        assert!((n.alpha - 0.5 * (1.0 + 5f64.sqrt())).abs() < 1e-15);
        let g = n.next_gamma();
        assert!(g > 0.0 && g < 0.2);
        let mut z = Nesterov::new(0.0);
        for _ in 0..5 {
            assert_eq!(z.next_gamma(), 0.0);
        }
    }

    #[test]
    fn adaptation_examples() {
        let s = AdaptationSettings::default();
        assert_eq!(s.adapt(0, 1.0, 0.0, 0.0), 1.0);
        assert_eq!(s.adapt(0, 1.0, 1.0, 10.0), 2.0);
        assert_eq!(s.adapt(0, 1.0, 0.01, 10.0), 0.5);
        assert_eq!(s.adapt(0, 64.0, 1.0, 0.0), 64.0);
    }

    #[test]
    fn weighted_and_plain_averages() {
        let a = vec![DVector::from_element(3, 0.0)];
        let b = vec![DVector::from_element(3, 2.0)];
        let zero = vec![DVector::zeros(3)];
        let w = DVector::from_element(3, 1.0);
        let z = consensus_average(PenaltyMode::Matrix, &[(&a, &zero, &w), (&b, &zero, &w)]);
        assert_eq!(z[0], DVector::from_element(3, 1.0));
        let c = vec![DVector::from_element(1, 0.0)];
        let d = vec![DVector::from_element(1, 4.0)];
        let z1 = vec![DVector::zeros(1)];
        let z = consensus_average(
            PenaltyMode::Matrix,
            &[
                (&c, &z1, &DVector::from_element(1, 1.0)),
                (&d, &z1, &DVector::from_element(1, 3.0)),
            ],
        );
        assert_eq!(z[0][0], 3.0);
        let dual = vec![DVector::from_element(1, 2.0)];
        let z = consensus_average(
            PenaltyMode::Scalar,
            &[(&c, &dual, &DVector::from_element(1, 4.0))],
        );
        assert_eq!(z[0][0], 0.5);
    }

    #[test]
    fn totals_are_concatenated_norms() {
        let r = [
            Residuals {
                primal: [3.0, 0.0, 0.0],
                dual: [0.0; 3],
            },
            Residuals {
                primal: [4.0, 0.0, 0.0],
                dual: [0.0; 3],
            },
        ];
        assert_eq!(Residuals::total(&r).primal[0], 5.0);
    }

    #[test]
    fn guard_fires_on_tenfold_growth() {
        let mut g = DivergenceGuard::default();
        for v in [1.0, 1.0, 2.0, 3.0, 5.0] {
            assert!(!g.push(v));
        }
        assert!(g.push(11.0));
    }
}
