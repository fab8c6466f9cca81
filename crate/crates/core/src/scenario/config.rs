//! Declarative scenario files (TOML).

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::al::AlSettings;
use crate::constraints::{wheel_speed_map, BoxConstraint, ObstacleConstraint, Target, Window};
use crate::cost::QuadraticCost;
use crate::ddp::DdpSettings;
use crate::dynamics::{DubinsCar, Dynamics, Quadrotor, QuadrotorParams, Unicycle};
use crate::error::{Error, ValidationError};
use crate::md::MdSettings;
use crate::nd::NdSettings;
use crate::network::NeighborhoodGraph;
use crate::problem::{Agent, MultiAgentProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Dubins,
    Unicycle,
    Quadrotor,
}

impl ModelKind {
    pub fn dims(self) -> (usize, usize) {
        match self {
            ModelKind::Dubins => (4, 2),
            ModelKind::Unicycle => (3, 2),
            ModelKind::Quadrotor => (12, 4),
        }
    }

    pub fn position(self) -> Vec<usize> {
        match self {
            ModelKind::Quadrotor => vec![0, 1, 2],
            _ => vec![0, 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub dt: f64,
    pub horizon: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadrotor: Option<QuadrotorParams>,
}

/// Diagonal cost weights shared by every agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    pub q: Vec<f64>,
    pub r: Vec<f64>,
    pub qf: Vec<f64>,
}

/// Wheel-speed limits for differential-drive robots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WheelConfig {
    pub radius: f64,
    pub axle: f64,
    pub max_speed: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlLimits {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wheels: Option<WheelConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateBoxConfig {
    pub indices: Vec<usize>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Inclusive step window `[start, end]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleConfig {
    pub center: Vec<f64>,
    pub radius: f64,
    pub clearance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub start: Vec<f64>,
    pub goal: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_control: Option<Vec<f64>>,
    /// Boxes for this agent only (e.g. its lane).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub state_boxes: Vec<StateBoxConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphConfig {
    All,
    Radius {
        radius: f64,
    },
    /// `size` counts the agent itself.
    KNearest {
        size: usize,
    },
    Explicit {
        adjacency: Vec<Vec<usize>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Md,
    Nd,
    Central,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CentralSettings {
    pub ddp: DdpSettings,
    pub al: AlSettings,
    pub warmstart: DdpSettings,
}

impl Default for CentralSettings {
    fn default() -> Self {
        Self {
            ddp: DdpSettings {
                max_iterations: 200,
                ..DdpSettings::default()
            },
            al: AlSettings {
                max_outer: 15,
                ..AlSettings::default()
            },
            warmstart: DdpSettings {
                max_iterations: 100,
                ..DdpSettings::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    pub solver: SolverKind,
    pub model: ModelConfig,
    pub cost: CostConfig,
    #[serde(default)]
    pub controls: ControlLimits,
    /// Boxes applied to every agent.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub state_boxes: Vec<StateBoxConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub obstacles: Vec<ObstacleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collision: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub connectivity: Option<f64>,
    pub graph: GraphConfig,
    pub agents: Vec<AgentConfig>,
    #[serde(default)]
    pub md: MdSettings,
    #[serde(default)]
    pub nd: NdSettings,
    #[serde(default)]
    pub central: CentralSettings,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, Error> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario configs always serialize")
    }

    /// Applies `key=value` overrides addressed by dotted paths; `key=none`
    /// removes an optional entry.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self, Error> {
        let mut value = toml::Value::try_from(self).map_err(|e| Error::Parse(e.to_string()))?;
        for o in overrides {
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("override {o:?} is not key=value")))?;
            let parsed: toml::Value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
                .map(|mut t| t.remove("v").expect("key present"))
                .unwrap_or_else(|_| toml::Value::String(raw.to_string()));
            let mut slot = &mut value;
            let parts: Vec<&str> = key.split('.').collect();
            for (n, part) in parts.iter().enumerate() {
                let table = slot
                    .as_table_mut()
                    .ok_or_else(|| Error::Parse(format!("{key}: {part} is not a table")))?;
                if n + 1 == parts.len() {
                    if raw.trim() == "none" {
                        table.remove(*part);
                    } else {
                        table.insert(part.to_string(), parsed.clone());
                    }
                    break;
                }
                slot = table
                    .entry(part.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            }
        }
        let cfg: Self = value
            .try_into()
            .map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Lists every inconsistency at once.
    pub fn validate(&self) -> Result<(), ValidationError> {
        let mut errs = Vec::new();
        let (p, q) = self.model.kind.dims();
        if !(self.model.dt > 0.0) {
            errs.push("model.dt must be positive".into());
        }
        if self.model.horizon == 0 {
            errs.push("model.horizon must be positive".into());
        }
        if self
            .model
            .quadrotor
            .as_ref()
            .is_some_and(|qp| !qp.is_valid())
        {
            errs.push("model.quadrotor parameters must be positive".into());
        }
        if self.cost.q.len() != p || self.cost.qf.len() != p || self.cost.r.len() != q {
            errs.push(format!(
                "cost weights must have {p} state and {q} control entries"
            ));
        }
        if self
            .cost
            .q
            .iter()
            .chain(&self.cost.qf)
            .any(|w| !(*w >= 0.0))
            || self.cost.r.iter().any(|w| !(*w > 0.0))
        {
            errs.push("cost weights must be nonnegative (R positive)".into());
        }
        let c = &self.controls;
        for (name, v) in [("lower", &c.lower), ("upper", &c.upper)] {
            if v.as_ref().is_some_and(|v| v.len() != q) {
                errs.push(format!("controls.{name} must have {q} entries"));
            }
        }
        if let (Some(l), Some(u)) = (&c.lower, &c.upper) {
            if l.iter().zip(u).any(|(a, b)| a > b) {
                errs.push("controls.lower exceeds controls.upper".into());
            }
        }
        if let Some(w) = &c.wheels {
            if self.model.kind != ModelKind::Unicycle {
                errs.push("controls.wheels only applies to unicycles".into());
            }
            if !(w.radius > 0.0 && w.axle > 0.0 && w.max_speed > 0.0) {
                errs.push("wheel radius, axle and max speed must be positive".into());
            }
            if c.lower.is_some() || c.upper.is_some() {
                errs.push("use either controls.wheels or plain control bounds".into());
            }
        }
        let mut check_box = |b: &StateBoxConfig, ctx: &str| {
            if b.indices.len() != b.lower.len() || b.indices.len() != b.upper.len() {
                errs.push(format!("{ctx}: indices and bounds differ in length"));
            }
            if b.indices.iter().any(|&i| i >= p) {
                errs.push(format!("{ctx}: state index out of range"));
            }
            if b.lower.iter().zip(&b.upper).any(|(l, u)| l > u) {
                errs.push(format!("{ctx}: lower bound exceeds upper bound"));
            }
            if let Some([s, e]) = b.window {
                if s > e || e > self.model.horizon {
                    errs.push(format!("{ctx}: window must satisfy start ≤ end ≤ horizon"));
                }
            }
        };
        for b in &self.state_boxes {
            check_box(b, "state_boxes");
        }
        for (i, a) in self.agents.iter().enumerate() {
            for b in &a.state_boxes {
                check_box(b, &format!("agents[{i}].state_boxes"));
            }
        }
        let dim = self.model.kind.position().len();
        for o in &self.obstacles {
            if o.center.len() != dim || !(o.radius > 0.0) || !(o.clearance >= 0.0) {
                errs.push(format!("obstacle at {:?} is malformed", o.center));
            }
        }
        for (name, v) in [
            ("collision", self.collision),
            ("connectivity", self.connectivity),
        ] {
            if v.is_some_and(|d| !(d > 0.0)) {
                errs.push(format!("{name} distance must be positive"));
            }
        }
        if let (Some(a), Some(b)) = (self.collision, self.connectivity) {
            if a >= b {
                errs.push(format!(
                    "collision distance {a} must be below connectivity distance {b}"
                ));
            }
        }
        if self.agents.is_empty() {
            errs.push("at least one agent is required".into());
        }
        for (i, a) in self.agents.iter().enumerate() {
            if a.start.len() != p || a.goal.len() != p {
                errs.push(format!("agents[{i}]: start and goal need {p} entries"));
            }
            if a.initial_control.as_ref().is_some_and(|u| u.len() != q) {
                errs.push(format!("agents[{i}]: initial_control needs {q} entries"));
            }
        }
        match &self.graph {
            GraphConfig::Radius { radius } if !(*radius > 0.0) => {
                errs.push("graph radius must be positive".into())
            }
            GraphConfig::KNearest { size } if *size == 0 => {
                errs.push("graph size must be at least 1".into())
            }
            GraphConfig::Explicit { adjacency } => {
                if adjacency.len() != self.agents.len() {
                    errs.push("graph adjacency needs one row per agent".into());
                }
                if adjacency.iter().flatten().any(|&j| j >= self.agents.len()) {
                    errs.push("graph adjacency refers to an unknown agent".into());
                }
            }
            _ => {}
        }
        for (name, r) in [("md", self.md.validate()), ("nd", self.nd.validate())] {
            if let Err(e) = r {
                errs.push(format!("{name}: {e}"));
            }
        }
        for (name, r) in [
            ("central.ddp", self.central.ddp.validate()),
            ("central.warmstart", self.central.warmstart.validate()),
        ] {
            if let Err(e) = r {
                errs.push(format!("{name}: {e}"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ValidationError(errs))
        }
    }

    fn dynamics(&self) -> Arc<dyn Dynamics> {
        let dt = self.model.dt;
        match self.model.kind {
            ModelKind::Dubins => Arc::new(DubinsCar { dt }),
            ModelKind::Unicycle => Arc::new(Unicycle { dt }),
            ModelKind::Quadrotor => Arc::new(Quadrotor {
                dt,
                params: self.model.quadrotor.unwrap_or_default(),
            }),
        }
    }

    fn state_box(b: &StateBoxConfig) -> Result<BoxConstraint, Error> {
        let window = b.window.map(|[start, end]| Window { start, end });
        Ok(BoxConstraint::new(
            Target::State,
            b.indices.clone(),
            b.lower.clone(),
            b.upper.clone(),
            None,
            window,
        )?)
    }

    fn control_box(&self) -> Result<Option<BoxConstraint>, Error> {
        let (_, q) = self.model.kind.dims();
        let c = &self.controls;
        if let Some(w) = &c.wheels {
            let map = wheel_speed_map(w.radius, w.axle);
            return Ok(Some(BoxConstraint::new(
                Target::Control,
                vec![0, 1],
                vec![-w.max_speed; 2],
                vec![w.max_speed; 2],
                Some(map),
                None,
            )?));
        }
        if c.lower.is_none() && c.upper.is_none() {
            return Ok(None);
        }
        let lower = c
            .lower
            .clone()
            .unwrap_or_else(|| vec![f64::NEG_INFINITY; q]);
        let upper = c.upper.clone().unwrap_or_else(|| vec![f64::INFINITY; q]);
        Ok(Some(BoxConstraint::new(
            Target::Control,
            (0..q).collect(),
            lower,
            upper,
            None,
            None,
        )?))
    }

    pub fn graph(&self) -> Result<NeighborhoodGraph, Error> {
        let pos = self.model.kind.position();
        let starts: Vec<DVector<f64>> = self
            .agents
            .iter()
            .map(|a| DVector::from_iterator(pos.len(), pos.iter().map(|&i| a.start[i])))
            .collect();
        Ok(match &self.graph {
            GraphConfig::All => NeighborhoodGraph::all(self.agents.len())?,
            GraphConfig::Radius { radius } => {
                NeighborhoodGraph::from_positions(&starts, Some(*radius), None)?
            }
            GraphConfig::KNearest { size } => {
                NeighborhoodGraph::from_positions(&starts, None, Some(*size))?
            }
            GraphConfig::Explicit { adjacency } => {
                NeighborhoodGraph::from_adjacency(adjacency.clone())?
            }
        })
    }

    /// Builds the solver-facing problem.
    pub fn problem(&self) -> Result<MultiAgentProblem, Error> {
        self.validate()?;
        let dynamics = self.dynamics();
        let control_box = self.control_box()?;
        let pos = self.model.kind.position();
        let shared: Vec<BoxConstraint> = self
            .state_boxes
            .iter()
            .map(Self::state_box)
            .collect::<Result<_, _>>()?;
        let obstacles: Vec<ObstacleConstraint> = self
            .obstacles
            .iter()
            .map(|o| {
                ObstacleConstraint::new(
                    pos.clone(),
                    DVector::from_vec(o.center.clone()),
                    o.radius,
                    o.clearance,
                )
            })
            .collect::<Result<_, _>>()?;
        let diag = |v: &[f64]| DMatrix::from_diagonal(&DVector::from_vec(v.to_vec()));
        let agents = self
            .agents
            .iter()
            .map(|a| {
                let mut boxes = shared.clone();
                for b in &a.state_boxes {
                    boxes.push(Self::state_box(b)?);
                }
                Ok(Agent {
                    dynamics: dynamics.clone(),
                    cost: QuadraticCost::new(
                        diag(&self.cost.q),
                        diag(&self.cost.r),
                        diag(&self.cost.qf),
                        DVector::from_vec(a.goal.clone()),
                    ),
                    x0: DVector::from_vec(a.start.clone()),
                    position: pos.clone(),
                    control_box: control_box.clone(),
                    state_boxes: boxes,
                    obstacles: obstacles.clone(),
                    initial_control: a.initial_control.clone().map(DVector::from_vec),
                })
            })
            .collect::<Result<Vec<_>, Error>>()?;
        let problem = MultiAgentProblem {
            agents,
            graph: self.graph()?,
            collision: self.collision,
            connectivity: self.connectivity,
            horizon: self.model.horizon,
            dt: self.model.dt,
        };
        problem.validate()?;
        Ok(problem)
    }
}
