//! Built-in scenario generators.

use std::f64::consts::PI;

use super::config::*;
use crate::md::MdSettings;
use crate::nd::NdSettings;

pub const CAR_DT: f64 = 0.02;
pub const CAR_HORIZON: usize = 150;
pub const CAR_Q: [f64; 4] = [30.0, 30.0, 0.0, 6.0];
pub const CAR_R: [f64; 2] = [0.5, 0.5];
pub const CAR_QF: [f64; 4] = [100.0, 100.0, 0.0, 100.0];
pub const CAR_ACCEL_MAX: f64 = 10.0;
/// 30 degrees per second.
pub const CAR_TURN_MAX: f64 = PI / 6.0;
pub const CAR_SPEED_MAX: f64 = 10.0;
pub const CAR_CLEARANCE: f64 = 0.3;
pub const CAR_COLLISION: f64 = 0.3;
pub const CAR_CONNECTIVITY: f64 = 2.0;

pub const DRONE_Q: [f64; 12] = [
    150.0, 150.0, 150.0, 50.0, 50.0, 50.0, 50.0, 50.0, 50.0, 50.0, 50.0, 50.0,
];
pub const DRONE_THRUST_MAX: f64 = 30.0;
pub const DRONE_COLLISION: f64 = 0.5;
pub const DRONE_CONNECTIVITY: f64 = 2.0;

pub const ROBOT_DT: f64 = 0.033;
pub const ROBOT_WHEEL_RADIUS: f64 = 0.016;
pub const ROBOT_AXLE: f64 = 0.11;
pub const ROBOT_WHEEL_MAX: f64 = 12.5;
pub const ROBOT_CLEARANCE: f64 = 0.15;
pub const ROBOT_COLLISION: f64 = 0.2;
pub const ROBOT_CONNECTIVITY: f64 = 0.5;

/// Names accepted by [`by_name`].
pub const NAMES: [&str; 8] = [
    "swap2",
    "swap4",
    "intersection16",
    "swap24",
    "bottleneck8",
    "formation16",
    "gate4",
    "robots4",
];

pub fn by_name(name: &str) -> Option<ScenarioConfig> {
    Some(match name {
        "swap2" => swap(2),
        "swap4" => swap(4),
        "intersection16" => intersection16(),
        "swap24" => swap24(),
        "bottleneck8" => bottleneck8(),
        "formation16" => formation(16),
        "gate4" => gate4(),
        "robots4" => robot_swap(4),
        _ => formation(name.strip_prefix("formation")?.parse().ok()?),
    })
}

fn car_base(name: &str, field: [f64; 4]) -> ScenarioConfig {
    ScenarioConfig {
        name: name.into(),
        seed: 0,
        solver: SolverKind::Md,
        model: ModelConfig {
            kind: ModelKind::Dubins,
            dt: CAR_DT,
            horizon: CAR_HORIZON,
            quadrotor: None,
        },
        cost: CostConfig {
            q: CAR_Q.to_vec(),
            r: CAR_R.to_vec(),
            qf: CAR_QF.to_vec(),
        },
        controls: ControlLimits {
            lower: Some(vec![-CAR_ACCEL_MAX, -CAR_TURN_MAX]),
            upper: Some(vec![CAR_ACCEL_MAX, CAR_TURN_MAX]),
            wheels: None,
        },
        state_boxes: vec![StateBoxConfig {
            indices: vec![0, 1, 3],
            lower: vec![field[0], field[2], -CAR_SPEED_MAX],
            upper: vec![field[1], field[3], CAR_SPEED_MAX],
            window: None,
        }],
        obstacles: vec![],
        collision: Some(CAR_COLLISION),
        connectivity: None,
        graph: GraphConfig::All,
        agents: vec![],
        md: MdSettings::default(),
        nd: NdSettings::default(),
        central: CentralSettings::default(),
    }
}

fn car(start: [f64; 2], heading: f64, speed: f64, goal: [f64; 2]) -> AgentConfig {
    AgentConfig {
        start: vec![start[0], start[1], heading, speed],
        goal: vec![goal[0], goal[1], heading, 0.0],
        initial_control: None,
        state_boxes: vec![],
    }
}

/// Agents on a ring of `radius` heading for the opposite side along chords
/// that miss the center by `offset`, so every path crosses every other one.
fn ring(m: usize, radius: f64, offset: f64, turn: f64) -> Vec<AgentConfig> {
    (0..m)
        .map(|i| {
            let phi = 2.0 * PI * i as f64 / m as f64;
            let (s, c) = phi.sin_cos();
            let lateral = [-s * offset, c * offset];
            let start = [radius * c + lateral[0], radius * s + lateral[1]];
            let goal = [-radius * c + lateral[0], -radius * s + lateral[1]];
            car(start, phi + PI + turn, 0.0, goal)
        })
        .collect()
}

/// Small head-on swaps with every pair coupled.
pub fn swap(m: usize) -> ScenarioConfig {
    let mut cfg = car_base(&format!("swap{m}"), [-5.0, 5.0, -5.0, 5.0]);
    cfg.agents = ring(m, 2.0, 0.1, 0.0);
    cfg
}

/// Four lanes of four cars crossing at speed.
pub fn intersection16() -> ScenarioConfig {
    let mut cfg = car_base("intersection16", [-10.0, 10.0, -10.0, 10.0]);
    let (gap, lead, travel, speed) = (0.8, 1.5, 6.0, 3.0);
    for dir in 0..4 {
        let heading = dir as f64 * PI / 2.0;
        let (s, c) = heading.sin_cos();
        for j in 0..4 {
            let back = lead + gap * j as f64;
            // lane center sits half a meter right of the travel direction
            let right = [0.5 * s, -0.5 * c];
            let start = [-back * c + right[0], -back * s + right[1]];
            let goal = [start[0] + travel * c, start[1] + travel * s];
            let mut a = car(start, heading, speed, goal);
            let (idx, lo, hi) = match dir {
                0 => (1, -1.0, 0.0),
                1 => (0, 0.0, 1.0),
                2 => (1, 0.0, 1.0),
                _ => (0, -1.0, 0.0),
            };
            a.state_boxes.push(StateBoxConfig {
                indices: vec![idx],
                lower: vec![lo],
                upper: vec![hi],
                window: None,
            });
            cfg.agents.push(a);
        }
    }
    cfg
}

/// Ring swap around a central obstacle with five-agent neighborhoods.
pub fn swap24() -> ScenarioConfig {
    let mut cfg = car_base("swap24", [-5.0, 5.0, -5.0, 5.0]);
    cfg.agents = ring(24, 3.5, 1.3, 0.0);
    cfg.obstacles = vec![ObstacleConfig {
        center: vec![0.0, 0.0],
        radius: 0.4,
        clearance: CAR_CLEARANCE,
    }];
    cfg.connectivity = Some(CAR_CONNECTIVITY);
    cfg.graph = GraphConfig::KNearest { size: 5 };
    cfg
}

/// Two rows merging into single file between two obstacles.
pub fn bottleneck8() -> ScenarioConfig {
    let mut cfg = car_base("bottleneck8", [-6.0, 6.0, -3.0, 3.0]);
    cfg.model.horizon = 200;
    for row in [-0.4, 0.4] {
        for col in 0..4 {
            let x = -4.5 + 0.8 * col as f64;
            cfg.agents.push(car([x, row], 0.0, 0.0, [x + 6.6, row]));
        }
    }
    cfg.obstacles = [-1.45, 1.45]
        .iter()
        .map(|&y| ObstacleConfig {
            center: vec![0.0, y],
            radius: 0.9,
            clearance: CAR_CLEARANCE,
        })
        .collect();
    cfg.connectivity = Some(CAR_CONNECTIVITY);
    cfg.graph = GraphConfig::KNearest { size: 4 };
    cfg
}

/// Grid formation translating past obstacles. `m` is rounded to a grid of
/// up to four rows.
pub fn formation(m: usize) -> ScenarioConfig {
    let mut cfg = car_base(&format!("formation{m}"), [-7.0, 7.0, -4.0, 4.0]);
    let rows = match m {
        0..=2 => 1,
        3..=8 => 2,
        _ => 4,
    };
    let cols = m.div_ceil(rows);
    let mut placed = 0;
    for c in 0..cols {
        for r in 0..rows {
            if placed == m {
                break;
            }
            let x = -5.5 + c as f64;
            let y = r as f64 - (rows as f64 - 1.0) / 2.0;
            cfg.agents.push(car([x, y], 0.0, 0.0, [x + 7.0, y]));
            placed += 1;
        }
    }
    cfg.obstacles = vec![ObstacleConfig {
        center: vec![0.0, 0.0],
        radius: 0.4,
        clearance: CAR_CLEARANCE,
    }];
    cfg.connectivity = Some(CAR_CONNECTIVITY);
    cfg.graph = GraphConfig::KNearest { size: m.min(5) };
    cfg
}

/// Four drones threading a gate window mid-flight.
pub fn gate4() -> ScenarioConfig {
    let params = crate::dynamics::QuadrotorParams::default();
    let hover = params.hover_thrust();
    let mut agents = vec![];
    for (y, z) in [(-0.6, -0.7), (0.6, -0.7), (-0.6, 0.7), (0.6, 0.7)] {
        let mut start = vec![0.0; 12];
        let mut goal = vec![0.0; 12];
        start[0] = -2.0;
        start[1] = y;
        start[2] = z;
        goal[0] = 2.0;
        goal[1] = y;
        goal[2] = z;
        agents.push(AgentConfig {
            start,
            goal,
            initial_control: Some(vec![hover; 4]),
            state_boxes: vec![],
        });
    }
    ScenarioConfig {
        name: "gate4".into(),
        seed: 0,
        solver: SolverKind::Md,
        model: ModelConfig {
            kind: ModelKind::Quadrotor,
            dt: CAR_DT,
            horizon: CAR_HORIZON,
            quadrotor: Some(params),
        },
        cost: CostConfig {
            q: DRONE_Q.to_vec(),
            r: vec![1.0; 4],
            qf: DRONE_Q.to_vec(),
        },
        controls: ControlLimits {
            lower: Some(vec![0.0; 4]),
            upper: Some(vec![DRONE_THRUST_MAX; 4]),
            wheels: None,
        },
        state_boxes: vec![
            StateBoxConfig {
                indices: vec![0, 1, 2],
                lower: vec![-4.0, -3.0, -3.0],
                upper: vec![4.0, 3.0, 3.0],
                window: None,
            },
            StateBoxConfig {
                indices: vec![1, 2],
                lower: vec![-1.0, -0.5],
                upper: vec![1.0, 0.5],
                window: Some([30, 100]),
            },
        ],
        obstacles: vec![],
        collision: Some(DRONE_COLLISION),
        connectivity: Some(DRONE_CONNECTIVITY),
        graph: GraphConfig::All,
        agents,
        md: MdSettings::default(),
        nd: NdSettings::default(),
        central: CentralSettings::default(),
    }
}

/// Differential-drive robots swapping across a small table.
pub fn robot_swap(m: usize) -> ScenarioConfig {
    let agents = (0..m)
        .map(|i| {
            let phi = 2.0 * PI * i as f64 / m as f64;
            let (s, c) = phi.sin_cos();
            let lateral = [-s * 0.15, c * 0.15];
            let r = 0.45;
            AgentConfig {
                start: vec![r * c + lateral[0], r * s + lateral[1], phi + PI],
                goal: vec![-r * c + lateral[0], -r * s + lateral[1], phi + PI],
                initial_control: None,
                state_boxes: vec![],
            }
        })
        .collect();
    ScenarioConfig {
        name: format!("robots{m}"),
        seed: 0,
        solver: SolverKind::Md,
        model: ModelConfig {
            kind: ModelKind::Unicycle,
            dt: ROBOT_DT,
            horizon: 200,
            quadrotor: None,
        },
        cost: CostConfig {
            q: vec![100.0, 100.0, 0.0],
            r: vec![100.0, 10.0],
            qf: vec![300.0, 300.0, 30.0],
        },
        controls: ControlLimits {
            lower: None,
            upper: None,
            wheels: Some(WheelConfig {
                radius: ROBOT_WHEEL_RADIUS,
                axle: ROBOT_AXLE,
                max_speed: ROBOT_WHEEL_MAX,
            }),
        },
        state_boxes: vec![StateBoxConfig {
            indices: vec![0, 1],
            lower: vec![-1.5, -1.0],
            upper: vec![1.5, 1.0],
            window: None,
        }],
        obstacles: vec![],
        collision: Some(ROBOT_COLLISION),
        connectivity: None,
        graph: GraphConfig::All,
        agents,
        md: MdSettings::default(),
        nd: NdSettings::default(),
        central: CentralSettings::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_builtin_builds() {
        for name in NAMES {
            let cfg = by_name(name).unwrap();
            cfg.problem().unwrap_or_else(|e| panic!("{name}: {e}"));
            let back = ScenarioConfig::from_toml(&cfg.to_toml()).unwrap();
            assert_eq!(back, cfg);
        }
        assert_eq!(by_name("formation8").unwrap().agents.len(), 8);
        assert!(by_name("nope").is_none());
    }

    #[test]
    fn swap24_neighborhoods_have_five_members() {
        let g = swap24().graph().unwrap();
        for i in 0..24 {
            assert_eq!(g.neighbors(i).len(), 5);
        }
    }
}
