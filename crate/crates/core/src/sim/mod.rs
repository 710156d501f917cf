//! Discrete-time simulator for a group of five agents in a square arena.
//!
//! All agents perceive the state of the previous step (synchronous update),
//! query the shared controller and integrate first-order kinematics. Walls
//! are handled by clamping positions to an inner margin; headings are never
//! reflected, so wall avoidance must come from the controller.

mod trajectory;

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controller::{decode, Action, MlpParams, N_INPUTS};
use crate::error::{Error, Result};

pub use trajectory::{format_sig9, Trajectory};

pub const N_AGENTS: usize = 5;
pub const N_NEIGHBORS: usize = N_AGENTS - 1;
/// Frame rate of the reference recordings.
pub const FPS: f64 = 15.0;
/// Frames in a 30 minute trial.
pub const FULL_STEPS: usize = 27_000;

/// Square arena `[0, side]²`; agents are kept inside `[margin, side - margin]²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Arena {
    pub side: f64,
    pub margin: f64,
}

impl Default for Arena {
    fn default() -> Self {
        Arena {
            side: 1.0,
            margin: 0.005,
        }
    }
}

impl Arena {
    pub fn validate(&self) -> Result<()> {
        if !(self.side > 0.0 && self.side.is_finite()) {
            return Err(Error::Config(format!("arena side must be > 0, got {}", self.side)));
        }
        if !(self.margin >= 0.0 && self.margin < self.side / 2.0) {
            return Err(Error::Config(format!(
                "arena margin must be in [0, side/2), got {}",
                self.margin
            )));
        }
        Ok(())
    }

    pub fn diagonal(&self) -> f64 {
        std::f64::consts::SQRT_2 * self.side
    }

    pub fn center(&self) -> [f64; 2] {
        [self.side / 2.0, self.side / 2.0]
    }

    fn clamp_inside(&self, p: [f64; 2]) -> [f64; 2] {
        let lo = self.margin;
        let hi = self.side - self.margin;
        [p[0].clamp(lo, hi), p[1].clamp(lo, hi)]
    }

    /// Distance to the nearest wall and the closest point on that wall.
    /// Ties resolve in the order west, east, south, north.
    pub fn nearest_wall(&self, p: [f64; 2]) -> (f64, [f64; 2]) {
        let candidates = [
            (p[0], [0.0, p[1]]),
            (self.side - p[0], [self.side, p[1]]),
            (p[1], [p[0], 0.0]),
            (self.side - p[1], [p[0], self.side]),
        ];
        candidates
            .into_iter()
            .fold(candidates[0], |best, c| if c.0 < best.0 { c } else { best })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialPlacement {
    /// Uniform in the central 0.2 m square, uniform headings, zero speed.
    #[default]
    CentralSquare,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub n_agents: usize,
    pub dt: f64,
    pub n_steps: usize,
    pub v_max: f64,
    /// Linear speed change per step at full action, m/s.
    pub dv_max: f64,
    /// Angular speed change per step at full action, rad/s.
    pub dw_max: f64,
    pub seed: u64,
    pub initial_placement: InitialPlacement,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            n_agents: N_AGENTS,
            dt: 1.0 / FPS,
            n_steps: FULL_STEPS,
            v_max: 0.35,
            dv_max: 0.05,
            dw_max: 2.0,
            seed: 0,
            initial_placement: InitialPlacement::CentralSquare,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_agents != N_AGENTS {
            return Err(Error::Config(format!(
                "n_agents must be {N_AGENTS}, got {}",
                self.n_agents
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be > 0, got {}", self.dt)));
        }
        if self.n_steps < 2 {
            return Err(Error::Config(format!("n_steps must be >= 2, got {}", self.n_steps)));
        }
        for (name, v) in [("v_max", self.v_max), ("dv_max", self.dv_max), ("dw_max", self.dw_max)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Largest representable angular speed: half a turn per step.
    pub fn w_bound(&self) -> f64 {
        PI / self.dt
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub position: [f64; 2],
    pub heading: f64,
    pub linear_speed: f64,
    pub angular_speed: f64,
}

pub type PerceptionVector = [f64; N_INPUTS];

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_angle(theta: f64) -> Result<f64> {
    if !theta.is_finite() {
        return Err(Error::InvalidArgument(format!("cannot wrap non-finite angle {theta}")));
    }
    Ok(wrap(theta))
}

#[inline]
pub(crate) fn wrap(theta: f64) -> f64 {
    let r = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if r >= PI {
        r - 2.0 * PI
    } else {
        r
    }
}

pub fn build_perception(
    focal: usize,
    states: &[AgentState],
    arena: &Arena,
    config: &SimulationConfig,
) -> Result<PerceptionVector> {
    if states.len() != N_AGENTS {
        return Err(Error::InvalidArgument(format!(
            "expected {N_AGENTS} agent states, got {}",
            states.len()
        )));
    }
    if focal >= N_AGENTS {
        return Err(Error::InvalidArgument(format!(
            "focal index {focal} out of range 0..{N_AGENTS}"
        )));
    }
    let states: &[AgentState; N_AGENTS] = states.try_into().expect("length checked");
    Ok(perceive(focal, states, arena, config))
}

pub(crate) fn perceive(
    focal: usize,
    states: &[AgentState; N_AGENTS],
    arena: &Arena,
    config: &SimulationConfig,
) -> PerceptionVector {
    let me = &states[focal];
    let mut neighbors = [(0.0f64, 0usize); N_NEIGHBORS];
    let mut n = 0;
    for (j, other) in states.iter().enumerate() {
        if j == focal {
            continue;
        }
        let dx = other.position[0] - me.position[0];
        let dy = other.position[1] - me.position[1];
        neighbors[n] = (dx.hypot(dy), j);
        n += 1;
    }
    neighbors.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut p = [0.0; N_INPUTS];
    p[0] = me.linear_speed / config.v_max;
    p[1] = me.angular_speed / config.w_bound();
    let diag = arena.diagonal();
    for (k, &(dist, j)) in neighbors.iter().enumerate() {
        let other = &states[j];
        let dx = other.position[0] - me.position[0];
        let dy = other.position[1] - me.position[1];
        p[2 + k] = dist / diag;
        p[6 + k] = wrap(dy.atan2(dx) - me.heading) / PI;
        p[10 + k] = wrap(other.heading - me.heading) / PI;
        p[14 + k] = (other.linear_speed - me.linear_speed) / (2.0 * config.v_max);
    }
    let (wall_dist, wall_point) = arena.nearest_wall(me.position);
    p[18] = wall_dist / (arena.side / 2.0);
    let bearing = (wall_point[1] - me.position[1]).atan2(wall_point[0] - me.position[0]);
    p[19] = wrap(bearing - me.heading) / PI;
    for v in &mut p {
        *v = v.clamp(-1.0, 1.0);
    }
    p
}

pub fn apply_action(state: &AgentState, action: &Action, config: &SimulationConfig, arena: &Arena) -> AgentState {
    let linear_speed = (state.linear_speed + action.delta_linear * config.dv_max).clamp(0.0, config.v_max);
    let w_bound = config.w_bound();
    let angular_speed = (state.angular_speed + action.delta_angular * config.dw_max).clamp(-w_bound, w_bound);
    let heading = wrap(state.heading + angular_speed * config.dt);
    let step = linear_speed * config.dt;
    let position = arena.clamp_inside([
        state.position[0] + step * heading.cos(),
        state.position[1] + step * heading.sin(),
    ]);
    AgentState {
        position,
        heading,
        linear_speed,
        angular_speed,
    }
}

pub fn init_agents(config: &SimulationConfig, arena: &Arena, rng: &mut impl Rng) -> [AgentState; N_AGENTS] {
    match config.initial_placement {
        InitialPlacement::CentralSquare => {
            let [cx, cy] = arena.center();
            std::array::from_fn(|_| {
                let x = rng.random_range(cx - 0.1..=cx + 0.1);
                let y = rng.random_range(cy - 0.1..=cy + 0.1);
                let heading = rng.random_range(-PI..PI);
                AgentState {
                    position: arena.clamp_inside([x, y]),
                    heading,
                    linear_speed: 0.0,
                    angular_speed: 0.0,
                }
            })
        }
    }
}

/// Runs `config.n_steps` synchronous updates starting from seeded initial
/// placement. The trajectory stores the state after each update.
pub fn simulate(params: &MlpParams, config: &SimulationConfig, arena: &Arena) -> Trajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let initial = init_agents(config, arena, &mut rng);
    simulate_from(params, initial, config, arena)
}

/// Decodes raw weights and simulates; fails on a wrong-length weight vector.
pub fn simulate_weights(weights: &[f64], config: &SimulationConfig, arena: &Arena) -> Result<Trajectory> {
    let params = decode(weights)?;
    Ok(simulate(&params, config, arena))
}

pub fn simulate_from(
    params: &MlpParams,
    initial: [AgentState; N_AGENTS],
    config: &SimulationConfig,
    arena: &Arena,
) -> Trajectory {
    let mut states = initial;
    let mut positions = Vec::with_capacity(config.n_steps);
    for _ in 0..config.n_steps {
        states = step(params, &states, config, arena);
        positions.push(states.map(|s| s.position));
    }
    Trajectory::new(config.dt, positions)
}

/// One synchronous update of all agents.
pub fn step(
    params: &MlpParams,
    states: &[AgentState; N_AGENTS],
    config: &SimulationConfig,
    arena: &Arena,
) -> [AgentState; N_AGENTS] {
    std::array::from_fn(|i| {
        let input = perceive(i, states, arena, config);
        let action = params.forward(&input);
        apply_action(&states[i], &action, config, arena)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::GENOME_LEN;

    fn at(x: f64, y: f64, heading: f64, v: f64) -> AgentState {
        AgentState {
            position: [x, y],
            heading,
            linear_speed: v,
            angular_speed: 0.0,
        }
    }

    #[test]
    fn wrap_examples() {
        assert_eq!(wrap_angle(0.0).unwrap(), 0.0);
        assert!((wrap_angle(3.0 * PI).unwrap() + PI).abs() < 1e-12);
        assert!((wrap_angle(-PI / 2.0).unwrap() + PI / 2.0).abs() < 1e-15);
        assert!((wrap_angle(PI).unwrap() + PI).abs() < 1e-15);
        assert!(wrap_angle(f64::NAN).is_err());
        assert!(wrap_angle(f64::INFINITY).is_err());
        let r = wrap_angle(-1e-20).unwrap();
        assert!((-PI..PI).contains(&r));
    }

    proptest::proptest! {
        #[test]
        fn wrap_is_congruent_and_in_range(theta in -1e4f64..1e4) {
            let r = wrap_angle(theta).unwrap();
            proptest::prop_assert!((-PI..PI).contains(&r));
            let k = ((theta - r) / (2.0 * PI)).round();
            proptest::prop_assert!((theta - r - k * 2.0 * PI).abs() < 1e-9);
        }
    }

    #[test]
    fn perception_center_wall_distance_is_one() {
        let cfg = SimulationConfig::default();
        let arena = Arena::default();
        let states = [
            at(0.5, 0.5, 0.0, 0.0),
            at(0.2, 0.2, 0.0, 0.0),
            at(0.3, 0.7, 0.0, 0.0),
            at(0.8, 0.3, 0.0, 0.0),
            at(0.9, 0.9, 0.0, 0.0),
        ];
        let p = build_perception(0, &states, &arena, &cfg).unwrap();
        assert_eq!(p[18], 1.0);
        // nearest-wall tie resolves west: bearing pi from heading 0 wraps to -pi
        assert_eq!(p[19], -1.0);
    }

    #[test]
    fn neighbor_straight_ahead_has_zero_bearing() {
        let cfg = SimulationConfig::default();
        let arena = Arena::default();
        let states = [
            at(0.5, 0.5, 0.0, 0.1),
            at(0.6, 0.5, 0.0, 0.1),
            at(0.1, 0.9, 1.0, 0.1),
            at(0.9, 0.1, 2.0, 0.1),
            at(0.1, 0.1, 3.0, 0.1),
        ];
        let p = build_perception(0, &states, &arena, &cfg).unwrap();
        // nearest neighbor occupies slot 0
        assert!((p[2] - 0.1 / arena.diagonal()).abs() < 1e-12);
        assert_eq!(p[6], 0.0);
    }

    #[test]
    fn aligned_group_has_zero_alignment_inputs() {
        let cfg = SimulationConfig::default();
        let arena = Arena::default();
        let states = [
            at(0.5, 0.5, 0.7, 0.2),
            at(0.6, 0.5, 0.7, 0.2),
            at(0.4, 0.3, 0.7, 0.2),
            at(0.2, 0.6, 0.7, 0.2),
            at(0.7, 0.8, 0.7, 0.2),
        ];
        for focal in 0..N_AGENTS {
            let p = build_perception(focal, &states, &arena, &cfg).unwrap();
            assert!(p[10..18].iter().all(|&v| v == 0.0), "{p:?}");
        }
    }

    #[test]
    fn neighbors_sorted_by_distance() {
        let cfg = SimulationConfig::default();
        let arena = Arena::default();
        let states = [
            at(0.5, 0.5, 0.0, 0.0),
            at(0.9, 0.5, 0.0, 0.0),
            at(0.5, 0.6, 0.0, 0.0),
            at(0.2, 0.5, 0.0, 0.0),
            at(0.5, 0.3, 0.0, 0.0),
        ];
        let p = build_perception(0, &states, &arena, &cfg).unwrap();
        assert!(p[2] <= p[3] && p[3] <= p[4] && p[4] <= p[5]);
        // slot 0 is the agent 0.1 above: bearing +pi/2
        assert!((p[6] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn perception_rejects_bad_focal() {
        let states = [AgentState::default(); N_AGENTS];
        let cfg = SimulationConfig::default();
        assert!(build_perception(5, &states, &Arena::default(), &cfg).is_err());
        assert!(build_perception(0, &states[..4], &Arena::default(), &cfg).is_err());
    }

    #[test]
    fn zero_action_stationary() {
        let cfg = SimulationConfig::default();
        let s = at(0.3, 0.4, 1.0, 0.0);
        let next = apply_action(&s, &Action::default(), &cfg, &Arena::default());
        assert_eq!(next.position, s.position);
    }

    #[test]
    fn zero_action_straight_line() {
        let cfg = SimulationConfig::default();
        let v = 0.2;
        let next = apply_action(&at(0.5, 0.5, 0.0, v), &Action::default(), &cfg, &Arena::default());
        assert!((next.position[0] - (0.5 + v * cfg.dt)).abs() < 1e-15);
        assert_eq!(next.position[1], 0.5);
    }

    #[test]
    fn wall_clamps_without_reflecting() {
        let cfg = SimulationConfig::default();
        let arena = Arena::default();
        let s = at(arena.side - 0.001, 0.5, 0.0, cfg.v_max);
        let next = apply_action(&s, &Action::default(), &cfg, &arena);
        assert_eq!(next.position[0], arena.side - arena.margin);
        assert_eq!(next.heading, 0.0);
    }

    #[test]
    fn action_caps() {
        let cfg = SimulationConfig::default();
        let arena = Arena::default();
        let full = Action {
            delta_linear: 1.0,
            delta_angular: 1.0,
        };
        let mut s = at(0.5, 0.5, 0.0, 0.0);
        for _ in 0..100 {
            s = apply_action(&s, &full, &cfg, &arena);
            assert!(s.linear_speed <= cfg.v_max);
            assert!(s.angular_speed <= cfg.w_bound());
        }
        assert_eq!(s.linear_speed, cfg.v_max);
        let back = Action {
            delta_linear: -1.0,
            delta_angular: 0.0,
        };
        for _ in 0..100 {
            s = apply_action(&s, &back, &cfg, &arena);
        }
        assert_eq!(s.linear_speed, 0.0);
    }

    #[test]
    fn init_is_seeded_and_central() {
        let cfg = SimulationConfig::default();
        let arena = Arena::default();
        for seed in 0..50 {
            let a = init_agents(&cfg, &arena, &mut ChaCha8Rng::seed_from_u64(seed));
            let b = init_agents(&cfg, &arena, &mut ChaCha8Rng::seed_from_u64(seed));
            assert_eq!(a, b);
            for s in &a {
                assert!(s.position.iter().all(|c| (0.4..=0.6).contains(c)));
                assert_eq!(s.linear_speed, 0.0);
                assert!((-PI..PI).contains(&s.heading));
            }
        }
    }

    #[test]
    fn zero_genome_is_stationary() {
        let cfg = SimulationConfig {
            n_steps: 300,
            seed: 4,
            ..Default::default()
        };
        let traj = simulate_weights(&[0.0; GENOME_LEN], &cfg, &Arena::default()).unwrap();
        assert_eq!(traj.len(), 300);
        let first = traj.positions()[0];
        assert!(traj.positions().iter().all(|p| *p == first));
    }

    #[test]
    fn simulate_rejects_wrong_topology() {
        let cfg = SimulationConfig {
            n_steps: 10,
            ..Default::default()
        };
        assert!(matches!(
            simulate_weights(&[0.0; 200], &cfg, &Arena::default()),
            Err(Error::Topology {
                expected: 232,
                actual: 200
            })
        ));
    }

    #[test]
    fn full_trial_is_thirty_minutes() {
        let cfg = SimulationConfig::default();
        assert_eq!(cfg.n_steps, 27_000);
        assert!((cfg.n_steps as f64 * cfg.dt - 1800.0).abs() < 1e-9);
    }

    #[test]
    fn config_validation() {
        assert!(SimulationConfig::default().validate().is_ok());
        let bad = SimulationConfig {
            n_agents: 4,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = SimulationConfig {
            n_steps: 1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(Arena { side: 1.0, margin: 0.5 }.validate().is_err());
    }
}
