//! Reference ("control") trajectories.
//!
//! Real tracking data can be loaded from CSV; when none is available a
//! rule-based stand-in is generated: agents blend heading persistence,
//! attraction to the group centroid and wall-tangent following, with
//! Gaussian heading noise and a mean-reverting speed.

use std::f64::consts::PI;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::derive_seed;
use crate::error::{Error, Result};
use crate::sim::{wrap, Arena, Trajectory, N_AGENTS};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControlSource {
    #[default]
    Rule,
    /// Simulate a known genome (read from `genome_file`).
    Genome,
}

/// Parameters of the rule-based reference behaviour.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RuleParams {
    pub mean_speed: f64,
    /// Mean-reversion rate of the speed process, 1/s.
    pub speed_reversion: f64,
    /// Speed noise intensity, m/s per sqrt(s).
    pub speed_noise: f64,
    pub max_speed: f64,
    /// Wall tangent following is active within this distance, m.
    pub wall_range: f64,
    pub wall_weight: f64,
    pub group_weight: f64,
    pub persistence_weight: f64,
    /// Fraction of the heading error corrected per step.
    pub turn_gain: f64,
    /// Standard deviation of the heading noise, rad per step.
    pub heading_noise: f64,
}

impl Default for RuleParams {
    fn default() -> Self {
        RuleParams {
            mean_speed: 0.12,
            speed_reversion: 0.5,
            speed_noise: 0.06,
            max_speed: 0.3,
            wall_range: 0.1,
            wall_weight: 4.0,
            group_weight: 0.2,
            persistence_weight: 1.0,
            turn_gain: 0.25,
            heading_noise: 0.12,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlConfig {
    pub source: ControlSource,
    pub genome_file: Option<PathBuf>,
    pub n_trials: usize,
    pub seed: u64,
    pub rule: RuleParams,
}

impl Default for ControlConfig {
    fn default() -> Self {
        ControlConfig {
            source: ControlSource::Rule,
            genome_file: None,
            n_trials: 10,
            seed: 1000,
            rule: RuleParams::default(),
        }
    }
}

impl ControlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trials == 0 {
            return Err(Error::Config("control.n_trials must be >= 1".into()));
        }
        if self.source == ControlSource::Genome && self.genome_file.is_none() {
            return Err(Error::Config(
                "control.source = \"genome\" needs control.genome_file".into(),
            ));
        }
        let r = &self.rule;
        if !(r.max_speed > 0.0 && r.mean_speed >= 0.0 && r.wall_range >= 0.0) {
            return Err(Error::Config("control rule speeds and ranges must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
struct Fish {
    pos: [f64; 2],
    heading: f64,
    speed: f64,
}

/// Unit tangent of the nearest wall closest to the current heading, plus
/// the distance to that wall.
fn wall_tangent(arena: &Arena, pos: [f64; 2], heading: f64) -> (f64, [f64; 2]) {
    let (dist, point) = arena.nearest_wall(pos);
    let along_x = point[0] == pos[0];
    let t = if along_x { [1.0, 0.0] } else { [0.0, 1.0] };
    let dir = [heading.cos(), heading.sin()];
    if t[0] * dir[0] + t[1] * dir[1] >= 0.0 {
        (dist, t)
    } else {
        (dist, [-t[0], -t[1]])
    }
}

/// One rule-based trial of `n_steps` frames, deterministic per seed.
pub fn rule_trajectory(params: &RuleParams, arena: &Arena, dt: f64, n_steps: usize, seed: u64) -> Trajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lo = arena.margin;
    let hi = arena.side - arena.margin;
    let mut fish: [Fish; N_AGENTS] = std::array::from_fn(|_| Fish {
        pos: [rng.random_range(lo..hi), rng.random_range(lo..hi)],
        heading: rng.random_range(-PI..PI),
        speed: params.mean_speed,
    });
    let mut positions = Vec::with_capacity(n_steps);
    for _ in 0..n_steps {
        let centroid = {
            let s = fish.iter().fold([0.0, 0.0], |a, f| [a[0] + f.pos[0], a[1] + f.pos[1]]);
            [s[0] / N_AGENTS as f64, s[1] / N_AGENTS as f64]
        };
        let prev = fish;
        for (f, me) in fish.iter_mut().zip(prev) {
            let mut desired = [
                params.persistence_weight * me.heading.cos(),
                params.persistence_weight * me.heading.sin(),
            ];
            let to_c = [centroid[0] - me.pos[0], centroid[1] - me.pos[1]];
            let norm = to_c[0].hypot(to_c[1]);
            if norm > 1e-9 {
                desired[0] += params.group_weight * to_c[0] / norm;
                desired[1] += params.group_weight * to_c[1] / norm;
            }
            let (wall_dist, tangent) = wall_tangent(arena, me.pos, me.heading);
            if wall_dist < params.wall_range {
                let w = params.wall_weight * (1.0 - wall_dist / params.wall_range);
                desired[0] += w * tangent[0];
                desired[1] += w * tangent[1];
            }
            let target = desired[1].atan2(desired[0]);
            let noise: f64 = StandardNormal.sample(&mut rng);
            let heading =
                wrap(me.heading + params.turn_gain * wrap(target - me.heading) + params.heading_noise * noise);

            let speed_noise: f64 = StandardNormal.sample(&mut rng);
            let speed = (me.speed
                + params.speed_reversion * (params.mean_speed - me.speed) * dt
                + params.speed_noise * dt.sqrt() * speed_noise)
                .clamp(0.0, params.max_speed);

            let step = speed * dt;
            f.pos = [
                (me.pos[0] + step * heading.cos()).clamp(lo, hi),
                (me.pos[1] + step * heading.sin()).clamp(lo, hi),
            ];
            f.heading = heading;
            f.speed = speed;
        }
        positions.push(fish.map(|f| f.pos));
    }
    Trajectory::new(dt, positions)
}

/// `n_trials` rule-based trials; trial `i` uses a seed derived from
/// `(seed, i)`.
pub fn gen_control(
    params: &RuleParams,
    arena: &Arena,
    dt: f64,
    n_steps: usize,
    n_trials: usize,
    seed: u64,
) -> Vec<Trajectory> {
    (0..n_trials)
        .map(|i| rule_trajectory(params, arena, dt, n_steps, derive_seed(seed, &[i as u64])))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{wall_distances, MetricsConfig};

    #[test]
    fn deterministic_per_seed() {
        let p = RuleParams::default();
        let a = gen_control(&p, &Arena::default(), 1.0 / 15.0, 300, 2, 5);
        let b = gen_control(&p, &Arena::default(), 1.0 / 15.0, 300, 2, 5);
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn trajectories_stay_inside() {
        let arena = Arena::default();
        let t = rule_trajectory(&RuleParams::default(), &arena, 1.0 / 15.0, 3000, 9);
        for frame in t.positions() {
            for p in frame {
                assert!(p.iter().all(|c| (arena.margin..=arena.side - arena.margin).contains(c)));
            }
        }
        let cfg = MetricsConfig::default();
        let w = wall_distances(&t, &cfg).unwrap();
        let below: f64 = (0..w.bins())
            .filter(|&i| w.bin_edges(i).1 <= 0.25 + 1e-12)
            .map(|i| w.frequencies()[i])
            .sum();
        assert!(below > 0.5, "{below}");
    }
}
