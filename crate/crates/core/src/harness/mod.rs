//! Experiment plumbing: configuration, control data, genome evaluation,
//! orchestration of optimiser trials and file output.

pub mod config;
pub mod control;
pub mod experiment;
pub mod export;

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::controller::{Genome, MlpParams, GENOME_LEN};
use crate::error::{Error, Result};
use crate::metrics::{aggregate_control, feature_scores, BehaviouralSignature, FeatureScores, MetricsConfig};
use crate::qd::{Descriptor, Evaluation};
use crate::sim::{simulate, Arena, SimulationConfig, Trajectory, FPS};

pub use config::{ExperimentConfig, Scale, Unit};

/// Deterministic 64-bit seed from a base seed and a list of tags.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    for t in tags {
        h.update(t.to_le_bytes());
    }
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("sha256 is 32 bytes"))
}

pub fn genome_hash(genome: &Genome) -> u64 {
    let mut h = Sha256::new();
    for w in genome.as_slice() {
        h.update(w.to_bits().to_le_bytes());
    }
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("sha256 is 32 bytes"))
}

/// Loads a trajectory CSV. Pixel coordinates are converted to meters.
pub fn load_trajectories(path: &Path, unit: Unit, arena: &Arena) -> Result<Trajectory> {
    Trajectory::read_csv(path, 1.0 / FPS, unit.scale(), arena.side)
}

/// Loads every `*.csv` in `dir`, sorted by file name.
pub fn load_trajectory_dir(dir: &Path, unit: Unit, arena: &Arena) -> Result<Vec<Trajectory>> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::EmptySample(format!("no trajectory CSVs in {}", dir.display())));
    }
    files.iter().map(|p| load_trajectories(p, unit, arena)).collect()
}

/// One genome per line, 232 comma-separated decimals.
pub fn write_genomes(path: &Path, genomes: &[Genome]) -> Result<()> {
    let mut out = String::new();
    for g in genomes {
        let line: Vec<String> = g.as_slice().iter().map(|w| w.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_genomes(path: &Path) -> Result<Vec<Genome>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut genomes = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let weights = line
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::parse(path, line_no, format!("invalid number {s:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if weights.len() != GENOME_LEN {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected {GENOME_LEN} weights, found {}", weights.len()),
            ));
        }
        genomes.push(Genome::new(weights).map_err(|e| Error::parse(path, line_no, e.to_string()))?);
    }
    Ok(genomes)
}

/// Per-trial signatures averaged into one control signature.
pub fn control_signature(trajectories: &[Trajectory], metrics: &MetricsConfig) -> Result<BehaviouralSignature> {
    let sigs = trajectories
        .iter()
        .map(|t| BehaviouralSignature::compute(t, metrics))
        .collect::<Result<Vec<_>>>()?;
    aggregate_control(&sigs)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenomeEvaluation {
    pub fitness: f64,
    pub scores: FeatureScores,
}

impl GenomeEvaluation {
    pub fn descriptor(&self) -> Descriptor {
        Descriptor::new(self.scores.to_array()).expect("similarities lie in [0, 1]")
    }
}

/// Scores genomes against a fixed control signature.
#[derive(Clone, Debug)]
pub struct Evaluator {
    pub arena: Arena,
    pub simulation: SimulationConfig,
    pub metrics: MetricsConfig,
    pub control: BehaviouralSignature,
    pub master_seed: u64,
}

impl Evaluator {
    pub fn new(config: &ExperimentConfig, control: BehaviouralSignature) -> Self {
        Evaluator {
            arena: config.arena,
            simulation: config.simulation.clone(),
            metrics: config.metrics.clone(),
            control,
            master_seed: config.experiment.master_seed,
        }
    }

    /// Simulation seed of a genome: the same genome always sees the same
    /// initial conditions within one experiment.
    pub fn simulation_seed(&self, genome: &Genome) -> u64 {
        derive_seed(self.master_seed, &[genome_hash(genome)])
    }

    pub fn simulate(&self, genome: &Genome) -> Trajectory {
        let cfg = SimulationConfig {
            seed: self.simulation_seed(genome),
            ..self.simulation.clone()
        };
        simulate(&MlpParams::from_genome(genome), &cfg, &self.arena)
    }

    pub fn signature(&self, genome: &Genome) -> Result<BehaviouralSignature> {
        BehaviouralSignature::compute(&self.simulate(genome), &self.metrics)
    }

    pub fn evaluate(&self, genome: &Genome) -> Result<GenomeEvaluation> {
        let scores = feature_scores(&self.signature(genome)?, &self.control)?;
        Ok(GenomeEvaluation {
            fitness: scores.biomimetism(),
            scores,
        })
    }

    /// Adapter for the QD engine.
    pub fn qd_evaluation(&self, genome: &Genome) -> Result<Evaluation> {
        let e = self.evaluate(genome)?;
        Ok(Evaluation {
            fitness: e.fitness,
            descriptor: e.descriptor(),
        })
    }
}

pub fn evaluate_genome(genome: &Genome, evaluator: &Evaluator) -> Result<(f64, Descriptor)> {
    let e = evaluator.evaluate(genome)?;
    Ok((e.fitness, e.descriptor()))
}

/// Control trajectories produced by simulating `genome` under `n_trials`
/// seeds derived from `seed`.
pub fn genome_control(
    genome: &Genome,
    simulation: &SimulationConfig,
    arena: &Arena,
    n_trials: usize,
    seed: u64,
) -> Vec<Trajectory> {
    let params = MlpParams::from_genome(genome);
    (0..n_trials)
        .map(|i| {
            let cfg = SimulationConfig {
                seed: derive_seed(seed, &[i as u64]),
                ..simulation.clone()
            };
            simulate(&params, &cfg, arena)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_are_stable_and_distinct() {
        assert_eq!(derive_seed(1, &[2, 3]), derive_seed(1, &[2, 3]));
        assert_ne!(derive_seed(1, &[2, 3]), derive_seed(1, &[3, 2]));
        assert_ne!(derive_seed(1, &[]), derive_seed(2, &[]));
    }

    #[test]
    fn genome_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.csv");
        let mut w = vec![0.0; GENOME_LEN];
        w[3] = -1.25e-7;
        w[200] = 0.1 + 0.2;
        let gs = vec![Genome::new(w).unwrap(), Genome::zeros()];
        write_genomes(&path, &gs).unwrap();
        assert_eq!(read_genomes(&path).unwrap(), gs);

        std::fs::write(&path, "1,2,3\n").unwrap();
        match read_genomes(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("{other:?}"),
        }
    }
}
