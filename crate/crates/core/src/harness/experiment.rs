use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::control::{gen_control, ControlSource};
use super::export::{export_archive_scatter, export_signature};
use super::{
    control_signature, derive_seed, genome_control, load_trajectory_dir, read_genomes, write_genomes, Evaluator,
};
use crate::cmaes::{run_cmaes, CmaRun, CmaesConfig};
use crate::controller::Genome;
use crate::error::{Error, Result};
use crate::metrics::{write_file, FeatureScores};
use crate::qd::{build_cvt, run_qd_with_centroids, Centroids, QdConfig, QdRun};
use crate::sim::Trajectory;
use crate::stats::{ComparisonReport, TrialSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Qd,
    Cmaes,
}

impl Method {
    pub fn tag(self) -> u64 {
        match self {
            Method::Qd => 0,
            Method::Cmaes => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Qd => "qd",
            Method::Cmaes => "cmaes",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Outcome of one optimiser trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub method: Method,
    pub trial: usize,
    pub seed: u64,
    pub genome: Genome,
    pub fitness: f64,
    pub scores: FeatureScores,
    pub evaluations: u64,
    pub wall_clock_secs: f64,
}

impl TrialRecord {
    /// Equality ignoring wall-clock time.
    pub fn same_result(&self, other: &TrialRecord) -> bool {
        TrialRecord {
            wall_clock_secs: 0.0,
            ..self.clone()
        } == TrialRecord {
            wall_clock_secs: 0.0,
            ..other.clone()
        }
    }

    /// Recomputes the fitness of the stored genome; it must match exactly.
    pub fn verify(&self, evaluator: &Evaluator) -> Result<()> {
        let e = evaluator.evaluate(&self.genome)?;
        if e.fitness != self.fitness {
            return Err(Error::Numerical(format!(
                "{} trial {}: stored fitness {} but recomputed {}",
                self.method, self.trial, self.fitness, e.fitness
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("record serialises")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))
    }
}

pub fn trial_seed(master: u64, method: Method, trial: usize) -> u64 {
    derive_seed(master, &[method.tag(), trial as u64])
}

/// Control trajectories from `control_dir`, a genome, or the rule-based
/// generator, in that order of precedence.
pub fn prepare_control(config: &ExperimentConfig) -> Result<Vec<Trajectory>> {
    if let Some(dir) = &config.experiment.control_dir {
        return load_trajectory_dir(dir, config.experiment.control_unit, &config.arena);
    }
    let c = &config.control;
    match c.source {
        ControlSource::Rule => Ok(gen_control(
            &c.rule,
            &config.arena,
            config.simulation.dt,
            config.simulation.n_steps,
            c.n_trials,
            c.seed,
        )),
        ControlSource::Genome => {
            let path = c
                .genome_file
                .as_ref()
                .ok_or_else(|| Error::Config("control.genome_file is required".into()))?;
            let genome = read_genomes(path)?
                .into_iter()
                .next()
                .ok_or_else(|| Error::parse(path, 1, "genome file is empty"))?;
            Ok(genome_control(
                &genome,
                &config.simulation,
                &config.arena,
                c.n_trials,
                c.seed,
            ))
        }
    }
}

pub fn build_evaluator(config: &ExperimentConfig) -> Result<Evaluator> {
    let control = prepare_control(config)?;
    let signature = control_signature(&control, &config.metrics)?;
    Ok(Evaluator::new(config, signature))
}

pub fn run_qd_trial(
    qd: &QdConfig,
    centroids: Centroids,
    evaluator: &Evaluator,
    trial: usize,
) -> Result<(TrialRecord, QdRun)> {
    let start = Instant::now();
    let cfg = QdConfig {
        seed: trial_seed(evaluator.master_seed, Method::Qd, trial),
        ..qd.clone()
    };
    let run = run_qd_with_centroids(&cfg, centroids, |g| evaluator.qd_evaluation(g))?;
    let (_, best) = run.archive.best().ok_or(Error::EmptyArchive)?;
    let scores = evaluator.evaluate(&best.genome)?.scores;
    let record = TrialRecord {
        method: Method::Qd,
        trial,
        seed: cfg.seed,
        genome: best.genome.clone(),
        fitness: best.fitness,
        scores,
        evaluations: run.archive.evaluations,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    };
    Ok((record, run))
}

pub fn run_cmaes_trial(cmaes: &CmaesConfig, evaluator: &Evaluator, trial: usize) -> Result<(TrialRecord, CmaRun)> {
    let start = Instant::now();
    let cfg = CmaesConfig {
        seed: trial_seed(evaluator.master_seed, Method::Cmaes, trial),
        ..cmaes.clone()
    };
    let run = run_cmaes(&cfg, |g| Ok(evaluator.evaluate(g)?.fitness))?;
    let genome = run.best_genome()?;
    let scores = evaluator.evaluate(&genome)?.scores;
    let record = TrialRecord {
        method: Method::Cmaes,
        trial,
        seed: cfg.seed,
        genome,
        fitness: run.best_fitness,
        scores,
        evaluations: run.evaluations,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    };
    Ok((record, run))
}

#[derive(Clone, Debug)]
pub struct TrialFailure {
    pub method: Method,
    pub trial: usize,
    pub message: String,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub run_dir: PathBuf,
    pub records: Vec<TrialRecord>,
    pub failures: Vec<TrialFailure>,
    pub report: Option<ComparisonReport>,
}

/// Directory name stamped with the master seed and config digest.
pub fn run_dir_name(prefix: &str, config: &ExperimentConfig) -> String {
    format!("{prefix}-{}-{}", config.experiment.master_seed, &config.digest()[..12])
}

fn trial_dir(run_dir: &Path, method: Method, trial: usize) -> PathBuf {
    run_dir.join(method.name()).join(format!("trial_{trial:02}"))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn write_qd_trial(
    dir: &Path,
    record: &TrialRecord,
    run: &QdRun,
    evaluator: &Evaluator,
    digest: &str,
) -> Result<()> {
    create_dir(dir)?;
    write_file(&dir.join("record.json"), &record.to_json())?;
    run.archive.write_csv(&dir.join("archive.csv"), digest)?;
    write_file(&dir.join("progress.csv"), &run.progress_csv())?;
    export_archive_scatter(&run.archive, &dir.join("scatter.csv"))?;
    write_genomes(&dir.join("best_genome.csv"), std::slice::from_ref(&record.genome))?;
    export_signature(&evaluator.signature(&record.genome)?, &dir.join("signature"), "")
}

pub fn write_cmaes_trial(dir: &Path, record: &TrialRecord, run: &CmaRun, evaluator: &Evaluator) -> Result<()> {
    create_dir(dir)?;
    write_file(&dir.join("record.json"), &record.to_json())?;
    write_file(&dir.join("history.csv"), &run.history_csv())?;
    write_file(&dir.join("state.json"), &run.state.to_json()?)?;
    write_genomes(&dir.join("best_genome.csv"), std::slice::from_ref(&record.genome))?;
    export_signature(&evaluator.signature(&record.genome)?, &dir.join("signature"), "")
}

fn scores_csv(records: &[TrialRecord]) -> String {
    let mut out = String::from("method,trial,distance,speed,polarization,presence,biomimetism\n");
    for r in records {
        let s = &r.scores;
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.method, r.trial, s.distance, s.speed, s.polarization, s.presence, r.fitness
        ));
    }
    out
}

pub fn comparison(records: &[TrialRecord]) -> Result<ComparisonReport> {
    let values = |m: Method| -> Vec<f64> { records.iter().filter(|r| r.method == m).map(|r| r.fitness).collect() };
    ComparisonReport::new(
        TrialSet::new(Method::Qd.name(), values(Method::Qd))?,
        TrialSet::new(Method::Cmaes.name(), values(Method::Cmaes))?,
    )
}

/// Runs `trials` seeds of both optimisers against the configured control
/// and writes everything under a run-stamped directory inside `out_root`.
pub fn run_experiment(config: &ExperimentConfig, out_root: &Path) -> Result<ExperimentOutcome> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.experiment.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    pool.install(|| run_experiment_inner(config, out_root))
}

fn run_experiment_inner(config: &ExperimentConfig, out_root: &Path) -> Result<ExperimentOutcome> {
    let run_dir = out_root.join(run_dir_name("compare", config));
    create_dir(&run_dir)?;
    write_file(&run_dir.join("config.toml"), &config.to_toml()?)?;
    let digest = config.digest();

    let evaluator = build_evaluator(config)?;
    export_signature(&evaluator.control, &run_dir.join("control_signature"), "")?;
    let centroids = build_cvt(config.qd.niches, config.qd.cvt_samples, config.qd.cvt_seed)?;

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for method in [Method::Qd, Method::Cmaes] {
        for trial in 0..config.experiment.trials {
            let dir = trial_dir(&run_dir, method, trial);
            let result = match method {
                Method::Qd => run_qd_trial(&config.qd, centroids.clone(), &evaluator, trial)
                    .and_then(|(rec, run)| write_qd_trial(&dir, &rec, &run, &evaluator, &digest).map(|_| rec)),
                Method::Cmaes => run_cmaes_trial(&config.cmaes, &evaluator, trial)
                    .and_then(|(rec, run)| write_cmaes_trial(&dir, &rec, &run, &evaluator).map(|_| rec)),
            };
            match result {
                Ok(rec) => {
                    log::info!("{method} trial {trial}: best fitness {:.4}", rec.fitness);
                    records.push(rec);
                }
                Err(e) => {
                    log::error!("{method} trial {trial} failed: {e}");
                    failures.push(TrialFailure {
                        method,
                        trial,
                        message: e.to_string(),
                    });
                }
            }
        }
    }

    write_file(&run_dir.join("scores.csv"), &scores_csv(&records))?;
    let report = comparison(&records).ok();
    let mut text = String::new();
    match &report {
        Some(r) => {
            write_file(&run_dir.join("report.csv"), &r.to_csv())?;
            text.push_str(&r.to_text());
        }
        None => text.push_str("comparison unavailable: a method has no successful trials\n"),
    }
    for f in &failures {
        text.push_str(&format!("FAILED {} trial {}: {}\n", f.method, f.trial, f.message));
    }
    write_file(&run_dir.join("report.txt"), &text)?;
    Ok(ExperimentOutcome {
        run_dir,
        records,
        failures,
        report,
    })
}

/// Reloads every `record.json` below a run directory, verifying stored
/// fitness against `evaluator`.
pub fn load_records(run_dir: &Path, evaluator: Option<&Evaluator>) -> Result<Vec<TrialRecord>> {
    let mut records = Vec::new();
    for method in [Method::Qd, Method::Cmaes] {
        let dir = run_dir.join(method.name());
        let Ok(entries) = std::fs::read_dir(&dir) else {
            continue;
        };
        let mut paths: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path().join("record.json")))
            .filter(|p| p.exists())
            .collect();
        paths.sort();
        for p in paths {
            let r = TrialRecord::load(&p)?;
            if let Some(ev) = evaluator {
                r.verify(ev)?;
            }
            records.push(r);
        }
    }
    Ok(records)
}
