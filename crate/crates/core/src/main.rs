use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fishqd::harness::config::{ExperimentConfig, Scale, Unit};
use fishqd::harness::experiment::{
    build_evaluator, comparison, load_records, prepare_control, run_cmaes_trial, run_dir_name, run_experiment,
    run_qd_trial, write_cmaes_trial, write_qd_trial,
};
use fishqd::harness::export::{export_archive_scatter, export_signature};
use fishqd::harness::{control_signature, load_trajectories, read_genomes};
use fishqd::metrics::BehaviouralSignature;
use fishqd::qd::{build_cvt, Archive};
use fishqd::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "fishqd",
    version,
    about = "Evolve neural controllers for simulated fish groups"
)]
struct Cli {
    /// Experiment configuration (TOML). Defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for evaluations (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output root; results go to a run-stamped directory below it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Scale::Full)]
    scale: Scale,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write control trajectories (rule-based or from a genome) as CSV.
    GenControl,
    /// Compute the behavioural signature of trajectory files.
    Analyze {
        /// Trajectory CSV files; several files are averaged per bin.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = Unit::Meters)]
        unit: Unit,
    },
    /// Simulate a genome and score it against the control.
    Simulate {
        #[arg(long)]
        genome: PathBuf,
        /// Line of the genome file to use.
        #[arg(long, default_value_t = 0)]
        index: usize,
    },
    /// Run one CVT-MAP-Elites trial.
    EvolveQd {
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Run one CMA-ES trial.
    EvolveCmaes {
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Run all trials of both optimisers and compare them, or re-report an
    /// existing run directory.
    Compare {
        #[arg(long)]
        from: Option<PathBuf>,
    },
    /// Export plot data for an archive, a trajectory or a genome.
    ExportPlots {
        #[arg(long)]
        archive: Option<PathBuf>,
        #[arg(long)]
        trajectory: Option<PathBuf>,
        #[arg(long)]
        genome: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Unit::Meters)]
        unit: Unit,
    },
}

fn resolve_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply_scale(cli.scale);
    if let Some(seed) = cli.seed {
        cfg.experiment.master_seed = seed;
    }
    if let Some(w) = cli.workers {
        cfg.experiment.workers = w;
    }
    if let Some(out) = &cli.out {
        cfg.experiment.output_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve_config(&cli)?;
    let out_root = cfg.experiment.output_dir.clone();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.experiment.workers)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let stamped = |prefix: &str| out_root.join(run_dir_name(prefix, &cfg));

    match &cli.command {
        Command::GenControl => {
            let dir = stamped("control");
            ensure_dir(&dir)?;
            let trajs = pool.install(|| prepare_control(&cfg))?;
            for (i, t) in trajs.iter().enumerate() {
                t.write_csv(&dir.join(format!("control_{i:02}.csv")))?;
            }
            println!("wrote {} control trajectories to {}", trajs.len(), dir.display());
        }
        Command::Analyze { inputs, unit } => {
            let trajs = inputs
                .iter()
                .map(|p| load_trajectories(p, *unit, &cfg.arena))
                .collect::<Result<Vec<_>>>()?;
            let sig = control_signature(&trajs, &cfg.metrics)?;
            for w in sig.range_warnings() {
                eprintln!("warning: {w}");
            }
            let dir = stamped("analyze");
            export_signature(&sig, &dir, "")?;
            println!("signature of {} trajectories written to {}", trajs.len(), dir.display());
        }
        Command::Simulate { genome, index } => {
            let genomes = read_genomes(genome)?;
            let g = genomes.get(*index).ok_or_else(|| {
                Error::Config(format!(
                    "genome file has {} genomes, index {index} requested",
                    genomes.len()
                ))
            })?;
            let evaluator = pool.install(|| build_evaluator(&cfg))?;
            let dir = stamped("simulate");
            ensure_dir(&dir)?;
            let traj = evaluator.simulate(g);
            traj.write_csv(&dir.join("trajectory.csv"))?;
            let sig = BehaviouralSignature::compute(&traj, &cfg.metrics)?;
            export_signature(&sig, &dir.join("signature"), "")?;
            let e = evaluator.evaluate(g)?;
            println!(
                "fitness {:.6} (distance {:.4}, speed {:.4}, polarization {:.4}, presence {:.4})",
                e.fitness, e.scores.distance, e.scores.speed, e.scores.polarization, e.scores.presence
            );
            println!("trajectory written to {}", dir.display());
        }
        Command::EvolveQd { trial } => {
            let dir = stamped("qd").join(format!("trial_{trial:02}"));
            pool.install(|| -> Result<()> {
                let evaluator = build_evaluator(&cfg)?;
                let centroids = build_cvt(cfg.qd.niches, cfg.qd.cvt_samples, cfg.qd.cvt_seed)?;
                let (record, run) = run_qd_trial(&cfg.qd, centroids, &evaluator, *trial)?;
                write_qd_trial(&dir, &record, &run, &evaluator, &cfg.digest())?;
                println!(
                    "best fitness {:.6}, {} niches filled, {} evaluations",
                    record.fitness,
                    run.archive.filled(),
                    record.evaluations
                );
                Ok(())
            })?;
            println!("results in {}", dir.display());
        }
        Command::EvolveCmaes { trial } => {
            let dir = stamped("cmaes").join(format!("trial_{trial:02}"));
            pool.install(|| -> Result<()> {
                let evaluator = build_evaluator(&cfg)?;
                let (record, run) = run_cmaes_trial(&cfg.cmaes, &evaluator, *trial)?;
                write_cmaes_trial(&dir, &record, &run, &evaluator)?;
                println!("best fitness {:.6}, {} evaluations", record.fitness, record.evaluations);
                Ok(())
            })?;
            println!("results in {}", dir.display());
        }
        Command::Compare { from } => {
            let report = match from {
                Some(dir) => {
                    let evaluator = pool.install(|| build_evaluator(&cfg))?;
                    let records = pool.install(|| load_records(dir, Some(&evaluator)))?;
                    let report = comparison(&records)?;
                    std::fs::write(dir.join("report.csv"), report.to_csv()).map_err(|e| Error::Io {
                        path: dir.join("report.csv"),
                        source: e,
                    })?;
                    report.to_text()
                }
                None => {
                    let outcome = run_experiment(&cfg, &out_root)?;
                    for f in &outcome.failures {
                        eprintln!("trial failed: {} {}: {}", f.method, f.trial, f.message);
                    }
                    println!("results in {}", outcome.run_dir.display());
                    outcome.report.map(|r| r.to_text()).unwrap_or_default()
                }
            };
            print!("{report}");
        }
        Command::ExportPlots {
            archive,
            trajectory,
            genome,
            unit,
        } => {
            let dir = stamped("plots");
            ensure_dir(&dir)?;
            if let Some(path) = archive {
                let (a, _) = Archive::read_csv(path)?;
                export_archive_scatter(&a, &dir.join("scatter.csv"))?;
            }
            if let Some(path) = trajectory {
                let t = load_trajectories(path, *unit, &cfg.arena)?;
                let sig = BehaviouralSignature::compute(&t, &cfg.metrics)?;
                export_signature(&sig, &dir, "trajectory_")?;
            }
            if let Some(path) = genome {
                let g = read_genomes(path)?
                    .into_iter()
                    .next()
                    .ok_or_else(|| Error::Config("genome file is empty".into()))?;
                let evaluator = pool.install(|| build_evaluator(&cfg))?;
                export_signature(&evaluator.signature(&g)?, &dir, "genome_")?;
                export_signature(&evaluator.control, &dir, "control_")?;
            }
            println!("plot data written to {}", dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
