//! Rank-mu CMA-ES for maximisation, following Hansen's reference
//! formulation with log-rank weights over the best half of the population.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::{Genome, GENOME_LEN};
use crate::error::{Error, Result};

const EIGEN_FLOOR: f64 = 1e-14;

/// Strategy constants derived from the dimension and population size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CmaParams {
    pub lambda: usize,
    pub mu: usize,
    pub weights: Vec<f64>,
    pub mu_eff: f64,
    pub cc: f64,
    pub cs: f64,
    pub c1: f64,
    pub cmu: f64,
    pub damps: f64,
    pub chi_n: f64,
}

impl CmaParams {
    pub fn new(dim: usize, lambda: usize) -> Result<Self> {
        if dim == 0 || lambda < 2 {
            return Err(Error::InvalidArgument(format!(
                "cma-es needs dim >= 1 and lambda >= 2 (dim = {dim}, lambda = {lambda})"
            )));
        }
        let n = dim as f64;
        let mu = lambda / 2;
        let raw: Vec<f64> = (0..mu)
            .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - ((i + 1) as f64).ln())
            .collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let cc = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n);
        let cs = (mu_eff + 2.0) / (n + mu_eff + 5.0);
        let c1 = 2.0 / ((n + 1.3).powi(2) + mu_eff);
        let cmu = (1.0 - c1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0).powi(2) + mu_eff));
        let damps = 1.0 + 2.0 * (((mu_eff - 1.0) / (n + 1.0)).sqrt() - 1.0).max(0.0) + cs;
        let chi_n = n.sqrt() * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));
        Ok(CmaParams {
            lambda,
            mu,
            weights,
            mu_eff,
            cc,
            cs,
            c1,
            cmu,
            damps,
            chi_n,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CmaState {
    pub params: CmaParams,
    pub mean: DVector<f64>,
    pub sigma: f64,
    pub cov: DMatrix<f64>,
    pub p_sigma: DVector<f64>,
    pub p_c: DVector<f64>,
    /// Eigenvectors of `cov` (columns).
    pub basis: DMatrix<f64>,
    /// Square roots of the eigenvalues of `cov`.
    pub scales: DVector<f64>,
    pub generation: u64,
}

impl CmaState {
    pub fn new(mean: Vec<f64>, sigma: f64, lambda: usize) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("sigma must be > 0, got {sigma}")));
        }
        let n = mean.len();
        let params = CmaParams::new(n, lambda)?;
        Ok(CmaState {
            params,
            mean: DVector::from_vec(mean),
            sigma,
            cov: DMatrix::identity(n, n),
            p_sigma: DVector::zeros(n),
            p_c: DVector::zeros(n),
            basis: DMatrix::identity(n, n),
            scales: DVector::from_element(n, 1.0),
            generation: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Draws `lambda` samples from `N(mean, sigma^2 C)`.
    pub fn ask(&self, rng: &mut impl Rng) -> Result<Vec<Vec<f64>>> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) || self.scales.iter().any(|s| !s.is_finite()) {
            return Err(Error::Numerical("sampling distribution is degenerate".into()));
        }
        let n = self.dim();
        let bd = &self.basis * DMatrix::from_diagonal(&self.scales);
        Ok((0..self.params.lambda)
            .map(|_| {
                let z = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
                let x = &self.mean + (&bd * z) * self.sigma;
                x.iter().copied().collect()
            })
            .collect())
    }

    /// Updates the distribution from a population and its fitnesses
    /// (higher is better).
    pub fn tell(&mut self, samples: &[Vec<f64>], fitnesses: &[f64]) -> Result<()> {
        let p = &self.params;
        if samples.len() != p.lambda || fitnesses.len() != p.lambda {
            return Err(Error::InvalidArgument(format!(
                "tell expects {} samples and fitnesses, got {} and {}",
                p.lambda,
                samples.len(),
                fitnesses.len()
            )));
        }
        let n = self.dim();
        if let Some(s) = samples.iter().find(|s| s.len() != n) {
            return Err(Error::InvalidArgument(format!(
                "sample has dimension {}, expected {n}",
                s.len()
            )));
        }
        let key = |f: f64| if f.is_nan() { f64::NEG_INFINITY } else { f };
        let mut order: Vec<usize> = (0..p.lambda).collect();
        order.sort_by(|&a, &b| key(fitnesses[b]).total_cmp(&key(fitnesses[a])));

        let old_mean = self.mean.clone();
        let ys: Vec<DVector<f64>> = order[..p.mu]
            .iter()
            .map(|&i| (DVector::from_column_slice(&samples[i]) - &old_mean) / self.sigma)
            .collect();
        let mut y_w = DVector::zeros(n);
        for (w, y) in p.weights.iter().zip(&ys) {
            y_w.axpy(*w, y, 1.0);
        }
        self.mean = &old_mean + &y_w * self.sigma;

        let inv_scales = self.scales.map(|s| 1.0 / s);
        let c_inv_sqrt_yw = &self.basis * inv_scales.component_mul(&(self.basis.tr_mul(&y_w)));
        self.p_sigma = &self.p_sigma * (1.0 - p.cs) + c_inv_sqrt_yw * (p.cs * (2.0 - p.cs) * p.mu_eff).sqrt();

        let g = (self.generation + 1) as f64;
        let ps_norm = self.p_sigma.norm();
        let h_sigma = ps_norm / (1.0 - (1.0 - p.cs).powf(2.0 * g)).sqrt() / p.chi_n < 1.4 + 2.0 / (n as f64 + 1.0);
        let h = if h_sigma { 1.0 } else { 0.0 };
        self.p_c = &self.p_c * (1.0 - p.cc) + &y_w * (h * (p.cc * (2.0 - p.cc) * p.mu_eff).sqrt());

        let mut y_mat = DMatrix::zeros(n, p.mu);
        for (k, (w, y)) in p.weights.iter().zip(&ys).enumerate() {
            y_mat.set_column(k, &(y * w.sqrt()));
        }
        let rank_mu = &y_mat * y_mat.transpose();
        let rank_one = &self.p_c * self.p_c.transpose();
        let decay = 1.0 - p.c1 - p.cmu + (1.0 - h) * p.c1 * p.cc * (2.0 - p.cc);
        let mut cov = &self.cov * decay + rank_one * p.c1 + rank_mu * p.cmu;
        for i in 0..n {
            for j in (i + 1)..n {
                cov[(j, i)] = cov[(i, j)];
            }
        }
        self.cov = cov;

        self.sigma *= ((p.cs / p.damps) * (ps_norm / p.chi_n - 1.0)).exp();
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Numerical(format!("step size became {}", self.sigma)));
        }
        self.generation += 1;
        self.update_eigensystem()
    }

    fn update_eigensystem(&mut self) -> Result<()> {
        let eig = SymmetricEigen::new(self.cov.clone());
        if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("covariance has non-finite eigenvalues".into()));
        }
        let floored = eig.eigenvalues.iter().any(|&v| v < EIGEN_FLOOR);
        let values = eig.eigenvalues.map(|v| v.max(EIGEN_FLOOR));
        if floored {
            let mut cov = &eig.eigenvectors * DMatrix::from_diagonal(&values) * eig.eigenvectors.transpose();
            let n = self.dim();
            for i in 0..n {
                for j in (i + 1)..n {
                    cov[(j, i)] = cov[(i, j)];
                }
            }
            self.cov = cov;
        }
        self.scales = values.map(f64::sqrt);
        self.basis = eig.eigenvectors;
        Ok(())
    }

    pub fn condition_number(&self) -> f64 {
        let max = self.scales.max();
        let min = self.scales.min();
        (max / min).powi(2)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Numerical(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid cma-es state: {e}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CmaesConfig {
    pub generations: usize,
    pub lambda: usize,
    pub sigma0: f64,
    /// Restart from the initial mean when the distribution collapses.
    pub restarts: bool,
    pub seed: u64,
}

impl Default for CmaesConfig {
    fn default() -> Self {
        CmaesConfig {
            generations: 500,
            lambda: 120,
            sigma0: 0.5,
            restarts: false,
            seed: 0,
        }
    }
}

impl CmaesConfig {
    pub fn budget(&self) -> usize {
        self.generations * self.lambda
    }

    pub fn validate(&self) -> Result<()> {
        if self.generations == 0 || self.lambda < 2 {
            return Err(Error::Config("cmaes needs generations >= 1 and lambda >= 2".into()));
        }
        if !(self.sigma0 > 0.0 && self.sigma0.is_finite()) {
            return Err(Error::Config("cmaes sigma0 must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub evals: u64,
    pub best: f64,
    pub median: f64,
    pub sigma: f64,
    pub best_ever: f64,
}

impl GenerationRecord {
    pub const CSV_HEADER: &'static str = "generation,evals,best,median,sigma";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.generation, self.evals, self.best, self.median, self.sigma
        )
    }
}

#[derive(Clone, Debug)]
pub struct CmaRun {
    pub best: Vec<f64>,
    pub best_fitness: f64,
    pub history: Vec<GenerationRecord>,
    pub evaluations: u64,
    pub restarts: usize,
    pub state: CmaState,
}

impl CmaRun {
    pub fn best_genome(&self) -> Result<Genome> {
        Genome::new(self.best.clone())
    }

    pub fn history_csv(&self) -> String {
        let mut out = String::from(GenerationRecord::CSV_HEADER);
        out.push('\n');
        for r in &self.history {
            out.push_str(&r.csv_row());
            out.push('\n');
        }
        out
    }
}

/// Full resumable state: distribution plus sampler.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CmaCheckpoint {
    pub state: CmaState,
    pub rng: ChaCha8Rng,
}

fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn collapsed(state: &CmaState, sigma0: f64) -> bool {
    state.sigma * state.scales.max() < 1e-12 * sigma0 || state.condition_number() > 1e14
}

/// Runs `config.generations` ask/tell cycles from `initial_mean`,
/// maximising `eval_fn`.
pub fn run_cmaes_with<F>(config: &CmaesConfig, initial_mean: Vec<f64>, eval_fn: F) -> Result<CmaRun>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = CmaState::new(initial_mean.clone(), config.sigma0, config.lambda)?;
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut history = Vec::with_capacity(config.generations);
    let mut evaluations = 0u64;
    let mut restarts = 0;

    for generation in 0..config.generations {
        let population = state.ask(&mut rng)?;
        let results: Vec<Result<f64>> = population.par_iter().map(|x| eval_fn(x)).collect();
        let fitnesses = results
            .into_iter()
            .enumerate()
            .map(|(index, r)| {
                r.map_err(|source| Error::Evaluation {
                    stage: format!("generation {generation}"),
                    index,
                    source: Box::new(source),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        evaluations += fitnesses.len() as u64;

        let (gen_best_idx, gen_best) = fitnesses.iter().copied().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, f)| if f > acc.1 { (i, f) } else { acc },
        );
        if best.as_ref().is_none_or(|(_, b)| gen_best > *b) {
            best = Some((population[gen_best_idx].clone(), gen_best));
        }
        state.tell(&population, &fitnesses)?;
        let best_ever = best.as_ref().map_or(f64::NEG_INFINITY, |b| b.1);
        history.push(GenerationRecord {
            generation,
            evals: evaluations,
            best: gen_best,
            median: median(&fitnesses),
            sigma: state.sigma,
            best_ever,
        });
        log::debug!(
            "cma-es generation {generation}: best {gen_best:.4} best-ever {best_ever:.4} sigma {:.3e}",
            state.sigma
        );
        if config.restarts && collapsed(&state, config.sigma0) {
            restarts += 1;
            state = CmaState::new(initial_mean.clone(), config.sigma0, config.lambda)?;
        }
    }
    let (best, best_fitness) = best.expect("at least one generation");
    Ok(CmaRun {
        best,
        best_fitness,
        history,
        evaluations,
        restarts,
        state,
    })
}

/// CMA-ES over controller genomes, starting from the zero network.
pub fn run_cmaes<F>(config: &CmaesConfig, eval_fn: F) -> Result<CmaRun>
where
    F: Fn(&Genome) -> Result<f64> + Sync,
{
    run_cmaes_with(config, vec![0.0; GENOME_LEN], |x| {
        let g = Genome::new(x.to_vec())?;
        eval_fn(&g)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn neg_sphere(x: &[f64]) -> f64 {
        -x.iter().map(|v| v * v).sum::<f64>()
    }

    #[test]
    fn population_shape() {
        let s = CmaState::new(vec![0.0; GENOME_LEN], 0.5, 120).unwrap();
        let pop = s.ask(&mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(pop.len(), 120);
        assert!(pop.iter().all(|x| x.len() == 232));
        assert_eq!(s.params.mu, 60);
    }

    #[test]
    fn tiny_sigma_samples_hug_mean() {
        let mean = vec![0.3; 10];
        let s = CmaState::new(mean.clone(), 1e-12, 20).unwrap();
        for x in s.ask(&mut ChaCha8Rng::seed_from_u64(1)).unwrap() {
            for (a, b) in x.iter().zip(&mean) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn ask_is_seeded() {
        let s = CmaState::new(vec![0.0; 10], 0.5, 20).unwrap();
        let a = s.ask(&mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = s.ask(&mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn equal_fitness_is_tolerated() {
        let mut s = CmaState::new(vec![0.0; 10], 0.5, 20).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pop = s.ask(&mut rng).unwrap();
        s.tell(&pop, &[1.0; 20]).unwrap();
        assert!(s.sigma.is_finite() && s.sigma > 0.0);
        // mean = weighted recombination of the first mu samples in order
        let expected: Vec<f64> = (0..10)
            .map(|k| s.params.weights.iter().zip(&pop).map(|(w, x)| w * x[k]).sum())
            .collect();
        for (a, b) in s.mean.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn tell_rejects_wrong_lengths() {
        let mut s = CmaState::new(vec![0.0; 4], 0.5, 6).unwrap();
        assert!(matches!(
            s.tell(&vec![vec![0.0; 4]; 5], &[0.0; 5]),
            Err(Error::InvalidArgument(_))
        ));
        assert!(s.tell(&vec![vec![0.0; 4]; 6], &[0.0; 5]).is_err());
    }

    #[test]
    fn covariance_stays_symmetric() {
        let mut s = CmaState::new(vec![1.0; 12], 0.5, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let pop = s.ask(&mut rng).unwrap();
            let f: Vec<f64> = pop.iter().map(|x| neg_sphere(x)).collect();
            s.tell(&pop, &f).unwrap();
            assert_eq!(s.cov, s.cov.transpose());
        }
    }

    #[test]
    fn state_round_trip_preserves_sampling() {
        let mut s = CmaState::new(vec![1.0; 8], 0.5, 12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..5 {
            let pop = s.ask(&mut rng).unwrap();
            let f: Vec<f64> = pop.iter().map(|x| neg_sphere(x)).collect();
            s.tell(&pop, &f).unwrap();
        }
        let restored = CmaState::from_json(&s.to_json().unwrap()).unwrap();
        assert_eq!(restored, s);
        let a = s.ask(&mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = restored.ask(&mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a, b);

        let ckpt = CmaCheckpoint {
            state: s.clone(),
            rng: rng.clone(),
        };
        let text = serde_json::to_string(&ckpt).unwrap();
        let mut back: CmaCheckpoint = serde_json::from_str(&text).unwrap();
        assert_eq!(s.ask(&mut rng).unwrap(), back.state.ask(&mut back.rng).unwrap());
    }

    #[test]
    fn budget_and_monotone_best() {
        let cfg = CmaesConfig {
            generations: 15,
            lambda: 8,
            seed: 2,
            ..Default::default()
        };
        let run = run_cmaes_with(&cfg, vec![2.0; 5], |x| Ok(neg_sphere(x))).unwrap();
        assert_eq!(run.evaluations, 120);
        assert_eq!(run.history.len(), 15);
        assert!(run.history.windows(2).all(|w| w[1].best_ever >= w[0].best_ever));
        assert_eq!(run.best_fitness, run.history.last().unwrap().best_ever);
        assert_eq!(CmaesConfig::default().budget(), 60_000);
    }

    #[test]
    fn restarts_trigger_on_collapse() {
        let cfg = CmaesConfig {
            generations: 400,
            lambda: 10,
            sigma0: 0.5,
            restarts: true,
            seed: 1,
        };
        let run = run_cmaes_with(&cfg, vec![1.0; 3], |x| Ok(neg_sphere(x))).unwrap();
        assert!(run.restarts >= 1);
        assert_eq!(run.evaluations, 4000);
    }
}
