//! CVT-MAP-Elites.
//!
//! The descriptor space `[0,1]^4` is partitioned into Voronoi cells around
//! centroids obtained by k-means on uniform samples. Each cell keeps a single
//! elite; new candidates are produced by Gaussian mutation of uniformly
//! chosen elites and evaluated in batches.
//!
//! Candidate generation consumes the run RNG serially, evaluation may run on
//! any number of rayon workers, and insertion happens in candidate order, so
//! a run is reproducible from its seeds regardless of the worker count.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::{Genome, GENOME_LEN};
use crate::error::{Error, Result};

pub const DESCRIPTOR_DIM: usize = 4;

pub type Point = [f64; DESCRIPTOR_DIM];

/// Location of a solution in feature space, each component in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Descriptor(Point);

impl Descriptor {
    pub fn new(values: Point) -> Result<Self> {
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument(format!(
                "descriptor components must lie in [0, 1], got {values:?}"
            )));
        }
        Ok(Descriptor(values))
    }

    pub fn values(&self) -> &Point {
        &self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub fitness: f64,
    pub descriptor: Descriptor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QdConfig {
    pub init_evals: usize,
    pub batches: usize,
    pub batch_size: usize,
    pub niches: usize,
    pub cvt_samples: usize,
    pub cvt_seed: u64,
    pub mutation_sigma: f64,
    pub mutation_rate: f64,
    /// Standard deviation of the initial Gaussian genomes.
    pub init_sigma: f64,
    pub seed: u64,
}

impl Default for QdConfig {
    fn default() -> Self {
        QdConfig {
            init_evals: 6000,
            batches: 450,
            batch_size: 120,
            niches: 32,
            cvt_samples: 100_000,
            cvt_seed: 0,
            mutation_sigma: 0.2,
            mutation_rate: 0.1,
            init_sigma: 1.0,
            seed: 0,
        }
    }
}

impl QdConfig {
    pub fn budget(&self) -> usize {
        self.init_evals + self.batches * self.batch_size
    }

    pub fn validate(&self) -> Result<()> {
        if self.init_evals == 0 || self.batch_size == 0 {
            return Err(Error::Config("qd init_evals and batch_size must be >= 1".into()));
        }
        if self.niches == 0 || self.cvt_samples < 10 * self.niches {
            return Err(Error::Config(format!(
                "qd needs niches >= 1 and cvt_samples >= 10 * niches (got {} and {})",
                self.niches, self.cvt_samples
            )));
        }
        if !(self.mutation_sigma >= 0.0) || !(0.0..=1.0).contains(&self.mutation_rate) {
            return Err(Error::Config(
                "qd mutation sigma must be >= 0 and rate in [0, 1]".into(),
            ));
        }
        if !(self.init_sigma >= 0.0) {
            return Err(Error::Config("qd init_sigma must be >= 0".into()));
        }
        Ok(())
    }
}

/// Niche centres in descriptor space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Centroids(Vec<Point>);

impl Centroids {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("need at least one centroid".into()));
        }
        Ok(Centroids(points))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.0
    }
}

fn dist2(a: &Point, b: &Point) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the closest point, lowest index on ties.
fn nearest(p: &Point, centers: &[Point]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centers.iter().enumerate() {
        let d = dist2(p, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Lloyd's k-means with k-means++ seeding.
pub fn kmeans(points: &[Point], k: usize, max_iter: usize, tol: f64, rng: &mut impl Rng) -> Result<Vec<Point>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    if k > points.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds the {} available samples",
            points.len()
        )));
    }

    let mut centers = Vec::with_capacity(k);
    centers.push(points[rng.random_range(0..points.len())]);
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[idx];
        centers.push(c);
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(dist2(p, &c));
        }
    }

    let mut prev_inertia = f64::INFINITY;
    for _ in 0..max_iter {
        let assigned: Vec<(usize, f64)> = points.par_iter().map(|p| nearest(p, &centers)).collect();
        let inertia: f64 = assigned.iter().map(|a| a.1).sum();
        let mut sums = vec![[0.0; DESCRIPTOR_DIM]; k];
        let mut counts = vec![0usize; k];
        for (p, &(c, _)) in points.iter().zip(&assigned) {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(p) {
                *s += v;
            }
        }
        for ((center, sum), &n) in centers.iter_mut().zip(&sums).zip(&counts) {
            // empty clusters keep their previous position
            if n > 0 {
                *center = sum.map(|s| s / n as f64);
            }
        }
        let converged =
            prev_inertia.is_finite() && (prev_inertia - inertia).abs() <= tol * prev_inertia.max(f64::MIN_POSITIVE);
        prev_inertia = inertia;
        if converged {
            break;
        }
    }
    Ok(centers)
}

/// Centroidal Voronoi tessellation of `[0,1]^4` from `n_samples` uniform
/// points.
pub fn build_cvt(k: usize, n_samples: usize, seed: u64) -> Result<Centroids> {
    if k == 0 || k > n_samples {
        return Err(Error::InvalidArgument(format!(
            "cvt needs 1 <= k <= n_samples (k = {k}, n_samples = {n_samples})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<Point> = (0..n_samples)
        .map(|_| std::array::from_fn(|_| rng.random::<f64>()))
        .collect();
    Centroids::new(kmeans(&samples, k, 200, 1e-6, &mut rng)?)
}

pub fn assign_niche(descriptor: &Descriptor, centroids: &Centroids) -> usize {
    nearest(descriptor.values(), centroids.points()).0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Elite {
    pub genome: Genome,
    pub fitness: f64,
    pub descriptor: Descriptor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Archive {
    centroids: Centroids,
    niches: Vec<Option<Elite>>,
    pub evaluations: u64,
    pub insertions: u64,
    pub rejections: u64,
}

impl Archive {
    pub fn new(centroids: Centroids) -> Self {
        let niches = vec![None; centroids.len()];
        Archive {
            centroids,
            niches,
            evaluations: 0,
            insertions: 0,
            rejections: 0,
        }
    }

    pub fn centroids(&self) -> &Centroids {
        &self.centroids
    }

    pub fn niches(&self) -> &[Option<Elite>] {
        &self.niches
    }

    pub fn filled(&self) -> usize {
        self.niches.iter().filter(|n| n.is_some()).count()
    }

    pub fn elites(&self) -> impl Iterator<Item = (usize, &Elite)> {
        self.niches
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.as_ref().map(|e| (i, e)))
    }

    pub fn best(&self) -> Option<(usize, &Elite)> {
        self.elites()
            .fold(None, |best: Option<(usize, &Elite)>, (i, e)| match best {
                Some((_, b)) if b.fitness >= e.fitness => best,
                _ => Some((i, e)),
            })
    }

    /// Sum of elite fitnesses.
    pub fn qd_score(&self) -> f64 {
        self.elites().map(|(_, e)| e.fitness).sum()
    }

    /// Stores the candidate if its niche is empty or it strictly beats the
    /// incumbent.
    pub fn try_insert(&mut self, genome: Genome, fitness: f64, descriptor: Descriptor) -> bool {
        self.evaluations += 1;
        if !fitness.is_finite() {
            self.rejections += 1;
            return false;
        }
        let niche = assign_niche(&descriptor, &self.centroids);
        let slot = &mut self.niches[niche];
        let better = slot.as_ref().is_none_or(|e| fitness > e.fitness);
        if better {
            *slot = Some(Elite {
                genome,
                fitness,
                descriptor,
            });
            self.insertions += 1;
        } else {
            self.rejections += 1;
        }
        better
    }

    pub fn select_parent(&self, rng: &mut impl Rng) -> Result<&Genome> {
        let filled: Vec<&Elite> = self.elites().map(|(_, e)| e).collect();
        if filled.is_empty() {
            return Err(Error::EmptyArchive);
        }
        Ok(&filled[rng.random_range(0..filled.len())].genome)
    }

    /// Every stored elite must map back to the niche holding it.
    pub fn check_consistency(&self) -> Result<()> {
        for (i, e) in self.elites() {
            let j = assign_niche(&e.descriptor, &self.centroids);
            if i != j {
                return Err(Error::Numerical(format!(
                    "elite in niche {i} has a descriptor assigned to niche {j}"
                )));
            }
        }
        Ok(())
    }

    /// CSV with a commented header (config digest, counters, centroid
    /// table) followed by `niche_id, fitness, d0..d3, g0..g231` records.
    pub fn to_csv(&self, config_digest: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# fishqd archive v1");
        let _ = writeln!(out, "# config_digest,{config_digest}");
        let _ = writeln!(
            out,
            "# counters,{},{},{}",
            self.evaluations, self.insertions, self.rejections
        );
        let _ = writeln!(out, "# centroids,{}", self.centroids.len());
        for (i, c) in self.centroids.points().iter().enumerate() {
            let _ = writeln!(out, "# centroid,{i},{},{},{},{}", c[0], c[1], c[2], c[3]);
        }
        out.push_str("niche_id,fitness,d0,d1,d2,d3");
        for g in 0..GENOME_LEN {
            let _ = write!(out, ",g{g}");
        }
        out.push('\n');
        for (i, e) in self.elites() {
            let d = e.descriptor.values();
            let _ = write!(out, "{i},{},{},{},{},{}", e.fitness, d[0], d[1], d[2], d[3]);
            for w in e.genome.as_slice() {
                let _ = write!(out, ",{w}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path, config_digest: &str) -> Result<()> {
        std::fs::write(path, self.to_csv(config_digest)).map_err(|e| Error::io(path, e))
    }

    /// Parses [`Archive::to_csv`] output. Returns the archive and the stored
    /// config digest.
    pub fn read_csv(path: &Path) -> Result<(Archive, String)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let num = |s: &str, line: usize| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::parse(path, line, format!("invalid number {s:?}")))
        };
        let mut digest = String::new();
        let mut counters = (0, 0, 0);
        let mut centroids = Vec::new();
        let mut records = Vec::new();
        let mut seen_header = false;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            if let Some(rest) = raw.strip_prefix("# ") {
                let fields: Vec<&str> = rest.split(',').collect();
                match fields[0] {
                    "config_digest" => digest = fields.get(1).unwrap_or(&"").to_string(),
                    "counters" if fields.len() == 4 => {
                        let p = |s: &str| {
                            s.parse::<u64>()
                                .map_err(|_| Error::parse(path, line, "invalid counter"))
                        };
                        counters = (p(fields[1])?, p(fields[2])?, p(fields[3])?);
                    }
                    "centroid" if fields.len() == 6 => {
                        let mut c = [0.0; DESCRIPTOR_DIM];
                        for (k, v) in c.iter_mut().enumerate() {
                            *v = num(fields[2 + k], line)?;
                        }
                        centroids.push(c);
                    }
                    _ => {}
                }
                continue;
            }
            if !seen_header {
                seen_header = true;
                continue;
            }
            let fields: Vec<&str> = raw.split(',').collect();
            if fields.len() != 6 + GENOME_LEN {
                return Err(Error::parse(
                    path,
                    line,
                    format!("expected {} columns, found {}", 6 + GENOME_LEN, fields.len()),
                ));
            }
            let niche: usize = fields[0]
                .parse()
                .map_err(|_| Error::parse(path, line, "invalid niche id"))?;
            let fitness = num(fields[1], line)?;
            let mut d = [0.0; DESCRIPTOR_DIM];
            for (k, v) in d.iter_mut().enumerate() {
                *v = num(fields[2 + k], line)?;
            }
            let genome = fields[6..].iter().map(|s| num(s, line)).collect::<Result<Vec<f64>>>()?;
            let descriptor = Descriptor::new(d).map_err(|e| Error::parse(path, line, e.to_string()))?;
            let genome = Genome::new(genome).map_err(|e| Error::parse(path, line, e.to_string()))?;
            records.push((
                niche,
                Elite {
                    genome,
                    fitness,
                    descriptor,
                },
            ));
        }
        let centroids = Centroids::new(centroids).map_err(|e| Error::parse(path, 1, e.to_string()))?;
        let mut archive = Archive::new(centroids);
        for (niche, elite) in records {
            if niche >= archive.niches.len() {
                return Err(Error::parse(path, 0, format!("niche id {niche} out of range")));
            }
            archive.niches[niche] = Some(elite);
        }
        (archive.evaluations, archive.insertions, archive.rejections) = counters;
        Ok((archive, digest))
    }
}

/// Perturbs each gene with probability `rate` by `N(0, sigma)`; if no gene
/// was picked, one uniformly chosen gene is perturbed instead.
pub fn mutate(genome: &Genome, rng: &mut impl Rng, sigma: f64, rate: f64) -> Genome {
    let mut child = genome.clone();
    let noise = Normal::new(0.0, sigma).expect("sigma >= 0");
    let mut any = false;
    for w in child.weights_mut() {
        if rng.random::<f64>() < rate {
            *w += noise.sample(rng);
            any = true;
        }
    }
    if !any {
        let len = child.as_slice().len();
        let i = rng.random_range(0..len);
        child.weights_mut()[i] += noise.sample(rng);
    }
    child
}

pub fn random_genome(rng: &mut impl Rng, sigma: f64) -> Genome {
    let w = (0..GENOME_LEN)
        .map(|_| sigma * Distribution::<f64>::sample(&StandardNormal, rng))
        .collect();
    Genome::new(w).expect("finite gaussian weights")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProgressRecord {
    /// 0 for the initial batch.
    pub batch: usize,
    pub evals: u64,
    pub filled: usize,
    pub best_fitness: f64,
    pub qd_score: f64,
}

impl ProgressRecord {
    pub const CSV_HEADER: &'static str = "batch,evals,filled,best_fitness,qd_score";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.batch, self.evals, self.filled, self.best_fitness, self.qd_score
        )
    }
}

#[derive(Clone, Debug)]
pub struct QdRun {
    pub archive: Archive,
    pub progress: Vec<ProgressRecord>,
}

impl QdRun {
    pub fn progress_csv(&self) -> String {
        let mut out = String::from(ProgressRecord::CSV_HEADER);
        out.push('\n');
        for p in &self.progress {
            out.push_str(&p.csv_row());
            out.push('\n');
        }
        out
    }
}

fn evaluate_all<F>(candidates: &[Genome], eval_fn: &F, stage: &str) -> Result<Vec<Evaluation>>
where
    F: Fn(&Genome) -> Result<Evaluation> + Sync,
{
    let results: Vec<Result<Evaluation>> = candidates.par_iter().map(eval_fn).collect();
    results
        .into_iter()
        .enumerate()
        .map(|(index, r)| {
            r.map_err(|source| Error::Evaluation {
                stage: stage.to_string(),
                index,
                source: Box::new(source),
            })
        })
        .collect()
}

fn snapshot(archive: &Archive, batch: usize) -> ProgressRecord {
    ProgressRecord {
        batch,
        evals: archive.evaluations,
        filled: archive.filled(),
        best_fitness: archive.best().map_or(f64::NEG_INFINITY, |(_, e)| e.fitness),
        qd_score: archive.qd_score(),
    }
}

/// Runs CVT-MAP-Elites with freshly built centroids.
pub fn run_qd<F>(config: &QdConfig, eval_fn: F) -> Result<QdRun>
where
    F: Fn(&Genome) -> Result<Evaluation> + Sync,
{
    config.validate()?;
    let centroids = build_cvt(config.niches, config.cvt_samples, config.cvt_seed)?;
    run_qd_with_centroids(config, centroids, eval_fn)
}

pub fn run_qd_with_centroids<F>(config: &QdConfig, centroids: Centroids, eval_fn: F) -> Result<QdRun>
where
    F: Fn(&Genome) -> Result<Evaluation> + Sync,
{
    run_qd_observed(config, centroids, eval_fn, |_, _| {})
}

/// Like [`run_qd_with_centroids`], calling `on_batch(batch, archive)` after
/// the initial batch (0) and after every later batch.
pub fn run_qd_observed<F, O>(config: &QdConfig, centroids: Centroids, eval_fn: F, mut on_batch: O) -> Result<QdRun>
where
    F: Fn(&Genome) -> Result<Evaluation> + Sync,
    O: FnMut(usize, &Archive),
{
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut archive = Archive::new(centroids);
    let mut progress = Vec::with_capacity(config.batches + 1);

    let initial: Vec<Genome> = (0..config.init_evals)
        .map(|_| random_genome(&mut rng, config.init_sigma))
        .collect();
    let evals = evaluate_all(&initial, &eval_fn, "initial batch")?;
    for (g, e) in initial.into_iter().zip(evals) {
        archive.try_insert(g, e.fitness, e.descriptor);
    }
    archive.check_consistency()?;
    progress.push(snapshot(&archive, 0));
    on_batch(0, &archive);

    for batch in 1..=config.batches {
        let mut children = Vec::with_capacity(config.batch_size);
        for _ in 0..config.batch_size {
            let parent = archive.select_parent(&mut rng)?;
            children.push(mutate(parent, &mut rng, config.mutation_sigma, config.mutation_rate));
        }
        let evals = evaluate_all(&children, &eval_fn, &format!("batch {batch}"))?;
        for (g, e) in children.into_iter().zip(evals) {
            archive.try_insert(g, e.fitness, e.descriptor);
        }
        archive.check_consistency()?;
        let record = snapshot(&archive, batch);
        log::debug!(
            "qd batch {batch}: evals {} filled {} best {:.4} qd-score {:.4}",
            record.evals,
            record.filled,
            record.best_fitness,
            record.qd_score
        );
        progress.push(record);
        on_batch(batch, &archive);
    }
    Ok(QdRun { archive, progress })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_corners() -> Centroids {
        Centroids::new(vec![[0.0; 4], [1.0; 4]]).unwrap()
    }

    fn d(v: f64) -> Descriptor {
        Descriptor::new([v; 4]).unwrap()
    }

    #[test]
    fn single_centroid_is_sample_mean() {
        let c = build_cvt(1, 100_000, 7).unwrap();
        for v in c.points()[0] {
            assert!((v - 0.5).abs() < 0.01, "{v}");
        }
    }

    #[test]
    fn planted_clusters_are_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut pts = Vec::new();
        for i in 0..2000 {
            let base = if i % 2 == 0 { 0.0 } else { 1.0 };
            pts.push(std::array::from_fn(|_| {
                (base + rng.random_range(-0.05..0.05f64)).clamp(0.0, 1.0)
            }));
        }
        // oracle: per-cluster means computed directly from the planted labels
        let mean_of = |parity: usize| -> Point {
            let sel: Vec<&Point> = pts
                .iter()
                .enumerate()
                .filter(|(i, _)| i % 2 == parity)
                .map(|(_, p)| p)
                .collect();
            std::array::from_fn(|k| sel.iter().map(|p| p[k]).sum::<f64>() / sel.len() as f64)
        };
        let expected = [mean_of(0), mean_of(1)];
        let centers = kmeans(&pts, 2, 200, 1e-6, &mut rng).unwrap();
        for e in &expected {
            let closest = centers.iter().map(|c| dist2(c, e).sqrt()).fold(f64::INFINITY, f64::min);
            assert!(closest < 0.05);
        }
    }

    #[test]
    fn cvt_is_deterministic_and_distinct() {
        let a = build_cvt(32, 5000, 3).unwrap();
        let b = build_cvt(32, 5000, 3).unwrap();
        assert_eq!(a, b);
        for i in 0..32 {
            for j in (i + 1)..32 {
                assert_ne!(a.points()[i], a.points()[j]);
            }
        }
        assert!(build_cvt(10, 5, 0).is_err());
    }

    #[test]
    fn niche_assignment() {
        let c = two_corners();
        assert_eq!(assign_niche(&d(0.1), &c), 0);
        assert_eq!(assign_niche(&d(1.0), &c), 1);
        assert_eq!(assign_niche(&d(0.5), &c), 0);
    }

    #[test]
    fn insertion_rules() {
        let mut a = Archive::new(two_corners());
        assert!(a.try_insert(Genome::zeros(), 0.5, d(0.1)));
        assert!(!a.try_insert(Genome::zeros(), 0.4, d(0.2)));
        assert!(!a.try_insert(Genome::zeros(), 0.5, d(0.2)));
        assert_eq!(a.niches()[0].as_ref().unwrap().descriptor, d(0.1));
        assert!(a.try_insert(Genome::zeros(), 0.6, d(0.2)));
        assert_eq!((a.evaluations, a.insertions, a.rejections), (4, 2, 2));
    }

    #[test]
    fn parent_selection() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut a = Archive::new(two_corners());
        assert!(matches!(a.select_parent(&mut rng), Err(Error::EmptyArchive)));
        let mut g1 = Genome::zeros();
        g1.weights_mut()[0] = 1.0;
        a.try_insert(g1.clone(), 0.1, d(0.9));
        for _ in 0..10 {
            assert_eq!(a.select_parent(&mut rng).unwrap(), &g1);
        }
        a.try_insert(Genome::zeros(), 0.1, d(0.0));
        let hits = (0..10_000)
            .filter(|_| a.select_parent(&mut rng).unwrap() == &g1)
            .count();
        // binomial(10^4, 1/2): sd = 50
        assert!((hits as i64 - 5000).abs() <= 300, "{hits}");
    }

    #[test]
    fn mutation_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = random_genome(&mut rng, 1.0);
        let m = mutate(&g, &mut rng, 0.2, 0.0);
        let diffs = g.as_slice().iter().zip(m.as_slice()).filter(|(a, b)| a != b).count();
        assert_eq!(diffs, 1);
        assert_eq!(mutate(&g, &mut rng, 0.0, 0.5), g);

        let mut deltas = Vec::new();
        while deltas.len() < 100_000 {
            let m = mutate(&g, &mut rng, 0.2, 1.0);
            deltas.extend(g.as_slice().iter().zip(m.as_slice()).map(|(a, b)| b - a));
        }
        let n = deltas.len() as f64;
        let mean = deltas.iter().sum::<f64>() / n;
        let sd = (deltas.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((sd - 0.2).abs() / 0.2 < 0.02, "{sd}");
    }

    #[test]
    fn archive_csv_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut a = Archive::new(build_cvt(8, 1000, 1).unwrap());
        for _ in 0..50 {
            let desc = Descriptor::new(std::array::from_fn(|_| rng.random())).unwrap();
            a.try_insert(random_genome(&mut rng, 1.0), rng.random(), desc);
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("archive.csv");
        a.write_csv(&path, "abc123").unwrap();
        let (b, digest) = Archive::read_csv(&path).unwrap();
        assert_eq!(digest, "abc123");
        assert_eq!(a, b);
        assert_eq!(b.to_csv("abc123"), std::fs::read_to_string(&path).unwrap());
    }

    #[test]
    fn budget_identity() {
        let cfg = QdConfig::default();
        assert_eq!(cfg.budget(), 60_000);
        assert_eq!(cfg.init_evals + cfg.batches * cfg.batch_size, 500 * 120);
    }
}
