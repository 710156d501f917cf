//! Behavioural signature of a trajectory and its similarity to a control.
//!
//! A signature pools per-step observations into fixed-range histograms
//! (inter-individual distances, linear speeds, polarisation, plus angular
//! speeds and wall distances for reporting) and a presence grid over the
//! arena. Two signatures are compared with the Hellinger distance; the
//! biomimetism score is the geometric mean of the four fitness similarities.

use std::f64::consts::{PI, SQRT_2};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{Trajectory, N_AGENTS};

/// Fraction of clamped samples above which a histogram is considered to be
/// fed data in the wrong units.
pub const RANGE_WARNING_FRACTION: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    pub side: f64,
    pub v_max: f64,
    pub grid: usize,
    pub bins_distance: usize,
    pub bins_speed: usize,
    pub bins_polarization: usize,
    pub bins_angular: usize,
    pub bins_wall: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            side: 1.0,
            v_max: 0.35,
            grid: 25,
            bins_distance: 100,
            bins_speed: 60,
            bins_polarization: 50,
            bins_angular: 60,
            bins_wall: 50,
        }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.side > 0.0 && self.v_max > 0.0) {
            return Err(Error::Config("metrics side and v_max must be > 0".into()));
        }
        let counts = [
            self.grid,
            self.bins_distance,
            self.bins_speed,
            self.bins_polarization,
            self.bins_angular,
            self.bins_wall,
        ];
        if counts.contains(&0) {
            return Err(Error::Config("bin counts must be >= 1".into()));
        }
        Ok(())
    }
}

/// Uniform-bin normalised histogram over `[lo, hi]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    lo: f64,
    hi: f64,
    freqs: Vec<f64>,
    samples: usize,
    clamped: usize,
}

impl Histogram {
    /// Bins `samples`; values outside the range go to the edge bins and are
    /// counted as clamped, up to a rounding slack.
    pub fn from_samples<I>(lo: f64, hi: f64, bins: usize, samples: I) -> Result<Self>
    where
        I: IntoIterator<Item = f64>,
    {
        if !(hi > lo) || bins == 0 {
            return Err(Error::InvalidArgument(format!(
                "histogram needs hi > lo and bins > 0 (lo={lo}, hi={hi}, bins={bins})"
            )));
        }
        let mut counts = vec![0u64; bins];
        let mut n = 0usize;
        let mut clamped = 0usize;
        let width = hi - lo;
        // Saturated quantities can land an ulp past the edge.
        let slack = 1e-9 * width;
        for v in samples {
            n += 1;
            if !(lo - slack..=hi + slack).contains(&v) {
                clamped += 1;
            }
            counts[bin_index(v, lo, width, bins)] += 1;
        }
        if n == 0 {
            return Err(Error::EmptySample("histogram has no samples".into()));
        }
        let freqs = counts.iter().map(|&c| c as f64 / n as f64).collect();
        Ok(Histogram {
            lo,
            hi,
            freqs,
            samples: n,
            clamped,
        })
    }

    /// Builds a histogram from explicit frequencies, which must be
    /// non-negative and sum to 1.
    pub fn from_frequencies(lo: f64, hi: f64, freqs: Vec<f64>) -> Result<Self> {
        if !(hi > lo) || freqs.is_empty() {
            return Err(Error::InvalidArgument("histogram needs hi > lo and bins > 0".into()));
        }
        check_normalized(&freqs)?;
        Ok(Histogram {
            lo,
            hi,
            freqs,
            samples: 0,
            clamped: 0,
        })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn bins(&self) -> usize {
        self.freqs.len()
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.freqs
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn clamped_fraction(&self) -> f64 {
        if self.samples == 0 {
            0.0
        } else {
            self.clamped as f64 / self.samples as f64
        }
    }

    pub fn bin_edges(&self, i: usize) -> (f64, f64) {
        let w = (self.hi - self.lo) / self.bins() as f64;
        (self.lo + w * i as f64, self.lo + w * (i + 1) as f64)
    }

    /// Index of the bin that receives `v`.
    pub fn bin_of(&self, v: f64) -> usize {
        bin_index(v, self.lo, self.hi - self.lo, self.bins())
    }
}

fn bin_index(v: f64, lo: f64, width: f64, bins: usize) -> usize {
    let x = ((v - lo) / width * bins as f64).floor();
    if x.is_nan() || x < 0.0 {
        0
    } else {
        (x as usize).min(bins - 1)
    }
}

fn check_normalized(freqs: &[f64]) -> Result<()> {
    if freqs.iter().any(|&f| !(f >= 0.0) || !f.is_finite()) {
        return Err(Error::InvalidArgument("frequencies must be finite and >= 0".into()));
    }
    let sum: f64 = freqs.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("frequencies sum to {sum}, expected 1")));
    }
    Ok(())
}

/// Normalised `G×G` occupancy of the arena. Row `r` covers y-bin `r`,
/// column `c` covers x-bin `c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PresenceGrid {
    side: f64,
    size: usize,
    cells: Vec<f64>,
    samples: usize,
    clamped: usize,
}

impl PresenceGrid {
    /// Builds a grid from explicit row-major cell frequencies, which must be
    /// non-negative and sum to 1.
    pub fn from_frequencies(side: f64, size: usize, cells: Vec<f64>) -> Result<Self> {
        if !(side > 0.0) || size == 0 || cells.len() != size * size {
            return Err(Error::InvalidArgument(format!(
                "presence grid needs side > 0 and {size}x{size} cells, got {}",
                cells.len()
            )));
        }
        check_normalized(&cells)?;
        Ok(PresenceGrid {
            side,
            size,
            cells,
            samples: 0,
            clamped: 0,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.cells[row * self.size + col]
    }

    pub fn clamped_fraction(&self) -> f64 {
        if self.samples == 0 {
            0.0
        } else {
            self.clamped as f64 / self.samples as f64
        }
    }
}

/// Things that can be compared bin by bin.
pub trait Binned {
    fn frequencies(&self) -> &[f64];
    fn same_structure(&self, other: &Self) -> bool;
    fn describe(&self) -> String;
}

impl Binned for Histogram {
    fn frequencies(&self) -> &[f64] {
        &self.freqs
    }

    fn same_structure(&self, other: &Self) -> bool {
        self.lo == other.lo && self.hi == other.hi && self.bins() == other.bins()
    }

    fn describe(&self) -> String {
        format!("histogram[{}; {}..{}]", self.bins(), self.lo, self.hi)
    }
}

impl Binned for PresenceGrid {
    fn frequencies(&self) -> &[f64] {
        &self.cells
    }

    fn same_structure(&self, other: &Self) -> bool {
        self.size == other.size && self.side == other.side
    }

    fn describe(&self) -> String {
        format!("grid[{}x{}; side {}]", self.size, self.size, self.side)
    }
}

fn check_shape<B: Binned>(x: &B, y: &B) -> Result<()> {
    if x.same_structure(y) {
        Ok(())
    } else {
        Err(Error::Shape(format!("{} vs {}", x.describe(), y.describe())))
    }
}

/// Hellinger distance between two equally shaped normalised distributions.
pub fn hellinger<B: Binned>(x: &B, y: &B) -> Result<f64> {
    check_shape(x, y)?;
    Ok(hellinger_frequencies(x.frequencies(), y.frequencies()))
}

/// Hellinger distance on raw frequency vectors of equal length.
pub fn hellinger_frequencies(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let sum: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let d = a.sqrt() - b.sqrt();
            d * d
        })
        .sum();
    ((sum / 2.0).sqrt()).min(1.0)
}

pub fn similarity<B: Binned>(x: &B, y: &B) -> Result<f64> {
    Ok(1.0 - hellinger(x, y)?)
}

pub fn interindividual_distances(traj: &Trajectory, cfg: &MetricsConfig) -> Result<Histogram> {
    if traj.is_empty() {
        return Err(Error::EmptySample("inter-individual distances need >= 1 step".into()));
    }
    let samples = traj.positions().iter().flat_map(|frame| {
        (0..N_AGENTS).flat_map(move |i| {
            ((i + 1)..N_AGENTS).map(move |j| {
                let dx = frame[i][0] - frame[j][0];
                let dy = frame[i][1] - frame[j][1];
                dx.hypot(dy)
            })
        })
    });
    Histogram::from_samples(0.0, SQRT_2 * cfg.side, cfg.bins_distance, samples)
}

pub fn linear_speeds(traj: &Trajectory, cfg: &MetricsConfig) -> Result<Histogram> {
    if traj.len() < 2 {
        return Err(Error::EmptySample("linear speeds need >= 2 steps".into()));
    }
    let speeds = traj.linear_speeds();
    Histogram::from_samples(0.0, cfg.v_max, cfg.bins_speed, speeds.into_iter().flatten())
}

/// Informative only; never part of the fitness.
pub fn angular_speeds(traj: &Trajectory, cfg: &MetricsConfig) -> Result<Histogram> {
    if traj.len() < 3 {
        return Err(Error::EmptySample("angular speeds need >= 3 steps".into()));
    }
    let bound = PI / traj.dt();
    let w = traj.angular_speeds();
    Histogram::from_samples(-bound, bound, cfg.bins_angular, w.into_iter().flatten())
}

/// Magnitude of the mean unit heading vector of a group.
pub fn polarization(headings: &[f64]) -> f64 {
    let n = headings.len() as f64;
    let (sx, sy) = headings
        .iter()
        .fold((0.0, 0.0), |(sx, sy), h| (sx + h.cos(), sy + h.sin()));
    (sx.hypot(sy) / n).min(1.0)
}

pub fn polarisation_series(traj: &Trajectory, cfg: &MetricsConfig) -> Result<Histogram> {
    if traj.len() < 2 {
        return Err(Error::EmptySample("polarisation needs >= 2 steps".into()));
    }
    let headings = traj.headings();
    let series = headings[1..].iter().map(|h| polarization(h));
    Histogram::from_samples(0.0, 1.0, cfg.bins_polarization, series)
}

pub fn presence_grid(traj: &Trajectory, cfg: &MetricsConfig) -> Result<PresenceGrid> {
    if traj.is_empty() {
        return Err(Error::EmptySample("presence grid needs >= 1 step".into()));
    }
    let g = cfg.grid;
    let mut counts = vec![0u64; g * g];
    let mut clamped = traj.ingest_clamped();
    for frame in traj.positions() {
        for p in frame {
            if !(0.0..=cfg.side).contains(&p[0]) || !(0.0..=cfg.side).contains(&p[1]) {
                clamped += 1;
            }
            let c = bin_index(p[0], 0.0, cfg.side, g);
            let r = bin_index(p[1], 0.0, cfg.side, g);
            counts[r * g + c] += 1;
        }
    }
    let n = (traj.len() * N_AGENTS) as f64;
    Ok(PresenceGrid {
        side: cfg.side,
        size: g,
        cells: counts.iter().map(|&c| c as f64 / n).collect(),
        samples: traj.len() * N_AGENTS,
        clamped: clamped.min(traj.len() * N_AGENTS),
    })
}

/// Informative only; never part of the fitness.
pub fn wall_distances(traj: &Trajectory, cfg: &MetricsConfig) -> Result<Histogram> {
    let side = cfg.side;
    let samples = traj
        .positions()
        .iter()
        .flatten()
        .map(|p| p[0].min(side - p[0]).min(p[1]).min(side - p[1]));
    Histogram::from_samples(0.0, side / 2.0, cfg.bins_wall, samples)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BehaviouralSignature {
    pub distances: Histogram,
    pub speeds: Histogram,
    pub polarization: Histogram,
    pub presence: PresenceGrid,
    pub angular_speeds: Histogram,
    pub wall_distances: Histogram,
}

impl BehaviouralSignature {
    pub fn compute(traj: &Trajectory, cfg: &MetricsConfig) -> Result<Self> {
        let sig = BehaviouralSignature {
            distances: interindividual_distances(traj, cfg)?,
            speeds: linear_speeds(traj, cfg)?,
            polarization: polarisation_series(traj, cfg)?,
            presence: presence_grid(traj, cfg)?,
            angular_speeds: angular_speeds(traj, cfg)?,
            wall_distances: wall_distances(traj, cfg)?,
        };
        for w in sig.range_warnings() {
            log::warn!("{w}");
        }
        Ok(sig)
    }

    /// Components where more than 5% of the samples fell outside the
    /// expected range, typically pixel coordinates fed as meters.
    pub fn range_warnings(&self) -> Vec<String> {
        let parts = [
            ("inter-individual distance", self.distances.clamped_fraction()),
            ("linear speed", self.speeds.clamped_fraction()),
            ("polarisation", self.polarization.clamped_fraction()),
            ("presence", self.presence.clamped_fraction()),
            ("angular speed", self.angular_speeds.clamped_fraction()),
            ("wall distance", self.wall_distances.clamped_fraction()),
        ];
        parts
            .into_iter()
            .filter(|(_, f)| *f > RANGE_WARNING_FRACTION)
            .map(|(name, f)| {
                format!(
                    "{name}: {:.1}% of samples outside histogram range (check units)",
                    f * 100.0
                )
            })
            .collect()
    }
}

/// The four per-feature similarities entering the fitness.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureScores {
    pub distance: f64,
    pub speed: f64,
    pub polarization: f64,
    pub presence: f64,
}

impl FeatureScores {
    /// Geometric mean of the four scores.
    pub fn biomimetism(&self) -> f64 {
        (self.speed * self.distance * self.polarization * self.presence).powf(0.25)
    }

    /// Descriptor ordering: distance, speed, polarisation, presence.
    pub fn to_array(&self) -> [f64; 4] {
        [self.distance, self.speed, self.polarization, self.presence]
    }
}

pub fn feature_scores(sig: &BehaviouralSignature, control: &BehaviouralSignature) -> Result<FeatureScores> {
    Ok(FeatureScores {
        distance: similarity(&sig.distances, &control.distances)?,
        speed: similarity(&sig.speeds, &control.speeds)?,
        polarization: similarity(&sig.polarization, &control.polarization)?,
        presence: similarity(&sig.presence, &control.presence)?,
    })
}

pub fn biomimetism_score(sig: &BehaviouralSignature, control: &BehaviouralSignature) -> Result<f64> {
    Ok(feature_scores(sig, control)?.biomimetism())
}

fn mean_frequencies<'a>(parts: impl Iterator<Item = &'a [f64]>, n: usize) -> Vec<f64> {
    let mut acc: Vec<f64> = Vec::new();
    for f in parts {
        if acc.is_empty() {
            acc = vec![0.0; f.len()];
        }
        for (a, v) in acc.iter_mut().zip(f) {
            *a += v;
        }
    }
    for a in &mut acc {
        *a /= n as f64;
    }
    let total: f64 = acc.iter().sum();
    acc.iter().map(|a| a / total).collect()
}

fn mean_histogram(hs: &[&Histogram]) -> Result<Histogram> {
    let first = hs[0];
    for h in &hs[1..] {
        check_shape(first, *h)?;
    }
    Ok(Histogram {
        lo: first.lo,
        hi: first.hi,
        freqs: mean_frequencies(hs.iter().map(|h| h.freqs.as_slice()), hs.len()),
        samples: hs.iter().map(|h| h.samples).sum(),
        clamped: hs.iter().map(|h| h.clamped).sum(),
    })
}

/// Per-bin mean of per-trial signatures, so every trial weighs the same.
pub fn aggregate_control(signatures: &[BehaviouralSignature]) -> Result<BehaviouralSignature> {
    let first = signatures
        .first()
        .ok_or_else(|| Error::EmptySample("no control signatures to aggregate".into()))?;
    if signatures.len() == 1 {
        return Ok(first.clone());
    }
    let pick = |f: fn(&BehaviouralSignature) -> &Histogram| -> Result<Histogram> {
        mean_histogram(&signatures.iter().map(f).collect::<Vec<_>>())
    };
    for s in &signatures[1..] {
        check_shape(&first.presence, &s.presence)?;
    }
    let presence = PresenceGrid {
        side: first.presence.side,
        size: first.presence.size,
        cells: mean_frequencies(signatures.iter().map(|s| s.presence.cells.as_slice()), signatures.len()),
        samples: signatures.iter().map(|s| s.presence.samples).sum(),
        clamped: signatures.iter().map(|s| s.presence.clamped).sum(),
    };
    Ok(BehaviouralSignature {
        distances: pick(|s| &s.distances)?,
        speeds: pick(|s| &s.speeds)?,
        polarization: pick(|s| &s.polarization)?,
        presence,
        angular_speeds: pick(|s| &s.angular_speeds)?,
        wall_distances: pick(|s| &s.wall_distances)?,
    })
}

#[derive(Serialize)]
struct HistogramManifest<'a> {
    file: &'a str,
    lo: f64,
    hi: f64,
    bins: usize,
    columns: &'a str,
}

#[derive(Serialize)]
struct SignatureManifest<'a> {
    distances: HistogramManifest<'a>,
    speeds: HistogramManifest<'a>,
    polarization: HistogramManifest<'a>,
    angular_speeds: HistogramManifest<'a>,
    wall_distances: HistogramManifest<'a>,
    presence: GridManifest<'a>,
}

#[derive(Serialize)]
struct GridManifest<'a> {
    file: &'a str,
    side: f64,
    size: usize,
    layout: &'a str,
}

pub fn histogram_tsv(h: &Histogram) -> String {
    let mut out = String::new();
    for (i, f) in h.freqs.iter().enumerate() {
        let (l, r) = h.bin_edges(i);
        let _ = writeln!(out, "{l}\t{r}\t{f}");
    }
    out
}

pub fn presence_csv(g: &PresenceGrid) -> String {
    let mut out = String::new();
    for row in g.cells.chunks(g.size) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Writes one TSV per histogram, the presence grid CSV and a manifest of
/// bin parameters into `dir`, each file name prefixed by `prefix`.
pub fn write_signature(sig: &BehaviouralSignature, dir: &Path, prefix: &str) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = |s: &str| format!("{prefix}{s}");
    let hists = [
        ("distances.tsv", &sig.distances),
        ("speeds.tsv", &sig.speeds),
        ("polarization.tsv", &sig.polarization),
        ("angular_speeds.tsv", &sig.angular_speeds),
        ("wall_distances.tsv", &sig.wall_distances),
    ];
    for (file, h) in hists {
        write_file(&dir.join(name(file)), &histogram_tsv(h))?;
    }
    write_file(&dir.join(name("presence.csv")), &presence_csv(&sig.presence))?;

    let files: Vec<String> = hists.iter().map(|(f, _)| name(f)).collect();
    let grid_file = name("presence.csv");
    let cols = "bin_left\tbin_right\tfrequency";
    let entry = |i: usize, h: &Histogram| HistogramManifest {
        file: &files[i],
        lo: h.lo,
        hi: h.hi,
        bins: h.bins(),
        columns: cols,
    };
    let manifest = SignatureManifest {
        distances: entry(0, &sig.distances),
        speeds: entry(1, &sig.speeds),
        polarization: entry(2, &sig.polarization),
        angular_speeds: entry(3, &sig.angular_speeds),
        wall_distances: entry(4, &sig.wall_distances),
        presence: GridManifest {
            file: &grid_file,
            side: sig.presence.side,
            size: sig.presence.size,
            layout: "row = y bin, column = x bin",
        },
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    write_file(&dir.join(name("manifest.toml")), &text)
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}
