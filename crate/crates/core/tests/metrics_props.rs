use std::f64::consts::PI;

use fishqd::harness::config::Unit;
use fishqd::harness::load_trajectories;
use fishqd::metrics::{
    hellinger, hellinger_frequencies, interindividual_distances, polarization, presence_grid, wall_distances,
    BehaviouralSignature, FeatureScores, Histogram, MetricsConfig,
};
use fishqd::sim::{Arena, Trajectory, N_AGENTS};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn normalized(raw: &[f64]) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| v / total).collect()
}

fn simplex(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.001f64..1.0, n).prop_map(|v| normalized(&v))
}

fn random_walk(n: usize, seed: u64) -> Trajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frame: [[f64; 2]; N_AGENTS] =
        std::array::from_fn(|_| [rng.random_range(0.1..0.9), rng.random_range(0.1..0.9)]);
    let mut positions = Vec::with_capacity(n);
    for _ in 0..n {
        for p in &mut frame {
            p[0] = (p[0] + rng.random_range(-0.01..0.01)).clamp(0.005, 0.995);
            p[1] = (p[1] + rng.random_range(-0.01..0.01)).clamp(0.005, 0.995);
        }
        positions.push(frame);
    }
    Trajectory::new(1.0 / 15.0, positions)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn hellinger_is_a_metric((x, y, z) in (2usize..40).prop_flat_map(|n| (simplex(n), simplex(n), simplex(n)))) {
        let hxy = hellinger_frequencies(&x, &y);
        let hyx = hellinger_frequencies(&y, &x);
        prop_assert!((0.0..=1.0).contains(&hxy));
        prop_assert_eq!(hxy, hyx);
        prop_assert!(hellinger_frequencies(&x, &x) == 0.0);
        if x != y {
            prop_assert!(hxy > 0.0);
        }
        let hxz = hellinger_frequencies(&x, &z);
        let hzy = hellinger_frequencies(&z, &y);
        prop_assert!(hxy <= hxz + hzy + 1e-12);
    }

    #[test]
    fn polarization_is_rotation_invariant(h in prop::array::uniform5(-PI..PI), shift in -10.0f64..10.0) {
        let rotated = h.map(|a| a + shift);
        prop_assert!((polarization(&h) - polarization(&rotated)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&polarization(&h)));
    }

    #[test]
    fn biomimetism_is_monotone_and_bounded(
        s in prop::array::uniform4(0.0f64..=1.0),
        which in 0usize..4,
        boost in 0.0f64..1.0,
    ) {
        let scores = FeatureScores { distance: s[0], speed: s[1], polarization: s[2], presence: s[3] };
        let f = scores.biomimetism();
        let lo = s.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = s.iter().cloned().fold(0.0, f64::max);
        prop_assert!(f >= lo - 1e-12 && f <= hi + 1e-12);

        let mut better = s;
        better[which] += (1.0 - better[which]) * boost;
        let improved = FeatureScores { distance: better[0], speed: better[1], polarization: better[2], presence: better[3] };
        prop_assert!(improved.biomimetism() >= f);
    }

    #[test]
    fn histograms_ignore_sample_order(mut v in prop::collection::vec(-0.1f64..1.1, 1..300), seed in any::<u64>()) {
        let a = Histogram::from_samples(0.0, 1.0, 17, v.iter().copied()).unwrap();
        v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let b = Histogram::from_samples(0.0, 1.0, 17, v.iter().copied()).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn pooled_metrics_ignore_frame_order() {
    let cfg = MetricsConfig::default();
    let t = random_walk(500, 1);
    let mut frames = t.positions().to_vec();
    frames.shuffle(&mut ChaCha8Rng::seed_from_u64(2));
    let shuffled = Trajectory::new(t.dt(), frames);
    assert_eq!(
        presence_grid(&t, &cfg).unwrap(),
        presence_grid(&shuffled, &cfg).unwrap()
    );
    assert_eq!(
        interindividual_distances(&t, &cfg).unwrap(),
        interindividual_distances(&shuffled, &cfg).unwrap()
    );
    assert_eq!(
        wall_distances(&t, &cfg).unwrap(),
        wall_distances(&shuffled, &cfg).unwrap()
    );
}

/// Jittered-stratified uniform positions: one point per cell of a
/// 1000 x 1000 lattice over the arena.
#[test]
fn uniform_presence_within_three_sigma() {
    let cfg = MetricsConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let side = 1000;
    let mut points = (0..side * side).map(|k| {
        let (i, j) = ((k % side) as f64, (k / side) as f64);
        [
            (i + rng.random_range(0.0..1.0)) / side as f64,
            (j + rng.random_range(0.0..1.0)) / side as f64,
        ]
    });
    let positions: Vec<[[f64; 2]; N_AGENTS]> = (0..side * side / N_AGENTS)
        .map(|_| std::array::from_fn(|_| points.next().unwrap()))
        .collect();
    let grid = presence_grid(&Trajectory::new(1.0 / 15.0, positions), &cfg).unwrap();
    let n = (side * side) as f64;
    let p = 1.0 / (cfg.grid * cfg.grid) as f64;
    let sigma = (p * (1.0 - p) / n).sqrt();
    for c in grid.cells() {
        assert!((c - p).abs() <= 3.0 * sigma, "{c} vs {p} +- {sigma}");
    }
}

/// Independent uniform draws: Pearson chi-square over all cells stays below
/// the 99.9% quantile for 624 degrees of freedom.
#[test]
fn uniform_presence_chi_square() {
    let cfg = MetricsConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let frames = 200_000;
    let positions: Vec<[[f64; 2]; N_AGENTS]> = (0..frames)
        .map(|_| std::array::from_fn(|_| [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]))
        .collect();
    let grid = presence_grid(&Trajectory::new(1.0 / 15.0, positions), &cfg).unwrap();
    let n = (frames * N_AGENTS) as f64;
    let cells = (cfg.grid * cfg.grid) as f64;
    let expected = n / cells;
    let chi2: f64 = grid.cells().iter().map(|c| (c * n - expected).powi(2) / expected).sum();
    let df = cells - 1.0;
    // Wilson-Hilferty approximation of the 0.999 quantile.
    let z = 3.090_232;
    let q = df * (1.0 - 2.0 / (9.0 * df) + z * (2.0 / (9.0 * df)).sqrt()).powi(3);
    assert!(chi2 < q, "chi2 {chi2:.1} >= {q:.1}");
}

#[test]
fn pixel_data_read_as_meters_warns() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("px.csv");
    let mut text = String::from("step,x0,y0,x1,y1,x2,y2,x3,y3,x4,y4\n");
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for step in 0..50 {
        let row: Vec<String> = (0..10)
            .map(|_| format!("{:.1}", rng.random_range(20.0..480.0)))
            .collect();
        text.push_str(&format!("{step},{}", row.join(",")));
        text.push('\n');
    }
    std::fs::write(&path, text).unwrap();
    let cfg = MetricsConfig::default();
    let arena = Arena::default();

    let wrong = load_trajectories(&path, Unit::Meters, &arena).unwrap();
    let warnings = BehaviouralSignature::compute(&wrong, &cfg).unwrap().range_warnings();
    assert!(warnings.iter().any(|w| w.starts_with("presence")), "{warnings:?}");

    let right = load_trajectories(&path, Unit::Pixels, &arena).unwrap();
    let warnings = BehaviouralSignature::compute(&right, &cfg).unwrap().range_warnings();
    assert!(!warnings.iter().any(|w| w.starts_with("presence")), "{warnings:?}");
}

#[test]
fn shape_mismatch_is_an_error() {
    let a = Histogram::from_samples(0.0, 1.0, 10, [0.5]).unwrap();
    let b = Histogram::from_samples(0.0, 1.0, 11, [0.5]).unwrap();
    assert!(hellinger(&a, &b).is_err());
}
