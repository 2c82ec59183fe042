//! Monte-Carlo guards for the forest and the learned weight function.

use nalgebra::{DMatrix, DVector};
use rpiv::rng::{Domain, Stream};
use rpiv::sim::{generate, Setting, SimSpec, Violation};
use rpiv::{fit_forest, learn_weight, RandomForestRegressor};

fn correlation(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let (ma, mb) = (a.mean(), b.mean());
    let cov: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn learned_weight_tracks_squared_instrument() {
    let aux_spec = SimSpec::new(Setting::JustHom, 181, 1, 2024).with_violation(Violation::ZSquared, 1.0);
    let fresh_spec = SimSpec { n: 400, master_seed: 4202, ..aux_spec.clone() };
    let mut hits = 0;
    for run in 0..100u64 {
        let aux = generate(&aux_spec, run).unwrap().augment().unwrap();
        let w = learn_weight(&aux, &RandomForestRegressor::default(), 0.9, run).unwrap();
        let fresh = generate(&fresh_spec, run).unwrap().augment().unwrap();
        let z_sq = fresh.z.column(0).map(|v| v * v);
        if correlation(&w.evaluate(&fresh.z), &z_sq) > 0.0 {
            hits += 1;
        }
    }
    assert!(hits >= 95, "positive correlation in {hits} of 100 runs");
}

#[test]
fn pure_noise_oob_error_near_variance() {
    let n = 200;
    for seed in 0..100u64 {
        let mut rng = Stream::new(Domain::Simulation, seed, 0, 500);
        let features = DMatrix::from_fn(n, 3, |_, _| rng.normal());
        let targets = DVector::from_fn(n, |_, _| rng.normal());
        let mean = targets.mean();
        let var = targets.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n as f64;
        let model = fit_forest(&features, &targets, seed).unwrap();
        let ratio = model.oob_error / var;
        assert!((0.8..=1.3).contains(&ratio), "seed {seed}: ratio {ratio}");
    }
}
