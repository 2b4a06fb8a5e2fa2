use roughmill::averaging::{estimate_average, estimate_fbar, solve_averaged, solve_frozen, Fbar, FrozenSettings};
use roughmill::seed::{SeedTuple, Stream};
use roughmill::slowfast::{
    sample_drivers, sample_slow_driver, smooth_initial, solve_coupled, FastKind, ModelParams, SolverConfig,
};
use roughmill::ScaleVector;

fn ou_params() -> ModelParams {
    ModelParams { n_modes: 3, fast: FastKind::OrnsteinUhlenbeck, ..ModelParams::default() }
}

fn ou_settings(seed: u64) -> FrozenSettings {
    FrozenSettings { horizon: 400.0, replicas: 32, h: 0.0025, master_seed: seed, ..FrozenSettings::default() }
}

#[test]
fn ou_first_and_second_moments() {
    let p = ou_params();
    let (op, model) = (p.operator().unwrap(), p.build(0.0, 0.45).unwrap());
    let x = ScaleVector::zeros(3);
    let settings = ou_settings(5);
    let first = estimate_average(&op, &model, &x, &|y: &ScaleVector| y.clone(), &settings).unwrap();
    for (m, s) in first.mean.as_slice().iter().zip(&first.stderr) {
        assert!(m.abs() < 4.0 * s, "{m} vs se {s}");
    }
    let square = |y: &ScaleVector| ScaleVector::new(y.as_slice().iter().map(|v| v * v).collect());
    let second = estimate_average(&op, &model, &x, &square, &settings).unwrap();
    for n in 0..3 {
        let c = 1.0 / (n + 1) as f64;
        let target = c * c / (2.0 * op.eigenvalues()[n]);
        let got = second.mean.as_slice()[n];
        assert!((got / target - 1.0).abs() < 0.05, "mode {n}: {got} vs {target}");
    }
    assert!(!second.short_horizon);
}

#[test]
fn fbar_estimate_is_seed_invariant() {
    let p = ModelParams { n_modes: 4, ..ModelParams::default() };
    let (op, model) = (p.operator().unwrap(), p.build(0.0, 0.45).unwrap());
    let x = ScaleVector::new(vec![0.5, -0.5, 1.0, 0.0]);
    let base = FrozenSettings { horizon: 100.0, replicas: 16, h: 0.005, ..FrozenSettings::default() };
    let a = estimate_fbar(&op, &model, &x, &FrozenSettings { master_seed: 1, ..base.clone() }).unwrap();
    let b = estimate_fbar(&op, &model, &x, &FrozenSettings { master_seed: 2, ..base }).unwrap();
    for n in 0..4 {
        let pooled = (a.stderr[n].powi(2) + b.stderr[n].powi(2)).sqrt();
        let gap = (a.mean.as_slice()[n] - b.mean.as_slice()[n]).abs();
        assert!(gap <= 3.0 * pooled, "mode {n}: {gap} vs {pooled}");
    }
}

#[test]
fn averaged_equation_without_coefficients_is_semigroup() {
    let p = ModelParams { n_modes: 4, a0: 0.0, b0: 0.0, g0: 0.0, ..ModelParams::default() };
    let (op, model) = (p.operator().unwrap(), p.build(0.0, 0.45).unwrap());
    let cfg = SolverConfig { horizon: 1.0, macro_steps: 16, ..SolverConfig::default() };
    let x0 = ScaleVector::new(vec![1.0, -2.0, 0.5, 0.25]);
    let driver = sample_slow_driver(&model, &cfg, 0).unwrap();
    let path = solve_averaged(&op, &model, &Fbar::Exact, &driver, &x0).unwrap();
    for (t, x) in path.times.iter().zip(&path.states) {
        let expected = op.semigroup_apply(*t, &x0).unwrap();
        assert!(op.norm_gamma(&expected.sub(x), 0.0).unwrap() < 1e-12);
    }
}

#[test]
fn averaged_equals_slow_when_drift_ignores_fast() {
    let p = ModelParams { couple_y: false, ..ModelParams::default() };
    let (op, model) = (p.operator().unwrap(), p.build(0.0, 0.45).unwrap());
    let cfg = SolverConfig::default();
    let (x0, y0) = (smooth_initial(8, 1.0), ScaleVector::new(vec![0.3; 8]));
    for r in 0..3 {
        let drivers = sample_drivers(&model, &cfg, r).unwrap();
        let slow = solve_coupled(&op, &model, &cfg, &drivers, &x0, &y0).unwrap().slow;
        let averaged = solve_averaged(&op, &model, &Fbar::Exact, &drivers.slow, &x0).unwrap();
        let gap = slow.sup_distance(&averaged, &op, 0.0).unwrap();
        assert!(gap < 1e-6, "replica {r}: {gap}");
    }
}

#[test]
fn frozen_second_moment_is_bounded_uniformly_in_time_and_x() {
    let p = ModelParams::default();
    let (op, model) = (p.operator().unwrap(), p.build(0.0, 0.45).unwrap());
    let y0 = ScaleVector::new(vec![2.0; 8]);
    let mut worst: f64 = 0.0;
    for (i, scale) in [0.0, 1.0, 10.0].iter().enumerate() {
        let x = ScaleVector::new(vec![*scale; 8]);
        let paths: Vec<_> = (0..20)
            .map(|r| solve_frozen(&op, &model, &x, &y0, 30.0, 0.01, SeedTuple::new(i as u64, r, Stream::Frozen)).unwrap())
            .collect();
        for k in (0..paths[0].states.len()).step_by(100) {
            let m = paths.iter().map(|p| op.norm_gamma(&p.states[k], 0.0).unwrap().powi(2)).sum::<f64>() / 20.0;
            worst = worst.max(m);
        }
    }
    let start = op.norm_gamma(&y0, 0.0).unwrap().powi(2);
    assert!(worst.is_finite() && worst <= start + 5.0, "{worst}");
}

#[test]
fn ou_fbar_difference_is_exact_under_common_seeds() {
    // with an x-independent fast process F̄₁(x) - F̄₁(x') = a ⊙ (tanh x - tanh x')
    let p = ou_params();
    let (op, model) = (p.operator().unwrap(), p.build(0.0, 0.45).unwrap());
    let settings = FrozenSettings { horizon: 20.0, replicas: 4, h: 0.01, ..FrozenSettings::default() };
    let x = ScaleVector::new(vec![0.2, -0.4, 0.6]);
    let xp = ScaleVector::new(vec![0.25, -0.3, 0.0]);
    let a = estimate_fbar(&op, &model, &x, &settings).unwrap();
    let b = estimate_fbar(&op, &model, &xp, &settings).unwrap();
    for n in 0..3 {
        let coef = 1.0 / ((n + 1) * (n + 1)) as f64;
        let expected = coef * (x.as_slice()[n].tanh() - xp.as_slice()[n].tanh());
        let got = a.mean.as_slice()[n] - b.mean.as_slice()[n];
        assert!((got - expected).abs() < 1e-12, "mode {n}: {got} vs {expected}");
    }
}

#[test]
fn fbar_is_lipschitz_in_x() {
    let p = ModelParams { n_modes: 4, ..ModelParams::default() };
    let (op, model) = (p.operator().unwrap(), p.build(0.0, 0.45).unwrap());
    let settings = FrozenSettings { horizon: 50.0, replicas: 8, h: 0.01, ..FrozenSettings::default() };
    let x = ScaleVector::new(vec![0.5, -0.5, 0.25, 1.0]);
    let dir = ScaleVector::new(vec![1.0, 1.0, -1.0, 0.5]);
    let base = estimate_fbar(&op, &model, &x, &settings).unwrap().mean;
    let ratios: Vec<f64> = [0.1, 0.01, 0.001]
        .iter()
        .map(|s| {
            let mut moved = x.clone();
            moved.axpy(*s, &dir);
            let v = estimate_fbar(&op, &model, &moved, &settings).unwrap().mean;
            op.norm_gamma(&v.sub(&base), 0.0).unwrap() / op.norm_gamma(&dir, 0.0).unwrap() / s
        })
        .collect();
    // bounded by the Lipschitz constant of F₁ plus that of the fast response
    assert!(ratios.iter().all(|r| r.is_finite() && *r < 3.0), "{ratios:?}");
    assert!(ratios[2] > 0.0);
}
