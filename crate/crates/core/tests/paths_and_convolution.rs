use roughmill::controlled_path::{ControlledPath, TanhField, VectorField};
use roughmill::drivers::{canonical_smooth_lift, sample_ito_brownian_lift, SmoothPath};
use roughmill::harness::tanh_integrand;
use roughmill::rough_convolution::{compensated_sum, dyadic_partition, rough_convolve, sewing_defect};
use roughmill::rough_path::{distance_alpha, uniform_grid, GridRoughPath, Level};
use roughmill::seed::{SeedTuple, Stream};
use roughmill::stats::{log_log_slope, MeanVar};
use roughmill::{ScaleVector, SpectralOperator};

fn brownian(seed: u64, replica: u64, steps: usize, dim: usize, m: usize) -> GridRoughPath {
    sample_ito_brownian_lift(SeedTuple::new(seed, replica, Stream::Auxiliary), &uniform_grid(1.0, steps), dim, m)
        .unwrap()
        .lift
}

#[test]
fn levy_area_variance_quarters_when_step_halves() {
    // one-step off-diagonal Itô area from M substeps has variance (Δt²/2)(1 - 1/M)
    let m = 16;
    let mut vars = Vec::new();
    for steps in [1usize, 2] {
        let dt = 1.0 / steps as f64;
        let mut acc = MeanVar::default();
        for r in 0..10_000 {
            let p = brownian(5, r, steps, 2, m);
            acc.push(p.step_area(0)[1]);
        }
        let expected = dt * dt / 2.0 * (1.0 - 1.0 / m as f64);
        assert!((acc.variance() / expected - 1.0).abs() < 0.05, "{} vs {expected}", acc.variance());
        assert!(acc.mean().abs() < 4.0 * acc.std_error());
        vars.push(acc.variance());
    }
    assert!((vars[1] / vars[0] - 0.25).abs() < 0.02, "{vars:?}");
}

#[test]
fn brownian_homogeneous_norm_is_finite_and_stable() {
    let norms: Vec<f64> = (0..40).map(|r| brownian(11, r, 128, 2, 8).homogeneous_norm(0.45).unwrap()).collect();
    assert!(norms.iter().all(|n| n.is_finite() && *n > 0.0));
    let mv = MeanVar::from_slice(&norms);
    let fourth = MeanVar::from_slice(&norms.iter().map(|n| n.powi(4)).collect::<Vec<_>>());
    assert!(mv.std_error() < 0.2 * mv.mean());
    assert!(fourth.mean().is_finite());
}

#[test]
fn canonical_lift_of_t_and_t_squared() {
    let f = |t: f64| vec![t, t * t];
    let df = |t: f64| vec![1.0, 2.0 * t];
    let p = canonical_smooth_lift(&SmoothPath { dim: 2, value: &f, derivative: Some(&df) }, &uniform_grid(1.0, 32), 8)
        .unwrap();
    let area = p.chen_extend(0, 32).unwrap();
    assert!((area[1] - 2.0 / 3.0).abs() < 1e-10, "{}", area[1]);
    assert!((area[0] - 0.5).abs() < 1e-12);
}

fn smooth_driven(depth: u32) -> (GridRoughPath, ControlledPath) {
    let k = 1usize << depth;
    let f = |t: f64| vec![(3.0 * t).sin()];
    let df = |t: f64| vec![3.0 * (3.0 * t).cos()];
    let drv = canonical_smooth_lift(&SmoothPath { dim: 1, value: &f, derivative: Some(&df) }, &uniform_grid(1.0, k), 4)
        .unwrap();
    let dir = ScaleVector::new(vec![1.0, 0.5, 0.25]);
    let y: Vec<ScaleVector> = (0..=k).map(|t| dir.scaled(drv.value(t)[0])).collect();
    let base = ControlledPath::new(drv.times().to_vec(), y, vec![vec![dir]; k + 1], 0.0, 0.45).unwrap();
    let cp = base.compose(&TanhField { weights: vec![1.0, 0.5, 1.0 / 3.0], phase: 0.0 }).unwrap();
    (drv, cp)
}

#[test]
fn composed_remainder_is_stable_across_refinement() {
    let op = SpectralOperator::dirichlet_laplacian(3).unwrap();
    let ratios: Vec<f64> = (6..=10)
        .map(|d| {
            let (drv, cp) = smooth_driven(d);
            cp.remainder_holder(&op, &drv, 0.9, 0.0).unwrap()
        })
        .collect();
    let (lo, hi) = ratios.iter().fold((f64::MAX, 0.0f64), |(a, b), r| (a.min(*r), b.max(*r)));
    assert!(hi / lo < 1.5, "{ratios:?}");
}

#[test]
fn tanh_field_derivative_matches_finite_differences() {
    let field = TanhField { weights: vec![1.0, 0.5, 0.25, 0.125], phase: 0.0 };
    let y = ScaleVector::new(vec![0.3, -1.2, 2.0, 0.05]);
    let v = ScaleVector::new(vec![1.0, -0.7, 0.4, 2.0]);
    let exact = field.derivative(&y, &v).unwrap();
    let h = 1e-6;
    let plus = field.eval(&{ let mut p = y.clone(); p.axpy(h, &v); p }).unwrap();
    let minus = field.eval(&{ let mut m = y.clone(); m.axpy(-h, &v); m }).unwrap();
    for ((a, b), e) in plus.as_slice().iter().zip(minus.as_slice()).zip(exact.as_slice()) {
        let fd = (a - b) / (2.0 * h);
        assert!((fd - e).abs() <= 1e-6 * e.abs().max(1e-12), "{fd} vs {e}");
    }
}

#[test]
fn controlled_holder_bound_holds() {
    let op = SpectralOperator::dirichlet_laplacian(4).unwrap();
    let alpha = 0.45;
    for r in 0..5 {
        let drv = brownian(3, r, 64, 2, 4);
        let x_alpha = drv.holder_seminorm(alpha, Level::One).unwrap();
        for cp in tanh_integrand(&drv, 4, alpha).unwrap() {
            for theta in [alpha, 2.0 * alpha] {
                let g = -theta;
                let lhs = cp.value_holder(&op, alpha, g);
                let rhs = cp.derivative_sup_norm(&op, g) * x_alpha + cp.remainder_holder(&op, &drv, alpha, g).unwrap();
                assert!(lhs <= rhs * (1.0 + 1e-12), "{lhs} > {rhs}");
            }
        }
    }
}

#[test]
fn compensated_sums_are_partition_independent_in_the_limit() {
    let op = SpectralOperator::dirichlet_laplacian(4).unwrap();
    let k = 4096;
    let drv = brownian(17, 0, k, 2, 8);
    let integrand = tanh_integrand(&drv, 4, 0.45).unwrap();
    let fine = rough_convolve(&op, &integrand, &drv, k, 12).unwrap();
    // a non-dyadic partition: alternate strides of 1 and 3 grid steps
    let mut part = vec![0usize];
    let mut stride = 1;
    while *part.last().unwrap() < k {
        let next = (*part.last().unwrap() + stride).min(k);
        part.push(next);
        stride = if stride == 1 { 3 } else { 1 };
    }
    let irregular = compensated_sum(&op, &integrand, &drv, &part).unwrap();
    let coarse = compensated_sum(&op, &integrand, &drv, &dyadic_partition(0, k, 6).unwrap()).unwrap();
    let gap_irregular = op.norm_gamma(&irregular.sub(&fine), 0.0).unwrap();
    let gap_coarse = op.norm_gamma(&coarse.sub(&fine), 0.0).unwrap();
    assert!(gap_irregular < 0.01, "{gap_irregular}");
    assert!(gap_irregular < gap_coarse, "{gap_irregular} vs {gap_coarse}");
}

#[test]
fn sewing_defect_scales_with_window() {
    let op = SpectralOperator::dirichlet_laplacian(4).unwrap();
    let k = 1024;
    let windows = [16usize, 32, 64, 128, 256];
    let mut mean_defects = vec![0.0; windows.len()];
    for r in 0..10 {
        let drv = brownian(23, r, k, 2, 8);
        let integrand = tanh_integrand(&drv, 4, 0.45).unwrap();
        for (i, w) in windows.iter().enumerate() {
            let n = k / w;
            let avg: f64 = (0..n)
                .map(|j| sewing_defect(&op, &integrand, &drv, j * w, (j + 1) * w, 0.0).unwrap())
                .sum::<f64>()
                / n as f64;
            mean_defects[i] += avg / 10.0;
        }
    }
    let spans: Vec<f64> = windows.iter().map(|w| *w as f64 / k as f64).collect();
    let slope = log_log_slope(&spans, &mean_defects);
    assert!(slope >= 3.0 * 0.45 - 0.15, "slope {slope}");
}

#[test]
fn smooth_driver_defect_ratio_is_bounded() {
    let op = SpectralOperator::dirichlet_laplacian(3).unwrap();
    let ratios: Vec<f64> = (6..=12)
        .map(|d| {
            let (drv, cp) = smooth_driven(d);
            let span = 1usize << (d - 3);
            sewing_defect(&op, &[cp], &drv, 0, span, 0.0).unwrap() / (0.125f64).powf(3.0 * 0.45)
        })
        .collect();
    let (lo, hi) = ratios.iter().fold((f64::MAX, 0.0f64), |(a, b), r| (a.min(*r), b.max(*r)));
    assert!(hi.is_finite() && hi / lo.max(1e-300) < 2.0, "{ratios:?}");
}

fn scaled(p: &GridRoughPath, c: f64) -> GridRoughPath {
    GridRoughPath::new(
        p.times().to_vec(),
        p.dim(),
        p.values().iter().map(|v| c * v).collect(),
        p.step_areas().iter().map(|a| c * c * a).collect(),
    )
    .unwrap()
}

#[test]
fn rough_convolution_is_locally_lipschitz_in_the_driver() {
    // stability diagnostic: |I(X) - I(X̃)| / ϱ_α(X, X̃) stays bounded as X̃ → X
    let op = SpectralOperator::dirichlet_laplacian(4).unwrap();
    let k = 256;
    let drv = brownian(29, 0, k, 2, 8);
    let base = rough_convolve(&op, &tanh_integrand(&drv, 4, 0.45).unwrap(), &drv, k, 8).unwrap();
    let ratios: Vec<f64> = [1e-2, 1e-3, 1e-4]
        .iter()
        .map(|eta| {
            let other = scaled(&drv, 1.0 + eta);
            let v = rough_convolve(&op, &tanh_integrand(&other, 4, 0.45).unwrap(), &other, k, 8).unwrap();
            op.norm_gamma(&v.sub(&base), 0.0).unwrap() / distance_alpha(&drv, &other, 0.45).unwrap()
        })
        .collect();
    let (lo, hi) = ratios.iter().fold((f64::MAX, 0.0f64), |(a, b), r| (a.min(*r), b.max(*r)));
    assert!(hi / lo < 3.0, "{ratios:?}");
}
