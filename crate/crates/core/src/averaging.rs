//! Frozen fast dynamics, the averaged drift `F̄₁`, ergodicity diagnostics,
//! the averaged slow equation and the `ε`-sweep of the averaging error.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hilbert_scale::{ScaleVector, SpectralOperator};
use crate::seed::{SeedTuple, Stream};
use crate::slowfast::{
    fast_kernel, sample_fast_noise, sample_slow_driver, slow_update, solve_coupled, CoupledDrivers, ModelSpec,
    SolverConfig, Trajectory,
};
use crate::stats::{linear_fit, moving_average, MeanVar};
use crate::rough_path::GridRoughPath;

/// Observable of the fast variable used in place of `F₁(x, ·)`.
pub type Observable<'a> = &'a (dyn Fn(&ScaleVector) -> ScaleVector + Sync);

/// Runs the frozen equation for `n_steps` steps of size `h` and calls
/// `visit(k, y_k)` for `k = 0..=n_steps`.
fn frozen_walk<R: Rng>(
    op: &SpectralOperator,
    model: &ModelSpec,
    x: &ScaleVector,
    y: &ScaleVector,
    n_steps: usize,
    h: f64,
    rng: &mut R,
    mut visit: impl FnMut(usize, &ScaleVector),
) -> Result<ScaleVector> {
    let factors = op.step_factors(h)?;
    let sqrt_h = h.sqrt();
    let mut dw = vec![0.0; model.d2];
    let mut y = y.clone();
    visit(0, &y);
    for k in 0..n_steps {
        for w in dw.iter_mut() {
            *w = sqrt_h * rng.sample::<f64, _>(StandardNormal);
        }
        let f2 = (model.f2)(x, &y);
        let g2 = (model.g2)(x, &y);
        fast_kernel(&factors, &f2, &g2, &dw, 1.0, &mut y);
        if !y.is_finite() {
            return Err(Error::Instability { step: k });
        }
        visit(k + 1, &y);
    }
    Ok(y)
}

fn steps_for(t: f64, h: f64) -> Result<usize> {
    if !(h > 0.0) || !(t >= 0.0) {
        return Err(Error::Domain(format!("need h > 0 and t >= 0, got h = {h}, t = {t}")));
    }
    Ok((t / h).round() as usize)
}

/// Exponential Euler–Maruyama path of the frozen equation with `x` fixed,
/// driven by the frozen stream of `seed`.
pub fn solve_frozen(
    op: &SpectralOperator,
    model: &ModelSpec,
    x: &ScaleVector,
    y: &ScaleVector,
    t_frozen: f64,
    h: f64,
    seed: SeedTuple,
) -> Result<Trajectory> {
    let n = steps_for(t_frozen, h)?;
    let mut rng = seed.with_stream(Stream::Frozen).rng();
    let mut out = Trajectory { times: Vec::with_capacity(n + 1), states: Vec::with_capacity(n + 1) };
    frozen_walk(op, model, x, y, n, h, &mut rng, |k, v| {
        out.times.push(k as f64 * h);
        out.states.push(v.clone());
    })?;
    Ok(out)
}

/// Settings of the long-run estimator of `F̄₁`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenSettings {
    /// `None` uses five theoretical mixing times.
    pub burn_in: Option<f64>,
    pub horizon: f64,
    pub replicas: usize,
    pub h: f64,
    pub master_seed: u64,
    /// Initial fast state; `None` starts at zero.
    pub y0: Option<ScaleVector>,
}

impl Default for FrozenSettings {
    fn default() -> Self {
        Self { burn_in: None, horizon: 200.0, replicas: 16, h: 0.01, master_seed: 7, y0: None }
    }
}

/// Time-and-ensemble average with per-mode standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct AverageEstimate {
    pub mean: ScaleVector,
    pub stderr: Vec<f64>,
    pub mixing_time: f64,
    pub burn_in: f64,
    /// Set when the averaging window is short compared with the mixing time.
    pub short_horizon: bool,
}

fn mixing_time(op: &SpectralOperator, model: &ModelSpec) -> f64 {
    let rate = model.mixing_rate(op);
    if rate > 0.0 {
        1.0 / rate
    } else {
        f64::INFINITY
    }
}

/// Estimates `∫ φ(y) μ^x(dy)` by averaging `φ(Y_s^{x,y})` over
/// `s ∈ [burn_in, horizon]` and over independent replicas.
pub fn estimate_average(
    op: &SpectralOperator,
    model: &ModelSpec,
    x: &ScaleVector,
    observable: Observable<'_>,
    settings: &FrozenSettings,
) -> Result<AverageEstimate> {
    let tau = mixing_time(op, model);
    let burn_in = settings.burn_in.unwrap_or(5.0 * tau);
    if !(burn_in >= 0.0 && burn_in < settings.horizon) {
        return Err(Error::Config(format!("need 0 <= burn_in < horizon, got {burn_in} and {}", settings.horizon)));
    }
    if settings.replicas < 2 {
        return Err(Error::Config("estimator needs at least two replicas".into()));
    }
    let n = op.n_modes();
    let total = steps_for(settings.horizon, settings.h)?;
    let first = steps_for(burn_in, settings.h)?;
    let y0 = settings.y0.clone().unwrap_or_else(|| ScaleVector::zeros(n));
    let per_replica: Vec<Vec<f64>> = (0..settings.replicas as u64)
        .into_par_iter()
        .map(|r| -> Result<Vec<f64>> {
            let mut rng = SeedTuple::new(settings.master_seed, r, Stream::Frozen).rng();
            let mut acc = vec![0.0; n];
            let mut count = 0usize;
            frozen_walk(op, model, x, &y0, total, settings.h, &mut rng, |k, y| {
                if k >= first && k < total {
                    let v = observable(y);
                    acc.iter_mut().zip(v.as_slice()).for_each(|(a, b)| *a += b);
                    count += 1;
                }
            })?;
            Ok(acc.into_iter().map(|a| a / count.max(1) as f64).collect())
        })
        .collect::<Result<_>>()?;
    let mut mean = Vec::with_capacity(n);
    let mut stderr = Vec::with_capacity(n);
    for m in 0..n {
        let mv = MeanVar::from_slice(&per_replica.iter().map(|r| r[m]).collect::<Vec<_>>());
        mean.push(mv.mean());
        stderr.push(mv.std_error());
    }
    let window = settings.horizon - burn_in;
    Ok(AverageEstimate {
        mean: ScaleVector::new(mean),
        stderr,
        mixing_time: tau,
        burn_in,
        short_horizon: burn_in < 5.0 * tau || window < 20.0 * tau,
    })
}

/// Estimator of `F̄₁(x)`.
pub fn estimate_fbar(
    op: &SpectralOperator,
    model: &ModelSpec,
    x: &ScaleVector,
    settings: &FrozenSettings,
) -> Result<AverageEstimate> {
    let f1 = model.f1.clone();
    let x_owned = x.clone();
    let obs = move |y: &ScaleVector| f1(&x_owned, y);
    estimate_average(op, model, x, &obs, settings)
}

/// Per-mode table of `F̄₁` for mode-separable models: node `u` stores the
/// estimate at `x = (u, …, u)`, whose mode `n` equals `F̄₁(x)_n` for every
/// `x` with `x_n = u`. Evaluation interpolates linearly and clamps outside
/// the node range.
#[derive(Debug, Clone, PartialEq)]
pub struct FbarTable {
    pub nodes: Vec<f64>,
    /// `values[j][n]` at node `j`, mode `n`.
    pub values: Vec<Vec<f64>>,
    pub max_stderr: f64,
}

impl FbarTable {
    pub fn build(
        op: &SpectralOperator,
        model: &ModelSpec,
        radius: f64,
        n_nodes: usize,
        settings: &FrozenSettings,
    ) -> Result<Self> {
        if !model.structure.mode_separable {
            return Err(Error::Model("F̄₁ tables need a mode-separable model".into()));
        }
        if n_nodes < 2 || !(radius > 0.0) {
            return Err(Error::Config("table needs at least two nodes and a positive radius".into()));
        }
        let n = op.n_modes();
        let nodes: Vec<f64> =
            (0..n_nodes).map(|j| -radius + 2.0 * radius * j as f64 / (n_nodes - 1) as f64).collect();
        // common frozen seed at every node keeps the table smooth in u
        let estimates: Vec<AverageEstimate> = nodes
            .par_iter()
            .map(|&u| estimate_fbar(op, model, &ScaleVector::new(vec![u; n]), settings))
            .collect::<Result<_>>()?;
        let max_stderr = estimates.iter().flat_map(|e| e.stderr.iter().copied()).fold(0.0, f64::max);
        Ok(Self { nodes, values: estimates.into_iter().map(|e| e.mean.into_vec()).collect(), max_stderr })
    }

    pub fn eval(&self, x: &ScaleVector) -> ScaleVector {
        let last = self.nodes.len() - 1;
        let (lo, hi) = (self.nodes[0], self.nodes[last]);
        let step = (hi - lo) / last as f64;
        ScaleVector::new(
            x.as_slice()
                .iter()
                .enumerate()
                .map(|(m, &u)| {
                    let pos = ((u.clamp(lo, hi) - lo) / step).min(last as f64);
                    let j = (pos.floor() as usize).min(last - 1);
                    let w = pos - j as f64;
                    (1.0 - w) * self.values[j][m] + w * self.values[j + 1][m]
                })
                .collect(),
        )
    }
}

/// Source of `F̄₁` for the averaged equation.
#[derive(Clone)]
pub enum Fbar {
    /// `F₁` ignores `y`, so `F̄₁(x) = F₁(x, 0)`.
    Exact,
    Closed(Arc<dyn Fn(&ScaleVector) -> ScaleVector + Send + Sync>),
    Table(FbarTable),
    /// Estimate at every evaluation. Slow, for models without structure.
    OnTheFly(FrozenSettings),
}

impl std::fmt::Debug for Fbar {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Fbar::Exact => f.write_str("Exact"),
            Fbar::Closed(_) => f.write_str("Closed"),
            Fbar::Table(t) => write!(f, "Table({} nodes)", t.nodes.len()),
            Fbar::OnTheFly(s) => write!(f, "OnTheFly({s:?})"),
        }
    }
}

impl Fbar {
    /// Picks the cheapest provider the model structure allows.
    pub fn for_model(
        op: &SpectralOperator,
        model: &ModelSpec,
        radius: f64,
        n_nodes: usize,
        settings: &FrozenSettings,
    ) -> Result<Self> {
        if !model.structure.f1_reads_y {
            Ok(Fbar::Exact)
        } else if model.structure.mode_separable {
            Ok(Fbar::Table(FbarTable::build(op, model, radius, n_nodes, settings)?))
        } else {
            Ok(Fbar::OnTheFly(settings.clone()))
        }
    }

    pub fn eval(&self, op: &SpectralOperator, model: &ModelSpec, x: &ScaleVector) -> Result<ScaleVector> {
        match self {
            Fbar::Exact => Ok((model.f1)(x, &ScaleVector::zeros(x.len()))),
            Fbar::Closed(f) => Ok(f(x)),
            Fbar::Table(t) => Ok(t.eval(x)),
            Fbar::OnTheFly(s) => Ok(estimate_fbar(op, model, x, s)?.mean),
        }
    }
}

/// Rough exponential Milstein path of the averaged equation on the macro
/// grid of `driver`.
pub fn solve_averaged(
    op: &SpectralOperator,
    model: &ModelSpec,
    fbar: &Fbar,
    driver: &GridRoughPath,
    x0: &ScaleVector,
) -> Result<Trajectory> {
    let times = driver.times().to_vec();
    let mut x = x0.clone();
    let mut states = Vec::with_capacity(times.len());
    states.push(x.clone());
    for k in 0..driver.n_steps() {
        let h = times[k + 1] - times[k];
        let drift = fbar.eval(op, model, &x)?.hadamard(op.drift_weight(h)?.as_slice());
        x = slow_update(op, model, &x, &drift, &driver.increment(k, k + 1), driver.step_area(k), h)?;
        if !x.is_finite() {
            return Err(Error::Instability { step: k });
        }
        states.push(x.clone());
    }
    Ok(Trajectory { times, states })
}

/// Coupled estimator output of the ergodicity experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ErgodicityReport {
    pub times: Vec<f64>,
    /// `|Ê F₁(x, Y_t^{x,y}) - F̂̄₁(x)|_{γ-α}` per time.
    pub curve: Vec<f64>,
    pub fitted_rate: f64,
    pub theoretical_rate: f64,
    pub fbar_hat: ScaleVector,
    /// `Φ(s, r)` for `r ≤ s` on the time grid, row `s`, column `r`.
    pub phi: Vec<Vec<f64>>,
    /// Largest `|Φ(s,r)| / √(Φ(s,s) Φ(r,r))`; at most one up to rounding.
    pub max_correlation: f64,
    pub cauchy_schwarz_ok: bool,
    /// `max_{r<s} |Φ(s,r)| e^{κ(s-r)} / Φ(r,r)` with `κ` the theoretical rate.
    pub phi_envelope: f64,
    pub smoothed_nonincreasing: bool,
    /// Set instead of failing when the decay fit is not positive.
    pub failure: Option<String>,
}

/// Measures the decay of `Ê F₁(x, Y_t^{x,y})` towards `F̄₁(x)`.
///
/// Each replica runs the frozen path from `y` together with a stationary
/// copy (burned in for five mixing times on the auxiliary stream) under the
/// same noise; the curve is the norm of the mean paired difference, which
/// estimates `Ê F₁(x, Y_t) - F̄₁(x)` with the stationary noise cancelled.
#[allow(clippy::too_many_arguments)]
pub fn ergodicity_decay(
    op: &SpectralOperator,
    model: &ModelSpec,
    x: &ScaleVector,
    y: &ScaleVector,
    times: &[f64],
    replicas: usize,
    h: f64,
    master_seed: u64,
    gamma_minus_alpha: f64,
) -> Result<ErgodicityReport> {
    if replicas < 100 {
        return Err(Error::Config(format!("ergodicity needs at least 100 replicas, got {replicas}")));
    }
    if times.len() < 3 || times.windows(2).any(|w| w[1] <= w[0]) || times[0] < 0.0 {
        return Err(Error::Config("time grid must be increasing, nonnegative and have three points".into()));
    }
    let idx: Vec<usize> = times.iter().map(|&t| steps_for(t, h)).collect::<Result<_>>()?;
    let n = op.n_modes();
    let tau = mixing_time(op, model);
    let burn = steps_for(5.0 * tau, h)?;
    let last = *idx.last().unwrap();

    // per replica: F₁(x, Y_t) and F₁(x, Z_t) at every grid time
    type Sample = (Vec<ScaleVector>, Vec<ScaleVector>);
    let samples: Vec<Sample> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| -> Result<Sample> {
            let seed = SeedTuple::new(master_seed, r, Stream::Auxiliary);
            let mut rng = seed.rng();
            let z0 = frozen_walk(op, model, x, y, burn, h, &mut rng, |_, _| {})?;
            let mut rng = seed.with_stream(Stream::Frozen).rng();
            let factors = op.step_factors(h)?;
            let sqrt_h = h.sqrt();
            let mut dw = vec![0.0; model.d2];
            let (mut yv, mut zv) = (y.clone(), z0);
            let (mut fy, mut fz) = (Vec::with_capacity(idx.len()), Vec::with_capacity(idx.len()));
            let mut next = 0;
            for k in 0..=last {
                while next < idx.len() && idx[next] == k {
                    fy.push((model.f1)(x, &yv));
                    fz.push((model.f1)(x, &zv));
                    next += 1;
                }
                if k == last {
                    break;
                }
                for w in dw.iter_mut() {
                    *w = sqrt_h * rng.sample::<f64, _>(StandardNormal);
                }
                for v in [&mut yv, &mut zv] {
                    let f2 = (model.f2)(x, v);
                    let g2 = (model.g2)(x, v);
                    fast_kernel(&factors, &f2, &g2, &dw, 1.0, v);
                }
                if !yv.is_finite() || !zv.is_finite() {
                    return Err(Error::Instability { step: k });
                }
            }
            Ok((fy, fz))
        })
        .collect::<Result<_>>()?;

    let nt = times.len();
    let mut fbar = ScaleVector::zeros(n);
    for (_, fz) in &samples {
        for v in fz {
            fbar.axpy(1.0, v);
        }
    }
    let fbar = fbar.scaled(1.0 / (replicas * nt) as f64);

    let mut curve = Vec::with_capacity(nt);
    for t in 0..nt {
        let mut diff = ScaleVector::zeros(n);
        for (fy, fz) in &samples {
            diff.axpy(1.0, &fy[t].sub(&fz[t]));
        }
        curve.push(op.norm_unchecked(diff.scaled(1.0 / replicas as f64).as_slice(), gamma_minus_alpha));
    }

    // Φ(s, r) = Ê⟨F₁(x,Y_s) - F̂̄₁, F₁(x,Y_r) - F̂̄₁⟩ in H_{γ-α}
    let weights: Vec<f64> = op.eigenvalues().iter().map(|l| l.powf(2.0 * gamma_minus_alpha)).collect();
    let centered: Vec<Vec<ScaleVector>> =
        samples.iter().map(|(fy, _)| fy.iter().map(|v| v.sub(&fbar)).collect()).collect();
    let mut phi = vec![Vec::new(); nt];
    for s in 0..nt {
        for r in 0..=s {
            let mut acc = 0.0;
            for c in &centered {
                acc += c[s].as_slice().iter().zip(c[r].as_slice()).zip(&weights).map(|((a, b), w)| a * b * w).sum::<f64>();
            }
            phi[s].push(acc / replicas as f64);
        }
    }
    let theoretical_rate = model.mixing_rate(op);
    let mut max_correlation: f64 = 0.0;
    let mut phi_envelope: f64 = 0.0;
    for s in 0..nt {
        for r in 0..s {
            let denom = (phi[s][s] * phi[r][r]).sqrt();
            if denom > 0.0 {
                max_correlation = max_correlation.max(phi[s][r].abs() / denom);
            }
            if phi[r][r] > 0.0 {
                phi_envelope = phi_envelope
                    .max(phi[s][r].abs() * (theoretical_rate * (times[s] - times[r])).exp() / phi[r][r]);
            }
        }
    }

    let fit: Vec<(f64, f64)> = times
        .iter()
        .zip(&curve)
        .filter(|(t, c)| **t >= 0.5 - 1e-12 && **t <= 6.0 + 1e-12 && **c > 0.0)
        .map(|(t, c)| (*t, c.ln()))
        .collect();
    let (fitted_rate, failure) = if fit.len() < 2 {
        (f64::NAN, Some("fewer than two positive curve points in [0.5, 6]".to_string()))
    } else {
        let (ts, ls): (Vec<f64>, Vec<f64>) = fit.into_iter().unzip();
        let rate = -linear_fit(&ts, &ls).0;
        let failure = (!(rate > 0.0)).then(|| format!("non-positive decay fit: rate = {rate}"));
        (rate, failure)
    };
    let smoothed = moving_average(&curve, 5);
    let smoothed_nonincreasing = smoothed.windows(2).all(|w| w[1] <= w[0]);

    Ok(ErgodicityReport {
        times: times.to_vec(),
        curve,
        fitted_rate,
        theoretical_rate,
        fbar_hat: fbar,
        phi,
        max_correlation,
        cauchy_schwarz_ok: max_correlation <= 1.0 + 1e-9,
        phi_envelope,
        smoothed_nonincreasing,
        failure,
    })
}

/// One row of the averaging sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub epsilon: f64,
    pub delta: f64,
    pub mean_sq_sup_error: f64,
    pub stderr: f64,
    pub replicas: usize,
    pub seed: u64,
}

pub const MIN_SWEEP_REPLICAS: usize = 30;

/// `Ê sup_k |X^ε_{t_k} - X̄_{t_k}|²_γ` for every `ε`, with `X^ε` and `X̄`
/// driven by the same slow rough path in each replica.
#[allow(clippy::too_many_arguments)]
pub fn averaging_error_sweep(
    op: &SpectralOperator,
    model: &ModelSpec,
    config: &SolverConfig,
    fbar: &Fbar,
    epsilons: &[f64],
    replicas: usize,
    x0: &ScaleVector,
    y0: &ScaleVector,
) -> Result<Vec<SweepRow>> {
    if replicas < MIN_SWEEP_REPLICAS {
        return Err(Error::Config(format!(
            "averaging sweep needs at least {MIN_SWEEP_REPLICAS} replicas, got {replicas}"
        )));
    }
    let configs: Vec<SolverConfig> = epsilons.iter().map(|&e| config.with_epsilon(e)).collect();
    for c in &configs {
        c.validate()?;
    }
    let per_replica: Vec<Vec<f64>> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| -> Result<Vec<f64>> {
            let slow = sample_slow_driver(model, config, r)?;
            let averaged = solve_averaged(op, model, fbar, &slow, x0)?;
            configs
                .iter()
                .map(|c| {
                    let drivers = CoupledDrivers { slow: slow.clone(), fast: sample_fast_noise(model, c, r)? };
                    let sol = solve_coupled(op, model, c, &drivers, x0, y0)?;
                    Ok(sol.slow.sup_distance(&averaged, op, c.gamma)?.powi(2))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(configs
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let mv = MeanVar::from_slice(&per_replica.iter().map(|r| r[i]).collect::<Vec<_>>());
            SweepRow {
                epsilon: c.epsilon,
                delta: c.delta_value(),
                mean_sq_sup_error: mv.mean(),
                stderr: mv.std_error(),
                replicas,
                seed: config.master_seed,
            }
        })
        .collect())
}

/// Each entry lies below its predecessor by more than their pooled
/// standard error `√(se_i² + se_{i+1}²)`.
pub fn strictly_decreasing_beyond_se(rows: &[SweepRow]) -> bool {
    rows.windows(2).all(|w| {
        let pooled = (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt();
        w[0].mean_sq_sup_error - w[1].mean_sq_sup_error > pooled
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slowfast::{FastKind, ModelParams};

    fn ou() -> (SpectralOperator, ModelSpec) {
        let p = ModelParams { n_modes: 3, fast: FastKind::OrnsteinUhlenbeck, ..ModelParams::default() };
        (p.operator().unwrap(), p.build(0.0, 0.45).unwrap())
    }

    #[test]
    fn frozen_without_coefficients_is_semigroup() {
        let (op, mut model) = ou();
        model.g2 = Arc::new(|x: &ScaleVector, _| vec![ScaleVector::zeros(x.len())]);
        let y = ScaleVector::new(vec![1.0, 1.0, 1.0]);
        let path = solve_frozen(&op, &model, &y, &y, 1.0, 0.01, SeedTuple::new(1, 0, Stream::Frozen)).unwrap();
        let last = path.states.last().unwrap();
        for (n, v) in last.as_slice().iter().enumerate() {
            let lam = ((n + 1) * (n + 1)) as f64;
            assert!((v - (-lam).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn y_independent_fbar_is_exact() {
        let p = ModelParams { n_modes: 3, couple_y: false, ..ModelParams::default() };
        let (op, model) = (p.operator().unwrap(), p.build(0.0, 0.45).unwrap());
        let x = ScaleVector::new(vec![0.3, -0.2, 0.1]);
        let settings = FrozenSettings { horizon: 20.0, replicas: 4, ..FrozenSettings::default() };
        let est = estimate_fbar(&op, &model, &x, &settings).unwrap();
        let exact = (model.f1)(&x, &x);
        for (a, b) in est.mean.as_slice().iter().zip(exact.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(est.stderr.iter().all(|s| *s < 1e-12));
        assert!(est.short_horizon);
    }

    #[test]
    fn table_interpolates_and_clamps() {
        let t = FbarTable { nodes: vec![-1.0, 0.0, 1.0], values: vec![vec![-2.0], vec![0.0], vec![4.0]], max_stderr: 0.0 };
        assert_eq!(t.eval(&ScaleVector::new(vec![0.5])).as_slice()[0], 2.0);
        assert_eq!(t.eval(&ScaleVector::new(vec![-0.25])).as_slice()[0], -0.5);
        assert_eq!(t.eval(&ScaleVector::new(vec![7.0])).as_slice()[0], 4.0);
        assert_eq!(t.eval(&ScaleVector::new(vec![1.0])).as_slice()[0], 4.0);
    }

    #[test]
    fn sweep_refuses_small_replica_counts() {
        let (op, model) = ou();
        let cfg = SolverConfig::default();
        let x = ScaleVector::zeros(3);
        let err = averaging_error_sweep(&op, &model, &cfg, &Fbar::Exact, &[0.05], 29, &x, &x).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
