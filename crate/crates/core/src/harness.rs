//! Configuration, experiment suites, CSV output and driver replay files.
//!
//! Configuration is flat `key = value` text with dotted sections
//! (`model.*`, `solver.*`, `experiment.*`). Lists are comma separated and
//! optional values accept `auto`. Every CSV starts with [`CSV_VERSION_LINE`].

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::averaging::{
    averaging_error_sweep, ergodicity_decay, strictly_decreasing_beyond_se, Fbar, FrozenSettings, SweepRow,
};
use crate::controlled_path::{ControlledPath, TanhField};
use crate::drivers::{build_mixed_lift, canonical_smooth_lift, sample_ito_brownian_lift, SmoothPath};
use crate::error::{Error, Result};
use crate::hilbert_scale::{ScaleVector, SpectralOperator};
use crate::rough_convolution::{compensated_sum, dyadic_partition, rough_convolve};
use crate::rough_path::{uniform_grid, GridRoughPath};
use crate::seed::{SeedTuple, Stream};
use crate::slowfast::{
    default_fast_initial, increment_experiment, smooth_initial, FastKind, ModelParams, ModelSpec, SlowDriverKind,
    SolverConfig,
};

pub const CSV_VERSION_LINE: &str = "# roughmill-csv v1";
/// Prefix of environment variables overriding config keys; `__` stands
/// for a dot, so `ROUGHMILL_SOLVER__EPSILON` sets `solver.epsilon`.
pub const ENV_PREFIX: &str = "ROUGHMILL_";

/// Parameters of the experiment suites.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentParams {
    pub x0_scale: f64,
    pub y0_scale: f64,
    pub lift_grid: usize,
    pub convolve_seeds: usize,
    pub ito_replicas: usize,
    pub increments_replicas: usize,
    pub increments_horizon: f64,
    pub increments_macro_steps: usize,
    pub increments_epsilon: f64,
    pub deltas: Vec<f64>,
    pub ergodicity_replicas: usize,
    pub ergodicity_y: f64,
    pub ergodicity_t_max: f64,
    pub ergodicity_dt: f64,
    pub frozen_h: f64,
    pub averaging_replicas: usize,
    pub epsilons: Vec<f64>,
    pub null_replicas: usize,
    pub fbar_horizon: f64,
    pub fbar_replicas: usize,
    pub fbar_nodes: usize,
    pub fbar_radius: f64,
}

impl Default for ExperimentParams {
    fn default() -> Self {
        Self {
            x0_scale: 1.0,
            y0_scale: 0.5,
            lift_grid: 64,
            convolve_seeds: 20,
            ito_replicas: 100,
            increments_replicas: 200,
            increments_horizon: 1.0,
            increments_macro_steps: 1024,
            increments_epsilon: 0.01,
            deltas: (4..=8).map(|k| 2f64.powi(-k)).collect(),
            ergodicity_replicas: 1000,
            ergodicity_y: 2.0,
            ergodicity_t_max: 6.0,
            ergodicity_dt: 0.1,
            frozen_h: 1.0 / crate::slowfast::DEFAULT_MICRO_RATIO,
            averaging_replicas: 100,
            epsilons: vec![0.05, 0.01, 0.002],
            null_replicas: 30,
            fbar_horizon: 400.0,
            fbar_replicas: 16,
            fbar_nodes: 81,
            fbar_radius: 4.0,
        }
    }
}

impl ExperimentParams {
    /// Overrides every replica count.
    pub fn set_replicas(&mut self, n: usize) {
        self.ito_replicas = n;
        self.increments_replicas = n;
        self.ergodicity_replicas = n;
        self.averaging_replicas = n;
        self.null_replicas = n;
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentConfig {
    pub model: ModelParams,
    pub solver: SolverConfig,
    pub experiment: ExperimentParams,
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse().map_err(|_| Error::Config(format!("{key}: expected a number, got '{v}'")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse().map_err(|_| Error::Config(format!("{key}: expected a nonnegative integer, got '{v}'")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    v.parse().map_err(|_| Error::Config(format!("{key}: expected true or false, got '{v}'")))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|s| parse_f64(key, s.trim())).collect()
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

fn fmt_opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(T::to_string).unwrap_or_else(|| "auto".into())
}

impl ExperimentConfig {
    /// Sets one dotted key from its text value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let (m, s, e) = (&mut self.model, &mut self.solver, &mut self.experiment);
        let v = value.trim();
        match key {
            "model.n_modes" => m.n_modes = parse_usize(key, v)?,
            "model.d1" => m.d1 = parse_usize(key, v)?,
            "model.d2" => m.d2 = parse_usize(key, v)?,
            "model.a0" => m.a0 = parse_f64(key, v)?,
            "model.b0" => m.b0 = parse_f64(key, v)?,
            "model.g0" => m.g0 = parse_f64(key, v)?,
            "model.c0" => m.c0 = parse_f64(key, v)?,
            "model.l_f2" => m.l_f2 = parse_f64(key, v)?,
            "model.l_g2" => m.l_g2 = parse_f64(key, v)?,
            "model.couple_y" => m.couple_y = parse_bool(key, v)?,
            "model.fast" => {
                m.fast = FastKind::parse(v)
                    .ok_or_else(|| Error::Config(format!("{key}: expected nonlinear or ou, got '{v}'")))?
            }
            "solver.alpha" => s.alpha = parse_f64(key, v)?,
            "solver.alpha0" => s.alpha0 = parse_f64(key, v)?,
            "solver.gamma" => s.gamma = parse_f64(key, v)?,
            "solver.sigma" => s.sigma = parse_f64(key, v)?,
            "solver.theta" => s.theta = parse_f64(key, v)?,
            "solver.zeta" => s.zeta = parse_f64(key, v)?,
            "solver.epsilon" => s.epsilon = parse_f64(key, v)?,
            "solver.delta" => s.delta = if v == "auto" { None } else { Some(parse_f64(key, v)?) },
            "solver.horizon" => s.horizon = parse_f64(key, v)?,
            "solver.macro_steps" => s.macro_steps = parse_usize(key, v)?,
            "solver.micro_substeps" => {
                s.micro_substeps = if v == "auto" { None } else { Some(parse_usize(key, v)?) }
            }
            "solver.area_substeps" => s.area_substeps = parse_usize(key, v)?,
            "solver.master_seed" => {
                s.master_seed =
                    v.parse().map_err(|_| Error::Config(format!("{key}: expected a u64, got '{v}'")))?
            }
            "solver.slow_driver" => {
                s.slow_driver = SlowDriverKind::parse(v)
                    .ok_or_else(|| Error::Config(format!("{key}: expected brownian or smooth, got '{v}'")))?
            }
            "experiment.x0_scale" => e.x0_scale = parse_f64(key, v)?,
            "experiment.y0_scale" => e.y0_scale = parse_f64(key, v)?,
            "experiment.lift.grid" => e.lift_grid = parse_usize(key, v)?,
            "experiment.convolve.seeds" => e.convolve_seeds = parse_usize(key, v)?,
            "experiment.convolve.ito_replicas" => e.ito_replicas = parse_usize(key, v)?,
            "experiment.increments.replicas" => e.increments_replicas = parse_usize(key, v)?,
            "experiment.increments.horizon" => e.increments_horizon = parse_f64(key, v)?,
            "experiment.increments.macro_steps" => e.increments_macro_steps = parse_usize(key, v)?,
            "experiment.increments.epsilon" => e.increments_epsilon = parse_f64(key, v)?,
            "experiment.increments.deltas" => e.deltas = parse_list(key, v)?,
            "experiment.ergodicity.replicas" => e.ergodicity_replicas = parse_usize(key, v)?,
            "experiment.ergodicity.y" => e.ergodicity_y = parse_f64(key, v)?,
            "experiment.ergodicity.t_max" => e.ergodicity_t_max = parse_f64(key, v)?,
            "experiment.ergodicity.dt" => e.ergodicity_dt = parse_f64(key, v)?,
            "experiment.frozen_h" => e.frozen_h = parse_f64(key, v)?,
            "experiment.averaging.replicas" => e.averaging_replicas = parse_usize(key, v)?,
            "experiment.averaging.epsilons" => e.epsilons = parse_list(key, v)?,
            "experiment.averaging.null_replicas" => e.null_replicas = parse_usize(key, v)?,
            "experiment.fbar.horizon" => e.fbar_horizon = parse_f64(key, v)?,
            "experiment.fbar.replicas" => e.fbar_replicas = parse_usize(key, v)?,
            "experiment.fbar.nodes" => e.fbar_nodes = parse_usize(key, v)?,
            "experiment.fbar.radius" => e.fbar_radius = parse_f64(key, v)?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Every key with its text value, in emission order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let (m, s, e) = (&self.model, &self.solver, &self.experiment);
        vec![
            ("model.n_modes", m.n_modes.to_string()),
            ("model.d1", m.d1.to_string()),
            ("model.d2", m.d2.to_string()),
            ("model.a0", m.a0.to_string()),
            ("model.b0", m.b0.to_string()),
            ("model.g0", m.g0.to_string()),
            ("model.c0", m.c0.to_string()),
            ("model.l_f2", m.l_f2.to_string()),
            ("model.l_g2", m.l_g2.to_string()),
            ("model.couple_y", m.couple_y.to_string()),
            ("model.fast", m.fast.as_str().into()),
            ("solver.alpha", s.alpha.to_string()),
            ("solver.alpha0", s.alpha0.to_string()),
            ("solver.gamma", s.gamma.to_string()),
            ("solver.sigma", s.sigma.to_string()),
            ("solver.theta", s.theta.to_string()),
            ("solver.zeta", s.zeta.to_string()),
            ("solver.epsilon", s.epsilon.to_string()),
            ("solver.delta", fmt_opt(&s.delta)),
            ("solver.horizon", s.horizon.to_string()),
            ("solver.macro_steps", s.macro_steps.to_string()),
            ("solver.micro_substeps", fmt_opt(&s.micro_substeps)),
            ("solver.area_substeps", s.area_substeps.to_string()),
            ("solver.master_seed", s.master_seed.to_string()),
            ("solver.slow_driver", s.slow_driver.as_str().into()),
            ("experiment.x0_scale", e.x0_scale.to_string()),
            ("experiment.y0_scale", e.y0_scale.to_string()),
            ("experiment.lift.grid", e.lift_grid.to_string()),
            ("experiment.convolve.seeds", e.convolve_seeds.to_string()),
            ("experiment.convolve.ito_replicas", e.ito_replicas.to_string()),
            ("experiment.increments.replicas", e.increments_replicas.to_string()),
            ("experiment.increments.horizon", e.increments_horizon.to_string()),
            ("experiment.increments.macro_steps", e.increments_macro_steps.to_string()),
            ("experiment.increments.epsilon", e.increments_epsilon.to_string()),
            ("experiment.increments.deltas", fmt_list(&e.deltas)),
            ("experiment.ergodicity.replicas", e.ergodicity_replicas.to_string()),
            ("experiment.ergodicity.y", e.ergodicity_y.to_string()),
            ("experiment.ergodicity.t_max", e.ergodicity_t_max.to_string()),
            ("experiment.ergodicity.dt", e.ergodicity_dt.to_string()),
            ("experiment.frozen_h", e.frozen_h.to_string()),
            ("experiment.averaging.replicas", e.averaging_replicas.to_string()),
            ("experiment.averaging.epsilons", fmt_list(&e.epsilons)),
            ("experiment.averaging.null_replicas", e.null_replicas.to_string()),
            ("experiment.fbar.horizon", e.fbar_horizon.to_string()),
            ("experiment.fbar.replicas", e.fbar_replicas.to_string()),
            ("experiment.fbar.nodes", e.fbar_nodes.to_string()),
            ("experiment.fbar.radius", e.fbar_radius.to_string()),
        ]
    }

    /// Applies `ROUGHMILL_SECTION__KEY` style overrides. Variables without
    /// a `__` separator belong to the CLI and are skipped.
    pub fn apply_env<I: IntoIterator<Item = (String, String)>>(&mut self, vars: I) -> Result<()> {
        let mut pairs: Vec<(String, String)> = vars
            .into_iter()
            .filter_map(|(k, v)| {
                let rest = k.strip_prefix(ENV_PREFIX)?;
                rest.contains("__").then(|| (rest.to_ascii_lowercase().replace("__", "."), v))
            })
            .collect();
        pairs.sort();
        for (k, v) in pairs {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    /// Checks every solver and model constraint.
    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        self.build_model().map(|_| ())
    }

    pub fn build_model(&self) -> Result<(SpectralOperator, ModelSpec)> {
        let op = self.model.operator()?;
        let model = self.model.build(self.solver.gamma, self.solver.alpha)?;
        model.validate(&op, self.solver.gamma, self.solver.alpha)?;
        Ok((op, model))
    }

    pub fn initial_state(&self) -> (ScaleVector, ScaleVector) {
        let n = self.model.n_modes;
        (smooth_initial(n, self.experiment.x0_scale), default_fast_initial(n, self.experiment.y0_scale))
    }

    pub fn frozen_settings(&self) -> FrozenSettings {
        FrozenSettings {
            burn_in: None,
            horizon: self.experiment.fbar_horizon,
            replicas: self.experiment.fbar_replicas,
            h: self.experiment.frozen_h,
            master_seed: self.solver.master_seed,
            y0: None,
        }
    }
}

/// Parses config text without validating it.
pub fn parse_config_unchecked(text: &str) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            detail: format!("expected 'key = value', got '{line}'"),
        })?;
        cfg.set(key.trim(), value).map_err(|e| Error::Parse { line: i + 1, detail: e.to_string() })?;
    }
    Ok(cfg)
}

/// Parses and validates config text.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg = parse_config_unchecked(text)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    parse_config(&fs::read_to_string(path)?)
}

pub fn emit_config(cfg: &ExperimentConfig) -> String {
    let mut out = String::new();
    let mut section = "";
    for (k, v) in cfg.entries() {
        let head = k.split('.').next().unwrap_or("");
        if head != section {
            if !section.is_empty() {
                out.push('\n');
            }
            section = head;
        }
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}

/// Writes a rough path as `time, x_1..x_d, a_11..a_dd` rows; row `k > 0`
/// carries the area of the step ending at `t_k`.
pub fn write_rough_path_csv<W: Write>(path: &GridRoughPath, mut out: W) -> std::io::Result<()> {
    let d = path.dim();
    writeln!(out, "{CSV_VERSION_LINE}")?;
    let mut header = vec!["time".to_string()];
    header.extend((1..=d).map(|i| format!("x_{i}")));
    for i in 1..=d {
        header.extend((1..=d).map(|j| format!("a_{i}{j}")));
    }
    writeln!(out, "{}", header.join(","))?;
    for (k, t) in path.times().iter().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(path.value(k).iter().map(f64::to_string));
        if k == 0 {
            row.extend(std::iter::repeat_n("0".to_string(), d * d));
        } else {
            row.extend(path.step_area(k - 1).iter().map(f64::to_string));
        }
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn read_rough_path_csv<R: BufRead>(input: R) -> Result<GridRoughPath> {
    let mut lines = input.lines().enumerate();
    let mut next = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((i, l)) => Ok((i + 1, l?)),
            None => Err(Error::Parse { line: 0, detail: format!("missing {what}") }),
        }
    };
    let (_, version) = next("version line")?;
    if version.trim() != CSV_VERSION_LINE {
        return Err(Error::Parse { line: 1, detail: format!("unsupported version line '{version}'") });
    }
    let (_, header) = next("header")?;
    let cols = header.split(',').count();
    let d = (1..=8).find(|d| 1 + d + d * d == cols).ok_or_else(|| Error::Parse {
        line: 2,
        detail: format!("{cols} columns do not match 1 + d + d² for any d"),
    })?;
    let (mut times, mut values, mut areas) = (Vec::new(), Vec::new(), Vec::new());
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let nums: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse { line: i + 1, detail: e.to_string() })?;
        if nums.len() != cols {
            return Err(Error::Parse { line: i + 1, detail: format!("expected {cols} fields, got {}", nums.len()) });
        }
        let first = times.is_empty();
        times.push(nums[0]);
        values.extend_from_slice(&nums[1..=d]);
        if !first {
            areas.extend_from_slice(&nums[1 + d..]);
        }
    }
    GridRoughPath::new(times, d, values, areas)
}

/// Runs `f` on a dedicated pool of `threads` workers, or on the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Largest Chen residual over every triple `s ≤ u ≤ t` of the grid.
pub fn max_chen_residual(path: &GridRoughPath) -> Result<f64> {
    let table = path.area_table();
    let n = path.n_steps();
    (0..=n)
        .into_par_iter()
        .map(|s| -> Result<f64> {
            let mut worst: f64 = 0.0;
            for u in s..=n {
                for t in u..=n {
                    worst = worst.max(table.chen_residual(path, s, u, t)?);
                }
            }
            Ok(worst)
        })
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
}

/// The smooth, Brownian and mixed lifts checked by the lift suite.
pub fn lift_check_paths(grid_steps: usize, seed: u64) -> Result<Vec<(&'static str, GridRoughPath)>> {
    let grid = uniform_grid(1.0, grid_steps);
    let value = |t: f64| vec![(2.0 * std::f64::consts::PI * t).sin(), t * t, (3.0 * t).cos()];
    let smooth = canonical_smooth_lift(&SmoothPath { dim: 3, value: &value, derivative: None }, &grid, 8)?;
    let b = sample_ito_brownian_lift(SeedTuple::new(seed, 0, Stream::SlowDriver), &grid, 2, 32)?;
    let w = sample_ito_brownian_lift(SeedTuple::new(seed, 0, Stream::FastNoise), &grid, 2, 32)?;
    let mixed = build_mixed_lift(&b, &w)?;
    Ok(vec![("smooth", smooth), ("brownian", b.lift), ("mixed", mixed)])
}

/// `∫_0^1 e^{-λ(1-r)} dr` via the identity driver at dyadic `depth`.
pub fn smooth_convolution_oracle(lambda: f64, depth: u32) -> Result<f64> {
    let op = SpectralOperator::new(vec![lambda])?;
    let k = 1usize << depth;
    let f = |t: f64| vec![t];
    let df = |_: f64| vec![1.0];
    let driver = canonical_smooth_lift(&SmoothPath { dim: 1, value: &f, derivative: Some(&df) }, &uniform_grid(1.0, k), 2)?;
    let cp = ControlledPath::constant(driver.times().to_vec(), ScaleVector::basis(1, 0), 1, 0.0, 0.45)?;
    Ok(rough_convolve(&op, &[cp], &driver, k, depth)?.as_slice()[0])
}

/// Integrand column `i` is `tanh(Σ_j v_j X^j + φ_i)` componentwise, with
/// Gubinelli derivative from the chain rule.
pub fn tanh_integrand(driver: &GridRoughPath, n_modes: usize, alpha: f64) -> Result<Vec<ControlledPath>> {
    let d = driver.dim();
    let dirs: Vec<ScaleVector> = (0..d)
        .map(|j| ScaleVector::new((1..=n_modes).map(|n| (1.0 + j as f64) / n as f64).collect()))
        .collect();
    let k = driver.times().len();
    let mut y = Vec::with_capacity(k);
    for t in 0..k {
        let mut v = ScaleVector::zeros(n_modes);
        for (j, dir) in dirs.iter().enumerate() {
            v.axpy(driver.value(t)[j], dir);
        }
        y.push(v);
    }
    let base = ControlledPath::new(driver.times().to_vec(), y, vec![dirs; k], 0.0, alpha)?;
    (0..d)
        .map(|i| base.compose(&TanhField { weights: vec![1.0; n_modes], phase: 0.3 * (i + 1) as f64 }))
        .collect()
}

/// Successive-depth Cauchy statistics of the compensated sums on Brownian
/// drivers.
#[derive(Debug, Clone, PartialEq)]
pub struct CauchyReport {
    /// Mean over seeds of `|I_{m+1} - I_m|` for each depth `m`.
    pub mean_differences: Vec<f64>,
    /// Mean over seeds and depths of the per-seed ratio of successive
    /// differences.
    pub mean_ratio: f64,
    pub depths: Vec<u32>,
}

pub fn sewing_cauchy_ratio(seeds: usize, min_depth: u32, max_depth: u32, master: u64) -> Result<CauchyReport> {
    if max_depth < min_depth + 2 {
        return Err(Error::Config("need at least three depths".into()));
    }
    let k = 1usize << max_depth;
    let grid = uniform_grid(1.0, k);
    let op = SpectralOperator::dirichlet_laplacian(4)?;
    let per_seed: Vec<Vec<f64>> = (0..seeds as u64)
        .into_par_iter()
        .map(|r| -> Result<Vec<f64>> {
            let drv = sample_ito_brownian_lift(SeedTuple::new(master, r, Stream::Auxiliary), &grid, 2, 8)?.lift;
            let integrand = tanh_integrand(&drv, 4, 0.45)?;
            let sums: Vec<ScaleVector> = (min_depth..=max_depth)
                .map(|m| compensated_sum(&op, &integrand, &drv, &dyadic_partition(0, k, m)?))
                .collect::<Result<_>>()?;
            Ok(sums.windows(2).map(|w| op.norm_unchecked(w[1].sub(&w[0]).as_slice(), 0.0)).collect())
        })
        .collect::<Result<_>>()?;
    let n_diff = (max_depth - min_depth) as usize;
    let mean_differences: Vec<f64> =
        (0..n_diff).map(|i| per_seed.iter().map(|d| d[i]).sum::<f64>() / seeds as f64).collect();
    let ratios: Vec<f64> = per_seed.iter().flat_map(|d| d.windows(2).map(|w| w[1] / w[0])).collect();
    Ok(CauchyReport {
        mean_differences,
        mean_ratio: ratios.iter().sum::<f64>() / ratios.len() as f64,
        depths: (min_depth..=max_depth).collect(),
    })
}

/// Relative RMS gap between the compensated rough sum and the left-point
/// Itô sum for a one-dimensional Brownian driver.
pub fn ito_consistency_gap(replicas: usize, depth: u32, master: u64) -> Result<f64> {
    let k = 1usize << depth;
    let grid = uniform_grid(1.0, k);
    let op = SpectralOperator::dirichlet_laplacian(4)?;
    let pairs: Vec<(f64, f64)> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| -> Result<(f64, f64)> {
            let drv = sample_ito_brownian_lift(SeedTuple::new(master, r, Stream::Auxiliary), &grid, 1, 1)?.lift;
            let integrand = tanh_integrand(&drv, 4, 0.45)?;
            let rough = rough_convolve(&op, &integrand, &drv, k, depth)?;
            let mut ito = ScaleVector::zeros(4);
            for u in 0..k {
                let mut term = integrand[0].value(u).scaled(drv.increment(u, u + 1)[0]);
                op.semigroup_apply_in_place(1.0 - grid[u], &mut term)?;
                ito.axpy(1.0, &term);
            }
            Ok((rough.sub(&ito).as_slice().iter().map(|v| v * v).sum(), ito.as_slice().iter().map(|v| v * v).sum()))
        })
        .collect::<Result<_>>()?;
    let gap: f64 = pairs.iter().map(|p| p.0).sum();
    let norm: f64 = pairs.iter().map(|p| p.1).sum();
    Ok((gap / norm).sqrt())
}

/// The named experiment suites.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    LiftCheck,
    ConvolveCheck,
    Increments,
    Ergodicity,
    Averaging,
}

impl Suite {
    pub const ALL: [Suite; 5] =
        [Suite::LiftCheck, Suite::ConvolveCheck, Suite::Increments, Suite::Ergodicity, Suite::Averaging];

    pub fn name(self) -> &'static str {
        match self {
            Suite::LiftCheck => "lift-check",
            Suite::ConvolveCheck => "convolve-check",
            Suite::Increments => "increments",
            Suite::Ergodicity => "ergodicity",
            Suite::Averaging => "averaging",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Suite::ALL.into_iter().find(|x| x.name() == s)
    }
}

/// One thresholded check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: String,
    pub passed: bool,
}

impl Check {
    pub fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Self { name: name.into(), value, threshold: format!("<= {limit:e}"), passed: value <= limit }
    }

    pub fn at_least(name: &str, value: f64, limit: f64) -> Self {
        Self { name: name.into(), value, threshold: format!(">= {limit:e}"), passed: value >= limit }
    }

    pub fn flag(name: &str, ok: bool) -> Self {
        Self { name: name.into(), value: if ok { 1.0 } else { 0.0 }, threshold: "holds".into(), passed: ok }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {} value={:e} threshold {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.threshold
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub suite: Suite,
    pub checks: Vec<Check>,
    pub csv_path: PathBuf,
    pub summary_path: PathBuf,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }
}

/// Thresholds checked by the suites.
pub mod thresholds {
    pub const CHEN: f64 = 1e-12;
    pub const SMOOTH_ORACLE: f64 = 1e-3;
    pub const ORACLE_DEPTH: u32 = 12;
    /// `2^{-(3·0.45-1)} + 0.1`.
    pub fn cauchy_ratio() -> f64 {
        2f64.powf(-(3.0 * 0.45 - 1.0)) + 0.1
    }
    pub const CAUCHY_MIN_DEPTH: u32 = 8;
    pub const CAUCHY_MAX_DEPTH: u32 = 12;
    pub const ITO_RMS: f64 = 0.05;
    pub const ITO_DEPTH: u32 = 12;
    pub const ERGODICITY_RATE: f64 = 0.34;
    pub const INCREMENT_SLOPE: f64 = 1.6;
    pub const AVERAGING_LAST_OVER_FIRST: f64 = 0.5;
    pub const NULL_COUPLING: f64 = 1e-4;
}

struct CsvTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        let _ = writeln!(out, "{CSV_VERSION_LINE}");
        let _ = writeln!(out, "{}", self.header.join(","));
        for r in &self.rows {
            let _ = writeln!(out, "{}", r.join(","));
        }
        fs::write(path, out)?;
        Ok(())
    }
}

/// Writes the averaging sweep table.
pub fn write_sweep_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    let mut t = CsvTable::new(&["epsilon", "delta", "mean_sq_sup_error", "stderr", "replicas", "seed"]);
    for r in rows {
        t.push(vec![
            r.epsilon.to_string(),
            r.delta.to_string(),
            r.mean_sq_sup_error.to_string(),
            r.stderr.to_string(),
            r.replicas.to_string(),
            r.seed.to_string(),
        ]);
    }
    t.write(path)
}

/// Runs the default and null averaging sweeps.
pub fn run_averaging(cfg: &ExperimentConfig) -> Result<(Vec<SweepRow>, Vec<SweepRow>)> {
    let (op, model) = cfg.build_model()?;
    let (x0, y0) = cfg.initial_state();
    let e = &cfg.experiment;
    let fbar = Fbar::for_model(&op, &model, e.fbar_radius, e.fbar_nodes, &cfg.frozen_settings())?;
    let rows = averaging_error_sweep(&op, &model, &cfg.solver, &fbar, &e.epsilons, e.averaging_replicas, &x0, &y0)?;
    let null_model = ModelParams { couple_y: false, ..cfg.model.clone() }.build(cfg.solver.gamma, cfg.solver.alpha)?;
    let null = averaging_error_sweep(&op, &null_model, &cfg.solver, &Fbar::Exact, &e.epsilons, e.null_replicas, &x0, &y0)?;
    Ok((rows, null))
}

/// Runs `suite`, writes `<suite>.csv` and `<suite>_summary.txt` into
/// `out_dir` and returns the checks.
pub fn run_experiment(suite: Suite, cfg: &ExperimentConfig, out_dir: &Path) -> Result<Report> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    let csv_path = out_dir.join(format!("{}.csv", suite.name()));
    let summary_path = out_dir.join(format!("{}_summary.txt", suite.name()));
    let seed = cfg.solver.master_seed;
    let e = &cfg.experiment;
    let mut checks = Vec::new();
    let mut notes: Vec<String> = Vec::new();

    match suite {
        Suite::LiftCheck => {
            let mut t = CsvTable::new(&["lift", "grid_steps", "max_chen_residual"]);
            for (name, path) in lift_check_paths(e.lift_grid, seed)? {
                let r = max_chen_residual(&path)?;
                t.push(vec![name.into(), e.lift_grid.to_string(), r.to_string()]);
                checks.push(Check::at_most(&format!("chen_{name}"), r, thresholds::CHEN));
            }
            t.write(&csv_path)?;
        }
        Suite::ConvolveCheck => {
            let mut t = CsvTable::new(&["check", "parameter", "value", "target"]);
            for lambda in [1.0, 4.0, 9.0] {
                let v = smooth_convolution_oracle(lambda, thresholds::ORACLE_DEPTH)?;
                let target = (1.0 - (-lambda).exp()) / lambda;
                t.push(vec!["smooth_oracle".into(), lambda.to_string(), v.to_string(), target.to_string()]);
                checks.push(Check::at_most(&format!("smooth_oracle_lambda_{lambda}"), (v - target).abs(), thresholds::SMOOTH_ORACLE));
            }
            let cauchy = sewing_cauchy_ratio(e.convolve_seeds, thresholds::CAUCHY_MIN_DEPTH, thresholds::CAUCHY_MAX_DEPTH, seed)?;
            for (d, v) in cauchy.depths.iter().zip(&cauchy.mean_differences) {
                t.push(vec!["cauchy_difference".into(), d.to_string(), v.to_string(), String::new()]);
            }
            t.push(vec!["cauchy_ratio".into(), String::new(), cauchy.mean_ratio.to_string(), thresholds::cauchy_ratio().to_string()]);
            checks.push(Check::at_most("sewing_cauchy_ratio", cauchy.mean_ratio, thresholds::cauchy_ratio()));
            let gap = ito_consistency_gap(e.ito_replicas, thresholds::ITO_DEPTH, seed)?;
            t.push(vec!["ito_relative_rms".into(), thresholds::ITO_DEPTH.to_string(), gap.to_string(), thresholds::ITO_RMS.to_string()]);
            checks.push(Check::at_most("ito_relative_rms", gap, thresholds::ITO_RMS));
            t.write(&csv_path)?;
        }
        Suite::Increments => {
            let (op, model) = cfg.build_model()?;
            let (x0, y0) = cfg.initial_state();
            let solver = SolverConfig {
                horizon: e.increments_horizon,
                macro_steps: e.increments_macro_steps,
                epsilon: e.increments_epsilon,
                ..cfg.solver.clone()
            };
            let table = increment_experiment(&op, &model, &solver, &e.deltas, e.increments_replicas, &x0, &y0)?;
            let mut t = CsvTable::new(&["delta", "mean_sup_fourth", "stderr", "sup_mean_fourth", "replicas", "seed"]);
            for r in &table.rows {
                t.push(vec![
                    r.delta.to_string(),
                    r.mean_sup_fourth.to_string(),
                    r.stderr_sup_fourth.to_string(),
                    r.sup_mean_fourth.to_string(),
                    table.replicas.to_string(),
                    seed.to_string(),
                ]);
            }
            t.write(&csv_path)?;
            notes.push(format!("slope of sup_t mean (for reference): {}", table.slope_sup_mean));
            checks.push(Check::at_least("increment_slope", table.slope_mean_sup, thresholds::INCREMENT_SLOPE));
        }
        Suite::Ergodicity => {
            let (op, model) = cfg.build_model()?;
            let (x0, _) = cfg.initial_state();
            let y = ScaleVector::new(vec![e.ergodicity_y; cfg.model.n_modes]);
            let steps = (e.ergodicity_t_max / e.ergodicity_dt).round() as usize;
            let times: Vec<f64> = (0..=steps).map(|k| k as f64 * e.ergodicity_dt).collect();
            let rep = ergodicity_decay(
                &op,
                &model,
                &x0,
                &y,
                &times,
                e.ergodicity_replicas,
                e.frozen_h,
                seed,
                cfg.solver.gamma - cfg.solver.alpha,
            )?;
            let mut t = CsvTable::new(&["time", "distance", "phi_diagonal"]);
            for (i, (time, c)) in rep.times.iter().zip(&rep.curve).enumerate() {
                t.push(vec![time.to_string(), c.to_string(), rep.phi[i][i].to_string()]);
            }
            t.write(&csv_path)?;
            notes.push(format!("theoretical rate: {}", rep.theoretical_rate));
            notes.push(format!("phi envelope constant: {}", rep.phi_envelope));
            if let Some(f) = &rep.failure {
                notes.push(format!("diagnostic failure: {f}"));
            }
            checks.push(Check::at_least("fitted_rate", rep.fitted_rate, thresholds::ERGODICITY_RATE));
            checks.push(Check::flag("smoothed_nonincreasing", rep.smoothed_nonincreasing));
            checks.push(Check::at_most("phi_max_correlation", rep.max_correlation, 1.0 + 1e-9));
        }
        Suite::Averaging => {
            let (rows, null) = run_averaging(cfg)?;
            write_sweep_csv(&rows, &csv_path)?;
            write_sweep_csv(&null, &out_dir.join("averaging_null.csv"))?;
            checks.push(Check::flag("strictly_decreasing_beyond_se", strictly_decreasing_beyond_se(&rows)));
            if let (Some(first), Some(last)) = (rows.first(), rows.last()) {
                checks.push(Check::at_most(
                    "last_over_first",
                    last.mean_sq_sup_error / first.mean_sq_sup_error,
                    thresholds::AVERAGING_LAST_OVER_FIRST,
                ));
            }
            let worst = null.iter().map(|r| r.mean_sq_sup_error.sqrt()).fold(0.0, f64::max);
            checks.push(Check::at_most("null_coupling_rms_sup", worst, thresholds::NULL_COUPLING));
            notes.push(format!("delta(epsilon): {}", rows.iter().map(|r| r.delta.to_string()).collect::<Vec<_>>().join(", ")));
        }
    }

    let mut summary = format!("suite {}\nseed {seed}\n", suite.name());
    for n in &notes {
        let _ = writeln!(summary, "{n}");
    }
    for c in &checks {
        let _ = writeln!(summary, "{}", c.line());
    }
    let ok = checks.iter().all(|c| c.passed);
    let _ = writeln!(summary, "{}", if ok { "ALL PASS" } else { "SOME CHECKS FAILED" });
    fs::write(&summary_path, summary)?;
    Ok(Report { suite, checks, csv_path, summary_path })
}
