//! Coupled slow–fast stepping in mild form.
//!
//! The slow component is advanced on a macro grid with the one-step
//! compensated germ (a rough exponential Milstein step). The fast component
//! is advanced on a micro grid refining every macro step, using exponential
//! Euler–Maruyama on the `ε`-rescaled semigroup with the slow state held at
//! the left macro node. The slow drift integral over a macro step is
//! accumulated on the micro grid, so the drift sees the fast path at the
//! resolution it is simulated on.

use std::fmt;
use std::sync::Arc;

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::controlled_path::{SharedField, TanhField};
use crate::drivers::{
    canonical_smooth_lift, sample_brownian_fine, sample_ito_brownian_lift, FineIncrements, SmoothPath,
};
use crate::error::{Error, Result};
use crate::hilbert_scale::{ScaleVector, SpectralOperator, StepFactors};
use crate::rough_path::{uniform_grid, GridRoughPath};
use crate::seed::{SeedTuple, Stream};
use crate::stats::{log_log_slope, MeanVar};

/// `(x, y) ↦ H`.
pub type PairMap = Arc<dyn Fn(&ScaleVector, &ScaleVector) -> ScaleVector + Send + Sync>;
/// `(x, y) ↦ L(ℝ^d, H)` as `d` columns.
pub type ColumnMap = Arc<dyn Fn(&ScaleVector, &ScaleVector) -> Vec<ScaleVector> + Send + Sync>;

/// Structural facts about a model that solvers may exploit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Structure {
    /// `F₁` depends on `y`.
    pub f1_reads_y: bool,
    /// `F₂` or `G₂` depend on `x`.
    pub fast_reads_x: bool,
    /// Mode `n` of `F₁`, `F₂` and every `G₂` column depends only on
    /// `(x_n, y_n)`; the frozen invariant law then factorizes per mode.
    pub mode_separable: bool,
}

/// Coefficients `F₁, F₂, G₁, G₂` and their structural constants.
#[derive(Clone)]
pub struct ModelSpec {
    pub n_modes: usize,
    pub d1: usize,
    pub d2: usize,
    pub f1: PairMap,
    pub f2: PairMap,
    /// `d₁` columns of `G₁`.
    pub g1: Vec<SharedField>,
    pub g2: ColumnMap,
    pub l_f2: f64,
    pub l_g2: f64,
    /// Declared `sup_{x,y} |F₁(x,y)|_{γ-α}`.
    pub f1_bound: f64,
    pub structure: Structure,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("n_modes", &self.n_modes)
            .field("d1", &self.d1)
            .field("d2", &self.d2)
            .field("l_f2", &self.l_f2)
            .field("l_g2", &self.l_g2)
            .field("f1_bound", &self.f1_bound)
            .field("structure", &self.structure)
            .finish_non_exhaustive()
    }
}

impl ModelSpec {
    /// `λ₁ - L_{F₂} - 3 L_{G₂}²`.
    pub fn h5_margin(&self, op: &SpectralOperator) -> f64 {
        op.lambda_min() - self.l_f2 - 3.0 * self.l_g2 * self.l_g2
    }

    /// Exponential mixing rate `λ₁ - L_{F₂} - L_{G₂}²` of the frozen equation.
    pub fn mixing_rate(&self, op: &SpectralOperator) -> f64 {
        op.lambda_min() - self.l_f2 - self.l_g2 * self.l_g2
    }

    /// Checks the mode count, the dissipativity margin and the declared
    /// bound on `F₁` over a deterministic probe set.
    pub fn validate(&self, op: &SpectralOperator, gamma: f64, alpha: f64) -> Result<()> {
        if op.n_modes() != self.n_modes {
            return Err(Error::Dimension(format!(
                "model has {} modes, operator {}",
                self.n_modes,
                op.n_modes()
            )));
        }
        if self.g1.len() != self.d1 {
            return Err(Error::Dimension(format!("G1 has {} columns, d1 = {}", self.g1.len(), self.d1)));
        }
        let margin = self.h5_margin(op);
        if !(margin > 0.0) {
            return Err(Error::Constraint {
                name: "H5 margin nonpositive",
                detail: format!(
                    "{} - L_F2 - 3·L_G2² = {} - {} - 3·{}² = {}",
                    op.lambda_min(),
                    op.lambda_min(),
                    self.l_f2,
                    self.l_g2,
                    (margin * 1e12).round() / 1e12
                ),
            });
        }
        let mut rng = SeedTuple::new(0x5eed, 0, Stream::Auxiliary).rng();
        let normal = Normal::new(0.0, 3.0).expect("valid normal");
        for _ in 0..64 {
            let mut probe = || ScaleVector::new((0..self.n_modes).map(|_| normal.sample(&mut rng)).collect());
            let x = probe();
            let y = probe();
            let v = op.norm_gamma(&(self.f1)(&x, &y), gamma - alpha)?;
            if v > self.f1_bound * (1.0 + 1e-12) {
                return Err(Error::Constraint {
                    name: "F1 bound exceeded",
                    detail: format!("|F1|_(γ-α) = {v} > declared {}", self.f1_bound),
                });
            }
        }
        Ok(())
    }

    pub fn g1_columns(&self, x: &ScaleVector) -> Result<Vec<ScaleVector>> {
        self.g1.iter().map(|g| g.eval(x)).collect()
    }

    /// Entry `[j][i]` is `DG₁^i(x)[G₁^j(x)]`, the coefficient of `𝔹^{ji}`.
    pub fn dg1_g1(&self, x: &ScaleVector) -> Result<Vec<Vec<ScaleVector>>> {
        let cols = self.g1_columns(x)?;
        cols.iter()
            .map(|gj| self.g1.iter().map(|gi| gi.derivative(x, gj)).collect())
            .collect()
    }
}

/// Which fast dynamics the default family uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FastKind {
    /// `F₂(x,y)_n = a_n tanh(x_n) + L_{F₂} sin(y_n)`, `G₂ = c_n + L_{G₂} sin(y_n)`.
    Nonlinear,
    /// `F₂ ≡ 0`, `G₂ ≡ c`: a diagonal Ornstein–Uhlenbeck process.
    OrnsteinUhlenbeck,
}

impl FastKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FastKind::Nonlinear => "nonlinear",
            FastKind::OrnsteinUhlenbeck => "ou",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "nonlinear" => Some(FastKind::Nonlinear),
            "ou" => Some(FastKind::OrnsteinUhlenbeck),
            _ => None,
        }
    }
}

/// Parameters of the default coefficient family on the Dirichlet Laplacian.
///
/// Sequences are `a_n = a0/n²`, `b_n = b0/n`, `g_n = g0/n`, `c_n = c0/n`;
/// `G₁` column `j` is `g_n tanh(x_n + j/2)` and `G₂` column `l` is
/// `c_n + L_{G₂} sin(y_n + l/2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub n_modes: usize,
    pub d1: usize,
    pub d2: usize,
    pub a0: f64,
    pub b0: f64,
    pub g0: f64,
    pub c0: f64,
    pub l_f2: f64,
    pub l_g2: f64,
    /// When false, `b ≡ 0` and `F₁` ignores the fast variable.
    pub couple_y: bool,
    pub fast: FastKind,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            n_modes: 8,
            d1: 1,
            d2: 1,
            a0: 1.0,
            b0: 1.0,
            g0: 0.5,
            c0: 1.0,
            l_f2: 0.25,
            l_g2: 0.25,
            couple_y: true,
            fast: FastKind::Nonlinear,
        }
    }
}

const COLUMN_PHASE: f64 = 0.5;

impl ModelParams {
    pub fn operator(&self) -> Result<SpectralOperator> {
        SpectralOperator::dirichlet_laplacian(self.n_modes)
    }

    fn seq(&self, scale: f64, power: i32) -> Vec<f64> {
        (1..=self.n_modes).map(|n| scale / (n as f64).powi(power)).collect()
    }

    pub fn build(&self, gamma: f64, alpha: f64) -> Result<ModelSpec> {
        if self.n_modes == 0 || self.d1 == 0 || self.d2 == 0 {
            return Err(Error::Config("n_modes, d1 and d2 must be positive".into()));
        }
        let op = self.operator()?;
        let a = self.seq(self.a0, 2);
        let b = if self.couple_y { self.seq(self.b0, 1) } else { vec![0.0; self.n_modes] };
        let g = self.seq(self.g0, 1);
        let c = self.seq(self.c0, 1);

        let f1_bound = op
            .eigenvalues()
            .iter()
            .zip(a.iter().zip(&b))
            .map(|(l, (a, b))| l.powf(2.0 * (gamma - alpha)) * (a.abs() + b.abs()).powi(2))
            .sum::<f64>()
            .sqrt();

        let (a1, b1) = (a.clone(), b.clone());
        let f1: PairMap = Arc::new(move |x: &ScaleVector, y: &ScaleVector| {
            ScaleVector::new(
                (0..x.len())
                    .map(|n| a1[n] * x.as_slice()[n].tanh() + b1[n] * y.as_slice()[n].tanh())
                    .collect(),
            )
        });

        let g1: Vec<SharedField> = (0..self.d1)
            .map(|j| {
                Arc::new(TanhField { weights: g.clone(), phase: j as f64 * COLUMN_PHASE }) as SharedField
            })
            .collect();

        let d2 = self.d2;
        let (f2, g2, l_f2, l_g2): (PairMap, ColumnMap, f64, f64) = match self.fast {
            FastKind::Nonlinear => {
                let (a2, lf) = (a.clone(), self.l_f2);
                let f2: PairMap = Arc::new(move |x: &ScaleVector, y: &ScaleVector| {
                    ScaleVector::new(
                        (0..x.len())
                            .map(|n| a2[n] * x.as_slice()[n].tanh() + lf * y.as_slice()[n].sin())
                            .collect(),
                    )
                });
                let (c2, lg) = (c.clone(), self.l_g2);
                let g2: ColumnMap = Arc::new(move |_x: &ScaleVector, y: &ScaleVector| {
                    (0..d2)
                        .map(|l| {
                            let phase = l as f64 * COLUMN_PHASE;
                            ScaleVector::new(
                                y.as_slice()
                                    .iter()
                                    .zip(&c2)
                                    .map(|(v, c)| c + lg * (v + phase).sin())
                                    .collect(),
                            )
                        })
                        .collect()
                });
                (f2, g2, self.l_f2, self.l_g2)
            }
            FastKind::OrnsteinUhlenbeck => {
                let f2: PairMap = Arc::new(|x: &ScaleVector, _y: &ScaleVector| ScaleVector::zeros(x.len()));
                let c2 = c.clone();
                let g2: ColumnMap = Arc::new(move |_x: &ScaleVector, _y: &ScaleVector| {
                    vec![ScaleVector::new(c2.clone()); d2]
                });
                (f2, g2, 0.0, 0.0)
            }
        };

        Ok(ModelSpec {
            n_modes: self.n_modes,
            d1: self.d1,
            d2: self.d2,
            f1,
            f2,
            g1,
            g2,
            l_f2,
            l_g2,
            f1_bound,
            structure: Structure {
                f1_reads_y: self.couple_y && self.b0 != 0.0,
                fast_reads_x: self.fast == FastKind::Nonlinear && self.a0 != 0.0,
                mode_separable: true,
            },
        })
    }
}

/// How the slow driver `B` is generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlowDriverKind {
    /// Independent Itô Brownian lift.
    Brownian,
    /// Canonical lift of `B^i_t = sin(2π(i+1)t) / 2`; deterministic.
    Smooth,
}

impl SlowDriverKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SlowDriverKind::Brownian => "brownian",
            SlowDriverKind::Smooth => "smooth",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "brownian" => Some(SlowDriverKind::Brownian),
            "smooth" => Some(SlowDriverKind::Smooth),
            _ => None,
        }
    }
}

/// Regularity exponents and discretization parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub alpha: f64,
    pub alpha0: f64,
    pub gamma: f64,
    pub sigma: f64,
    /// Space index `θ ∈ {0, α, 2α}` used for norm evaluations only.
    pub theta: f64,
    pub zeta: f64,
    pub epsilon: f64,
    /// Khasminskii block length; `None` derives `ε^{1/(2(1+2α))}`.
    pub delta: Option<f64>,
    pub horizon: f64,
    pub macro_steps: usize,
    /// Micro steps per macro step; `None` picks the smallest count with
    /// `h ≤ ε/40`.
    pub micro_substeps: Option<usize>,
    pub area_substeps: usize,
    pub master_seed: u64,
    pub slow_driver: SlowDriverKind,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            alpha: 0.45,
            alpha0: 0.5,
            gamma: 0.0,
            sigma: 0.0,
            theta: 0.0,
            zeta: 0.35,
            epsilon: 0.01,
            delta: None,
            horizon: 0.5,
            macro_steps: 64,
            micro_substeps: None,
            area_substeps: crate::drivers::DEFAULT_AREA_SUBSTEPS,
            master_seed: 42,
            slow_driver: SlowDriverKind::Brownian,
        }
    }
}

/// Micro-mesh ratio used when the substep count is derived.
pub const DEFAULT_MICRO_RATIO: f64 = 40.0;
/// Largest admissible `h/ε`.
pub const MAX_MICRO_RATIO: f64 = 1.0 / 20.0;

/// `ε^{1/(2(1+2α))}`.
pub fn khasminskii_delta(epsilon: f64, alpha: f64) -> f64 {
    epsilon.powf(1.0 / (2.0 * (1.0 + 2.0 * alpha)))
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let a = self.alpha;
        if !(1.0 / 3.0 < a && a < self.alpha0 && self.alpha0 <= 0.5) {
            return Err(Error::Constraint {
                name: "alpha range",
                detail: format!("need 1/3 < alpha < alpha0 <= 1/2, got alpha = {a}, alpha0 = {}", self.alpha0),
            });
        }
        if !(0.0 <= self.sigma && self.sigma < a / 2.0) {
            return Err(Error::Constraint {
                name: "sigma < alpha/2 violated",
                detail: format!("sigma = {} not in [0, {})", self.sigma, a / 2.0),
            });
        }
        if !(a / 2.0 < self.zeta && self.zeta < a - self.sigma) {
            return Err(Error::Constraint {
                name: "zeta window violated",
                detail: format!("zeta = {} not in ({}, {})", self.zeta, a / 2.0, a - self.sigma),
            });
        }
        let theta_ok = [0.0, a, 2.0 * a].iter().any(|t| (t - self.theta).abs() < 1e-12);
        if !theta_ok {
            return Err(Error::Constraint {
                name: "theta not in {0, alpha, 2 alpha}",
                detail: format!("theta = {}", self.theta),
            });
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Constraint { name: "epsilon positive", detail: format!("epsilon = {}", self.epsilon) });
        }
        if let Some(d) = self.delta {
            if !(d > 0.0) {
                return Err(Error::Constraint { name: "delta positive", detail: format!("delta = {d}") });
            }
        }
        if !(self.horizon > 0.0) || self.macro_steps == 0 || self.area_substeps == 0 {
            return Err(Error::Constraint {
                name: "grid",
                detail: "horizon, macro_steps and area_substeps must be positive".into(),
            });
        }
        if self.micro_substeps == Some(0) {
            return Err(Error::Constraint { name: "grid", detail: "micro_substeps must be positive".into() });
        }
        Ok(())
    }

    pub fn delta_value(&self) -> f64 {
        self.delta.unwrap_or_else(|| khasminskii_delta(self.epsilon, self.alpha))
    }

    pub fn macro_step(&self) -> f64 {
        self.horizon / self.macro_steps as f64
    }

    pub fn macro_grid(&self) -> Vec<f64> {
        uniform_grid(self.horizon, self.macro_steps)
    }

    pub fn micro_substeps_value(&self) -> usize {
        self.micro_substeps.unwrap_or_else(|| {
            ((DEFAULT_MICRO_RATIO * self.macro_step() / self.epsilon) * (1.0 - 1e-12)).ceil().max(1.0) as usize
        })
    }

    pub fn micro_step(&self) -> f64 {
        self.macro_step() / self.micro_substeps_value() as f64
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        Self { epsilon, ..self.clone() }
    }
}

/// States on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<ScaleVector>,
}

impl Trajectory {
    /// `sup_k |self_k - other_k|_γ` over a shared grid.
    pub fn sup_distance(&self, other: &Trajectory, op: &SpectralOperator, gamma: f64) -> Result<f64> {
        if self.times.len() != other.times.len() {
            return Err(Error::Dimension("trajectories have different lengths".into()));
        }
        let mut best: f64 = 0.0;
        for (a, b) in self.states.iter().zip(&other.states) {
            best = best.max(op.norm_gamma(&a.sub(b), gamma)?);
        }
        Ok(best)
    }

    /// CSV body rows `time,c_1,...,c_n`.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", crate::harness::CSV_VERSION_LINE)?;
        let n = self.states.first().map(ScaleVector::len).unwrap_or(0);
        let header: Vec<String> =
            std::iter::once("time".to_string()).chain((1..=n).map(|k| format!("mode_{k}"))).collect();
        writeln!(out, "{}", header.join(","))?;
        for (t, s) in self.times.iter().zip(&self.states) {
            let row: Vec<String> =
                std::iter::once(t.to_string()).chain(s.as_slice().iter().map(f64::to_string)).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// The slow rough driver on the macro grid and the fast Brownian increments
/// on its micro refinement.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledDrivers {
    pub slow: GridRoughPath,
    pub fast: FineIncrements,
}

fn smooth_slow_value(d1: usize) -> impl Fn(f64) -> Vec<f64> {
    move |t: f64| {
        (0..d1)
            .map(|i| 0.5 * (2.0 * std::f64::consts::PI * (i + 1) as f64 * t).sin())
            .collect()
    }
}

/// Samples `B` on the macro grid from the slow stream of `replica`.
pub fn sample_slow_driver(model: &ModelSpec, config: &SolverConfig, replica: u64) -> Result<GridRoughPath> {
    let grid = config.macro_grid();
    match config.slow_driver {
        SlowDriverKind::Brownian => Ok(sample_ito_brownian_lift(
            SeedTuple::new(config.master_seed, replica, Stream::SlowDriver),
            &grid,
            model.d1,
            config.area_substeps,
        )?
        .lift),
        SlowDriverKind::Smooth => {
            let d1 = model.d1;
            let value = smooth_slow_value(d1);
            let derivative = move |t: f64| {
                (0..d1)
                    .map(|i| {
                        let w = 2.0 * std::f64::consts::PI * (i + 1) as f64;
                        0.5 * w * (w * t).cos()
                    })
                    .collect::<Vec<f64>>()
            };
            canonical_smooth_lift(
                &SmoothPath { dim: d1, value: &value, derivative: Some(&derivative) },
                &grid,
                8,
            )
        }
    }
}

/// Samples the fast Brownian increments on the micro grid.
pub fn sample_fast_noise(model: &ModelSpec, config: &SolverConfig, replica: u64) -> Result<FineIncrements> {
    let mut rng = SeedTuple::new(config.master_seed, replica, Stream::FastNoise).rng();
    sample_brownian_fine(&mut rng, &config.macro_grid(), model.d2, config.micro_substeps_value())
}

pub fn sample_drivers(model: &ModelSpec, config: &SolverConfig, replica: u64) -> Result<CoupledDrivers> {
    Ok(CoupledDrivers {
        slow: sample_slow_driver(model, config, replica)?,
        fast: sample_fast_noise(model, config, replica)?,
    })
}

/// Applies `x ← S_h x + drift + S_h[G₁(x) ΔB + DG₁G₁(x) 𝔹]` given the
/// already convolved drift contribution.
pub fn slow_update(
    op: &SpectralOperator,
    model: &ModelSpec,
    x: &ScaleVector,
    drift: &ScaleVector,
    b_increment: &[f64],
    b_area: &[f64],
    h: f64,
) -> Result<ScaleVector> {
    let d1 = model.d1;
    if b_increment.len() != d1 || b_area.len() != d1 * d1 {
        return Err(Error::Dimension("slow driver step data has the wrong dimension".into()));
    }
    let mut rough = x.clone();
    let cols = model.g1_columns(x)?;
    for (col, db) in cols.iter().zip(b_increment) {
        rough.axpy(*db, col);
    }
    if b_area.iter().any(|a| *a != 0.0) {
        let second = model.dg1_g1(x)?;
        for (j, row) in second.iter().enumerate() {
            for (i, v) in row.iter().enumerate() {
                rough.axpy(b_area[j * d1 + i], v);
            }
        }
    }
    op.semigroup_apply_in_place(h, &mut rough)?;
    rough.axpy(1.0, drift);
    Ok(rough)
}

/// One rough exponential Milstein step of the slow equation with `y` frozen
/// at the left endpoint.
pub fn step_slow(
    op: &SpectralOperator,
    model: &ModelSpec,
    x: &ScaleVector,
    y: &ScaleVector,
    b_increment: &[f64],
    b_area: &[f64],
    h: f64,
) -> Result<ScaleVector> {
    if !(h > 0.0) {
        return Err(Error::Domain(format!("step must be positive, got {h}")));
    }
    let drift = (model.f1)(x, y).hadamard(op.drift_weight(h)?.as_slice());
    let out = slow_update(op, model, x, &drift, b_increment, b_area, h)?;
    if !out.is_finite() {
        return Err(Error::Instability { step: 0 });
    }
    Ok(out)
}

/// `y ← S_{h/ε}(y + ε^{-1/2} G₂ ΔW) + w(h/ε) F₂` with cached factors for `h/ε`.
pub(crate) fn fast_kernel(
    factors: &StepFactors,
    f2: &ScaleVector,
    g2: &[ScaleVector],
    dw: &[f64],
    noise_scale: f64,
    y: &mut ScaleVector,
) {
    let ys = y.as_mut_slice();
    for n in 0..ys.len() {
        let mut noise = 0.0;
        for (col, w) in g2.iter().zip(dw) {
            noise += col.as_slice()[n] * w;
        }
        ys[n] = factors.decay[n] * (ys[n] + noise_scale * noise) + factors.weight[n] * f2.as_slice()[n];
    }
}

pub(crate) fn check_timescale(h: f64, epsilon: f64) -> Result<()> {
    if !(h > 0.0 && epsilon > 0.0) {
        return Err(Error::Domain(format!("need h > 0 and epsilon > 0, got h = {h}, epsilon = {epsilon}")));
    }
    let limit = epsilon * MAX_MICRO_RATIO;
    if h > limit * (1.0 + 1e-12) {
        return Err(Error::Timescale { h, limit });
    }
    Ok(())
}

/// One exponential Euler–Maruyama step of the fast equation.
pub fn step_fast(
    op: &SpectralOperator,
    model: &ModelSpec,
    x: &ScaleVector,
    y: &ScaleVector,
    dw: &[f64],
    h: f64,
    epsilon: f64,
) -> Result<ScaleVector> {
    check_timescale(h, epsilon)?;
    if dw.len() != model.d2 {
        return Err(Error::Dimension(format!("expected {} noise components", model.d2)));
    }
    let factors = op.step_factors(h / epsilon)?;
    let mut out = y.clone();
    fast_kernel(&factors, &(model.f2)(x, y), &(model.g2)(x, y), dw, epsilon.powf(-0.5), &mut out);
    if !out.is_finite() {
        return Err(Error::Instability { step: 0 });
    }
    Ok(out)
}

/// Slow trajectory on the macro grid and fast trajectory on the micro grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledSolution {
    pub slow: Trajectory,
    pub fast: Trajectory,
}

/// Integrates the coupled system from `(x0, y0)`.
pub fn solve_coupled(
    op: &SpectralOperator,
    model: &ModelSpec,
    config: &SolverConfig,
    drivers: &CoupledDrivers,
    x0: &ScaleVector,
    y0: &ScaleVector,
) -> Result<CoupledSolution> {
    let macro_h = config.macro_step();
    let m = config.micro_substeps_value();
    let h = macro_h / m as f64;
    check_timescale(h, config.epsilon)?;
    if drivers.slow.n_steps() != config.macro_steps || drivers.fast.n_steps() != config.macro_steps {
        return Err(Error::Dimension("drivers do not cover the macro grid".into()));
    }
    if drivers.fast.substeps() != m || drivers.fast.dim() != model.d2 || drivers.slow.dim() != model.d1 {
        return Err(Error::Dimension("driver resolution does not match the configuration".into()));
    }
    let fast_factors = op.step_factors(h / config.epsilon)?;
    let micro = op.step_factors(h)?;
    let noise_scale = config.epsilon.powf(-0.5);

    let mut x = x0.clone();
    let mut y = y0.clone();
    let mut slow = Trajectory { times: config.macro_grid(), states: Vec::with_capacity(config.macro_steps + 1) };
    let mut fast = Trajectory {
        times: Vec::with_capacity(config.macro_steps * m + 1),
        states: Vec::with_capacity(config.macro_steps * m + 1),
    };
    slow.states.push(x.clone());
    fast.times.push(0.0);
    fast.states.push(y.clone());
    let mut drift = ScaleVector::zeros(op.n_modes());
    for k in 0..config.macro_steps {
        let t0 = slow.times[k];
        drift.as_mut_slice().iter_mut().for_each(|v| *v = 0.0);
        for j in 0..m {
            // drift ← S_h drift + w(h) F₁(x_k, y_j)
            let f1 = (model.f1)(&x, &y);
            for (n, d) in drift.as_mut_slice().iter_mut().enumerate() {
                *d = micro.decay[n] * *d + micro.weight[n] * f1.as_slice()[n];
            }
            let f2 = (model.f2)(&x, &y);
            let g2 = (model.g2)(&x, &y);
            fast_kernel(&fast_factors, &f2, &g2, drivers.fast.get(k, j), noise_scale, &mut y);
            if !y.is_finite() {
                return Err(Error::Instability { step: k * m + j });
            }
            fast.times.push(t0 + h * (j + 1) as f64);
            fast.states.push(y.clone());
        }
        let inc = drivers.slow.increment(k, k + 1);
        x = slow_update(op, model, &x, &drift, &inc, drivers.slow.step_area(k), macro_h)?;
        if !x.is_finite() {
            return Err(Error::Instability { step: k });
        }
        slow.states.push(x.clone());
    }
    Ok(CoupledSolution { slow, fast })
}

/// `t(δ) = ⌊t/δ⌋ δ`.
pub fn floor_to_block(t: f64, delta: f64) -> f64 {
    // guard against t/δ landing just below an integer
    ((t / delta) * (1.0 + 1e-12)).floor() * delta
}

/// Number of macro steps per `δ` block, or an alignment error.
pub fn block_stride(config: &SolverConfig, delta: f64) -> Result<usize> {
    let ratio = delta / config.macro_step();
    let rounded = ratio.round();
    if rounded < 1.0 || (ratio - rounded).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::Alignment(format!(
            "delta = {delta} is not a multiple of the macro step {}",
            config.macro_step()
        )));
    }
    Ok(rounded as usize)
}

/// The auxiliary fast process with coefficients frozen at `X_{t(δ)}` on
/// every block `[kδ, (k+1)δ ∧ T]`, driven by the same fast increments.
pub fn solve_auxiliary(
    op: &SpectralOperator,
    model: &ModelSpec,
    config: &SolverConfig,
    drivers: &CoupledDrivers,
    slow: &Trajectory,
    y0: &ScaleVector,
) -> Result<Trajectory> {
    let delta = config.delta_value();
    let stride = if delta >= config.horizon { config.macro_steps } else { block_stride(config, delta)? };
    let m = config.micro_substeps_value();
    let h = config.macro_step() / m as f64;
    check_timescale(h, config.epsilon)?;
    if slow.states.len() != config.macro_steps + 1 {
        return Err(Error::Dimension("slow trajectory does not match the macro grid".into()));
    }
    let factors = op.step_factors(h / config.epsilon)?;
    let noise_scale = config.epsilon.powf(-0.5);
    let mut y = y0.clone();
    let mut out = Trajectory { times: vec![0.0], states: vec![y.clone()] };
    for k in 0..config.macro_steps {
        let frozen = &slow.states[(k / stride) * stride];
        for j in 0..m {
            let f2 = (model.f2)(frozen, &y);
            let g2 = (model.g2)(frozen, &y);
            fast_kernel(&factors, &f2, &g2, drivers.fast.get(k, j), noise_scale, &mut y);
            if !y.is_finite() {
                return Err(Error::Instability { step: k * m + j });
            }
            out.times.push(slow.times[k] + h * (j + 1) as f64);
            out.states.push(y.clone());
        }
    }
    Ok(out)
}

/// One row of the increment table.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementRow {
    pub delta: f64,
    /// `Ê sup_t |X_t - X_{t(δ)}|⁴_γ`.
    pub mean_sup_fourth: f64,
    pub stderr_sup_fourth: f64,
    /// `sup_t Ê |X_t - X_{t(δ)}|⁴_γ`.
    pub sup_mean_fourth: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IncrementTable {
    pub rows: Vec<IncrementRow>,
    pub replicas: usize,
    /// Log-log slope of `Ê sup_t` against `δ`.
    pub slope_mean_sup: f64,
    /// Log-log slope of `sup_t Ê` against `δ`.
    pub slope_sup_mean: f64,
}

/// Monte-Carlo time-increment moments of the slow component for each `δ`.
#[allow(clippy::too_many_arguments)]
pub fn increment_experiment(
    op: &SpectralOperator,
    model: &ModelSpec,
    config: &SolverConfig,
    deltas: &[f64],
    replicas: usize,
    x0: &ScaleVector,
    y0: &ScaleVector,
) -> Result<IncrementTable> {
    if replicas < 2 || deltas.len() < 2 {
        return Err(Error::Config("need at least two replicas and two block lengths".into()));
    }
    let strides: Vec<usize> = deltas.iter().map(|&d| block_stride(config, d)).collect::<Result<_>>()?;
    let gamma = config.gamma;
    // per replica: for each δ, (sup_t value, per-time values)
    let per_replica: Vec<Vec<(f64, Vec<f64>)>> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| -> Result<Vec<(f64, Vec<f64>)>> {
            let drivers = sample_drivers(model, config, r)?;
            let sol = solve_coupled(op, model, config, &drivers, x0, y0)?;
            let states = &sol.slow.states;
            Ok(strides
                .iter()
                .map(|&stride| {
                    let values: Vec<f64> = (0..states.len())
                        .map(|k| op.norm_unchecked(states[k].sub(&states[(k / stride) * stride]).as_slice(), gamma).powi(4))
                        .collect();
                    (values.iter().cloned().fold(0.0, f64::max), values)
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let n_times = config.macro_steps + 1;
    let rows: Vec<IncrementRow> = deltas
        .iter()
        .enumerate()
        .map(|(i, &delta)| {
            let sup = MeanVar::from_slice(&per_replica.iter().map(|r| r[i].0).collect::<Vec<_>>());
            let sup_mean = (0..n_times)
                .map(|k| per_replica.iter().map(|r| r[i].1[k]).sum::<f64>() / replicas as f64)
                .fold(0.0, f64::max);
            IncrementRow {
                delta,
                mean_sup_fourth: sup.mean(),
                stderr_sup_fourth: sup.std_error(),
                sup_mean_fourth: sup_mean,
            }
        })
        .collect();
    let ds: Vec<f64> = rows.iter().map(|r| r.delta).collect();
    let slope_mean_sup = log_log_slope(&ds, &rows.iter().map(|r| r.mean_sup_fourth).collect::<Vec<_>>());
    let slope_sup_mean = log_log_slope(&ds, &rows.iter().map(|r| r.sup_mean_fourth).collect::<Vec<_>>());
    Ok(IncrementTable { rows, replicas, slope_mean_sup, slope_sup_mean })
}

/// `x_n = scale/n³`, a smooth initial slow state.
pub fn smooth_initial(n_modes: usize, scale: f64) -> ScaleVector {
    ScaleVector::new((1..=n_modes).map(|n| scale / (n as f64).powi(3)).collect())
}

/// `y_n = scale/n²`.
pub fn default_fast_initial(n_modes: usize, scale: f64) -> ScaleVector {
    ScaleVector::new((1..=n_modes).map(|n| scale / (n as f64).powi(2)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_model(n: usize) -> ModelSpec {
        ModelSpec {
            n_modes: n,
            d1: 1,
            d2: 1,
            f1: Arc::new(|x: &ScaleVector, _| ScaleVector::zeros(x.len())),
            f2: Arc::new(|x: &ScaleVector, _| ScaleVector::zeros(x.len())),
            g1: vec![Arc::new(crate::controlled_path::ConstantField(ScaleVector::zeros(n)))],
            g2: Arc::new(|x: &ScaleVector, _| vec![ScaleVector::zeros(x.len())]),
            l_f2: 0.0,
            l_g2: 0.0,
            f1_bound: 0.0,
            structure: Structure { f1_reads_y: false, fast_reads_x: false, mode_separable: true },
        }
    }

    #[test]
    fn default_model_margins() {
        let model = ModelParams::default().build(0.0, 0.45).unwrap();
        let op = ModelParams::default().operator().unwrap();
        assert!((model.h5_margin(&op) - 0.5625).abs() < 1e-15);
        assert!((model.mixing_rate(&op) - 0.6875).abs() < 1e-15);
        model.validate(&op, 0.0, 0.45).unwrap();
    }

    #[test]
    fn h5_violation_is_named() {
        let params = ModelParams { l_f2: 0.6, l_g2: 0.5, ..ModelParams::default() };
        let model = params.build(0.0, 0.45).unwrap();
        let err = model.validate(&params.operator().unwrap(), 0.0, 0.45).unwrap_err();
        let msg = err.to_string();
        assert!(msg.starts_with("H5 margin nonpositive"), "{msg}");
        assert!(msg.contains("-0.35"), "{msg}");
    }

    #[test]
    fn solver_config_constraints() {
        let ok = SolverConfig { alpha: 0.45, alpha0: 0.5, sigma: 0.2, zeta: 0.24, ..SolverConfig::default() };
        ok.validate().unwrap();
        let bad = SolverConfig { sigma: 0.3, ..ok.clone() };
        assert!(matches!(bad.validate(), Err(Error::Constraint { name: "sigma < alpha/2 violated", .. })));
        let bad = SolverConfig { zeta: 0.25, ..ok.clone() };
        assert!(bad.validate().is_err());
        let bad = SolverConfig { alpha: 0.3, ..ok };
        assert!(bad.validate().is_err());
        let d = khasminskii_delta(0.001, 0.4);
        assert!((d - 0.001f64.powf(1.0 / 3.6)).abs() < 1e-15);
        assert!((d - 0.146780).abs() < 1e-6);
    }

    #[test]
    fn pure_semigroup_steps() {
        let op = SpectralOperator::dirichlet_laplacian(4).unwrap();
        let model = zero_model(4);
        let x = ScaleVector::new(vec![1.0, -0.5, 0.25, 0.1]);
        let y = ScaleVector::new(vec![0.3, 0.2, 0.1, 0.0]);
        let s = step_slow(&op, &model, &x, &y, &[0.7], &[0.1], 0.1).unwrap();
        assert_eq!(s, op.semigroup_apply(0.1, &x).unwrap());
        let f = step_fast(&op, &model, &x, &y, &[0.3], 0.0005, 0.01).unwrap();
        assert_eq!(f, op.semigroup_apply(0.05, &y).unwrap());
        assert!(matches!(step_fast(&op, &model, &x, &y, &[0.3], 0.001, 0.01), Err(Error::Timescale { .. })));
    }

    #[test]
    fn constant_noise_step_closed_form() {
        let op = SpectralOperator::dirichlet_laplacian(3).unwrap();
        let mut model = zero_model(3);
        let g = ScaleVector::new(vec![0.5, 1.0, -2.0]);
        model.g1 = vec![Arc::new(crate::controlled_path::ConstantField(g.clone()))];
        let x = ScaleVector::new(vec![1.0, 2.0, 3.0]);
        let db = 0.37;
        let out = step_slow(&op, &model, &x, &x, &[db], &[0.2], 0.05).unwrap();
        let mut expected = x.clone();
        expected.axpy(db, &g);
        let expected = op.semigroup_apply(0.05, &expected).unwrap();
        for (a, b) in out.as_slice().iter().zip(expected.as_slice()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn floor_arithmetic() {
        assert!((floor_to_block(0.35, 0.1) - 0.3).abs() < 1e-15);
        assert!((floor_to_block(0.3, 0.1) - 0.3).abs() < 1e-15);
        let cfg = SolverConfig { horizon: 1.0, macro_steps: 64, ..SolverConfig::default() };
        assert_eq!(block_stride(&cfg, 0.125).unwrap(), 8);
        assert!(matches!(block_stride(&cfg, 0.1), Err(Error::Alignment(_))));
    }
}
