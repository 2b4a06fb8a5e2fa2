//! Random and deterministic rough drivers.
//!
//! * Itô Brownian lifts: level one exact Gaussian increments, diagonal areas
//!   exact through quadratic variation, off-diagonal areas by left-point
//!   sums over `M` substeps per grid step.
//! * Canonical lifts of smooth paths by composite Simpson quadrature.
//! * The mixed path `M = (B, W)` over `ℝ^{d₁+d₂}` whose cross areas come from
//!   the joint substep records and integration by parts.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rough_path::{check_grid, GridRoughPath};
use crate::seed::SeedTuple;

/// Default number of substeps used for off-diagonal Brownian areas.
pub const DEFAULT_AREA_SUBSTEPS: usize = 32;

/// Increments on the uniform refinement of each grid step into `substeps`
/// pieces, laid out `[step][substep][component]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FineIncrements {
    substeps: usize,
    dim: usize,
    data: Vec<f64>,
}

impl FineIncrements {
    pub fn new(substeps: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if substeps == 0 || dim == 0 || data.len() % (substeps * dim) != 0 {
            return Err(Error::Dimension(format!(
                "{} fine increments do not tile {substeps} substeps of dimension {dim}",
                data.len()
            )));
        }
        Ok(Self { substeps, dim, data })
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_steps(&self) -> usize {
        self.data.len() / (self.substeps * self.dim)
    }

    /// Increment over substep `j` of grid step `k`.
    pub fn get(&self, k: usize, j: usize) -> &[f64] {
        let idx = (k * self.substeps + j) * self.dim;
        &self.data[idx..idx + self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// A lifted driver together with the fine samples it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct DriverSample {
    pub lift: GridRoughPath,
    pub fine: Option<FineIncrements>,
}

/// Samples `substeps * K` Brownian increments of dimension `dim`.
pub fn sample_brownian_fine<R: Rng>(
    rng: &mut R,
    grid: &[f64],
    dim: usize,
    substeps: usize,
) -> Result<FineIncrements> {
    check_grid(grid)?;
    if substeps < 1 {
        return Err(Error::Config("at least one area substep is required".into()));
    }
    let mut data = Vec::with_capacity((grid.len() - 1) * substeps * dim);
    for w in grid.windows(2) {
        let sd = ((w[1] - w[0]) / substeps as f64).sqrt();
        for _ in 0..substeps * dim {
            let z: f64 = rng.sample(StandardNormal);
            data.push(sd * z);
        }
    }
    FineIncrements::new(substeps, dim, data)
}

/// Itô lift on `grid` from fine Brownian increments.
///
/// Diagonal areas are set to `((ΔW^i)² - Δt)/2`; off-diagonal entries are the
/// left-point sums `Σ_j W^i_{t_k, τ_j} ΔW^j_{τ_j}`.
pub fn ito_lift_from_fine(grid: &[f64], fine: &FineIncrements) -> Result<GridRoughPath> {
    check_grid(grid)?;
    let k_steps = grid.len() - 1;
    if fine.n_steps() != k_steps {
        return Err(Error::Dimension(format!(
            "fine record covers {} steps, grid has {k_steps}",
            fine.n_steps()
        )));
    }
    let d = fine.dim();
    let mut increments = vec![0.0; k_steps * d];
    let mut areas = vec![0.0; k_steps * d * d];
    let mut running = vec![0.0; d];
    for k in 0..k_steps {
        running.iter_mut().for_each(|r| *r = 0.0);
        let area = &mut areas[k * d * d..(k + 1) * d * d];
        for j in 0..fine.substeps() {
            let dw = fine.get(k, j);
            for a in 0..d {
                for b in 0..d {
                    if a != b {
                        area[a * d + b] += running[a] * dw[b];
                    }
                }
            }
            for (r, w) in running.iter_mut().zip(dw) {
                *r += w;
            }
        }
        let dt = grid[k + 1] - grid[k];
        for a in 0..d {
            area[a * d + a] = (running[a] * running[a] - dt) / 2.0;
            increments[k * d + a] = running[a];
        }
    }
    GridRoughPath::from_increments(grid.to_vec(), d, &increments, areas)
}

/// Samples the Itô Brownian rough path on `grid` from one seed tuple.
pub fn sample_ito_brownian_lift(
    seed: SeedTuple,
    grid: &[f64],
    dim: usize,
    substeps: usize,
) -> Result<DriverSample> {
    let mut rng = seed.rng();
    let fine = sample_brownian_fine(&mut rng, grid, dim, substeps)?;
    let lift = ito_lift_from_fine(grid, &fine)?;
    Ok(DriverSample { lift, fine: Some(fine) })
}

/// A smooth path `t ↦ f(t) ∈ ℝ^d` with an optional exact derivative.
pub struct SmoothPath<'a> {
    pub dim: usize,
    pub value: &'a dyn Fn(f64) -> Vec<f64>,
    pub derivative: Option<&'a dyn Fn(f64) -> Vec<f64>>,
}

impl SmoothPath<'_> {
    fn derivative_at(&self, t: f64) -> Vec<f64> {
        match self.derivative {
            Some(df) => df(t),
            None => {
                let eta = 1e-5 * t.abs().max(1.0);
                let up = (self.value)(t + eta);
                let down = (self.value)(t - eta);
                up.iter().zip(&down).map(|(a, b)| (a - b) / (2.0 * eta)).collect()
            }
        }
    }
}

/// Canonical lift `𝕏_{s,t} = ∫_s^t f_{s,r} ⊗ f'(r) dr` of a smooth path.
///
/// `order` is the (even) number of Simpson panels per grid step.
pub fn canonical_smooth_lift(path: &SmoothPath<'_>, grid: &[f64], order: usize) -> Result<GridRoughPath> {
    check_grid(grid)?;
    let d = path.dim;
    let panels = order.max(2) + order % 2;
    let f0 = (path.value)(grid[0]);
    if f0.len() != d {
        return Err(Error::Dimension(format!("path returns {} components, expected {d}", f0.len())));
    }
    let mut values = Vec::with_capacity(grid.len() * d);
    for &t in grid {
        let ft = (path.value)(t);
        values.extend(ft.iter().zip(&f0).map(|(a, b)| a - b));
    }
    let mut areas = vec![0.0; (grid.len() - 1) * d * d];
    for (k, w) in grid.windows(2).enumerate() {
        let (s, t) = (w[0], w[1]);
        let fs = (path.value)(s);
        let h = (t - s) / panels as f64;
        let area = &mut areas[k * d * d..(k + 1) * d * d];
        for p in 0..=panels {
            let r = s + h * p as f64;
            let weight = if p == 0 || p == panels {
                1.0
            } else if p % 2 == 1 {
                4.0
            } else {
                2.0
            } * h
                / 3.0;
            let fr = (path.value)(r);
            let dfr = path.derivative_at(r);
            for i in 0..d {
                let left = fr[i] - fs[i];
                for j in 0..d {
                    area[i * d + j] += weight * left * dfr[j];
                }
            }
        }
    }
    GridRoughPath::new(grid.to_vec(), d, values, areas)
}

/// Fine increments of a smooth path on the uniform refinement of `grid`.
pub fn smooth_fine_increments(
    value: &dyn Fn(f64) -> Vec<f64>,
    dim: usize,
    grid: &[f64],
    substeps: usize,
) -> Result<FineIncrements> {
    check_grid(grid)?;
    if substeps < 1 {
        return Err(Error::Config("at least one substep is required".into()));
    }
    let mut data = Vec::with_capacity((grid.len() - 1) * substeps * dim);
    for w in grid.windows(2) {
        let h = (w[1] - w[0]) / substeps as f64;
        for j in 0..substeps {
            let a = value(w[0] + h * j as f64);
            let b = if j + 1 == substeps { value(w[1]) } else { value(w[0] + h * (j + 1) as f64) };
            data.extend(b.iter().zip(&a).map(|(x, y)| x - y));
        }
    }
    FineIncrements::new(substeps, dim, data)
}

/// Assembles the mixed rough path `M = (B, W)` over `ℝ^{d₁+d₂}`.
///
/// Diagonal blocks are `𝔹` and `𝕎`; `I[B,W]` per step is the left-point sum
/// `Σ_j B_{t_k, τ_j} ⊗ ΔW_{τ_j}` and `I[W,B]^{ij} = W^i B^j - I[B,W]^{ji}`.
pub fn build_mixed_lift(b: &DriverSample, w: &DriverSample) -> Result<GridRoughPath> {
    if b.lift.times() != w.lift.times() {
        return Err(Error::Dimension("B and W live on different grids".into()));
    }
    let (Some(bf), Some(wf)) = (&b.fine, &w.fine) else {
        return Err(Error::Config("mixed lift needs substep records for both drivers".into()));
    };
    if bf.substeps() != wf.substeps() || bf.n_steps() != wf.n_steps() {
        return Err(Error::Config("B and W substep records are not aligned".into()));
    }
    let (d1, d2) = (b.lift.dim(), w.lift.dim());
    let d = d1 + d2;
    let k_steps = b.lift.n_steps();
    let mut values = Vec::with_capacity((k_steps + 1) * d);
    for k in 0..=k_steps {
        values.extend_from_slice(b.lift.value(k));
        values.extend_from_slice(w.lift.value(k));
    }
    let mut areas = vec![0.0; k_steps * d * d];
    let mut b_run = vec![0.0; d1];
    let mut ibw = vec![0.0; d1 * d2];
    for k in 0..k_steps {
        let area = &mut areas[k * d * d..(k + 1) * d * d];
        let bb = b.lift.step_area(k);
        let ww = w.lift.step_area(k);
        for i in 0..d1 {
            for j in 0..d1 {
                area[i * d + j] = bb[i * d1 + j];
            }
        }
        for i in 0..d2 {
            for j in 0..d2 {
                area[(d1 + i) * d + d1 + j] = ww[i * d2 + j];
            }
        }
        b_run.iter_mut().for_each(|v| *v = 0.0);
        ibw.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..bf.substeps() {
            let db = bf.get(k, j);
            let dw = wf.get(k, j);
            for i in 0..d1 {
                for l in 0..d2 {
                    ibw[i * d2 + l] += b_run[i] * dw[l];
                }
            }
            for (r, v) in b_run.iter_mut().zip(db) {
                *r += v;
            }
        }
        let db = b.lift.increment(k, k + 1);
        let dw = w.lift.increment(k, k + 1);
        for i in 0..d1 {
            for l in 0..d2 {
                area[i * d + d1 + l] = ibw[i * d2 + l];
            }
        }
        for i in 0..d2 {
            for l in 0..d1 {
                area[(d1 + i) * d + l] = dw[i] * db[l] - ibw[l * d2 + i];
            }
        }
    }
    GridRoughPath::new(b.lift.times().to_vec(), d, values, areas)
}
