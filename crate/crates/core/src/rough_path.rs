//! Two-level rough paths sampled on a time grid.
//!
//! Only the per-step areas `𝕏_{t_k, t_{k+1}}` are stored. Areas over longer
//! grid intervals are rebuilt with Chen's relation, so the algebraic
//! consistency of the second level holds by construction.
//!
//! Level-one increments use the Euclidean norm, level-two areas the maximum
//! absolute entry. Hölder seminorms are suprema over grid pairs.

use crate::error::{Error, Result};

/// Which level of the rough path a seminorm refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    One,
    Two,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRoughPath {
    times: Vec<f64>,
    dim: usize,
    /// `(K + 1) * dim`, row `k` holds `X_{t_k}`.
    values: Vec<f64>,
    /// `K * dim * dim`, row-major `𝕏_{t_k, t_{k+1}}`.
    step_areas: Vec<f64>,
}

impl GridRoughPath {
    pub fn new(times: Vec<f64>, dim: usize, values: Vec<f64>, step_areas: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Dimension("rough path dimension must be positive".into()));
        }
        check_grid(&times)?;
        let k = times.len() - 1;
        if values.len() != (k + 1) * dim {
            return Err(Error::Dimension(format!(
                "expected {} path values, got {}",
                (k + 1) * dim,
                values.len()
            )));
        }
        if step_areas.len() != k * dim * dim {
            return Err(Error::Dimension(format!(
                "expected {} area entries, got {}",
                k * dim * dim,
                step_areas.len()
            )));
        }
        if values.iter().chain(&step_areas).any(|v| !v.is_finite()) {
            return Err(Error::Domain("rough path entries must be finite".into()));
        }
        Ok(Self { times, dim, values, step_areas })
    }

    /// Builds a path started at the origin from per-step increments.
    pub fn from_increments(
        times: Vec<f64>,
        dim: usize,
        increments: &[f64],
        step_areas: Vec<f64>,
    ) -> Result<Self> {
        let k = times.len().saturating_sub(1);
        if increments.len() != k * dim {
            return Err(Error::Dimension(format!(
                "expected {} increments, got {}",
                k * dim,
                increments.len()
            )));
        }
        let mut values = vec![0.0; (k + 1) * dim];
        for step in 0..k {
            for i in 0..dim {
                values[(step + 1) * dim + i] = values[step * dim + i] + increments[step * dim + i];
            }
        }
        Self::new(times, dim, values, step_areas)
    }

    /// The trivial rough path `(0, 0)` on a grid.
    pub fn zero(times: Vec<f64>, dim: usize) -> Result<Self> {
        let k = times.len().saturating_sub(1);
        Self::new(times, dim, vec![0.0; (k + 1) * dim], vec![0.0; k * dim * dim])
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn value(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn step_area(&self, k: usize) -> &[f64] {
        let dd = self.dim * self.dim;
        &self.step_areas[k * dd..(k + 1) * dd]
    }

    pub fn step_areas(&self) -> &[f64] {
        &self.step_areas
    }

    /// `X_{s,t} = X_t - X_s` on grid indices.
    pub fn increment(&self, s: usize, t: usize) -> Vec<f64> {
        self.value(t).iter().zip(self.value(s)).map(|(b, a)| b - a).collect()
    }

    fn check_pair(&self, s: usize, t: usize) -> Result<()> {
        if s > t || t > self.n_steps() {
            return Err(Error::Index(format!(
                "invalid grid pair ({s}, {t}) on {} steps",
                self.n_steps()
            )));
        }
        Ok(())
    }

    /// `𝕏_{s,t}` rebuilt from step areas with Chen's relation.
    pub fn chen_extend(&self, s: usize, t: usize) -> Result<Vec<f64>> {
        self.check_pair(s, t)?;
        let mut area = vec![0.0; self.dim * self.dim];
        for k in s..t {
            self.extend_by_step(s, k, &mut area);
        }
        Ok(area)
    }

    /// `area ← area + 𝕏_{k,k+1} + X_{s,k} ⊗ X_{k,k+1}`.
    fn extend_by_step(&self, s: usize, k: usize, area: &mut [f64]) {
        let d = self.dim;
        let xs = self.value(s);
        let xk = self.value(k);
        let xk1 = self.value(k + 1);
        let step = self.step_area(k);
        for i in 0..d {
            let left = xk[i] - xs[i];
            for j in 0..d {
                area[i * d + j] += step[i * d + j] + left * (xk1[j] - xk[j]);
            }
        }
    }

    /// Visits `(t, 𝕏_{s,t})` for every `t > s` in one forward sweep.
    pub fn for_each_area_from(&self, s: usize, mut visit: impl FnMut(usize, &[f64])) {
        let mut area = vec![0.0; self.dim * self.dim];
        for k in s..self.n_steps() {
            self.extend_by_step(s, k, &mut area);
            visit(k + 1, &area);
        }
    }

    /// `‖𝕏_{s,t} - 𝕏_{s,u} - 𝕏_{u,t} - X_{s,u} ⊗ X_{u,t}‖_∞`.
    pub fn chen_residual(&self, s: usize, u: usize, t: usize) -> Result<f64> {
        if u < s {
            return Err(Error::Index(format!("expected s <= u, got ({s}, {u})")));
        }
        self.check_pair(u, t)?;
        let d = self.dim;
        let st = self.chen_extend(s, t)?;
        let su = self.chen_extend(s, u)?;
        let ut = self.chen_extend(u, t)?;
        let xsu = self.increment(s, u);
        let xut = self.increment(u, t);
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                let r = st[i * d + j] - su[i * d + j] - ut[i * d + j] - xsu[i] * xut[j];
                worst = worst.max(r.abs());
            }
        }
        Ok(worst)
    }

    /// Tabulates every pair area; `O(K² d²)` memory.
    pub fn area_table(&self) -> AreaTable {
        let n = self.times.len();
        let dd = self.dim * self.dim;
        let mut entries = vec![0.0; n * n * dd];
        for s in 0..n {
            self.for_each_area_from(s, |t, area| {
                let idx = (s * n + t) * dd;
                entries[idx..idx + dd].copy_from_slice(area);
            });
        }
        AreaTable { n_points: n, dim: self.dim, entries }
    }

    /// Grid Hölder seminorm: `|X|_α` for level one, `|𝕏|_{2α}` for level two.
    pub fn holder_seminorm(&self, alpha: f64, level: Level) -> Result<f64> {
        check_alpha(alpha)?;
        let k = self.n_steps();
        let mut best: f64 = 0.0;
        match level {
            Level::One => {
                for s in 0..k {
                    for t in s + 1..=k {
                        let n = euclid_diff(self.value(t), self.value(s));
                        best = best.max(n / (self.times[t] - self.times[s]).powf(alpha));
                    }
                }
            }
            Level::Two => {
                for s in 0..k {
                    self.for_each_area_from(s, |t, area| {
                        let n = max_abs(area);
                        best = best.max(n / (self.times[t] - self.times[s]).powf(2.0 * alpha));
                    });
                }
            }
        }
        Ok(best)
    }

    /// `ϱ_α(X) = |X|_α + |𝕏|_{2α}`.
    pub fn rho_alpha(&self, alpha: f64) -> Result<f64> {
        Ok(self.holder_seminorm(alpha, Level::One)? + self.holder_seminorm(alpha, Level::Two)?)
    }

    /// `⫴X⫴_α = |X|_α + |𝕏|_{2α}^{1/2}`.
    pub fn homogeneous_norm(&self, alpha: f64) -> Result<f64> {
        Ok(self.holder_seminorm(alpha, Level::One)?
            + self.holder_seminorm(alpha, Level::Two)?.sqrt())
    }
}

/// Dense table of `𝕏_{s,t}` over all grid pairs, for checking area data
/// that did not come from [`GridRoughPath::chen_extend`].
#[derive(Debug, Clone)]
pub struct AreaTable {
    n_points: usize,
    dim: usize,
    entries: Vec<f64>,
}

impl AreaTable {
    pub fn get(&self, s: usize, t: usize) -> &[f64] {
        let dd = self.dim * self.dim;
        let idx = (s * self.n_points + t) * dd;
        &self.entries[idx..idx + dd]
    }

    pub fn get_mut(&mut self, s: usize, t: usize) -> &mut [f64] {
        let dd = self.dim * self.dim;
        let idx = (s * self.n_points + t) * dd;
        &mut self.entries[idx..idx + dd]
    }

    /// Chen residual of the tabulated areas against the level one of `path`.
    pub fn chen_residual(&self, path: &GridRoughPath, s: usize, u: usize, t: usize) -> Result<f64> {
        if !(s <= u && u <= t && t < self.n_points) || path.dim != self.dim {
            return Err(Error::Index(format!("invalid triple ({s}, {u}, {t})")));
        }
        let d = self.dim;
        let (st, su, ut) = (self.get(s, t), self.get(s, u), self.get(u, t));
        let xsu = path.increment(s, u);
        let xut = path.increment(u, t);
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                let r = st[i * d + j] - su[i * d + j] - ut[i * d + j] - xsu[i] * xut[j];
                worst = worst.max(r.abs());
            }
        }
        Ok(worst)
    }
}

/// Pseudometric `|X - X̄|_α + |𝕏 - 𝕏̄|_{2α}` between paths on the same grid.
pub fn distance_alpha(p: &GridRoughPath, q: &GridRoughPath, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if p.dim != q.dim || p.times != q.times {
        return Err(Error::Dimension("rough paths live on different grids".into()));
    }
    let k = p.n_steps();
    let times = &p.times;
    let d = p.dim;
    let mut level_one: f64 = 0.0;
    let mut level_two: f64 = 0.0;
    let mut ap = vec![0.0; d * d];
    let mut aq = vec![0.0; d * d];
    for s in 0..k {
        ap.iter_mut().for_each(|a| *a = 0.0);
        aq.iter_mut().for_each(|a| *a = 0.0);
        for step in s..k {
            p.extend_by_step(s, step, &mut ap);
            q.extend_by_step(s, step, &mut aq);
            let t = step + 1;
            let dt = times[t] - times[s];
            let n1 = (0..d)
                .map(|i| {
                    let dp = p.value(t)[i] - p.value(s)[i];
                    let dq = q.value(t)[i] - q.value(s)[i];
                    (dp - dq).powi(2)
                })
                .sum::<f64>()
                .sqrt();
            let n2 = ap.iter().zip(&aq).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            level_one = level_one.max(n1 / dt.powf(alpha));
            level_two = level_two.max(n2 / dt.powf(2.0 * alpha));
        }
    }
    Ok(level_one + level_two)
}

/// Grid supremum of `|F(s,t)| / (t - s)^exponent` for a two-parameter table.
pub fn two_parameter_seminorm(
    times: &[f64],
    exponent: f64,
    mut table: impl FnMut(usize, usize) -> f64,
) -> Result<f64> {
    if !(exponent > 0.0 && exponent <= 2.0) {
        return Err(Error::Domain(format!("Hölder exponent {exponent} outside (0, 2]")));
    }
    check_grid(times)?;
    let k = times.len() - 1;
    let mut best: f64 = 0.0;
    for s in 0..k {
        for t in s + 1..=k {
            best = best.max(table(s, t).abs() / (times[t] - times[s]).powf(exponent));
        }
    }
    Ok(best)
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Domain(format!("Hölder exponent {alpha} outside (0, 1]")));
    }
    Ok(())
}

pub(crate) fn check_grid(times: &[f64]) -> Result<()> {
    if times.len() < 2 {
        return Err(Error::Domain("grid needs at least two points".into()));
    }
    if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain("grid must be finite and strictly increasing".into()));
    }
    Ok(())
}

/// `K + 1` equispaced points on `[0, horizon]`.
pub fn uniform_grid(horizon: f64, steps: usize) -> Vec<f64> {
    (0..=steps).map(|k| horizon * k as f64 / steps as f64).collect()
}

fn euclid_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn max_abs(m: &[f64]) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}
