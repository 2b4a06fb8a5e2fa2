//! Controlled paths `(Y, Y′)` relative to a grid rough path.
//!
//! `Y` takes values in the spectral scale, `Y′` is a linear map `ℝ^d → H`
//! stored as `d` columns. All seminorms are grid suprema and the norm of `Y′`
//! is the Hilbert–Schmidt norm of its columns.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::hilbert_scale::{ScaleVector, SpectralOperator};
use crate::rough_path::GridRoughPath;

#[derive(Debug, Clone, PartialEq)]
pub struct ControlledPath {
    times: Vec<f64>,
    y: Vec<ScaleVector>,
    yprime: Vec<Vec<ScaleVector>>,
    gamma: f64,
    alpha: f64,
}

impl ControlledPath {
    pub fn new(
        times: Vec<f64>,
        y: Vec<ScaleVector>,
        yprime: Vec<Vec<ScaleVector>>,
        gamma: f64,
        alpha: f64,
    ) -> Result<Self> {
        if y.len() != times.len() || yprime.len() != times.len() {
            return Err(Error::Dimension(format!(
                "{} grid points but {} values and {} derivatives",
                times.len(),
                y.len(),
                yprime.len()
            )));
        }
        let n = y.first().map(ScaleVector::len).unwrap_or(0);
        let d = yprime.first().map(Vec::len).unwrap_or(0);
        if d == 0 {
            return Err(Error::Dimension("Gubinelli derivative needs at least one column".into()));
        }
        let ragged = y.iter().any(|v| v.len() != n)
            || yprime.iter().any(|cols| cols.len() != d || cols.iter().any(|c| c.len() != n));
        if ragged {
            return Err(Error::Dimension("controlled path entries have inconsistent shapes".into()));
        }
        Ok(Self { times, y, yprime, gamma, alpha })
    }

    /// `Y ≡ c`, `Y′ ≡ 0` against a `d`-dimensional driver.
    pub fn constant(times: Vec<f64>, c: ScaleVector, d: usize, gamma: f64, alpha: f64) -> Result<Self> {
        let k = times.len();
        let zero = ScaleVector::zeros(c.len());
        Self::new(times, vec![c; k], vec![vec![zero; d]; k], gamma, alpha)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn value(&self, k: usize) -> &ScaleVector {
        &self.y[k]
    }

    pub fn derivative(&self, k: usize) -> &[ScaleVector] {
        &self.yprime[k]
    }

    pub fn driver_dim(&self) -> usize {
        self.yprime[0].len()
    }

    pub fn n_modes(&self) -> usize {
        self.y[0].len()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub(crate) fn check_driver(&self, driver: &GridRoughPath) -> Result<()> {
        if driver.times() != self.times.as_slice() || driver.dim() != self.driver_dim() {
            return Err(Error::Dimension(
                "controlled path and driver do not share grid and dimension".into(),
            ));
        }
        Ok(())
    }

    /// `Y′_s X_{s,t}`.
    fn derivative_times(&self, s: usize, increment: &[f64]) -> ScaleVector {
        let mut out = ScaleVector::zeros(self.n_modes());
        for (col, x) in self.yprime[s].iter().zip(increment) {
            out.axpy(*x, col);
        }
        out
    }

    /// `R^Y_{s,t} = Y_t - Y_s - Y′_s X_{s,t}`.
    pub fn remainder(&self, driver: &GridRoughPath, s: usize, t: usize) -> Result<ScaleVector> {
        self.check_driver(driver)?;
        if s > t || t >= self.times.len() {
            return Err(Error::Index(format!("invalid grid pair ({s}, {t})")));
        }
        Ok(self.remainder_unchecked(driver, s, t))
    }

    fn remainder_unchecked(&self, driver: &GridRoughPath, s: usize, t: usize) -> ScaleVector {
        let lin = self.derivative_times(s, &driver.increment(s, t));
        let mut r = self.y[t].sub(&self.y[s]);
        r.axpy(-1.0, &lin);
        r
    }

    fn derivative_norm(op: &SpectralOperator, cols: &[ScaleVector], gamma: f64) -> f64 {
        cols.iter()
            .map(|c| op.norm_unchecked(c.as_slice(), gamma).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Sup norm `‖Y‖_{∞,γ}` over the grid.
    pub fn sup_norm(&self, op: &SpectralOperator, gamma: f64) -> f64 {
        self.y.iter().map(|v| op.norm_unchecked(v.as_slice(), gamma)).fold(0.0, f64::max)
    }

    /// Sup norm `‖Y′‖_{∞,γ}` over the grid.
    pub fn derivative_sup_norm(&self, op: &SpectralOperator, gamma: f64) -> f64 {
        self.yprime.iter().map(|c| Self::derivative_norm(op, c, gamma)).fold(0.0, f64::max)
    }

    /// Grid Hölder seminorm of `Y` with exponent `exponent` measured in `H_gamma`.
    pub fn value_holder(&self, op: &SpectralOperator, exponent: f64, gamma: f64) -> f64 {
        self.pairs_sup(exponent, |s, t| op.norm_unchecked(self.y[t].sub(&self.y[s]).as_slice(), gamma))
    }

    /// Grid Hölder seminorm of `Y′`.
    pub fn derivative_holder(&self, op: &SpectralOperator, exponent: f64, gamma: f64) -> f64 {
        self.pairs_sup(exponent, |s, t| {
            let diff: Vec<ScaleVector> =
                self.yprime[t].iter().zip(&self.yprime[s]).map(|(a, b)| a.sub(b)).collect();
            Self::derivative_norm(op, &diff, gamma)
        })
    }

    /// Grid Hölder seminorm of the remainder.
    pub fn remainder_holder(
        &self,
        op: &SpectralOperator,
        driver: &GridRoughPath,
        exponent: f64,
        gamma: f64,
    ) -> Result<f64> {
        self.check_driver(driver)?;
        Ok(self.pairs_sup(exponent, |s, t| {
            op.norm_unchecked(self.remainder_unchecked(driver, s, t).as_slice(), gamma)
        }))
    }

    fn pairs_sup(&self, exponent: f64, mut f: impl FnMut(usize, usize) -> f64) -> f64 {
        let k = self.times.len();
        let mut best: f64 = 0.0;
        for s in 0..k {
            for t in s + 1..k {
                best = best.max(f(s, t) / (self.times[t] - self.times[s]).powf(exponent));
            }
        }
        best
    }

    /// `‖Y‖_{∞,γ} + ‖Y′‖_{∞,γ-α} + |Y′|_{α,γ-2α} + |R^Y|_{α,γ-α} + |R^Y|_{2α,γ-2α}`.
    pub fn controlled_norm(
        &self,
        op: &SpectralOperator,
        driver: &GridRoughPath,
        alpha: f64,
        gamma: f64,
    ) -> Result<f64> {
        self.check_driver(driver)?;
        if op.n_modes() != self.n_modes() {
            return Err(Error::Dimension("operator and path disagree on mode count".into()));
        }
        Ok(self.sup_norm(op, gamma)
            + self.derivative_sup_norm(op, gamma - alpha)
            + self.derivative_holder(op, alpha, gamma - 2.0 * alpha)
            + self.remainder_holder(op, driver, alpha, gamma - alpha)?
            + self.remainder_holder(op, driver, 2.0 * alpha, gamma - 2.0 * alpha)?)
    }

    /// `(G(Y), DG(Y) Y′)`.
    pub fn compose(&self, field: &dyn VectorField) -> Result<ControlledPath> {
        let mut y = Vec::with_capacity(self.y.len());
        let mut yprime = Vec::with_capacity(self.y.len());
        for (v, cols) in self.y.iter().zip(&self.yprime) {
            let g = field.eval(v)?;
            let dg: Vec<ScaleVector> =
                cols.iter().map(|c| field.derivative(v, c)).collect::<Result<_>>()?;
            y.push(g);
            yprime.push(dg);
        }
        ControlledPath::new(self.times.clone(), y, yprime, self.gamma, self.alpha)
    }
}

/// A `C²` map `H → H` with its directional derivative.
pub trait VectorField: Send + Sync {
    fn eval(&self, y: &ScaleVector) -> Result<ScaleVector>;

    /// `DG(y)[v]`.
    fn derivative(&self, y: &ScaleVector, v: &ScaleVector) -> Result<ScaleVector>;
}

/// Composes a controlled path with a vector field.
pub fn compose_vector_field(cp: &ControlledPath, field: &dyn VectorField) -> Result<ControlledPath> {
    cp.compose(field)
}

/// `G(y) = c`.
#[derive(Debug, Clone)]
pub struct ConstantField(pub ScaleVector);

impl VectorField for ConstantField {
    fn eval(&self, _y: &ScaleVector) -> Result<ScaleVector> {
        Ok(self.0.clone())
    }

    fn derivative(&self, y: &ScaleVector, _v: &ScaleVector) -> Result<ScaleVector> {
        Ok(ScaleVector::zeros(y.len()))
    }
}

/// `G(y) = A y` with a dense row-major matrix.
#[derive(Debug, Clone)]
pub struct LinearField {
    n: usize,
    matrix: Vec<f64>,
}

impl LinearField {
    pub fn new(n: usize, matrix: Vec<f64>) -> Result<Self> {
        if matrix.len() != n * n {
            return Err(Error::Dimension(format!("expected {n}x{n} matrix")));
        }
        Ok(Self { n, matrix })
    }

    fn apply(&self, v: &ScaleVector) -> Result<ScaleVector> {
        if v.len() != self.n {
            return Err(Error::Model(format!("linear field expects {} modes, got {}", self.n, v.len())));
        }
        Ok(ScaleVector::new(
            self.matrix
                .chunks(self.n)
                .map(|row| row.iter().zip(v.as_slice()).map(|(a, b)| a * b).sum())
                .collect(),
        ))
    }
}

impl VectorField for LinearField {
    fn eval(&self, y: &ScaleVector) -> Result<ScaleVector> {
        self.apply(y)
    }

    fn derivative(&self, _y: &ScaleVector, v: &ScaleVector) -> Result<ScaleVector> {
        self.apply(v)
    }
}

/// Componentwise `G(y)_n = g_n tanh(y_n + phase)`.
#[derive(Debug, Clone)]
pub struct TanhField {
    pub weights: Vec<f64>,
    pub phase: f64,
}

impl VectorField for TanhField {
    fn eval(&self, y: &ScaleVector) -> Result<ScaleVector> {
        if y.len() != self.weights.len() {
            return Err(Error::Model("tanh field mode count mismatch".into()));
        }
        Ok(ScaleVector::new(
            self.weights.iter().zip(y.as_slice()).map(|(g, v)| g * (v + self.phase).tanh()).collect(),
        ))
    }

    fn derivative(&self, y: &ScaleVector, v: &ScaleVector) -> Result<ScaleVector> {
        if y.len() != self.weights.len() || v.len() != y.len() {
            return Err(Error::Model("tanh field mode count mismatch".into()));
        }
        Ok(ScaleVector::new(
            self.weights
                .iter()
                .zip(y.as_slice())
                .zip(v.as_slice())
                .map(|((g, x), dv)| {
                    let c = (x + self.phase).cosh();
                    g * dv / (c * c)
                })
                .collect(),
        ))
    }
}

/// Shared handle used by models to hold vector fields.
pub type SharedField = Arc<dyn VectorField>;
