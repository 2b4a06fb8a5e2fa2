//! Spectral realization of the interpolation scale `H_γ` and the analytic
//! semigroup `S_t = exp(tL)` generated by a diagonal, negative definite `L`.
//!
//! Elements are stored as coefficients against the eigenbasis of `-L`, so
//! every `H_γ` norm and every semigroup action is a per-mode scaling.

use crate::error::{Error, Result};

/// Below this value of `λt` the drift weight switches to its Taylor series.
const SERIES_THRESHOLD: f64 = 1e-8;

/// Nondecreasing eigenvalue sequence of `-L`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralOperator {
    eigenvalues: Vec<f64>,
}

impl SpectralOperator {
    /// Builds an operator with strictly positive, nondecreasing eigenvalues.
    pub fn new(eigenvalues: Vec<f64>) -> Result<Self> {
        let op = Self::new_semidefinite(eigenvalues)?;
        if op.eigenvalues[0] <= 0.0 {
            return Err(Error::Domain(format!(
                "smallest eigenvalue must be positive, got {}",
                op.eigenvalues[0]
            )));
        }
        Ok(op)
    }

    /// Like [`SpectralOperator::new`] but admits zero eigenvalues. Only used
    /// for oracle operators such as the identity semigroup.
    pub fn new_semidefinite(eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::Domain("operator needs at least one mode".into()));
        }
        if eigenvalues.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(Error::Domain("eigenvalues must be finite and nonnegative".into()));
        }
        if eigenvalues.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Domain("eigenvalues must be nondecreasing".into()));
        }
        Ok(Self { eigenvalues })
    }

    /// Dirichlet Laplacian on `(0, π)`: `λ_n = n²`.
    pub fn dirichlet_laplacian(n_modes: usize) -> Result<Self> {
        Self::new((1..=n_modes).map(|n| (n * n) as f64).collect())
    }

    pub fn n_modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues[0]
    }

    fn check_len(&self, x: &ScaleVector) -> Result<()> {
        if x.len() != self.n_modes() {
            return Err(Error::Dimension(format!(
                "vector has {} modes, operator has {}",
                x.len(),
                self.n_modes()
            )));
        }
        Ok(())
    }

    /// `|x|_γ = (Σ λ_n^{2γ} x_n²)^{1/2}`.
    pub fn norm_gamma(&self, x: &ScaleVector, gamma: f64) -> Result<f64> {
        self.check_len(x)?;
        Ok(self.norm_unchecked(x.as_slice(), gamma))
    }

    pub(crate) fn norm_unchecked(&self, coeffs: &[f64], gamma: f64) -> f64 {
        if gamma == 0.0 {
            return coeffs.iter().map(|c| c * c).sum::<f64>().sqrt();
        }
        self.eigenvalues
            .iter()
            .zip(coeffs)
            .map(|(l, c)| l.powf(2.0 * gamma) * c * c)
            .sum::<f64>()
            .sqrt()
    }

    /// `S_t x`, componentwise `e^{-λ_n t} x_n`.
    pub fn semigroup_apply(&self, t: f64, x: &ScaleVector) -> Result<ScaleVector> {
        let mut out = x.clone();
        self.semigroup_apply_in_place(t, &mut out)?;
        Ok(out)
    }

    pub fn semigroup_apply_in_place(&self, t: f64, x: &mut ScaleVector) -> Result<()> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("semigroup time must be nonnegative, got {t}")));
        }
        self.check_len(x)?;
        for (c, l) in x.coeffs.iter_mut().zip(&self.eigenvalues) {
            *c *= (-l * t).exp();
        }
        Ok(())
    }

    /// Per-mode `∫_0^t e^{-λ_n s} ds = (1 - e^{-λ_n t}) / λ_n`.
    pub fn drift_weight(&self, t: f64) -> Result<ScaleVector> {
        if !(t > 0.0) {
            return Err(Error::Domain(format!("drift weight needs t > 0, got {t}")));
        }
        Ok(ScaleVector::new(
            self.eigenvalues.iter().map(|&l| exp_integral(l, t)).collect(),
        ))
    }

    /// Decay factors and drift weights for a fixed step `h`.
    pub fn step_factors(&self, h: f64) -> Result<StepFactors> {
        let weight = self.drift_weight(h)?.coeffs;
        let decay = self.eigenvalues.iter().map(|l| (-l * h).exp()).collect();
        Ok(StepFactors { h, decay, weight })
    }
}

/// `(1 - e^{-λt}) / λ`, with a three-term series for tiny `λt`.
pub fn exp_integral(lambda: f64, t: f64) -> f64 {
    let u = lambda * t;
    if u.abs() < SERIES_THRESHOLD {
        t * (1.0 - u / 2.0 + u * u / 6.0)
    } else {
        -(-u).exp_m1() / lambda
    }
}

/// Cached `e^{-λ_n h}` and `(1 - e^{-λ_n h}) / λ_n` for a fixed step.
#[derive(Debug, Clone)]
pub struct StepFactors {
    pub h: f64,
    pub decay: Vec<f64>,
    pub weight: Vec<f64>,
}

/// Basis coefficients `⟨x, e_n⟩` of an element of the scale.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScaleVector {
    coeffs: Vec<f64>,
}

impl ScaleVector {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn zeros(n: usize) -> Self {
        Self { coeffs: vec![0.0; n] }
    }

    /// The `k`-th basis vector (zero based).
    pub fn basis(n: usize, k: usize) -> Self {
        let mut v = Self::zeros(n);
        v.coeffs[k] = 1.0;
        v
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == 0.0)
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &ScaleVector) {
        debug_assert_eq!(self.len(), other.len());
        for (s, o) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *s += a * o;
        }
    }

    pub fn sub(&self, other: &ScaleVector) -> ScaleVector {
        debug_assert_eq!(self.len(), other.len());
        ScaleVector::new(self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect())
    }

    pub fn add(&self, other: &ScaleVector) -> ScaleVector {
        debug_assert_eq!(self.len(), other.len());
        ScaleVector::new(self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect())
    }

    pub fn scaled(&self, a: f64) -> ScaleVector {
        ScaleVector::new(self.coeffs.iter().map(|c| a * c).collect())
    }

    /// Componentwise product, used to apply weight sequences.
    pub fn hadamard(&self, w: &[f64]) -> ScaleVector {
        ScaleVector::new(self.coeffs.iter().zip(w).map(|(c, w)| c * w).collect())
    }
}

impl From<Vec<f64>> for ScaleVector {
    fn from(coeffs: Vec<f64>) -> Self {
        Self::new(coeffs)
    }
}

/// Ratio `|x|_{γ2}^{γ3-γ1} / (|x|_{γ1}^{γ3-γ2} |x|_{γ3}^{γ2-γ1})`.
///
/// On the spectral scale the interpolation constant is 1, so the ratio never
/// exceeds one beyond rounding.
pub fn interpolation_check(
    op: &SpectralOperator,
    x: &ScaleVector,
    gamma1: f64,
    gamma2: f64,
    gamma3: f64,
) -> Result<f64> {
    if !(gamma1 <= gamma2 && gamma2 <= gamma3) {
        return Err(Error::Domain(format!(
            "exponents must be ordered, got ({gamma1}, {gamma2}, {gamma3})"
        )));
    }
    op.check_len(x)?;
    if x.is_zero() {
        return Err(Error::UndefinedRatio("interpolation ratio of the zero vector".into()));
    }
    let n1 = op.norm_unchecked(x.as_slice(), gamma1);
    let n2 = op.norm_unchecked(x.as_slice(), gamma2);
    let n3 = op.norm_unchecked(x.as_slice(), gamma3);
    // Logs avoid overflow for large exponent gaps.
    let log_ratio = (gamma3 - gamma1) * n2.ln()
        - (gamma3 - gamma2) * n1.ln()
        - (gamma2 - gamma1) * n3.ln();
    Ok(log_ratio.exp())
}

/// Per-mode smoothing constant `sup_{λ≥0} λ^σ e^{-λt} = (σ/(e t))^σ`.
pub fn smoothing_constant(sigma: f64, t: f64) -> f64 {
    if sigma == 0.0 {
        1.0
    } else {
        (sigma / (std::f64::consts::E * t)).powf(sigma)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn op14() -> SpectralOperator {
        SpectralOperator::new(vec![1.0, 4.0]).unwrap()
    }

    #[test]
    fn norm_examples() {
        let op = op14();
        assert_eq!(op.norm_gamma(&ScaleVector::basis(2, 0), 2.0).unwrap(), 1.0);
        assert_eq!(op.norm_gamma(&ScaleVector::basis(2, 1), 1.0).unwrap(), 4.0);
        let x = ScaleVector::new(vec![1.0, 1.0]);
        let expected = (1.0f64 + 4.0).sqrt();
        assert!((op.norm_gamma(&x, 0.5).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 2.23607).abs() < 1e-5);
    }

    #[test]
    fn norm_length_mismatch() {
        let op = op14();
        assert!(matches!(
            op.norm_gamma(&ScaleVector::zeros(3), 0.0),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn operator_validation() {
        assert!(SpectralOperator::new(vec![4.0, 1.0]).is_err());
        assert!(SpectralOperator::new(vec![0.0, 1.0]).is_err());
        assert!(SpectralOperator::new_semidefinite(vec![0.0, 1.0]).is_ok());
        let op = SpectralOperator::dirichlet_laplacian(8).unwrap();
        assert_eq!(op.eigenvalues()[7], 64.0);
    }

    #[test]
    fn semigroup_examples() {
        let op = op14();
        let x = ScaleVector::new(vec![0.3, -1.2]);
        assert_eq!(op.semigroup_apply(0.0, &x).unwrap(), x);
        let y = op.semigroup_apply(1.0, &ScaleVector::basis(2, 0)).unwrap();
        assert!((y.as_slice()[0] - 0.3678794).abs() < 1e-7);
        assert_eq!(y.as_slice()[1], 0.0);
        assert!(matches!(op.semigroup_apply(-0.1, &x), Err(Error::Domain(_))));
    }

    #[test]
    fn smoothing_maximizer() {
        // brute-force maximum of λ^σ e^{-λt} over a fine λ grid
        let (sigma, t) = (0.5, 0.25);
        let brute = (0..200_000)
            .map(|i| i as f64 * 1e-4)
            .map(|l: f64| l.powf(sigma) * (-l * t).exp())
            .fold(0.0, f64::max);
        assert!((brute - 0.85776).abs() < 1e-5);
        assert!((smoothing_constant(sigma, t) - brute).abs() < 1e-8);
    }

    #[test]
    fn drift_weight_examples() {
        assert!((exp_integral(1.0, 1.0) - 0.6321206).abs() < 1e-7);
        assert!((exp_integral(4.0, 1e3) - 0.25).abs() < 1e-15);
        assert!((exp_integral(1e-12, 1.0) - 1.0).abs() < 1e-11);
        assert_eq!(exp_integral(0.0, 1.0), 1.0);
        let op = op14();
        assert!(matches!(op.drift_weight(0.0), Err(Error::Domain(_))));
        // series and closed form agree across the switch
        let l = 1.0;
        let below = exp_integral(l, 0.99e-8);
        let above = -(-1.01e-8f64).exp_m1() / l;
        assert!((below / 0.99e-8 - above / 1.01e-8).abs() < 1e-9);
    }

    #[test]
    fn interpolation_examples() {
        let op = op14();
        let r = interpolation_check(&op, &ScaleVector::basis(2, 0), 0.0, 0.3, 1.0).unwrap();
        assert!((r - 1.0).abs() < 1e-14);
        let x = ScaleVector::new(vec![1.0, 1.0]);
        let r = interpolation_check(&op, &x, 0.7, 0.7, 0.7).unwrap();
        assert_eq!(r, 1.0);
        // direct evaluation: |x|_0 = √2, |x|_{1/2} = √5, |x|_1 = √17
        let direct = 5f64.sqrt() / (2f64.sqrt().powf(0.5) * 17f64.sqrt().powf(0.5));
        let r = interpolation_check(&op, &x, 0.0, 0.5, 1.0).unwrap();
        assert!((r - direct).abs() < 1e-14);
        assert!(r < 1.0);
        assert!(matches!(
            interpolation_check(&op, &ScaleVector::zeros(2), 0.0, 0.5, 1.0),
            Err(Error::UndefinedRatio(_))
        ));
    }

    fn arb_vector() -> impl Strategy<Value = ScaleVector> {
        proptest::collection::vec(-3.0f64..3.0, 8).prop_map(ScaleVector::new)
    }

    proptest! {
        #[test]
        fn semigroup_property(x in arb_vector(), t in 0.0f64..2.0, s in 0.0f64..2.0) {
            let op = SpectralOperator::dirichlet_laplacian(8).unwrap();
            let two = op.semigroup_apply(t, &op.semigroup_apply(s, &x).unwrap()).unwrap();
            let one = op.semigroup_apply(t + s, &x).unwrap();
            for gamma in [-1.0, 0.0, 1.0] {
                let diff = op.norm_gamma(&two.sub(&one), gamma).unwrap();
                prop_assert!(diff <= 1e-12 * op.norm_gamma(&x, gamma).unwrap().max(1e-300));
            }
        }

        #[test]
        fn monotone_embedding(x in arb_vector(), g1 in -2.0f64..2.0, dg in 0.0f64..2.0) {
            let op = SpectralOperator::dirichlet_laplacian(8).unwrap();
            prop_assert!(op.norm_gamma(&x, g1).unwrap() <= op.norm_gamma(&x, g1 + dg).unwrap() * (1.0 + 1e-14));
        }

        #[test]
        fn smoothing_and_contraction(x in arb_vector(), t in 0.01f64..2.0, sigma in 0.0f64..1.0, gamma in -1.0f64..1.0) {
            let op = SpectralOperator::dirichlet_laplacian(8).unwrap();
            let st = op.semigroup_apply(t, &x).unwrap();
            let lhs = op.norm_gamma(&st, gamma + sigma).unwrap();
            let rhs = smoothing_constant(sigma, t) * op.norm_gamma(&x, gamma).unwrap();
            prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-300);
            let lhs = op.norm_gamma(&st.sub(&x), gamma).unwrap();
            let rhs = t.powf(sigma) * op.norm_gamma(&x, gamma + sigma).unwrap();
            prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-300);
        }

        #[test]
        fn interpolation_ratio_at_most_one(x in arb_vector(), a in -1.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0) {
            prop_assume!(!x.is_zero());
            let op = SpectralOperator::dirichlet_laplacian(8).unwrap();
            let r = interpolation_check(&op, &x, a, a + b, a + b + c).unwrap();
            prop_assert!(r <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn contraction_per_mode_supremum() {
        // sup_u (1 - e^{-u}) / u^σ ≤ 1 on a log grid of u
        for sigma in [0.1, 0.25, 0.5, 0.75, 1.0] {
            let worst = (0..4000)
                .map(|i| 10f64.powf(-8.0 + i as f64 * 0.003))
                .map(|u: f64| -(-u).exp_m1() / u.powf(sigma))
                .fold(0.0, f64::max);
            assert!(worst <= 1.0 + 1e-12, "sigma {sigma}: {worst}");
        }
    }
}
