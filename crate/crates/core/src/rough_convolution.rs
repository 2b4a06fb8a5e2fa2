//! Semigroup rough convolution `∫_s^t S_{t-r} Y_r d𝐗_r` by compensated
//! Riemann sums, plus the exponential-integrator drift convolution.
//!
//! The integrand is `Y: [0,T] → L(ℝ^d, H)` given column by column: entry `i`
//! of the slice is the controlled path multiplying `dX^i`, and its
//! Gubinelli derivative column `j` multiplies the area entry `𝕏^{ji}`.

use crate::controlled_path::ControlledPath;
use crate::error::{Error, Result};
use crate::hilbert_scale::{ScaleVector, SpectralOperator};
use crate::rough_path::GridRoughPath;

/// Default maximal dyadic depth (4096 steps on the unit interval).
pub const DEFAULT_MAX_DEPTH: u32 = 12;

fn check_integrand(op: &SpectralOperator, integrand: &[ControlledPath], driver: &GridRoughPath) -> Result<()> {
    if integrand.len() != driver.dim() {
        return Err(Error::Dimension(format!(
            "integrand has {} columns, driver dimension is {}",
            integrand.len(),
            driver.dim()
        )));
    }
    for cp in integrand {
        cp.check_driver(driver)?;
        if cp.n_modes() != op.n_modes() {
            return Err(Error::Dimension("integrand and operator disagree on mode count".into()));
        }
    }
    Ok(())
}

/// Germ `Y_u X_{u,v} + Y′_u 𝕏_{u,v}`.
fn germ(integrand: &[ControlledPath], driver: &GridRoughPath, u: usize, v: usize) -> ScaleVector {
    let d = driver.dim();
    let inc = driver.increment(u, v);
    let area = driver.chen_extend(u, v).expect("indices validated by caller");
    let mut out = ScaleVector::zeros(integrand[0].n_modes());
    for (i, cp) in integrand.iter().enumerate() {
        out.axpy(inc[i], cp.value(u));
        for (j, col) in cp.derivative(u).iter().enumerate() {
            out.axpy(area[j * d + i], col);
        }
    }
    out
}

/// Compensated sum `Σ S_{t-u}(Y_u X_{u,v} + Y′_u 𝕏_{u,v})` over the partition
/// given by increasing grid indices; the last index is `t`.
pub fn compensated_sum(
    op: &SpectralOperator,
    integrand: &[ControlledPath],
    driver: &GridRoughPath,
    partition: &[usize],
) -> Result<ScaleVector> {
    check_integrand(op, integrand, driver)?;
    if partition.len() < 2 {
        return Ok(ScaleVector::zeros(op.n_modes()));
    }
    if partition.windows(2).any(|w| w[0] >= w[1]) || *partition.last().unwrap() > driver.n_steps() {
        return Err(Error::Index("partition must be strictly increasing grid indices".into()));
    }
    let times = driver.times();
    let t = *partition.last().unwrap();
    let mut total = ScaleVector::zeros(op.n_modes());
    for w in partition.windows(2) {
        let mut g = germ(integrand, driver, w[0], w[1]);
        op.semigroup_apply_in_place(times[t] - times[w[0]], &mut g)?;
        total.axpy(1.0, &g);
    }
    Ok(total)
}

/// Indices of the dyadic refinement of `[s, t]` at `depth`.
pub fn dyadic_partition(s: usize, t: usize, depth: u32) -> Result<Vec<usize>> {
    if s > t {
        return Err(Error::Index(format!("reversed interval ({s}, {t})")));
    }
    let pieces = 1usize
        .checked_shl(depth)
        .ok_or_else(|| Error::Resolution(format!("depth {depth} too large")))?;
    let span = t - s;
    if span == 0 {
        return Ok(vec![s]);
    }
    if span % pieces != 0 {
        return Err(Error::Resolution(format!(
            "interval of {span} grid steps cannot be split into 2^{depth} pieces"
        )));
    }
    let stride = span / pieces;
    Ok((0..=pieces).map(|m| s + m * stride).collect())
}

/// `∫_{t_0}^{t} S_{t-r} Y_r d𝐗_r` approximated on the dyadic partition of
/// depth `depth`.
pub fn rough_convolve(
    op: &SpectralOperator,
    integrand: &[ControlledPath],
    driver: &GridRoughPath,
    t_index: usize,
    depth: u32,
) -> Result<ScaleVector> {
    if t_index > driver.n_steps() {
        return Err(Error::Index(format!("time index {t_index} beyond grid")));
    }
    let partition = dyadic_partition(0, t_index, depth)?;
    compensated_sum(op, integrand, driver, &partition)
}

/// `|I_{s,t} - S_{t-s} Y_s X_{s,t} - S_{t-s} Y′_s 𝕏_{s,t}|_{γ-2α+β}` with
/// `I_{s,t}` the compensated sum over every grid step in `[s, t]`.
pub fn sewing_defect(
    op: &SpectralOperator,
    integrand: &[ControlledPath],
    driver: &GridRoughPath,
    s: usize,
    t: usize,
    beta: f64,
) -> Result<f64> {
    check_integrand(op, integrand, driver)?;
    let alpha = integrand[0].alpha();
    let gamma = integrand[0].gamma();
    if !(0.0..3.0 * alpha).contains(&beta) {
        return Err(Error::Domain(format!("beta = {beta} outside [0, 3α) with α = {alpha}")));
    }
    if s > t || t > driver.n_steps() {
        return Err(Error::Index(format!("invalid interval ({s}, {t})")));
    }
    if s == t {
        return Ok(0.0);
    }
    let partition: Vec<usize> = (s..=t).collect();
    let full = compensated_sum(op, integrand, driver, &partition)?;
    let one_step = compensated_sum(op, integrand, driver, &[s, t])?;
    op.norm_gamma(&full.sub(&one_step), gamma - 2.0 * alpha + beta)
}

/// `Σ_k S_{t-t_{k+1}} w(t_{k+1}-t_k) f(t_k)`: exact exponential weights
/// against a piecewise constant integrand.
pub fn drift_convolve(
    op: &SpectralOperator,
    times: &[f64],
    f: &[ScaleVector],
    t_index: usize,
) -> Result<ScaleVector> {
    if t_index >= times.len() || f.len() < t_index {
        return Err(Error::Index(format!("time index {t_index} outside the sampled range")));
    }
    let mut total = ScaleVector::zeros(op.n_modes());
    for k in 0..t_index {
        let w = op.drift_weight(times[k + 1] - times[k])?;
        let mut term = f[k].hadamard(w.as_slice());
        op.semigroup_apply_in_place(times[t_index] - times[k + 1], &mut term)?;
        total.axpy(1.0, &term);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drivers::{canonical_smooth_lift, SmoothPath};
    use crate::rough_path::uniform_grid;

    fn identity_lift(k: usize) -> GridRoughPath {
        let f = |t: f64| vec![t];
        let df = |_: f64| vec![1.0];
        canonical_smooth_lift(&SmoothPath { dim: 1, value: &f, derivative: Some(&df) }, &uniform_grid(1.0, k), 2)
            .unwrap()
    }

    #[test]
    fn smooth_oracle_first_mode() {
        let op = SpectralOperator::new(vec![1.0]).unwrap();
        let driver = identity_lift(4096);
        let cp = ControlledPath::constant(driver.times().to_vec(), ScaleVector::basis(1, 0), 1, 0.0, 0.45).unwrap();
        let v = rough_convolve(&op, &[cp], &driver, 4096, 12).unwrap();
        assert!((v.as_slice()[0] - 0.6321206).abs() < 1e-3);
    }

    #[test]
    fn identity_semigroup_reduces_to_riemann_integral() {
        let op = SpectralOperator::new_semidefinite(vec![0.0]).unwrap();
        let driver = identity_lift(64);
        let cp = ControlledPath::constant(driver.times().to_vec(), ScaleVector::new(vec![1.0]), 1, 0.0, 0.45).unwrap();
        for depth in 0..=6 {
            let v = rough_convolve(&op, std::slice::from_ref(&cp), &driver, 64, depth).unwrap();
            assert!((v.as_slice()[0] - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn resolution_and_shape_errors() {
        let op = SpectralOperator::new(vec![1.0]).unwrap();
        let driver = identity_lift(64);
        let cp = ControlledPath::constant(driver.times().to_vec(), ScaleVector::basis(1, 0), 1, 0.0, 0.45).unwrap();
        assert!(matches!(
            rough_convolve(&op, std::slice::from_ref(&cp), &driver, 64, 7),
            Err(Error::Resolution(_))
        ));
        assert!(matches!(
            rough_convolve(&op, &[cp.clone(), cp.clone()], &driver, 64, 2),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            sewing_defect(&op, std::slice::from_ref(&cp), &driver, 0, 8, 1.4),
            Err(Error::Domain(_))
        ));
        assert_eq!(sewing_defect(&op, &[cp], &driver, 5, 5, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn drift_convolve_oracles() {
        let op = SpectralOperator::new(vec![1.0]).unwrap();
        let times = uniform_grid(1.0, 64);
        let zero = vec![ScaleVector::zeros(1); 65];
        assert!(drift_convolve(&op, &times, &zero, 64).unwrap().is_zero());

        let one = vec![ScaleVector::basis(1, 0); 65];
        let v = drift_convolve(&op, &times, &one, 64).unwrap();
        assert!((v.as_slice()[0] - (1.0 - (-1.0f64).exp())).abs() < 1e-14);

        // f_s = s: ∫_0^1 e^{-(1-s)} s ds = e^{-1}, error O(mesh)
        let mut errs = Vec::new();
        for k in [64usize, 128, 256] {
            let times = uniform_grid(1.0, k);
            let f: Vec<ScaleVector> = times.iter().map(|t| ScaleVector::new(vec![*t])).collect();
            let v = drift_convolve(&op, &times, &f, k).unwrap();
            errs.push((v.as_slice()[0] - (-1.0f64).exp()).abs());
        }
        assert!(errs[0] < 1e-2);
        assert!(errs[1] < 0.55 * errs[0] && errs[2] < 0.55 * errs[1], "{errs:?}");
    }
}
