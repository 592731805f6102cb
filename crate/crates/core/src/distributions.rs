//! Densities and samplers needed by the Gibbs kernels.
//!
//! The asymmetric Laplace law is written as a Gaussian location-scale mixture:
//! if `omega ~ Exp(rate = 1/sigma)` and `xi | omega ~ N(lambda * omega, delta * sigma * omega)`
//! then `xi` has an asymmetric Laplace density with scale `sigma` and zero
//! `tau`-quantile. The closed form is evaluated here; the mixture integral is
//! only ever used as a test oracle.
//!
//! Inverse-Wishart draws use the parameterization
//! `p(Omega) ∝ |Omega|^-(c + (m+1)/2) exp(-tr(C Omega^-1))`, which corresponds to a
//! conventional `IW(nu = 2c, Psi = 2C)` with density
//! `|Omega|^-(nu+m+1)/2 exp(-tr(Psi Omega^-1)/2)`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, StandardNormal};

use crate::error::{Error, Result};

/// Quantile level together with the mixture constants it implies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileConfig {
    tau: f64,
    lambda: f64,
    delta: f64,
}

impl QuantileConfig {
    pub fn new(tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::Domain(format!("quantile level {tau} not in (0, 1)")));
        }
        let spread = tau * (1.0 - tau);
        Ok(Self {
            tau,
            lambda: (1.0 - 2.0 * tau) / spread,
            delta: 2.0 / spread,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Mixture location coefficient, `(1 - 2 tau) / (tau (1 - tau))`.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Mixture scale coefficient, `2 / (tau (1 - tau))`.
    pub fn delta(&self) -> f64 {
        self.delta
    }
}

/// Convenience wrapper for [`QuantileConfig::new`].
pub fn make_quantile_config(tau: f64) -> Result<QuantileConfig> {
    QuantileConfig::new(tau)
}

/// Asymmetric Laplace law with zero-quantile at `location`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AldParams {
    pub tau: f64,
    pub location: f64,
    pub scale: f64,
}

impl AldParams {
    pub fn new(tau: f64, location: f64, scale: f64) -> Result<Self> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::Domain(format!("quantile level {tau} not in (0, 1)")));
        }
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::Domain(format!("scale {scale} must be positive")));
        }
        Ok(Self {
            tau,
            location,
            scale,
        })
    }
}

/// Check (pinball) loss `rho_tau(u) = u (tau - 1{u < 0})`.
#[inline]
pub fn pinball_loss(residual: f64, tau: f64) -> f64 {
    if residual < 0.0 {
        residual * (tau - 1.0)
    } else {
        residual * tau
    }
}

pub fn ald_pdf(x: f64, params: &AldParams) -> f64 {
    let tau = params.tau;
    tau * (1.0 - tau) / params.scale * (-pinball_loss(x - params.location, tau) / params.scale).exp()
}

pub fn ald_cdf(x: f64, params: &AldParams) -> f64 {
    let tau = params.tau;
    let z = (x - params.location) / params.scale;
    if z <= 0.0 {
        tau * ((1.0 - tau) * z).exp()
    } else {
        1.0 - (1.0 - tau) * (-tau * z).exp()
    }
}

/// Probability mass below the location; equals `tau` by construction.
pub fn ald_cdf_at_location(params: &AldParams) -> f64 {
    ald_cdf(params.location, params)
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} = {v} must be positive and finite")))
    }
}

pub fn sample_exponential<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> Result<f64> {
    positive("rate", rate)?;
    let exp = Exp::new(rate).map_err(|e| Error::Domain(e.to_string()))?;
    Ok(exp.sample(rng))
}

pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> Result<f64> {
    positive("shape", shape)?;
    positive("scale", scale)?;
    let g = Gamma::new(shape, scale).map_err(|e| Error::Domain(e.to_string()))?;
    Ok(g.sample(rng))
}

/// Draw from `IG(a, b)` with density `∝ x^-(a+1) exp(-b/x)`.
pub fn sample_inverse_gamma<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> Result<f64> {
    positive("a", a)?;
    positive("b", b)?;
    let g = sample_gamma(a, 1.0, rng)?;
    Ok(b / g)
}

/// Unnormalized inverse-gamma log density.
pub fn inverse_gamma_log_kernel(x: f64, a: f64, b: f64) -> f64 {
    -(a + 1.0) * x.ln() - b / x
}

/// Inverse-Gaussian draw with mean `mean` and shape `shape`.
///
/// Transformation with one rejection step (Michael, Schucany and Haas), with the
/// small root of the quadratic rearranged so it stays accurate when
/// `mean * chi2 / shape` is large.
pub fn sample_inverse_gaussian<R: Rng + ?Sized>(mean: f64, shape: f64, rng: &mut R) -> Result<f64> {
    positive("mean", mean)?;
    positive("shape", shape)?;
    let n: f64 = StandardNormal.sample(rng);
    let q = mean * n * n / (2.0 * shape);
    let root = mean / (1.0 + q + (q * q + 2.0 * q).sqrt());
    let u: f64 = rng.random();
    if u * (mean + root) <= mean {
        Ok(root)
    } else {
        Ok(mean * (mean / root))
    }
}

pub(crate) fn check_square(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "{what} is {}x{}, expected square",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

pub(crate) fn check_symmetric(m: &DMatrix<f64>, what: &str) -> Result<()> {
    check_square(m, what)?;
    let scale = m.amax().max(1.0);
    for i in 0..m.nrows() {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-10 * scale {
                return Err(Error::Domain(format!("{what} is not symmetric")));
            }
        }
    }
    Ok(())
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub(crate) fn cholesky_pd(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    check_symmetric(m, what)?;
    Cholesky::new(m.clone())
        .ok_or_else(|| Error::Domain(format!("{what} is not positive definite")))
}

/// Draw from the inverse-Wishart with density
/// `∝ |Omega|^-(c + (m+1)/2) exp(-tr(C Omega^-1))`.
///
/// Requires `2c > m - 1` for the Bartlett factor to exist.
pub fn sample_inverse_wishart<R: Rng + ?Sized>(
    c: f64,
    scale: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let m = scale.nrows();
    let dof = 2.0 * c;
    if !(dof > m as f64 - 1.0) {
        return Err(Error::Domain(format!(
            "inverse-Wishart shape {c} too small for dimension {m}"
        )));
    }
    // Psi = 2C = G G'; Omega = G Z^-1 G' with Z ~ Wishart(dof, I) = A A'.
    let psi = scale * 2.0;
    let g = cholesky_pd(&psi, "inverse-Wishart scale")?.unpack();
    let mut a = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        let chi2 = sample_gamma((dof - i as f64) / 2.0, 2.0, rng)?;
        a[(i, i)] = chi2.sqrt();
        for j in 0..i {
            a[(i, j)] = StandardNormal.sample(rng);
        }
    }
    let a_inv = a
        .solve_lower_triangular(&DMatrix::identity(m, m))
        .ok_or_else(|| Error::Numerical("singular Bartlett factor".into()))?;
    let factor = &g * a_inv.transpose();
    let mut out = &factor * factor.transpose();
    symmetrize(&mut out);
    Ok(out)
}

/// Mean of the inverse-Wishart above, `C / (c - (m+1)/2)`, defined for `c > (m+1)/2`.
pub fn inverse_wishart_mean(c: f64, scale: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let m = scale.nrows() as f64;
    let denom = c - (m + 1.0) / 2.0;
    (denom > 0.0).then(|| scale / denom)
}

/// Square-root factor `F` with `F F' = cov`, clipping tiny negative eigenvalues.
pub(crate) fn psd_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_symmetric(cov, "covariance")?;
    if let Some(ch) = Cholesky::new(cov.clone()) {
        return Ok(ch.unpack());
    }
    let eig = cov.clone().symmetric_eigen();
    let tol = 1e-10 * eig.eigenvalues.amax().max(1.0);
    let mut factor = eig.eigenvectors.clone();
    for (j, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam < -tol {
            return Err(Error::Domain(format!(
                "covariance has negative eigenvalue {lam:e}"
            )));
        }
        let s = lam.max(0.0).sqrt();
        factor.column_mut(j).scale_mut(s);
    }
    Ok(factor)
}

pub fn sample_mvn<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if cov.nrows() != mean.len() {
        return Err(Error::Dimension(format!(
            "mean has length {}, covariance is {}x{}",
            mean.len(),
            cov.nrows(),
            cov.ncols()
        )));
    }
    let factor = psd_factor(cov)?;
    let z = DVector::from_fn(mean.len(), |_, _| StandardNormal.sample(rng));
    Ok(mean + factor * z)
}
