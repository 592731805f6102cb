//! Kalman recursions for the random-walk coefficient model
//!
//! ```text
//! y_s    = x_s' beta_s + offset_s + e_s,   e_s ~ N(0, r_s)
//! beta_s = beta_{s-1} + zeta_s,            zeta_s ~ N(0, Omega)
//! ```
//!
//! Conditional on the mixing variables, `offset_s = lambda * omega_s` and
//! `r_s = delta * sigma * omega_s`.

use log::warn;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;

use crate::distributions::{check_square, sample_mvn, symmetrize, QuantileConfig};
use crate::error::{Error, Result};

/// Gaussian moments of the coefficient vector at one filtering or smoothing stage.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussState {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussState {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::Dimension(format!(
                "state mean has length {}, covariance is {}x{}",
                mean.len(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        Ok(Self { mean, cov })
    }

    /// Zero mean with covariance `kappa * I`.
    pub fn diffuse(dim: usize, kappa: f64) -> Self {
        Self {
            mean: DVector::zeros(dim),
            cov: DMatrix::identity(dim, dim) * kappa,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// One predict/update cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanStepResult {
    pub predicted: GaussState,
    pub filtered: GaussState,
    /// Regressors used at this step.
    pub regressors: DVector<f64>,
    /// `P_{s|s-1} x / S`.
    pub gain: DVector<f64>,
    /// Prediction error `y - offset - x' beta_{s|s-1}`.
    pub innovation: f64,
    /// `1 / S`.
    pub innovation_precision: f64,
    pub predictive_mean: f64,
    /// `S = r + x' P_{s|s-1} x`.
    pub predictive_variance: f64,
}

/// Observation noise of the conditionally Gaussian measurement equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationNoise {
    pub offset: f64,
    pub variance: f64,
}

impl ObservationNoise {
    /// Noise implied by the mixing variable `omega` and scale `sigma`.
    pub fn from_mixture(omega: f64, sigma: f64, qc: &QuantileConfig) -> Self {
        Self {
            offset: qc.lambda() * omega,
            variance: qc.delta() * sigma * omega,
        }
    }
}

pub fn kf_predict(prev_filtered: &GaussState, omega_cov: &DMatrix<f64>) -> Result<GaussState> {
    check_square(omega_cov, "state noise covariance")?;
    if omega_cov.nrows() != prev_filtered.dim() {
        return Err(Error::Dimension(format!(
            "state dimension {} vs state noise {}x{}",
            prev_filtered.dim(),
            omega_cov.nrows(),
            omega_cov.ncols()
        )));
    }
    let mut cov = &prev_filtered.cov + omega_cov;
    symmetrize(&mut cov);
    Ok(GaussState {
        mean: prev_filtered.mean.clone(),
        cov,
    })
}

/// Measurement update with generic Gaussian noise.
pub fn kf_update_with_noise(
    pred: &GaussState,
    x: &DVector<f64>,
    y: f64,
    noise: ObservationNoise,
) -> Result<KalmanStepResult> {
    if x.len() != pred.dim() {
        return Err(Error::Dimension(format!(
            "regressor length {} vs state dimension {}",
            x.len(),
            pred.dim()
        )));
    }
    let px = &pred.cov * x;
    let s = noise.variance + x.dot(&px);
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::Numerical(format!("innovation variance {s} is not positive")));
    }
    let predictive_mean = noise.offset + x.dot(&pred.mean);
    let innovation = y - predictive_mean;
    let gain = &px / s;
    let mean = &pred.mean + &gain * innovation;
    // Joseph form keeps the covariance positive semidefinite under rounding.
    let m = pred.dim();
    let a = DMatrix::identity(m, m) - &gain * x.transpose();
    let mut cov = &a * &pred.cov * a.transpose() + &gain * gain.transpose() * noise.variance;
    symmetrize(&mut cov);
    Ok(KalmanStepResult {
        predicted: pred.clone(),
        filtered: GaussState { mean, cov },
        regressors: x.clone(),
        gain,
        innovation,
        innovation_precision: 1.0 / s,
        predictive_mean,
        predictive_variance: s,
    })
}

pub fn kf_update(
    pred: &GaussState,
    x: &DVector<f64>,
    y: f64,
    omega: f64,
    sigma: f64,
    qc: &QuantileConfig,
) -> Result<KalmanStepResult> {
    if !(omega > 0.0) || !(sigma > 0.0) {
        return Err(Error::Domain(format!(
            "mixing variable {omega} and scale {sigma} must be positive"
        )));
    }
    kf_update_with_noise(pred, x, y, ObservationNoise::from_mixture(omega, sigma, qc))
}

/// Runs the filter from `init` (the state at time 0) over `(x_s, y_s, noise_s)`.
pub fn filter_path<'a, I>(init: &GaussState, omega_cov: &DMatrix<f64>, obs: I) -> Result<Vec<KalmanStepResult>>
where
    I: IntoIterator<Item = (&'a DVector<f64>, f64, ObservationNoise)>,
{
    let mut out: Vec<KalmanStepResult> = Vec::new();
    let mut prev = init.clone();
    for (x, y, noise) in obs {
        let pred = kf_predict(&prev, omega_cov)?;
        let step = kf_update_with_noise(&pred, x, y, noise)?;
        prev = step.filtered.clone();
        out.push(step);
    }
    Ok(out)
}

/// Cholesky of a one-step predicted covariance, retrying once with `1e-10 I` jitter.
fn factor_predicted(p: &DMatrix<f64>, s: usize) -> Result<Cholesky<f64, Dyn>> {
    if let Some(ch) = Cholesky::new(p.clone()) {
        return Ok(ch);
    }
    let n = p.nrows();
    warn!("event=smoother_jitter index={s} jitter=1e-10");
    Cholesky::new(p + DMatrix::identity(n, n) * 1e-10).ok_or_else(|| {
        Error::Numerical(format!(
            "predicted covariance at index {s} is singular even after jitter"
        ))
    })
}

/// Fixed-interval (Rauch-Tung-Striebel) smoother over a stored filter pass.
///
/// The gain `P_{s|s} P_{s+1|s}^-1` is formed with a linear solve.
pub fn smooth_fixed_interval(filter_path: &[KalmanStepResult]) -> Result<Vec<GaussState>> {
    let t = filter_path.len();
    if t == 0 {
        return Err(Error::Domain("cannot smooth an empty filter path".into()));
    }
    let mut out = vec![filter_path[t - 1].filtered.clone(); t];
    for s in (0..t - 1).rev() {
        let filt = &filter_path[s].filtered;
        let next_pred = &filter_path[s + 1].predicted;
        let ch = factor_predicted(&next_pred.cov, s + 1)?;
        // G' = P_{s+1|s}^-1 P_{s|s}
        let gain = ch.solve(&filt.cov).transpose();
        let mean = &filt.mean + &gain * (&out[s + 1].mean - &next_pred.mean);
        let mut cov = &filt.cov + &gain * (&out[s + 1].cov - &next_pred.cov) * gain.transpose();
        symmetrize(&mut cov);
        out[s] = GaussState { mean, cov };
    }
    Ok(out)
}

/// Forward-filter backward-sample: one joint draw of the state path from its
/// Gaussian full conditional given the filter pass.
pub fn draw_state_path<R: Rng + ?Sized>(
    filter_path: &[KalmanStepResult],
    omega_cov: &DMatrix<f64>,
    rng: &mut R,
) -> Result<Vec<DVector<f64>>> {
    let t = filter_path.len();
    if t == 0 {
        return Err(Error::Domain("cannot sample from an empty filter path".into()));
    }
    let last = &filter_path[t - 1].filtered;
    let mut draws = vec![DVector::zeros(last.dim()); t];
    draws[t - 1] = sample_mvn(&last.mean, &last.cov, rng)?;
    for s in (0..t - 1).rev() {
        let filt = &filter_path[s].filtered;
        let next_pred = &filter_path[s + 1].predicted;
        let ch = factor_predicted(&next_pred.cov, s + 1)?;
        // P_{s+1|s}^-1 P_{s|s}
        let solved = ch.solve(&filt.cov);
        let mean = &filt.mean + solved.transpose() * (&draws[s + 1] - &next_pred.mean);
        // P_{s|s} - P_{s|s} P_{s+1|s}^-1 P_{s|s} = Omega P_{s+1|s}^-1 P_{s|s}
        let mut cov = omega_cov * &solved;
        symmetrize(&mut cov);
        draws[s] = sample_mvn(&mean, &cov, rng)?;
    }
    Ok(draws)
}

/// Moments of the state `h` steps before the end of the pass, conditional on
/// all observations in the pass.
///
/// Augmented-state recursion: starting from `C = P_{k|k-1}` at the target
/// index `k`, every later observation updates the lagged moments through the
/// cross-covariance `C`, which then propagates as `C (I - x K')`.
pub fn smooth_fixed_lag(filter_path: &[KalmanStepResult], h: usize) -> Result<GaussState> {
    let t = filter_path.len();
    if t == 0 || h >= t {
        return Err(Error::Domain(format!(
            "lag {h} out of range for a path of length {t}"
        )));
    }
    let k = t - 1 - h;
    let start = &filter_path[k].predicted;
    let mut mean = start.mean.clone();
    let mut cov = start.cov.clone();
    let mut cross = start.cov.clone();
    for step in &filter_path[k..] {
        let cx = &cross * &step.regressors;
        mean += &cx * (step.innovation * step.innovation_precision);
        cov -= &cx * cx.transpose() * step.innovation_precision;
        cross -= &cx * step.gain.transpose();
    }
    symmetrize(&mut cov);
    Ok(GaussState { mean, cov })
}
