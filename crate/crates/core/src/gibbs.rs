//! Full-conditional draws of the partially collapsed Gibbs sampler and the
//! jumping kernel that extends a chain by one observation.
//!
//! One transition sweep updates, in this order,
//! 1. the ALD scale `sigma` with the mixing variables integrated out,
//! 2. every mixing variable `omega_s` (through `1/omega_s`, inverse Gaussian),
//! 3. the coefficient path `beta_{1:t}` jointly by forward filtering and backward sampling,
//! 4. the random-walk covariance `Omega` (inverse Wishart).
//!
//! Steps 1 and 2 together draw `(sigma, omega) | beta`, so the order matters.

use log::debug;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::data::SeriesData;
use crate::distributions::{
    cholesky_pd, pinball_loss, sample_exponential, sample_inverse_gamma, sample_inverse_gaussian,
    sample_inverse_wishart, sample_mvn, QuantileConfig,
};
use crate::error::{Error, Result};
use crate::ssm::{
    draw_state_path, filter_path, kf_predict, kf_update, GaussState, KalmanStepResult,
    ObservationNoise,
};

/// Residuals smaller than this are floored before forming the inverse-Gaussian mean.
pub const RESIDUAL_FLOOR: f64 = 1e-12;

/// Prior hyperparameters.
///
/// `sigma ~ IG(sigma_shape, sigma_rate)`,
/// `Omega ~ IW(omega_shape, omega_scale)` with density
/// `∝ |Omega|^-(omega_shape + (m+1)/2) exp(-tr(omega_scale Omega^-1))`,
/// and the initial state is `N(0, kappa I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorHyper {
    pub sigma_shape: f64,
    pub sigma_rate: f64,
    pub omega_shape: f64,
    pub omega_scale: DMatrix<f64>,
    pub kappa: f64,
}

impl PriorHyper {
    /// Defaults for an `m`-coefficient model: `a0 = 2.5`, `b0 = 1`, `c0 = m + 2`,
    /// `C0 = 0.01 I`, `kappa = 1e6`.
    pub fn default_for(m: usize) -> Self {
        Self {
            sigma_shape: 2.5,
            sigma_rate: 1.0,
            omega_shape: m as f64 + 2.0,
            omega_scale: DMatrix::identity(m, m) * 0.01,
            kappa: 1e6,
        }
    }

    pub fn dim(&self) -> usize {
        self.omega_scale.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("a0", self.sigma_shape),
            ("b0", self.sigma_rate),
            ("c0", self.omega_shape),
            ("kappa", self.kappa),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} = {v} must be positive")));
            }
        }
        cholesky_pd(&self.omega_scale, "C0").map_err(|e| Error::Config(e.to_string()))?;
        if 2.0 * self.omega_shape <= self.dim() as f64 - 1.0 {
            return Err(Error::Config(format!(
                "c0 = {} gives an improper inverse-Wishart in dimension {}",
                self.omega_shape,
                self.dim()
            )));
        }
        Ok(())
    }

    pub fn initial_state(&self) -> GaussState {
        GaussState::diffuse(self.dim(), self.kappa)
    }
}

/// How the coefficient block is refreshed inside a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SweepMode {
    /// Joint draw of the whole path `beta_{1:t}`.
    #[default]
    FullInterval,
    /// Joint draw of the last `h + 1` states given the state just before them.
    FixedLag(usize),
}

impl SweepMode {
    fn window_start(self, t: usize) -> usize {
        match self {
            SweepMode::FullInterval => 0,
            SweepMode::FixedLag(h) => t.saturating_sub(h + 1),
        }
    }
}

/// One chain's augmented parameter `(sigma, Omega, omega_{1:t}, beta_{1:t})`
/// plus the Kalman pass under the current values.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub sigma: f64,
    pub omega_cov: DMatrix<f64>,
    pub omegas: Vec<f64>,
    pub betas: Vec<DVector<f64>>,
    pub filter_cache: Vec<KalmanStepResult>,
    filter_stale: bool,
}

impl ChainState {
    /// Empty chain at `t = 0` with `sigma` and `Omega` drawn from the prior.
    pub fn from_prior<R: Rng + ?Sized>(hyper: &PriorHyper, rng: &mut R) -> Result<Self> {
        let sigma = sample_inverse_gamma(hyper.sigma_shape, hyper.sigma_rate, rng)?;
        let omega_cov = sample_inverse_wishart(hyper.omega_shape, &hyper.omega_scale, rng)?;
        Ok(Self::new(sigma, omega_cov))
    }

    /// Empty chain with given static parameters.
    pub fn new(sigma: f64, omega_cov: DMatrix<f64>) -> Self {
        Self {
            sigma,
            omega_cov,
            omegas: Vec::new(),
            betas: Vec::new(),
            filter_cache: Vec::new(),
            filter_stale: false,
        }
    }

    /// Chain with a given latent path; the filter cache is computed on demand.
    pub fn with_path(
        sigma: f64,
        omega_cov: DMatrix<f64>,
        omegas: Vec<f64>,
        betas: Vec<DVector<f64>>,
    ) -> Result<Self> {
        if omegas.len() != betas.len() {
            return Err(Error::Dimension(format!(
                "{} mixing variables vs {} states",
                omegas.len(),
                betas.len()
            )));
        }
        Ok(Self {
            sigma,
            omega_cov,
            omegas,
            betas,
            filter_cache: Vec::new(),
            filter_stale: true,
        })
    }

    pub fn t(&self) -> usize {
        self.omegas.len()
    }

    pub fn dim(&self) -> usize {
        self.omega_cov.nrows()
    }

    pub fn is_filter_stale(&self) -> bool {
        self.filter_stale
    }

    /// Filtered moments at the current time (the diffuse prior at `t = 0`).
    pub fn last_filtered(&self, hyper: &PriorHyper) -> GaussState {
        self.filter_cache
            .last()
            .map(|s| s.filtered.clone())
            .unwrap_or_else(|| hyper.initial_state())
    }

    fn window_init(&self, start: usize, hyper: &PriorHyper) -> GaussState {
        if start == 0 {
            hyper.initial_state()
        } else {
            let m = self.dim();
            GaussState {
                mean: self.betas[start - 1].clone(),
                cov: DMatrix::zeros(m, m),
            }
        }
    }

    fn run_filter(
        &self,
        data: &SeriesData,
        qc: &QuantileConfig,
        hyper: &PriorHyper,
        start: usize,
    ) -> Result<Vec<KalmanStepResult>> {
        let t = self.t();
        let init = self.window_init(start, hyper);
        let sigma = self.sigma;
        filter_path(
            &init,
            &self.omega_cov,
            (start..t).map(|s| {
                (
                    &data.x[s],
                    data.y[s],
                    ObservationNoise::from_mixture(self.omegas[s], sigma, qc),
                )
            }),
        )
    }

    /// Recomputes the Kalman pass under the current `(sigma, Omega, omega)`.
    ///
    /// In fixed-lag mode only the window is recomputed, conditional on the
    /// state just before it.
    pub fn refresh_filter(
        &mut self,
        data: &SeriesData,
        qc: &QuantileConfig,
        hyper: &PriorHyper,
        mode: SweepMode,
    ) -> Result<()> {
        let start = mode.window_start(self.t()).min(self.filter_cache.len());
        let window = self.run_filter(data, qc, hyper, start)?;
        self.filter_cache.truncate(start);
        self.filter_cache.extend(window);
        self.filter_stale = false;
        Ok(())
    }

    /// Checks the length and positivity invariants.
    pub fn check(&self) -> Result<()> {
        let t = self.t();
        if self.betas.len() != t || (!self.filter_stale && self.filter_cache.len() != t) {
            return Err(Error::Dimension("chain path lengths disagree".into()));
        }
        if !(self.sigma > 0.0) || self.omegas.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::Domain("chain holds a nonpositive scale".into()));
        }
        Ok(())
    }
}

/// Shape and rate of the inverse-gamma conditional of `sigma` given the path.
pub fn sigma_conditional(
    betas: &[DVector<f64>],
    data: &SeriesData,
    qc: &QuantileConfig,
    hyper: &PriorHyper,
) -> (f64, f64) {
    let t = betas.len();
    let loss: f64 = betas
        .iter()
        .enumerate()
        .map(|(s, b)| pinball_loss(data.y[s] - data.x[s].dot(b), qc.tau()))
        .sum();
    (hyper.sigma_shape + t as f64, hyper.sigma_rate + loss)
}

pub fn draw_sigma_collapsed<R: Rng + ?Sized>(
    chain: &ChainState,
    data: &SeriesData,
    qc: &QuantileConfig,
    hyper: &PriorHyper,
    rng: &mut R,
) -> Result<f64> {
    let (a, b) = sigma_conditional(&chain.betas, data, qc, hyper);
    sample_inverse_gamma(a, b, rng)
}

/// Mean and shape of the inverse-Gaussian conditional of `1/omega`.
///
/// Completing the square in `omega^-1/2 exp{-(r - lambda omega)^2 / (2 delta sigma omega) - omega/sigma}`
/// gives mean `sqrt((lambda^2 + 2 delta) / r^2)` and shape `(lambda^2 + 2 delta) / (delta sigma)`.
pub fn omega_inverse_conditional(residual: f64, sigma: f64, qc: &QuantileConfig) -> (f64, f64) {
    let r = if residual.abs() < RESIDUAL_FLOOR {
        debug!("event=residual_floor residual={residual:e}");
        RESIDUAL_FLOOR
    } else {
        residual.abs()
    };
    let num = qc.lambda() * qc.lambda() + 2.0 * qc.delta();
    (num.sqrt() / r, num / (qc.delta() * sigma))
}

pub fn draw_omega<R: Rng + ?Sized>(
    residual: f64,
    sigma: f64,
    qc: &QuantileConfig,
    rng: &mut R,
) -> Result<f64> {
    let (mean, shape) = omega_inverse_conditional(residual, sigma, qc);
    Ok(1.0 / sample_inverse_gaussian(mean, shape, rng)?)
}

pub fn draw_omegas<R: Rng + ?Sized>(
    chain: &ChainState,
    data: &SeriesData,
    qc: &QuantileConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    chain
        .betas
        .iter()
        .enumerate()
        .map(|(s, b)| draw_omega(data.y[s] - data.x[s].dot(b), chain.sigma, qc, rng))
        .collect()
}

/// Joint draw of a block of coefficient states together with its filter pass.
#[derive(Debug, Clone)]
pub struct BetaDraw {
    /// First time index (0-based) covered by the draw.
    pub start: usize,
    pub betas: Vec<DVector<f64>>,
    pub filter: Vec<KalmanStepResult>,
}

pub fn draw_beta_path<R: Rng + ?Sized>(
    chain: &ChainState,
    data: &SeriesData,
    qc: &QuantileConfig,
    hyper: &PriorHyper,
    mode: SweepMode,
    rng: &mut R,
) -> Result<BetaDraw> {
    let start = mode.window_start(chain.t());
    let filter = chain.run_filter(data, qc, hyper, start)?;
    let betas = draw_state_path(&filter, &chain.omega_cov, rng)?;
    Ok(BetaDraw {
        start,
        betas,
        filter,
    })
}

/// Shape and scale of the inverse-Wishart conditional of `Omega`.
pub fn omega_cov_conditional(betas: &[DVector<f64>], hyper: &PriorHyper) -> (f64, DMatrix<f64>) {
    let t = betas.len();
    let mut scale = hyper.omega_scale.clone();
    for w in betas.windows(2) {
        let d = &w[1] - &w[0];
        scale += &d * d.transpose() * 0.5;
    }
    (hyper.omega_shape + t.saturating_sub(1) as f64 / 2.0, scale)
}

/// Draws `Omega`; with fewer than two states this is a prior draw.
pub fn draw_omega_cov<R: Rng + ?Sized>(
    chain: &ChainState,
    hyper: &PriorHyper,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let (c, scale) = omega_cov_conditional(&chain.betas, hyper);
    sample_inverse_wishart(c, &scale, rng)
}

/// One partially collapsed Gibbs sweep in the order sigma, omega, beta, Omega.
///
/// Leaves the filter cache stale; call [`ChainState::refresh_filter`] before
/// the next jump.
pub fn transition_sweep<R: Rng + ?Sized>(
    chain: &mut ChainState,
    data: &SeriesData,
    qc: &QuantileConfig,
    hyper: &PriorHyper,
    mode: SweepMode,
    rng: &mut R,
) -> Result<()> {
    if chain.t() == 0 {
        return Ok(());
    }
    chain.sigma = draw_sigma_collapsed(chain, data, qc, hyper, rng)?;
    chain.omegas = draw_omegas(chain, data, qc, rng)?;
    let draw = draw_beta_path(chain, data, qc, hyper, mode, rng)?;
    chain.betas.truncate(draw.start);
    chain.betas.extend(draw.betas);
    chain.omega_cov = draw_omega_cov(chain, hyper, rng)?;
    chain.filter_stale = true;
    Ok(())
}

/// Extends the chain by one observation `(y, x)`.
///
/// `omega_{t+1}` is drawn from its inverse-Gaussian conditional with the
/// residual evaluated at the chain's current state `beta_t` (the prior mean of
/// `beta_{t+1}`); at `t = 0` it comes from `Exp(1/sigma)`. Then
/// `beta_{t+1} ~ N(beta_{t+1|t+1}, P_{t+1|t+1})` from one filter step.
pub fn jump_extend<R: Rng + ?Sized>(
    chain: &mut ChainState,
    y: f64,
    x: &DVector<f64>,
    qc: &QuantileConfig,
    hyper: &PriorHyper,
    rng: &mut R,
) -> Result<()> {
    if chain.filter_stale {
        return Err(Error::Numerical(
            "filter cache is stale; refresh it before jumping".into(),
        ));
    }
    let omega = match chain.betas.last() {
        None => sample_exponential(1.0 / chain.sigma, rng)?,
        Some(beta) => draw_omega(y - x.dot(beta), chain.sigma, qc, rng)?,
    };
    jump_extend_with_omega(chain, y, x, omega, qc, hyper, rng)
}

/// Jump with a given mixing variable for the new observation.
pub fn jump_extend_with_omega<R: Rng + ?Sized>(
    chain: &mut ChainState,
    y: f64,
    x: &DVector<f64>,
    omega: f64,
    qc: &QuantileConfig,
    hyper: &PriorHyper,
    rng: &mut R,
) -> Result<()> {
    let prev = chain.last_filtered(hyper);
    let pred = kf_predict(&prev, &chain.omega_cov)?;
    let step = kf_update(&pred, x, y, omega, chain.sigma, qc)?;
    let beta = sample_mvn(&step.filtered.mean, &step.filtered.cov, rng)?;
    chain.omegas.push(omega);
    chain.betas.push(beta);
    chain.filter_cache.push(step);
    Ok(())
}
