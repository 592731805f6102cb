//! Synthetic benchmarks with known quantile-coefficient paths.
//!
//! Both generators use `y_t = x_t' beta*_t + eps_t`, `eps_t ~ N(0, nu_t^2)`,
//! `x_t = (1, x_{1,t}, x_{2,t})` with `x_{i,t} ~ U(-T/2, T/2)`. The `tau`-quantile
//! coefficients shift the intercept by `nu_t * Phi^-1(tau)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::SeriesData;
use crate::error::{Error, Result};
use crate::rng::{stream, StreamId};

/// Simulated series together with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct DgpOutput {
    pub y: Vec<f64>,
    /// `T x 3` design, first column ones.
    pub x: DMatrix<f64>,
    /// `T x 3` mean-regression coefficients.
    pub beta_star: DMatrix<f64>,
    /// Noise variances `nu_t^2`.
    pub nu2: Vec<f64>,
}

impl DgpOutput {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn to_series(&self) -> Result<SeriesData> {
        let rows: Vec<DVector<f64>> = self.x.row_iter().map(|r| r.transpose()).collect();
        SeriesData::new(
            self.y.clone(),
            rows,
            vec!["intercept".into(), "x1".into(), "x2".into()],
        )
    }
}

const DGP_STREAM: StreamId = StreamId {
    tau_index: u16::MAX,
    model: 0,
    chain: 0,
};

fn check_len(t: usize) -> Result<()> {
    if t < 2 {
        return Err(Error::Domain(format!("series length {t} must be at least 2")));
    }
    Ok(())
}

fn draw_design<R: Rng>(t: usize, rng: &mut R) -> DMatrix<f64> {
    let half = t as f64 / 2.0;
    let u = Uniform::new(-half, half).expect("valid bounds");
    DMatrix::from_fn(t, 3, |_, j| if j == 0 { 1.0 } else { u.sample(rng) })
}

fn assemble(x: DMatrix<f64>, beta_star: DMatrix<f64>, nu2: Vec<f64>, eps: Vec<f64>) -> DgpOutput {
    let y = (0..x.nrows())
        .map(|t| x.row(t).dot(&beta_star.row(t)) + eps[t])
        .collect();
    DgpOutput {
        y,
        x,
        beta_star,
        nu2,
    }
}

/// Slope kink at `t = 100`, logistic transition in the third coefficient,
/// noise variance dropping from 1 to 0.25 after `t = 100`.
pub fn simulate_smooth(t_len: usize, seed: u64) -> Result<DgpOutput> {
    check_len(t_len)?;
    let mut rng = stream(seed, DGP_STREAM);
    let x = draw_design(t_len, &mut rng);
    let (a, b, c) = (0.2, 2.0, 5.0);
    let tf = t_len as f64;
    let mut beta_star = DMatrix::zeros(t_len, 3);
    let mut nu2: Vec<f64> = Vec::with_capacity(t_len);
    for i in 0..t_len {
        let t = (i + 1) as f64;
        beta_star[(i, 0)] = 2.0;
        beta_star[(i, 1)] = if t <= 100.0 { 0.6 - 0.4 * t / 100.0 } else { -0.2 + 0.4 * t / 100.0 };
        beta_star[(i, 2)] = a + b / (1.0 + (c * (2.0 * t - tf - 2.0) / tf).exp());
        nu2.push(if t <= 100.0 { 1.0 } else { 0.25 });
    }
    let eps = nu2
        .iter()
        .map(|v: &f64| {
            let z: f64 = StandardNormal.sample(&mut rng);
            v.sqrt() * z
        })
        .collect::<Vec<f64>>();
    Ok(assemble(x, beta_star, nu2, eps))
}

/// GARCH(1,1) coefficients `(a, b, c)` of the abrupt-change example.
pub const GARCH_PARAMS: (f64, f64, f64) = (0.05, 0.9, 0.05);

/// Intercept jump from -2 to 2 and slope change from 1.6 to 0.8 after
/// `t = 100`, with GARCH(1,1) noise started at its unconditional variance.
pub fn simulate_abrupt(t_len: usize, seed: u64) -> Result<DgpOutput> {
    check_len(t_len)?;
    let mut rng = stream(seed, DGP_STREAM);
    let x = draw_design(t_len, &mut rng);
    let (a, b, c) = GARCH_PARAMS;
    let mut beta_star = DMatrix::zeros(t_len, 3);
    let mut nu2 = Vec::with_capacity(t_len);
    let mut eps = Vec::with_capacity(t_len);
    for i in 0..t_len {
        let t = i + 1;
        beta_star[(i, 0)] = if t <= 100 { -2.0 } else { 2.0 };
        beta_star[(i, 1)] = if t <= 100 { 1.6 } else { 0.8 };
        beta_star[(i, 2)] = 2.0;
        let v = if i == 0 {
            a / (1.0 - b - c)
        } else {
            a + b * nu2[i - 1] + c * eps[i - 1] * eps[i - 1]
        };
        let z: f64 = StandardNormal.sample(&mut rng);
        nu2.push(v);
        eps.push(v.sqrt() * z);
    }
    Ok(assemble(x, beta_star, nu2, eps))
}

/// Standard normal quantile function.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Coefficients of the conditional `tau`-quantile: intercept shifted by
/// `nu_t * Phi^-1(tau)`, slopes unchanged.
pub fn true_quantile_path(out: &DgpOutput, tau: f64) -> Result<DMatrix<f64>> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Domain(format!("quantile level {tau} not in (0, 1)")));
    }
    let z = normal_quantile(tau);
    let mut path = out.beta_star.clone();
    for (i, v) in out.nu2.iter().enumerate() {
        path[(i, 0)] += v.sqrt() * z;
    }
    Ok(path)
}
