//! Model space and forgetting-factor model probabilities.
//!
//! Every model keeps the intercept and some subset of the `M - 1` candidate
//! regressors, giving `K = 2^(M-1)` models. Probabilities are tracked per model
//! and per chain; the marginal over chains is their row mean.

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::distributions::QuantileConfig;
use crate::error::{Error, Result};
use crate::gibbs::{ChainState, PriorHyper};
use crate::smcmc::ChainPopulation;

/// Largest number of design columns (intercept included) enumerated by default.
pub const DEFAULT_MAX_COLUMNS: usize = 16;

/// A subset of the candidate regressors. Bit `j` selects design column `j + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModelSpec {
    mask: u32,
    n_candidates: usize,
}

impl ModelSpec {
    pub fn new(mask: u32, n_candidates: usize) -> Result<Self> {
        if n_candidates > 31 || (mask >> n_candidates) != 0 {
            return Err(Error::Config(format!(
                "mask {mask:#b} does not fit {n_candidates} candidates"
            )));
        }
        Ok(Self { mask, n_candidates })
    }

    /// Model with every candidate included.
    pub fn full(n_candidates: usize) -> Self {
        Self {
            mask: ((1u64 << n_candidates) - 1) as u32,
            n_candidates,
        }
    }

    pub fn mask(&self) -> u32 {
        self.mask
    }

    pub fn includes(&self, candidate: usize) -> bool {
        candidate < self.n_candidates && (self.mask >> candidate) & 1 == 1
    }

    /// Number of included regressors, intercept excluded.
    pub fn size(&self) -> usize {
        self.mask.count_ones() as usize
    }

    /// Coefficient count, intercept included.
    pub fn dim(&self) -> usize {
        self.size() + 1
    }

    /// Design-column indices of the included regressors (intercept excluded).
    pub fn columns(&self) -> Vec<usize> {
        (0..self.n_candidates)
            .filter(|&j| self.includes(j))
            .map(|j| j + 1)
            .collect()
    }

    /// Canonical index in [`enumerate_models`] order.
    pub fn index(&self) -> usize {
        self.mask as usize
    }

    /// Restricts a full design row to this model's columns.
    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        let cols = self.columns();
        DVector::from_iterator(cols.len() + 1, std::iter::once(x[0]).chain(cols.iter().map(|&c| x[c])))
    }
}

/// All `2^(M-1)` models over `design_columns = M` columns, in binary-counting order.
pub fn enumerate_models(design_columns: usize) -> Result<Vec<ModelSpec>> {
    enumerate_models_capped(design_columns, DEFAULT_MAX_COLUMNS)
}

pub fn enumerate_models_capped(design_columns: usize, cap: usize) -> Result<Vec<ModelSpec>> {
    if design_columns == 0 {
        return Err(Error::Config("design needs at least the intercept".into()));
    }
    if design_columns > cap || design_columns > 31 {
        return Err(Error::Config(format!(
            "{design_columns} design columns exceed the model-space cap of {cap}"
        )));
    }
    let n = design_columns - 1;
    Ok((0..(1u32 << n))
        .map(|mask| ModelSpec {
            mask,
            n_candidates: n,
        })
        .collect())
}

/// Forgetting step: `(p_k^alpha + xi) / sum_j (p_j^alpha + xi)`.
pub fn predict_weights(upd: &[f64], alpha: f64, xi: f64) -> Vec<f64> {
    let raised: Vec<f64> = upd.iter().map(|&p| p.powf(alpha) + xi).collect();
    let total: f64 = raised.iter().sum();
    raised.into_iter().map(|v| v / total).collect()
}

/// Per-model per-chain model probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    /// `K x L` predicted probabilities.
    pub pred: DMatrix<f64>,
    /// `K x L` updated probabilities.
    pub upd: DMatrix<f64>,
    /// Chain mean of `pred`.
    pub pred_marginal: Vec<f64>,
}

impl ModelWeights {
    /// Uniform `1/K` start for every chain.
    pub fn uniform(k: usize, l: usize) -> Self {
        let m = DMatrix::from_element(k, l, 1.0 / k as f64);
        Self {
            pred: m.clone(),
            upd: m,
            pred_marginal: vec![1.0 / k as f64; k],
        }
    }

    pub fn upd_marginal(&self) -> Vec<f64> {
        row_means(&self.upd)
    }

    /// Applies [`predict_weights`] to every chain's column of `upd`.
    pub fn predict(&mut self, alpha: f64, xi: f64) {
        for l in 0..self.upd.ncols() {
            let col: Vec<f64> = self.upd.column(l).iter().copied().collect();
            let p = predict_weights(&col, alpha, xi);
            self.pred.column_mut(l).copy_from_slice(&p);
        }
        self.pred_marginal = row_means(&self.pred);
    }
}

pub(crate) fn row_means(m: &DMatrix<f64>) -> Vec<f64> {
    m.row_iter().map(|r| r.sum() / m.ncols() as f64).collect()
}

/// Gaussian approximation to the one-step predictive density of `y_{t+1}`
/// under the chain's filter state and the mixing draw `omega_next`.
pub fn predictive_density(
    chain: &ChainState,
    hyper: &PriorHyper,
    y: f64,
    x: &DVector<f64>,
    omega_next: f64,
    qc: &QuantileConfig,
) -> Result<f64> {
    let prev = chain.last_filtered(hyper);
    if x.len() != prev.dim() {
        return Err(Error::Dimension(format!(
            "regressor length {} vs state dimension {}",
            x.len(),
            prev.dim()
        )));
    }
    let p = &prev.cov + &chain.omega_cov;
    let mean = qc.lambda() * omega_next + x.dot(&prev.mean);
    let var = qc.delta() * chain.sigma * omega_next + x.dot(&(&p * x));
    Ok(normal_log_density(y, mean, var).exp())
}

pub fn normal_log_density(y: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (y - mean).powi(2) / var)
}

fn check_shapes(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension(format!(
            "weights are {:?}, densities are {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Bayes update of each chain's predicted probabilities by the predictive densities.
pub fn update_weights(pred: &DMatrix<f64>, densities: &DMatrix<f64>) -> Result<ModelWeights> {
    check_shapes(pred, densities)?;
    if densities.iter().any(|&d| !(d >= 0.0)) {
        return Err(Error::Domain("predictive densities must be nonnegative".into()));
    }
    let logs = densities.map(f64::ln);
    update_weights_log(pred, &logs)
}

/// As [`update_weights`], from log densities; normalizes each chain stably.
pub fn update_weights_log(pred: &DMatrix<f64>, log_densities: &DMatrix<f64>) -> Result<ModelWeights> {
    check_shapes(pred, log_densities)?;
    let (k, l) = pred.shape();
    let mut upd = DMatrix::zeros(k, l);
    for c in 0..l {
        let scores: Vec<f64> = (0..k)
            .map(|j| {
                if pred[(j, c)] > 0.0 {
                    pred[(j, c)].ln() + log_densities[(j, c)]
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !top.is_finite() {
            warn!("event=zero_densities chain={c}");
            upd.column_mut(c).copy_from(&pred.column(c));
            continue;
        }
        let w: Vec<f64> = scores.iter().map(|s| (s - top).exp()).collect();
        let total: f64 = w.iter().sum();
        for j in 0..k {
            upd[(j, c)] = w[j] / total;
        }
    }
    Ok(ModelWeights {
        pred: pred.clone(),
        upd,
        pred_marginal: row_means(pred),
    })
}

/// Chain-average one-step predictive state mean (Rao-Blackwellized).
pub fn rao_blackwell_state_forecast(pop: &ChainPopulation, hyper: &PriorHyper) -> DVector<f64> {
    pop.mean_state_forecast(hyper)
}

/// Probability-weighted combination of per-model quantile forecasts.
pub fn combine_quantile_forecast(weights: &[f64], forecasts: &[f64]) -> f64 {
    weights.iter().zip(forecasts).map(|(w, f)| w * f).sum()
}

/// Per-model variance across chains of the predicted probabilities (divisor `L - 1`).
pub fn weight_variance(pred: &DMatrix<f64>) -> Result<Vec<f64>> {
    let l = pred.ncols();
    if l < 2 {
        return Err(Error::Config(format!("weight variance needs at least 2 chains, got {l}")));
    }
    Ok(pred
        .row_iter()
        .map(|r| {
            let mean = r.sum() / l as f64;
            r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (l - 1) as f64
        })
        .collect())
}

pub fn expected_model_size(weights: &[f64], sizes: &[usize]) -> f64 {
    weights.iter().zip(sizes).map(|(w, &s)| w * s as f64).sum()
}

/// Marginal inclusion probability of each candidate regressor.
pub fn inclusion_probabilities(weights: &[f64], models: &[ModelSpec]) -> Vec<f64> {
    let n = models.first().map_or(0, |m| m.n_candidates);
    (0..n)
        .map(|j| {
            models
                .iter()
                .zip(weights)
                .filter(|(m, _)| m.includes(j))
                .map(|(_, w)| w)
                .sum()
        })
        .collect()
}
