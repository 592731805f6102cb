//! End-to-end sequential runs: a single model (`fit_model`) or the whole model
//! space with dynamic averaging (`run_dma`).

use log::info;
use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::data::SeriesData;
use crate::distributions::QuantileConfig;
use crate::dma::{
    combine_quantile_forecast, enumerate_models_capped, expected_model_size, inclusion_probabilities,
    normal_log_density, update_weights_log, weight_variance, ModelSpec, ModelWeights, DEFAULT_MAX_COLUMNS,
};
use crate::error::{Error, Result};
use crate::gibbs::{PriorHyper, SweepMode};
use crate::smcmc::{
    init_population, posterior_summary, smoothed_summary, ChainPopulation, ConvergenceConfig, Coordinate,
    Execution, Summary,
};

/// Prior settings from which a model-sized [`PriorHyper`] is built.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorSettings {
    pub a0: f64,
    pub b0: f64,
    /// Defaults to `m + 2` for an `m`-coefficient model.
    pub c0: Option<f64>,
    /// `C0 = c0_scale * I`.
    pub c0_scale: f64,
    pub kappa: f64,
}

impl Default for PriorSettings {
    fn default() -> Self {
        Self {
            a0: 2.5,
            b0: 1.0,
            c0: None,
            c0_scale: 0.01,
            kappa: 1e6,
        }
    }
}

impl PriorSettings {
    pub fn hyper(&self, m: usize) -> PriorHyper {
        PriorHyper {
            sigma_shape: self.a0,
            sigma_rate: self.b0,
            omega_shape: self.c0.unwrap_or(m as f64 + 2.0),
            omega_scale: DMatrix::identity(m, m) * self.c0_scale,
            kappa: self.kappa,
        }
    }
}

/// Everything a sequential run needs besides the data and quantile level.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub n_chains: usize,
    pub convergence: ConvergenceConfig,
    pub prior: PriorSettings,
    pub alpha: f64,
    /// Defaults to `0.001 / K`.
    pub xi: Option<f64>,
    pub mode: SweepMode,
    pub execution: Execution,
    pub seed: u64,
    /// Distinguishes random streams of different quantile levels under one seed.
    pub tau_index: u16,
    pub max_design_columns: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            n_chains: 20,
            convergence: ConvergenceConfig::default(),
            prior: PriorSettings::default(),
            alpha: 0.99,
            xi: None,
            mode: SweepMode::FullInterval,
            execution: Execution::Parallel,
            seed: 0,
            tau_index: 0,
            max_design_columns: DEFAULT_MAX_COLUMNS,
        }
    }
}

impl Settings {
    pub fn validate(&self) -> Result<()> {
        if self.n_chains < 2 {
            return Err(Error::Config(format!("chains = {} must be at least 2", self.n_chains)));
        }
        self.convergence.validate()?;
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!("alpha = {} not in (0, 1]", self.alpha)));
        }
        if let Some(xi) = self.xi {
            if !(xi >= 0.0) || !xi.is_finite() {
                return Err(Error::Config(format!("xi = {xi} must be nonnegative")));
            }
        }
        Ok(())
    }
}

/// Result of running one model over the whole sample.
#[derive(Debug, Clone)]
pub struct FitRun {
    pub model: ModelSpec,
    pub column_names: Vec<String>,
    /// The design restricted to the model's columns.
    pub data: SeriesData,
    pub qc: QuantileConfig,
    pub hyper: PriorHyper,
    pub population: ChainPopulation,
    /// One-step quantile forecasts `x_t' beta_hat_{t|t-1}`, made before `y_t` is seen.
    pub forecasts: Vec<f64>,
}

impl FitRun {
    /// Per-time summaries of coefficient `j` given all data, from the
    /// chains' smoothed moments.
    pub fn coefficient_summary(&self, j: usize) -> Result<Vec<Summary>> {
        smoothed_summary(&self.population, &self.data, &self.qc, &self.hyper, j)
    }

    /// Same as [`FitRun::coefficient_summary`] but from the chains' current draws.
    pub fn coefficient_draw_summary(&self, j: usize) -> Vec<Summary> {
        posterior_summary(&self.population, Coordinate::Beta(j))
    }
}

fn model_population(
    data: &SeriesData,
    model: ModelSpec,
    settings: &Settings,
) -> Result<(SeriesData, PriorHyper, ChainPopulation)> {
    let sub = data.select_columns(&model.columns());
    let hyper = settings.prior.hyper(model.dim());
    let pop = init_population(
        settings.n_chains,
        &hyper,
        settings.seed,
        settings.tau_index,
        model.index() as u32,
    )?;
    Ok((sub, hyper, pop))
}

fn check_data(data: &SeriesData) -> Result<()> {
    if data.len() < 2 {
        return Err(Error::Data(format!("need at least 2 observations, got {}", data.len())));
    }
    Ok(())
}

/// Sequential estimation of one model over the full sample.
pub fn fit_model(
    data: &SeriesData,
    model: ModelSpec,
    qc: &QuantileConfig,
    settings: &Settings,
) -> Result<FitRun> {
    settings.validate()?;
    check_data(data)?;
    let (sub, hyper, mut pop) = model_population(data, model, settings)?;
    let mut forecasts = Vec::with_capacity(sub.len());
    for t in 0..sub.len() {
        let beta_hat = pop.mean_state_forecast(&hyper);
        forecasts.push(sub.x[t].dot(&beta_hat));
        pop.step_time(&sub, qc, &hyper, &settings.convergence, settings.mode, settings.execution)?;
    }
    Ok(FitRun {
        model,
        column_names: sub.column_names.clone(),
        data: sub,
        qc: *qc,
        hyper,
        population: pop,
        forecasts,
    })
}

/// Fits the model that includes every candidate regressor.
pub fn fit_full_model(data: &SeriesData, qc: &QuantileConfig, settings: &Settings) -> Result<FitRun> {
    fit_model(data, ModelSpec::full(data.dim() - 1), qc, settings)
}

/// One time step of the averaged forecast stream.
#[derive(Debug, Clone, PartialEq)]
pub struct DmaRecord {
    /// 1-based time index of the forecast target.
    pub time: usize,
    pub realized: f64,
    /// `pi_{t|t-1}` averaged over chains.
    pub pred_marginal: Vec<f64>,
    /// Per-model quantile forecasts of `y_t`.
    pub forecasts: Vec<f64>,
    pub dma_forecast: f64,
    pub expected_size: f64,
    pub weight_variance: Vec<f64>,
    /// `pi_{t|t}` averaged over chains.
    pub upd_marginal: Vec<f64>,
    /// Per-chain predicted and updated probabilities at this step.
    pub weights: ModelWeights,
    pub sweeps: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct DmaRun {
    pub models: Vec<ModelSpec>,
    pub records: Vec<DmaRecord>,
    pub populations: Vec<ChainPopulation>,
    pub hypers: Vec<PriorHyper>,
    pub xi: f64,
}

impl DmaRun {
    /// Inclusion probabilities of each candidate under the final updated weights.
    pub fn terminal_inclusion(&self) -> Vec<f64> {
        let last = self.records.last().expect("run has at least one record");
        inclusion_probabilities(&last.upd_marginal, &self.models)
    }
}

struct ModelTrack {
    data: SeriesData,
    hyper: PriorHyper,
    pop: ChainPopulation,
}

/// Dynamic quantile model averaging over every regressor subset.
pub fn run_dma(data: &SeriesData, qc: &QuantileConfig, settings: &Settings) -> Result<DmaRun> {
    settings.validate()?;
    check_data(data)?;
    let models = enumerate_models_capped(data.dim(), settings.max_design_columns)?;
    let k = models.len();
    let l = settings.n_chains;
    let xi = settings.xi.unwrap_or(0.001 / k as f64);
    let mut tracks = models
        .iter()
        .map(|&m| {
            let (data, hyper, pop) = model_population(data, m, settings)?;
            Ok(ModelTrack { data, hyper, pop })
        })
        .collect::<Result<Vec<_>>>()?;
    info!("event=dma_start models={k} chains={l} tau={} alpha={} xi={xi:e}", qc.tau(), settings.alpha);

    let mut weights = ModelWeights::uniform(k, l);
    let mut records = Vec::with_capacity(data.len());
    let exec = settings.execution;
    for t in 0..data.len() {
        weights.predict(settings.alpha, xi);
        let forecasts: Vec<f64> = tracks
            .iter()
            .map(|tr| tr.data.x[t].dot(&tr.pop.mean_state_forecast(&tr.hyper)))
            .collect();
        let pred_marginal = weights.pred_marginal.clone();
        let dma_forecast = combine_quantile_forecast(&pred_marginal, &forecasts);
        let sizes: Vec<usize> = models.iter().map(|m| m.size()).collect();
        let expected_size = expected_model_size(&pred_marginal, &sizes);
        let wvar = weight_variance(&weights.pred)?;

        let jump = |tr: &mut ModelTrack| tr.pop.jump(&tr.data, qc, &tr.hyper, exec);
        match exec {
            Execution::Parallel => tracks.par_iter_mut().try_for_each(jump)?,
            Execution::Sequential => tracks.iter_mut().try_for_each(jump)?,
        }
        let y = data.y[t];
        let mut log_dens = DMatrix::zeros(k, l);
        for (i, tr) in tracks.iter().enumerate() {
            for (c, chain) in tr.pop.chains.iter().enumerate() {
                let step = chain.filter_cache.last().expect("jump adds a filter step");
                log_dens[(i, c)] = normal_log_density(y, step.predictive_mean, step.predictive_variance);
            }
        }
        let updated = update_weights_log(&weights.pred, &log_dens)?;
        weights.upd = updated.upd;

        let sweep = |tr: &mut ModelTrack| {
            tr.pop
                .sweep_until_converged(&tr.data, qc, &tr.hyper, &settings.convergence, settings.mode, exec)
        };
        let sweeps: Vec<usize> = match exec {
            Execution::Parallel => tracks.par_iter_mut().map(sweep).collect::<Result<_>>()?,
            Execution::Sequential => tracks.iter_mut().map(sweep).collect::<Result<_>>()?,
        };
        records.push(DmaRecord {
            time: t + 1,
            realized: y,
            pred_marginal,
            forecasts,
            dma_forecast,
            expected_size,
            weight_variance: wvar,
            upd_marginal: weights.upd_marginal(),
            weights: weights.clone(),
            sweeps,
        });
    }
    let (populations, hypers) = tracks.into_iter().map(|tr| (tr.pop, tr.hyper)).unzip();
    Ok(DmaRun {
        models,
        records,
        populations,
        hypers,
        xi,
    })
}
