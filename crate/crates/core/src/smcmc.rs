//! Population of parallel inhomogeneous Gibbs chains advanced one observation
//! at a time: jump every chain, then sweep until the cross-chain lag
//! correlation drops below `1 - epsilon`.

use log::{info, warn};
use nalgebra::DVector;
use rayon::prelude::*;
use statrs::function::erf::erfc;

use crate::data::SeriesData;
use crate::distributions::QuantileConfig;
use crate::error::{Error, Result};
use crate::gibbs::{jump_extend, transition_sweep, ChainState, PriorHyper, SweepMode};
use crate::rng::{stream, ChainRng, StreamId};
use crate::ssm::smooth_fixed_interval;

/// Stopping rule for the sweeps made at each time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceConfig {
    pub epsilon: f64,
    pub m_min: usize,
    pub m_max: usize,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            m_min: 2,
            m_max: 50,
        }
    }
}

impl ConvergenceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Config(format!(
                "epsilon = {} not in (0, 1)",
                self.epsilon
            )));
        }
        if self.m_min < 1 || self.m_max < self.m_min {
            return Err(Error::Config(format!(
                "sweep bounds m_min = {}, m_max = {} are not ordered",
                self.m_min, self.m_max
            )));
        }
        Ok(())
    }
}

/// Whether chains are advanced on the rayon pool or one after the other.
/// Results are identical either way.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

/// `L` chains for one model, each with its own random stream.
#[derive(Debug, Clone)]
pub struct ChainPopulation {
    pub chains: Vec<ChainState>,
    rngs: Vec<ChainRng>,
    pub t: usize,
    /// Number of sweeps used at each time step.
    pub m_history: Vec<usize>,
    /// `(s, r_hat(s))` pairs evaluated at each time step.
    pub rate_history: Vec<Vec<(usize, f64)>>,
}

pub fn init_population(
    n_chains: usize,
    hyper: &PriorHyper,
    seed: u64,
    tau_index: u16,
    model: u32,
) -> Result<ChainPopulation> {
    if n_chains < 2 {
        return Err(Error::Config(format!(
            "population needs at least 2 chains, got {n_chains}"
        )));
    }
    hyper.validate()?;
    let mut chains = Vec::with_capacity(n_chains);
    let mut rngs = Vec::with_capacity(n_chains);
    for l in 0..n_chains {
        let mut rng = stream(seed, StreamId::new(tau_index, model, l as u32));
        chains.push(ChainState::from_prior(hyper, &mut rng)?);
        rngs.push(rng);
    }
    Ok(ChainPopulation {
        chains,
        rngs,
        t: 0,
        m_history: Vec::new(),
        rate_history: Vec::new(),
    })
}

/// Scalar coordinates monitored by the rate estimator:
/// `sigma`, `vech(Omega)`, `beta_t` and `omega_t`.
pub fn monitored_coordinates(chain: &ChainState) -> Vec<f64> {
    let m = chain.dim();
    let mut out = Vec::with_capacity(2 + m * (m + 1) / 2 + m);
    out.push(chain.sigma);
    for j in 0..m {
        for i in j..m {
            out.push(chain.omega_cov[(i, j)]);
        }
    }
    if let Some(b) = chain.betas.last() {
        out.extend(b.iter().copied());
    }
    if let Some(&w) = chain.omegas.last() {
        out.push(w);
    }
    out
}

/// Largest cross-chain correlation, over coordinates, between two population
/// cross-sections. Coordinates with zero spread in either snapshot are skipped.
pub fn estimate_rate(first: &[Vec<f64>], later: &[Vec<f64>]) -> Result<f64> {
    let n = first.len();
    if n != later.len() || n == 0 {
        return Err(Error::Dimension(format!(
            "snapshots cover {} and {} chains",
            n,
            later.len()
        )));
    }
    let p = first[0].len();
    if first.iter().chain(later).any(|c| c.len() != p) {
        return Err(Error::Dimension("snapshot coordinate counts differ".into()));
    }
    let mut best: Option<f64> = None;
    for j in 0..p {
        let ma = first.iter().map(|c| c[j]).sum::<f64>() / n as f64;
        let mb = later.iter().map(|c| c[j]).sum::<f64>() / n as f64;
        let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
        for (a, b) in first.iter().zip(later) {
            let (da, db) = (a[j] - ma, b[j] - mb);
            sab += da * db;
            saa += da * da;
            sbb += db * db;
        }
        if saa <= 0.0 || sbb <= 0.0 {
            log::debug!("event=rate_skip coordinate={j}");
            continue;
        }
        let r = (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0);
        best = Some(best.map_or(r, |b: f64| b.max(r)));
    }
    Ok(best.unwrap_or(0.0))
}

impl ChainPopulation {
    pub fn len(&self) -> usize {
        self.chains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chains.is_empty()
    }

    fn for_each_chain<F>(&mut self, exec: Execution, f: F) -> Result<()>
    where
        F: Fn(&mut ChainState, &mut ChainRng) -> Result<()> + Sync + Send,
    {
        match exec {
            Execution::Parallel => self
                .chains
                .par_iter_mut()
                .zip(self.rngs.par_iter_mut())
                .try_for_each(|(c, r)| f(c, r)),
            Execution::Sequential => self
                .chains
                .iter_mut()
                .zip(self.rngs.iter_mut())
                .try_for_each(|(c, r)| f(c, r)),
        }
    }

    fn snapshot(&self) -> Vec<Vec<f64>> {
        self.chains.iter().map(monitored_coordinates).collect()
    }

    /// Applies the jumping kernel for observation `t + 1` to every chain.
    pub fn jump(
        &mut self,
        data: &SeriesData,
        qc: &QuantileConfig,
        hyper: &PriorHyper,
        exec: Execution,
    ) -> Result<()> {
        let t = self.t;
        if t >= data.len() {
            return Err(Error::Data(format!("no observation at time {}", t + 1)));
        }
        let (y, x) = (data.y[t], &data.x[t]);
        self.for_each_chain(exec, |c, r| jump_extend(c, y, x, qc, hyper, r))?;
        self.t += 1;
        Ok(())
    }

    /// Sweeps every chain until the lag correlation bound holds or `m_max`
    /// sweeps ran, then refreshes each chain's filter pass. Returns `m_t`.
    ///
    /// The first sweep is the reference iterate; `r_hat(s)` compares sweep
    /// `s + 1` with it at `s = 1, 2, 4, ...` and at `s = m_min - 1`.
    pub fn sweep_until_converged(
        &mut self,
        data: &SeriesData,
        qc: &QuantileConfig,
        hyper: &PriorHyper,
        conv: &ConvergenceConfig,
        mode: SweepMode,
        exec: Execution,
    ) -> Result<usize> {
        conv.validate()?;
        let sweep = |c: &mut ChainState, r: &mut ChainRng| transition_sweep(c, data, qc, hyper, mode, r);
        self.for_each_chain(exec, sweep)?;
        let mut n = 1;
        let reference = self.snapshot();
        let mut trace = Vec::new();
        while n < conv.m_max {
            self.for_each_chain(exec, sweep)?;
            n += 1;
            let s = n - 1;
            if s.is_power_of_two() || n == conv.m_min {
                let r = estimate_rate(&reference, &self.snapshot())?;
                trace.push((s, r));
                if n >= conv.m_min && r <= 1.0 - conv.epsilon {
                    break;
                }
            }
        }
        if n == conv.m_max && conv.m_max > 1 {
            if let Some(&(_, r)) = trace.last() {
                if r > 1.0 - conv.epsilon {
                    warn!("event=sweep_cap t={} m_t={n} rhat={r:.4}", self.t);
                }
            }
        }
        self.for_each_chain(exec, |c, _| c.refresh_filter(data, qc, hyper, mode))?;
        let rates: Vec<String> = trace.iter().map(|(s, r)| format!("{s}:{r:.4}")).collect();
        info!(
            "event=smcmc_step t={} m_t={n} rhat={}",
            self.t,
            if rates.is_empty() { "-".to_string() } else { rates.join(",") }
        );
        self.m_history.push(n);
        self.rate_history.push(trace);
        Ok(n)
    }

    /// Jump to the next observation, then sweep to convergence.
    #[allow(clippy::too_many_arguments)]
    pub fn step_time(
        &mut self,
        data: &SeriesData,
        qc: &QuantileConfig,
        hyper: &PriorHyper,
        conv: &ConvergenceConfig,
        mode: SweepMode,
        exec: Execution,
    ) -> Result<usize> {
        self.jump(data, qc, hyper, exec)?;
        self.sweep_until_converged(data, qc, hyper, conv, mode, exec)
    }

    /// Chain average of the one-step predictive state mean `beta_{t+1|t}`.
    pub fn mean_state_forecast(&self, hyper: &PriorHyper) -> DVector<f64> {
        let m = hyper.dim();
        let sum = self
            .chains
            .iter()
            .fold(DVector::zeros(m), |acc, c| acc + c.last_filtered(hyper).mean);
        sum / self.chains.len() as f64
    }
}

/// Cross-chain median and shortest 95% interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub median: f64,
    pub hpd_low: f64,
    pub hpd_high: f64,
}

/// Median and shortest interval holding `ceil(prob * n)` of the values.
pub fn summarize(values: &[f64], prob: f64) -> Summary {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    assert!(n > 0, "cannot summarize an empty sample");
    let median = if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    };
    let k = ((prob * n as f64).ceil() as usize).clamp(1, n);
    let (mut lo, mut hi) = (v[0], v[k - 1]);
    for i in 1..=n - k {
        if v[i + k - 1] - v[i] < hi - lo {
            lo = v[i];
            hi = v[i + k - 1];
        }
    }
    Summary {
        median,
        hpd_low: lo,
        hpd_high: hi,
    }
}

/// Which latent quantity to summarize over time.
/// Median and shortest `prob` interval of an equally weighted mixture of
/// normals `(mean, sd)`. Components with zero spread act as point masses.
pub fn mixture_summary(components: &[(f64, f64)], prob: f64) -> Summary {
    assert!(!components.is_empty(), "cannot summarize an empty mixture");
    let lo = components.iter().map(|(m, s)| m - 9.0 * s).fold(f64::INFINITY, f64::min);
    let hi = components.iter().map(|(m, s)| m + 9.0 * s).fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Summary {
            median: lo,
            hpd_low: lo,
            hpd_high: lo,
        };
    }
    const GRID: usize = 4000;
    let xs: Vec<f64> = (0..=GRID).map(|i| lo + (hi - lo) * i as f64 / GRID as f64).collect();
    let n = components.len() as f64;
    let cdf: Vec<f64> = xs
        .iter()
        .map(|&x| {
            components
                .iter()
                .map(|&(m, s)| {
                    if s > 0.0 {
                        0.5 * erfc((m - x) / (s * std::f64::consts::SQRT_2))
                    } else if x >= m {
                        1.0
                    } else {
                        0.0
                    }
                })
                .sum::<f64>()
                / n
        })
        .collect();
    let quantile = |p: f64| {
        let i = cdf.partition_point(|&c| c < p).clamp(1, GRID);
        let (c0, c1) = (cdf[i - 1], cdf[i]);
        let w = if c1 > c0 { ((p - c0) / (c1 - c0)).clamp(0.0, 1.0) } else { 1.0 };
        xs[i - 1] + w * (xs[i] - xs[i - 1])
    };
    let steps = 500;
    let (mut a, mut b) = (quantile(0.0), quantile(prob));
    for k in 1..=steps {
        let p = (1.0 - prob) * k as f64 / steps as f64;
        let (qa, qb) = (quantile(p), quantile(p + prob));
        if qb - qa < b - a {
            a = qa;
            b = qb;
        }
    }
    Summary {
        median: quantile(0.5),
        hpd_low: a,
        hpd_high: b,
    }
}

/// Rao-Blackwellized per-time summaries of coefficient `j`: each chain
/// contributes its smoothed Gaussian given its own `(sigma, Omega, omega)`
/// rather than a single draw.
pub fn smoothed_summary(
    pop: &ChainPopulation,
    data: &SeriesData,
    qc: &QuantileConfig,
    hyper: &PriorHyper,
    j: usize,
) -> Result<Vec<Summary>> {
    if j >= hyper.dim() {
        return Err(Error::Dimension(format!("coefficient {j} out of range")));
    }
    let smoothed = pop
        .chains
        .iter()
        .map(|c| {
            let mut c = c.clone();
            c.refresh_filter(data, qc, hyper, SweepMode::FullInterval)?;
            smooth_fixed_interval(&c.filter_cache)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..pop.t)
        .map(|s| {
            let comps: Vec<(f64, f64)> = smoothed
                .iter()
                .map(|sm| (sm[s].mean[j], sm[s].cov[(j, j)].max(0.0).sqrt()))
                .collect();
            mixture_summary(&comps, 0.95)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coordinate {
    /// Coefficient `j` of `beta_s`.
    Beta(usize),
    /// Mixing variable `omega_s`.
    Mixing,
}

/// Per-time summaries of the selected coordinate across chains.
pub fn posterior_summary(pop: &ChainPopulation, which: Coordinate) -> Vec<Summary> {
    (0..pop.t)
        .map(|s| {
            let vals: Vec<f64> = pop
                .chains
                .iter()
                .map(|c| match which {
                    Coordinate::Beta(j) => c.betas[s][j],
                    Coordinate::Mixing => c.omegas[s],
                })
                .collect();
            summarize(&vals, 0.95)
        })
        .collect()
}
