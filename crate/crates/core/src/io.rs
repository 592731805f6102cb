//! Run configuration, CSV ingestion and emission, forecast scoring.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::SeriesData;
use crate::dgp::{normal_quantile, DgpOutput};
use crate::distributions::{pinball_loss, QuantileConfig};
use crate::dma::{inclusion_probabilities, DEFAULT_MAX_COLUMNS};
use crate::error::{Error, Result};
use crate::gibbs::SweepMode;
use crate::pipeline::{DmaRun, FitRun, PriorSettings, Settings};
use crate::smcmc::{ConvergenceConfig, Execution};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceSection {
    pub epsilon: f64,
    pub m_min: usize,
    pub m_max: usize,
}

impl Default for ConvergenceSection {
    fn default() -> Self {
        let c = ConvergenceConfig::default();
        Self {
            epsilon: c.epsilon,
            m_min: c.m_min,
            m_max: c.m_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DmaSection {
    pub alpha: f64,
    /// Omitted means `0.001 / K`.
    pub xi: Option<f64>,
    /// Largest design width (intercept included) for model enumeration.
    pub max_columns: usize,
}

impl Default for DmaSection {
    fn default() -> Self {
        Self {
            alpha: 0.99,
            xi: None,
            max_columns: DEFAULT_MAX_COLUMNS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorSection {
    pub a0: f64,
    pub b0: f64,
    /// Omitted means `m + 2` for an `m`-coefficient model.
    pub c0: Option<f64>,
    pub c0_scale: f64,
    pub kappa: f64,
}

impl Default for PriorSection {
    fn default() -> Self {
        let p = PriorSettings::default();
        Self {
            a0: p.a0,
            b0: p.b0,
            c0: p.c0,
            c0_scale: p.c0_scale,
            kappa: p.kappa,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSection {
    /// Lag `h` of the fixed-lag sweep; omitted means full-interval sweeps.
    pub fixed_lag: Option<usize>,
    pub parallel: bool,
}

impl Default for SamplerSection {
    fn default() -> Self {
        Self {
            fixed_lag: None,
            parallel: true,
        }
    }
}

/// Plain-text (TOML) run configuration. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub taus: Vec<f64>,
    pub chains: usize,
    pub convergence: ConvergenceSection,
    pub dma: DmaSection,
    pub prior: PriorSection,
    pub sampler: SamplerSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            taus: vec![0.5],
            chains: 20,
            convergence: ConvergenceSection::default(),
            dma: DmaSection::default(),
            prior: PriorSection::default(),
            sampler: SamplerSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.taus.is_empty() {
            return Err(Error::Config("at least one quantile level is required".into()));
        }
        for &tau in &self.taus {
            QuantileConfig::new(tau).map_err(|e| Error::Config(e.to_string()))?;
        }
        if self.taus.len() > u16::MAX as usize {
            return Err(Error::Config("too many quantile levels".into()));
        }
        if let Some(h) = self.sampler.fixed_lag {
            if h == 0 {
                return Err(Error::Config("fixed_lag must be at least 1".into()));
            }
        }
        self.settings(0).validate()?;
        let hyper = self.settings(0).prior.hyper(1);
        hyper.validate()
    }

    /// Sampler settings for the `tau_index`-th quantile level.
    pub fn settings(&self, tau_index: usize) -> Settings {
        Settings {
            n_chains: self.chains,
            convergence: ConvergenceConfig {
                epsilon: self.convergence.epsilon,
                m_min: self.convergence.m_min,
                m_max: self.convergence.m_max,
            },
            prior: PriorSettings {
                a0: self.prior.a0,
                b0: self.prior.b0,
                c0: self.prior.c0,
                c0_scale: self.prior.c0_scale,
                kappa: self.prior.kappa,
            },
            alpha: self.dma.alpha,
            xi: self.dma.xi,
            mode: match self.sampler.fixed_lag {
                Some(h) => SweepMode::FixedLag(h),
                None => SweepMode::FullInterval,
            },
            execution: if self.sampler.parallel {
                Execution::Parallel
            } else {
                Execution::Sequential
            },
            seed: self.seed,
            tau_index: tau_index as u16,
            max_design_columns: self.dma.max_columns,
        }
    }

    /// Short digest of the canonical serialized configuration.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        hex::encode(&digest[..8])
    }

    fn provenance(&self) -> String {
        format!("# config_hash={} seed={}", self.hash(), self.seed)
    }
}

fn parse_cell(raw: &str, row: usize, col: &str) -> Result<f64> {
    let s = raw.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("na") || s.eq_ignore_ascii_case("nan") {
        return Err(Error::Data(format!("missing value at row {row}, column '{col}'")));
    }
    let v: f64 = s
        .parse()
        .map_err(|_| Error::Data(format!("non-numeric value '{s}' at row {row}, column '{col}'")))?;
    if !v.is_finite() {
        return Err(Error::Data(format!("non-finite value at row {row}, column '{col}'")));
    }
    Ok(v)
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)?)
}

/// Reads `y, x_2, ..., x_M` (header required), prepends the intercept and
/// appends `lag_count` lagged responses.
pub fn load_csv(path: &Path, lag_count: usize) -> Result<SeriesData> {
    let mut rdr = reader(path)?;
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if headers.is_empty() {
        return Err(Error::Data("header row is empty".into()));
    }
    let mut y = Vec::new();
    let mut regs = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        if rec.len() != headers.len() {
            return Err(Error::Data(format!(
                "row {row} has {} fields, header has {}",
                rec.len(),
                headers.len()
            )));
        }
        y.push(parse_cell(&rec[0], row, &headers[0])?);
        regs.push(
            (1..rec.len())
                .map(|j| parse_cell(&rec[j], row, &headers[j]))
                .collect::<Result<Vec<f64>>>()?,
        );
    }
    let data = SeriesData::with_intercept(y, &regs, &headers[1..])?;
    if data.len() < 2 {
        return Err(Error::Data(format!("need at least 2 rows, found {}", data.len())));
    }
    data.with_lags(lag_count)
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

/// Writes `y` and the non-intercept columns in the layout [`load_csv`] reads.
pub fn write_series_csv(path: &Path, data: &SeriesData) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["y".to_string()];
    header.extend(data.column_names[1..].iter().cloned());
    w.write_record(&header)?;
    for (y, x) in data.y.iter().zip(&data.x) {
        let mut rec = vec![fmt(*y)];
        rec.extend(x.iter().skip(1).map(|v| fmt(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Ground truth of a simulated series: noise variance and mean coefficients.
pub fn write_truth_csv(path: &Path, out: &DgpOutput) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["time", "nu2", "beta1", "beta2", "beta3"])?;
    for t in 0..out.len() {
        w.write_record([
            (t + 1).to_string(),
            fmt(out.nu2[t]),
            fmt(out.beta_star[(t, 0)]),
            fmt(out.beta_star[(t, 1)]),
            fmt(out.beta_star[(t, 2)]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn provenance_writer(path: &Path, cfg: &RunConfig) -> Result<csv::Writer<BufWriter<File>>> {
    let mut file = BufWriter::new(File::create(path)?);
    writeln!(file, "{}", cfg.provenance())?;
    Ok(csv::Writer::from_writer(file))
}

/// Tidy per-time coefficient summaries: `tau,time,coefficient,median,hpd_low,hpd_high`.
pub fn write_fit_csv(path: &Path, cfg: &RunConfig, fits: &[(f64, FitRun)]) -> Result<()> {
    let mut w = provenance_writer(path, cfg)?;
    w.write_record(["tau", "time", "coefficient", "median", "hpd_low", "hpd_high"])?;
    for (tau, fit) in fits {
        for (j, name) in fit.column_names.iter().enumerate() {
            for (s, sm) in fit.coefficient_summary(j)?.iter().enumerate() {
                w.write_record([
                    fmt(*tau),
                    (s + 1).to_string(),
                    name.clone(),
                    fmt(sm.median),
                    fmt(sm.hpd_low),
                    fmt(sm.hpd_high),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// One-step forecasts of a single-model run: `tau,time,realized,forecast,sweeps`.
pub fn write_fit_forecasts_csv(
    path: &Path,
    cfg: &RunConfig,
    data: &SeriesData,
    fits: &[(f64, FitRun)],
) -> Result<()> {
    let mut w = provenance_writer(path, cfg)?;
    w.write_record(["tau", "time", "realized", "forecast", "sweeps"])?;
    for (tau, fit) in fits {
        for (s, f) in fit.forecasts.iter().enumerate() {
            w.write_record([
                fmt(*tau),
                (s + 1).to_string(),
                fmt(data.y[s]),
                fmt(*f),
                fit.population.m_history[s].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-time averaged forecast stream, one row per `(tau, time)`.
pub fn write_dma_csv(path: &Path, cfg: &RunConfig, runs: &[(f64, DmaRun)]) -> Result<()> {
    let mut w = provenance_writer(path, cfg)?;
    let Some((_, first)) = runs.first() else {
        return Err(Error::Data("no runs to write".into()));
    };
    let labels: Vec<String> = first.models.iter().map(|m| format!("m{}", m.mask())).collect();
    let mut header: Vec<String> = vec!["tau".into(), "time".into(), "realized".into()];
    header.extend(labels.iter().map(|l| format!("pi_pred_{l}")));
    header.extend(labels.iter().map(|l| format!("forecast_{l}")));
    header.push("dma_forecast".into());
    header.push("expected_size".into());
    header.extend(labels.iter().map(|l| format!("var_{l}")));
    w.write_record(&header)?;
    for (tau, run) in runs {
        for r in &run.records {
            let mut rec = vec![fmt(*tau), r.time.to_string(), fmt(r.realized)];
            rec.extend(r.pred_marginal.iter().map(|v| fmt(*v)));
            rec.extend(r.forecasts.iter().map(|v| fmt(*v)));
            rec.push(fmt(r.dma_forecast));
            rec.push(fmt(r.expected_size));
            rec.extend(r.weight_variance.iter().map(|v| fmt(*v)));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Human-readable end-of-run report for a model-averaging run.
pub fn dma_report(cfg: &RunConfig, column_names: &[String], runs: &[(f64, DmaRun)]) -> String {
    let mut out = String::new();
    out.push_str(&cfg.provenance());
    out.push('\n');
    for (tau, run) in runs {
        let last = run.records.last().expect("nonempty run");
        out.push_str(&format!("tau = {tau}\n"));
        out.push_str(&format!("  models = {}, xi = {:e}\n", run.models.len(), run.xi));
        let forecasts: Vec<f64> = run.records.iter().map(|r| r.dma_forecast).collect();
        let realized: Vec<f64> = run.records.iter().map(|r| r.realized).collect();
        if let Ok(score) = score_forecasts(&forecasts, &realized, *tau, None) {
            out.push_str(&format!("  mean pinball loss (DMA) = {:.6}\n", score.mean_pinball));
        }
        out.push_str(&format!("  terminal expected size = {:.4}\n", last.expected_size));
        let inc = inclusion_probabilities(&last.upd_marginal, &run.models);
        for (j, p) in inc.iter().enumerate() {
            out.push_str(&format!("  inclusion[{}] = {:.4}\n", column_names[j + 1], p));
        }
        let sweeps: usize = run.records.iter().flat_map(|r| r.sweeps.iter()).sum();
        let denom = (run.records.len() * run.models.len()).max(1);
        out.push_str(&format!("  mean sweeps per step = {:.2}\n", sweeps as f64 / denom as f64));
    }
    out
}

/// Mean pinball loss, and band coverage when bands are given.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForecastScore {
    pub mean_pinball: f64,
    pub coverage: Option<f64>,
}

/// Scores `forecasts` against `realized`; `bands` (if any) are checked for
/// containing `realized`.
pub fn score_forecasts(
    forecasts: &[f64],
    realized: &[f64],
    tau: f64,
    bands: Option<&[(f64, f64)]>,
) -> Result<ForecastScore> {
    if forecasts.len() != realized.len() || bands.is_some_and(|b| b.len() != realized.len()) {
        return Err(Error::Dimension("forecast, realized and band lengths differ".into()));
    }
    if realized.is_empty() {
        return Err(Error::Data("nothing to score".into()));
    }
    let n = realized.len() as f64;
    let mean_pinball = forecasts
        .iter()
        .zip(realized)
        .map(|(f, r)| pinball_loss(r - f, tau))
        .sum::<f64>()
        / n;
    let coverage = bands.map(|b| {
        b.iter()
            .zip(realized)
            .filter(|((lo, hi), r)| *lo <= **r && **r <= *hi)
            .count() as f64
            / n
    });
    Ok(ForecastScore {
        mean_pinball,
        coverage,
    })
}

/// Coverage and median pinball loss of one coefficient path.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientScore {
    pub tau: f64,
    pub coefficient: String,
    pub score: ForecastScore,
}

/// Scores a fit file against a truth file written by [`write_truth_csv`].
/// The first three coefficients are compared with the true quantile path.
pub fn score_fit_files(fit_path: &Path, truth_path: &Path) -> Result<Vec<CoefficientScore>> {
    let mut rdr = reader(truth_path)?;
    let mut nu2 = Vec::new();
    let mut beta: Vec<[f64; 3]> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let v: Vec<f64> = (1..5).map(|j| parse_cell(&rec[j], i + 1, "truth")).collect::<Result<_>>()?;
        nu2.push(v[0]);
        beta.push([v[1], v[2], v[3]]);
    }
    // (tau bits, coefficient) -> ordered rows
    let mut groups: BTreeMap<(u64, String), (usize, Vec<(usize, f64, f64, f64)>)> = BTreeMap::new();
    let mut rdr = reader(fit_path)?;
    let mut order = 0usize;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let tau = parse_cell(&rec[0], i + 1, "tau")?;
        let time: usize = rec[1]
            .parse()
            .map_err(|_| Error::Data(format!("bad time index at row {}", i + 1)))?;
        let entry = groups.entry((tau.to_bits(), rec[2].to_string())).or_insert_with(|| {
            order += 1;
            (order, Vec::new())
        });
        entry.1.push((
            time,
            parse_cell(&rec[3], i + 1, "median")?,
            parse_cell(&rec[4], i + 1, "hpd_low")?,
            parse_cell(&rec[5], i + 1, "hpd_high")?,
        ));
    }
    let mut out: Vec<(usize, CoefficientScore)> = Vec::new();
    let mut per_tau: BTreeMap<u64, usize> = BTreeMap::new();
    for ((tau_bits, name), (ord, rows)) in groups {
        let tau = f64::from_bits(tau_bits);
        let j = per_tau.entry(tau_bits).or_insert(0);
        let coef = *j;
        *j += 1;
        if coef >= 3 {
            continue;
        }
        let z = normal_quantile(tau);
        let mut med = Vec::new();
        let mut truth = Vec::new();
        let mut bands = Vec::new();
        for (time, m, lo, hi) in rows {
            if time == 0 || time > beta.len() {
                return Err(Error::Data(format!("time {time} outside the truth file")));
            }
            let mut b = beta[time - 1][coef];
            if coef == 0 {
                b += nu2[time - 1].sqrt() * z;
            }
            med.push(m);
            truth.push(b);
            bands.push((lo, hi));
        }
        let score = score_forecasts(&med, &truth, tau, Some(&bands))?;
        out.push((ord, CoefficientScore { tau, coefficient: name, score }));
    }
    out.sort_by_key(|(o, _)| *o);
    Ok(out.into_iter().map(|(_, s)| s).collect())
}

/// Mean pinball loss of the averaged forecasts in a stream written by
/// [`write_dma_csv`], one entry per quantile level.
pub fn score_dma_file(path: &Path) -> Result<Vec<(f64, ForecastScore)>> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("column '{name}' missing")))
    };
    let (ti, ri, fi) = (col("tau")?, col("realized")?, col("dma_forecast")?);
    let mut groups: Vec<(f64, Vec<f64>, Vec<f64>)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let tau = parse_cell(&rec[ti], i + 1, "tau")?;
        if groups.last().is_none_or(|g| g.0 != tau) {
            groups.push((tau, Vec::new(), Vec::new()));
        }
        let g = groups.last_mut().expect("group exists");
        g.1.push(parse_cell(&rec[fi], i + 1, "dma_forecast")?);
        g.2.push(parse_cell(&rec[ri], i + 1, "realized")?);
    }
    groups
        .into_iter()
        .map(|(tau, f, r)| Ok((tau, score_forecasts(&f, &r, tau, None)?)))
        .collect()
}
