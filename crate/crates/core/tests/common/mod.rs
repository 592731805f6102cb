//! Independent reference computations shared by the integration tests:
//! grid quadrature of one-dimensional kernels and dense joint-Gaussian
//! conditioning for the random-walk state space.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// A one-dimensional law tabulated on a grid from an unnormalized log kernel.
pub struct GridDist {
    pub xs: Vec<f64>,
    pub cdf: Vec<f64>,
}

impl GridDist {
    /// Trapezoid quadrature of `exp(logk)` on `[lo, hi]`.
    pub fn on_interval(logk: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> Self {
        let xs: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
        let lk: Vec<f64> = xs.iter().map(|&x| logk(x)).collect();
        Self::from_log_values(xs, lk)
    }

    /// Law of a positive variable; quadrature runs in `u = ln x` over the
    /// range where the kernel is within `e^-60` of its peak.
    pub fn positive(logk: impl Fn(f64) -> f64, n: usize) -> Self {
        let lku = |u: f64| logk(u.exp()) + u;
        let scan: Vec<f64> = (0..=40_000).map(|i| -60.0 + 120.0 * i as f64 / 40_000.0).collect();
        let vals: Vec<f64> = scan.iter().map(|&u| lku(u)).collect();
        let peak = vals.iter().cloned().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
        let keep: Vec<usize> = (0..scan.len()).filter(|&i| vals[i] > peak - 60.0).collect();
        let lo = scan[keep[0].saturating_sub(1)];
        let hi = scan[(keep[keep.len() - 1] + 1).min(scan.len() - 1)];
        let us: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
        let lk: Vec<f64> = us.iter().map(|&u| lku(u)).collect();
        let mut g = Self::from_log_values(us, lk);
        g.xs.iter_mut().for_each(|u| *u = u.exp());
        g
    }

    pub fn from_log_values(xs: Vec<f64>, lk: Vec<f64>) -> Self {
        let peak = lk.iter().cloned().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
        let dens: Vec<f64> = lk.iter().map(|&v| (v - peak).exp()).collect();
        let mut cdf = vec![0.0; xs.len()];
        for i in 1..xs.len() {
            cdf[i] = cdf[i - 1] + 0.5 * (dens[i] + dens[i - 1]) * (xs[i] - xs[i - 1]);
        }
        let total = cdf[xs.len() - 1];
        cdf.iter_mut().for_each(|c| *c /= total);
        Self { xs, cdf }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        let i = self.cdf.partition_point(|&c| c < p).clamp(1, self.xs.len() - 1);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let w = if c1 > c0 { (p - c0) / (c1 - c0) } else { 0.0 };
        self.xs[i - 1] + w * (self.xs[i] - self.xs[i - 1])
    }

    pub fn mean(&self) -> f64 {
        (1..self.xs.len())
            .map(|i| 0.5 * (self.xs[i] + self.xs[i - 1]) * (self.cdf[i] - self.cdf[i - 1]))
            .sum()
    }
}

/// Total-variation distance between the empirical law of `samples` and
/// `dist`, over `bins` cells of equal reference probability.
pub fn tv_distance(samples: &[f64], dist: &GridDist, bins: usize) -> f64 {
    let edges: Vec<f64> = (1..bins).map(|i| dist.quantile(i as f64 / bins as f64)).collect();
    let mut counts = vec![0usize; bins];
    for &s in samples {
        counts[edges.partition_point(|&e| e < s)] += 1;
    }
    let n = samples.len() as f64;
    0.5 * counts.iter().map(|&c| (c as f64 / n - 1.0 / bins as f64).abs()).sum::<f64>()
}

/// Random-walk state space with Gaussian observation noise:
/// `beta_0 ~ N(mu0, p0)`, `beta_s = beta_{s-1} + N(0, omega)`,
/// `y_s = x_s' beta_s + offset_s + N(0, r_s)` for `s = 1..T`.
pub struct DenseModel {
    pub mu0: DVector<f64>,
    pub p0: DMatrix<f64>,
    pub omega: DMatrix<f64>,
    pub xs: Vec<DVector<f64>>,
    pub offsets: Vec<f64>,
    pub r: Vec<f64>,
    pub y: Vec<f64>,
}

/// Joint Gaussian moments of the stacked states `(beta_1, ..., beta_T)`.
pub struct StackedMoments {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub m: usize,
}

impl StackedMoments {
    pub fn block_mean(&self, s: usize) -> DVector<f64> {
        self.mean.rows(s * self.m, self.m).into_owned()
    }

    pub fn block_cov(&self, s: usize, r: usize) -> DMatrix<f64> {
        self.cov.view((s * self.m, r * self.m), (self.m, self.m)).into_owned()
    }
}

impl DenseModel {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn dim(&self) -> usize {
        self.mu0.len()
    }

    /// Prior moments of the stacked states and the stacked observations.
    fn prior(&self) -> (DVector<f64>, DMatrix<f64>) {
        let (t, m) = (self.len(), self.dim());
        let n = t * m + t;
        let mut mean = DVector::zeros(n);
        let mut cov = DMatrix::zeros(n, n);
        for s in 0..t {
            mean.rows_mut(s * m, m).copy_from(&self.mu0);
            mean[t * m + s] = self.xs[s].dot(&self.mu0) + self.offsets[s];
            for r in 0..t {
                let c = &self.p0 + &self.omega * (s.min(r) + 1) as f64;
                cov.view_mut((s * m, r * m), (m, m)).copy_from(&c);
                let cyb = self.xs[s].transpose() * &c;
                cov.view_mut((t * m + s, r * m), (1, m)).copy_from(&cyb);
                cov.view_mut((r * m, t * m + s), (m, 1)).copy_from(&cyb.transpose());
                let mut cyy = (self.xs[s].transpose() * &c * &self.xs[r])[(0, 0)];
                if s == r {
                    cyy += self.r[s];
                }
                cov[(t * m + s, t * m + r)] = cyy;
            }
        }
        (mean, cov)
    }

    /// Moments of all states given `y_1..y_k`.
    pub fn condition_on_first(&self, k: usize) -> StackedMoments {
        let (t, m) = (self.len(), self.dim());
        let (mean, cov) = self.prior();
        let nb = t * m;
        let mb = mean.rows(0, nb).into_owned();
        let sbb = cov.view((0, 0), (nb, nb)).into_owned();
        if k == 0 {
            return StackedMoments { mean: mb, cov: sbb, m };
        }
        let my = mean.rows(nb, k).into_owned();
        let sby = cov.view((0, nb), (nb, k)).into_owned();
        let syy = cov.view((nb, nb), (k, k)).into_owned();
        let yk = DVector::from_iterator(k, self.y[..k].iter().copied());
        let lu = syy.lu();
        let w = lu.solve(&(yk - my)).expect("nonsingular");
        let g = lu.solve(&sby.transpose()).expect("nonsingular");
        StackedMoments {
            mean: mb + &sby * w,
            cov: sbb - &sby * g,
            m,
        }
    }

    /// Log marginal density of `y_1..y_T`.
    pub fn log_evidence(&self) -> f64 {
        let (t, m) = (self.len(), self.dim());
        let (mean, cov) = self.prior();
        let my = mean.rows(t * m, t).into_owned();
        let syy = cov.view((t * m, t * m), (t, t)).into_owned();
        let d = DVector::from_iterator(t, self.y.iter().copied()) - my;
        let ch = syy.cholesky().expect("positive definite");
        let logdet: f64 = 2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let q = d.dot(&ch.solve(&d));
        -0.5 * (t as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + q)
    }
}

/// `max |a - b| / max(max |b|, floor)`.
pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>, floor: f64) -> f64 {
    (a - b).amax() / b.amax().max(floor)
}

pub fn rel_err_vec(a: &DVector<f64>, b: &DVector<f64>, floor: f64) -> f64 {
    (a - b).amax() / b.amax().max(floor)
}

fn unit<R: rand::Rng>(rng: &mut R) -> f64 {
    2.0 * rng.random::<f64>() - 1.0
}

fn random_pd<R: rand::Rng>(rng: &mut R, m: usize, scale: f64, ridge: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(m, m, |_, _| unit(rng));
    (&a * a.transpose()) * scale + DMatrix::identity(m, m) * ridge
}

/// A random, well-conditioned instance of [`DenseModel`].
pub fn random_model<R: rand::Rng>(rng: &mut R, t: usize, m: usize) -> DenseModel {
    DenseModel {
        mu0: DVector::from_fn(m, |_, _| unit(rng)),
        p0: random_pd(rng, m, 2.0, 0.5),
        omega: random_pd(rng, m, 0.3, 0.05),
        xs: (0..t).map(|_| DVector::from_fn(m, |_, _| 1.5 * unit(rng))).collect(),
        offsets: (0..t).map(|_| unit(rng)).collect(),
        r: (0..t).map(|_| 0.2 + 1.8 * rng.random::<f64>()).collect(),
        y: (0..t).map(|_| 3.0 * unit(rng)).collect(),
    }
}

/// Runs the crate's filter over a [`DenseModel`].
pub fn run_filter(model: &DenseModel) -> Vec<dqma::ssm::KalmanStepResult> {
    use dqma::ssm::{filter_path, GaussState, ObservationNoise};
    let init = GaussState::new(model.mu0.clone(), model.p0.clone()).unwrap();
    let obs = (0..model.len()).map(|s| {
        let noise = ObservationNoise {
            offset: model.offsets[s],
            variance: model.r[s],
        };
        (&model.xs[s], model.y[s], noise)
    });
    filter_path(&init, &model.omega, obs).unwrap()
}

/// Unnormalized log density of a mixing variable given its residual:
/// the Gaussian measurement kernel times the exponential prior.
pub fn omega_log_kernel(w: f64, residual: f64, sigma: f64, qc: &dqma::QuantileConfig) -> f64 {
    let (l, d) = (qc.lambda(), qc.delta());
    -0.5 * w.ln() - (residual - l * w).powi(2) / (2.0 * d * sigma * w) - w / sigma
}

/// `ln ∫ N(r; lambda w, delta sigma w) (1/sigma) exp(-w/sigma) dw`, by
/// quadrature over `v = w / sigma` on a log grid.
pub fn mixture_log_density(r: f64, sigma: f64, qc: &dqma::QuantileConfig) -> f64 {
    let (l, d) = (qc.lambda(), qc.delta());
    let (lo, hi, n) = (-40.0f64, 6.0f64, 6000);
    let h = (hi - lo) / n as f64;
    let mut acc = 0.0;
    for i in 0..=n {
        let v = (lo + i as f64 * h).exp();
        let var = d * sigma * sigma * v;
        let f = (-(r - l * sigma * v).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
            * (-v).exp();
        let wgt = if i == 0 || i == n { 0.5 } else { 1.0 };
        acc += wgt * f * v;
    }
    (acc * h).ln()
}
