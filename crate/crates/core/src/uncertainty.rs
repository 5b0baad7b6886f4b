//! Forecast-error scenarios with beta marginals and a Gaussian copula, the
//! covariance-form shape matrix and the minimal-radius ellipsoidal set.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::special::{inv_reg_inc_beta, normal_cdf};

#[derive(Clone, Debug, PartialEq, Error)]
pub enum UncertaintyError {
    #[error("no positive beta shapes reproduce mean {mean} and sigma {sigma} on [{lower}, {upper}]")]
    InfeasibleMoments { mean: f64, sigma: f64, lower: f64, upper: f64 },
    #[error("copula correlation is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    CopulaNotPSD { min_eigenvalue: f64 },
    #[error("shape matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// Four-parameter beta law on `[lower, upper]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BetaMarginal {
    pub shape_a: f64,
    pub shape_b: f64,
    pub lower: f64,
    pub upper: f64,
}

impl BetaMarginal {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn mean(&self) -> f64 {
        self.lower + self.shape_a * self.width() / (self.shape_a + self.shape_b)
    }

    pub fn variance(&self) -> f64 {
        let (a, b) = (self.shape_a, self.shape_b);
        let s = a + b;
        a * b * self.width() * self.width() / (s * s * (s + 1.0))
    }

    pub fn std_dev(&self) -> f64 {
        libm::sqrt(self.variance())
    }

    pub fn is_valid(&self) -> bool {
        self.shape_a > 0.0 && self.shape_b > 0.0 && self.lower < self.upper
    }

    pub fn cdf(&self, x: f64) -> f64 {
        crate::special::reg_inc_beta(self.shape_a, self.shape_b, (x - self.lower) / self.width())
    }

    pub fn quantile(&self, u: f64, tol: f64) -> f64 {
        self.lower + self.width() * inv_reg_inc_beta(self.shape_a, self.shape_b, u, tol / self.width())
    }
}

/// Beta shapes with the requested mean and standard deviation on `[lower, upper]`.
pub fn calibrate_marginal(mean: f64, sigma: f64, lower: f64, upper: f64) -> Result<BetaMarginal, UncertaintyError> {
    let err = UncertaintyError::InfeasibleMoments { mean, sigma, lower, upper };
    let w = upper - lower;
    if !(w > 0.0) || !(sigma > 0.0) {
        return Err(err);
    }
    let m = (mean - lower) / w;
    if !(m > 0.0 && m < 1.0) {
        return Err(err);
    }
    let nu = m * (1.0 - m) * w * w / (sigma * sigma) - 1.0;
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(err);
    }
    Ok(BetaMarginal { shape_a: m * nu, shape_b: (1.0 - m) * nu, lower, upper })
}

/// Linear correlation of a Gaussian copula with the given Spearman correlation.
pub fn rank_to_linear(rho_s: f64) -> f64 {
    2.0 * libm::sin(core::f64::consts::PI * rho_s / 6.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CopulaPolicy {
    /// Fail when the converted correlation is not positive definite.
    Strict,
    /// Clip negative eigenvalues and renormalize to unit diagonal.
    Repair,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSet {
    /// One realization per row, one wind farm per column, pu.
    pub samples: DMatrix<f64>,
    pub seed: u64,
    pub provenance: String,
    /// Set when the copula correlation had to be repaired.
    pub copula_repaired: bool,
}

impl ScenarioSet {
    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.samples.row(i).iter().copied().collect()
    }

    /// The same set moved by `delta` in every row.
    pub fn shifted(&self, delta: &[f64]) -> ScenarioSet {
        let mut s = self.clone();
        for mut r in s.samples.row_iter_mut() {
            for (v, d) in r.iter_mut().zip(delta) {
                *v += d;
            }
        }
        s
    }
}

/// Copula correlation from a rank correlation, with optional repair.
pub fn copula_correlation(rank_corr: &DMatrix<f64>, policy: CopulaPolicy) -> Result<(DMatrix<f64>, bool), UncertaintyError> {
    let n = rank_corr.nrows();
    let lin = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { rank_to_linear(rank_corr[(i, j)]) });
    if crate::linalg::cholesky(&lin).is_some() {
        return Ok((lin, false));
    }
    let eig = lin.clone().symmetric_eigen();
    let min_eigenvalue = eig.eigenvalues.min();
    match policy {
        CopulaPolicy::Strict => Err(UncertaintyError::CopulaNotPSD { min_eigenvalue }),
        CopulaPolicy::Repair => {
            let clipped = eig.eigenvalues.map(|l| l.max(1e-8));
            let r = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
            let d: Vec<f64> = (0..n).map(|i| libm::sqrt(r[(i, i)])).collect();
            let fixed = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { r[(i, j)] / (d[i] * d[j]) });
            Ok((fixed, true))
        }
    }
}

/// Draws scenarios sample-by-sample: row `i` only depends on `(seed, i)`, so any
/// partition of the index range produces the same rows.
#[derive(Clone, Debug)]
pub struct ScenarioSampler {
    forecast: Vec<f64>,
    marginals: Vec<BetaMarginal>,
    chol: DMatrix<f64>,
    seed: u64,
    tol: f64,
    pub copula_repaired: bool,
}

impl ScenarioSampler {
    pub fn new(
        forecast: &[f64],
        marginals: &[BetaMarginal],
        rank_corr: &DMatrix<f64>,
        seed: u64,
        policy: CopulaPolicy,
        quantile_tol: f64,
    ) -> Result<Self, UncertaintyError> {
        let n = forecast.len();
        if marginals.len() != n {
            return Err(UncertaintyError::Dimension { expected: n, got: marginals.len() });
        }
        if rank_corr.nrows() != n || rank_corr.ncols() != n {
            return Err(UncertaintyError::Dimension { expected: n, got: rank_corr.nrows() });
        }
        let (lin, repaired) = copula_correlation(rank_corr, policy)?;
        let chol = crate::linalg::cholesky(&lin).ok_or(UncertaintyError::CopulaNotPSD { min_eigenvalue: 0.0 })?;
        Ok(Self {
            forecast: forecast.to_vec(),
            marginals: marginals.to_vec(),
            chol,
            seed,
            tol: quantile_tol,
            copula_repaired: repaired,
        })
    }

    pub fn dim(&self) -> usize {
        self.forecast.len()
    }

    pub fn sample(&self, index: u64) -> Vec<f64> {
        let n = self.dim();
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        let eps: DVector<f64> = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        let z = &self.chol * eps;
        (0..n)
            .map(|i| {
                let u = normal_cdf(z[i]);
                self.forecast[i] + self.marginals[i].quantile(u, self.tol)
            })
            .collect()
    }
}

pub fn sample_scenarios(
    forecast: &[f64],
    marginals: &[BetaMarginal],
    rank_corr: &DMatrix<f64>,
    n_total: usize,
    seed: u64,
    policy: CopulaPolicy,
) -> Result<ScenarioSet, UncertaintyError> {
    let sampler = ScenarioSampler::new(forecast, marginals, rank_corr, seed, policy, 1e-12)?;
    let n = forecast.len();
    let mut samples = DMatrix::zeros(n_total, n);
    for i in 0..n_total {
        let row = sampler.sample(i as u64);
        for (j, v) in row.into_iter().enumerate() {
            samples[(i, j)] = v;
        }
    }
    Ok(ScenarioSet {
        samples,
        seed,
        provenance: String::from("gaussian-copula/beta/chacha20"),
        copula_repaired: sampler.copula_repaired,
    })
}

/// `Q_ij = rho_ij sigma_i sigma_j`.
pub fn build_shape_matrix(sigmas: &[f64], rho: &DMatrix<f64>) -> Result<DMatrix<f64>, UncertaintyError> {
    let n = sigmas.len();
    if rho.nrows() != n || rho.ncols() != n {
        return Err(UncertaintyError::Dimension { expected: n, got: rho.nrows() });
    }
    if sigmas.iter().any(|s| !(*s > 0.0)) {
        return Err(UncertaintyError::NotPositiveDefinite);
    }
    let q = DMatrix::from_fn(n, n, |i, j| if i == j { sigmas[i] * sigmas[i] } else { rho[(i, j)] * sigmas[i] * sigmas[j] });
    // a plain Cholesky accepts matrices that are singular up to rounding
    let eig = q.clone().symmetric_eigen();
    let scale = eig.eigenvalues.amax();
    if crate::linalg::cholesky(&q).is_none() || eig.eigenvalues.min() <= 1e-12 * scale {
        return Err(UncertaintyError::NotPositiveDefinite);
    }
    Ok(q)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EllipsoidalUncertaintySet {
    pub center: Vec<f64>,
    pub q: DMatrix<f64>,
    pub eta: f64,
}

impl EllipsoidalUncertaintySet {
    pub fn contains(&self, p: &[f64]) -> bool {
        mahalanobis_sq(self, p) <= self.eta
    }
}

/// `(p - c)^T Q^-1 (p - c)` by a Cholesky solve. `NaN` if `Q` is not PD.
pub fn quadratic_form(q: &DMatrix<f64>, center: &[f64], p: &[f64]) -> f64 {
    let Some(chol) = nalgebra::linalg::Cholesky::new(q.clone()) else {
        return f64::NAN;
    };
    let d = DVector::from_iterator(center.len(), p.iter().zip(center).map(|(a, b)| a - b));
    let x = chol.solve(&d);
    d.dot(&x)
}

pub fn mahalanobis_sq(eus: &EllipsoidalUncertaintySet, p: &[f64]) -> f64 {
    quadratic_form(&eus.q, &eus.center, p)
}

/// Squared Mahalanobis distances of every scenario to `center`.
pub fn scenario_distances(center: &[f64], q: &DMatrix<f64>, scenarios: &ScenarioSet) -> Result<Vec<f64>, UncertaintyError> {
    let chol = nalgebra::linalg::Cholesky::new(q.clone()).ok_or(UncertaintyError::NotPositiveDefinite)?;
    let n = center.len();
    if scenarios.samples.ncols() != n {
        return Err(UncertaintyError::Dimension { expected: n, got: scenarios.samples.ncols() });
    }
    Ok(scenarios
        .samples
        .row_iter()
        .map(|r| {
            let d = DVector::from_iterator(n, r.iter().zip(center).map(|(a, b)| a - b));
            d.dot(&chol.solve(&d))
        })
        .collect())
}

/// Index (1-based) of the order statistic that realizes coverage `alpha`.
pub fn coverage_rank(alpha: f64, n: usize) -> usize {
    let x = alpha * n as f64;
    // 0.95 * 10000 must give 9500, not 9501
    let r = libm::round(x);
    let k = if (x - r).abs() <= 1e-9 * (n.max(1) as f64) { r } else { libm::ceil(x) };
    (k.max(0.0) as usize).min(n)
}

/// Smallest `eta` such that at least `alpha_conf` of the scenarios lie in the set.
pub fn fit_eus(
    center: &[f64],
    q: &DMatrix<f64>,
    scenarios: &ScenarioSet,
    alpha_conf: f64,
) -> Result<EllipsoidalUncertaintySet, UncertaintyError> {
    let mut d = scenario_distances(center, q, scenarios)?;
    d.sort_by(|a, b| a.total_cmp(b));
    let k = coverage_rank(alpha_conf, d.len());
    let eta = if k == 0 { 0.0 } else { d[k - 1].max(0.0) };
    Ok(EllipsoidalUncertaintySet { center: center.to_vec(), q: q.clone(), eta })
}

/// Fraction of `distances` not exceeding `eta`.
pub fn coverage(distances: &[f64], eta: f64) -> f64 {
    if distances.is_empty() {
        return 0.0;
    }
    distances.iter().filter(|&&d| d <= eta).count() as f64 / distances.len() as f64
}

/// Ranks starting at 1, ties get their average rank.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / libm::sqrt(sxx * syy)
}

/// Spearman rank correlation.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&ranks(x), &ranks(y))
}
