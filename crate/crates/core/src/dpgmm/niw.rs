//! Normal-Inverse-Wishart conjugacy: sufficient statistics, posterior
//! updates, marginal likelihood, Student-t posterior predictive, and
//! posterior sampling of Gaussian component parameters.

use super::{DpgmmError, DpgmmResult};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use statrs::function::gamma::ln_gamma;

pub const LN_2PI: f64 = 1.8378770664093453;
const LN_PI: f64 = 1.1447298858494002;
/// Added to a scale matrix when its Cholesky fails.
pub const REGULARIZATION: f64 = 1e-6;

/// NIW prior (or posterior — same family) over a Gaussian's mean and
/// covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct NiwPrior {
    pub m0: DVector<f64>,
    pub kappa0: f64,
    pub psi0: DMatrix<f64>,
    pub nu0: f64,
}

impl NiwPrior {
    pub fn validate(&self) -> DpgmmResult<()> {
        let d = self.m0.len();
        if self.psi0.nrows() != d || self.psi0.ncols() != d {
            return Err(DpgmmError::InvalidConfig(format!(
                "Psi0 is {}x{}, expected {d}x{d}",
                self.psi0.nrows(),
                self.psi0.ncols()
            )));
        }
        if self.kappa0 <= 0.0 {
            return Err(DpgmmError::InvalidConfig("kappa0 must be > 0".into()));
        }
        if self.nu0 <= d as f64 + 1.0 {
            return Err(DpgmmError::InvalidConfig(format!(
                "nu0 must exceed dim + 1 = {}",
                d + 1
            )));
        }
        let asym = (&self.psi0 - self.psi0.transpose()).abs().max();
        if asym > 1e-9 {
            return Err(DpgmmError::InvalidConfig("Psi0 must be symmetric".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.m0.len()
    }

    /// Empirical-Bayes default: m0 = data mean, kappa0 = 1, Psi0 = diagonal
    /// of the data covariance, nu0 = dim + 3.
    pub fn from_data(frames: &[DVector<f64>]) -> DpgmmResult<Self> {
        if frames.is_empty() {
            return Err(DpgmmError::EmptyInput);
        }
        let d = frames[0].len();
        let n = frames.len() as f64;
        let mut mean = DVector::zeros(d);
        for x in frames {
            mean += x;
        }
        mean /= n;
        let mut var = DVector::from_element(d, 0.0);
        for x in frames {
            for i in 0..d {
                let diff = x[i] - mean[i];
                var[i] += diff * diff;
            }
        }
        var /= n.max(2.0) - 1.0;
        let psi0 = DMatrix::from_diagonal(&var.map(|v| v.max(REGULARIZATION)));
        Ok(NiwPrior {
            m0: mean,
            kappa0: 1.0,
            psi0,
            nu0: d as f64 + 3.0,
        })
    }
}

/// Zero-mean-form sufficient statistics: count, sum, and sum of outer
/// products.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussStats {
    pub n: f64,
    pub sum: DVector<f64>,
    pub scatter: DMatrix<f64>,
}

impl GaussStats {
    pub fn empty(dim: usize) -> Self {
        GaussStats {
            n: 0.0,
            sum: DVector::zeros(dim),
            scatter: DMatrix::zeros(dim, dim),
        }
    }

    pub fn add(&mut self, x: &DVector<f64>) {
        self.n += 1.0;
        self.sum += x;
        self.scatter.ger(1.0, x, x, 1.0);
    }

    pub fn merged(&self, other: &GaussStats) -> GaussStats {
        GaussStats {
            n: self.n + other.n,
            sum: &self.sum + &other.sum,
            scatter: &self.scatter + &other.scatter,
        }
    }

    pub fn count(&self) -> usize {
        self.n as usize
    }
}

/// Posterior NIW parameters given prior and stats.
pub fn posterior(prior: &NiwPrior, stats: &GaussStats) -> NiwPrior {
    let kappa_n = prior.kappa0 + stats.n;
    let nu_n = prior.nu0 + stats.n;
    let m_n = (&prior.m0 * prior.kappa0 + &stats.sum) / kappa_n;
    // Psi_n = Psi0 + S + kappa0 m0 m0' - kappa_n m_n m_n', with S the
    // zero-mean scatter.
    let mut psi_n = &prior.psi0 + &stats.scatter;
    psi_n.ger(prior.kappa0, &prior.m0, &prior.m0, 1.0);
    psi_n.ger(-kappa_n, &m_n, &m_n, 1.0);
    // Exact symmetry keeps Cholesky happy after many rank-one updates.
    let psi_n = (&psi_n + psi_n.transpose()) * 0.5;
    NiwPrior {
        m0: m_n,
        kappa0: kappa_n,
        psi0: psi_n,
        nu0: nu_n,
    }
}

fn ln_multivariate_gamma(d: usize, a: f64) -> f64 {
    let mut total = d as f64 * (d as f64 - 1.0) / 4.0 * LN_PI;
    for j in 1..=d {
        total += ln_gamma(a + (1.0 - j as f64) / 2.0);
    }
    total
}

fn safe_cholesky(m: &DMatrix<f64>) -> Cholesky<f64, Dyn> {
    if let Some(chol) = Cholesky::new(m.clone()) {
        return chol;
    }
    log::warn!(
        "singular scale matrix; regularizing with {REGULARIZATION} * I"
    );
    let mut fixed = m.clone();
    let mut eps = REGULARIZATION;
    loop {
        for i in 0..fixed.nrows() {
            fixed[(i, i)] += eps;
        }
        if let Some(chol) = Cholesky::new(fixed.clone()) {
            return chol;
        }
        eps *= 10.0;
    }
}

fn ln_det(m: &DMatrix<f64>) -> f64 {
    let chol = safe_cholesky(m);
    2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// log of the NIW normalizer Z(kappa, nu, Psi).
fn ln_z(dim: usize, kappa: f64, nu: f64, psi: &DMatrix<f64>) -> f64 {
    let d = dim as f64;
    (nu * d / 2.0) * std::f64::consts::LN_2 + ln_multivariate_gamma(dim, nu / 2.0)
        + (d / 2.0) * (2.0 * std::f64::consts::PI / kappa).ln()
        - (nu / 2.0) * ln_det(psi)
}

/// Marginal log likelihood of the stats' data under the NIW prior.
pub fn marginal_log_likelihood(prior: &NiwPrior, stats: &GaussStats) -> f64 {
    let d = prior.dim();
    let post = posterior(prior, stats);
    ln_z(d, post.kappa0, post.nu0, &post.psi0) - ln_z(d, prior.kappa0, prior.nu0, &prior.psi0)
        - stats.n * d as f64 / 2.0 * LN_2PI
}

/// Student-t posterior predictive density of `x` given a cluster's stats
/// under the NIW prior: x | stats ~ t_{nu-d+1}(m, Psi (kappa+1)/(kappa (nu-d+1))).
pub fn log_predictive(stats: &GaussStats, prior: &NiwPrior, x: &DVector<f64>) -> DpgmmResult<f64> {
    let d = prior.dim();
    if x.len() != d {
        return Err(DpgmmError::DimMismatch {
            expected: d,
            got: x.len(),
        });
    }
    let post = posterior(prior, stats);
    let df = post.nu0 - d as f64 + 1.0;
    let scale = &post.psi0 * ((post.kappa0 + 1.0) / (post.kappa0 * df));
    let chol = safe_cholesky(&scale);
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let diff = x - &post.m0;
    let solved = chol.solve(&diff);
    let mahal = diff.dot(&solved);
    let dd = d as f64;
    Ok(ln_gamma((df + dd) / 2.0)
        - ln_gamma(df / 2.0)
        - dd / 2.0 * (df * std::f64::consts::PI).ln()
        - 0.5 * log_det
        - (df + dd) / 2.0 * (1.0 + mahal / df).ln())
}

/// A sampled Gaussian component, stored via its Cholesky factor for fast
/// density evaluation.
#[derive(Debug, Clone)]
pub struct GaussParams {
    pub mean: DVector<f64>,
    chol_lower: DMatrix<f64>,
    log_det: f64,
}

impl GaussParams {
    pub fn new(mean: DVector<f64>, cov: &DMatrix<f64>) -> Self {
        let chol = safe_cholesky(cov);
        let chol_lower = chol.l();
        let log_det = 2.0 * chol_lower.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        GaussParams {
            mean,
            chol_lower,
            log_det,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Gaussian log density; `scratch` must have length dim.
    pub fn log_pdf(&self, x: &[f64], scratch: &mut [f64]) -> f64 {
        let d = self.mean.len();
        for i in 0..d {
            scratch[i] = x[i] - self.mean[i];
        }
        // Forward substitution: solve L y = (x - mean), accumulate |y|^2.
        let mut mahal = 0.0;
        for i in 0..d {
            let mut v = scratch[i];
            for j in 0..i {
                v -= self.chol_lower[(i, j)] * scratch[j];
            }
            let y = v / self.chol_lower[(i, i)];
            scratch[i] = y;
            mahal += y * y;
        }
        -0.5 * (d as f64 * LN_2PI + self.log_det + mahal)
    }
}

/// Draws (mean, covariance) from the NIW posterior: covariance from the
/// inverse-Wishart via Bartlett decomposition, then mean ~ N(m, cov/kappa).
pub fn sample_gaussian<R: Rng>(post: &NiwPrior, rng: &mut R) -> GaussParams {
    let d = post.dim();
    // W ~ Wishart(Psi^-1, nu); cov = W^-1 ~ IW(Psi, nu).
    let psi_chol = safe_cholesky(&post.psi0);
    let psi_inv = psi_chol.inverse();
    let v_chol = safe_cholesky(&psi_inv);
    let l = v_chol.l();
    let mut a = DMatrix::zeros(d, d);
    for i in 0..d {
        let chi = ChiSquared::new(post.nu0 - i as f64).expect("valid dof");
        a[(i, i)] = chi.sample(rng).max(1e-12).sqrt();
        for j in 0..i {
            a[(i, j)] = <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng);
        }
    }
    let la = &l * &a;
    let w = &la * la.transpose();
    let w_chol = safe_cholesky(&w);
    let cov = w_chol.inverse();
    let cov = (&cov + cov.transpose()) * 0.5;

    let cov_chol = safe_cholesky(&cov);
    let z = DVector::from_fn(d, |_, _| {
        <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
    });
    let mean = &post.m0 + (cov_chol.l() * z) / post.kappa0.sqrt();
    GaussParams::new(mean, &cov)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prior_1d() -> NiwPrior {
        NiwPrior {
            m0: DVector::from_element(1, 0.0),
            kappa0: 1.0,
            psi0: DMatrix::from_element(1, 1, 1.0),
            nu0: 3.0,
        }
    }

    #[test]
    fn empty_cluster_predictive_matches_1d_student_t() {
        // For the empty cluster the predictive is t_df(m0, Psi0 (k+1)/(k df))
        // with df = nu0 - d + 1 = 3. Oracle: univariate Student-t density.
        let prior = prior_1d();
        let stats = GaussStats::empty(1);
        let x = DVector::from_element(1, 0.0);
        let got = log_predictive(&stats, &prior, &x).unwrap();

        let df = 3.0f64;
        let scale2 = 1.0 * (1.0 + 1.0) / (1.0 * df); // sigma^2
        let t = 0.0f64; // (x - loc) / sigma
        let oracle = ln_gamma((df + 1.0) / 2.0)
            - ln_gamma(df / 2.0)
            - 0.5 * (df * std::f64::consts::PI * scale2).ln()
            - (df + 1.0) / 2.0 * (1.0 + t * t / (df * scale2)).ln();
        assert!((got - oracle).abs() < 1e-10, "{got} vs {oracle}");
    }

    #[test]
    fn predictive_is_symmetric_about_posterior_mean() {
        let prior = prior_1d();
        let mut stats = GaussStats::empty(1);
        stats.add(&DVector::from_element(1, 2.0));
        stats.add(&DVector::from_element(1, 4.0));
        let post = posterior(&prior, &stats);
        let m = post.m0[0];
        for delta in [0.3, 1.7, 5.0] {
            let hi = log_predictive(&stats, &prior, &DVector::from_element(1, m + delta)).unwrap();
            let lo = log_predictive(&stats, &prior, &DVector::from_element(1, m - delta)).unwrap();
            assert!((hi - lo).abs() < 1e-12);
        }
    }

    #[test]
    fn observing_a_point_raises_its_predictive() {
        let prior = prior_1d();
        let x = DVector::from_element(1, 3.0);
        let empty = GaussStats::empty(1);
        let before = log_predictive(&empty, &prior, &x).unwrap();
        let mut stats = GaussStats::empty(1);
        stats.add(&x);
        let after = log_predictive(&stats, &prior, &x).unwrap();
        assert!(after > before);
    }

    #[test]
    fn marginal_likelihood_matches_sequential_predictives() {
        // p(x1, x2) = p(x1) p(x2 | x1) under conjugacy.
        let prior = prior_1d();
        let x1 = DVector::from_element(1, 0.5);
        let x2 = DVector::from_element(1, -1.2);
        let empty = GaussStats::empty(1);
        let mut after_one = GaussStats::empty(1);
        after_one.add(&x1);
        let mut both = GaussStats::empty(1);
        both.add(&x1);
        both.add(&x2);
        let sequential = log_predictive(&empty, &prior, &x1).unwrap()
            + log_predictive(&after_one, &prior, &x2).unwrap();
        let joint = marginal_log_likelihood(&prior, &both);
        assert!((sequential - joint).abs() < 1e-9, "{sequential} vs {joint}");
    }

    #[test]
    fn posterior_mean_shrinks_toward_data() {
        let prior = prior_1d();
        let mut stats = GaussStats::empty(1);
        for _ in 0..100 {
            stats.add(&DVector::from_element(1, 5.0));
        }
        let post = posterior(&prior, &stats);
        assert!((post.m0[0] - 5.0).abs() < 0.1);
        assert_eq!(post.kappa0, 101.0);
        assert_eq!(post.nu0, 103.0);
    }

    #[test]
    fn sampled_params_concentrate_on_data() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let prior = NiwPrior {
            m0: DVector::zeros(2),
            kappa0: 1.0,
            psi0: DMatrix::identity(2, 2),
            nu0: 5.0,
        };
        let mut stats = GaussStats::empty(2);
        for i in 0..500 {
            let x = DVector::from_vec(vec![3.0 + 0.01 * (i % 7) as f64, -2.0]);
            stats.add(&x);
        }
        let post = posterior(&prior, &stats);
        let params = sample_gaussian(&post, &mut rng);
        assert!((params.mean[0] - 3.0).abs() < 0.3);
        assert!((params.mean[1] + 2.0).abs() < 0.3);
    }
}
