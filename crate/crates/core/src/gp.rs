//! Gaussian-process regression with an anisotropic Matérn 5/2 kernel and a
//! constant mean estimated by generalized least squares.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::NelderMead;
use crate::sampling::SeedStream;

const SQRT5: f64 = 2.236_067_977_499_79;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matern52Params {
    pub variance: f64,
    pub lengthscales: Vec<f64>,
    #[serde(default)]
    pub nugget: f64,
}

impl Matern52Params {
    pub fn validate(&self) -> Result<()> {
        let ok = self.variance > 0.0
            && self.variance.is_finite()
            && !self.lengthscales.is_empty()
            && self.lengthscales.iter().all(|l| *l > 0.0 && l.is_finite())
            && self.nugget >= 0.0
            && self.nugget.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid kernel parameters {self:?}")))
        }
    }
}

/// `σ²(1 + √5 r + 5r²/3) exp(−√5 r)`, `r² = Σ ((x_i − x2_i)/ρ_i)²`.
pub fn matern52(x: &[f64], x2: &[f64], params: &Matern52Params) -> f64 {
    params.variance * correlation(x, x2, &params.lengthscales)
}

fn correlation(x: &[f64], x2: &[f64], lengthscales: &[f64]) -> f64 {
    let r2: f64 = x
        .iter()
        .zip(x2)
        .zip(lengthscales)
        .map(|((a, b), l)| ((a - b) / l).powi(2))
        .sum();
    let s = SQRT5 * r2.sqrt();
    (1.0 + s + s * s / 3.0) * (-s).exp()
}

/// How the nugget `τ²` is chosen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nugget {
    Fixed(f64),
    /// Fitted by likelihood within the configured bounds.
    Estimated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GpConfig {
    pub n_starts: usize,
    pub seed: u64,
    /// Lengthscale bounds, as multiples of each input's range.
    pub lengthscale_bounds: (f64, f64),
    /// Variance bounds, as multiples of `var(z)`.
    pub variance_bounds: (f64, f64),
    /// Nugget bounds, as multiples of `var(z)` (used when estimated).
    pub nugget_bounds: (f64, f64),
    pub nugget: Nugget,
    /// Likelihood evaluations per start.
    pub max_evals: usize,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            n_starts: 10,
            seed: 0,
            lengthscale_bounds: (1e-2, 1e2),
            variance_bounds: (1e-6, 1e3),
            nugget_bounds: (1e-12, 1e-2),
            nugget: Nugget::Fixed(0.0),
            max_evals: 400,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpModel {
    pub inputs: Vec<Vec<f64>>,
    pub outputs: Vec<f64>,
    /// Constant prior mean.
    pub mean: f64,
    pub params: Matern52Params,
    /// `(K + τ²I)⁻¹ (z − mean)`.
    pub weights: Vec<f64>,
    /// Diagonal jitter that had to be added for the factorization.
    pub jitter: f64,
    /// Negative log marginal likelihood at the fitted parameters.
    pub neg_log_likelihood: f64,
}

impl GpModel {
    pub fn dim(&self) -> usize {
        self.params.lengthscales.len()
    }

    /// Posterior mean at `x`.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (xi, a) in self.inputs.iter().zip(&self.weights) {
            acc += correlation(x, xi, &self.params.lengthscales) * a;
        }
        self.mean + self.params.variance * acc
    }
}

/// Correlation matrix (unit variance) with `ratio` on the diagonal excess.
fn correlation_matrix(x: &[Vec<f64>], lengthscales: &[f64], ratio: f64) -> DMatrix<f64> {
    let n = x.len();
    let mut r = DMatrix::zeros(n, n);
    for i in 0..n {
        r[(i, i)] = 1.0 + ratio;
        for j in 0..i {
            let v = correlation(&x[i], &x[j], lengthscales);
            r[(i, j)] = v;
            r[(j, i)] = v;
        }
    }
    r
}

/// Cholesky factor, escalating a diagonal jitter from `1e-10` to `1e-6`
/// (relative to the mean diagonal) on failure.
fn factor(m: &DMatrix<f64>, escalate: bool) -> Result<(Cholesky<f64, Dyn>, f64)> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok((c, 0.0));
    }
    if escalate {
        let scale = m.diagonal().mean();
        let mut jitter = 1e-10 * scale;
        while jitter <= 1e-6 * scale * (1.0 + 1e-9) {
            let mut shifted = m.clone();
            for i in 0..m.nrows() {
                shifted[(i, i)] += jitter;
            }
            if let Some(c) = Cholesky::new(shifted) {
                return Ok((c, jitter));
            }
            jitter *= 10.0;
        }
    }
    Err(Error::Numerical(format!(
        "kernel matrix of size {} is not positive definite (jitter up to 1e-6 tried)",
        m.nrows()
    )))
}

/// Solve with one step of iterative refinement against the unshifted matrix.
fn refined_solve(m: &DMatrix<f64>, chol: &Cholesky<f64, Dyn>, b: &DVector<f64>) -> DVector<f64> {
    let mut x = chol.solve(b);
    let residual = b - m * &x;
    x += chol.solve(&residual);
    x
}

struct Profile {
    mean: f64,
    variance: f64,
    nll: f64,
}

/// GLS mean, profiled (and clamped) variance and negative log likelihood for
/// a correlation matrix `r`.
fn profile(
    r: &DMatrix<f64>,
    chol: &Cholesky<f64, Dyn>,
    z: &DVector<f64>,
    var_bounds: (f64, f64),
) -> Profile {
    let n = z.len();
    let ones = DVector::from_element(n, 1.0);
    let r_inv_1 = chol.solve(&ones);
    let r_inv_z = chol.solve(z);
    let mean = r_inv_z.sum() / r_inv_1.sum();
    let resid = z - DVector::from_element(n, mean);
    let quad = resid.dot(&refined_solve(r, chol, &resid)).max(0.0);
    let variance = (quad / n as f64).clamp(var_bounds.0, var_bounds.1);
    let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let nll = 0.5
        * (n as f64 * (2.0 * std::f64::consts::PI * variance).ln() + log_det + quad / variance);
    Profile {
        mean,
        variance,
        nll,
    }
}

fn check_data(x: &[Vec<f64>], z: &[f64]) -> Result<usize> {
    if x.len() != z.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} inputs but {} outputs",
            x.len(),
            z.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::InvalidArgument(
            "a GP needs at least two training points".into(),
        ));
    }
    let d = x[0].len();
    if d == 0 || x.iter().any(|r| r.len() != d) {
        return Err(Error::DimensionMismatch("ragged design matrix".into()));
    }
    if x.iter().flatten().chain(z).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite training data".into()));
    }
    Ok(d)
}

fn check_distinct(x: &[Vec<f64>]) -> Result<()> {
    let mut sorted: Vec<&Vec<f64>> = x.iter().collect();
    sorted.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .map(|(u, v)| u.total_cmp(v))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidArgument(
            "duplicate training inputs need a positive nugget".into(),
        ));
    }
    Ok(())
}

fn sample_variance(z: &[f64]) -> f64 {
    let n = z.len() as f64;
    let m = z.iter().sum::<f64>() / n;
    z.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n
}

fn constant_model(x: &[Vec<f64>], z: &[f64], d: usize) -> GpModel {
    GpModel {
        inputs: x.to_vec(),
        outputs: z.to_vec(),
        mean: z[0],
        params: Matern52Params {
            variance: 1.0,
            lengthscales: vec![1.0; d],
            nugget: 0.0,
        },
        weights: vec![0.0; z.len()],
        jitter: 0.0,
        neg_log_likelihood: f64::NEG_INFINITY,
    }
}

/// Fits a GP with fixed kernel parameters; only the mean is estimated.
pub fn fit_gp_fixed(x: &[Vec<f64>], z: &[f64], params: &Matern52Params) -> Result<GpModel> {
    let d = check_data(x, z)?;
    params.validate()?;
    if params.lengthscales.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "{} lengthscales for {d} inputs",
            params.lengthscales.len()
        )));
    }
    if params.nugget == 0.0 {
        check_distinct(x)?;
    }
    let ratio = params.nugget / params.variance;
    let r = correlation_matrix(x, &params.lengthscales, ratio);
    let (chol, jitter) = factor(&r, true)?;
    let zv = DVector::from_column_slice(z);
    let prof = profile(&r, &chol, &zv, (0.0, f64::INFINITY));
    let mean = prof.mean;
    let resid = &zv - DVector::from_element(z.len(), mean);
    let alpha = refined_solve(&r, &chol, &resid) / params.variance;
    Ok(GpModel {
        inputs: x.to_vec(),
        outputs: z.to_vec(),
        mean,
        params: params.clone(),
        weights: alpha.iter().copied().collect(),
        jitter: jitter * params.variance,
        neg_log_likelihood: prof.nll,
    })
}

/// Fits mean, variance, lengthscales (and optionally the nugget) by
/// maximum likelihood from `cfg.n_starts` seeded starts.
pub fn fit_gp(x: &[Vec<f64>], z: &[f64], cfg: &GpConfig) -> Result<GpModel> {
    let d = check_data(x, z)?;
    let var_z = sample_variance(z);
    if var_z == 0.0 {
        return Ok(constant_model(x, z, d));
    }
    if cfg.nugget == Nugget::Fixed(0.0) {
        check_distinct(x)?;
    }
    let zv = DVector::from_column_slice(z);
    let ranges: Vec<f64> = (0..d)
        .map(|j| {
            let (lo, hi) = x
                .iter()
                .map(|r| r[j])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
            if hi > lo {
                hi - lo
            } else {
                1.0
            }
        })
        .collect();
    let var_bounds = (cfg.variance_bounds.0 * var_z, cfg.variance_bounds.1 * var_z);
    let estimate_nugget = matches!(cfg.nugget, Nugget::Estimated);
    let fixed_nugget = match cfg.nugget {
        Nugget::Fixed(v) if v >= 0.0 => v,
        Nugget::Fixed(v) => {
            return Err(Error::InvalidArgument(format!("negative nugget {v}")))
        }
        Nugget::Estimated => 0.0,
    };

    // Search space: log lengthscales, then log(τ²/var z) when estimated.
    let mut lo: Vec<f64> = ranges.iter().map(|r| (cfg.lengthscale_bounds.0 * r).ln()).collect();
    let mut hi: Vec<f64> = ranges.iter().map(|r| (cfg.lengthscale_bounds.1 * r).ln()).collect();
    if estimate_nugget {
        lo.push(cfg.nugget_bounds.0.ln());
        hi.push(cfg.nugget_bounds.1.ln());
    }
    let unpack = |theta: &[f64]| -> (Vec<f64>, f64) {
        let ls: Vec<f64> = theta[..d].iter().map(|v| v.exp()).collect();
        let nugget = if estimate_nugget {
            theta[d].exp() * var_z
        } else {
            fixed_nugget
        };
        (ls, nugget)
    };
    // The nugget enters as a ratio to the profiled variance; with a fixed
    // nugget the ratio is iterated once from the variance of z.
    let objective = |theta: &[f64]| -> f64 {
        let (ls, nugget) = unpack(theta);
        let mut ratio = nugget / var_z;
        let mut best = f64::INFINITY;
        for _ in 0..if nugget > 0.0 { 2 } else { 1 } {
            let r = correlation_matrix(x, &ls, ratio);
            let Ok((chol, 0.0)) = factor(&r, false) else {
                return f64::INFINITY;
            };
            let p = profile(&r, &chol, &zv, var_bounds);
            best = p.nll;
            ratio = nugget / p.variance;
        }
        best
    };

    let stream = SeedStream::new(cfg.seed, "gp-starts");
    let nm = NelderMead {
        max_evals: cfg.max_evals,
        f_tol: 1e-6,
        x_tol: 1e-4,
    };
    let mut best: Option<(Vec<f64>, f64)> = None;
    for s in 0..cfg.n_starts.max(1) {
        let start: Vec<f64> = if s == 0 {
            // lengthscales at a fifth of the range, modest nugget
            lo.iter()
                .zip(&hi)
                .enumerate()
                .map(|(i, (l, h))| if i < d { (0.2 * ranges[i]).ln().clamp(*l, *h) } else { 0.5 * (l + h) })
                .collect()
        } else {
            let mut rng = stream.rng(s as u64);
            lo.iter().zip(&hi).map(|(l, h)| rng.random_range(*l..=*h)).collect()
        };
        let m = nm.minimize(objective, &start, &lo, &hi);
        if m.value.is_finite() && best.as_ref().is_none_or(|b| m.value < b.1) {
            best = Some((m.x, m.value));
        }
    }
    let (theta, _) = best.ok_or_else(|| {
        Error::Numerical("no start produced a positive-definite kernel matrix".into())
    })?;
    let (ls, nugget) = unpack(&theta);
    let r0 = correlation_matrix(x, &ls, nugget / var_z);
    let (chol0, _) = factor(&r0, true)?;
    let variance = profile(&r0, &chol0, &zv, var_bounds).variance;
    fit_gp_fixed(
        x,
        z,
        &Matern52Params {
            variance,
            lengthscales: ls,
            nugget,
        },
    )
}

/// `μ + k(x*, X) α`.
pub fn gp_mean(model: &GpModel, x_star: &[f64]) -> f64 {
    model.predict(x_star)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::sobol_design;
    use proptest::prelude::*;

    fn unit(d: usize) -> Matern52Params {
        Matern52Params {
            variance: 1.0,
            lengthscales: vec![1.0; d],
            nugget: 0.0,
        }
    }

    #[test]
    fn kernel_values() {
        let p = unit(1);
        assert_eq!(matern52(&[0.3], &[0.3], &p), 1.0);
        let v = matern52(&[0.0], &[1.0], &p);
        let s5 = 5f64.sqrt();
        assert!((v - (1.0 + s5 + 5.0 / 3.0) * (-s5).exp()).abs() < 1e-15);
        assert!((v - 0.52399).abs() < 1e-5);
        let mut last = 1.0;
        for k in 1..50 {
            let r = k as f64 * 0.1;
            let v = matern52(&[0.0], &[r], &p);
            assert_eq!(v, matern52(&[r], &[0.0], &p));
            assert!(v < last);
            last = v;
        }
    }

    #[test]
    fn two_point_closed_form() {
        let p = Matern52Params {
            variance: 2.0,
            lengthscales: vec![0.7],
            nugget: 0.0,
        };
        let x = vec![vec![0.0], vec![1.0]];
        let z = [1.0, 3.0];
        let m = fit_gp_fixed(&x, &z, &p).unwrap();
        // oracle: explicit 2x2 inverse
        let k01 = matern52(&[0.0], &[1.0], &p);
        let s2 = p.variance;
        let det = s2 * s2 - k01 * k01;
        let inv = [[s2 / det, -k01 / det], [-k01 / det, s2 / det]];
        let beta = (inv[0][0] * z[0] + inv[0][1] * z[1] + inv[1][0] * z[0] + inv[1][1] * z[1])
            / (inv[0][0] + inv[0][1] + inv[1][0] + inv[1][1]);
        let r = [z[0] - beta, z[1] - beta];
        let a = [inv[0][0] * r[0] + inv[0][1] * r[1], inv[1][0] * r[0] + inv[1][1] * r[1]];
        let xs = 0.4;
        let expected = beta + matern52(&[xs], &[0.0], &p) * a[0] + matern52(&[xs], &[1.0], &p) * a[1];
        assert!((m.mean - beta).abs() < 1e-12);
        assert!((gp_mean(&m, &[xs]) - expected).abs() < 1e-10);
        assert!((gp_mean(&m, &[0.0]) - 1.0).abs() < 1e-12);
        assert!((gp_mean(&m, &[1e4]) - beta).abs() < 1e-6);
    }

    #[test]
    fn constant_outputs() {
        let x = sobol_design(3, 10).unwrap();
        let m = fit_gp(&x, &[2.5; 10], &GpConfig::default()).unwrap();
        assert_eq!(gp_mean(&m, &[0.3, 0.2, 0.9]), 2.5);
        assert!(m.weights.iter().all(|w| *w == 0.0));
    }

    fn test_function(x: &[f64]) -> f64 {
        (3.0 * x[0]).sin() + x[1] * x[1] - 0.5 * x[2] + (x[0] * x[1] * 4.0).cos()
    }

    #[test]
    fn fitted_model_interpolates() {
        let x = sobol_design(3, 30).unwrap();
        let z: Vec<f64> = x.iter().map(|r| test_function(r)).collect();
        let m = fit_gp(&x, &z, &GpConfig::default()).unwrap();
        let scale = z.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (xi, zi) in x.iter().zip(&z) {
            assert!((gp_mean(&m, xi) - zi).abs() <= 1e-8 * scale);
        }
        // out-of-sample sanity
        let test = sobol_design(3, 64).unwrap();
        let err: f64 = test[32..].iter().map(|r| (gp_mean(&m, r) - test_function(r)).powi(2)).sum::<f64>() / 32.0;
        assert!(err.sqrt() < 0.2, "rmse {}", err.sqrt());
        let again = fit_gp(&x, &z, &GpConfig::default()).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn estimated_nugget_within_bounds() {
        let x = sobol_design(2, 25).unwrap();
        let z: Vec<f64> = x.iter().map(|r| r[0] + (5.0 * r[1]).sin()).collect();
        let cfg = GpConfig {
            nugget: Nugget::Estimated,
            ..GpConfig::default()
        };
        let m = fit_gp(&x, &z, &cfg).unwrap();
        let v = sample_variance(&z);
        assert!(m.params.nugget >= 1e-12 * v * (1.0 - 1e-9) && m.params.nugget <= 1e-2 * v * (1.0 + 1e-9));
    }

    #[test]
    fn residual_shrinks_with_nugget() {
        let x = sobol_design(2, 20).unwrap();
        let z: Vec<f64> = x.iter().map(|r| test_function(&[r[0], r[1], 0.0])).collect();
        let mut last = f64::INFINITY;
        for nugget in [1e-1, 1e-2, 1e-3, 1e-4, 1e-5] {
            let p = Matern52Params {
                variance: 1.0,
                lengthscales: vec![0.3, 0.3],
                nugget,
            };
            let m = fit_gp_fixed(&x, &z, &p).unwrap();
            let res: f64 = x.iter().zip(&z).map(|(xi, zi)| (gp_mean(&m, xi) - zi).powi(2)).sum();
            assert!(res < last);
            last = res;
        }
    }

    #[test]
    fn kernel_matrix_is_symmetric() {
        let x = sobol_design(4, 17).unwrap();
        let r = correlation_matrix(&x, &[0.5, 0.2, 1.0, 0.8], 0.0);
        assert_eq!(r.clone() - r.transpose(), DMatrix::zeros(17, 17));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(fit_gp(&[vec![0.0]], &[1.0], &GpConfig::default()).is_err());
        assert!(fit_gp(&[vec![0.0], vec![1.0]], &[1.0], &GpConfig::default()).is_err());
        let dup = vec![vec![0.5], vec![0.5]];
        assert!(matches!(fit_gp_fixed(&dup, &[0.0, 1.0], &unit(1)), Err(Error::InvalidArgument(_))));
        let noisy = Matern52Params { nugget: 0.1, ..unit(1) };
        assert!(fit_gp_fixed(&dup, &[0.0, 1.0], &noisy).is_ok());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn superposition(
            z1 in prop::collection::vec(-3.0..3.0f64, 12),
            z2 in prop::collection::vec(-3.0..3.0f64, 12),
            xs in prop::collection::vec(0.0..1.0f64, 2),
        ) {
            let x = sobol_design(2, 12).unwrap();
            let p = Matern52Params { variance: 1.3, lengthscales: vec![0.4, 0.6], nugget: 0.0 };
            let sum: Vec<f64> = z1.iter().zip(&z2).map(|(a, b)| a + b).collect();
            let a = gp_mean(&fit_gp_fixed(&x, &z1, &p).unwrap(), &xs);
            let b = gp_mean(&fit_gp_fixed(&x, &z2, &p).unwrap(), &xs);
            let c = gp_mean(&fit_gp_fixed(&x, &sum, &p).unwrap(), &xs);
            prop_assert!((a + b - c).abs() < 1e-10);
        }
    }
}
