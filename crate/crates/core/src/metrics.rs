//! Error metrics of a quantization: excess quantization error, relative
//! probability error, and bootstrap spreads of the IS estimators.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maps::{
    assign_all, check_sample, quantization_error_from, GridMap, InnerProductWeights, MapSet,
    PrototypeSet,
};
use crate::sampling::SeedStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbationConfig {
    pub n_gamma: usize,
    /// Noise standard deviation relative to each prototype's RMS pixel value.
    pub scale: f64,
    pub seed: u64,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self {
            n_gamma: 100,
            scale: 0.1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BootstrapConfig {
    pub n_boot: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            n_boot: 100,
            seed: 0,
        }
    }
}

impl BootstrapConfig {
    fn validate(&self) -> Result<()> {
        if self.n_boot < 2 {
            return Err(Error::InvalidArgument("n_boot must be >= 2".into()));
        }
        Ok(())
    }
}

/// `n_gamma` noisy copies of `gamma`: prototype `j` of copy `r` gets i.i.d.
/// `N(0, (scale · ‖γ_j‖ / s)²)` pixel noise.
pub fn perturb_prototypes(gamma: &PrototypeSet, cfg: &PerturbationConfig) -> Result<Vec<PrototypeSet>> {
    if !(cfg.scale >= 0.0 && cfg.scale.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "perturbation scale must be finite and >= 0, got {}",
            cfg.scale
        )));
    }
    let stream = SeedStream::new(cfg.seed, "perturbation");
    let ell = gamma.len();
    let side = gamma.side();
    (0..cfg.n_gamma)
        .map(|r| {
            let protos = gamma
                .prototypes()
                .iter()
                .enumerate()
                .map(|(j, p)| {
                    let sd = cfg.scale * p.norm() / side as f64;
                    if sd == 0.0 {
                        return p.clone();
                    }
                    let mut rng = stream.rng((r * ell + j) as u64);
                    let v = p
                        .values()
                        .iter()
                        .map(|y| y + sd * rng.sample::<f64, _>(StandardNormal))
                        .collect();
                    GridMap::new(side, v).expect("finite perturbation")
                })
                .collect();
            PrototypeSet::new(protos)
        })
        .collect()
}

/// `(ê(Γ̂) − ê(Γ*)) / ê(Γ*)` on a common sample.
pub fn excess_quantization_error(
    gamma_hat: &PrototypeSet,
    gamma_star: &PrototypeSet,
    maps: &MapSet,
    is_weights: &[f64],
    w: &InnerProductWeights,
) -> Result<f64> {
    check_sample(gamma_hat, maps, is_weights, w)?;
    check_sample(gamma_star, maps, is_weights, w)?;
    let e_hat = quantization_error_from(&assign_all(gamma_hat, maps, w), is_weights);
    let e_star = quantization_error_from(&assign_all(gamma_star, maps, w), is_weights);
    if e_star == 0.0 {
        return Err(Error::InvalidArgument(
            "reference quantization error is zero".into(),
        ));
    }
    Ok((e_hat - e_star) / e_star)
}

fn cell_masses(assign: &[(usize, f64)], is_weights: &[f64], ell: usize) -> Vec<f64> {
    let mut m = vec![0.0; ell];
    for ((j, _), w) in assign.iter().zip(is_weights) {
        m[*j] += w;
    }
    m
}

/// `|P̂(Γ, j, y) − P̂(Γ, j, ŷ)| / P̂(Γ, j, y)` for every cell; `None` where
/// the true-map probability is zero.
pub fn relative_probability_errors(
    gamma: &PrototypeSet,
    maps_true: &MapSet,
    maps_pred: &MapSet,
    is_weights: &[f64],
    w: &InnerProductWeights,
) -> Result<Vec<Option<f64>>> {
    check_sample(gamma, maps_true, is_weights, w)?;
    check_sample(gamma, maps_pred, is_weights, w)?;
    let ell = gamma.len();
    let p_true = cell_masses(&assign_all(gamma, maps_true, w), is_weights, ell);
    let p_pred = cell_masses(&assign_all(gamma, maps_pred, w), is_weights, ell);
    Ok(p_true
        .iter()
        .zip(&p_pred)
        .map(|(t, p)| (*t > 0.0).then(|| (t - p).abs() / t))
        .collect())
}

/// Relative probability error of cell `j` (0-based).
pub fn relative_probability_error(
    gamma: &PrototypeSet,
    j: usize,
    maps_true: &MapSet,
    maps_pred: &MapSet,
    is_weights: &[f64],
    w: &InnerProductWeights,
) -> Result<Option<f64>> {
    if j >= gamma.len() {
        return Err(Error::InvalidArgument(format!("cell {j} out of range")));
    }
    Ok(relative_probability_errors(gamma, maps_true, maps_pred, is_weights, w)?[j])
}

/// Mean and sample standard deviation; deviations are taken from the first
/// value so that a constant column has exactly zero spread.
fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let d: Vec<f64> = v.iter().map(|x| x - v[0]).collect();
    let md = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - md).powi(2)).sum::<f64>() / (n - 1.0);
    (v[0] + md, var.sqrt())
}

/// Bootstrap coefficient of variation of every cell probability; `None`
/// where the bootstrap mean is zero.
pub fn is_probability_cvs(
    gamma: &PrototypeSet,
    maps: &MapSet,
    is_weights: &[f64],
    cfg: &BootstrapConfig,
    w: &InnerProductWeights,
) -> Result<Vec<Option<f64>>> {
    check_sample(gamma, maps, is_weights, w)?;
    let assign: Vec<usize> = assign_all(gamma, maps, w).into_iter().map(|a| a.0).collect();
    probability_cvs_from(&assign, is_weights, gamma.len(), cfg)
}

/// Bootstrap coefficient of variation from precomputed cell memberships.
pub fn probability_cvs_from(
    assign: &[usize],
    is_weights: &[f64],
    ell: usize,
    cfg: &BootstrapConfig,
) -> Result<Vec<Option<f64>>> {
    cfg.validate()?;
    if assign.len() != is_weights.len() || assign.is_empty() {
        return Err(Error::DimensionMismatch(
            "memberships and weights must be nonempty and aligned".into(),
        ));
    }
    let n = assign.len();
    let stream = SeedStream::new(cfg.seed, "bootstrap");
    let reps: Vec<Vec<f64>> = (0..cfg.n_boot)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream.rng(b as u64);
            let mut m = vec![0.0; ell];
            for _ in 0..n {
                let i = rng.random_range(0..n);
                m[assign[i]] += is_weights[i];
            }
            m.iter().map(|v| v / n as f64).collect()
        })
        .collect();
    Ok((0..ell)
        .map(|j| {
            let col: Vec<f64> = reps.iter().map(|r| r[j]).collect();
            let (mean, sd) = mean_sd(&col);
            (mean > 0.0).then(|| sd / mean)
        })
        .collect())
}

/// Bootstrap CV of the probability of cell `j`.
pub fn is_probability_cv(
    gamma: &PrototypeSet,
    j: usize,
    maps: &MapSet,
    is_weights: &[f64],
    cfg: &BootstrapConfig,
    w: &InnerProductWeights,
) -> Result<Option<f64>> {
    if j >= gamma.len() {
        return Err(Error::InvalidArgument(format!("cell {j} out of range")));
    }
    Ok(is_probability_cvs(gamma, maps, is_weights, cfg, w)?[j])
}

/// Type-7 (linear interpolation) empirical quantile.
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() || !(0.0..=1.0).contains(&q) {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = q * (v.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Some(v[lo] + (h - lo as f64) * (v[hi] - v[lo]))
}

/// 90% quantile over pixels of the bootstrap standard deviation of the
/// centroid of cell `j`; `None` if the cell is empty in the base sample.
pub fn is_centroid_std(
    gamma: &PrototypeSet,
    j: usize,
    maps: &MapSet,
    is_weights: &[f64],
    cfg: &BootstrapConfig,
    w: &InnerProductWeights,
) -> Result<Option<f64>> {
    if j >= gamma.len() {
        return Err(Error::InvalidArgument(format!("cell {j} out of range")));
    }
    Ok(is_centroid_stds(gamma, maps, is_weights, cfg, w)?[j])
}

/// [`is_centroid_std`] of every cell, sharing the bootstrap replicates.
/// Replicates in which a cell gets no mass are left out for that cell.
pub fn is_centroid_stds(
    gamma: &PrototypeSet,
    maps: &MapSet,
    is_weights: &[f64],
    cfg: &BootstrapConfig,
    w: &InnerProductWeights,
) -> Result<Vec<Option<f64>>> {
    check_sample(gamma, maps, is_weights, w)?;
    cfg.validate()?;
    let ell = gamma.len();
    let assign: Vec<usize> = assign_all(gamma, maps, w).into_iter().map(|a| a.0).collect();
    let mut occupied = vec![false; ell];
    for (a, wk) in assign.iter().zip(is_weights) {
        occupied[*a] |= *wk > 0.0;
    }
    let n = assign.len();
    let px = maps.pixels();
    let stream = SeedStream::new(cfg.seed, "bootstrap-centroid");
    // per replicate: ℓ centroids (row-major) and the cell masses
    let reps: Vec<(Vec<f64>, Vec<f64>)> = (0..cfg.n_boot)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream.rng(b as u64);
            let mut sums = vec![0.0; ell * px];
            let mut mass = vec![0.0; ell];
            for _ in 0..n {
                let i = rng.random_range(0..n);
                let (j, wk) = (assign[i], is_weights[i]);
                if wk > 0.0 {
                    mass[j] += wk;
                    for (s, y) in sums[j * px..(j + 1) * px].iter_mut().zip(maps.get(i)) {
                        *s += wk * y;
                    }
                }
            }
            for (cell, m) in sums.chunks_exact_mut(px).zip(&mass) {
                if *m > 0.0 {
                    cell.iter_mut().for_each(|s| *s /= m);
                }
            }
            (sums, mass)
        })
        .collect();
    Ok((0..ell)
        .map(|j| {
            if !occupied[j] {
                return None;
            }
            let live: Vec<&[f64]> = reps
                .iter()
                .filter(|r| r.1[j] > 0.0)
                .map(|r| &r.0[j * px..(j + 1) * px])
                .collect();
            if live.len() < 2 {
                return None;
            }
            let sds: Vec<f64> = (0..px)
                .map(|p| {
                    let col: Vec<f64> = live.iter().map(|r| r[p]).collect();
                    mean_sd(&col).1
                })
                .collect();
            quantile(&sds, 0.9)
        })
        .collect())
}

/// Distribution summary of a metric, ignoring undefined values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub undefined: usize,
    pub min: Option<f64>,
    pub q1: Option<f64>,
    pub median: Option<f64>,
    pub q3: Option<f64>,
    pub max: Option<f64>,
}

pub fn summarize(values: &[Option<f64>]) -> Summary {
    let v: Vec<f64> = values.iter().flatten().copied().collect();
    Summary {
        count: v.len(),
        undefined: values.len() - v.len(),
        min: quantile(&v, 0.0),
        q1: quantile(&v, 0.25),
        median: quantile(&v, 0.5),
        q3: quantile(&v, 0.75),
        max: quantile(&v, 1.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pixels(v: &[f64]) -> MapSet {
        MapSet::from_flat(1, v.to_vec()).unwrap()
    }

    fn protos(v: &[f64]) -> PrototypeSet {
        PrototypeSet::new(v.iter().map(|x| GridMap::new(1, vec![*x]).unwrap()).collect()).unwrap()
    }

    fn w1() -> InnerProductWeights {
        InnerProductWeights::uniform(1)
    }

    #[test]
    fn perturbation_null_and_moments() {
        let g = PrototypeSet::new(vec![
            GridMap::from_fn(8, |r, c| (r + c) as f64 * 0.1).unwrap(),
            GridMap::from_fn(8, |r, _| r as f64).unwrap(),
        ])
        .unwrap();
        let same = perturb_prototypes(&g, &PerturbationConfig { n_gamma: 4, scale: 0.0, seed: 1 }).unwrap();
        assert!(same.iter().all(|s| *s == g));
        let cfg = PerturbationConfig { n_gamma: 50, scale: 0.2, seed: 2 };
        let noisy = perturb_prototypes(&g, &cfg).unwrap();
        assert_ne!(noisy[0], noisy[1]);
        assert_eq!(noisy, perturb_prototypes(&g, &cfg).unwrap());
        for j in 0..2 {
            let sd = 0.2 * g.get(j).norm() / 8.0;
            let d: Vec<f64> = noisy
                .iter()
                .flat_map(|s| s.get(j).values().iter().zip(g.get(j).values()).map(|(a, b)| a - b).collect::<Vec<_>>())
                .collect();
            let n = d.len() as f64;
            let var = d.iter().map(|x| x * x).sum::<f64>() / n;
            // sd of the sample variance of n Gaussians is σ²√(2/n)
            assert!((var - sd * sd).abs() < 3.0 * sd * sd * (2.0 / n).sqrt());
        }
    }

    #[test]
    fn excess_error_cases() {
        let maps = pixels(&[0.0, 2.0]);
        let ones = [1.0, 1.0];
        let a = protos(&[0.0]);
        assert_eq!(excess_quantization_error(&a, &a, &maps, &ones, &w1()).unwrap(), 0.0);
        // ê({0}) = √2, ê({1}) = 1
        let e = excess_quantization_error(&protos(&[0.0]), &protos(&[1.0]), &maps, &ones, &w1()).unwrap();
        assert!((e - (2f64.sqrt() - 1.0)).abs() < 1e-15);
        let e = excess_quantization_error(&protos(&[1.0]), &protos(&[0.0]), &maps, &ones, &w1()).unwrap();
        assert!((e - (1.0 / 2f64.sqrt() - 1.0)).abs() < 1e-15);
        let zero = excess_quantization_error(&a, &protos(&[0.0, 2.0]), &maps, &ones, &w1());
        assert!(zero.is_err());
    }

    #[test]
    fn excess_error_of_a_few_percent() {
        // ê(Γ*) = 1 with Γ* = {1}; pick Γ̂ = {c} so that ê(Γ̂) = 1.036
        let maps = pixels(&[0.0, 2.0]);
        let c = 1.0 - (1.036f64 * 1.036 - 1.0).sqrt();
        let e = excess_quantization_error(&protos(&[c]), &protos(&[1.0]), &maps, &[1.0, 1.0], &w1()).unwrap();
        assert!((e - 0.036).abs() < 1e-12, "{e}");
    }

    #[test]
    fn probability_error_counting() {
        let g = protos(&[0.0, 10.0]);
        let truth = pixels(&[1.0, 2.0, 9.0, 8.0]);
        let pred = pixels(&[1.0, 7.0, 9.0, 8.0]);
        let ones = [1.0; 4];
        let e = relative_probability_errors(&g, &truth, &pred, &ones, &w1()).unwrap();
        assert_eq!(e[0], Some(0.5));
        assert_eq!(relative_probability_errors(&g, &truth, &truth, &ones, &w1()).unwrap(), vec![Some(0.0); 2]);
        // memberships only: different values, same cells
        let shifted = pixels(&[0.5, 1.5, 9.5, 7.0]);
        assert_eq!(relative_probability_errors(&g, &truth, &shifted, &ones, &w1()).unwrap(), vec![Some(0.0); 2]);
        let far = protos(&[0.0, 10.0, 100.0]);
        assert_eq!(relative_probability_error(&far, 2, &truth, &pred, &ones, &w1()).unwrap(), None);
    }

    #[test]
    fn bootstrap_null_cases() {
        let maps = pixels(&[3.0; 50]);
        let wt = vec![0.7; 50];
        let cfg = BootstrapConfig::default();
        let cv = is_probability_cv(&protos(&[3.0]), 0, &maps, &wt, &cfg, &w1()).unwrap();
        assert_eq!(cv, Some(0.0));
        let sd = is_centroid_std(&protos(&[3.0]), 0, &maps, &wt, &cfg, &w1()).unwrap();
        assert_eq!(sd, Some(0.0));
        assert_eq!(quantile(&[2.5; 7], 0.9), Some(2.5));
        let empty = is_probability_cv(&protos(&[3.0, 100.0]), 1, &maps, &wt, &cfg, &w1()).unwrap();
        assert_eq!(empty, None);
        assert!(is_probability_cv(&protos(&[3.0]), 0, &maps, &wt, &BootstrapConfig { n_boot: 1, seed: 0 }, &w1()).is_err());
    }

    fn bernoulli_cv(p: f64, n: usize, seed: u64) -> f64 {
        let s = SeedStream::new(seed, "bern");
        let mut rng = s.rng(0);
        let assign: Vec<usize> = (0..n).map(|_| usize::from(rng.random::<f64>() >= p)).collect();
        let cfg = BootstrapConfig { n_boot: 200, seed };
        probability_cvs_from(&assign, &vec![1.0; n], 2, &cfg).unwrap()[0].unwrap()
    }

    #[test]
    fn bootstrap_cv_matches_binomial() {
        for p in [0.1, 0.5] {
            let n = 10_000;
            let cv = bernoulli_cv(p, n, 3);
            let exact = ((1.0 - p) / (p * n as f64)).sqrt();
            assert!((cv / exact - 1.0).abs() < 0.2, "p={p}: {cv} vs {exact}");
        }
        let a = bernoulli_cv(0.3, 4000, 5);
        let b = bernoulli_cv(0.3, 8000, 5);
        assert!((a / b - 2f64.sqrt()).abs() < 0.3);
        let pts: Vec<(f64, f64)> = [1000usize, 4000, 16000]
            .iter()
            .map(|&n| ((n as f64).ln(), bernoulli_cv(0.3, n, 6).ln()))
            .collect();
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / 3.0;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / 3.0;
        let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        assert!((slope + 0.5).abs() < 0.1, "{slope}");
    }

    #[test]
    fn centroid_std_matches_clt() {
        let n = 4000;
        let s = SeedStream::new(9, "clt");
        let mut rng = s.rng(0);
        let v: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal) * 2.0).collect();
        let sd = is_centroid_std(&protos(&[0.0]), 0, &pixels(&v), &vec![1.0; n], &BootstrapConfig::default(), &w1())
            .unwrap()
            .unwrap();
        let exact = (4.0 / n as f64).sqrt();
        assert!((sd / exact - 1.0).abs() < 0.2, "{sd} vs {exact}");
    }

    #[test]
    fn all_cells_share_replicates() {
        let maps = pixels(&(0..200).map(|k| (k % 17) as f64).collect::<Vec<_>>());
        let g = protos(&[2.0, 8.0, 14.0, 100.0]);
        let ones = vec![1.0; 200];
        let cfg = BootstrapConfig { n_boot: 30, seed: 4 };
        let all = is_centroid_stds(&g, &maps, &ones, &cfg, &w1()).unwrap();
        assert_eq!(all[3], None);
        for j in 0..3 {
            assert_eq!(is_centroid_std(&g, j, &maps, &ones, &cfg, &w1()).unwrap(), all[j]);
            assert!(all[j].unwrap() > 0.0);
        }
    }

    proptest::proptest! {
        #[test]
        fn metrics_are_nonnegative(
            truth in proptest::collection::vec(-5.0f64..5.0, 8..40),
            noise in proptest::collection::vec(-1.0f64..1.0, 40),
            weights in proptest::collection::vec(0.0f64..3.0, 40),
            scale in 0.0f64..2.0,
        ) {
            let n = truth.len();
            let pred: Vec<f64> = truth.iter().zip(&noise).map(|(t, e)| t + scale * e).collect();
            let (yt, yp) = (pixels(&truth), pixels(&pred));
            let wt = &weights[..n];
            let g = protos(&[-2.0, 0.5, 3.0]);
            for e in relative_probability_errors(&g, &yt, &yp, wt, &w1()).unwrap().into_iter().flatten() {
                proptest::prop_assert!(e >= 0.0);
            }
            let cfg = BootstrapConfig { n_boot: 10, seed: 1 };
            for v in is_probability_cvs(&g, &yt, wt, &cfg, &w1()).unwrap().into_iter().flatten() {
                proptest::prop_assert!(v >= 0.0);
            }
            for v in is_centroid_stds(&g, &yt, wt, &cfg, &w1()).unwrap().into_iter().flatten() {
                proptest::prop_assert!(v >= 0.0);
            }
            if let Ok(e) = excess_quantization_error(&protos(&[0.0]), &protos(&[0.0]), &yt, wt, &w1()) {
                proptest::prop_assert!(e == 0.0);
            }
        }
    }

    #[test]
    fn summary_ignores_undefined() {
        let s = summarize(&[Some(1.0), None, Some(3.0), Some(2.0), Some(4.0)]);
        assert_eq!(s.count, 4);
        assert_eq!(s.undefined, 1);
        assert_eq!(s.median, Some(2.5));
        assert_eq!(s.q1, Some(1.75));
        assert_eq!(s.max, Some(4.0));
    }
}
