//! Importance-sampled Lloyd iterations and the prototype maps algorithm.
//!
//! Cell indices are 0-based throughout the library.

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maps::{
    assign_all, check_sample, quantization_error_from, GridMap, InnerProductWeights, MapSet,
    NearestSearch, PrototypeSet,
};
use crate::parallel::{map_chunks, CHUNK};
use crate::sampling::{InputLaw, WeightedSampleSet};

/// Anything that turns an input vector into a map.
pub trait MapPredictor: Sync {
    /// Side of the produced maps.
    fn side(&self) -> usize;

    /// Writes the `side²` pixels of the map at `x` into `out`.
    fn predict_into(&self, x: &[f64], out: &mut [f64]) -> Result<()>;

    fn predict(&self, x: &[f64]) -> Result<GridMap> {
        let s = self.side();
        let mut out = vec![0.0; s * s];
        self.predict_into(x, &mut out)?;
        GridMap::new(s, out)
    }

    /// Maps of a batch of inputs, computed in parallel.
    fn predict_batch(&self, inputs: &[Vec<f64>]) -> Result<MapSet> {
        let px = self.side() * self.side();
        let mut data = vec![0.0; inputs.len() * px];
        data.par_chunks_mut(CHUNK * px.max(1))
            .zip(inputs.par_chunks(CHUNK))
            .try_for_each(|(buf, xs)| -> Result<()> {
                for (x, out) in xs.iter().zip(buf.chunks_exact_mut(px)) {
                    self.predict_into(x, out)?;
                }
                Ok(())
            })?;
        MapSet::from_flat(self.side(), data)
    }
}

/// A predictor backed by a closure.
pub struct FnPredictor<F> {
    side: usize,
    f: F,
}

impl<F> FnPredictor<F>
where
    F: Fn(&[f64], &mut [f64]) -> Result<()> + Sync,
{
    pub fn new(side: usize, f: F) -> Self {
        Self { side, f }
    }
}

impl<F> MapPredictor for FnPredictor<F>
where
    F: Fn(&[f64], &mut [f64]) -> Result<()> + Sync,
{
    fn side(&self) -> usize {
        self.side
    }

    fn predict_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        (self.f)(x, out)
    }
}

/// The input vector itself, seen as a 1×1 map (one-dimensional inputs).
pub struct IdentityPredictor;

impl MapPredictor for IdentityPredictor {
    fn side(&self) -> usize {
        1
    }

    fn predict_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != 1 {
            return Err(Error::DimensionMismatch(format!(
                "identity predictor needs scalar inputs, got {}",
                x.len()
            )));
        }
        out[0] = x[0];
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LloydConfig {
    /// Number of prototypes.
    pub ell: usize,
    /// Sample size of the Lloyd iterations.
    pub n_maps: usize,
    /// Sample size of the final probability estimates.
    pub n_tilde: usize,
    #[serde(default = "default_min_distance")]
    pub min_distance: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_min_distance() -> f64 {
    1e-16
}

fn default_max_iterations() -> usize {
    100
}

impl LloydConfig {
    pub fn new(ell: usize, n_maps: usize, n_tilde: usize, seed: u64) -> Self {
        Self {
            ell,
            n_maps,
            n_tilde,
            min_distance: default_min_distance(),
            max_iterations: default_max_iterations(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ell == 0 || self.n_maps < self.ell || self.n_tilde < self.n_maps {
            return Err(Error::InvalidArgument(format!(
                "need n_tilde >= n_maps >= ell >= 1, got ell={} n_maps={} n_tilde={}",
                self.ell, self.n_maps, self.n_tilde
            )));
        }
        if !(self.min_distance > 0.0) || self.max_iterations == 0 {
            return Err(Error::InvalidArgument(
                "min_distance and max_iterations must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantizationResult {
    /// Final prototypes, carrying `probabilities`.
    pub prototypes: PrototypeSet,
    /// Cell probabilities estimated on the `n_tilde` sample.
    pub probabilities: Vec<f64>,
    /// Number of Lloyd steps performed.
    pub iterations: usize,
    /// `ê` of every iterate on the `n_maps` sample, starting with the initial set.
    pub error_trace: Vec<f64>,
    /// Largest prototype displacement of the last step.
    pub last_movement: f64,
    pub converged: bool,
    /// Mean importance weight of the `n_tilde` sample.
    pub mean_weight: f64,
}

/// Per-cell weight sums from assignments.
fn cell_weights(assign: &[(usize, f64)], is_weights: &[f64], ell: usize) -> Vec<f64> {
    let parts = map_chunks(assign.len(), CHUNK, |r| {
        let mut acc = vec![0.0; ell];
        for k in r {
            acc[assign[k].0] += is_weights[k];
        }
        acc
    });
    let mut total = vec![0.0; ell];
    for p in parts {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    total
}

/// Per-cell weighted map sums and weight sums.
fn cell_sums(
    assign: &[(usize, f64)],
    maps: &MapSet,
    is_weights: &[f64],
    ell: usize,
) -> (Vec<f64>, Vec<f64>) {
    let px = maps.pixels();
    let parts = map_chunks(assign.len(), CHUNK, |r| {
        let mut sums = vec![0.0; ell * px];
        let mut mass = vec![0.0; ell];
        for k in r {
            let (j, _) = assign[k];
            let wk = is_weights[k];
            if wk == 0.0 {
                continue;
            }
            mass[j] += wk;
            for (s, y) in sums[j * px..(j + 1) * px].iter_mut().zip(maps.get(k)) {
                *s += wk * y;
            }
        }
        (sums, mass)
    });
    let mut sums = vec![0.0; ell * px];
    let mut mass = vec![0.0; ell];
    for (s, m) in parts {
        for (a, b) in sums.iter_mut().zip(s) {
            *a += b;
        }
        for (a, b) in mass.iter_mut().zip(m) {
            *a += b;
        }
    }
    (sums, mass)
}

fn check_cell(gamma: &PrototypeSet, j: usize) -> Result<()> {
    if j >= gamma.len() {
        return Err(Error::InvalidArgument(format!(
            "cell {j} out of range for {} prototypes",
            gamma.len()
        )));
    }
    Ok(())
}

/// `P̂_n(Γ, j) = (1/n) Σ_k w_k 1[q_Γ(y_k) = γ_j]`.
pub fn cell_probability(
    gamma: &PrototypeSet,
    j: usize,
    maps: &MapSet,
    is_weights: &[f64],
    w: &InnerProductWeights,
) -> Result<f64> {
    check_sample(gamma, maps, is_weights, w)?;
    check_cell(gamma, j)?;
    Ok(cell_probabilities(gamma, maps, is_weights, w)?[j])
}

/// All cell probabilities at once.
pub fn cell_probabilities(
    gamma: &PrototypeSet,
    maps: &MapSet,
    is_weights: &[f64],
    w: &InnerProductWeights,
) -> Result<Vec<f64>> {
    check_sample(gamma, maps, is_weights, w)?;
    let assign = assign_all(gamma, maps, w);
    let n = maps.len() as f64;
    Ok(cell_weights(&assign, is_weights, gamma.len())
        .into_iter()
        .map(|m| m / n)
        .collect())
}

/// `Ê_n(Γ, j)`: the IS-weighted mean of the maps of cell `j`.
pub fn cell_centroid(
    gamma: &PrototypeSet,
    j: usize,
    maps: &MapSet,
    is_weights: &[f64],
    w: &InnerProductWeights,
) -> Result<GridMap> {
    check_sample(gamma, maps, is_weights, w)?;
    check_cell(gamma, j)?;
    let assign = assign_all(gamma, maps, w);
    let (sums, mass) = cell_sums(&assign, maps, is_weights, gamma.len());
    if mass[j] == 0.0 {
        return Err(Error::EmptyCell(j));
    }
    let px = maps.pixels();
    GridMap::new(
        maps.side(),
        sums[j * px..(j + 1) * px].iter().map(|s| s / mass[j]).collect(),
    )
}

struct Step {
    next: PrototypeSet,
    error: f64,
    movement: f64,
    empty: usize,
}

fn step_from(
    gamma: &PrototypeSet,
    maps: &MapSet,
    is_weights: &[f64],
    w: &InnerProductWeights,
) -> Step {
    let assign = assign_all(gamma, maps, w);
    let error = quantization_error_from(&assign, is_weights);
    let (sums, mass) = cell_sums(&assign, maps, is_weights, gamma.len());
    let px = maps.pixels();
    let mut empty = 0;
    let mut movement: f64 = 0.0;
    let next: Vec<GridMap> = gamma
        .prototypes()
        .iter()
        .enumerate()
        .map(|(j, old)| {
            if mass[j] == 0.0 {
                empty += 1;
                return old.clone();
            }
            let v: Vec<f64> = sums[j * px..(j + 1) * px].iter().map(|s| s / mass[j]).collect();
            movement = movement.max(w.sq_distance(&v, old.values()).sqrt());
            GridMap::from_trusted(maps.side(), v)
        })
        .collect();
    Step {
        next: PrototypeSet::new(next).expect("same shape as the input set"),
        error,
        movement,
        empty,
    }
}

/// One Lloyd step: every prototype moves to its cell centroid; prototypes of
/// empty cells stay where they are.
pub fn lloyd_step(
    gamma: &PrototypeSet,
    maps: &MapSet,
    is_weights: &[f64],
    w: &InnerProductWeights,
) -> Result<PrototypeSet> {
    check_sample(gamma, maps, is_weights, w)?;
    Ok(step_from(gamma, maps, is_weights, w).next)
}

/// Largest weighted-norm displacement between matching prototypes.
pub fn max_displacement(
    a: &PrototypeSet,
    b: &PrototypeSet,
    w: &InnerProductWeights,
) -> Result<f64> {
    if a.len() != b.len() || a.side() != b.side() {
        return Err(Error::DimensionMismatch(
            "prototype sets differ in shape".into(),
        ));
    }
    Ok(a.prototypes()
        .iter()
        .zip(b.prototypes())
        .map(|(p, q)| w.sq_distance(p.values(), q.values()).sqrt())
        .fold(0.0, f64::max))
}

/// Outcome of Lloyd iterations on a fixed sample.
#[derive(Clone, Debug, PartialEq)]
pub struct LloydRun {
    pub prototypes: PrototypeSet,
    pub iterations: usize,
    pub error_trace: Vec<f64>,
    pub last_movement: f64,
    pub converged: bool,
}

/// Iterates [`lloyd_step`] on a fixed weighted sample until the largest
/// prototype displacement is at most `min_distance`.
pub fn run_lloyd(
    init: PrototypeSet,
    maps: &MapSet,
    is_weights: &[f64],
    w: &InnerProductWeights,
    min_distance: f64,
    max_iterations: usize,
) -> Result<LloydRun> {
    check_sample(&init, maps, is_weights, w)?;
    let mut gamma = init;
    let mut trace = Vec::new();
    let mut movement = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iterations {
        let step = step_from(&gamma, maps, is_weights, w);
        trace.push(step.error);
        iterations += 1;
        movement = step.movement;
        debug!(
            "lloyd step {iterations}: error {:.6e}, movement {:.3e}, empty cells {}",
            step.error, step.movement, step.empty
        );
        gamma = step.next;
        if movement <= min_distance {
            converged = true;
            break;
        }
    }
    trace.push(quantization_error_from(&assign_all(&gamma, maps, w), is_weights));
    Ok(LloydRun {
        prototypes: gamma,
        iterations,
        error_trace: trace,
        last_movement: movement,
        converged,
    })
}

/// Cell weight sums over draws `range` of the `g`-sample, predicted on the fly.
fn streamed_cell_weights(
    gamma: &PrototypeSet,
    predictor: &dyn MapPredictor,
    f: &InputLaw,
    g: &InputLaw,
    seed: u64,
    range: std::ops::Range<usize>,
    w: &InnerProductWeights,
) -> Result<(Vec<f64>, f64)> {
    let ell = gamma.len();
    let px = gamma.side() * gamma.side();
    let start = range.start;
    let parts = map_chunks(range.len(), CHUNK, |r| -> Result<(Vec<f64>, f64)> {
        let lo = (start + r.start) as u64;
        let hi = (start + r.end) as u64;
        let batch = WeightedSampleSet::draw_range(f, g, seed, lo..hi)?;
        let search = NearestSearch::new(gamma, w);
        let mut buf = vec![0.0; px];
        let mut acc = vec![0.0; ell];
        let mut total = 0.0;
        for (x, wk) in batch.inputs.iter().zip(&batch.weights) {
            total += wk;
            if *wk == 0.0 {
                continue;
            }
            predictor.predict_into(x, &mut buf)?;
            let (j, _) = search.find(&buf);
            acc[j] += wk;
        }
        Ok((acc, total))
    });
    let mut acc = vec![0.0; ell];
    let mut total = 0.0;
    for p in parts {
        let (a, t) = p?;
        for (x, y) in acc.iter_mut().zip(a) {
            *x += y;
        }
        total += t;
    }
    Ok((acc, total))
}

/// Draws `n_maps` inputs from `g`, predicts their maps, runs Lloyd from
/// `init`, then re-estimates the cell probabilities on `n_tilde` draws whose
/// first `n_maps` are the iteration sample.
pub fn prototype_maps_algorithm(
    cfg: &LloydConfig,
    predictor: &dyn MapPredictor,
    f: &InputLaw,
    g: &InputLaw,
    init: PrototypeSet,
    w: &InnerProductWeights,
) -> Result<QuantizationResult> {
    run_algorithm(cfg, predictor, f, g, |_| Ok(init), w)
}

/// [`prototype_maps_algorithm`] started from the volume quantiles of its own
/// iteration sample (see [`initialize_prototypes`]).
pub fn prototype_maps_from_quantiles(
    cfg: &LloydConfig,
    predictor: &dyn MapPredictor,
    f: &InputLaw,
    g: &InputLaw,
    w: &InnerProductWeights,
) -> Result<QuantizationResult> {
    run_algorithm(cfg, predictor, f, g, |maps| initialize_prototypes(maps, cfg.ell), w)
}

fn run_algorithm(
    cfg: &LloydConfig,
    predictor: &dyn MapPredictor,
    f: &InputLaw,
    g: &InputLaw,
    init: impl FnOnce(&MapSet) -> Result<PrototypeSet>,
    w: &InnerProductWeights,
) -> Result<QuantizationResult> {
    cfg.validate()?;
    if !g.support_covers(f) {
        return Err(Error::SupportViolation(
            "supp(f) is not contained in supp(g)".into(),
        ));
    }
    let sample = WeightedSampleSet::draw(f, g, cfg.n_maps, cfg.seed)?;
    let maps = predictor.predict_batch(&sample.inputs)?;
    info!("predicted {} maps of side {}", maps.len(), maps.side());
    let init = init(&maps)?;
    if init.len() != cfg.ell {
        return Err(Error::InvalidArgument(format!(
            "initial set has {} prototypes, config asks for {}",
            init.len(),
            cfg.ell
        )));
    }
    if init.side() != predictor.side() {
        return Err(Error::DimensionMismatch(format!(
            "prototype side {} vs predictor side {}",
            init.side(),
            predictor.side()
        )));
    }
    let run = run_lloyd(
        init,
        &maps,
        &sample.weights,
        w,
        cfg.min_distance,
        cfg.max_iterations,
    )?;
    if !run.converged {
        info!(
            "no convergence after {} steps (movement {:.3e})",
            run.iterations, run.last_movement
        );
    }

    let assign = assign_all(&run.prototypes, &maps, w);
    let mut mass = cell_weights(&assign, &sample.weights, cfg.ell);
    let mut total: f64 = sample.weights.iter().sum();
    drop(maps);
    if cfg.n_tilde > cfg.n_maps {
        let (extra, extra_total) = streamed_cell_weights(
            &run.prototypes,
            predictor,
            f,
            g,
            cfg.seed,
            cfg.n_maps..cfg.n_tilde,
            w,
        )?;
        for (m, e) in mass.iter_mut().zip(extra) {
            *m += e;
        }
        total += extra_total;
    }
    let n = cfg.n_tilde as f64;
    let probabilities: Vec<f64> = mass.iter().map(|m| m / n).collect();
    let prototypes = run
        .prototypes
        .with_probabilities(probabilities.iter().map(|p| p.min(1.0)).collect())?;
    Ok(QuantizationResult {
        prototypes,
        probabilities,
        iterations: run.iterations,
        error_trace: run.error_trace,
        last_movement: run.last_movement,
        converged: run.converged,
        mean_weight: total / n,
    })
}

/// The maps at the volume quantile levels `(2i − 1)/(2ℓ)`, `i = 1..ℓ`.
pub fn initialize_prototypes(training_maps: &MapSet, ell: usize) -> Result<PrototypeSet> {
    let n = training_maps.len();
    if ell == 0 || ell > n {
        return Err(Error::InvalidArgument(format!(
            "cannot pick {ell} prototypes from {n} maps"
        )));
    }
    let mut order: Vec<(f64, usize)> = training_maps
        .iter()
        .enumerate()
        .map(|(k, m)| (m.iter().sum::<f64>(), k))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let picks = (1..=ell)
        .map(|i| {
            // rank = ceil(n (2i − 1) / (2ℓ)), 1-based
            let rank = (n * (2 * i - 1)).div_ceil(2 * ell).max(1);
            training_maps.map(order[rank - 1].1)
        })
        .collect();
    PrototypeSet::new(picks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::DensitySpec;
    use proptest::prelude::*;

    fn pixels(v: &[f64]) -> MapSet {
        MapSet::from_flat(1, v.to_vec()).unwrap()
    }

    fn protos(v: &[f64]) -> PrototypeSet {
        PrototypeSet::new(v.iter().map(|x| GridMap::new(1, vec![*x]).unwrap()).collect()).unwrap()
    }

    #[test]
    fn probability_examples() {
        let w = InnerProductWeights::uniform(1);
        let maps = pixels(&[0.0, 0.1, 5.0, 5.1]);
        let g = protos(&[0.0, 5.0]);
        let ones = [1.0; 4];
        assert_eq!(cell_probability(&g, 0, &maps, &ones, &w).unwrap(), 0.5);
        let p = cell_probabilities(&g, &maps, &[2.0, 0.0, 1.0, 1.0], &w).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
        assert_eq!(cell_probability(&protos(&[3.0]), 0, &maps, &ones, &w).unwrap(), 1.0);
        assert!(cell_probability(&g, 2, &maps, &ones, &w).is_err());
    }

    #[test]
    fn centroid_examples() {
        let w = InnerProductWeights::uniform(1);
        let g = protos(&[1.0]);
        let maps = pixels(&[0.0, 4.0]);
        assert_eq!(cell_centroid(&g, 0, &maps, &[1.0, 1.0], &w).unwrap().values(), &[2.0]);
        assert_eq!(cell_centroid(&g, 0, &maps, &[3.0, 1.0], &w).unwrap().values(), &[1.0]);
        let same = pixels(&[7.5, 7.5, 7.5]);
        assert_eq!(cell_centroid(&g, 0, &same, &[0.2, 3.0, 1.0], &w).unwrap().values(), &[7.5]);
        let two = protos(&[0.0, 100.0]);
        assert_eq!(
            cell_centroid(&two, 1, &maps, &[1.0, 1.0], &w).unwrap_err(),
            Error::EmptyCell(1)
        );
    }

    #[test]
    fn lloyd_step_rules() {
        let w = InnerProductWeights::uniform(1);
        let maps = pixels(&[1.0, 2.0, 6.0]);
        let wt = [1.0, 1.0, 2.0];
        let one = lloyd_step(&protos(&[-40.0]), &maps, &wt, &w).unwrap();
        assert_eq!(one.get(0).values(), &[15.0 / 4.0]);
        assert_eq!(lloyd_step(&one, &maps, &wt, &w).unwrap(), one);
        // the far prototype attracts nothing and stays put
        let s = lloyd_step(&protos(&[2.0, 1000.0]), &maps, &wt, &w).unwrap();
        assert_eq!(s.get(1).values(), &[1000.0]);
        // zero-weight cell keeps its prototype
        let s = lloyd_step(&protos(&[1.0, 6.0]), &maps, &[1.0, 1.0, 0.0], &w).unwrap();
        assert_eq!(s.get(1).values(), &[6.0]);
    }

    #[test]
    fn appendix_mixture_fixed_point() {
        // exact centroids of the two cells split at -2.5, evaluated on a
        // symmetric quadrature sample of the mixture
        let n = 4000;
        let mut x = Vec::new();
        let mut wt = Vec::new();
        for i in 0..n {
            x.push(-20.0 + 10.0 * (i as f64 + 0.5) / n as f64);
            wt.push(0.1);
            x.push(20.0 * (i as f64 + 0.5) / n as f64);
            wt.push(0.9);
        }
        let maps = pixels(&x);
        let w = InnerProductWeights::uniform(1);
        let g = protos(&[-15.0, 10.0]);
        let s = lloyd_step(&g, &maps, &wt, &w).unwrap();
        assert!(max_displacement(&g, &s, &w).unwrap() < 1e-12);
    }

    #[test]
    fn initialization_quantiles() {
        let vols: Vec<f64> = (1..=100).rev().map(f64::from).collect();
        let set = pixels(&vols);
        let init = initialize_prototypes(&set, 2).unwrap();
        assert_eq!(init.get(0).values(), &[25.0]);
        assert_eq!(init.get(1).values(), &[75.0]);
        let five = pixels(&[3.0, 1.0, 5.0, 2.0, 4.0]);
        let init = initialize_prototypes(&five, 5).unwrap();
        let got: Vec<f64> = init.prototypes().iter().map(|p| p.values()[0]).collect();
        assert_eq!(got, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let flat = pixels(&[2.0; 6]);
        let init = initialize_prototypes(&flat, 3).unwrap();
        assert!(init.prototypes().iter().all(|p| p.values() == [2.0]));
        assert!(initialize_prototypes(&five, 6).is_err());
    }

    #[test]
    fn single_prototype_algorithm() {
        let f: InputLaw = DensitySpec::truncated_normal(1.0, 1.0, -2.0, 4.0).into();
        let g: InputLaw = DensitySpec::uniform(-2.0, 4.0).into();
        let cfg = LloydConfig::new(1, 5000, 8000, 3);
        let r = prototype_maps_algorithm(
            &cfg,
            &IdentityPredictor,
            &f,
            &g,
            protos(&[100.0]),
            &InnerProductWeights::uniform(1),
        )
        .unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 2);
        let s = WeightedSampleSet::draw(&f, &g, 5000, 3).unwrap();
        let mean = s.inputs.iter().zip(&s.weights).map(|(x, w)| x[0] * w).sum::<f64>()
            / s.weights.iter().sum::<f64>();
        assert!((r.prototypes.get(0).values()[0] - mean).abs() < 1e-12);
        assert!((r.probabilities[0] - r.mean_weight).abs() < 1e-12);
    }

    #[test]
    fn algorithm_is_deterministic() {
        let f: InputLaw = DensitySpec::uniform(0.0, 10.0).into();
        let cfg = LloydConfig::new(3, 3000, 6000, 17);
        let run = || {
            prototype_maps_algorithm(
                &cfg,
                &IdentityPredictor,
                &f,
                &f,
                protos(&[1.0, 2.0, 3.0]),
                &InnerProductWeights::uniform(1),
            )
            .unwrap()
        };
        let a = run();
        assert_eq!(a, run());
        let s: f64 = a.probabilities.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn partition_identity(
            xs in prop::collection::vec(-10.0..10.0f64, 5..60),
            ws in prop::collection::vec(0.0..3.0f64, 60),
            ps in prop::collection::vec(-10.0..10.0f64, 1..6),
        ) {
            let maps = pixels(&xs);
            let wt = &ws[..xs.len()];
            let w = InnerProductWeights::uniform(1);
            let p = cell_probabilities(&protos(&ps), &maps, wt, &w).unwrap();
            let total = wt.iter().sum::<f64>() / xs.len() as f64;
            prop_assert!((p.iter().sum::<f64>() - total).abs() < 1e-12);
        }

        #[test]
        fn lloyd_descent(
            xs in prop::collection::vec(prop::collection::vec(-5.0..5.0f64, 4), 8..40),
            ws in prop::collection::vec(0.01..3.0f64, 40),
            k in 1usize..5,
        ) {
            let flat: Vec<f64> = xs.iter().flatten().copied().collect();
            let maps = MapSet::from_flat(2, flat).unwrap();
            let wt = &ws[..xs.len()];
            let w = InnerProductWeights::new(2, vec![1.0, 0.5, 2.0, 1.5]).unwrap();
            let init = PrototypeSet::new((0..k).map(|j| maps.map(j)).collect()).unwrap();
            let run = run_lloyd(init, &maps, wt, &w, 1e-16, 100).unwrap();
            for pair in run.error_trace.windows(2) {
                prop_assert!(pair[1] <= pair[0], "{:?}", run.error_trace);
            }
            if run.converged {
                let again = lloyd_step(&run.prototypes, &maps, wt, &w).unwrap();
                prop_assert!(max_displacement(&again, &run.prototypes, &w).unwrap() <= 1e-12);
            }
        }

        #[test]
        fn equal_laws_give_plain_frequencies(
            xs in prop::collection::vec(-10.0..10.0f64, 5..60),
            ps in prop::collection::vec(-10.0..10.0f64, 1..6),
        ) {
            let maps = pixels(&xs);
            let gamma = protos(&ps);
            let w = InnerProductWeights::uniform(1);
            let p = cell_probabilities(&gamma, &maps, &vec![1.0; xs.len()], &w).unwrap();
            for (j, pj) in p.iter().enumerate() {
                let count = xs.iter().filter(|x| gamma.nearest_sq(&[**x], &w).0 == j).count();
                prop_assert_eq!(*pj, count as f64 / xs.len() as f64);
            }
        }
    }
}
