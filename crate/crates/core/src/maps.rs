//! Map types, the weighted pixel inner product, nearest-prototype assignment
//! and the empirical quantization error.
//!
//! Maps are square `s × s` grids stored row-major as flat `f64` arrays. The
//! inner product is `⟨a, b⟩ = Σ_i λ_i a_i b_i` with strictly positive pixel
//! weights `λ_i`; all distances in the crate are induced by it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parallel::{map_chunks, CHUNK};

/// A square grid of field values (water depth in meters for flood maps).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGridMap", into = "RawGridMap")]
pub struct GridMap {
    side: usize,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawGridMap {
    side: usize,
    values: Vec<f64>,
}

impl TryFrom<RawGridMap> for GridMap {
    type Error = Error;
    fn try_from(raw: RawGridMap) -> Result<Self> {
        GridMap::new(raw.side, raw.values)
    }
}

impl From<GridMap> for RawGridMap {
    fn from(m: GridMap) -> Self {
        RawGridMap {
            side: m.side,
            values: m.values,
        }
    }
}

impl GridMap {
    /// Builds a map from row-major values. Rejects a wrong length, `side = 0`
    /// and non-finite entries.
    pub fn new(side: usize, values: Vec<f64>) -> Result<Self> {
        if side == 0 {
            return Err(Error::InvalidArgument("map side must be >= 1".into()));
        }
        if values.len() != side * side {
            return Err(Error::DimensionMismatch(format!(
                "map of side {side} needs {} values, got {}",
                side * side,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite value {} at pixel {i}",
                values[i]
            )));
        }
        Ok(Self { side, values })
    }

    pub fn zeros(side: usize) -> Self {
        assert!(side >= 1, "map side must be >= 1");
        Self {
            side,
            values: vec![0.0; side * side],
        }
    }

    /// Builds a map by evaluating `f(row, col)` on every pixel.
    pub fn from_fn(side: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(side * side);
        for r in 0..side {
            for c in 0..side {
                values.push(f(r, c));
            }
        }
        Self::new(side, values)
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.side + col]
    }

    /// Total volume: the plain sum of pixel values.
    pub fn volume(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Unweighted Euclidean norm.
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub(crate) fn from_trusted(side: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), side * side);
        Self { side, values }
    }
}

/// Strictly positive per-pixel weights of the map inner product.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerProductWeights {
    side: usize,
    /// `None` means every weight is 1.
    lambda: Option<Vec<f64>>,
}

impl InnerProductWeights {
    /// All weights equal to one: the plain Euclidean inner product.
    pub fn uniform(side: usize) -> Self {
        Self { side, lambda: None }
    }

    pub fn new(side: usize, lambda: Vec<f64>) -> Result<Self> {
        if lambda.len() != side * side {
            return Err(Error::DimensionMismatch(format!(
                "weights of side {side} need {} values, got {}",
                side * side,
                lambda.len()
            )));
        }
        if let Some(i) = lambda.iter().position(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "pixel weight {i} is {}; weights must be > 0",
                lambda[i]
            )));
        }
        Ok(Self {
            side,
            lambda: Some(lambda),
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn lambda(&self) -> Option<&[f64]> {
        self.lambda.as_deref()
    }

    /// Multiplies every weight by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let lambda = match &self.lambda {
            Some(l) => l.iter().map(|v| v * factor).collect(),
            None => vec![factor; self.side * self.side],
        };
        Self::new(self.side, lambda)
    }

    fn check(&self, side: usize, what: &str) -> Result<()> {
        if self.side != side {
            return Err(Error::DimensionMismatch(format!(
                "{what} has side {side} but weights have side {}",
                self.side
            )));
        }
        Ok(())
    }

    /// `Σ λ_i (a_i − b_i)²` on raw pixel slices.
    #[inline]
    pub fn sq_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        sq_dist_bounded(a, b, self.lambda.as_deref(), f64::INFINITY).unwrap_or(f64::INFINITY)
    }

    #[inline]
    pub fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut acc = [0.0f64; 4];
        match &self.lambda {
            None => {
                let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
                let tail: f64 = ca
                    .remainder()
                    .iter()
                    .zip(cb.remainder())
                    .map(|(x, y)| x * y)
                    .sum();
                for (x, y) in ca.zip(cb) {
                    for k in 0..4 {
                        acc[k] += x[k] * y[k];
                    }
                }
                (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
            }
            Some(l) => {
                let mut tail = 0.0;
                let n4 = a.len() / 4 * 4;
                for i in (0..n4).step_by(4) {
                    for k in 0..4 {
                        acc[k] += l[i + k] * a[i + k] * b[i + k];
                    }
                }
                for i in n4..a.len() {
                    tail += l[i] * a[i] * b[i];
                }
                (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
            }
        }
    }
}

// Four independent accumulators let the compiler vectorize while keeping a
// fixed summation order.
/// Pixels summed per block; partial sums are compared against a bound
/// between blocks.
const BLOCK: usize = 256;

#[inline]
fn block_unit(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            let d = x[k] - y[k];
            acc[k] += d * d;
        }
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

#[inline]
fn block_weighted(a: &[f64], b: &[f64], l: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let (ca, cb, cl) = (a.chunks_exact(8), b.chunks_exact(8), l.chunks_exact(8));
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .zip(cl.remainder())
        .map(|((x, y), w)| w * (x - y) * (x - y))
        .sum();
    for ((x, y), w) in ca.zip(cb).zip(cl) {
        for k in 0..8 {
            let d = x[k] - y[k];
            acc[k] += w[k] * d * d;
        }
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

/// Blockwise squared distance, abandoned (`None`) as soon as the running
/// sum exceeds `bound`. Sums of nonnegative terms only grow under rounding,
/// so a completed value never depends on the bound.
#[inline]
fn sq_dist_bounded(a: &[f64], b: &[f64], lambda: Option<&[f64]>, bound: f64) -> Option<f64> {
    let mut total = 0.0;
    for (i, (x, y)) in a.chunks(BLOCK).zip(b.chunks(BLOCK)).enumerate() {
        total += match lambda {
            None => block_unit(x, y),
            Some(l) => block_weighted(x, y, &l[i * BLOCK..i * BLOCK + x.len()]),
        };
        if total > bound {
            return None;
        }
    }
    Some(total)
}

/// An ordered set of prototype maps `Γ = {γ_1, …, γ_ℓ}` with optional
/// per-cell probability masses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrototypeSet {
    prototypes: Vec<GridMap>,
    probabilities: Option<Vec<f64>>,
}

impl PrototypeSet {
    pub fn new(prototypes: Vec<GridMap>) -> Result<Self> {
        let Some(first) = prototypes.first() else {
            return Err(Error::EmptyPrototypes);
        };
        let side = first.side();
        if let Some(p) = prototypes.iter().find(|p| p.side() != side) {
            return Err(Error::DimensionMismatch(format!(
                "prototypes mix sides {side} and {}",
                p.side()
            )));
        }
        Ok(Self {
            prototypes,
            probabilities: None,
        })
    }

    pub fn with_probabilities(mut self, probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.len() != self.prototypes.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} probabilities for {} prototypes",
                probabilities.len(),
                self.prototypes.len()
            )));
        }
        if let Some(p) = probabilities.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidArgument(format!(
                "cell probability {p} outside [0, 1]"
            )));
        }
        self.probabilities = Some(probabilities);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.prototypes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prototypes.is_empty()
    }

    pub fn side(&self) -> usize {
        self.prototypes[0].side()
    }

    pub fn prototypes(&self) -> &[GridMap] {
        &self.prototypes
    }

    pub fn get(&self, j: usize) -> &GridMap {
        &self.prototypes[j]
    }

    pub fn probabilities(&self) -> Option<&[f64]> {
        self.probabilities.as_deref()
    }

    pub fn into_prototypes(self) -> Vec<GridMap> {
        self.prototypes
    }

    /// Appends a prototype (refinement of the quantizer).
    pub fn push(&mut self, map: GridMap) -> Result<()> {
        if map.side() != self.side() {
            return Err(Error::DimensionMismatch(format!(
                "prototype side {} does not match set side {}",
                map.side(),
                self.side()
            )));
        }
        self.prototypes.push(map);
        self.probabilities = None;
        Ok(())
    }

    /// Index and squared distance of the nearest prototype of a raw map.
    /// Ties go to the lowest index.
    pub(crate) fn nearest_sq(&self, y: &[f64], w: &InnerProductWeights) -> (usize, f64) {
        NearestSearch::new(self, w).find(y)
    }
}

/// Nearest-prototype search with pruning.
///
/// `(Σλ(y − γ))² / Σλ` bounds `‖y − γ‖²` from below, so prototypes are
/// visited by increasing bound and skipped once ahead of the best distance.
/// The bound is shrunk by a relative margin far above summation rounding,
/// which keeps the result equal to an exhaustive scan.
pub(crate) struct NearestSearch<'a> {
    gamma: &'a PrototypeSet,
    lambda: Option<&'a [f64]>,
    sums: Vec<f64>,
    lambda_total: f64,
}

impl<'a> NearestSearch<'a> {
    pub(crate) fn new(gamma: &'a PrototypeSet, w: &'a InnerProductWeights) -> Self {
        let lambda = w.lambda();
        let sums = gamma.prototypes.iter().map(|p| weighted_sum(p.values(), lambda)).collect();
        let lambda_total = match lambda {
            None => (gamma.side() * gamma.side()) as f64,
            Some(l) => l.iter().sum(),
        };
        Self {
            gamma,
            lambda,
            sums,
            lambda_total,
        }
    }

    pub(crate) fn find(&self, y: &[f64]) -> (usize, f64) {
        const MARGIN: f64 = 1.0 - 1e-9;
        let sy = weighted_sum(y, self.lambda);
        let mut order: Vec<(f64, usize)> = self
            .sums
            .iter()
            .enumerate()
            .map(|(j, s)| ((sy - s) * (sy - s) / self.lambda_total * MARGIN, j))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut best = (0, f64::INFINITY);
        let mut found = false;
        for (lower, j) in order {
            if found && lower > best.1 {
                break;
            }
            let p = self.gamma.prototypes[j].values();
            if let Some(d) = sq_dist_bounded(y, p, self.lambda, best.1) {
                if !found || d < best.1 || (d == best.1 && j < best.0) {
                    best = (j, d);
                    found = true;
                }
            }
        }
        best
    }
}

fn weighted_sum(v: &[f64], lambda: Option<&[f64]>) -> f64 {
    match lambda {
        None => v.iter().sum(),
        Some(l) => v.iter().zip(l).map(|(a, b)| a * b).sum(),
    }
}

/// Result of `q_Γ(y)`: the (0-based) cell index and the distance to it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoronoiAssignment {
    pub cell_index: usize,
    pub distance: f64,
}

/// Contiguous storage for many maps of one side.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct MapSet {
    side: usize,
    data: Vec<f64>,
}

impl MapSet {
    pub fn new(side: usize) -> Self {
        Self {
            side,
            data: Vec::new(),
        }
    }

    pub fn with_capacity(side: usize, n: usize) -> Self {
        Self {
            side,
            data: Vec::with_capacity(side * side * n),
        }
    }

    /// Wraps a row-major buffer of `n · s²` values.
    pub fn from_flat(side: usize, data: Vec<f64>) -> Result<Self> {
        let px = side * side;
        if side == 0 || !data.len().is_multiple_of(px) {
            return Err(Error::DimensionMismatch(format!(
                "buffer of {} values is not a whole number of {side}x{side} maps",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite map value".into()));
        }
        Ok(Self { side, data })
    }

    pub fn from_maps(maps: &[GridMap]) -> Result<Self> {
        let side = maps.first().map(|m| m.side()).unwrap_or(1);
        let mut set = Self::with_capacity(side, maps.len());
        for m in maps {
            set.push(m)?;
        }
        Ok(set)
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn pixels(&self) -> usize {
        self.side * self.side
    }

    pub fn len(&self) -> usize {
        if self.side == 0 {
            0
        } else {
            self.data.len() / self.pixels()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, k: usize) -> &[f64] {
        let px = self.pixels();
        &self.data[k * px..(k + 1) * px]
    }

    pub fn map(&self, k: usize) -> GridMap {
        GridMap::from_trusted(self.side, self.get(k).to_vec())
    }

    pub fn push(&mut self, m: &GridMap) -> Result<()> {
        if m.side() != self.side {
            return Err(Error::DimensionMismatch(format!(
                "map side {} in a set of side {}",
                m.side(),
                self.side
            )));
        }
        self.data.extend_from_slice(m.values());
        Ok(())
    }

    pub(crate) fn push_slice(&mut self, v: &[f64]) {
        debug_assert_eq!(v.len(), self.pixels());
        self.data.extend_from_slice(v);
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.pixels().max(1))
    }

    pub fn flat(&self) -> &[f64] {
        &self.data
    }

    pub fn to_maps(&self) -> Vec<GridMap> {
        (0..self.len()).map(|k| self.map(k)).collect()
    }

    /// Selects a subset of maps by index, in the given order.
    pub fn select(&self, idx: &[usize]) -> Self {
        let mut out = Self::with_capacity(self.side, idx.len());
        for &k in idx {
            out.push_slice(self.get(k));
        }
        out
    }
}

/// `Σ_i λ_i a_i b_i`.
pub fn weighted_inner_product(a: &GridMap, b: &GridMap, w: &InnerProductWeights) -> Result<f64> {
    if a.side() != b.side() {
        return Err(Error::DimensionMismatch(format!(
            "maps have sides {} and {}",
            a.side(),
            b.side()
        )));
    }
    w.check(a.side(), "map")?;
    Ok(w.dot(a.values(), b.values()))
}

/// `q_Γ(y)`: the nearest prototype under the weighted norm, lowest index on ties.
pub fn nearest_prototype(
    y: &GridMap,
    gamma: &PrototypeSet,
    w: &InnerProductWeights,
) -> Result<VoronoiAssignment> {
    if gamma.is_empty() {
        return Err(Error::EmptyPrototypes);
    }
    if y.side() != gamma.side() {
        return Err(Error::DimensionMismatch(format!(
            "map side {} vs prototype side {}",
            y.side(),
            gamma.side()
        )));
    }
    w.check(y.side(), "map")?;
    let (cell_index, d2) = gamma.nearest_sq(y.values(), w);
    Ok(VoronoiAssignment {
        cell_index,
        distance: d2.sqrt(),
    })
}

pub(crate) fn check_sample(
    gamma: &PrototypeSet,
    maps: &MapSet,
    is_weights: &[f64],
    w: &InnerProductWeights,
) -> Result<()> {
    if gamma.is_empty() {
        return Err(Error::EmptyPrototypes);
    }
    if maps.len() != is_weights.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} maps but {} weights",
            maps.len(),
            is_weights.len()
        )));
    }
    if maps.is_empty() {
        return Err(Error::InvalidArgument("empty sample".into()));
    }
    if maps.side() != gamma.side() {
        return Err(Error::DimensionMismatch(format!(
            "maps have side {} but prototypes side {}",
            maps.side(),
            gamma.side()
        )));
    }
    w.check(maps.side(), "map")?;
    if let Some(v) = is_weights.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "importance weight {v} must be finite and >= 0"
        )));
    }
    Ok(())
}

/// Nearest-prototype index and squared distance for every map of a sample.
pub fn assign_all(
    gamma: &PrototypeSet,
    maps: &MapSet,
    w: &InnerProductWeights,
) -> Vec<(usize, f64)> {
    let search = NearestSearch::new(gamma, w);
    map_chunks(maps.len(), CHUNK, |r| {
        r.map(|k| search.find(maps.get(k)))
            .collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect()
}

/// IS-weighted mean of squared distances, from precomputed assignments.
pub(crate) fn quantization_error_from(assignments: &[(usize, f64)], is_weights: &[f64]) -> f64 {
    let partial: Vec<f64> = assignments
        .chunks(CHUNK)
        .zip(is_weights.chunks(CHUNK))
        .map(|(a, wt)| a.iter().zip(wt).map(|((_, d2), w)| d2 * w).sum())
        .collect();
    (partial.iter().sum::<f64>() / assignments.len() as f64).sqrt()
}

/// `ê(Γ) = ((1/n) Σ_k ‖y_k − q_Γ(y_k)‖² w_k)^{1/2}`.
pub fn empirical_quantization_error(
    gamma: &PrototypeSet,
    maps: &MapSet,
    is_weights: &[f64],
    w: &InnerProductWeights,
) -> Result<f64> {
    check_sample(gamma, maps, is_weights, w)?;
    let a = assign_all(gamma, maps, w);
    Ok(quantization_error_from(&a, is_weights))
}
