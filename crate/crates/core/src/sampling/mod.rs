//! Input laws, importance weights, seeded sampling and Sobol designs.

pub mod density;
pub mod flood;
pub mod rng;
pub mod sobol;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use density::{measure_ratio, DensitySpec, Family, MeasureValue};
pub use flood::{
    breach_conditional, breach_key, signal_max, BreachConditional, BreachKey, BreachLaw, FloodLaw,
    OffshoreConditions, TideModel,
};
pub use rng::{derive_seed, SeedStream};
pub use sobol::sobol_design;

/// A law on input vectors: either a generic density or the flood model
/// (whose breach variables depend on the offshore conditions).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputLaw {
    Density(DensitySpec),
    Flood(FloodLaw),
}

impl From<DensitySpec> for InputLaw {
    fn from(d: DensitySpec) -> Self {
        InputLaw::Density(d)
    }
}

impl From<FloodLaw> for InputLaw {
    fn from(f: FloodLaw) -> Self {
        InputLaw::Flood(f)
    }
}

impl InputLaw {
    pub fn dim(&self) -> usize {
        match self {
            InputLaw::Density(d) => d.dim(),
            InputLaw::Flood(_) => flood::FLOOD_DIM,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            InputLaw::Density(d) => d.validate(),
            InputLaw::Flood(f) => f.validate(),
        }
    }

    pub fn measure(&self, x: &[f64]) -> Result<MeasureValue> {
        match self {
            InputLaw::Density(d) => d.measure(x),
            InputLaw::Flood(f) => f.measure(x),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        Ok(self.measure(x)?.value)
    }

    pub fn sample_one<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            InputLaw::Density(d) => d.sample_one(rng),
            InputLaw::Flood(f) => f.sample_one(rng),
        }
    }

    /// `true` when `supp(other) ⊆ supp(self)`.
    pub fn support_covers(&self, other: &InputLaw) -> bool {
        match (self, other) {
            (InputLaw::Density(g), InputLaw::Density(f)) => g.support_covers(f),
            (InputLaw::Flood(g), InputLaw::Flood(f)) => g.support_covers(f),
            _ => false,
        }
    }
}

/// Density/mass value of `spec` at `x`; 0 outside the support.
pub fn density_eval(spec: &InputLaw, x: &[f64]) -> Result<f64> {
    spec.eval(x)
}

/// Importance weight `f(x)/g(x)`.
pub fn is_weight(f: &InputLaw, g: &InputLaw, x: &[f64]) -> Result<f64> {
    measure_ratio(f.measure(x)?, g.measure(x)?)
}

/// Draws `index_range` of the seeded sample: draw `k` only depends on
/// `(seed, k)`, so any sub-range can be generated independently.
pub fn sample_range(
    spec: &InputLaw,
    seed: u64,
    index_range: std::ops::Range<u64>,
) -> Vec<Vec<f64>> {
    let stream = SeedStream::new(seed, "inputs");
    let idx: Vec<u64> = index_range.collect();
    idx.par_iter()
        .map(|&k| spec.sample_one(&mut stream.rng(k)))
        .collect()
}

/// `n` i.i.d. draws from `spec`, deterministic given `seed`.
pub fn sample(spec: &InputLaw, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be >= 1".into()));
    }
    spec.validate()?;
    Ok(sample_range(spec, seed, 0..n as u64))
}

/// Inputs drawn from the importance law together with their weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedSampleSet {
    pub inputs: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub seed: u64,
}

impl WeightedSampleSet {
    /// Draws `n` inputs from `g` and weights them by `f/g`.
    pub fn draw(f: &InputLaw, g: &InputLaw, n: usize, seed: u64) -> Result<Self> {
        Self::draw_range(f, g, seed, 0..n as u64)
    }

    /// The sub-range `index_range` of the sample [`Self::draw`] would give.
    pub fn draw_range(
        f: &InputLaw,
        g: &InputLaw,
        seed: u64,
        index_range: std::ops::Range<u64>,
    ) -> Result<Self> {
        if index_range.is_empty() {
            return Err(Error::InvalidArgument("sample size must be >= 1".into()));
        }
        if f.dim() != g.dim() {
            return Err(Error::DimensionMismatch(format!(
                "f has dimension {}, g has dimension {}",
                f.dim(),
                g.dim()
            )));
        }
        f.validate()?;
        g.validate()?;
        let inputs = sample_range(g, seed, index_range);
        let weights = inputs
            .par_iter()
            .map(|x| is_weight(f, g, x))
            .collect::<Result<Vec<f64>>>()?;
        Ok(Self {
            inputs,
            weights,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn mean_weight(&self) -> f64 {
        crate::parallel::pairwise_sum(&self.weights) / self.len() as f64
    }
}
