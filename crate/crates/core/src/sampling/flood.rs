//! The coastal flooding input model: offshore tide/surge conditions and a
//! dyke-breach law that depends on the maximum still-water level.
//!
//! Input vectors have seven coordinates
//! `(T, S, t0, t_minus, t_plus, location, erosion_rate)`. A vector without a
//! breach carries `location = 0` and `erosion_rate = 0`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::density::{DensitySpec, MeasureValue};
use crate::error::{Error, Result};

/// Number of offshore coordinates.
pub const OFFSHORE_DIM: usize = 5;
/// Offshore coordinates plus breach location and erosion rate.
pub const FLOOD_DIM: usize = 7;
/// Index of the breach-location coordinate.
pub const LOCATION_COORD: usize = 5;
/// Index of the erosion-rate coordinate.
pub const EROSION_COORD: usize = 6;

/// Supports of `(T, S, t0, t_minus, t_plus)`.
pub const OFFSHORE_SUPPORTS: [(f64, f64); OFFSHORE_DIM] = [
    (0.52, 3.59),
    (0.65, 2.5),
    (-8.05, 8.05),
    (-12.0, 0.0),
    (0.0, 12.2),
];

/// Offshore forcing of one event.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OffshoreConditions {
    /// High-tide level (m).
    pub tide: f64,
    /// Surge peak amplitude (m).
    pub surge: f64,
    /// Surge peak time relative to high tide (h).
    pub phase: f64,
    /// Rising duration (h), `<= 0`.
    pub t_minus: f64,
    /// Falling duration (h), `>= 0`.
    pub t_plus: f64,
}

impl OffshoreConditions {
    pub fn from_slice(x: &[f64]) -> Result<Self> {
        if x.len() < OFFSHORE_DIM {
            return Err(Error::DimensionMismatch(format!(
                "offshore conditions need {OFFSHORE_DIM} coordinates, got {}",
                x.len()
            )));
        }
        Ok(Self {
            tide: x[0],
            surge: x[1],
            phase: x[2],
            t_minus: x[3],
            t_plus: x[4],
        })
    }

    /// Surge level at time `t` (h): a triangle of peak `surge` at `phase`.
    pub fn surge_at(&self, t: f64) -> f64 {
        let dt = t - self.phase;
        if dt == 0.0 {
            self.surge
        } else if dt < 0.0 {
            let rise = -self.t_minus;
            if rise > 0.0 && dt >= -rise {
                self.surge * (1.0 + dt / rise)
            } else {
                0.0
            }
        } else if self.t_plus > 0.0 && dt <= self.t_plus {
            self.surge * (1.0 - dt / self.t_plus)
        } else {
            0.0
        }
    }
}

/// Tide and time-discretization settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TideModel {
    /// Tidal period (h).
    #[serde(default = "default_period")]
    pub period_hours: f64,
    /// Time step of the maximization grid (minutes).
    #[serde(default = "default_step")]
    pub step_minutes: f64,
}

fn default_period() -> f64 {
    12.4
}

fn default_step() -> f64 {
    1.0
}

impl Default for TideModel {
    fn default() -> Self {
        Self {
            period_hours: default_period(),
            step_minutes: default_step(),
        }
    }
}

impl TideModel {
    /// `T · cos(2πt / period)`: high tide at `t = 0`.
    pub fn tide_at(&self, c: &OffshoreConditions, t: f64) -> f64 {
        c.tide * (2.0 * std::f64::consts::PI * t / self.period_hours).cos()
    }

    /// Maximum over time of tide + surge, on a grid of `step_minutes` covering
    /// one tidal cycle around high tide and the whole surge triangle. The
    /// high-tide and surge-peak instants are always evaluated.
    pub fn signal_max(&self, c: &OffshoreConditions) -> f64 {
        let half = self.period_hours / 2.0;
        let start = (-half).min(c.phase + c.t_minus.min(0.0));
        let end = half.max(c.phase + c.t_plus.max(0.0));
        let step = self.step_minutes / 60.0;
        let n = ((end - start) / step).ceil() as usize;
        let level = |t: f64| self.tide_at(c, t) + c.surge_at(t);
        let mut best = level(0.0).max(level(c.phase));
        for i in 0..=n {
            let t = (start + i as f64 * step).min(end);
            best = best.max(level(t));
        }
        best
    }
}

/// `signal_max` with the default tide model.
pub fn signal_max(c: &OffshoreConditions) -> f64 {
    TideModel::default().signal_max(c)
}

/// Conditional breach law given offshore conditions.
#[derive(Clone, Debug, PartialEq)]
pub struct BreachConditional {
    pub probability_of_breach: f64,
    pub location_law: DensitySpec,
    pub erosion_law: DensitySpec,
}

/// How the breach variables are distributed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BreachLaw {
    /// Nominal law: breach probability `high` when the maximum still-water
    /// level exceeds `fraction · embankment_height` (strictly), else `low`.
    Conditional {
        embankment_height: f64,
        #[serde(default = "default_fraction")]
        fraction: f64,
        #[serde(default = "default_high")]
        high: f64,
        #[serde(default = "default_low")]
        low: f64,
        #[serde(default)]
        tide: TideModel,
    },
    /// Breach probability independent of the offshore conditions
    /// (the importance density uses `8/13`).
    Fixed { breach_probability: f64 },
}

fn default_fraction() -> f64 {
    0.7
}
fn default_high() -> f64 {
    0.5
}
fn default_low() -> f64 {
    1e-4
}

/// Number of candidate breach locations.
pub const BREACH_LOCATIONS: usize = 10;

impl BreachLaw {
    pub fn nominal(embankment_height: f64) -> Self {
        BreachLaw::Conditional {
            embankment_height,
            fraction: default_fraction(),
            high: default_high(),
            low: default_low(),
            tide: TideModel::default(),
        }
    }

    /// The importance law of the breach variables: `5/13` no breach.
    pub fn biased() -> Self {
        BreachLaw::Fixed {
            breach_probability: 8.0 / 13.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            BreachLaw::Conditional {
                embankment_height,
                fraction,
                high,
                low,
                tide,
            } => {
                *embankment_height > 0.0
                    && *fraction > 0.0
                    && (0.0..=1.0).contains(high)
                    && (0.0..=1.0).contains(low)
                    && tide.period_hours > 0.0
                    && tide.step_minutes > 0.0
            }
            BreachLaw::Fixed { breach_probability } => (0.0..=1.0).contains(breach_probability),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid breach law {self:?}")))
        }
    }

    pub fn breach_probability(&self, c: &OffshoreConditions) -> f64 {
        match self {
            BreachLaw::Conditional {
                embankment_height,
                fraction,
                high,
                low,
                tide,
            } => {
                if tide.signal_max(c) > fraction * embankment_height {
                    *high
                } else {
                    *low
                }
            }
            BreachLaw::Fixed { breach_probability } => *breach_probability,
        }
    }
}

/// Breach probability and the laws of location and erosion rate given a
/// breach, under the nominal rule.
pub fn breach_conditional(c: &OffshoreConditions, embankment_height: f64) -> Result<BreachConditional> {
    if !(embankment_height > 0.0) {
        return Err(Error::InvalidArgument(
            "embankment height must be > 0".into(),
        ));
    }
    Ok(BreachConditional {
        probability_of_breach: BreachLaw::nominal(embankment_height).breach_probability(c),
        location_law: location_law(),
        erosion_law: DensitySpec::AtomPlusUniform {
            atom: 0.0,
            atom_mass: 0.0,
            lo: 0.0,
            hi: 1.0,
            uniform_mass: 1.0,
        },
    })
}

fn location_law() -> DensitySpec {
    DensitySpec::DiscreteUniform {
        atoms: (1..=BREACH_LOCATIONS).map(|k| k as f64).collect(),
    }
}

/// Breach state read from an input vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BreachKey {
    Absent,
    Present,
}

/// Regime of a flood input vector, from its breach-location coordinate.
pub fn breach_key(x: &[f64]) -> BreachKey {
    if x.get(LOCATION_COORD).copied().unwrap_or(0.0) == 0.0 {
        BreachKey::Absent
    } else {
        BreachKey::Present
    }
}

/// Joint law of the seven flood inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FloodLaw {
    /// Marginal laws of `(T, S, t0, t_minus, t_plus)`, independent.
    pub offshore: Vec<DensitySpec>,
    pub breach: BreachLaw,
}

impl FloodLaw {
    /// The importance density: uniform offshore marginals on the supports,
    /// uniform locations and `5/13 δ_0 + 8/13 U(]0, 1])` erosion.
    pub fn biased() -> Self {
        Self {
            offshore: OFFSHORE_SUPPORTS
                .iter()
                .map(|&(lo, hi)| DensitySpec::uniform(lo, hi))
                .collect(),
            breach: BreachLaw::biased(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.offshore.len() != OFFSHORE_DIM || self.offshore.iter().any(|d| d.dim() != 1) {
            return Err(Error::InvalidArgument(format!(
                "flood law needs {OFFSHORE_DIM} one-dimensional offshore marginals"
            )));
        }
        for d in &self.offshore {
            d.validate()?;
        }
        self.breach.validate()
    }

    pub fn measure(&self, x: &[f64]) -> Result<MeasureValue> {
        if x.len() != FLOOD_DIM {
            return Err(Error::DimensionMismatch(format!(
                "flood inputs have {FLOOD_DIM} coordinates, got {}",
                x.len()
            )));
        }
        let mut value = 1.0;
        for (d, xi) in self.offshore.iter().zip(x) {
            let v = d.eval(std::slice::from_ref(xi))?;
            if v == 0.0 {
                return Ok(MeasureValue::ZERO);
            }
            value *= v;
        }
        let c = OffshoreConditions::from_slice(x)?;
        let p = self.breach.breach_probability(&c);
        let (loc, ero) = (x[LOCATION_COORD], x[EROSION_COORD]);
        let loc_bit = 1u64 << LOCATION_COORD;
        let ero_bit = 1u64 << EROSION_COORD;
        if loc == 0.0 && ero == 0.0 {
            Ok(MeasureValue {
                value: value * (1.0 - p),
                atom_mask: loc_bit | ero_bit,
            })
        } else if loc.fract() == 0.0 && (1.0..=BREACH_LOCATIONS as f64).contains(&loc) && ero > 0.0 && ero <= 1.0 {
            Ok(MeasureValue {
                value: value * p / BREACH_LOCATIONS as f64,
                atom_mask: loc_bit,
            })
        } else {
            Ok(MeasureValue::ZERO)
        }
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut x: Vec<f64> = self
            .offshore
            .iter()
            .map(|d| d.sample_one(rng)[0])
            .collect();
        let c = OffshoreConditions::from_slice(&x).expect("five offshore coordinates");
        let p = self.breach.breach_probability(&c);
        if rng.random::<f64>() < p {
            x.push(rng.random_range(1..=BREACH_LOCATIONS) as f64);
            x.push(1.0 - rng.random::<f64>());
        } else {
            x.push(0.0);
            x.push(0.0);
        }
        x
    }

    /// `true` when this law's support contains `other`'s.
    pub fn support_covers(&self, other: &FloodLaw) -> bool {
        let offshore = self
            .offshore
            .iter()
            .zip(&other.offshore)
            .all(|(g, f)| g.support_covers(f));
        let breach_prob = |l: &BreachLaw| match l {
            BreachLaw::Fixed { breach_probability } => (*breach_probability, *breach_probability),
            BreachLaw::Conditional { high, low, .. } => (high.min(*low), high.max(*low)),
        };
        let (g_min, g_max) = breach_prob(&self.breach);
        let (f_min, f_max) = breach_prob(&other.breach);
        // f charges "breach" (resp. "no breach") only if g does.
        let breach_ok = f_max == 0.0 || g_min > 0.0;
        let absent_ok = f_min == 1.0 || g_max < 1.0;
        offshore && breach_ok && absent_ok
    }
}
