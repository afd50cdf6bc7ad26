//! Probability laws on input vectors: evaluation, mixed atom/continuous
//! measures, support checks and sampling.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};

const MASS_TOL: f64 = 1e-9;

/// Parametric family of a truncated 1-D law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum Family {
    Normal { mean: f64, sd: f64 },
    Gumbel { loc: f64, scale: f64 },
    Exponential { rate: f64 },
}

impl Family {
    fn cdf(&self, x: f64) -> f64 {
        match *self {
            Family::Normal { mean, sd } => 0.5 * erfc(-(x - mean) / (sd * std::f64::consts::SQRT_2)),
            Family::Gumbel { loc, scale } => (-(-(x - loc) / scale).exp()).exp(),
            Family::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-rate * x).exp_m1()
                }
            }
        }
    }

    fn pdf(&self, x: f64) -> f64 {
        match *self {
            Family::Normal { mean, sd } => {
                let z = (x - mean) / sd;
                (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
            }
            Family::Gumbel { loc, scale } => {
                let z = (x - loc) / scale;
                (-(z + (-z).exp())).exp() / scale
            }
            Family::Exponential { rate } => {
                if x < 0.0 {
                    0.0
                } else {
                    rate * (-rate * x).exp()
                }
            }
        }
    }

    fn quantile(&self, p: f64) -> f64 {
        match *self {
            Family::Normal { mean, sd } => mean - sd * std::f64::consts::SQRT_2 * erfc_inv(2.0 * p),
            Family::Gumbel { loc, scale } => loc - scale * (-p.ln()).ln(),
            Family::Exponential { rate } => -(-p).ln_1p() / rate,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Family::Normal { mean, sd } => mean.is_finite() && sd > 0.0 && sd.is_finite(),
            Family::Gumbel { loc, scale } => loc.is_finite() && scale > 0.0 && scale.is_finite(),
            Family::Exponential { rate } => rate > 0.0 && rate.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("bad family parameters {self:?}")))
        }
    }
}

/// Density (or mass) of a law at a point, tagged with the coordinates at
/// which the law put an atom.
///
/// Two values are comparable (Radon–Nikodym ratio) only when their atom
/// masks agree.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeasureValue {
    pub value: f64,
    pub atom_mask: u64,
}

impl MeasureValue {
    pub const ZERO: MeasureValue = MeasureValue {
        value: 0.0,
        atom_mask: 0,
    };

    fn continuous(value: f64) -> Self {
        Self {
            value,
            atom_mask: 0,
        }
    }

    fn atom(mass: f64) -> Self {
        Self {
            value: mass,
            atom_mask: 1,
        }
    }
}

/// Ratio `f/g` of two measure values, comparing atom masses to atom masses
/// and densities to densities.
pub fn measure_ratio(f: MeasureValue, g: MeasureValue) -> Result<f64> {
    if f.value == 0.0 {
        return Ok(0.0);
    }
    if g.value == 0.0 {
        return Err(Error::SupportViolation(
            "g vanishes where f is positive".into(),
        ));
    }
    if f.atom_mask & !g.atom_mask != 0 {
        return Err(Error::SupportViolation(
            "f has an atom where g is continuous".into(),
        ));
    }
    if g.atom_mask & !f.atom_mask != 0 {
        // An atom of g that f does not charge: f gives it zero mass.
        return Ok(0.0);
    }
    Ok(f.value / g.value)
}

/// A law on a (possibly multi-dimensional) input vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensitySpec {
    /// Uniform on `[lo, hi]`.
    Uniform { lo: f64, hi: f64 },
    /// Piecewise-uniform histogram: `masses[i]` spread over `[edges[i], edges[i+1]]`.
    Histogram { edges: Vec<f64>, masses: Vec<f64> },
    /// A parametric family restricted and renormalized to `[lo, hi]`.
    Truncated {
        family: Family,
        lo: f64,
        hi: f64,
    },
    /// Equal mass on each listed atom.
    DiscreteUniform { atoms: Vec<f64> },
    /// `atom_mass · δ_atom + uniform_mass · U(]lo, hi])`.
    AtomPlusUniform {
        atom: f64,
        atom_mass: f64,
        lo: f64,
        hi: f64,
        uniform_mass: f64,
    },
    /// Independent product of components, concatenated coordinates.
    Product { components: Vec<DensitySpec> },
}

impl DensitySpec {
    pub fn uniform(lo: f64, hi: f64) -> Self {
        DensitySpec::Uniform { lo, hi }
    }

    pub fn truncated_normal(mean: f64, sd: f64, lo: f64, hi: f64) -> Self {
        DensitySpec::Truncated {
            family: Family::Normal { mean, sd },
            lo,
            hi,
        }
    }

    pub fn product(components: Vec<DensitySpec>) -> Self {
        DensitySpec::Product { components }
    }

    /// Number of coordinates of the input vector.
    pub fn dim(&self) -> usize {
        match self {
            DensitySpec::Product { components } => components.iter().map(|c| c.dim()).sum(),
            _ => 1,
        }
    }

    /// Checks parameters and that the total mass is one within `1e-9`.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        match self {
            DensitySpec::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return bad(format!("uniform needs lo < hi, got [{lo}, {hi}]"));
                }
            }
            DensitySpec::Histogram { edges, masses } => {
                if edges.len() != masses.len() + 1 || masses.is_empty() {
                    return bad("histogram needs len(edges) = len(masses) + 1".into());
                }
                if edges.windows(2).any(|w| !(w[0] < w[1])) {
                    return bad("histogram edges must increase strictly".into());
                }
                if masses.iter().any(|m| !(*m >= 0.0 && m.is_finite())) {
                    return bad("histogram masses must be >= 0".into());
                }
                let total: f64 = masses.iter().sum();
                if (total - 1.0).abs() > MASS_TOL {
                    return bad(format!("histogram masses sum to {total}"));
                }
            }
            DensitySpec::Truncated { family, lo, hi } => {
                family.validate()?;
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return bad(format!("truncation needs lo < hi, got [{lo}, {hi}]"));
                }
                let z = family.cdf(*hi) - family.cdf(*lo);
                if !(z > 0.0) {
                    return bad(format!("truncation interval [{lo}, {hi}] has no mass"));
                }
            }
            DensitySpec::DiscreteUniform { atoms } => {
                if atoms.is_empty() || atoms.iter().any(|a| !a.is_finite()) {
                    return bad("discrete uniform needs finite atoms".into());
                }
                let mut sorted = atoms.clone();
                sorted.sort_by(f64::total_cmp);
                if sorted.windows(2).any(|w| w[0] == w[1]) {
                    return bad("discrete uniform atoms must be distinct".into());
                }
            }
            DensitySpec::AtomPlusUniform {
                atom,
                atom_mass,
                lo,
                hi,
                uniform_mass,
            } => {
                if !(atom.is_finite() && lo.is_finite() && hi.is_finite() && lo < hi) {
                    return bad("atom-plus-uniform needs finite atom and lo < hi".into());
                }
                if !(*atom_mass >= 0.0 && *uniform_mass >= 0.0) {
                    return bad("masses must be >= 0".into());
                }
                if (atom_mass + uniform_mass - 1.0).abs() > MASS_TOL {
                    return bad(format!(
                        "atom-plus-uniform masses sum to {}",
                        atom_mass + uniform_mass
                    ));
                }
            }
            DensitySpec::Product { components } => {
                if components.is_empty() {
                    return bad("product with no components".into());
                }
                if self.dim() > 64 {
                    return bad("at most 64 coordinates are supported".into());
                }
                for c in components {
                    c.validate()?;
                }
            }
        }
        Ok(())
    }

    /// Density/mass at `x`, with the atom mask of the coordinates where an
    /// atom was hit. Outside the support the value is 0.
    pub fn measure(&self, x: &[f64]) -> Result<MeasureValue> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "law of dimension {} evaluated at a point of dimension {}",
                self.dim(),
                x.len()
            )));
        }
        Ok(self.measure_unchecked(x))
    }

    fn measure_unchecked(&self, x: &[f64]) -> MeasureValue {
        match self {
            DensitySpec::Product { components } => {
                let mut value = 1.0;
                let mut mask = 0u64;
                let mut offset = 0usize;
                for c in components {
                    let d = c.dim();
                    let m = c.measure_unchecked(&x[offset..offset + d]);
                    if m.value == 0.0 {
                        return MeasureValue::ZERO;
                    }
                    value *= m.value;
                    mask |= m.atom_mask << offset;
                    offset += d;
                }
                MeasureValue {
                    value,
                    atom_mask: mask,
                }
            }
            _ => self.measure_1d(x[0]),
        }
    }

    fn measure_1d(&self, x: f64) -> MeasureValue {
        match self {
            DensitySpec::Uniform { lo, hi } => {
                if (*lo..=*hi).contains(&x) {
                    MeasureValue::continuous(1.0 / (hi - lo))
                } else {
                    MeasureValue::ZERO
                }
            }
            DensitySpec::Histogram { edges, masses } => {
                if x < edges[0] || x > edges[edges.len() - 1] {
                    return MeasureValue::ZERO;
                }
                // Bins are closed on the right for the last edge only.
                let i = edges.partition_point(|e| *e <= x).saturating_sub(1);
                let i = i.min(masses.len() - 1);
                MeasureValue::continuous(masses[i] / (edges[i + 1] - edges[i]))
            }
            DensitySpec::Truncated { family, lo, hi } => {
                if (*lo..=*hi).contains(&x) {
                    let z = family.cdf(*hi) - family.cdf(*lo);
                    MeasureValue::continuous(family.pdf(x) / z)
                } else {
                    MeasureValue::ZERO
                }
            }
            DensitySpec::DiscreteUniform { atoms } => {
                if atoms.contains(&x) {
                    MeasureValue::atom(1.0 / atoms.len() as f64)
                } else {
                    MeasureValue::ZERO
                }
            }
            DensitySpec::AtomPlusUniform {
                atom,
                atom_mass,
                lo,
                hi,
                uniform_mass,
            } => {
                if x == *atom && *atom_mass > 0.0 {
                    MeasureValue::atom(*atom_mass)
                } else if x > *lo && x <= *hi {
                    MeasureValue::continuous(uniform_mass / (hi - lo))
                } else {
                    MeasureValue::ZERO
                }
            }
            DensitySpec::Product { .. } => unreachable!("products are handled by measure_unchecked"),
        }
    }

    /// Density/mass value at `x` (atoms contribute their mass).
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        Ok(self.measure(x)?.value)
    }

    /// One draw.
    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        self.sample_into(rng, &mut out);
        out
    }

    fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<f64>) {
        match self {
            DensitySpec::Product { components } => {
                for c in components {
                    c.sample_into(rng, out);
                }
            }
            DensitySpec::Uniform { lo, hi } => {
                let u: f64 = rng.random();
                out.push(lo + u * (hi - lo));
            }
            DensitySpec::Histogram { edges, masses } => {
                let u: f64 = rng.random::<f64>() * masses.iter().sum::<f64>();
                let mut acc = 0.0;
                let mut bin = masses.len() - 1;
                for (i, m) in masses.iter().enumerate() {
                    acc += m;
                    if u < acc && *m > 0.0 {
                        bin = i;
                        break;
                    }
                }
                while masses[bin] == 0.0 && bin > 0 {
                    bin -= 1;
                }
                let v: f64 = rng.random();
                out.push(edges[bin] + v * (edges[bin + 1] - edges[bin]));
            }
            DensitySpec::Truncated { family, lo, hi } => {
                let (a, b) = (family.cdf(*lo), family.cdf(*hi));
                let u: f64 = rng.random();
                let p = (a + u * (b - a)).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
                out.push(family.quantile(p).clamp(*lo, *hi));
            }
            DensitySpec::DiscreteUniform { atoms } => {
                let k = rng.random_range(0..atoms.len());
                out.push(atoms[k]);
            }
            DensitySpec::AtomPlusUniform {
                atom,
                atom_mass,
                lo,
                hi,
                uniform_mass,
            } => {
                let u: f64 = rng.random::<f64>() * (atom_mass + uniform_mass);
                if u < *atom_mass {
                    out.push(*atom);
                } else {
                    // 1 − U lies in ]0, 1], so the draw lies in ]lo, hi].
                    let v = 1.0 - rng.random::<f64>();
                    out.push(lo + v * (hi - lo));
                }
            }
        }
    }

    /// Closed-form mass of `[a, b]` for a 1-D law.
    pub fn interval_mass(&self, a: f64, b: f64) -> Result<f64> {
        let mass = match self {
            DensitySpec::Uniform { lo, hi } => overlap(a, b, *lo, *hi) / (hi - lo),
            DensitySpec::Histogram { edges, masses } => masses
                .iter()
                .enumerate()
                .map(|(i, m)| m * overlap(a, b, edges[i], edges[i + 1]) / (edges[i + 1] - edges[i]))
                .sum(),
            DensitySpec::Truncated { family, lo, hi } => {
                let (l, h) = (a.max(*lo), b.min(*hi));
                if l >= h {
                    0.0
                } else {
                    (family.cdf(h) - family.cdf(l)) / (family.cdf(*hi) - family.cdf(*lo))
                }
            }
            DensitySpec::DiscreteUniform { atoms } => {
                atoms.iter().filter(|x| (a..=b).contains(*x)).count() as f64 / atoms.len() as f64
            }
            DensitySpec::AtomPlusUniform {
                atom,
                atom_mass,
                lo,
                hi,
                uniform_mass,
            } => {
                let at = if (a..=b).contains(atom) { *atom_mass } else { 0.0 };
                at + uniform_mass * overlap(a, b, *lo, *hi) / (hi - lo)
            }
            DensitySpec::Product { .. } => {
                return Err(Error::InvalidArgument(
                    "interval mass is defined for 1-D laws only".into(),
                ))
            }
        };
        Ok(mass)
    }

    fn continuous_support(&self) -> Vec<(f64, f64)> {
        match self {
            DensitySpec::Uniform { lo, hi } | DensitySpec::Truncated { lo, hi, .. } => {
                vec![(*lo, *hi)]
            }
            DensitySpec::Histogram { edges, masses } => merge_intervals(
                masses
                    .iter()
                    .enumerate()
                    .filter(|(_, m)| **m > 0.0)
                    .map(|(i, _)| (edges[i], edges[i + 1]))
                    .collect(),
            ),
            DensitySpec::AtomPlusUniform {
                lo, hi, uniform_mass, ..
            } if *uniform_mass > 0.0 => vec![(*lo, *hi)],
            _ => vec![],
        }
    }

    fn atom_set(&self) -> Vec<f64> {
        match self {
            DensitySpec::DiscreteUniform { atoms } => atoms.clone(),
            DensitySpec::AtomPlusUniform {
                atom, atom_mass, ..
            } if *atom_mass > 0.0 => vec![*atom],
            _ => vec![],
        }
    }

    fn flatten(&self) -> Vec<&DensitySpec> {
        match self {
            DensitySpec::Product { components } => {
                components.iter().flat_map(|c| c.flatten()).collect()
            }
            other => vec![other],
        }
    }

    /// `true` when `supp(other) ⊆ supp(self)` coordinate by coordinate,
    /// with every atom of `other` also an atom of `self`.
    pub fn support_covers(&self, other: &DensitySpec) -> bool {
        let (mine, theirs) = (self.flatten(), other.flatten());
        if mine.len() != theirs.len() {
            return false;
        }
        mine.iter().zip(&theirs).all(|(g, f)| {
            let g_cont = g.continuous_support();
            let g_atoms = g.atom_set();
            let cont_ok = f
                .continuous_support()
                .iter()
                .all(|&(a, b)| g_cont.iter().any(|&(c, d)| c <= a && b <= d));
            let atoms_ok = f.atom_set().iter().all(|a| g_atoms.contains(a));
            cont_ok && atoms_ok
        })
    }
}

fn overlap(a: f64, b: f64, lo: f64, hi: f64) -> f64 {
    (b.min(hi) - a.max(lo)).max(0.0)
}

fn merge_intervals(mut v: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    v.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (a, b) in v {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}
