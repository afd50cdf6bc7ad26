//! The Campbell2D analytical map generator.
//!
//! `h_x(z)` is evaluated on the lattice `-90 + (i/s)·180`, `i = 1..s`; the
//! pixel at row `i`, column `j` holds `h_x(z_i, z_j)`. Its seven free inputs
//! are reached from the flood input supports through a componentwise
//! affine map onto `[-1, 5]`; the eighth is fixed at `-1`.

use crate::error::{Error, Result};
use crate::maps::GridMap;
use crate::quantizer::MapPredictor;
use crate::sampling::DensitySpec;

/// Number of free inputs.
pub const INPUT_DIM: usize = 7;

/// Value of the eighth input.
pub const FIXED_LAST_INPUT: f64 = -1.0;

/// Side of the standard grid.
pub const GRID_SIDE: usize = 64;

/// Supports of the seven inputs before the affine map.
pub const SUPPORTS: [(f64, f64); INPUT_DIM] = [
    (0.52, 3.59),
    (0.65, 2.5),
    (-8.05, 8.05),
    (-12.0, 0.0),
    (0.0, 12.2),
    (1.0, 10.0),
    (0.0, 1.0),
];

fn check_singular(x: &[f64; 8]) -> Result<()> {
    if x[0] == 0.0 || x[4] == 0.0 {
        return Err(Error::Singular(format!(
            "Campbell2D needs x1 != 0 and x5 != 0, got x1={} x5={}",
            x[0], x[4]
        )));
    }
    Ok(())
}

/// `out[j] = exp(inv · (a + j·step)²)` for `inv < 0`. Only three
/// exponentials are taken: the values are propagated outward from the peak
/// by ratios that shrink geometrically, so underflow can only ever round a
/// vanishing tail to zero.
fn gaussian_line(out: &mut [f64], a: f64, step: f64, inv: f64) {
    let n = out.len();
    let peak = (-a / step).round().clamp(0.0, (n - 1) as f64) as usize;
    let u = a + peak as f64 * step;
    out[peak] = (inv * u * u).exp();
    let shrink = (2.0 * inv * step * step).exp();
    let mut ratio = (inv * step * (2.0 * u + step)).exp();
    for j in peak + 1..n {
        out[j] = out[j - 1] * ratio;
        ratio *= shrink;
    }
    let mut ratio = (inv * step * (step - 2.0 * u)).exp();
    for j in (0..peak).rev() {
        out[j] = out[j + 1] * ratio;
        ratio *= shrink;
    }
}

/// `h_x(z1, z2)` for an 8-input vector.
pub fn campbell2d_eval(x: &[f64; 8], z: (f64, f64)) -> Result<f64> {
    check_singular(x)?;
    let (z1, z2) = z;
    let a = 0.8 * z1 + 0.2 * z2 - 10.0 * x[1];
    let b = 0.4 * z1 + 0.6 * z2 - 20.0 * x[5];
    Ok(x[0] * (-a * a / (60.0 * x[0] * x[0])).exp()
        + (x[1] + x[3]) * ((0.5 * z1 + 0.5 * z2) * x[0] / 500.0).exp()
        + x[4] * (x[2] - 2.0) * (-b * b / (40.0 * x[4] * x[4])).exp()
        + (x[5] + x[7]) * ((0.3 * z1 + 0.7 * z2) * x[6] / 250.0).exp())
}

/// Grid coordinates `-90 + (i/side)·180`, `i = 1..side`.
pub fn grid(side: usize) -> Vec<f64> {
    (1..=side)
        .map(|i| -90.0 + (i as f64 / side as f64) * 180.0)
        .collect()
}

/// Maps the seven supports onto `[-1, 5]` componentwise.
pub fn affine_transform(x: &[f64]) -> Result<[f64; INPUT_DIM]> {
    if x.len() != INPUT_DIM {
        return Err(Error::DimensionMismatch(format!(
            "Campbell inputs have {INPUT_DIM} coordinates, got {}",
            x.len()
        )));
    }
    let mut out = [0.0; INPUT_DIM];
    for (i, ((lo, hi), xi)) in SUPPORTS.iter().zip(x).enumerate() {
        if !(lo <= xi && xi <= hi) {
            return Err(Error::InvalidArgument(format!(
                "input {i} = {xi} outside [{lo}, {hi}]"
            )));
        }
        out[i] = -1.0 + 6.0 * (xi - lo) / (hi - lo);
    }
    Ok(out)
}

/// The Campbell2D map generator on a square grid.
#[derive(Clone, Debug)]
pub struct CampbellModel {
    side: usize,
    grid: Vec<f64>,
}

impl Default for CampbellModel {
    fn default() -> Self {
        Self::new(GRID_SIDE)
    }
}

impl CampbellModel {
    pub fn new(side: usize) -> Self {
        Self {
            side,
            grid: grid(side),
        }
    }

    /// Map of the 8-input vector `x` (already in `[-1, 5]` coordinates).
    pub fn map_raw(&self, x: &[f64; 8], out: &mut [f64]) -> Result<()> {
        check_singular(x)?;
        let s = self.side;
        if out.len() != s * s {
            return Err(Error::DimensionMismatch(format!(
                "output buffer of {} for a {s}x{s} map",
                out.len()
            )));
        }
        // The two exponential-trend terms factor into row and column parts.
        let k2 = 0.5 * x[0] / 500.0;
        let k4 = x[6] / 250.0;
        let row2: Vec<f64> = self.grid.iter().map(|z| (k2 * z).exp()).collect();
        let row4: Vec<f64> = self.grid.iter().map(|z| (0.3 * k4 * z).exp()).collect();
        let col4: Vec<f64> = self.grid.iter().map(|z| (0.7 * k4 * z).exp()).collect();
        let c2 = x[1] + x[3];
        let c4 = x[5] + x[7];
        let c3 = x[4] * (x[2] - 2.0);
        let inv1 = -1.0 / (60.0 * x[0] * x[0]);
        let inv3 = -1.0 / (40.0 * x[4] * x[4]);
        let dz = 180.0 / s as f64;
        let mut g1 = vec![0.0; s];
        let mut g3 = vec![0.0; s];
        for (i, row) in out.chunks_exact_mut(s).enumerate() {
            let z1 = self.grid[i];
            gaussian_line(&mut g1, 0.8 * z1 + 0.2 * self.grid[0] - 10.0 * x[1], 0.2 * dz, inv1);
            gaussian_line(&mut g3, 0.4 * z1 + 0.6 * self.grid[0] - 20.0 * x[5], 0.6 * dz, inv3);
            let r2 = c2 * row2[i];
            let r4 = c4 * row4[i];
            let x0 = x[0];
            for (((px, a), b), (e2, e4)) in row.iter_mut().zip(&g1).zip(&g3).zip(row2.iter().zip(&col4)) {
                *px = x0 * a + r2 * e2 + c3 * b + r4 * e4;
            }
        }
        Ok(())
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// Map of a 7-input vector given in the support coordinates.
    pub fn map_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let a = affine_transform(x)?;
        let mut full = [FIXED_LAST_INPUT; 8];
        full[..INPUT_DIM].copy_from_slice(&a);
        self.map_raw(&full, out)
    }
}

impl MapPredictor for CampbellModel {
    fn side(&self) -> usize {
        self.side
    }

    fn predict_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.map_into(x, out)
    }
}

/// `y(x)` on the standard 64×64 grid.
pub fn campbell_map(x: &[f64]) -> Result<GridMap> {
    let model = CampbellModel::default();
    let mut out = vec![0.0; GRID_SIDE * GRID_SIDE];
    model.map_into(x, &mut out)?;
    GridMap::new(GRID_SIDE, out)
}

/// Truncated normals centred on each support, with a quarter of the
/// support width as standard deviation.
pub fn synthetic_input_law() -> DensitySpec {
    DensitySpec::product(
        SUPPORTS
            .iter()
            .map(|&(lo, hi)| DensitySpec::truncated_normal(0.5 * (lo + hi), 0.25 * (hi - lo), lo, hi))
            .collect(),
    )
}

/// Uniform law on the seven supports.
pub fn uniform_input_law() -> DensitySpec {
    DensitySpec::product(
        SUPPORTS
            .iter()
            .map(|&(lo, hi)| DensitySpec::uniform(lo, hi))
            .collect(),
    )
}
