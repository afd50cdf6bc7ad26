//! Map compression: wavelet decomposition, energy-based coefficient
//! selection and PCA on the retained coefficients.

pub mod dwt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maps::{GridMap, MapSet};
pub use dwt::{dwt2_forward, dwt2_inverse, WaveletCoefficients};

/// Slack on the cumulative energy test, absorbing rounding in the
/// normalized energies.
const ENERGY_SLACK: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FpcaModel {
    pub side: usize,
    pub p_energy: f64,
    pub n_pc: usize,
    /// Mean normalized energy of every wavelet coefficient.
    pub energies: Vec<f64>,
    /// Retained coefficient positions, by decreasing energy.
    pub retained: Vec<usize>,
    /// Training mean of every wavelet coefficient.
    pub coeff_means: Vec<f64>,
    /// `n_pc × retained.len()`, row-major; rows are orthonormal.
    pub components: Vec<f64>,
    /// Variance of the training scores along each component.
    pub explained_variance: Vec<f64>,
    /// Total variance of the retained, centered coefficients.
    pub total_variance: f64,
}

impl FpcaModel {
    pub fn retained_len(&self) -> usize {
        self.retained.len()
    }

    pub fn component(&self, j: usize) -> &[f64] {
        let k = self.retained.len();
        &self.components[j * k..(j + 1) * k]
    }

    /// Share of the retained-coefficient variance carried by the components.
    pub fn explained_ratio(&self) -> f64 {
        if self.total_variance == 0.0 {
            1.0
        } else {
            self.explained_variance.iter().sum::<f64>() / self.total_variance
        }
    }

    pub fn validate(&self) -> Result<()> {
        let px = self.side * self.side;
        let k = self.retained.len();
        let ok = self.energies.len() == px
            && self.coeff_means.len() == px
            && self.components.len() == self.n_pc * k
            && self.explained_variance.len() == self.n_pc
            && self.retained.iter().all(|&i| i < px)
            && k >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::DimensionMismatch("inconsistent FPCA model".into()))
        }
    }

    fn check_map(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.side * self.side {
            return Err(Error::DimensionMismatch(format!(
                "map of {} pixels for a model of side {}",
                y.len(),
                self.side
            )));
        }
        Ok(())
    }

    /// Scores of a raw row-major map.
    pub fn project_values(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check_map(y)?;
        let mut a = y.to_vec();
        dwt::forward_in_place(&mut a, self.side)?;
        let centered: Vec<f64> = self
            .retained
            .iter()
            .map(|&i| a[i] - self.coeff_means[i])
            .collect();
        Ok((0..self.n_pc)
            .map(|j| self.component(j).iter().zip(&centered).map(|(w, c)| w * c).sum())
            .collect())
    }

    /// Reconstruction from scores into a row-major buffer.
    pub fn inverse_into(&self, t: &[f64], out: &mut [f64]) -> Result<()> {
        if t.len() != self.n_pc {
            return Err(Error::DimensionMismatch(format!(
                "{} scores for {} components",
                t.len(),
                self.n_pc
            )));
        }
        self.check_map(out)?;
        out.copy_from_slice(&self.coeff_means);
        for (j, tj) in t.iter().enumerate() {
            for (&i, w) in self.retained.iter().zip(self.component(j)) {
                out[i] += tj * w;
            }
        }
        dwt::inverse_in_place(out, self.side)
    }
}

fn pca(data: DMatrix<f64>, n_pc: usize) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let (n, k) = data.shape();
    let total: f64 = data.iter().map(|v| v * v).sum::<f64>() / (n - 1) as f64;
    let svd = data.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Numerical("SVD did not return singular vectors".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .total_cmp(&svd.singular_values[a])
            .then(a.cmp(&b))
    });
    let mut components = Vec::with_capacity(n_pc * k);
    let mut variance = Vec::with_capacity(n_pc);
    for &r in order.iter().take(n_pc) {
        let mut row: Vec<f64> = v_t.row(r).iter().copied().collect();
        let lead = row
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |best, (i, v)| if v.abs() > best.1 { (i, v.abs()) } else { best })
            .0;
        if row[lead] < 0.0 {
            row.iter_mut().for_each(|v| *v = -*v);
        }
        components.extend(row);
        let s = svd.singular_values[r];
        variance.push(s * s / (n - 1) as f64);
    }
    Ok((components, variance, total))
}

/// Fits the wavelet basis selection and the PCA on the training maps.
pub fn fit_fpca(training_maps: &MapSet, p_energy: f64, n_pc: usize) -> Result<FpcaModel> {
    let n = training_maps.len();
    let side = training_maps.side();
    let px = training_maps.pixels();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "FPCA needs at least two training maps".into(),
        ));
    }
    if !(p_energy > 0.0 && p_energy <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "p_energy must be in (0, 1], got {p_energy}"
        )));
    }
    if n_pc == 0 {
        return Err(Error::InvalidArgument("n_pc must be >= 1".into()));
    }
    let mut coeffs = training_maps.flat().to_vec();
    for c in coeffs.chunks_exact_mut(px) {
        dwt::forward_in_place(c, side)?;
    }

    let mut energies = vec![0.0; px];
    let mut counted = 0usize;
    for c in coeffs.chunks_exact(px) {
        let total: f64 = c.iter().map(|v| v * v).sum();
        if total > 0.0 {
            counted += 1;
            for (e, v) in energies.iter_mut().zip(c) {
                *e += v * v / total;
            }
        }
    }
    if counted == 0 {
        return Err(Error::InvalidArgument(
            "every training map is empty: energies are undefined".into(),
        ));
    }
    energies.iter_mut().for_each(|e| *e /= counted as f64);

    let mut by_energy: Vec<usize> = (0..px).collect();
    by_energy.sort_by(|&a, &b| energies[b].total_cmp(&energies[a]).then(a.cmp(&b)));
    let mut retained = Vec::new();
    if p_energy >= 1.0 {
        // every coefficient that is ever nonzero
        retained.extend(by_energy.iter().copied().filter(|&i| energies[i] > 0.0));
    } else {
        let mut acc = 0.0;
        for &i in &by_energy {
            retained.push(i);
            acc += energies[i];
            if acc >= p_energy - ENERGY_SLACK {
                break;
            }
        }
    }
    let k = retained.len();
    if n_pc > (n - 1).min(k) {
        return Err(Error::InvalidArgument(format!(
            "n_pc = {n_pc} exceeds min(n_train - 1, retained) = {}",
            (n - 1).min(k)
        )));
    }

    let mut coeff_means = vec![0.0; px];
    for c in coeffs.chunks_exact(px) {
        for (m, v) in coeff_means.iter_mut().zip(c) {
            *m += v;
        }
    }
    coeff_means.iter_mut().for_each(|m| *m /= n as f64);

    let data = DMatrix::from_fn(n, k, |r, c| {
        let i = retained[c];
        coeffs[r * px + i] - coeff_means[i]
    });
    let (components, explained_variance, total_variance) = pca(data, n_pc)?;
    Ok(FpcaModel {
        side,
        p_energy,
        n_pc,
        energies,
        retained,
        coeff_means,
        components,
        explained_variance,
        total_variance,
    })
}

/// Principal-component scores `t` of a map.
pub fn fpca_project(model: &FpcaModel, y: &GridMap) -> Result<Vec<f64>> {
    model.project_values(y.values())
}

/// The map whose retained coefficients are `mean + Σ t_j ω_j` and whose
/// other coefficients are their training means.
pub fn fpca_inverse(model: &FpcaModel, t: &[f64]) -> Result<GridMap> {
    let mut out = vec![0.0; model.side * model.side];
    model.inverse_into(t, &mut out)?;
    GridMap::new(model.side, out)
}
