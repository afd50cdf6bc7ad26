//! Periodic Daubechies-4 wavelet transform, full depth, Mallat layout.

use crate::error::{Error, Result};
use crate::maps::GridMap;

const SQRT3: f64 = 1.732_050_807_568_877_2;
const DENOM: f64 = 5.656_854_249_492_381; // 4·√2

const LO: [f64; 4] = [
    (1.0 + SQRT3) / DENOM,
    (3.0 + SQRT3) / DENOM,
    (3.0 - SQRT3) / DENOM,
    (1.0 - SQRT3) / DENOM,
];
const HI: [f64; 4] = [LO[3], -LO[2], LO[1], -LO[0]];

/// Wavelet coefficients of a square map, coarsest band in the top-left corner.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveletCoefficients {
    pub side: usize,
    pub coeffs: Vec<f64>,
}

impl WaveletCoefficients {
    /// Number of decomposition levels, `log2(side)`.
    pub fn levels(&self) -> u32 {
        self.side.trailing_zeros()
    }
}

fn check_side(side: usize) -> Result<()> {
    if side == 0 || !side.is_power_of_two() {
        return Err(Error::InvalidArgument(format!(
            "wavelet transform needs a power-of-two side, got {side}"
        )));
    }
    Ok(())
}

fn forward_1d(x: &mut [f64], tmp: &mut [f64]) {
    let n = x.len();
    let half = n / 2;
    for i in 0..half {
        let (mut a, mut d) = (0.0, 0.0);
        for k in 0..4 {
            let v = x[(2 * i + k) % n];
            a += LO[k] * v;
            d += HI[k] * v;
        }
        tmp[i] = a;
        tmp[half + i] = d;
    }
    x.copy_from_slice(&tmp[..n]);
}

fn inverse_1d(x: &mut [f64], tmp: &mut [f64]) {
    let n = x.len();
    let half = n / 2;
    tmp[..n].fill(0.0);
    for i in 0..half {
        let (a, d) = (x[i], x[half + i]);
        for k in 0..4 {
            tmp[(2 * i + k) % n] += LO[k] * a + HI[k] * d;
        }
    }
    x.copy_from_slice(&tmp[..n]);
}

type Filter = fn(&mut [f64], &mut [f64]);

fn rows(data: &mut [f64], side: usize, n: usize, op: Filter, tmp: &mut [f64]) {
    for r in 0..n {
        op(&mut data[r * side..r * side + n], tmp);
    }
}

fn cols(data: &mut [f64], side: usize, n: usize, op: Filter, line: &mut [f64], tmp: &mut [f64]) {
    for c in 0..n {
        for r in 0..n {
            line[r] = data[r * side + c];
        }
        op(&mut line[..n], tmp);
        for r in 0..n {
            data[r * side + c] = line[r];
        }
    }
}

/// In-place forward transform of a row-major `side×side` buffer.
pub fn forward_in_place(data: &mut [f64], side: usize) -> Result<()> {
    check_side(side)?;
    if data.len() != side * side {
        return Err(Error::DimensionMismatch(format!(
            "{} values for a {side}x{side} map",
            data.len()
        )));
    }
    let (mut line, mut tmp) = (vec![0.0; side], vec![0.0; side]);
    let mut n = side;
    while n >= 2 {
        rows(data, side, n, forward_1d, &mut tmp);
        cols(data, side, n, forward_1d, &mut line, &mut tmp);
        n /= 2;
    }
    Ok(())
}

/// In-place inverse of [`forward_in_place`].
pub fn inverse_in_place(data: &mut [f64], side: usize) -> Result<()> {
    check_side(side)?;
    if data.len() != side * side {
        return Err(Error::DimensionMismatch(format!(
            "{} values for a {side}x{side} map",
            data.len()
        )));
    }
    let (mut line, mut tmp) = (vec![0.0; side], vec![0.0; side]);
    let mut n = 2;
    while n <= side {
        cols(data, side, n, inverse_1d, &mut line, &mut tmp);
        rows(data, side, n, inverse_1d, &mut tmp);
        n *= 2;
    }
    Ok(())
}

pub fn dwt2_forward(y: &GridMap) -> Result<WaveletCoefficients> {
    let mut coeffs = y.values().to_vec();
    forward_in_place(&mut coeffs, y.side())?;
    Ok(WaveletCoefficients {
        side: y.side(),
        coeffs,
    })
}

pub fn dwt2_inverse(c: &WaveletCoefficients) -> Result<GridMap> {
    let mut values = c.coeffs.clone();
    inverse_in_place(&mut values, c.side)?;
    GridMap::new(c.side, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::SeedStream;
    use rand::Rng;

    fn random_map(side: usize, seed: u64) -> GridMap {
        let mut rng = SeedStream::new(seed, "dwt-test").rng(0);
        GridMap::from_fn(side, |_, _| rng.random_range(-3.0..3.0)).unwrap()
    }

    #[test]
    fn filters_are_orthonormal() {
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        assert!((dot(&LO, &LO) - 1.0).abs() < 1e-15);
        assert!((dot(&HI, &HI) - 1.0).abs() < 1e-15);
        assert!(dot(&LO, &HI).abs() < 1e-15);
        assert!((LO.iter().sum::<f64>() - std::f64::consts::SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn zero_and_roundtrip() {
        let z = dwt2_forward(&GridMap::zeros(64)).unwrap();
        assert!(z.coeffs.iter().all(|c| *c == 0.0));
        assert_eq!(z.levels(), 6);
        assert!(dwt2_inverse(&z).unwrap().values().iter().all(|c| *c == 0.0));
        for side in [1, 2, 4, 8, 64] {
            let y = random_map(side, side as u64);
            let c = dwt2_forward(&y).unwrap();
            let e_y: f64 = y.values().iter().map(|v| v * v).sum();
            let e_c: f64 = c.coeffs.iter().map(|v| v * v).sum();
            assert!((e_y - e_c).abs() < 1e-9 * e_y.max(1.0));
            let back = dwt2_inverse(&c).unwrap();
            let err = back.values().iter().zip(y.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-10, "side {side}: {err}");
        }
    }

    #[test]
    fn unit_coefficient_gives_unit_energy_basis_map() {
        for k in [0usize, 1, 65, 4095] {
            let mut coeffs = vec![0.0; 4096];
            coeffs[k] = 1.0;
            let m = dwt2_inverse(&WaveletCoefficients { side: 64, coeffs }).unwrap();
            let e: f64 = m.values().iter().map(|v| v * v).sum();
            assert!((e - 1.0).abs() < 1e-12);
            if k == 0 {
                // coarsest scaling function is flat
                assert!(m.values().iter().all(|v| (v - 1.0 / 64.0).abs() < 1e-12));
            }
        }
    }

    #[test]
    fn rejects_non_power_of_two() {
        assert!(dwt2_forward(&GridMap::zeros(6)).is_err());
    }
}
