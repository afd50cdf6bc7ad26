//! Sobol low-discrepancy points (Joe–Kuo direction numbers, unscrambled,
//! Gray-code order starting at the origin).

use crate::error::{Error, Result};

/// Highest supported dimension.
pub const MAX_DIM: usize = 16;

const BITS: usize = 32;

// (degree s, coefficient a, initial m_1..m_s) for dimensions 2..=16.
const DIRECTIONS: [(u32, u32, &[u32]); MAX_DIM - 1] = [
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
    (5, 2, &[1, 1, 5, 5, 17]),
    (5, 4, &[1, 1, 5, 5, 5]),
    (5, 7, &[1, 1, 7, 11, 19]),
    (5, 11, &[1, 1, 5, 1, 1]),
    (5, 13, &[1, 1, 1, 3, 11]),
    (5, 14, &[1, 3, 5, 5, 31]),
    (6, 1, &[1, 3, 3, 9, 7, 49]),
    (6, 13, &[1, 1, 1, 15, 21, 21]),
    (6, 16, &[1, 3, 1, 13, 27, 49]),
];

fn direction_vectors(dim: usize) -> [u32; BITS] {
    let mut v = [0u32; BITS];
    if dim == 0 {
        for (i, vi) in v.iter_mut().enumerate() {
            *vi = 1 << (BITS - 1 - i);
        }
        return v;
    }
    let (s, a, m) = DIRECTIONS[dim - 1];
    let s = s as usize;
    for i in 0..s.min(BITS) {
        v[i] = m[i] << (BITS - 1 - i);
    }
    for i in s..BITS {
        let mut x = v[i - s] ^ (v[i - s] >> s);
        for k in 1..s {
            if (a >> (s - 1 - k)) & 1 == 1 {
                x ^= v[i - k];
            }
        }
        v[i] = x;
    }
    v
}

/// First `n` points of the `d`-dimensional sequence, one `Vec` per point.
pub fn sobol_design(d: usize, n: usize) -> Result<Vec<Vec<f64>>> {
    if d == 0 || d > MAX_DIM {
        return Err(Error::InvalidArgument(format!(
            "Sobol dimension must be in 1..={MAX_DIM}, got {d}"
        )));
    }
    if n == 0 || n as u64 > 1u64 << BITS {
        return Err(Error::InvalidArgument(format!("bad Sobol point count {n}")));
    }
    let dirs: Vec<[u32; BITS]> = (0..d).map(direction_vectors).collect();
    let scale = 1.0 / (1u64 << BITS) as f64;
    let mut state = vec![0u32; d];
    let mut out = Vec::with_capacity(n);
    out.push(vec![0.0; d]);
    for k in 1..n {
        let c = (k - 1).trailing_ones() as usize;
        for (x, v) in state.iter_mut().zip(&dirs) {
            *x ^= v[c];
        }
        out.push(state.iter().map(|&x| x as f64 * scale).collect());
    }
    Ok(out)
}
