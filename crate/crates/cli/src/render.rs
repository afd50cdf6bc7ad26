//! Map renderings: 8-bit PGM (exact) and a blue-ramp PNG with an optional
//! depth contour.

use raremap::MapSet;

use crate::error::{CliError, CliResult};

/// Shared value range of a set of maps; a flat range is widened by one.
pub fn shared_range(maps: &MapSet) -> (f64, f64) {
    let (lo, hi) = maps
        .flat()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi > lo {
        (lo, hi)
    } else {
        (lo, lo + 1.0)
    }
}

/// Gray level of `v`: `lo` is black, `hi` white, linear in between.
fn level(v: f64, lo: f64, hi: f64) -> u8 {
    (255.0 * (v - lo) / (hi - lo)).round().clamp(0.0, 255.0) as u8
}

/// Binary PGM (`P5`) of one `side × side` map.
pub fn pgm(values: &[f64], side: usize, range: (f64, f64)) -> Vec<u8> {
    let mut out = format!("P5\n{side} {side}\n255\n").into_bytes();
    out.extend(values.iter().map(|v| level(*v, range.0, range.1)));
    out
}

/// Pixels at or above `depth` with a 4-neighbour below it.
fn contour_mask(values: &[f64], side: usize, depth: f64) -> Vec<bool> {
    let at = |r: usize, c: usize| values[r * side + c];
    let mut mask = vec![false; values.len()];
    for r in 0..side {
        for c in 0..side {
            if at(r, c) < depth {
                continue;
            }
            let below = (r > 0 && at(r - 1, c) < depth)
                || (r + 1 < side && at(r + 1, c) < depth)
                || (c > 0 && at(r, c - 1) < depth)
                || (c + 1 < side && at(r, c + 1) < depth);
            mask[r * side + c] = below;
        }
    }
    mask
}

/// RGB PNG: white at `lo` to dark blue at `hi`, contour pixels in red.
pub fn png(values: &[f64], side: usize, range: (f64, f64), contour: Option<f64>) -> CliResult<Vec<u8>> {
    const LIGHT: [f64; 3] = [255.0, 255.0, 255.0];
    const DARK: [f64; 3] = [8.0, 48.0, 107.0];
    const LINE: [u8; 3] = [220, 20, 20];
    let mask = contour.map(|d| contour_mask(values, side, d));
    let mut rgb = Vec::with_capacity(3 * values.len());
    for (i, v) in values.iter().enumerate() {
        if mask.as_ref().is_some_and(|m| m[i]) {
            rgb.extend_from_slice(&LINE);
            continue;
        }
        let t = level(*v, range.0, range.1) as f64 / 255.0;
        for k in 0..3 {
            rgb.push((LIGHT[k] + t * (DARK[k] - LIGHT[k])).round() as u8);
        }
    }
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, side as u32, side as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let err = |e: png::EncodingError| CliError::Data(format!("png encoding: {e}"));
        let mut w = enc.write_header().map_err(err)?;
        w.write_image_data(&rgb).map_err(err)?;
    }
    Ok(out)
}
