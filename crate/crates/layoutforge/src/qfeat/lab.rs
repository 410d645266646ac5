//! sRGB <-> CIE Lab conversion (D65 white point) and the fixed Lab bin
//! grid used to discretize 2D graphic colors: 8 lightness bins of width
//! 12.5 over [0, 100] and 10-unit a/b cells over [-110, 110]^2, restricted
//! to the cells actually reachable from sRGB.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

// Lindbloom's continuity constants rather than the rounded CIE ones.
const KAPPA: f64 = 24389.0 / 27.0;
const EPSILON: f64 = 216.0 / 24389.0;
const WHITE_X: f64 = 0.95047;
const WHITE_Z: f64 = 1.08883;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabColor {
    pub l: f64,
    pub a: f64,
    pub b: f64,
}

fn srgb_channel_to_linear(c: u8) -> f64 {
    let c = c as f64 / 255.0;
    if c > 0.04045 {
        ((c + 0.055) / 1.055).powf(2.4)
    } else {
        c / 12.92
    }
}

fn linear_to_srgb_channel(c: f64) -> f64 {
    if c > 0.0031308 {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    } else {
        12.92 * c
    }
}

fn f_lab(t: f64) -> f64 {
    if t > EPSILON {
        t.cbrt()
    } else {
        (KAPPA * t + 16.0) / 116.0
    }
}

pub fn srgb_to_lab(r: u8, g: u8, b: u8) -> LabColor {
    let (rl, gl, bl) = (srgb_channel_to_linear(r), srgb_channel_to_linear(g), srgb_channel_to_linear(b));
    let x = 0.4124564 * rl + 0.3575761 * gl + 0.1804375 * bl;
    let y = 0.2126729 * rl + 0.7151522 * gl + 0.0721750 * bl;
    let z = 0.0193339 * rl + 0.1191920 * gl + 0.9503041 * bl;
    let fx = f_lab(x / WHITE_X);
    let fy = f_lab(y);
    let fz = f_lab(z / WHITE_Z);
    LabColor { l: 116.0 * fy - 16.0, a: 500.0 * (fx - fy), b: 200.0 * (fy - fz) }
}

/// Inverse conversion; out-of-gamut results are clamped per channel.
pub fn lab_to_srgb(lab: LabColor) -> (u8, u8, u8) {
    let fy = (lab.l + 16.0) / 116.0;
    let fx = fy + lab.a / 500.0;
    let fz = fy - lab.b / 200.0;
    let inv_f = |f: f64| {
        let f3 = f * f * f;
        if f3 > EPSILON {
            f3
        } else {
            (116.0 * f - 16.0) / KAPPA
        }
    };
    let yr = if lab.l > KAPPA * EPSILON { fy * fy * fy } else { lab.l / KAPPA };
    let x = inv_f(fx) * WHITE_X;
    let y = yr;
    let z = inv_f(fz) * WHITE_Z;
    let rl = 3.2404542 * x - 1.5371385 * y - 0.4985314 * z;
    let gl = -0.9692660 * x + 1.8760108 * y + 0.0415560 * z;
    let bl = 0.0556434 * x - 0.2040259 * y + 1.0572252 * z;
    let to_byte = |c: f64| (linear_to_srgb_channel(c).clamp(0.0, 1.0) * 255.0).round() as u8;
    (to_byte(rl), to_byte(gl), to_byte(bl))
}

pub const L_BIN_COUNT: usize = 8;
pub const L_BIN_WIDTH: f64 = 12.5;
pub const AB_CELL_SIZE: f64 = 10.0;
pub const AB_MIN: f64 = -110.0;
pub const AB_CELLS: usize = 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("Lab triple falls outside every sRGB-reachable bin")]
pub struct OutOfGamut;

/// The enumerated in-gamut bin list. Building it scans the full 24-bit sRGB
/// cube once, so construction is cached behind [`LabBinning::shared`].
#[derive(Debug, Clone)]
pub struct LabBinning {
    /// Dense index per (L, a, b) cell, -1 when unreachable from sRGB.
    cell_to_bin: Vec<i32>,
    /// Cell coordinates of each in-gamut bin, in cell-id order.
    bins: Vec<(usize, usize, usize)>,
}

fn cell_of(lab: LabColor) -> Option<(usize, usize, usize)> {
    // the conversion matrix rows do not sum exactly to one, so pure white
    // lands a few 1e-6 above L = 100
    if lab.l < -1e-4 || lab.l > 100.0 + 1e-4 {
        return None;
    }
    let l = lab.l.clamp(0.0, 100.0);
    let li = ((l / L_BIN_WIDTH) as usize).min(L_BIN_COUNT - 1);
    let a_off = lab.a - AB_MIN;
    let b_off = lab.b - AB_MIN;
    if a_off < 0.0 || b_off < 0.0 {
        return None;
    }
    let ai = (a_off / AB_CELL_SIZE) as usize;
    let bi = (b_off / AB_CELL_SIZE) as usize;
    if ai >= AB_CELLS || bi >= AB_CELLS {
        return None;
    }
    Some((li, ai, bi))
}

fn cell_id(cell: (usize, usize, usize)) -> usize {
    (cell.0 * AB_CELLS + cell.1) * AB_CELLS + cell.2
}

impl LabBinning {
    pub fn build() -> Self {
        let total = L_BIN_COUNT * AB_CELLS * AB_CELLS;
        let mut occupied = vec![false; total];
        for r in 0..=255u32 {
            for g in 0..=255u32 {
                for b in 0..=255u32 {
                    let lab = srgb_to_lab(r as u8, g as u8, b as u8);
                    let cell = cell_of(lab).expect("sRGB color outside the Lab grid");
                    occupied[cell_id(cell)] = true;
                }
            }
        }
        let mut cell_to_bin = vec![-1i32; total];
        let mut bins = Vec::new();
        for li in 0..L_BIN_COUNT {
            for ai in 0..AB_CELLS {
                for bi in 0..AB_CELLS {
                    let id = cell_id((li, ai, bi));
                    if occupied[id] {
                        cell_to_bin[id] = bins.len() as i32;
                        bins.push((li, ai, bi));
                    }
                }
            }
        }
        LabBinning { cell_to_bin, bins }
    }

    /// Process-wide instance; the sRGB scan runs once.
    pub fn shared() -> &'static LabBinning {
        static SHARED: OnceLock<LabBinning> = OnceLock::new();
        SHARED.get_or_init(LabBinning::build)
    }

    pub fn bin_count(&self) -> usize {
        self.bins.len()
    }

    pub fn quantize(&self, lab: LabColor) -> Result<usize, OutOfGamut> {
        let cell = cell_of(lab).ok_or(OutOfGamut)?;
        match self.cell_to_bin[cell_id(cell)] {
            -1 => Err(OutOfGamut),
            idx => Ok(idx as usize),
        }
    }

    /// Center of the bin's cell.
    pub fn dequantize(&self, bin: usize) -> LabColor {
        let (li, ai, bi) = self.bins[bin];
        LabColor {
            l: (li as f64 + 0.5) * L_BIN_WIDTH,
            a: AB_MIN + (ai as f64 + 0.5) * AB_CELL_SIZE,
            b: AB_MIN + (bi as f64 + 0.5) * AB_CELL_SIZE,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::rng_from_seed;
    use rand::Rng;

    #[test]
    fn black_is_the_lab_origin() {
        let lab = srgb_to_lab(0, 0, 0);
        assert!(lab.l.abs() < 1e-9 && lab.a.abs() < 1e-9 && lab.b.abs() < 1e-9, "{lab:?}");
    }

    #[test]
    fn white_is_neutral_high_lightness() {
        let lab = srgb_to_lab(255, 255, 255);
        assert!((lab.l - 100.0).abs() < 0.01, "L* = {}", lab.l);
        assert!(lab.a.abs() < 0.5 && lab.b.abs() < 0.5, "{lab:?}");
    }

    #[test]
    fn roundtrip_within_one_per_channel() {
        let mut rng = rng_from_seed(42);
        for _ in 0..1000 {
            let (r, g, b) = (rng.gen::<u8>(), rng.gen::<u8>(), rng.gen::<u8>());
            let (r2, g2, b2) = lab_to_srgb(srgb_to_lab(r, g, b));
            assert!((r as i32 - r2 as i32).abs() <= 1, "r {r} -> {r2}");
            assert!((g as i32 - g2 as i32).abs() <= 1, "g {g} -> {g2}");
            assert!((b as i32 - b2 as i32).abs() <= 1, "b {b} -> {b2}");
        }
    }

    #[test]
    fn quantize_dequantize_fixed_point() {
        let bins = LabBinning::shared();
        assert!(bins.bin_count() >= 2);
        // the center of every bin lies in that bin's own (occupied) cell
        for bin in (0..bins.bin_count()).step_by(7) {
            let center = bins.dequantize(bin);
            assert_eq!(bins.quantize(center).unwrap(), bin);
        }
        // same-cell colors share an index
        let a = srgb_to_lab(100, 50, 30);
        let idx = bins.quantize(a).unwrap();
        let nudged = LabColor { l: a.l + 0.01, a: a.a + 0.01, b: a.b + 0.01 };
        if cell_of(nudged) == cell_of(a) {
            assert_eq!(bins.quantize(nudged).unwrap(), idx);
        }
    }

    #[test]
    fn non_srgb_lab_triple_is_out_of_gamut() {
        let bins = LabBinning::shared();
        // extreme chroma at low lightness is unreachable from sRGB
        let err = bins.quantize(LabColor { l: 5.0, a: 105.0, b: 105.0 });
        assert_eq!(err, Err(OutOfGamut));
    }

    #[test]
    fn srgb_gamut_is_covered_at_stride_eight() {
        let bins = LabBinning::shared();
        for r in (0..=255u32).step_by(8) {
            for g in (0..=255u32).step_by(8) {
                for b in (0..=255u32).step_by(8) {
                    let lab = srgb_to_lab(r as u8, g as u8, b as u8);
                    bins.quantize(lab).unwrap_or_else(|_| {
                        panic!("({r},{g},{b}) -> {lab:?} has no bin")
                    });
                }
            }
        }
    }

    #[test]
    fn dequantize_is_left_inverse_on_indices() {
        let bins = LabBinning::shared();
        // quantize(dequantize(i)) = i wherever the center is quantizable;
        // the cell lookup itself is exact for all indices
        for bin in (0..bins.bin_count()).step_by(13) {
            let c = bins.dequantize(bin);
            let cell = cell_of(c).unwrap();
            assert_eq!(bins.cell_to_bin[cell_id(cell)], bin as i32);
        }
    }
}
