//! Discretization of continuous semantic features: CIE Lab color binning
//! for the 2D path and a trainable vector-quantization codebook for the 3D
//! path, plus the synthetic feature space that stands in for a pretrained
//! 3D encoder.

pub mod lab;
mod vq;

pub use lab::{lab_to_srgb, srgb_to_lab, LabBinning, LabColor, OutOfGamut};
pub use vq::{
    load_codebook, save_codebook, train_vq, vq_losses, vq_nearest, Codebook, TrainReport,
    VqConfig, VqError, VqModel,
};

use crate::util::{fixed_unit_vector, normal_vec, Prng};

/// Noise level of the synthetic feature generator.
pub const FEATURE_NOISE_STD: f64 = 0.05;

/// Fixed random unit embedding of an object class.
pub fn class_embedding(class: usize, dim: usize) -> Vec<f64> {
    fixed_unit_vector("qfeat-class", class as u64, dim)
}

/// Fixed random unit embedding of a style tag.
pub fn style_embedding(style: usize, dim: usize) -> Vec<f64> {
    fixed_unit_vector("qfeat-style", style as u64, dim)
}

/// class_embedding + style_embedding + noise: the identity-plus-style
/// structure the VQ stage must capture.
pub fn synthetic_feature(class: usize, style: usize, dim: usize, rng: &mut Prng) -> Vec<f64> {
    let c = class_embedding(class, dim);
    let s = style_embedding(style, dim);
    let eps = normal_vec(rng, dim);
    (0..dim).map(|i| c[i] + s[i] + FEATURE_NOISE_STD * eps[i]).collect()
}

/// Unit reference vector for "class name with the desired style", used by
/// the stylization gap metric.
pub fn styled_reference(class: usize, style: usize, dim: usize) -> Vec<f64> {
    let c = class_embedding(class, dim);
    let s = style_embedding(style, dim);
    let sum: Vec<f64> = (0..dim).map(|i| c[i] + s[i]).collect();
    let norm = sum.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    sum.into_iter().map(|x| x / norm).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::rng_from_seed;

    #[test]
    fn synthetic_features_cluster_by_identity() {
        let mut rng = rng_from_seed(2);
        let a1 = synthetic_feature(0, 1, 32, &mut rng);
        let a2 = synthetic_feature(0, 1, 32, &mut rng);
        let b = synthetic_feature(3, 2, 32, &mut rng);
        let dist = |x: &[f64], y: &[f64]| -> f64 {
            x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
        };
        assert!(dist(&a1, &a2) < dist(&a1, &b));
    }
}
