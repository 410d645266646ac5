//! Variance-preserving Gaussian diffusion for spatial features, plus the
//! rotation and normalization codecs that move layouts in and out of the
//! [-1, 1] training range.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::{Bounds, Layout, LayoutKind, ObjectRecord, SemanticGraph, Vocabularies};
use crate::mat::Mat;
use crate::util::{standard_normal, Prng};

#[derive(Debug, Error, PartialEq)]
pub enum DgaussError {
    #[error("invalid gaussian schedule: {0}")]
    InvalidSchedule(String),
    #[error("rotation pair is degenerate (norm below 1e-9)")]
    DegenerateRotation,
}

/// Cosine cumulative signal-retention schedule. The per-step betas derived
/// from the raw cosine curve are clipped at 0.999 and the cumulative curve
/// rebuilt from them, so `abar` stays strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSchedule {
    pub t_count: usize,
    /// beta_t for t in 1..=T; index 0 unused.
    pub betas: Vec<f64>,
    /// Cumulative signal retention, indexed 0..=T with abar[0] = 1.
    pub abar: Vec<f64>,
}

impl GaussianSchedule {
    pub fn cosine(t_count: usize) -> Result<Self, DgaussError> {
        if t_count < 1 {
            return Err(DgaussError::InvalidSchedule("T must be >= 1".into()));
        }
        let s = 0.008;
        let f = |t: f64| {
            let v = ((t / t_count as f64 + s) / (1.0 + s)) * std::f64::consts::FRAC_PI_2;
            v.cos().powi(2)
        };
        let f0 = f(0.0);
        let mut betas = vec![0.0; t_count + 1];
        let mut abar = vec![1.0; t_count + 1];
        for t in 1..=t_count {
            let raw = 1.0 - (f(t as f64) / f0) / (f((t - 1) as f64) / f0);
            betas[t] = raw.clamp(1e-8, 0.999);
            abar[t] = abar[t - 1] * (1.0 - betas[t]);
        }
        let sched = GaussianSchedule { t_count, betas, abar };
        sched.validate()?;
        Ok(sched)
    }

    pub fn validate(&self) -> Result<(), DgaussError> {
        if self.abar[0] != 1.0 {
            return Err(DgaussError::InvalidSchedule("abar[0] must be 1".into()));
        }
        for t in 1..=self.t_count {
            if !(self.abar[t] > 0.0 && self.abar[t] < self.abar[t - 1]) {
                return Err(DgaussError::InvalidSchedule(format!(
                    "abar not strictly decreasing at t = {t}"
                )));
            }
        }
        if self.abar[self.t_count] >= 0.01 {
            return Err(DgaussError::InvalidSchedule(format!(
                "abar_T = {} >= 0.01; schedule does not reach noise",
                self.abar[self.t_count]
            )));
        }
        Ok(())
    }

    /// Posterior standard deviation used for the ancestral update.
    pub fn sigma(&self, t: usize) -> f64 {
        if t <= 1 {
            return 0.0;
        }
        let beta_tilde = (1.0 - self.abar[t - 1]) / (1.0 - self.abar[t]) * self.betas[t];
        beta_tilde.sqrt()
    }
}

pub fn encode_rotation(r: f64) -> (f64, f64) {
    (r.cos(), r.sin())
}

/// atan2 after renormalizing the pair; result wrapped to [-pi, pi).
pub fn decode_rotation(pair: (f64, f64)) -> Result<f64, DgaussError> {
    let norm = (pair.0 * pair.0 + pair.1 * pair.1).sqrt();
    if norm < 1e-9 {
        return Err(DgaussError::DegenerateRotation);
    }
    let r = (pair.1 / norm).atan2(pair.0 / norm);
    Ok(if r >= std::f64::consts::PI { -std::f64::consts::PI } else { r })
}

/// L_t = sqrt(abar_t) L_0 + sqrt(1 - abar_t) eps.
pub fn q_sample(l0: &Mat, t: usize, eps: &Mat, sched: &GaussianSchedule) -> Mat {
    assert_eq!(l0.data.len(), eps.data.len());
    let ab = sched.abar[t];
    let (sa, sb) = (ab.sqrt(), (1.0 - ab).sqrt());
    let mut out = l0.clone();
    for (o, (&x, &e)) in out.data.iter_mut().zip(l0.data.iter().zip(eps.data.iter())) {
        *o = sa * x + sb * e;
    }
    out
}

/// Mean squared error over the rows of real (non-EMPTY) nodes only. With no
/// real rows the loss is zero.
pub fn eps_loss(eps_hat: &Mat, eps: &Mat, empty_mask: &[bool]) -> f64 {
    assert_eq!(eps_hat.rows, eps.rows);
    assert_eq!(empty_mask.len(), eps.rows);
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..eps.rows {
        if empty_mask[i] {
            continue;
        }
        for (a, b) in eps_hat.row(i).iter().zip(eps.row(i)) {
            let d = a - b;
            sum += d * d;
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Ancestral update with caller-provided noise (zero noise is applied at
/// t = 1 regardless).
///
/// The mean is computed through the implied clean sample clamped to the
/// [-1, 1] training range, which is algebraically the standard
/// (L_t - beta_t/sqrt(1-abar_t) eps_hat)/sqrt(1-beta_t) update whenever the
/// implied sample is in range. At the short step counts this decoder runs
/// at, the final steps carry beta near 1 and would otherwise amplify any
/// prediction error by 1/sqrt(1-beta).
pub fn ddpm_step_with_noise(
    l_t: &Mat,
    eps_hat: &Mat,
    t: usize,
    sched: &GaussianSchedule,
    noise: &Mat,
) -> Mat {
    assert!(t >= 1 && t <= sched.t_count);
    let beta = sched.betas[t];
    let abar = sched.abar[t];
    let abar_prev = sched.abar[t - 1];
    let coef_x0 = abar_prev.sqrt() * beta / (1.0 - abar);
    let coef_xt = (1.0 - beta).sqrt() * (1.0 - abar_prev) / (1.0 - abar);
    let sigma = sched.sigma(t);
    let mut out = l_t.clone();
    for i in 0..out.data.len() {
        let x0_hat = (l_t.data[i] - (1.0 - abar).sqrt() * eps_hat.data[i]) / abar.sqrt();
        let mu = coef_x0 * x0_hat.clamp(-1.0, 1.0) + coef_xt * l_t.data[i];
        out.data[i] = mu + sigma * noise.data[i];
    }
    out
}

pub fn ddpm_step(
    l_t: &Mat,
    eps_hat: &Mat,
    t: usize,
    sched: &GaussianSchedule,
    rng: &mut Prng,
) -> Mat {
    let noise = if t > 1 {
        let mut n = Mat::zeros(l_t.rows, l_t.cols);
        for v in &mut n.data {
            *v = standard_normal(rng);
        }
        n
    } else {
        Mat::zeros(l_t.rows, l_t.cols)
    };
    ddpm_step_with_noise(l_t, eps_hat, t, sched, &noise)
}

/// Maps object poses to network rows and back. Locations are scaled to
/// [-1, 1] per axis relative to the bounds; sizes are log-scaled first
/// because their distribution is heavy-tailed; 3D rotations become a
/// (cos r, sin r) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialCodec {
    pub kind: LayoutKind,
    pub bounds: Bounds,
    /// Size range per axis expressed as fractions of the bound extent.
    pub size_min_frac: f64,
    pub size_max_frac: f64,
}

impl SpatialCodec {
    pub fn new(kind: LayoutKind, bounds: Bounds) -> Self {
        SpatialCodec { kind, bounds, size_min_frac: 1e-3, size_max_frac: 1.0 }
    }

    fn dims(&self) -> usize {
        self.kind.location_dims()
    }

    fn norm_loc(&self, axis: usize, v: f64) -> f64 {
        2.0 * v / self.bounds.axis(axis) - 1.0
    }

    fn denorm_loc(&self, axis: usize, v: f64) -> f64 {
        let extent = self.bounds.axis(axis);
        ((v + 1.0) / 2.0 * extent).clamp(0.0, extent)
    }

    fn norm_size(&self, axis: usize, v: f64) -> f64 {
        let extent = self.bounds.axis(axis);
        let lo = (self.size_min_frac * extent).ln();
        let hi = (self.size_max_frac * extent).ln();
        let x = v.max(self.size_min_frac * extent).ln();
        2.0 * (x - lo) / (hi - lo) - 1.0
    }

    fn denorm_size(&self, axis: usize, v: f64) -> f64 {
        let extent = self.bounds.axis(axis);
        let lo = (self.size_min_frac * extent).ln();
        let hi = (self.size_max_frac * extent).ln();
        let x = (v.clamp(-1.0, 1.0) + 1.0) / 2.0 * (hi - lo) + lo;
        x.exp()
    }

    pub fn object_to_row(&self, obj: &ObjectRecord) -> Vec<f64> {
        let d = self.dims();
        let mut row = Vec::with_capacity(self.kind.spatial_width());
        for a in 0..d {
            row.push(self.norm_loc(a, obj.location[a]));
        }
        for a in 0..d {
            row.push(self.norm_size(a, obj.size[a]));
        }
        if self.kind == LayoutKind::ThreeD {
            let (c, s) = encode_rotation(obj.rotation);
            row.push(c);
            row.push(s);
        }
        row
    }

    pub fn row_to_object(
        &self,
        row: &[f64],
        category: usize,
        features: Vec<usize>,
    ) -> Result<ObjectRecord, DgaussError> {
        let d = self.dims();
        let mut location = Vec::with_capacity(d);
        let mut size = Vec::with_capacity(d);
        for a in 0..d {
            location.push(self.denorm_loc(a, row[a]));
        }
        for a in 0..d {
            size.push(self.denorm_size(a, row[d + a]));
        }
        let rotation = if self.kind == LayoutKind::ThreeD {
            decode_rotation((row[2 * d], row[2 * d + 1]))?
        } else {
            0.0
        };
        Ok(ObjectRecord { category, features, location, size, rotation })
    }

    /// Rows for all `n_max` slots; EMPTY rows are zero.
    pub fn layout_to_matrix(&self, layout: &Layout, vocab: &Vocabularies) -> Mat {
        let mut m = Mat::zeros(vocab.n_max, vocab.d_l());
        for (i, obj) in layout.objects.iter().enumerate() {
            m.row_mut(i).copy_from_slice(&self.object_to_row(obj));
        }
        m
    }

    /// Assemble a layout from the first `g.n` rows, taking categories and
    /// features from the graph.
    pub fn matrix_to_layout(
        &self,
        m: &Mat,
        g: &SemanticGraph,
        product_region: Option<crate::core::Rect>,
    ) -> Result<Layout, DgaussError> {
        let mut objects = Vec::with_capacity(g.n);
        for i in 0..g.n {
            objects.push(self.row_to_object(m.row(i), g.categories[i], g.features[i].clone())?);
        }
        Ok(Layout { kind: self.kind, bounds: self.bounds, objects, product_region })
    }
}
