//! Domain types shared by every other module: vocabularies with their
//! reserved EMPTY/MASK states, layouts, padded semantic graphs and their
//! one-hot encodings, and instructions.

mod graph;
pub mod jsonl;

pub use graph::{
    argmax_row, decode_argmax, encode_one_hot, graph_from_layout, graph_from_layout_with_rules,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mat::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayoutKind {
    #[serde(rename = "2d")]
    TwoD,
    #[serde(rename = "3d")]
    ThreeD,
}

impl LayoutKind {
    pub fn spatial_width(self) -> usize {
        match self {
            // location (x, y) + size (w, h)
            LayoutKind::TwoD => 4,
            // location (x, y, z) + size (x, y, z) + rotation (cos r, sin r)
            LayoutKind::ThreeD => 8,
        }
    }

    pub fn location_dims(self) -> usize {
        match self {
            LayoutKind::TwoD => 2,
            LayoutKind::ThreeD => 3,
        }
    }
}

/// Sizes of the categorical families plus layout-level constants. The
/// reserved states for a family of size `K` are `EMPTY = K` and
/// `MASK = K + 1`, so one-hot rows have width `K + 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabularies {
    pub layout_kind: LayoutKind,
    pub k_c: usize,
    pub k_f: usize,
    pub k_e: usize,
    pub n_f: usize,
    pub n_max: usize,
    pub category_names: Vec<String>,
    pub style_names: Vec<String>,
    /// Category acting as a backing panel in 2D layouts (None for 3D).
    pub underlay_category: Option<usize>,
}

impl Vocabularies {
    pub fn d_l(&self) -> usize {
        self.layout_kind.spatial_width()
    }

    pub fn empty_c(&self) -> usize {
        self.k_c
    }
    pub fn mask_c(&self) -> usize {
        self.k_c + 1
    }
    pub fn empty_f(&self) -> usize {
        self.k_f
    }
    pub fn mask_f(&self) -> usize {
        self.k_f + 1
    }
    pub fn empty_e(&self) -> usize {
        self.k_e
    }
    pub fn mask_e(&self) -> usize {
        self.k_e + 1
    }

    pub fn onehot_c(&self) -> usize {
        self.k_c + 2
    }
    pub fn onehot_f(&self) -> usize {
        self.k_f + 2
    }
    pub fn onehot_e(&self) -> usize {
        self.k_e + 2
    }

    pub fn tri_count(&self) -> usize {
        self.n_max * (self.n_max - 1) / 2
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        if self.k_c < 1 || self.k_f < 1 || self.k_e < 1 || self.n_f < 1 || self.n_max < 1 {
            return Err(CoreError::InvalidVocabulary("family sizes must be >= 1".into()));
        }
        if self.category_names.len() != self.k_c {
            return Err(CoreError::InvalidVocabulary(format!(
                "expected {} category names, got {}",
                self.k_c,
                self.category_names.len()
            )));
        }
        if let Some(u) = self.underlay_category {
            if u >= self.k_c {
                return Err(CoreError::InvalidVocabulary("underlay category out of range".into()));
            }
        }
        Ok(())
    }
}

/// Axis-aligned rectangle, corner origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Rect {
    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn intersection_area(&self, other: &Rect) -> f64 {
        let w = (self.x + self.w).min(other.x + other.w) - self.x.max(other.x);
        let h = (self.y + self.h).min(other.y + other.h) - self.y.max(other.y);
        if w > 0.0 && h > 0.0 {
            w * h
        } else {
            0.0
        }
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.x + other.w <= self.x + self.w
            && other.y + other.h <= self.y + self.h
    }
}

/// Canvas width/height in pixels (2D) or room extents in room units (3D,
/// with `z` the wall height). Coordinates live in `[0, extent]` per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub z: Option<f64>,
}

impl Bounds {
    pub fn canvas(w: f64, h: f64) -> Self {
        Bounds { x: w, y: h, z: None }
    }

    pub fn room(x: f64, y: f64, z: f64) -> Self {
        Bounds { x, y, z: Some(z) }
    }

    pub fn axis(&self, i: usize) -> f64 {
        match i {
            0 => self.x,
            1 => self.y,
            2 => self.z.expect("no z extent on a 2D bounds"),
            _ => panic!("axis {i} out of range"),
        }
    }
}

/// One object: category + discrete feature indices + box pose. `location`
/// is the box center; `size` holds full extents; `rotation` is about the
/// gravity axis, zero for 2D.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub category: usize,
    pub features: Vec<usize>,
    pub location: Vec<f64>,
    pub size: Vec<f64>,
    pub rotation: f64,
}

impl ObjectRecord {
    /// Footprint rectangle in the ground (X, Y) plane.
    pub fn footprint(&self) -> Rect {
        Rect {
            x: self.location[0] - self.size[0] / 2.0,
            y: self.location[1] - self.size[1] / 2.0,
            w: self.size[0],
            h: self.size[1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub kind: LayoutKind,
    pub bounds: Bounds,
    pub objects: Vec<ObjectRecord>,
    /// Protected background subject, 2D only.
    #[serde(default)]
    pub product_region: Option<Rect>,
}

pub const LOCATION_TOLERANCE: f64 = 1e-6;

impl Layout {
    pub fn validate(&self, vocab: &Vocabularies) -> Result<(), CoreError> {
        let dims = self.kind.location_dims();
        for (i, obj) in self.objects.iter().enumerate() {
            if obj.category >= vocab.k_c {
                return Err(CoreError::IndexOutOfRange {
                    what: format!("object {i} category {}", obj.category),
                });
            }
            if obj.features.len() != vocab.n_f {
                return Err(CoreError::InvalidLayout(format!(
                    "object {i} has {} feature slots, expected {}",
                    obj.features.len(),
                    vocab.n_f
                )));
            }
            // k_f itself (the EMPTY sentinel) is tolerated: a sampled
            // graph may leave a feature slot of a real object unassigned
            for &f in &obj.features {
                if f > vocab.k_f {
                    return Err(CoreError::IndexOutOfRange {
                        what: format!("object {i} feature {f}"),
                    });
                }
            }
            if obj.location.len() != dims || obj.size.len() != dims {
                return Err(CoreError::InvalidLayout(format!(
                    "object {i} has wrong spatial dimensionality"
                )));
            }
            for d in 0..dims {
                if obj.size[d] <= 0.0 {
                    return Err(CoreError::InvalidLayout(format!(
                        "object {i} size axis {d} not positive"
                    )));
                }
                let extent = self.bounds.axis(d);
                if obj.location[d] < -LOCATION_TOLERANCE
                    || obj.location[d] > extent + LOCATION_TOLERANCE
                {
                    return Err(CoreError::InvalidLayout(format!(
                        "object {i} location axis {d} outside bounds"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Padded semantic graph. `categories[i]` and `features[i]` are EMPTY for
/// `i >= n`, and so is each edge slot touching such a position. Only pairs
/// `i < j` are stored for edges; `edges[tri_index(i, j, n_max)]` holds the
/// relation with subject `i` and object `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticGraph {
    pub n: usize,
    pub categories: Vec<usize>,
    pub features: Vec<Vec<usize>>,
    pub edges: Vec<usize>,
}

/// Index of the ordered pair `(i, j)`, `i < j`, in row-major upper-triangle
/// order over an `n_max`-node graph.
pub fn tri_index(i: usize, j: usize, n_max: usize) -> usize {
    debug_assert!(i < j && j < n_max);
    i * n_max - i * (i + 1) / 2 + (j - i - 1)
}

pub fn tri_pairs(n_max: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(n_max * (n_max - 1) / 2);
    for i in 0..n_max {
        for j in (i + 1)..n_max {
            out.push((i, j));
        }
    }
    out
}

impl SemanticGraph {
    pub fn empty(vocab: &Vocabularies) -> Self {
        SemanticGraph {
            n: 0,
            categories: vec![vocab.empty_c(); vocab.n_max],
            features: vec![vec![vocab.empty_f(); vocab.n_f]; vocab.n_max],
            edges: vec![vocab.empty_e(); vocab.tri_count()],
        }
    }

    pub fn edge(&self, i: usize, j: usize, n_max: usize) -> usize {
        self.edges[tri_index(i.min(j), i.max(j), n_max)]
    }

    /// Reconstruct the full relation matrix from the stored triangle via
    /// the fixed inverse-relation map. The diagonal is EMPTY.
    pub fn full_relation_matrix(&self, vocab: &Vocabularies) -> Vec<Vec<usize>> {
        let n = vocab.n_max;
        let mut full = vec![vec![vocab.empty_e(); n]; n];
        for (i, j) in tri_pairs(n) {
            let e = self.edges[tri_index(i, j, n)];
            full[i][j] = e;
            full[j][i] = crate::relrules::inverse_relation_index(e, vocab.k_e);
        }
        full
    }

    pub fn validate(&self, vocab: &Vocabularies) -> Result<(), CoreError> {
        if self.categories.len() != vocab.n_max
            || self.features.len() != vocab.n_max
            || self.edges.len() != vocab.tri_count()
        {
            return Err(CoreError::InvalidGraph("padded lengths do not match vocab".into()));
        }
        for (i, &c) in self.categories.iter().enumerate() {
            let ok = if i < self.n { c < vocab.k_c } else { c == vocab.empty_c() };
            if !ok {
                return Err(CoreError::InvalidGraph(format!("category at slot {i}")));
            }
        }
        for (idx, (i, j)) in tri_pairs(vocab.n_max).into_iter().enumerate() {
            let e = self.edges[idx];
            if j >= self.n {
                if e != vocab.empty_e() {
                    return Err(CoreError::InvalidGraph(format!("edge ({i},{j}) not EMPTY")));
                }
            } else if e >= vocab.onehot_e() {
                return Err(CoreError::InvalidGraph(format!("edge ({i},{j}) out of range")));
            }
        }
        Ok(())
    }
}

/// One-hot (or, mid-diffusion, probability-row) view of a semantic graph at
/// timestep `t`. Feature rows are stored node-major: row `i * n_f + s` is
/// feature slot `s` of node `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct OneHotGraphState {
    pub t: usize,
    pub c_rows: Mat,
    pub f_rows: Mat,
    pub e_rows: Mat,
}

impl OneHotGraphState {
    pub fn rows_are_simplex(&self, tol: f64) -> bool {
        let ok = |m: &Mat| {
            (0..m.rows).all(|i| {
                let r = m.row(i);
                r.iter().all(|&v| v >= -tol) && ((r.iter().sum::<f64>() - 1.0).abs() <= tol)
            })
        };
        ok(&self.c_rows) && ok(&self.f_rows) && ok(&self.e_rows)
    }
}

/// Structured instruction: relation triplets over category indices plus
/// optional (category, style) tags, with the rendered sentence kept
/// alongside.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instruction {
    pub triplets: Vec<crate::relrules::RelationTriplet>,
    pub style_tags: Vec<(usize, usize)>,
    pub text: String,
}

impl Instruction {
    pub fn empty() -> Self {
        Instruction { triplets: Vec::new(), style_tags: Vec::new(), text: String::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty() && self.style_tags.is_empty()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum CoreError {
    #[error("too many objects: {got} > N_max = {n_max}")]
    TooManyObjects { got: usize, n_max: usize },
    #[error("index out of range: {what}")]
    IndexOutOfRange { what: String },
    #[error("argmax decoded a MASK state at {what}")]
    MaskResidue { what: String },
    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),
    #[error("invalid layout: {0}")]
    InvalidLayout(String),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
}
