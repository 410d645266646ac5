//! Named, ordered parameter collections. Iteration order is insertion
//! order, which fixes both the optimizer update order and the checkpoint
//! layout.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;

use crate::mat::Mat;
use crate::nn::{Tape, Var};
use crate::util::Prng;

#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    names: Vec<String>,
    mats: Vec<Arc<Mat>>,
    index: BTreeMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    pub fn insert(&mut self, name: &str, mat: Mat) -> usize {
        assert!(!self.index.contains_key(name), "duplicate parameter {name}");
        let id = self.mats.len();
        self.names.push(name.to_string());
        self.mats.push(Arc::new(mat));
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn len(&self) -> usize {
        self.mats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mats.is_empty()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn get(&self, name: &str) -> &Mat {
        &self.mats[self.index[name]]
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Mat {
        let id = self.index[name];
        Arc::make_mut(&mut self.mats[id])
    }

    pub fn mat(&self, id: usize) -> &Mat {
        &self.mats[id]
    }

    pub fn mat_mut(&mut self, id: usize) -> &mut Mat {
        Arc::make_mut(&mut self.mats[id])
    }

    pub fn id_of(&self, name: &str) -> usize {
        self.index[name]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.mats.iter().map(|m| m.data.len()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Mat)> {
        self.names.iter().map(|n| n.as_str()).zip(self.mats.iter().map(|m| m.as_ref()))
    }

    pub fn all_finite(&self) -> bool {
        self.mats.iter().all(|m| m.is_finite())
    }

    /// Share every parameter into a tape; returns tape vars aligned with
    /// parameter ids.
    pub fn leaves(&self, tape: &mut Tape) -> Vec<Var> {
        self.mats.iter().map(|m| tape.leaf_shared(Arc::clone(m))).collect()
    }

    /// Share all parameters into a tape and keep the name -> var mapping.
    pub fn bind(&self, tape: &mut Tape) -> BoundParams<'_> {
        BoundParams { set: self, vars: self.leaves(tape) }
    }
}

/// A parameter set bound to one tape.
pub struct BoundParams<'a> {
    set: &'a ParamSet,
    vars: Vec<Var>,
}

impl BoundParams<'_> {
    pub fn get(&self, name: &str) -> Var {
        self.vars[self.set.id_of(name)]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// Fan-based uniform init, the default for projection matrices.
pub fn xavier(rng: &mut Prng, rows: usize, cols: usize) -> Mat {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-limit..limit)).collect();
    Mat::from_vec(rows, cols, data)
}

/// Small-scale normal init used for output heads.
pub fn gaussian_init(rng: &mut Prng, rows: usize, cols: usize, std: f64) -> Mat {
    let data = (0..rows * cols).map(|_| crate::util::standard_normal(rng) * std).collect();
    Mat::from_vec(rows, cols, data)
}
