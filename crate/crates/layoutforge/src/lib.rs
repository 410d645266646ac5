//! Instruction-driven 2D and 3D layout synthesis.
//!
//! A two-stage diffusion pipeline: a mask-based categorical diffusion over
//! semantic graphs (object categories, quantized features, pairwise
//! relations) followed by a continuous Gaussian diffusion that decodes
//! spatial placements. The crate also carries the relation rule engine,
//! instruction templating, controllability and graphic-quality metrics, and
//! a procedural toy-corpus generator so the whole system trains and
//! verifies end to end at desk scale.

pub mod core;
pub mod dcat;
pub mod dgauss;
pub mod eval;
pub mod mat;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod qfeat;
pub mod relrules;
pub mod synth;
pub mod toydata;
pub mod util;
