//! Core of the learning-dynamics laboratory: procedural stimulus objects,
//! a software renderer, dataset composition, a desk-scale learner, the
//! shared per-trial log schema, and the learning-dynamics metrics.

pub mod embryo;
pub mod geom;
pub mod render;
pub mod dataset;
pub mod seed;
pub mod learner;
pub mod trial;
pub mod practice;
pub mod analysis;
