//! Parameter identification for 1D steady-state diffusion equations by
//! multi-criteria minimization of the generalized collage distance, the
//! neg-entropy, and the sparsity of the unknown coefficient vector.

pub mod assembly;
pub mod basis;
pub mod cli;
pub mod config;
pub mod criteria;
pub mod data;
pub mod mco;
pub mod report;
