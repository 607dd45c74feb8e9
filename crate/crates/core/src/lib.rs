//! Finite-horizon laboratory for torus pseudometrics, coherent trees of
//! torus sequences, block-matrix stratification, positive approximate units
//! and derived inverse limits of abelian group towers.

pub mod cli;
pub mod coherence_tree;
pub mod derived_limits;
pub mod error;
pub mod interval_partitions;
pub mod linalg;
pub mod operator_lab;
pub mod torus_metrics;
pub mod weak_units;

pub use error::{Error, Result};
