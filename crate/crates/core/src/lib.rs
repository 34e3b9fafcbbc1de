//! Activation probing for small MNIST perceptrons.
//!
//! Train one-hidden-layer networks with ReLU or absolute-value activations,
//! then measure how accuracy responds to three families of per-unit
//! perturbations of the hidden pre-activations: boundary offsets, uniform
//! scaling and cutoffs.
//!
//! The pipeline is split by stage:
//!
//! - [`idx`] and [`fetch`] read and download MNIST IDX files
//! - [`numerics`] holds the dense matrix and seeded RNG
//! - [`model`] and [`checkpoint`] train, evaluate and persist networks
//! - [`perturb`] builds probe configurations from per-unit ranges
//! - [`experiment`] runs seeds and sweeps and keeps the CSV files
//! - [`stats`] and [`report`] summarise sweeps into tables and SVG charts
//! - [`feature_demo`] is a 1-D toy of how ReLU and Abs select features
//! - [`cli`] wires the stages into the `actprobe` command

pub mod checkpoint;
pub mod cli;
pub mod experiment;
pub mod feature_demo;
pub mod fetch;
pub mod idx;
pub mod model;
pub mod numerics;
pub mod perturb;
pub mod report;
pub mod stats;

pub use model::ActivationKind;
pub use perturb::ProbeFamily;
