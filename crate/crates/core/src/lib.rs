//! Road-network topology toolkit.
//!
//! Turns vector road centerline graphs into segmentation and connectivity
//! labels, turns predicted masks back into graphs, scores predictions with
//! pixel metrics and APLS, and carries reference kernels for the training
//! losses and the global-aware attention block.

pub mod check;
pub mod error;
pub mod ga;
pub mod geom;
pub mod graph;
pub mod labelgen;
pub mod losses;
pub mod metrics;
pub mod raster;
pub mod synth;
pub mod tiling;
pub mod vectorize;

pub use error::{Error, Result};
pub use geom::Point;
pub use graph::{Edge, RoadGraph, Window};
pub use raster::{ConnectivityMap, RasterMask, ScalarField};
