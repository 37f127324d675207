//! Simulation and estimation toolkit for active gated imaging.
//!
//! A gated camera pairs a pulsed illuminator with a time-gated sensor; each
//! exposure ("slice") only sees reflections from a band of ranges. This crate
//! covers the whole chain without touching the filesystem:
//!
//! - [`rip`]: range-intensity profiles from pulse/gate correlation
//! - [`scene`]: synthetic depth/albedo scenes and sparse LiDAR-like masks
//! - [`sensor`]: Poissonian-Gaussian rendering of quantized 10-bit slices
//! - [`estimate`]: analytic depth estimators and a small pixel regressor
//!   predicting depth together with a Laplacian log-scale
//! - [`loss`]: L1, aleatoric, multi-scale and smoothness objectives
//! - [`filter`]: SNR and uncertainty filtering, coverage sweeps
//! - [`eval`]: MAE, RMSE, SIlog and ratio-threshold accuracy
//!
//! The crate is `no_std` and only needs `alloc`. File formats, parallel
//! drivers and the command line live in the companion `gdl` crate.

#![no_std]
#![warn(clippy::cast_lossless, clippy::map_unwrap_or)]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(any(feature = "std", test))]
extern crate std;

pub mod error;
pub mod estimate;
pub mod eval;
pub mod filter;
pub mod grid;
pub mod loss;
pub mod math;
pub mod rip;
pub mod scene;
pub mod sensor;

#[doc(inline)]
pub use self::{
    error::{Error, Result},
    estimate::{EstimateMaps, PixelRegressor, PolyRatioModel},
    eval::{EvalRange, EvalReport},
    filter::{FilterCurve, FilterPoint},
    grid::{Grid, Map, ValidMask},
    rip::{RangeIntensityProfile, TemporalProfile},
    scene::Scene,
    sensor::{GatedStack, NoiseParams},
};
