//! Per-pixel depth recovery from gated measurements.

mod analytic;
mod regressor;
mod train;

use alloc::vec::Vec;

pub use analytic::{
    estimate_timeslice, estimate_triangular_ratio, fit_polynomial, fit_ratio_polynomial, ratio_feature,
    PolyRatioModel, TimesliceMethod, POLY_ORDER,
};
pub use regressor::{
    batch_loss, init_regressor, loss_and_gradient, normalize_counts, Activation, DepthRange, PixelRegressor,
    PixelSample, UncertaintyHead, INPUT_WIDTH, OUTPUT_WIDTH,
};
pub use train::{
    train_regressor, validation_mae, Adam, AdamConfig, EpochRecord, TrainConfig, TrainOutcome,
    MIN_TRAIN_SAMPLES,
};

use crate::error::Result;
use crate::grid::{Grid, Map};
use crate::sensor::GatedStack;

/// Depth and log-scale `s = log σ̂` per pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimateMaps {
    pub depth: Map,
    pub log_variance: Map,
}

impl EstimateMaps {
    pub fn dims(&self) -> (usize, usize) {
        self.depth.dims()
    }

    /// Assembles maps from per-row `(depth, s)` outputs.
    pub fn from_rows(width: usize, rows: Vec<Vec<(f64, f64)>>) -> Result<Self> {
        let height = rows.len();
        let mut depth = Vec::with_capacity(width * height);
        let mut s = Vec::with_capacity(width * height);
        for row in rows {
            for (d, l) in row {
                depth.push(d);
                s.push(l);
            }
        }
        Ok(Self {
            depth: Grid::from_vec(width, height, depth)?,
            log_variance: Grid::from_vec(width, height, s)?,
        })
    }
}

/// Regressor outputs for one image row.
pub fn infer_row(model: &PixelRegressor, stack: &GatedStack, row: usize) -> Vec<(f64, f64)> {
    (0..stack.width()).map(|x| model.forward_counts(stack.pixel(x, row))).collect()
}

pub fn infer_maps(model: &PixelRegressor, stack: &GatedStack) -> EstimateMaps {
    let rows = (0..stack.height()).map(|y| infer_row(model, stack, y)).collect();
    EstimateMaps::from_rows(stack.width(), rows).expect("rows match stack width")
}

/// Ratio-polynomial depth map; pixels without signal become NaN.
pub fn infer_polynomial(model: &PolyRatioModel, stack: &GatedStack) -> Map {
    let (w, h) = stack.dims();
    Grid::from_fn(w, h, |x, y| {
        let z = stack.pixel(x, y).map(f64::from);
        model.predict(z).unwrap_or(f64::NAN)
    })
}
