//! SNR and uncertainty filtering and coverage-vs-error sweeps.
//!
//! Both filters keep their boundary: SNR keeps pixels with slice spread
//! `≥ ϑ`, uncertainty keeps pixels with log-scale `s ≤ t`.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::estimate::EstimateMaps;
use crate::eval::mae_rmse;
use crate::grid::{Grid, Map, ValidMask};
use crate::sensor::GatedStack;

/// `max(z) − min(z)` over the three slices of each pixel.
pub fn slice_spread(stack: &GatedStack) -> Grid<u16> {
    let (w, h) = stack.dims();
    Grid::from_fn(w, h, |x, y| {
        let z = stack.pixel(x, y);
        let hi = z.iter().copied().max().unwrap_or(0);
        let lo = z.iter().copied().min().unwrap_or(0);
        hi - lo
    })
}

pub fn snr_filter(stack: &GatedStack, threshold: f64) -> ValidMask {
    slice_spread(stack).map(|s| f64::from(*s) >= threshold)
}

pub fn uncertainty_filter(log_var: &Map, threshold: f64) -> ValidMask {
    log_var.map(|s| *s <= threshold)
}

pub fn coverage(mask: &ValidMask) -> f64 {
    if mask.is_empty() {
        return 0.0;
    }
    mask.count_valid() as f64 / mask.len() as f64
}

/// Threshold `t` such that `s ≤ t` keeps a fraction `target` of all pixels.
///
/// Pixels are ranked by `(s, row-major index)`; `t` is the log-scale of the
/// `⌈target·N⌉`-th pixel. Pixels tied with it are kept as well, so on a
/// plateau the coverage can exceed the target.
pub fn threshold_for_coverage(log_var: &Map, target: f64) -> Result<f64> {
    let all = Grid::filled(log_var.width(), log_var.height(), true);
    threshold_for_coverage_within(log_var, &all, target)
}

/// [`threshold_for_coverage`] restricted to pixels in `within`.
pub fn threshold_for_coverage_within(log_var: &Map, within: &ValidMask, target: f64) -> Result<f64> {
    log_var.ensure_same_dims(within)?;
    let values: Vec<f64> =
        log_var.as_slice().iter().zip(within.as_slice()).filter(|(_, m)| **m).map(|(s, _)| *s).collect();
    quantile_keep_low(values, target)
}

/// SNR threshold `ϑ` such that `spread ≥ ϑ` keeps a fraction `target` of `within`.
pub fn snr_threshold_for_coverage(stack: &GatedStack, within: &ValidMask, target: f64) -> Result<f64> {
    let spread = slice_spread(stack);
    spread.ensure_same_dims(within)?;
    // Keeping high spreads equals keeping low negated spreads.
    let values: Vec<f64> = spread
        .as_slice()
        .iter()
        .zip(within.as_slice())
        .filter(|(_, m)| **m)
        .map(|(s, _)| -f64::from(*s))
        .collect();
    quantile_keep_low(values, target).map(|t| -t)
}

fn quantile_keep_low(values: Vec<f64>, target: f64) -> Result<f64> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::invalid("target coverage must lie in (0, 1]"));
    }
    let mut ranked: Vec<(f64, usize)> =
        values.into_iter().enumerate().filter(|(_, s)| !s.is_nan()).map(|(i, s)| (s, i)).collect();
    if ranked.is_empty() {
        return Err(Error::EmptyMask);
    }
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let keep = libm::ceil(target * ranked.len() as f64 - 1e-9).max(1.0) as usize;
    Ok(ranked[keep.min(ranked.len()) - 1].0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterPoint {
    pub threshold: f64,
    /// Kept pixels over pixels in the ground-truth mask.
    pub coverage: f64,
    /// `None` when no pixel survives the filter.
    pub mae: Option<f64>,
    pub rmse: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterCurve {
    pub points: Vec<FilterPoint>,
}

#[derive(Clone, Copy, Debug)]
pub enum FilterKind<'a> {
    Snr(&'a GatedStack),
    Uncertainty,
}

impl FilterKind<'_> {
    pub fn mask(&self, maps: &EstimateMaps, threshold: f64) -> ValidMask {
        match self {
            FilterKind::Snr(stack) => snr_filter(stack, threshold),
            FilterKind::Uncertainty => uncertainty_filter(&maps.log_variance, threshold),
        }
    }

    /// Threshold reaching `target` coverage of `within`.
    pub fn threshold_for(&self, maps: &EstimateMaps, within: &ValidMask, target: f64) -> Result<f64> {
        match self {
            FilterKind::Snr(stack) => snr_threshold_for_coverage(stack, within, target),
            FilterKind::Uncertainty => threshold_for_coverage_within(&maps.log_variance, within, target),
        }
    }
}

fn check_inputs(maps: &EstimateMaps, gt: &Map, gt_mask: &ValidMask, kind: &FilterKind) -> Result<()> {
    gt.ensure_same_dims(&maps.depth)?;
    gt.ensure_same_dims(&maps.log_variance)?;
    gt.ensure_same_dims(gt_mask)?;
    if let FilterKind::Snr(stack) = kind {
        gt.ensure_same_dims(stack.slices().first().expect("three slices"))?;
    }
    if gt_mask.count_valid() == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(())
}

fn point(
    maps: &EstimateMaps,
    gt: &Map,
    gt_mask: &ValidMask,
    kind: &FilterKind,
    threshold: f64,
) -> Result<FilterPoint> {
    let kept = kind.mask(maps, threshold).and(gt_mask)?;
    let coverage = kept.count_valid() as f64 / gt_mask.count_valid() as f64;
    let errors = mae_rmse(&maps.depth, gt, &kept)?;
    Ok(FilterPoint { threshold, coverage, mae: errors.map(|e| e.0), rmse: errors.map(|e| e.1) })
}

/// Coverage and error of `maps` against `gt` for each threshold.
///
/// Thresholds must be strictly monotone (either direction).
pub fn sweep(
    maps: &EstimateMaps,
    gt: &Map,
    gt_mask: &ValidMask,
    kind: FilterKind,
    thresholds: &[f64],
) -> Result<FilterCurve> {
    check_inputs(maps, gt, gt_mask, &kind)?;
    if thresholds.is_empty() {
        return Err(Error::invalid("sweep needs at least one threshold"));
    }
    if thresholds.iter().any(|t| t.is_nan()) {
        return Err(Error::invalid("thresholds must not be NaN"));
    }
    let rising = thresholds.windows(2).all(|w| w[1] > w[0]);
    let falling = thresholds.windows(2).all(|w| w[1] < w[0]);
    if !(rising || falling) {
        return Err(Error::invalid("thresholds must be strictly monotone"));
    }
    let points = thresholds.iter().map(|&t| point(maps, gt, gt_mask, &kind, t)).collect::<Result<_>>()?;
    Ok(FilterCurve { points })
}

/// Sweep driven by target coverages of the ground-truth mask instead of raw thresholds.
pub fn sweep_coverages(
    maps: &EstimateMaps,
    gt: &Map,
    gt_mask: &ValidMask,
    kind: FilterKind,
    targets: &[f64],
) -> Result<FilterCurve> {
    check_inputs(maps, gt, gt_mask, &kind)?;
    if targets.is_empty() {
        return Err(Error::invalid("sweep needs at least one coverage target"));
    }
    let points = targets
        .iter()
        .map(|&c| {
            let t = kind.threshold_for(maps, gt_mask, c)?;
            point(maps, gt, gt_mask, &kind, t)
        })
        .collect::<Result<_>>()?;
    Ok(FilterCurve { points })
}
