//! Depth accuracy metrics over masked, range-clamped pixels.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::{Map, ValidMask};
use crate::math;

/// Ratio thresholds `1.25^i`, i = 1..3.
pub const DELTA_THRESHOLDS: [f64; 3] = [1.25, 1.5625, 1.953125];

/// Ground-truth range window `[lo, hi]` in meters; pixels outside are ignored.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalRange {
    pub lo: f64,
    pub hi: f64,
}

impl EvalRange {
    pub const SYNTHETIC: EvalRange = EvalRange { lo: 3.0, hi: 150.0 };
    pub const REAL: EvalRange = EvalRange { lo: 3.0, hi: 80.0 };

    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo >= 0.0 && hi > lo) {
            return Err(Error::invalid("evaluation range needs 0 <= lo < hi"));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, r: f64) -> bool {
        r >= self.lo && r <= self.hi
    }
}

impl Default for EvalRange {
    fn default() -> Self {
        Self::SYNTHETIC
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalReport {
    pub mae: f64,
    pub rmse: f64,
    /// Scale-invariant log error ×100.
    pub silog: f64,
    pub delta: [f64; 3],
    /// Evaluated pixels over pixels with in-range ground truth.
    pub coverage: f64,
    pub range: EvalRange,
    pub valid_pixels: usize,
}

/// Pixel indices with valid, in-range ground truth.
fn candidates(gt: &Map, mask: &ValidMask, range: EvalRange) -> Vec<usize> {
    gt.as_slice()
        .iter()
        .zip(mask.as_slice())
        .enumerate()
        .filter(|(_, (r, m))| **m && r.is_finite() && range.contains(**r))
        .map(|(i, _)| i)
        .collect()
}

/// Metrics of `pred` against `gt` on `mask`, clamped to `range`.
///
/// Non-finite predictions count as filtered out: they lower `coverage` but do
/// not enter the error metrics.
pub fn evaluate(pred: &Map, gt: &Map, mask: &ValidMask, range: EvalRange) -> Result<EvalReport> {
    gt.ensure_same_dims(pred)?;
    gt.ensure_same_dims(mask)?;
    let base = candidates(gt, mask, range);
    if base.is_empty() {
        return Err(Error::EmptyEvaluationSet);
    }
    let p = pred.as_slice();
    let g = gt.as_slice();
    let set: Vec<usize> = base.iter().copied().filter(|&i| p[i].is_finite()).collect();
    if set.is_empty() {
        return Err(Error::EmptyEvaluationSet);
    }
    if let Some(&i) = set.iter().find(|&&i| !(p[i] > 0.0)) {
        return Err(Error::InvalidPrediction { index: i, value: p[i] });
    }
    let n = set.len() as f64;
    let abs: Vec<f64> = set.iter().map(|&i| math::abs(p[i] - g[i])).collect();
    let sq: Vec<f64> = set.iter().map(|&i| (p[i] - g[i]) * (p[i] - g[i])).collect();
    let d: Vec<f64> = set.iter().map(|&i| math::ln(p[i]) - math::ln(g[i])).collect();
    let mean_d = math::pairwise_sum(&d) / n;
    // mean d² − (mean d)², evaluated in centred form to avoid cancellation.
    let centred: Vec<f64> = d.iter().map(|v| (v - mean_d) * (v - mean_d)).collect();
    let var_d = math::pairwise_sum(&centred) / n;

    let mut delta = [0.0; 3];
    for (k, t) in DELTA_THRESHOLDS.iter().enumerate() {
        let hits = set.iter().filter(|&&i| (p[i] / g[i]).max(g[i] / p[i]) < *t).count();
        delta[k] = hits as f64 / n;
    }

    Ok(EvalReport {
        mae: math::pairwise_sum(&abs) / n,
        rmse: math::sqrt(math::pairwise_sum(&sq) / n),
        silog: 100.0 * math::sqrt(var_d),
        delta,
        coverage: n / base.len() as f64,
        range,
        valid_pixels: set.len(),
    })
}

/// MAE and RMSE over `mask`, or `None` when the mask selects nothing.
pub fn mae_rmse(pred: &Map, gt: &Map, mask: &ValidMask) -> Result<Option<(f64, f64)>> {
    gt.ensure_same_dims(pred)?;
    gt.ensure_same_dims(mask)?;
    let (p, g) = (pred.as_slice(), gt.as_slice());
    let m = mask.as_slice();
    let idx: Vec<usize> = (0..g.len()).filter(|&i| m[i]).collect();
    if idx.is_empty() {
        return Ok(None);
    }
    let n = idx.len() as f64;
    let abs: Vec<f64> = idx.iter().map(|&i| math::abs(p[i] - g[i])).collect();
    let sq: Vec<f64> = idx.iter().map(|&i| (p[i] - g[i]) * (p[i] - g[i])).collect();
    Ok(Some((math::pairwise_sum(&abs) / n, math::sqrt(math::pairwise_sum(&sq) / n))))
}
