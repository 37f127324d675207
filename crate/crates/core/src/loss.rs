//! Training objectives on depth maps.
//!
//! All reductions run over valid pixels in row-major order through
//! [`math::pairwise_sum`], so results do not depend on evaluation order.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::{Grid, Map, ValidMask};
use crate::math;

fn masked_mean(mask: &ValidMask, mut term: impl FnMut(usize) -> f64) -> Result<f64> {
    let values: Vec<f64> =
        mask.as_slice().iter().enumerate().filter(|(_, v)| **v).map(|(i, _)| term(i)).collect();
    if values.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(math::pairwise_sum(&values) / values.len() as f64)
}

/// Mean absolute error over valid pixels.
pub fn l1_loss(gt: &Map, pred: &Map, mask: &ValidMask) -> Result<f64> {
    gt.ensure_same_dims(pred)?;
    gt.ensure_same_dims(mask)?;
    let (g, p) = (gt.as_slice(), pred.as_slice());
    masked_mean(mask, |i| math::abs(g[i] - p[i]))
}

/// Negative log-likelihood of `r` under Laplace(`r_hat`, `sigma`).
pub fn laplace_nll(r: f64, r_hat: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::invalid("Laplace scale must be positive"));
    }
    Ok(math::abs(r - r_hat) / sigma + math::ln(sigma) + core::f64::consts::LN_2)
}

/// Mean of `|r − r̂|·e^{−s} + s` over valid pixels (log 2 omitted).
pub fn aleatoric_l1(gt: &Map, pred: &Map, log_var: &Map, mask: &ValidMask) -> Result<f64> {
    gt.ensure_same_dims(pred)?;
    gt.ensure_same_dims(log_var)?;
    gt.ensure_same_dims(mask)?;
    let (g, p, s) = (gt.as_slice(), pred.as_slice(), log_var.as_slice());
    masked_mean(mask, |i| math::abs(g[i] - p[i]) * math::exp(-s[i]) + s[i])
}

/// Block-average pooling by `factor`, counting valid pixels only.
///
/// Output blocks without any valid input pixel are invalid and hold NaN.
pub fn downsample_for_scale(map: &Map, mask: &ValidMask, factor: usize) -> Result<(Map, ValidMask)> {
    map.ensure_same_dims(mask)?;
    if factor == 0 || !map.width().is_multiple_of(factor) || !map.height().is_multiple_of(factor) {
        return Err(Error::invalid(alloc::format!(
            "factor {factor} does not divide {}x{}",
            map.width(),
            map.height()
        )));
    }
    let (w, h) = (map.width() / factor, map.height() / factor);
    let mut out = Grid::filled(w, h, f64::NAN);
    let mut valid = Grid::filled(w, h, false);
    for by in 0..h {
        for bx in 0..w {
            let mut sum = 0.0;
            let mut count = 0usize;
            for y in by * factor..(by + 1) * factor {
                for x in bx * factor..(bx + 1) * factor {
                    if *mask.get(x, y) {
                        sum += map.get(x, y);
                        count += 1;
                    }
                }
            }
            if count > 0 {
                out.set(bx, by, sum / count as f64);
                valid.set(bx, by, true);
            }
        }
    }
    Ok((out, valid))
}

/// One resolution level of the multi-scale objective.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaleLevel {
    pub gt: Map,
    pub pred: Map,
    pub log_var: Map,
    pub mask: ValidMask,
}

/// Builds `levels` pyramid levels by repeated factor-2 pooling.
///
/// Ground truth is pooled over its mask; predictions and log-scales over all
/// pixels.
pub fn build_pyramid(
    gt: &Map,
    mask: &ValidMask,
    pred: &Map,
    log_var: &Map,
    levels: usize,
) -> Result<Vec<ScaleLevel>> {
    if levels == 0 {
        return Err(Error::invalid("pyramid needs at least one level"));
    }
    gt.ensure_same_dims(pred)?;
    gt.ensure_same_dims(log_var)?;
    let mut out = Vec::with_capacity(levels);
    out.push(ScaleLevel { gt: gt.clone(), pred: pred.clone(), log_var: log_var.clone(), mask: mask.clone() });
    for _ in 1..levels {
        let prev = out.last().expect("level 0 exists");
        let full = Grid::filled(prev.pred.width(), prev.pred.height(), true);
        let (g, m) = downsample_for_scale(&prev.gt, &prev.mask, 2)?;
        let (p, _) = downsample_for_scale(&prev.pred, &full, 2)?;
        let (s, _) = downsample_for_scale(&prev.log_var, &full, 2)?;
        out.push(ScaleLevel { gt: g, pred: p, log_var: s, mask: m });
    }
    Ok(out)
}

/// `Σ λ_i · aleatoric_l1(level i)`. Levels with zero weight are skipped.
pub fn multiscale_aleatoric(levels: &[ScaleLevel], weights: &[f64]) -> Result<f64> {
    if levels.len() != weights.len() || levels.is_empty() {
        return Err(Error::invalid("need one weight per pyramid level"));
    }
    let mut total = 0.0;
    for (level, &w) in levels.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        total += w * aleatoric_l1(&level.gt, &level.pred, &level.log_var, &level.mask)?;
    }
    Ok(total)
}

/// Edge-aware total variation of `pred`, attenuated where `guide` has edges.
///
/// Forward differences; each pixel contributes its right and lower neighbour
/// terms where they exist, and the sum is divided by the pixel count.
pub fn smoothness_loss(pred: &Map, guide: &Map) -> Result<f64> {
    pred.ensure_same_dims(guide)?;
    let (w, h) = pred.dims();
    if w == 0 || h == 0 {
        return Err(Error::EmptyMask);
    }
    let mut terms = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let mut t = 0.0;
            if x + 1 < w {
                let dr = pred.get(x + 1, y) - pred.get(x, y);
                let dg = guide.get(x + 1, y) - guide.get(x, y);
                t += math::abs(dr) * math::exp(-math::abs(dg));
            }
            if y + 1 < h {
                let dr = pred.get(x, y + 1) - pred.get(x, y);
                let dg = guide.get(x, y + 1) - guide.get(x, y);
                t += math::abs(dr) * math::exp(-math::abs(dg));
            }
            terms.push(t);
        }
    }
    Ok(math::pairwise_sum(&terms) / terms.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossConfig {
    pub smoothness_weight: f64,
    /// Kept for parity with the full objective; only 0 is supported.
    pub adversarial_weight: f64,
    /// One weight per pyramid level; the length is the scale count.
    pub scale_weights: Vec<f64>,
    pub aleatoric: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            smoothness_weight: 10.0,
            adversarial_weight: 0.0,
            scale_weights: alloc::vec![1.0, 0.5, 0.25, 0.125],
            aleatoric: true,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.adversarial_weight != 0.0 {
            return Err(Error::Unsupported("adversarial loss term (discriminator not available)"));
        }
        if self.scale_weights.is_empty() {
            return Err(Error::invalid("at least one scale is required"));
        }
        let weights = self.scale_weights.iter().chain([&self.smoothness_weight]);
        if weights.into_iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::invalid("loss weights must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn scales(&self) -> usize {
        self.scale_weights.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossComponents {
    pub multiscale_aleatoric: f64,
    pub smoothness: f64,
}

pub fn total_loss(components: &LossComponents, config: &LossConfig) -> Result<f64> {
    config.validate()?;
    Ok(components.multiscale_aleatoric + config.smoothness_weight * components.smoothness)
}

/// Evaluates every component on full-resolution maps and combines them.
///
/// With `config.aleatoric == false` the log-scale map is replaced by zeros.
pub fn image_loss(
    gt: &Map,
    mask: &ValidMask,
    pred: &Map,
    log_var: &Map,
    guide: &Map,
    config: &LossConfig,
) -> Result<(LossComponents, f64)> {
    config.validate()?;
    let zeros;
    let s = if config.aleatoric {
        log_var
    } else {
        zeros = Grid::filled(pred.width(), pred.height(), 0.0);
        &zeros
    };
    let levels = build_pyramid(gt, mask, pred, s, config.scales())?;
    let components = LossComponents {
        multiscale_aleatoric: multiscale_aleatoric(&levels, &config.scale_weights)?,
        smoothness: smoothness_loss(pred, guide)?,
    };
    let total = total_loss(&components, config)?;
    Ok((components, total))
}
