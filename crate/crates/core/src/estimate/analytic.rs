//! Classic per-pixel depth estimators: time-slicing, triangular ratio and the
//! fitted ratio polynomial.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::rip::delay_to_range;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TimesliceMethod {
    /// First delay whose intensity reaches `threshold · max`.
    RisingEdge { threshold: f64 },
    /// Delay of the maximum, earliest on ties.
    Argmax,
    /// Intensity-weighted mean range.
    WeightedAverage,
}

/// Estimates range from an intensity sequence recorded over increasing gate delays.
pub fn estimate_timeslice(delays: &[f64], intensities: &[f64], method: TimesliceMethod) -> Result<f64> {
    if delays.len() < 3 || delays.len() != intensities.len() {
        return Err(Error::invalid("need at least three delays with one intensity each"));
    }
    if delays.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("delays must be strictly increasing"));
    }
    if intensities.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::invalid("intensities must be non-negative"));
    }
    let max = intensities.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Err(Error::NoSignal);
    }
    let ranges = delays.iter().map(|d| delay_to_range(*d));
    match method {
        TimesliceMethod::RisingEdge { threshold } => {
            if !(threshold > 0.0 && threshold <= 1.0) {
                return Err(Error::invalid("rising-edge threshold must lie in (0, 1]"));
            }
            let k =
                intensities.iter().position(|v| *v >= threshold * max).expect("the maximum always passes");
            Ok(delay_to_range(delays[k]))
        }
        TimesliceMethod::Argmax => {
            let k = intensities.iter().position(|v| *v == max).expect("max is attained");
            Ok(delay_to_range(delays[k]))
        }
        TimesliceMethod::WeightedAverage => {
            let (num, den) = ranges.zip(intensities).fold((0.0, 0.0), |(n, d), (r, z)| (n + r * z, d + z));
            Ok(num / den)
        }
    }
}

/// Range from two slices whose RIPs fall/rise linearly across `[r0, r1]`.
pub fn estimate_triangular_ratio(z1: f64, z2: f64, r0: f64, r1: f64) -> Result<f64> {
    if !(r1 > r0) {
        return Err(Error::invalid("overlap interval must be non-empty"));
    }
    if !(z1 >= 0.0 && z2 >= 0.0) {
        return Err(Error::invalid("intensities must be non-negative"));
    }
    let sum = z1 + z2;
    if sum <= 0.0 {
        return Err(Error::NoSignal);
    }
    Ok((r0 + (r1 - r0) * z2 / sum).clamp(r0, r1))
}

/// Normalized ratio `(z2 + 2 z3) / (z1 + z2 + z3)`, in [0, 2].
///
/// For equally spaced overlapping triangular RIPs this grows linearly with
/// range across the overlap region.
pub fn ratio_feature(z: [f64; 3]) -> Option<f64> {
    let den = z[0] + z[1] + z[2];
    if den > 0.0 && den.is_finite() {
        Some((z[1] + 2.0 * z[2]) / den)
    } else {
        None
    }
}

pub const POLY_ORDER: usize = 5;
const MIN_FIT_SAMPLES: usize = 50;

/// Fifth-order polynomial mapping the ratio feature to range.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyRatioModel {
    /// Coefficients in the normalized variable `x = (q - centre) / scale`.
    pub coefficients: [f64; POLY_ORDER + 1],
    pub centre: f64,
    pub scale: f64,
    /// Feature interval seen during fitting; predictions clamp `q` into it.
    pub valid: (f64, f64),
    /// Root-mean-square residual of the fit, meters.
    pub rmse: f64,
}

impl PolyRatioModel {
    fn eval(&self, q: f64) -> f64 {
        let x = (q.clamp(self.valid.0, self.valid.1) - self.centre) / self.scale;
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn predict_ratio(&self, q: f64) -> f64 {
        self.eval(q)
    }

    pub fn predict(&self, z: [f64; 3]) -> Result<f64> {
        ratio_feature(z).map(|q| self.eval(q)).ok_or(Error::NoSignal)
    }
}

/// Least-squares fit of range against the ratio feature.
///
/// Samples with a zero intensity sum are skipped.
pub fn fit_ratio_polynomial(samples: &[([f64; 3], f64)]) -> Result<PolyRatioModel> {
    let pairs: Vec<(f64, f64)> =
        samples.iter().filter_map(|(z, r)| ratio_feature(*z).map(|q| (q, *r))).collect();
    fit_polynomial(&pairs)
}

/// Fits `r ≈ Σ c_k x^k` on `(q, r)` pairs with `x` the normalized feature.
pub fn fit_polynomial(pairs: &[(f64, f64)]) -> Result<PolyRatioModel> {
    if pairs.len() < MIN_FIT_SAMPLES {
        return Err(Error::invalid(alloc::format!(
            "need at least {MIN_FIT_SAMPLES} samples with signal, got {}",
            pairs.len()
        )));
    }
    if pairs.iter().any(|(q, r)| !q.is_finite() || !r.is_finite()) {
        return Err(Error::invalid("fit samples must be finite"));
    }
    let lo = pairs.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = pairs.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(Error::FitFailure("ratio feature is constant".into()));
    }
    let centre = 0.5 * (lo + hi);
    let scale = 0.5 * (hi - lo);
    const N: usize = POLY_ORDER + 1;

    // Normal equations with unit-norm column scaling.
    let rows: Vec<[f64; N]> = pairs
        .iter()
        .map(|(q, _)| {
            let x = (q - centre) / scale;
            let mut row = [1.0; N];
            for k in 1..N {
                row[k] = row[k - 1] * x;
            }
            row
        })
        .collect();
    let mut norms = [0.0; N];
    for row in &rows {
        for k in 0..N {
            norms[k] += row[k] * row[k];
        }
    }
    for n in &mut norms {
        *n = math::sqrt(*n);
    }
    let mut ata = [[0.0; N]; N];
    let mut atb = [0.0; N];
    for (row, (_, r)) in rows.iter().zip(pairs) {
        for i in 0..N {
            let ai = row[i] / norms[i];
            atb[i] += ai * r;
            for j in 0..N {
                ata[i][j] += ai * row[j] / norms[j];
            }
        }
    }
    let scaled = cholesky_solve(ata, atb)
        .ok_or_else(|| Error::FitFailure("design matrix is rank deficient".into()))?;
    let mut coefficients = [0.0; N];
    for k in 0..N {
        coefficients[k] = scaled[k] / norms[k];
    }
    let mut model = PolyRatioModel { coefficients, centre, scale, valid: (lo, hi), rmse: 0.0 };
    let sq: Vec<f64> = pairs
        .iter()
        .map(|(q, r)| {
            let e = model.eval(*q) - r;
            e * e
        })
        .collect();
    model.rmse = math::sqrt(math::pairwise_sum(&sq) / sq.len() as f64);
    Ok(model)
}

/// Solves the SPD system `a x = b`; `None` when a pivot collapses.
#[allow(clippy::needless_range_loop)]
fn cholesky_solve<const N: usize>(a: [[f64; N]; N], b: [f64; N]) -> Option<[f64; N]> {
    let mut l = [[0.0; N]; N];
    for i in 0..N {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                // Unit-scaled columns put the diagonal at 1.
                if !(s > 1e-12) {
                    return None;
                }
                l[i][i] = math::sqrt(s);
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    let mut y = [0.0; N];
    for i in 0..N {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i][k] * y[k];
        }
        y[i] = s / l[i][i];
    }
    let mut x = [0.0; N];
    for i in (0..N).rev() {
        let mut s = y[i];
        for k in i + 1..N {
            s -= l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    Some(x)
}
