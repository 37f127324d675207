//! Range-intensity profiles (RIPs).
//!
//! A slice with gate delay `ξ` sees a target at range `r` with relative
//! intensity
//!
//! ```text
//! C(r) = β(r) ∫ g(t − ξ) p(t − 2r/c) dt
//! ```
//!
//! where `p` is the laser pulse and `g` the camera gate. Temporal profiles
//! are piecewise linear between their samples and zero outside
//! `[0, duration]`, so the product of two profiles is piecewise quadratic
//! and the correlation integral is evaluated exactly on the merged knot set.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Fraction of the peak below which a RIP sample counts as outside the support.
pub const SUPPORT_THRESHOLD: f64 = 1e-9;

/// Round-trip delay (s) of a reflection from range `r` (m).
pub fn round_trip_delay(range_m: f64) -> f64 {
    2.0 * range_m / SPEED_OF_LIGHT
}

/// Range (m) whose round-trip delay equals `delay_s`.
pub fn delay_to_range(delay_s: f64) -> f64 {
    SPEED_OF_LIGHT * delay_s / 2.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProfileKind {
    Rectangular,
    Triangular,
    /// Gaussian centred in the window with σ = duration / 6, truncated to the window.
    Gaussian,
}

impl ProfileKind {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "rectangular" => Ok(Self::Rectangular),
            "triangular" => Ok(Self::Triangular),
            "gaussian" => Ok(Self::Gaussian),
            other => Err(Error::invalid(alloc::format!("unknown profile kind `{other}`"))),
        }
    }

    fn shape(self, t: f64, duration: f64) -> f64 {
        match self {
            Self::Rectangular => 1.0,
            Self::Triangular => 1.0 - math::abs(2.0 * t / duration - 1.0),
            Self::Gaussian => {
                let sigma = duration / 6.0;
                let u = (t - duration / 2.0) / sigma;
                math::exp(-0.5 * u * u)
            }
        }
    }
}

/// Laser pulse or camera gate intensity over time, sampled on `[0, duration]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalProfile {
    kind: ProfileKind,
    duration: f64,
    dt: f64,
    amplitude: f64,
    times: Vec<f64>,
    values: Vec<f64>,
}

/// Builds a unit-peak profile with `ceil(duration / dt) + 1` samples.
pub fn make_profile(kind: ProfileKind, duration: f64, dt: f64) -> Result<TemporalProfile> {
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::invalid("profile duration must be positive"));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid("profile time step must be positive"));
    }
    if duration / dt < 4.0 {
        return Err(Error::invalid("profile needs at least four time steps"));
    }
    let steps = math::ceil(duration / dt - 1e-9) as usize;
    let times: Vec<f64> = (0..=steps).map(|k| (k as f64 * dt).min(duration)).collect();
    let mut values: Vec<f64> = times.iter().map(|&t| kind.shape(t, duration)).collect();
    let peak = values.iter().copied().fold(0.0, f64::max);
    for v in &mut values {
        *v /= peak;
    }
    Ok(TemporalProfile { kind, duration, dt, amplitude: 1.0, times, values })
}

impl TemporalProfile {
    /// Returns the profile scaled to peak `amplitude`.
    pub fn with_amplitude(mut self, amplitude: f64) -> Self {
        let k = amplitude / self.amplitude;
        for v in &mut self.values {
            *v *= k;
        }
        self.amplitude = amplitude;
        self
    }

    pub fn kind(&self) -> ProfileKind {
        self.kind
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Linear interpolation, zero outside `[0, duration]`.
    pub fn value_at(&self, t: f64) -> f64 {
        if t < 0.0 || t > self.duration {
            return 0.0;
        }
        let k = self.segment(t);
        self.eval_segment(k, t)
    }

    /// Trapezoidal integral over the sample grid (exact for the interpolant).
    pub fn integral(&self) -> f64 {
        self.times
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
            .sum()
    }

    fn segment(&self, t: f64) -> usize {
        let idx = self.times.partition_point(|&k| k <= t);
        idx.saturating_sub(1).min(self.times.len() - 2)
    }

    fn eval_segment(&self, k: usize, t: f64) -> f64 {
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let (v0, v1) = (self.values[k], self.values[k + 1]);
        if t1 == t0 {
            return v0;
        }
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }
}

/// Distance-dependent atmospheric factor β(r).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Attenuation {
    None,
    /// Two-way Beer-Lambert extinction, κ in 1/m.
    BeerLambert {
        extinction: f64,
    },
}

impl Attenuation {
    pub fn beer_lambert(extinction: f64) -> Result<Self> {
        if !(extinction >= 0.0 && extinction.is_finite()) {
            return Err(Error::invalid("extinction coefficient must be >= 0"));
        }
        Ok(Self::BeerLambert { extinction })
    }
}

pub fn attenuation_factor(model: &Attenuation, range_m: f64) -> Result<f64> {
    if !(range_m >= 0.0) {
        return Err(Error::invalid("range must be non-negative"));
    }
    Ok(match *model {
        Attenuation::None => 1.0,
        Attenuation::BeerLambert { extinction } => math::exp(-2.0 * extinction * range_m),
    })
}

/// Uniform range grid `min, min + step, ..., max`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RangeGrid {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl RangeGrid {
    pub fn new(min: f64, max: f64, step: f64) -> Result<Self> {
        if !(min >= 0.0) || !(max > min) || !(step > 0.0) || !max.is_finite() {
            return Err(Error::invalid("range grid needs 0 <= min < max and step > 0"));
        }
        Ok(Self { min, max, step })
    }

    pub fn len(&self) -> usize {
        math::floor((self.max - self.min) / self.step + 1e-9) as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn range(&self, k: usize) -> f64 {
        self.min + k as f64 * self.step
    }
}

/// Sampled C(r) for a single slice.
#[derive(Clone, Debug, PartialEq)]
pub struct RangeIntensityProfile {
    grid: RangeGrid,
    delay: f64,
    samples: Vec<f64>,
}

impl RangeIntensityProfile {
    pub fn from_samples(grid: RangeGrid, delay: f64, samples: Vec<f64>) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(Error::invalid("sample count does not match the range grid"));
        }
        if samples.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid("RIP samples must be finite and non-negative"));
        }
        Ok(Self { grid, delay, samples })
    }

    pub fn grid(&self) -> RangeGrid {
        self.grid
    }

    pub fn delay(&self) -> f64 {
        self.delay
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn ranges(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.samples.len()).map(|k| self.grid.range(k))
    }

    pub fn max_value(&self) -> f64 {
        self.samples.iter().copied().fold(0.0, f64::max)
    }

    /// Range of the largest sample; ties resolve to the nearest range.
    pub fn peak_range(&self) -> f64 {
        let mut best = 0;
        for (k, v) in self.samples.iter().enumerate() {
            if *v > self.samples[best] {
                best = k;
            }
        }
        self.grid.range(best)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            grid: self.grid,
            delay: self.delay,
            samples: self.samples.iter().map(|v| v * factor).collect(),
        }
    }

    /// Linear interpolation of C at `range_m`.
    pub fn value_at(&self, range_m: f64) -> Result<f64> {
        let last = self.samples.len() - 1;
        let r_max = self.grid.range(last);
        if !(range_m >= self.grid.min && range_m <= r_max) {
            return Err(Error::OutOfGrid { range_m, min_m: self.grid.min, max_m: r_max });
        }
        let pos = (range_m - self.grid.min) / self.grid.step;
        let k = (math::floor(pos) as usize).min(last.saturating_sub(1));
        if last == 0 {
            return Ok(self.samples[0]);
        }
        let frac = (pos - k as f64).clamp(0.0, 1.0);
        Ok(self.samples[k] * (1.0 - frac) + self.samples[k + 1] * frac)
    }
}

/// Correlates `gate` (delayed by `delay`) with `pulse` on every range of `grid`.
///
/// Pulse and gate may use different time steps; the integral runs over the
/// union of both knot sets, so no resampling is needed.
pub fn synthesize_rip(
    pulse: &TemporalProfile,
    gate: &TemporalProfile,
    delay: f64,
    attenuation: &Attenuation,
    grid: RangeGrid,
) -> Result<RangeIntensityProfile> {
    if !delay.is_finite() {
        return Err(Error::invalid("gate delay must be finite"));
    }
    let mut samples = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let r = grid.range(k);
        let beta = attenuation_factor(attenuation, r)?;
        let c = correlate(gate, pulse, round_trip_delay(r) - delay);
        samples.push((beta * c).max(0.0));
    }
    RangeIntensityProfile::from_samples(grid, delay, samples)
}

/// ∫ g(u) p(u − shift) du for piecewise-linear `g`, `p`.
fn correlate(gate: &TemporalProfile, pulse: &TemporalProfile, shift: f64) -> f64 {
    let lo = shift.max(0.0);
    let hi = gate.duration.min(pulse.duration + shift);
    if hi <= lo {
        return 0.0;
    }
    // Merge knots of both profiles inside [lo, hi]; on each piece both are linear.
    let gate_knots = gate.times.iter().copied();
    let pulse_knots = pulse.times.iter().map(|t| t + shift);
    let mut knots: Vec<f64> = gate_knots.chain(pulse_knots).filter(|&t| t > lo && t < hi).collect();
    knots.push(lo);
    knots.push(hi);
    knots.sort_by(f64::total_cmp);
    knots.dedup();

    let mut total = 0.0;
    for w in knots.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b - a <= 0.0 {
            continue;
        }
        let m = 0.5 * (a + b);
        let kg = gate.segment(m);
        let kp = pulse.segment(m - shift);
        let f = |u: f64| gate.eval_segment(kg, u) * pulse.eval_segment(kp, u - shift);
        // Simpson is exact for the quadratic product.
        total += (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b));
    }
    total
}

/// Smallest range interval outside which C(r) < 1e-9 · max C.
pub fn rip_support(rip: &RangeIntensityProfile) -> Result<(f64, f64)> {
    let peak = rip.max_value();
    if !(peak > 0.0) {
        return Err(Error::EmptySupport);
    }
    let threshold = SUPPORT_THRESHOLD * peak;
    let first = rip.samples.iter().position(|v| *v >= threshold);
    let last = rip.samples.iter().rposition(|v| *v >= threshold);
    match (first, last) {
        (Some(a), Some(b)) => Ok((rip.grid.range(a), rip.grid.range(b))),
        _ => Err(Error::EmptySupport),
    }
}

/// Pulse, gate and delays of the three slices used for a frame.
#[derive(Clone, Debug, PartialEq)]
pub struct SliceConfig {
    pub pulse: TemporalProfile,
    pub gate: TemporalProfile,
    /// Gate delays ξ of the three slices, seconds.
    pub delays: [f64; 3],
    pub attenuation: Attenuation,
    pub grid: RangeGrid,
    /// Largest expected signal (counts) for an albedo-1 target, over all slices.
    pub peak_counts: f64,
}

impl SliceConfig {
    /// Three overlapping triangular RIPs: 200 ns rectangular pulse and gate,
    /// delays 200/400/600 ns, range grid 0-150 m at 5 cm.
    pub fn overlapping_default() -> Self {
        Self::rectangular(200e-9, [200e-9, 400e-9, 600e-9])
    }

    /// Rectangular pulse and gate of equal `width` (s) with the given delays.
    pub fn rectangular(width: f64, delays: [f64; 3]) -> Self {
        let pulse = make_profile(ProfileKind::Rectangular, width, 1e-9).expect("valid width");
        Self {
            gate: pulse.clone(),
            pulse,
            delays,
            attenuation: Attenuation::None,
            grid: RangeGrid { min: 0.0, max: 150.0, step: 0.05 },
            peak_counts: 900.0,
        }
    }

    /// Synthesizes the three RIPs, scaled so the largest sample equals `peak_counts`.
    pub fn synthesize(&self) -> Result<[RangeIntensityProfile; 3]> {
        let mut rips = Vec::with_capacity(3);
        for &delay in &self.delays {
            rips.push(synthesize_rip(&self.pulse, &self.gate, delay, &self.attenuation, self.grid)?);
        }
        let peak = rips.iter().map(RangeIntensityProfile::max_value).fold(0.0, f64::max);
        if !(peak > 0.0) {
            return Err(Error::EmptySupport);
        }
        let scale = self.peak_counts / peak;
        let [a, b, c]: [RangeIntensityProfile; 3] = rips.try_into().expect("three slices");
        Ok([a.scaled(scale), b.scaled(scale), c.scaled(scale)])
    }

    /// Ranges where at least two slices receive signal.
    pub fn overlap_region(&self) -> Result<(f64, f64)> {
        let rips = self.synthesize()?;
        let supports = [rip_support(&rips[0])?, rip_support(&rips[1])?, rip_support(&rips[2])?];
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..3 {
            for j in i + 1..3 {
                let a = supports[i].0.max(supports[j].0);
                let b = supports[i].1.min(supports[j].1);
                if b > a {
                    lo = lo.min(a);
                    hi = hi.max(b);
                }
            }
        }
        if hi > lo {
            Ok((lo, hi))
        } else {
            Err(Error::EmptySupport)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const NS: f64 = 1e-9;

    /// Closed-form correlation of two unit rectangles of width `t_p`, `t_g`.
    fn rect_oracle(t_p: f64, t_g: f64, delay: f64, r: f64) -> f64 {
        let tau = round_trip_delay(r);
        let lo = delay.max(tau);
        let hi = (delay + t_g).min(tau + t_p);
        (hi - lo).max(0.0)
    }

    #[test]
    fn rectangular_profile_samples() {
        let p = make_profile(ProfileKind::Rectangular, 100.0 * NS, NS).unwrap();
        assert_eq!(p.values().len(), 101);
        assert!(p.values().iter().all(|v| *v == 1.0));
    }

    #[test]
    fn triangular_profile_peak_and_ends() {
        let p = make_profile(ProfileKind::Triangular, 100.0 * NS, NS).unwrap();
        assert_eq!(p.values()[0], 0.0);
        assert_eq!(p.values()[100], 0.0);
        assert!((p.values()[50] - 1.0).abs() < 1e-12);
        assert!((p.value_at(50.0 * NS) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_profile_is_symmetric() {
        let p = make_profile(ProfileKind::Gaussian, 100.0 * NS, NS).unwrap();
        let v = p.values();
        assert!((v[0] - v[100]).abs() < 1e-15);
        assert!(v.iter().all(|x| *x > 0.0));
    }

    #[test]
    fn profile_rejects_bad_arguments() {
        assert!(make_profile(ProfileKind::Rectangular, 0.0, NS).is_err());
        assert!(make_profile(ProfileKind::Rectangular, 100.0 * NS, -1.0).is_err());
        assert!(make_profile(ProfileKind::Rectangular, 3.0 * NS, NS).is_err());
    }

    #[test]
    fn non_integer_step_count() {
        let p = make_profile(ProfileKind::Triangular, 10.0 * NS, 2.4 * NS).unwrap();
        assert_eq!(p.values().len(), 6);
        assert_eq!(*p.times().last().unwrap(), 10.0 * NS);
    }

    #[test]
    fn attenuation_values() {
        assert_eq!(attenuation_factor(&Attenuation::None, 50.0).unwrap(), 1.0);
        let zero = Attenuation::beer_lambert(0.0).unwrap();
        assert_eq!(attenuation_factor(&zero, 50.0).unwrap(), 1.0);
        let k = Attenuation::beer_lambert(0.01).unwrap();
        let f = attenuation_factor(&k, 50.0).unwrap();
        assert!((f - 0.367_879_441_171_442_3).abs() < 1e-15);
        assert!(attenuation_factor(&k, -1.0).is_err());
        assert!(Attenuation::beer_lambert(-0.1).is_err());
    }

    #[test]
    fn rect_rect_triangle_matches_closed_form() {
        let p = make_profile(ProfileKind::Rectangular, 100.0 * NS, NS).unwrap();
        let grid = RangeGrid::new(0.0, 150.0, 0.05).unwrap();
        let rip = synthesize_rip(&p, &p, 400.0 * NS, &Attenuation::None, grid).unwrap();
        let peak = rip_oracle_peak();
        for (r, c) in rip.ranges().zip(rip.samples()) {
            let expect = rect_oracle(100.0 * NS, 100.0 * NS, 400.0 * NS, r);
            if expect > SUPPORT_THRESHOLD * peak {
                assert!(((c - expect) / expect).abs() < 1e-6, "r={r} c={c} oracle={expect}");
            } else {
                assert!(*c <= 1e-6 * peak);
            }
        }
        assert!((rip.peak_range() - delay_to_range(400.0 * NS)).abs() <= 0.05);
    }

    fn rip_oracle_peak() -> f64 {
        100.0 * NS
    }

    #[test]
    fn rect_trapezoid_flat_top() {
        let p = make_profile(ProfileKind::Rectangular, 100.0 * NS, NS).unwrap();
        let g = make_profile(ProfileKind::Rectangular, 200.0 * NS, NS).unwrap();
        let grid = RangeGrid::new(0.0, 150.0, 0.05).unwrap();
        let rip = synthesize_rip(&p, &g, 400.0 * NS, &Attenuation::None, grid).unwrap();
        let peak = rip.max_value();
        assert!((peak - 100.0 * NS).abs() < 1e-6 * peak);
        let flat: alloc::vec::Vec<f64> = rip
            .ranges()
            .zip(rip.samples())
            .filter(|(_, c)| (**c - peak).abs() <= 1e-9 * peak)
            .map(|(r, _)| r)
            .collect();
        let width = flat.last().unwrap() - flat.first().unwrap();
        let expect = delay_to_range(100.0 * NS);
        assert!((width - expect).abs() <= 2.0 * 0.05, "flat width {width}");
        for (r, c) in rip.ranges().zip(rip.samples()) {
            let o = rect_oracle(100.0 * NS, 200.0 * NS, 400.0 * NS, r);
            assert!((c - o).abs() <= 1e-6 * o.max(1e-3 * peak));
        }
    }

    #[test]
    fn zero_extinction_equals_no_attenuation() {
        let p = make_profile(ProfileKind::Triangular, 100.0 * NS, NS).unwrap();
        let grid = RangeGrid::new(0.0, 150.0, 0.5).unwrap();
        let a = synthesize_rip(&p, &p, 400.0 * NS, &Attenuation::None, grid).unwrap();
        let b = synthesize_rip(&p, &p, 400.0 * NS, &Attenuation::beer_lambert(0.0).unwrap(), grid).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn support_of_triangle() {
        let p = make_profile(ProfileKind::Rectangular, 100.0 * NS, NS).unwrap();
        let grid = RangeGrid::new(0.0, 150.0, 0.05).unwrap();
        let rip = synthesize_rip(&p, &p, 400.0 * NS, &Attenuation::None, grid).unwrap();
        let (lo, hi) = rip_support(&rip).unwrap();
        assert!((lo - 44.969).abs() <= 0.05, "lo {lo}");
        assert!((hi - 74.948).abs() <= 0.05, "hi {hi}");
    }

    #[test]
    fn support_of_zero_profile_is_error() {
        let grid = RangeGrid::new(0.0, 10.0, 1.0).unwrap();
        let rip = RangeIntensityProfile::from_samples(grid, 0.0, alloc::vec![0.0; 11]).unwrap();
        assert_eq!(rip_support(&rip), Err(Error::EmptySupport));
    }

    #[test]
    fn delta_pulse_support_width() {
        let pulse = make_profile(ProfileKind::Rectangular, NS, 0.25 * NS).unwrap();
        let gate = make_profile(ProfileKind::Rectangular, 100.0 * NS, NS).unwrap();
        let grid = RangeGrid::new(0.0, 150.0, 0.05).unwrap();
        let rip = synthesize_rip(&pulse, &gate, 400.0 * NS, &Attenuation::None, grid).unwrap();
        let (lo, hi) = rip_support(&rip).unwrap();
        // Support is (ξ - T_p, ξ + T_g) in delay: c(T_g + T_p)/2 wide.
        let expect = delay_to_range(100.0 * NS);
        assert!((hi - lo - expect).abs() <= delay_to_range(NS) + 0.1, "{}", hi - lo);
    }

    #[test]
    fn value_at_interpolates_and_bounds() {
        let grid = RangeGrid::new(0.0, 2.0, 1.0).unwrap();
        let rip = RangeIntensityProfile::from_samples(grid, 0.0, alloc::vec![0.0, 10.0, 20.0]).unwrap();
        assert_eq!(rip.value_at(1.5).unwrap(), 15.0);
        assert_eq!(rip.value_at(2.0).unwrap(), 20.0);
        assert!(matches!(rip.value_at(2.5), Err(Error::OutOfGrid { .. })));
    }

    #[test]
    fn default_slices_overlap() {
        let cfg = SliceConfig::overlapping_default();
        let (lo, hi) = cfg.overlap_region().unwrap();
        assert!((lo - 29.98).abs() < 0.1 && (hi - 89.94).abs() < 0.1, "{lo} {hi}");
        let rips = cfg.synthesize().unwrap();
        let peak = rips.iter().map(|r| r.max_value()).fold(0.0, f64::max);
        assert!((peak - 900.0).abs() < 1e-9);
    }
}
