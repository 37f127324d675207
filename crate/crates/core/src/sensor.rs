//! Gated slice rendering with Poissonian-Gaussian noise.
//!
//! For each pixel the clean signal is `χ = α · C(r)`. The measurement is
//! `a · Poisson(χ / a) + N(0, b)`, clipped to the 10-bit range and rounded
//! half-up. Every image row draws from its own ChaCha stream keyed by
//! `(seed, slice, row)`, so rows can be rendered in any order.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{Error, Result};
use crate::grid::{Grid, Map};
use crate::math;
use crate::rip::RangeIntensityProfile;
use crate::scene::Scene;

pub const BIT_DEPTH: u32 = 10;
pub const MAX_COUNT: u16 = (1 << BIT_DEPTH) - 1;
pub const SLICE_COUNT: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseParams {
    /// Poisson gain, counts per photo-electron equivalent.
    pub a: f64,
    /// Gaussian read-noise variance, counts².
    pub b: f64,
    pub seed: u64,
}

impl NoiseParams {
    pub fn new(a: f64, b: f64, seed: u64) -> Result<Self> {
        if !(a >= 0.0 && a.is_finite()) || !(b >= 0.0 && b.is_finite()) {
            return Err(Error::invalid("noise parameters a and b must be >= 0"));
        }
        Ok(Self { a, b, seed })
    }

    pub fn noiseless() -> Self {
        Self { a: 0.0, b: 0.0, seed: 0 }
    }

    pub fn is_noiseless(&self) -> bool {
        self.a == 0.0 && self.b == 0.0
    }
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self { a: 1.0, b: 4.0, seed: 0 }
    }
}

/// Random stream for one image row of one slice.
pub fn noise_stream(seed: u64, slice_index: usize, row: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((slice_index as u64) << 32) | row as u64);
    rng
}

/// Noisy value before clipping and quantization.
pub fn sample_pre_clip(chi: f64, noise: &NoiseParams, rng: &mut ChaCha8Rng) -> f64 {
    let mut y = chi;
    if noise.a > 0.0 && chi > 0.0 {
        let lambda = chi / noise.a;
        // Poisson::new only fails for non-finite or non-positive rates.
        y = noise.a * Poisson::new(lambda).map_or(lambda, |p| p.sample(rng));
    }
    if noise.b > 0.0 {
        let normal = Normal::new(0.0, math::sqrt(noise.b)).expect("finite std-dev");
        y += normal.sample(rng);
    }
    y
}

/// Clip to `[0, 1023]` and round half up.
pub fn quantize(value: f64) -> u16 {
    let clipped = if value.is_nan() { 0.0 } else { value.clamp(0.0, f64::from(MAX_COUNT)) };
    math::floor(clipped + 0.5) as u16
}

pub fn measure(chi: f64, noise: &NoiseParams, rng: &mut ChaCha8Rng) -> u16 {
    quantize(sample_pre_clip(chi, noise, rng))
}

/// Clean signal χ at a pixel.
pub fn pixel_signal(scene: &Scene, rip: &RangeIntensityProfile, x: usize, y: usize) -> Result<f64> {
    let r = *scene.depth.get(x, y);
    Ok(*scene.albedo.get(x, y) * rip.value_at(r)?)
}

pub fn render_row(
    scene: &Scene,
    rip: &RangeIntensityProfile,
    noise: &NoiseParams,
    slice_index: usize,
    row: usize,
) -> Result<Vec<u16>> {
    let mut rng = noise_stream(noise.seed, slice_index, row);
    (0..scene.width()).map(|x| Ok(measure(pixel_signal(scene, rip, x, row)?, noise, &mut rng))).collect()
}

pub fn render_slice(
    scene: &Scene,
    rip: &RangeIntensityProfile,
    noise: &NoiseParams,
    slice_index: usize,
) -> Result<Grid<u16>> {
    let mut data = Vec::with_capacity(scene.width() * scene.height());
    for row in 0..scene.height() {
        data.extend(render_row(scene, rip, noise, slice_index, row)?);
    }
    Grid::from_vec(scene.width(), scene.height(), data)
}

/// Three quantized slice images of one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct GatedStack {
    slices: [Grid<u16>; SLICE_COUNT],
}

impl GatedStack {
    pub fn new(slices: [Grid<u16>; SLICE_COUNT]) -> Result<Self> {
        slices[0].ensure_same_dims(&slices[1])?;
        slices[0].ensure_same_dims(&slices[2])?;
        if slices.iter().any(|s| s.as_slice().iter().any(|v| *v > MAX_COUNT)) {
            return Err(Error::invalid("slice value exceeds the 10-bit range"));
        }
        Ok(Self { slices })
    }

    pub fn slices(&self) -> &[Grid<u16>; SLICE_COUNT] {
        &self.slices
    }

    pub fn into_slices(self) -> [Grid<u16>; SLICE_COUNT] {
        self.slices
    }

    pub fn width(&self) -> usize {
        self.slices[0].width()
    }

    pub fn height(&self) -> usize {
        self.slices[0].height()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.slices[0].dims()
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u16; SLICE_COUNT] {
        [*self.slices[0].get(x, y), *self.slices[1].get(x, y), *self.slices[2].get(x, y)]
    }

    /// Pixel at flat row-major `index`.
    pub fn pixel_at(&self, index: usize) -> [u16; SLICE_COUNT] {
        [self.slices[0].as_slice()[index], self.slices[1].as_slice()[index], self.slices[2].as_slice()[index]]
    }

    /// Mean of the three slices normalized by 1/1023.
    pub fn guide(&self) -> Map {
        let (w, h) = self.dims();
        Grid::from_fn(w, h, |x, y| {
            let z = self.pixel(x, y);
            z.iter().map(|v| f64::from(*v)).sum::<f64>() / (3.0 * f64::from(MAX_COUNT))
        })
    }

    /// Stacks frames of equal width vertically.
    pub fn vstack(frames: &[GatedStack]) -> Result<Self> {
        let part = |i: usize| -> Result<Grid<u16>> {
            let slices: Vec<Grid<u16>> = frames.iter().map(|f| f.slices[i].clone()).collect();
            Grid::vstack(&slices)
        };
        Self::new([part(0)?, part(1)?, part(2)?])
    }
}

fn ensure_common_grid(rips: &[RangeIntensityProfile; SLICE_COUNT]) -> Result<()> {
    if rips.iter().all(|r| r.grid() == rips[0].grid()) {
        Ok(())
    } else {
        Err(Error::invalid("slice RIPs must share one range grid"))
    }
}

pub fn render_stack(
    scene: &Scene,
    rips: &[RangeIntensityProfile; SLICE_COUNT],
    noise: &NoiseParams,
) -> Result<GatedStack> {
    ensure_common_grid(rips)?;
    let slices = [
        render_slice(scene, &rips[0], noise, 0)?,
        render_slice(scene, &rips[1], noise, 1)?,
        render_slice(scene, &rips[2], noise, 2)?,
    ];
    GatedStack::new(slices)
}

/// Validates inputs for callers that render rows themselves (e.g. in parallel).
pub fn check_stack_inputs(scene: &Scene, rips: &[RangeIntensityProfile; SLICE_COUNT]) -> Result<()> {
    ensure_common_grid(rips)?;
    scene.depth.ensure_same_dims(&scene.albedo)
}

/// Fraction of pixels at full scale (1023) in any slice.
pub fn saturate_check(stack: &GatedStack) -> f64 {
    let n = stack.width() * stack.height();
    if n == 0 {
        return 0.0;
    }
    let saturated = (0..n).filter(|&i| stack.pixel_at(i).contains(&MAX_COUNT)).count();
    saturated as f64 / n as f64
}
