//! Synthetic ground truth: per-pixel depth and albedo, plus sparse
//! LiDAR-like validity masks.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{Grid, Map, ValidMask};
use crate::math;

/// Closest range any scene may contain, meters.
pub const MIN_NEAR_RANGE: f64 = 3.0;
pub const MIN_SCENE_SIZE: usize = 16;

const ALBEDO_MIN: f64 = 0.05;
const ALBEDO_MAX: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SceneKind {
    /// Fronto-parallel wall at a fixed distance.
    GroundPlane { distance: f64 },
    /// Receding floor with rectangular blocks in front of it.
    Boxes,
    /// Receding floor with spherical bumps.
    Spheres,
    /// Smooth rolling depth field.
    Terrain,
}

impl SceneKind {
    /// Parses a catalogue name; `plane_distance` is used by `ground_plane` only.
    pub fn from_name(name: &str, plane_distance: f64) -> Result<Self> {
        match name {
            "ground_plane" => Ok(Self::GroundPlane { distance: plane_distance }),
            "boxes" => Ok(Self::Boxes),
            "spheres" => Ok(Self::Spheres),
            "terrain" => Ok(Self::Terrain),
            other => Err(Error::invalid(alloc::format!("unknown scene `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub kind: SceneKind,
    pub width: usize,
    pub height: usize,
    pub r_near: f64,
    pub r_far: f64,
    /// Number of zero-albedo rectangles painted over the scene.
    pub shadow_patches: usize,
}

impl SceneSpec {
    pub fn new(kind: SceneKind, width: usize, height: usize) -> Self {
        Self { kind, width, height, r_near: MIN_NEAR_RANGE, r_far: 150.0, shadow_patches: 0 }
    }

    pub fn with_range(mut self, r_near: f64, r_far: f64) -> Self {
        self.r_near = r_near;
        self.r_far = r_far;
        self
    }

    pub fn with_shadows(mut self, patches: usize) -> Self {
        self.shadow_patches = patches;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.width < MIN_SCENE_SIZE || self.height < MIN_SCENE_SIZE {
            return Err(Error::invalid("scenes must be at least 16x16 pixels"));
        }
        if !(self.r_near >= MIN_NEAR_RANGE) || !(self.r_far > self.r_near) || !self.r_far.is_finite() {
            return Err(Error::invalid("scene range needs 3 m <= r_near < r_far"));
        }
        if let SceneKind::GroundPlane { distance } = self.kind {
            if !(distance >= self.r_near && distance <= self.r_far) {
                return Err(Error::invalid("plane distance lies outside the scene range"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub depth: Map,
    pub albedo: Map,
}

impl Scene {
    pub fn uniform(width: usize, height: usize, depth: f64, albedo: f64) -> Self {
        Self { depth: Grid::filled(width, height, depth), albedo: Grid::filled(width, height, albedo) }
    }

    pub fn width(&self) -> usize {
        self.depth.width()
    }

    pub fn height(&self) -> usize {
        self.depth.height()
    }
}

pub fn generate_scene(spec: &SceneSpec, seed: u64) -> Result<Scene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (spec.width, spec.height);
    let span = spec.r_far - spec.r_near;

    let mut scene = match spec.kind {
        SceneKind::GroundPlane { distance } => {
            let albedo = rng.random_range(ALBEDO_MIN..=ALBEDO_MAX);
            Scene::uniform(w, h, distance, albedo)
        }
        SceneKind::Boxes => {
            let mut scene = receding_floor(spec, &mut rng);
            let count = rng.random_range(3..=6);
            let mut boxes: Vec<(usize, usize, usize, usize, f64, f64)> = (0..count)
                .map(|_| {
                    let bw = rng.random_range(w / 8..=w / 3);
                    let bh = rng.random_range(h / 8..=h / 2);
                    let x0 = rng.random_range(0..=w - bw);
                    let y0 = rng.random_range(0..=h - bh);
                    let depth = spec.r_near + span * rng.random_range(0.1..0.9);
                    let albedo = rng.random_range(ALBEDO_MIN..=ALBEDO_MAX);
                    (x0, y0, bw, bh, depth, albedo)
                })
                .collect();
            // Far boxes first so that near ones occlude them.
            boxes.sort_by(|a, b| b.4.total_cmp(&a.4));
            for (x0, y0, bw, bh, depth, albedo) in boxes {
                for y in y0..y0 + bh {
                    for x in x0..x0 + bw {
                        scene.depth.set(x, y, depth);
                        scene.albedo.set(x, y, albedo);
                    }
                }
            }
            scene
        }
        SceneKind::Spheres => {
            let mut scene = receding_floor(spec, &mut rng);
            let count = rng.random_range(2..=5);
            let mut spheres: Vec<(f64, f64, f64, f64, f64)> = (0..count)
                .map(|_| {
                    let radius_px = rng.random_range(w.min(h) as f64 / 10.0..w.min(h) as f64 / 4.0);
                    let cx = rng.random_range(0.0..w as f64);
                    let cy = rng.random_range(0.0..h as f64);
                    let depth = spec.r_near + span * rng.random_range(0.15..0.9);
                    let albedo = rng.random_range(ALBEDO_MIN..=ALBEDO_MAX);
                    (cx, cy, radius_px, depth, albedo)
                })
                .collect();
            spheres.sort_by(|a, b| b.3.total_cmp(&a.3));
            for (cx, cy, radius_px, centre_depth, albedo) in spheres {
                // Bulge towards the camera by up to 5 % of the span.
                let bulge = 0.05 * span;
                for y in 0..h {
                    for x in 0..w {
                        let dx = (x as f64 + 0.5 - cx) / radius_px;
                        let dy = (y as f64 + 0.5 - cy) / radius_px;
                        let rho2 = dx * dx + dy * dy;
                        if rho2 < 1.0 {
                            let d = centre_depth - bulge * math::sqrt(1.0 - rho2);
                            scene.depth.set(x, y, d.max(spec.r_near));
                            scene.albedo.set(x, y, albedo);
                        }
                    }
                }
            }
            scene
        }
        SceneKind::Terrain => {
            let waves: Vec<(f64, f64, f64, f64)> = (0..4)
                .map(|_| {
                    (
                        rng.random_range(0.5..3.0),
                        rng.random_range(0.5..3.0),
                        rng.random_range(0.0..core::f64::consts::TAU),
                        rng.random_range(0.3..1.0),
                    )
                })
                .collect();
            let albedo_base = rng.random_range(0.3..0.8);
            let norm: f64 = waves.iter().map(|w| w.3).sum();
            let depth = Grid::from_fn(w, h, |x, y| {
                let u = x as f64 / w as f64;
                let v = y as f64 / h as f64;
                let mut acc = 0.0;
                for (fx, fy, phase, amp) in &waves {
                    acc += amp * libm::sin(core::f64::consts::TAU * (fx * u + fy * v) + phase);
                }
                // acc / norm lies in [-1, 1].
                spec.r_near + span * (0.5 + 0.45 * acc / norm)
            });
            let albedo = Grid::from_fn(w, h, |x, y| {
                let u = x as f64 / w as f64;
                let v = y as f64 / h as f64;
                let a = albedo_base + 0.2 * libm::sin(7.0 * u + 3.0 * v);
                a.clamp(ALBEDO_MIN, ALBEDO_MAX)
            });
            Scene { depth, albedo }
        }
    };

    for _ in 0..spec.shadow_patches {
        let pw = rng.random_range(w / 10..=w / 4).max(1);
        let ph = rng.random_range(h / 10..=h / 4).max(1);
        let x0 = rng.random_range(0..=w - pw);
        let y0 = rng.random_range(0..=h - ph);
        for y in y0..y0 + ph {
            for x in x0..x0 + pw {
                scene.albedo.set(x, y, 0.0);
            }
        }
    }

    for d in scene.depth.as_mut_slice() {
        *d = d.clamp(spec.r_near, spec.r_far);
    }
    Ok(scene)
}

/// Scene whose pixels carry independent uniform depths and albedos.
///
/// Useful as a pixel dataset for estimators that ignore spatial context.
pub fn scatter_scene(
    width: usize,
    height: usize,
    depth: (f64, f64),
    albedo: (f64, f64),
    seed: u64,
) -> Result<Scene> {
    if !(depth.1 > depth.0) || !(albedo.0 >= 0.0 && albedo.1 <= 1.0 && albedo.1 >= albedo.0) {
        return Err(Error::invalid("scatter ranges must be non-empty, albedo within [0, 1]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d = Vec::with_capacity(width * height);
    let mut a = Vec::with_capacity(width * height);
    for _ in 0..width * height {
        d.push(rng.random_range(depth.0..=depth.1));
        a.push(rng.random_range(albedo.0..=albedo.1));
    }
    Ok(Scene { depth: Grid::from_vec(width, height, d)?, albedo: Grid::from_vec(width, height, a)? })
}

/// Floor that recedes from `r_near`-ish at the bottom row to `r_far` at the top.
fn receding_floor(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Scene {
    let (w, h) = (spec.width, spec.height);
    let span = spec.r_far - spec.r_near;
    let near = spec.r_near + span * rng.random_range(0.0..0.1);
    let far = spec.r_far - span * rng.random_range(0.0..0.1);
    let albedo = rng.random_range(ALBEDO_MIN..=ALBEDO_MAX);
    let depth = Grid::from_fn(w, h, |_, y| {
        let v = y as f64 / (h - 1) as f64;
        far + (near - far) * v
    });
    Scene { depth, albedo: Grid::filled(w, h, albedo) }
}

/// Validity concentrated on `n_lines` evenly spaced rows, each pixel kept with
/// probability `1 - dropout`.
pub fn sample_sparse_mask(
    height: usize,
    width: usize,
    n_lines: usize,
    dropout: f64,
    seed: u64,
) -> Result<ValidMask> {
    if n_lines == 0 || n_lines > height {
        return Err(Error::invalid("line count must lie in 1..=height"));
    }
    if !(0.0..1.0).contains(&dropout) {
        return Err(Error::invalid("dropout must lie in [0, 1)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask = Grid::filled(width, height, false);
    for k in 0..n_lines {
        let y = (2 * k + 1) * height / (2 * n_lines);
        for x in 0..width {
            let keep = dropout == 0.0 || rng.random::<f64>() >= dropout;
            mask.set(x, y, keep);
        }
    }
    Ok(mask)
}
