//! Row-parallel drivers over the core kernels.
//!
//! Every worker writes a disjoint row and results are gathered in row order,
//! so outputs do not depend on the thread count.

use rayon::prelude::*;

use gated_depth_core::estimate::{infer_row, EstimateMaps, PixelRegressor};
use gated_depth_core::grid::Grid;
use gated_depth_core::rip::RangeIntensityProfile;
use gated_depth_core::scene::Scene;
use gated_depth_core::sensor::{check_stack_inputs, render_row, SLICE_COUNT};
use gated_depth_core::{GatedStack, NoiseParams};

use crate::error::{CliError, Result};

pub const THREADS_ENV: &str = "GDL_THREADS";

/// Worker count: `GDL_THREADS` when set, otherwise the available cores.
pub fn thread_count() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(raw) => match raw.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(CliError::Config(format!("{THREADS_ENV} must be a positive integer, got `{raw}`"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Runs `f` on a dedicated pool of `threads` workers.
pub fn run_with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(f))
}

pub fn render_stack_par(
    scene: &Scene,
    rips: &[RangeIntensityProfile; SLICE_COUNT],
    noise: &NoiseParams,
) -> Result<GatedStack> {
    check_stack_inputs(scene, rips)?;
    let (w, h) = (scene.width(), scene.height());
    let mut slices = Vec::with_capacity(SLICE_COUNT);
    for (i, rip) in rips.iter().enumerate() {
        let rows = (0..h)
            .into_par_iter()
            .map(|y| render_row(scene, rip, noise, i, y))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        slices.push(Grid::from_vec(w, h, rows.concat())?);
    }
    let slices: [Grid<u16>; SLICE_COUNT] = slices.try_into().expect("three slices");
    Ok(GatedStack::new(slices)?)
}

pub fn infer_maps_par(model: &PixelRegressor, stack: &GatedStack) -> EstimateMaps {
    let rows = (0..stack.height()).into_par_iter().map(|y| infer_row(model, stack, y)).collect();
    EstimateMaps::from_rows(stack.width(), rows).expect("rows match stack width")
}

#[cfg(test)]
mod tests {
    use super::*;
    use gated_depth_core::estimate::{infer_maps, init_regressor, DepthRange};
    use gated_depth_core::rip::SliceConfig;
    use gated_depth_core::scene::{generate_scene, SceneKind, SceneSpec};
    use gated_depth_core::sensor::render_stack;

    #[test]
    fn parallel_matches_serial_for_any_pool() {
        let spec = SceneSpec::new(SceneKind::Terrain, 24, 20).with_range(20.0, 100.0);
        let scene = generate_scene(&spec, 5).unwrap();
        let rips = SliceConfig::overlapping_default().synthesize().unwrap();
        let noise = NoiseParams::new(1.0, 4.0, 9).unwrap();
        let serial = render_stack(&scene, &rips, &noise).unwrap();
        let model = init_regressor(&[3, 8, 2], DepthRange::new(3.0, 150.0).unwrap(), 2).unwrap();
        for threads in [1, 3] {
            let stack =
                run_with_threads(threads, || render_stack_par(&scene, &rips, &noise)).unwrap().unwrap();
            assert_eq!(stack, serial);
            let maps = run_with_threads(threads, || infer_maps_par(&model, &stack)).unwrap();
            assert_eq!(maps, infer_maps(&model, &stack));
        }
    }
}
