//! Subcommand implementations. Each command reads its inputs from the
//! configured directories, writes its artifacts and regenerates the manifest.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use gated_depth_core::estimate::{
    fit_ratio_polynomial, infer_polynomial, init_regressor, train_regressor, EstimateMaps, PixelRegressor,
    PixelSample, PolyRatioModel, POLY_ORDER,
};
use gated_depth_core::eval::evaluate;
use gated_depth_core::filter::{sweep, sweep_coverages, FilterKind};
use gated_depth_core::grid::{Grid, Map, ValidMask};
use gated_depth_core::loss::image_loss;
use gated_depth_core::rip::RangeIntensityProfile;
use gated_depth_core::scene::{generate_scene, sample_sparse_mask, scatter_scene};
use gated_depth_core::sensor::saturate_check;
use gated_depth_core::{EvalReport, FilterCurve};

use crate::config::{
    mix_seed, EstimatorKind, EvalMask, ExperimentConfig, FilterKindName, FrameScene, RenderKind, Supervision,
};
use crate::dataset::{frame_dir_name, frame_dirs, read_split, stack_frames, write_manifest, Frame, Split};
use crate::error::{CliError, Result};
use crate::formats::{
    curve_csv, history_csv, read_checkpoint, read_fmap, report_csv, report_table, write_bytes,
    write_checkpoint, write_fmap, write_preview_pgm,
};
use crate::parallel::{infer_maps_par, render_stack_par};

const LIDAR_SALT: u64 = 0x4C49_4441_5200_0000;

pub const MODEL_DIR: &str = "model";
pub const PREDICTION_DIR: &str = "predictions";
pub const EVAL_DIR: &str = "eval";
pub const RENDER_DIR: &str = "render";
pub const BEST_CHECKPOINT: &str = "model_best.gdlr";
pub const FINAL_CHECKPOINT: &str = "model_final.gdlr";
pub const POLY_MODEL: &str = "ratio_polynomial.toml";

fn clear_dir(dir: &Path) -> Result<()> {
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Regenerates the manifest of the output directory and, when it lives
/// elsewhere, of the dataset directory.
fn finish(cfg: &ExperimentConfig) -> Result<()> {
    fs::create_dir_all(&cfg.output_dir).map_err(|e| CliError::io(&cfg.output_dir, e))?;
    write_manifest(&cfg.output_dir)?;
    let data = cfg.dataset_root();
    if data.exists() && !data.starts_with(&cfg.output_dir) {
        write_manifest(&data)?;
    }
    Ok(())
}

// --- simulate -------------------------------------------------------------

pub fn simulate_frame(
    cfg: &ExperimentConfig,
    rips: &[RangeIntensityProfile; 3],
    split: Split,
    index: usize,
) -> Result<Frame> {
    let key = split.frame_key(index);
    let scene = match cfg.frame_scene(index)? {
        FrameScene::Structured(spec) => generate_scene(&spec, mix_seed(cfg.seed, key))?,
        FrameScene::Scatter { depth, albedo, width, height } => {
            scatter_scene(width, height, depth, albedo, mix_seed(cfg.seed, key))?
        }
    };
    let stack = render_stack_par(&scene, rips, &cfg.noise_params(key)?)?;
    let (w, h) = stack.dims();
    let hits = sample_sparse_mask(
        h,
        w,
        cfg.dataset.lidar_lines,
        cfg.dataset.lidar_dropout,
        mix_seed(cfg.seed ^ LIDAR_SALT, key),
    )?;
    let lidar = Grid::from_fn(w, h, |x, y| if *hits.get(x, y) { *scene.depth.get(x, y) } else { f64::NAN });
    Ok(Frame { stack, depth: scene.depth, albedo: scene.albedo, lidar })
}

pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<String> {
    let rips = cfg.slice_config()?.synthesize()?;
    let counts = [cfg.dataset.train_frames, cfg.dataset.val_frames, cfg.dataset.test_frames];
    let jobs: Vec<(Split, usize)> =
        Split::ALL.iter().zip(counts).flat_map(|(s, n)| (0..n).map(move |k| (*s, k))).collect();
    let frames = jobs
        .par_iter()
        .map(|(split, k)| simulate_frame(cfg, &rips, *split, *k))
        .collect::<Result<Vec<_>>>()?;

    let root = cfg.dataset_root();
    for split in Split::ALL {
        clear_dir(&root.join(split.name()))?;
    }
    let mut saturated = 0.0;
    for ((split, k), frame) in jobs.iter().zip(&frames) {
        frame.write(&root.join(split.name()).join(frame_dir_name(*k)))?;
        saturated += saturate_check(&frame.stack);
    }
    finish(cfg)?;
    Ok(format!(
        "simulated {} frames into {} (mean saturated fraction {:.4})\n",
        frames.len(),
        root.display(),
        saturated / frames.len() as f64
    ))
}

// --- train ----------------------------------------------------------------

fn supervised_samples(frames: &[Frame], supervision: Supervision) -> Vec<PixelSample> {
    let mut out = Vec::new();
    for f in frames {
        let target = match supervision {
            Supervision::Dense => &f.depth,
            Supervision::Lidar => &f.lidar,
        };
        for (i, r) in target.as_slice().iter().enumerate() {
            if r.is_finite() {
                out.push(PixelSample::from_counts(f.stack.pixel_at(i), *r));
            }
        }
    }
    out
}

/// Ratio polynomial stored as TOML.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolyFile {
    coefficients: Vec<f64>,
    centre: f64,
    scale: f64,
    valid: [f64; 2],
    rmse: f64,
}

pub fn write_poly_model(path: &Path, model: &PolyRatioModel) -> Result<()> {
    let file = PolyFile {
        coefficients: model.coefficients.to_vec(),
        centre: model.centre,
        scale: model.scale,
        valid: [model.valid.0, model.valid.1],
        rmse: model.rmse,
    };
    write_bytes(path, toml::to_string(&file).expect("model serializes").as_bytes())
}

pub fn read_poly_model(path: &Path) -> Result<PolyRatioModel> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let file: PolyFile = toml::from_str(&text).map_err(|e| CliError::format(path, e.to_string()))?;
    let coefficients: [f64; POLY_ORDER + 1] =
        file.coefficients.try_into().map_err(|_| CliError::format(path, "expected six coefficients"))?;
    Ok(PolyRatioModel {
        coefficients,
        centre: file.centre,
        scale: file.scale,
        valid: (file.valid[0], file.valid[1]),
        rmse: file.rmse,
    })
}

pub const SUMMARY_HEADER: &str =
    "best_epoch,best_val_mae,val_multiscale_aleatoric,val_smoothness,val_total_loss";

/// Full image objective of `model` averaged over validation frames.
fn validation_image_loss(
    cfg: &ExperimentConfig,
    model: &PixelRegressor,
    frames: &[Frame],
) -> Result<[f64; 3]> {
    let loss_cfg = cfg.loss_config();
    let mut acc = [0.0; 3];
    for f in frames {
        let maps = infer_maps_par(model, &f.stack);
        let mask = f.depth.finite_mask();
        let guide = f.stack.guide();
        let (c, total) = image_loss(&f.depth, &mask, &maps.depth, &maps.log_variance, &guide, &loss_cfg)?;
        acc[0] += c.multiscale_aleatoric;
        acc[1] += c.smoothness;
        acc[2] += total;
    }
    Ok(acc.map(|v| v / frames.len() as f64))
}

pub fn cmd_train(cfg: &ExperimentConfig) -> Result<String> {
    let root = cfg.dataset_root();
    let train = read_split(&root, Split::Train)?;
    let val = read_split(&root, Split::Val)?;
    let out = cfg.output_dir.join(MODEL_DIR);
    match cfg.estimator.kind {
        EstimatorKind::Regressor => {
            let train_cfg = cfg.train_config()?;
            let model = init_regressor(&cfg.layer_widths(), cfg.depth_range()?, cfg.estimator.seed)?
                .with_activation(cfg.activation()?);
            let train_samples = supervised_samples(&train, cfg.estimator.supervision);
            let val_samples = supervised_samples(&val, Supervision::Dense);
            let outcome = train_regressor(model, &train_samples, &val_samples, &train_cfg)?;
            let best_mae = outcome.history[outcome.best_epoch - 1].val_mae;
            let losses = validation_image_loss(cfg, &outcome.best, &val)?;
            clear_dir(&out)?;
            write_checkpoint(&out.join(BEST_CHECKPOINT), &outcome.best)?;
            write_checkpoint(&out.join(FINAL_CHECKPOINT), &outcome.last)?;
            write_bytes(&out.join("history.csv"), history_csv(&outcome.history).as_bytes())?;
            let summary = format!(
                "{SUMMARY_HEADER}\n{},{},{},{},{}\n",
                outcome.best_epoch, best_mae, losses[0], losses[1], losses[2]
            );
            write_bytes(&out.join("summary.csv"), summary.as_bytes())?;
            finish(cfg)?;
            Ok(format!(
                "trained {} epochs on {} pixels; best epoch {} with validation MAE {:.4} m\n",
                outcome.history.len(),
                train_samples.len(),
                outcome.best_epoch,
                best_mae
            ))
        }
        EstimatorKind::RatioPolynomial => {
            let (lo, hi) = cfg.slice_config()?.overlap_region()?;
            let fit_samples: Vec<([f64; 3], f64)> = supervised_samples(&train, cfg.estimator.supervision)
                .into_iter()
                .filter(|s| s.r >= lo && s.r <= hi)
                // The ratio feature is scale free, so normalized counts fit as well as raw ones.
                .map(|s| (s.z, s.r))
                .collect();
            let model = fit_ratio_polynomial(&fit_samples)?;
            let val_samples: Vec<PixelSample> = supervised_samples(&val, Supervision::Dense)
                .into_iter()
                .filter(|s| s.r >= lo && s.r <= hi)
                .collect();
            let errs: Vec<f64> =
                val_samples.iter().filter_map(|s| model.predict(s.z).ok().map(|r| (r - s.r).abs())).collect();
            let val_mae = if errs.is_empty() {
                f64::NAN
            } else {
                gated_depth_core::math::pairwise_sum(&errs) / errs.len() as f64
            };
            clear_dir(&out)?;
            write_poly_model(&out.join(POLY_MODEL), &model)?;
            let summary = format!(
                "fit_rmse,val_mae_overlap,overlap_lo_m,overlap_hi_m\n{},{val_mae},{lo},{hi}\n",
                model.rmse
            );
            write_bytes(&out.join("summary.csv"), summary.as_bytes())?;
            finish(cfg)?;
            Ok(format!(
                "fitted ratio polynomial on {} pixels in [{lo:.2}, {hi:.2}] m; fit RMSE {:.4} m, validation MAE {val_mae:.4} m\n",
                fit_samples.len(),
                model.rmse
            ))
        }
    }
}

// --- infer ----------------------------------------------------------------

pub enum LoadedModel {
    Regressor(PixelRegressor),
    Polynomial(PolyRatioModel),
}

pub fn load_model(cfg: &ExperimentConfig) -> Result<LoadedModel> {
    let dir = cfg.output_dir.join(MODEL_DIR);
    Ok(match cfg.estimator.kind {
        EstimatorKind::Regressor => {
            let name = if cfg.eval.checkpoint == "final" { FINAL_CHECKPOINT } else { BEST_CHECKPOINT };
            LoadedModel::Regressor(read_checkpoint(&dir.join(name))?)
        }
        EstimatorKind::RatioPolynomial => LoadedModel::Polynomial(read_poly_model(&dir.join(POLY_MODEL))?),
    })
}

pub fn predict(model: &LoadedModel, frame: &Frame) -> EstimateMaps {
    match model {
        LoadedModel::Regressor(m) => infer_maps_par(m, &frame.stack),
        LoadedModel::Polynomial(p) => {
            let depth = infer_polynomial(p, &frame.stack);
            let (w, h) = depth.dims();
            EstimateMaps { depth, log_variance: Grid::filled(w, h, f64::NAN) }
        }
    }
}

pub fn cmd_infer(cfg: &ExperimentConfig) -> Result<String> {
    let model = load_model(cfg)?;
    let frames = read_split(&cfg.dataset_root(), Split::Test)?;
    let out = cfg.output_dir.join(PREDICTION_DIR);
    let maps: Vec<EstimateMaps> = frames.iter().map(|f| predict(&model, f)).collect();
    clear_dir(&out)?;
    for (k, m) in maps.iter().enumerate() {
        let dir = out.join(frame_dir_name(k));
        write_fmap(&dir.join("depth.fmap"), &m.depth)?;
        write_fmap(&dir.join("log_scale.fmap"), &m.log_variance)?;
    }
    finish(cfg)?;
    Ok(format!("wrote predictions for {} test frames to {}\n", maps.len(), out.display()))
}

// --- eval and sweep -------------------------------------------------------

pub fn read_predictions(cfg: &ExperimentConfig) -> Result<Vec<EstimateMaps>> {
    frame_dirs(&cfg.output_dir.join(PREDICTION_DIR))?
        .iter()
        .map(|d| {
            Ok(EstimateMaps {
                depth: read_fmap(&d.join("depth.fmap"))?,
                log_variance: read_fmap(&d.join("log_scale.fmap"))?,
            })
        })
        .collect()
}

/// Test frames and predictions joined into single tall maps.
struct TestSet {
    stacked: crate::dataset::Stacked,
    maps: EstimateMaps,
    mask: ValidMask,
}

fn load_test_set(cfg: &ExperimentConfig) -> Result<TestSet> {
    let frames = read_split(&cfg.dataset_root(), Split::Test)?;
    let preds = read_predictions(cfg)?;
    let pred_dir = cfg.output_dir.join(PREDICTION_DIR);
    if preds.len() != frames.len() {
        return Err(CliError::format(
            &pred_dir,
            format!("{} prediction frames for {} test frames", preds.len(), frames.len()),
        ));
    }
    for (p, f) in preds.iter().zip(&frames) {
        if p.depth.dims() != f.depth.dims() || p.log_variance.dims() != f.depth.dims() {
            return Err(CliError::format(&pred_dir, "prediction size differs from test frame"));
        }
    }
    let stacked = stack_frames(&frames)?;
    let depth: Vec<Map> = preds.iter().map(|p| p.depth.clone()).collect();
    let log_var: Vec<Map> = preds.iter().map(|p| p.log_variance.clone()).collect();
    let maps = EstimateMaps { depth: Grid::vstack(&depth)?, log_variance: Grid::vstack(&log_var)? };
    let mask = match cfg.eval.mask {
        EvalMask::Dense => stacked.depth.finite_mask(),
        EvalMask::Lidar => stacked.lidar.finite_mask(),
    };
    Ok(TestSet { stacked, maps, mask })
}

pub fn run_eval(cfg: &ExperimentConfig) -> Result<EvalReport> {
    let t = load_test_set(cfg)?;
    Ok(evaluate(&t.maps.depth, &t.stacked.depth, &t.mask, cfg.eval_range()?)?)
}

pub fn cmd_eval(cfg: &ExperimentConfig) -> Result<String> {
    let report = run_eval(cfg)?;
    let path = cfg.output_dir.join(EVAL_DIR).join("report.csv");
    write_bytes(&path, report_csv(&report).as_bytes())?;
    finish(cfg)?;
    Ok(report_table(&report))
}

pub fn run_sweep(cfg: &ExperimentConfig) -> Result<FilterCurve> {
    let t = load_test_set(cfg)?;
    let range = cfg.eval_range()?;
    // Same pixel set as the evaluation: valid, in range, finite prediction.
    let gt_mask = Grid::from_fn(t.mask.width(), t.mask.height(), |x, y| {
        *t.mask.get(x, y) && range.contains(*t.stacked.depth.get(x, y)) && t.maps.depth.get(x, y).is_finite()
    });
    let kind = match cfg.filter.kind {
        FilterKindName::Snr => FilterKind::Snr(&t.stacked.stack),
        FilterKindName::Uncertainty => {
            if t.maps.log_variance.as_slice().iter().all(|s| s.is_nan()) {
                return Err(CliError::Config(
                    "uncertainty filtering needs predictions with a log-scale map".into(),
                ));
            }
            FilterKind::Uncertainty
        }
    };
    let curve = if cfg.filter.thresholds.is_empty() {
        sweep_coverages(&t.maps, &t.stacked.depth, &gt_mask, kind, &cfg.filter.coverages)?
    } else {
        sweep(&t.maps, &t.stacked.depth, &gt_mask, kind, &cfg.filter.thresholds)?
    };
    Ok(curve)
}

pub fn sweep_file_name(kind: FilterKindName) -> String {
    match kind {
        FilterKindName::Snr => "sweep_snr.csv".into(),
        FilterKindName::Uncertainty => "sweep_uncertainty.csv".into(),
    }
}

pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<String> {
    let curve = run_sweep(cfg)?;
    let csv = curve_csv(&curve);
    let path = cfg.output_dir.join(EVAL_DIR).join(sweep_file_name(cfg.filter.kind));
    write_bytes(&path, csv.as_bytes())?;
    finish(cfg)?;
    Ok(csv)
}

// --- render ---------------------------------------------------------------

pub fn render_path(cfg: &ExperimentConfig, frame: usize, kind: RenderKind) -> PathBuf {
    let suffix = match kind {
        RenderKind::Depth => "depth",
        RenderKind::Uncertainty => "uncertainty",
    };
    cfg.output_dir.join(RENDER_DIR).join(format!("{}_{suffix}.pgm", frame_dir_name(frame)))
}

pub fn cmd_render(cfg: &ExperimentConfig) -> Result<String> {
    let preds = read_predictions(cfg)?;
    clear_dir(&cfg.output_dir.join(RENDER_DIR))?;
    let mut written = 0;
    for (k, m) in preds.iter().enumerate() {
        for kind in &cfg.render.kinds {
            let map = match kind {
                RenderKind::Depth => &m.depth,
                RenderKind::Uncertainty => &m.log_variance,
            };
            write_preview_pgm(&render_path(cfg, k, *kind), map)?;
            written += 1;
        }
    }
    finish(cfg)?;
    Ok(format!("rendered {written} images\n"))
}

/// `simulate`, `train`, `infer`, `eval`, `sweep` and `render` in sequence.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<String> {
    let mut log = String::new();
    for step in [cmd_simulate, cmd_train, cmd_infer, cmd_eval, cmd_sweep, cmd_render] {
        log.push_str(&step(cfg)?);
    }
    Ok(log)
}
