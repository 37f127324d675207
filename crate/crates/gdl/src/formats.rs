//! On-disk formats: FMAP float maps, 16-bit PGM slices, 8-bit PGM previews,
//! GDLR model checkpoints and the CSV tables written by the CLI.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use gated_depth_core::estimate::{Activation, DepthRange, EpochRecord, PixelRegressor};
use gated_depth_core::grid::{Grid, Map};
use gated_depth_core::rip::RangeIntensityProfile;
use gated_depth_core::sensor::MAX_COUNT;
use gated_depth_core::{EvalReport, FilterCurve};

use crate::error::{CliError, Result};

pub const FMAP_MAGIC: &[u8; 4] = b"FMAP";
pub const FMAP_VERSION: u32 = 1;
pub const GDLR_MAGIC: &[u8; 4] = b"GDLR";
pub const GDLR_VERSION: u32 = 1;

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

/// Little-endian cursor over a byte buffer.
struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let out = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(out)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn f32(&mut self) -> Option<f32> {
        self.take(4).map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Option<f64> {
        self.take(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn finished(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

// --- FMAP -----------------------------------------------------------------

pub fn encode_fmap(map: &Map) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * map.len());
    out.extend_from_slice(FMAP_MAGIC);
    out.extend_from_slice(&FMAP_VERSION.to_le_bytes());
    out.extend_from_slice(&(map.width() as u32).to_le_bytes());
    out.extend_from_slice(&(map.height() as u32).to_le_bytes());
    for v in map.as_slice() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn decode_fmap(bytes: &[u8]) -> std::result::Result<Map, String> {
    let mut r = Reader::new(bytes);
    if r.take(4) != Some(FMAP_MAGIC.as_slice()) {
        return Err("missing FMAP magic".into());
    }
    let version = r.u32().ok_or("truncated header")?;
    if version != FMAP_VERSION {
        return Err(format!("unsupported FMAP version {version}"));
    }
    let width = r.u32().ok_or("truncated header")? as usize;
    let height = r.u32().ok_or("truncated header")? as usize;
    let n = width.checked_mul(height).ok_or("dimensions overflow")?;
    // Bounded by the payload, so a corrupt header cannot force a huge allocation.
    if bytes.len() - 16 != n.saturating_mul(4) {
        return Err("pixel data size does not match header".into());
    }
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        data.push(f64::from(r.f32().ok_or("truncated pixel data")?));
    }
    if !r.finished() {
        return Err("trailing bytes after pixel data".into());
    }
    Grid::from_vec(width, height, data).map_err(|e| e.to_string())
}

pub fn write_fmap(path: &Path, map: &Map) -> Result<()> {
    write_bytes(path, &encode_fmap(map))
}

pub fn read_fmap(path: &Path) -> Result<Map> {
    decode_fmap(&read_bytes(path)?).map_err(|reason| CliError::format(path, reason))
}

// --- PGM ------------------------------------------------------------------

/// Binary PGM; samples above 255 use two big-endian bytes as the format requires.
pub fn encode_pgm(width: usize, height: usize, maxval: u16, samples: &[u16]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n{maxval}\n").into_bytes();
    if maxval > 255 {
        for s in samples {
            out.extend_from_slice(&s.to_be_bytes());
        }
    } else {
        out.extend(samples.iter().map(|s| *s as u8));
    }
    out
}

pub fn decode_pgm(bytes: &[u8]) -> std::result::Result<(Grid<u16>, u16), String> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if bytes.get(pos) == Some(&b'#') {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated PGM header".into());
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|e| e.to_string())?);
    }
    if fields[0] != "P5" {
        return Err("only binary P5 PGM is supported".into());
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|e| format!("bad header field `{s}`: {e}"));
    let (width, height, maxval) = (parse(fields[1])?, parse(fields[2])?, parse(fields[3])?);
    if maxval == 0 || maxval > usize::from(u16::MAX) {
        return Err(format!("bad maxval {maxval}"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let raster = bytes.get(pos..).ok_or("missing raster")?;
    let n = width.checked_mul(height).ok_or("dimensions overflow")?;
    let samples: Vec<u16> = if maxval > 255 {
        if raster.len() != n.saturating_mul(2) {
            return Err("raster size does not match header".into());
        }
        raster.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
    } else {
        if raster.len() != n {
            return Err("raster size does not match header".into());
        }
        raster.iter().map(|b| u16::from(*b)).collect()
    };
    if samples.iter().any(|s| usize::from(*s) > maxval) {
        return Err("sample exceeds maxval".into());
    }
    let grid = Grid::from_vec(width, height, samples).map_err(|e| e.to_string())?;
    Ok((grid, maxval as u16))
}

pub fn write_slice_pgm(path: &Path, slice: &Grid<u16>) -> Result<()> {
    write_bytes(path, &encode_pgm(slice.width(), slice.height(), MAX_COUNT, slice.as_slice()))
}

pub fn read_slice_pgm(path: &Path) -> Result<Grid<u16>> {
    let (grid, maxval) = decode_pgm(&read_bytes(path)?).map_err(|r| CliError::format(path, r))?;
    if maxval != MAX_COUNT {
        return Err(CliError::format(path, format!("expected maxval 1023, found {maxval}")));
    }
    Ok(grid)
}

/// 8-bit preview: finite minimum → 0, maximum → 255, NaN → 0.
pub fn render_preview(map: &Map) -> Grid<u16> {
    let (lo, hi) = map.min_max().unwrap_or((0.0, 0.0));
    let span = hi - lo;
    map.map(|v| {
        if !v.is_finite() || span <= 0.0 {
            0
        } else {
            ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u16
        }
    })
}

pub fn write_preview_pgm(path: &Path, map: &Map) -> Result<()> {
    let img = render_preview(map);
    write_bytes(path, &encode_pgm(img.width(), img.height(), 255, img.as_slice()))
}

// --- GDLR checkpoints -----------------------------------------------------

/// `GDLR`, version, layer count, widths, activation code (all u32 LE), then
/// f64 LE: depth near, depth far, input scale, and each layer's weights
/// (row-major, out × in) followed by its biases.
pub fn encode_checkpoint(model: &PixelRegressor) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(GDLR_MAGIC);
    out.extend_from_slice(&GDLR_VERSION.to_le_bytes());
    out.extend_from_slice(&(model.widths().len() as u32).to_le_bytes());
    for w in model.widths() {
        out.extend_from_slice(&(*w as u32).to_le_bytes());
    }
    out.extend_from_slice(&model.activation().code().to_le_bytes());
    let range = model.depth_range();
    for v in [range.near, range.far, model.input_scale()].iter().chain(model.params()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> std::result::Result<PixelRegressor, String> {
    let mut r = Reader::new(bytes);
    if r.take(4) != Some(GDLR_MAGIC.as_slice()) {
        return Err("missing GDLR magic".into());
    }
    let version = r.u32().ok_or("truncated header")?;
    if version != GDLR_VERSION {
        return Err(format!("unsupported checkpoint version {version}"));
    }
    let layers = r.u32().ok_or("truncated header")? as usize;
    if layers > 64 {
        return Err(format!("implausible layer count {layers}"));
    }
    let widths = (0..layers)
        .map(|_| r.u32().map(|w| w as usize).ok_or("truncated widths"))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let activation = r.u32().and_then(Activation::from_code).ok_or("unknown activation")?;
    let near = r.f64().ok_or("truncated header")?;
    let far = r.f64().ok_or("truncated header")?;
    let input_scale = r.f64().ok_or("truncated header")?;
    let mut params = Vec::new();
    while let Some(v) = r.f64() {
        params.push(v);
    }
    if !r.finished() {
        return Err("trailing bytes after parameters".into());
    }
    let range = DepthRange::new(near, far).map_err(|e| e.to_string())?;
    PixelRegressor::from_parts(widths, activation, range, input_scale, params).map_err(|e| e.to_string())
}

pub fn write_checkpoint(path: &Path, model: &PixelRegressor) -> Result<()> {
    write_bytes(path, &encode_checkpoint(model))
}

pub fn read_checkpoint(path: &Path) -> Result<PixelRegressor> {
    decode_checkpoint(&read_bytes(path)?).map_err(|r| CliError::format(path, r))
}

// --- CSV ------------------------------------------------------------------

pub fn rip_csv(rip: &RangeIntensityProfile) -> String {
    let mut out = String::from("r_m,c\n");
    for (r, c) in rip.ranges().zip(rip.samples()) {
        let _ = writeln!(out, "{r},{c}");
    }
    out
}

pub const CURVE_HEADER: &str = "threshold,coverage,mae_m,rmse_m";

/// Filter curve; points without surviving pixels carry `nan` errors.
pub fn curve_csv(curve: &FilterCurve) -> String {
    let mut out = format!("{CURVE_HEADER}\n");
    for p in &curve.points {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            p.threshold,
            p.coverage,
            p.mae.unwrap_or(f64::NAN),
            p.rmse.unwrap_or(f64::NAN)
        );
    }
    out
}

pub const HISTORY_HEADER: &str = "epoch,train_loss,val_mae";

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = format!("{HISTORY_HEADER}\n");
    for h in history {
        let _ = writeln!(out, "{},{},{}", h.epoch, h.train_loss, h.val_mae);
    }
    out
}

/// `silog_x100` is `100 · sqrt(mean d² − (mean d)²)` with `d = ln r̂ − ln r`.
pub const REPORT_HEADER: &str =
    "mae_m,rmse_m,silog_x100,delta1,delta2,delta3,coverage,range_lo_m,range_hi_m,valid_pixels";

pub fn report_csv(report: &EvalReport) -> String {
    format!(
        "{REPORT_HEADER}\n{},{},{},{},{},{},{},{},{},{}\n",
        report.mae,
        report.rmse,
        report.silog,
        report.delta[0],
        report.delta[1],
        report.delta[2],
        report.coverage,
        report.range.lo,
        report.range.hi,
        report.valid_pixels
    )
}

pub fn report_table(report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "evaluated {} pixels with ground truth in [{}, {}] m (coverage {:.2} %)",
        report.valid_pixels,
        report.range.lo,
        report.range.hi,
        100.0 * report.coverage
    );
    let _ = writeln!(
        out,
        "{:>10} {:>10} {:>10} {:>8} {:>8} {:>8}",
        "RMSE [m]", "MAE [m]", "SIlog", "d1", "d2", "d3"
    );
    let _ = writeln!(
        out,
        "{:>10.3} {:>10.3} {:>10.3} {:>8.4} {:>8.4} {:>8.4}",
        report.rmse, report.mae, report.silog, report.delta[0], report.delta[1], report.delta[2]
    );
    out.push_str("SIlog = 100 * sqrt(mean(d^2) - mean(d)^2), d = ln(pred) - ln(gt)\n");
    out
}

/// Parses a CSV produced by this module into a header and numeric rows.
pub fn parse_csv(text: &str) -> std::result::Result<(Vec<String>, Vec<Vec<f64>>), String> {
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().ok_or("empty CSV")?.split(',').map(str::to_owned).collect();
    let rows = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').map(|f| f.trim().parse::<f64>().map_err(|e| format!("`{f}`: {e}"))).collect())
        .collect::<std::result::Result<Vec<Vec<f64>>, String>>()?;
    Ok((header, rows))
}
