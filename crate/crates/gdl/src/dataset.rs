//! Directory layout of simulated datasets, predictions and the checksum manifest.
//!
//! ```text
//! <dataset>/{train,val,test}/frame_NNN/slice_{1,2,3}.pgm
//!                                      depth.fmap albedo.fmap lidar.fmap
//! <output>/predictions/frame_NNN/depth.fmap log_scale.fmap
//! <output>/manifest.txt
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use gated_depth_core::grid::{Grid, Map, ValidMask};
use gated_depth_core::{GatedStack, Result as CoreResult};

use crate::error::{CliError, Result};
use crate::formats::{read_fmap, read_slice_pgm, write_fmap, write_slice_pgm};

pub const MANIFEST_NAME: &str = "manifest.txt";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    /// Distinct key per (split, frame) for seed derivation.
    pub fn frame_key(self, frame: usize) -> u64 {
        ((self as u64) << 32) | frame as u64
    }
}

pub fn frame_dir_name(index: usize) -> String {
    format!("frame_{index:03}")
}

/// One simulated frame: measurements plus dense and scanner ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub stack: GatedStack,
    pub depth: Map,
    pub albedo: Map,
    /// Depth at scanner hits, NaN elsewhere.
    pub lidar: Map,
}

impl Frame {
    pub fn lidar_mask(&self) -> ValidMask {
        self.lidar.finite_mask()
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        for (i, slice) in self.stack.slices().iter().enumerate() {
            write_slice_pgm(&dir.join(format!("slice_{}.pgm", i + 1)), slice)?;
        }
        write_fmap(&dir.join("depth.fmap"), &self.depth)?;
        write_fmap(&dir.join("albedo.fmap"), &self.albedo)?;
        write_fmap(&dir.join("lidar.fmap"), &self.lidar)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let slice = |i: usize| read_slice_pgm(&dir.join(format!("slice_{i}.pgm")));
        let stack = GatedStack::new([slice(1)?, slice(2)?, slice(3)?])
            .map_err(|e| CliError::format(dir, e.to_string()))?;
        let frame = Self {
            stack,
            depth: read_fmap(&dir.join("depth.fmap"))?,
            albedo: read_fmap(&dir.join("albedo.fmap"))?,
            lidar: read_fmap(&dir.join("lidar.fmap"))?,
        };
        let first = &frame.stack.slices()[0];
        for map in [&frame.depth, &frame.albedo, &frame.lidar] {
            first.ensure_same_dims(map).map_err(|e| CliError::format(dir, e.to_string()))?;
        }
        Ok(frame)
    }
}

/// Sorted `frame_*` subdirectories of `dir`.
pub fn frame_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| CliError::io(dir, e))?;
        let is_frame = entry.file_name().to_string_lossy().starts_with("frame_");
        if is_frame && entry.path().is_dir() {
            out.push(entry.path());
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(CliError::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no frame_* directories"),
        ));
    }
    Ok(out)
}

pub fn read_split(root: &Path, split: Split) -> Result<Vec<Frame>> {
    frame_dirs(&root.join(split.name()))?.iter().map(|d| Frame::read(d)).collect()
}

/// Frames joined vertically into one tall image.
#[derive(Clone, Debug)]
pub struct Stacked {
    pub stack: GatedStack,
    pub depth: Map,
    pub lidar: Map,
}

pub fn stack_frames(frames: &[Frame]) -> CoreResult<Stacked> {
    let stacks: Vec<GatedStack> = frames.iter().map(|f| f.stack.clone()).collect();
    let depth: Vec<Map> = frames.iter().map(|f| f.depth.clone()).collect();
    let lidar: Vec<Map> = frames.iter().map(|f| f.lidar.clone()).collect();
    Ok(Stacked {
        stack: GatedStack::vstack(&stacks)?,
        depth: Grid::vstack(&depth)?,
        lidar: Grid::vstack(&lidar)?,
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<(String, PathBuf)>) -> Result<()> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            let rel = path.strip_prefix(root).expect("walk stays below root");
            let key = rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy().into_owned())
                .collect::<Vec<_>>()
                .join("/");
            if key != MANIFEST_NAME {
                out.push((key, path));
            }
        }
    }
    Ok(())
}

/// Manifest text for every file below `root`: `sha256  relative/path`, sorted by path.
pub fn manifest_text(root: &Path) -> Result<String> {
    let mut files = Vec::new();
    collect_files(root, root, &mut files)?;
    files.sort();
    let mut out = String::new();
    for (key, path) in files {
        let bytes = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        out.push_str(&format!("{}  {key}\n", sha256_hex(&bytes)));
    }
    Ok(out)
}

pub fn write_manifest(root: &Path) -> Result<PathBuf> {
    let text = manifest_text(root)?;
    let path = root.join(MANIFEST_NAME);
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

/// Recomputes every checksum; returns the entries whose file is missing or differs.
pub fn verify_manifest(root: &Path) -> Result<Vec<String>> {
    let path = root.join(MANIFEST_NAME);
    let listed = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let mut bad = Vec::new();
    for line in listed.lines() {
        let (sum, rel) =
            line.split_once("  ").ok_or_else(|| CliError::format(&path, format!("bad line `{line}`")))?;
        match fs::read(root.join(rel)) {
            Ok(bytes) if sha256_hex(&bytes) == sum => {}
            _ => bad.push(rel.to_owned()),
        }
    }
    Ok(bad)
}
