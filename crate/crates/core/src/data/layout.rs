//! On-disk dataset layout.
//!
//! ```text
//! root/{category}/{model_id}/gt.xyz
//! root/{category}/{model_id}/partial.xyz
//! root/{category}/{model_id}/render_00.img .. render_23.img
//! root/splits/{name}.txt            one model_id per line
//! ```
//!
//! A `.img` file is a 16-byte header (magic `MMCD`, width, height, reserved;
//! each a little-endian u32 after the magic) followed by `width * height`
//! little-endian f32 depth values in row-major order.

use std::fs;
use std::path::{Path, PathBuf};

use super::{DataError, Result};
use crate::encoders::{RenderedImage, IMAGE_SIZE, VIEW_COUNT};

pub const GT_FILE: &str = "gt.xyz";
pub const PARTIAL_FILE: &str = "partial.xyz";
pub const SPLITS_DIR: &str = "splits";
pub const IMG_MAGIC: [u8; 4] = *b"MMCD";
pub const IMG_HEADER_LEN: usize = 16;

pub fn render_file_name(view: usize) -> String {
    format!("render_{view:02}.img")
}

pub fn split_path(root: &Path, name: &str) -> PathBuf {
    root.join(SPLITS_DIR).join(format!("{name}.txt"))
}

/// A model directory found under a dataset root.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ModelEntry {
    pub model_id: String,
    pub category: String,
    pub dir: PathBuf,
}

impl ModelEntry {
    pub fn render_path(&self, view: usize) -> PathBuf {
        self.dir.join(render_file_name(view))
    }

    pub fn render_paths(&self) -> Vec<PathBuf> {
        (0..VIEW_COUNT).map(|v| self.render_path(v)).collect()
    }
}

fn sorted_dirs(path: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut dirs = Vec::new();
    for entry in fs::read_dir(path).map_err(|e| DataError::io(path, e))? {
        let entry = entry.map_err(|e| DataError::io(path, e))?;
        if entry.file_type().map_err(|e| DataError::io(path, e))?.is_dir() {
            if let Some(name) = entry.file_name().to_str() {
                dirs.push((name.to_string(), entry.path()));
            }
        }
    }
    dirs.sort();
    Ok(dirs)
}

/// Every `{category}/{model_id}` directory, sorted by model id then category.
pub fn scan_models(root: &Path) -> Result<Vec<ModelEntry>> {
    if !root.is_dir() {
        return Err(DataError::MissingRoot(root.to_path_buf()));
    }
    let mut models = Vec::new();
    for (category, cat_dir) in sorted_dirs(root)? {
        if category == SPLITS_DIR || category.starts_with('.') {
            continue;
        }
        for (model_id, dir) in sorted_dirs(&cat_dir)? {
            models.push(ModelEntry { model_id, category: category.clone(), dir });
        }
    }
    models.sort();
    Ok(models)
}

pub fn read_split(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).map(str::to_string).collect())
}

pub fn write_split(path: &Path, ids: &[String]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| DataError::io(parent, e))?;
    }
    let text: String = ids.iter().map(|id| format!("{id}\n")).collect();
    fs::write(path, text).map_err(|e| DataError::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl DepthImage {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(IMG_HEADER_LEN + 4 * self.data.len());
        out.extend_from_slice(&IMG_MAGIC);
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        if bytes.len() < IMG_HEADER_LEN || bytes[..4] != IMG_MAGIC {
            return Err("bad image header".into());
        }
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
        let (width, height) = (u32_at(4), u32_at(8));
        let body = &bytes[IMG_HEADER_LEN..];
        if body.len() != width * height * 4 {
            return Err(format!("expected {} data bytes for {width}x{height}, found {}", width * height * 4, body.len()));
        }
        let data = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Self { width, height, data })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| DataError::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|reason| DataError::Malformed { path: path.to_path_buf(), reason })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| DataError::io(path, e))
    }

    /// Gray image replicated over the encoder's channels, values clamped to [0, 1].
    pub fn to_rendered(&self, view_id: usize) -> std::result::Result<RenderedImage, String> {
        if self.width != IMAGE_SIZE || self.height != IMAGE_SIZE {
            return Err(format!("render is {}x{}, expected {IMAGE_SIZE}x{IMAGE_SIZE}", self.width, self.height));
        }
        let gray: Vec<f32> = self.data.iter().map(|v| if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 }).collect();
        RenderedImage::from_gray(&gray, view_id).map_err(|e| e.to_string())
    }
}

/// Reads one view of a model as encoder input.
pub fn load_render(path: &Path, view_id: usize) -> Result<RenderedImage> {
    DepthImage::read(path)?.to_rendered(view_id).map_err(|reason| DataError::Malformed { path: path.to_path_buf(), reason })
}
