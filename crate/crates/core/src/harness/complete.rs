use std::path::{Path, PathBuf};

use crate::data::{DepthImage, IMG_MAGIC};
use crate::encoders::{build_embedder, build_prompt, free_prompt, EmbedderConfig, RenderedImage, TextPrompt, IMAGE_SIZE};
use crate::fusion::{Checkpoint, CompletionModel};
use crate::geometry::{read_xyz, write_xyz, PointCloud};

use super::train::checkpoint_train_config;
use super::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CompleteRequest {
    pub checkpoint: PathBuf,
    pub partial: PathBuf,
    pub image: PathBuf,
    /// Full prompt text. Without it the category template is used.
    pub prompt: Option<String>,
    pub category: Option<String>,
    pub out: PathBuf,
    /// Overrides the embedder recorded in the checkpoint.
    pub embedder: Option<EmbedderConfig>,
}

/// The prompt for a request: the given text, else `"This is a {category}"`.
/// A model without text fusion never reads it, so it may then be omitted.
pub fn resolve_prompt(prompt: Option<&str>, category: Option<&str>, uses_text: bool) -> Result<TextPrompt> {
    match (prompt, category) {
        (Some(p), c) => Ok(free_prompt(c.unwrap_or(""), p)?),
        (None, Some(c)) => Ok(build_prompt(c, None)?),
        (None, None) if uses_text => Err(HarnessError::Invalid("the model reads a text prompt; give a prompt or a category".into())),
        (None, None) => Ok(build_prompt("object", None)?),
    }
}

fn parse_netpbm(bytes: &[u8]) -> std::result::Result<(usize, usize, usize, Vec<u8>), String> {
    let mut fields = Vec::new();
    let mut i = 0;
    while fields.len() < 4 {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err("truncated header".into());
        }
        fields.push(std::str::from_utf8(&bytes[start..i]).map_err(|_| "bad header")?.to_string());
    }
    let channels = match fields[0].as_str() {
        "P5" => 1,
        "P6" => 3,
        other => return Err(format!("unsupported netpbm type {other}")),
    };
    let num = |s: &str| s.parse::<usize>().map_err(|_| format!("bad header field {s:?}"));
    let (w, h, max) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if max == 0 || max > 255 {
        return Err("only 8-bit images are supported".into());
    }
    let body = bytes.get(i + 1..).unwrap_or(&[]);
    if body.len() != w * h * channels {
        return Err(format!("expected {} pixel bytes, found {}", w * h * channels, body.len()));
    }
    Ok((w, h, channels, body.iter().map(|&b| ((b as usize * 255) / max).min(255) as u8).collect()))
}

/// Converts interleaved 8-bit pixels (`channels` 1 or 3) into a view-0 image.
pub fn image_from_bytes(width: usize, height: usize, channels: usize, data: &[u8]) -> Result<RenderedImage> {
    if width != IMAGE_SIZE || height != IMAGE_SIZE {
        return Err(HarnessError::Invalid(format!("image is {width}x{height}, expected {IMAGE_SIZE}x{IMAGE_SIZE}")));
    }
    let hw = width * height;
    let pixels: Vec<f32> = (0..3).flat_map(|c| (0..hw).map(move |p| (c, p))).map(|(c, p)| {
        let ch = if channels == 1 { 0 } else { c };
        data[p * channels + ch] as f32 / 255.0
    }).collect();
    Ok(RenderedImage::new(pixels, 0)?)
}

/// Reads a depth render (`.img`) or a binary PGM/PPM, both 224x224.
pub fn read_image(path: &Path) -> Result<RenderedImage> {
    let bytes = std::fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    let malformed = |reason: String| HarnessError::io(path, reason);
    if bytes.starts_with(&IMG_MAGIC) {
        let depth = DepthImage::from_bytes(&bytes).map_err(malformed)?;
        return depth.to_rendered(0).map_err(malformed);
    }
    if bytes.starts_with(b"P5") || bytes.starts_with(b"P6") {
        let (w, h, c, data) = parse_netpbm(&bytes).map_err(malformed)?;
        return image_from_bytes(w, h, c, &data);
    }
    Err(malformed("unrecognised image format (expected a depth render, PGM or PPM)".into()))
}

fn require_files(paths: &[&Path]) -> Result<()> {
    match paths.iter().find(|p| !p.is_file()) {
        Some(p) => Err(HarnessError::FileNotFound(p.to_path_buf())),
        None => Ok(()),
    }
}

/// Completes one partial cloud. The partial is normalised by its own
/// bounding box and the prediction mapped back to the input frame.
pub fn complete(request: &CompleteRequest) -> Result<PointCloud> {
    require_files(&[&request.checkpoint, &request.partial, &request.image])?;
    let image = read_image(&request.image)?;
    complete_with_image(request, image)
}

/// As [`complete`] with the image already decoded; `request.image` is ignored.
pub fn complete_with_image(request: &CompleteRequest, image: RenderedImage) -> Result<PointCloud> {
    require_files(&[&request.checkpoint, &request.partial])?;
    let ck = Checkpoint::load(&request.checkpoint)?;
    let model = CompletionModel::from_checkpoint(&ck, None)?;
    let f = &model.config.fusion;
    let uses_text = f.use_text_global && (f.stage1_active() || f.stage2_active());
    let prompt = resolve_prompt(request.prompt.as_deref(), request.category.as_deref(), uses_text)?;
    let embedder_config = request
        .embedder
        .clone()
        .or_else(|| checkpoint_train_config(&ck).map(|c| c.embedder))
        .unwrap_or_default();
    let embedder = build_embedder(&embedder_config)?;

    let partial = read_xyz(&request.partial)?;
    let t = partial.unit_transform()?;
    let pred = model.forward(&t.apply_cloud(&partial), &image, &prompt, embedder.as_ref())?;
    let completed = t.invert_cloud(&pred);

    let mut tmp = request.out.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    write_xyz(&tmp, &completed)?;
    std::fs::rename(&tmp, &request.out).map_err(|e| HarnessError::io(&request.out, e))?;
    Ok(completed)
}

/// An 8-bit RGB raster, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Plot {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<u8>,
}

impl Plot {
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.rgb);
        out
    }
}

/// Front (x, y), top (x, z) and side (z, y) orthographic scatter plots side
/// by side, each `panel` pixels square. Nearer points are drawn darker.
pub fn scatter_plot(cloud: &PointCloud, panel: usize) -> Plot {
    let panel = panel.max(16);
    let (width, height) = (3 * panel + 2, panel);
    let mut rgb = vec![255u8; width * height * 3];
    for x in [panel, 2 * panel + 1] {
        for y in 0..height {
            rgb[(y * width + x) * 3..][..3].copy_from_slice(&[200, 200, 200]);
        }
    }
    let norm = cloud.normalize_unit().unwrap_or_else(|_| cloud.clone());
    let views: [(usize, usize, usize); 3] = [(0, 1, 2), (0, 2, 1), (2, 1, 0)];
    let to_px = |v: f64| (((v + 1.1) / 2.2).clamp(0.0, 1.0) * (panel - 1) as f64).round() as usize;
    for (k, &(u, v, w)) in views.iter().enumerate() {
        let x0 = k * (panel + 1);
        // Far points first so near ones are drawn on top.
        let mut pts: Vec<_> = norm.points().iter().collect();
        pts.sort_by(|a, b| a[w].total_cmp(&b[w]));
        for p in pts {
            let shade = (40.0 + 150.0 * (1.0 - (p[w] + 1.0) / 2.0).clamp(0.0, 1.0)) as u8;
            let (px, py) = (x0 + to_px(p[u]), panel - 1 - to_px(p[v]));
            for dy in 0..2 {
                for dx in 0..2 {
                    let (x, y) = (px + dx, py + dy);
                    if x < x0 + panel && y < height {
                        rgb[(y * width + x) * 3..][..3].copy_from_slice(&[shade, shade, shade.saturating_add(40)]);
                    }
                }
            }
        }
    }
    Plot { width, height, rgb }
}
