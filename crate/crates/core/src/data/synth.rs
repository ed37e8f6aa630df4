//! Procedural stand-in dataset: box and cylinder assemblies, half-space
//! crops as partial scans and orthographic depth renders.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::layout::{render_file_name, split_path, write_split, DepthImage, ModelEntry, GT_FILE, PARTIAL_FILE};
use super::loader::GT_POINTS;
use super::split::{SplitSpec, Subset};
use super::{DataError, Result};
use crate::encoders::{IMAGE_SIZE, VIEW_COUNT};
use crate::geometry::{write_xyz, Point, PointCloud};
use crate::rng::seeded_rng;

/// Categories with a dedicated procedural model; others get a generic assembly.
pub const SYNTH_CATEGORIES: &[&str] = &["chair", "table", "lamp", "airplane"];

/// Elevation of every rendered view, in degrees.
const ELEVATION_DEG: f64 = 20.0;
const SPLAT_RADIUS: isize = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Primitive {
    Box { center: Point, half: [f64; 3] },
    /// Axis-aligned along `axis` (0 = x, 1 = y, 2 = z).
    Cylinder { center: Point, axis: usize, radius: f64, half_len: f64 },
}

impl Primitive {
    fn area(&self) -> f64 {
        match *self {
            Primitive::Box { half: h, .. } => 8.0 * (h[0] * h[1] + h[1] * h[2] + h[0] * h[2]),
            Primitive::Cylinder { radius, half_len, .. } => 2.0 * PI * radius * (2.0 * half_len) + 2.0 * PI * radius * radius,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Point {
        match *self {
            Primitive::Box { center, half: h } => {
                let faces = [h[1] * h[2], h[0] * h[2], h[0] * h[1]];
                let mut pick = rng.random_range(0.0..faces.iter().sum::<f64>());
                let mut axis = 2;
                for (a, f) in faces.iter().enumerate() {
                    if pick < *f {
                        axis = a;
                        break;
                    }
                    pick -= f;
                }
                let mut p = [0.0; 3];
                for (k, pk) in p.iter_mut().enumerate() {
                    *pk = if k == axis {
                        if rng.random_bool(0.5) { h[k] } else { -h[k] }
                    } else {
                        rng.random_range(-h[k]..=h[k])
                    };
                }
                [center[0] + p[0], center[1] + p[1], center[2] + p[2]]
            }
            Primitive::Cylinder { center, axis, radius, half_len } => {
                let lateral = 2.0 * radius * half_len * 2.0;
                let caps = 2.0 * radius * radius;
                let theta = rng.random_range(0.0..2.0 * PI);
                let (r, t) = if rng.random_range(0.0..lateral + caps) < lateral {
                    (radius, rng.random_range(-half_len..=half_len))
                } else {
                    let t = if rng.random_bool(0.5) { half_len } else { -half_len };
                    (radius * rng.random::<f64>().sqrt(), t)
                };
                let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
                let mut p = center;
                p[axis] += t;
                p[u] += r * theta.cos();
                p[v] += r * theta.sin();
                p
            }
        }
    }
}

fn bx(center: Point, half: [f64; 3]) -> Primitive {
    Primitive::Box { center, half }
}

fn cyl(center: Point, axis: usize, radius: f64, half_len: f64) -> Primitive {
    Primitive::Cylinder { center, axis, radius, half_len }
}

/// Random parts for one shape of `category`, y up.
pub fn synth_shape(category: &str, rng: &mut ChaCha8Rng) -> Vec<Primitive> {
    let mut parts = Vec::new();
    match category {
        "chair" => {
            let (w, d, h) = (rng.random_range(0.35..0.5), rng.random_range(0.35..0.5), rng.random_range(0.4..0.5));
            let r = rng.random_range(0.025..0.05);
            parts.push(bx([0.0, h, 0.0], [w, 0.04, d]));
            let back = rng.random_range(0.4..0.7);
            parts.push(bx([0.0, h + back / 2.0, -d + 0.03], [w, back / 2.0, 0.03]));
            for (sx, sz) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                parts.push(cyl([sx * (w - r), h / 2.0, sz * (d - r)], 1, r, h / 2.0));
            }
            if rng.random_bool(0.5) {
                for sx in [1.0, -1.0] {
                    parts.push(bx([sx * w, h + 0.2, 0.0], [0.03, 0.02, d]));
                    parts.push(bx([sx * w, h + 0.1, d - 0.03], [0.02, 0.1, 0.02]));
                }
            }
        }
        "table" => {
            let (w, d, h) = (rng.random_range(0.5..0.9), rng.random_range(0.3..0.6), rng.random_range(0.5..0.8));
            parts.push(bx([0.0, h, 0.0], [w, 0.04, d]));
            if rng.random_bool(0.7) {
                let l = rng.random_range(0.03..0.06);
                for (sx, sz) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                    parts.push(bx([sx * (w - l), h / 2.0, sz * (d - l)], [l, h / 2.0, l]));
                }
            } else {
                parts.push(cyl([0.0, h / 2.0, 0.0], 1, rng.random_range(0.05..0.1), h / 2.0));
                parts.push(cyl([0.0, 0.02, 0.0], 1, rng.random_range(0.25..0.4), 0.02));
            }
            if rng.random_bool(0.3) {
                parts.push(bx([0.0, h - 0.1, 0.0], [w * 0.5, 0.06, d * 0.8]));
            }
        }
        "lamp" => {
            let base = rng.random_range(0.15..0.3);
            let stem = rng.random_range(0.5..0.9);
            parts.push(cyl([0.0, 0.03, 0.0], 1, base, 0.03));
            parts.push(cyl([0.0, 0.06 + stem / 2.0, 0.0], 1, 0.02, stem / 2.0));
            let shade = rng.random_range(0.1..0.2);
            parts.push(cyl([0.0, 0.06 + stem, 0.0], 1, rng.random_range(0.15..0.3), shade));
        }
        "airplane" => {
            let len = rng.random_range(0.6..0.9);
            let r = rng.random_range(0.08..0.12);
            parts.push(cyl([0.0, 0.0, 0.0], 2, r, len));
            let span = rng.random_range(0.6..1.0);
            let chord = rng.random_range(0.12..0.2);
            parts.push(bx([0.0, 0.0, 0.1], [span, 0.015, chord]));
            parts.push(bx([0.0, 0.0, -len + 0.08], [span * 0.35, 0.01, 0.07]));
            parts.push(bx([0.0, r + 0.1, -len + 0.08], [0.01, 0.1, 0.07]));
            if rng.random_bool(0.6) {
                for sx in [1.0, -1.0] {
                    parts.push(cyl([sx * span * 0.45, -0.07, 0.15], 2, 0.04, 0.1));
                }
            }
        }
        _ => {
            let h = [rng.random_range(0.2..0.6), rng.random_range(0.2..0.6), rng.random_range(0.2..0.6)];
            parts.push(bx([0.0; 3], h));
            for _ in 0..rng.random_range(1..=3) {
                let axis = rng.random_range(0..3);
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let small = [rng.random_range(0.05..0.2), rng.random_range(0.05..0.2), rng.random_range(0.05..0.2)];
                let mut c = [rng.random_range(-h[0]..h[0]), rng.random_range(-h[1]..h[1]), rng.random_range(-h[2]..h[2])];
                c[axis] = sign * (h[axis] + small[axis]);
                parts.push(bx(c, small));
            }
        }
    }
    parts
}

/// Area-weighted uniform samples over the union of part surfaces.
pub fn sample_surface(parts: &[Primitive], count: usize, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let areas: Vec<f64> = parts.iter().map(Primitive::area).collect();
    let total: f64 = areas.iter().sum();
    (0..count)
        .map(|_| {
            let mut pick = rng.random_range(0.0..total);
            let mut idx = parts.len() - 1;
            for (i, a) in areas.iter().enumerate() {
                if pick < *a {
                    idx = i;
                    break;
                }
                pick -= a;
            }
            parts[idx].sample(rng)
        })
        .collect()
}

/// Indices kept after removing a random 25-50% of points lying furthest
/// along a random direction. Kept indices are in increasing order.
pub fn crop_half_space(points: &[Point], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let z: f64 = rng.random_range(-1.0..1.0);
    let phi = rng.random_range(0.0..2.0 * PI);
    let s = (1.0 - z * z).sqrt();
    let dir = [s * phi.cos(), s * phi.sin(), z];
    let n = points.len();
    let remove = ((rng.random_range(0.25..=0.5) * n as f64) as usize).clamp(n / 4, n / 2);
    let mut order: Vec<(f64, usize)> = points.iter().enumerate().map(|(i, p)| (p[0] * dir[0] + p[1] * dir[1] + p[2] * dir[2], i)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut keep: Vec<usize> = order[..n - remove].iter().map(|&(_, i)| i).collect();
    keep.sort_unstable();
    keep
}

/// Orthographic depth image of a cloud inside the cube `[-1, 1]^3`, seen from
/// azimuth `15 * view` degrees. Pixels hold nearness in [0.1, 1], background 0.
pub fn render_depth(points: &[Point], view: usize) -> DepthImage {
    let az = (view as f64 * 360.0 / VIEW_COUNT as f64).to_radians();
    let el = ELEVATION_DEG.to_radians();
    let (ca, sa, ce, se) = (az.cos(), az.sin(), el.cos(), el.sin());
    let size = IMAGE_SIZE as isize;
    let half = IMAGE_SIZE as f64 / 2.0;
    // Fit the cube's circumscribed sphere so no view clips a corner.
    let radius = 3f64.sqrt();
    let scale = 0.95 * half / radius;
    let mut data = vec![0.0f32; IMAGE_SIZE * IMAGE_SIZE];
    for p in points {
        let x = p[0] * ca + p[2] * sa;
        let z1 = -p[0] * sa + p[2] * ca;
        let y = p[1] * ce - z1 * se;
        let z = p[1] * se + z1 * ce;
        let near = (0.1 + 0.9 * ((z / radius).clamp(-1.0, 1.0) + 1.0) / 2.0) as f32;
        let px = (half - 0.5 + x * scale).round() as isize;
        let py = (half - 0.5 - y * scale).round() as isize;
        for dy in -SPLAT_RADIUS..=SPLAT_RADIUS {
            for dx in -SPLAT_RADIUS..=SPLAT_RADIUS {
                let (u, v) = (px + dx, py + dy);
                if (0..size).contains(&u) && (0..size).contains(&v) {
                    let cell = &mut data[v as usize * IMAGE_SIZE + u as usize];
                    *cell = cell.max(near);
                }
            }
        }
    }
    DepthImage { width: IMAGE_SIZE, height: IMAGE_SIZE, data }
}

/// Writes `n_models` shapes per category under `root` and split files
/// `all`, `train` and `heldout`. Output bytes depend only on the arguments.
pub fn synth_generate(root: &Path, n_models: usize, categories: &[&str], seed: u64) -> Result<Vec<ModelEntry>> {
    if categories.is_empty() || n_models == 0 {
        return Err(DataError::InvalidArgument("need at least one category and one model".into()));
    }
    let mut models = Vec::new();
    for category in categories {
        for i in 0..n_models {
            let model_id = format!("{category}-{seed}-{i:04}");
            let dir = root.join(category).join(&model_id);
            fs::create_dir_all(&dir).map_err(|e| DataError::io(&dir, e))?;
            let mut rng = seeded_rng(seed, "synth", model_id.as_bytes());
            let parts = synth_shape(category, &mut rng);
            let raw = PointCloud::new(sample_surface(&parts, GT_POINTS, &mut rng)).expect("samples are finite");
            let gt = raw.normalize_unit().map_err(|e| DataError::InvalidArgument(e.to_string()))?;
            let keep = crop_half_space(gt.points(), &mut rng);
            let partial = PointCloud::new(keep.iter().map(|&i| gt.points()[i]).collect()).expect("crop keeps points");
            let write = |name: &str, cloud: &PointCloud| {
                let path = dir.join(name);
                write_xyz(&path, cloud).map_err(|e| DataError::io(&path, e))
            };
            write(GT_FILE, &gt)?;
            write(PARTIAL_FILE, &partial)?;
            for view in 0..VIEW_COUNT {
                render_depth(gt.points(), view).write(&dir.join(render_file_name(view)))?;
            }
            models.push(ModelEntry { model_id, category: category.to_string(), dir });
        }
    }
    models.sort();
    let ids = |v: &[ModelEntry]| v.iter().map(|m| m.model_id.clone()).collect::<Vec<_>>();
    write_split(&split_path(root, "all"), &ids(&models))?;
    let split = SplitSpec::default();
    write_split(&split_path(root, "train"), &ids(&split.select(&models, Subset::Train)))?;
    write_split(&split_path(root, "heldout"), &ids(&split.select(&models, Subset::Heldout)))?;
    Ok(models)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use sha2::{Digest, Sha256};

    use super::*;
    use crate::geometry::read_xyz;

    fn dir_hash(root: &Path) -> String {
        let mut files = Vec::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(d) = stack.pop() {
            for e in fs::read_dir(&d).unwrap() {
                let p = e.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    files.push(p);
                }
            }
        }
        files.sort();
        let mut h = Sha256::new();
        for f in files {
            h.update(f.strip_prefix(root).unwrap().to_string_lossy().as_bytes());
            h.update(fs::read(&f).unwrap());
        }
        hex::encode(h.finalize())
    }

    #[test]
    fn generation_is_byte_identical() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        synth_generate(a.path(), 4, &["chair"], 3).unwrap();
        synth_generate(b.path(), 4, &["chair"], 3).unwrap();
        assert_eq!(dir_hash(a.path()), dir_hash(b.path()));
        let c = tempfile::tempdir().unwrap();
        synth_generate(c.path(), 4, &["chair"], 4).unwrap();
        assert_ne!(dir_hash(a.path()), dir_hash(c.path()));
    }

    #[test]
    fn clouds_meet_size_and_subset_contracts() {
        let dir = tempfile::tempdir().unwrap();
        let models = synth_generate(dir.path(), 2, &["chair", "table", "lamp", "airplane", "sofa"], 1).unwrap();
        assert_eq!(models.len(), 10);
        for m in &models {
            let gt = read_xyz(m.dir.join(GT_FILE)).unwrap();
            let partial = read_xyz(m.dir.join(PARTIAL_FILE)).unwrap();
            assert_eq!(gt.len(), 2048);
            assert!((1024..=1536).contains(&partial.len()), "{}", partial.len());
            let gt_set: std::collections::HashSet<[u64; 3]> = gt.points().iter().map(|p| p.map(f64::to_bits)).collect();
            assert!(partial.points().iter().all(|p| gt_set.contains(&p.map(f64::to_bits))));
            let extent = gt.points().iter().flat_map(|p| p.map(f64::abs)).fold(0.0, f64::max);
            assert!((extent - 1.0).abs() < 1e-12);
            let img = DepthImage::read(&m.dir.join(render_file_name(5))).unwrap();
            assert_eq!((img.width, img.height), (224, 224));
            assert!(img.data.iter().any(|v| *v > 0.0));
            assert!(img.data.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn crop_removes_a_quarter_to_a_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pts: Vec<Point> = (0..2048).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
        for s in 0..50 {
            let keep = crop_half_space(&pts, &mut ChaCha8Rng::seed_from_u64(s));
            assert!((1024..=1536).contains(&keep.len()));
            assert!(keep.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn views_differ_by_azimuth() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = sample_surface(&synth_shape("chair", &mut rng), 2048, &mut rng);
        let cloud = PointCloud::new(pts).unwrap().normalize_unit().unwrap();
        let a = render_depth(cloud.points(), 0);
        let b = render_depth(cloud.points(), 6);
        assert_ne!(a, b);
        assert_eq!(a, render_depth(cloud.points(), 0));
    }
}
