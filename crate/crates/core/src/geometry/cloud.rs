use super::{GeometryError, Result};

pub type Point = [f64; 3];

/// An ordered, non-empty set of finite 3D points.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point>,
}

/// The affine map applied by [`PointCloud::normalize_unit`]: `p' = (p - center) / scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizeTransform {
    pub center: Point,
    pub scale: f64,
}

impl NormalizeTransform {
    pub fn apply(&self, p: &Point) -> Point {
        [
            (p[0] - self.center[0]) / self.scale,
            (p[1] - self.center[1]) / self.scale,
            (p[2] - self.center[2]) / self.scale,
        ]
    }

    pub fn apply_cloud(&self, cloud: &PointCloud) -> PointCloud {
        PointCloud {
            points: cloud.points.iter().map(|p| self.apply(p)).collect(),
        }
    }

    /// `p = p' * scale + center`.
    pub fn invert(&self, p: &Point) -> Point {
        [
            p[0] * self.scale + self.center[0],
            p[1] * self.scale + self.center[1],
            p[2] * self.scale + self.center[2],
        ]
    }

    pub fn invert_cloud(&self, cloud: &PointCloud) -> PointCloud {
        PointCloud {
            points: cloud.points.iter().map(|p| self.invert(p)).collect(),
        }
    }
}

pub(crate) fn check_points(points: &[Point]) -> Result<()> {
    if points.is_empty() {
        return Err(GeometryError::EmptyInput);
    }
    if let Some(i) = points.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
        return Err(GeometryError::InvalidInput(format!(
            "non-finite coordinate at point {i}"
        )));
    }
    Ok(())
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        check_points(&points)?;
        Ok(Self { points })
    }

    /// Builds a cloud from a flat `[x0, y0, z0, x1, ...]` buffer.
    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if flat.len() % 3 != 0 {
            return Err(GeometryError::InvalidInput(format!(
                "flat buffer length {} is not a multiple of 3",
                flat.len()
            )));
        }
        Self::new(flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false; kept for clippy's `len_without_is_empty`.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.points.iter().flatten().copied().collect()
    }

    /// Axis-aligned bounding box as `(min, max)`.
    pub fn bounds(&self) -> (Point, Point) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &self.points {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        (lo, hi)
    }

    /// Transform that centers the bounding box at the origin and makes the
    /// largest half-extent 1.
    pub fn unit_transform(&self) -> Result<NormalizeTransform> {
        let (lo, hi) = self.bounds();
        let center = [
            0.5 * (lo[0] + hi[0]),
            0.5 * (lo[1] + hi[1]),
            0.5 * (lo[2] + hi[2]),
        ];
        let scale = (0..3).map(|a| 0.5 * (hi[a] - lo[a])).fold(0.0, f64::max);
        if scale <= 0.0 {
            return Err(GeometryError::DegenerateGeometry);
        }
        Ok(NormalizeTransform { center, scale })
    }

    pub fn normalize_unit(&self) -> Result<PointCloud> {
        Ok(self.unit_transform()?.apply_cloud(self))
    }

    /// Applies `p -> R p + t` with a row-major 3x3 matrix.
    pub fn transformed(&self, rotation: &[[f64; 3]; 3], translation: Point) -> PointCloud {
        let points = self
            .points
            .iter()
            .map(|p| {
                let mut q = translation;
                for (r, row) in rotation.iter().enumerate() {
                    q[r] += row[0] * p[0] + row[1] * p[1] + row[2] * p[2];
                }
                q
            })
            .collect();
        PointCloud { points }
    }

    pub fn scaled(&self, s: f64) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| [p[0] * s, p[1] * s, p[2] * s]).collect(),
        }
    }
}
