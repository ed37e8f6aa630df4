use super::cloud::{check_points, Point};
use super::kdtree::KdTree;
use super::{GeometryError, Result};

/// Default F-Score threshold, a Euclidean distance on unit-normalized clouds.
pub const DEFAULT_FSCORE_TAU: f64 = 0.001;

#[inline]
pub fn sq_dist(a: &Point, b: &Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// For every point of `a`, the squared distance to its nearest point in `b`.
pub fn nn_sq_dists(a: &[Point], b: &[Point]) -> Result<Vec<f64>> {
    Ok(nearest(a, b)?.into_iter().map(|(d, _)| d).collect())
}

fn nearest(a: &[Point], b: &[Point]) -> Result<Vec<(f64, usize)>> {
    if a.is_empty() || b.is_empty() {
        return Err(GeometryError::EmptyInput);
    }
    let tree = KdTree::new(b);
    Ok(a.iter()
        .map(|p| tree.nearest(p).expect("tree is non-empty"))
        .collect())
}

/// Symmetric Chamfer distance: the mean nearest squared distance from
/// `pred` to `gt` plus the mean nearest squared distance from `gt` to `pred`.
pub fn chamfer_distance(pred: &[Point], gt: &[Point]) -> Result<f64> {
    check_points(pred)?;
    check_points(gt)?;
    let forward: f64 = nn_sq_dists(pred, gt)?.iter().sum();
    let backward: f64 = nn_sq_dists(gt, pred)?.iter().sum();
    Ok(forward / pred.len() as f64 + backward / gt.len() as f64)
}

/// Chamfer distance together with its gradient with respect to `pred`.
///
/// The gradient is exact wherever every nearest-neighbour assignment is unique.
pub fn chamfer_with_grad(pred: &[Point], gt: &[Point]) -> Result<(f64, Vec<Point>)> {
    check_points(pred)?;
    check_points(gt)?;
    let n = pred.len() as f64;
    let m = gt.len() as f64;
    let mut grad = vec![[0.0; 3]; pred.len()];
    let mut forward = 0.0;
    for (i, (d, j)) in nearest(pred, gt)?.into_iter().enumerate() {
        forward += d;
        for a in 0..3 {
            grad[i][a] += 2.0 * (pred[i][a] - gt[j][a]) / n;
        }
    }
    let mut backward = 0.0;
    for (j, (d, i)) in nearest(gt, pred)?.into_iter().enumerate() {
        backward += d;
        for a in 0..3 {
            grad[i][a] += 2.0 * (pred[i][a] - gt[j][a]) / m;
        }
    }
    Ok((forward / n + backward / m, grad))
}

/// F-Score at Euclidean threshold `tau`: harmonic mean of the fraction of
/// predicted points within `tau` of the ground truth and vice versa.
pub fn fscore(pred: &[Point], gt: &[Point], tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(GeometryError::InvalidThreshold(tau));
    }
    check_points(pred)?;
    check_points(gt)?;
    let within = |d: &f64| d.sqrt() <= tau;
    let precision = nn_sq_dists(pred, gt)?.iter().filter(|d| within(d)).count() as f64 / pred.len() as f64;
    let recall = nn_sq_dists(gt, pred)?.iter().filter(|d| within(d)).count() as f64 / gt.len() as f64;
    if precision + recall == 0.0 {
        Ok(0.0)
    } else {
        Ok(2.0 * precision * recall / (precision + recall))
    }
}
