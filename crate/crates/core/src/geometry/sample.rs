use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::cloud::{Point, PointCloud};
use super::metrics::sq_dist;
use super::{GeometryError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResampleMethod {
    /// Seeded uniform subset.
    Random,
    /// Greedy farthest-point subset starting from `start`.
    FarthestPoint { start: usize },
}

/// Greedy farthest-point sampling. Ties go to the lowest index.
pub fn farthest_point_indices(points: &[Point], count: usize, start: usize) -> Vec<usize> {
    let n = points.len();
    let count = count.min(n);
    if count == 0 {
        return Vec::new();
    }
    let mut chosen = Vec::with_capacity(count);
    let mut dist = vec![f64::INFINITY; n];
    let mut current = start.min(n - 1);
    for _ in 0..count {
        chosen.push(current);
        let c = points[current];
        let mut best = (f64::NEG_INFINITY, 0usize);
        for (i, d) in dist.iter_mut().enumerate() {
            *d = d.min(sq_dist(&points[i], &c));
            if *d > best.0 {
                best = (*d, i);
            }
        }
        current = best.1;
    }
    chosen
}

/// Resizes a cloud to exactly `target` points.
///
/// Shrinking picks a subset; growing keeps every input point and appends
/// seeded draws with replacement.
pub fn resample(cloud: &PointCloud, target: usize, method: ResampleMethod, seed: u64) -> Result<PointCloud> {
    if target == 0 {
        return Err(GeometryError::InvalidArgument("target must be positive".into()));
    }
    let points = cloud.points();
    let n = points.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked: Vec<Point> = if target <= n {
        match method {
            ResampleMethod::Random => index::sample(&mut rng, n, target)
                .into_iter()
                .map(|i| points[i])
                .collect(),
            ResampleMethod::FarthestPoint { start } => farthest_point_indices(points, target, start)
                .into_iter()
                .map(|i| points[i])
                .collect(),
        }
    } else {
        let mut out = points.to_vec();
        out.extend((n..target).map(|_| points[rng.random_range(0..n)]));
        out
    };
    PointCloud::new(picked)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorted(mut v: Vec<Point>) -> Vec<Point> {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    fn seeded(n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointCloud::new(
            (0..n)
                .map(|_| [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()])
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn same_size_random_is_a_permutation() {
        let cloud = seeded(2048, 5);
        let out = resample(&cloud, 2048, ResampleMethod::Random, 11).unwrap();
        assert_eq!(sorted(out.into_points()), sorted(cloud.into_points()));
    }

    #[test]
    fn farthest_point_on_a_line_picks_endpoints() {
        let cloud = PointCloud::new(vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [3.0, 0.0, 0.0]]).unwrap();
        let out = resample(&cloud, 2, ResampleMethod::FarthestPoint { start: 0 }, 0).unwrap();
        assert_eq!(out.points(), &[[0.0, 0.0, 0.0], [3.0, 0.0, 0.0]]);
    }

    #[test]
    fn upsampling_only_repeats_members() {
        let cloud = seeded(100, 2);
        for method in [ResampleMethod::Random, ResampleMethod::FarthestPoint { start: 0 }] {
            let out = resample(&cloud, 256, method, 3).unwrap();
            assert_eq!(out.len(), 256);
            assert!(out.points().iter().all(|p| cloud.points().contains(p)));
        }
    }

    #[test]
    fn zero_target_is_rejected() {
        let cloud = seeded(4, 0);
        assert!(matches!(
            resample(&cloud, 0, ResampleMethod::Random, 0),
            Err(GeometryError::InvalidArgument(_))
        ));
    }

    #[test]
    fn resample_is_seed_deterministic() {
        let cloud = seeded(300, 8);
        let a = resample(&cloud, 100, ResampleMethod::Random, 42).unwrap();
        let b = resample(&cloud, 100, ResampleMethod::Random, 42).unwrap();
        assert_eq!(a, b);
    }
}
