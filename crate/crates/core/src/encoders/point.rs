//! Edge-convolution style encoder for partial point clouds.
//!
//! Token centres are chosen by farthest-point sampling over the
//! lexicographically sorted input (start index 0), so the result does not
//! depend on input order. Each token aggregates its `k` nearest input points:
//! edge features `[centre, neighbour - centre]` go through a shared MLP and
//! are max-pooled over the neighbourhood.

use ndarray::Array2;
use rand::Rng;

use super::{EncoderError, Result, TokenFeatures};
use crate::geometry::{farthest_point_indices, KdTree, Point, PointCloud};
use crate::nn::{Graph, Linear, Mlp, ParamStore, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PointEncoderConfig {
    pub channels: usize,
    pub tokens: usize,
    pub neighbors: usize,
    pub edge_hidden: usize,
}

impl Default for PointEncoderConfig {
    fn default() -> Self {
        Self { channels: 256, tokens: 128, neighbors: 16, edge_hidden: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PointEncoder {
    pub config: PointEncoderConfig,
    pub edge_mlp: Mlp,
    pub project: Linear,
}

/// Token centres and the edge-feature matrix (`tokens*k x 6`) for a cloud.
#[derive(Debug, Clone)]
pub struct PointNeighborhoods {
    pub centers: Vec<Point>,
    pub k: usize,
    pub edges: Array2<f64>,
}

impl PointEncoder {
    pub fn new(store: &mut ParamStore, name: &str, config: PointEncoderConfig, rng: &mut impl Rng) -> Self {
        let edge_mlp = Mlp::new(store, &format!("{name}.edge"), &[6, config.edge_hidden, config.channels], rng);
        let project = Linear::new(store, &format!("{name}.project"), config.channels, config.channels, rng);
        Self { config, edge_mlp, project }
    }

    pub fn neighborhoods(&self, cloud: &PointCloud) -> Result<PointNeighborhoods> {
        let tokens = self.config.tokens;
        if cloud.len() < tokens {
            return Err(EncoderError::InvalidInput(format!(
                "partial cloud has {} points, encoder needs at least {tokens}",
                cloud.len()
            )));
        }
        let mut sorted: Vec<Point> = cloud.points().to_vec();
        if sorted.iter().flatten().any(|v| !v.is_finite()) {
            return Err(EncoderError::InvalidInput("non-finite coordinate".into()));
        }
        sorted.sort_by(|a, b| {
            a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])).then(a[2].total_cmp(&b[2]))
        });
        let centers: Vec<Point> = farthest_point_indices(&sorted, tokens, 0)
            .into_iter()
            .map(|i| sorted[i])
            .collect();
        let k = self.config.neighbors.min(sorted.len()).max(1);
        let tree = KdTree::new(&sorted);
        let mut edges = Array2::zeros((tokens * k, 6));
        for (t, c) in centers.iter().enumerate() {
            for (j, (_, idx)) in tree.knn(c, k).into_iter().enumerate() {
                let p = sorted[idx];
                let mut row = edges.row_mut(t * k + j);
                for a in 0..3 {
                    row[a] = c[a];
                    row[3 + a] = p[a] - c[a];
                }
            }
        }
        Ok(PointNeighborhoods { centers, k, edges })
    }

    /// Records the encoder on `g`; returns `tokens x channels` features.
    pub fn forward(&self, g: &mut Graph, cloud: &PointCloud) -> Result<Var> {
        let hood = self.neighborhoods(cloud)?;
        let edges = g.constant(hood.edges);
        let h = self.edge_mlp.forward(g, edges);
        let h = g.gelu(h);
        let pooled = g.max_groups(h, hood.k);
        Ok(self.project.forward(g, pooled))
    }

    /// Standalone evaluation producing `channels x tokens` features.
    pub fn encode(&self, params: &ParamStore, cloud: &PointCloud) -> Result<TokenFeatures> {
        let mut g = Graph::new(params);
        let out = self.forward(&mut g, cloud)?;
        TokenFeatures::from_token_rows(g.value(out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy() -> (ParamStore, PointEncoder) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cfg = PointEncoderConfig { channels: 8, tokens: 4, neighbors: 16, edge_hidden: 8 };
        let enc = PointEncoder::new(&mut store, "points", cfg, &mut rng);
        (store, enc)
    }

    fn cloud(seed: u64, n: usize) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointCloud::new((0..n).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect()).unwrap()
    }

    #[test]
    fn output_shape_and_determinism() {
        let (store, enc) = toy();
        let c = cloud(1, 64);
        let a = enc.encode(&store, &c).unwrap();
        assert_eq!((a.channels(), a.tokens()), (8, 4));
        assert_eq!(a, enc.encode(&store, &c).unwrap());
    }

    #[test]
    fn input_order_does_not_matter() {
        let (store, enc) = toy();
        let c = cloud(2, 64);
        let mut pts = c.points().to_vec();
        pts.shuffle(&mut ChaCha8Rng::seed_from_u64(3));
        let shuffled = PointCloud::new(pts).unwrap();
        assert_eq!(enc.encode(&store, &c).unwrap(), enc.encode(&store, &shuffled).unwrap());
    }

    #[test]
    fn translation_changes_features() {
        let (store, enc) = toy();
        let c = cloud(4, 64);
        let moved = c.transformed(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], [0.5, -0.25, 0.1]);
        assert_ne!(enc.encode(&store, &c).unwrap(), enc.encode(&store, &moved).unwrap());
    }

    #[test]
    fn too_few_points_is_an_error() {
        let (store, enc) = toy();
        assert!(matches!(enc.encode(&store, &cloud(5, 3)), Err(EncoderError::InvalidInput(_))));
    }
}
