use rand::Rng;

use super::graph::{Graph, Var};
use super::params::{ParamId, ParamStore};

/// Row-wise affine map `x W + b`, `W` of shape `in x out`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let weight = store.add_uniform(format!("{name}.weight"), in_dim, out_dim, in_dim, rng);
        let bias = store.add_uniform(format!("{name}.bias"), 1, out_dim, in_dim, rng);
        Self { weight, bias, in_dim, out_dim }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        let y = g.matmul(x, w);
        g.add_bias(y, b)
    }
}

/// Shared pointwise MLP: linear layers with GELU between them, none after the last.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    pub fn new(store: &mut ParamStore, name: &str, widths: &[usize], rng: &mut impl Rng) -> Self {
        assert!(widths.len() >= 2, "an MLP needs input and output widths");
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, &format!("{name}.{i}"), w[0], w[1], rng))
            .collect();
        Self { layers }
    }

    pub fn forward(&self, g: &mut Graph, mut x: Var) -> Var {
        for (i, layer) in self.layers.iter().enumerate() {
            if i > 0 {
                x = g.gelu(x);
            }
            x = layer.forward(g, x);
        }
        x
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }
}

/// Multi-head scaled dot-product attention with a residual connection,
/// followed by a residual pointwise feed-forward sublayer.
///
/// Rows are tokens, columns are channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionBlock {
    pub heads: usize,
    pub channels: usize,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub feed_forward: Mlp,
}

impl AttentionBlock {
    /// Panics if `channels` is not divisible by `heads`; configs are validated before this.
    pub fn new(store: &mut ParamStore, name: &str, channels: usize, heads: usize, ff_hidden: usize, rng: &mut impl Rng) -> Self {
        assert!(heads > 0 && channels % heads == 0, "channels must be divisible by heads");
        Self {
            heads,
            channels,
            query: Linear::new(store, &format!("{name}.query"), channels, channels, rng),
            key: Linear::new(store, &format!("{name}.key"), channels, channels, rng),
            value: Linear::new(store, &format!("{name}.value"), channels, channels, rng),
            output: Linear::new(store, &format!("{name}.output"), channels, channels, rng),
            feed_forward: Mlp::new(store, &format!("{name}.ff"), &[channels, ff_hidden, channels], rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, queries: Var, keys_values: Var) -> Var {
        let head_dim = self.channels / self.heads;
        let q = self.query.forward(g, queries);
        let k = self.key.forward(g, keys_values);
        let v = self.value.forward(g, keys_values);
        let scale = 1.0 / (head_dim as f64).sqrt();
        let mut heads = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = g.slice_cols(q, h * head_dim, head_dim);
            let kh = g.slice_cols(k, h * head_dim, head_dim);
            let vh = g.slice_cols(v, h * head_dim, head_dim);
            let kt = g.transpose(kh);
            let scores = g.matmul(qh, kt);
            let scores = g.scale(scores, scale);
            let attn = g.softmax_rows(scores);
            heads.push(g.matmul(attn, vh));
        }
        let merged = if heads.len() == 1 { heads[0] } else { g.concat_cols(&heads) };
        let attended = self.output.forward(g, merged);
        let x = g.add(queries, attended);
        let ff = self.feed_forward.forward(g, x);
        g.add(x, ff)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Mat;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
        Mat::from_shape_simple_fn((r, c), || rng.random_range(-1.0..1.0))
    }

    /// Checks d(sum(out * seed))/dW for every parameter against central differences.
    fn check_weights(store: &ParamStore, out_shape: (usize, usize), run: impl Fn(&mut Graph) -> Var) {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let seed = random(&mut rng, out_shape.0, out_shape.1);
        let mut g = Graph::new(store);
        let out = run(&mut g);
        let grads = g.backward_from(out, seed.clone());
        let objective = |s: &ParamStore| {
            let mut g = Graph::new(s);
            let out = run(&mut g);
            (g.value(out) * &seed).sum()
        };
        let h = 1e-6;
        for id in store.ids() {
            let (rows, cols) = store.value(id).dim();
            for (r, c) in [(0, 0), (rows - 1, cols - 1), (rows / 2, cols / 2)] {
                let mut plus = store.clone();
                plus.value_mut(id)[[r, c]] += h;
                let mut minus = store.clone();
                minus.value_mut(id)[[r, c]] -= h;
                let numeric = (objective(&plus) - objective(&minus)) / (2.0 * h);
                let analytic = grads.get(id)[[r, c]];
                let tol = 1e-4 * numeric.abs().max(analytic.abs()) + 1e-8;
                assert!((numeric - analytic).abs() <= tol, "{} [{r},{c}]: {analytic} vs {numeric}", store.name(id));
            }
        }
    }

    #[test]
    fn linear_and_mlp_shapes() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mlp = Mlp::new(&mut store, "m", &[3, 5, 2], &mut rng);
        assert_eq!(mlp.out_dim(), 2);
        assert_eq!(store.value(mlp.layers[0].weight).dim(), (3, 5));
        assert_eq!(store.value(mlp.layers[1].bias).dim(), (1, 2));
        let mut g = Graph::new(&store);
        let x = g.constant(random(&mut rng, 4, 3));
        let y = mlp.forward(&mut g, x);
        assert_eq!(g.value(y).dim(), (4, 2));
    }

    #[test]
    fn mlp_weight_gradients() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mlp = Mlp::new(&mut store, "m", &[3, 6, 4, 2], &mut rng);
        let x = random(&mut rng, 5, 3);
        check_weights(&store, (5, 2), |g| {
            let x = g.constant(x.clone());
            mlp.forward(g, x)
        });
    }

    #[test]
    fn attention_weight_gradients() {
        for heads in [1, 2, 4] {
            let mut store = ParamStore::new();
            let mut rng = ChaCha8Rng::seed_from_u64(3 + heads as u64);
            let blk = AttentionBlock::new(&mut store, "a", 8, heads, 6, &mut rng);
            // Scale inputs so attention is far from uniform.
            let q = random(&mut rng, 3, 8) * 3.0;
            let kv = random(&mut rng, 5, 8) * 3.0;
            check_weights(&store, (3, 8), |g| {
                let q = g.constant(q.clone());
                let kv = g.constant(kv.clone());
                blk.forward(g, q, kv)
            });
        }
    }
}
