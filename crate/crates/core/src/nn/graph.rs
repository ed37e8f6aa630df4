use std::collections::HashMap;

use ndarray::{concatenate, s, Array2, Axis};

use super::params::{Gradients, ParamId, ParamStore};
use super::Mat;
use crate::geometry::{self, GeometryError, Point};

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Gelu(Var),
    SoftmaxRows(Var),
    Scale(Var, f64),
    Transpose(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    RepeatRows(Var),
    /// Max over consecutive groups of rows; stores the winning row per output cell.
    MaxGroups(Var, Vec<usize>),
    Patchify2 { input: Var, height: usize, width: usize },
    AdaptivePool { input: Var, height: usize, width: usize, out_h: usize, out_w: usize },
    Reshape(Var),
    /// Chamfer loss against a constant target; the input gradient is computed eagerly.
    Chamfer(Var, Mat),
}

#[derive(Debug)]
struct Node {
    value: Mat,
    op: Op,
    needs_grad: bool,
}

/// A tape of matrix operations recorded during one forward pass.
pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
}

fn gelu_parts(x: f64) -> (f64, f64) {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    const A: f64 = 0.044_715;
    let inner = C * (x + A * x * x * x);
    let t = inner.tanh();
    let y = 0.5 * x * (1.0 + t);
    let dy = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * C * (1.0 + 3.0 * A * x * x);
    (y, dy)
}

/// Bin edges used by adaptive average pooling.
pub(crate) fn pool_bin(i: usize, input: usize, output: usize) -> (usize, usize) {
    let start = i * input / output;
    let end = ((i + 1) * input).div_ceil(output);
    (start, end.max(start + 1))
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self { params, nodes: Vec::new(), param_vars: HashMap::new() }
    }

    fn push(&mut self, value: Mat, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(value, Op::Constant, false)
    }

    /// The leaf for a stored parameter; repeated calls share one leaf.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let value = self.params.value(id).clone();
        let v = self.push(value, Op::Param(id), true);
        self.param_vars.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        self.push(value, Op::MatMul(a, b), ng)
    }

    /// `a + bias` with a `1 x c` bias broadcast over rows.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        assert_eq!(self.shape(bias).0, 1, "bias must be a row vector");
        let value = self.value(a) + self.value(bias);
        let ng = self.ng(a) || self.ng(bias);
        self.push(value, Op::AddBias(a, bias), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add shape mismatch");
        let value = self.value(a) + self.value(b);
        let ng = self.ng(a) || self.ng(b);
        self.push(value, Op::Add(a, b), ng)
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|x| gelu_parts(x).0);
        let ng = self.ng(a);
        self.push(value, Op::Gelu(a), ng)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut value = self.value(a).clone();
        for mut row in value.rows_mut() {
            let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            row.mapv_inplace(|v| (v - max).exp());
            let sum = row.sum();
            row /= sum;
        }
        let ng = self.ng(a);
        self.push(value, Op::SoftmaxRows(a), ng)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a) * s;
        let ng = self.ng(a);
        self.push(value, Op::Scale(a, s), ng)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).t().to_owned();
        let ng = self.ng(a);
        self.push(value, Op::Transpose(a), ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&v| self.value(v).view()).collect();
        let value = concatenate(Axis(1), &views).expect("concat_cols row mismatch");
        let ng = parts.iter().any(|&v| self.ng(v));
        self.push(value, Op::ConcatCols(parts.to_vec()), ng)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let value = self.value(a).slice(s![.., start..start + len]).to_owned();
        let ng = self.ng(a);
        self.push(value, Op::SliceCols(a, start), ng)
    }

    /// Repeats a `1 x c` row `rows` times.
    pub fn repeat_rows(&mut self, a: Var, rows: usize) -> Var {
        assert_eq!(self.shape(a).0, 1, "repeat_rows expects a row vector");
        let value = self.value(a).broadcast((rows, self.shape(a).1)).expect("broadcast").to_owned();
        let ng = self.ng(a);
        self.push(value, Op::RepeatRows(a), ng)
    }

    /// Column-wise max over consecutive groups of `group` rows.
    pub fn max_groups(&mut self, a: Var, group: usize) -> Var {
        let (rows, cols) = self.shape(a);
        assert!(group > 0 && rows % group == 0, "rows must be a multiple of the group size");
        let groups = rows / group;
        let src = self.value(a);
        let mut value = Mat::zeros((groups, cols));
        let mut winners = vec![0usize; groups * cols];
        for g in 0..groups {
            for c in 0..cols {
                let mut best = (f64::NEG_INFINITY, g * group);
                for r in g * group..(g + 1) * group {
                    if src[[r, c]] > best.0 {
                        best = (src[[r, c]], r);
                    }
                }
                value[[g, c]] = best.0;
                winners[g * cols + c] = best.1;
            }
        }
        let ng = self.ng(a);
        self.push(value, Op::MaxGroups(a, winners), ng)
    }

    /// Space-to-depth on a row-major `height x width` grid of feature rows:
    /// each 2x2 block becomes one row of 4x the width.
    pub fn patchify2(&mut self, a: Var, height: usize, width: usize) -> Var {
        let (rows, c) = self.shape(a);
        assert_eq!(rows, height * width, "grid size mismatch");
        assert!(height % 2 == 0 && width % 2 == 0, "grid must have even sides");
        let (oh, ow) = (height / 2, width / 2);
        let src = self.value(a);
        let mut value = Mat::zeros((oh * ow, 4 * c));
        for y in 0..oh {
            for x in 0..ow {
                let out_row = y * ow + x;
                for (k, (dy, dx)) in [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
                    let in_row = (2 * y + dy) * width + 2 * x + dx;
                    value
                        .slice_mut(s![out_row, k * c..(k + 1) * c])
                        .assign(&src.row(in_row));
                }
            }
        }
        let ng = self.ng(a);
        self.push(value, Op::Patchify2 { input: a, height, width }, ng)
    }

    /// Adaptive average pooling of a `height x width` grid down to `out_h x out_w`.
    pub fn adaptive_pool(&mut self, a: Var, height: usize, width: usize, out_h: usize, out_w: usize) -> Var {
        let (rows, c) = self.shape(a);
        assert_eq!(rows, height * width, "grid size mismatch");
        let src = self.value(a);
        let mut value = Mat::zeros((out_h * out_w, c));
        for i in 0..out_h {
            let (y0, y1) = pool_bin(i, height, out_h);
            for j in 0..out_w {
                let (x0, x1) = pool_bin(j, width, out_w);
                let inv = 1.0 / ((y1 - y0) * (x1 - x0)) as f64;
                let mut acc = value.row_mut(i * out_w + j);
                for y in y0..y1 {
                    for x in x0..x1 {
                        acc.scaled_add(inv, &src.row(y * width + x));
                    }
                }
            }
        }
        let ng = self.ng(a);
        self.push(value, Op::AdaptivePool { input: a, height, width, out_h, out_w }, ng)
    }

    /// Row-major reshape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let flat: Vec<f64> = self.value(a).iter().copied().collect();
        let value = Array2::from_shape_vec((rows, cols), flat).expect("reshape size mismatch");
        let ng = self.ng(a);
        self.push(value, Op::Reshape(a), ng)
    }

    /// Chamfer distance between an `n x 3` prediction and a constant target, as a `1 x 1` value.
    pub fn chamfer(&mut self, pred: Var, target: &[Point]) -> Result<Var, GeometryError> {
        let (n, c) = self.shape(pred);
        assert_eq!(c, 3, "chamfer expects n x 3 input");
        let points: Vec<Point> = (0..n)
            .map(|i| {
                let r = self.value(pred).row(i);
                [r[0], r[1], r[2]]
            })
            .collect();
        let (loss, grad) = geometry::chamfer_with_grad(&points, target)?;
        let grad = Array2::from_shape_vec((n, 3), grad.into_iter().flatten().collect()).expect("n x 3");
        let ng = self.ng(pred);
        Ok(self.push(Array2::from_elem((1, 1), loss), Op::Chamfer(pred, grad), ng))
    }

    /// Backpropagates from a scalar (`1 x 1`) output.
    pub fn backward(&self, out: Var) -> Gradients {
        assert_eq!(self.shape(out), (1, 1), "backward expects a scalar output");
        self.backward_from(out, Array2::from_elem((1, 1), 1.0))
    }

    /// Backpropagates an arbitrary upstream gradient `seed` into the parameters.
    pub fn backward_from(&self, out: Var, seed: Mat) -> Gradients {
        let mut grads = Gradients::zeros_like(self.params);
        let mut adj: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[out.0] = Some(seed);
        for idx in (0..=out.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let send = |v: Var, delta: Mat, adj: &mut Vec<Option<Mat>>| {
                if !self.nodes[v.0].needs_grad {
                    return;
                }
                match &mut adj[v.0] {
                    Some(acc) => *acc += &delta,
                    slot => *slot = Some(delta),
                }
            };
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => grads.accumulate(*id, &g),
                Op::MatMul(a, b) => {
                    if self.ng(*a) {
                        send(*a, g.dot(&self.value(*b).t()), &mut adj);
                    }
                    if self.ng(*b) {
                        send(*b, self.value(*a).t().dot(&g), &mut adj);
                    }
                }
                Op::AddBias(a, bias) => {
                    if self.ng(*bias) {
                        send(*bias, g.sum_axis(Axis(0)).insert_axis(Axis(0)), &mut adj);
                    }
                    send(*a, g, &mut adj);
                }
                Op::Add(a, b) => {
                    if self.ng(*b) {
                        send(*b, g.clone(), &mut adj);
                    }
                    send(*a, g, &mut adj);
                }
                Op::Gelu(a) => {
                    let mut d = self.value(*a).mapv(|x| gelu_parts(x).1);
                    d *= &g;
                    send(*a, d, &mut adj);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let gy = &g * y;
                    let row_dot = gy.sum_axis(Axis(1)).insert_axis(Axis(1));
                    send(*a, gy - y * &row_dot, &mut adj);
                }
                Op::Scale(a, s) => send(*a, g * *s, &mut adj),
                Op::Transpose(a) => send(*a, g.t().to_owned(), &mut adj),
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let w = self.shape(p).1;
                        if self.ng(p) {
                            send(p, g.slice(s![.., start..start + w]).to_owned(), &mut adj);
                        }
                        start += w;
                    }
                }
                Op::SliceCols(a, start) => {
                    let mut d = Mat::zeros(self.value(*a).raw_dim());
                    let w = g.ncols();
                    d.slice_mut(s![.., *start..*start + w]).assign(&g);
                    send(*a, d, &mut adj);
                }
                Op::RepeatRows(a) => send(*a, g.sum_axis(Axis(0)).insert_axis(Axis(0)), &mut adj),
                Op::MaxGroups(a, winners) => {
                    let mut d = Mat::zeros(self.value(*a).raw_dim());
                    let cols = g.ncols();
                    for ((gi, c), v) in g.indexed_iter() {
                        d[[winners[gi * cols + c], c]] += v;
                    }
                    send(*a, d, &mut adj);
                }
                Op::Patchify2 { input, height, width } => {
                    let c = self.shape(*input).1;
                    let (oh, ow) = (height / 2, width / 2);
                    let mut d = Mat::zeros((height * width, c));
                    for y in 0..oh {
                        for x in 0..ow {
                            let out_row = y * ow + x;
                            for (k, (dy, dx)) in [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
                                let in_row = (2 * y + dy) * width + 2 * x + dx;
                                d.row_mut(in_row).assign(&g.slice(s![out_row, k * c..(k + 1) * c]));
                            }
                        }
                    }
                    send(*input, d, &mut adj);
                }
                Op::AdaptivePool { input, height, width, out_h, out_w } => {
                    let c = self.shape(*input).1;
                    let mut d = Mat::zeros((height * width, c));
                    for i in 0..*out_h {
                        let (y0, y1) = pool_bin(i, *height, *out_h);
                        for j in 0..*out_w {
                            let (x0, x1) = pool_bin(j, *width, *out_w);
                            let inv = 1.0 / ((y1 - y0) * (x1 - x0)) as f64;
                            let up = g.row(i * out_w + j);
                            for y in y0..y1 {
                                for x in x0..x1 {
                                    d.row_mut(y * width + x).scaled_add(inv, &up);
                                }
                            }
                        }
                    }
                    send(*input, d, &mut adj);
                }
                Op::Reshape(a) => {
                    let dim = self.value(*a).raw_dim();
                    let flat: Vec<f64> = g.iter().copied().collect();
                    send(*a, Array2::from_shape_vec(dim, flat).expect("reshape"), &mut adj);
                }
                Op::Chamfer(a, grad) => send(*a, grad * g[[0, 0]], &mut adj),
            }
        }
        grads
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Central differences of a scalar function of one parameter entry.
    fn check_param_grads(store: &ParamStore, f: impl Fn(&mut Graph) -> Var) {
        let mut g = Graph::new(store);
        let out = f(&mut g);
        let grads = g.backward(out);
        let h = 1e-6;
        for id in store.ids() {
            for idx in 0..store.value(id).len() {
                let eval = |delta: f64| {
                    let mut s = store.clone();
                    let v = s.value_mut(id);
                    let (r, c) = (idx / v.ncols(), idx % v.ncols());
                    v[[r, c]] += delta;
                    let mut g = Graph::new(&s);
                    let o = f(&mut g);
                    g.value(o)[[0, 0]]
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                let an = grads.get(id).iter().nth(idx).copied().unwrap();
                let scale = fd.abs().max(an.abs()).max(1e-6);
                assert!((fd - an).abs() / scale < 1e-5, "{} [{idx}]: fd {fd} analytic {an}", store.name(id));
            }
        }
    }

    /// Reduces a matrix to a scalar through a fixed random projection.
    fn project(g: &mut Graph, v: Var, seed: u64) -> Var {
        let (r, c) = g.shape(v);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = Array2::from_shape_simple_fn((r * c, 1), || rand::Rng::random_range(&mut rng, -1.0..1.0));
        let flat = g.reshape(v, 1, r * c);
        let wv = g.constant(w);
        g.matmul(flat, wv)
    }

    #[test]
    fn elementwise_and_matrix_ops_have_correct_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let a = store.add_uniform("a", 4, 6, 1, &mut rng);
        let b = store.add_uniform("b", 6, 3, 1, &mut rng);
        let bias = store.add_uniform("bias", 1, 3, 1, &mut rng);
        let row = store.add_uniform("row", 1, 2, 1, &mut rng);
        check_param_grads(&store, |g| {
            let av = g.param(a);
            let bv = g.param(b);
            let m = g.matmul(av, bv);
            let bv = g.param(bias);
            let m = g.add_bias(m, bv);
            let m = g.gelu(m);
            let sm = g.softmax_rows(m);
            let t = g.transpose(sm);
            let t2 = g.transpose(t);
            let sum = g.add(t2, m);
            let sc = g.scale(sum, 0.7);
            let rv = g.param(row);
            let rep = g.repeat_rows(rv, 4);
            let cat = g.concat_cols(&[sc, rep]);
            let sl = g.slice_cols(cat, 1, 3);
            let mx = g.max_groups(sl, 2);
            project(g, mx, 9)
        });
    }

    #[test]
    fn spatial_ops_have_correct_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::new();
        let grid = store.add_uniform("grid", 6 * 4, 2, 1, &mut rng);
        check_param_grads(&store, |g| {
            let x = g.param(grid);
            let p = g.patchify2(x, 6, 4);
            let pooled = g.adaptive_pool(p, 3, 2, 2, 3);
            project(g, pooled, 3)
        });
    }

    #[test]
    fn chamfer_node_backpropagates() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        let pts = store.add_uniform("pts", 4, 6, 1, &mut rng);
        let target: Vec<Point> = vec![[0.1, 0.2, 0.3], [-0.5, 0.4, 0.0], [0.9, -0.9, 0.2]];
        check_param_grads(&store, |g| {
            let x = g.param(pts);
            let r = g.reshape(x, 8, 3);
            g.chamfer(r, &target).unwrap()
        });
    }

    #[test]
    fn patchify_layout_is_block_major() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        // 2x2 grid, one channel: values 0..4 in row-major order.
        let x = g.constant(array![[0.0], [1.0], [2.0], [3.0]]);
        let p = g.patchify2(x, 2, 2);
        assert_eq!(g.value(p), &array![[0.0, 1.0, 2.0, 3.0]]);
    }

    #[test]
    fn adaptive_pool_bins_cover_input() {
        assert_eq!(pool_bin(0, 14, 8), (0, 2));
        assert_eq!(pool_bin(7, 14, 8), (12, 14));
        assert_eq!(pool_bin(15, 14, 16), (13, 14));
        assert_eq!(pool_bin(0, 4, 2), (0, 2));
    }
}
