use ndarray::concatenate;
use ndarray::Axis;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::{ModelError, Result};
use crate::encoders::{
    embed_image_global, embed_text_global, EmbedderBackend, GlobalFeature, ImageEncoder, PointEncoder, RenderedImage,
    TextPrompt, TokenFeatures,
};
use crate::geometry::{chamfer_distance, resample, Point, PointCloud, ResampleMethod};
use crate::rng::seeded_rng;
use crate::nn::{AttentionBlock, Gradients, Graph, Linear, Mlp, ParamStore, Var};

/// Frozen global features for one sample. Only the ones the model uses need be set.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Globals {
    pub text: Option<GlobalFeature>,
    pub visual: Option<GlobalFeature>,
}

impl Globals {
    /// `concat(text, visual)` of the present features, as a `1 x d` row.
    fn row(&self) -> Option<ndarray::Array2<f64>> {
        let rows: Vec<_> = [&self.text, &self.visual].into_iter().flatten().map(|g| g.as_row()).collect();
        if rows.is_empty() {
            return None;
        }
        let views: Vec<_> = rows.iter().map(|r| r.view()).collect();
        Some(concatenate(Axis(1), &views).expect("rows of one"))
    }
}

/// Everything a forward pass consumes, with the partial cloud already resampled.
#[derive(Debug, Clone)]
pub struct SampleInputs {
    pub partial: PointCloud,
    pub image: RenderedImage,
    pub globals: Globals,
}

/// Token self-attention followed by a pointwise head that places
/// `points_per_token` offsets around a per-token centre.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoder {
    pub attention: AttentionBlock,
    pub center: Linear,
    pub offsets: Linear,
    pub points_per_token: usize,
}

impl Decoder {
    fn forward(&self, g: &mut Graph, fused: Var) -> Var {
        let tokens = g.shape(fused).0;
        let y = self.attention.forward(g, fused, fused);
        let center = self.center.forward(g, y);
        let offsets = self.offsets.forward(g, y);
        let repeated = g.concat_cols(&vec![center; self.points_per_token]);
        let pts = g.add(repeated, offsets);
        g.reshape(pts, tokens * self.points_per_token, 3)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionModel {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub point_encoder: PointEncoder,
    pub image_encoder: ImageEncoder,
    pub stage1: Option<Mlp>,
    pub cross: AttentionBlock,
    pub stage2: Option<Mlp>,
    pub decoder: Decoder,
}

/// Each component draws from its own stream so that switching a fusion stage
/// on or off leaves every other initial weight unchanged.
fn component_rng(seed: u64, component: &str) -> ChaCha8Rng {
    seeded_rng(seed, "init", component.as_bytes())
}

impl CompletionModel {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let seed = config.init_seed;
        let f = config.fusion;
        let mut params = ParamStore::new();
        let point_encoder = PointEncoder::new(&mut params, "points", config.point_encoder(), &mut component_rng(seed, "points"));
        let image_encoder = ImageEncoder::new(&mut params, "image", config.image_encoder(), &mut component_rng(seed, "image"));
        let fuse_widths = [f.channels + f.global_dim(), config.fuse_hidden, f.channels];
        let stage1 = f
            .stage1_active()
            .then(|| Mlp::new(&mut params, "stage1", &fuse_widths, &mut component_rng(seed, "stage1")));
        let cross = AttentionBlock::new(&mut params, "cross", f.channels, f.attention_heads, config.ff_hidden, &mut component_rng(seed, "cross"));
        let stage2 = f
            .stage2_active()
            .then(|| Mlp::new(&mut params, "stage2", &fuse_widths, &mut component_rng(seed, "stage2")));
        let mut rng = component_rng(seed, "decoder");
        let points_per_token = f.output_points / f.tokens;
        let decoder = Decoder {
            attention: AttentionBlock::new(&mut params, "decoder.attention", f.channels, f.attention_heads, config.ff_hidden, &mut rng),
            center: Linear::new(&mut params, "decoder.center", f.channels, 3, &mut rng),
            offsets: Linear::new(&mut params, "decoder.offsets", f.channels, 3 * points_per_token, &mut rng),
            points_per_token,
        };
        Ok(Self { config, params, point_encoder, image_encoder, stage1, cross, stage2, decoder })
    }

    pub fn parameter_count(&self) -> usize {
        self.params.element_count()
    }

    /// Resamples a partial cloud to the encoder's input size.
    pub fn prepare_partial(&self, partial: &PointCloud) -> Result<PointCloud> {
        Ok(resample(partial, self.config.input_points, ResampleMethod::FarthestPoint { start: 0 }, 0)?)
    }

    /// Computes only the global features this configuration consumes.
    pub fn globals_for(&self, image: &RenderedImage, prompt: &TextPrompt, embedder: &dyn EmbedderBackend) -> Result<Globals> {
        let f = &self.config.fusion;
        let needed = f.stage1_active() || f.stage2_active();
        Ok(Globals {
            text: if needed && f.use_text_global { Some(embed_text_global(prompt, embedder)?) } else { None },
            visual: if needed && f.use_visual_global { Some(embed_image_global(image, embedder)?) } else { None },
        })
    }

    fn global_row(&self, globals: &Globals) -> Result<Option<ndarray::Array2<f64>>> {
        let f = &self.config.fusion;
        if !(f.stage1_active() || f.stage2_active()) {
            return Ok(None);
        }
        if f.use_text_global && globals.text.is_none() {
            return Err(ModelError::MissingGlobal("text"));
        }
        if f.use_visual_global && globals.visual.is_none() {
            return Err(ModelError::MissingGlobal("visual"));
        }
        let used = Globals {
            text: globals.text.clone().filter(|_| f.use_text_global),
            visual: globals.visual.clone().filter(|_| f.use_visual_global),
        };
        Ok(used.row())
    }

    /// Records the full pipeline on `g` and returns the `output_points x 3` prediction.
    pub fn forward_graph(&self, g: &mut Graph, inputs: &SampleInputs) -> Result<Var> {
        let global = self.global_row(&inputs.globals)?.map(|row| g.constant(row));
        let mut x = self.point_encoder.forward(g, &inputs.partial)?;
        if let (Some(mlp), Some(gv)) = (&self.stage1, global) {
            x = fuse_tokens(g, mlp, x, gv);
        }
        let image_tokens = self.image_encoder.forward(g, &inputs.image);
        x = self.cross.forward(g, x, image_tokens);
        if let (Some(mlp), Some(gv)) = (&self.stage2, global) {
            x = fuse_tokens(g, mlp, x, gv);
        }
        Ok(self.decoder.forward(g, x))
    }

    pub fn predict(&self, inputs: &SampleInputs) -> Result<PointCloud> {
        let mut g = Graph::new(&self.params);
        let out = self.forward_graph(&mut g, inputs)?;
        Ok(PointCloud::from_flat(g.value(out).as_slice().expect("standard layout"))?)
    }

    /// End-to-end completion from raw inputs.
    pub fn forward(
        &self,
        partial: &PointCloud,
        image: &RenderedImage,
        prompt: &TextPrompt,
        embedder: &dyn EmbedderBackend,
    ) -> Result<PointCloud> {
        let inputs = SampleInputs {
            partial: self.prepare_partial(partial)?,
            image: image.clone(),
            globals: self.globals_for(image, prompt, embedder)?,
        };
        self.predict(&inputs)
    }

    /// Chamfer loss against `gt` and its gradient with respect to every weight.
    pub fn loss_and_grad(&self, inputs: &SampleInputs, gt: &[Point]) -> Result<(f64, Gradients)> {
        let mut g = Graph::new(&self.params);
        let pred = self.forward_graph(&mut g, inputs)?;
        let l = g.chamfer(pred, gt)?;
        let value = g.value(l)[[0, 0]];
        Ok((value, g.backward(l)))
    }

    pub fn loss_value(&self, inputs: &SampleInputs, gt: &[Point]) -> Result<f64> {
        let pred = self.predict(inputs)?;
        loss(&pred, gt)
    }
}

fn fuse_tokens(g: &mut Graph, mlp: &Mlp, tokens: Var, global_row: Var) -> Var {
    let n = g.shape(tokens).0;
    let repeated = g.repeat_rows(global_row, n);
    let joined = g.concat_cols(&[repeated, tokens]);
    mlp.forward(g, joined)
}

/// Injects global features into every token: the present globals are
/// concatenated (text first), repeated per token, joined channel-wise with
/// the token features and passed through a shared pointwise MLP.
pub fn stage_fuse(
    params: &ParamStore,
    mlp: &Mlp,
    tokens_in: &TokenFeatures,
    g_vis: Option<&GlobalFeature>,
    g_txt: Option<&GlobalFeature>,
) -> Result<TokenFeatures> {
    let globals = Globals { text: g_txt.cloned(), visual: g_vis.cloned() };
    let row = globals.row().ok_or(ModelError::FusionDisabled)?;
    let expected = mlp.layers[0].in_dim;
    if row.ncols() + tokens_in.channels() != expected {
        return Err(ModelError::Shape(format!(
            "fusion MLP takes {expected} inputs, got {} + {}",
            row.ncols(),
            tokens_in.channels()
        )));
    }
    let mut g = Graph::new(params);
    let x = g.constant(tokens_in.token_rows());
    let gv = g.constant(row);
    let out = fuse_tokens(&mut g, mlp, x, gv);
    Ok(TokenFeatures::from_token_rows(g.value(out))?)
}

/// Multi-head cross-attention from `queries` to `keys_values`, with residual
/// connections and a feed-forward sublayer. Output has the shape of `queries`.
pub fn cross_attend(params: &ParamStore, block: &AttentionBlock, queries: &TokenFeatures, keys_values: &TokenFeatures) -> Result<TokenFeatures> {
    if queries.channels() != block.channels || keys_values.channels() != block.channels {
        return Err(ModelError::Shape(format!(
            "attention block has {} channels, got {} and {}",
            block.channels,
            queries.channels(),
            keys_values.channels()
        )));
    }
    let mut g = Graph::new(params);
    let q = g.constant(queries.token_rows());
    let kv = g.constant(keys_values.token_rows());
    let out = block.forward(&mut g, q, kv);
    Ok(TokenFeatures::from_token_rows(g.value(out))?)
}

/// Decodes fused token features into the completed cloud.
pub fn decode(model: &CompletionModel, fused: &TokenFeatures) -> Result<PointCloud> {
    let f = &model.config.fusion;
    if fused.channels() != f.channels || fused.tokens() != f.tokens {
        return Err(ModelError::Shape(format!(
            "decoder expects {}x{} features, got {}x{}",
            f.channels,
            f.tokens,
            fused.channels(),
            fused.tokens()
        )));
    }
    let mut g = Graph::new(&model.params);
    let x = g.constant(fused.token_rows());
    let out = model.decoder.forward(&mut g, x);
    Ok(PointCloud::from_flat(g.value(out).as_slice().expect("standard layout"))?)
}

/// Training loss: the symmetric Chamfer distance.
pub fn loss(pred: &PointCloud, gt: &[Point]) -> Result<f64> {
    Ok(chamfer_distance(pred.points(), gt)?)
}
