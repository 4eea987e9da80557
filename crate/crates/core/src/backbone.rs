//! Dual-channel transformer denoiser. A temporal channel attends over
//! time steps (with a learned positional table) and a dimension channel
//! attends over features; each channel runs a dense embedding, a pre-norm
//! encoder block, a residual-chained stack of step-conditioned DiT
//! blocks, and a zero-initialized output projection. The two channel
//! outputs are summed to form the clean-signal prediction.

use ndarray::{Array1, Array2, ArrayD, Ix3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::SeriesBatch;
use crate::error::{Error, Result};
use crate::schedule::{Denoiser, StepVector};
use crate::tape::{layer_norm, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub length: usize,
    pub features: usize,
    pub hidden: usize,
    pub heads: usize,
    pub encoder_blocks: usize,
    pub dit_blocks: usize,
}

impl BackboneConfig {
    pub fn validate(&self) -> Result<()> {
        let all_positive = self.length >= 1
            && self.features >= 1
            && self.hidden >= 1
            && self.heads >= 1
            && self.encoder_blocks >= 1
            && self.dit_blocks >= 1;
        if !all_positive {
            return Err(Error::ConfigMismatch("all backbone counts must be >= 1".into()));
        }
        if self.hidden % self.heads != 0 {
            return Err(Error::ConfigMismatch(format!(
                "hidden {} not divisible by heads {}",
                self.hidden, self.heads
            )));
        }
        if self.hidden % 2 != 0 {
            return Err(Error::ConfigMismatch(format!(
                "hidden {} must be even for the sinusoidal step embedding",
                self.hidden
            )));
        }
        Ok(())
    }
}

/// Feed-forward expansion ratio inside encoder and DiT blocks.
const FF_RATIO: usize = 4;

// ---- parameter containers ----
//
// `visit` enumerates parameters in a fixed order; `bind` registers them
// on a tape in the same code order. The flat parameter vector, the
// optimizer state, and the checkpoint blob all rely on this ordering.

#[derive(Debug, Clone)]
pub struct Dense {
    pub w: ArrayD<f64>,
    pub b: ArrayD<f64>,
}

#[derive(Clone, Copy)]
pub struct DenseVars {
    pub w: Var,
    pub b: Var,
}

impl Dense {
    fn xavier(inp: usize, out: usize, rng: &mut ChaCha8Rng) -> Dense {
        let limit = (6.0 / (inp + out) as f64).sqrt();
        let w = Array2::from_shape_fn((inp, out), |_| rng.gen_range(-limit..limit));
        Dense { w: w.into_dyn(), b: Array1::zeros(out).into_dyn() }
    }

    fn zeros(inp: usize, out: usize) -> Dense {
        Dense {
            w: Array2::zeros((inp, out)).into_dyn(),
            b: Array1::zeros(out).into_dyn(),
        }
    }

    fn visit<'a>(&'a self, name: String, f: &mut dyn FnMut(String, &'a ArrayD<f64>)) {
        f(format!("{name}.w"), &self.w);
        f(format!("{name}.b"), &self.b);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut ArrayD<f64>)) {
        f(&mut self.w);
        f(&mut self.b);
    }

    fn bind(&self, tape: &mut Tape, all: &mut Vec<Var>) -> DenseVars {
        let w = tape.leaf_grad(self.w.clone());
        all.push(w);
        let b = tape.leaf_grad(self.b.clone());
        all.push(b);
        DenseVars { w, b }
    }
}

#[derive(Debug, Clone)]
pub struct EncoderBlock {
    pub ln1_gain: ArrayD<f64>,
    pub ln1_bias: ArrayD<f64>,
    pub qkv: Dense,
    pub attn_out: Dense,
    pub ln2_gain: ArrayD<f64>,
    pub ln2_bias: ArrayD<f64>,
    pub ff1: Dense,
    pub ff2: Dense,
}

pub struct EncoderVars {
    pub ln1_gain: Var,
    pub ln1_bias: Var,
    pub qkv: DenseVars,
    pub attn_out: DenseVars,
    pub ln2_gain: Var,
    pub ln2_bias: Var,
    pub ff1: DenseVars,
    pub ff2: DenseVars,
}

impl EncoderBlock {
    fn init(h: usize, rng: &mut ChaCha8Rng) -> EncoderBlock {
        EncoderBlock {
            ln1_gain: Array1::ones(h).into_dyn(),
            ln1_bias: Array1::zeros(h).into_dyn(),
            qkv: Dense::xavier(h, 3 * h, rng),
            attn_out: Dense::xavier(h, h, rng),
            ln2_gain: Array1::ones(h).into_dyn(),
            ln2_bias: Array1::zeros(h).into_dyn(),
            ff1: Dense::xavier(h, FF_RATIO * h, rng),
            ff2: Dense::xavier(FF_RATIO * h, h, rng),
        }
    }

    fn visit<'a>(&'a self, name: String, f: &mut dyn FnMut(String, &'a ArrayD<f64>)) {
        f(format!("{name}.ln1.gain"), &self.ln1_gain);
        f(format!("{name}.ln1.bias"), &self.ln1_bias);
        self.qkv.visit(format!("{name}.qkv"), f);
        self.attn_out.visit(format!("{name}.attn_out"), f);
        f(format!("{name}.ln2.gain"), &self.ln2_gain);
        f(format!("{name}.ln2.bias"), &self.ln2_bias);
        self.ff1.visit(format!("{name}.ff1"), f);
        self.ff2.visit(format!("{name}.ff2"), f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut ArrayD<f64>)) {
        f(&mut self.ln1_gain);
        f(&mut self.ln1_bias);
        self.qkv.visit_mut(f);
        self.attn_out.visit_mut(f);
        f(&mut self.ln2_gain);
        f(&mut self.ln2_bias);
        self.ff1.visit_mut(f);
        self.ff2.visit_mut(f);
    }

    fn bind(&self, tape: &mut Tape, all: &mut Vec<Var>) -> EncoderVars {
        let ln1_gain = tape.leaf_grad(self.ln1_gain.clone());
        all.push(ln1_gain);
        let ln1_bias = tape.leaf_grad(self.ln1_bias.clone());
        all.push(ln1_bias);
        let qkv = self.qkv.bind(tape, all);
        let attn_out = self.attn_out.bind(tape, all);
        let ln2_gain = tape.leaf_grad(self.ln2_gain.clone());
        all.push(ln2_gain);
        let ln2_bias = tape.leaf_grad(self.ln2_bias.clone());
        all.push(ln2_bias);
        let ff1 = self.ff1.bind(tape, all);
        let ff2 = self.ff2.bind(tape, all);
        EncoderVars { ln1_gain, ln1_bias, qkv, attn_out, ln2_gain, ln2_bias, ff1, ff2 }
    }
}

/// Step-conditioned block with adaLN-Zero modulation: the step embedding
/// produces six chunks (shift/scale/gate for attention, shift/scale/gate
/// for feed-forward) through a fully zero-initialized linear map, so the
/// block is exactly the identity before training.
#[derive(Debug, Clone)]
pub struct DitBlock {
    pub modulation: Dense,
    pub qkv: Dense,
    pub attn_out: Dense,
    pub ff1: Dense,
    pub ff2: Dense,
}

pub struct DitVars {
    pub modulation: DenseVars,
    pub qkv: DenseVars,
    pub attn_out: DenseVars,
    pub ff1: DenseVars,
    pub ff2: DenseVars,
}

impl DitBlock {
    fn init(h: usize, rng: &mut ChaCha8Rng) -> DitBlock {
        DitBlock {
            modulation: Dense::zeros(h, 6 * h),
            qkv: Dense::xavier(h, 3 * h, rng),
            attn_out: Dense::xavier(h, h, rng),
            ff1: Dense::xavier(h, FF_RATIO * h, rng),
            ff2: Dense::xavier(FF_RATIO * h, h, rng),
        }
    }

    fn visit<'a>(&'a self, name: String, f: &mut dyn FnMut(String, &'a ArrayD<f64>)) {
        self.modulation.visit(format!("{name}.modulation"), f);
        self.qkv.visit(format!("{name}.qkv"), f);
        self.attn_out.visit(format!("{name}.attn_out"), f);
        self.ff1.visit(format!("{name}.ff1"), f);
        self.ff2.visit(format!("{name}.ff2"), f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut ArrayD<f64>)) {
        self.modulation.visit_mut(f);
        self.qkv.visit_mut(f);
        self.attn_out.visit_mut(f);
        self.ff1.visit_mut(f);
        self.ff2.visit_mut(f);
    }

    fn bind(&self, tape: &mut Tape, all: &mut Vec<Var>) -> DitVars {
        DitVars {
            modulation: self.modulation.bind(tape, all),
            qkv: self.qkv.bind(tape, all),
            attn_out: self.attn_out.bind(tape, all),
            ff1: self.ff1.bind(tape, all),
            ff2: self.ff2.bind(tape, all),
        }
    }
}

/// One processing channel: embedding, optional positional table, encoder
/// stack, DiT stack, output projection.
#[derive(Debug, Clone)]
pub struct Channel {
    pub embed: Dense,
    pub positional: Option<ArrayD<f64>>,
    pub encoders: Vec<EncoderBlock>,
    pub dits: Vec<DitBlock>,
    pub project: Dense,
}

pub struct ChannelVars {
    pub embed: DenseVars,
    pub positional: Option<Var>,
    pub encoders: Vec<EncoderVars>,
    pub dits: Vec<DitVars>,
    pub project: DenseVars,
}

impl Channel {
    /// `seq` is the attention axis length, `width` the per-position input
    /// size; the projection maps back to `width`.
    fn init(
        seq: usize,
        width: usize,
        cfg: &BackboneConfig,
        with_positional: bool,
        rng: &mut ChaCha8Rng,
    ) -> Channel {
        let h = cfg.hidden;
        let embed = Dense::xavier(width, h, rng);
        let positional = with_positional.then(|| {
            let dist = Normal::new(0.0, 0.02).expect("valid normal");
            Array2::from_shape_fn((seq, h), |_| dist.sample(rng)).into_dyn()
        });
        let encoders = (0..cfg.encoder_blocks).map(|_| EncoderBlock::init(h, rng)).collect();
        let dits = (0..cfg.dit_blocks).map(|_| DitBlock::init(h, rng)).collect();
        Channel { embed, positional, encoders, dits, project: Dense::zeros(h, width) }
    }

    fn visit<'a>(&'a self, name: &str, f: &mut dyn FnMut(String, &'a ArrayD<f64>)) {
        self.embed.visit(format!("{name}.embed"), f);
        if let Some(p) = &self.positional {
            f(format!("{name}.positional"), p);
        }
        for (i, e) in self.encoders.iter().enumerate() {
            e.visit(format!("{name}.encoder{i}"), f);
        }
        for (i, d) in self.dits.iter().enumerate() {
            d.visit(format!("{name}.dit{i}"), f);
        }
        self.project.visit(format!("{name}.project"), f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut ArrayD<f64>)) {
        self.embed.visit_mut(f);
        if let Some(p) = &mut self.positional {
            f(p);
        }
        for e in &mut self.encoders {
            e.visit_mut(f);
        }
        for d in &mut self.dits {
            d.visit_mut(f);
        }
        self.project.visit_mut(f);
    }

    fn bind(&self, tape: &mut Tape, all: &mut Vec<Var>) -> ChannelVars {
        let embed = self.embed.bind(tape, all);
        let positional = self.positional.as_ref().map(|p| {
            let v = tape.leaf_grad(p.clone());
            all.push(v);
            v
        });
        let encoders = self.encoders.iter().map(|e| e.bind(tape, all)).collect();
        let dits = self.dits.iter().map(|d| d.bind(tape, all)).collect();
        let project = self.project.bind(tape, all);
        ChannelVars { embed, positional, encoders, dits, project }
    }
}

/// Learned refinement of the training-free sinusoidal step encoding.
#[derive(Debug, Clone)]
pub struct StepEmbed {
    pub lin1: Dense,
    pub lin2: Dense,
}

pub struct StepEmbedVars {
    pub lin1: DenseVars,
    pub lin2: DenseVars,
}

impl StepEmbed {
    fn init(h: usize, rng: &mut ChaCha8Rng) -> StepEmbed {
        StepEmbed { lin1: Dense::xavier(h, h, rng), lin2: Dense::xavier(h, h, rng) }
    }

    fn visit<'a>(&'a self, f: &mut dyn FnMut(String, &'a ArrayD<f64>)) {
        self.lin1.visit("step.lin1".into(), f);
        self.lin2.visit("step.lin2".into(), f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut ArrayD<f64>)) {
        self.lin1.visit_mut(f);
        self.lin2.visit_mut(f);
    }

    fn bind(&self, tape: &mut Tape, all: &mut Vec<Var>) -> StepEmbedVars {
        StepEmbedVars { lin1: self.lin1.bind(tape, all), lin2: self.lin2.bind(tape, all) }
    }
}

/// Full parameter state of the denoiser.
#[derive(Debug, Clone)]
pub struct BackboneState {
    pub config: BackboneConfig,
    /// Diffusion-chain length the model was built for; step indices must
    /// stay below it.
    pub t_count: usize,
    pub step: StepEmbed,
    pub temporal: Channel,
    pub dimension: Channel,
}

pub struct BoundBackbone {
    pub step: StepEmbedVars,
    pub temporal: ChannelVars,
    pub dimension: ChannelVars,
    /// Every bound parameter in visit order; aligned with
    /// [`BackboneState::visit`] and the flat parameter vector.
    pub all: Vec<Var>,
}

impl BackboneState {
    pub fn init(config: BackboneConfig, t_count: usize, seed: u64) -> Result<BackboneState> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let step = StepEmbed::init(config.hidden, &mut rng);
        let temporal = Channel::init(config.length, config.features, &config, true, &mut rng);
        let dimension = Channel::init(config.features, config.length, &config, false, &mut rng);
        Ok(BackboneState { config, t_count, step, temporal, dimension })
    }

    /// Enumerate all parameters with stable names, in the canonical order.
    pub fn visit<'a>(&'a self, f: &mut dyn FnMut(String, &'a ArrayD<f64>)) {
        self.step.visit(f);
        self.temporal.visit("temporal", f);
        self.dimension.visit("dimension", f);
    }

    pub fn visit_mut(&mut self, f: &mut dyn FnMut(&mut ArrayD<f64>)) {
        self.step.visit_mut(f);
        self.temporal.visit_mut(f);
        self.dimension.visit_mut(f);
    }

    /// Register every parameter on `tape` as a gradient leaf.
    pub fn bind(&self, tape: &mut Tape) -> BoundBackbone {
        let mut all = Vec::new();
        let step = self.step.bind(tape, &mut all);
        let temporal = self.temporal.bind(tape, &mut all);
        let dimension = self.dimension.bind(tape, &mut all);
        BoundBackbone { step, temporal, dimension, all }
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, a| n += a.len());
        n
    }

    /// Flatten all parameters into one vector in visit order.
    pub fn param_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.visit(&mut |_, a| out.extend(a.iter().copied()));
        out
    }

    /// Overwrite all parameters from a flat vector in visit order.
    pub fn load_param_vec(&mut self, data: &[f64]) -> Result<()> {
        if data.len() != self.param_count() {
            return Err(Error::ConfigMismatch(format!(
                "parameter vector has {} entries, state needs {}",
                data.len(),
                self.param_count()
            )));
        }
        let mut offset = 0;
        self.visit_mut(&mut |a| {
            for v in a.iter_mut() {
                *v = data[offset];
                offset += 1;
            }
        });
        Ok(())
    }

    /// Parameter names and shapes in visit order (checkpoint manifest).
    pub fn param_layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        self.visit(&mut |name, a| out.push((name, a.shape().to_vec())));
        out
    }
}

// ---- forward pass ----

fn dense_apply(tape: &mut Tape, d: &DenseVars, x: Var) -> Var {
    let y = tape.matmul(x, d.w);
    tape.add(y, d.b)
}

/// Multi-head self-attention over the middle axis of `[b, S, H]`.
fn attention(tape: &mut Tape, qkv: &DenseVars, out: &DenseVars, heads: usize, x: Var) -> Var {
    let shape = tape.shape(x).to_vec();
    let (b, s, h) = (shape[0], shape[1], shape[2]);
    let hd = h / heads;
    let fused = dense_apply(tape, qkv, x); // [b, S, 3H]
    let split = |tape: &mut Tape, start: usize| -> Var {
        let part = tape.narrow(fused, 2, start * h, h);
        let shaped = tape.reshape(part, &[b, s, heads, hd]);
        tape.transpose(shaped, 1, 2) // [b, heads, S, hd]
    };
    let q = split(tape, 0);
    let k = split(tape, 1);
    let v = split(tape, 2);
    let kt = tape.transpose(k, 2, 3);
    let scores = tape.matmul(q, kt);
    let scaled = tape.scale(scores, 1.0 / (hd as f64).sqrt());
    let weights = tape.softmax(scaled);
    let context = tape.matmul(weights, v); // [b, heads, S, hd]
    let swapped = tape.transpose(context, 1, 2);
    let merged = tape.reshape(swapped, &[b, s, h]);
    dense_apply(tape, out, merged)
}

fn feed_forward(tape: &mut Tape, ff1: &DenseVars, ff2: &DenseVars, x: Var) -> Var {
    let a = dense_apply(tape, ff1, x);
    let g = tape.gelu(a);
    dense_apply(tape, ff2, g)
}

/// Standard pre-norm encoder block.
fn encoder_forward(tape: &mut Tape, e: &EncoderVars, heads: usize, h: Var) -> Var {
    let normed = layer_norm(tape, h, Some(e.ln1_gain), Some(e.ln1_bias));
    let attn = attention(tape, &e.qkv, &e.attn_out, heads, normed);
    let h = tape.add(h, attn);
    let normed = layer_norm(tape, h, Some(e.ln2_gain), Some(e.ln2_bias));
    let ff = feed_forward(tape, &e.ff1, &e.ff2, normed);
    tape.add(h, ff)
}

/// One adaLN-Zero block: `c` is the `[b, H]` step embedding.
pub fn dit_forward(tape: &mut Tape, d: &DitVars, heads: usize, h: Var, c: Var) -> Var {
    let hid = tape.shape(h)[2];
    let b = tape.shape(h)[0];
    let m = dense_apply(tape, &d.modulation, c); // [b, 6H], zero at init
    let chunk = |tape: &mut Tape, idx: usize| -> Var {
        let part = tape.narrow(m, 1, idx * hid, hid);
        tape.reshape(part, &[b, 1, hid]) // broadcasts over S
    };
    let shift_attn = chunk(tape, 0);
    let scale_attn = chunk(tape, 1);
    let gate_attn = chunk(tape, 2);
    let shift_ff = chunk(tape, 3);
    let scale_ff = chunk(tape, 4);
    let gate_ff = chunk(tape, 5);

    let normed = layer_norm(tape, h, None, None);
    let scale1 = tape.add_scalar(scale_attn, 1.0);
    let modulated = tape.mul(normed, scale1);
    let modulated = tape.add(modulated, shift_attn);
    let attn = attention(tape, &d.qkv, &d.attn_out, heads, modulated);
    let gated = tape.mul(gate_attn, attn);
    let h = tape.add(h, gated);

    let normed = layer_norm(tape, h, None, None);
    let scale1 = tape.add_scalar(scale_ff, 1.0);
    let modulated = tape.mul(normed, scale1);
    let modulated = tape.add(modulated, shift_ff);
    let ff = feed_forward(tape, &d.ff1, &d.ff2, modulated);
    let gated = tape.mul(gate_ff, ff);
    tape.add(h, gated)
}

/// Residual-chained DiT stack: block 0 sees the input, block 1 sees
/// `O^0 + input`, block `i >= 2` sees `O^{i-1} + O^{i-2}`. Returns every
/// block output.
pub fn dit_chain(tape: &mut Tape, blocks: &[DitVars], heads: usize, h_in: Var, c: Var) -> Vec<Var> {
    let mut outs: Vec<Var> = Vec::with_capacity(blocks.len());
    for (i, block) in blocks.iter().enumerate() {
        let input = match i {
            0 => h_in,
            1 => tape.add(outs[0], h_in),
            _ => tape.add(outs[i - 1], outs[i - 2]),
        };
        outs.push(dit_forward(tape, block, heads, input, c));
    }
    outs
}

fn channel_forward(tape: &mut Tape, ch: &ChannelVars, heads: usize, h: Var, c: Var) -> Var {
    let mut h = h;
    for e in &ch.encoders {
        h = encoder_forward(tape, e, heads, h);
    }
    let outs = dit_chain(tape, &ch.dits, heads, h, c);
    let mut sum = outs[0];
    for o in &outs[1..] {
        sum = tape.add(sum, *o);
    }
    dense_apply(tape, &ch.project, sum)
}

/// Training-free sinusoidal encoding of integer steps, `[b, H]`.
fn sinusoidal_embedding(steps: &[usize], hidden: usize) -> ArrayD<f64> {
    let half = hidden / 2;
    let mut out = Array2::zeros((steps.len(), hidden));
    for (row, &t) in steps.iter().enumerate() {
        for i in 0..half {
            let freq = (-(i as f64) * (10_000f64).ln() / half as f64).exp();
            let angle = t as f64 * freq;
            out[[row, 2 * i]] = angle.sin();
            out[[row, 2 * i + 1]] = angle.cos();
        }
    }
    out.into_dyn()
}

/// Full forward pass on an existing tape: returns the `[b, L, F]`
/// clean-signal prediction node.
pub fn forward(
    tape: &mut Tape,
    bound: &BoundBackbone,
    cfg: &BackboneConfig,
    x: Var,
    steps: &[usize],
) -> Var {
    // learned step embedding
    let sin = tape.leaf(sinusoidal_embedding(steps, cfg.hidden));
    let e = dense_apply(tape, &bound.step.lin1, sin);
    let e = tape.silu(e);
    let t_emb = dense_apply(tape, &bound.step.lin2, e); // [b, H]

    // temporal channel: attend over time
    let h_t = dense_apply(tape, &bound.temporal.embed, x);
    let h_t = match bound.temporal.positional {
        Some(p) => tape.add(h_t, p), // [L, H] broadcasts over the batch
        None => h_t,
    };
    let out_t = channel_forward(tape, &bound.temporal, cfg.heads, h_t, t_emb); // [b, L, F]

    // dimension channel: attend over features, no positional signal
    let xd = tape.transpose(x, 1, 2); // [b, F, L]
    let h_d = dense_apply(tape, &bound.dimension.embed, xd);
    let out_d = channel_forward(tape, &bound.dimension, cfg.heads, h_d, t_emb); // [b, F, L]
    let out_d = tape.transpose(out_d, 1, 2);

    tape.add(out_t, out_d)
}

/// Evaluate the denoiser without gradients.
pub fn predict_x0(state: &BackboneState, xt: &SeriesBatch, t: &StepVector) -> Result<SeriesBatch> {
    let (b, l, f) = xt.dim();
    if l != state.config.length || f != state.config.features {
        return Err(Error::ConfigMismatch(format!(
            "input [{b}, {l}, {f}] vs config length {} features {}",
            state.config.length, state.config.features
        )));
    }
    if t.len() != b {
        return Err(Error::ShapeMismatch(format!(
            "step vector has {} entries for batch of {b}",
            t.len()
        )));
    }
    for &s in &t.steps {
        if s >= state.t_count {
            return Err(Error::InvalidStep { step: s, total: state.t_count });
        }
    }
    let mut tape = Tape::no_grad();
    let bound = state.bind(&mut tape);
    let x = tape.leaf(xt.clone().into_dyn());
    let y = forward(&mut tape, &bound, &state.config, x, &t.steps);
    Ok(tape
        .value(y)
        .clone()
        .into_dimensionality::<Ix3>()
        .expect("forward output is rank 3"))
}

impl Denoiser for BackboneState {
    fn predict_x0(&self, xt: &SeriesBatch, t: &StepVector) -> Result<SeriesBatch> {
        predict_x0(self, xt, t)
    }

    fn series_length(&self) -> usize {
        self.config.length
    }

    fn series_features(&self) -> usize {
        self.config.features
    }
}
