use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayBase, Axis, Data, DataMut, Dimension, NdFloat};
use num_traits::FromPrimitive;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{positional_encoding, PolicyConfig};
use crate::error::{Error, Result};
use crate::rng;

/// Floating-point type the network can run in.
pub trait Scalar: NdFloat + FromPrimitive {}
impl<T: NdFloat + FromPrimitive> Scalar for T {}

const BN_EPS: f64 = 1e-5;
/// Weight of the old running statistic in each update.
pub const BN_MOMENTUM: f64 = 0.9;
/// Output probabilities are kept this far from 0 and 1.
const PROB_FLOOR: f64 = 1e-12;
/// Rows per forward pass when predicting with running statistics.
const PREDICT_CHUNK: usize = 512;

fn cast<F: Scalar>(v: f64) -> F {
    F::from_f64(v).expect("f64 converts to the network scalar")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Batch norm normalises with the statistics of the current batch.
    Train,
    /// Batch norm uses the running statistics.
    Inference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorKind {
    Trainable,
    /// Batch-norm running statistics.
    Buffer,
}

#[derive(Debug)]
pub struct TensorView<'a, F> {
    pub name: String,
    pub kind: TensorKind,
    pub shape: Vec<usize>,
    pub data: &'a [F],
}

#[derive(Debug)]
pub struct TensorViewMut<'a, F> {
    pub name: String,
    pub kind: TensorKind,
    pub shape: Vec<usize>,
    pub data: &'a mut [F],
}

fn view<'a, F, S, D>(name: String, kind: TensorKind, a: &'a ArrayBase<S, D>) -> TensorView<'a, F>
where
    S: Data<Elem = F>,
    D: Dimension,
{
    TensorView {
        name,
        kind,
        shape: a.shape().to_vec(),
        data: a.as_slice().expect("parameters are stored contiguously"),
    }
}

fn view_mut<'a, F, S, D>(name: String, kind: TensorKind, a: &'a mut ArrayBase<S, D>) -> TensorViewMut<'a, F>
where
    S: DataMut<Elem = F>,
    D: Dimension,
{
    let shape = a.shape().to_vec();
    TensorViewMut {
        name,
        kind,
        shape,
        data: a.as_slice_mut().expect("parameters are stored contiguously"),
    }
}

fn relu<F: Scalar>(mut a: Array2<F>) -> Array2<F> {
    a.mapv_inplace(|v| v.max(F::zero()));
    a
}

/// `d *= (act > 0)` where `act` is a ReLU output.
fn relu_mask<F: Scalar>(d: &mut Array2<F>, act: &Array2<F>) {
    d.zip_mut_with(act, |g, &a| {
        if a <= F::zero() {
            *g = F::zero();
        }
    });
}

fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).fold(F::zero(), |s, (&x, &y)| s + x * y)
}

fn reshape<F: Scalar>(a: Array2<F>, rows: usize, cols: usize) -> Array2<F> {
    let a = if a.is_standard_layout() { a } else { a.as_standard_layout().into_owned() };
    a.into_shape_with_order((rows, cols)).expect("element count is preserved")
}

/// `y = x W + b` with `W` stored `in x out`.
#[derive(Debug, Clone, PartialEq)]
struct Linear<F> {
    w: Array2<F>,
    b: Option<Array1<F>>,
}

impl<F: Scalar> Linear<F> {
    fn init(rng: &mut rng::Rng, fan_in: usize, fan_out: usize, bias: bool) -> Self {
        let k = 1.0 / (fan_in as f64).sqrt();
        let w = Array2::from_shape_simple_fn((fan_in, fan_out), || cast(rng.random_range(-k..=k)));
        let b = bias.then(|| Array1::from_shape_simple_fn(fan_out, || cast(rng.random_range(-k..=k))));
        Linear { w, b }
    }

    fn zeros(fan_in: usize, fan_out: usize, bias: bool) -> Self {
        Linear {
            w: Array2::zeros((fan_in, fan_out)),
            b: bias.then(|| Array1::zeros(fan_out)),
        }
    }

    fn forward(&self, x: &Array2<F>) -> Array2<F> {
        let mut y = x.dot(&self.w);
        if let Some(b) = &self.b {
            y += b;
        }
        y
    }

    /// Accumulates parameter gradients into `grad`; returns `dx` if asked.
    fn backward(&self, x: &Array2<F>, dy: &Array2<F>, grad: &mut Linear<F>, need_dx: bool) -> Option<Array2<F>> {
        general_mat_mul(F::one(), &x.t(), dy, F::one(), &mut grad.w);
        if let Some(gb) = &mut grad.b {
            *gb += &dy.sum_axis(Axis(0));
        }
        need_dx.then(|| dy.dot(&self.w.t()))
    }

    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<TensorView<'a, F>>) {
        out.push(view(format!("{prefix}.weight"), TensorKind::Trainable, &self.w));
        if let Some(b) = &self.b {
            out.push(view(format!("{prefix}.bias"), TensorKind::Trainable, b));
        }
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<TensorViewMut<'a, F>>) {
        out.push(view_mut(format!("{prefix}.weight"), TensorKind::Trainable, &mut self.w));
        if let Some(b) = &mut self.b {
            out.push(view_mut(format!("{prefix}.bias"), TensorKind::Trainable, b));
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct BatchNorm<F> {
    gamma: Array1<F>,
    beta: Array1<F>,
    running_mean: Array1<F>,
    running_var: Array1<F>,
}

#[derive(Debug, Clone)]
struct BnCache<F> {
    xhat: Array2<F>,
    inv_std: Array1<F>,
}

impl<F: Scalar> BatchNorm<F> {
    fn new(d: usize) -> Self {
        BatchNorm {
            gamma: Array1::ones(d),
            beta: Array1::zeros(d),
            running_mean: Array1::zeros(d),
            running_var: Array1::ones(d),
        }
    }

    fn zeros(d: usize) -> Self {
        BatchNorm {
            gamma: Array1::zeros(d),
            ..BatchNorm::new(d)
        }
    }

    /// Normalises over rows. With `batch_stats` the third element holds the
    /// batch mean and unbiased variance for the running update.
    #[allow(clippy::type_complexity)]
    fn forward(&self, x: &Array2<F>, batch_stats: bool) -> (Array2<F>, BnCache<F>, Option<(Array1<F>, Array1<F>)>) {
        let (mean, var, stats) = if batch_stats {
            let n = x.nrows();
            let mean = x.mean_axis(Axis(0)).expect("batch is non-empty");
            let centered = x - &mean;
            let var = (&centered * &centered).mean_axis(Axis(0)).expect("batch is non-empty");
            let unbiased = if n > 1 { &var * cast::<F>(n as f64 / (n - 1) as f64) } else { var.clone() };
            (mean.clone(), var, Some((mean, unbiased)))
        } else {
            (self.running_mean.clone(), self.running_var.clone(), None)
        };
        let eps = cast::<F>(BN_EPS);
        let inv_std = var.mapv(|v| F::one() / (v + eps).sqrt());
        let xhat = (x - &mean) * &inv_std;
        let y = &xhat * &self.gamma + &self.beta;
        (y, BnCache { xhat, inv_std }, stats)
    }

    /// Backward through batch-statistics normalisation.
    fn backward(&self, cache: &BnCache<F>, dy: &Array2<F>, grad: &mut BatchNorm<F>) -> Array2<F> {
        let n = cast::<F>(dy.nrows() as f64);
        grad.gamma += &(dy * &cache.xhat).sum_axis(Axis(0));
        grad.beta += &dy.sum_axis(Axis(0));
        let dxhat = dy * &self.gamma;
        let sum_d = dxhat.sum_axis(Axis(0));
        let sum_dx = (&dxhat * &cache.xhat).sum_axis(Axis(0));
        let mut dx = &dxhat * n - &sum_d - &cache.xhat * &sum_dx;
        dx *= &(&cache.inv_std / n);
        dx
    }

    fn update(&mut self, mean: &Array1<F>, var: &Array1<F>) {
        let m = cast::<F>(BN_MOMENTUM);
        let one_m = F::one() - m;
        self.running_mean.zip_mut_with(mean, |r, &b| *r = m * *r + one_m * b);
        self.running_var.zip_mut_with(var, |r, &b| *r = m * *r + one_m * b);
    }

    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<TensorView<'a, F>>) {
        out.push(view(format!("{prefix}.gamma"), TensorKind::Trainable, &self.gamma));
        out.push(view(format!("{prefix}.beta"), TensorKind::Trainable, &self.beta));
        out.push(view(format!("{prefix}.running_mean"), TensorKind::Buffer, &self.running_mean));
        out.push(view(format!("{prefix}.running_var"), TensorKind::Buffer, &self.running_var));
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<TensorViewMut<'a, F>>) {
        out.push(view_mut(format!("{prefix}.gamma"), TensorKind::Trainable, &mut self.gamma));
        out.push(view_mut(format!("{prefix}.beta"), TensorKind::Trainable, &mut self.beta));
        out.push(view_mut(format!("{prefix}.running_mean"), TensorKind::Buffer, &mut self.running_mean));
        out.push(view_mut(format!("{prefix}.running_var"), TensorKind::Buffer, &mut self.running_var));
    }
}

/// Scaled dot-product attention within each sample's `alpha` tokens, per head.
/// Returns the concatenated head outputs and the attention weights.
fn attention_forward<F: Scalar>(
    q: &Array2<F>,
    k: &Array2<F>,
    v: &Array2<F>,
    alpha: usize,
    heads: usize,
) -> (Array2<F>, Vec<F>) {
    let (rows, d) = q.dim();
    let dk = d / heads;
    let batch = rows / alpha;
    let scale = cast::<F>(1.0 / (dk as f64).sqrt());
    let (qs, ks, vs) = (
        q.as_slice().expect("contiguous"),
        k.as_slice().expect("contiguous"),
        v.as_slice().expect("contiguous"),
    );
    let mut out = vec![F::zero(); rows * d];
    let mut probs = vec![F::zero(); batch * heads * alpha * alpha];
    for b in 0..batch {
        for h in 0..heads {
            let p = &mut probs[(b * heads + h) * alpha * alpha..][..alpha * alpha];
            for i in 0..alpha {
                let qi = &qs[(b * alpha + i) * d + h * dk..][..dk];
                let row = &mut p[i * alpha..(i + 1) * alpha];
                let mut max = F::neg_infinity();
                for (j, s) in row.iter_mut().enumerate() {
                    *s = dot(qi, &ks[(b * alpha + j) * d + h * dk..][..dk]) * scale;
                    max = max.max(*s);
                }
                let mut sum = F::zero();
                for s in row.iter_mut() {
                    *s = (*s - max).exp();
                    sum += *s;
                }
                for s in row.iter_mut() {
                    *s /= sum;
                }
                let oi = &mut out[(b * alpha + i) * d + h * dk..][..dk];
                for (j, &pij) in row.iter().enumerate() {
                    let vj = &vs[(b * alpha + j) * d + h * dk..][..dk];
                    for (o, &x) in oi.iter_mut().zip(vj) {
                        *o += pij * x;
                    }
                }
            }
        }
    }
    (Array2::from_shape_vec((rows, d), out).expect("shape"), probs)
}

#[allow(clippy::type_complexity)]
fn attention_backward<F: Scalar>(
    q: &Array2<F>,
    k: &Array2<F>,
    v: &Array2<F>,
    probs: &[F],
    dout: &Array2<F>,
    alpha: usize,
    heads: usize,
) -> (Array2<F>, Array2<F>, Array2<F>) {
    let (rows, d) = q.dim();
    let dk = d / heads;
    let batch = rows / alpha;
    let scale = cast::<F>(1.0 / (dk as f64).sqrt());
    let (qs, ks, vs) = (
        q.as_slice().expect("contiguous"),
        k.as_slice().expect("contiguous"),
        v.as_slice().expect("contiguous"),
    );
    let dout = dout.as_standard_layout();
    let ds = dout.as_slice().expect("contiguous");
    let mut dq = vec![F::zero(); rows * d];
    let mut dkm = vec![F::zero(); rows * d];
    let mut dv = vec![F::zero(); rows * d];
    let mut dp = vec![F::zero(); alpha];
    for b in 0..batch {
        for h in 0..heads {
            let p = &probs[(b * heads + h) * alpha * alpha..][..alpha * alpha];
            for i in 0..alpha {
                let off_i = (b * alpha + i) * d + h * dk;
                let doi = &ds[off_i..][..dk];
                let row = &p[i * alpha..(i + 1) * alpha];
                let mut weighted = F::zero();
                for j in 0..alpha {
                    let off_j = (b * alpha + j) * d + h * dk;
                    dp[j] = dot(doi, &vs[off_j..][..dk]);
                    weighted += dp[j] * row[j];
                    for (g, &x) in dv[off_j..][..dk].iter_mut().zip(doi) {
                        *g += row[j] * x;
                    }
                }
                for j in 0..alpha {
                    let off_j = (b * alpha + j) * d + h * dk;
                    let dsij = row[j] * (dp[j] - weighted) * scale;
                    if dsij == F::zero() {
                        continue;
                    }
                    for c in 0..dk {
                        dq[off_i + c] += dsij * ks[off_j + c];
                        dkm[off_j + c] += dsij * qs[off_i + c];
                    }
                }
            }
        }
    }
    let shape = (rows, d);
    (
        Array2::from_shape_vec(shape, dq).expect("shape"),
        Array2::from_shape_vec(shape, dkm).expect("shape"),
        Array2::from_shape_vec(shape, dv).expect("shape"),
    )
}

/// `h' = BN(h + MHA(h))`, then `BN(h' + FF(h'))`.
#[derive(Debug, Clone, PartialEq)]
struct AttentionLayer<F> {
    wq: Linear<F>,
    wk: Linear<F>,
    wv: Linear<F>,
    wo: Linear<F>,
    bn1: BatchNorm<F>,
    ff1: Linear<F>,
    ff2: Linear<F>,
    bn2: BatchNorm<F>,
}

#[derive(Debug, Clone)]
struct LayerCache<F> {
    input: Array2<F>,
    q: Array2<F>,
    k: Array2<F>,
    v: Array2<F>,
    probs: Vec<F>,
    att: Array2<F>,
    bn1: BnCache<F>,
    hhat: Array2<F>,
    ff_act: Array2<F>,
    bn2: BnCache<F>,
}

impl<F: Scalar> AttentionLayer<F> {
    fn init(rng: &mut rng::Rng, d: usize, d_ff: usize) -> Self {
        AttentionLayer {
            wq: Linear::init(rng, d, d, false),
            wk: Linear::init(rng, d, d, false),
            wv: Linear::init(rng, d, d, false),
            wo: Linear::init(rng, d, d, false),
            bn1: BatchNorm::new(d),
            ff1: Linear::init(rng, d, d_ff, true),
            ff2: Linear::init(rng, d_ff, d, true),
            bn2: BatchNorm::new(d),
        }
    }

    fn zeros(d: usize, d_ff: usize) -> Self {
        AttentionLayer {
            wq: Linear::zeros(d, d, false),
            wk: Linear::zeros(d, d, false),
            wv: Linear::zeros(d, d, false),
            wo: Linear::zeros(d, d, false),
            bn1: BatchNorm::zeros(d),
            ff1: Linear::zeros(d, d_ff, true),
            ff2: Linear::zeros(d_ff, d, true),
            bn2: BatchNorm::zeros(d),
        }
    }

    fn forward(
        &self,
        input: Array2<F>,
        alpha: usize,
        heads: usize,
        batch_stats: bool,
        stats: &mut Vec<(Array1<F>, Array1<F>)>,
    ) -> (Array2<F>, LayerCache<F>) {
        let q = self.wq.forward(&input);
        let k = self.wk.forward(&input);
        let v = self.wv.forward(&input);
        let (att, probs) = attention_forward(&q, &k, &v, alpha, heads);
        let r1 = &input + &self.wo.forward(&att);
        let (hhat, bn1, s1) = self.bn1.forward(&r1, batch_stats);
        let ff_act = relu(self.ff1.forward(&hhat));
        let r2 = &hhat + &self.ff2.forward(&ff_act);
        let (out, bn2, s2) = self.bn2.forward(&r2, batch_stats);
        stats.extend(s1);
        stats.extend(s2);
        let cache = LayerCache {
            input,
            q,
            k,
            v,
            probs,
            att,
            bn1,
            hhat,
            ff_act,
            bn2,
        };
        (out, cache)
    }

    fn backward(
        &self,
        cache: &LayerCache<F>,
        dout: &Array2<F>,
        alpha: usize,
        heads: usize,
        grad: &mut AttentionLayer<F>,
    ) -> Array2<F> {
        let dr2 = self.bn2.backward(&cache.bn2, dout, &mut grad.bn2);
        let mut dff = self.ff2.backward(&cache.ff_act, &dr2, &mut grad.ff2, true).expect("dx requested");
        relu_mask(&mut dff, &cache.ff_act);
        let dhhat = dr2 + self.ff1.backward(&cache.hhat, &dff, &mut grad.ff1, true).expect("dx requested");
        let dr1 = self.bn1.backward(&cache.bn1, &dhhat, &mut grad.bn1);
        let datt = self.wo.backward(&cache.att, &dr1, &mut grad.wo, true).expect("dx requested");
        let (dq, dk, dv) = attention_backward(&cache.q, &cache.k, &cache.v, &cache.probs, &datt, alpha, heads);
        let mut din = dr1;
        for (lin, g, d) in [
            (&self.wq, &mut grad.wq, &dq),
            (&self.wk, &mut grad.wk, &dk),
            (&self.wv, &mut grad.wv, &dv),
        ] {
            din += &lin.backward(&cache.input, d, g, true).expect("dx requested");
        }
        din
    }

    fn batch_norms_mut(&mut self) -> [&mut BatchNorm<F>; 2] {
        [&mut self.bn1, &mut self.bn2]
    }

    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<TensorView<'a, F>>) {
        self.wq.visit(&format!("{prefix}.attn.q"), out);
        self.wk.visit(&format!("{prefix}.attn.k"), out);
        self.wv.visit(&format!("{prefix}.attn.v"), out);
        self.wo.visit(&format!("{prefix}.attn.o"), out);
        self.bn1.visit(&format!("{prefix}.bn1"), out);
        self.ff1.visit(&format!("{prefix}.ff1"), out);
        self.ff2.visit(&format!("{prefix}.ff2"), out);
        self.bn2.visit(&format!("{prefix}.bn2"), out);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<TensorViewMut<'a, F>>) {
        self.wq.visit_mut(&format!("{prefix}.attn.q"), out);
        self.wk.visit_mut(&format!("{prefix}.attn.k"), out);
        self.wv.visit_mut(&format!("{prefix}.attn.v"), out);
        self.wo.visit_mut(&format!("{prefix}.attn.o"), out);
        self.bn1.visit_mut(&format!("{prefix}.bn1"), out);
        self.ff1.visit_mut(&format!("{prefix}.ff1"), out);
        self.ff2.visit_mut(&format!("{prefix}.ff2"), out);
        self.bn2.visit_mut(&format!("{prefix}.bn2"), out);
    }
}

/// Intermediate values of a forward pass, needed by [`PolicyWeights::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache<F> {
    batch: usize,
    embedding: Array2<F>,
    layers: Vec<LayerCache<F>>,
    /// Input of every MLP layer; hidden inputs are post-ReLU.
    mlp_inputs: Vec<Array2<F>>,
}

impl<F> ForwardCache<F> {
    pub fn batch(&self) -> usize {
        self.batch
    }
}

/// Batch mean and unbiased variance of every batch-norm, in layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats<F>(Vec<(Array1<F>, Array1<F>)>);

/// All tensors of the policy network.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyWeights<F> {
    config: PolicyConfig,
    mode: Mode,
    /// Positional code, derived from the config and never trained.
    pe: Array2<F>,
    proj: Option<Linear<F>>,
    layers: Vec<AttentionLayer<F>>,
    mlp: Vec<Linear<F>>,
}

impl<F: Scalar> PolicyWeights<F> {
    /// Seeded uniform `+-1/sqrt(fan_in)` initialisation in training mode.
    pub fn init(config: &PolicyConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = rng::seeded(config.seed);
        let d = config.d_model;
        let (proj, layers) = if config.use_attention {
            let proj = Linear::init(&mut rng, 2 * config.window, d, true);
            let layers = (0..config.layers).map(|_| AttentionLayer::init(&mut rng, d, config.d_ff)).collect();
            (Some(proj), layers)
        } else {
            (None, Vec::new())
        };
        let mut mlp = Vec::new();
        let mut fan_in = config.flat_width();
        for &width in config.mlp_dims.iter().chain(std::iter::once(&1)) {
            mlp.push(Linear::init(&mut rng, fan_in, width, true));
            fan_in = width;
        }
        Ok(PolicyWeights::assemble(config, Mode::Train, proj, layers, mlp))
    }

    /// Every trainable tensor zero, running variances one.
    pub fn zeros(config: &PolicyConfig) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let (proj, layers) = if config.use_attention {
            let layers = (0..config.layers).map(|_| AttentionLayer::zeros(d, config.d_ff)).collect();
            (Some(Linear::zeros(2 * config.window, d, true)), layers)
        } else {
            (None, Vec::new())
        };
        let mut mlp = Vec::new();
        let mut fan_in = config.flat_width();
        for &width in config.mlp_dims.iter().chain(std::iter::once(&1)) {
            mlp.push(Linear::zeros(fan_in, width, true));
            fan_in = width;
        }
        Ok(PolicyWeights::assemble(config, Mode::Train, proj, layers, mlp))
    }

    fn assemble(
        config: &PolicyConfig,
        mode: Mode,
        proj: Option<Linear<F>>,
        layers: Vec<AttentionLayer<F>>,
        mlp: Vec<Linear<F>>,
    ) -> Self {
        let pe = positional_encoding(config.alpha(), config.window).mapv(cast::<F>);
        PolicyWeights {
            config: config.clone(),
            mode,
            pe,
            proj,
            layers,
            mlp,
        }
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    /// Named views of every tensor in a fixed order.
    pub fn tensors(&self) -> Vec<TensorView<'_, F>> {
        let mut out = Vec::new();
        if let Some(p) = &self.proj {
            p.visit("proj", &mut out);
        }
        for (l, layer) in self.layers.iter().enumerate() {
            layer.visit(&format!("layers.{l}"), &mut out);
        }
        for (i, lin) in self.mlp.iter().enumerate() {
            lin.visit(&format!("mlp.{i}"), &mut out);
        }
        out
    }

    /// Mutable counterpart of [`tensors`](Self::tensors), same order.
    pub fn tensors_mut(&mut self) -> Vec<TensorViewMut<'_, F>> {
        let mut out = Vec::new();
        if let Some(p) = &mut self.proj {
            p.visit_mut("proj", &mut out);
        }
        for (l, layer) in self.layers.iter_mut().enumerate() {
            layer.visit_mut(&format!("layers.{l}"), &mut out);
        }
        for (i, lin) in self.mlp.iter_mut().enumerate() {
            lin.visit_mut(&format!("mlp.{i}"), &mut out);
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors()
            .iter()
            .filter(|t| t.kind == TensorKind::Trainable)
            .map(|t| t.data.len())
            .sum()
    }

    /// `(batch * alpha) x 2 d_h` token matrix: window values then positional code.
    fn embed(&self, traces: &[f64]) -> Array2<F> {
        let cfg = &self.config;
        let (alpha, dh) = (cfg.alpha(), cfg.window);
        let batch = traces.len() / cfg.beta;
        Array2::from_shape_fn((batch * alpha, 2 * dh), |(row, col)| {
            let (b, k) = (row / alpha, row % alpha);
            if col < dh {
                cast(traces[b * cfg.beta + k * cfg.stride + col])
            } else {
                self.pe[[k, col - dh]]
            }
        })
    }

    /// Logits for a row-major `batch x beta` matrix of traces. With
    /// `batch_stats` batch norm uses the statistics of this batch (training
    /// behaviour) regardless of the weights' mode.
    pub fn forward_logits(&self, traces: &[f64], batch_stats: bool) -> (Array1<F>, ForwardCache<F>, BatchStats<F>) {
        let cfg = &self.config;
        let batch = traces.len() / cfg.beta;
        let alpha = cfg.alpha();
        let embedding = self.embed(traces);
        let mut stats = Vec::new();
        let mut layers = Vec::with_capacity(self.layers.len());
        let mut x = match &self.proj {
            Some(proj) => {
                let mut h = proj.forward(&embedding);
                for layer in &self.layers {
                    let (out, cache) = layer.forward(h, alpha, cfg.heads, batch_stats, &mut stats);
                    layers.push(cache);
                    h = out;
                }
                reshape(h, batch, cfg.flat_width())
            }
            None => reshape(embedding.clone(), batch, cfg.flat_width()),
        };
        let mut mlp_inputs = Vec::with_capacity(self.mlp.len());
        let last = self.mlp.len() - 1;
        for (i, lin) in self.mlp.iter().enumerate() {
            let y = lin.forward(&x);
            mlp_inputs.push(x);
            x = if i < last { relu(y) } else { y };
        }
        let logits = x.column(0).to_owned();
        let cache = ForwardCache {
            batch,
            embedding,
            layers,
            mlp_inputs,
        };
        (logits, cache, BatchStats(stats))
    }

    /// Gradients of `sum_b dlogits[b] * logit_b` with respect to every
    /// trainable tensor, returned as a weights-shaped container.
    pub fn backward(&self, cache: &ForwardCache<F>, dlogits: &Array1<F>) -> PolicyWeights<F> {
        let cfg = &self.config;
        let mut grad = PolicyWeights::zeros(cfg).expect("config was validated");
        grad.mode = self.mode;
        let mut dy = dlogits.clone().insert_axis(Axis(1));
        for i in (0..self.mlp.len()).rev() {
            let need_dx = i > 0 || self.proj.is_some();
            let dx = self.mlp[i].backward(&cache.mlp_inputs[i], &dy, &mut grad.mlp[i], need_dx);
            match dx {
                Some(mut dx) if i > 0 => {
                    relu_mask(&mut dx, &cache.mlp_inputs[i]);
                    dy = dx;
                }
                Some(dx) => dy = dx,
                None => return grad,
            }
        }
        let (Some(proj), Some(gproj)) = (&self.proj, &mut grad.proj) else {
            return grad;
        };
        let mut dh = reshape(dy, cache.batch * cfg.alpha(), cfg.d_model);
        for l in (0..self.layers.len()).rev() {
            dh = self.layers[l].backward(&cache.layers[l], &dh, cfg.alpha(), cfg.heads, &mut grad.layers[l]);
        }
        proj.backward(&cache.embedding, &dh, gproj, false);
        grad
    }

    /// Folds batch statistics into the running statistics.
    pub fn update_running(&mut self, stats: &BatchStats<F>) {
        let norms = self.layers.iter_mut().flat_map(AttentionLayer::batch_norms_mut);
        for (bn, (mean, var)) in norms.zip(&stats.0) {
            bn.update(mean, var);
        }
    }

    /// Probabilities for a row-major `u x beta` matrix of traces.
    pub fn predict(&self, traces: &[f64]) -> Result<Vec<f64>> {
        let beta = self.config.beta;
        if traces.len() % beta != 0 {
            return Err(Error::invalid(
                "traces",
                format!("length {} is not a multiple of beta = {beta}", traces.len()),
            ));
        }
        if traces.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("traces", "values must be finite"));
        }
        let chunk = match self.mode {
            Mode::Inference => PREDICT_CHUNK * beta,
            Mode::Train => traces.len().max(1),
        };
        let mut out = Vec::with_capacity(traces.len() / beta);
        for part in traces.chunks(chunk) {
            let (logits, _, _) = self.forward_logits(part, self.mode == Mode::Train);
            out.extend(logits.iter().map(|z| sigmoid(z.to_f64().expect("logit is a float"))));
        }
        Ok(out)
    }
}

/// Logistic function kept inside `[1e-12, 1 - 1e-12]`.
pub fn sigmoid(z: f64) -> f64 {
    (1.0 / (1.0 + (-z).exp())).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}
