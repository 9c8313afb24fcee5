//! Small pre-norm transformer encoder with confidence-interpolated token
//! embeddings and three heads (masked-token, noise, box error).
//!
//! Everything runs in f64 with hand-written backward passes so gradients
//! can be checked against finite differences.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{ParamId, ParamStore};
use crate::error::{Error, Result};

const NORM_EPS: f64 = 1e-6;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    pub max_seq_len: usize,
    pub vocab_size: usize,
    pub alpha_init: f64,
    pub alpha_trainable: bool,
    /// Standard deviation of the token embedding table at init.
    pub embedding_init_std: f64,
    pub position_init_std: f64,
}

impl EncoderConfig {
    pub fn tiny(vocab_size: usize) -> Self {
        EncoderConfig {
            num_layers: 2,
            hidden_dim: 64,
            num_heads: 4,
            ffn_dim: 256,
            max_seq_len: 256,
            vocab_size,
            alpha_init: 0.5,
            alpha_trainable: true,
            embedding_init_std: 3.0,
            position_init_std: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_heads == 0 || self.hidden_dim % self.num_heads != 0 {
            return Err(Error::invalid(format!(
                "hidden dim {} not divisible by {} heads",
                self.hidden_dim, self.num_heads
            )));
        }
        if self.max_seq_len < 2 {
            return Err(Error::invalid("max_seq_len must be at least 2"));
        }
        if self.vocab_size < 2 || self.num_layers == 0 || self.ffn_dim == 0 {
            return Err(Error::invalid("vocab, layers and ffn width must be positive"));
        }
        if !(0.0..=1.0).contains(&self.alpha_init) {
            return Err(Error::invalid("alpha_init must be in [0,1]"));
        }
        if self.alpha_trainable && (self.alpha_init <= 0.0 || self.alpha_init >= 1.0) {
            return Err(Error::invalid("trainable alpha must start strictly inside (0,1)"));
        }
        Ok(())
    }
}

/// How OCR confidence enters the token embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "alpha", rename_all = "snake_case")]
pub enum ConfidenceMode {
    /// Confidence ignored: plain token embeddings.
    Plain,
    /// Interpolation weight learned through a logistic-squashed scalar.
    Trainable,
    /// Interpolation weight pinned; endpoints 0 and 1 allowed.
    Fixed(f64),
}

impl ConfidenceMode {
    pub fn from_config(cfg: &EncoderConfig) -> Self {
        if cfg.alpha_trainable {
            ConfidenceMode::Trainable
        } else {
            ConfidenceMode::Fixed(cfg.alpha_init)
        }
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `(1 - alpha) * emb + alpha * (1 - p)` with the scalar broadcast.
pub fn interpolate_embedding(emb: &[f64], p_ocr: f64, alpha: f64) -> Vec<f64> {
    let signal = alpha * (1.0 - p_ocr);
    emb.iter().map(|e| (1.0 - alpha) * e + signal).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct LayerIds {
    norm1: ParamId,
    wq: ParamId,
    bq: ParamId,
    wk: ParamId,
    bk: ParamId,
    wv: ParamId,
    bv: ParamId,
    wo: ParamId,
    bo: ParamId,
    norm2: ParamId,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct ParamIds {
    tok_emb: ParamId,
    pos_emb: ParamId,
    alpha_raw: Option<ParamId>,
    layers: Vec<LayerIds>,
    norm_f: ParamId,
    mlm_w: ParamId,
    mlm_b: ParamId,
    noise_w: ParamId,
    noise_b: ParamId,
    err_w: ParamId,
    err_b: ParamId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorModel {
    pub config: EncoderConfig,
    pub mode: ConfidenceMode,
    pub params: ParamStore,
    ids: ParamIds,
}

struct LayerCache {
    x_in: Array2<f64>,
    inv_r1: Array1<f64>,
    h1: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    o: Array2<f64>,
    x_mid: Array2<f64>,
    inv_r2: Array1<f64>,
    h2: Array2<f64>,
    u: Array2<f64>,
    g: Array2<f64>,
}

/// Activations of one sequence, kept for the backward pass.
pub struct ForwardPass {
    tokens: Vec<u32>,
    confidences: Vec<f64>,
    layers: Vec<LayerCache>,
    x_last: Array2<f64>,
    inv_rf: Array1<f64>,
    /// Final normalised hidden states, one row per token.
    pub hidden: Array2<f64>,
}

fn rms_forward(x: &Array2<f64>, gain: ndarray::ArrayView1<f64>) -> (Array2<f64>, Array1<f64>) {
    let d = x.ncols() as f64;
    let inv_r: Array1<f64> = x
        .rows()
        .into_iter()
        .map(|row| 1.0 / (row.dot(&row) / d + NORM_EPS).sqrt())
        .collect();
    let mut y = x.clone();
    for (mut row, &ir) in y.rows_mut().into_iter().zip(inv_r.iter()) {
        row.zip_mut_with(&gain, |v, &g| *v *= ir * g);
    }
    (y, inv_r)
}

/// Returns dx and accumulates the gain gradient.
fn rms_backward(
    x: &Array2<f64>,
    inv_r: &Array1<f64>,
    gain: ndarray::ArrayView1<f64>,
    dy: &Array2<f64>,
    dgain: &mut ndarray::ArrayViewMut1<f64>,
) -> Array2<f64> {
    let d = x.ncols();
    let mut dx = Array2::zeros(x.raw_dim());
    for i in 0..x.nrows() {
        let ir = inv_r[i];
        let (xr, dyr) = (x.row(i), dy.row(i));
        let mut dot = 0.0;
        for k in 0..d {
            let xhat = xr[k] * ir;
            dgain[k] += dyr[k] * xhat;
            dot += dyr[k] * gain[k] * xhat;
        }
        let mean = dot / d as f64;
        let mut dxr = dx.row_mut(i);
        for k in 0..d {
            let xhat = xr[k] * ir;
            dxr[k] = ir * (dyr[k] * gain[k] - xhat * mean);
        }
    }
    dx
}

fn gelu(u: f64) -> f64 {
    0.5 * u * (1.0 + (GELU_C * (u + 0.044715 * u * u * u)).tanh())
}

fn gelu_grad(u: f64) -> f64 {
    let t = (GELU_C * (u + 0.044715 * u * u * u)).tanh();
    0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * u * u)
}

fn softmax_rows(m: &mut Array2<f64>) {
    for mut row in m.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn affine(x: &ArrayView2<f64>, w: ArrayView2<f64>, b: ndarray::ArrayView1<f64>) -> Array2<f64> {
    let mut y = x.dot(&w);
    y += &b;
    y
}

/// Accumulates `dW += x^T dy`, `db += sum(dy)` and returns `dy W^T`.
fn affine_backward(
    grads: &mut ParamStore,
    params: &ParamStore,
    w: ParamId,
    b: ParamId,
    x: &ArrayView2<f64>,
    dy: &Array2<f64>,
) -> Array2<f64> {
    grads.m_mut(w).scaled_add(1.0, &x.t().dot(dy));
    grads.v_mut(b).scaled_add(1.0, &dy.sum_axis(Axis(0)));
    dy.dot(&params.m(w).t())
}

impl DetectorModel {
    pub fn new<R: Rng + ?Sized>(config: EncoderConfig, mode: ConfidenceMode, rng: &mut R) -> Result<Self> {
        config.validate()?;
        if let ConfidenceMode::Fixed(a) = mode {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::invalid(format!("fixed alpha {a} outside [0,1]")));
            }
        }
        let (d, f, v) = (config.hidden_dim, config.ffn_dim, config.vocab_size);
        let mut p = ParamStore::default();
        let lecun = |fan_in: usize| 1.0 / (fan_in as f64).sqrt();
        let tok_emb = p.add_normal("embeddings.token", vec![v, d], config.embedding_init_std, rng);
        let pos_emb = p.add_normal("embeddings.position", vec![config.max_seq_len, d], config.position_init_std, rng);
        let mut layers = Vec::with_capacity(config.num_layers);
        for l in 0..config.num_layers {
            let name = |s: &str| format!("layer{l}.{s}");
            layers.push(LayerIds {
                norm1: p.add_constant(name("attn_norm.gain"), vec![d], 1.0),
                wq: p.add_normal(name("attn.query.weight"), vec![d, d], lecun(d), rng),
                bq: p.add_constant(name("attn.query.bias"), vec![d], 0.0),
                wk: p.add_normal(name("attn.key.weight"), vec![d, d], lecun(d), rng),
                bk: p.add_constant(name("attn.key.bias"), vec![d], 0.0),
                wv: p.add_normal(name("attn.value.weight"), vec![d, d], lecun(d), rng),
                bv: p.add_constant(name("attn.value.bias"), vec![d], 0.0),
                wo: p.add_normal(name("attn.output.weight"), vec![d, d], lecun(d), rng),
                bo: p.add_constant(name("attn.output.bias"), vec![d], 0.0),
                norm2: p.add_constant(name("ffn_norm.gain"), vec![d], 1.0),
                w1: p.add_normal(name("ffn.in.weight"), vec![d, f], lecun(d), rng),
                b1: p.add_constant(name("ffn.in.bias"), vec![f], 0.0),
                w2: p.add_normal(name("ffn.out.weight"), vec![f, d], lecun(f), rng),
                b2: p.add_constant(name("ffn.out.bias"), vec![d], 0.0),
            });
        }
        let norm_f = p.add_constant("final_norm.gain", vec![d], 1.0);
        let mlm_w = p.add_normal("heads.mlm.weight", vec![d, v], lecun(d), rng);
        let mlm_b = p.add_constant("heads.mlm.bias", vec![v], 0.0);
        let noise_w = p.add_normal("heads.noise.weight", vec![d, 2], lecun(d), rng);
        let noise_b = p.add_constant("heads.noise.bias", vec![2], 0.0);
        let err_w = p.add_constant("heads.error.weight", vec![d, 2], 0.0);
        let err_b = p.add_constant("heads.error.bias", vec![2], 0.0);
        // Created last and without randomness so every mode shares the
        // same initial draws for the remaining tensors.
        let alpha_raw = match mode {
            ConfidenceMode::Trainable => {
                let a = config.alpha_init;
                Some(p.add("alpha.raw", vec![1], vec![(a / (1.0 - a)).ln()]))
            }
            _ => None,
        };
        Ok(DetectorModel {
            config,
            mode,
            params: p,
            ids: ParamIds {
                tok_emb,
                pos_emb,
                alpha_raw,
                layers,
                norm_f,
                mlm_w,
                mlm_b,
                noise_w,
                noise_b,
                err_w,
                err_b,
            },
        })
    }

    /// Rebuilds a model around stored tensors (checkpoint loading).
    pub(crate) fn from_parts(config: EncoderConfig, mode: ConfidenceMode, params: ParamStore) -> Result<Self> {
        let mut rng = rand::rngs::mock::StepRng::new(0, 1);
        let mut model = DetectorModel::new(config, mode, &mut rng)?;
        if params.tensors.len() != model.params.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                model.params.tensors.len(),
                params.tensors.len()
            )));
        }
        for (want, got) in model.params.tensors.iter().zip(&params.tensors) {
            if want.name != got.name || want.shape != got.shape {
                return Err(Error::Checkpoint(format!(
                    "tensor {} {:?} does not match expected {} {:?}",
                    got.name, got.shape, want.name, want.shape
                )));
            }
        }
        model.params = params;
        Ok(model)
    }

    /// The interpolation weight currently in effect (0 for plain models).
    pub fn alpha(&self) -> f64 {
        match self.mode {
            ConfidenceMode::Plain => 0.0,
            ConfidenceMode::Fixed(a) => a,
            ConfidenceMode::Trainable => {
                logistic(self.params.tensors[self.ids.alpha_raw.unwrap()].data[0])
            }
        }
    }

    pub fn error_head_ids(&self) -> (ParamId, ParamId) {
        (self.ids.err_w, self.ids.err_b)
    }

    /// Pre-positional embedding of one token carrying confidence `p_ocr`.
    pub fn token_embedding(&self, token: u32, p_ocr: f64) -> Vec<f64> {
        let emb = self.params.row(self.ids.tok_emb, token as usize);
        match self.mode {
            ConfidenceMode::Plain => emb.to_vec(),
            _ => interpolate_embedding(emb, p_ocr, self.alpha()),
        }
    }

    /// Input vector of the encoder at `position`: interpolated token
    /// embedding plus the (never interpolated) positional embedding.
    pub fn confidence_aware_embed(&self, token: u32, position: usize, p_ocr: f64) -> Vec<f64> {
        let pos = self.params.row(self.ids.pos_emb, position);
        self.token_embedding(token, p_ocr)
            .into_iter()
            .zip(pos)
            .map(|(e, p)| e + p)
            .collect()
    }

    fn check_input(&self, tokens: &[u32], confidences: &[f64]) {
        assert_eq!(tokens.len(), confidences.len(), "token/confidence length mismatch");
        assert!(!tokens.is_empty(), "empty sequence");
        assert!(tokens.len() <= self.config.max_seq_len, "sequence longer than max_seq_len");
    }

    pub fn forward(&self, tokens: &[u32], confidences: &[f64]) -> ForwardPass {
        self.check_input(tokens, confidences);
        let (n, d) = (tokens.len(), self.config.hidden_dim);
        let mut x = Array2::zeros((n, d));
        for (i, (&t, &p)) in tokens.iter().zip(confidences).enumerate() {
            let e = self.token_embedding(t, p);
            let pos = self.params.row(self.ids.pos_emb, i);
            for k in 0..d {
                x[[i, k]] = e[k] + pos[k];
            }
        }
        let mut layers = Vec::with_capacity(self.ids.layers.len());
        for ids in &self.ids.layers {
            let (cache, out) = self.layer_forward(ids, x);
            layers.push(cache);
            x = out;
        }
        let (hidden, inv_rf) = rms_forward(&x, self.params.v(self.ids.norm_f));
        ForwardPass {
            tokens: tokens.to_vec(),
            confidences: confidences.to_vec(),
            layers,
            x_last: x,
            inv_rf,
            hidden,
        }
    }

    fn layer_forward(&self, ids: &LayerIds, x_in: Array2<f64>) -> (LayerCache, Array2<f64>) {
        let p = &self.params;
        let heads = self.config.num_heads;
        let dh = self.config.hidden_dim / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let (h1, inv_r1) = rms_forward(&x_in, p.v(ids.norm1));
        let hv = h1.view();
        let q = affine(&hv, p.m(ids.wq), p.v(ids.bq));
        let k = affine(&hv, p.m(ids.wk), p.v(ids.bk));
        let v = affine(&hv, p.m(ids.wv), p.v(ids.bv));
        let mut o = Array2::zeros(x_in.raw_dim());
        let mut probs = Vec::with_capacity(heads);
        for h in 0..heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let mut sc = q.slice(cols).dot(&k.slice(cols).t());
            sc.mapv_inplace(|v| v * scale);
            softmax_rows(&mut sc);
            o.slice_mut(cols).assign(&sc.dot(&v.slice(cols)));
            probs.push(sc);
        }
        let attn = affine(&o.view(), p.m(ids.wo), p.v(ids.bo));
        let x_mid = &x_in + &attn;
        let (h2, inv_r2) = rms_forward(&x_mid, p.v(ids.norm2));
        let u = affine(&h2.view(), p.m(ids.w1), p.v(ids.b1));
        let g = u.mapv(gelu);
        let ffn = affine(&g.view(), p.m(ids.w2), p.v(ids.b2));
        let x_out = &x_mid + &ffn;
        (
            LayerCache {
                x_in,
                inv_r1,
                h1,
                q,
                k,
                v,
                probs,
                o,
                x_mid,
                inv_r2,
                h2,
                u,
                g,
            },
            x_out,
        )
    }

    /// Back-propagates `d hidden` through the body, accumulating into `grads`.
    pub fn backward(&self, fwd: &ForwardPass, d_hidden: &Array2<f64>, grads: &mut ParamStore) {
        let p = &self.params;
        let mut dx = {
            let mut dgain = grads.v_mut(self.ids.norm_f);
            rms_backward(&fwd.x_last, &fwd.inv_rf, p.v(self.ids.norm_f), d_hidden, &mut dgain)
        };
        for (ids, cache) in self.ids.layers.iter().zip(&fwd.layers).rev() {
            dx = self.layer_backward(ids, cache, dx, grads);
        }

        let alpha = self.alpha();
        let mut d_alpha = 0.0;
        for (i, (&t, &conf)) in fwd.tokens.iter().zip(&fwd.confidences).enumerate() {
            let g = dx.row(i);
            let pos = grads.row_mut(self.ids.pos_emb, i);
            for k in 0..g.len() {
                pos[k] += g[k];
            }
            match self.mode {
                ConfidenceMode::Plain => {
                    let e = grads.row_mut(self.ids.tok_emb, t as usize);
                    for k in 0..g.len() {
                        e[k] += g[k];
                    }
                }
                _ => {
                    let emb = p.row(self.ids.tok_emb, t as usize);
                    for k in 0..g.len() {
                        d_alpha += g[k] * ((1.0 - conf) - emb[k]);
                    }
                    let e = grads.row_mut(self.ids.tok_emb, t as usize);
                    for k in 0..g.len() {
                        e[k] += (1.0 - alpha) * g[k];
                    }
                }
            }
        }
        if let Some(raw) = self.ids.alpha_raw {
            grads.tensors[raw].data[0] += d_alpha * alpha * (1.0 - alpha);
        }
    }

    fn layer_backward(
        &self,
        ids: &LayerIds,
        c: &LayerCache,
        d_out: Array2<f64>,
        grads: &mut ParamStore,
    ) -> Array2<f64> {
        let p = &self.params;
        let heads = self.config.num_heads;
        let dh = self.config.hidden_dim / heads;
        let scale = 1.0 / (dh as f64).sqrt();

        let dg = affine_backward(grads, p, ids.w2, ids.b2, &c.g.view(), &d_out);
        let mut du = dg;
        du.zip_mut_with(&c.u, |d, &u| *d *= gelu_grad(u));
        let dh2 = affine_backward(grads, p, ids.w1, ids.b1, &c.h2.view(), &du);
        let mut d_mid = {
            let mut dgain = grads.v_mut(ids.norm2);
            rms_backward(&c.x_mid, &c.inv_r2, p.v(ids.norm2), &dh2, &mut dgain)
        };
        d_mid += &d_out;

        let d_o = affine_backward(grads, p, ids.wo, ids.bo, &c.o.view(), &d_mid);
        let mut dq = Array2::zeros(c.q.raw_dim());
        let mut dk = Array2::zeros(c.k.raw_dim());
        let mut dv = Array2::zeros(c.v.raw_dim());
        for h in 0..heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let probs = &c.probs[h];
            let doh = d_o.slice(cols);
            let dprobs = doh.dot(&c.v.slice(cols).t());
            dv.slice_mut(cols).assign(&probs.t().dot(&doh));
            let mut dsc = dprobs;
            for (mut drow, prow) in dsc.rows_mut().into_iter().zip(probs.rows()) {
                let inner = drow.dot(&prow);
                drow.zip_mut_with(&prow, |dv, &pv| *dv = pv * (*dv - inner) * scale);
            }
            dq.slice_mut(cols).assign(&dsc.dot(&c.k.slice(cols)));
            dk.slice_mut(cols).assign(&dsc.t().dot(&c.q.slice(cols)));
        }
        let h1 = c.h1.view();
        let mut dh1 = affine_backward(grads, p, ids.wq, ids.bq, &h1, &dq);
        dh1 += &affine_backward(grads, p, ids.wk, ids.bk, &h1, &dk);
        dh1 += &affine_backward(grads, p, ids.wv, ids.bv, &h1, &dv);
        let mut d_in = {
            let mut dgain = grads.v_mut(ids.norm1);
            rms_backward(&c.x_in, &c.inv_r1, p.v(ids.norm1), &dh1, &mut dgain)
        };
        d_in += &d_mid;
        d_in
    }

    fn head_logits(&self, rows: &Array2<f64>, w: ParamId, b: ParamId) -> Array2<f64> {
        affine(&rows.view(), self.params.m(w), self.params.v(b))
    }

    /// Mean-pooled hidden state per span; empty spans borrow the state of
    /// the token just before them.
    pub fn pool_spans(hidden: &Array2<f64>, spans: &[std::ops::Range<usize>]) -> Array2<f64> {
        let mut pooled = Array2::zeros((spans.len(), hidden.ncols()));
        for (j, span) in spans.iter().enumerate() {
            let mut row = pooled.row_mut(j);
            if span.is_empty() {
                row.assign(&hidden.row(span.start.saturating_sub(1)));
            } else {
                let m = hidden.slice(s![span.clone(), ..]).mean_axis(Axis(0)).unwrap();
                row.assign(&m);
            }
        }
        pooled
    }

    /// Error-head logits `[no error, error]` for each span.
    pub fn error_logits(&self, fwd: &ForwardPass, spans: &[std::ops::Range<usize>]) -> Array2<f64> {
        let pooled = Self::pool_spans(&fwd.hidden, spans);
        self.head_logits(&pooled, self.ids.err_w, self.ids.err_b)
    }

    pub fn noise_logits(&self, fwd: &ForwardPass, positions: &[usize]) -> Array2<f64> {
        let rows = fwd.hidden.select(Axis(0), positions);
        self.head_logits(&rows, self.ids.noise_w, self.ids.noise_b)
    }

    pub fn mlm_logits(&self, fwd: &ForwardPass, positions: &[usize]) -> Array2<f64> {
        let rows = fwd.hidden.select(Axis(0), positions);
        self.head_logits(&rows, self.ids.mlm_w, self.ids.mlm_b)
    }

    /// Softmax cross-entropy of a head, scaled per example by `weights`.
    /// Returns the weighted loss sum and accumulates head gradients plus
    /// the gradient w.r.t. the head input rows into `d_rows`.
    fn head_ce(
        &self,
        rows: &Array2<f64>,
        w: ParamId,
        b: ParamId,
        targets: &[usize],
        weights: &[f64],
        grads: Option<(&mut ParamStore, &mut Array2<f64>)>,
    ) -> f64 {
        let logits = self.head_logits(rows, w, b);
        let mut dlogits = Array2::zeros(logits.raw_dim());
        let mut loss = 0.0;
        for (j, (&t, &wt)) in targets.iter().zip(weights).enumerate() {
            let probs = softmax(logits.row(j).as_slice().unwrap());
            loss -= wt * probs[t].max(1e-300).ln();
            for (c, pr) in probs.iter().enumerate() {
                dlogits[[j, c]] = wt * (pr - if c == t { 1.0 } else { 0.0 });
            }
        }
        if let Some((grads, d_rows)) = grads {
            grads.m_mut(w).scaled_add(1.0, &rows.t().dot(&dlogits));
            grads.v_mut(b).scaled_add(1.0, &dlogits.sum_axis(Axis(0)));
            *d_rows += &dlogits.dot(&self.params.m(w).t());
        }
        loss
    }

    /// Weighted error-head loss over spans; adds `d hidden` if requested.
    pub fn error_loss(
        &self,
        fwd: &ForwardPass,
        spans: &[std::ops::Range<usize>],
        labels: &[bool],
        weights: &[f64],
        grads: Option<(&mut ParamStore, &mut Array2<f64>)>,
    ) -> f64 {
        let pooled = Self::pool_spans(&fwd.hidden, spans);
        let targets: Vec<usize> = labels.iter().map(|&l| usize::from(l)).collect();
        match grads {
            None => self.head_ce(&pooled, self.ids.err_w, self.ids.err_b, &targets, weights, None),
            Some((g, d_hidden)) => {
                let mut d_pooled = Array2::zeros(pooled.raw_dim());
                let loss = self.head_ce(
                    &pooled,
                    self.ids.err_w,
                    self.ids.err_b,
                    &targets,
                    weights,
                    Some((g, &mut d_pooled)),
                );
                for (j, span) in spans.iter().enumerate() {
                    let dp = d_pooled.row(j);
                    if span.is_empty() {
                        let mut r = d_hidden.row_mut(span.start.saturating_sub(1));
                        r += &dp;
                    } else {
                        let inv = 1.0 / span.len() as f64;
                        for i in span.clone() {
                            d_hidden.row_mut(i).scaled_add(inv, &dp);
                        }
                    }
                }
                loss
            }
        }
    }

    fn token_head_loss(
        &self,
        fwd: &ForwardPass,
        positions: &[usize],
        targets: &[usize],
        weight: f64,
        (w, b): (ParamId, ParamId),
        grads: Option<(&mut ParamStore, &mut Array2<f64>)>,
    ) -> f64 {
        if positions.is_empty() {
            return 0.0;
        }
        let rows = fwd.hidden.select(Axis(0), positions);
        let weights = vec![weight; positions.len()];
        match grads {
            None => self.head_ce(&rows, w, b, targets, &weights, None),
            Some((g, d_hidden)) => {
                let mut d_rows = Array2::zeros(rows.raw_dim());
                let loss = self.head_ce(&rows, w, b, targets, &weights, Some((g, &mut d_rows)));
                for (r, &i) in positions.iter().enumerate() {
                    let mut h = d_hidden.row_mut(i);
                    h += &d_rows.row(r);
                }
                loss
            }
        }
    }

    pub fn mlm_loss(
        &self,
        fwd: &ForwardPass,
        positions: &[usize],
        targets: &[u32],
        weight: f64,
        grads: Option<(&mut ParamStore, &mut Array2<f64>)>,
    ) -> f64 {
        let t: Vec<usize> = targets.iter().map(|&x| x as usize).collect();
        self.token_head_loss(fwd, positions, &t, weight, (self.ids.mlm_w, self.ids.mlm_b), grads)
    }

    pub fn noise_loss(
        &self,
        fwd: &ForwardPass,
        positions: &[usize],
        noised: &[bool],
        weight: f64,
        grads: Option<(&mut ParamStore, &mut Array2<f64>)>,
    ) -> f64 {
        let t: Vec<usize> = noised.iter().map(|&x| usize::from(x)).collect();
        self.token_head_loss(fwd, positions, &t, weight, (self.ids.noise_w, self.ids.noise_b), grads)
    }
}
