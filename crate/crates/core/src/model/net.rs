use std::collections::HashMap;

use rand_chacha::ChaCha20Rng;

use crate::ctc::ctc_loss_on_tape;
use crate::error::{Error, Result};
use crate::tensor::rng::rng_from_seed;
use crate::tensor::{positional_encoding, ParamStore, Tape, Tensor, Tid};
use crate::text::{TokenSequence, SOS_EOS_ID};

pub const META_CONFIG: &str = "meta.config";
const LN_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub model_dim: usize,
    pub ff_dim: usize,
    pub heads: usize,
    pub dropout: f64,
    pub vocab_size: usize,
    pub input_dim: usize,
    pub subsample_factor: usize,
}

impl ModelConfig {
    /// Small configuration sized for laptop-speed experiments.
    pub fn desk(vocab_size: usize, input_dim: usize) -> Self {
        ModelConfig {
            enc_layers: 2,
            dec_layers: 2,
            model_dim: 32,
            ff_dim: 64,
            heads: 4,
            dropout: 0.1,
            vocab_size,
            input_dim,
            subsample_factor: 4,
        }
    }

    /// Full-size configuration (12 encoder / 6 decoder layers, width
    /// 320/2048); provided as a preset only.
    pub fn full(vocab_size: usize, input_dim: usize) -> Self {
        ModelConfig {
            enc_layers: 12,
            dec_layers: 6,
            model_dim: 320,
            ff_dim: 2048,
            heads: 4,
            dropout: 0.1,
            vocab_size,
            input_dim,
            subsample_factor: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.enc_layers == 0
            || self.dec_layers == 0
            || self.model_dim == 0
            || self.ff_dim == 0
            || self.heads == 0
            || self.vocab_size < 3
            || self.input_dim == 0
        {
            return Err(Error::Config {
                key: "model".into(),
                message: "all model dimensions must be >= 1 (vocab >= 3)".into(),
            });
        }
        if self.model_dim % self.heads != 0 {
            return Err(Error::Config {
                key: "heads".into(),
                message: format!(
                    "model_dim {} not divisible by heads {}",
                    self.model_dim, self.heads
                ),
            });
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config {
                key: "dropout".into(),
                message: format!("dropout {} outside [0, 1)", self.dropout),
            });
        }
        if ![1, 2, 4].contains(&self.subsample_factor) {
            return Err(Error::Config {
                key: "subsample_factor".into(),
                message: format!("subsample factor {} not in {{1, 2, 4}}", self.subsample_factor),
            });
        }
        Ok(())
    }

    fn meta(&self) -> Tensor {
        Tensor {
            shape: vec![9],
            data: vec![
                self.enc_layers as f64,
                self.dec_layers as f64,
                self.model_dim as f64,
                self.ff_dim as f64,
                self.heads as f64,
                self.dropout,
                self.vocab_size as f64,
                self.input_dim as f64,
                self.subsample_factor as f64,
            ],
        }
    }

    /// Number of strided front-end stages (each halves the frame rate).
    fn front_stages(&self) -> usize {
        match self.subsample_factor {
            1 => 0,
            2 => 1,
            _ => 2,
        }
    }
}

/// Verifies that a parameter store was created for this configuration
/// (vocab size and all architecture dimensions must match).
pub fn check_config(params: &ParamStore, config: &ModelConfig) -> Result<()> {
    let meta = params.get(META_CONFIG).map_err(|_| {
        Error::Checkpoint("parameter store has no model configuration record".into())
    })?;
    if meta.data != config.meta().data {
        return Err(Error::Checkpoint(format!(
            "checkpoint configuration {:?} does not match requested {:?}",
            meta.data,
            config.meta().data
        )));
    }
    Ok(())
}

/// Fresh parameter store for a configuration, seeded deterministically.
pub fn init_params(config: &ModelConfig, seed: u64) -> Result<ParamStore> {
    config.validate()?;
    let mut rng = rng_from_seed(seed);
    let mut store = ParamStore::new();
    let d = config.model_dim;

    let weight = |store: &mut ParamStore, name: &str, rows: usize, cols: usize,
                      rng: &mut ChaCha20Rng|
     -> Result<()> {
        let std = (1.0 / rows as f64).sqrt();
        store.add(&format!("{}.w", name), Tensor::randn(&[rows, cols], std, rng))?;
        store.add(&format!("{}.b", name), Tensor::zeros(&[cols]))
    };
    let norm = |store: &mut ParamStore, name: &str, dim: usize| -> Result<()> {
        store.add(
            &format!("{}.g", name),
            Tensor::from_vec(&[dim], vec![1.0; dim])?,
        )?;
        store.add(&format!("{}.b", name), Tensor::zeros(&[dim]))
    };
    let attention = |store: &mut ParamStore, name: &str, rng: &mut ChaCha20Rng| -> Result<()> {
        for part in ["q", "k", "v", "o"] {
            let std = (1.0 / d as f64).sqrt();
            store.add(
                &format!("{}.{}.w", name, part),
                Tensor::randn(&[d, d], std, rng),
            )?;
            store.add(&format!("{}.{}.b", name, part), Tensor::zeros(&[d]))?;
        }
        Ok(())
    };

    match config.front_stages() {
        0 => weight(&mut store, "front.s0", config.input_dim, d, &mut rng)?,
        1 => weight(&mut store, "front.s0", config.input_dim * 2, d, &mut rng)?,
        _ => {
            weight(&mut store, "front.s0", config.input_dim * 2, d, &mut rng)?;
            weight(&mut store, "front.s1", d * 2, d, &mut rng)?;
        }
    }
    for i in 0..config.enc_layers {
        norm(&mut store, &format!("enc.{}.ln1", i), d)?;
        attention(&mut store, &format!("enc.{}.att", i), &mut rng)?;
        norm(&mut store, &format!("enc.{}.ln2", i), d)?;
        weight(&mut store, &format!("enc.{}.ff1", i), d, config.ff_dim, &mut rng)?;
        weight(&mut store, &format!("enc.{}.ff2", i), config.ff_dim, d, &mut rng)?;
    }
    norm(&mut store, "enc.ln", d)?;
    weight(&mut store, "ctc", d, config.vocab_size, &mut rng)?;

    store.add(
        "dec.embed",
        Tensor::randn(&[config.vocab_size, d], (1.0 / d as f64).sqrt(), &mut rng),
    )?;
    for i in 0..config.dec_layers {
        norm(&mut store, &format!("dec.{}.ln1", i), d)?;
        attention(&mut store, &format!("dec.{}.self", i), &mut rng)?;
        norm(&mut store, &format!("dec.{}.ln2", i), d)?;
        attention(&mut store, &format!("dec.{}.cross", i), &mut rng)?;
        norm(&mut store, &format!("dec.{}.ln3", i), d)?;
        weight(&mut store, &format!("dec.{}.ff1", i), d, config.ff_dim, &mut rng)?;
        weight(&mut store, &format!("dec.{}.ff2", i), config.ff_dim, d, &mut rng)?;
    }
    norm(&mut store, "dec.ln", d)?;
    weight(&mut store, "dec.out", d, config.vocab_size, &mut rng)?;
    store.add(META_CONFIG, config.meta())?;
    Ok(store)
}

/// Forward-pass mode: training enables dropout fed from a dedicated RNG
/// stream; evaluation is deterministic.
pub struct Session {
    pub training: bool,
    pub rng: ChaCha20Rng,
}

impl Session {
    pub fn eval() -> Self {
        Session {
            training: false,
            rng: rng_from_seed(0),
        }
    }

    pub fn train(seed: u64) -> Self {
        Session {
            training: true,
            rng: rng_from_seed(seed),
        }
    }
}

/// One forward/backward graph over a parameter store. Parameters enter the
/// tape lazily as leaves so gradients can be collected by name afterwards.
pub struct Graph<'p> {
    pub tape: Tape,
    params: &'p ParamStore,
    bound: HashMap<String, Tid>,
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Graph {
            tape: Tape::new(),
            params,
            bound: HashMap::new(),
        }
    }

    pub fn param(&mut self, name: &str) -> Result<Tid> {
        if let Some(&id) = self.bound.get(name) {
            return Ok(id);
        }
        let id = self.tape.leaf(self.params.get(name)?.clone())?;
        self.bound.insert(name.to_string(), id);
        Ok(id)
    }

    /// Per-parameter gradients after `tape.backward`.
    pub fn grads(&self) -> HashMap<String, Vec<f64>> {
        self.bound
            .iter()
            .map(|(name, &id)| (name.clone(), self.tape.grad(id).to_vec()))
            .collect()
    }

    fn linear(&mut self, x: Tid, name: &str) -> Result<Tid> {
        let w = self.param(&format!("{}.w", name))?;
        let b = self.param(&format!("{}.b", name))?;
        let xw = self.tape.matmul(x, w)?;
        self.tape.add_row(xw, b)
    }

    fn norm(&mut self, x: Tid, name: &str) -> Result<Tid> {
        let g = self.param(&format!("{}.g", name))?;
        let b = self.param(&format!("{}.b", name))?;
        self.tape.layer_norm(x, g, b, LN_EPS)
    }

    fn maybe_dropout(&mut self, x: Tid, rate: f64, sess: &mut Session) -> Result<Tid> {
        if sess.training && rate > 0.0 {
            self.tape.dropout(x, rate, &mut sess.rng)
        } else {
            Ok(x)
        }
    }

    /// Multi-head scaled dot-product attention. `mask` (queries x keys,
    /// 0 / -inf) is added to every head's score matrix.
    fn mha(
        &mut self,
        queries: Tid,
        keys_values: Tid,
        name: &str,
        heads: usize,
        mask: Option<&Tensor>,
    ) -> Result<Tid> {
        let q = self.linear(queries, &format!("{}.q", name))?;
        let k = self.linear(keys_values, &format!("{}.k", name))?;
        let v = self.linear(keys_values, &format!("{}.v", name))?;
        let d = self.tape.value(q).cols();
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut contexts = Vec::with_capacity(heads);
        for h in 0..heads {
            let qh = self.tape.slice_cols(q, h * dh, dh)?;
            let kh = self.tape.slice_cols(k, h * dh, dh)?;
            let vh = self.tape.slice_cols(v, h * dh, dh)?;
            let kt = self.tape.transpose(kh)?;
            let scores = self.tape.matmul(qh, kt)?;
            let mut scores = self.tape.scale(scores, scale)?;
            if let Some(m) = mask {
                scores = self.tape.add_const(scores, m)?;
            }
            let att = self.tape.softmax(scores, 1)?;
            contexts.push(self.tape.matmul(att, vh)?);
        }
        let ctx = self.tape.concat_cols(&contexts)?;
        self.linear(ctx, &format!("{}.o", name))
    }

    fn feed_forward(&mut self, x: Tid, prefix: &str, idx: usize) -> Result<Tid> {
        let h = self.linear(x, &format!("{}.{}.ff1", prefix, idx))?;
        let h = self.tape.relu(h)?;
        self.linear(h, &format!("{}.{}.ff2", prefix, idx))
    }

    /// Strided front-end, positional encoding and the encoder stack.
    pub fn encode(&mut self, config: &ModelConfig, feats: &Tensor, sess: &mut Session) -> Result<Tid> {
        if feats.cols() != config.input_dim {
            return Err(Error::Config {
                key: "input_dim".into(),
                message: format!(
                    "feature dim {} != configured {}",
                    feats.cols(),
                    config.input_dim
                ),
            });
        }
        let mut x = self.tape.constant(feats.clone());
        for s in 0..config.front_stages().max(1) {
            if config.front_stages() > 0 {
                x = self.tape.frame_stack(x, 2, 2)?;
            }
            x = self.linear(x, &format!("front.s{}", s))?;
            x = self.tape.relu(x)?;
            if config.front_stages() == 0 {
                break;
            }
        }
        let rows = self.tape.value(x).rows();
        let pe = positional_encoding(rows, config.model_dim);
        x = self.tape.add_const(x, &pe)?;
        for i in 0..config.enc_layers {
            let n1 = self.norm(x, &format!("enc.{}.ln1", i))?;
            let a = self.mha(n1, n1, &format!("enc.{}.att", i), config.heads, None)?;
            let a = self.maybe_dropout(a, config.dropout, sess)?;
            x = self.tape.add(x, a)?;
            let n2 = self.norm(x, &format!("enc.{}.ln2", i))?;
            let f = self.feed_forward(n2, "enc", i)?;
            let f = self.maybe_dropout(f, config.dropout, sess)?;
            x = self.tape.add(x, f)?;
        }
        self.norm(x, "enc.ln")
    }

    /// Per-frame CTC logits over the full vocabulary (blank = id 0).
    pub fn ctc_logits(&mut self, hidden: Tid) -> Result<Tid> {
        self.linear(hidden, "ctc")
    }

    /// Decoder logits for teacher-forced input ids (causal self-attention,
    /// cross-attention over the encoder output).
    pub fn decoder_logits(
        &mut self,
        config: &ModelConfig,
        hidden: Tid,
        input_ids: &[usize],
        sess: &mut Session,
    ) -> Result<Tid> {
        let u = input_ids.len();
        let embed = self.param("dec.embed")?;
        let mut x = self.tape.embedding(embed, input_ids)?;
        x = self.tape.add_const(x, &positional_encoding(u, config.model_dim))?;
        let mut causal = Tensor::zeros(&[u, u]);
        for r in 0..u {
            for c in r + 1..u {
                causal.data[r * u + c] = f64::NEG_INFINITY;
            }
        }
        for i in 0..config.dec_layers {
            let n1 = self.norm(x, &format!("dec.{}.ln1", i))?;
            let a = self.mha(n1, n1, &format!("dec.{}.self", i), config.heads, Some(&causal))?;
            let a = self.maybe_dropout(a, config.dropout, sess)?;
            x = self.tape.add(x, a)?;
            let n2 = self.norm(x, &format!("dec.{}.ln2", i))?;
            let c = self.mha(n2, hidden, &format!("dec.{}.cross", i), config.heads, None)?;
            let c = self.maybe_dropout(c, config.dropout, sess)?;
            x = self.tape.add(x, c)?;
            let n3 = self.norm(x, &format!("dec.{}.ln3", i))?;
            let f = self.feed_forward(n3, "dec", i)?;
            let f = self.maybe_dropout(f, config.dropout, sess)?;
            x = self.tape.add(x, f)?;
        }
        let x = self.norm(x, "dec.ln")?;
        self.linear(x, "dec.out")
    }

    /// Teacher-forced attention loss: input sos + y, target y + eos, mean
    /// cross entropy per token.
    pub fn attention_loss(
        &mut self,
        config: &ModelConfig,
        hidden: Tid,
        y: &TokenSequence,
        smoothing: f64,
        sess: &mut Session,
    ) -> Result<Tid> {
        if y.is_empty() {
            return Err(Error::Training("attention loss over an empty target".into()));
        }
        let mut input = Vec::with_capacity(y.len() + 1);
        input.push(SOS_EOS_ID);
        input.extend_from_slice(y);
        let logits = self.decoder_logits(config, hidden, &input, sess)?;
        let mut targets: Vec<Option<usize>> = y.iter().map(|&t| Some(t)).collect();
        targets.push(Some(SOS_EOS_ID));
        self.tape.cross_entropy(logits, &targets, smoothing)
    }

    /// L = lambda * L_ctc + (1 - lambda) * L_att with a shared encoder pass.
    pub fn mtl_loss(
        &mut self,
        config: &ModelConfig,
        feats: &Tensor,
        y: &TokenSequence,
        lambda: f64,
        smoothing: f64,
        sess: &mut Session,
    ) -> Result<(Tid, LossBreakdown)> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Config {
                key: "lambda".into(),
                message: format!("lambda {} outside [0, 1]", lambda),
            });
        }
        let hidden = self.encode(config, feats, sess)?;
        let ctc_out = self.ctc_logits(hidden)?;
        let l_ctc = ctc_loss_on_tape(&mut self.tape, ctc_out, y)?;
        let l_att = self.attention_loss(config, hidden, y, smoothing, sess)?;
        let a = self.tape.scale(l_ctc, lambda)?;
        let b = self.tape.scale(l_att, 1.0 - lambda)?;
        let total = self.tape.add(a, b)?;
        let breakdown = LossBreakdown {
            total: self.tape.value(total).data[0],
            ctc: self.tape.value(l_ctc).data[0],
            att: self.tape.value(l_att).data[0],
        };
        Ok((total, breakdown))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LossBreakdown {
    pub total: f64,
    pub ctc: f64,
    pub att: f64,
}

/// Evaluation-mode CTC logits for one utterance.
pub fn eval_ctc_logits(params: &ParamStore, config: &ModelConfig, feats: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new(params);
    let mut sess = Session::eval();
    let h = g.encode(config, feats, &mut sess)?;
    let logits = g.ctc_logits(h)?;
    Ok(g.tape.value(logits).clone())
}

/// Evaluation-mode encoder output for one utterance.
pub fn eval_encode(params: &ParamStore, config: &ModelConfig, feats: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new(params);
    let mut sess = Session::eval();
    let h = g.encode(config, feats, &mut sess)?;
    Ok(g.tape.value(h).clone())
}

/// Next-token log-probabilities after consuming `prefix` (teacher-forced
/// from sos), given a precomputed encoder output.
pub fn eval_decoder_logprobs(
    params: &ParamStore,
    config: &ModelConfig,
    hidden: &Tensor,
    prefix: &[usize],
) -> Result<Vec<f64>> {
    let mut g = Graph::new(params);
    let mut sess = Session::eval();
    let h = g.tape.constant(hidden.clone());
    let mut input = Vec::with_capacity(prefix.len() + 1);
    input.push(SOS_EOS_ID);
    input.extend_from_slice(prefix);
    let logits = g.decoder_logits(config, h, &input, &mut sess)?;
    let t = g.tape.value(logits);
    let cols = t.cols();
    let row = &t.data[(input.len() - 1) * cols..input.len() * cols];
    let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = mx + row.iter().map(|x| (x - mx).exp()).sum::<f64>().ln();
    Ok(row.iter().map(|x| x - lse).collect())
}

/// Evaluation-mode joint loss for one utterance.
pub fn eval_mtl_loss(
    params: &ParamStore,
    config: &ModelConfig,
    feats: &Tensor,
    y: &TokenSequence,
    lambda: f64,
    smoothing: f64,
) -> Result<LossBreakdown> {
    let mut g = Graph::new(params);
    let mut sess = Session::eval();
    let (_, breakdown) = g.mtl_loss(config, feats, y, lambda, smoothing, &mut sess)?;
    Ok(breakdown)
}

/// Joint loss plus per-parameter gradients for one utterance.
pub fn loss_and_grads(
    params: &ParamStore,
    config: &ModelConfig,
    feats: &Tensor,
    y: &TokenSequence,
    lambda: f64,
    smoothing: f64,
    sess: &mut Session,
) -> Result<(LossBreakdown, HashMap<String, Vec<f64>>)> {
    let mut g = Graph::new(params);
    let (total, breakdown) = g.mtl_loss(config, feats, y, lambda, smoothing, sess)?;
    g.tape.backward(total)?;
    Ok((breakdown, g.grads()))
}
