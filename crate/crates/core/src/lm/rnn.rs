use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::lm::ngram::{BOS, EOS, LM_UNK};
use crate::tensor::rng::{derive_seed, rng_from_seed};
use crate::tensor::{AdamConfig, ParamStore, Tape, Tensor, Tid};

#[derive(Debug, Clone, Copy)]
pub struct RnnLmConfig {
    pub embed_dim: usize,
    pub hidden: usize,
    pub layers: usize,
}

impl RnnLmConfig {
    /// Laptop-sized preset.
    pub fn desk() -> Self {
        RnnLmConfig {
            embed_dim: 32,
            hidden: 32,
            layers: 2,
        }
    }

    /// Full-size preset (2 x 512).
    pub fn full() -> Self {
        RnnLmConfig {
            embed_dim: 512,
            hidden: 512,
            layers: 2,
        }
    }
}

/// Character-level LSTM language model over the same token inventory as
/// the backoff n-grams (sentence-begin feeds the first step; sentence-end
/// is a predicted event).
#[derive(Debug, Clone)]
pub struct RnnLm {
    pub config: RnnLmConfig,
    tokens: Vec<String>,
    lookup: HashMap<String, usize>,
    pub params: ParamStore,
}

fn init_rnn_params(cfg: &RnnLmConfig, vocab: usize, seed: u64) -> Result<ParamStore> {
    let mut rng = rng_from_seed(seed);
    let mut store = ParamStore::new();
    let h = cfg.hidden;
    store.add(
        "embed",
        Tensor::randn(&[vocab, cfg.embed_dim], (1.0 / cfg.embed_dim as f64).sqrt(), &mut rng),
    )?;
    for l in 0..cfg.layers {
        let in_dim = if l == 0 { cfg.embed_dim } else { h };
        store.add(
            &format!("l{}.wx", l),
            Tensor::randn(&[in_dim, 4 * h], (1.0 / in_dim as f64).sqrt(), &mut rng),
        )?;
        store.add(
            &format!("l{}.wh", l),
            Tensor::randn(&[h, 4 * h], (1.0 / h as f64).sqrt(), &mut rng),
        )?;
        store.add(&format!("l{}.b", l), Tensor::zeros(&[4 * h]))?;
    }
    store.add(
        "out.w",
        Tensor::randn(&[h, vocab], (1.0 / h as f64).sqrt(), &mut rng),
    )?;
    store.add("out.b", Tensor::zeros(&[vocab]))?;
    Ok(store)
}

struct RnnGraph<'p> {
    tape: Tape,
    params: &'p ParamStore,
    bound: HashMap<String, Tid>,
}

impl<'p> RnnGraph<'p> {
    fn new(params: &'p ParamStore) -> Self {
        RnnGraph {
            tape: Tape::new(),
            params,
            bound: HashMap::new(),
        }
    }

    fn p(&mut self, name: &str) -> Result<Tid> {
        if let Some(&id) = self.bound.get(name) {
            return Ok(id);
        }
        let id = self.tape.leaf(self.params.get(name)?.clone())?;
        self.bound.insert(name.to_string(), id);
        Ok(id)
    }

    fn grads(&self) -> HashMap<String, Vec<f64>> {
        self.bound
            .iter()
            .map(|(n, &id)| (n.clone(), self.tape.grad(id).to_vec()))
            .collect()
    }

    /// One LSTM cell step on 1 x d rows; returns (h, c).
    fn lstm_step(
        &mut self,
        layer: usize,
        x: Tid,
        h_prev: Tid,
        c_prev: Tid,
        hidden: usize,
    ) -> Result<(Tid, Tid)> {
        let wx = self.p(&format!("l{}.wx", layer))?;
        let wh = self.p(&format!("l{}.wh", layer))?;
        let b = self.p(&format!("l{}.b", layer))?;
        let xg = self.tape.matmul(x, wx)?;
        let hg = self.tape.matmul(h_prev, wh)?;
        let sum = self.tape.add(xg, hg)?;
        let gates = self.tape.add_row(sum, b)?;
        let i_g = self.tape.slice_cols(gates, 0, hidden)?;
        let f_g = self.tape.slice_cols(gates, hidden, hidden)?;
        let g_g = self.tape.slice_cols(gates, 2 * hidden, hidden)?;
        let o_g = self.tape.slice_cols(gates, 3 * hidden, hidden)?;
        let i = self.tape.sigmoid(i_g)?;
        let f = self.tape.sigmoid(f_g)?;
        let g = self.tape.tanh(g_g)?;
        let o = self.tape.sigmoid(o_g)?;
        let fc = self.tape.mul(f, c_prev)?;
        let ig = self.tape.mul(i, g)?;
        let c = self.tape.add(fc, ig)?;
        let ct = self.tape.tanh(c)?;
        let h = self.tape.mul(o, ct)?;
        Ok((h, c))
    }

    /// Unrolls the network over `inputs` and returns the logits (one row
    /// per step).
    fn forward(&mut self, cfg: &RnnLmConfig, inputs: &[usize]) -> Result<Tid> {
        let embed = self.p("embed")?;
        let mut h: Vec<Tid> = Vec::new();
        let mut c: Vec<Tid> = Vec::new();
        for _ in 0..cfg.layers {
            h.push(self.tape.constant(Tensor::zeros(&[1, cfg.hidden])));
            c.push(self.tape.constant(Tensor::zeros(&[1, cfg.hidden])));
        }
        let mut tops = Vec::with_capacity(inputs.len());
        for &id in inputs {
            let mut x = self.tape.embedding(embed, &[id])?;
            for l in 0..cfg.layers {
                let (nh, nc) = self.lstm_step(l, x, h[l], c[l], cfg.hidden)?;
                h[l] = nh;
                c[l] = nc;
                x = nh;
            }
            tops.push(x);
        }
        let states = self.tape.concat_rows(&tops)?;
        let w = self.p("out.w")?;
        let b = self.p("out.b")?;
        let proj = self.tape.matmul(states, w)?;
        self.tape.add_row(proj, b)
    }
}

fn log_softmax_rows(t: &Tensor) -> Tensor {
    let (rows, cols) = (t.rows(), t.cols());
    let mut out = t.clone();
    for r in 0..rows {
        let row = &mut out.data[r * cols..(r + 1) * cols];
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = mx + row.iter().map(|x| (x - mx).exp()).sum::<f64>().ln();
        for v in row.iter_mut() {
            *v -= lse;
        }
    }
    out
}

impl RnnLm {
    pub fn new(tokens: Vec<String>, config: RnnLmConfig, seed: u64) -> Result<Self> {
        for special in [BOS, EOS, LM_UNK] {
            if !tokens.iter().any(|t| t == special) {
                return Err(Error::Parameter(format!(
                    "token inventory is missing `{}`",
                    special
                )));
            }
        }
        let params = init_rnn_params(&config, tokens.len(), seed)?;
        let lookup = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Ok(RnnLm {
            config,
            tokens,
            lookup,
            params,
        })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token_id(&self, token: &str) -> usize {
        self.lookup
            .get(token)
            .copied()
            .unwrap_or_else(|| self.lookup[LM_UNK])
    }

    fn encode(&self, sentence: &[String]) -> Vec<usize> {
        sentence.iter().map(|t| self.token_id(t)).collect()
    }

    /// Natural-log next-token distributions for each position of the
    /// bos-prefixed input.
    pub fn step_log_probs(&self, sentence_ids: &[usize]) -> Result<Tensor> {
        let mut inputs = vec![self.lookup[BOS]];
        inputs.extend_from_slice(sentence_ids);
        let mut g = RnnGraph::new(&self.params);
        let logits = g.forward(&self.config, &inputs)?;
        Ok(log_softmax_rows(g.tape.value(logits)))
    }

    /// Total log10 probability of a sentence including sentence-end.
    pub fn sentence_log10(&self, sentence: &[String]) -> Result<(f64, usize)> {
        let ids = self.encode(sentence);
        let lp = self.step_log_probs(&ids)?;
        let mut total = 0.0;
        for (step, &target) in ids.iter().chain([&self.lookup[EOS]]).enumerate() {
            total += lp.at2(step, target);
        }
        Ok((total / std::f64::consts::LN_10, ids.len() + 1))
    }

    pub fn perplexity(&self, corpus: &[Vec<String>]) -> Result<f64> {
        let mut total = 0.0;
        let mut events = 0usize;
        for s in corpus {
            let (lp, n) = self.sentence_log10(s)?;
            total += lp;
            events += n;
        }
        if events == 0 {
            return Ok(f64::INFINITY);
        }
        Ok(10f64.powf(-total / events as f64))
    }
}

/// Next-token cross-entropy training over bos-prefixed sentences; one
/// Adam step per sentence. Returns per-epoch development perplexity.
pub fn train_rnnlm(
    lm: &mut RnnLm,
    corpus: &[Vec<String>],
    dev: &[Vec<String>],
    epochs: usize,
    adam: &AdamConfig,
    seed: u64,
) -> Result<Vec<(usize, f64)>> {
    if corpus.is_empty() {
        return Err(Error::Training("empty language-model corpus".into()));
    }
    let bos = lm.lookup[BOS];
    let eos = lm.lookup[EOS];
    let mut log = Vec::with_capacity(epochs);
    for epoch in 1..=epochs {
        let mut order: Vec<usize> = (0..corpus.len()).collect();
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng_from_seed(derive_seed(seed, &format!("rnn-epoch:{}", epoch))));
        for &si in &order {
            let ids = lm.encode(&corpus[si]);
            let mut inputs = vec![bos];
            inputs.extend_from_slice(&ids);
            let mut targets: Vec<Option<usize>> = ids.iter().map(|&t| Some(t)).collect();
            targets.push(Some(eos));
            let mut g = RnnGraph::new(&lm.params);
            let logits = g.forward(&lm.config, &inputs)?;
            let loss = g.tape.cross_entropy(logits, &targets, 0.0)?;
            if !g.tape.value(loss).data[0].is_finite() {
                return Err(Error::Training(format!(
                    "non-finite LM loss on sentence {}",
                    si
                )));
            }
            g.tape.backward(loss)?;
            let grads = g.grads();
            lm.params.adam_step(&grads, adam)?;
        }
        log.push((epoch, lm.perplexity(dev)?));
    }
    Ok(log)
}
