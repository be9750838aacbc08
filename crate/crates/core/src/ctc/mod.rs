//! Connectionist temporal classification: path collapse semantics, the
//! forward-backward loss and gradient, and incremental prefix scoring
//! for decoding. Blank is token id 0 and all recursions run in log space.

use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Tid};
use crate::text::TokenSequence;

pub const BLANK: usize = 0;

/// log(exp(a) + exp(b)) with -inf as the additive identity.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// T x (K+1) per-frame log-probabilities over tokens plus blank.
#[derive(Debug, Clone)]
pub struct PosteriorGrid {
    log_probs: Tensor,
}

impl PosteriorGrid {
    /// Validates that every row normalizes (log-sum-exp 0 within 1e-9).
    pub fn new(log_probs: Tensor) -> Result<Self> {
        let (t, k1) = (log_probs.rows(), log_probs.cols());
        if t == 0 || k1 < 2 {
            return Err(Error::Dimension(format!(
                "posterior grid {}x{}",
                t, k1
            )));
        }
        for r in 0..t {
            let row = &log_probs.data[r * k1..(r + 1) * k1];
            if row.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
                return Err(Error::DegenerateInput(format!(
                    "invalid log-probability in frame {}",
                    r
                )));
            }
            let lse = row.iter().fold(f64::NEG_INFINITY, |a, &b| log_add_exp(a, b));
            if lse.abs() > 1e-9 {
                return Err(Error::DegenerateInput(format!(
                    "frame {} log-sum-exp {} != 0",
                    r, lse
                )));
            }
        }
        Ok(PosteriorGrid { log_probs })
    }

    /// Row-wise log-softmax of raw logits.
    pub fn from_logits(logits: &Tensor) -> Result<Self> {
        let (t, k1) = (logits.rows(), logits.cols());
        let mut data = vec![0.0; t * k1];
        for r in 0..t {
            let row = &logits.data[r * k1..(r + 1) * k1];
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + row.iter().map(|x| (x - mx).exp()).sum::<f64>().ln();
            for c in 0..k1 {
                data[r * k1 + c] = row[c] - lse;
            }
        }
        PosteriorGrid::new(Tensor::from_vec(&[t, k1], data)?)
    }

    pub fn num_frames(&self) -> usize {
        self.log_probs.rows()
    }

    /// Number of non-blank tokens.
    pub fn num_labels(&self) -> usize {
        self.log_probs.cols() - 1
    }

    pub fn lp(&self, t: usize, token: usize) -> f64 {
        self.log_probs.at2(t, token)
    }
}

/// Merges adjacent duplicates, then deletes blanks.
pub fn collapse_path(path: &[usize]) -> TokenSequence {
    let mut out = Vec::new();
    let mut prev = None;
    for &p in path {
        if Some(p) != prev && p != BLANK {
            out.push(p);
        }
        prev = Some(p);
    }
    out
}

/// blank, y1, blank, y2, ..., yL, blank
fn expand_label(y: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(2 * y.len() + 1);
    out.push(BLANK);
    for &t in y {
        out.push(t);
        out.push(BLANK);
    }
    out
}

fn min_feasible_frames(y: &[usize]) -> usize {
    let repeats = y.windows(2).filter(|w| w[0] == w[1]).count();
    y.len() + repeats
}

fn check_tokens(y: &[usize], k: usize) -> Result<()> {
    for &t in y {
        if t == BLANK || t > k {
            return Err(Error::DegenerateInput(format!(
                "target token {} outside [1, {}]",
                t, k
            )));
        }
    }
    Ok(())
}

/// log P(y | x) summed over all frame paths collapsing to y, via the
/// alpha recursion over the expanded label. Infeasible targets (T too
/// short) score -inf.
pub fn ctc_log_prob(grid: &PosteriorGrid, y: &TokenSequence) -> Result<f64> {
    check_tokens(y, grid.num_labels())?;
    let t_len = grid.num_frames();
    if t_len < min_feasible_frames(y) {
        return Ok(f64::NEG_INFINITY);
    }
    let alpha = forward(grid, y);
    let s_len = 2 * y.len() + 1;
    let last = alpha[(t_len - 1) * s_len + s_len - 1];
    let prev = if s_len >= 2 {
        alpha[(t_len - 1) * s_len + s_len - 2]
    } else {
        f64::NEG_INFINITY
    };
    Ok(log_add_exp(last, prev))
}

fn forward(grid: &PosteriorGrid, y: &[usize]) -> Vec<f64> {
    let labels = expand_label(y);
    let (t_len, s_len) = (grid.num_frames(), labels.len());
    let mut alpha = vec![f64::NEG_INFINITY; t_len * s_len];
    alpha[0] = grid.lp(0, BLANK);
    if s_len > 1 {
        alpha[1] = grid.lp(0, labels[1]);
    }
    for t in 1..t_len {
        for s in 0..s_len {
            let mut acc = alpha[(t - 1) * s_len + s];
            if s >= 1 {
                acc = log_add_exp(acc, alpha[(t - 1) * s_len + s - 1]);
            }
            if s >= 2 && labels[s] != BLANK && labels[s] != labels[s - 2] {
                acc = log_add_exp(acc, alpha[(t - 1) * s_len + s - 2]);
            }
            alpha[t * s_len + s] = acc + grid.lp(t, labels[s]);
        }
    }
    alpha
}

fn backward(grid: &PosteriorGrid, y: &[usize]) -> Vec<f64> {
    let labels = expand_label(y);
    let (t_len, s_len) = (grid.num_frames(), labels.len());
    let mut beta = vec![f64::NEG_INFINITY; t_len * s_len];
    beta[(t_len - 1) * s_len + s_len - 1] = grid.lp(t_len - 1, labels[s_len - 1]);
    if s_len >= 2 {
        beta[(t_len - 1) * s_len + s_len - 2] = grid.lp(t_len - 1, labels[s_len - 2]);
    }
    for t in (0..t_len - 1).rev() {
        for s in 0..s_len {
            let mut acc = beta[(t + 1) * s_len + s];
            if s + 1 < s_len {
                acc = log_add_exp(acc, beta[(t + 1) * s_len + s + 1]);
            }
            if s + 2 < s_len && labels[s + 2] != BLANK && labels[s + 2] != labels[s] {
                acc = log_add_exp(acc, beta[(t + 1) * s_len + s + 2]);
            }
            beta[t * s_len + s] = acc + grid.lp(t, labels[s]);
        }
    }
    beta
}

/// CTC loss on raw logits plus its gradient w.r.t. those logits
/// (softmax minus state occupancy).
pub fn ctc_loss_and_grad(logits: &Tensor, y: &TokenSequence) -> Result<(f64, Tensor)> {
    let grid = PosteriorGrid::from_logits(logits)?;
    check_tokens(y, grid.num_labels())?;
    let (t_len, k1) = (grid.num_frames(), grid.num_labels() + 1);
    if t_len < min_feasible_frames(y) {
        return Err(Error::Training(format!(
            "CTC target of length {} infeasible in {} frames",
            y.len(),
            t_len
        )));
    }
    let log_p = ctc_log_prob(&grid, y)?;
    if log_p == f64::NEG_INFINITY {
        return Err(Error::Training("CTC probability underflowed to zero".into()));
    }
    let alpha = forward(&grid, y);
    let beta = backward(&grid, y);
    let labels = expand_label(y);
    let s_len = labels.len();

    let mut grad = vec![0.0; t_len * k1];
    for t in 0..t_len {
        // occupancy per token at frame t
        let mut occ = vec![f64::NEG_INFINITY; k1];
        for s in 0..s_len {
            let g = alpha[t * s_len + s] + beta[t * s_len + s] - grid.lp(t, labels[s]) - log_p;
            occ[labels[s]] = log_add_exp(occ[labels[s]], g);
        }
        for c in 0..k1 {
            let softmax = grid.lp(t, c).exp();
            let gamma = if occ[c] == f64::NEG_INFINITY {
                0.0
            } else {
                occ[c].exp()
            };
            grad[t * k1 + c] = softmax - gamma;
        }
    }
    Ok((-log_p, Tensor::from_vec(&[t_len, k1], grad)?))
}

/// Records the CTC loss of a logits node on the tape, wiring the
/// forward-backward gradient into backprop.
pub fn ctc_loss_on_tape(tape: &mut Tape, logits: Tid, y: &TokenSequence) -> Result<Tid> {
    let (loss, grad) = ctc_loss_and_grad(tape.value(logits), y)?;
    tape.opaque_scalar(logits, loss, grad.data)
}

/// Incremental CTC prefix-scoring state: per-frame log-probabilities of
/// the prefix ending in blank / in its last label, plus the prefix score
/// (log mass of all label sequences extending the prefix).
#[derive(Debug, Clone)]
pub struct PrefixState {
    r_nb: Vec<f64>,
    r_b: Vec<f64>,
    score: f64,
    last: Option<usize>,
}

impl PrefixState {
    /// Log mass of every sequence extending this prefix (the empty prefix
    /// scores 0 = log 1).
    pub fn score(&self) -> f64 {
        self.score
    }
}

/// State for the empty prefix.
pub fn prefix_initial(grid: &PosteriorGrid) -> PrefixState {
    let t_len = grid.num_frames();
    let mut r_b = vec![f64::NEG_INFINITY; t_len];
    let r_nb = vec![f64::NEG_INFINITY; t_len];
    let mut acc = 0.0;
    for t in 0..t_len {
        acc += grid.lp(t, BLANK);
        r_b[t] = acc;
    }
    PrefixState {
        r_nb,
        r_b,
        score: 0.0,
        last: None,
    }
}

/// Extends a prefix by one non-blank token.
pub fn prefix_extend(grid: &PosteriorGrid, state: &PrefixState, token: usize) -> Result<PrefixState> {
    if token == BLANK || token > grid.num_labels() {
        return Err(Error::DegenerateInput(format!(
            "cannot extend prefix with token {}",
            token
        )));
    }
    let t_len = grid.num_frames();
    let mut r_nb = vec![f64::NEG_INFINITY; t_len];
    let mut r_b = vec![f64::NEG_INFINITY; t_len];
    let mut score = f64::NEG_INFINITY;
    for t in 0..t_len {
        // mass of the parent prefix that can be followed by `token` at t
        let prev_b = if t == 0 {
            if state.last.is_none() { 0.0 } else { f64::NEG_INFINITY }
        } else {
            state.r_b[t - 1]
        };
        let prev_nb = if t == 0 {
            f64::NEG_INFINITY
        } else {
            state.r_nb[t - 1]
        };
        let mut phi = prev_b;
        if state.last != Some(token) {
            phi = log_add_exp(phi, prev_nb);
        }
        // empty parent at t == 0 contributes via prev_b above
        let stay = if t == 0 { f64::NEG_INFINITY } else { r_nb[t - 1] };
        r_nb[t] = log_add_exp(stay, phi) + grid.lp(t, token);
        let from = if t == 0 {
            f64::NEG_INFINITY
        } else {
            log_add_exp(r_b[t - 1], r_nb[t - 1])
        };
        r_b[t] = from + grid.lp(t, BLANK);
        score = log_add_exp(score, phi + grid.lp(t, token));
    }
    Ok(PrefixState {
        r_nb,
        r_b,
        score,
        last: Some(token),
    })
}

/// Log-probability that the emission equals this prefix exactly.
pub fn prefix_complete(grid: &PosteriorGrid, state: &PrefixState) -> f64 {
    let t_len = grid.num_frames();
    if state.last.is_none() && t_len == 0 {
        return 0.0;
    }
    log_add_exp(state.r_nb[t_len - 1], state.r_b[t_len - 1])
}
