//! Acceptance gate: ten end-to-end criteria covering the numeric kernels,
//! the training pipeline and the reproduction harness. Runs as a plain
//! binary (no libtest harness) so that one PASS/FAIL line per criterion is
//! always printed, in order, and the process exit code reflects the gate.

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use asrkit::augment::{apply_rir, speed_perturb, synth_rir, volume_perturb, SpecAugmentConfig};
use asrkit::ctc::{collapse_path, ctc_log_prob, ctc_loss_on_tape, PosteriorGrid};
use asrkit::decode::{beam_search, AttentionScorer, DecodeConfig};
use asrkit::frontend::{
    adult_profile, child_profile, default_recipes, extract_features, synthesize_utterance,
    SpeakerProfile, SynthesisSpec, Waveform,
};
use asrkit::lm::{
    interpolate, perplexity, read_arpa, rescore_nbest, train_ngram, train_rnnlm, write_arpa,
    NBestHyp, RnnLm, RnnLmConfig, BOS, EOS, LM_UNK,
};
use asrkit::model::{
    evaluate, eval_mtl_loss, init_params, loss_and_grads, train, transfer_learn, ModelConfig,
    Session, TrainConfig, Utterance,
};
use asrkit::pipeline::{run_reproduce, Layout, PipelineConfig};
use asrkit::score::edit_distance;
use asrkit::tensor::rng::{derive_seed, rng_from_seed};
use asrkit::tensor::{AdamConfig, ParamStore, Tape, Tensor, Tid};
use asrkit::text::{Vocabulary, SOS_EOS_ID};
use rand::Rng;
use rand_chacha::ChaCha20Rng;

type CriterionResult = Result<String, String>;

fn main() {
    let criteria: Vec<(&str, fn() -> CriterionResult)> = vec![
        ("ctc forward matches brute-force path enumeration", c1_ctc_oracle),
        ("gradients match central finite differences", c2_gradient_suite),
        ("joint loss is the exact affine combination", c3_affine_contract),
        ("model overfits 50 utterances to <5% training cer", c4_overfit),
        ("transfer <= child-only < adult-only on held-out child data", c5_transfer_direction),
        ("full augmentation is no worse than speed-only + 0.5%", c6_augmentation_direction),
        ("full-width ctc beam equals exhaustive argmax", c7_beam_oracle),
        ("language-model properties hold", c8_lm_properties),
        ("edit distance matches recursive brute force", c9_cer_oracle),
        ("reproduce is byte-identical across runs", c10_determinism),
    ];
    let mut failed = 0usize;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".to_string());
            Err(msg)
        });
        match outcome {
            Ok(detail) => println!("criterion {:2} PASS  {} ({})", i + 1, name, detail),
            Err(msg) => {
                failed += 1;
                println!("criterion {:2} FAIL  {} ({})", i + 1, name, msg);
            }
        }
    }
    if failed > 0 {
        eprintln!("error\t{} acceptance criteria failed", failed);
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- criterion 1

/// Sum over every frame-level path whose collapse equals `y`.
fn brute_force_ctc(grid: &PosteriorGrid, y: &[usize]) -> f64 {
    let t = grid.num_frames();
    let cols = grid.num_labels() + 1;
    let mut total = f64::NEG_INFINITY;
    let mut path = vec![0usize; t];
    loop {
        if collapse_path(&path) == *y {
            let lp: f64 = path.iter().enumerate().map(|(i, &c)| grid.lp(i, c)).sum();
            total = log_add(total, lp);
        }
        // next path in base-`cols` counting order
        let mut i = 0;
        loop {
            if i == t {
                return total;
            }
            path[i] += 1;
            if path[i] < cols {
                break;
            }
            path[i] = 0;
            i += 1;
        }
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// All label sequences (no blanks, no immediate constraint) up to `max_len`.
fn all_label_seqs(labels: &[usize], max_len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for seq in &frontier {
            for &l in labels {
                let mut s = seq.clone();
                s.push(l);
                next.push(s);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

fn random_grid(t: usize, cols: usize, rng: &mut ChaCha20Rng) -> PosteriorGrid {
    let logits = Tensor::randn(&[t, cols], 1.5, rng);
    PosteriorGrid::from_logits(&logits).expect("grid")
}

fn c1_ctc_oracle() -> CriterionResult {
    let start = Instant::now();
    let mut rng = rng_from_seed(101);
    for case in 0..50 {
        let t = 1 + case % 6;
        let cols = 2 + case % 2; // blank + 1 or 2 labels
        let grid = random_grid(t, cols, &mut rng);
        let labels: Vec<usize> = (1..cols).collect();
        for y in all_label_seqs(&labels, t.min(3)) {
            let exact = ctc_log_prob(&grid, &y).map_err(|e| e.to_string())?;
            let brute = brute_force_ctc(&grid, &y);
            if brute == f64::NEG_INFINITY || exact == f64::NEG_INFINITY {
                if brute != exact {
                    return Err(format!("infinity mismatch on case {} y {:?}", case, y));
                }
            } else if (exact - brute).abs() > 1e-10 {
                return Err(format!(
                    "case {} y {:?}: exact {} vs brute {}",
                    case, y, exact, brute
                ));
            }
        }
        if t <= 4 {
            let mut mass = 0.0;
            for y in all_label_seqs(&labels, t) {
                let lp = ctc_log_prob(&grid, &y).map_err(|e| e.to_string())?;
                if lp > f64::NEG_INFINITY {
                    mass += lp.exp();
                }
            }
            if (mass - 1.0).abs() > 1e-9 {
                return Err(format!("case {}: total mass {}", case, mass));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    if secs >= 10.0 {
        return Err(format!("took {:.1}s, budget 10s", secs));
    }
    Ok(format!("50 grids, {:.2}s", secs))
}

// ---------------------------------------------------------------- criterion 2

fn fd_scalar(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut g = Vec::with_capacity(x.len());
    let mut p = x.to_vec();
    for i in 0..x.len() {
        p[i] = x[i] + h;
        let up = f(&p);
        p[i] = x[i] - h;
        let dn = f(&p);
        p[i] = x[i];
        g.push((up - dn) / (2.0 * h));
    }
    g
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-8 {
        0.0
    } else {
        (a - b).abs() / scale.max(1e-4)
    }
}

fn check_grads(analytic: &[f64], fd: &[f64], what: &str) -> Result<(), String> {
    for (i, (&a, &n)) in analytic.iter().zip(fd).enumerate() {
        let e = rel_err(a, n);
        if e > 1e-4 {
            return Err(format!("{}[{}]: analytic {} fd {} rel {}", what, i, a, n, e));
        }
    }
    Ok(())
}

/// One tape-primitive case: builds a scalar loss from leaves, compares the
/// reverse-mode gradient of each leaf against central finite differences.
fn primitive_case(op: usize, seed: u64) -> Result<(), String> {
    let mut rng = rng_from_seed(derive_seed(seed, &format!("prim{}", op)));
    // leaves, then a builder mapping leaf values to the scalar loss
    let mut inputs: Vec<Tensor> = Vec::new();
    let build: Box<dyn Fn(&mut Tape, &[Tid]) -> Tid> = match op {
        0 => {
            inputs.push(Tensor::randn(&[3, 4], 1.0, &mut rng));
            inputs.push(Tensor::randn(&[4, 2], 1.0, &mut rng));
            Box::new(|t, l| {
                let m = t.matmul(l[0], l[1]).unwrap();
                t.sum(m).unwrap()
            })
        }
        1 => {
            inputs.push(Tensor::randn(&[3, 4], 1.0, &mut rng));
            inputs.push(Tensor::randn(&[4], 1.0, &mut rng));
            Box::new(|t, l| {
                let m = t.add_row(l[0], l[1]).unwrap();
                let s = t.tanh(m).unwrap();
                t.sum(s).unwrap()
            })
        }
        2 => {
            inputs.push(Tensor::randn(&[2, 5], 1.0, &mut rng));
            inputs.push(Tensor::randn(&[2, 5], 1.0, &mut rng));
            Box::new(|t, l| {
                let m = t.mul(l[0], l[1]).unwrap();
                t.sum(m).unwrap()
            })
        }
        3 => {
            inputs.push(Tensor::randn(&[3, 3], 1.0, &mut rng));
            Box::new(|t, l| {
                let m = t.scale(l[0], 0.7).unwrap();
                let s = t.sigmoid(m).unwrap();
                t.sum(s).unwrap()
            })
        }
        4 => {
            // keep relu inputs away from the kink
            let mut x = Tensor::randn(&[3, 4], 1.0, &mut rng);
            for v in &mut x.data {
                *v += 0.3 * v.signum();
            }
            inputs.push(x);
            Box::new(|t, l| {
                let m = t.relu(l[0]).unwrap();
                t.sum(m).unwrap()
            })
        }
        5 => {
            inputs.push(Tensor::randn(&[2, 6], 1.0, &mut rng));
            Box::new(|t, l| {
                let m = t.sigmoid(l[0]).unwrap();
                t.sum(m).unwrap()
            })
        }
        6 => {
            inputs.push(Tensor::randn(&[2, 6], 1.0, &mut rng));
            Box::new(|t, l| {
                let m = t.tanh(l[0]).unwrap();
                t.sum(m).unwrap()
            })
        }
        7 => {
            inputs.push(Tensor::randn(&[3, 5], 2.0, &mut rng));
            inputs.push(Tensor::randn(&[3, 5], 1.0, &mut rng));
            Box::new(|t, l| {
                let s = t.softmax(l[0], 1).unwrap();
                let w = t.mul(s, l[1]).unwrap();
                t.sum(w).unwrap()
            })
        }
        8 => {
            inputs.push(Tensor::randn(&[4, 6], 1.0, &mut rng));
            inputs.push(Tensor::randn(&[6], 0.5, &mut rng));
            inputs.push(Tensor::randn(&[6], 0.5, &mut rng));
            Box::new(|t, l| {
                let n = t.layer_norm(l[0], l[1], l[2], 1e-5).unwrap();
                let s = t.sigmoid(n).unwrap();
                t.sum(s).unwrap()
            })
        }
        9 => {
            inputs.push(Tensor::randn(&[5, 3], 1.0, &mut rng));
            Box::new(|t, l| {
                let e = t.embedding(l[0], &[0, 2, 2, 4]).unwrap();
                let s = t.tanh(e).unwrap();
                t.sum(s).unwrap()
            })
        }
        10 => {
            inputs.push(Tensor::randn(&[6, 3], 1.0, &mut rng));
            Box::new(|t, l| {
                let f = t.frame_stack(l[0], 2, 2).unwrap();
                let s = t.sigmoid(f).unwrap();
                t.sum(s).unwrap()
            })
        }
        _ => {
            inputs.push(Tensor::randn(&[3, 5], 1.5, &mut rng));
            Box::new(|t, l| {
                t.cross_entropy(l[0], &[Some(1), Some(0), Some(4)], 0.1)
                    .unwrap()
            })
        }
    };

    let mut tape = Tape::new();
    let ids: Vec<Tid> = inputs
        .iter()
        .map(|t| tape.leaf(t.clone()).unwrap())
        .collect();
    let loss = build(&mut tape, &ids);
    tape.backward(loss).map_err(|e| e.to_string())?;

    for (k, input) in inputs.iter().enumerate() {
        let analytic = tape.grad(ids[k]).to_vec();
        let shapes: Vec<Vec<usize>> = inputs.iter().map(|t| t.shape.clone()).collect();
        let others: Vec<Vec<f64>> = inputs.iter().map(|t| t.data.clone()).collect();
        let mut f = |x: &[f64]| -> f64 {
            let mut t2 = Tape::new();
            let ids2: Vec<Tid> = (0..inputs.len())
                .map(|j| {
                    let data = if j == k { x.to_vec() } else { others[j].clone() };
                    t2.leaf(Tensor::from_vec(&shapes[j], data).unwrap()).unwrap()
                })
                .collect();
            let l = build(&mut t2, &ids2);
            t2.value(l).data[0]
        };
        let fd = fd_scalar(&mut f, &input.data, 1e-5);
        check_grads(&analytic, &fd, &format!("op{} input{}", op, k))?;
    }
    Ok(())
}

fn ctc_grad_case(seed: u64) -> Result<(), String> {
    let mut rng = rng_from_seed(derive_seed(seed, "ctcgrad"));
    let t_len = 3 + (seed as usize) % 3;
    let logits = Tensor::randn(&[t_len, 4], 1.0, &mut rng);
    let y: Vec<usize> = (0..1 + (seed as usize) % 2)
        .map(|_| 1 + rng.gen_range(0..3))
        .collect();

    let mut tape = Tape::new();
    let leaf = tape.leaf(logits.clone()).unwrap();
    let loss = ctc_loss_on_tape(&mut tape, leaf, &y).map_err(|e| e.to_string())?;
    tape.backward(loss).map_err(|e| e.to_string())?;
    let analytic = tape.grad(leaf).to_vec();

    let mut f = |x: &[f64]| -> f64 {
        let mut t2 = Tape::new();
        let l2 = t2
            .leaf(Tensor::from_vec(&[t_len, 4], x.to_vec()).unwrap())
            .unwrap();
        let l = ctc_loss_on_tape(&mut t2, l2, &y).unwrap();
        t2.value(l).data[0]
    };
    let fd = fd_scalar(&mut f, &logits.data, 1e-5);
    check_grads(&analytic, &fd, "ctc logits")
}

/// LSTM cell step assembled from tape primitives, checked end to end.
fn lstm_step_case(seed: u64) -> Result<(), String> {
    let mut rng = rng_from_seed(derive_seed(seed, "lstm"));
    let (d, h) = (3usize, 4usize);
    let inputs = vec![
        Tensor::randn(&[d, 4 * h], 0.6, &mut rng), // wx
        Tensor::randn(&[h, 4 * h], 0.6, &mut rng), // wh
        Tensor::randn(&[4 * h], 0.3, &mut rng),    // b
        Tensor::randn(&[1, d], 1.0, &mut rng),     // x
        Tensor::randn(&[1, h], 1.0, &mut rng),     // h_prev
        Tensor::randn(&[1, h], 1.0, &mut rng),     // c_prev
    ];
    let build = |t: &mut Tape, l: &[Tid]| -> Tid {
        let xg = t.matmul(l[3], l[0]).unwrap();
        let hg = t.matmul(l[4], l[1]).unwrap();
        let sum = t.add(xg, hg).unwrap();
        let gates = t.add_row(sum, l[2]).unwrap();
        let i = {
            let s = t.slice_cols(gates, 0, h).unwrap();
            t.sigmoid(s).unwrap()
        };
        let f = {
            let s = t.slice_cols(gates, h, h).unwrap();
            t.sigmoid(s).unwrap()
        };
        let g = {
            let s = t.slice_cols(gates, 2 * h, h).unwrap();
            t.tanh(s).unwrap()
        };
        let o = {
            let s = t.slice_cols(gates, 3 * h, h).unwrap();
            t.sigmoid(s).unwrap()
        };
        let fc = t.mul(f, l[5]).unwrap();
        let ig = t.mul(i, g).unwrap();
        let c = t.add(fc, ig).unwrap();
        let ct = t.tanh(c).unwrap();
        let hh = t.mul(o, ct).unwrap();
        let both = t.add(hh, c).unwrap();
        t.sum(both).unwrap()
    };

    let mut tape = Tape::new();
    let ids: Vec<Tid> = inputs
        .iter()
        .map(|t| tape.leaf(t.clone()).unwrap())
        .collect();
    let loss = build(&mut tape, &ids);
    tape.backward(loss).map_err(|e| e.to_string())?;

    let shapes: Vec<Vec<usize>> = inputs.iter().map(|t| t.shape.clone()).collect();
    let datas: Vec<Vec<f64>> = inputs.iter().map(|t| t.data.clone()).collect();
    for k in 0..inputs.len() {
        let analytic = tape.grad(ids[k]).to_vec();
        let mut f = |x: &[f64]| -> f64 {
            let mut t2 = Tape::new();
            let ids2: Vec<Tid> = (0..inputs.len())
                .map(|j| {
                    let data = if j == k { x.to_vec() } else { datas[j].clone() };
                    t2.leaf(Tensor::from_vec(&shapes[j], data).unwrap()).unwrap()
                })
                .collect();
            let l = build(&mut t2, &ids2);
            t2.value(l).data[0]
        };
        let fd = fd_scalar(&mut f, &datas[k], 1e-5);
        check_grads(&analytic, &fd, &format!("lstm leaf {}", k))?;
    }
    Ok(())
}

fn tiny_model() -> ModelConfig {
    ModelConfig {
        enc_layers: 1,
        dec_layers: 1,
        model_dim: 8,
        ff_dim: 12,
        heads: 2,
        dropout: 0.0,
        vocab_size: 6,
        input_dim: 5,
        subsample_factor: 2,
    }
}

/// Full-model joint-loss gradient spot check against finite differences on
/// a handful of parameter entries.
fn model_grad_case(seed: u64, lambda: f64) -> Result<(), String> {
    let config = tiny_model();
    let mut rng = rng_from_seed(derive_seed(seed, "modelgrad"));
    let params = init_params(&config, derive_seed(seed, "init")).map_err(|e| e.to_string())?;
    let feats = Tensor::randn(&[6, config.input_dim], 1.0, &mut rng);
    let y: Vec<usize> = (0..2).map(|_| [1, 3, 4, 5][rng.gen_range(0..4)]).collect();

    let mut sess = Session::eval();
    let (_, grads) = loss_and_grads(&params, &config, &feats, &y, lambda, 0.0, &mut sess)
        .map_err(|e| e.to_string())?;

    let mut names: Vec<&String> = grads.keys().collect();
    names.sort();
    let h = 1e-4;
    for (pick, name) in names.iter().enumerate().step_by(names.len() / 4).take(4) {
        let idx = pick % params.get(name).map_err(|e| e.to_string())?.numel();
        let eval_at = |delta: f64| -> Result<f64, String> {
            let mut p2 = params.clone();
            let mut t = p2.get(name).map_err(|e| e.to_string())?.clone();
            t.data[idx] += delta;
            p2.set(name, t).map_err(|e| e.to_string())?;
            Ok(eval_mtl_loss(&p2, &config, &feats, &y, lambda, 0.0)
                .map_err(|e| e.to_string())?
                .total)
        };
        let fd = (eval_at(h)? - eval_at(-h)?) / (2.0 * h);
        let analytic = grads[*name][idx];
        let e = rel_err(analytic, fd);
        if e > 1e-4 {
            return Err(format!(
                "param {}[{}] lambda {}: analytic {} fd {} rel {}",
                name, idx, lambda, analytic, fd, e
            ));
        }
    }
    Ok(())
}

fn c2_gradient_suite() -> CriterionResult {
    let start = Instant::now();
    let mut cases = 0usize;
    for op in 0..12 {
        for seed in 0..6 {
            primitive_case(op, 1000 + seed)?;
            cases += 1;
        }
    }
    for seed in 0..10 {
        ctc_grad_case(2000 + seed)?;
        cases += 1;
    }
    for seed in 0..8 {
        lstm_step_case(3000 + seed)?;
        cases += 1;
    }
    for seed in 0..5 {
        model_grad_case(4000 + seed, 0.0)?; // attention loss path
        model_grad_case(5000 + seed, 1.0)?; // ctc loss path
        cases += 2;
    }
    let secs = start.elapsed().as_secs_f64();
    if secs >= 120.0 {
        return Err(format!("took {:.1}s, budget 120s", secs));
    }
    Ok(format!("{} cases, {:.1}s", cases, secs))
}

// ---------------------------------------------------------------- criterion 3

fn c3_affine_contract() -> CriterionResult {
    let config = tiny_model();
    let mut worst = 0.0f64;
    for seed in 0..5u64 {
        let mut rng = rng_from_seed(derive_seed(seed, "affine"));
        let params = init_params(&config, seed + 7).map_err(|e| e.to_string())?;
        // 12 input frames subsample to 6, enough for any length-3 target
        let feats = Tensor::randn(&[12, config.input_dim], 1.0, &mut rng);
        let y: Vec<usize> = (0..3).map(|_| [1, 3, 4, 5][rng.gen_range(0..4)]).collect();

        let mut breakdowns = HashMap::new();
        let mut grads = HashMap::new();
        for &lambda in &[0.0, 0.3, 1.0] {
            let mut sess = Session::eval();
            let (b, g) = loss_and_grads(&params, &config, &feats, &y, lambda, 0.0, &mut sess)
                .map_err(|e| e.to_string())?;
            breakdowns.insert((lambda * 10.0) as i64, b);
            grads.insert((lambda * 10.0) as i64, g);
        }
        let l_ctc = breakdowns[&10].ctc;
        let l_att = breakdowns[&0].att;
        for &lambda in &[0.0, 0.3, 1.0] {
            let b = &breakdowns[&((lambda * 10.0) as i64)];
            let expect = lambda * l_ctc + (1.0 - lambda) * l_att;
            let diff = (b.total - expect).abs();
            worst = worst.max(diff);
            if diff > 1e-10 {
                return Err(format!("lambda {}: total {} vs affine {}", lambda, b.total, expect));
            }
            if (b.ctc - l_ctc).abs() > 1e-10 || (b.att - l_att).abs() > 1e-10 {
                return Err(format!("lambda {}: component losses drift", lambda));
            }
        }
        // joint gradient = weighted sum of the pure gradients
        let (g0, g3, g10) = (&grads[&0], &grads[&3], &grads[&10]);
        for (name, joint) in g3 {
            let a = &g0[name];
            let c = &g10[name];
            for (i, &j) in joint.iter().enumerate() {
                let expect = 0.3 * c[i] + 0.7 * a[i];
                let diff = (j - expect).abs();
                worst = worst.max(diff);
                if diff > 1e-10 {
                    return Err(format!("grad {}[{}]: {} vs {}", name, i, j, expect));
                }
            }
        }
    }
    Ok(format!("worst |diff| {:.1e}", worst))
}

// ---------------------------------------------------------------- criterion 4

const INV: usize = 20;

fn token_vocab() -> Vocabulary {
    Vocabulary::from_tokens((0..INV).map(|i| format!("t{}", i)))
}

fn c4_overfit() -> CriterionResult {
    let start = Instant::now();
    let vocab = token_vocab();
    let mut rng = rng_from_seed(3);
    let spec = SynthesisSpec {
        recipes: default_recipes(&(0..INV).collect::<Vec<_>>()),
        speaker: child_profile(&mut rng, false),
        noise_floor: 0.002,
        silence_s: 0.05,
        sample_rate: 16000,
    };
    let mut set = Vec::new();
    for u in 0..50 {
        let len = rng.gen_range(3..=8);
        let ids: Vec<usize> = (0..len).map(|_| rng.gen_range(0..INV)).collect();
        let wave = synthesize_utterance(&ids, &spec, derive_seed(77, &format!("u{}", u)))
            .map_err(|e| e.to_string())?;
        let feats = extract_features(&wave, &format!("utt{:02}", u)).map_err(|e| e.to_string())?;
        let tokens = ids.iter().map(|&t| t + SOS_EOS_ID + 1).collect();
        set.push(Utterance { feats, tokens });
    }
    let config = ModelConfig::desk(vocab.len(), set[0].feats.dim());
    let mut params = init_params(&config, 1).map_err(|e| e.to_string())?;
    let tc = TrainConfig {
        lambda: 0.3,
        epochs: 60,
        batch_size: 8,
        adam: AdamConfig { lr: 3e-3, ..AdamConfig::default() },
        label_smoothing: 0.0,
        specaug: SpecAugmentConfig::disabled(),
        seed: 12,
        checkpoint_dir: None,
    };
    train(&mut params, &config, &tc, &set, &[]).map_err(|e| e.to_string())?;
    let (_, cer) = evaluate(&params, &config, &set, 0.3).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    if cer >= 0.05 {
        return Err(format!("training cer {:.2}%", 100.0 * cer));
    }
    if secs >= 600.0 {
        return Err(format!("took {:.0}s, budget 600s", secs));
    }
    Ok(format!("training cer {:.2}%, {:.0}s", 100.0 * cer, secs))
}

// ------------------------------------------------------- criteria 5 and 6

fn synth_set(
    profiles: &[SpeakerProfile],
    per: usize,
    seed: u64,
) -> Result<Vec<(Waveform, Vec<usize>, String)>, String> {
    let mut out = Vec::new();
    for (s, speaker) in profiles.iter().enumerate() {
        let spec = SynthesisSpec {
            recipes: default_recipes(&(0..INV).collect::<Vec<_>>()),
            speaker: speaker.clone(),
            noise_floor: 0.002,
            silence_s: 0.05,
            sample_rate: 16000,
        };
        let mut rng = rng_from_seed(derive_seed(seed, &format!("s{}", s)));
        for u in 0..per {
            let len = rng.gen_range(3..=6);
            let ids: Vec<usize> = (0..len).map(|_| rng.gen_range(0..INV)).collect();
            let w = synthesize_utterance(&ids, &spec, derive_seed(seed, &format!("s{}u{}", s, u)))
                .map_err(|e| e.to_string())?;
            out.push((
                w,
                ids.iter().map(|&t| t + SOS_EOS_ID + 1).collect(),
                format!("s{}u{}", s, u),
            ));
        }
    }
    Ok(out)
}

fn feats_of(ws: &[(Waveform, Vec<usize>, String)]) -> Result<Vec<Utterance>, String> {
    ws.iter()
        .map(|(w, toks, id)| {
            Ok(Utterance {
                feats: extract_features(w, id).map_err(|e| e.to_string())?,
                tokens: toks.clone(),
            })
        })
        .collect()
}

fn train_cfg(epochs: usize, seed: u64, specaug: SpecAugmentConfig) -> TrainConfig {
    TrainConfig {
        lambda: 0.3,
        epochs,
        batch_size: 8,
        adam: AdamConfig { lr: 3e-3, ..AdamConfig::default() },
        label_smoothing: 0.0,
        specaug,
        seed,
        checkpoint_dir: None,
    }
}

fn c5_transfer_direction() -> CriterionResult {
    let start = Instant::now();
    let mut rng = rng_from_seed(5);
    let adult_profiles: Vec<_> = (0..4).map(|_| adult_profile(&mut rng)).collect();
    let child_train_profiles: Vec<_> = (0..2).map(|_| child_profile(&mut rng, false)).collect();
    let child_test_profiles =
        vec![child_profile(&mut rng, false), child_profile(&mut rng, true)];
    let adult_train = feats_of(&synth_set(&adult_profiles, 15, 100)?)?;
    let child_train = feats_of(&synth_set(&child_train_profiles, 12, 200)?)?;
    let child_test = feats_of(&synth_set(&child_test_profiles, 8, 300)?)?;

    let config = ModelConfig::desk(token_vocab().len(), adult_train[0].feats.dim());
    let off = SpecAugmentConfig::disabled();

    let mut child_only = init_params(&config, 11).map_err(|e| e.to_string())?;
    train(&mut child_only, &config, &train_cfg(80, 21, off.clone()), &child_train, &[])
        .map_err(|e| e.to_string())?;
    let (_, child_cer) =
        evaluate(&child_only, &config, &child_test, 0.3).map_err(|e| e.to_string())?;

    let mut adult = init_params(&config, 11).map_err(|e| e.to_string())?;
    train(&mut adult, &config, &train_cfg(60, 22, off.clone()), &adult_train, &[])
        .map_err(|e| e.to_string())?;
    let (_, adult_cer) = evaluate(&adult, &config, &child_test, 0.3).map_err(|e| e.to_string())?;

    let mut xfer = adult.clone();
    transfer_learn(&mut xfer, &config, &train_cfg(80, 23, off), &child_train, &[])
        .map_err(|e| e.to_string())?;
    let (_, xfer_cer) = evaluate(&xfer, &config, &child_test, 0.3).map_err(|e| e.to_string())?;

    let secs = start.elapsed().as_secs_f64();
    let detail = format!(
        "adult-only {:.1}% > child-only {:.1}% >= transfer {:.1}%, {:.0}s",
        100.0 * adult_cer,
        100.0 * child_cer,
        100.0 * xfer_cer,
        secs
    );
    if !(xfer_cer <= child_cer && child_cer < adult_cer) {
        return Err(detail);
    }
    if secs >= 1800.0 {
        return Err(format!("took {:.0}s, budget 1800s", secs));
    }
    Ok(detail)
}

fn c6_augmentation_direction() -> CriterionResult {
    let start = Instant::now();
    let mut rng = rng_from_seed(5);
    let adult_profiles: Vec<_> = (0..4).map(|_| adult_profile(&mut rng)).collect();
    let ct_profiles: Vec<_> = (0..3).map(|_| child_profile(&mut rng, false)).collect();
    let te_profiles = vec![
        child_profile(&mut rng, false),
        child_profile(&mut rng, false),
        child_profile(&mut rng, true),
        child_profile(&mut rng, true),
    ];
    let va_profiles = vec![child_profile(&mut rng, false), child_profile(&mut rng, true)];

    let adult_train = feats_of(&synth_set(&adult_profiles, 15, 100)?)?;
    let child_train_w = synth_set(&ct_profiles, 12, 200)?;

    // half the held-out recordings come from reverberant rooms with varied
    // gain, matching realistic collection conditions
    let room_rirs: Vec<Waveform> = (0..2)
        .map(|i| synth_rir(0.10 + 0.06 * i as f64, 16000, 500 + i))
        .collect::<asrkit::Result<_>>()
        .map_err(|e| e.to_string())?;
    let record = |ws: &[(Waveform, Vec<usize>, String)]| -> Result<Vec<Utterance>, String> {
        ws.iter()
            .enumerate()
            .map(|(i, (w, toks, id))| {
                let mut x = w.clone();
                if i % 2 == 1 {
                    let mut r = rng_from_seed(derive_seed(17, id));
                    x = volume_perturb(&x, r.gen_range(-3.0..3.0)).0;
                    x = apply_rir(&x, &room_rirs[i / 2 % 2]).map_err(|e| e.to_string())?;
                }
                Ok(Utterance {
                    feats: extract_features(&x, id).map_err(|e| e.to_string())?,
                    tokens: toks.clone(),
                })
            })
            .collect()
    };
    let child_test = record(&synth_set(&te_profiles, 12, 300)?)?;
    let child_valid = record(&synth_set(&va_profiles, 8, 400)?)?;

    // speed-only expansion, and the full-augmentation variant of the same
    // copies (volume + reverberation on the waveform, SpecAugment during
    // training)
    let train_rirs: Vec<Waveform> = (0..3)
        .map(|i| synth_rir(0.08 + 0.04 * i as f64, 16000, 900 + i))
        .collect::<asrkit::Result<_>>()
        .map_err(|e| e.to_string())?;
    let mut speed_set = Vec::new();
    let mut full_set = Vec::new();
    for (w, toks, id) in &child_train_w {
        for &f in &[0.9, 1.0, 1.1] {
            let sp = speed_perturb(w, f).map_err(|e| e.to_string())?;
            speed_set.push(Utterance {
                feats: extract_features(&sp, id).map_err(|e| e.to_string())?,
                tokens: toks.clone(),
            });
            let mut r = rng_from_seed(derive_seed(7, &format!("{}:{}", id, f)));
            let mut x = volume_perturb(&sp, r.gen_range(-3.0..3.0)).0;
            x = apply_rir(&x, &train_rirs[r.gen_range(0..3)]).map_err(|e| e.to_string())?;
            full_set.push(Utterance {
                feats: extract_features(&x, id).map_err(|e| e.to_string())?,
                tokens: toks.clone(),
            });
        }
    }

    let config = ModelConfig::desk(token_vocab().len(), adult_train[0].feats.dim());
    let off = SpecAugmentConfig::disabled();
    let masks = SpecAugmentConfig {
        num_time_masks: 1,
        max_time_width: 6,
        num_freq_masks: 1,
        max_freq_width: 4,
    };

    let mut adult = init_params(&config, 11).map_err(|e| e.to_string())?;
    train(&mut adult, &config, &train_cfg(40, 22, off.clone()), &adult_train, &[])
        .map_err(|e| e.to_string())?;

    // transfer in chunks, keeping the checkpoint with the best validation
    // error
    let tseed = 31u64;
    let total_epochs = 100usize;
    let chunk = 25usize;
    let select = |set: &[Utterance], sa: &SpecAugmentConfig| -> Result<ParamStore, String> {
        let mut m = adult.clone();
        let mut best = (f64::INFINITY, m.clone());
        let mut done = 0;
        while done < total_epochs {
            let ep = chunk.min(total_epochs - done);
            transfer_learn(
                &mut m,
                &config,
                &train_cfg(ep, derive_seed(tseed, &format!("c{}", done)), sa.clone()),
                set,
                &[],
            )
            .map_err(|e| e.to_string())?;
            done += ep;
            let (_, vcer) = evaluate(&m, &config, &child_valid, 0.3).map_err(|e| e.to_string())?;
            if vcer < best.0 {
                best = (vcer, m.clone());
            }
        }
        Ok(best.1)
    };

    let speed_m = select(&speed_set, &off)?;
    let (_, speed_cer) = evaluate(&speed_m, &config, &child_test, 0.3).map_err(|e| e.to_string())?;
    let full_m = select(&full_set, &masks)?;
    let (_, full_cer) = evaluate(&full_m, &config, &child_test, 0.3).map_err(|e| e.to_string())?;

    let secs = start.elapsed().as_secs_f64();
    let detail = format!(
        "speed-only {:.2}% vs full augmentation {:.2}%, {:.0}s",
        100.0 * speed_cer,
        100.0 * full_cer,
        secs
    );
    if full_cer > speed_cer + 0.005 {
        return Err(detail);
    }
    Ok(detail)
}

// ---------------------------------------------------------------- criterion 7

struct FlatAttention {
    vocab: usize,
}

impl AttentionScorer for FlatAttention {
    fn next_log_probs(&self, _prefix: &[usize]) -> asrkit::Result<Vec<f64>> {
        Ok(vec![-(self.vocab as f64).ln(); self.vocab])
    }
}

fn c7_beam_oracle() -> CriterionResult {
    let mut rng = rng_from_seed(707);
    for case in 0..50 {
        let t = 1 + case % 4;
        // two usable labels; the reserved sentinel column gets no mass
        let mut logits = Tensor::randn(&[t, 4], 1.5, &mut rng);
        for row in 0..t {
            logits.data[row * 4 + SOS_EOS_ID] = -1e30;
        }
        let grid = PosteriorGrid::from_logits(&logits).map_err(|e| e.to_string())?;

        let mut best: Option<(f64, Vec<usize>)> = None;
        for y in all_label_seqs(&[1, 3], t) {
            let lp = ctc_log_prob(&grid, &y).map_err(|e| e.to_string())?;
            if lp == f64::NEG_INFINITY {
                continue;
            }
            if best.as_ref().map_or(true, |(b, _)| lp > *b) {
                best = Some((lp, y));
            }
        }
        let (oracle_lp, oracle_y) = best.expect("non-empty candidate set");

        let cfg = DecodeConfig {
            beam_width: 64,
            ctc_weight: 1.0,
            lm_weight: 0.0,
            max_len_ratio: 1.0,
            nbest: 1,
        };
        let hyps = beam_search(&grid, &FlatAttention { vocab: 4 }, None, &cfg)
            .map_err(|e| e.to_string())?;
        let top = hyps.first().ok_or_else(|| "beam returned nothing".to_string())?;
        if top.tokens != oracle_y {
            return Err(format!(
                "case {}: beam {:?} ({}) vs oracle {:?} ({})",
                case, top.tokens, top.ctc, oracle_y, oracle_lp
            ));
        }
        if (top.ctc - oracle_lp).abs() > 1e-12 {
            return Err(format!("case {}: score drift {} vs {}", case, top.ctc, oracle_lp));
        }
    }
    Ok("50 grids exact".into())
}

// ---------------------------------------------------------------- criterion 8

fn char_sentences(texts: &[&str]) -> Vec<Vec<String>> {
    texts
        .iter()
        .map(|t| t.chars().map(|c| c.to_string()).collect())
        .collect()
}

fn c8_lm_properties() -> CriterionResult {
    let vocab: Vec<String> = "abcde".chars().map(|c| c.to_string()).collect();
    // two components with complementary styles, dev drawn from both
    let corpus_a = char_sentences(&[
        "abcab", "abcab", "ababa", "abc", "aabb", "abcba", "aab", "abab", "cab", "abca",
    ]);
    let corpus_b = char_sentences(&[
        "dede", "deede", "ddee", "dcd", "edde", "dedc", "dde", "eded", "ced", "dece",
    ]);
    let dev = char_sentences(&["abcd", "dead", "bead", "cede", "abe", "dab"]);

    let lm_a = train_ngram(&corpus_a, 3, &vocab).map_err(|e| e.to_string())?;
    let lm_b = train_ngram(&corpus_b, 3, &vocab).map_err(|e| e.to_string())?;
    let ppl_a = perplexity(&lm_a, &dev);
    let ppl_b = perplexity(&lm_b, &dev);
    let interp = interpolate(vec![lm_a.clone(), lm_b.clone()], &dev).map_err(|e| e.to_string())?;
    let ppl_i = interp.perplexity(&dev);
    if ppl_i > ppl_a.min(ppl_b) + 1e-9 {
        return Err(format!(
            "interpolated ppl {} exceeds min component ({}, {})",
            ppl_i, ppl_a, ppl_b
        ));
    }

    // every conditional distribution normalizes, over every history up to
    // the model order (seen or unseen)
    let n_tok = lm_a.tokens().len();
    let bos = lm_a.bos_id();
    let mut histories: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..2 {
        let mut next = Vec::new();
        for h in &histories {
            for id in 0..n_tok {
                let mut v = h.clone();
                v.push(id);
                next.push(v);
            }
        }
        histories.extend(next);
    }
    for lm in [&lm_a, &lm_b] {
        for h in &histories {
            let sum: f64 = (0..n_tok)
                .filter(|&id| id != bos)
                .map(|id| 10f64.powf(lm.log10_cond(h, id)))
                .sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(format!("history {:?}: conditionals sum to {}", h, sum));
            }
        }
    }

    // ARPA round trip is byte-identical
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p1 = dir.path().join("a.arpa");
    let p2 = dir.path().join("b.arpa");
    write_arpa(&lm_a, &p1).map_err(|e| e.to_string())?;
    let reread = read_arpa(&p1).map_err(|e| e.to_string())?;
    write_arpa(&reread, &p2).map_err(|e| e.to_string())?;
    let b1 = std::fs::read(&p1).map_err(|e| e.to_string())?;
    let b2 = std::fs::read(&p2).map_err(|e| e.to_string())?;
    if b1 != b2 {
        return Err("arpa round trip differs".into());
    }

    // rescoring with weight 0 keeps the first-pass ranking
    let mut tokens = vec![BOS.to_string(), EOS.to_string(), LM_UNK.to_string()];
    tokens.extend(vocab.iter().cloned());
    let mut rnn = RnnLm::new(tokens, RnnLmConfig::desk(), 21).map_err(|e| e.to_string())?;
    train_rnnlm(&mut rnn, &corpus_a, &dev, 2, &AdamConfig::default(), 2)
        .map_err(|e| e.to_string())?;
    let hyps: Vec<NBestHyp> = (0..5)
        .map(|r| NBestHyp {
            utt_id: "u1".into(),
            rank: r + 1,
            text: ["abcab", "dede", "abe", "cede", "dab"][r].into(),
            acoustic: -3.0 - r as f64,
            firstpass_lm: -1.0 - 0.1 * r as f64,
        })
        .collect();
    let rescored = rescore_nbest(&hyps, &rnn, 0.0).map_err(|e| e.to_string())?;
    let order: Vec<usize> = rescored.iter().map(|r| r.hyp.rank).collect();
    if order != vec![1, 2, 3, 4, 5] {
        return Err(format!("weight-0 rescoring reordered: {:?}", order));
    }

    Ok(format!("ppl {:.2}/{:.2} -> {:.2}", ppl_a, ppl_b, ppl_i))
}

// ---------------------------------------------------------------- criterion 9

fn brute_edit<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let sub = brute_edit(&a[1..], &b[1..]) + usize::from(a[0] != b[0]);
    let del = brute_edit(&a[1..], b) + 1;
    let ins = brute_edit(a, &b[1..]) + 1;
    sub.min(del).min(ins)
}

fn c9_cer_oracle() -> CriterionResult {
    let cat: Vec<char> = "cat".chars().collect();
    let cut: Vec<char> = "cut".chars().collect();
    let counts = edit_distance(&cat, &cut);
    if counts.total() != 1 || (counts.cer() - 1.0 / 3.0).abs() > 1e-12 {
        return Err(format!("cat/cut: {} edits, cer {}", counts.total(), counts.cer()));
    }

    let mut rng = rng_from_seed(909);
    for case in 0..500 {
        let la = rng.gen_range(0..=8);
        let lb = rng.gen_range(0..=8);
        let a: Vec<u8> = (0..la).map(|_| rng.gen_range(0..4u8)).collect();
        let b: Vec<u8> = (0..lb).map(|_| rng.gen_range(0..4u8)).collect();
        let fast = edit_distance(&a, &b).total();
        let slow = brute_edit(&a, &b);
        if fast != slow {
            return Err(format!("case {}: {:?} vs {:?}: {} != {}", case, a, b, fast, slow));
        }
    }
    Ok("500 pairs exact".into())
}

// --------------------------------------------------------------- criterion 10

fn micro_pipeline(root: &std::path::Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.root = root.to_path_buf();
    cfg.seed = 11;
    cfg.corpus.speakers_a = 3;
    cfg.corpus.utts_a = 3;
    cfg.corpus.speakers_c1 = 3;
    cfg.corpus.utts_c1 = 2;
    cfg.corpus.speakers_c2 = 3;
    cfg.corpus.utts_c2 = 2;
    cfg.corpus.min_tokens = 2;
    cfg.corpus.max_tokens = 3;
    cfg.train.epochs = 1;
    cfg.transfer_epochs = 1;
    cfg.lm.rnn_epochs = 1;
    cfg.decode.beam = 4;
    cfg.decode.nbest = 2;
    cfg
}

fn walk(dir: &std::path::Path, base: &std::path::Path, out: &mut Vec<std::path::PathBuf>) {
    for entry in std::fs::read_dir(dir).expect("read_dir") {
        let p = entry.expect("entry").path();
        if p.is_dir() {
            walk(&p, base, out);
        } else {
            out.push(p.strip_prefix(base).expect("prefix").to_path_buf());
        }
    }
}

fn c10_determinism() -> CriterionResult {
    let d1 = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d2 = tempfile::tempdir().map_err(|e| e.to_string())?;
    run_reproduce(&micro_pipeline(d1.path())).map_err(|e| e.to_string())?;
    run_reproduce(&micro_pipeline(d2.path())).map_err(|e| e.to_string())?;

    let (mut f1, mut f2) = (Vec::new(), Vec::new());
    walk(d1.path(), d1.path(), &mut f1);
    walk(d2.path(), d2.path(), &mut f2);
    f1.sort();
    f2.sort();
    if f1 != f2 {
        return Err(format!("file sets differ: {} vs {} files", f1.len(), f2.len()));
    }
    let mut compared = 0usize;
    for rel in &f1 {
        // stage logs embed the (intentionally different) root paths
        if rel.starts_with("logs") {
            continue;
        }
        let a = std::fs::read(d1.path().join(rel)).map_err(|e| e.to_string())?;
        let b = std::fs::read(d2.path().join(rel)).map_err(|e| e.to_string())?;
        if a != b {
            return Err(format!("artifact {} differs between runs", rel.display()));
        }
        compared += 1;
    }
    let results = std::fs::read_to_string(Layout::new(&micro_pipeline(d1.path())).results_path())
        .map_err(|e| e.to_string())?;
    if !results.contains("Transfer learning") {
        return Err("results summary incomplete".into());
    }
    Ok(format!("{} artifacts byte-identical", compared))
}
