//! CTC on a tiny hand-built posterior grid: exact sequence probability
//! via the forward recursion, greedy path collapse, and incremental
//! prefix scoring as used by the beam search.
//!
//! Run with: cargo run --example ctc_loss

use asrkit::ctc::{
    ctc_log_prob, prefix_complete, prefix_extend, prefix_initial, PosteriorGrid,
};
use asrkit::decode::greedy_ctc_decode;
use asrkit::tensor::Tensor;

fn main() -> asrkit::Result<()> {
    // 4 frames over {blank, a=1, b=2}; rows are probabilities
    let rows: [[f64; 3]; 4] = [
        [0.1, 0.8, 0.1],
        [0.7, 0.2, 0.1],
        [0.1, 0.1, 0.8],
        [0.6, 0.2, 0.2],
    ];
    let log_probs: Vec<f64> = rows.iter().flatten().map(|p| p.ln()).collect();
    let grid = PosteriorGrid::new(Tensor::from_vec(&[4, 3], log_probs)?)?;

    println!("exact label-sequence probabilities (all paths summed):");
    for (name, labels) in [
        ("a", vec![1]),
        ("b", vec![2]),
        ("ab", vec![1, 2]),
        ("aab", vec![1, 1, 2]),
        ("ba", vec![2, 1]),
    ] {
        let lp = ctc_log_prob(&grid, &labels)?;
        println!("  P(\"{}\")  = {:.6}", name, lp.exp());
    }

    let greedy = greedy_ctc_decode(&grid);
    println!("greedy best-path collapse: {:?}", greedy);

    // prefix scores: mass of every sequence starting with the prefix,
    // and the mass of the prefix exactly
    let root = prefix_initial(&grid);
    let a = prefix_extend(&grid, &root, 1)?;
    let ab = prefix_extend(&grid, &a, 2)?;
    println!("prefix \"a\"  : extensions {:.6}, complete {:.6}", a.score().exp(), prefix_complete(&grid, &a).exp());
    println!("prefix \"ab\" : extensions {:.6}, complete {:.6}", ab.score().exp(), prefix_complete(&grid, &ab).exp());

    // the completed-prefix score agrees with the full forward recursion
    let direct = ctc_log_prob(&grid, &vec![1, 2])?;
    println!(
        "consistency: |prefix_complete - ctc_log_prob| = {:.2e}",
        (prefix_complete(&grid, &ab) - direct).abs()
    );
    Ok(())
}
