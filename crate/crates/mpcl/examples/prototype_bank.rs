//! Prototype memory banks: addressing, retrieval, and the semantic
//! correlation matrix that acts as a distillation teacher.
//!
//! Registers a small bank, addresses a few queries against it, and prints
//! the addressing distributions, the dominant prototype (pseudo-label) per
//! query, and the row-stochastic prototype-to-prototype correlation matrix.
//!
//! Run with: `cargo run --example prototype_bank`

use mpcl::numeric::Rng;
use mpcl::prototype::{address, pseudo_label, register_bank, semantic_correlation};
use mpcl::tape::{ParamSet, Tape};

fn main() -> mpcl::error::Result<()> {
    let (prototypes, embed_dim) = (6, 16);
    let mut rng = Rng::seed_from(3);
    let mut params = ParamSet::new();
    let bank = register_bank(&mut params, "bank", prototypes, embed_dim, &mut rng)?;
    println!(
        "bank: {prototypes} prototypes in {embed_dim} dims, addressing sharpness 1/sqrt(D) = {:.3}\n",
        bank.beta_addr()
    );

    let mut tape = Tape::new(&params);
    let queries = tape.constant(rng.normal_matrix(3, embed_dim, 1.0));
    let (a, z_proto) = address(&mut tape, &params, &bank, queries)?;
    let a_val = tape.value(a).clone();
    println!("addressing distributions (rows sum to 1):");
    for r in 0..a_val.rows() {
        let row: Vec<f64> = a_val.row(r).iter().map(|v| (v * 1e3).round() / 1e3).collect();
        println!("  query {r}: {row:?}  sum {:.6}", a_val.row(r).iter().sum::<f64>());
    }
    let label = pseudo_label(&a_val)?;
    println!("dominant prototype of the batch (column-mean argmax): {label}");
    let zp = tape.value(z_proto);
    println!("retrieved prototype mixtures: {}x{} (one row per query)\n", zp.rows(), zp.cols());

    let s = semantic_correlation(&params, &bank, 0.07)?;
    println!("semantic correlation S (softmax of memory-address affinities at tau 0.07):");
    for r in 0..s.rows() {
        let row: Vec<f64> = s.row(r).iter().map(|v| (v * 1e3).round() / 1e3).collect();
        println!("  {row:?}");
    }
    println!(
        "\nEach row of S is how strongly one prototype's content co-activates the \
         others' addresses; the distillation loss steers each view's pooled \
         addressing toward the other view's row at its dominant prototype."
    );
    Ok(())
}
