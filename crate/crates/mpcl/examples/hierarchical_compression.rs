//! Hierarchical semantic compression: a stack of Hopfield-lookup +
//! self-attention blocks with geometrically shrinking slot counts, ending in
//! an emotion-distribution head.
//!
//! Prints the slot schedule, pushes a fused two-view embedding through the
//! stack block by block, and shows that the zero-initialized head makes an
//! untrained model predict the uniform distribution - the calibrated
//! starting point.
//!
//! Run with: `cargo run --example hierarchical_compression`

use mpcl::hsc::{block_forward, hsc_forward, predict, register_hsc, slot_schedule};
use mpcl::numeric::Rng;
use mpcl::tape::{ParamSet, Tape};

fn main() -> mpcl::error::Result<()> {
    let (prototypes, min_slots, blocks) = (16, 4, 3);
    let schedule = slot_schedule(prototypes, min_slots, blocks)?;
    println!(
        "slot schedule from {prototypes} down to {min_slots} over {blocks} blocks: {schedule:?}"
    );

    let (emotions, embed_dim, heads) = (10, 32, 4);
    let mut rng = Rng::seed_from(9);
    let mut params = ParamSet::new();
    // Block 0's content matrix is seeded from a prototype memory in the full
    // model; a random matrix stands in for it here.
    let bank_memory = rng.normal_matrix(prototypes, embed_dim, 0.1);
    let layout = register_hsc(&mut params, &bank_memory, &schedule, heads, emotions, &mut rng)?;

    let mut tape = Tape::new(&params);
    let rows = 8;
    let mut h = tape.constant(rng.normal_matrix(rows, embed_dim, 1.0));
    println!("\ninput: fused views, {rows}x{embed_dim}");
    for (i, block) in layout.blocks.iter().enumerate() {
        h = block_forward(&mut tape, &params, block, h, layout.beta)?;
        let v = tape.value(h);
        println!(
            "after block {i}: {}x{} (residual lookup against {} slots, then residual attention)",
            v.rows(),
            v.cols(),
            block.capacity
        );
    }

    let mut tape = Tape::new(&params);
    let phy = tape.constant(rng.normal_matrix(rows, embed_dim, 1.0));
    let beha = tape.constant(rng.normal_matrix(rows, embed_dim, 1.0));
    let compressed = hsc_forward(&mut tape, &params, &layout, phy, beha)?;
    let probs = predict(&mut tape, &params, &layout, compressed)?;
    let p = tape.value(probs);
    println!("\nuntrained prediction over {emotions} emotions:");
    println!("  {:?}", p.row(0).iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>());
    assert!(p.row(0).iter().all(|v| (v - 0.1).abs() < 1e-12));
    println!("  exactly uniform: the head starts at zero, so training begins uncommitted.");
    Ok(())
}
