//! End-to-end training on the synthetic benchmark, without the CLI.
//!
//! Generates a small planted-structure dataset, splits it subject-dependently,
//! trains a reduced model for a few epochs, and compares the test metrics
//! against the uniform-predictor baseline.
//!
//! Run with: `cargo run --example train_synthetic`

use mpcl::data::{generate_synthetic, make_splits, GeneratorConfig, SplitMode};
use mpcl::metrics::METRIC_NAMES;
use mpcl::train::{evaluate, uniform_baseline, TrainConfig, Trainer};

fn main() -> mpcl::error::Result<()> {
    let mut gen = GeneratorConfig::default_benchmark(7);
    gen.subjects = 3;
    gen.samples_per_subject = 20;
    let (manifest, samples) = generate_synthetic(&gen)?;

    let mut cfg = TrainConfig::desk();
    cfg.model.embed_dim = 16;
    cfg.model.prototypes = 8;
    cfg.model.hsc_blocks = 2;
    cfg.model.hsc_min_slots = 4;
    cfg.batch_size = 4;
    cfg.epochs = 15;
    cfg.lr = 0.003;

    let plan = make_splits(&samples, SplitMode::Dependent, cfg.seed, cfg.train_frac)?;
    let fold = &plan.folds[0];
    println!(
        "subject {}: {} train / {} test samples, {} epochs\n",
        fold.name,
        fold.train.len(),
        fold.test.len(),
        cfg.epochs
    );

    let mut trainer = Trainer::new(&cfg, &manifest, cfg.seed)?;
    for _ in 0..cfg.epochs {
        let stats = trainer.run_epoch(&samples, &fold.train)?;
        if stats.epoch % 3 == 0 {
            println!(
                "epoch {:>2}: task {:.4}  distill {:.4}  contrastive {:.4}  total {:.4}",
                stats.epoch, stats.task, stats.prd, stats.semloob, stats.total
            );
        }
    }

    let (report, _) = evaluate(&trainer.params, &trainer.layout, &samples, &fold.test)?;
    let truths: Vec<_> = fold.test.iter().map(|i| samples[*i].label.clone()).collect();
    let baseline = uniform_baseline(&truths)?;
    println!("\n{:<14} {:>10} {:>10}", "metric", "trained", "uniform");
    for (name, (model, base)) in
        METRIC_NAMES.iter().zip(report.values().into_iter().zip(baseline.values()))
    {
        println!("{name:<14} {model:>10.4} {base:>10.4}");
    }
    assert!(report.kl < baseline.kl, "training must beat the no-information baseline");
    println!("\ntrained KL beats the uniform predictor by {:.1}x", baseline.kl / report.kl);
    Ok(())
}
