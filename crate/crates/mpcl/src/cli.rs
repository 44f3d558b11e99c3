//! Command-line front end.
//!
//! Six subcommands cover the full experiment cycle: `synth` writes a
//! synthetic benchmark, `train` runs a cross-validation protocol and leaves a
//! run directory behind, `eval` re-scores a checkpoint, `gradcheck` verifies
//! the analytic gradients against finite differences, `ablate` sweeps the
//! single-module ablations, and `report` renders metric / rank / correlation
//! tables from run directories.
//!
//! Progress goes to standard error; machine-readable results go to standard
//! output and files. Exit codes: 0 success, 2 configuration error, 3 data
//! error, 4 numeric or training failure.

use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

use crate::data::{
    generate_synthetic, load_dataset, make_splits, write_dataset, GeneratorConfig, SplitMode,
};
use crate::error::{Error, Result};
use crate::metrics::{MetricReport, RankedMethod, METRIC_NAMES};
use crate::model::{batch_forward, register_model, snapshot_teachers};
use crate::numeric::Rng;
use crate::tape::{grad_check, GradCheckConfig, ParamSet};
use crate::train::{
    self, evaluate, load_checkpoint, run_protocol, Trainer, TrainConfig,
};

/// Memory-guided prototypical co-occurrence learning for mixed-emotion
/// distributions: synthesize benchmarks, train, evaluate, and compare.
#[derive(Parser, Debug)]
#[command(name = "mpcl", version, after_help = config_key_help())]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic mixed-emotion dataset (manifest + sample files).
    Synth(SynthArgs),
    /// Train under a cross-validation protocol and write a run directory.
    Train(TrainArgs),
    /// Score a saved checkpoint on a dataset.
    Eval(EvalArgs),
    /// Check analytic gradients of the full objective against central
    /// finite differences, one verdict line per parameter slot.
    Gradcheck(GradcheckArgs),
    /// Train the full model and every single-module ablation, then compare.
    Ablate(AblateArgs),
    /// Render metric, rank, and label-correlation tables from run
    /// directories.
    Report(ReportArgs),
}

/// Shared configuration plumbing: profile -> optional file -> `--set`
/// overrides -> `--ablate` switches -> `--seed`.
#[derive(Args, Debug, Clone)]
struct ConfigArgs {
    /// Configuration profile to start from.
    #[arg(long, default_value = "desk", value_parser = ["desk", "paper"])]
    profile: String,

    /// TOML configuration file merged over the profile (unknown keys
    /// rejected).
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Dotted-key override applied after the file, e.g.
    /// `--set model.embed_dim=16` (repeatable; see below for all keys).
    #[arg(long = "set", value_name = "KEY=VALUE", action = ArgAction::Append)]
    set: Vec<String>,

    /// Disable or re-enable a module: `msaf|prd|pcl|hsc=off` (repeatable).
    #[arg(long = "ablate", value_name = "MODULE=off", action = ArgAction::Append)]
    ablate: Vec<String>,

    /// Base random seed; overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<TrainConfig> {
        let file_text = match &self.config {
            Some(path) => Some(std::fs::read_to_string(path).map_err(|e| {
                Error::Config(format!("cannot read {}: {e}", path.display()))
            })?),
            None => None,
        };
        let overrides = parse_overrides(&self.set)?;
        let mut cfg = train::resolve_config(&self.profile, file_text.as_deref(), &overrides)?;
        for spec in &self.ablate {
            let (module, state) = spec.split_once('=').ok_or_else(|| {
                Error::Config(format!("malformed ablation {spec:?} (expected module=off)"))
            })?;
            let enabled = match state.trim() {
                "off" => false,
                "on" => true,
                other => {
                    return Err(Error::Config(format!(
                        "ablation state {other:?} must be on or off"
                    )))
                }
            };
            cfg.ablation.set(module.trim(), enabled)?;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_overrides(set: &[String]) -> Result<Vec<(String, String)>> {
    set.iter()
        .map(|s| {
            s.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| {
                    Error::Config(format!("malformed override {s:?} (expected KEY=VALUE)"))
                })
        })
        .collect()
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Output directory for the manifest and sample files.
    #[arg(long, default_value = "data")]
    out: PathBuf,

    /// Generator spec (TOML) merged over the built-in benchmark recipe.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Dotted-key override on the generator spec, e.g. `--set rho=0.3`
    /// (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", action = ArgAction::Append)]
    set: Vec<String>,

    /// Generator seed; wins over the spec file and `--set`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Mode {
    /// Subject-dependent: one fold per subject, split within the subject.
    Dep,
    /// Leave-one-subject-out.
    Loso,
}

impl Mode {
    fn split(self) -> SplitMode {
        match self {
            Mode::Dep => SplitMode::Dependent,
            Mode::Loso => SplitMode::Loso,
        }
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Dataset manifest (TOML).
    data: PathBuf,

    #[command(flatten)]
    config: ConfigArgs,

    /// Evaluation protocol.
    #[arg(long, value_enum, default_value_t = Mode::Dep)]
    mode: Mode,

    /// Directory that receives the `run.<hash>` artifact directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,

    /// Fold-level worker threads (results are aggregated in fold order
    /// regardless).
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Dataset manifest (TOML).
    data: PathBuf,

    /// Checkpoint file written by `train` (fold-<k>/checkpoint.bin).
    #[arg(long, value_name = "FILE")]
    checkpoint: PathBuf,

    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[command(flatten)]
    config: ConfigArgs,

    /// Test hook: scale this slot's analytic gradient so the check must
    /// fail (negative control).
    #[arg(long, hide = true, value_name = "SLOT")]
    corrupt: Option<String>,
}

#[derive(Args, Debug)]
struct AblateArgs {
    /// Dataset manifest (TOML).
    data: PathBuf,

    /// Baseline configuration; each variant switches one module off on top
    /// of this.
    #[command(flatten)]
    config: ConfigArgs,

    /// Evaluation protocol.
    #[arg(long, value_enum, default_value_t = Mode::Dep)]
    mode: Mode,

    /// Directory that receives one `run.<hash>` directory per variant.
    #[arg(long, default_value = ".")]
    out: PathBuf,

    /// Fold-level worker threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Run directories (`run.<hash>`) to summarize; two or more are ranked.
    #[arg(required = true)]
    runs: Vec<PathBuf>,

    /// Accepted for interface uniformity; report rendering is deterministic.
    #[arg(long)]
    seed: Option<u64>,
}

/// `--help` appendix: every configuration key with its full-scale default.
fn config_key_help() -> String {
    let tree = toml::Value::try_from(TrainConfig::paper())
        .expect("the built-in profile serializes");
    let mut lines = Vec::new();
    flatten_keys("", &tree, &mut lines);
    format!(
        "Configuration keys (full-scale `paper` profile defaults shown; start from a \
         profile with --profile, then adjust via --config FILE and --set KEY=VALUE):\n  {}",
        lines.join("\n  ")
    )
}

fn flatten_keys(prefix: &str, value: &toml::Value, out: &mut Vec<String>) {
    match value {
        toml::Value::Table(table) => {
            for (k, child) in table {
                let key =
                    if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten_keys(&key, child, out);
            }
        }
        leaf => out.push(format!("{prefix} = {}", toml_literal(leaf))),
    }
}

fn toml_literal(value: &toml::Value) -> String {
    match value {
        toml::Value::String(s) => format!("{s:?}"),
        toml::Value::Integer(i) => i.to_string(),
        // Keep the decimal point so the literal stays a TOML float.
        toml::Value::Float(f) if f.fract() == 0.0 && f.is_finite() => format!("{f:.1}"),
        toml::Value::Float(f) => format!("{f}"),
        toml::Value::Boolean(b) => b.to_string(),
        toml::Value::Array(items) => {
            let inner: Vec<String> = items.iter().map(toml_literal).collect();
            format!("[{}]", inner.join(", "))
        }
        other => other.to_string(),
    }
}

/// Fixed-width metric table, one row per method, metrics in report order.
fn metric_table(rows: &[(String, MetricReport)]) -> String {
    let name_w =
        rows.iter().map(|(n, _)| n.len()).chain(std::iter::once("method".len())).max().unwrap();
    let mut out = format!("{:<name_w$}", "method");
    for name in METRIC_NAMES {
        out.push_str(&format!("  {name:>12}"));
    }
    out.push('\n');
    for (name, report) in rows {
        out.push_str(&format!("{name:<name_w$}"));
        for v in report.values() {
            out.push_str(&format!("  {v:>12.6}"));
        }
        out.push('\n');
    }
    out
}

/// Fixed-width rank table (fractional ranks; 1 is best on every metric).
fn rank_table(ranks: &[RankedMethod]) -> String {
    let name_w =
        ranks.iter().map(|r| r.name.len()).chain(std::iter::once("method".len())).max().unwrap();
    let mut out = format!("{:<name_w$}", "method");
    for name in METRIC_NAMES {
        out.push_str(&format!("  {name:>12}"));
    }
    out.push_str(&format!("  {:>12}\n", "average"));
    for r in ranks {
        out.push_str(&format!("{:<name_w$}", r.name));
        for v in r.per_metric {
            out.push_str(&format!("  {v:>12.2}"));
        }
        out.push_str(&format!("  {:>12.2}\n", r.average));
    }
    out
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let base = GeneratorConfig::default_benchmark(args.seed.unwrap_or(7));
    let mut tree = toml::Value::try_from(&base)
        .map_err(|e| Error::Config(format!("generator serialization: {e}")))?;
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let file: toml::Value =
            toml::from_str(&text).map_err(|e| Error::Config(format!("generator spec: {e}")))?;
        train::merge_toml(&mut tree, file);
    }
    for (key, value) in parse_overrides(&args.set)? {
        train::set_dotted(&mut tree, &key, &value)?;
    }
    if let Some(seed) = args.seed {
        train::set_dotted(&mut tree, "seed", &seed.to_string())?;
    }
    let cfg: GeneratorConfig =
        tree.try_into().map_err(|e| Error::Config(format!("generator spec: {e}")))?;
    let (manifest, samples) = generate_synthetic(&cfg)?;
    let manifest_path = write_dataset(&args.out, &manifest, &samples)?;
    eprintln!(
        "wrote {} samples ({} emotions, {} subjects) under {}",
        samples.len(),
        manifest.emotion_count(),
        cfg.subjects,
        args.out.display()
    );
    println!("{}", manifest_path.display());
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let cfg = args.config.resolve()?;
    let (manifest, samples) = load_dataset(&args.data)?;
    let plan = make_splits(&samples, args.mode.split(), cfg.seed, cfg.train_frac)?;
    eprintln!(
        "training {} folds on {} samples ({} epochs each, {} worker{})",
        plan.folds.len(),
        samples.len(),
        cfg.epochs,
        args.jobs.max(1),
        if args.jobs.max(1) == 1 { "" } else { "s" }
    );
    let result = run_protocol(&manifest, &samples, &plan, &cfg, Some(&args.out), args.jobs)?;
    let mut rows: Vec<(String, MetricReport)> = result
        .folds
        .iter()
        .map(|f| (format!("fold {}", f.name), f.report.clone()))
        .collect();
    rows.push(("mean".to_string(), result.mean.clone()));
    print!("{}", metric_table(&rows));
    if let Some(dir) = &result.run_dir {
        eprintln!("artifacts in {}", dir.display());
    }
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let cfg = args.config.resolve()?;
    let (manifest, samples) = load_dataset(&args.data)?;
    let mut trainer = Trainer::new(&cfg, &manifest, cfg.seed)?;
    load_checkpoint(&args.checkpoint, &mut trainer, None)?;
    let all: Vec<usize> = (0..samples.len()).collect();
    let (report, _) = evaluate(&trainer.params, &trainer.layout, &samples, &all)?;
    eprintln!(
        "scored {} samples with {}",
        samples.len(),
        args.checkpoint.display()
    );
    print!("{}", metric_table(&[("eval".to_string(), report)]));
    Ok(())
}

fn cmd_gradcheck(args: &GradcheckArgs) -> Result<()> {
    let cfg = args.config.resolve()?;
    // Deterministic probe batch: the benchmark generator shrunk to two
    // subjects with two samples each.
    let mut gen = GeneratorConfig::default_benchmark(cfg.seed);
    gen.subjects = 2;
    gen.samples_per_subject = 2;
    let (manifest, samples) = generate_synthetic(&gen)?;
    let batch: Vec<&crate::data::Sample> = samples.iter().collect();

    let mut rng = Rng::seed_from(cfg.seed);
    let mut params = ParamSet::new();
    let layout = register_model(
        &mut params,
        &cfg.model,
        cfg.ablation,
        &manifest.modalities,
        manifest.emotion_count(),
        &mut rng,
    )?;
    // Probe at a generic point: the classifier head initializes to zero,
    // which would silence every task-loss gradient upstream of it and let
    // those slots pass vacuously.
    let ids: Vec<_> = params.iter().map(|(id, _, _)| id).collect();
    for id in ids {
        for v in params.value_mut(id).as_mut_slice() {
            *v += 0.05 * rng.normal();
        }
    }
    // The distillation teachers are gradient-detached by design; freeze them
    // outside the probed closure so the finite differences see the same
    // constants as the analytic pass.
    let teachers = snapshot_teachers(&params, &layout)?;
    eprintln!(
        "checking {} parameter slots ({} scalars) against central differences",
        params.len(),
        params.scalar_count()
    );
    let check_cfg =
        GradCheckConfig { corrupt_slot: args.corrupt.clone(), ..GradCheckConfig::default() };
    let report = grad_check(
        &mut params,
        |tape, p| Ok(batch_forward(tape, p, &layout, &batch, Some(&teachers))?.total),
        &check_cfg,
    )?;
    for slot in &report.slots {
        println!(
            "{} {} max_rel_err {:.3e} probes {}",
            if slot.pass { "PASS" } else { "FAIL" },
            slot.name,
            slot.max_rel_err,
            slot.probes
        );
    }
    if report.all_pass() {
        println!("gradcheck: all {} slots pass", report.slots.len());
        Ok(())
    } else {
        let failed = report.slots.iter().filter(|s| !s.pass).count();
        Err(Error::Training {
            context: "gradcheck".into(),
            msg: format!("{failed} of {} slots failed", report.slots.len()),
        })
    }
}

fn cmd_ablate(args: &AblateArgs) -> Result<()> {
    let base = args.config.resolve()?;
    let (manifest, samples) = load_dataset(&args.data)?;
    let plan = make_splits(&samples, args.mode.split(), base.seed, base.train_frac)?;

    let mut variants: Vec<(String, TrainConfig)> = vec![("full".to_string(), base.clone())];
    for module in ["msaf", "prd", "pcl", "hsc"] {
        let mut cfg = base.clone();
        cfg.ablation.set(module, false)?;
        variants.push((format!("no-{module}"), cfg));
    }

    let mut rows: Vec<(String, MetricReport)> = Vec::with_capacity(variants.len());
    for (name, cfg) in &variants {
        eprintln!("ablation variant {name}: {} folds", plan.folds.len());
        let result = run_protocol(&manifest, &samples, &plan, cfg, Some(&args.out), args.jobs)?;
        if let Some(dir) = &result.run_dir {
            eprintln!("  artifacts in {}", dir.display());
        }
        rows.push((name.clone(), result.mean.clone()));
    }

    print!("{}", metric_table(&rows));
    println!();
    print!("{}", rank_table(&crate::metrics::average_rank(&rows)?));
    let full_kl = rows[0].1.kl;
    let beaten: Vec<&str> = rows[1..]
        .iter()
        .filter(|(_, r)| full_kl < r.kl)
        .map(|(n, _)| n.as_str())
        .collect();
    println!(
        "full model beats {} of {} ablations on mean KL ({})",
        beaten.len(),
        rows.len() - 1,
        if beaten.is_empty() { "none".to_string() } else { beaten.join(", ") }
    );
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> Result<()> {
    let mut rows: Vec<(String, MetricReport)> = Vec::with_capacity(args.runs.len());
    for dir in &args.runs {
        let path = dir.join("mean_metrics");
        let text =
            std::fs::read_to_string(&path).map_err(|e| Error::io(path.clone(), e))?;
        let report = MetricReport::parse_text_record(&text)?;
        let name = dir
            .file_name()
            .and_then(|s| s.to_str())
            .unwrap_or("run")
            .to_string();
        rows.push((name, report));
    }
    print!("{}", metric_table(&rows));
    println!();
    let ranks = if rows.len() >= 2 {
        crate::metrics::average_rank(&rows)?
    } else {
        // A single method is trivially rank 1 everywhere.
        vec![RankedMethod { name: rows[0].0.clone(), per_metric: [1.0; 6], average: 1.0 }]
    };
    print!("{}", rank_table(&ranks));
    for (dir, (name, _)) in args.runs.iter().zip(&rows) {
        let path = dir.join("label_correlation");
        let grid =
            std::fs::read_to_string(&path).map_err(|e| Error::io(path.clone(), e))?;
        println!("\nlabel correlation ({name}):");
        print!("{grid}");
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
        Command::Ablate(args) => cmd_ablate(args),
        Command::Report(args) => cmd_report(args),
    }
}

/// Parse the process arguments, execute, and return the exit code (0
/// success, 2 configuration, 3 data, 4 numeric/training failure).
pub fn main_entry() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // `--help`/`--version` arrive as "errors" but exit cleanly.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn help_appendix_lists_every_config_key() {
        let help = config_key_help();
        // Top-level optimizer keys and every nested model/ablation key must
        // appear with their full-scale defaults.
        for key in ["lr = 0.001", "batch_size = 128", "epochs = 400", "seed = 7"] {
            assert!(help.contains(key), "missing {key:?} in:\n{help}");
        }
        for key in [
            "model.embed_dim = 128",
            "model.prototypes = 100",
            "model.scales = [8.0, 14.3, 22.0]",
            "model.tau_dist = 0.07",
            "model.hsc_blocks = 10",
            "ablation.msaf = true",
            "ablation.hsc = true",
        ] {
            assert!(help.contains(key), "missing {key:?} in:\n{help}");
        }
    }

    #[test]
    fn cli_parses_and_help_includes_appendix() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
        let help = Cli::command().render_long_help().to_string();
        assert!(help.contains("model.embed_dim = 128"), "appendix missing:\n{help}");
    }

    #[test]
    fn config_args_resolution_applies_overrides_in_order() {
        let args = ConfigArgs {
            profile: "desk".into(),
            config: None,
            set: vec!["epochs=3".into(), "model.embed_dim=16".into()],
            ablate: vec!["pcl=off".into()],
            seed: Some(99),
        };
        let cfg = args.resolve().unwrap();
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.model.embed_dim, 16);
        assert!(!cfg.ablation.pcl);
        assert!(cfg.ablation.msaf);
        assert_eq!(cfg.seed, 99);
    }

    #[test]
    fn config_args_reject_malformed_input() {
        let bad_set = ConfigArgs {
            profile: "desk".into(),
            config: None,
            set: vec!["epochs".into()],
            ablate: vec![],
            seed: None,
        };
        assert!(matches!(bad_set.resolve(), Err(Error::Config(_))));
        let bad_ablate = ConfigArgs {
            profile: "desk".into(),
            config: None,
            set: vec![],
            ablate: vec!["pcl=sideways".into()],
            seed: None,
        };
        assert!(matches!(bad_ablate.resolve(), Err(Error::Config(_))));
        let bad_module = ConfigArgs {
            profile: "desk".into(),
            config: None,
            set: vec![],
            ablate: vec!["attention=off".into()],
            seed: None,
        };
        assert!(matches!(bad_module.resolve(), Err(Error::Config(_))));
    }

    #[test]
    fn tables_are_aligned_and_complete() {
        let report = MetricReport {
            chebyshev: 0.1,
            clark: 0.2,
            canberra: 0.3,
            kl: 0.4,
            cosine: 0.9,
            intersection: 0.8,
            samples: 12,
        };
        let table = metric_table(&[("alpha".into(), report.clone()), ("b".into(), report)]);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].contains("chebyshev") && lines[0].contains("intersection"));
        assert_eq!(lines[1].len(), lines[2].len(), "rows must align");
        assert!(lines[1].contains("0.100000"));
    }
}
