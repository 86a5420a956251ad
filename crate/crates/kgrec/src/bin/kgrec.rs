//! Command-line entry point: train, eval, ablate, perturb and gen-synth
//! subcommands over a flat key=value configuration.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use kgrec::ckg::build_ckg;
use kgrec::config::RunConfig;
use kgrec::data::{
    kcore_filter, load_alignment, load_interactions, load_kg, split, DatasetStats,
    InteractionDataset, KnowledgeGraph,
};
use kgrec::eval::{evaluate, run_ablation, run_noise_experiment, EvalConfig, MetricsReport, Split};
use kgrec::model::{load_checkpoint, save_checkpoint};
use kgrec::synthetic::{generate, write_files, SyntheticSpec};
use kgrec::trainer::train;

#[derive(Parser)]
#[command(name = "kgrec", about = "Knowledge-graph-aware recommendation training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Flat key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. --set tau=0.5 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads; 1 forces the deterministic reference mode.
    #[arg(long)]
    threads: Option<usize>,
    /// Random seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model; writes checkpoint, history.csv, metrics.csv.
    Train(RunArgs),
    /// Evaluate a saved checkpoint.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        /// Checkpoint produced by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Split to score: valid or test.
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Train every contrastive variant and compare on the test split.
    Ablate(RunArgs),
    /// Retrain under entity node drops and compare on the test split.
    Perturb(RunArgs),
    /// Write the bundled synthetic dataset files.
    GenSynth {
        /// Directory for interactions.tsv, kg.tsv, alignment.tsv.
        #[arg(long, default_value = "data/synthetic")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn resolve_config(run: &RunArgs) -> Result<RunConfig, String> {
    let mut cfg = RunConfig::resolve(run.config.as_deref(), &run.set)
        .map_err(|e| e.to_string())?;
    if let Some(seed) = run.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = run.threads {
        if threads == 0 {
            return Err("--threads must be >= 1".into());
        }
        cfg.threads = threads;
    }
    Ok(cfg)
}

fn load_data(cfg: &RunConfig) -> Result<(InteractionDataset, KnowledgeGraph), String> {
    let path = cfg.require_interactions().map_err(|e| e.to_string())?;
    let mut pairs = load_interactions(path, &cfg.delimiter).map_err(|e| e.to_string())?;
    if cfg.min_interactions >= 1 {
        pairs = kcore_filter(&pairs, cfg.min_interactions);
    }
    let dataset = split(
        &pairs,
        (cfg.train_ratio, cfg.valid_ratio, cfg.test_ratio),
        cfg.split_seed,
    )
    .map_err(|e| e.to_string())?;
    let kg = match &cfg.kg_path {
        Some(kg_path) => {
            if !kg_path.exists() {
                return Err(format!("kg_path does not exist: {}", kg_path.display()));
            }
            let mut kg = load_kg(kg_path).map_err(|e| e.to_string())?;
            let alignment = match &cfg.alignment_path {
                Some(p) => load_alignment(p).map_err(|e| e.to_string())?,
                None => Vec::new(),
            };
            kg.align(&alignment, &dataset).map_err(|e| e.to_string())?;
            kg
        }
        None => KnowledgeGraph::items_only(&dataset),
    };
    Ok((dataset, kg))
}

fn write_out(dir: &Path, name: &str, content: &str) -> Result<(), String> {
    std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
    std::fs::write(dir.join(name), content).map_err(|e| e.to_string())
}

fn metrics_csv(reports: &[&MetricsReport]) -> String {
    let mut out = String::from(MetricsReport::csv_header());
    out.push('\n');
    for r in reports {
        out.push_str(&r.to_csv_row());
        out.push('\n');
    }
    out
}

fn prepare_run(run: &RunArgs) -> Result<(RunConfig, InteractionDataset, KnowledgeGraph), String> {
    let cfg = resolve_config(run)?;
    let (dataset, kg) = load_data(&cfg)?;
    std::fs::create_dir_all(&run.out).map_err(|e| e.to_string())?;
    write_out(&run.out, "resolved.config", &cfg.resolved_text())?;
    write_out(
        &run.out,
        "stats.csv",
        &DatasetStats::from_parts(&dataset, &kg).to_csv(),
    )?;
    Ok((cfg, dataset, kg))
}

fn cmd_train(run: &RunArgs) -> Result<(), String> {
    let (cfg, dataset, kg) = prepare_run(run)?;
    let tc = cfg.train_config();
    let outcome = train(&tc, &dataset, &kg).map_err(|e| e.to_string())?;
    write_out(&run.out, "history.csv", &outcome.history.to_csv())?;
    save_checkpoint(&outcome.params, &run.out.join("checkpoint.bin"))
        .map_err(|e| e.to_string())?;
    let ckg = build_ckg(&dataset, &kg).map_err(|e| e.to_string())?;
    let eval_cfg = EvalConfig {
        hops: tc.hops,
        max_fanout: tc.max_fanout,
        seed: tc.seed,
        k: tc.top_k,
    };
    let report = evaluate(
        &outcome.params,
        &ckg,
        &dataset,
        Split::Test,
        &eval_cfg,
        tc.variant.label(),
        None,
    )
    .map_err(|e| e.to_string())?;
    write_out(&run.out, "metrics.csv", &metrics_csv(&[&report]))?;
    println!(
        "trained {} epochs (best {}, {}), test recall@{} {:.6}, ndcg@{} {:.6}",
        outcome.history.epochs.len(),
        outcome.history.best_epoch,
        outcome.history.stop_reason,
        report.k,
        report.recall,
        report.k,
        report.ndcg
    );
    Ok(())
}

fn cmd_eval(run: &RunArgs, checkpoint: &Path, split_name: &str) -> Result<(), String> {
    let split = match split_name {
        "valid" => Split::Valid,
        "test" => Split::Test,
        other => return Err(format!("unknown split `{other}` (expected valid or test)")),
    };
    let (cfg, dataset, kg) = prepare_run(run)?;
    let params = load_checkpoint(checkpoint).map_err(|e| e.to_string())?;
    let ckg = build_ckg(&dataset, &kg).map_err(|e| e.to_string())?;
    let eval_cfg = EvalConfig {
        hops: cfg.hops,
        max_fanout: cfg.max_fanout,
        seed: cfg.seed,
        k: cfg.k,
    };
    let report = evaluate(
        &params,
        &ckg,
        &dataset,
        split,
        &eval_cfg,
        cfg.variant.label(),
        None,
    )
    .map_err(|e| e.to_string())?;
    write_out(&run.out, "metrics.csv", &metrics_csv(&[&report]))?;
    println!(
        "{} recall@{} {:.6}, ndcg@{} {:.6} over {} users",
        split_name, report.k, report.recall, report.k, report.ndcg, report.users
    );
    Ok(())
}

fn cmd_ablate(run: &RunArgs) -> Result<(), String> {
    let (cfg, dataset, kg) = prepare_run(run)?;
    let rows = run_ablation(&cfg.train_config(), &dataset, &kg).map_err(|e| e.to_string())?;
    for (report, outcome) in &rows {
        write_out(
            &run.out,
            &format!("history_{}.csv", report.variant),
            &outcome.history.to_csv(),
        )?;
    }
    let reports: Vec<&MetricsReport> = rows.iter().map(|(r, _)| r).collect();
    write_out(&run.out, "metrics.csv", &metrics_csv(&reports))?;
    for r in &reports {
        println!("{}", r.to_csv_row());
    }
    Ok(())
}

fn cmd_perturb(run: &RunArgs) -> Result<(), String> {
    let (cfg, dataset, kg) = prepare_run(run)?;
    let rows = run_noise_experiment(&cfg.train_config(), &dataset, &kg, &cfg.drop_rates)
        .map_err(|e| e.to_string())?;
    for (report, outcome) in &rows {
        write_out(
            &run.out,
            &format!("history_rate_{}.csv", report.drop_rate.unwrap_or(0.0)),
            &outcome.history.to_csv(),
        )?;
    }
    let reports: Vec<&MetricsReport> = rows.iter().map(|(r, _)| r).collect();
    write_out(&run.out, "metrics.csv", &metrics_csv(&reports))?;
    for r in &reports {
        println!("{}", r.to_csv_row());
    }
    Ok(())
}

fn cmd_gen_synth(out: &Path, seed: Option<u64>) -> Result<(), String> {
    let mut spec = SyntheticSpec::default();
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let data = generate(&spec);
    write_files(&data, out).map_err(|e| e.to_string())?;
    println!(
        "wrote {} interactions, {} triples, {} alignments to {}",
        data.interactions.len(),
        data.kg_triples.len(),
        data.alignment.len(),
        out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(run) => cmd_train(run),
        Command::Eval {
            run,
            checkpoint,
            split,
        } => cmd_eval(run, checkpoint, split),
        Command::Ablate(run) => cmd_ablate(run),
        Command::Perturb(run) => cmd_perturb(run),
        Command::GenSynth { out, seed } => cmd_gen_synth(out, *seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
