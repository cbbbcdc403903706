//! The `cada` command-line tool.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::adaptation::{train_cada, train_finetune, train_source_only, train_target_only, TrainHistory};
use crate::config::RunConfig;
use crate::datasets::{
    load_feature_csv, sample_target_examples, write_feature_csv, Domain, DomainDataset, NormalizationStats,
    SyntheticShiftSpec,
};
use crate::evaluation::{render_report, run_experiment, unweighted_accuracy, Method, ReportFormat};
use crate::model::{load_model, predict_classes, save_model, ModelFile, ModelParams};
use crate::{seed, Error, Result};

const DEFAULT_OUT_DIR: &str = "cada-out";

#[derive(Debug, Parser)]
#[command(name = "cada", version, about = "Few-shot class-wise adversarial domain adaptation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the configured synthetic source/target pair as feature CSVs.
    Synth(CommonArgs),
    /// Train one model with the `[run]` settings and save it.
    Train(CommonArgs),
    /// Score a saved model on a feature CSV.
    Evaluate(EvaluateArgs),
    /// Run the few-shot experiment and write the reports.
    Benchmark(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML config; the bundled synthetic benchmark when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = "CADA_OUT_DIR")]
    pub out: Option<PathBuf>,
    /// Overrides the command's seed (synthetic, run or master seed).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Concurrent training runs.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Model file written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// Feature CSV with true labels.
    #[arg(long)]
    pub data: PathBuf,
    /// Optional config; its `data.num_classes` must match the model.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(args) => cmd_synth(&args),
        Command::Train(args) => cmd_train(&args),
        Command::Evaluate(args) => cmd_evaluate(&args),
        Command::Benchmark(args) => cmd_benchmark(&args),
    }
}

fn load_config(args: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default_benchmark(),
    };
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(args: &CommonArgs, cfg: &RunConfig) -> Result<PathBuf> {
    let dir = args
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn echo_config(dir: &Path, cfg: &RunConfig) -> Result<()> {
    write_file(&dir.join("resolved_config.toml"), &cfg.to_toml()?)
}

#[derive(Serialize)]
struct Manifest<'a> {
    source_file: &'a str,
    target_file: &'a str,
    source_rows: usize,
    target_rows: usize,
    synthetic: &'a SyntheticShiftSpec,
}

fn cmd_synth(args: &CommonArgs) -> Result<()> {
    let mut cfg = load_config(args)?;
    let spec = cfg
        .synthetic
        .as_mut()
        .ok_or_else(|| Error::config("synthetic", "synth needs a [synthetic] section"))?;
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    let spec = spec.clone();
    let (source, target) = crate::datasets::generate_synthetic_pair(&spec)?;
    let dir = out_dir(args, &cfg)?;
    write_feature_csv(&source, &dir.join("source.csv"))?;
    write_feature_csv(&target, &dir.join("target.csv"))?;
    let manifest = Manifest {
        source_file: "source.csv",
        target_file: "target.csv",
        source_rows: source.len(),
        target_rows: target.len(),
        synthetic: &spec,
    };
    let text = toml::to_string_pretty(&manifest).map_err(|e| Error::Parse(format!("manifest: {e}")))?;
    write_file(&dir.join("manifest.toml"), &text)?;
    println!("wrote {} source and {} target rows to {}", source.len(), target.len(), dir.display());
    Ok(())
}

fn normalized(ds: &DomainDataset, stats: &NormalizationStats) -> Result<DomainDataset> {
    ds.with_features(stats.apply(&ds.features)?)
}

struct TrainedModel {
    params: ModelParams,
    stats: NormalizationStats,
    histories: Vec<(&'static str, TrainHistory)>,
}

fn train_single(cfg: &RunConfig, source: &DomainDataset, target: &DomainDataset) -> Result<TrainedModel> {
    let run = &cfg.run;
    let hidden = cfg.model.hidden_dim;
    let method_seed = seed::derive(run.seed, &[seed::tag(run.method.slug())]);
    let few = || -> Result<DomainDataset> {
        let all: Vec<usize> = (0..target.len()).collect();
        let picked = sample_target_examples(
            target,
            &all,
            run.n_per_class,
            cfg.experiment.count_unit,
            seed::derive(run.seed, &[seed::tag("sample")]),
        )?;
        Ok(target.subset(&picked))
    };
    match run.method {
        Method::AllSource => {
            let stats = NormalizationStats::fit(&source.features)?;
            let out = train_source_only(&normalized(source, &stats)?, hidden, &cfg.train, method_seed)?;
            Ok(TrainedModel {
                params: out.params,
                stats,
                histories: vec![("source", out.history)],
            })
        }
        Method::AllTarget | Method::LabelTarget => {
            let data = if run.method == Method::AllTarget { target.clone() } else { few()? };
            let stats = NormalizationStats::fit(&data.features)?;
            let out = train_target_only(&normalized(&data, &stats)?, hidden, &cfg.train, method_seed)?;
            Ok(TrainedModel {
                params: out.params,
                stats,
                histories: vec![("target", out.history)],
            })
        }
        Method::FineTune | Method::Cada => {
            let few = few()?;
            let stats = NormalizationStats::fit(&source.features.vstack(&few.features)?)?;
            let src = normalized(source, &stats)?;
            let tgt = normalized(&few, &stats)?;
            if run.method == Method::FineTune {
                let out = train_finetune(&src, &tgt, hidden, &cfg.train, method_seed)?;
                Ok(TrainedModel {
                    params: out.params,
                    stats,
                    histories: vec![("source", out.source_history), ("finetune", out.finetune_history)],
                })
            } else {
                let out = train_cada(&src, &tgt, hidden, &cfg.train, method_seed)?;
                Ok(TrainedModel {
                    params: out.params,
                    stats,
                    histories: vec![("cada", out.history)],
                })
            }
        }
    }
}

fn cmd_train(args: &CommonArgs) -> Result<()> {
    let mut cfg = load_config(args)?;
    if let Some(s) = args.seed {
        cfg.run.seed = s;
    }
    let (source, target) = cfg.datasets()?;
    let trained = train_single(&cfg, &source, &target)?;
    let dir = out_dir(args, &cfg)?;
    echo_config(&dir, &cfg)?;
    let model_path = dir.join("model.txt");
    save_model(
        &model_path,
        &ModelFile {
            params: trained.params,
            normalization: Some(trained.stats),
        },
    )?;
    let last = trained.histories.len() - 1;
    for (i, (phase, history)) in trained.histories.iter().enumerate() {
        let name = if i == last {
            "history.csv".to_owned()
        } else {
            format!("history_{phase}.csv")
        };
        write_file(&dir.join(name), &history.to_csv())?;
    }
    println!("{} model written to {}", cfg.run.method, model_path.display());
    Ok(())
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let mc = model.params.config;
    if let Some(p) = &args.config {
        let cfg = RunConfig::load(p)?;
        if cfg.data.num_classes != mc.num_classes {
            return Err(Error::Precondition(format!(
                "model has {} classes, config data.num_classes is {}",
                mc.num_classes, cfg.data.num_classes
            )));
        }
    }
    let data = load_feature_csv(&args.data, Domain::Target, mc.num_classes, Some(mc.input_dim))?;
    let features = match &model.normalization {
        Some(stats) => stats.apply(&data.features)?,
        None => data.features.clone(),
    };
    let preds = predict_classes(&model.params, &features)?;
    let ua = unweighted_accuracy(&preds, &data.labels, mc.num_classes)?;
    println!("UA: {ua:.6} ({} rows)", data.len());
    Ok(())
}

fn cmd_benchmark(args: &CommonArgs) -> Result<()> {
    let mut cfg = load_config(args)?;
    if let Some(s) = args.seed {
        cfg.experiment.master_seed = s;
    }
    let (source, target) = cfg.datasets()?;
    let dir = out_dir(args, &cfg)?;
    echo_config(&dir, &cfg)?;
    let output = run_experiment(
        &source,
        &target,
        &cfg.experiment,
        &cfg.train,
        cfg.model.hidden_dim,
        cfg.workers,
    )?;
    let summary = render_report(&output.report, ReportFormat::Text)?;
    write_file(&dir.join("summary.txt"), &summary)?;
    write_file(&dir.join("report.csv"), &render_report(&output.report, ReportFormat::Csv)?)?;
    let hist_dir = dir.join("histories");
    fs::create_dir_all(&hist_dir).map_err(|e| Error::io(&hist_dir, e))?;
    for h in &output.histories {
        write_file(&hist_dir.join(format!("{}.csv", h.file_stem())), &h.history.to_csv())?;
    }
    print!("{summary}");
    Ok(())
}
