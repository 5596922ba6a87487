//! `mvpose` command-line interface.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use mvpose_core::nn::checkpoint::Checkpoint;
use mvpose_core::{FusionInputVariant, IntegratorArch, MultiViewIntegrator, ViewPerceptron};
use mvpose_harness::ablation::{run_ablation, write_json, AblationTable, Suite};
use mvpose_harness::data::synthesize;
use mvpose_harness::eval::evaluate_mpjpe;
use mvpose_harness::report::emit_full_report;
use mvpose_harness::train::{train_stage1, train_stage2_cached, train_stage2_joint};
use mvpose_harness::{ExperimentConfig, FeatureCache, HarnessError, LoadedSplit, MetricsReport, Result};
use mvpose_rig::{Split, SyntheticDataset};

#[derive(Parser)]
#[command(name = "mvpose", version, about = "Multi-view 3D pose estimation for lifting tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; omitted fields take desk-scale defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed of the step being run.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Build the synthetic two-view dataset.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Replace an existing dataset in the output directory.
        #[arg(long)]
        overwrite: bool,
    },
    /// Stage 1: train the per-view perceptron on 2D heatmaps.
    #[command(name = "train-2d")]
    Train2d {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
    },
    /// Stage 2: train the integrator on a frozen stage-1 perceptron.
    #[command(name = "train-3d")]
    Train3d {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        perceptron: PathBuf,
        /// half-hourglass or simple-encoder; defaults to the config.
        #[arg(long)]
        arch: Option<String>,
        /// heatmaps, heatmaps+image or heatmaps+skips; defaults to the config.
        #[arg(long)]
        variant: Option<String>,
        /// Comma-separated camera indices; defaults to all cameras.
        #[arg(long, value_delimiter = ',')]
        views: Option<Vec<usize>>,
    },
    /// Score a trained pair on the test split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        perceptron: PathBuf,
        #[arg(long)]
        integrator: PathBuf,
        /// Experiment name in the report.
        #[arg(long, default_value = "eval")]
        name: String,
    },
    /// Run an ablation suite; `--out` is a work directory that caches data,
    /// checkpoints and finished arms.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        suite: Suite,
    },
    /// Write metrics.csv, ablation tables and charts from a work directory.
    Report {
        #[command(flatten)]
        common: Common,
        /// Work directory of earlier `ablate`/`eval` runs; defaults to `--out`.
        #[arg(long)]
        from: Option<PathBuf>,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    match &common.config {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::desk()),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

fn load_split(data: &Path, split: Split) -> Result<LoadedSplit> {
    let ds = SyntheticDataset::open(data)?;
    LoadedSplit::load(&ds, split)
}

fn parse_arch(s: &str) -> Result<IntegratorArch> {
    [IntegratorArch::HalfHourglass, IntegratorArch::SimpleEncoder]
        .into_iter()
        .find(|a| a.label() == s)
        .ok_or_else(|| HarnessError::Config(format!("unknown arch {s:?}")))
}

fn parse_variant(s: &str) -> Result<FusionInputVariant> {
    FusionInputVariant::ALL
        .into_iter()
        .find(|v| v.label() == s)
        .ok_or_else(|| HarnessError::Config(format!("unknown variant {s:?}")))
}

fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    ck.save(path)?;
    println!("{}", path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { common, overwrite } => {
            let mut cfg = load_config(&common)?;
            if let Some(s) = common.seed {
                cfg.data.seed = s;
            }
            let index = synthesize(&cfg.data, &common.out, overwrite)?;
            println!("{} sequences, {} records", index.sequences.len(), index.num_records());
        }
        Command::Train2d { common, data } => {
            let cfg = load_config(&common)?;
            let mut stage1 = cfg.stage1.clone();
            if let Some(s) = common.seed {
                stage1.seed = s;
            }
            let train = load_split(&data, Split::Train)?;
            let mut p = ViewPerceptron::build(cfg.perceptron.clone(), stage1.seed)?;
            let report = train_stage1(&mut p, &train, &stage1)?;
            create_dir(&common.out)?;
            write_json(&common.out.join("train_2d.json"), &report)?;
            save_checkpoint(&p.to_checkpoint()?, &common.out.join("perceptron.ckpt"))?;
        }
        Command::Train3d {
            common,
            data,
            perceptron,
            arch,
            variant,
            views,
        } => {
            let cfg = load_config(&common)?;
            let mut stage2 = cfg.stage2.clone();
            if let Some(s) = common.seed {
                stage2.seed = s;
            }
            let train = load_split(&data, Split::Train)?;
            let views = views.unwrap_or_else(|| (0..train.num_views).collect());
            let arch = arch.as_deref().map(parse_arch).transpose()?.unwrap_or(cfg.integrator.arch);
            let variant = variant.as_deref().map(parse_variant).transpose()?.unwrap_or(cfg.integrator.variant);
            let mut p = ViewPerceptron::from_checkpoint(&Checkpoint::load(&perceptron)?)?;
            let mut ic = cfg.integrator_for(arch, variant, views.len());
            train.check_views(&views)?;
            let cache = FeatureCache::build(&p, &train)?;
            ic.input_scales = cache.scales_for(&views, cfg.input_scaling);
            let mut g = MultiViewIntegrator::build(ic, stage2.seed)?;
            create_dir(&common.out)?;
            let report = if stage2.joint_finetune {
                drop(cache);
                let r = train_stage2_joint(&mut g, &mut p, &train, &views, &stage2)?;
                save_checkpoint(&p.to_checkpoint()?, &common.out.join("perceptron_finetuned.ckpt"))?;
                r
            } else {
                train_stage2_cached(&mut g, &cache, &train, &views, &stage2)?
            };
            write_json(&common.out.join("train_3d.json"), &report)?;
            save_checkpoint(&g.to_checkpoint(&views)?, &common.out.join("integrator.ckpt"))?;
        }
        Command::Eval {
            common,
            data,
            perceptron,
            integrator,
            name,
        } => {
            let test = load_split(&data, Split::Test)?;
            let p = ViewPerceptron::from_checkpoint(&Checkpoint::load(&perceptron)?)?;
            let (g, views) = MultiViewIntegrator::from_checkpoint(&Checkpoint::load(&integrator)?)?;
            let mut report = evaluate_mpjpe(&name, &p, &g, &test, &views)?;
            report.metadata = serde_json::json!({
                "arch": g.config().arch,
                "variant": g.config().variant,
                "views": views,
            });
            let path = common.out.join("eval").join(format!("{name}.json"));
            write_json(&path, &report)?;
            println!(
                "{name}: MPJPE {:.2} mm (std over frames {:.2}, over subjects {:.2}) on {} frames",
                report.overall_mean_mm, report.overall_std_frames_mm, report.overall_std_subjects_mm, report.n_frames
            );
        }
        Command::Ablate { common, suite } => {
            let mut cfg = load_config(&common)?;
            if let Some(s) = common.seed {
                cfg.ablation.seeds = vec![s];
            }
            let table = run_ablation(&cfg, suite, &common.out)?;
            println!("suite {suite}, reference {}", table.reference);
            for s in &table.summary {
                let red = s.error_reduction.map_or_else(String::new, |r| format!(", reduction {:+.1}%", 100.0 * r));
                println!("  {:<16} median {:.2} mm over {} seeds{red}", s.arm, s.median_mpjpe_mm, s.seeds);
            }
        }
        Command::Report { common, from } => {
            let work = from.unwrap_or_else(|| common.out.clone());
            let mut tables = vec![];
            for suite in Suite::ALL {
                let path = AblationTable::table_path(&work, suite);
                if path.exists() {
                    tables.push(AblationTable::load(&path)?);
                }
            }
            let mut extra: Vec<MetricsReport> = vec![];
            let eval_dir = work.join("eval");
            if eval_dir.is_dir() {
                let mut files: Vec<PathBuf> = std::fs::read_dir(&eval_dir)
                    .map_err(|e| HarnessError::io(&eval_dir, e))?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.extension().is_some_and(|x| x == "json"))
                    .collect();
                files.sort();
                for f in files {
                    let text = std::fs::read(&f).map_err(|e| HarnessError::io(&f, e))?;
                    extra.push(serde_json::from_slice(&text).map_err(|e| HarnessError::format(&f, e))?);
                }
            }
            info!("{} ablation tables, {} eval reports", tables.len(), extra.len());
            for path in emit_full_report(&tables, &extra, &common.out)? {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let doc = serde_json::json!({ "error": { "category": e.category(), "message": e.to_string() } });
            eprintln!("{doc}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
