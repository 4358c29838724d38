//! The `renewgan` pipeline: `synth` → `train` → `generate` → `evaluate`.
//!
//! Every command reads an optional TOML config, lets flags override it,
//! validates all inputs, and only then creates its output directory.

pub mod config;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use renewgan_core::data::{load_csv, read_archive, read_samples_csv, split, synthesize, write_archive, write_samples_csv};
use renewgan_core::eval::{evaluate, moments, uniform_noise};
use renewgan_core::gan::{train_with, CHECKPOINT_FORMAT};
use renewgan_core::copula::COPULA_FORMAT;
use renewgan_core::{CopulaModel, Error, Result, ScenarioDataset, TrainedModel};

use config::{base_dir, read_toml, resolve, DataSource, EvaluateRun, GenerateRun, ModelKind, SynthRun, TrainRun};

#[derive(Debug, Parser)]
#[command(name = "renewgan", version, about = "Renewable power scenario generation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a calibrated synthetic dataset archive.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Split an archive, train a model, and write it with both splits.
    Train {
        #[command(flatten)]
        common: Common,
        /// Archive directory to train on; overrides `data`.
        #[arg(long)]
        data: Option<PathBuf>,
        /// dcgan, dcwgan or copula; overrides `model`.
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Sample scenarios from a checkpoint or copula model.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Compare generated scenarios with a held-out archive.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        real: Option<PathBuf>,
        /// `NAME=PATH` of a generated archive or samples CSV; repeatable.
        #[arg(long = "generated", value_name = "NAME=PATH")]
        generated: Vec<String>,
    },
}

/// Process exit status for an error: 2 config/validation, 3 IO,
/// 4 numerical abort, 5 corrupt artifact.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Usage(_) | Error::Data(_) | Error::Parse { .. } => 2,
        Error::Io { .. } => 3,
        Error::Numerical { .. } => 4,
        Error::Corrupt { .. } => 5,
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { common } => cmd_synth(&common),
        Command::Train {
            common,
            data,
            model,
            epochs,
        } => cmd_train(&common, data, model, epochs),
        Command::Generate { common, model, n } => cmd_generate(&common, model, n),
        Command::Evaluate {
            common,
            real,
            generated,
        } => cmd_evaluate(&common, real, &generated),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn out_dir(common: &Common, from_config: Option<PathBuf>, base: &Path) -> Result<PathBuf> {
    common
        .out
        .clone()
        .or_else(|| from_config.map(|p| resolve(base, &p)))
        .ok_or_else(|| Error::Config("out: no output directory given (--out or `out`)".into()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn write_text(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(io_err(path))
}

/// Per-terrain means and the sample count, one line each.
fn summary(ds: &ScenarioDataset) -> Result<String> {
    let mut s = format!("samples: {} ({} farms × {} steps)\n", ds.len(), ds.parks(), ds.horizon());
    for t in ds.terrains() {
        let f = ds.farm_indices(t);
        let m = moments(&ds.pooled_values(&f))?;
        s.push_str(&format!("{t}: {} farms, mean {:.4}\n", f.len(), m.mean));
    }
    Ok(s)
}

pub fn cmd_synth(common: &Common) -> Result<()> {
    let cfg_path = common
        .config
        .as_deref()
        .ok_or_else(|| Error::Config("synth needs --config with a [synth] table".into()))?;
    let run: SynthRun = read_toml(cfg_path)?;
    let base = base_dir(Some(cfg_path));
    let out = out_dir(common, run.out.clone(), &base)?;
    let mut synth = run.synth;
    synth.seed = common.seed.or(run.seed).unwrap_or(synth.seed);
    synth.validate()?;
    let ds = synthesize(&synth)?;
    write_archive(&out, &ds)?;
    print!("{}", summary(&ds)?);
    Ok(())
}

fn load_source(src: &DataSource, base: &Path) -> Result<ScenarioDataset> {
    match src {
        DataSource::Archive { archive } => read_archive(resolve(base, archive)),
        DataSource::Csv {
            csv,
            meta,
            resolution_hours,
        } => {
            let ing = load_csv(resolve(base, csv), resolve(base, meta), *resolution_hours)?;
            if ing.dropped_days > 0 {
                log::warn!("{} incomplete day(s) dropped", ing.dropped_days);
            }
            Ok(ing.dataset)
        }
    }
}

pub fn cmd_train(common: &Common, data: Option<PathBuf>, model: Option<String>, epochs: Option<usize>) -> Result<()> {
    let (mut run, base) = match &common.config {
        Some(p) => (read_toml::<TrainRun>(p)?, base_dir(Some(p))),
        None => (toml::from_str::<TrainRun>("").expect("empty config parses"), PathBuf::new()),
    };
    if let Some(m) = model {
        run.model = match m.to_ascii_lowercase().as_str() {
            "dcgan" | "bce" => ModelKind::Dcgan,
            "dcwgan" | "wasserstein" => ModelKind::Dcwgan,
            "copula" => ModelKind::Copula,
            other => return Err(Error::Config(format!("model: unknown model {other:?}"))),
        };
    }
    if epochs.is_some() {
        run.gan.epochs = epochs;
    }
    let source = match data {
        Some(dir) => DataSource::Archive { archive: dir },
        None => run
            .data
            .clone()
            .ok_or_else(|| Error::Config("data: no training data given (--data or `data`)".into()))?,
    };
    let seed = common.seed.or(run.seed).unwrap_or(0);
    let out = out_dir(common, run.out.clone(), &base)?;
    let gan_cfg = match run.model {
        ModelKind::Copula => None,
        _ => Some(run.gan_config(seed)?),
    };

    let dataset = load_source(&source, &base)?;
    let (train_set, test_set) = split(&dataset, run.train_fraction, seed)?;
    if let Some(cfg) = &gan_cfg {
        cfg.check_shape(dataset.parks(), dataset.horizon())?;
        if cfg.batch_size > train_set.len() {
            return Err(Error::Config(format!(
                "gan.batch_size: {} exceeds the {} training days",
                cfg.batch_size,
                train_set.len()
            )));
        }
    }
    log::info!("{} training / {} test days", train_set.len(), test_set.len());

    match gan_cfg {
        Some(cfg) => {
            let model = train_with(&train_set, &cfg, |_, _| {})?;
            if cfg.loss_kind == renewgan_core::LossKind::Wasserstein {
                log::info!(
                    "critic max |parameter| = {:e} (clip {})",
                    model.discriminator.max_abs_param(),
                    cfg.clip_c
                );
            }
            create_dir(&out)?;
            model.save(out.join("checkpoint.json"))?;
            let mut csv = String::from("epoch,d_loss,g_loss\n");
            for (i, l) in model.history.iter().enumerate() {
                let g = l.g_loss.map(|g| g.to_string()).unwrap_or_default();
                csv.push_str(&format!("{},{},{g}\n", i + 1, l.d_loss));
            }
            write_text(&out.join("loss_history.csv"), &csv)?;
        }
        None => {
            let model = CopulaModel::fit(&train_set)?;
            create_dir(&out)?;
            model.save(out.join("copula.json"))?;
        }
    }
    write_archive(out.join("train"), &train_set)?;
    write_archive(out.join("test"), &test_set)?;
    print!("{}", summary(&train_set)?);
    Ok(())
}

enum LoadedModel {
    Gan(Box<TrainedModel>),
    Copula(CopulaModel),
}

fn load_model(path: &Path) -> Result<LoadedModel> {
    let body = fs::read_to_string(path).map_err(io_err(path))?;
    let v: serde_json::Value = serde_json::from_str(&body).map_err(|e| Error::Corrupt {
        path: path.to_path_buf(),
        message: format!("not valid JSON: {e}"),
    })?;
    match v.get("format").and_then(|f| f.as_str()) {
        Some(CHECKPOINT_FORMAT) => Ok(LoadedModel::Gan(Box::new(TrainedModel::load(path)?))),
        Some(COPULA_FORMAT) => Ok(LoadedModel::Copula(CopulaModel::load(path)?)),
        other => Err(Error::Corrupt {
            path: path.to_path_buf(),
            message: format!("unrecognized format tag {other:?}"),
        }),
    }
}

pub fn cmd_generate(common: &Common, model: Option<PathBuf>, n: Option<usize>) -> Result<()> {
    let (run, base) = match &common.config {
        Some(p) => (read_toml::<GenerateRun>(p)?, base_dir(Some(p))),
        None => (GenerateRun::default(), PathBuf::new()),
    };
    let model_path = model
        .or_else(|| run.model.as_ref().map(|m| resolve(&base, m)))
        .ok_or_else(|| Error::Config("model: no model file given (--model or `model`)".into()))?;
    let n = n
        .or(run.n)
        .ok_or_else(|| Error::Config("n: sample count not given (--n or `n`)".into()))?;
    if n == 0 {
        return Err(Error::Config("n: sample count must be positive".into()));
    }
    let seed = common.seed.or(run.seed).unwrap_or(0);
    let out = out_dir(common, run.out.clone(), &base)?;

    let (samples, default_source) = match load_model(&model_path)? {
        LoadedModel::Gan(m) => {
            let name = match m.config.loss_kind {
                renewgan_core::LossKind::Bce => "dcgan",
                renewgan_core::LossKind::Wasserstein => "dcwgan",
            };
            (m.sample(n, seed)?, name)
        }
        LoadedModel::Copula(m) => (m.sample(n, seed)?, "copula"),
    };
    let source = run.source.unwrap_or_else(|| default_source.to_string());
    create_dir(&out)?;
    write_archive(&out, &samples)?;
    // Overwrite the plain samples file with the source-tagged one.
    write_samples_csv(out.join("samples.csv"), &samples, Some(&source))?;
    println!("{n} samples from {source} written to {}", out.display());
    Ok(())
}

fn read_generated(path: &Path, real: &ScenarioDataset) -> Result<ScenarioDataset> {
    let file = if path.is_dir() { path.join("samples.csv") } else { path.to_path_buf() };
    let named = |e: Error| match e {
        Error::Data(m) | Error::Config(m) => Error::Data(format!("{}: {m}", file.display())),
        other => other,
    };
    let (ds, _) = read_samples_csv(&file, real.farms()).map_err(named)?;
    real.check_compatible(&ds).map_err(named)?;
    if ds.is_empty() {
        return Err(Error::Data(format!("{}: no samples", file.display())));
    }
    Ok(ds)
}

pub fn cmd_evaluate(common: &Common, real: Option<PathBuf>, generated: &[String]) -> Result<()> {
    let (mut run, base) = match &common.config {
        Some(p) => (read_toml::<EvaluateRun>(p)?, base_dir(Some(p))),
        None => (EvaluateRun::default(), PathBuf::new()),
    };
    let real_path = real
        .or_else(|| run.real.as_ref().map(|r| resolve(&base, r)))
        .ok_or_else(|| Error::Config("real: no held-out archive given (--real or `real`)".into()))?;
    let mut inputs: Vec<(String, PathBuf)> = run
        .generated
        .drain(..)
        .map(|g| (g.name, resolve(&base, &g.path)))
        .collect();
    for spec in generated {
        let (name, path) = spec
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--generated expects NAME=PATH, got {spec:?}")))?;
        inputs.push((name.to_string(), PathBuf::from(path)));
    }
    if inputs.is_empty() && !run.uniform_baseline {
        return Err(Error::Config("generated: nothing to evaluate".into()));
    }
    let seed = common.seed.or(run.seed).unwrap_or(0);
    let out = out_dir(common, run.out.clone(), &base)?;

    let real_ds = read_archive(&real_path)?;
    let mut models = Vec::with_capacity(inputs.len() + 1);
    for (name, path) in &inputs {
        if models.iter().any(|(n, _): &(String, _)| n == name) || name == "real" {
            return Err(Error::Config(format!("generated: duplicate or reserved name {name:?}")));
        }
        models.push((name.clone(), read_generated(path, &real_ds)?));
    }
    if run.uniform_baseline {
        let n = models.iter().map(|(_, d): &(String, ScenarioDataset)| d.len()).max().unwrap_or(real_ds.len());
        models.push(("uniform".to_string(), uniform_noise(&real_ds, n, seed)?));
    }
    let report = evaluate(&real_ds, &models)?;
    report.write(&out)?;
    println!("symmetric KLD over all farms:");
    for (m, k) in report.models.iter().zip(&report.kld_global.kld) {
        println!("  {m}: {k:.4}");
    }
    Ok(())
}
