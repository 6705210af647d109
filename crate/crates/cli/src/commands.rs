use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use chromabci::classifier::{parse_classes, select_best_pair, train_two_phase, EpochRecord, Model};
use chromabci::drive::{simulate, trace_csv};
use chromabci::evaluation::{
    evaluate, format_percent, groups_from_split, rows_csv, rows_table, weighted_accuracy,
};
use chromabci::recording::{record, RecordConfig};
use chromabci::session::{
    append_trials, filter_quality, load_dataset, split_seen_unseen, write_dataset, Color, Trial,
    WindowShape,
};
use chromabci::synth::generate_dataset;
use chromabci::thinkgear::ReplayMeta;
use chromabci::{Error, Result};

use crate::config::RunConfig;

/// Color-thought EEG pipeline: synthesize or record trials, train the
/// classifier, evaluate it, classify single trials and drive a simulated
/// wheelchair.
#[derive(Debug, Parser)]
#[command(name = "chromabci", version)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// `key = value` config file; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Sets the model, training, synthesis and split seeds.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Input window shape; rows × cols must be 2048.
    #[arg(long, global = true, value_name = "ROWSxCOLS")]
    pub shape: Option<String>,
    /// Class count (2-4) or comma-separated colors.
    #[arg(long, global = true)]
    pub classes: Option<String>,
    /// Minimum attention level (0-100) that lets the chair move.
    #[arg(long, global = true)]
    pub threshold: Option<u8>,
    /// Any config key, repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Capture trials from a serial device or replay file.
    Record {
        #[arg(long)]
        input: PathBuf,
        /// Dataset to append to (created if missing).
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        color: Color,
        /// Seconds to capture; each full 2048 samples is one trial.
        #[arg(long, default_value_t = 4.0)]
        duration: f64,
        #[arg(long, default_value = "unknown")]
        subject: String,
        /// Capture timestamp in milliseconds since the epoch.
        #[arg(long, default_value_t = 0)]
        captured_at: i64,
        /// Capture metadata; defaults to INPUT.meta when that file exists.
        #[arg(long)]
        meta: Option<PathBuf>,
    },
    /// Two-phase training on the train split.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint to write.
        #[arg(long)]
        model: PathBuf,
        /// Validation-scan curves CSV.
        #[arg(long)]
        curves: PathBuf,
        /// Refit curves CSV.
        #[arg(long)]
        refit_curves: Option<PathBuf>,
    },
    /// Seen/unseen evaluation table.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Table CSV.
        #[arg(long)]
        out: PathBuf,
        /// Aligned text table.
        #[arg(long)]
        table: Option<PathBuf>,
        /// Also report the trial-weighted average.
        #[arg(long)]
        weighted: bool,
    },
    /// Classify one stored trial.
    Classify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Zero-based trial index in the dataset.
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Drive the simulated chair with every trial in a dataset.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Pose trace CSV.
        #[arg(long)]
        out: PathBuf,
        /// Controller frames, 6 bytes each.
        #[arg(long)]
        frames: Option<PathBuf>,
    },
    /// Train and score every two-color pair.
    Pairscan {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn build_config(g: &GlobalArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &g.config {
        cfg.apply_file(path)?;
    }
    for pair in &g.set {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Param(format!("--set expects KEY=VALUE, got {pair:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = g.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    if let Some(shape) = &g.shape {
        cfg.set("shape", shape)?;
    }
    if let Some(classes) = &g.classes {
        cfg.set("classes", classes)?;
    }
    if let Some(t) = g.threshold {
        cfg.threshold = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents)?;
    Ok(())
}

/// Dataset after the quality filter, restricted to `classes`.
fn load_for(path: &Path, cfg: &RunConfig, classes: &[Color]) -> Result<Vec<Trial>> {
    let (kept, _) = filter_quality(load_dataset(path)?, cfg.quality);
    Ok(kept.into_iter().filter(|t| classes.contains(&t.color)).collect())
}

/// Loads a checkpoint and checks it against explicitly requested shape and classes.
fn load_model(path: &Path, g: &GlobalArgs) -> Result<Model> {
    let model = Model::load(path)?;
    let mc = model.config();
    if let Some(shape) = &g.shape {
        let want: WindowShape = shape.parse()?;
        if (want.rows(), want.cols()) != (mc.time_steps, mc.features) {
            return Err(Error::Shape(format!(
                "requested shape {want} but checkpoint expects {}x{}",
                mc.time_steps, mc.features
            )));
        }
    }
    if let Some(classes) = &g.classes {
        if parse_classes(classes)? != mc.classes {
            return Err(Error::Label("requested classes differ from the checkpoint's".into()));
        }
    }
    Ok(model)
}

fn fmt_list(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(",")
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = build_config(&cli.global)?;
    let g = &cli.global;
    match cli.command {
        Command::Synth { out } => {
            let trials = generate_dataset(&cfg.synth, &cfg.model.classes, cfg.synth_per_class)?;
            write_dataset(&out, &trials)?;
            println!("wrote {} trials to {}", trials.len(), out.display());
        }
        Command::Record {
            input,
            out,
            color,
            duration,
            subject,
            captured_at,
            meta,
        } => {
            let meta_path = meta.unwrap_or_else(|| ReplayMeta::path_for(&input));
            let meta = match fs::read_to_string(&meta_path) {
                Ok(text) => ReplayMeta::parse(&text)?,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => ReplayMeta::default(),
                Err(e) => return Err(e.into()),
            };
            let file = File::open(&input).map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => Error::NotFound(input.clone()),
                _ => Error::Io(e),
            })?;
            let rc = RecordConfig {
                color,
                duration_s: duration,
                subject_id: subject,
                captured_at_ms: captured_at,
                ..RecordConfig::default()
            };
            let outcome = record(BufReader::new(file), &meta, &rc)?;
            append_trials(&out, &outcome.trials)?;
            let s = outcome.stats;
            println!(
                "recorded {} trial(s) packets_ok={} packets_dropped={} bytes_skipped={}",
                outcome.trials.len(),
                s.packets_ok,
                s.packets_dropped,
                s.bytes_skipped
            );
        }
        Command::Train {
            data,
            model,
            curves,
            refit_curves,
        } => {
            let trials = load_for(&data, &cfg, &cfg.model.classes)?;
            let split = split_seen_unseen(&trials, cfg.split, cfg.split_seed)?;
            let mut progress = |phase: usize, r: &EpochRecord| {
                eprintln!(
                    "phase {phase} epoch {} train_loss {:.4} train_acc {:.3}{}",
                    r.epoch,
                    r.train_loss,
                    r.train_acc,
                    match (r.val_loss, r.val_acc) {
                        (Some(l), Some(a)) => format!(" val_loss {l:.4} val_acc {a:.3}"),
                        _ => String::new(),
                    }
                );
            };
            let outcome = train_two_phase(&split.train, &cfg.model, &cfg.train, Some(&mut progress))?;
            outcome.model.save(&model)?;
            write(&curves, outcome.report.curves_csv())?;
            if let Some(path) = refit_curves {
                write(&path, outcome.report.refit_csv())?;
            }
            println!(
                "best_epoch={} train_loss={:.6} train_acc={:.6}",
                outcome.report.best_epoch, outcome.report.final_train_loss, outcome.report.final_train_acc
            );
        }
        Command::Evaluate {
            data,
            model,
            out,
            table,
            weighted,
        } => {
            let model = load_model(&model, g)?;
            let classes = model.config().classes.clone();
            let trials = load_for(&data, &cfg, &classes)?;
            let split = split_seen_unseen(&trials, cfg.split, cfg.split_seed)?;
            let rows = evaluate(&model, &groups_from_split(&split, &classes))?;
            let mut csv = rows_csv(&rows)?;
            let mut text = rows_table(&rows)?;
            if weighted {
                let w = format_percent(weighted_accuracy(&rows)?);
                csv.push_str(&format!("weighted_average,,,,,,,{w}\n"));
                text.push_str(&format!("weighted_average  {w}\n"));
            }
            write(&out, &csv)?;
            if let Some(path) = table {
                write(&path, &text)?;
            }
            print!("{text}");
        }
        Command::Classify {
            model,
            data,
            index,
            out,
        } => {
            let model = load_model(&model, g)?;
            let trials = load_dataset(&data)?;
            let trial = trials.get(index).ok_or_else(|| {
                Error::Count(format!("trial index {index} out of range (dataset has {})", trials.len()))
            })?;
            let p = model.predict_trial(trial)?;
            let text = format!(
                "class={} color={} command={}\nprobs={}\nattention={}\n",
                p.class_index,
                p.color,
                p.color.label(),
                fmt_list(&p.probs),
                fmt_list(&p.attention_weights)
            );
            if let Some(path) = out {
                write(&path, &text)?;
            }
            print!("{text}");
        }
        Command::Simulate {
            model,
            data,
            out,
            frames,
        } => {
            let model = load_model(&model, g)?;
            let trials = load_dataset(&data)?;
            let refs: Vec<&Trial> = trials.iter().collect();
            let preds = model.predict_trials(&refs, 64)?;
            let events: Vec<(u8, u8)> = preds
                .iter()
                .zip(&trials)
                .map(|(p, t)| (p.color.label(), t.attention_level))
                .collect();
            let (trace, sent) = simulate(&events, &cfg.sim())?;
            write(&out, trace_csv(&trace))?;
            if let Some(path) = frames {
                write(&path, sent.concat())?;
            }
            if let Some(last) = trace.last() {
                println!(
                    "steps={} x={:.6} y={:.6} heading={:.6}",
                    trace.len(),
                    last.pose.x,
                    last.pose.y,
                    last.pose.heading
                );
            }
        }
        Command::Pairscan { data, out } => {
            let (trials, _) = filter_quality(load_dataset(&data)?, cfg.quality);
            let scan = select_best_pair(&trials, &cfg.model, &cfg.train, cfg.split, cfg.split_seed)?;
            write(&out, scan.to_csv())?;
            println!("best_pair={},{}", scan.best.0, scan.best.1);
        }
    }
    Ok(())
}
