use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use occtrack::geometry::BoundingBox;
use occtrack::harness::checkpoint::{self, Checkpoint};
use occtrack::harness::config::{self, KeyValues, Switch};
use occtrack::harness::dataset::{load_sequence, save_sequence};
use occtrack::harness::experiment::{
    fit_calibration, lazy_threshold, load_suite_dir, track_sequence, train_assessment_net, train_trajectory_net,
    train_variant, training_data, run_ablation, TrainedVariant, Variant,
};
use occtrack::harness::metrics::evaluate;
use occtrack::harness::synth::{generate_sequence, generate_suite};
use occtrack::pipeline::{Branch, Models};
use occtrack::assess::{AssessmentNet, CalibrationParams};

#[derive(Parser)]
#[command(name = "occtrack", version, about = "Occlusion-robust single-object tracker")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic sequence (or a suite when the config has `count`).
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the trajectory network; writes a checkpoint with an untrained assessment net.
    TrainTraj {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "complete")]
        variant: Variant,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the assessment network of a checkpoint and re-fit its temperature.
    TrainAssess {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-fit the temperature on the validation split and rewrite the checkpoint.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Every training stage of one variant.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "complete")]
        variant: Variant,
        #[arg(long)]
        out: PathBuf,
    },
    /// Track a sequence from its first ground-truth box.
    Track {
        #[arg(long)]
        seq: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        lazy: Option<Switch>,
        #[arg(long)]
        dump_motion: Option<PathBuf>,
    },
    /// Score tracking results against a sequence's ground truth.
    Eval {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        seq: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Evaluate trained variants on a seeded benchmark suite.
    Ablate {
        #[arg(long)]
        suite: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Serialize, serde::Deserialize)]
struct ResultRecord {
    frame_index: usize,
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    branch: Branch,
    s_tracker: Option<f64>,
    s_traj: Option<f64>,
    futures: Vec<[f64; 2]>,
}

#[derive(Serialize)]
struct MotionRecord {
    frame: usize,
    r: f64,
    c: f64,
    vx: f64,
    vy: f64,
    mx: f64,
    my: f64,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn load_keys(path: &Path) -> Result<KeyValues> {
    KeyValues::load(path).with_context(|| format!("reading {}", path.display()))
}

fn load_train_config(path: &Path) -> Result<occtrack::harness::experiment::TrainConfig> {
    let mut kv = load_keys(path)?;
    let cfg = config::train_config(&mut kv)?;
    kv.finish()?;
    Ok(cfg)
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn save_checkpoint(c: &Checkpoint, path: &Path) -> Result<()> {
    checkpoint::save(c, path).with_context(|| format!("writing checkpoint {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { config: path, out } => {
            let mut kv = load_keys(&path)?;
            if kv.take::<String>("suite")?.is_some() {
                bail!("`suite` is not a key; give `count` to generate a suite");
            }
            let is_suite = {
                let mut probe = kv.clone();
                probe.take::<usize>("count")?.is_some()
            };
            if is_suite {
                let suite = config::suite_config(&mut kv)?;
                kv.finish()?;
                for (i, seq) in generate_suite(&suite)?.iter().enumerate() {
                    save_sequence(seq, &out.join(format!("seq_{i:03}")))?;
                }
            } else {
                let cfg = config::synth_config(&mut kv)?;
                kv.finish()?;
                save_sequence(&generate_sequence(&cfg)?, &out)?;
            }
        }
        Command::TrainTraj { config: path, variant, out } => {
            let cfg = load_train_config(&path)?;
            let net_cfg = variant.net_config(&cfg.net);
            let (train, _) = training_data(&cfg, &net_cfg)?;
            let tau = lazy_threshold(&train, &cfg)?;
            let trajectory = if variant.uses_trajectory() {
                Some(train_trajectory_net(&train, &net_cfg, variant.pipeline_config().compensate, &cfg)?.0)
            } else {
                None
            };
            let assessment = AssessmentNet::new(variant.assess_config(&cfg.assess, net_cfg.past_len), cfg.seed)?;
            let models = Models { trajectory, assessment, calibration: CalibrationParams::default(), tau };
            let trained = TrainedVariant { variant, models, pipeline: variant.pipeline_config(), tracker: cfg.tracker.clone() };
            let c = Checkpoint { trained, seed: cfg.seed, traj_epochs: cfg.traj.epochs, assess_epochs: 0 };
            save_checkpoint(&c, &out)?;
        }
        Command::TrainAssess { config: path, checkpoint: ckpt, out } => {
            let cfg = load_train_config(&path)?;
            let mut c = load_checkpoint(&ckpt)?;
            let variant = c.trained.variant;
            if let Some(net) = c.trained.models.trajectory.clone() {
                let (train, validation) = training_data(&cfg, &net.config)?;
                c.trained.models.assessment = train_assessment_net(variant, &net, c.trained.models.tau, &train, &cfg)?;
                c.trained.models.calibration = fit_calibration(&c.trained, &validation, &cfg)?;
                c.assess_epochs = cfg.assess_train.epochs;
            }
            save_checkpoint(&c, out.as_deref().unwrap_or(&ckpt))?;
        }
        Command::Calibrate { config: path, checkpoint: ckpt, out } => {
            let cfg = load_train_config(&path)?;
            let mut c = load_checkpoint(&ckpt)?;
            let validation = match &cfg.validation_dir {
                Some(d) => load_suite_dir(d)?,
                None => generate_suite(&cfg.validation)?,
            };
            c.trained.models.calibration = fit_calibration(&c.trained, &validation, &cfg)?;
            save_checkpoint(&c, out.as_deref().unwrap_or(&ckpt))?;
        }
        Command::Train { config: path, variant, out } => {
            let cfg = load_train_config(&path)?;
            let trained = train_variant(variant, &cfg)?;
            let assess_epochs = if variant.uses_trajectory() { cfg.assess_train.epochs } else { 0 };
            let traj_epochs = if variant.uses_trajectory() { cfg.traj.epochs } else { 0 };
            save_checkpoint(&Checkpoint { trained, seed: cfg.seed, traj_epochs, assess_epochs }, &out)?;
        }
        Command::Track { seq, checkpoint: ckpt, out, lazy, dump_motion } => {
            let c = load_checkpoint(&ckpt)?;
            let record = load_sequence(&seq).with_context(|| format!("loading sequence {}", seq.display()))?;
            let results = track_sequence(&c.trained, &record, lazy.map(|s| s.0))?;
            let records: Vec<ResultRecord> = results
                .iter()
                .map(|r| ResultRecord {
                    frame_index: r.frame_index,
                    x: r.bbox.cx,
                    y: r.bbox.cy,
                    w: r.bbox.w,
                    h: r.bbox.h,
                    branch: r.branch,
                    s_tracker: r.s_tracker,
                    s_traj: r.s_traj,
                    futures: r.futures.iter().map(|p| [p.x, p.y]).collect(),
                })
                .collect();
            write_json(&out, &records)?;
            for r in results.iter().filter_map(|r| r.warning.as_ref().map(|w| (r.frame_index, w))) {
                eprintln!("frame {}: {}", r.0, r.1);
            }
            if let Some(path) = dump_motion {
                let mut f = fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
                for r in &results {
                    let m = MotionRecord {
                        frame: r.frame_index,
                        r: r.motion.rotation,
                        c: r.motion.scale,
                        vx: r.motion.translation.x,
                        vy: r.motion.translation.y,
                        mx: r.accumulated_motion.x,
                        my: r.accumulated_motion.y,
                    };
                    writeln!(f, "{}", serde_json::to_string(&m)?)?;
                }
            }
        }
        Command::Eval { results, seq, report } => {
            let text = fs::read_to_string(&results).with_context(|| format!("reading {}", results.display()))?;
            let records: Vec<ResultRecord> =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", results.display()))?;
            let record = load_sequence(&seq).with_context(|| format!("loading sequence {}", seq.display()))?;
            let boxes = records
                .iter()
                .map(|r| BoundingBox::new(r.x, r.y, r.w, r.h))
                .collect::<occtrack::Result<Vec<_>>>()?;
            write_json(&report, &evaluate(&boxes, &record)?)?;
        }
        Command::Ablate { suite, out } => {
            let mut kv = load_keys(&suite)?;
            let dir: PathBuf = kv
                .take::<String>("checkpoints")?
                .map(PathBuf::from)
                .context("suite file needs a `checkpoints` directory")?;
            let variants: Vec<Variant> = match kv.take::<String>("variants")? {
                None => Variant::ALL.to_vec(),
                Some(list) => list.split(',').map(|v| v.trim().parse()).collect::<occtrack::Result<_>>()?,
            };
            let bench_cfg = config::suite_config(&mut kv)?;
            kv.finish()?;
            let mut trained = Vec::new();
            for v in &variants {
                let path = dir.join(format!("{v}.ckpt"));
                if !path.exists() {
                    return Err(occtrack::Error::MissingVariant(v.to_string()).into());
                }
                let c = load_checkpoint(&path)?;
                if c.trained.variant != *v {
                    bail!("{} holds variant {}, expected {v}", path.display(), c.trained.variant);
                }
                trained.push(c.trained);
            }
            let bench = generate_suite(&bench_cfg)?;
            let table = run_ablation(&bench, &trained, &variants)?;
            match out {
                Some(p) => write_json(&p, &table)?,
                None => println!("{}", serde_json::to_string_pretty(&table)?),
            }
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
        eprintln!("error: {}", chain.join(": "));
        std::process::exit(1);
    }
}
