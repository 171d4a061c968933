// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::PathBuf;

use anyhow::Result;
use lexalign::losses::{LossBreakdown, PenaltyKind};
use lexalign::trainer::{Profile, TrainConfig, Trainer};

use super::{invalid, load_checkpoint, load_dataset, read_config, write_output};
use crate::manifest::RunManifest;

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const METRICS_FILE: &str = "metrics.csv";

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Dataset directory written by gen-data.
    #[arg(long)]
    data: PathBuf,
    /// Output directory for checkpoint.bin and metrics.csv.
    #[arg(long)]
    out: PathBuf,
    /// Flat key = value overrides on top of the profile.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base settings: desk or paper.
    #[arg(long, default_value = "desk")]
    profile: Profile,
    /// Sparsity regularizer: overuse, flops or none.
    #[arg(long)]
    penalty: Option<PenaltyKind>,
    #[arg(long)]
    seed: Option<u64>,
    /// Continue from a checkpoint; its stored config is used unchanged.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Stop once this many optimizer steps are complete.
    #[arg(long)]
    stop_after: Option<u64>,
}

pub fn run(args: Args) -> Result<()> {
    let mut manifest = RunManifest::new("train");
    let dataset = load_dataset(&args.data, &mut manifest)?;
    let metrics_path = args.out.join(METRICS_FILE);

    let (mut trainer, prior_rows) = if let Some(path) = &args.resume {
        if args.config.is_some() || args.penalty.is_some() || args.seed.is_some() {
            return Err(invalid(
                "--config, --penalty and --seed cannot be combined with --resume; the checkpoint carries its config",
            ));
        }
        let checkpoint = load_checkpoint(path, &mut manifest)?;
        let resume_step = checkpoint.step;
        let trainer = Trainer::from_checkpoint(checkpoint, &dataset)?;
        (trainer, earlier_rows(&metrics_path, resume_step)?)
    } else {
        let text = read_config(args.config.as_deref(), &mut manifest)?;
        let mut config = TrainConfig::from_kv(&text, TrainConfig::profile(args.profile))?;
        if let Some(kind) = args.penalty {
            config.penalty_kind = kind;
        }
        if let Some(seed) = args.seed {
            config.seed = seed;
        }
        config.validate()?;
        (Trainer::new(config, &dataset)?, Vec::new())
    };
    let config = trainer.config().clone();
    manifest.config = Some(config.to_kv());
    manifest.config_hash = Some(config.hash());
    manifest.seed = Some(config.seed);
    manifest.outputs = vec![CHECKPOINT_FILE.into(), METRICS_FILE.into()];
    manifest.write(&args.out)?;

    let start = trainer.step();
    let frozen_before = trainer.params()?.z_txt.fingerprint();
    trainer.run_until(args.stop_after.unwrap_or(u64::MAX))?;
    let checkpoint = trainer.checkpoint()?;
    checkpoint.save(&args.out.join(CHECKPOINT_FILE))?;

    let mut csv = String::from(LossBreakdown::CSV_HEADER);
    csv.push('\n');
    for line in prior_rows {
        csv.push_str(&line);
        csv.push('\n');
    }
    for (step, b) in trainer.metrics() {
        csv.push_str(&b.csv_row(*step));
        csv.push('\n');
    }
    write_output(&args.out, METRICS_FILE, &csv)?;

    let params = &checkpoint.params;
    if params.z_txt.fingerprint() != frozen_before {
        return Err(anyhow::anyhow!("frozen text codebook changed during training"));
    }
    let drift = {
        let (a, b) = (params.z_img.matrix(), params.z_txt.matrix());
        a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    };
    match trainer.metrics().last() {
        Some((step, b)) => println!(
            "steps {start}..{} of {} | loss {:.6} (t2i {:.4}, i2t {:.4}) | tau {:.4} | ‖Z_img − Z_txt‖ {:.4}",
            step + 1,
            trainer.total_steps(),
            b.total(),
            b.l_t2i,
            b.l_i2t,
            b.tau,
            drift
        ),
        None => println!("no steps run (already at step {start})"),
    }
    if matches!(config.penalty_kind, PenaltyKind::None) {
        println!("penalty disabled; overuse values are logged with zero weight");
    }
    Ok(())
}

/// Metric rows of an interrupted run that precede the resume point.
fn earlier_rows(path: &std::path::Path, before: u64) -> Result<Vec<String>> {
    let Ok(text) = fs::read_to_string(path) else {
        return Ok(Vec::new());
    };
    Ok(text
        .lines()
        .skip(1)
        .filter(|l| {
            l.split(',')
                .next()
                .and_then(|s| s.parse::<u64>().ok())
                .is_some_and(|s| s < before)
        })
        .map(str::to_owned)
        .collect())
}
