// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

use anyhow::Result;
use lexalign::synth::{config_hash, Dataset, SynthConfig, MANIFEST_FILE, SAMPLES_FILE, SCENES_FILE};

use super::read_config;
use crate::manifest::{RunManifest, RUN_MANIFEST};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Flat key = value config file; missing keys keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

pub fn run(args: Args) -> Result<()> {
    let mut manifest = RunManifest::new("gen-data");
    let text = read_config(args.config.as_deref(), &mut manifest)?;
    let mut config = SynthConfig::from_kv(&text)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
        config.validate()?;
    }
    manifest.config = Some(config.to_kv());
    manifest.config_hash = Some(config_hash(&config));
    manifest.seed = Some(config.seed);
    manifest.outputs = [MANIFEST_FILE, SAMPLES_FILE, SCENES_FILE]
        .iter()
        .map(|s| s.to_string())
        .collect();
    manifest.write(&args.out)?;

    let dataset = Dataset::generate(&config)?;
    dataset.save(&args.out)?;
    println!(
        "{} train / {} val / {} test pairs and {} scenes in {} (dataset {}, run record {RUN_MANIFEST})",
        dataset.train.len(),
        dataset.val.len(),
        dataset.test.len(),
        dataset.scenes.len(),
        args.out.display(),
        &dataset.hash()[..16],
    );
    Ok(())
}
