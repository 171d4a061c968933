// SPDX-License-Identifier: Apache-2.0

pub mod compare;
pub mod dump;
pub mod eval;
pub mod gen_data;
pub mod train;

use std::fmt;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use lexalign::synth::{Dataset, MANIFEST_FILE};
use lexalign::trainer::Checkpoint;

use crate::manifest::RunManifest;

/// A usage problem detected by the CLI itself (exit code 1).
#[derive(Debug)]
pub struct Invalid(pub String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

pub fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Invalid(msg.into()).into()
}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<lexalign::Error>() {
            return if e.is_validation() { 1 } else { 2 };
        }
        if cause.is::<Invalid>() {
            return 1;
        }
    }
    2
}

pub fn load_dataset(dir: &Path, manifest: &mut RunManifest) -> Result<Dataset> {
    manifest.input(&dir.join(MANIFEST_FILE))?;
    Dataset::load(dir).with_context(|| format!("loading dataset from {}", dir.display()))
}

pub fn load_checkpoint(path: &Path, manifest: &mut RunManifest) -> Result<Checkpoint> {
    manifest.input(path)?;
    Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

pub fn read_config(path: Option<&Path>, manifest: &mut RunManifest) -> Result<String> {
    match path {
        Some(p) => {
            manifest.config_path = Some(p.display().to_string());
            fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))
        }
        None => Ok(String::new()),
    }
}

pub fn write_output(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::write(dir.join(name), contents).with_context(|| format!("writing {name}"))
}
