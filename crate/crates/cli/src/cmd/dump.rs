// SPDX-License-Identifier: Apache-2.0

use std::collections::HashMap;
use std::path::PathBuf;

use anyhow::Result;
use lexalign::lexcore::Vocabulary;
use lexalign::linalg::Mat;
use lexalign::synth::PairedSample;

use super::{invalid, load_checkpoint, load_dataset, write_output};
use crate::manifest::RunManifest;

pub const LEXICAL_FILE: &str = "lexical.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Modality {
    Image,
    Text,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Sample ids, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    ids: Vec<u64>,
    /// Tokens per sample (capped at the vocabulary size).
    #[arg(long, default_value_t = 20)]
    top: usize,
    #[arg(long, value_enum, default_value_t = Modality::Image)]
    modality: Modality,
    /// Pool over these patch indices only (image modality).
    #[arg(long, value_delimiter = ',')]
    patches: Option<Vec<usize>>,
    #[arg(long)]
    out: PathBuf,
}

pub fn run(args: Args) -> Result<()> {
    if args.top == 0 {
        return Err(invalid("--top must be at least 1"));
    }
    if args.patches.is_some() && args.modality == Modality::Text {
        return Err(invalid("--patches applies to the image modality only"));
    }
    let mut manifest = RunManifest::new("dump-lexical");
    let dataset = load_dataset(&args.data, &mut manifest)?;
    let checkpoint = load_checkpoint(&args.checkpoint, &mut manifest)?;
    if checkpoint.params.vocab_size() != dataset.config.vocab_size {
        return Err(invalid("checkpoint and dataset vocabulary sizes differ"));
    }
    let by_id: HashMap<u64, &PairedSample> = dataset.all_samples().map(|s| (s.id, s)).collect();
    let samples = args
        .ids
        .iter()
        .map(|id| by_id.get(id).copied().ok_or_else(|| invalid(format!("no sample with id {id}"))))
        .collect::<Result<Vec<_>>>()?;
    manifest.seed = Some(checkpoint.config.seed);
    manifest.outputs = vec![LEXICAL_FILE.into()];
    manifest.write(&args.out)?;

    let vocab = Vocabulary::synthetic(dataset.config.vocab_size)?;
    let params = &checkpoint.params;
    let modality = match args.modality {
        Modality::Image => "image",
        Modality::Text => "text",
    };
    let mut csv = String::from("sample_id,modality,rank,token_id,token,value\n");
    for sample in samples {
        let lex = match (args.modality, &args.patches) {
            (Modality::Text, _) => params
                .encode_text(&Mat::from_rows(&[sample.txt_features.as_mat().row(0).to_vec()])?)?
                .remove(0),
            (Modality::Image, None) => params.encode_image(&sample.img_features)?,
            (Modality::Image, Some(p)) => {
                if let Some(&bad) = p.iter().find(|&&i| i >= sample.img_features.len()) {
                    return Err(invalid(format!(
                        "patch {bad} out of range for {} patches",
                        sample.img_features.len()
                    )));
                }
                params.encode_patches(&sample.img_features, p)?
            }
        };
        let ranked = lex.ranked();
        let truth: Vec<&str> = sample
            .true_lexical
            .entries()
            .iter()
            .filter_map(|&(t, _)| vocab.token(t))
            .collect();
        let head: Vec<String> = ranked
            .iter()
            .take(5)
            .map(|&(t, v)| format!("{}:{v:.3}", vocab.token(t).unwrap_or("?")))
            .collect();
        println!("sample {} [{}] top: {}", sample.id, truth.join(" "), head.join(" "));
        for (rank, (tok, value)) in ranked.into_iter().take(args.top).enumerate() {
            csv.push_str(&format!(
                "{},{modality},{},{tok},{},{value}\n",
                sample.id,
                rank + 1,
                vocab.token(tok).unwrap_or("?")
            ));
        }
    }
    write_output(&args.out, LEXICAL_FILE, &csv)
}
