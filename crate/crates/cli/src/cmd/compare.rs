// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

use anyhow::Result;
use lexalign::concentration::ColumnStats;
use lexalign::lexcore::{DenseLexical, SparseLexical, Vocabulary};
use lexalign::retrieval::{evaluate_paired, Recall};
use lexalign::synth::Dataset;
use lexalign::trainer::EncoderParams;

use super::{invalid, load_checkpoint, load_dataset, write_output};
use crate::manifest::RunManifest;

pub const COMPARE_FILE: &str = "compare.csv";
pub const HISTOGRAM_FILE: &str = "histogram.csv";
pub const OVERUSED_FILE: &str = "overused.csv";
pub const COMPARE_COLUMNS: &str = "metric,a,b";
pub const HISTOGRAM_COLUMNS: &str = "token_id,token,freq_img_a,freq_img_b,freq_txt_a,freq_txt_b";
pub const OVERUSED_COLUMNS: &str = "checkpoint,modality,rank,token_id,token,norm_col_mean";

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overused tokens listed per checkpoint and modality.
    #[arg(long, default_value_t = 10)]
    top: usize,
}

struct Summary {
    img: ColumnStats,
    txt: ColumnStats,
    t2i: Recall,
    i2t: Recall,
}

fn summarize(params: &EncoderParams, dataset: &Dataset) -> Result<Summary> {
    let (txt, img) = params.encode_pairs(&dataset.test)?;
    let sparse = |v: &[DenseLexical]| -> Vec<SparseLexical> {
        v.iter().map(|s| SparseLexical::from_dense(s.values())).collect()
    };
    let (st, si) = (sparse(&txt), sparse(&img));
    Ok(Summary {
        img: ColumnStats::new(&img)?,
        txt: ColumnStats::new(&txt)?,
        t2i: evaluate_paired(&st, &si)?,
        i2t: evaluate_paired(&si, &st)?,
    })
}

pub fn run(args: Args) -> Result<()> {
    let mut manifest = RunManifest::new("compare-penalty");
    let dataset = load_dataset(&args.data, &mut manifest)?;
    let a = load_checkpoint(&args.a, &mut manifest)?;
    let b = load_checkpoint(&args.b, &mut manifest)?;
    let v = dataset.config.vocab_size;
    if a.params.vocab_size() != b.params.vocab_size() {
        return Err(invalid(format!(
            "vocabulary mismatch: {} vs {} tokens",
            a.params.vocab_size(),
            b.params.vocab_size()
        )));
    }
    if a.params.vocab_size() != v {
        return Err(invalid("checkpoint and dataset vocabulary sizes differ"));
    }
    manifest.outputs = vec![COMPARE_FILE.into(), HISTOGRAM_FILE.into(), OVERUSED_FILE.into()];
    manifest.write(&args.out)?;

    let sa = summarize(&a.params, &dataset)?;
    let sb = summarize(&b.params, &dataset)?;
    let vocab = Vocabulary::synthetic(v)?;

    let rows: [(&str, fn(&Summary) -> f64); 12] = [
        ("max_norm_col_mean_img", |s| s.img.max_normalized),
        ("gini_img", |s| s.img.gini),
        ("activated_mean_img", |s| s.img.activated_mean),
        ("max_norm_col_mean_txt", |s| s.txt.max_normalized),
        ("gini_txt", |s| s.txt.gini),
        ("activated_mean_txt", |s| s.txt.activated_mean),
        ("R1_t2i", |s| s.t2i.r1),
        ("R5_t2i", |s| s.t2i.r5),
        ("R10_t2i", |s| s.t2i.r10),
        ("R1_i2t", |s| s.i2t.r1),
        ("R5_i2t", |s| s.i2t.r5),
        ("R10_i2t", |s| s.i2t.r10),
    ];
    let mut compare = format!("{COMPARE_COLUMNS}\n");
    for (name, f) in rows {
        compare.push_str(&format!("{name},{},{}\n", f(&sa), f(&sb)));
    }
    let mut hist = format!("{HISTOGRAM_COLUMNS}\n");
    for j in 0..v {
        hist.push_str(&format!(
            "{j},{},{},{},{},{}\n",
            vocab.token(j as u32).unwrap_or("?"),
            sa.img.activation_freq[j],
            sb.img.activation_freq[j],
            sa.txt.activation_freq[j],
            sb.txt.activation_freq[j]
        ));
    }
    let mut overused = format!("{OVERUSED_COLUMNS}\n");
    for (label, s) in [("a", &sa), ("b", &sb)] {
        for (modality, stats) in [("image", &s.img), ("text", &s.txt)] {
            for (rank, (tok, m)) in stats.top_overused(args.top).into_iter().enumerate() {
                overused.push_str(&format!(
                    "{label},{modality},{},{tok},{},{m}\n",
                    rank + 1,
                    vocab.token(tok).unwrap_or("?")
                ));
            }
        }
    }
    write_output(&args.out, COMPARE_FILE, &compare)?;
    write_output(&args.out, HISTOGRAM_FILE, &hist)?;
    write_output(&args.out, OVERUSED_FILE, &overused)?;

    println!("{:<24}{:>12}{:>12}", "metric", "a", "b");
    for (name, f) in rows {
        println!("{name:<24}{:>12.5}{:>12.5}", f(&sa), f(&sb));
    }
    Ok(())
}
