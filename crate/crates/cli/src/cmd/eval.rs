// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};

use anyhow::Result;
use lexalign::gradcore::{grad_check, GradCheckConfig};
use lexalign::lexcore::{read_sparse_jsonl, write_sparse_jsonl, SparseLexical};
use lexalign::losses::PenaltyKind;
use lexalign::patchdis::{eval_patchdis, random_baseline};
use lexalign::retrieval::{evaluate_paired, sparsity_sweep, sweep_csv, InvertedIndex, PruneSide};
use lexalign::synth::{Dataset, Split};
use lexalign::trainer::{gradcheck_instance, PARAM_NAMES};

use super::{invalid, load_checkpoint, load_dataset, write_output};
use crate::manifest::RunManifest;

pub const RETRIEVAL_FILE: &str = "retrieval.csv";
pub const RETRIEVAL_COLUMNS: &str = "direction,R1,R5,R10";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const PATCHDIS_FILE: &str = "patchdis.csv";
pub const PATCHDIS_SUMMARY_FILE: &str = "patchdis_summary.csv";
pub const GRADCHECK_FILE: &str = "gradcheck.csv";
pub const GRADCHECK_COLUMNS: &str = "instance,param,max_rel_err,mean_rel_err,checked,skipped,passed";

const DEFAULT_RATIOS: &str = "0,0.5,0.8,0.9,0.95,0.98,0.99,0.996";

#[derive(Debug, clap::Subcommand)]
pub enum Target {
    /// R@1/5/10 in both directions on a split.
    Retrieval(RetrievalArgs),
    /// Retrieval at a list of sparsity ratios.
    Sweep(SweepArgs),
    /// Patch classification mIoU against the random baseline.
    Patchdis(PatchdisArgs),
    /// Finite-difference check of the full training objective.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, clap::Args)]
pub struct RetrievalArgs {
    #[arg(long)]
    data: PathBuf,
    /// Encode the split with this checkpoint.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Use the ground-truth lexical vectors on both sides.
    #[arg(long)]
    oracle: bool,
    /// Pre-encoded text vectors (JSONL), paired by line with --img-vectors.
    #[arg(long, requires = "img_vectors")]
    txt_vectors: Option<PathBuf>,
    #[arg(long, requires = "txt_vectors")]
    img_vectors: Option<PathBuf>,
    /// train, val or test.
    #[arg(long, default_value = "test")]
    split: Split,
    /// Also write the vectors used as JSONL and both indexes as binary files.
    #[arg(long)]
    write_artifacts: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, clap::Args)]
pub struct SweepArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Sparsity ratios in [0, 1), comma separated.
    #[arg(long, value_delimiter = ',', default_value = DEFAULT_RATIOS)]
    ratios: Vec<f64>,
    /// Which side to prune: both, queries or corpus.
    #[arg(long, default_value = "both")]
    prune: PruneSide,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, clap::Args)]
pub struct PatchdisArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Monte-Carlo draws per scene for the random baseline.
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, clap::Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 20)]
    instances: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Regularizer in the checked objective: overuse, flops or none.
    #[arg(long, default_value = "overuse")]
    penalty: PenaltyKind,
    /// Optional directory for gradcheck.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run(target: Target) -> Result<()> {
    match target {
        Target::Retrieval(a) => retrieval(a),
        Target::Sweep(a) => sweep(a),
        Target::Patchdis(a) => patchdis(a),
        Target::Gradcheck(a) => gradcheck(a),
    }
}

fn retrieval(args: RetrievalArgs) -> Result<()> {
    let sources = [args.checkpoint.is_some(), args.oracle, args.txt_vectors.is_some()];
    if sources.iter().filter(|&&s| s).count() != 1 {
        return Err(invalid(
            "choose exactly one source: --checkpoint, --oracle, or --txt-vectors with --img-vectors",
        ));
    }
    let mut manifest = RunManifest::new("eval retrieval");
    let dataset = load_dataset(&args.data, &mut manifest)?;
    let v = dataset.config.vocab_size;
    let samples = dataset.split(args.split);
    let (txt, img): (Vec<SparseLexical>, Vec<SparseLexical>) = if let Some(path) = &args.checkpoint {
        let ckpt = load_checkpoint(path, &mut manifest)?;
        if ckpt.params.vocab_size() != v {
            return Err(invalid("checkpoint and dataset vocabulary sizes differ"));
        }
        let (t, i) = ckpt.params.encode_pairs(samples)?;
        let sparse = |x: Vec<lexalign::lexcore::DenseLexical>| {
            x.iter().map(|s| SparseLexical::from_dense(s.values())).collect()
        };
        (sparse(t), sparse(i))
    } else if args.oracle {
        let truth: Vec<SparseLexical> = samples.iter().map(|s| s.true_lexical.clone()).collect();
        (truth.clone(), truth)
    } else {
        let (tp, ip) = (args.txt_vectors.as_ref().expect("checked"), args.img_vectors.as_ref().expect("checked"));
        manifest.input(tp)?;
        manifest.input(ip)?;
        let (t, i) = (read_sparse_jsonl(tp, v)?, read_sparse_jsonl(ip, v)?);
        if t.len() != i.len() || t.iter().zip(&i).any(|(a, b)| a.0 != b.0) {
            return Err(invalid("text and image vector files must list the same ids in the same order"));
        }
        (t.into_iter().map(|x| x.1).collect(), i.into_iter().map(|x| x.1).collect())
    };
    if txt.is_empty() {
        return Err(invalid(format!("split {} is empty", args.split)));
    }
    let mut outputs = vec![RETRIEVAL_FILE.to_string()];
    if args.write_artifacts {
        outputs.extend(["txt_vectors.jsonl", "img_vectors.jsonl", "index_txt.bin", "index_img.bin"].map(String::from));
    }
    manifest.outputs = outputs;
    manifest.write(&args.out)?;

    let t2i = evaluate_paired(&txt, &img)?;
    let i2t = evaluate_paired(&img, &txt)?;
    let csv = format!(
        "{RETRIEVAL_COLUMNS}\nt2i,{},{},{}\ni2t,{},{},{}\n",
        t2i.r1, t2i.r5, t2i.r10, i2t.r1, i2t.r5, i2t.r10
    );
    write_output(&args.out, RETRIEVAL_FILE, &csv)?;
    if args.write_artifacts {
        write_artifacts(&args.out, &dataset, args.split, &txt, &img)?;
    }
    println!("t2i R@1 {:.4} R@5 {:.4} R@10 {:.4}", t2i.r1, t2i.r5, t2i.r10);
    println!("i2t R@1 {:.4} R@5 {:.4} R@10 {:.4}", i2t.r1, i2t.r5, i2t.r10);
    Ok(())
}

fn write_artifacts(out: &Path, dataset: &Dataset, split: Split, txt: &[SparseLexical], img: &[SparseLexical]) -> Result<()> {
    let ids: Vec<u64> = dataset.split(split).iter().map(|s| s.id).collect();
    let ids = if ids.len() == txt.len() { ids } else { (0..txt.len() as u64).collect() };
    write_sparse_jsonl(&out.join("txt_vectors.jsonl"), ids.iter().copied().zip(txt))?;
    write_sparse_jsonl(&out.join("img_vectors.jsonl"), ids.iter().copied().zip(img))?;
    let v = dataset.config.vocab_size;
    InvertedIndex::build(v, txt)?.save(&out.join("index_txt.bin"))?;
    InvertedIndex::build(v, img)?.save(&out.join("index_img.bin"))?;
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    if args.ratios.is_empty() {
        return Err(invalid("--ratios needs at least one value"));
    }
    if let Some(r) = args.ratios.iter().find(|r| !(0.0..1.0).contains(*r)) {
        return Err(invalid(format!("ratio {r} is outside [0, 1)")));
    }
    let mut manifest = RunManifest::new("eval sweep");
    let dataset = load_dataset(&args.data, &mut manifest)?;
    let ckpt = load_checkpoint(&args.checkpoint, &mut manifest)?;
    if ckpt.params.vocab_size() != dataset.config.vocab_size {
        return Err(invalid("checkpoint and dataset vocabulary sizes differ"));
    }
    manifest.outputs = vec![SWEEP_FILE.into()];
    manifest.write(&args.out)?;
    let (txt, img) = ckpt.params.encode_pairs(&dataset.test)?;
    let rows = sparsity_sweep(&txt, &img, &args.ratios, args.prune)?;
    write_output(&args.out, SWEEP_FILE, &sweep_csv(&rows))?;
    for r in &rows {
        println!(
            "{} ratio {:<6} active {:>7.2}  R@1 {:.4}  R@5 {:.4}  R@10 {:.4}",
            r.direction, r.ratio, r.activated_mean, r.recall.r1, r.recall.r5, r.recall.r10
        );
    }
    Ok(())
}

fn patchdis(args: PatchdisArgs) -> Result<()> {
    if args.trials == 0 {
        return Err(invalid("--trials must be at least 1"));
    }
    let mut manifest = RunManifest::new("eval patchdis");
    let dataset = load_dataset(&args.data, &mut manifest)?;
    let ckpt = load_checkpoint(&args.checkpoint, &mut manifest)?;
    if ckpt.params.vocab_size() != dataset.config.vocab_size {
        return Err(invalid("checkpoint and dataset vocabulary sizes differ"));
    }
    if dataset.scenes.is_empty() {
        return Err(invalid("dataset has no scenes (scene_count = 0)"));
    }
    manifest.seed = Some(args.seed);
    manifest.outputs = vec![PATCHDIS_FILE.into(), PATCHDIS_SUMMARY_FILE.into()];
    manifest.write(&args.out)?;
    let report = eval_patchdis(&ckpt.params, &dataset.maps, &dataset.scenes)?;
    let baseline = random_baseline(&dataset.scenes, args.trials, args.seed)?;
    write_output(&args.out, PATCHDIS_FILE, &report.to_csv())?;
    let summary = format!(
        "metric,value\nmiou,{}\naccuracy,{}\nrandom_baseline,{}\nratio_to_baseline,{}\nscenes,{}\n",
        report.miou,
        report.accuracy,
        baseline,
        report.miou / baseline,
        dataset.scenes.len()
    );
    write_output(&args.out, PATCHDIS_SUMMARY_FILE, &summary)?;
    println!(
        "mIoU {:.4} | patch accuracy {:.4} | random baseline {:.4} | ratio {:.2}x",
        report.miou,
        report.accuracy,
        baseline,
        report.miou / baseline
    );
    Ok(())
}

fn gradcheck(args: GradcheckArgs) -> Result<()> {
    if args.instances == 0 {
        return Err(invalid("--instances must be at least 1"));
    }
    let mut manifest = RunManifest::new("eval gradcheck");
    manifest.seed = Some(args.seed);
    if let Some(out) = &args.out {
        manifest.outputs = vec![GRADCHECK_FILE.into()];
        manifest.write(out)?;
    }
    let config = GradCheckConfig::default();
    let mut csv = format!("{GRADCHECK_COLUMNS}\n");
    let (mut worst, mut failed, mut skipped) = (0.0f64, 0usize, 0usize);
    for i in 0..args.instances {
        let (graph, params) = gradcheck_instance(args.seed.wrapping_add(i), args.penalty);
        let report = grad_check(&graph, &params, &PARAM_NAMES, &config);
        for p in &report.params {
            csv.push_str(&format!(
                "{i},{},{},{},{},{},{}\n",
                p.name,
                p.max_rel_err,
                p.mean_rel_err,
                p.checked,
                p.skipped.len(),
                p.passed
            ));
        }
        worst = worst.max(report.max_rel_err());
        skipped += report.skipped();
        if !report.passed() {
            failed += 1;
            eprintln!("instance {i} failed:\n{report}");
        }
    }
    if let Some(out) = &args.out {
        write_output(out, GRADCHECK_FILE, &csv)?;
    }
    println!(
        "{} instances, eps {:e}, tol {:e}: max relative error {worst:.3e}, {skipped} max-pool tie coordinates skipped, {failed} failed",
        args.instances, config.eps, config.tol
    );
    if failed > 0 {
        return Err(anyhow::anyhow!("{failed} gradient-check instances failed"));
    }
    Ok(())
}
