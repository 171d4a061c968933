// SPDX-License-Identifier: Apache-2.0

use std::fs;

use lexalign::lexcore::{sparse_dot, SparseLexical};
use lexalign::retrieval::{rank_hits, Hit, InvertedIndex};
use lexalign::synth::{Dataset, SynthConfig};
use lexalign::trainer::{resume, train, Checkpoint, TrainConfig, Trainer};
use lexalign::Error;
use proptest::prelude::*;
use tempfile::TempDir;

fn small_data(seed: u64) -> Dataset {
    Dataset::generate(&SynthConfig {
        vocab_size: 64,
        d_img: 16,
        d_txt: 16,
        train_pairs: 256,
        val_pairs: 16,
        test_pairs: 32,
        scene_count: 2,
        seed,
        ..SynthConfig::default()
    })
    .unwrap()
}

fn small_config() -> TrainConfig {
    TrainConfig {
        epochs: 3,
        batch_size: 32,
        warmup_iters: 4,
        penalty_warmup_steps: 6,
        latent_dim: 16,
        hidden_dim: 24,
        ..TrainConfig::desk()
    }
}

#[test]
fn dataset_survives_disk_round_trip() {
    let ds = small_data(3);
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ds.save(&a).unwrap();
    Dataset::load(&a).unwrap().save(&b).unwrap();
    for f in ["manifest.json", "samples.jsonl", "scenes.jsonl"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_ne!(small_data(4).hash(), ds.hash());
}

#[test]
fn interrupted_training_resumes_bit_exactly() {
    let ds = small_data(0);
    let full = train(&small_config(), &ds).unwrap();

    let mut t = Trainer::new(small_config(), &ds).unwrap();
    t.run_until(t.total_steps() / 2 + 1).unwrap();
    let bytes = t.checkpoint().unwrap().to_bytes();
    let resumed = resume(Checkpoint::from_bytes(&bytes).unwrap(), &ds).unwrap();

    assert_eq!(resumed.checkpoint.to_bytes(), full.checkpoint.to_bytes());
    let tail = |csv: &str| csv.lines().last().unwrap().to_owned();
    assert_eq!(tail(&resumed.metrics_csv()), tail(&full.metrics_csv()));
}

#[test]
fn checkpoint_refuses_other_dataset() {
    let ds = small_data(0);
    let mut t = Trainer::new(small_config(), &ds).unwrap();
    t.run_until(2).unwrap();
    let ckpt = t.checkpoint().unwrap();
    let other = small_data(1);
    assert!(matches!(
        Trainer::from_checkpoint(ckpt, &other),
        Err(Error::HashMismatch { .. })
    ));
}

fn arb_sparse(v: usize) -> impl Strategy<Value = SparseLexical> {
    proptest::collection::btree_map(0..v as u32, 1u8..8, 0..10).prop_map(move |m| {
        let entries = m.into_iter().map(|(t, w)| (t, w as f64 * 0.125)).collect();
        SparseLexical::new(v, entries).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn index_agrees_with_brute_force(
        corpus in proptest::collection::vec(arb_sparse(40), 1..30),
        queries in proptest::collection::vec(arb_sparse(40), 1..6),
        k in 1usize..12,
    ) {
        let index = InvertedIndex::build(40, &corpus).unwrap();
        let reloaded = InvertedIndex::from_bytes(&index.to_bytes()).unwrap();
        for q in &queries {
            let mut brute: Vec<Hit> = corpus
                .iter()
                .enumerate()
                .map(|(i, d)| Hit { doc: i as u32, score: sparse_dot(q, d) })
                .filter(|h| h.score > 0.0)
                .collect();
            rank_hits(&mut brute, k);
            let got = index.search(q, k).unwrap();
            prop_assert_eq!(&got.hits, &brute);
            prop_assert_eq!(&reloaded.search(q, k).unwrap().hits, &brute);
        }
        for (i, d) in corpus.iter().enumerate() {
            prop_assert_eq!(&index.reconstruct(i as u32).unwrap(), d);
        }
    }
}
