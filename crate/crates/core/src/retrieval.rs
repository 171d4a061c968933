// SPDX-License-Identifier: Apache-2.0

//! Inverted-index retrieval over sparse lexical vectors.
//!
//! Scores are accumulated term by term in ascending token order, which adds
//! each document's products in the same order as a dense dot product over
//! the vocabulary. Results therefore match dense scoring bit for bit.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lexcore::{prune_to_sparsity, DenseLexical, SparseLexical};

const MAGIC: &[u8; 8] = b"LXALINDX";
const VERSION: u32 = 1;

pub const SWEEP_CSV_HEADER: &str = "direction,ratio,activated_mean,R1,R5,R10";

#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    vocab_size: usize,
    doc_count: usize,
    /// Per token: (doc id, value), sorted by doc id, values > 0.
    postings: Vec<Vec<(u32, f64)>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub doc: u32,
    pub score: f64,
}

/// Top hits by descending score, ties by ascending doc id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RetrievalResult {
    pub hits: Vec<Hit>,
}

impl RetrievalResult {
    pub fn len(&self) -> usize {
        self.hits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }

    pub fn contains_within(&self, doc: u32, k: usize) -> bool {
        self.hits.iter().take(k).any(|h| h.doc == doc)
    }
}

/// Orders hits best first: higher score, then lower doc id.
pub fn rank_hits(hits: &mut Vec<Hit>, k: usize) {
    hits.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.doc.cmp(&b.doc)));
    hits.truncate(k);
}

impl InvertedIndex {
    pub fn build(vocab_size: usize, corpus: &[SparseLexical]) -> Result<Self> {
        if corpus.len() > u32::MAX as usize {
            return Err(Error::invalid("corpus too large for 32-bit doc ids"));
        }
        let mut postings = vec![Vec::new(); vocab_size];
        for (doc, s) in corpus.iter().enumerate() {
            if s.vocab_size() != vocab_size {
                return Err(Error::DimensionMismatch {
                    context: "index document vocabulary",
                    expected: vocab_size,
                    got: s.vocab_size(),
                });
            }
            for &(tok, v) in s.entries() {
                if v > 0.0 {
                    postings[tok as usize].push((doc as u32, v));
                }
            }
        }
        Ok(Self {
            vocab_size,
            doc_count: corpus.len(),
            postings,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn doc_count(&self) -> usize {
        self.doc_count
    }

    pub fn postings(&self, token: u32) -> &[(u32, f64)] {
        &self.postings[token as usize]
    }

    /// Rebuilds one document from the postings.
    pub fn reconstruct(&self, doc: u32) -> Result<SparseLexical> {
        if doc as usize >= self.doc_count {
            return Err(Error::invalid(format!("doc {doc} out of range")));
        }
        let entries = self
            .postings
            .iter()
            .enumerate()
            .filter_map(|(tok, list)| {
                list.binary_search_by_key(&doc, |p| p.0)
                    .ok()
                    .map(|i| (tok as u32, list[i].1))
            })
            .collect();
        SparseLexical::new(self.vocab_size, entries)
    }

    pub fn search(&self, query: &SparseLexical, k: usize) -> Result<RetrievalResult> {
        if k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if query.vocab_size() != self.vocab_size {
            return Err(Error::DimensionMismatch {
                context: "query vocabulary",
                expected: self.vocab_size,
                got: query.vocab_size(),
            });
        }
        let mut acc = vec![0.0f64; self.doc_count];
        let mut touched = Vec::new();
        for &(tok, qv) in query.entries() {
            for &(doc, dv) in &self.postings[tok as usize] {
                let slot = &mut acc[doc as usize];
                if *slot == 0.0 {
                    touched.push(doc);
                }
                *slot += qv * dv;
            }
        }
        touched.sort_unstable();
        touched.dedup();
        let mut hits: Vec<Hit> = touched
            .into_iter()
            .map(|doc| Hit {
                doc,
                score: acc[doc as usize],
            })
            .filter(|h| h.score > 0.0)
            .collect();
        rank_hits(&mut hits, k);
        Ok(RetrievalResult { hits })
    }

    /// Runs queries in parallel; output order follows input order.
    pub fn search_all(&self, queries: &[SparseLexical], k: usize) -> Result<Vec<RetrievalResult>> {
        queries.par_iter().map(|q| self.search(q, k)).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.vocab_size as u64).to_le_bytes());
        out.extend_from_slice(&(self.doc_count as u64).to_le_bytes());
        for list in &self.postings {
            out.extend_from_slice(&(list.len() as u32).to_le_bytes());
            for &(doc, v) in list {
                out.extend_from_slice(&doc.to_le_bytes());
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |r: &str| Error::format("index", r.to_string());
        if bytes.len() < 8 + 4 + 16 + 32 || &bytes[..8] != MAGIC {
            return Err(bad("missing magic header"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(bad("integrity digest does not match contents"));
        }
        let mut pos = 8;
        let mut take = |n: usize| -> Result<&[u8]> {
            let s = body.get(pos..pos + n).ok_or_else(|| bad("unexpected end of data"))?;
            pos += n;
            Ok(s)
        };
        let version = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let vocab_size = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize;
        let doc_count = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize;
        if vocab_size > body.len() {
            return Err(bad("vocabulary size exceeds file size"));
        }
        let mut postings = Vec::with_capacity(vocab_size);
        for _ in 0..vocab_size {
            let n = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) as usize;
            let mut list = Vec::with_capacity(n.min(doc_count));
            for _ in 0..n {
                let doc = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes"));
                let v = f64::from_le_bytes(take(8)?.try_into().expect("8 bytes"));
                if doc as usize >= doc_count || !(v > 0.0 && v.is_finite()) {
                    return Err(bad("posting out of range"));
                }
                if list.last().is_some_and(|&(d, _)| d >= doc) {
                    return Err(bad("postings not sorted by doc id"));
                }
                list.push((doc, v));
            }
            postings.push(list);
        }
        if pos != body.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(Self {
            vocab_size,
            doc_count,
            postings,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Fraction of queries whose relevant doc is within the top `k`.
pub fn recall_at_k(results: &[RetrievalResult], truth: &[u32], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    if results.len() != truth.len() {
        return Err(Error::invalid(format!(
            "{} queries but {} ground-truth ids",
            results.len(),
            truth.len()
        )));
    }
    if results.is_empty() {
        return Err(Error::invalid("no queries to score"));
    }
    let hits = results
        .iter()
        .zip(truth)
        .filter(|(r, &t)| r.contains_within(t, k))
        .count();
    Ok(hits as f64 / results.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Recall {
    pub r1: f64,
    pub r5: f64,
    pub r10: f64,
}

/// Paired evaluation: query `i` is relevant to doc `i`.
pub fn evaluate_paired(queries: &[SparseLexical], corpus: &[SparseLexical]) -> Result<Recall> {
    if queries.len() != corpus.len() {
        return Err(Error::invalid("paired evaluation needs equally many queries and docs"));
    }
    let vocab = corpus
        .first()
        .map(|d| d.vocab_size())
        .ok_or_else(|| Error::invalid("empty corpus"))?;
    let index = InvertedIndex::build(vocab, corpus)?;
    let results = index.search_all(queries, 10)?;
    let truth: Vec<u32> = (0..queries.len() as u32).collect();
    Ok(Recall {
        r1: recall_at_k(&results, &truth, 1)?,
        r5: recall_at_k(&results, &truth, 5)?,
        r10: recall_at_k(&results, &truth, 10)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    TextToImage,
    ImageToText,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::TextToImage => "t2i",
            Direction::ImageToText => "i2t",
        })
    }
}

/// Which representations the sweep prunes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PruneSide {
    #[default]
    Both,
    Queries,
    Corpus,
}

impl FromStr for PruneSide {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "both" => Ok(PruneSide::Both),
            "queries" => Ok(PruneSide::Queries),
            "corpus" => Ok(PruneSide::Corpus),
            other => Err(Error::invalid(format!(
                "prune side must be both|queries|corpus, got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub direction: Direction,
    pub ratio: f64,
    /// Mean non-zero count over every vector taking part (queries and docs).
    pub activated_mean: f64,
    pub recall: Recall,
}

impl SweepRow {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.direction,
            self.ratio,
            self.activated_mean,
            self.recall.r1,
            self.recall.r5,
            self.recall.r10
        )
    }
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(SWEEP_CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

/// Retrieval quality at each sparsity ratio, text-to-image rows first.
pub fn sparsity_sweep(
    txt: &[DenseLexical],
    img: &[DenseLexical],
    ratios: &[f64],
    side: PruneSide,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(2 * ratios.len());
    let mut per_ratio = Vec::with_capacity(ratios.len());
    for &ratio in ratios {
        let prune = |v: &[DenseLexical]| -> Result<Vec<SparseLexical>> {
            v.par_iter().map(|s| prune_to_sparsity(s, ratio)).collect()
        };
        let full = |v: &[DenseLexical]| -> Vec<SparseLexical> {
            v.iter().map(|s| SparseLexical::from_dense(s.values())).collect()
        };
        let (pt, pi) = (prune(txt)?, prune(img)?);
        let (ft, fi) = (full(txt), full(img));
        let (pq, pc) = match side {
            PruneSide::Both => (true, true),
            PruneSide::Queries => (true, false),
            PruneSide::Corpus => (false, true),
        };
        let one = |dir: Direction,
                   queries: (&[SparseLexical], &[SparseLexical]),
                   corpus: (&[SparseLexical], &[SparseLexical])|
         -> Result<SweepRow> {
            let q = if pq { queries.0 } else { queries.1 };
            let c = if pc { corpus.0 } else { corpus.1 };
            let nnz: usize = q.iter().chain(c).map(|s| s.nnz()).sum();
            Ok(SweepRow {
                direction: dir,
                ratio,
                activated_mean: nnz as f64 / (q.len() + c.len()) as f64,
                recall: evaluate_paired(q, c)?,
            })
        };
        let t2i = one(Direction::TextToImage, (&pt, &ft), (&pi, &fi))?;
        let i2t = one(Direction::ImageToText, (&pi, &fi), (&pt, &ft))?;
        per_ratio.push((t2i, i2t));
    }
    rows.extend(per_ratio.iter().map(|p| p.0));
    rows.extend(per_ratio.iter().map(|p| p.1));
    Ok(rows)
}
