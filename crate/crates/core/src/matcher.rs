//! Hamming similarity and the exhaustive all-to-all score matrix.
//!
//! Scores are carried as exact `(hd_count, n_bits)` integers; the real
//! similarity `1 - hd_count / n_bits` is derived on demand. Plain
//! single-alignment matching only: no rotation search, no occlusion masks.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, IrisCode};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairLabel {
    Genuine,
    Imposter,
}

impl PairLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            PairLabel::Genuine => "genuine",
            PairLabel::Imposter => "imposter",
        }
    }
}

/// One unordered comparison `(i, j)` with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Comparison {
    pub i: u32,
    pub j: u32,
    pub hd_count: u32,
    pub n_bits: u32,
    pub label: PairLabel,
}

impl Comparison {
    /// Number of agreeing bits: the numerator of the similarity score.
    pub fn matches(&self) -> u32 {
        self.n_bits - self.hd_count
    }

    pub fn similarity(&self) -> f64 {
        score_value(self.matches(), self.n_bits)
    }

    pub fn is_genuine(&self) -> bool {
        self.label == PairLabel::Genuine
    }
}

/// The one conversion from an exact score numerator to a real score. Every
/// module goes through it so that equal numerators compare equal as reals.
pub fn score_value(matches: u32, n_bits: u32) -> f64 {
    f64::from(matches) / f64::from(n_bits)
}

fn check_shapes(a: &IrisCode, b: &IrisCode) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch(format!(
            "cannot compare {:?} with {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Number of differing bits, by XOR and popcount over 64-bit words.
pub fn hamming_distance(a: &IrisCode, b: &IrisCode) -> Result<u32> {
    check_shapes(a, b)?;
    let (xa, xb) = (a.as_bytes(), b.as_bytes());
    let mut chunks_a = xa.chunks_exact(8);
    let mut chunks_b = xb.chunks_exact(8);
    let mut count: u32 = chunks_a
        .by_ref()
        .zip(chunks_b.by_ref())
        .map(|(ca, cb)| {
            let wa = u64::from_ne_bytes(ca.try_into().unwrap());
            let wb = u64::from_ne_bytes(cb.try_into().unwrap());
            (wa ^ wb).count_ones()
        })
        .sum();
    count += chunks_a
        .remainder()
        .iter()
        .zip(chunks_b.remainder())
        .map(|(x, y)| (x ^ y).count_ones())
        .sum::<u32>();
    Ok(count)
}

/// `1 - hd / n_bits`.
pub fn hamming_similarity(a: &IrisCode, b: &IrisCode) -> Result<f64> {
    let hd = hamming_distance(a, b)?;
    Ok(score_value(a.n_bits() - hd, a.n_bits()))
}

/// Reference distance that walks the code one bit at a time.
pub fn naive_hamming_oracle(a: &IrisCode, b: &IrisCode) -> Result<u32> {
    check_shapes(a, b)?;
    Ok((0..a.n_bits() as usize)
        .filter(|&k| a.bit(k) != b.bit(k))
        .count() as u32)
}

/// All `n(n-1)/2` comparisons of a dataset, sorted by `(i, j)`, plus the
/// class of every template so that labels and partner classes can be
/// recovered without the codes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoreMatrix {
    n_bits: u32,
    class_of: Vec<u32>,
    comparisons: Vec<Comparison>,
}

impl ScoreMatrix {
    /// Builds a matrix from externally supplied comparisons. They must cover
    /// every unordered pair of `0..n_templates` exactly once in `(i, j)`
    /// order, and the genuine relation must be an equivalence (it defines
    /// the classes).
    pub fn from_comparisons(n_templates: u32, comparisons: Vec<Comparison>) -> Result<Self> {
        if n_templates < 2 {
            return Err(Error::Format(
                "a score matrix needs at least two templates".into(),
            ));
        }
        let n = n_templates as usize;
        if comparisons.len() != n * (n - 1) / 2 {
            return Err(Error::Format(format!(
                "{} comparisons given, {} templates need {}",
                comparisons.len(),
                n,
                n * (n - 1) / 2
            )));
        }
        let n_bits = comparisons[0].n_bits;
        if n_bits == 0 {
            return Err(Error::Format("n_bits must be positive".into()));
        }
        let mut expected = (0..n_templates).flat_map(|i| (i + 1..n_templates).map(move |j| (i, j)));
        let mut parent: Vec<usize> = (0..n).collect();
        fn root(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for c in &comparisons {
            if Some((c.i, c.j)) != expected.next() {
                return Err(Error::Format(format!(
                    "comparison ({}, {}) out of canonical order or duplicated",
                    c.i, c.j
                )));
            }
            if c.n_bits != n_bits {
                return Err(Error::DimensionMismatch(format!(
                    "comparison ({}, {}) has n_bits {} instead of {n_bits}",
                    c.i, c.j, c.n_bits
                )));
            }
            if c.hd_count > c.n_bits {
                return Err(Error::Format(format!(
                    "comparison ({}, {}) has hd_count {} > n_bits {}",
                    c.i, c.j, c.hd_count, c.n_bits
                )));
            }
            if c.is_genuine() {
                let (ri, rj) = (
                    root(&mut parent, c.i as usize),
                    root(&mut parent, c.j as usize),
                );
                parent[ri.max(rj)] = ri.min(rj);
            }
        }
        let roots: Vec<usize> = (0..n).map(|x| root(&mut parent, x)).collect();
        // classes numbered by first appearance
        let mut class_of = vec![u32::MAX; n];
        let mut next = 0;
        for t in 0..n {
            let r = roots[t];
            if class_of[r] == u32::MAX {
                class_of[r] = next;
                next += 1;
            }
            class_of[t] = class_of[r];
        }
        for c in &comparisons {
            let same = class_of[c.i as usize] == class_of[c.j as usize];
            if same != c.is_genuine() {
                return Err(Error::Format(format!(
                    "labels are not an equivalence: ({}, {}) marked {}",
                    c.i,
                    c.j,
                    c.label.as_str()
                )));
            }
        }
        Ok(ScoreMatrix {
            n_bits,
            class_of,
            comparisons,
        })
    }

    pub fn n_templates(&self) -> u32 {
        self.class_of.len() as u32
    }

    pub fn n_bits(&self) -> u32 {
        self.n_bits
    }

    pub fn comparisons(&self) -> &[Comparison] {
        &self.comparisons
    }

    pub fn class_of(&self, template_id: u32) -> u32 {
        self.class_of[template_id as usize]
    }

    pub fn classes(&self) -> &[u32] {
        &self.class_of
    }

    pub fn genuine(&self) -> impl Iterator<Item = &Comparison> {
        self.comparisons.iter().filter(|c| c.is_genuine())
    }

    pub fn imposter(&self) -> impl Iterator<Item = &Comparison> {
        self.comparisons.iter().filter(|c| !c.is_genuine())
    }

    /// Writes the score CSV: header `i,j,hd_count,n_bits,label`, rows in
    /// `(i, j)` order.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["i", "j", "hd_count", "n_bits", "label"])?;
        for c in &self.comparisons {
            w.write_record([
                c.i.to_string(),
                c.j.to_string(),
                c.hd_count.to_string(),
                c.n_bits.to_string(),
                c.label.as_str().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is ascii"))
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != ["i", "j", "hd_count", "n_bits", "label"] {
            return Err(Error::Format(format!("unexpected score header {header:?}")));
        }
        let mut comparisons = Vec::new();
        let mut max_id = 0;
        for row in r.records() {
            let row = row?;
            let field = |k: usize| -> Result<u32> {
                row[k].parse().map_err(|_| {
                    Error::Format(format!("non-integer field {:?} in score row", &row[k]))
                })
            };
            let label = match &row[4] {
                "genuine" => PairLabel::Genuine,
                "imposter" => PairLabel::Imposter,
                other => return Err(Error::Format(format!("unknown label {other:?}"))),
            };
            let c = Comparison {
                i: field(0)?,
                j: field(1)?,
                hd_count: field(2)?,
                n_bits: field(3)?,
                label,
            };
            max_id = max_id.max(c.j);
            comparisons.push(c);
        }
        if comparisons.is_empty() {
            return Err(Error::Format("score file has no comparisons".into()));
        }
        Self::from_comparisons(max_id + 1, comparisons)
    }
}

/// Single-worker all-to-all matching.
pub fn compute_score_matrix(ds: &Dataset) -> Result<ScoreMatrix> {
    compute_score_matrix_parallel(ds, 1)
}

/// All-to-all matching split by first index across `workers` threads. The
/// result is identical for every worker count.
pub fn compute_score_matrix_parallel(ds: &Dataset, workers: usize) -> Result<ScoreMatrix> {
    if workers == 0 {
        return Err(Error::Precondition(
            "worker count must be at least 1".into(),
        ));
    }
    let records = ds.records();
    if records.len() < 2 {
        return Err(Error::Precondition(
            "matching needs at least two templates".into(),
        ));
    }
    let shape = ds.shape();
    if let Some(bad) = records.iter().find(|r| r.code.shape() != shape) {
        return Err(Error::DimensionMismatch(format!(
            "template {} has a different shape",
            bad.template_id
        )));
    }
    let n_bits = shape.n_bits();
    let words: Vec<Vec<u64>> = records
        .iter()
        .map(|r| pack_words(r.code.as_bytes()))
        .collect();
    let n = records.len();

    let row = |i: usize| -> Vec<Comparison> {
        (i + 1..n)
            .map(|j| Comparison {
                i: i as u32,
                j: j as u32,
                hd_count: words[i]
                    .iter()
                    .zip(&words[j])
                    .map(|(a, b)| (a ^ b).count_ones())
                    .sum(),
                n_bits,
                label: if records[i].class_id == records[j].class_id {
                    PairLabel::Genuine
                } else {
                    PairLabel::Imposter
                },
            })
            .collect()
    };

    let rows: Vec<Vec<Comparison>> = if workers <= 1 {
        (0..n).map(row).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Precondition(format!("cannot start worker pool: {e}")))?;
        pool.install(|| (0..n).into_par_iter().map(row).collect())
    };
    let comparisons = rows.into_iter().flatten().collect();
    Ok(ScoreMatrix {
        n_bits,
        class_of: records.iter().map(|r| r.class_id).collect(),
        comparisons,
    })
}

/// Zero-padded 64-bit words; padding is identical on both sides of an XOR.
fn pack_words(bytes: &[u8]) -> Vec<u64> {
    bytes
        .chunks(8)
        .map(|chunk| {
            let mut buf = [0u8; 8];
            buf[..chunk.len()].copy_from_slice(chunk);
            u64::from_be_bytes(buf)
        })
        .collect()
}
