//! Genuine/imposter score distributions, empirical FAR/FRR and the EER point.
//!
//! A threshold model accepts a comparison as genuine when `MS >= t`. All
//! scores of one analysis share a denominator `n_bits`, so they are stored
//! as integer numerators and every rate is an exact ratio of counts until
//! the final conversion to `f64`.

use std::cmp::Ordering;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcher::{score_value, ScoreMatrix};
use crate::safety_band::SafetyBand;

/// The threshold chosen as the EER point, with the exact error counts there.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EerPoint {
    /// Threshold numerator; the threshold is `threshold / n_bits`.
    pub threshold: u32,
    /// Imposter scores `>= threshold`.
    pub false_accepts: u64,
    /// Genuine scores `< threshold`.
    pub false_rejects: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributionSummary {
    n_bits: u32,
    genuine: Vec<u32>,
    imposter: Vec<u32>,
    eer_point: EerPoint,
    eer: f64,
    t_eer: f64,
}

impl DistributionSummary {
    /// Builds a summary from raw score numerators over `n_bits`.
    pub fn from_scores(n_bits: u32, mut genuine: Vec<u32>, mut imposter: Vec<u32>) -> Result<Self> {
        if genuine.is_empty() || imposter.is_empty() {
            return Err(Error::Precondition(format!(
                "need genuine and imposter scores (got {} genuine, {} imposter)",
                genuine.len(),
                imposter.len()
            )));
        }
        if n_bits == 0 || genuine.iter().chain(&imposter).any(|&s| s > n_bits) {
            return Err(Error::Format(format!(
                "score numerators must lie in [0, {n_bits}]"
            )));
        }
        genuine.sort_unstable();
        imposter.sort_unstable();
        let eer_point = eer_sweep(&genuine, &imposter);
        let (g, i) = (genuine.len() as u128, imposter.len() as u128);
        // (fa/I + fr/G) / 2 as one exact fraction, rounded once
        let num = u128::from(eer_point.false_accepts) * g + u128::from(eer_point.false_rejects) * i;
        let eer = num as f64 / (2 * g * i) as f64;
        let t_eer = score_value(eer_point.threshold, n_bits);
        Ok(DistributionSummary {
            n_bits,
            genuine,
            imposter,
            eer_point,
            eer,
            t_eer,
        })
    }

    pub fn n_bits(&self) -> u32 {
        self.n_bits
    }

    /// Ascending genuine numerators.
    pub fn genuine_counts(&self) -> &[u32] {
        &self.genuine
    }

    /// Ascending imposter numerators.
    pub fn imposter_counts(&self) -> &[u32] {
        &self.imposter
    }

    pub fn genuine(&self) -> impl Iterator<Item = f64> + '_ {
        self.genuine.iter().map(|&s| score_value(s, self.n_bits))
    }

    pub fn imposter(&self) -> impl Iterator<Item = f64> + '_ {
        self.imposter.iter().map(|&s| score_value(s, self.n_bits))
    }

    pub fn n_genuine(&self) -> usize {
        self.genuine.len()
    }

    pub fn n_imposter(&self) -> usize {
        self.imposter.len()
    }

    /// Minimum genuine score (mGS).
    pub fn mgs(&self) -> f64 {
        score_value(self.genuine[0], self.n_bits)
    }

    /// Maximum imposter score (MIS).
    pub fn mis(&self) -> f64 {
        score_value(*self.imposter.last().unwrap(), self.n_bits)
    }

    pub fn mgs_count(&self) -> u32 {
        self.genuine[0]
    }

    pub fn mis_count(&self) -> u32 {
        *self.imposter.last().unwrap()
    }

    pub fn has_overlap(&self) -> bool {
        self.mgs_count() < self.mis_count()
    }

    pub fn eer(&self) -> f64 {
        self.eer
    }

    pub fn t_eer(&self) -> f64 {
        self.t_eer
    }

    pub fn eer_point(&self) -> EerPoint {
        self.eer_point
    }

    /// Imposter scores accepted at threshold numerator `t`.
    pub fn false_accepts_at(&self, t: u32) -> usize {
        self.imposter.len() - self.imposter.partition_point(|&s| s < t)
    }

    /// Genuine scores rejected at threshold numerator `t`.
    pub fn false_rejects_at(&self, t: u32) -> usize {
        self.genuine.partition_point(|&s| s < t)
    }

    /// FAR/FRR at every candidate threshold (the distinct scores plus one
    /// point above the maximum), ascending.
    pub fn roc_curve(&self) -> Vec<RocPoint> {
        candidate_thresholds(&self.genuine, &self.imposter)
            .into_iter()
            .map(|t| RocPoint {
                t: score_value(t, self.n_bits),
                far: self.false_accepts_at(t) as f64 / self.imposter.len() as f64,
                frr: self.false_rejects_at(t) as f64 / self.genuine.len() as f64,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RocPoint {
    pub t: f64,
    pub far: f64,
    pub frr: f64,
}

pub fn write_roc_csv<W: Write>(points: &[RocPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "far", "frr"])?;
    for p in points {
        w.write_record([p.t.to_string(), p.far.to_string(), p.frr.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn candidate_thresholds(genuine: &[u32], imposter: &[u32]) -> Vec<u32> {
    let mut all: Vec<u32> = genuine.iter().chain(imposter).copied().collect();
    all.sort_unstable();
    all.dedup();
    let sup = all.last().unwrap() + 1;
    all.push(sup);
    all
}

/// Merge sweep over sorted inputs: the candidate minimizing
/// `|FAR - FRR|`, earliest on ties.
fn eer_sweep(genuine: &[u32], imposter: &[u32]) -> EerPoint {
    let (g, i) = (genuine.len() as u128, imposter.len() as u128);
    let mut best: Option<(u128, EerPoint)> = None;
    let (mut gi, mut ii) = (0usize, 0usize);
    for t in candidate_thresholds(genuine, imposter) {
        while gi < genuine.len() && genuine[gi] < t {
            gi += 1;
        }
        while ii < imposter.len() && imposter[ii] < t {
            ii += 1;
        }
        let fa = (imposter.len() - ii) as u128;
        let fr = gi as u128;
        // |fa/I - fr/G| scaled by I*G
        let gap = (fa * g).abs_diff(fr * i);
        if best.as_ref().is_none_or(|(b, _)| gap < *b) {
            best = Some((
                gap,
                EerPoint {
                    threshold: t,
                    false_accepts: fa as u64,
                    false_rejects: fr as u64,
                },
            ));
        }
    }
    best.unwrap().1
}

/// Partitions a score matrix into sorted genuine and imposter distributions.
pub fn split_scores(m: &ScoreMatrix) -> Result<DistributionSummary> {
    let genuine = m.genuine().map(|c| c.matches()).collect();
    let imposter = m.imposter().map(|c| c.matches()).collect();
    DistributionSummary::from_scores(m.n_bits(), genuine, imposter)
}

/// Fraction of imposter scores `>= t`.
pub fn far(d: &DistributionSummary, t: f64) -> f64 {
    let accepted = d.imposter().filter(|&s| s >= t).count();
    accepted as f64 / d.n_imposter() as f64
}

/// Fraction of genuine scores `< t`.
pub fn frr(d: &DistributionSummary, t: f64) -> f64 {
    let rejected = d.genuine().take_while(|&s| s < t).count();
    rejected as f64 / d.n_genuine() as f64
}

/// `(eer, t_eer)`.
pub fn equal_error_rate(d: &DistributionSummary) -> (f64, f64) {
    (d.eer, d.t_eer)
}

/// `[mGS, MIS]` when the distributions overlap (`mGS < MIS`), otherwise
/// `None`: every template is a sheep by construction.
pub fn maximal_safety_band(d: &DistributionSummary) -> Option<SafetyBand> {
    d.has_overlap()
        .then(|| SafetyBand::new(d.mgs(), d.mis()).expect("mGS < MIS inside [0, 1]"))
}

/// The `analyze` report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    #[serde(rename = "mGS")]
    pub mgs: f64,
    #[serde(rename = "MIS")]
    pub mis: f64,
    pub eer: f64,
    pub t_eer: f64,
    pub band: Option<SafetyBand>,
    pub n_genuine: usize,
    pub n_imposter: usize,
}

impl AnalysisReport {
    pub fn from_summary(d: &DistributionSummary) -> Self {
        AnalysisReport {
            mgs: d.mgs(),
            mis: d.mis(),
            eer: d.eer,
            t_eer: d.t_eer,
            band: maximal_safety_band(d),
            n_genuine: d.n_genuine(),
            n_imposter: d.n_imposter(),
        }
    }
}

/// Compares two fractions `a/b` and `c/d` exactly.
pub(crate) fn cmp_fractions(a: u64, b: u64, c: u64, d: u64) -> Ordering {
    (u128::from(a) * u128::from(d)).cmp(&(u128::from(c) * u128::from(b)))
}
