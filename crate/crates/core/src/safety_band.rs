//! The 3-valent safety-band decision model and balanced narrowing of the
//! maximal band `[mGS, MIS]` toward the EER threshold.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::distributions::{cmp_fractions, DistributionSummary};
use crate::error::{Error, Result};
use crate::matcher::{score_value, Comparison, ScoreMatrix};
use crate::menagerie::{hunting_rank, MenagerieParams, RoleTally};

/// A closed score interval `[lower, upper]` inside which comparisons are
/// undecidable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyBand {
    pub lower: f64,
    pub upper: f64,
}

impl SafetyBand {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(0.0 <= lower && lower <= upper && upper <= 1.0) {
            return Err(Error::Precondition(format!(
                "safety band [{lower}, {upper}] must satisfy 0 <= lower <= upper <= 1"
            )));
        }
        Ok(SafetyBand { lower, upper })
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, score: f64) -> bool {
        self.lower <= score && score <= self.upper
    }

    /// True when `other` lies inside `self` and differs from it.
    pub fn strictly_contains(&self, other: &SafetyBand) -> bool {
        self.lower <= other.lower && other.upper <= self.upper && self != other
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BandDecision {
    Imposter,
    Undecidable,
    Genuine,
}

/// Below the band is imposter, above is genuine, the closed band itself
/// (endpoints included) is undecidable.
pub fn decide(score: f64, band: &SafetyBand) -> BandDecision {
    if score < band.lower {
        BandDecision::Imposter
    } else if score > band.upper {
        BandDecision::Genuine
    } else {
        BandDecision::Undecidable
    }
}

/// Where the system runs: a 2-valent threshold or a 3-valent band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OperatingPoint {
    /// Genuine iff `MS >= t`.
    Threshold {
        t: f64,
    },
    Band(SafetyBand),
}

impl OperatingPoint {
    pub fn is_false_accept(&self, c: &Comparison) -> bool {
        !c.is_genuine()
            && match self {
                OperatingPoint::Threshold { t } => c.similarity() >= *t,
                OperatingPoint::Band(b) => c.similarity() > b.upper,
            }
    }

    pub fn is_false_reject(&self, c: &Comparison) -> bool {
        c.is_genuine()
            && match self {
                OperatingPoint::Threshold { t } => c.similarity() < *t,
                OperatingPoint::Band(b) => c.similarity() < b.lower,
            }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorCounts {
    pub fa: u32,
    pub fr: u32,
}

/// Per-template and total errors induced by an operating point. Both
/// templates of an erroneous comparison are charged.
#[derive(Debug, Clone, PartialEq)]
pub struct BandErrors {
    pub per_template: Vec<ErrorCounts>,
    pub false_accepts: usize,
    pub false_rejects: usize,
    pub n_genuine: usize,
    pub n_imposter: usize,
}

impl BandErrors {
    pub fn induced_far(&self) -> f64 {
        ratio(self.false_accepts, self.n_imposter)
    }

    pub fn induced_frr(&self) -> f64 {
        ratio(self.false_rejects, self.n_genuine)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn operating_errors(m: &ScoreMatrix, op: &OperatingPoint) -> BandErrors {
    let mut errors = BandErrors {
        per_template: vec![ErrorCounts::default(); m.n_templates() as usize],
        false_accepts: 0,
        false_rejects: 0,
        n_genuine: 0,
        n_imposter: 0,
    };
    for c in m.comparisons() {
        if c.is_genuine() {
            errors.n_genuine += 1;
            if op.is_false_reject(c) {
                errors.false_rejects += 1;
                errors.per_template[c.i as usize].fr += 1;
                errors.per_template[c.j as usize].fr += 1;
            }
        } else {
            errors.n_imposter += 1;
            if op.is_false_accept(c) {
                errors.false_accepts += 1;
                errors.per_template[c.i as usize].fa += 1;
                errors.per_template[c.j as usize].fa += 1;
            }
        }
    }
    errors
}

/// Genuine scores below the band are false rejects, imposter scores above
/// it are false accepts.
pub fn band_errors(m: &ScoreMatrix, band: &SafetyBand) -> BandErrors {
    operating_errors(m, &OperatingPoint::Band(*band))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Wolves and goats both appeared.
    Populated,
    /// Both bounds reached the target threshold.
    ReachedTEer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Move {
    RaiseLower,
    LowerUpper,
}

/// One band of the narrowing sequence and the errors it induces.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub band: SafetyBand,
    /// The move that produced this band; `None` for the maximal band.
    pub applied: Option<Move>,
    pub induced_far: f64,
    pub induced_frr: f64,
    /// `|induced_frr - induced_far|` after this step.
    pub gap: f64,
    /// The gap the other move would have produced, when it was available.
    pub rejected_gap: Option<f64>,
    pub fa_counts: Vec<u32>,
    pub fr_counts: Vec<u32>,
    pub n_wolves: usize,
    pub n_goats: usize,
    pub n_lambs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NarrowingTrace {
    pub t_eer: f64,
    /// The threshold the bounds converge to: `min(t_eer, MIS)`.
    pub target: f64,
    pub steps: Vec<TraceStep>,
    pub stop_reason: StopReason,
}

impl NarrowingTrace {
    pub fn bands(&self) -> impl Iterator<Item = SafetyBand> + '_ {
        self.steps.iter().map(|s| s.band)
    }

    pub fn final_band(&self) -> SafetyBand {
        self.steps.last().unwrap().band
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "step",
            "lower",
            "upper",
            "induced_far",
            "induced_frr",
            "n_wolves",
            "n_goats",
            "n_lambs",
        ])?;
        for (k, s) in self.steps.iter().enumerate() {
            w.write_record([
                k.to_string(),
                s.band.lower.to_string(),
                s.band.upper.to_string(),
                s.induced_far.to_string(),
                s.induced_frr.to_string(),
                s.n_wolves.to_string(),
                s.n_goats.to_string(),
                s.n_lambs.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Narrows `[mGS, MIS]` toward the EER threshold one observed score at a
/// time, always taking the move that leaves `|FRR - FAR|` smallest.
///
/// Ties go to the side whose current induced error is smaller, then to the
/// lower bound. Bounds clamp at `min(t_eer, MIS)` and never cross it. The
/// trace stops as soon as both the wolf and goat sets are non-empty, or
/// when both bounds sit on the target.
pub fn narrow_balanced(
    d: &DistributionSummary,
    m: &ScoreMatrix,
    params: &MenagerieParams,
) -> Result<NarrowingTrace> {
    params.validate()?;
    if !d.has_overlap() {
        return Err(Error::NoOverlap {
            mgs: d.mgs(),
            mis: d.mis(),
        });
    }
    if m.n_bits() != d.n_bits() {
        return Err(Error::DimensionMismatch(
            "summary and score matrix use different code sizes".into(),
        ));
    }
    let n_bits = m.n_bits();
    let mut genuine: Vec<&Comparison> = m.genuine().collect();
    genuine.sort_by_key(|c| c.matches());
    let mut imposter: Vec<&Comparison> = m.imposter().collect();
    imposter.sort_by_key(|c| std::cmp::Reverse(c.matches()));
    let (n_gen, n_imp) = (genuine.len() as u64, imposter.len() as u64);
    if n_gen as usize != d.n_genuine() || n_imp as usize != d.n_imposter() {
        return Err(Error::Precondition(
            "summary was not computed from this matrix".into(),
        ));
    }

    let target = d.eer_point().threshold.min(d.mis_count());
    let mut lower = d.mgs_count();
    let mut upper = d.mis_count();
    // comparisons already counted: genuine[..fr], imposter[..fa]
    let (mut fr, mut fa) = (0usize, 0usize);

    let mut tally = RoleTally::new(m, hunting_rank(m), *params);
    let band_of = |lo: u32, hi: u32| SafetyBand {
        lower: score_value(lo, n_bits),
        upper: score_value(hi, n_bits),
    };
    let gap = |fr: usize, fa: usize| -> u128 {
        (fr as u128 * u128::from(n_imp)).abs_diff(fa as u128 * u128::from(n_gen))
    };
    let as_real = |g: u128| g as f64 / (u128::from(n_gen) * u128::from(n_imp)) as f64;
    let record = |tally: &RoleTally, lo, hi, fr, fa, applied, rejected: Option<u128>| TraceStep {
        band: band_of(lo, hi),
        applied,
        induced_far: fa as f64 / n_imp as f64,
        induced_frr: fr as f64 / n_gen as f64,
        gap: as_real(gap(fr, fa)),
        rejected_gap: rejected.map(as_real),
        fa_counts: tally.fa_counts().to_vec(),
        fr_counts: tally.fr_counts().to_vec(),
        n_wolves: tally.n_wolves(),
        n_goats: tally.n_goats(),
        n_lambs: tally.n_lambs(),
    };

    let mut steps = vec![record(&tally, lower, upper, 0, 0, None, None)];
    let stop_reason = loop {
        if tally.n_wolves() > 0 && tally.n_goats() > 0 {
            break StopReason::Populated;
        }
        if lower == target && upper == target {
            break StopReason::ReachedTEer;
        }
        // candidate A: next distinct genuine score above `lower`
        let move_a = (lower < target).then(|| {
            let next = genuine[fr..]
                .iter()
                .map(|c| c.matches())
                .find(|&s| s > lower)
                .map_or(target, |s| s.min(target));
            let new_fr = fr
                + genuine[fr..]
                    .iter()
                    .take_while(|c| c.matches() < next)
                    .count();
            (next, new_fr)
        });
        // candidate B: next distinct imposter score below `upper`
        let move_b = (upper > target).then(|| {
            let next = imposter[fa..]
                .iter()
                .map(|c| c.matches())
                .find(|&s| s < upper)
                .map_or(target, |s| s.max(target));
            let new_fa = fa
                + imposter[fa..]
                    .iter()
                    .take_while(|c| c.matches() > next)
                    .count();
            (next, new_fa)
        });
        let gap_a = move_a.map(|(_, new_fr)| gap(new_fr, fa));
        let gap_b = move_b.map(|(_, new_fa)| gap(fr, new_fa));
        let choose_a = match (gap_a, gap_b) {
            (Some(ga), Some(gb)) if ga != gb => ga < gb,
            // tie: the side with the smaller current induced error moves;
            // FRR belongs to the lower bound
            (Some(_), Some(_)) => cmp_fractions(fr as u64, n_gen, fa as u64, n_imp).is_le(),
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (None, None) => unreachable!("bounds not yet at target"),
        };
        let (applied, rejected) = if choose_a {
            let (next, new_fr) = move_a.unwrap();
            for c in &genuine[fr..new_fr] {
                tally.add_false_reject(c);
            }
            lower = next;
            fr = new_fr;
            (Move::RaiseLower, gap_b)
        } else {
            let (next, new_fa) = move_b.unwrap();
            for c in &imposter[fa..new_fa] {
                tally.add_false_accept(c);
            }
            upper = next;
            fa = new_fa;
            (Move::LowerUpper, gap_a)
        };
        steps.push(record(
            &tally,
            lower,
            upper,
            fr,
            fa,
            Some(applied),
            rejected,
        ));
    };

    Ok(NarrowingTrace {
        t_eer: d.t_eer(),
        target: score_value(target, n_bits),
        steps,
        stop_reason,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_dataset, AnomalySpec, CalibrationSpec};
    use crate::distributions::split_scores;
    use crate::matcher::compute_score_matrix;
    use crate::menagerie::{classify, Label};
    use crate::testutil::hand_matrix;
    use proptest::prelude::*;

    #[test]
    fn decisions() {
        let published = SafetyBand::new(0.6003, 0.9075).unwrap();
        assert_eq!(decide(0.70, &published), BandDecision::Undecidable);
        assert_eq!(decide(0.0, &published), BandDecision::Imposter);
        assert_eq!(decide(1.0, &published), BandDecision::Genuine);
        assert_eq!(decide(0.6003, &published), BandDecision::Undecidable);
        assert_eq!(decide(0.9075, &published), BandDecision::Undecidable);
    }

    #[test]
    fn band_bounds_are_validated() {
        assert!(SafetyBand::new(0.6, 0.5).is_err());
        assert!(SafetyBand::new(-0.1, 0.5).is_err());
        assert!(SafetyBand::new(0.5, 1.1).is_err());
        assert!(SafetyBand::new(0.5, 0.5).is_ok());
    }

    // A0 A1 | B0 B1: genuine 0.9 and 0.55, imposters 0.6, 0.3 and two
    // comparisons parked inside the band.
    fn four_templates() -> ScoreMatrix {
        hand_matrix(
            100,
            &[0, 0, 1, 1],
            57,
            &[(0, 1, 90), (2, 3, 55), (0, 2, 60), (0, 3, 30), (1, 3, 58)],
        )
    }

    #[test]
    fn hand_band_errors() {
        let m = four_templates();
        let e = band_errors(&m, &SafetyBand::new(0.56, 0.59).unwrap());
        assert_eq!((e.false_rejects, e.false_accepts), (1, 1));
        assert_eq!(e.per_template[2], ErrorCounts { fa: 1, fr: 1 });
        assert_eq!(e.per_template[3], ErrorCounts { fa: 0, fr: 1 });
        assert_eq!(e.per_template[0], ErrorCounts { fa: 1, fr: 0 });
        assert_eq!(e.per_template[1], ErrorCounts::default());
        assert_eq!(e.induced_frr(), 0.5);
        assert_eq!(e.induced_far(), 0.25);
    }

    #[test]
    fn maximal_band_has_no_errors() {
        let m = four_templates();
        let d = split_scores(&m).unwrap();
        let band = crate::distributions::maximal_safety_band(&d).unwrap();
        let e = band_errors(&m, &band);
        assert_eq!((e.false_accepts, e.false_rejects), (0, 0));
        assert!(e.per_template.iter().all(|c| *c == ErrorCounts::default()));
    }

    #[test]
    fn no_overlap_is_rejected() {
        let m = hand_matrix(100, &[0, 0, 1, 1], 40, &[(0, 1, 95), (2, 3, 90)]);
        let d = split_scores(&m).unwrap();
        assert!(matches!(
            narrow_balanced(&d, &m, &MenagerieParams::default()),
            Err(Error::NoOverlap { .. })
        ));
    }

    #[test]
    fn first_goat_pair_achieves_mgs() {
        let spec = CalibrationSpec {
            rows: 8,
            cols: 128,
            n_classes: 20,
            samples_per_class: 4,
            flip_rate: 0.2,
            block: 16,
            seed: 3,
            anomalies: vec![AnomalySpec::GoatClass {
                class_id: 4,
                strength: 1.8,
            }],
        };
        let m = compute_score_matrix(&generate_dataset(&spec).unwrap()).unwrap();
        let d = split_scores(&m).unwrap();
        assert!(d.has_overlap());
        let params = MenagerieParams {
            goat_min_fr: 1,
            ..Default::default()
        };
        let trace = narrow_balanced(&d, &m, &params).unwrap();
        let first = trace.steps.iter().find(|s| s.n_goats > 0).unwrap();
        let mgs_pairs: Vec<_> = m
            .genuine()
            .filter(|c| c.matches() == d.mgs_count())
            .collect();
        let mut expected: Vec<usize> = mgs_pairs
            .iter()
            .flat_map(|c| [c.i as usize, c.j as usize])
            .collect();
        expected.sort();
        expected.dedup();
        let goats: Vec<usize> = (0..m.n_templates() as usize)
            .filter(|&t| first.fr_counts[t] >= 1)
            .collect();
        assert_eq!(goats, expected);
    }

    fn overlapping_spec(seed: u64, p: f64, block: u32) -> CalibrationSpec {
        CalibrationSpec {
            rows: 4,
            cols: 64,
            n_classes: 8,
            samples_per_class: 3,
            flip_rate: p,
            block,
            seed,
            anomalies: vec![],
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn narrowing_invariants(seed in any::<u64>(), p in 0.15f64..0.35, block in prop::sample::select(vec![1u32, 4, 16]),
                                w in 1u32..3, g in 1u32..3, distinct in any::<bool>()) {
            let m = compute_score_matrix(&generate_dataset(&overlapping_spec(seed, p, block)).unwrap()).unwrap();
            let d = split_scores(&m).unwrap();
            prop_assume!(d.has_overlap());
            let params = MenagerieParams { wolf_min_fa: w, goat_min_fr: g, wolf_distinct_partners: distinct };
            let trace = narrow_balanced(&d, &m, &params).unwrap();
            let first = &trace.steps[0];
            prop_assert_eq!(first.band, SafetyBand::new(d.mgs(), d.mis()).unwrap());
            prop_assert_eq!((first.n_wolves, first.n_goats, first.n_lambs), (0, 0, 0));
            for pair in trace.steps.windows(2) {
                let (a, b) = (&pair[0], &pair[1]);
                prop_assert!(a.band.strictly_contains(&b.band));
                prop_assert!(b.band.lower <= trace.target && trace.target <= b.band.upper);
                prop_assert!(a.fa_counts.iter().zip(&b.fa_counts).all(|(x, y)| x <= y));
                prop_assert!(a.fr_counts.iter().zip(&b.fr_counts).all(|(x, y)| x <= y));
                prop_assert!(a.n_wolves <= b.n_wolves && a.n_goats <= b.n_goats && a.n_lambs <= b.n_lambs);
                if let Some(rejected) = b.rejected_gap {
                    prop_assert!(b.gap <= rejected);
                }
            }
            if trace.t_eer <= d.mis() {
                prop_assert_eq!(trace.target, trace.t_eer);
            }
            let last = trace.steps.last().unwrap();
            match trace.stop_reason {
                StopReason::Populated => prop_assert!(last.n_wolves > 0 && last.n_goats > 0),
                StopReason::ReachedTEer => {
                    prop_assert_eq!(last.band.lower, trace.target);
                    prop_assert_eq!(last.band.upper, trace.target);
                }
            }
            // incremental bookkeeping agrees with a fresh classification
            for step in trace.steps.iter().step_by(7).chain(std::iter::once(last)) {
                let report = classify(&m, &OperatingPoint::Band(step.band), &params).unwrap();
                let fa: Vec<u32> = report.templates.iter().map(|v| v.fa_count).collect();
                let fr: Vec<u32> = report.templates.iter().map(|v| v.fr_count).collect();
                prop_assert_eq!(&fa, &step.fa_counts);
                prop_assert_eq!(&fr, &step.fr_counts);
                prop_assert_eq!(report.wolves().len(), step.n_wolves);
                prop_assert_eq!(report.goats().len(), step.n_goats);
                prop_assert_eq!(report.lambs().len(), step.n_lambs);
                let errors = band_errors(&m, &step.band);
                prop_assert_eq!(errors.induced_far(), step.induced_far);
                prop_assert_eq!(errors.induced_frr(), step.induced_frr);
            }
        }

        #[test]
        fn degenerate_band_at_t_eer(seed in any::<u64>(), p in 0.1f64..0.35) {
            let m = compute_score_matrix(&generate_dataset(&overlapping_spec(seed, p, 4)).unwrap()).unwrap();
            let d = split_scores(&m).unwrap();
            let t = d.t_eer();
            let e = band_errors(&m, &SafetyBand::new(t, t).unwrap());
            let t_num = d.eer_point().threshold;
            prop_assert_eq!(e.false_accepts, d.false_accepts_at(t_num + 1));
            prop_assert_eq!(e.false_rejects, d.false_rejects_at(t_num));
            prop_assert_eq!(e.induced_frr(), crate::distributions::frr(&d, t));
        }

        #[test]
        fn maximal_band_is_all_sheep(seed in any::<u64>(), p in 0.1f64..0.35) {
            let m = compute_score_matrix(&generate_dataset(&overlapping_spec(seed, p, 16)).unwrap()).unwrap();
            let d = split_scores(&m).unwrap();
            if let Some(band) = crate::distributions::maximal_safety_band(&d) {
                let r = classify(&m, &OperatingPoint::Band(band), &MenagerieParams::default()).unwrap();
                prop_assert!(r.templates.iter().all(|v| v.labels == [Label::Sheep]));
            }
        }
    }

    #[test]
    fn trace_csv_header() {
        let spec = overlapping_spec(1, 0.3, 4);
        let m = compute_score_matrix(&generate_dataset(&spec).unwrap()).unwrap();
        let d = split_scores(&m).unwrap();
        let trace = narrow_balanced(&d, &m, &MenagerieParams::default()).unwrap();
        let mut out = Vec::new();
        trace.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next(),
            Some("step,lower,upper,induced_far,induced_frr,n_wolves,n_goats,n_lambs")
        );
        assert!(lines.next().unwrap().starts_with("0,"));
        assert_eq!(text.lines().count(), trace.steps.len() + 1);
    }
}
