//! Sheep/goat/lamb/wolf classification of templates and users.
//!
//! A template is a goat when at least `goat_min_fr` of its genuine
//! comparisons are falsely rejected. Every false accept contributes one wolf
//! role and one lamb role: the endpoint that hunts more is the wolf. Which
//! endpoint "hunts more" is a convention, since a similarity score is
//! symmetric. Here it is the endpoint with more false accepts at the EER
//! threshold of the whole matrix, ties going to the lower template id. The
//! ranking is a property of the matrix rather than of the operating point,
//! so moving to a looser operating point only ever adds roles and labels.
//!
//! Degrees are defuzzified memberships in `[0, 1]`; labels are crisp cuts of
//! the same counts and may overlap (a template can be a wolf and a goat).

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{CalibrationSpec, Dataset};
use crate::distributions::{split_scores, DistributionSummary};
use crate::error::{Error, Result};
use crate::matcher::{Comparison, ScoreMatrix};
use crate::safety_band::{narrow_balanced, NarrowingTrace, OperatingPoint, SafetyBand};

pub const ROLE_CONVENTION: &str = "each false accept gives one wolf role and one lamb role; \
the wolf is the endpoint with more false accepts at the EER threshold, ties to the lower template id";

/// Defuzzification knobs for the fuzzy quantifiers of the menagerie.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MenagerieParams {
    /// Wolf roles needed to qualify as a wolf.
    pub wolf_min_fa: u32,
    /// False rejects needed to qualify as a goat.
    pub goat_min_fr: u32,
    /// Count distinct partner classes instead of raw wolf roles.
    pub wolf_distinct_partners: bool,
}

impl Default for MenagerieParams {
    fn default() -> Self {
        MenagerieParams {
            wolf_min_fa: 2,
            goat_min_fr: 2,
            wolf_distinct_partners: true,
        }
    }
}

impl MenagerieParams {
    pub fn validate(&self) -> Result<()> {
        if self.wolf_min_fa == 0 || self.goat_min_fr == 0 {
            return Err(Error::Precondition(
                "wolf_min_fa and goat_min_fr must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Sheep,
    Goat,
    Lamb,
    Wolf,
}

impl Label {
    pub const ALL: [Label; 4] = [Label::Sheep, Label::Goat, Label::Lamb, Label::Wolf];

    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Sheep => "sheep",
            Label::Goat => "goat",
            Label::Lamb => "lamb",
            Label::Wolf => "wolf",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Degrees {
    pub goat: f64,
    pub wolf: f64,
    pub lamb: f64,
    pub sheep: f64,
}

impl Default for Degrees {
    fn default() -> Self {
        Degrees {
            goat: 0.0,
            wolf: 0.0,
            lamb: 0.0,
            sheep: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateVerdict {
    #[serde(rename = "id")]
    pub template_id: u32,
    #[serde(rename = "class")]
    pub class_id: u32,
    #[serde(rename = "fa")]
    pub fa_count: u32,
    #[serde(rename = "fr")]
    pub fr_count: u32,
    /// Genuine comparisons this template takes part in.
    pub n_genuine: u32,
    #[serde(rename = "wolf_roles")]
    pub wolf_role_count: u32,
    /// Distinct classes among the lambs this template preys on.
    pub wolf_partner_classes: u32,
    #[serde(rename = "lamb_roles")]
    pub lamb_role_count: u32,
    pub labels: Vec<Label>,
    pub degrees: Degrees,
}

impl TemplateVerdict {
    pub fn has(&self, label: Label) -> bool {
        self.labels.contains(&label)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserVerdict {
    #[serde(rename = "id")]
    pub user_id: u32,
    pub templates: Vec<u32>,
    pub labels: Vec<Label>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    First,
    Last,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MenagerieReport {
    pub operating_point: OperatingPoint,
    pub params: MenagerieParams,
    pub role_convention: String,
    pub provenance: Option<Provenance>,
    pub calibration: Option<CalibrationSpec>,
    pub templates: Vec<TemplateVerdict>,
    pub users: Vec<UserVerdict>,
}

impl MenagerieReport {
    /// Template ids carrying `label`.
    pub fn template_set(&self, label: Label) -> BTreeSet<u32> {
        self.templates
            .iter()
            .filter(|v| v.has(label))
            .map(|v| v.template_id)
            .collect()
    }

    /// User ids carrying `label`.
    pub fn user_set(&self, label: Label) -> BTreeSet<u32> {
        self.users
            .iter()
            .filter(|u| u.labels.contains(&label))
            .map(|u| u.user_id)
            .collect()
    }

    pub fn wolves(&self) -> BTreeSet<u32> {
        self.template_set(Label::Wolf)
    }

    pub fn goats(&self) -> BTreeSet<u32> {
        self.template_set(Label::Goat)
    }

    pub fn lambs(&self) -> BTreeSet<u32> {
        self.template_set(Label::Lamb)
    }

    pub fn is_all_sheep(&self) -> bool {
        self.templates.iter().all(|v| v.labels == [Label::Sheep])
    }

    /// Attaches user verdicts and the dataset's calibration.
    pub fn with_dataset(mut self, ds: &Dataset) -> Result<Self> {
        self.users = lift_to_users(&self, ds)?;
        self.calibration = ds.spec().cloned();
        Ok(self)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: MenagerieReport =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("report: {e}")))?;
        for (k, v) in report.templates.iter().enumerate() {
            if v.template_id as usize != k {
                return Err(Error::Format(format!(
                    "report templates must be listed by id; position {k} holds {}",
                    v.template_id
                )));
            }
        }
        Ok(report)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// False accepts per template at the EER threshold of `m`. All zeros when
/// the matrix lacks genuine or imposter comparisons.
pub fn hunting_rank(m: &ScoreMatrix) -> Vec<u64> {
    let mut rank = vec![0u64; m.n_templates() as usize];
    if let Ok(d) = split_scores(m) {
        let t = d.eer_point().threshold;
        for c in m.imposter().filter(|c| c.matches() >= t) {
            rank[c.i as usize] += 1;
            rank[c.j as usize] += 1;
        }
    }
    rank
}

/// Incremental role and label bookkeeping shared by [`classify`] and the
/// narrowing procedure.
pub(crate) struct RoleTally<'a> {
    classes: &'a [u32],
    rank: Vec<u64>,
    params: MenagerieParams,
    fa: Vec<u32>,
    fr: Vec<u32>,
    wolf_roles: Vec<u32>,
    lamb_roles: Vec<u32>,
    partners: Vec<BTreeSet<u32>>,
    wolf: Vec<bool>,
    goat: Vec<bool>,
    lamb: Vec<bool>,
    n_wolves: usize,
    n_goats: usize,
    n_lambs: usize,
}

impl<'a> RoleTally<'a> {
    pub(crate) fn new(m: &'a ScoreMatrix, rank: Vec<u64>, params: MenagerieParams) -> Self {
        let n = m.n_templates() as usize;
        RoleTally {
            classes: m.classes(),
            rank,
            params,
            fa: vec![0; n],
            fr: vec![0; n],
            wolf_roles: vec![0; n],
            lamb_roles: vec![0; n],
            partners: vec![BTreeSet::new(); n],
            wolf: vec![false; n],
            goat: vec![false; n],
            lamb: vec![false; n],
            n_wolves: 0,
            n_goats: 0,
            n_lambs: 0,
        }
    }

    fn outranks(&self, a: usize, b: usize) -> bool {
        self.rank[a] > self.rank[b] || (self.rank[a] == self.rank[b] && a < b)
    }

    pub(crate) fn add_false_reject(&mut self, c: &Comparison) {
        for t in [c.i as usize, c.j as usize] {
            self.fr[t] += 1;
            if !self.goat[t] && self.fr[t] >= self.params.goat_min_fr {
                self.goat[t] = true;
                self.n_goats += 1;
            }
        }
    }

    pub(crate) fn add_false_accept(&mut self, c: &Comparison) {
        let (i, j) = (c.i as usize, c.j as usize);
        self.fa[i] += 1;
        self.fa[j] += 1;
        let (wolf, lamb) = if self.outranks(i, j) { (i, j) } else { (j, i) };
        self.wolf_roles[wolf] += 1;
        self.partners[wolf].insert(self.classes[lamb]);
        self.lamb_roles[lamb] += 1;

        let qualifying = if self.params.wolf_distinct_partners {
            self.partners[wolf].len() as u32
        } else {
            self.wolf_roles[wolf]
        };
        if !self.wolf[wolf] && qualifying >= self.params.wolf_min_fa {
            self.wolf[wolf] = true;
            self.n_wolves += 1;
        }
        if !self.lamb[lamb] {
            self.lamb[lamb] = true;
            self.n_lambs += 1;
        }
    }

    pub(crate) fn fa_counts(&self) -> &[u32] {
        &self.fa
    }

    pub(crate) fn fr_counts(&self) -> &[u32] {
        &self.fr
    }

    pub(crate) fn n_wolves(&self) -> usize {
        self.n_wolves
    }

    pub(crate) fn n_goats(&self) -> usize {
        self.n_goats
    }

    pub(crate) fn n_lambs(&self) -> usize {
        self.n_lambs
    }

    fn verdicts(&self, n_genuine: &[u32]) -> Vec<TemplateVerdict> {
        (0..self.fa.len())
            .map(|t| {
                let mut labels = Vec::new();
                if self.goat[t] {
                    labels.push(Label::Goat);
                }
                if self.lamb[t] {
                    labels.push(Label::Lamb);
                }
                if self.wolf[t] {
                    labels.push(Label::Wolf);
                }
                if labels.is_empty() {
                    labels.push(Label::Sheep);
                }
                TemplateVerdict {
                    template_id: t as u32,
                    class_id: self.classes[t],
                    fa_count: self.fa[t],
                    fr_count: self.fr[t],
                    n_genuine: n_genuine[t],
                    wolf_role_count: self.wolf_roles[t],
                    wolf_partner_classes: self.partners[t].len() as u32,
                    lamb_role_count: self.lamb_roles[t],
                    labels,
                    degrees: Degrees::default(),
                }
            })
            .collect()
    }
}

/// Classifies every template of `m` at the given operating point.
pub fn classify(
    m: &ScoreMatrix,
    op: &OperatingPoint,
    params: &MenagerieParams,
) -> Result<MenagerieReport> {
    params.validate()?;
    if m.comparisons().is_empty() {
        return Err(Error::Precondition("empty score matrix".into()));
    }
    if let OperatingPoint::Band(b) = op {
        SafetyBand::new(b.lower, b.upper)?;
    }
    let mut tally = RoleTally::new(m, hunting_rank(m), *params);
    let mut n_genuine = vec![0u32; m.n_templates() as usize];
    for c in m.comparisons() {
        if c.is_genuine() {
            n_genuine[c.i as usize] += 1;
            n_genuine[c.j as usize] += 1;
            if op.is_false_reject(c) {
                tally.add_false_reject(c);
            }
        } else if op.is_false_accept(c) {
            tally.add_false_accept(c);
        }
    }
    let report = MenagerieReport {
        operating_point: *op,
        params: *params,
        role_convention: ROLE_CONVENTION.to_string(),
        provenance: None,
        calibration: None,
        templates: tally.verdicts(&n_genuine),
        users: Vec::new(),
    };
    Ok(membership_degrees(report))
}

/// Fills the fuzzy degrees from the counts:
/// goat = fr / genuine comparisons, wolf and lamb = roles / max roles over
/// all templates, sheep = (1 - goat)(1 - wolf)(1 - lamb).
pub fn membership_degrees(mut report: MenagerieReport) -> MenagerieReport {
    let max_wolf = report
        .templates
        .iter()
        .map(|v| v.wolf_role_count)
        .max()
        .unwrap_or(0);
    let max_lamb = report
        .templates
        .iter()
        .map(|v| v.lamb_role_count)
        .max()
        .unwrap_or(0);
    let frac = |num: u32, den: u32| {
        if den == 0 {
            0.0
        } else {
            f64::from(num) / f64::from(den)
        }
    };
    for v in &mut report.templates {
        let goat = frac(v.fr_count, v.n_genuine);
        let wolf = frac(v.wolf_role_count, max_wolf);
        let lamb = frac(v.lamb_role_count, max_lamb);
        v.degrees = Degrees {
            goat,
            wolf,
            lamb,
            sheep: (1.0 - goat) * (1.0 - wolf) * (1.0 - lamb),
        };
    }
    report
}

/// Marginal templates together with the narrowing trace that found them.
/// Without overlap the trace is `None` and the report is taken on the
/// undecidable gap `[MIS, mGS]`, where every template is a sheep.
pub fn first_templates_with_trace(
    d: &DistributionSummary,
    m: &ScoreMatrix,
    params: &MenagerieParams,
) -> Result<(MenagerieReport, Option<NarrowingTrace>)> {
    let (op, trace) = if d.has_overlap() {
        let trace = narrow_balanced(d, m, params)?;
        (OperatingPoint::Band(trace.final_band()), Some(trace))
    } else {
        let gap = SafetyBand::new(d.mis(), d.mgs())?;
        (OperatingPoint::Band(gap), None)
    };
    let mut report = classify(m, &op, params)?;
    report.provenance = Some(Provenance::First);
    Ok((report, trace))
}

/// The first (marginal) wolves, lambs and goats met while the maximal band
/// narrows toward the EER threshold.
pub fn first_templates(
    d: &DistributionSummary,
    m: &ScoreMatrix,
    params: &MenagerieParams,
) -> Result<MenagerieReport> {
    first_templates_with_trace(d, m, params).map(|(report, _)| report)
}

/// The last wolves, lambs and goats: classification at the EER threshold.
pub fn last_templates(
    d: &DistributionSummary,
    m: &ScoreMatrix,
    params: &MenagerieParams,
) -> Result<MenagerieReport> {
    let mut report = classify(m, &OperatingPoint::Threshold { t: d.t_eer() }, params)?;
    report.provenance = Some(Provenance::Last);
    Ok(report)
}

/// A user carries a label when any of its templates does; a user is a
/// sheep only when all of its templates are.
pub fn lift_to_users(report: &MenagerieReport, ds: &Dataset) -> Result<Vec<UserVerdict>> {
    let mut users: BTreeMap<u32, (Vec<u32>, BTreeSet<Label>)> = BTreeMap::new();
    for v in &report.templates {
        let rec = ds.record(v.template_id).ok_or_else(|| {
            Error::Precondition(format!("template {} is not in the dataset", v.template_id))
        })?;
        let entry = users.entry(rec.user_id).or_default();
        entry.0.push(v.template_id);
        entry
            .1
            .extend(v.labels.iter().filter(|&&l| l != Label::Sheep));
    }
    if report.templates.len() != ds.len() {
        return Err(Error::Precondition(format!(
            "report covers {} templates, dataset has {}",
            report.templates.len(),
            ds.len()
        )));
    }
    Ok(users
        .into_iter()
        .map(|(user_id, (templates, labels))| {
            let mut labels: Vec<Label> = labels.into_iter().collect();
            if labels.is_empty() {
                labels.push(Label::Sheep);
            }
            UserVerdict {
                user_id,
                templates,
                labels,
            }
        })
        .collect())
}

/// `|A ∩ B| / |A ∪ B|`, with two empty sets counting as identical.
pub fn jaccard(a: &BTreeSet<u32>, b: &BTreeSet<u32>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Template,
    User,
}

impl Level {
    pub fn as_str(&self) -> &'static str {
        match self {
            Level::Template => "template",
            Level::User => "user",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairJaccard {
    pub calib_a: String,
    pub calib_b: String,
    pub label: Label,
    pub level: Level,
    pub jaccard: f64,
}

/// How many calibrations gave each template each label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Persistence {
    pub id: u32,
    pub sheep: u32,
    pub goat: u32,
    pub lamb: u32,
    pub wolf: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub calibrations: Vec<String>,
    pub pairs: Vec<PairJaccard>,
    pub persistence: Vec<Persistence>,
}

impl StabilityReport {
    /// Mean pairwise Jaccard for one label and level; `None` if absent.
    pub fn mean_jaccard(&self, label: Label, level: Level) -> Option<f64> {
        let values: Vec<f64> = self
            .pairs
            .iter()
            .filter(|p| p.label == label && p.level == level)
            .map(|p| p.jaccard)
            .collect();
        (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
    }

    /// `calib_a,calib_b,label,level,jaccard`
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["calib_a", "calib_b", "label", "level", "jaccard"])?;
        for p in &self.pairs {
            w.write_record([
                p.calib_a.as_str(),
                p.calib_b.as_str(),
                p.label.as_str(),
                p.level.as_str(),
                &p.jaccard.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

const COMPARED_LABELS: [Label; 2] = [Label::Wolf, Label::Goat];

/// Pairwise stability of wolf and goat sets across calibrations whose
/// template ids denote the same templates.
pub fn compare_calibrations(reports: &[(String, MenagerieReport)]) -> Result<StabilityReport> {
    if reports.len() < 2 {
        return Err(Error::Precondition(
            "need at least two reports to compare".into(),
        ));
    }
    let (_, reference) = &reports[0];
    let classes: Vec<u32> = reference.templates.iter().map(|v| v.class_id).collect();
    let user_map = |r: &MenagerieReport| -> Vec<(u32, Vec<u32>)> {
        r.users
            .iter()
            .map(|u| (u.user_id, u.templates.clone()))
            .collect()
    };
    for (name, r) in reports {
        let other: Vec<u32> = r.templates.iter().map(|v| v.class_id).collect();
        if other != classes {
            return Err(Error::Precondition(format!(
                "report {name:?} does not share the template id space of {:?}",
                reports[0].0
            )));
        }
        if !r.users.is_empty() && !reference.users.is_empty() && user_map(r) != user_map(reference)
        {
            return Err(Error::Precondition(format!(
                "report {name:?} assigns templates to different users"
            )));
        }
    }
    let with_users = reports.iter().all(|(_, r)| !r.users.is_empty());

    let mut pairs = Vec::new();
    for a in 0..reports.len() {
        for b in a + 1..reports.len() {
            let (na, ra) = &reports[a];
            let (nb, rb) = &reports[b];
            for label in COMPARED_LABELS {
                let mut levels = vec![(
                    Level::Template,
                    ra.template_set(label),
                    rb.template_set(label),
                )];
                if with_users {
                    levels.push((Level::User, ra.user_set(label), rb.user_set(label)));
                }
                for (level, sa, sb) in levels {
                    pairs.push(PairJaccard {
                        calib_a: na.clone(),
                        calib_b: nb.clone(),
                        label,
                        level,
                        jaccard: jaccard(&sa, &sb),
                    });
                }
            }
        }
    }

    let persistence = (0..classes.len())
        .map(|t| {
            let count = |label| {
                reports
                    .iter()
                    .filter(|(_, r)| r.templates[t].has(label))
                    .count() as u32
            };
            Persistence {
                id: t as u32,
                sheep: count(Label::Sheep),
                goat: count(Label::Goat),
                lamb: count(Label::Lamb),
                wolf: count(Label::Wolf),
            }
        })
        .collect();

    Ok(StabilityReport {
        calibrations: reports.iter().map(|(n, _)| n.clone()).collect(),
        pairs,
        persistence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generate_dataset;
    use crate::matcher::compute_score_matrix;
    use crate::testutil::hand_matrix;

    // classes A = {0, 1}, B = {2, 3}, C = {4, 5}; template 0 reaches into B and C
    fn hunter() -> ScoreMatrix {
        hand_matrix(
            100,
            &[0, 0, 1, 1, 2, 2],
            40,
            &[(0, 1, 95), (2, 3, 95), (4, 5, 95), (0, 2, 80), (0, 4, 80)],
        )
    }

    fn at(t: f64) -> OperatingPoint {
        OperatingPoint::Threshold { t }
    }

    #[test]
    fn hunter_is_a_wolf_and_its_victims_are_lambs() {
        let r = classify(&hunter(), &at(0.7), &MenagerieParams::default()).unwrap();
        assert_eq!(r.wolves(), BTreeSet::from([0]));
        assert_eq!(r.lambs(), BTreeSet::from([2, 4]));
        assert!(r.goats().is_empty());
        let v = &r.templates[0];
        assert_eq!(
            (
                v.fa_count,
                v.wolf_role_count,
                v.wolf_partner_classes,
                v.lamb_role_count
            ),
            (2, 2, 2, 0)
        );
        assert_eq!(v.labels, vec![Label::Wolf]);
        assert_eq!(r.templates[1].labels, vec![Label::Sheep]);
        assert_eq!(r.templates[2].degrees.lamb, 1.0);
        assert_eq!(v.degrees.wolf, 1.0);
        assert_eq!(v.degrees.sheep, 0.0);
        assert_eq!(r.templates[5].degrees.sheep, 1.0);

        // a single partner class is not enough for W = 2
        let m = hand_matrix(
            100,
            &[0, 0, 1, 1, 2, 2],
            40,
            &[(0, 1, 95), (2, 3, 95), (4, 5, 95), (0, 2, 80), (0, 3, 80)],
        );
        let r = classify(&m, &at(0.7), &MenagerieParams::default()).unwrap();
        assert!(r.wolves().is_empty());
        assert_eq!(r.templates[0].wolf_role_count, 2);
        let raw = MenagerieParams {
            wolf_distinct_partners: false,
            ..Default::default()
        };
        assert_eq!(
            classify(&m, &at(0.7), &raw).unwrap().wolves(),
            BTreeSet::from([0])
        );
    }

    #[test]
    fn roles_follow_hunting_rank() {
        // one hunter with six accepted imposters next to a ring of twelve
        // lesser templates with two each
        let n = 19u32;
        let classes: Vec<u32> = (0..n).collect();
        let mut scores = vec![];
        for k in 1..=6 {
            scores.push((0, k, 80));
        }
        for k in 0..12 {
            let (a, b) = (7 + k, 7 + (k + 1) % 12);
            scores.push((a.min(b), a.max(b), 80));
        }
        let m = hand_matrix(100, &classes, 40, &scores);
        let mut rank = vec![0u64; n as usize];
        rank[0] = 6;
        let mut tally = RoleTally::new(
            &m,
            rank,
            MenagerieParams {
                wolf_min_fa: 3,
                ..Default::default()
            },
        );
        for c in m.imposter().filter(|c| at(0.7).is_false_accept(c)) {
            tally.add_false_accept(c);
        }
        assert_eq!(tally.n_wolves(), 1);
        assert_eq!(tally.fa_counts()[0], 6);
        assert!(tally.fa_counts()[7..].iter().all(|&c| c == 2));

        let mut tally = RoleTally::new(&m, vec![0; n as usize], MenagerieParams::default());
        for c in m.imposter().filter(|c| at(0.7).is_false_accept(c)) {
            tally.add_false_accept(c);
        }
        let v = tally.verdicts(&vec![0; n as usize]);
        // with equal rank the lower id hunts
        assert_eq!(v[0].wolf_role_count, 6);
        assert!(v[1..7]
            .iter()
            .all(|t| t.lamb_role_count == 1 && t.wolf_role_count == 0));
        assert!(v[7..]
            .iter()
            .any(|t| t.wolf_role_count == 2 && t.has(Label::Wolf)));
    }

    #[test]
    fn role_totals_match_false_accepts() {
        for seed in 0..10 {
            let spec = CalibrationSpec {
                rows: 4,
                cols: 64,
                n_classes: 10,
                samples_per_class: 3,
                flip_rate: 0.25,
                block: 8,
                seed,
                anomalies: vec![],
            };
            let m = compute_score_matrix(&generate_dataset(&spec).unwrap()).unwrap();
            let d = split_scores(&m).unwrap();
            let r = classify(&m, &at(d.t_eer()), &MenagerieParams::default()).unwrap();
            let wolf: u64 = r
                .templates
                .iter()
                .map(|v| u64::from(v.wolf_role_count))
                .sum();
            let lamb: u64 = r
                .templates
                .iter()
                .map(|v| u64::from(v.lamb_role_count))
                .sum();
            let fa = d.false_accepts_at(d.eer_point().threshold) as u64;
            assert_eq!((wolf, lamb), (fa, fa));
            let fa_sum: u64 = r.templates.iter().map(|v| u64::from(v.fa_count)).sum();
            assert_eq!(fa_sum, 2 * fa);
        }
    }

    #[test]
    fn goats_and_degrees() {
        let m = hand_matrix(
            100,
            &[0, 0, 0, 1, 1],
            40,
            &[(0, 1, 95), (0, 2, 50), (1, 2, 55), (3, 4, 90)],
        );
        let r = classify(&m, &at(0.6), &MenagerieParams::default()).unwrap();
        assert_eq!(r.goats(), BTreeSet::from([2]));
        assert_eq!(r.templates[0].fr_count, 1);
        assert_eq!(r.templates[2].degrees.goat, 1.0);
        assert_eq!(r.templates[0].degrees.goat, 0.5);
        assert_eq!(r.templates[0].degrees.sheep, 0.5);
        assert_eq!(r.templates[3].n_genuine, 1);
        let r = classify(
            &m,
            &at(0.6),
            &MenagerieParams {
                goat_min_fr: 1,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(r.goats(), BTreeSet::from([0, 1, 2]));
    }

    #[test]
    fn params_are_validated() {
        let bad = MenagerieParams {
            wolf_min_fa: 0,
            ..Default::default()
        };
        assert!(classify(&hunter(), &at(0.5), &bad).is_err());
    }

    fn small_dataset() -> Dataset {
        generate_dataset(&CalibrationSpec {
            rows: 4,
            cols: 64,
            n_classes: 6,
            samples_per_class: 3,
            flip_rate: 0.3,
            block: 4,
            seed: 11,
            anomalies: vec![],
        })
        .unwrap()
    }

    #[test]
    fn users_inherit_labels() {
        let ds = small_dataset();
        let m = compute_score_matrix(&ds).unwrap();
        let d = split_scores(&m).unwrap();
        let r = last_templates(&d, &m, &MenagerieParams::default())
            .unwrap()
            .with_dataset(&ds)
            .unwrap();
        assert_eq!(r.users.len(), 3);
        for u in &r.users {
            assert_eq!(u.templates.len(), 6);
            for label in [Label::Wolf, Label::Goat, Label::Lamb] {
                let any = u
                    .templates
                    .iter()
                    .any(|&t| r.templates[t as usize].has(label));
                assert_eq!(u.labels.contains(&label), any);
            }
            let all_sheep = u
                .templates
                .iter()
                .all(|&t| r.templates[t as usize].labels == [Label::Sheep]);
            assert_eq!(u.labels == [Label::Sheep], all_sheep);
        }
        let mut short = r.clone();
        short.templates.pop();
        assert!(lift_to_users(&short, &ds).is_err());
    }

    #[test]
    fn report_json_round_trip() {
        let ds = small_dataset();
        let m = compute_score_matrix(&ds).unwrap();
        let d = split_scores(&m).unwrap();
        let r = first_templates(&d, &m, &MenagerieParams::default())
            .unwrap()
            .with_dataset(&ds)
            .unwrap();
        let text = r.to_json().unwrap();
        let back = MenagerieReport::from_json(&text).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.to_json().unwrap(), text);
        assert!(text.contains("\"role_convention\""));
    }

    #[test]
    fn first_without_overlap_is_all_sheep() {
        let m = hunter();
        let d = split_scores(&m).unwrap();
        assert!(!d.has_overlap());
        let (r, trace) = first_templates_with_trace(&d, &m, &MenagerieParams::default()).unwrap();
        assert!(trace.is_none());
        assert!(r.is_all_sheep());
        assert_eq!(r.provenance, Some(Provenance::First));
        let last = last_templates(&d, &m, &MenagerieParams::default()).unwrap();
        assert!(last.is_all_sheep());
    }

    #[test]
    fn jaccard_values() {
        let a = BTreeSet::from([1, 2, 3]);
        let b = BTreeSet::from([2, 3, 4]);
        assert_eq!(jaccard(&a, &b), 0.5);
        assert_eq!(jaccard(&a, &a), 1.0);
        assert_eq!(jaccard(&BTreeSet::new(), &BTreeSet::new()), 1.0);
        assert_eq!(jaccard(&a, &BTreeSet::new()), 0.0);
    }

    #[test]
    fn comparing_calibrations() {
        let params = MenagerieParams::default();
        let a = classify(&hunter(), &at(0.7), &params).unwrap();
        let b = classify(&hunter(), &at(0.9), &params).unwrap();
        let s = compare_calibrations(&[("a".into(), a.clone()), ("b".into(), b.clone())]).unwrap();
        assert_eq!(s.mean_jaccard(Label::Wolf, Level::Template), Some(0.0));
        assert_eq!(s.mean_jaccard(Label::Goat, Level::Template), Some(1.0));
        assert_eq!(s.mean_jaccard(Label::Wolf, Level::User), None);
        assert_eq!(s.persistence[0].wolf, 1);
        assert_eq!(s.persistence[1].sheep, 2);
        let mut out = Vec::new();
        s.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("calib_a,calib_b,label,level,jaccard\n"));
        assert!(text.contains("a,b,wolf,template,0"));

        assert!(compare_calibrations(&[("a".into(), a.clone())]).is_err());
        let other = classify(&four(), &at(0.7), &params).unwrap();
        assert!(compare_calibrations(&[("a".into(), a), ("o".into(), other)]).is_err());
    }

    fn four() -> ScoreMatrix {
        hand_matrix(100, &[0, 0, 1, 1], 40, &[(0, 1, 95), (2, 3, 95)])
    }
}
