//! Binary iris templates, synthetic dataset generation and the dataset file
//! format.
//!
//! Bits are packed most-significant-first: bit `k` lives in byte `k / 8` at
//! position `7 - k % 8`, and bit `k` corresponds to row `k / cols`, column
//! `k % cols`. The hex serialization is the lowercase hex of those bytes.
//!
//! Synthetic data comes from a ChaCha8 stream seeded with
//! `ChaCha8Rng::seed_from_u64(seed)`, which produces the same output on every
//! platform. The stream is consumed in a fixed order (see
//! [`generate_dataset`]) so that a [`CalibrationSpec`] fully determines its
//! dataset.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Radial x angular resolution of an iris code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CodeShape {
    pub rows: u32,
    pub cols: u32,
}

impl CodeShape {
    /// 256x16 codes (4096 bits).
    pub const LARGE: CodeShape = CodeShape {
        rows: 16,
        cols: 256,
    };
    /// 128x8 codes (1024 bits).
    pub const MEDIUM: CodeShape = CodeShape { rows: 8, cols: 128 };
    /// 64x4 codes (256 bits).
    pub const SMALL: CodeShape = CodeShape { rows: 4, cols: 64 };
    pub const PRESETS: [CodeShape; 3] = [Self::LARGE, Self::MEDIUM, Self::SMALL];

    pub fn new(rows: u32, cols: u32) -> Result<Self> {
        let shape = CodeShape { rows, cols };
        shape.validate()?;
        Ok(shape)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: &str| Error::InvalidDimensions {
            rows: self.rows,
            cols: self.cols,
            reason: reason.to_string(),
        };
        if self.rows == 0 || self.cols == 0 {
            return Err(invalid("rows and cols must be positive"));
        }
        let bits = u64::from(self.rows) * u64::from(self.cols);
        if bits % 8 != 0 {
            return Err(invalid("bit count must be a multiple of 8"));
        }
        if bits > u64::from(u32::MAX) {
            return Err(invalid("bit count does not fit in 32 bits"));
        }
        Ok(())
    }

    pub fn n_bits(&self) -> u32 {
        self.rows * self.cols
    }

    pub fn n_bytes(&self) -> usize {
        self.n_bits() as usize / 8
    }
}

impl std::fmt::Display for CodeShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        // Reported as angular x radial, the way iris code sizes are usually quoted.
        write!(f, "{}x{}", self.cols, self.rows)
    }
}

/// A fixed-size packed binary template.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IrisCode {
    shape: CodeShape,
    bytes: Vec<u8>,
}

impl IrisCode {
    pub fn zeros(shape: CodeShape) -> Result<Self> {
        shape.validate()?;
        Ok(IrisCode {
            shape,
            bytes: vec![0; shape.n_bytes()],
        })
    }

    pub fn from_bytes(shape: CodeShape, bytes: Vec<u8>) -> Result<Self> {
        shape.validate()?;
        if bytes.len() != shape.n_bytes() {
            return Err(Error::DimensionMismatch(format!(
                "{} bytes supplied for a {}-bit code",
                bytes.len(),
                shape.n_bits()
            )));
        }
        Ok(IrisCode { shape, bytes })
    }

    pub fn from_bits(shape: CodeShape, bits: &[bool]) -> Result<Self> {
        let mut code = Self::zeros(shape)?;
        if bits.len() != shape.n_bits() as usize {
            return Err(Error::DimensionMismatch(format!(
                "{} bits supplied for a {}-bit code",
                bits.len(),
                shape.n_bits()
            )));
        }
        for (k, &b) in bits.iter().enumerate() {
            code.set_bit(k, b);
        }
        Ok(code)
    }

    /// Parses the lowercase hex form; the length must be exactly `n_bits / 4`.
    pub fn from_hex(shape: CodeShape, text: &str) -> Result<Self> {
        shape.validate()?;
        let expected = shape.n_bits() as usize / 4;
        if text.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "hex payload has {} characters, expected {expected} for {}x{} bits",
                text.len(),
                shape.rows,
                shape.cols
            )));
        }
        if !text
            .bytes()
            .all(|c| c.is_ascii_digit() || (b'a'..=b'f').contains(&c))
        {
            return Err(Error::Format(
                "template hex must contain only lowercase hex digits".into(),
            ));
        }
        let bytes = hex::decode(text).map_err(|e| Error::Format(e.to_string()))?;
        Self::from_bytes(shape, bytes)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.bytes)
    }

    pub fn shape(&self) -> CodeShape {
        self.shape
    }

    pub fn n_bits(&self) -> u32 {
        self.shape.n_bits()
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn bit(&self, k: usize) -> bool {
        assert!(k < self.n_bits() as usize, "bit index {k} out of range");
        self.bytes[k / 8] >> (7 - k % 8) & 1 == 1
    }

    pub fn bit_at(&self, row: u32, col: u32) -> bool {
        assert!(row < self.shape.rows && col < self.shape.cols);
        self.bit((row * self.shape.cols + col) as usize)
    }

    pub fn set_bit(&mut self, k: usize, value: bool) {
        assert!(k < self.n_bits() as usize, "bit index {k} out of range");
        let mask = 1u8 << (7 - k % 8);
        if value {
            self.bytes[k / 8] |= mask;
        } else {
            self.bytes[k / 8] &= !mask;
        }
    }

    pub fn complement(&self) -> IrisCode {
        IrisCode {
            shape: self.shape,
            bytes: self.bytes.iter().map(|b| !b).collect(),
        }
    }
}

/// One stored template: a code owned by an eye (`class_id`) owned by a user.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateRecord {
    pub template_id: u32,
    pub class_id: u32,
    pub user_id: u32,
    pub code: IrisCode,
}

/// A planted irregularity used to seed known goats and wolves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnomalySpec {
    /// Multiplies the flip rate of one class by `strength`.
    GoatClass { class_id: u32, strength: f64 },
    /// Copies a `strength` fraction of the prototype blocks of `classes[0]`
    /// into the prototype of `classes[1]`.
    WolfLambPair { classes: [u32; 2], strength: f64 },
}

/// Everything needed to regenerate a synthetic dataset bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSpec {
    pub rows: u32,
    pub cols: u32,
    pub n_classes: u32,
    pub samples_per_class: u32,
    /// Per-bit probability that a sample differs from its class prototype.
    pub flip_rate: f64,
    /// Number of consecutive bits sharing one prototype coin flip.
    pub block: u32,
    pub seed: u64,
    #[serde(default)]
    pub anomalies: Vec<AnomalySpec>,
}

impl CalibrationSpec {
    pub fn shape(&self) -> CodeShape {
        CodeShape {
            rows: self.rows,
            cols: self.cols,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.shape().validate()?;
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if self.n_classes < 2 {
            return bad(format!("n_classes must be >= 2, got {}", self.n_classes));
        }
        if self.samples_per_class < 2 {
            return bad(format!(
                "samples_per_class must be >= 2, got {}",
                self.samples_per_class
            ));
        }
        if !(0.0..0.5).contains(&self.flip_rate) {
            return bad(format!(
                "flip rate must lie in [0, 0.5), got {}",
                self.flip_rate
            ));
        }
        if self.block == 0 || !self.shape().n_bits().is_multiple_of(self.block) {
            return bad(format!(
                "block length {} must be positive and divide {} bits",
                self.block,
                self.shape().n_bits()
            ));
        }
        for anomaly in &self.anomalies {
            match *anomaly {
                AnomalySpec::GoatClass { class_id, strength } => {
                    if class_id >= self.n_classes {
                        return bad(format!("goat_class target {class_id} does not exist"));
                    }
                    if !(strength > 0.0 && strength.is_finite()) {
                        return bad(format!(
                            "goat_class strength must be positive, got {strength}"
                        ));
                    }
                }
                AnomalySpec::WolfLambPair { classes, strength } => {
                    if classes.iter().any(|&c| c >= self.n_classes) {
                        return bad(format!("wolf_lamb_pair targets {classes:?} do not exist"));
                    }
                    if classes[0] == classes[1] {
                        return bad("wolf_lamb_pair must name two distinct classes".into());
                    }
                    if !(strength > 0.0 && strength <= 1.0) {
                        return bad(format!(
                            "wolf_lamb_pair strength must lie in (0, 1], got {strength}"
                        ));
                    }
                }
            }
        }
        for class_id in 0..self.n_classes {
            let p = self.class_flip_rate(class_id);
            if !(0.0..0.5).contains(&p) {
                return bad(format!(
                    "effective flip rate {p} of class {class_id} leaves [0, 0.5)"
                ));
            }
        }
        Ok(())
    }

    /// Flip rate after applying every goat anomaly aimed at `class_id`.
    pub fn class_flip_rate(&self, class_id: u32) -> f64 {
        self.anomalies
            .iter()
            .fold(self.flip_rate, |p, anomaly| match *anomaly {
                AnomalySpec::GoatClass {
                    class_id: c,
                    strength,
                } if c == class_id => p * strength,
                _ => p,
            })
    }
}

/// Two eyes per user: classes `2u` and `2u + 1` belong to user `u`.
pub fn user_of_class(class_id: u32) -> u32 {
    class_id / 2
}

/// An immutable collection of templates.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    spec: Option<CalibrationSpec>,
    records: Vec<TemplateRecord>,
}

impl Dataset {
    /// Validates the record layout: ids contiguous from 0, each class a
    /// contiguous run owned by one user, at most two classes per user, one
    /// shared code shape.
    pub fn new(spec: Option<CalibrationSpec>, records: Vec<TemplateRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Format("dataset has no templates".into()));
        }
        let shape = records[0].code.shape();
        let mut seen_classes = HashSet::new();
        let mut classes_of_user: BTreeMap<u32, HashSet<u32>> = BTreeMap::new();
        let mut class_user: BTreeMap<u32, u32> = BTreeMap::new();
        for (idx, rec) in records.iter().enumerate() {
            if rec.template_id as usize != idx {
                return Err(Error::Format(format!(
                    "template ids must be contiguous from 0; position {idx} holds id {}",
                    rec.template_id
                )));
            }
            if rec.code.shape() != shape {
                return Err(Error::DimensionMismatch(format!(
                    "template {} is {:?}, expected {:?}",
                    rec.template_id,
                    rec.code.shape(),
                    shape
                )));
            }
            let new_run = idx == 0 || records[idx - 1].class_id != rec.class_id;
            if new_run && !seen_classes.insert(rec.class_id) {
                return Err(Error::Format(format!(
                    "templates of class {} are not contiguous",
                    rec.class_id
                )));
            }
            match class_user.insert(rec.class_id, rec.user_id) {
                Some(u) if u != rec.user_id => {
                    return Err(Error::Format(format!(
                        "class {} is assigned to users {u} and {}",
                        rec.class_id, rec.user_id
                    )))
                }
                _ => {}
            }
            classes_of_user
                .entry(rec.user_id)
                .or_default()
                .insert(rec.class_id);
        }
        if let Some((user, classes)) = classes_of_user.iter().find(|(_, c)| c.len() > 2) {
            return Err(Error::Format(format!(
                "user {user} owns {} classes; at most two eyes per user",
                classes.len()
            )));
        }
        if let Some(spec) = &spec {
            if spec.shape() != shape {
                return Err(Error::DimensionMismatch(format!(
                    "spec declares {}x{} but templates are {}x{}",
                    spec.rows, spec.cols, shape.rows, shape.cols
                )));
            }
            let expected = spec.n_classes as usize * spec.samples_per_class as usize;
            if records.len() != expected {
                return Err(Error::Format(format!(
                    "spec implies {expected} templates, found {}",
                    records.len()
                )));
            }
        }
        Ok(Dataset { spec, records })
    }

    pub fn spec(&self) -> Option<&CalibrationSpec> {
        self.spec.as_ref()
    }

    pub fn records(&self) -> &[TemplateRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn shape(&self) -> CodeShape {
        self.records[0].code.shape()
    }

    pub fn record(&self, template_id: u32) -> Option<&TemplateRecord> {
        self.records.get(template_id as usize)
    }
}

/// Builds a synthetic dataset.
///
/// Stream order: every class prototype (one draw per block, top bit), then
/// each `wolf_lamb_pair` in listed order (a partial Fisher-Yates choice of
/// blocks to copy), then for every class and sample one draw per bit
/// deciding whether that bit flips.
pub fn generate_dataset(spec: &CalibrationSpec) -> Result<Dataset> {
    spec.validate()?;
    let shape = spec.shape();
    let n_bits = shape.n_bits() as usize;
    let block = spec.block as usize;
    let n_blocks = n_bits / block;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut prototypes: Vec<Vec<bool>> = (0..spec.n_classes)
        .map(|_| (0..n_blocks).map(|_| rng.next_u64() >> 63 == 1).collect())
        .collect();

    for anomaly in &spec.anomalies {
        if let AnomalySpec::WolfLambPair {
            classes: [src, dst],
            strength,
        } = *anomaly
        {
            let n_copy = ((strength * n_blocks as f64).round() as usize).min(n_blocks);
            let mut order: Vec<usize> = (0..n_blocks).collect();
            for k in 0..n_copy {
                let pick = k + uniform_below(&mut rng, (n_blocks - k) as u64) as usize;
                order.swap(k, pick);
                let b = order[k];
                prototypes[dst as usize][b] = prototypes[src as usize][b];
            }
        }
    }

    let mut records = Vec::with_capacity((spec.n_classes * spec.samples_per_class) as usize);
    let mut bits = vec![false; n_bits];
    for (class_id, proto) in (0u32..).zip(&prototypes) {
        let flip = bernoulli_cutoff(spec.class_flip_rate(class_id));
        for _ in 0..spec.samples_per_class {
            for (k, bit) in bits.iter_mut().enumerate() {
                *bit = proto[k / block] ^ (rng.next_u64() < flip);
            }
            records.push(TemplateRecord {
                template_id: records.len() as u32,
                class_id,
                user_id: user_of_class(class_id),
                code: IrisCode::from_bits(shape, &bits)?,
            });
        }
    }
    Dataset::new(Some(spec.clone()), records)
}

/// `u < cutoff` for a uniform 64-bit `u` has probability `p` (to 2^-64).
fn bernoulli_cutoff(p: f64) -> u64 {
    (p * 18_446_744_073_709_551_616.0) as u64
}

/// Uniform integer in `[0, n)` via the widening-multiply reduction.
fn uniform_below(rng: &mut ChaCha8Rng, n: u64) -> u64 {
    ((u128::from(rng.next_u64()) * u128::from(n)) >> 64) as u64
}

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    version: u32,
    rows: u32,
    cols: u32,
    spec: Option<CalibrationSpec>,
    classes: Vec<ClassEntry>,
}

#[derive(Serialize, Deserialize)]
struct ClassEntry {
    class_id: u32,
    user_id: u32,
    templates: Vec<String>,
}

const FILE_VERSION: u32 = 1;

/// Serializes to the dataset JSON format.
pub fn dataset_to_json(ds: &Dataset) -> Result<String> {
    let shape = ds.shape();
    let mut classes: Vec<ClassEntry> = Vec::new();
    for rec in ds.records() {
        match classes.last_mut() {
            Some(entry) if entry.class_id == rec.class_id => {
                entry.templates.push(rec.code.to_hex())
            }
            _ => classes.push(ClassEntry {
                class_id: rec.class_id,
                user_id: rec.user_id,
                templates: vec![rec.code.to_hex()],
            }),
        }
    }
    let file = DatasetFile {
        version: FILE_VERSION,
        rows: shape.rows,
        cols: shape.cols,
        spec: ds.spec.clone(),
        classes,
    };
    let mut text = serde_json::to_string_pretty(&file)?;
    text.push('\n');
    Ok(text)
}

/// Parses the dataset JSON format. Template ids follow file order.
pub fn dataset_from_json(text: &str) -> Result<Dataset> {
    let file: DatasetFile =
        serde_json::from_str(text).map_err(|e| Error::Format(format!("dataset file: {e}")))?;
    if file.version != FILE_VERSION {
        return Err(Error::Format(format!(
            "unsupported dataset version {}",
            file.version
        )));
    }
    let shape = CodeShape::new(file.rows, file.cols)?;
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for entry in &file.classes {
        if !seen.insert(entry.class_id) {
            return Err(Error::Format(format!(
                "duplicate class_id {}",
                entry.class_id
            )));
        }
        if entry.templates.is_empty() {
            return Err(Error::Format(format!(
                "class {} has no templates",
                entry.class_id
            )));
        }
        for hex in &entry.templates {
            records.push(TemplateRecord {
                template_id: records.len() as u32,
                class_id: entry.class_id,
                user_id: entry.user_id,
                code: IrisCode::from_hex(shape, hex)?,
            });
        }
    }
    if let Some(spec) = &file.spec {
        spec.validate()?;
    }
    Dataset::new(file.spec, records)
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, dataset_to_json(ds)?)?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    dataset_from_json(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn spec(rows: u32, cols: u32, p: f64, block: u32, seed: u64) -> CalibrationSpec {
        CalibrationSpec {
            rows,
            cols,
            n_classes: 6,
            samples_per_class: 3,
            flip_rate: p,
            block,
            seed,
            anomalies: vec![],
        }
    }

    #[test]
    fn bit_order_is_msb_first() {
        let mut code = IrisCode::zeros(CodeShape::new(1, 16).unwrap()).unwrap();
        code.set_bit(0, true);
        code.set_bit(9, true);
        assert_eq!(code.as_bytes(), &[0b1000_0000, 0b0100_0000]);
        assert_eq!(code.to_hex(), "8040");
        assert!(code.bit_at(0, 9));
    }

    #[test]
    fn shapes_must_be_byte_packable() {
        assert!(CodeShape::new(3, 3).is_err());
        assert!(CodeShape::new(0, 8).is_err());
        for shape in CodeShape::PRESETS {
            shape.validate().unwrap();
        }
        assert_eq!(CodeShape::LARGE.n_bits(), 4096);
        assert_eq!(CodeShape::SMALL.n_bits(), 256);
        assert_eq!(CodeShape::LARGE.to_string(), "256x16");
    }

    #[test]
    fn hex_length_and_case_are_checked() {
        let shape = CodeShape::new(1, 8).unwrap();
        assert_eq!(IrisCode::from_hex(shape, "b2").unwrap().as_bytes(), &[0xb2]);
        assert!(matches!(
            IrisCode::from_hex(shape, "b2b2"),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(IrisCode::from_hex(shape, "B2").is_err());
        assert!(IrisCode::from_hex(shape, "zz").is_err());
    }

    #[test]
    fn spec_validation() {
        let ok = spec(4, 64, 0.1, 16, 1);
        ok.validate().unwrap();
        assert!(spec(4, 64, 0.5, 16, 1).validate().is_err());
        assert!(spec(4, 64, -0.1, 16, 1).validate().is_err());
        assert!(spec(4, 64, 0.1, 3, 1).validate().is_err());
        assert!(spec(3, 3, 0.1, 1, 1).validate().is_err());

        let mut goat = ok.clone();
        goat.anomalies.push(AnomalySpec::GoatClass {
            class_id: 9,
            strength: 2.0,
        });
        assert!(goat.validate().is_err());
        goat.anomalies[0] = AnomalySpec::GoatClass {
            class_id: 1,
            strength: 6.0,
        };
        assert!(goat.validate().is_err(), "0.6 effective flip rate");
        goat.anomalies[0] = AnomalySpec::GoatClass {
            class_id: 1,
            strength: 3.0,
        };
        goat.validate().unwrap();
        assert!((goat.class_flip_rate(1) - 0.3).abs() < 1e-12);
        assert_eq!(goat.class_flip_rate(0), 0.1);

        let mut pair = ok.clone();
        pair.anomalies.push(AnomalySpec::WolfLambPair {
            classes: [2, 2],
            strength: 0.5,
        });
        assert!(pair.validate().is_err());
        pair.anomalies[0] = AnomalySpec::WolfLambPair {
            classes: [2, 3],
            strength: 1.5,
        };
        assert!(pair.validate().is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let s = spec(8, 128, 0.12, 16, 42);
        let a = generate_dataset(&s).unwrap();
        let b = generate_dataset(&s).unwrap();
        assert_eq!(a, b);
        let c = generate_dataset(&CalibrationSpec { seed: 43, ..s }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn layout_and_users() {
        let ds = generate_dataset(&spec(4, 64, 0.1, 1, 3)).unwrap();
        assert_eq!(ds.len(), 18);
        for (k, rec) in ds.records().iter().enumerate() {
            assert_eq!(rec.template_id as usize, k);
            assert_eq!(rec.class_id as usize, k / 3);
            assert_eq!(rec.user_id, rec.class_id / 2);
        }
    }

    #[test]
    fn zero_noise_samples_equal_prototype() {
        let ds = generate_dataset(&spec(4, 64, 0.0, 8, 5)).unwrap();
        for chunk in ds.records().chunks(3) {
            assert!(chunk.iter().all(|r| r.code == chunk[0].code));
        }
    }

    #[test]
    fn blocks_replicate_prototype_bits() {
        let ds = generate_dataset(&spec(4, 64, 0.0, 16, 8)).unwrap();
        for rec in ds.records() {
            for b in 0..16 {
                let first = rec.code.bit(b * 16);
                assert!((0..16).all(|k| rec.code.bit(b * 16 + k) == first));
            }
        }
    }

    #[test]
    fn wolf_lamb_pair_copies_blocks() {
        let mut s = spec(16, 256, 0.0, 16, 11);
        s.anomalies.push(AnomalySpec::WolfLambPair {
            classes: [0, 1],
            strength: 1.0,
        });
        let ds = generate_dataset(&s).unwrap();
        // full copy with no noise makes the two classes identical
        assert_eq!(ds.records()[0].code, ds.records()[3].code);
        assert_ne!(ds.records()[0].code, ds.records()[6].code);
    }

    #[test]
    fn json_round_trip_and_errors() {
        let ds = generate_dataset(&spec(4, 64, 0.1, 4, 9)).unwrap();
        let text = dataset_to_json(&ds).unwrap();
        let back = dataset_from_json(&text).unwrap();
        assert_eq!(back, ds);
        assert_eq!(dataset_to_json(&back).unwrap(), text);

        let truncated = text.replacen(&ds.records()[0].code.to_hex(), "abcd", 1);
        assert!(matches!(
            dataset_from_json(&truncated),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(dataset_from_json("{\"version\":1").is_err());
    }

    #[test]
    fn hand_written_file_loads() {
        // 2 classes x 2 samples, 8x8 = 64-bit codes, 16 hex chars each
        let text = r#"{
            "version": 1, "rows": 8, "cols": 8, "spec": null,
            "classes": [
              {"class_id": 0, "user_id": 0, "templates": ["00000000000000ff", "00000000000000fe"]},
              {"class_id": 1, "user_id": 0, "templates": ["ffffffffffffff00", "ffffffffffffff01"]}
            ]}"#;
        let ds = dataset_from_json(text).unwrap();
        assert_eq!(ds.len(), 4);
        assert_eq!(ds.records()[3].class_id, 1);
        assert!(ds.records()[3].code.bit(63));
        assert!(!ds.records()[1].code.bit(63));
    }

    #[test]
    fn duplicate_class_and_spec_mismatch_are_rejected() {
        let dup = r#"{"version":1,"rows":1,"cols":8,"spec":null,"classes":[
            {"class_id":0,"user_id":0,"templates":["00"]},
            {"class_id":0,"user_id":0,"templates":["ff"]}]}"#;
        assert!(dataset_from_json(dup).is_err());

        let ds = generate_dataset(&spec(4, 64, 0.1, 4, 9)).unwrap();
        let text = dataset_to_json(&ds)
            .unwrap()
            .replacen("\"rows\": 4", "\"rows\": 8", 1);
        assert!(dataset_from_json(&text).is_err());
    }

    #[test]
    fn too_many_eyes_per_user() {
        let shape = CodeShape::new(1, 8).unwrap();
        let records = (0..3)
            .map(|k| TemplateRecord {
                template_id: k,
                class_id: k,
                user_id: 0,
                code: IrisCode::zeros(shape).unwrap(),
            })
            .collect();
        assert!(Dataset::new(None, records).is_err());
    }
}
