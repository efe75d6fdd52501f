//! Exhaustive Hamming matching over packed binary iris codes, empirical
//! FAR/FRR/EER analysis, 3-valent safety-band decisions with balanced
//! narrowing, and fuzzy sheep/goat/lamb/wolf classification of templates
//! and users.
//!
//! The usual pipeline is
//! [`generate_dataset`] → [`compute_score_matrix`] → [`split_scores`] →
//! [`first_templates`] / [`last_templates`] → [`compare_calibrations`].

pub mod dataset;
pub mod distributions;
pub mod error;
pub mod matcher;
pub mod menagerie;
pub mod safety_band;

pub use dataset::{
    generate_dataset, load_dataset, save_dataset, AnomalySpec, CalibrationSpec, CodeShape, Dataset,
    IrisCode, TemplateRecord,
};
pub use distributions::{
    equal_error_rate, far, frr, maximal_safety_band, split_scores, AnalysisReport,
    DistributionSummary,
};
pub use error::{Error, Result};
pub use matcher::{
    compute_score_matrix, compute_score_matrix_parallel, hamming_distance, hamming_similarity,
    naive_hamming_oracle, Comparison, PairLabel, ScoreMatrix,
};
pub use menagerie::{
    classify, compare_calibrations, first_templates, first_templates_with_trace, last_templates,
    lift_to_users, membership_degrees, Label, MenagerieParams, MenagerieReport, Provenance,
    StabilityReport, TemplateVerdict, UserVerdict,
};
pub use safety_band::{
    band_errors, decide, narrow_balanced, BandDecision, BandErrors, NarrowingTrace, OperatingPoint,
    SafetyBand, StopReason,
};
