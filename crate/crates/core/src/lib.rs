//! Continuous peak-height model for weighing DNA mixture evidence.
//!
//! Peak heights are gamma distributed with shape proportional to the
//! effective allele dose (contributor proportions, allele counts and
//! back-stutter) and a detection threshold below which peaks are censored.
//! Unknown contributors are marginalized exactly, with an optional
//! coancestry correction, and parameters are fitted by maximum likelihood
//! under each hypothesis.
//!
//! - [`freqdb`]: allele frequency tables, imputation, admixture.
//! - [`profiles`]: genotype profiles, EPGs, presence index.
//! - [`peakmodel`]: the censored gamma peak model.
//! - [`inference`]: hypotheses, priors, marginal likelihood, fitting.
//! - [`evidence`]: likelihood ratio, weight of evidence and its bound.
//! - [`simulate`]: seeded forward simulation of EPGs.

pub mod allele;
pub mod error;
pub mod evidence;
pub mod freqdb;
pub mod inference;
pub mod optim;
pub mod peakmodel;
pub mod profiles;
pub mod simulate;

pub use allele::Allele;
pub use error::{Error, Result};
pub use evidence::{
    combined_distinct_lr, evidential_loss, likelihood_ratio, ln_likelihood_ratio_at,
    match_probability, weight_of_evidence, woe_upper_bound, EvidenceReport,
};
pub use freqdb::{admix_tables, load_frequency_table, AdmixWeights, FrequencyTable};
pub use inference::{
    fit_parameters, full_likelihood, joint_likelihood, FitOptions, FitResult, Hypothesis,
    JointHypothesis, SlotRef,
};
pub use peakmodel::ModelParameters;
pub use profiles::{load_epg, load_profile, presence_matrix, Epg, GenotypeProfile};
pub use simulate::{simulate_epg, SimulationSpec};

/// Default detection threshold, in RFU.
pub const DEFAULT_THRESHOLD: f64 = 50.0;
