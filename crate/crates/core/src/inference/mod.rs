//! Contributor hypotheses, genotype priors and likelihood evaluation.
//!
//! The likelihood of an EPG under a hypothesis sums the peak-height model
//! over every genotype combination of the unknown contributors, weighted by
//! the genotype prior. [`full_likelihood`] and [`joint_likelihood`] do this
//! with a dynamic program over the allele ladder; [`brute_force_likelihood`]
//! enumerates the sum directly and serves as the reference it is tested
//! against.

mod brute;
mod dp;
mod fit;
mod prior;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::freqdb::FrequencyTable;
use crate::peakmodel::ModelParameters;
use crate::profiles::{Epg, GenotypeProfile};

pub use brute::{brute_force_joint_likelihood, brute_force_likelihood, ENUMERATION_CAP};
pub use fit::{fit_parameters, FitOptions, FitResult, ParameterBlock};
pub use prior::{genotype_prior, genotype_prior_in};

pub(crate) use dp::CompiledModel;

/// Most distinct unknown individuals one connected analysis may contain.
pub const MAX_UNKNOWN_PERSONS: usize = 5;

/// Contributors to one EPG: fixed known profiles plus a number of unknown
/// individuals drawn from `population`.
#[derive(Clone, Debug)]
pub struct Hypothesis {
    pub label: String,
    pub known: Vec<GenotypeProfile>,
    pub n_unknowns: usize,
    pub population: Arc<FrequencyTable>,
    /// Coancestry coefficient (F_ST).
    pub theta: f64,
}

impl Hypothesis {
    pub fn new(
        label: impl Into<String>,
        known: Vec<GenotypeProfile>,
        n_unknowns: usize,
        population: Arc<FrequencyTable>,
        theta: f64,
    ) -> Result<Self> {
        let h = Hypothesis {
            label: label.into(),
            known,
            n_unknowns,
            population,
            theta,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        if self.label.trim().is_empty() {
            return Err(Error::InvalidHypothesis("hypothesis label is empty".into()));
        }
        if self.contributors() == 0 {
            return Err(Error::InvalidHypothesis(format!(
                "`{}` has no contributors",
                self.label
            )));
        }
        if !(0.0..1.0).contains(&self.theta) {
            return Err(Error::InvalidArgument(format!(
                "theta = {} must lie in [0, 1)",
                self.theta
            )));
        }
        Ok(())
    }

    pub fn contributors(&self) -> usize {
        self.known.len() + self.n_unknowns
    }

    /// Same contributors under another population or theta.
    pub fn with_population(&self, population: Arc<FrequencyTable>, theta: f64) -> Self {
        Hypothesis {
            population,
            theta,
            ..self.clone()
        }
    }
}

/// One unknown contributor slot of one sample.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct SlotRef {
    pub sample: String,
    /// Zero-based index among the sample's unknowns.
    pub unknown: usize,
}

impl SlotRef {
    pub fn new(sample: impl Into<String>, unknown: usize) -> Self {
        SlotRef {
            sample: sample.into(),
            unknown,
        }
    }
}

/// Hypotheses for several EPGs, with declared identities between unknown
/// contributors of different samples.
#[derive(Clone, Debug)]
pub struct JointHypothesis {
    pub label: String,
    per_epg: BTreeMap<String, Hypothesis>,
    sharing: Vec<Vec<SlotRef>>,
}

impl JointHypothesis {
    pub fn new(
        label: impl Into<String>,
        per_epg: BTreeMap<String, Hypothesis>,
        sharing: Vec<Vec<SlotRef>>,
    ) -> Result<Self> {
        let j = JointHypothesis {
            label: label.into(),
            per_epg,
            sharing,
        };
        j.validate()?;
        Ok(j)
    }

    /// A single-sample analysis.
    pub fn single(sample: impl Into<String>, hypothesis: Hypothesis) -> Self {
        JointHypothesis {
            label: hypothesis.label.clone(),
            per_epg: BTreeMap::from([(sample.into(), hypothesis)]),
            sharing: Vec::new(),
        }
    }

    /// Unknown slot `k` is the same individual in every sample that has at
    /// least `k + 1` unknowns.
    pub fn common_unknowns(
        label: impl Into<String>,
        per_epg: BTreeMap<String, Hypothesis>,
    ) -> Result<Self> {
        let max = per_epg.values().map(|h| h.n_unknowns).max().unwrap_or(0);
        let sharing = (0..max)
            .map(|k| {
                per_epg
                    .iter()
                    .filter(|(_, h)| h.n_unknowns > k)
                    .map(|(s, _)| SlotRef::new(s.clone(), k))
                    .collect::<Vec<_>>()
            })
            .filter(|g| g.len() > 1)
            .collect();
        Self::new(label, per_epg, sharing)
    }

    pub fn per_epg(&self) -> &BTreeMap<String, Hypothesis> {
        &self.per_epg
    }

    pub fn sharing(&self) -> &[Vec<SlotRef>] {
        &self.sharing
    }

    pub fn hypothesis(&self, sample: &str) -> Option<&Hypothesis> {
        self.per_epg.get(sample)
    }

    /// Same contributors and sharing under another population or theta.
    pub fn with_population(&self, population: Arc<FrequencyTable>, theta: f64) -> Self {
        JointHypothesis {
            label: self.label.clone(),
            per_epg: self
                .per_epg
                .iter()
                .map(|(s, h)| (s.clone(), h.with_population(population.clone(), theta)))
                .collect(),
            sharing: self.sharing.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.label.trim().is_empty() {
            return Err(Error::InvalidHypothesis("hypothesis label is empty".into()));
        }
        if self.per_epg.is_empty() {
            return Err(Error::InvalidHypothesis(format!(
                "`{}` covers no samples",
                self.label
            )));
        }
        for h in self.per_epg.values() {
            h.validate()?;
        }
        let mut seen = BTreeSet::new();
        for group in &self.sharing {
            let mut samples = BTreeSet::new();
            for slot in group {
                let h = self.per_epg.get(&slot.sample).ok_or_else(|| {
                    Error::InvalidSharing(format!("unknown sample `{}`", slot.sample))
                })?;
                if slot.unknown >= h.n_unknowns {
                    return Err(Error::InvalidSharing(format!(
                        "sample `{}` has {} unknowns, slot U{} does not exist",
                        slot.sample,
                        h.n_unknowns,
                        slot.unknown + 1
                    )));
                }
                if !samples.insert(slot.sample.as_str()) {
                    return Err(Error::InvalidSharing(format!(
                        "one individual is bound to two slots of sample `{}`",
                        slot.sample
                    )));
                }
                if !seen.insert(slot.clone()) {
                    return Err(Error::InvalidSharing(format!(
                        "slot {}:U{} appears in two sharing groups",
                        slot.sample,
                        slot.unknown + 1
                    )));
                }
            }
        }
        Ok(())
    }

    /// Global identity of every unknown slot, numbered in order of first
    /// appearance (samples in label order, slots in index order).
    pub(crate) fn person_map(&self) -> BTreeMap<String, Vec<usize>> {
        let mut group_of: BTreeMap<(&str, usize), usize> = BTreeMap::new();
        for (g, group) in self.sharing.iter().enumerate() {
            for s in group {
                group_of.insert((s.sample.as_str(), s.unknown), g);
            }
        }
        let mut group_person: BTreeMap<usize, usize> = BTreeMap::new();
        let mut next = 0;
        let mut out = BTreeMap::new();
        for (sample, h) in &self.per_epg {
            let ids = (0..h.n_unknowns)
                .map(|k| match group_of.get(&(sample.as_str(), k)) {
                    Some(&g) => *group_person.entry(g).or_insert_with(|| {
                        next += 1;
                        next - 1
                    }),
                    None => {
                        next += 1;
                        next - 1
                    }
                })
                .collect();
            out.insert(sample.clone(), ids);
        }
        out
    }

    /// Contributor labels per sample: known person labels, then `U<k>` with
    /// `k` the global unknown identity.
    pub fn contributor_labels(&self) -> BTreeMap<String, Vec<String>> {
        let persons = self.person_map();
        self.per_epg
            .iter()
            .map(|(s, h)| {
                let mut labels: Vec<String> =
                    h.known.iter().map(|p| p.person_label().to_string()).collect();
                labels.extend(persons[s].iter().map(|id| format!("U{}", id + 1)));
                (s.clone(), labels)
            })
            .collect()
    }
}

/// Log-likelihood of one EPG under `hypothesis`, marginalized over the
/// unknown contributors' genotypes.
pub fn full_likelihood(
    epg: &Epg,
    hypothesis: &Hypothesis,
    params: &ModelParameters,
    threshold: f64,
) -> Result<f64> {
    let joint = JointHypothesis::single(epg.sample_label(), hypothesis.clone());
    let params = BTreeMap::from([(epg.sample_label().to_string(), params.clone())]);
    joint_likelihood(std::slice::from_ref(epg), &joint, &params, threshold)
}

/// Log-likelihood of several EPGs whose unknown contributors may coincide.
///
/// Samples linked through shared unknowns are marginalized together; groups
/// with no shared individual factorize, so with no sharing the result is the
/// sum of the per-sample log-likelihoods.
pub fn joint_likelihood(
    epgs: &[Epg],
    joint: &JointHypothesis,
    params: &BTreeMap<String, ModelParameters>,
    threshold: f64,
) -> Result<f64> {
    let model = CompiledModel::new(epgs, joint, threshold)?;
    let ordered = model.order_params(params)?;
    Ok(model.ln_likelihood(&ordered))
}
