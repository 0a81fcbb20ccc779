//! Likelihood ratios, weight of evidence and its single-source upper bound.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::freqdb::FrequencyTable;
use crate::inference::{
    fit_parameters, genotype_prior, joint_likelihood, FitOptions, FitResult, JointHypothesis,
};
use crate::peakmodel::ModelParameters;
use crate::profiles::{Epg, GenotypeProfile};

#[derive(Clone, Debug, Serialize)]
pub struct EvidenceReport {
    pub hp_label: String,
    pub hd_label: String,
    pub population_label: String,
    pub lr: f64,
    /// Natural log of `lr`, kept for ratios beyond `f64` range.
    pub ln_lr: f64,
    pub woe_ban: f64,
    pub hp_fit: FitResult,
    pub hd_fit: FitResult,
}

fn check_pair(hp: &JointHypothesis, hd: &JointHypothesis) -> Result<String> {
    let ps: BTreeSet<&String> = hp.per_epg().keys().collect();
    let ds: BTreeSet<&String> = hd.per_epg().keys().collect();
    if ps != ds {
        return Err(Error::InvalidHypothesis(format!(
            "`{}` and `{}` cover different samples",
            hp.label, hd.label
        )));
    }
    let mut labels = BTreeSet::new();
    for (s, h) in hp.per_epg() {
        let d = &hd.per_epg()[s];
        if h.population.population_label() != d.population.population_label() {
            return Err(Error::InvalidHypothesis(format!(
                "sample `{s}`: `{}` uses population `{}` but `{}` uses `{}`",
                hp.label,
                h.population.population_label(),
                hd.label,
                d.population.population_label()
            )));
        }
        labels.insert(h.population.population_label().to_string());
    }
    Ok(labels.into_iter().collect::<Vec<_>>().join("+"))
}

/// Likelihood ratio from likelihoods maximized independently under each
/// hypothesis.
///
/// When both hypotheses have the same number of contributors per sample,
/// each fit is also started from the other's optimum. An optimum is then
/// never worse than the other hypothesis' parameters, which keeps the
/// ratio consistent with the single-source bound.
pub fn likelihood_ratio(
    epgs: &[Epg],
    hp: &JointHypothesis,
    hd: &JointHypothesis,
    options: &FitOptions,
) -> Result<EvidenceReport> {
    let population_label = check_pair(hp, hd)?;
    let (p, d) = rayon::join(
        || fit_parameters(epgs, hp, options),
        || fit_parameters(epgs, hd, options),
    );
    let (mut p, mut d) = (p?, d?);

    let same_shape = hp
        .per_epg()
        .iter()
        .all(|(s, h)| h.contributors() == hd.per_epg()[s].contributors());
    if same_shape {
        let seeded = |from: &FitResult| FitOptions {
            restarts: 0,
            extra_starts: vec![from.params()],
            ..options.clone()
        };
        let (op, od) = (seeded(&d), seeded(&p));
        let (p2, d2) = rayon::join(
            || fit_parameters(epgs, hp, &op),
            || fit_parameters(epgs, hd, &od),
        );
        let (p2, d2) = (p2?, d2?);
        if p2.log_likelihood > p.log_likelihood {
            p = FitResult {
                restarts_used: p.restarts_used + p2.restarts_used,
                evaluations: p.evaluations + p2.evaluations,
                ..p2
            };
        }
        if d2.log_likelihood > d.log_likelihood {
            d = FitResult {
                restarts_used: d.restarts_used + d2.restarts_used,
                evaluations: d.evaluations + d2.evaluations,
                ..d2
            };
        }
    }

    if p.log_likelihood == f64::NEG_INFINITY && d.log_likelihood == f64::NEG_INFINITY {
        return Err(Error::Numerical(format!(
            "neither `{}` nor `{}` can explain the observed peaks",
            hp.label, hd.label
        )));
    }
    let ln_lr = p.log_likelihood - d.log_likelihood;
    Ok(EvidenceReport {
        hp_label: hp.label.clone(),
        hd_label: hd.label.clone(),
        population_label,
        lr: ln_lr.exp(),
        ln_lr,
        woe_ban: ln_lr / std::f64::consts::LN_10,
        hp_fit: p,
        hd_fit: d,
    })
}

/// Natural-log likelihood ratio at fixed parameters under each hypothesis.
pub fn ln_likelihood_ratio_at(
    epgs: &[Epg],
    hp: &JointHypothesis,
    hd: &JointHypothesis,
    hp_params: &BTreeMap<String, ModelParameters>,
    hd_params: &BTreeMap<String, ModelParameters>,
    threshold: f64,
) -> Result<f64> {
    check_pair(hp, hd)?;
    Ok(joint_likelihood(epgs, hp, hp_params, threshold)?
        - joint_likelihood(epgs, hd, hd_params, threshold)?)
}

/// `log10 lr`, in bans.
pub fn weight_of_evidence(lr: f64) -> Result<f64> {
    if !(lr > 0.0) || lr.is_infinite() {
        return Err(Error::InvalidArgument(format!(
            "likelihood ratio {lr} must be positive and finite"
        )));
    }
    Ok(lr.log10())
}

fn ln_match_probability(
    profile: &GenotypeProfile,
    population: &FrequencyTable,
    theta: f64,
) -> Result<f64> {
    let mut ln = 0.0;
    for (marker, &g) in profile.genotype() {
        ln += genotype_prior(&[g], marker, population, theta)?.ln();
    }
    Ok(ln)
}

/// Probability that a random member of `population` has `profile`.
pub fn match_probability(
    profile: &GenotypeProfile,
    population: &FrequencyTable,
    theta: f64,
) -> Result<f64> {
    ln_match_probability(profile, population, theta).map(f64::exp)
}

/// `-log10` of the match probability: the weight a clean single-source
/// trace of `profile` would carry.
pub fn woe_upper_bound(
    profile: &GenotypeProfile,
    population: &FrequencyTable,
    theta: f64,
) -> Result<f64> {
    Ok(-ln_match_probability(profile, population, theta)? / std::f64::consts::LN_10)
}

/// Bans lost against a single-source trace: bound minus `log10 lr`.
pub fn evidential_loss(
    profile: &GenotypeProfile,
    population: &FrequencyTable,
    theta: f64,
    lr: f64,
) -> Result<f64> {
    let woe = weight_of_evidence(lr)?;
    Ok(woe_upper_bound(profile, population, theta)? - woe)
}

/// Combined ratio for samples with fully distinct contributors.
pub fn combined_distinct_lr(lrs: &[f64]) -> Result<f64> {
    let mut ln = 0.0;
    for &lr in lrs {
        ln += weight_of_evidence(lr)? * std::f64::consts::LN_10;
    }
    Ok(ln.exp())
}
