//! Direct enumeration of the unknowns' genotypes. Exponential in the number
//! of unknowns; kept as the reference implementation for the ladder DP.

use std::collections::{BTreeMap, BTreeSet};

use crate::allele::Allele;
use crate::error::{Error, Result};
use crate::peakmodel::{ln_marker_likelihood, AlleleCountArray, ModelParameters};
use crate::profiles::Epg;

use super::dp::layout;
use super::prior::genotype_prior_in;
use super::{Hypothesis, JointHypothesis};

/// Largest number of genotype combinations enumerated per marker.
pub const ENUMERATION_CAP: f64 = 1e6;

/// Log-likelihood of one EPG by enumerating every unknown genotype
/// combination.
pub fn brute_force_likelihood(
    epg: &Epg,
    hypothesis: &Hypothesis,
    params: &ModelParameters,
    threshold: f64,
) -> Result<f64> {
    let joint = JointHypothesis::single(epg.sample_label(), hypothesis.clone());
    let params = BTreeMap::from([(epg.sample_label().to_string(), params.clone())]);
    brute_force_joint_likelihood(std::slice::from_ref(epg), &joint, &params, threshold)
}

/// Enumeration counterpart of [`super::joint_likelihood`].
pub fn brute_force_joint_likelihood(
    epgs: &[Epg],
    joint: &JointHypothesis,
    params: &BTreeMap<String, ModelParameters>,
    threshold: f64,
) -> Result<f64> {
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "threshold {threshold} must be positive"
        )));
    }
    let mut total = 0.0;
    for comp in layout(epgs, joint)? {
        let members: Vec<&Epg> = comp.epgs.iter().map(|&i| &epgs[i]).collect();
        let mut hyps = Vec::new();
        let mut member_params = Vec::new();
        for e in &members {
            let h = joint.hypothesis(e.sample_label()).unwrap();
            let p = params.get(e.sample_label()).ok_or_else(|| {
                Error::InvalidParameters(format!("no parameters for sample `{}`", e.sample_label()))
            })?;
            p.validate()?;
            if p.phi.len() != h.contributors() {
                return Err(Error::InvalidParameters(format!(
                    "sample `{}`: phi has {} entries for {} contributors",
                    e.sample_label(),
                    p.phi.len(),
                    h.contributors()
                )));
            }
            hyps.push(h);
            member_params.push(p);
        }
        let markers: BTreeSet<&str> = members.iter().flat_map(|e| e.markers()).collect();
        for marker in markers {
            let mut observed = BTreeSet::new();
            for e in &members {
                observed.extend(e.observed(marker, threshold));
            }
            let dist = comp
                .population
                .marker_distribution(marker, observed.iter().copied())?;
            let alleles = dist.alleles();
            let mut genotypes: Vec<(Allele, Allele)> = Vec::new();
            for (i, &a) in alleles.iter().enumerate() {
                for &b in &alleles[i..] {
                    genotypes.push((a, b));
                }
            }
            let persons = comp.n_persons;
            let required = (genotypes.len() as f64).powi(persons as i32);
            if required > ENUMERATION_CAP {
                return Err(Error::StateSpaceTooLarge {
                    marker: marker.to_string(),
                    required,
                    cap: ENUMERATION_CAP,
                });
            }

            let mut known = Vec::with_capacity(members.len());
            for (e, h) in members.iter().zip(&hyps) {
                if e.marker(marker).is_none() {
                    known.push(Vec::new());
                    continue;
                }
                let gts = h
                    .known
                    .iter()
                    .map(|k| {
                        k.at(marker).ok_or_else(|| {
                            Error::InvalidHypothesis(format!(
                                "known contributor `{}` has no genotype at marker `{marker}`",
                                k.person_label()
                            ))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                known.push(gts);
            }

            let mut terms = Vec::new();
            let mut choice = vec![0usize; persons];
            loop {
                let assigned: Vec<(Allele, Allele)> =
                    choice.iter().map(|&g| genotypes[g]).collect();
                let prior = genotype_prior_in(&assigned, &dist, comp.theta)?;
                let mut ln_term = prior.ln();
                for (local, e) in members.iter().enumerate() {
                    let Some(peaks) = e.marker(marker) else {
                        continue;
                    };
                    let mut contributors = known[local].clone();
                    contributors.extend(comp.slot_person[local].iter().map(|&p| assigned[p]));
                    let counts = AlleleCountArray::from_genotypes(&contributors);
                    ln_term += ln_marker_likelihood(peaks, &counts, member_params[local], threshold)?;
                }
                terms.push(ln_term);

                let mut k = 0;
                while k < persons {
                    choice[k] += 1;
                    if choice[k] < genotypes.len() {
                        break;
                    }
                    choice[k] = 0;
                    k += 1;
                }
                if k == persons {
                    break;
                }
            }
            total += log_sum_exp(&terms);
        }
    }
    Ok(total)
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}
