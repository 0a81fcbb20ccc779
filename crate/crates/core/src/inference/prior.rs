use std::collections::BTreeMap;

use crate::allele::Allele;
use crate::error::{Error, Result};
use crate::freqdb::{FrequencyTable, MarkerDistribution};

/// Joint prior probability of the unknowns' genotypes at one marker.
///
/// Alleles are drawn one at a time, unknown by unknown. With coancestry
/// `theta`, an allele of type `a` drawn after `m` alleles of which `m_a` were
/// of type `a` has probability `(m_a * theta + (1 - theta) * p_a) /
/// (1 + (m - 1) * theta)`; `theta = 0` is Hardy-Weinberg. Heterozygotes count
/// twice since either allele may have been drawn first.
pub fn genotype_prior(
    genotypes: &[(Allele, Allele)],
    marker: &str,
    population: &FrequencyTable,
    theta: f64,
) -> Result<f64> {
    let dist = population.marker_distribution(
        marker,
        genotypes.iter().flat_map(|&(a, b)| [a, b]),
    )?;
    genotype_prior_in(genotypes, &dist, theta)
}

/// [`genotype_prior`] against an already-built marker distribution.
pub fn genotype_prior_in(
    genotypes: &[(Allele, Allele)],
    dist: &MarkerDistribution,
    theta: f64,
) -> Result<f64> {
    if !(0.0..1.0).contains(&theta) {
        return Err(Error::InvalidArgument(format!(
            "theta = {theta} must lie in [0, 1)"
        )));
    }
    let mut drawn: BTreeMap<Allele, u32> = BTreeMap::new();
    let mut m = 0u32;
    let mut prob = 1.0;
    for &(a, b) in genotypes {
        for allele in [a, b] {
            let p = dist.get(allele).ok_or_else(|| {
                Error::InvalidArgument(format!("allele {allele} is outside the marker distribution"))
            })?;
            let m_a = drawn.get(&allele).copied().unwrap_or(0) as f64;
            prob *= (m_a * theta + (1.0 - theta) * p) / (1.0 + (m as f64 - 1.0) * theta);
            *drawn.entry(allele).or_insert(0) += 1;
            m += 1;
        }
        if a != b {
            prob *= 2.0;
        }
    }
    Ok(prob)
}
