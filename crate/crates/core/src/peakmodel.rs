//! Gamma peak-height model with back-stutter and threshold censoring.
//!
//! Given contributor proportions `phi`, allele counts `n` and stutter
//! proportion `xi`, the effective dose at allele `a` is
//!
//! ```text
//! D_a = (1 - xi) * sum_i phi_i * n_ia + xi * sum_i phi_i * n_i,a+1
//! ```
//!
//! and the peak height at `a` is gamma distributed with shape `D_a / sigma^2`
//! and scale `mu * sigma^2`. Peaks at or above the threshold `C` contribute
//! the density; positions without an observed peak contribute the
//! probability of falling below `C`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::allele::Allele;
use crate::error::{Error, Result};

/// Tolerance on the proportion simplex.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// Peak-height parameters for one EPG.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParameters {
    /// Mean peak height of a single heterozygous allele, in RFU.
    pub mu: f64,
    /// Coefficient of variation of a single-dose peak.
    pub sigma: f64,
    /// Stutter fraction of parent plus stutter peak.
    pub xi: f64,
    /// Proportions, known contributors first then unknowns.
    pub phi: Vec<f64>,
}

impl ModelParameters {
    pub fn new(mu: f64, sigma: f64, xi: f64, phi: Vec<f64>) -> Result<Self> {
        let p = ModelParameters { mu, sigma, xi, phi };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameters(m));
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return bad(format!("mu = {} must be positive", self.mu));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma = {} must be positive", self.sigma));
        }
        if !(0.0..1.0).contains(&self.xi) {
            return bad(format!("xi = {} must lie in [0, 1)", self.xi));
        }
        if self.phi.is_empty() {
            return bad("phi is empty".into());
        }
        if self.phi.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
            return bad(format!("phi = {:?} has a negative entry", self.phi));
        }
        let sum: f64 = self.phi.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return bad(format!("phi sums to {sum}, not 1"));
        }
        Ok(())
    }

    pub fn shape_scale(&self, dose: f64) -> (f64, f64) {
        let s2 = self.sigma * self.sigma;
        (dose / s2, self.mu * s2)
    }
}

/// Allele counts at one marker, one map per contributor.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct AlleleCountArray {
    counts: Vec<BTreeMap<Allele, u8>>,
}

impl AlleleCountArray {
    /// Counts from one unordered genotype per contributor.
    pub fn from_genotypes(genotypes: &[(Allele, Allele)]) -> Self {
        let counts = genotypes
            .iter()
            .map(|&(a, b)| {
                let mut m = BTreeMap::new();
                *m.entry(a).or_insert(0) += 1;
                *m.entry(b).or_insert(0) += 1;
                m
            })
            .collect();
        AlleleCountArray { counts }
    }

    /// Checks that each contributor carries exactly two alleles.
    pub fn from_counts(counts: Vec<BTreeMap<Allele, u8>>) -> Result<Self> {
        for (i, c) in counts.iter().enumerate() {
            let total: u32 = c.values().map(|&n| n as u32).sum();
            if total != 2 {
                return Err(Error::InvalidProfile(format!(
                    "contributor {i} carries {total} alleles, expected 2"
                )));
            }
        }
        Ok(AlleleCountArray { counts })
    }

    pub fn contributors(&self) -> usize {
        self.counts.len()
    }

    pub fn count(&self, contributor: usize, allele: Allele) -> u8 {
        self.counts
            .get(contributor)
            .and_then(|c| c.get(&allele))
            .copied()
            .unwrap_or(0)
    }

    /// Every allele carried by some contributor.
    pub fn alleles(&self) -> BTreeSet<Allele> {
        self.counts.iter().flat_map(|c| c.keys().copied()).collect()
    }
}

/// Effective allele dose after back-stutter.
pub fn effective_dose(phi: &[f64], xi: f64, counts: &AlleleCountArray, allele: Allele) -> f64 {
    let up = allele.one_up();
    let (mut own, mut parent) = (0.0, 0.0);
    for (i, &p) in phi.iter().enumerate() {
        own += p * counts.count(i, allele) as f64;
        parent += p * counts.count(i, up) as f64;
    }
    (1.0 - xi) * own + xi * parent
}

/// A single allele position in an EPG.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PeakObservation {
    Height(f64),
    BelowThreshold,
}

/// Log density of the gamma distribution at `x`.
pub fn ln_gamma_pdf(x: f64, shape: f64, scale: f64) -> f64 {
    if shape <= 0.0 || x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    (shape - 1.0) * x.ln() - x / scale - ln_gamma(shape) - shape * scale.ln()
}

const GAMMA_EPS: f64 = 1e-16;
const GAMMA_MAX_ITER: usize = 100_000;

/// Log of the regularized lower incomplete gamma function `P(a, x)`.
///
/// Series expansion below `x = a + 1`, Lentz continued fraction for the
/// upper tail above it. Both branches stay in log space so deep left tails
/// do not underflow.
pub fn ln_lower_regularized_gamma(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if a <= 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        let mut ap = a;
        let mut term = 1.0 / a;
        let mut sum = term;
        for _ in 0..GAMMA_MAX_ITER {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * GAMMA_EPS {
                break;
            }
        }
        -x + a * x.ln() - ln_gamma(a) + sum.ln()
    } else {
        let tiny = f64::MIN_POSITIVE / GAMMA_EPS;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..GAMMA_MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < GAMMA_EPS {
                break;
            }
        }
        let ln_q = -x + a * x.ln() - ln_gamma(a) + h.ln();
        (-ln_q.exp()).ln_1p()
    }
}

/// Log of [`peak_likelihood`].
pub fn ln_peak_likelihood(
    observation: PeakObservation,
    dose: f64,
    mu: f64,
    sigma: f64,
    threshold: f64,
) -> Result<f64> {
    if !(threshold > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold {threshold} must be positive"
        )));
    }
    let s2 = sigma * sigma;
    let (shape, scale) = (dose / s2, mu * s2);
    match observation {
        PeakObservation::Height(h) => {
            if h < threshold {
                return Err(Error::UncensoredPeak {
                    height: h,
                    threshold,
                });
            }
            Ok(if dose <= 0.0 {
                f64::NEG_INFINITY
            } else {
                ln_gamma_pdf(h, shape, scale)
            })
        }
        PeakObservation::BelowThreshold => Ok(if dose <= 0.0 {
            0.0
        } else {
            ln_lower_regularized_gamma(shape, threshold / scale)
        }),
    }
}

/// Gamma density of an observed peak, or the probability of dropping below
/// `threshold` for a censored position. Zero dose is a point mass at zero.
pub fn peak_likelihood(
    observation: PeakObservation,
    dose: f64,
    mu: f64,
    sigma: f64,
    threshold: f64,
) -> Result<f64> {
    ln_peak_likelihood(observation, dose, mu, sigma, threshold).map(f64::exp)
}

/// Log-likelihood of one marker's peaks given every contributor's counts.
///
/// Evaluated over observed alleles plus every position with positive dose,
/// stutter-only positions included. Heights below `threshold` are censored.
pub fn ln_marker_likelihood(
    peaks: &BTreeMap<Allele, f64>,
    counts: &AlleleCountArray,
    params: &ModelParameters,
    threshold: f64,
) -> Result<f64> {
    let mut positions: BTreeSet<Allele> = peaks
        .iter()
        .filter(|(_, &h)| h >= threshold)
        .map(|(&a, _)| a)
        .collect();
    for a in counts.alleles() {
        positions.insert(a);
        if let Some(s) = a.one_down() {
            positions.insert(s);
        }
    }
    let mut total = 0.0;
    for a in positions {
        let dose = effective_dose(&params.phi, params.xi, counts, a);
        let obs = match peaks.get(&a) {
            Some(&h) if h >= threshold => PeakObservation::Height(h),
            _ => PeakObservation::BelowThreshold,
        };
        if dose <= 0.0 && obs == PeakObservation::BelowThreshold {
            continue;
        }
        total += ln_peak_likelihood(obs, dose, params.mu, params.sigma, threshold)?;
    }
    Ok(total)
}

pub fn marker_likelihood(
    peaks: &BTreeMap<Allele, f64>,
    counts: &AlleleCountArray,
    params: &ModelParameters,
    threshold: f64,
) -> Result<f64> {
    ln_marker_likelihood(peaks, counts, params, threshold).map(f64::exp)
}
