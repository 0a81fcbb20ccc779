//! Maximum-likelihood estimation of the peak-height parameters.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::optim::{nelder_mead, Minimum, NelderMeadOptions};
use crate::peakmodel::ModelParameters;
use crate::profiles::Epg;

use super::dp::CompiledModel;
use super::JointHypothesis;

const INITIAL_SIGMA: f64 = 0.6;
const INITIAL_XI: f64 = 0.05;
const LOG_SCALE_JITTER: f64 = 0.3;
const LOGIT_JITTER: f64 = 1.0;

#[derive(Clone, Debug)]
pub struct FitOptions {
    pub threshold: f64,
    /// Jittered starts in addition to the deterministic one.
    pub restarts: usize,
    pub seed: u64,
    pub optimizer: NelderMeadOptions,
    /// Further starting points, e.g. the optimum under a nested hypothesis.
    pub extra_starts: Vec<BTreeMap<String, ModelParameters>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            threshold: 50.0,
            restarts: 8,
            seed: 0,
            optimizer: NelderMeadOptions::default(),
            extra_starts: Vec::new(),
        }
    }
}

/// Fitted parameters of one sample with its contributor labels, both in
/// hypothesis order (knowns, then unknowns).
#[derive(Clone, Debug, Serialize)]
pub struct ParameterBlock {
    pub sample: String,
    pub contributors: Vec<String>,
    pub params: ModelParameters,
}

#[derive(Clone, Debug, Serialize)]
pub struct FitResult {
    pub hypothesis: String,
    pub blocks: Vec<ParameterBlock>,
    pub log_likelihood: f64,
    pub converged: bool,
    pub restarts_used: usize,
    pub evaluations: usize,
}

impl FitResult {
    pub fn params(&self) -> BTreeMap<String, ModelParameters> {
        self.blocks
            .iter()
            .map(|b| (b.sample.clone(), b.params.clone()))
            .collect()
    }

    pub fn block(&self, sample: &str) -> Option<&ParameterBlock> {
        self.blocks.iter().find(|b| b.sample == sample)
    }
}

/// Unconstrained coordinates: per sample `ln mu, ln sigma, logit xi` and
/// softmax logits of phi with the first fixed at zero.
struct Coordinates {
    offsets: Vec<usize>,
    contributors: Vec<usize>,
    len: usize,
}

impl Coordinates {
    fn new(contributors: Vec<usize>) -> Self {
        let mut offsets = Vec::with_capacity(contributors.len());
        let mut len = 0;
        for &k in &contributors {
            offsets.push(len);
            len += 3 + k - 1;
        }
        Coordinates {
            offsets,
            contributors,
            len,
        }
    }

    fn decode(&self, x: &[f64]) -> Vec<ModelParameters> {
        self.offsets
            .iter()
            .zip(&self.contributors)
            .map(|(&o, &k)| {
                let logits: Vec<f64> = std::iter::once(0.0).chain(x[o + 3..o + 2 + k].iter().copied()).collect();
                let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let w: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
                let total: f64 = w.iter().sum();
                ModelParameters {
                    mu: x[o].exp(),
                    sigma: x[o + 1].exp(),
                    xi: 1.0 / (1.0 + (-x[o + 2]).exp()),
                    phi: w.iter().map(|v| v / total).collect(),
                }
            })
            .collect()
    }

    fn encode(&self, params: &[ModelParameters]) -> Vec<f64> {
        let mut x = vec![0.0; self.len];
        for ((&o, &k), p) in self.offsets.iter().zip(&self.contributors).zip(params) {
            x[o] = p.mu.ln();
            x[o + 1] = p.sigma.ln();
            let xi = p.xi.clamp(1e-12, 1.0 - 1e-12);
            x[o + 2] = (xi / (1.0 - xi)).ln();
            let floor = 1e-12;
            let first = p.phi[0].max(floor).ln();
            for j in 1..k {
                x[o + 2 + j] = p.phi[j].max(floor).ln() - first;
            }
        }
        x
    }
}

/// Maximizes the (joint) likelihood over mu, sigma, xi and phi of every
/// sample.
///
/// Start 0 is deterministic; starts `1..=restarts` jitter it with a stream
/// of the seeded generator, so results do not depend on thread count. The
/// best optimum (lowest start index on ties) is re-optimized once.
pub fn fit_parameters(
    epgs: &[Epg],
    joint: &JointHypothesis,
    options: &FitOptions,
) -> Result<FitResult> {
    let model = CompiledModel::new(epgs, joint, options.threshold)?;
    let coords = Coordinates::new((0..epgs.len()).map(|i| model.contributors(i)).collect());

    let mut base = Vec::with_capacity(epgs.len());
    for (i, e) in epgs.iter().enumerate() {
        let k = model.contributors(i);
        base.push(ModelParameters {
            mu: e.mean_observed_height(options.threshold).unwrap_or(options.threshold),
            sigma: INITIAL_SIGMA,
            xi: INITIAL_XI,
            phi: vec![1.0 / k as f64; k],
        });
    }
    let x0 = coords.encode(&base);

    // Every share is positive and the stutter ratio lies strictly inside
    // (0, 1), so whether an observed peak can be explained depends on the
    // genotypes alone. A hypothesis that cannot explain the data has zero
    // likelihood everywhere and is returned unoptimized.
    if model.ln_likelihood(&base) == f64::NEG_INFINITY {
        return Ok(FitResult {
            hypothesis: joint.label.clone(),
            blocks: blocks(joint, epgs, base),
            log_likelihood: f64::NEG_INFINITY,
            converged: true,
            restarts_used: 1,
            evaluations: 1,
        });
    }

    let mut starts = vec![x0.clone()];
    for r in 1..=options.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        rng.set_stream(r as u64);
        let mut x = x0.clone();
        for (&o, &k) in coords.offsets.iter().zip(&coords.contributors) {
            for j in 0..2 {
                x[o + j] += LOG_SCALE_JITTER * rng.sample::<f64, _>(StandardNormal);
            }
            for j in 2..2 + k {
                x[o + j] += LOGIT_JITTER * rng.sample::<f64, _>(StandardNormal);
            }
        }
        starts.push(x);
    }
    for extra in &options.extra_starts {
        let ordered = model.order_params(extra)?;
        starts.push(coords.encode(&ordered));
    }

    let objective = |x: &[f64]| -model.ln_likelihood(&coords.decode(x));
    let runs: Vec<Minimum> = starts
        .par_iter()
        .map(|x| nelder_mead(objective, x, &options.optimizer))
        .collect();

    let mut best = 0;
    for (i, r) in runs.iter().enumerate() {
        if r.value < runs[best].value {
            best = i;
        }
    }
    let mut evaluations: usize = runs.iter().map(|r| r.evaluations).sum();
    let polished = nelder_mead(objective, &runs[best].x, &options.optimizer);
    evaluations += polished.evaluations;
    let chosen = if polished.value <= runs[best].value {
        polished
    } else {
        runs[best].clone()
    };
    if !chosen.value.is_finite() {
        return Err(Error::Numerical(format!(
            "hypothesis `{}` has no finite likelihood at any start",
            joint.label
        )));
    }

    Ok(FitResult {
        hypothesis: joint.label.clone(),
        blocks: blocks(joint, epgs, coords.decode(&chosen.x)),
        log_likelihood: -chosen.value,
        converged: chosen.converged,
        restarts_used: starts.len(),
        evaluations,
    })
}

fn blocks(joint: &JointHypothesis, epgs: &[Epg], params: Vec<ModelParameters>) -> Vec<ParameterBlock> {
    let labels = joint.contributor_labels();
    params
        .into_iter()
        .zip(epgs)
        .map(|(params, e)| ParameterBlock {
            sample: e.sample_label().to_string(),
            contributors: labels[e.sample_label()].clone(),
            params,
        })
        .collect()
}
