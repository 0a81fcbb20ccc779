//! Forward sampling of EPGs from the gamma peak-height model.
//!
//! Every (marker, allele) draw comes from its own ChaCha20 stream, keyed by
//! the seed and a 64-bit FNV-1a hash of the marker name and allele. Output
//! is therefore independent of evaluation order and thread count, and
//! identical across platforms.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::Gamma;
use rayon::prelude::*;

use crate::allele::Allele;
use crate::error::{Error, Result};
use crate::freqdb::FrequencyTable;
use crate::peakmodel::{effective_dose, AlleleCountArray, ModelParameters};
use crate::profiles::{Epg, GenotypeProfile};

#[derive(Clone, Debug)]
pub struct SimulationSpec {
    pub sample_label: String,
    /// Contributors in the order of `params.phi`.
    pub genotypes: Vec<GenotypeProfile>,
    pub params: ModelParameters,
    pub threshold: f64,
    pub markers: Vec<String>,
    pub seed: u64,
}

impl SimulationSpec {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.params.phi.len() != self.genotypes.len() {
            return Err(Error::InvalidParameters(format!(
                "phi has {} entries for {} genotypes",
                self.params.phi.len(),
                self.genotypes.len()
            )));
        }
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "threshold {} must be positive",
                self.threshold
            )));
        }
        for m in &self.markers {
            if let Some(g) = self.genotypes.iter().find(|g| g.at(m).is_none()) {
                return Err(Error::InvalidProfile(format!(
                    "`{}` has no genotype at marker `{m}`",
                    g.person_label()
                )));
            }
        }
        Ok(())
    }
}

fn stream_id(marker: &str, allele: Allele) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    let bytes = marker
        .bytes()
        .chain([0u8])
        .chain(allele.hundredths().to_le_bytes());
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(PRIME);
    }
    h
}

/// Draws one EPG. Positions with positive dose are sampled; draws below the
/// threshold are dropped. Every listed marker is present, possibly empty.
pub fn simulate_epg(spec: &SimulationSpec) -> Result<Epg> {
    spec.validate()?;
    let p = &spec.params;
    let s2 = p.sigma * p.sigma;
    let peaks: BTreeMap<String, BTreeMap<Allele, f64>> = spec
        .markers
        .par_iter()
        .map(|marker| {
            let gts: Vec<(Allele, Allele)> =
                spec.genotypes.iter().map(|g| g.at(marker).unwrap()).collect();
            let counts = AlleleCountArray::from_genotypes(&gts);
            let mut positions = counts.alleles();
            positions.extend(counts.alleles().iter().filter_map(|a| a.one_down()));
            let mut out = BTreeMap::new();
            for a in positions {
                let dose = effective_dose(&p.phi, p.xi, &counts, a);
                if dose <= 0.0 {
                    continue;
                }
                let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
                rng.set_stream(stream_id(marker, a));
                let gamma = Gamma::new(dose / s2, p.mu * s2).expect("positive shape and scale");
                let h = gamma.sample(&mut rng);
                if h >= spec.threshold {
                    out.insert(a, h);
                }
            }
            (marker.clone(), out)
        })
        .collect();
    Epg::new(spec.sample_label.clone(), peaks)
}

/// Random allele frequencies: alleles `first_allele..first_allele + n` at
/// each marker, proportions drawn from a flat Dirichlet.
pub fn synthetic_population<R: Rng>(
    label: &str,
    markers: &[String],
    alleles_per_marker: usize,
    first_allele: u32,
    sample_size: u32,
    rng: &mut R,
) -> Result<FrequencyTable> {
    if alleles_per_marker == 0 {
        return Err(Error::InvalidArgument("need at least one allele per marker".into()));
    }
    let entries = markers
        .iter()
        .map(|m| {
            let w: Vec<f64> = (0..alleles_per_marker)
                .map(|_| -(1.0 - rng.random::<f64>()).ln())
                .collect();
            let total: f64 = w.iter().sum();
            let freqs = w
                .iter()
                .enumerate()
                .map(|(i, v)| (Allele::repeats(first_allele + i as u32), v / total))
                .collect();
            (m.clone(), freqs)
        })
        .collect();
    FrequencyTable::new(label, sample_size, entries)
}

/// A genotype drawn from `population` at each of its markers under
/// Hardy-Weinberg proportions.
pub fn random_profile<R: Rng>(
    label: &str,
    population: &FrequencyTable,
    rng: &mut R,
) -> GenotypeProfile {
    let genotype: Vec<(String, (Allele, Allele))> = population
        .entries()
        .iter()
        .map(|(m, freqs)| {
            let alleles: Vec<Allele> = freqs.keys().copied().collect();
            let index = WeightedIndex::new(freqs.values().copied())
                .expect("frequency tables hold positive weights");
            let a = alleles[index.sample(rng)];
            let b = alleles[index.sample(rng)];
            (m.clone(), (a, b))
        })
        .collect();
    GenotypeProfile::new(label, genotype)
}
