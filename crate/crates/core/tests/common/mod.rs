#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use mixweigh::simulate::{simulate_epg, SimulationSpec};
use mixweigh::{Allele, Epg, FrequencyTable, GenotypeProfile, ModelParameters};
use rand::Rng;

pub fn dirichlet<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln() + 0.05).collect();
    let t: f64 = w.iter().sum();
    w.iter().map(|v| v / t).collect()
}

/// Table over `markers`, each with 2..=max_alleles alleles. Some markers
/// mix integer and x.3 designations.
pub fn random_table<R: Rng>(markers: &[String], max_alleles: usize, rng: &mut R) -> Arc<FrequencyTable> {
    let entries = markers
        .iter()
        .map(|m| {
            let n = rng.random_range(2..=max_alleles);
            let mut alleles = std::collections::BTreeSet::new();
            while alleles.len() < n {
                let base = rng.random_range(8..13) * 100;
                let frac = if rng.random_bool(0.2) { 30 } else { 0 };
                alleles.insert(Allele::from_hundredths(base + frac).unwrap());
            }
            let f = dirichlet(n, rng);
            (m.clone(), alleles.into_iter().zip(f).collect())
        })
        .collect();
    Arc::new(FrequencyTable::new("P", 100, entries).unwrap())
}

pub fn random_person<R: Rng>(label: &str, table: &FrequencyTable, rng: &mut R) -> GenotypeProfile {
    GenotypeProfile::new(
        label,
        table
            .entries()
            .iter()
            .map(|(m, f)| {
                let alleles: Vec<Allele> = f.keys().copied().collect();
                let a = alleles[rng.random_range(0..alleles.len())];
                let b = alleles[rng.random_range(0..alleles.len())];
                (m.clone(), (a, b))
            })
            .collect::<Vec<_>>(),
    )
}

pub fn random_params<R: Rng>(k: usize, rng: &mut R) -> ModelParameters {
    ModelParameters::new(
        rng.random_range(150.0..1500.0),
        rng.random_range(0.3..1.0),
        rng.random_range(0.0..0.15),
        dirichlet(k, rng),
    )
    .unwrap()
}

/// EPG simulated from `people`, occasionally with an extra off-table peak.
pub fn random_epg<R: Rng>(
    label: &str,
    people: &[GenotypeProfile],
    params: &ModelParameters,
    markers: &[String],
    rng: &mut R,
) -> Epg {
    let e = simulate_epg(&SimulationSpec {
        sample_label: label.into(),
        genotypes: people.to_vec(),
        params: params.clone(),
        threshold: 50.0,
        markers: markers.to_vec(),
        seed: rng.random(),
    })
    .unwrap();
    let mut peaks: BTreeMap<String, BTreeMap<Allele, f64>> = e.peaks().clone();
    if rng.random_bool(0.2) {
        let m = &markers[rng.random_range(0..markers.len())];
        peaks
            .get_mut(m)
            .unwrap()
            .insert(Allele::repeats(14), rng.random_range(60.0..400.0));
    }
    if rng.random_bool(0.2) {
        let m = &markers[rng.random_range(0..markers.len())];
        peaks.get_mut(m).unwrap().insert(Allele::repeats(9), 30.0);
    }
    Epg::new(label, peaks).unwrap()
}

pub fn marker_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("M{i}")).collect()
}
