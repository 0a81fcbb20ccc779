mod common;

use std::collections::BTreeMap;
use std::sync::Arc;

use common::*;
use mixweigh::inference::{
    brute_force_joint_likelihood, brute_force_likelihood, genotype_prior, ENUMERATION_CAP,
};
use mixweigh::peakmodel::{ln_marker_likelihood, AlleleCountArray};
use mixweigh::{
    full_likelihood, joint_likelihood, Allele, Epg, Error, FrequencyTable, GenotypeProfile,
    Hypothesis, JointHypothesis, ModelParameters, SlotRef,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Continuous, ContinuousCDF, Gamma};

const THETAS: [f64; 3] = [0.0, 0.02, 0.05];

/// Equal log-likelihoods, counting two impossible explanations as equal.
fn agree(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() < 1e-10
}

#[test]
fn dp_matches_enumeration_single_sample() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..80 {
        let markers = marker_names(rng.random_range(1..=3));
        let table = random_table(&markers, 4, &mut rng);
        let n_known = rng.random_range(0..=2);
        let n_unknown = rng.random_range(1..=3);
        let people: Vec<GenotypeProfile> = (0..n_known + n_unknown)
            .map(|i| random_person(&format!("P{i}"), &table, &mut rng))
            .collect();
        let truth = random_params(people.len(), &mut rng);
        let epg = random_epg("E", &people, &truth, &markers, &mut rng);
        let theta = THETAS[case % 3];
        let h = Hypothesis::new("H", people[..n_known].to_vec(), n_unknown, table.clone(), theta)
            .unwrap();
        let params = random_params(people.len(), &mut rng);
        let dp = full_likelihood(&epg, &h, &params, 50.0).unwrap();
        let brute = brute_force_likelihood(&epg, &h, &params, 50.0).unwrap();
        assert!(
            agree(dp, brute),
            "case {case}: dp {dp} brute {brute} (diff {})",
            dp - brute
        );
    }
}

#[test]
fn dp_matches_enumeration_with_shared_unknowns() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for case in 0..40 {
        let markers = marker_names(rng.random_range(1..=2));
        let table = random_table(&markers, 4, &mut rng);
        let shared = random_person("S", &table, &mut rng);
        let a_other = random_person("A", &table, &mut rng);
        let b_other = random_person("B", &table, &mut rng);
        let pa = random_params(2, &mut rng);
        let pb = random_params(2, &mut rng);
        let ea = random_epg("EA", &[shared.clone(), a_other], &pa, &markers, &mut rng);
        // The second sample may miss a marker entirely.
        let eb_full = random_epg("EB", &[shared, b_other], &pb, &markers, &mut rng);
        let mut peaks = eb_full.peaks().clone();
        if markers.len() > 1 && rng.random_bool(0.5) {
            peaks.remove(&markers[0]);
        }
        let eb = Epg::new("EB", peaks).unwrap();
        let theta = THETAS[case % 3];
        let hyp = |n| Hypothesis::new("H", vec![], n, table.clone(), theta).unwrap();
        let joint = JointHypothesis::new(
            "J",
            BTreeMap::from([("EA".to_string(), hyp(2)), ("EB".to_string(), hyp(2))]),
            vec![vec![SlotRef::new("EA", 0), SlotRef::new("EB", 1)]],
        )
        .unwrap();
        let params = BTreeMap::from([("EA".to_string(), pa), ("EB".to_string(), pb)]);
        let epgs = [ea, eb];
        let dp = joint_likelihood(&epgs, &joint, &params, 50.0).unwrap();
        let brute = brute_force_joint_likelihood(&epgs, &joint, &params, 50.0).unwrap();
        assert!(agree(dp, brute), "case {case}: dp {dp} brute {brute}");
    }
}

fn two_allele_table(p10: f64) -> Arc<FrequencyTable> {
    let entries = BTreeMap::from([(
        "M".to_string(),
        BTreeMap::from([(Allele::repeats(10), p10), (Allele::repeats(11), 1.0 - p10)]),
    )]);
    Arc::new(FrequencyTable::new("P", 100, entries).unwrap())
}

fn one_marker_epg(label: &str, peaks: &[(u32, f64)]) -> Epg {
    Epg::new(
        label,
        BTreeMap::from([(
            "M".to_string(),
            peaks.iter().map(|&(a, h)| (Allele::repeats(a), h)).collect(),
        )]),
    )
    .unwrap()
}

#[test]
fn hand_expansion_one_unknown() {
    // Genotypes 10/10, 10/11, 11/11 with priors 0.09, 0.42, 0.49; the last
    // cannot explain the peak at 10.
    let table = two_allele_table(0.3);
    let epg = one_marker_epg("E", &[(10, 400.0)]);
    let (mu, sigma) = (500.0, 0.8);
    let params = ModelParameters::new(mu, sigma, 0.0, vec![1.0]).unwrap();
    let h = Hypothesis::new("H", vec![], 1, table, 0.0).unwrap();
    let s2 = sigma * sigma;
    let gamma = |d: f64| Gamma::new(d / s2, 1.0 / (mu * s2)).unwrap();
    let expected = 0.09 * gamma(2.0).pdf(400.0) + 0.42 * gamma(1.0).pdf(400.0) * gamma(1.0).cdf(50.0);
    let got = full_likelihood(&epg, &h, &params, 50.0).unwrap();
    assert!((got - expected.ln()).abs() < 1e-12, "{got} vs {}", expected.ln());
}

#[test]
fn hand_expansion_with_theta() {
    let table = two_allele_table(0.4);
    let epg = one_marker_epg("E", &[(10, 900.0)]);
    let (mu, s2) = (450.0, 0.25);
    let params = ModelParameters::new(mu, 0.5, 0.0, vec![0.5, 0.5]).unwrap();
    let t = 0.05;
    let h = Hypothesis::new("H", vec![], 2, table.clone(), t).unwrap();
    let got = full_likelihood(&epg, &h, &params, 50.0).unwrap();

    let p = 0.4;
    let both_homozygous = p * (t + (1.0 - t) * p) * (2.0 * t + (1.0 - t) * p) * (3.0 * t + (1.0 - t) * p)
        / ((1.0 + t) * (1.0 + 2.0 * t));
    let g = |a, b| (Allele::repeats(a), Allele::repeats(b));
    assert!(
        (genotype_prior(&[g(10, 10), g(10, 10)], "M", &table, t).unwrap() - both_homozygous).abs()
            < 1e-15
    );

    // Sum over ordered genotype pairs; each person carries 0.5 of the dose.
    let gamma = |d: f64| Gamma::new(d / s2, 1.0 / (mu * s2)).unwrap();
    let genotypes = [g(10, 10), g(10, 11), g(11, 11)];
    let tens = |x: (Allele, Allele)| (x.0 == Allele::repeats(10)) as u8 as f64 + (x.1 == Allele::repeats(10)) as u8 as f64;
    let mut expected = 0.0;
    for &a in &genotypes {
        for &b in &genotypes {
            let d10 = 0.5 * (tens(a) + tens(b));
            if d10 == 0.0 {
                continue;
            }
            let d11 = 2.0 - d10;
            let drop = if d11 > 0.0 { gamma(d11).cdf(50.0) } else { 1.0 };
            expected += genotype_prior(&[a, b], "M", &table, t).unwrap() * gamma(d10).pdf(900.0) * drop;
        }
    }
    assert!((got - expected.ln()).abs() < 1e-12, "{got} vs {}", expected.ln());
}

#[test]
fn known_contributors_only() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let markers = marker_names(3);
    let table = random_table(&markers, 4, &mut rng);
    let people: Vec<_> = (0..2).map(|i| random_person(&format!("K{i}"), &table, &mut rng)).collect();
    let params = random_params(2, &mut rng);
    let epg = random_epg("E", &people, &params, &markers, &mut rng);
    let h = Hypothesis::new("H", people.clone(), 0, table, 0.0).unwrap();
    let got = full_likelihood(&epg, &h, &params, 50.0).unwrap();
    let mut expected = 0.0;
    for m in &markers {
        let gts: Vec<_> = people.iter().map(|p| p.at(m).unwrap()).collect();
        let counts = AlleleCountArray::from_genotypes(&gts);
        expected += ln_marker_likelihood(epg.marker(m).unwrap(), &counts, &params, 50.0).unwrap();
    }
    assert!((got - expected).abs() < 1e-10);
}

#[test]
fn unknowns_are_exchangeable() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for theta in THETAS {
        let markers = marker_names(3);
        let table = random_table(&markers, 5, &mut rng);
        let people: Vec<_> = (0..3).map(|i| random_person(&format!("P{i}"), &table, &mut rng)).collect();
        let params = random_params(3, &mut rng);
        let epg = random_epg("E", &people, &params, &markers, &mut rng);
        let h = Hypothesis::new("H", vec![people[0].clone()], 2, table, theta).unwrap();
        let a = full_likelihood(&epg, &h, &params, 50.0).unwrap();
        let mut swapped = params.clone();
        swapped.phi.swap(1, 2);
        let b = full_likelihood(&epg, &h, &swapped, 50.0).unwrap();
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }
}

#[test]
fn independent_samples_factorize() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let markers = marker_names(4);
    let table = random_table(&markers, 5, &mut rng);
    let people: Vec<_> = (0..4).map(|i| random_person(&format!("P{i}"), &table, &mut rng)).collect();
    let pa = random_params(2, &mut rng);
    let pb = random_params(3, &mut rng);
    let ea = random_epg("A", &people[..2], &pa, &markers, &mut rng);
    let eb = random_epg("B", &people[1..], &pb, &markers, &mut rng);
    let ha = Hypothesis::new("H", vec![people[0].clone()], 1, table.clone(), 0.03).unwrap();
    let hb = Hypothesis::new("H", vec![], 3, table, 0.03).unwrap();
    let joint = JointHypothesis::new(
        "H",
        BTreeMap::from([("A".to_string(), ha.clone()), ("B".to_string(), hb.clone())]),
        vec![],
    )
    .unwrap();
    let params = BTreeMap::from([("A".to_string(), pa.clone()), ("B".to_string(), pb.clone())]);
    let j = joint_likelihood(&[ea.clone(), eb.clone()], &joint, &params, 50.0).unwrap();
    let a = full_likelihood(&ea, &ha, &pa, 50.0).unwrap();
    let b = full_likelihood(&eb, &hb, &pb, 50.0).unwrap();
    assert!((j - (a + b)).abs() < 1e-9 * j.abs().max(1.0));
}

#[test]
fn replicates_of_one_unknown() {
    // Two replicates of a single unknown source: one genotype sum, not two.
    let table = two_allele_table(0.3);
    let e1 = one_marker_epg("R1", &[(10, 700.0), (11, 650.0)]);
    let e2 = one_marker_epg("R2", &[(10, 300.0)]);
    let h = Hypothesis::new("H", vec![], 1, table.clone(), 0.0).unwrap();
    let joint = JointHypothesis::new(
        "H",
        BTreeMap::from([("R1".to_string(), h.clone()), ("R2".to_string(), h)]),
        vec![vec![SlotRef::new("R1", 0), SlotRef::new("R2", 0)]],
    )
    .unwrap();
    let p1 = ModelParameters::new(600.0, 0.5, 0.0, vec![1.0]).unwrap();
    let p2 = ModelParameters::new(250.0, 0.7, 0.0, vec![1.0]).unwrap();
    let params = BTreeMap::from([("R1".to_string(), p1.clone()), ("R2".to_string(), p2.clone())]);
    let got = joint_likelihood(&[e1, e2], &joint, &params, 50.0).unwrap();

    // Only 10/11 explains R1; R2 then needs a dropout at 11.
    let g = |p: &ModelParameters, d: f64| {
        let s2 = p.sigma * p.sigma;
        Gamma::new(d / s2, 1.0 / (p.mu * s2)).unwrap()
    };
    let expected = 0.42
        * g(&p1, 1.0).pdf(700.0)
        * g(&p1, 1.0).pdf(650.0)
        * g(&p2, 1.0).pdf(300.0)
        * g(&p2, 1.0).cdf(50.0);
    assert!((got - expected.ln()).abs() < 1e-12);
}

#[test]
fn prior_sums_to_one() {
    let entries = BTreeMap::from([(
        "M".to_string(),
        BTreeMap::from([
            (Allele::repeats(8), 0.1),
            (Allele::repeats(9), 0.2),
            (Allele::from_hundredths(930).unwrap(), 0.3),
            (Allele::repeats(10), 0.4),
        ]),
    )]);
    let table = FrequencyTable::new("P", 100, entries).unwrap();
    let alleles: Vec<Allele> = table.marker("M").unwrap().keys().copied().collect();
    let mut genotypes = Vec::new();
    for i in 0..alleles.len() {
        for j in i..alleles.len() {
            genotypes.push((alleles[i], alleles[j]));
        }
    }
    for theta in [0.0, 0.01, 0.02, 0.05] {
        for persons in 1..=3u32 {
            let n = genotypes.len().pow(persons);
            let mut total = 0.0;
            for mut idx in 0..n {
                let mut combo = Vec::new();
                for _ in 0..persons {
                    combo.push(genotypes[idx % genotypes.len()]);
                    idx /= genotypes.len();
                }
                total += genotype_prior(&combo, "M", &table, theta).unwrap();
            }
            assert!((total - 1.0).abs() < 1e-9, "theta {theta}, {persons} persons: {total}");
        }
    }
}

#[test]
fn errors_are_reported() {
    let table = two_allele_table(0.5);
    let epg = one_marker_epg("E", &[(10, 400.0)]);
    let params = ModelParameters::new(500.0, 0.5, 0.0, vec![0.5, 0.5]).unwrap();
    let h = Hypothesis::new("H", vec![], 1, table.clone(), 0.0).unwrap();
    assert!(matches!(
        full_likelihood(&epg, &h, &params, 50.0),
        Err(Error::InvalidParameters(_))
    ));
    let p1 = ModelParameters::new(500.0, 0.5, 0.0, vec![1.0]).unwrap();
    assert!(full_likelihood(&epg, &h, &p1, 0.0).is_err());
    let other = Epg::new(
        "E",
        BTreeMap::from([("X".to_string(), BTreeMap::from([(Allele::repeats(10), 400.0)]))]),
    )
    .unwrap();
    assert!(matches!(
        full_likelihood(&other, &h, &p1, 50.0),
        Err(Error::UnknownMarker { .. })
    ));
    let absent = GenotypeProfile::new("K", Vec::<(String, (Allele, Allele))>::new());
    let hk = Hypothesis::new("H", vec![absent], 0, table, 0.0).unwrap();
    assert!(matches!(
        full_likelihood(&epg, &hk, &p1, 50.0),
        Err(Error::InvalidHypothesis(_))
    ));
}

#[test]
fn enumeration_cap_is_enforced() {
    let alleles: BTreeMap<Allele, f64> = (0..30).map(|i| (Allele::repeats(5 + i), 1.0 / 30.0)).collect();
    let table = Arc::new(
        FrequencyTable::new("P", 100, BTreeMap::from([("M".to_string(), alleles)])).unwrap(),
    );
    // 465 genotypes: three unknowns need about 1e8 combinations.
    let epg = one_marker_epg("E", &[(10, 400.0)]);
    let h = Hypothesis::new("H", vec![], 3, table.clone(), 0.0).unwrap();
    let params = ModelParameters::new(500.0, 0.5, 0.0, vec![0.5, 0.3, 0.2]).unwrap();
    match brute_force_likelihood(&epg, &h, &params, 50.0) {
        Err(e @ Error::StateSpaceTooLarge { .. }) => assert!(e.is_numerical()),
        other => panic!("expected cap error, got {other:?}"),
    }
    assert!(465f64.powi(3) > ENUMERATION_CAP);
    // The ladder DP has no such limit.
    assert!(full_likelihood(&epg, &h, &params, 50.0).unwrap().is_finite());
}
