//! Allele-frequency databases for reference populations.
//!
//! A [`FrequencyTable`] is immutable once built: loading and admixing both
//! renormalize every marker so its frequencies sum to one. Alleles missing
//! from a table are priced at the floor `5 / (2N)` on lookup, and
//! [`FrequencyTable::marker_distribution`] renormalizes after such imputation
//! so genotype priors stay proper.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::allele::Allele;
use crate::error::{Error, Result};

/// Published tables are rounded; beyond this deviation the file is rejected.
pub const SUM_TOLERANCE: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrequencyTable {
    population_label: String,
    sample_size: u32,
    entries: BTreeMap<String, BTreeMap<Allele, f64>>,
}

/// Result of a single frequency lookup.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lookup {
    pub frequency: f64,
    /// The allele was absent from the table and received the rare-allele floor.
    pub imputed: bool,
}

/// Frequencies for one marker over a fixed allele set, summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkerDistribution {
    alleles: Vec<Allele>,
    frequencies: Vec<f64>,
    imputed: Vec<bool>,
}

impl MarkerDistribution {
    pub fn alleles(&self) -> &[Allele] {
        &self.alleles
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn len(&self) -> usize {
        self.alleles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alleles.is_empty()
    }

    pub fn get(&self, allele: Allele) -> Option<f64> {
        self.alleles
            .binary_search(&allele)
            .ok()
            .map(|i| self.frequencies[i])
    }

    pub fn is_imputed(&self, allele: Allele) -> bool {
        self.alleles
            .binary_search(&allele)
            .map(|i| self.imputed[i])
            .unwrap_or(false)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Allele, f64)> + '_ {
        self.alleles.iter().copied().zip(self.frequencies.iter().copied())
    }
}

/// Weighting scheme for [`admix_tables`].
#[derive(Clone, Debug, PartialEq)]
pub enum AdmixWeights {
    /// Weight each table by its number of sampled individuals.
    BySampleSize,
    Explicit(Vec<f64>),
}

impl FrequencyTable {
    /// Validates raw entries and renormalizes each marker.
    pub fn new(
        population_label: impl Into<String>,
        sample_size: u32,
        entries: BTreeMap<String, BTreeMap<Allele, f64>>,
    ) -> Result<Self> {
        let population_label = population_label.into();
        if sample_size == 0 {
            return Err(Error::InvalidFrequencyTable(format!(
                "population `{population_label}` has sample size 0"
            )));
        }
        let mut normalized = BTreeMap::new();
        for (marker, alleles) in entries {
            if alleles.is_empty() {
                return Err(Error::InvalidFrequencyTable(format!(
                    "marker `{marker}` has no alleles"
                )));
            }
            let mut sum = 0.0;
            for (allele, &f) in &alleles {
                if !(f > 0.0 && f <= 1.0) {
                    return Err(Error::InvalidFrequencyTable(format!(
                        "marker `{marker}` allele {allele}: frequency {f} outside (0, 1]"
                    )));
                }
                sum += f;
            }
            if (sum - 1.0).abs() > SUM_TOLERANCE {
                return Err(Error::InvalidFrequencyTable(format!(
                    "marker `{marker}`: frequencies sum to {sum:.6}, outside [{:.2}, {:.2}]",
                    1.0 - SUM_TOLERANCE,
                    1.0 + SUM_TOLERANCE
                )));
            }
            let alleles = alleles.into_iter().map(|(a, f)| (a, f / sum)).collect();
            normalized.insert(marker, alleles);
        }
        Ok(FrequencyTable {
            population_label,
            sample_size,
            entries: normalized,
        })
    }

    pub fn population_label(&self) -> &str {
        &self.population_label
    }

    pub fn sample_size(&self) -> u32 {
        self.sample_size
    }

    pub fn markers(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn has_marker(&self, marker: &str) -> bool {
        self.entries.contains_key(marker)
    }

    pub fn marker(&self, marker: &str) -> Result<&BTreeMap<Allele, f64>> {
        self.entries.get(marker).ok_or_else(|| Error::UnknownMarker {
            marker: marker.to_string(),
            population: self.population_label.clone(),
        })
    }

    pub fn entries(&self) -> &BTreeMap<String, BTreeMap<Allele, f64>> {
        &self.entries
    }

    /// Same table under a different label.
    pub fn relabeled(mut self, label: impl Into<String>) -> Self {
        self.population_label = label.into();
        self
    }

    /// Rare-allele floor `5 / (2N)`.
    pub fn imputation_floor(&self) -> f64 {
        5.0 / (2.0 * self.sample_size as f64)
    }

    /// Stored frequency, or the rare-allele floor if the allele was never
    /// observed in this population.
    pub fn lookup_frequency(&self, marker: &str, allele: Allele) -> Result<Lookup> {
        let alleles = self.marker(marker)?;
        Ok(match alleles.get(&allele) {
            Some(&frequency) => Lookup {
                frequency,
                imputed: false,
            },
            None => Lookup {
                frequency: self.imputation_floor(),
                imputed: true,
            },
        })
    }

    /// Distribution over the table's alleles at `marker` plus `extra` alleles,
    /// renormalized if any extra allele had to be imputed.
    pub fn marker_distribution(
        &self,
        marker: &str,
        extra: impl IntoIterator<Item = Allele>,
    ) -> Result<MarkerDistribution> {
        let stored = self.marker(marker)?;
        let mut all: BTreeMap<Allele, (f64, bool)> =
            stored.iter().map(|(&a, &f)| (a, (f, false))).collect();
        for allele in extra {
            all.entry(allele)
                .or_insert_with(|| (self.imputation_floor(), true));
        }
        let total: f64 = all.values().map(|(f, _)| f).sum();
        let any_imputed = all.values().any(|&(_, imp)| imp);
        let scale = if any_imputed { total } else { 1.0 };
        let mut dist = MarkerDistribution {
            alleles: Vec::with_capacity(all.len()),
            frequencies: Vec::with_capacity(all.len()),
            imputed: Vec::with_capacity(all.len()),
        };
        for (a, (f, imp)) in all {
            dist.alleles.push(a);
            dist.frequencies.push(f / scale);
            dist.imputed.push(imp);
        }
        Ok(dist)
    }

    /// Writes the table in the `marker,allele,frequency` CSV schema.
    pub fn write_csv<W: Write>(&self, writer: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["marker", "allele", "frequency"])?;
        for (marker, alleles) in &self.entries {
            for (allele, f) in alleles {
                w.write_record([marker.as_str(), &allele.to_string(), &format_frequency(*f)])?;
            }
        }
        w.flush()
    }
}

fn format_frequency(f: f64) -> String {
    // Shortest representation that round-trips.
    format!("{f}")
}

/// Reads a `marker,allele,frequency` CSV.
pub fn load_frequency_table(
    path: impl AsRef<Path>,
    population_label: &str,
    sample_size: u32,
) -> Result<FrequencyTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_frequency_table(file, path, population_label, sample_size)
}

pub fn read_frequency_table<R: std::io::Read>(
    reader: R,
    path: &Path,
    population_label: &str,
    sample_size: u32,
) -> Result<FrequencyTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["marker", "allele", "frequency"] {
        return Err(Error::parse(
            path,
            1,
            "expected header `marker,allele,frequency`",
        ));
    }
    let mut entries: BTreeMap<String, BTreeMap<Allele, f64>> = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::parse(path, line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 3 {
            return Err(Error::parse(path, line, "expected 3 fields"));
        }
        let marker = record[0].to_string();
        if marker.is_empty() {
            return Err(Error::parse(path, line, "empty marker name"));
        }
        let allele: Allele = record[1]
            .parse()
            .map_err(|e: Error| Error::parse(path, line, e.to_string()))?;
        let frequency: f64 = record[2].parse().map_err(|_| {
            Error::parse(path, line, format!("invalid frequency `{}`", &record[2]))
        })?;
        if !(frequency > 0.0 && frequency <= 1.0) {
            return Err(Error::parse(
                path,
                line,
                format!("frequency {frequency} outside (0, 1]"),
            ));
        }
        let slot = entries.entry(marker.clone()).or_default();
        if slot.insert(allele, frequency).is_some() {
            return Err(Error::parse(
                path,
                line,
                format!("duplicate entry for marker `{marker}` allele {allele}"),
            ));
        }
    }
    FrequencyTable::new(population_label, sample_size, entries).map_err(|e| match e {
        Error::InvalidFrequencyTable(msg) => Error::parse(path, 0, msg),
        other => other,
    })
}

/// Weighted average of allele frequencies across populations.
///
/// Markers and alleles are unioned; an allele missing from a table counts as
/// frequency zero there. The result is renormalized per marker and its sample
/// size is the sum of the inputs'.
pub fn admix_tables(
    tables: &[FrequencyTable],
    weights: &AdmixWeights,
    label: impl Into<String>,
) -> Result<FrequencyTable> {
    if tables.is_empty() {
        return Err(Error::InvalidArgument("admix needs at least one table".into()));
    }
    let weights: Vec<f64> = match weights {
        AdmixWeights::BySampleSize => tables.iter().map(|t| t.sample_size as f64).collect(),
        AdmixWeights::Explicit(w) => {
            if w.len() != tables.len() {
                return Err(Error::InvalidArgument(format!(
                    "{} weights given for {} tables",
                    w.len(),
                    tables.len()
                )));
            }
            w.clone()
        }
    };
    if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
        return Err(Error::InvalidArgument(format!(
            "admix weight {w} is not positive"
        )));
    }
    let weight_total: f64 = weights.iter().sum();

    let markers: BTreeSet<&str> = tables.iter().flat_map(|t| t.markers()).collect();
    let mut entries = BTreeMap::new();
    for marker in markers {
        let alleles: BTreeSet<Allele> = tables
            .iter()
            .filter_map(|t| t.entries.get(marker))
            .flat_map(|m| m.keys().copied())
            .collect();
        let mut mixed: BTreeMap<Allele, f64> = alleles
            .into_iter()
            .map(|a| {
                let num: f64 = tables
                    .iter()
                    .zip(&weights)
                    .map(|(t, w)| {
                        w * t
                            .entries
                            .get(marker)
                            .and_then(|m| m.get(&a))
                            .copied()
                            .unwrap_or(0.0)
                    })
                    .sum();
                (a, num / weight_total)
            })
            .collect();
        let sum: f64 = mixed.values().sum();
        for f in mixed.values_mut() {
            *f /= sum;
        }
        entries.insert(marker.to_string(), mixed);
    }
    let sample_size = tables.iter().map(|t| t.sample_size).sum();
    Ok(FrequencyTable {
        population_label: label.into(),
        sample_size,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn a(s: &str) -> Allele {
        s.parse().unwrap()
    }

    fn table(label: &str, n: u32, rows: &[(&str, &str, f64)]) -> FrequencyTable {
        let mut entries: BTreeMap<String, BTreeMap<Allele, f64>> = BTreeMap::new();
        for (m, al, f) in rows {
            entries.entry(m.to_string()).or_default().insert(a(al), *f);
        }
        FrequencyTable::new(label, n, entries).unwrap()
    }

    fn parse(text: &str) -> Result<FrequencyTable> {
        read_frequency_table(text.as_bytes(), Path::new("mem.csv"), "X", 100)
    }

    #[test]
    fn load_keeps_normalized_table() {
        let t = parse("marker,allele,frequency\nTH01,10,0.5\nTH01,11,0.5\n").unwrap();
        let sum: f64 = t.marker("TH01").unwrap().values().sum();
        assert_eq!(sum, 1.0);
    }

    #[test]
    fn load_renormalizes_small_deviation() {
        let t = parse("marker,allele,frequency\nTH01,10,0.49\nTH01,11,0.49\n").unwrap();
        let m = t.marker("TH01").unwrap();
        assert_relative_eq!(m[&a("10")], 0.5, epsilon = 1e-15);
        assert_relative_eq!(m[&a("11")], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn load_rejects_large_deviation() {
        let err = parse("marker,allele,frequency\nTH01,10,0.5\nTH01,11,0.3\n").unwrap_err();
        assert!(err.to_string().contains("sum"), "{err}");
    }

    #[test]
    fn load_rejects_bad_rows() {
        assert!(parse("marker,allele,frequency\nTH01,10,0.5\nTH01,10,0.5\n").is_err());
        assert!(parse("marker,allele,frequency\nTH01,10,0\nTH01,11,1\n").is_err());
        assert!(parse("marker,allele,frequency\nTH01,10,1.2\n").is_err());
        assert!(parse("marker,allele,frequency\nTH01,ten,0.5\n").is_err());
        assert!(parse("marker,allele,frequency\nTH01,10\n").is_err());
        assert!(parse("marker,allele,freq\nTH01,10,1\n").is_err());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = parse("marker,allele,frequency\nTH01,10,0.5\nTH01,x,0.5\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn admix_single_table_is_identity() {
        let t = table("A", 50, &[("M", "10", 0.25), ("M", "11", 0.75)]);
        let mixed = admix_tables(&[t.clone()], &AdmixWeights::Explicit(vec![3.7]), "A").unwrap();
        for (m, freqs) in t.entries() {
            for (a, f) in freqs {
                assert!((mixed.entries()[m][a] - f).abs() < 1e-15);
            }
        }
        assert_eq!(mixed.sample_size(), 50);
    }

    #[test]
    fn admix_by_sample_size() {
        // One allele at 0.1/0.2/0.3, the rest of the mass on a second allele.
        let tables = [
            table("MA", 102, &[("M", "10", 0.1), ("M", "11", 0.9)]),
            table("PO", 123, &[("M", "10", 0.2), ("M", "11", 0.8)]),
            table("ES", 138, &[("M", "10", 0.3), ("M", "11", 0.7)]),
        ];
        let mixed = admix_tables(&tables, &AdmixWeights::BySampleSize, "ROM").unwrap();
        let expected = (10.2 + 24.6 + 41.4) / 363.0;
        assert_relative_eq!(mixed.marker("M").unwrap()[&a("10")], expected, epsilon = 1e-12);
        assert_relative_eq!(expected, 0.20992, epsilon = 1e-5);
        assert_eq!(mixed.sample_size(), 363);
    }

    #[test]
    fn admix_zero_fills_missing_alleles() {
        let t1 = table("A", 100, &[("M", "33", 0.04), ("M", "10", 0.96)]);
        let t2 = table("B", 100, &[("M", "10", 1.0)]);
        let mixed = admix_tables(&[t1, t2], &AdmixWeights::BySampleSize, "AB").unwrap();
        assert_relative_eq!(mixed.marker("M").unwrap()[&a("33")], 0.02, epsilon = 1e-15);
    }

    #[test]
    fn admix_rejects_bad_input() {
        let t = table("A", 100, &[("M", "10", 1.0)]);
        assert!(admix_tables(&[], &AdmixWeights::BySampleSize, "x").is_err());
        assert!(admix_tables(&[t.clone()], &AdmixWeights::Explicit(vec![0.0]), "x").is_err());
        assert!(admix_tables(&[t.clone()], &AdmixWeights::Explicit(vec![-1.0]), "x").is_err());
        assert!(admix_tables(&[t], &AdmixWeights::Explicit(vec![1.0, 2.0]), "x").is_err());
    }

    #[test]
    fn lookup_hits_and_imputes() {
        let t = table("MA", 102, &[("D8S1179", "16", 0.25), ("D8S1179", "13", 0.75)]);
        assert_eq!(
            t.lookup_frequency("D8S1179", a("16")).unwrap(),
            Lookup {
                frequency: 0.25,
                imputed: false
            }
        );
        let miss = t.lookup_frequency("D8S1179", a("9")).unwrap();
        assert!(miss.imputed);
        assert_relative_eq!(miss.frequency, 5.0 / 204.0, epsilon = 1e-15);
        assert_relative_eq!(miss.frequency, 0.02451, epsilon = 1e-5);
        assert!(matches!(
            t.lookup_frequency("D99S999", a("9")),
            Err(Error::UnknownMarker { .. })
        ));
    }

    #[test]
    fn distribution_renormalizes_after_imputation() {
        let t = table("MA", 102, &[("M", "16", 0.25), ("M", "13", 0.75)]);
        let d = t.marker_distribution("M", [a("16")]).unwrap();
        assert_eq!(d.frequencies(), &[0.75, 0.25]);
        let d = t.marker_distribution("M", [a("9"), a("16")]).unwrap();
        let total: f64 = d.frequencies().iter().sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-12);
        assert!(d.is_imputed(a("9")));
        assert!(!d.is_imputed(a("16")));
        let floor = 5.0 / 204.0;
        assert_relative_eq!(d.get(a("9")).unwrap(), floor / (1.0 + floor), epsilon = 1e-15);
    }

    #[test]
    fn csv_round_trip() {
        let t = table("A", 10, &[("M", "9.3", 0.125), ("M", "10", 0.875), ("N", "7", 1.0)]);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = read_frequency_table(buf.as_slice(), Path::new("x"), "A", 10).unwrap();
        assert_eq!(back, t);
    }
}
