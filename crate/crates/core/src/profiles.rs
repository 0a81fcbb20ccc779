//! Genotype profiles, electropherograms and presence-index screening.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::allele::Allele;
use crate::error::{Error, Result};

/// A person's unordered allele pair per marker. Pairs are stored with the
/// smaller designation first; equal alleles mean a homozygote.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GenotypeProfile {
    person_label: String,
    genotype: BTreeMap<String, (Allele, Allele)>,
}

impl GenotypeProfile {
    pub fn new(
        person_label: impl Into<String>,
        genotype: impl IntoIterator<Item = (String, (Allele, Allele))>,
    ) -> Self {
        let genotype = genotype
            .into_iter()
            .map(|(m, (a, b))| (m, if a <= b { (a, b) } else { (b, a) }))
            .collect();
        GenotypeProfile {
            person_label: person_label.into(),
            genotype,
        }
    }

    pub fn person_label(&self) -> &str {
        &self.person_label
    }

    pub fn genotype(&self) -> &BTreeMap<String, (Allele, Allele)> {
        &self.genotype
    }

    pub fn at(&self, marker: &str) -> Option<(Allele, Allele)> {
        self.genotype.get(marker).copied()
    }

    pub fn markers(&self) -> impl Iterator<Item = &str> {
        self.genotype.keys().map(String::as_str)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["marker", "allele1", "allele2"])?;
        for (marker, (a, b)) in &self.genotype {
            w.write_record([marker.as_str(), &a.to_string(), &b.to_string()])?;
        }
        w.flush()
    }
}

/// Observed peak heights (RFU) for one sample.
///
/// A marker may be present with no peaks: it was typed, and nothing rose
/// above the analytical threshold.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Epg {
    sample_label: String,
    peaks: BTreeMap<String, BTreeMap<Allele, f64>>,
}

impl Epg {
    pub fn new(
        sample_label: impl Into<String>,
        peaks: BTreeMap<String, BTreeMap<Allele, f64>>,
    ) -> Result<Self> {
        let sample_label = sample_label.into();
        for (marker, alleles) in &peaks {
            for (allele, &h) in alleles {
                if !(h > 0.0 && h.is_finite()) {
                    return Err(Error::InvalidEpg(format!(
                        "{sample_label} marker `{marker}` allele {allele}: height {h} must be positive"
                    )));
                }
            }
        }
        Ok(Epg {
            sample_label,
            peaks,
        })
    }

    pub fn sample_label(&self) -> &str {
        &self.sample_label
    }

    pub fn peaks(&self) -> &BTreeMap<String, BTreeMap<Allele, f64>> {
        &self.peaks
    }

    pub fn markers(&self) -> impl Iterator<Item = &str> {
        self.peaks.keys().map(String::as_str)
    }

    pub fn marker(&self, marker: &str) -> Option<&BTreeMap<Allele, f64>> {
        self.peaks.get(marker)
    }

    pub fn height(&self, marker: &str, allele: Allele) -> Option<f64> {
        self.peaks.get(marker).and_then(|m| m.get(&allele)).copied()
    }

    /// Alleles at `marker` with a peak at or above `threshold`.
    pub fn observed(&self, marker: &str, threshold: f64) -> BTreeSet<Allele> {
        self.peaks
            .get(marker)
            .map(|m| {
                m.iter()
                    .filter(|(_, &h)| h >= threshold)
                    .map(|(&a, _)| a)
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Mean of all peaks at or above `threshold`.
    pub fn mean_observed_height(&self, threshold: f64) -> Option<f64> {
        let heights: Vec<f64> = self
            .peaks
            .values()
            .flat_map(|m| m.values().copied())
            .filter(|&h| h >= threshold)
            .collect();
        (!heights.is_empty()).then(|| heights.iter().sum::<f64>() / heights.len() as f64)
    }

    /// Writes the `marker,allele,height` CSV. Markers without peaks get a
    /// row with empty allele and height fields.
    pub fn write_csv<W: Write>(&self, writer: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["marker", "allele", "height"])?;
        for (marker, alleles) in &self.peaks {
            if alleles.is_empty() {
                w.write_record([marker.as_str(), "", ""])?;
            }
            for (allele, h) in alleles {
                w.write_record([marker.as_str(), &allele.to_string(), &format!("{h}")])?;
            }
        }
        w.flush()
    }
}

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| Error::io(path, e))
}

fn label_from_path(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn csv_records<R: std::io::Read>(
    reader: R,
    path: &Path,
    header: &[&str],
) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?;
    if headers.iter().collect::<Vec<_>>() != header {
        return Err(Error::parse(
            path,
            1,
            format!("expected header `{}`", header.join(",")),
        ));
    }
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::parse(path, line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != header.len() {
            return Err(Error::parse(
                path,
                line,
                format!("expected {} fields", header.len()),
            ));
        }
        if record[0].is_empty() {
            return Err(Error::parse(path, line, "empty marker name"));
        }
        out.push((line, record));
    }
    Ok(out)
}

fn parse_allele(path: &Path, line: u64, s: &str) -> Result<Allele> {
    s.parse()
        .map_err(|e: Error| Error::parse(path, line, e.to_string()))
}

/// Reads a `marker,allele1,allele2` profile; the person label is the file stem.
pub fn load_profile(path: impl AsRef<Path>) -> Result<GenotypeProfile> {
    let path = path.as_ref();
    read_profile(open(path)?, path, &label_from_path(path))
}

pub fn read_profile<R: std::io::Read>(
    reader: R,
    path: &Path,
    label: &str,
) -> Result<GenotypeProfile> {
    let mut genotype = BTreeMap::new();
    for (line, rec) in csv_records(reader, path, &["marker", "allele1", "allele2"])? {
        let a = parse_allele(path, line, &rec[1])?;
        let b = parse_allele(path, line, &rec[2])?;
        if genotype.insert(rec[0].to_string(), (a, b)).is_some() {
            return Err(Error::parse(
                path,
                line,
                format!("duplicate marker `{}`", &rec[0]),
            ));
        }
    }
    if genotype.is_empty() {
        return Err(Error::parse(path, 0, "profile has no markers"));
    }
    Ok(GenotypeProfile::new(label, genotype))
}

/// Reads a `marker,allele,height` EPG; the sample label is the file stem.
pub fn load_epg(path: impl AsRef<Path>) -> Result<Epg> {
    let path = path.as_ref();
    read_epg(open(path)?, path, &label_from_path(path))
}

pub fn read_epg<R: std::io::Read>(reader: R, path: &Path, label: &str) -> Result<Epg> {
    let mut peaks: BTreeMap<String, BTreeMap<Allele, f64>> = BTreeMap::new();
    for (line, rec) in csv_records(reader, path, &["marker", "allele", "height"])? {
        let marker = rec[0].to_string();
        let slot = peaks.entry(marker.clone()).or_default();
        if rec[1].is_empty() && rec[2].is_empty() {
            continue;
        }
        let allele = parse_allele(path, line, &rec[1])?;
        let height: f64 = rec[2]
            .parse()
            .map_err(|_| Error::parse(path, line, format!("invalid height `{}`", &rec[2])))?;
        if !(height > 0.0 && height.is_finite()) {
            return Err(Error::parse(
                path,
                line,
                format!("height {height} must be positive"),
            ));
        }
        if slot.insert(allele, height).is_some() {
            return Err(Error::parse(
                path,
                line,
                format!("duplicate peak for marker `{marker}` allele {allele}"),
            ));
        }
    }
    if peaks.is_empty() {
        return Err(Error::parse(path, 0, "EPG has no markers"));
    }
    Epg::new(label, peaks)
}

/// Fraction of a person's alleles seen at or above `threshold` in a sample.
///
/// Each marker shared by the profile and the EPG scores 1 when all of the
/// person's alleles have a peak, 0.5 when a heterozygote shows only one, and
/// 0 otherwise; the result is the mean score over shared markers.
pub fn presence_index(profile: &GenotypeProfile, epg: &Epg, threshold: f64) -> Result<f64> {
    let mut total = 0.0;
    let mut shared = 0usize;
    for (marker, &(a, b)) in profile.genotype() {
        let Some(peaks) = epg.marker(marker) else {
            continue;
        };
        shared += 1;
        let seen = |x: Allele| peaks.get(&x).is_some_and(|&h| h >= threshold);
        total += if a == b {
            if seen(a) {
                1.0
            } else {
                0.0
            }
        } else {
            match (seen(a), seen(b)) {
                (true, true) => 1.0,
                (true, false) | (false, true) => 0.5,
                (false, false) => 0.0,
            }
        };
    }
    if shared == 0 {
        return Err(Error::NoSharedMarkers {
            profile: profile.person_label().to_string(),
            epg: epg.sample_label().to_string(),
        });
    }
    Ok(total / shared as f64)
}

/// Presence index for every (person, sample) pair.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PresenceReport {
    pub persons: Vec<String>,
    pub samples: Vec<String>,
    /// `values[s][p]` for sample `s` and person `p`.
    pub values: Vec<Vec<f64>>,
    /// Shared-marker count per (sample, person).
    pub marker_counts: Vec<Vec<usize>>,
    pub threshold: f64,
}

impl PresenceReport {
    pub fn get(&self, person: &str, sample: &str) -> Option<f64> {
        let p = self.persons.iter().position(|x| x == person)?;
        let s = self.samples.iter().position(|x| x == sample)?;
        Some(self.values[s][p])
    }

    /// Mean over persons for each sample.
    pub fn sample_averages(&self) -> Vec<f64> {
        self.values
            .iter()
            .map(|row| row.iter().sum::<f64>() / row.len().max(1) as f64)
            .collect()
    }
}

pub fn presence_matrix(
    profiles: &[GenotypeProfile],
    epgs: &[Epg],
    threshold: f64,
) -> Result<PresenceReport> {
    let rows: Vec<Vec<(f64, usize)>> = epgs
        .par_iter()
        .map(|epg| {
            profiles
                .iter()
                .map(|p| {
                    let m = p.markers().filter(|m| epg.marker(m).is_some()).count();
                    presence_index(p, epg, threshold).map(|v| (v, m))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PresenceReport {
        persons: profiles.iter().map(|p| p.person_label().to_string()).collect(),
        samples: epgs.iter().map(|e| e.sample_label().to_string()).collect(),
        values: rows
            .iter()
            .map(|r| r.iter().map(|(v, _)| *v).collect())
            .collect(),
        marker_counts: rows
            .iter()
            .map(|r| r.iter().map(|(_, m)| *m).collect())
            .collect(),
        threshold,
    })
}
