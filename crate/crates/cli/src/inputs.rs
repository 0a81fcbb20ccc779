//! Loading of populations, hypothesis manifests and simulation specs.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use mixweigh::freqdb::load_frequency_table;
use mixweigh::profiles::{load_epg, load_profile};
use mixweigh::simulate::SimulationSpec;
use mixweigh::{Epg, FrequencyTable, GenotypeProfile, Hypothesis, JointHypothesis, ModelParameters, SlotRef};
use serde::Deserialize;

use crate::{CliError, CliResult, CommonArgs, SimulateArgs};

fn split_pair<'a>(s: &'a str, flag: &str) -> CliResult<(&'a str, &'a str)> {
    match s.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() && !v.trim().is_empty() => Ok((k.trim(), v.trim())),
        _ => Err(CliError::Input(format!("{flag} expects LABEL=VALUE, got `{s}`"))),
    }
}

pub(crate) fn unique_labels<'a>(labels: impl Iterator<Item = &'a str>, what: &str) -> CliResult<()> {
    let mut seen = BTreeSet::new();
    for l in labels {
        if !seen.insert(l) {
            return Err(CliError::Input(format!("two {what} files share the label `{l}`")));
        }
    }
    Ok(())
}

/// Frequency tables named on the command line, in flag order.
pub(crate) struct Populations {
    tables: Vec<Arc<FrequencyTable>>,
    sample_sizes: BTreeMap<String, u32>,
}

impl Populations {
    pub fn from_args(c: &CommonArgs) -> CliResult<Self> {
        let mut sample_sizes = BTreeMap::new();
        for s in &c.sample_sizes {
            let (label, n) = split_pair(s, "--sample-size")?;
            let n: u32 = n
                .parse()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| CliError::Input(format!("invalid sample size `{n}` for `{label}`")))?;
            sample_sizes.insert(label.to_string(), n);
        }
        let mut tables = Vec::new();
        let mut labels = BTreeSet::new();
        for p in &c.populations {
            let (label, path) = split_pair(p, "--population")?;
            if !labels.insert(label) {
                return Err(CliError::Input(format!("population `{label}` given twice")));
            }
            let n = *sample_sizes.get(label).ok_or_else(|| {
                CliError::Input(format!("no --sample-size given for population `{label}`"))
            })?;
            tables.push(Arc::new(load_frequency_table(path, label, n)?));
        }
        Ok(Populations {
            tables,
            sample_sizes,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    pub fn tables(&self) -> impl Iterator<Item = &Arc<FrequencyTable>> {
        self.tables.iter()
    }
}

/// Analyses to run: every command-line population (or the manifests' own
/// when none is given) crossed with every command-line theta.
pub(crate) fn grid(
    pops: &Populations,
    manifests: &[HypothesisManifest],
    thetas: &[f64],
) -> CliResult<Vec<(Option<Arc<FrequencyTable>>, Option<f64>)>> {
    if pops.is_empty() && manifests.iter().any(|m| m.population.is_none()) {
        return Err(CliError::Input(
            "no --population given and a hypothesis names no population".into(),
        ));
    }
    let populations: Vec<Option<Arc<FrequencyTable>>> = if pops.is_empty() {
        vec![None]
    } else {
        pops.tables().cloned().map(Some).collect()
    };
    let thetas: Vec<Option<f64>> = if thetas.is_empty() {
        vec![None]
    } else {
        thetas.iter().copied().map(Some).collect()
    };
    Ok(populations
        .iter()
        .flat_map(|p| thetas.iter().map(move |t| (p.clone(), *t)))
        .collect())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SampleEntry {
    Path(PathBuf),
    Detailed {
        epg: PathBuf,
        #[serde(default)]
        known: Option<Vec<PathBuf>>,
        #[serde(default)]
        unknowns: Option<usize>,
    },
}

/// Hypothesis description as read from JSON. Paths are relative to the
/// manifest's directory.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypothesisManifest {
    pub label: String,
    pub samples: Vec<SampleEntry>,
    /// Known contributors of every sample without its own list.
    #[serde(default)]
    pub known: Vec<PathBuf>,
    #[serde(default)]
    pub unknowns: Option<usize>,
    /// Frequency CSV used when no `--population` is given.
    #[serde(default)]
    pub population: Option<PathBuf>,
    #[serde(default)]
    pub sample_size: Option<u32>,
    #[serde(default)]
    pub theta: Option<f64>,
    /// Groups of `SAMPLE:Uk` slots (k from 1) that are the same person.
    #[serde(default)]
    pub sharing: Vec<Vec<String>>,
    #[serde(skip)]
    base: PathBuf,
}

impl HypothesisManifest {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let mut m: HypothesisManifest = serde_json::from_str(&text).map_err(|e| {
            CliError::Input(format!("{}:{}:{}: {e}", path.display(), e.line(), e.column()))
        })?;
        m.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(m)
    }

    fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    fn population(&self, pops: &Populations) -> CliResult<Arc<FrequencyTable>> {
        let rel = self.population.as_ref().ok_or_else(|| {
            CliError::Input(format!("hypothesis `{}` names no population", self.label))
        })?;
        let path = self.path(rel);
        let label = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("population")
            .to_string();
        let n = self
            .sample_size
            .or_else(|| pops.sample_sizes.get(&label).copied())
            .ok_or_else(|| {
                CliError::Input(format!(
                    "hypothesis `{}`: no sample size for population `{label}`",
                    self.label
                ))
            })?;
        Ok(Arc::new(load_frequency_table(&path, &label, n)?))
    }

    /// EPGs (sorted by label) and the hypothesis over them.
    pub(crate) fn resolve(
        &self,
        pops: &Populations,
        population: Option<&Arc<FrequencyTable>>,
        theta: Option<f64>,
    ) -> CliResult<(Vec<Epg>, JointHypothesis)> {
        let table = match population {
            Some(t) => t.clone(),
            None => self.population(pops)?,
        };
        let theta = theta.or(self.theta).unwrap_or(0.0);
        if self.samples.is_empty() {
            return Err(CliError::Input(format!("hypothesis `{}` lists no samples", self.label)));
        }
        let mut profiles: BTreeMap<PathBuf, GenotypeProfile> = BTreeMap::new();
        let mut profile = |p: &Path| -> CliResult<GenotypeProfile> {
            let path = self.path(p);
            if let Some(g) = profiles.get(&path) {
                return Ok(g.clone());
            }
            let g = load_profile(&path)?;
            profiles.insert(path, g.clone());
            Ok(g)
        };
        let mut epgs = BTreeMap::new();
        let mut per_epg = BTreeMap::new();
        for s in &self.samples {
            let (epg, known, unknowns) = match s {
                SampleEntry::Path(p) => (p, None, None),
                SampleEntry::Detailed {
                    epg,
                    known,
                    unknowns,
                } => (epg, known.as_ref(), *unknowns),
            };
            let e = load_epg(self.path(epg))?;
            let known = known
                .unwrap_or(&self.known)
                .iter()
                .map(|p| profile(p))
                .collect::<CliResult<Vec<_>>>()?;
            let unknowns = unknowns.or(self.unknowns).unwrap_or(0);
            let h = Hypothesis::new(self.label.clone(), known, unknowns, table.clone(), theta)?;
            let label = e.sample_label().to_string();
            if epgs.insert(label.clone(), e).is_some() {
                return Err(CliError::Input(format!(
                    "hypothesis `{}` lists sample `{label}` twice",
                    self.label
                )));
            }
            per_epg.insert(label, h);
        }
        let sharing = self
            .sharing
            .iter()
            .map(|g| g.iter().map(|s| parse_slot(s)).collect::<CliResult<Vec<_>>>())
            .collect::<CliResult<Vec<_>>>()?;
        let joint = JointHypothesis::new(self.label.clone(), per_epg, sharing)?;
        Ok((epgs.into_values().collect(), joint))
    }
}

fn parse_slot(s: &str) -> CliResult<SlotRef> {
    let bad = || CliError::Input(format!("sharing entry `{s}` is not of the form SAMPLE:Uk"));
    let (sample, slot) = s.rsplit_once(':').ok_or_else(bad)?;
    let k: usize = slot
        .strip_prefix('U')
        .and_then(|k| k.parse().ok())
        .filter(|&k| k >= 1)
        .ok_or_else(bad)?;
    Ok(SlotRef::new(sample, k - 1))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsEntry {
    mu: f64,
    sigma: f64,
    xi: f64,
    phi: Vec<f64>,
}

/// Simulation description as read from JSON.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationManifest {
    #[serde(default)]
    label: Option<String>,
    #[serde(default)]
    profiles: Vec<PathBuf>,
    #[serde(default)]
    params: Option<ParamsEntry>,
    #[serde(default)]
    markers: Vec<String>,
}

impl SimulationManifest {
    pub(crate) fn from_args(args: &SimulateArgs, threshold: f64, seed: u64) -> CliResult<SimulationSpec> {
        let (file, base) = match &args.spec {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
                let m: SimulationManifest = serde_json::from_str(&text).map_err(|e| {
                    CliError::Input(format!("{}:{}:{}: {e}", p.display(), e.line(), e.column()))
                })?;
                (m, p.parent().map(Path::to_path_buf).unwrap_or_default())
            }
            None => (SimulationManifest::default(), PathBuf::new()),
        };
        let profile_paths: Vec<PathBuf> = if args.profiles.is_empty() {
            file.profiles.iter().map(|p| base.join(p)).collect()
        } else {
            args.profiles.clone()
        };
        if profile_paths.is_empty() {
            return Err(CliError::Input("simulate needs at least one profile".into()));
        }
        let genotypes = profile_paths
            .iter()
            .map(load_profile)
            .collect::<Result<Vec<_>, _>>()?;
        let missing = |what: &str| CliError::Input(format!("simulate needs --{what}"));
        let p = file.params.as_ref();
        let phi = if args.phi.is_empty() {
            p.map(|p| p.phi.clone()).ok_or_else(|| missing("phi"))?
        } else {
            args.phi.clone()
        };
        let params = ModelParameters::new(
            args.mu.or(p.map(|p| p.mu)).ok_or_else(|| missing("mu"))?,
            args.sigma.or(p.map(|p| p.sigma)).ok_or_else(|| missing("sigma"))?,
            args.xi.or(p.map(|p| p.xi)).ok_or_else(|| missing("xi"))?,
            phi,
        )?;
        let markers = if !args.markers.is_empty() {
            args.markers.clone()
        } else if !file.markers.is_empty() {
            file.markers.clone()
        } else {
            let first: BTreeSet<&str> = genotypes[0].markers().collect();
            first
                .into_iter()
                .filter(|m| genotypes.iter().all(|g| g.at(m).is_some()))
                .map(String::from)
                .collect()
        };
        let spec = SimulationSpec {
            sample_label: args
                .label
                .clone()
                .or(file.label)
                .unwrap_or_else(|| "simulated".into()),
            genotypes,
            params,
            threshold,
            markers,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slots_parse() {
        assert_eq!(parse_slot("B3:U2").unwrap(), SlotRef::new("B3", 1));
        assert_eq!(parse_slot("a:b:U1").unwrap(), SlotRef::new("a:b", 0));
        assert!(parse_slot("B3:U0").is_err());
        assert!(parse_slot("B3").is_err());
        assert!(parse_slot("B3:X1").is_err());
    }

    #[test]
    fn manifest_accepts_both_sample_forms() {
        let m: HypothesisManifest = serde_json::from_str(
            r#"{"label": "Hp", "samples": ["a.csv", {"epg": "b.csv", "unknowns": 2}],
                "known": ["s.csv"], "unknowns": 1, "sharing": [["a:U1", "b:U2"]]}"#,
        )
        .unwrap();
        assert_eq!(m.samples.len(), 2);
        assert!(matches!(m.samples[1], SampleEntry::Detailed { unknowns: Some(2), .. }));
        assert!(serde_json::from_str::<HypothesisManifest>(r#"{"label": "H", "samples": [], "bogus": 1}"#).is_err());
    }
}
