//! Command-line orchestration: argument model, input loading, analyses and
//! report output. The binary is a thin wrapper over [`run`].

mod inputs;
mod plot;
mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mixweigh::evidence::{evidential_loss, likelihood_ratio, woe_upper_bound};
use mixweigh::freqdb::{admix_tables, AdmixWeights};
use mixweigh::inference::{fit_parameters, FitOptions};
use mixweigh::profiles::{load_epg, load_profile, presence_matrix};
use mixweigh::simulate::simulate_epg;
use mixweigh::{FrequencyTable, GenotypeProfile};

pub use inputs::{HypothesisManifest, SimulationManifest};
use report::{OutputDir, Report};

/// Version tag of machine-readable reports.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Parser, Debug, Clone)]
#[command(name = "mixweigh", version, about = "Weigh DNA mixture evidence with a gamma peak-height model")]
pub struct RunManifest {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    /// Detection threshold C in RFU.
    #[arg(long, global = true, default_value_t = mixweigh::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Coancestry coefficient; repeat for a grid.
    #[arg(long, global = true)]
    pub theta: Vec<f64>,
    /// Jittered optimizer restarts per fit.
    #[arg(long, global = true, default_value_t = 8)]
    pub restarts: usize,
    /// Random seed (required for `simulate`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Frequency table as LABEL=CSV; repeatable.
    #[arg(long = "population", global = true, value_name = "LABEL=CSV")]
    pub populations: Vec<String>,
    /// Sample size of a population as LABEL=N; repeatable.
    #[arg(long = "sample-size", global = true, value_name = "LABEL=N")]
    pub sample_sizes: Vec<String>,
    /// Output directory.
    #[arg(long, global = true, default_value = "mixweigh-out")]
    pub out: PathBuf,
    /// Report formats to write.
    #[arg(long, global = true, value_delimiter = ',', default_values_t = [Format::Csv, Format::Json, Format::Text])]
    pub format: Vec<Format>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Text,
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Json => "json",
            Format::Text => "text",
        })
    }
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Presence index of each profile in each EPG.
    Presence {
        #[arg(long, alias = "epg", num_args = 1.., required = true)]
        epgs: Vec<PathBuf>,
        #[arg(long, alias = "profile", num_args = 1.., required = true)]
        profiles: Vec<PathBuf>,
    },
    /// Maximum-likelihood parameters under one or more hypotheses.
    Fit {
        /// Hypothesis manifest (JSON); repeatable.
        #[arg(long = "hypothesis", num_args = 1.., required = true)]
        hypotheses: Vec<PathBuf>,
    },
    /// Likelihood ratio between two hypotheses.
    Lr {
        #[arg(long)]
        hp: PathBuf,
        #[arg(long)]
        hd: PathBuf,
    },
    /// Simulate EPGs from the peak-height model.
    Simulate(SimulateArgs),
    /// Admix frequency tables and plot them.
    Freq {
        /// Label of the admixed table.
        #[arg(long, default_value = "admixed")]
        label: String,
        /// `sample-size` or comma-separated weights, one per population.
        #[arg(long, default_value = "sample-size")]
        weights: String,
        /// EPGs to draw as bar plots.
        #[arg(long, alias = "epg", num_args = 1..)]
        epgs: Vec<PathBuf>,
    },
}

#[derive(Args, Debug, Clone)]
pub struct SimulateArgs {
    /// Simulation manifest (JSON); flags below override its fields.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Contributor profiles in proportion order.
    #[arg(long, alias = "profile", num_args = 1..)]
    pub profiles: Vec<PathBuf>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub xi: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub phi: Vec<f64>,
    /// Markers to simulate (default: those typed in every profile).
    #[arg(long, value_delimiter = ',')]
    pub markers: Vec<String>,
    #[arg(long)]
    pub label: Option<String>,
    /// Number of EPGs; replicate `i` uses seed `seed + i`.
    #[arg(long, default_value_t = 1)]
    pub replicates: u64,
}

/// Failure of a run, split by exit status.
#[derive(Debug)]
pub enum CliError {
    Input(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<mixweigh::Error> for CliError {
    fn from(e: mixweigh::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Input(e.to_string())
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Files written and a human-readable summary.
#[derive(Debug, Default)]
pub struct Outcome {
    pub written: Vec<PathBuf>,
    pub summary: String,
}

/// Executes one command, writing artifacts under `manifest.common.out`.
pub fn run(manifest: &RunManifest) -> CliResult<Outcome> {
    let c = &manifest.common;
    if !(c.threshold > 0.0 && c.threshold.is_finite()) {
        return Err(CliError::Input(format!("threshold {} must be positive", c.threshold)));
    }
    if let Some(&t) = c.theta.iter().find(|t| !(0.0..1.0).contains(*t)) {
        return Err(CliError::Input(format!("theta {t} must lie in [0, 1)")));
    }
    if c.format.is_empty() {
        return Err(CliError::Input("no report format selected".into()));
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = c.jobs {
        if n == 0 {
            return Err(CliError::Input("--jobs must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Input(format!("cannot start worker pool: {e}")))?;
    pool.install(|| dispatch(manifest))
}

fn dispatch(manifest: &RunManifest) -> CliResult<Outcome> {
    let c = &manifest.common;
    let mut out = OutputDir::new(&c.out, &c.format)?;
    let summary = match &manifest.command {
        Command::Presence { epgs, profiles } => presence(c, &mut out, epgs, profiles)?,
        Command::Fit { hypotheses } => fit(c, &mut out, hypotheses)?,
        Command::Lr { hp, hd } => lr(c, &mut out, hp, hd)?,
        Command::Simulate(args) => simulate(c, &mut out, args)?,
        Command::Freq { label, weights, epgs } => freq(c, &mut out, label, weights, epgs)?,
    };
    Ok(Outcome {
        written: out.into_written(),
        summary,
    })
}

fn header(c: &CommonArgs, command: &str) -> report::Header {
    report::Header {
        schema_version: SCHEMA_VERSION,
        software: "mixweigh".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        seed: c.seed.unwrap_or(0),
        threshold: c.threshold,
        restarts: c.restarts,
    }
}

fn fit_options(c: &CommonArgs) -> FitOptions {
    FitOptions {
        threshold: c.threshold,
        restarts: c.restarts,
        seed: c.seed.unwrap_or(0),
        ..FitOptions::default()
    }
}

fn presence(
    c: &CommonArgs,
    out: &mut OutputDir,
    epgs: &[PathBuf],
    profiles: &[PathBuf],
) -> CliResult<String> {
    let epgs = epgs.iter().map(load_epg).collect::<Result<Vec<_>, _>>()?;
    let profiles = profiles.iter().map(load_profile).collect::<Result<Vec<_>, _>>()?;
    inputs::unique_labels(epgs.iter().map(|e| e.sample_label()), "EPG")?;
    inputs::unique_labels(profiles.iter().map(|p| p.person_label()), "profile")?;
    let matrix = presence_matrix(&profiles, &epgs, c.threshold)?;
    let r = report::PresenceOut::new(header(c, "presence"), matrix);
    r.write(out, "presence")?;
    Ok(r.text())
}

fn fit(c: &CommonArgs, out: &mut OutputDir, manifests: &[PathBuf]) -> CliResult<String> {
    let pops = inputs::Populations::from_args(c)?;
    let manifests = manifests
        .iter()
        .map(|p| HypothesisManifest::load(p))
        .collect::<CliResult<Vec<_>>>()?;
    let options = fit_options(c);
    let mut rows = Vec::new();
    for (population, theta) in inputs::grid(&pops, &manifests, &c.theta)? {
        for m in &manifests {
            let (epgs, joint) = m.resolve(&pops, population.as_ref(), theta)?;
            let fit = fit_parameters(&epgs, &joint, &options)?;
            rows.push(report::FitRow::new(
                joint.per_epg().values().next().unwrap().population.population_label(),
                joint.per_epg().values().next().unwrap().theta,
                &fit,
            ));
        }
    }
    let r = report::FitOut {
        header: header(c, "fit"),
        fits: rows,
    };
    r.write(out, "fit")?;
    Ok(r.text())
}

fn lr(c: &CommonArgs, out: &mut OutputDir, hp: &Path, hd: &Path) -> CliResult<String> {
    let pops = inputs::Populations::from_args(c)?;
    let hp = HypothesisManifest::load(hp)?;
    let hd = HypothesisManifest::load(hd)?;
    let options = fit_options(c);
    let pair = [hp, hd];
    let mut rows = Vec::new();
    for (population, theta) in inputs::grid(&pops, &pair, &c.theta)? {
        let (epgs, jp) = pair[0].resolve(&pops, population.as_ref(), theta)?;
        let (epgs_d, jd) = pair[1].resolve(&pops, population.as_ref(), theta)?;
        if epgs != epgs_d {
            return Err(CliError::Input(format!(
                "`{}` and `{}` must analyse the same EPGs",
                jp.label, jd.label
            )));
        }
        let table = jp.per_epg().values().next().unwrap().population.clone();
        let theta = jp.per_epg().values().next().unwrap().theta;
        let report = likelihood_ratio(&epgs, &jp, &jd, &options)?;

        // Knowns under Hp absent under Hd, scored over the analysed markers.
        let analysed: BTreeSet<&str> = epgs.iter().flat_map(|e| e.markers()).collect();
        let known_d: BTreeSet<&str> = jd
            .per_epg()
            .values()
            .flat_map(|h| h.known.iter().map(|k| k.person_label()))
            .collect();
        let mut persons: BTreeMap<&str, &GenotypeProfile> = BTreeMap::new();
        for h in jp.per_epg().values() {
            for k in &h.known {
                if !known_d.contains(k.person_label()) {
                    persons.insert(k.person_label(), k);
                }
            }
        }
        let mut poi = Vec::new();
        for (label, profile) in persons {
            let restricted = GenotypeProfile::new(
                label,
                profile
                    .genotype()
                    .iter()
                    .filter(|(m, _)| analysed.contains(m.as_str()))
                    .map(|(m, g)| (m.clone(), *g))
                    .collect::<Vec<_>>(),
            );
            let bound = woe_upper_bound(&restricted, &table, theta)?;
            let loss = if report.lr > 0.0 && report.lr.is_finite() {
                Some(evidential_loss(&restricted, &table, theta, report.lr)?)
            } else {
                None
            };
            poi.push(report::PersonOfInterest {
                label: label.to_string(),
                woe_upper_bound: bound,
                evidential_loss: loss,
            });
        }
        rows.push(report::LrRow::new(theta, &report, poi));
    }
    let r = report::LrOut {
        header: header(c, "lr"),
        results: rows,
    };
    r.write(out, "lr")?;
    Ok(r.text())
}

fn simulate(c: &CommonArgs, out: &mut OutputDir, args: &SimulateArgs) -> CliResult<String> {
    let Some(seed) = c.seed else {
        return Err(CliError::Input("simulate requires --seed".into()));
    };
    let spec = SimulationManifest::from_args(args, c.threshold, seed)?;
    let mut lines = Vec::new();
    for i in 0..args.replicates {
        let mut s = spec.clone();
        s.seed = seed.wrapping_add(i);
        if args.replicates > 1 {
            s.sample_label = format!("{}_{}", spec.sample_label, i + 1);
        }
        let epg = simulate_epg(&s)?;
        let mut buf = Vec::new();
        epg.write_csv(&mut buf)
            .map_err(|e| CliError::Input(format!("cannot format EPG: {e}")))?;
        let name = format!("{}.csv", s.sample_label);
        out.write_file(&name, &buf)?;
        let peaks: usize = epg.peaks().values().map(|m| m.len()).sum();
        lines.push(format!("{name}: {peaks} peaks at or above {} RFU (seed {})", c.threshold, s.seed));
    }
    Ok(lines.join("\n") + "\n")
}

fn freq(
    c: &CommonArgs,
    out: &mut OutputDir,
    label: &str,
    weights: &str,
    epgs: &[PathBuf],
) -> CliResult<String> {
    let pops = inputs::Populations::from_args(c)?;
    if pops.is_empty() {
        return Err(CliError::Input("freq needs at least one --population".into()));
    }
    let tables: Vec<FrequencyTable> = pops.tables().map(|t| (**t).clone()).collect();
    let weights = if weights == "sample-size" {
        AdmixWeights::BySampleSize
    } else {
        AdmixWeights::Explicit(
            weights
                .split(',')
                .map(|w| {
                    w.trim()
                        .parse::<f64>()
                        .map_err(|_| CliError::Input(format!("invalid weight `{w}`")))
                })
                .collect::<CliResult<Vec<_>>>()?,
        )
    };
    let mixed = admix_tables(&tables, &weights, label)?;
    let mut buf = Vec::new();
    mixed
        .write_csv(&mut buf)
        .map_err(|e| CliError::Input(format!("cannot format table: {e}")))?;
    out.write_file(&format!("{label}.csv"), &buf)?;

    let mut all: Vec<Arc<FrequencyTable>> = pops.tables().cloned().collect();
    all.push(Arc::new(mixed.clone()));
    let markers: BTreeSet<&str> = all.iter().flat_map(|t| t.markers()).collect();
    for m in &markers {
        out.write_file(&format!("plots/freq_{}.svg", plot::file_safe(m)), plot::frequency_plot(m, &all).as_bytes())?;
    }
    for path in epgs {
        let e = load_epg(path)?;
        out.write_file(
            &format!("plots/epg_{}.svg", plot::file_safe(e.sample_label())),
            plot::epg_plot(&e, c.threshold).as_bytes(),
        )?;
    }
    Ok(format!(
        "{label}: {} markers from {} tables; {} plots\n",
        mixed.markers().count(),
        tables.len(),
        markers.len() + epgs.len()
    ))
}
