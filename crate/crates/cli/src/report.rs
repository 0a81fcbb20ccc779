//! Report shapes and their CSV, JSON and text renderings.
//!
//! Machine formats print floats with the shortest round-trip representation
//! so that repeated runs are byte-identical; text output rounds.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use mixweigh::evidence::EvidenceReport;
use mixweigh::inference::FitResult;
use mixweigh::profiles::PresenceReport;
use serde::Serialize;

use crate::{CliError, CliResult, Format};

#[derive(Clone, Debug, Serialize)]
pub struct Header {
    pub schema_version: u32,
    pub software: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub threshold: f64,
    pub restarts: usize,
}

/// Destination directory; every file is written to a temporary sibling and
/// renamed into place.
pub struct OutputDir {
    root: PathBuf,
    formats: Vec<Format>,
    written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn new(root: &Path, formats: &[Format]) -> CliResult<Self> {
        std::fs::create_dir_all(root)
            .map_err(|e| CliError::Input(format!("{}: {e}", root.display())))?;
        let mut formats = formats.to_vec();
        formats.sort();
        formats.dedup();
        Ok(OutputDir {
            root: root.to_path_buf(),
            formats,
            written: Vec::new(),
        })
    }

    pub fn write_file(&mut self, rel: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.root.join(rel);
        let dir = path.parent().unwrap_or(&self.root);
        let io = |e: std::io::Error| CliError::Input(format!("{}: {e}", path.display()));
        std::fs::create_dir_all(dir).map_err(io)?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
        tmp.write_all(bytes).map_err(io)?;
        tmp.persist(&path).map_err(|e| io(e.error))?;
        self.written.push(path);
        Ok(())
    }

    pub fn into_written(self) -> Vec<PathBuf> {
        self.written
    }
}

pub trait Report: Serialize {
    /// CSV files as (name suffix, content); an empty suffix names the main
    /// file `<stem>.csv`.
    fn csv(&self) -> Vec<(&'static str, String)>;
    fn text(&self) -> String;

    fn write(&self, out: &mut OutputDir, stem: &str) -> CliResult<()> {
        for f in out.formats.clone() {
            match f {
                Format::Csv => {
                    for (suffix, body) in self.csv() {
                        let name = if suffix.is_empty() {
                            format!("{stem}.csv")
                        } else {
                            format!("{stem}_{suffix}.csv")
                        };
                        out.write_file(&name, body.as_bytes())?;
                    }
                }
                Format::Json => {
                    let mut body = serde_json::to_string_pretty(self)
                        .map_err(|e| CliError::Numerical(format!("cannot serialize report: {e}")))?;
                    body.push('\n');
                    out.write_file(&format!("{stem}.json"), body.as_bytes())?;
                }
                Format::Text => out.write_file(&format!("{stem}.txt"), self.text().as_bytes())?,
            }
        }
        Ok(())
    }
}

/// Shortest round-trip float, with an exponent for very small or large
/// magnitudes.
fn num(v: f64) -> String {
    if v.is_finite() {
        serde_json::to_string(&v).expect("finite float")
    } else if v.is_nan() {
        "NaN".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Fixed-point text that never shows a negative zero.
fn fixed(v: f64, digits: usize) -> String {
    let s = format!("{v:.digits$}");
    if s.starts_with('-') && s[1..].bytes().all(|b| b == b'0' || b == b'.') {
        s[1..].to_string()
    } else {
        s
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn csv_line(out: &mut String, fields: &[String]) {
    let row: Vec<String> = fields.iter().map(|f| csv_field(f)).collect();
    out.push_str(&row.join(","));
    out.push('\n');
}

fn pad_table(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in rows {
        let cells: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(i, s)| if i == 0 { format!("{s:<w$}", w = widths[i]) } else { format!("{s:>w$}", w = widths[i]) })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
pub struct PresenceOut {
    pub header: Header,
    pub presence: PresenceReport,
    pub sample_averages: Vec<f64>,
}

impl PresenceOut {
    pub fn new(header: Header, presence: PresenceReport) -> Self {
        let sample_averages = presence.sample_averages();
        PresenceOut {
            header,
            presence,
            sample_averages,
        }
    }
}

impl Report for PresenceOut {
    fn csv(&self) -> Vec<(&'static str, String)> {
        let p = &self.presence;
        let mut main = String::new();
        let mut head = vec!["person".to_string()];
        head.extend(p.samples.iter().cloned());
        csv_line(&mut main, &head);
        for (j, person) in p.persons.iter().enumerate() {
            let mut row = vec![person.clone()];
            row.extend(p.samples.iter().enumerate().map(|(s, _)| num(p.values[s][j])));
            csv_line(&mut main, &row);
        }
        let mut avg = vec!["average".to_string()];
        avg.extend(self.sample_averages.iter().copied().map(num));
        csv_line(&mut main, &avg);

        let mut long = String::new();
        csv_line(&mut long, &["sample".into(), "person".into(), "presence_index".into(), "markers".into()]);
        for (s, sample) in p.samples.iter().enumerate() {
            for (j, person) in p.persons.iter().enumerate() {
                csv_line(
                    &mut long,
                    &[sample.clone(), person.clone(), num(p.values[s][j]), p.marker_counts[s][j].to_string()],
                );
            }
        }
        vec![("", main), ("long", long)]
    }

    fn text(&self) -> String {
        let p = &self.presence;
        let mut rows = vec![std::iter::once("Person".to_string()).chain(p.samples.iter().cloned()).collect::<Vec<_>>()];
        for (j, person) in p.persons.iter().enumerate() {
            let mut r = vec![person.clone()];
            r.extend((0..p.samples.len()).map(|s| format!("{:.2}", p.values[s][j])));
            rows.push(r);
        }
        let mut r = vec!["Average".to_string()];
        r.extend(self.sample_averages.iter().map(|a| format!("{a:.2}")));
        rows.push(r);
        format!("Presence index (threshold {} RFU)\n{}", p.threshold, pad_table(&rows))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ContributorShare {
    pub label: String,
    pub phi: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SampleParameters {
    pub sample: String,
    pub mu: f64,
    pub sigma: f64,
    pub xi: f64,
    /// Knowns in hypothesis order, then unknowns by decreasing share.
    pub contributors: Vec<ContributorShare>,
}

#[derive(Clone, Debug, Serialize)]
pub struct FitRow {
    pub hypothesis: String,
    pub population: String,
    pub theta: f64,
    pub log_likelihood: f64,
    pub converged: bool,
    pub starts: usize,
    pub evaluations: usize,
    pub samples: Vec<SampleParameters>,
}

impl FitRow {
    pub fn new(population: &str, theta: f64, fit: &FitResult) -> Self {
        let samples = fit
            .blocks
            .iter()
            .map(|b| {
                let mut known = Vec::new();
                let mut unknown = Vec::new();
                for (label, &phi) in b.contributors.iter().zip(&b.params.phi) {
                    let c = ContributorShare { label: label.clone(), phi };
                    if is_unknown_label(label) {
                        unknown.push(c);
                    } else {
                        known.push(c);
                    }
                }
                unknown.sort_by(|a, b| b.phi.total_cmp(&a.phi).then_with(|| a.label.cmp(&b.label)));
                known.extend(unknown);
                SampleParameters {
                    sample: b.sample.clone(),
                    mu: b.params.mu,
                    sigma: b.params.sigma,
                    xi: b.params.xi,
                    contributors: known,
                }
            })
            .collect();
        FitRow {
            hypothesis: fit.hypothesis.clone(),
            population: population.to_string(),
            theta,
            log_likelihood: fit.log_likelihood,
            converged: fit.converged,
            starts: fit.restarts_used,
            evaluations: fit.evaluations,
            samples,
        }
    }

    fn csv_rows(&self, prefix: &[String], out: &mut String) {
        for s in &self.samples {
            for c in &s.contributors {
                let mut row = prefix.to_vec();
                row.extend([
                    self.hypothesis.clone(),
                    self.population.clone(),
                    num(self.theta),
                    s.sample.clone(),
                    c.label.clone(),
                    num(s.mu),
                    num(s.sigma),
                    num(s.xi),
                    num(c.phi),
                    num(self.log_likelihood),
                    self.converged.to_string(),
                ]);
                csv_line(out, &row);
            }
        }
    }

    fn text(&self) -> String {
        let mut out = format!(
            "{} | population {} | theta {} | log-likelihood {:.4}{}\n",
            self.hypothesis,
            self.population,
            self.theta,
            self.log_likelihood,
            if self.converged { "" } else { " | NOT CONVERGED" }
        );
        for s in &self.samples {
            let mut rows = vec![vec![
                format!("  {}", s.sample),
                "mu".to_string(),
                "sigma".to_string(),
                "xi".to_string(),
                "phi".to_string(),
            ]];
            for (i, c) in s.contributors.iter().enumerate() {
                let fixed = |v: f64, d: usize| if i == 0 { format!("{v:.d$}") } else { String::new() };
                rows.push(vec![
                    format!("    {}", c.label),
                    fixed(s.mu, 1),
                    fixed(s.sigma, 3),
                    fixed(s.xi, 3),
                    format!("{:.3}", c.phi),
                ]);
            }
            out.push_str(&pad_table(&rows));
        }
        out
    }
}

fn is_unknown_label(label: &str) -> bool {
    label
        .strip_prefix('U')
        .is_some_and(|k| !k.is_empty() && k.bytes().all(|b| b.is_ascii_digit()))
}

const PARAM_COLUMNS: [&str; 11] = [
    "hypothesis",
    "population",
    "theta",
    "sample",
    "contributor",
    "mu",
    "sigma",
    "xi",
    "phi",
    "log_likelihood",
    "converged",
];

#[derive(Serialize)]
pub struct FitOut {
    pub header: Header,
    pub fits: Vec<FitRow>,
}

impl Report for FitOut {
    fn csv(&self) -> Vec<(&'static str, String)> {
        let mut out = String::new();
        csv_line(&mut out, &PARAM_COLUMNS.map(String::from));
        for f in &self.fits {
            f.csv_rows(&[], &mut out);
        }
        vec![("", out)]
    }

    fn text(&self) -> String {
        self.fits.iter().map(FitRow::text).collect::<Vec<_>>().join("\n")
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PersonOfInterest {
    pub label: String,
    pub woe_upper_bound: f64,
    /// Bound minus the reported weight; absent when the ratio is not finite.
    pub evidential_loss: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct LrRow {
    pub hp: String,
    pub hd: String,
    pub population: String,
    pub theta: f64,
    pub lr: f64,
    pub ln_lr: f64,
    pub woe_ban: f64,
    pub persons_of_interest: Vec<PersonOfInterest>,
    pub hp_fit: FitRow,
    pub hd_fit: FitRow,
}

impl LrRow {
    pub fn new(theta: f64, r: &EvidenceReport, persons_of_interest: Vec<PersonOfInterest>) -> Self {
        LrRow {
            hp: r.hp_label.clone(),
            hd: r.hd_label.clone(),
            population: r.population_label.clone(),
            theta,
            lr: r.lr,
            ln_lr: r.ln_lr,
            woe_ban: r.woe_ban,
            persons_of_interest,
            hp_fit: FitRow::new(&r.population_label, theta, &r.hp_fit),
            hd_fit: FitRow::new(&r.population_label, theta, &r.hd_fit),
        }
    }
}

#[derive(Serialize)]
pub struct LrOut {
    pub header: Header,
    pub results: Vec<LrRow>,
}

impl Report for LrOut {
    fn csv(&self) -> Vec<(&'static str, String)> {
        let mut grid = String::new();
        csv_line(
            &mut grid,
            &[
                "hp", "hd", "population", "theta", "lr", "ln_lr", "woe_ban", "hp_log_likelihood",
                "hd_log_likelihood", "hp_converged", "hd_converged",
            ]
            .map(String::from),
        );
        let mut params = String::new();
        let mut head = vec!["hp".to_string(), "hd".to_string()];
        head.extend(PARAM_COLUMNS.map(String::from));
        csv_line(&mut params, &head);
        let mut poi = String::new();
        csv_line(
            &mut poi,
            &["hp", "hd", "population", "theta", "person", "woe_ban", "woe_upper_bound", "evidential_loss"]
                .map(String::from),
        );
        for r in &self.results {
            csv_line(
                &mut grid,
                &[
                    r.hp.clone(),
                    r.hd.clone(),
                    r.population.clone(),
                    num(r.theta),
                    num(r.lr),
                    num(r.ln_lr),
                    num(r.woe_ban),
                    num(r.hp_fit.log_likelihood),
                    num(r.hd_fit.log_likelihood),
                    r.hp_fit.converged.to_string(),
                    r.hd_fit.converged.to_string(),
                ],
            );
            let pair = [r.hp.clone(), r.hd.clone()];
            r.hp_fit.csv_rows(&pair, &mut params);
            r.hd_fit.csv_rows(&pair, &mut params);
            for p in &r.persons_of_interest {
                csv_line(
                    &mut poi,
                    &[
                        r.hp.clone(),
                        r.hd.clone(),
                        r.population.clone(),
                        num(r.theta),
                        p.label.clone(),
                        num(r.woe_ban),
                        num(p.woe_upper_bound),
                        p.evidential_loss.map(num).unwrap_or_default(),
                    ],
                );
            }
        }
        vec![("", grid), ("parameters", params), ("persons", poi)]
    }

    fn text(&self) -> String {
        let mut out = String::new();
        for r in &self.results {
            let _ = writeln!(
                out,
                "LR({} vs {}) = {:.4e} | WoE {} ban | population {} | theta {}",
                r.hp, r.hd, r.lr, fixed(r.woe_ban, 2), r.population, r.theta
            );
            for p in &r.persons_of_interest {
                let loss = p
                    .evidential_loss
                    .map(|l| fixed(l, 2))
                    .unwrap_or_else(|| "n/a".into());
                let _ = writeln!(
                    out,
                    "  {}: upper bound {} ban, evidential loss {} ban",
                    p.label, fixed(p.woe_upper_bound, 2), loss
                );
            }
            out.push_str(&r.hp_fit.text());
            out.push_str(&r.hd_fit.text());
            out.push('\n');
        }
        out
    }
}
