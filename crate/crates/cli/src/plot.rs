//! Static SVG plots written as plain text.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::sync::Arc;

use mixweigh::{Allele, Epg, FrequencyTable};

const PALETTE: [&str; 6] = ["#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860"];
const WIDTH: f64 = 720.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;

/// Marker or sample label reduced to characters safe in file names.
pub fn file_safe(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn open(height: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{height}\" viewBox=\"0 0 {WIDTH} {height}\" font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

/// Round axis maximum: 1, 2 or 5 times a power of ten.
fn nice_max(v: f64) -> f64 {
    if !(v > 0.0) {
        return 1.0;
    }
    let p = 10f64.powf(v.log10().floor());
    [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * p).find(|&m| m >= v).unwrap_or(10.0 * p)
}

fn y_axis(svg: &mut String, top: f64, bottom: f64, max: f64, ticks: usize) {
    let _ = writeln!(svg, "<line x1=\"{LEFT}\" y1=\"{top}\" x2=\"{LEFT}\" y2=\"{bottom}\" stroke=\"black\"/>");
    let _ = writeln!(
        svg,
        "<line x1=\"{LEFT}\" y1=\"{bottom}\" x2=\"{}\" y2=\"{bottom}\" stroke=\"black\"/>",
        WIDTH - RIGHT
    );
    for i in 0..=ticks {
        let v = max * i as f64 / ticks as f64;
        let y = bottom - (bottom - top) * i as f64 / ticks as f64;
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>",
            LEFT - 4.0,
            y + 4.0,
            trim_float(v)
        );
    }
}

fn trim_float(v: f64) -> String {
    let s = format!("{v:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Grouped bars of one marker's allele frequencies, one colour per table.
pub fn frequency_plot(marker: &str, tables: &[Arc<FrequencyTable>]) -> String {
    let alleles: BTreeSet<Allele> = tables
        .iter()
        .filter_map(|t| t.marker(marker).ok())
        .flat_map(|m| m.keys().copied())
        .collect();
    let max = nice_max(
        tables
            .iter()
            .filter_map(|t| t.marker(marker).ok())
            .flat_map(|m| m.values().copied())
            .fold(0.0, f64::max),
    );
    let (top, bottom) = (40.0, 300.0);
    let height = bottom + 50.0 + 16.0 * tables.len() as f64;
    let mut svg = open(height);
    let _ = writeln!(svg, "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>", WIDTH / 2.0, escape(marker));
    y_axis(&mut svg, top, bottom, max, 4);
    let group = (WIDTH - LEFT - RIGHT) / alleles.len().max(1) as f64;
    let bar = group * 0.8 / tables.len().max(1) as f64;
    for (i, a) in alleles.iter().enumerate() {
        let x0 = LEFT + group * i as f64 + group * 0.1;
        for (j, t) in tables.iter().enumerate() {
            let f = t.marker(marker).ok().and_then(|m| m.get(a).copied()).unwrap_or(0.0);
            let h = (bottom - top) * f / max;
            let _ = writeln!(
                svg,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"><title>{} {}: {}</title></rect>",
                x0 + bar * j as f64,
                bottom - h,
                bar,
                h,
                PALETTE[j % PALETTE.len()],
                escape(t.population_label()),
                a,
                f
            );
        }
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
            x0 + group * 0.4,
            bottom + 14.0,
            a
        );
    }
    for (j, t) in tables.iter().enumerate() {
        let y = bottom + 36.0 + 16.0 * j as f64;
        let _ = writeln!(
            svg,
            "<rect x=\"{LEFT}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{}\"/><text x=\"{}\" y=\"{}\">{}</text>",
            y - 9.0,
            PALETTE[j % PALETTE.len()],
            LEFT + 16.0,
            y,
            escape(t.population_label())
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// One panel per marker: a bar per peak and the detection threshold dashed.
pub fn epg_plot(epg: &Epg, threshold: f64) -> String {
    let panel = 140.0;
    let markers: Vec<&str> = epg.markers().collect();
    let height = 40.0 + panel * markers.len().max(1) as f64;
    let mut svg = open(height);
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>",
        WIDTH / 2.0,
        escape(epg.sample_label())
    );
    for (k, m) in markers.iter().enumerate() {
        let peaks = epg.marker(m).cloned().unwrap_or_default();
        let top = 40.0 + panel * k as f64 + 16.0;
        let bottom = top + panel - 46.0;
        let max = nice_max(peaks.values().copied().fold(threshold, f64::max));
        let _ = writeln!(svg, "<text x=\"{}\" y=\"{}\" font-weight=\"bold\">{}</text>", LEFT, top - 4.0, escape(m));
        y_axis(&mut svg, top, bottom, max, 2);
        let (lo, hi) = match (peaks.keys().next(), peaks.keys().last()) {
            (Some(a), Some(b)) => (a.hundredths() as f64 / 100.0 - 1.0, b.hundredths() as f64 / 100.0 + 1.0),
            _ => (0.0, 1.0),
        };
        let span = WIDTH - LEFT - RIGHT;
        let x_of = |a: &Allele| LEFT + span * (a.hundredths() as f64 / 100.0 - lo) / (hi - lo);
        for (a, &h) in &peaks {
            let px = (bottom - top) * h / max;
            let x = x_of(a);
            let _ = writeln!(
                svg,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"6\" height=\"{:.2}\" fill=\"{}\"><title>{a}: {h}</title></rect>",
                x - 3.0,
                bottom - px,
                px,
                if h >= threshold { PALETTE[0] } else { "#bbbbbb" }
            );
            let _ = writeln!(svg, "<text x=\"{x:.2}\" y=\"{}\" text-anchor=\"middle\">{a}</text>", bottom + 14.0);
        }
        let ty = bottom - (bottom - top) * threshold / max;
        let _ = writeln!(
            svg,
            "<line x1=\"{LEFT}\" y1=\"{ty:.2}\" x2=\"{}\" y2=\"{ty:.2}\" stroke=\"#c44e52\" stroke-dasharray=\"4 3\"/>",
            WIDTH - RIGHT
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_sanitized() {
        assert_eq!(file_safe("D8S1179"), "D8S1179");
        assert_eq!(file_safe("vWA/x y"), "vWA_x_y");
    }

    #[test]
    fn axis_maxima_round_up() {
        assert_eq!(nice_max(0.37), 0.5);
        assert_eq!(nice_max(1200.0), 2000.0);
        assert_eq!(nice_max(0.0), 1.0);
    }

    #[test]
    fn epg_plot_draws_threshold_and_escapes() {
        let epg = Epg::new(
            "a<b",
            [("M".to_string(), [(Allele::repeats(10), 300.0), (Allele::repeats(11), 40.0)].into())].into(),
        )
        .unwrap();
        let svg = epg_plot(&epg, 50.0);
        assert!(svg.contains("a&lt;b"));
        assert!(svg.contains("stroke-dasharray"));
        assert_eq!(svg.matches("<rect x=").count(), 2);
    }
}
