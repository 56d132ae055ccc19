//! Figures for run reports: each plot lands as a CSV of the plotted
//! numbers next to a small self-contained SVG. The CSV is the canonical
//! artefact (diffable, replottable); the SVG needs no toolchain to view.

use std::path::Path;

use crate::error::Result;
use crate::model::{format_f64, write_csv, StratumAllocation};
use crate::twostage::MinimumSensitivityRow;

const W: f64 = 720.0;
const H: f64 = 440.0;
const MARGIN: f64 = 56.0;

fn svg_open(title: &str) -> String {
    format!(
        concat!(
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" "#,
            r#"viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#,
            "\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n",
            "<text x=\"{cx}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{title}</text>\n"
        ),
        w = W,
        h = H,
        cx = W / 2.0,
        title = title
    )
}

fn axis_box() -> String {
    format!(
        "<rect x=\"{m}\" y=\"{m}\" width=\"{iw}\" height=\"{ih}\" fill=\"none\" stroke=\"#999\"/>\n",
        m = MARGIN,
        iw = W - 2.0 * MARGIN,
        ih = H - 2.0 * MARGIN
    )
}

fn write_text(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).map_err(|e| crate::error::Error::FileWrite {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Per-stratum bars of the final workload: SSUs per stratum, with the
/// PSU split annotated. Writes `<stem>.csv` and `<stem>.svg`.
pub fn plot_allocation(rows: &[StratumAllocation], stem: &Path) -> Result<()> {
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.stratum.clone(),
                r.ssu.to_string(),
                r.psu_sr.to_string(),
                r.psu_nsr.to_string(),
            ]
        })
        .collect();
    write_csv(&stem.with_extension("csv"), &["STRATUM", "SSU", "PSU_SR", "PSU_NSR"], &csv_rows)?;

    let max = rows.iter().map(|r| r.ssu).max().unwrap_or(1).max(1) as f64;
    let iw = W - 2.0 * MARGIN;
    let ih = H - 2.0 * MARGIN;
    let slot = iw / rows.len().max(1) as f64;
    let mut svg = svg_open("Final-stage units per stratum");
    svg.push_str(&axis_box());
    for (i, r) in rows.iter().enumerate() {
        let bh = ih * r.ssu as f64 / max;
        let x = MARGIN + i as f64 * slot + slot * 0.15;
        let y = MARGIN + ih - bh;
        svg.push_str(&format!(
            "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{bw:.1}\" height=\"{bh:.1}\" fill=\"#4878a8\"/>\n",
            bw = slot * 0.7
        ));
        svg.push_str(&format!(
            "<text x=\"{tx:.1}\" y=\"{ty:.1}\" text-anchor=\"middle\">{}</text>\n",
            r.ssu,
            tx = x + slot * 0.35,
            ty = (y - 4.0).max(36.0)
        ));
        svg.push_str(&format!(
            "<text x=\"{tx:.1}\" y=\"{ty:.1}\" text-anchor=\"middle\" fill=\"#444\">{} ({}+{})</text>\n",
            r.stratum,
            r.psu_sr,
            r.psu_nsr,
            tx = x + slot * 0.35,
            ty = H - MARGIN + 16.0
        ));
    }
    svg.push_str("</svg>\n");
    write_text(&stem.with_extension("svg"), &svg)
}

/// Total PSUs and SSUs as the per-PSU workload floor varies. Writes
/// `<stem>.csv` and `<stem>.svg`.
pub fn plot_sensitivity(rows: &[MinimumSensitivityRow], stem: &Path) -> Result<()> {
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.minimum.to_string(), r.psu_total.to_string(), r.ssu_total.to_string()])
        .collect();
    write_csv(&stem.with_extension("csv"), &["MINIMUM", "PSU", "SSU"], &csv_rows)?;

    let iw = W - 2.0 * MARGIN;
    let ih = H - 2.0 * MARGIN;
    let xlo = rows.iter().map(|r| r.minimum).min().unwrap_or(0) as f64;
    let xhi = rows.iter().map(|r| r.minimum).max().unwrap_or(1) as f64;
    let xspan = (xhi - xlo).max(1.0);
    let mut svg = svg_open("Sample size against the per-PSU workload floor");
    svg.push_str(&axis_box());
    for (series, colour, label) in [
        (rows.iter().map(|r| r.ssu_total as f64).collect::<Vec<_>>(), "#4878a8", "SSU"),
        (rows.iter().map(|r| r.psu_total as f64).collect::<Vec<_>>(), "#a85048", "PSU"),
    ] {
        let hi = series.iter().cloned().fold(1.0_f64, f64::max);
        let pts: Vec<String> = rows
            .iter()
            .zip(&series)
            .map(|(r, &v)| {
                let x = MARGIN + iw * (r.minimum as f64 - xlo) / xspan;
                let y = MARGIN + ih * (1.0 - v / hi);
                format!("{x:.1},{y:.1}")
            })
            .collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{colour}\" stroke-width=\"2\"/>\n",
            pts.join(" ")
        ));
        let last = pts.last().cloned().unwrap_or_default();
        if let Some((x, y)) = last.split_once(',') {
            svg.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{y}\" fill=\"{colour}\">{label}</text>\n",
                x.parse::<f64>().unwrap_or(0.0) + 4.0
            ));
        }
    }
    svg.push_str(&format!(
        "<text x=\"{cx}\" y=\"{ty}\" text-anchor=\"middle\" fill=\"#444\">minimum SSUs per selected PSU ({xlo:.0}..{xhi:.0}, each curve scaled to its own maximum)</text>\n",
        cx = W / 2.0,
        ty = H - 12.0
    ));
    svg.push_str("</svg>\n");
    write_text(&stem.with_extension("svg"), &svg)
}

/// Histogram of design weights in the drawn sample (20 equal bins).
/// Writes `<stem>.csv` and `<stem>.svg`.
pub fn plot_weights(weights: &[f64], stem: &Path) -> Result<()> {
    const BINS: usize = 20;
    let lo = weights.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if weights.is_empty() || lo == hi {
        (lo.min(0.0), hi.max(1.0))
    } else {
        (lo, hi)
    };
    let width = (hi - lo) / BINS as f64;
    let mut counts = [0u64; BINS];
    for &w in weights {
        let b = (((w - lo) / width) as usize).min(BINS - 1);
        counts[b] += 1;
    }
    let csv_rows: Vec<Vec<String>> = counts
        .iter()
        .enumerate()
        .map(|(b, &c)| {
            vec![
                format_f64(lo + b as f64 * width),
                format_f64(lo + (b + 1) as f64 * width),
                c.to_string(),
            ]
        })
        .collect();
    write_csv(&stem.with_extension("csv"), &["BIN_LOW", "BIN_HIGH", "COUNT"], &csv_rows)?;

    let iw = W - 2.0 * MARGIN;
    let ih = H - 2.0 * MARGIN;
    let max = counts.iter().max().copied().unwrap_or(1).max(1) as f64;
    let mut svg = svg_open("Design weights in the drawn sample");
    svg.push_str(&axis_box());
    let slot = iw / BINS as f64;
    for (b, &c) in counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let bh = ih * c as f64 / max;
        svg.push_str(&format!(
            "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{bw:.1}\" height=\"{bh:.1}\" fill=\"#48a878\"/>\n",
            x = MARGIN + b as f64 * slot + 1.0,
            y = MARGIN + ih - bh,
            bw = slot - 2.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{cx}\" y=\"{ty}\" text-anchor=\"middle\" fill=\"#444\">weight range {} to {}</text>\n",
        format_f64(lo),
        format_f64(hi),
        cx = W / 2.0,
        ty = H - 12.0
    ));
    svg.push_str("</svg>\n");
    write_text(&stem.with_extension("svg"), &svg)
}
