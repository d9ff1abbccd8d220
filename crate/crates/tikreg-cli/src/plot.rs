//! Static SVG rendering of decay summaries.
//!
//! The plot is a pure function of the summary CSV text: rendering the same
//! CSV twice yields byte-identical SVG. No timestamps, no randomness, and
//! all coordinates are formatted with fixed precision.

use std::fmt::Write;

use tikreg::experiment::fit_slope;
use tikreg::{Error, Result};

/// One parsed summary row.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub case: String,
    pub n: usize,
    pub m: usize,
    pub mean_sup: f64,
    pub std_sup: f64,
    pub mean_unsup: f64,
    pub std_unsup: f64,
}

/// Parses the summary CSV (comments and header skipped).
pub fn parse_summary(text: &str) -> Result<Vec<SummaryRow>> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("case,") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::Config(format!(
                "summary line {}: expected 7 columns, found {}",
                lineno + 1,
                fields.len()
            )));
        }
        let num = |i: usize| -> Result<f64> {
            fields[i].trim().parse().map_err(|_| {
                Error::Config(format!(
                    "summary line {}: cannot parse '{}'",
                    lineno + 1,
                    fields[i].trim()
                ))
            })
        };
        rows.push(SummaryRow {
            case: fields[0].trim().to_string(),
            n: num(1)? as usize,
            m: num(2)? as usize,
            mean_sup: num(3)?,
            std_sup: num(4)?,
            mean_unsup: num(5)?,
            std_unsup: num(6)?,
        });
    }
    if rows.is_empty() {
        return Err(Error::Config("summary CSV has no data rows".into()));
    }
    Ok(rows)
}

const WIDTH: f64 = 780.0;
const HEIGHT: f64 = 520.0;
const PLOT_X: f64 = 72.0;
const PLOT_Y: f64 = 34.0;
const PLOT_W: f64 = 500.0;
const PLOT_H: f64 = 420.0;

const SUP_COLOR: &str = "#c0392b";
const UNSUP_COLOR: &str = "#2e6da4";
const DASHES: [&str; 4] = ["", "7 4", "2 3", "8 3 2 3"];

struct Series {
    label: String,
    color: &'static str,
    dash: &'static str,
    points: Vec<(usize, f64, f64)>, // (m, mean, std), mean > 0
    slope: Option<f64>,
}

/// Renders the decay plot for a summary CSV: log-log axes with decade
/// ticks, one pair of curves per (case, N) group, standard-deviation error
/// bars and fitted-slope annotations in the legend.
pub fn render_decay_svg(summary_text: &str) -> Result<String> {
    let rows = parse_summary(summary_text)?;

    // Group rows by (case, N) in order of first appearance.
    let mut groups: Vec<((String, usize), Vec<&SummaryRow>)> = Vec::new();
    for row in &rows {
        let key = (row.case.clone(), row.n);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(row),
            None => groups.push((key, vec![row])),
        }
    }

    let mut series = Vec::new();
    for (gi, ((case, n), rows)) in groups.iter().enumerate() {
        let dash = DASHES[gi % DASHES.len()];
        for (sup, color) in [(true, SUP_COLOR), (false, UNSUP_COLOR)] {
            let points: Vec<(usize, f64, f64)> = rows
                .iter()
                .map(|r| {
                    if sup {
                        (r.m, r.mean_sup, r.std_sup)
                    } else {
                        (r.m, r.mean_unsup, r.std_unsup)
                    }
                })
                .filter(|&(_, mean, _)| mean > 0.0)
                .collect();
            let ms: Vec<usize> = points.iter().map(|p| p.0).collect();
            let means: Vec<f64> = points.iter().map(|p| p.1).collect();
            let slope = fit_slope(&ms, &means).ok().map(|f| f.slope);
            series.push(Series {
                label: format!(
                    "case {case}  N={n}  {}",
                    if sup { "sup" } else { "unsup" }
                ),
                color,
                dash,
                points,
                slope,
            });
        }
    }

    // Decade-aligned axis ranges over everything that will be drawn.
    let mut kx = (i32::MAX, i32::MIN);
    let mut ky = (i32::MAX, i32::MIN);
    for s in &series {
        for &(m, mean, std) in &s.points {
            let hi = mean + std;
            let lo = if mean - std > 0.0 { mean - std } else { mean * 0.5 };
            kx.0 = kx.0.min((m as f64).log10().floor() as i32);
            kx.1 = kx.1.max((m as f64).log10().ceil() as i32);
            ky.0 = ky.0.min(lo.log10().floor() as i32);
            ky.1 = ky.1.max(hi.log10().ceil() as i32);
        }
    }
    if kx.0 > kx.1 {
        return Err(Error::Config(
            "summary CSV has no positive mean excesses to plot".into(),
        ));
    }
    if kx.0 == kx.1 {
        kx.1 += 1;
    }
    if ky.0 == ky.1 {
        ky.1 += 1;
    }

    let px = |m: f64| PLOT_X + (m.log10() - kx.0 as f64) / (kx.1 - kx.0) as f64 * PLOT_W;
    let py = |v: f64| PLOT_Y + PLOT_H - (v.log10() - ky.0 as f64) / (ky.1 - ky.0) as f64 * PLOT_H;

    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"Menlo, Consolas, monospace\" font-size=\"12\">\n"
    );
    let _ = write!(
        svg,
        "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"#ffffff\"/>\n"
    );
    let _ = write!(
        svg,
        "<text x=\"{PLOT_X}\" y=\"20\" font-size=\"14\">mean excess risk vs training samples</text>\n"
    );

    // Grid and ticks: one per decade.
    for k in kx.0..=kx.1 {
        let x = px(10f64.powi(k));
        let _ = write!(
            svg,
            "<line x1=\"{x:.2}\" y1=\"{PLOT_Y}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"#dddddd\"/>\n",
            PLOT_Y + PLOT_H
        );
        let _ = write!(
            svg,
            "<text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\">1e{k}</text>\n",
            PLOT_Y + PLOT_H + 18.0
        );
    }
    for k in ky.0..=ky.1 {
        let y = py(10f64.powi(k));
        let _ = write!(
            svg,
            "<line x1=\"{PLOT_X}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"#dddddd\"/>\n",
            PLOT_X + PLOT_W
        );
        let _ = write!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">1e{k}</text>\n",
            PLOT_X - 8.0,
            y + 4.0
        );
    }
    let _ = write!(
        svg,
        "<rect x=\"{PLOT_X}\" y=\"{PLOT_Y}\" width=\"{PLOT_W}\" height=\"{PLOT_H}\" \
         fill=\"none\" stroke=\"#333333\"/>\n"
    );
    let _ = write!(
        svg,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">training samples m</text>\n",
        PLOT_X + PLOT_W / 2.0,
        PLOT_Y + PLOT_H + 40.0
    );
    let _ = write!(
        svg,
        "<text x=\"16\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.2})\">mean excess risk</text>\n",
        PLOT_Y + PLOT_H / 2.0,
        PLOT_Y + PLOT_H / 2.0
    );

    // Error bars first so the curves draw on top of them.
    for s in &series {
        for &(m, mean, std) in &s.points {
            let x = px(m as f64);
            let hi = mean + std;
            let lo = if mean - std > 0.0 { mean - std } else { mean * 0.5 };
            let (y1, y2) = (py(hi), py(lo));
            let _ = write!(
                svg,
                "<line x1=\"{x:.2}\" y1=\"{y1:.2}\" x2=\"{x:.2}\" y2=\"{y2:.2}\" \
                 stroke=\"{}\" stroke-opacity=\"0.6\"/>\n",
                s.color
            );
            for y in [y1, y2] {
                let _ = write!(
                    svg,
                    "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" \
                     stroke=\"{}\" stroke-opacity=\"0.6\"/>\n",
                    x - 4.0,
                    x + 4.0,
                    s.color
                );
            }
        }
    }

    for s in &series {
        if s.points.len() > 1 {
            let pts: Vec<String> = s
                .points
                .iter()
                .map(|&(m, mean, _)| format!("{:.2},{:.2}", px(m as f64), py(mean)))
                .collect();
            let _ = write!(
                svg,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.8\"{}/>\n",
                pts.join(" "),
                s.color,
                if s.dash.is_empty() {
                    String::new()
                } else {
                    format!(" stroke-dasharray=\"{}\"", s.dash)
                }
            );
        }
        for &(m, mean, _) in &s.points {
            let _ = write!(
                svg,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.6\" fill=\"{}\"/>\n",
                px(m as f64),
                py(mean),
                s.color
            );
        }
    }

    // Legend with fitted slopes.
    let legend_x = PLOT_X + PLOT_W + 16.0;
    let mut legend_y = PLOT_Y + 10.0;
    for s in &series {
        let _ = write!(
            svg,
            "<line x1=\"{legend_x}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" \
             stroke=\"{}\" stroke-width=\"1.8\"{}/>\n",
            legend_y - 4.0,
            legend_x + 26.0,
            legend_y - 4.0,
            s.color,
            if s.dash.is_empty() {
                String::new()
            } else {
                format!(" stroke-dasharray=\"{}\"", s.dash)
            }
        );
        let _ = write!(
            svg,
            "<text x=\"{:.2}\" y=\"{legend_y:.2}\">{}</text>\n",
            legend_x + 32.0,
            s.label
        );
        let slope_text = match s.slope {
            Some(v) => format!("slope {v:.3}"),
            None => "slope n/a".to_string(),
        };
        legend_y += 16.0;
        let _ = write!(
            svg,
            "<text x=\"{:.2}\" y=\"{legend_y:.2}\" fill=\"#555555\">{slope_text}</text>\n",
            legend_x + 32.0
        );
        legend_y += 22.0;
    }

    svg.push_str("</svg>\n");
    Ok(svg)
}
