//! Minimal deterministic SVG rendering for training curves and the
//! rubric radar chart. String building only, so identical inputs give
//! identical bytes.

use anyhow::{bail, Context, Result};

const W: f64 = 720.0;
const H: f64 = 400.0;
const MARGIN: f64 = 50.0;

struct Series<'a> {
    name: &'a str,
    color: &'a str,
    values: Vec<f64>,
}

fn polyline(values: &[f64], max: f64, color: &str) -> String {
    let n = values.len().max(2) as f64;
    let points: Vec<String> = values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let x = MARGIN + (W - 2.0 * MARGIN) * i as f64 / (n - 1.0);
            let y = H - MARGIN - (H - 2.0 * MARGIN) * (v / max).min(1.0);
            format!("{x:.1},{y:.1}")
        })
        .collect();
    format!(
        "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
        points.join(" ")
    )
}

/// Reward, tool-call, and train-pass curves from a metrics CSV.
pub fn curves_svg(csv: &str) -> Result<String> {
    let mut rewards = Vec::new();
    let mut tools = Vec::new();
    let mut passes = Vec::new();
    for (i, line) in csv.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            bail!("metrics row {i} has {} columns, expected 4", cols.len());
        }
        rewards.push(cols[1].parse::<f64>().context("mean_reward")?);
        tools.push(cols[2].parse::<f64>().context("mean_tool_calls")?);
        passes.push(cols[3].parse::<f64>().context("pass_at_1_train")?);
    }
    if rewards.is_empty() {
        bail!("metrics file has no data rows");
    }
    let tool_max = tools.iter().cloned().fold(1.0, f64::max);
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<line x1=\"{MARGIN}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        H - MARGIN,
        W - MARGIN,
        H - MARGIN
    ));
    svg.push_str(&format!(
        "<line x1=\"{MARGIN}\" y1=\"{MARGIN}\" x2=\"{MARGIN}\" y2=\"{}\" stroke=\"black\"/>\n",
        H - MARGIN
    ));
    let series = [
        Series {
            name: "mean reward",
            color: "#1f77b4",
            values: rewards,
        },
        Series {
            name: "mean tool calls (scaled)",
            color: "#ff7f0e",
            values: tools.iter().map(|t| t / tool_max).collect(),
        },
        Series {
            name: "train pass@1",
            color: "#2ca02c",
            values: passes,
        },
    ];
    for (i, s) in series.iter().enumerate() {
        svg.push_str(&polyline(&s.values, 1.0, s.color));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"{}\">{}</text>\n",
            MARGIN + 8.0,
            MARGIN + 14.0 * (i as f64 + 1.0),
            s.color,
            s.name
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Rubric radar chart from per-dimension mean scores.
pub fn radar_svg(json: &str) -> Result<String> {
    #[derive(serde::Deserialize)]
    struct Dim {
        name: String,
        mean_score: f64,
        max_score: i64,
    }
    let dims: Vec<Dim> = serde_json::from_str(json).context("plan-score JSON")?;
    if dims.is_empty() {
        bail!("no dimensions to plot");
    }
    let size = 420.0;
    let cx = size / 2.0;
    let cy = size / 2.0;
    let radius = size / 2.0 - 70.0;
    let n = dims.len() as f64;
    let point = |i: usize, frac: f64| {
        let angle = std::f64::consts::TAU * i as f64 / n - std::f64::consts::FRAC_PI_2;
        (cx + radius * frac * angle.cos(), cy + radius * frac * angle.sin())
    };
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\" viewBox=\"0 0 {size} {size}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    for ring in [0.25, 0.5, 0.75, 1.0] {
        let pts: Vec<String> = (0..dims.len())
            .map(|i| {
                let (x, y) = point(i, ring);
                format!("{x:.1},{y:.1}")
            })
            .collect();
        svg.push_str(&format!(
            "<polygon fill=\"none\" stroke=\"#cccccc\" points=\"{}\"/>\n",
            pts.join(" ")
        ));
    }
    let pts: Vec<String> = dims
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let frac = (d.mean_score / d.max_score.max(1) as f64).clamp(0.0, 1.0);
            let (x, y) = point(i, frac);
            format!("{x:.1},{y:.1}")
        })
        .collect();
    svg.push_str(&format!(
        "<polygon fill=\"#1f77b433\" stroke=\"#1f77b4\" stroke-width=\"1.5\" points=\"{}\"/>\n",
        pts.join(" ")
    ));
    for (i, d) in dims.iter().enumerate() {
        let (x, y) = point(i, 1.12);
        svg.push_str(&format!(
            "<text x=\"{x:.1}\" y=\"{y:.1}\" font-size=\"11\" text-anchor=\"middle\">{} ({:.1}/{})</text>\n",
            d.name, d.mean_score, d.max_score
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
