//! Diverging heatmaps. Blue is negative, red positive, white zero; the
//! colour extremes sit at ±max|φ| over everything drawn.

use std::fmt::Write;

use sverl::environments::Domain;
use sverl::{FeatureVector, TabularMdp};

use crate::report::Record;

const NEG: (f64, f64, f64) = (33.0, 102.0, 172.0);
const POS: (f64, f64, f64) = (178.0, 24.0, 43.0);
const CELL: f64 = 48.0;
const GAP: f64 = 24.0;
const PER_ROW: usize = 4;

/// Colour for `phi` on a scale whose extremes are `±scale`.
pub fn color(phi: f64, scale: f64) -> String {
    let t = if scale > 0.0 { (phi / scale).clamp(-1.0, 1.0) } else { 0.0 };
    let end = if t < 0.0 { NEG } else { POS };
    let mix = |c: f64| (255.0 + (c - 255.0) * t.abs()).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(end.0), mix(end.1), mix(end.2))
}

pub fn scale_of(records: &[Record]) -> f64 {
    records
        .iter()
        .flat_map(|r| r.attribution.phi.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Panel {
    title: String,
    width: f64,
    height: f64,
    body: String,
}

fn rect(out: &mut String, x: f64, y: f64, w: f64, h: f64, fill: &str) {
    let _ = write!(out, r##"<rect x="{x}" y="{y}" width="{w}" height="{h}" fill="{fill}" stroke="#444" stroke-width="0.5"/>"##);
}

fn label(out: &mut String, x: f64, y: f64, size: f64, text: &str) {
    let _ = write!(
        out,
        r#"<text x="{x}" y="{y}" font-size="{size}" text-anchor="middle" dominant-baseline="middle" font-family="sans-serif">{}</text>"#,
        escape(text)
    );
}

fn title_of(r: &Record) -> String {
    let mut t = match r.state {
        Some(s) => format!("state {s}"),
        None => "aggregate".into(),
    };
    if let Some(a) = &r.action {
        t.push_str(&format!(" / {a}"));
    }
    t
}

/// One board per record, each square coloured by its feature's φ.
fn board_panels(records: &[Record], w: usize, h: usize, scale: f64) -> Vec<Panel> {
    records
        .iter()
        .map(|r| {
            let mut body = String::new();
            for (i, phi) in r.attribution.phi.iter().enumerate() {
                let (x, y) = ((i % w) as f64 * CELL, (i / w) as f64 * CELL);
                rect(&mut body, x, y, CELL, CELL, &color(*phi, scale));
                let state = r.state_features.as_ref().map(|f| f[i].as_str()).unwrap_or("");
                let mark = match state {
                    "empty" | "unopened" => "",
                    other => other,
                };
                label(&mut body, x + CELL / 2.0, y + CELL / 3.0, 13.0, mark);
                label(&mut body, x + CELL / 2.0, y + 2.0 * CELL / 3.0, 10.0, &format!("{phi:.2}"));
            }
            Panel {
                title: title_of(r),
                width: w as f64 * CELL,
                height: h as f64 * CELL,
                body,
            }
        })
        .collect()
}

/// The grid once per action, every explained cell split into an `x` half
/// and a `y` half.
fn grid_panels(records: &[Record], mdp: &TabularMdp, scale: f64) -> Vec<Panel> {
    let width = mdp.features()[0].values.len();
    let height = mdp.features()[1].values.len();
    let mut actions: Vec<Option<String>> = Vec::new();
    for r in records {
        if !actions.contains(&r.action) {
            actions.push(r.action.clone());
        }
    }
    actions
        .into_iter()
        .map(|action| {
            let mut body = String::new();
            for gx in 0..width {
                for gy in 0..height {
                    let (px, py) = (gx as f64 * CELL, (height - 1 - gy) as f64 * CELL);
                    let fill = match mdp.state_id(&FeatureVector(vec![gx as u8, gy as u8])) {
                        None => "#888888",
                        Some(s) if mdp.is_terminal(s) => "#d9f0d3",
                        Some(_) => "#f4f4f4",
                    };
                    rect(&mut body, px, py, CELL, CELL, fill);
                    if fill == "#d9f0d3" {
                        label(&mut body, px + CELL / 2.0, py + CELL / 2.0, 13.0, "G");
                    }
                }
            }
            for r in records.iter().filter(|r| r.action == action) {
                let Some(s) = r.state else { continue };
                let f = mdp.state(s);
                let (px, py) = (f.get(0) as f64 * CELL, (height - 1 - f.get(1) as usize) as f64 * CELL);
                for (k, phi) in r.attribution.phi.iter().enumerate().take(2) {
                    let x = px + k as f64 * CELL / 2.0;
                    rect(&mut body, x, py, CELL / 2.0, CELL, &color(*phi, scale));
                    label(&mut body, x + CELL / 4.0, py + CELL / 3.0, 10.0, &r.features[k]);
                    label(&mut body, x + CELL / 4.0, py + 2.0 * CELL / 3.0, 9.0, &format!("{phi:.2}"));
                }
            }
            Panel {
                title: action.unwrap_or_else(|| "all states".into()),
                width: width as f64 * CELL,
                height: height as f64 * CELL,
                body,
            }
        })
        .collect()
}

/// Rows are records, columns features.
fn matrix_panel(records: &[Record], scale: f64) -> Panel {
    let n = records.first().map_or(0, |r| r.features.len());
    let head = 2.0 * CELL;
    let mut body = String::new();
    if let Some(r) = records.first() {
        for (j, name) in r.features.iter().enumerate() {
            label(&mut body, head + (j as f64 + 0.5) * CELL, CELL / 2.0, 10.0, name);
        }
    }
    for (i, r) in records.iter().enumerate() {
        let y = (i as f64 + 1.0) * CELL;
        label(&mut body, head / 2.0, y + CELL / 2.0, 10.0, &title_of(r));
        for (j, phi) in r.attribution.phi.iter().enumerate() {
            let x = head + j as f64 * CELL;
            rect(&mut body, x, y, CELL, CELL, &color(*phi, scale));
            label(&mut body, x + CELL / 2.0, y + CELL / 2.0, 10.0, &format!("{phi:.2}"));
        }
    }
    Panel {
        title: String::new(),
        width: head + n as f64 * CELL,
        height: (records.len() as f64 + 1.0) * CELL,
        body,
    }
}

pub fn heatmap(domain: Domain, mdp: &TabularMdp, records: &[Record]) -> String {
    let scale = scale_of(records);
    let per_state = records.iter().all(|r| r.state.is_some());
    let panels = match domain.board_shape() {
        Some((w, h)) if per_state => board_panels(records, w, h, scale),
        _ if per_state && mdp.n_features() == 2 && domain.name().starts_with("gridworld") => {
            grid_panels(records, mdp, scale)
        }
        _ => vec![matrix_panel(records, scale)],
    };

    let cols = panels.len().clamp(1, PER_ROW);
    let col_w = panels.iter().fold(0.0f64, |m, p| m.max(p.width));
    let row_h = panels.iter().fold(0.0f64, |m, p| m.max(p.height)) + GAP;
    let rows = panels.len().div_ceil(cols).max(1);
    let legend_h = 3.0 * GAP;
    let width = GAP + cols as f64 * (col_w + GAP);
    let height = GAP + rows as f64 * (row_h + GAP) + legend_h;

    let mut out = String::new();
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    out.push_str(r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    for (k, p) in panels.iter().enumerate() {
        let x = GAP + (k % cols) as f64 * (col_w + GAP);
        let y = GAP + (k / cols) as f64 * (row_h + GAP);
        label(&mut out, x + p.width / 2.0, y + GAP / 2.0, 12.0, &p.title);
        let _ = write!(out, r#"<g transform="translate({x},{})">{}</g>"#, y + GAP, p.body);
    }

    // legend: -max .. 0 .. +max
    let ly = height - legend_h + GAP / 2.0;
    let steps = 21;
    let lw = (width - 2.0 * GAP).min(300.0);
    for k in 0..steps {
        let t = -1.0 + 2.0 * k as f64 / (steps - 1) as f64;
        let x = GAP + k as f64 * lw / steps as f64;
        let _ = write!(
            out,
            r#"<rect x="{x}" y="{ly}" width="{}" height="{}" fill="{}"/>"#,
            lw / steps as f64 + 0.5,
            GAP / 2.0,
            color(t * scale, scale)
        );
    }
    let ty = ly + GAP;
    label(&mut out, GAP, ty, 10.0, &format!("{:.3}", -scale));
    label(&mut out, GAP + lw / 2.0, ty, 10.0, "0");
    label(&mut out, GAP + lw, ty, 10.0, &format!("{scale:.3}"));
    out.push_str("</svg>\n");
    out
}
