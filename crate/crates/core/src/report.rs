//! Text renderings of pipeline results: square-matrix CSVs, SVG heatmaps
//! and concatenated delta tables.

use std::fmt::Write;

use crate::scalar::Scalar;
use crate::selection::DeltaTable;

const CELL: usize = 28;
const MARGIN: usize = 130;

/// Square matrix with row and column labels; missing cells are `NA`.
pub fn square_csv<T: Scalar>(corner: &str, labels: &[String], values: &[Vec<Option<T>>]) -> String {
    let mut out = String::from(corner);
    for l in labels {
        out.push(',');
        out.push_str(l);
    }
    out.push('\n');
    for (l, row) in labels.iter().zip(values) {
        out.push_str(l);
        for v in row {
            match v {
                Some(v) => write!(out, ",{v}").expect("write to string"),
                None => out.push_str(",NA"),
            }
        }
        out.push('\n');
    }
    out
}

/// Diverging blue-white-red colour for `v` in `[-1, 1]`.
fn colour(v: f64) -> String {
    let t = v.clamp(-1.0, 1.0);
    let fade = |x: f64| (255.0 * (1.0 - x.abs())).round() as u8;
    let (r, g, b) = if t >= 0.0 { (255, fade(t), fade(t)) } else { (fade(t), fade(t), 255) };
    format!("#{r:02x}{g:02x}{b:02x}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Heatmap of a labelled matrix. Values are mapped linearly from
/// `range` onto the blue-white-red scale; missing cells are grey. Output
/// depends only on the input.
pub fn heatmap_svg<T: Scalar>(
    title: &str,
    rows: &[String],
    cols: &[String],
    values: &[Vec<Option<T>>],
    range: (f64, f64),
) -> String {
    let width = MARGIN + cols.len() * CELL + 10;
    let height = MARGIN + rows.len() * CELL + 30;
    let (lo, hi) = range;
    let mut out = String::new();
    writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" font-family=\"sans-serif\" font-size=\"10\">"
    )
    .expect("write to string");
    writeln!(out, "<text x=\"10\" y=\"16\" font-size=\"13\">{}</text>", escape(title)).expect("write");
    let top = MARGIN + 20;
    for (i, l) in rows.iter().enumerate() {
        let y = top + i * CELL + CELL / 2 + 3;
        writeln!(out, "<text x=\"{}\" y=\"{y}\" text-anchor=\"end\">{}</text>", MARGIN - 4, escape(l)).expect("write");
    }
    for (i, l) in cols.iter().enumerate() {
        let x = MARGIN + i * CELL + CELL / 2;
        writeln!(
            out,
            "<text x=\"{x}\" y=\"{}\" transform=\"rotate(-60 {x} {})\">{}</text>",
            top - 4,
            top - 4,
            escape(l)
        )
        .expect("write");
    }
    for (i, row) in values.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let (fill, text) = match v {
                Some(v) => {
                    let f = v.to_f64_lossy();
                    let t = if hi > lo { 2.0 * (f - lo) / (hi - lo) - 1.0 } else { 0.0 };
                    let text = if hi - lo > 10.0 { format!("{f:.0}") } else { format!("{f:.2}") };
                    (colour(t), text)
                }
                None => ("#cccccc".to_string(), "NA".to_string()),
            };
            let (x, y) = (MARGIN + j * CELL, top + i * CELL);
            writeln!(
                out,
                "<rect x=\"{x}\" y=\"{y}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"{fill}\" stroke=\"#ffffff\"/>"
            )
            .expect("write");
            writeln!(
                out,
                "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"7\">{text}</text>",
                x + CELL / 2,
                y + CELL / 2 + 3
            )
            .expect("write");
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Tables sharing a header are printed under one header line; a new header
/// starts a new block after a blank line.
pub fn render_delta_tables<T: Scalar>(tables: &[DeltaTable<T>]) -> String {
    let mut out = String::new();
    let mut last_header: Option<String> = None;
    for t in tables {
        let header = t.csv_header();
        if last_header.as_deref() != Some(header.as_str()) {
            if last_header.is_some() {
                out.push('\n');
            }
            out.push_str(&header);
            out.push('\n');
            last_header = Some(header);
        }
        out.push_str(&t.csv_rows());
    }
    out
}
