//! Standalone SVG line plots of trajectory CSV columns.

use std::fmt::Write as _;

use crate::error::{PinchError, Result};

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Parsed numeric table; `#` lines are skipped.
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn parse_csv(text: &str) -> Result<Table> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| PinchError::InvalidParams("CSV has no header row".into()))?;
    let columns: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| PinchError::InvalidParams(format!("CSV row {}: {e}", i + 1)))?;
        if row.len() != columns.len() {
            return Err(PinchError::InvalidParams(format!(
                "CSV row {} has {} fields, expected {}",
                i + 1,
                row.len(),
                columns.len()
            )));
        }
        rows.push(row);
    }
    Ok(Table { columns, rows })
}

fn column(table: &Table, name: &str) -> Result<usize> {
    table
        .columns
        .iter()
        .position(|c| c == name)
        .ok_or_else(|| PinchError::InvalidParams(format!("no column '{name}'")))
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// Draws `ys` against `x` as polylines; non-finite points break a line.
pub fn render_svg(table: &Table, x: &str, ys: &[String], title: &str) -> Result<String> {
    let (w, h, m) = (800.0, 500.0, 60.0);
    let xi = column(table, x)?;
    let yi: Vec<usize> = ys.iter().map(|c| column(table, c)).collect::<Result<_>>()?;
    let (x0, x1) = range(table.rows.iter().map(|r| r[xi]));
    let (y0, y1) = range(table.rows.iter().flat_map(|r| yi.iter().map(move |&j| r[j])));
    let px = |v: f64| m + (v - x0) / (x1 - x0) * (w - 2.0 * m);
    let py = |v: f64| h - m - (v - y0) / (y1 - y0) * (h - 2.0 * m);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{m}" y="{m}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - 2.0 * m,
        h - 2.0 * m
    );
    let _ = writeln!(s, r#"<text x="{}" y="30" font-size="16" text-anchor="middle">{}</text>"#, w / 2.0, escape(title));
    for (v, anchor, xpos) in [(x0, "start", m), (x1, "end", w - m)] {
        let _ = writeln!(s, r#"<text x="{xpos}" y="{}" font-size="12" text-anchor="{anchor}">{v:.6e}</text>"#, h - m + 18.0);
    }
    for (v, ypos) in [(y0, h - m), (y1, m + 12.0)] {
        let _ = writeln!(s, r#"<text x="{}" y="{ypos}" font-size="12" text-anchor="end">{v:.4e}</text>"#, m - 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="13" text-anchor="middle">{}</text>"#, w / 2.0, h - 15.0, escape(x));
    for (k, &j) in yi.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let mut segment = Vec::new();
        let flush = |seg: &mut Vec<String>, s: &mut String| {
            if seg.len() > 1 {
                let _ = writeln!(
                    s,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                    seg.join(" ")
                );
            }
            seg.clear();
        };
        for r in &table.rows {
            if r[xi].is_finite() && r[j].is_finite() {
                segment.push(format!("{:.2},{:.2}", px(r[xi]), py(r[j])));
            } else {
                flush(&mut segment, &mut s);
            }
        }
        flush(&mut segment, &mut s);
        let ly = m + 16.0 + 16.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{ly}" font-size="12" fill="{color}">{}</text>"#,
            w - m - 110.0,
            escape(&ys[k])
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plots_columns_and_breaks_on_nan() {
        let t = parse_csv("# meta\nt,a,b\n0,1,NaN\n1,2,3\n2,3,4\n").unwrap();
        let svg = render_svg(&t, "t", &["a".into(), "b".into()], "demo").unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(render_svg(&t, "t", &["zz".into()], "x").is_err());
    }
}
