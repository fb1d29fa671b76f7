//! Plain-text SVG line and scatter charts.

use std::fmt::Write;

use crate::CliError;

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 180.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Line,
    Points,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub style: Style,
}

impl Series {
    pub fn line(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self { name: name.into(), points, style: Style::Line }
    }

    pub fn points(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self { name: name.into(), points, style: Style::Points }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Axis range padded so a flat series still gets a visible band.
fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if hi - lo > 1e-12 * (1.0 + lo.abs().max(hi.abs())) {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

fn tick_label(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.2}")
    }
}

impl Chart {
    pub fn to_svg(&self) -> Result<String, CliError> {
        let finite: Vec<(f64, f64)> =
            self.series.iter().flat_map(|s| s.points.iter().copied()).filter(|(x, y)| x.is_finite() && y.is_finite()).collect();
        if finite.is_empty() {
            return Err(CliError::Input(format!("chart '{}' has no finite points", self.title)));
        }
        let (x0, x1) = range(finite.iter().map(|p| p.0));
        let (y0, y1) = range(finite.iter().map(|p| p.1));
        let plot_w = WIDTH - LEFT - RIGHT;
        let plot_h = HEIGHT - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * plot_w;
        let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * plot_h;

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(svg, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, LEFT + plot_w / 2.0, escape(&self.title));
        let _ = writeln!(
            svg,
            r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
        );
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
            let (px, py) = (sx(xv), sy(yv));
            let _ = writeln!(svg, r##"<line x1="{px:.2}" y1="{TOP}" x2="{px:.2}" y2="{:.2}" stroke="#ddd"/>"##, TOP + plot_h);
            let _ = writeln!(svg, r##"<line x1="{LEFT}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#ddd"/>"##, LEFT + plot_w);
            let _ = writeln!(svg, r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, TOP + plot_h + 18.0, tick_label(xv));
            let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 6.0, py + 4.0, tick_label(yv));
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            LEFT + plot_w / 2.0,
            HEIGHT - 10.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            svg,
            r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
            TOP + plot_h / 2.0,
            TOP + plot_h / 2.0,
            escape(&self.y_label)
        );
        for (i, s) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let pts: Vec<(f64, f64)> = s.points.iter().filter(|(x, y)| x.is_finite() && y.is_finite()).map(|&(x, y)| (sx(x), sy(y))).collect();
            match s.style {
                Style::Line => {
                    let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                    let _ = writeln!(
                        svg,
                        r#"<polyline data-series="{}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                        escape(&s.name),
                        coords.join(" ")
                    );
                }
                Style::Points => {
                    let _ = writeln!(svg, r#"<g data-series="{}" fill="{color}">"#, escape(&s.name));
                    for (x, y) in &pts {
                        let _ = writeln!(svg, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3"/>"#);
                    }
                    let _ = writeln!(svg, "</g>");
                }
            }
            let ly = TOP + 10.0 + 18.0 * i as f64;
            let lx = LEFT + plot_w + 12.0;
            let _ = writeln!(svg, r#"<rect x="{lx:.2}" y="{:.2}" width="14" height="4" fill="{color}"/>"#, ly - 2.0);
            let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 20.0, ly + 4.0, escape(&s.name));
        }
        svg.push_str("</svg>\n");
        Ok(svg)
    }
}

/// A parsed CSV: header names and numeric-or-text cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn parse(text: &str, source: &str) -> Result<Self, CliError> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let headers: Vec<String> = reader
            .headers()
            .map_err(|e| CliError::Input(format!("{source}: {e}")))?
            .iter()
            .map(str::to_string)
            .collect();
        if headers.iter().all(String::is_empty) {
            return Err(CliError::Input(format!("{source}: empty CSV")));
        }
        let rows = reader
            .records()
            .map(|r| r.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<Result<Vec<Vec<String>>, _>>()
            .map_err(|e| CliError::Input(format!("{source}: {e}")))?;
        if rows.is_empty() {
            return Err(CliError::Input(format!("{source}: CSV has no data rows")));
        }
        Ok(Self { headers, rows })
    }

    pub fn column_index(&self, name: &str, source: &str) -> Result<usize, CliError> {
        self.headers.iter().position(|h| h == name).ok_or_else(|| {
            CliError::Input(format!("{source}: unknown column '{name}'; available columns: {}", self.headers.join(", ")))
        })
    }

    pub fn numeric(&self, name: &str, source: &str) -> Result<Vec<f64>, CliError> {
        let idx = self.column_index(name, source)?;
        self.rows
            .iter()
            .map(|r| {
                r[idx].parse::<f64>().map_err(|_| CliError::Input(format!("{source}: column '{name}' has non-numeric value '{}'", r[idx])))
            })
            .collect()
    }
}

/// One chart per column, one series per named table, x taken from `x_column`.
pub fn charts_for_columns(tables: &[(String, Table)], columns: &[String], x_column: &str) -> Result<Vec<Chart>, CliError> {
    if tables.is_empty() {
        return Err(CliError::Input("no CSV files given".into()));
    }
    let first = &tables[0].1.headers;
    for (name, t) in &tables[1..] {
        if &t.headers != first {
            return Err(CliError::Input(format!("{name}: header differs from {}", tables[0].0)));
        }
    }
    columns
        .iter()
        .map(|col| {
            let series = tables
                .iter()
                .map(|(name, t)| {
                    let xs = t.numeric(x_column, name)?;
                    let ys = t.numeric(col, name)?;
                    Ok(Series::line(name.clone(), xs.into_iter().zip(ys).collect()))
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            Ok(Chart { title: col.clone(), x_label: x_column.to_string(), y_label: col.clone(), series })
        })
        .collect()
}
