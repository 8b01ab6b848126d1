//! Static SVG regret charts, emitted as plain markup.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use cvbandit::harness::{read_trace_csv, TraceRow};

use crate::Failure;

const WIDTH: f64 = 820.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 230.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 60.0;
/// Points kept per polyline; longer traces are thinned by a fixed stride.
const MAX_POINTS: usize = 400;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

pub struct Series {
    pub label: String,
    pub rows: Vec<TraceRow>,
}

/// Trace CSVs in `dir`, ordered as in the manifest when there is one, else
/// by file name.
fn load_dir(dir: &Path) -> Result<Vec<Series>, Failure> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Failure::Config(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    let labels: Vec<(String, String)> = fs::read_to_string(dir.join("manifest.json"))
        .ok()
        .and_then(|text| serde_json::from_str::<serde_json::Value>(&text).ok())
        .and_then(|m| {
            m["series"].as_array().map(|a| {
                a.iter()
                    .filter_map(|e| {
                        Some((
                            e["file"].as_str()?.to_string(),
                            e["label"].as_str()?.to_string(),
                        ))
                    })
                    .collect()
            })
        })
        .unwrap_or_default();
    let mut series = Vec::new();
    for p in paths {
        let rows = read_trace_csv(&p).map_err(|e| Failure::Config(e.to_string()))?;
        if let Some(rows) = rows {
            if rows.is_empty() {
                return Err(Failure::Config(format!("{}: no data rows", p.display())));
            }
            let file = p
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let (rank, label) = match labels.iter().position(|(f, _)| *f == file) {
                Some(i) => (i, labels[i].1.clone()),
                None => (usize::MAX, file.trim_end_matches(".csv").to_string()),
            };
            series.push((rank, Series { label, rows }));
        }
    }
    // stable: unlisted files keep name order after the listed ones
    series.sort_by_key(|(rank, _)| *rank);
    let series = series.into_iter().map(|(_, s)| s).collect();
    Ok(series)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Round-number tick step giving roughly `n` ticks over `span`.
fn tick_step(span: f64, n: f64) -> f64 {
    let raw = span / n;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let nice = if norm < 1.5 {
        1.0
    } else if norm < 3.0 {
        2.0
    } else if norm < 7.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 1000.0 || v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn thin(rows: &[TraceRow]) -> Vec<TraceRow> {
    let stride = rows.len().div_ceil(MAX_POINTS).max(1);
    let mut out: Vec<TraceRow> = rows.iter().step_by(stride).copied().collect();
    if out.last() != rows.last() {
        out.push(*rows.last().expect("nonempty"));
    }
    out
}

/// The chart for one experiment. Pure function of its inputs.
pub fn render(title: &str, series: &[Series]) -> String {
    let x_max = series
        .iter()
        .flat_map(|s| s.rows.last().map(|r| r.round))
        .max()
        .unwrap_or(1)
        .max(2) as f64;
    let x_min = 1.0;
    let y_max = series
        .iter()
        .flat_map(|s| s.rows.iter().map(|r| r.ci_high.max(r.mean)))
        .fold(0.0_f64, f64::max);
    let y_max = if y_max > 0.0 { y_max * 1.05 } else { 1.0 };
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x_min) / (x_max - x_min) * pw;
    let sy = |y: f64| TOP + ph - y.max(0.0) / y_max * ph;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="28" font-size="16" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        escape(title)
    );

    // axes and ticks
    let _ = writeln!(
        svg,
        r#"<line class="axis" x1="{LEFT}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black"/>"#,
        TOP + ph,
        LEFT + pw,
        TOP + ph
    );
    let _ = writeln!(
        svg,
        r#"<line class="axis" x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{:.1}" stroke="black"/>"#,
        TOP + ph
    );
    let xs = tick_step(x_max - x_min, 6.0);
    let mut x = (x_min / xs).ceil() * xs;
    while x <= x_max + 1e-9 {
        let px = sx(x);
        let _ = writeln!(
            svg,
            r##"<line x1="{px:.1}" y1="{:.1}" x2="{px:.1}" y2="{:.1}" stroke="black"/><text x="{px:.1}" y="{:.1}" text-anchor="middle">{}</text>"##,
            TOP + ph,
            TOP + ph + 5.0,
            TOP + ph + 20.0,
            fmt_tick(x)
        );
        x += xs;
    }
    let ys = tick_step(y_max, 5.0);
    let mut y = 0.0;
    while y <= y_max + 1e-12 {
        let py = sy(y);
        let _ = writeln!(
            svg,
            r##"<line x1="{:.1}" y1="{py:.1}" x2="{LEFT}" y2="{py:.1}" stroke="black"/><line x1="{LEFT}" y1="{py:.1}" x2="{:.1}" y2="{py:.1}" stroke="#e0e0e0"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
            LEFT - 5.0,
            LEFT + pw,
            LEFT - 8.0,
            py + 4.0,
            fmt_tick(y)
        );
        y += ys;
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">round</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="20" y="{:.1}" text-anchor="middle" transform="rotate(-90 20 {:.1})">mean cumulative regret</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let rows = thin(&s.rows);
        let mut band = String::new();
        for r in &rows {
            let _ = write!(band, "{:.2},{:.2} ", sx(r.round as f64), sy(r.ci_high));
        }
        for r in rows.iter().rev() {
            let _ = write!(band, "{:.2},{:.2} ", sx(r.round as f64), sy(r.ci_low));
        }
        let _ = writeln!(
            svg,
            r#"<polygon class="band" points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            band.trim_end()
        );
        let mut line = String::new();
        for r in &rows {
            let _ = write!(line, "{:.2},{:.2} ", sx(r.round as f64), sy(r.mean));
        }
        let _ = writeln!(
            svg,
            r#"<polyline class="series" points="{}" fill="none" stroke="{color}" stroke-width="1.8"><title>{}</title></polyline>"#,
            line.trim_end(),
            escape(&s.label)
        );
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let lx = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            svg,
            r#"<rect x="{lx:.1}" y="{:.1}" width="18" height="4" fill="{color}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            ly - 2.0,
            lx + 24.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Plots `root` itself and each immediate subdirectory that holds trace
/// CSVs; each chart is written next to its CSVs as `regret.svg`.
pub fn plot_all(root: &Path) -> Result<(), Failure> {
    if !root.is_dir() {
        return Err(Failure::Config(format!(
            "{}: no result files (not a directory)",
            root.display()
        )));
    }
    let mut dirs = vec![root.to_path_buf()];
    let mut subdirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| Failure::Config(format!("{}: {e}", root.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    dirs.extend(subdirs);
    let mut written = 0;
    for dir in dirs {
        let series = load_dir(&dir)?;
        if series.is_empty() {
            continue;
        }
        let title = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "results".into());
        let path = dir.join("regret.svg");
        fs::write(&path, render(&title, &series))
            .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
        println!("wrote {}", path.display());
        written += 1;
    }
    if written == 0 {
        return Err(Failure::Config(format!(
            "{}: no result files",
            root.display()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(n: usize) -> Vec<TraceRow> {
        (1..=n)
            .map(|t| TraceRow {
                round: t,
                mean: t as f64 * 0.5,
                ci_low: t as f64 * 0.4,
                ci_high: t as f64 * 0.6,
            })
            .collect()
    }

    #[test]
    fn ticks_are_round() {
        assert_eq!(tick_step(5000.0, 6.0), 1000.0);
        assert_eq!(tick_step(1.0, 5.0), 0.2);
        assert_eq!(fmt_tick(0.2), "0.2");
        assert_eq!(fmt_tick(3000.0), "3000");
    }

    #[test]
    fn thinning_keeps_endpoints() {
        let r = rows(5000);
        let t = thin(&r);
        assert!(t.len() <= MAX_POINTS + 1);
        assert_eq!(t[0].round, 1);
        assert_eq!(t.last().unwrap().round, 5000);
    }

    #[test]
    fn labels_are_escaped() {
        let svg = render(
            "a<b",
            &[Series {
                label: "x&y".into(),
                rows: rows(3),
            }],
        );
        assert!(svg.contains("a&lt;b") && svg.contains("x&amp;y"));
    }
}
