//! Static SVG line plots of training metrics and episode trajectories.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use jetamp::envtask::TRAJECTORY_COLUMNS;
use jetamp::ppo::MetricsRow;

use crate::CliError;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// Render one plot. Coordinates are printed with fixed precision so equal
/// input gives byte-identical output.
pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let finite = series.iter().flat_map(|s| s.points.iter()).filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in finite {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    // degenerate ranges still need a nonzero span
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#, WIDTH / 2.0, escape(title));
    let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(out, r#"<path d="M{l} {t} L{l} {b} L{r} {b}" fill="none" stroke="black"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#, WIDTH / 2.0, HEIGHT - 15.0, escape(x_label));
    let _ = writeln!(
        out,
        r#"<text x="15" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 15 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
    for (v, x, y, anchor) in [(x0, l, b + 16.0, "start"), (x1, r, b + 16.0, "end")] {
        let _ = writeln!(out, r#"<text x="{x}" y="{y}" text-anchor="{anchor}" font-family="sans-serif" font-size="10">{}</text>"#, tick(v));
    }
    for (v, y) in [(y0, b), (y1, t + 10.0)] {
        let _ = writeln!(out, r#"<text x="{}" y="{y}" text-anchor="end" font-family="sans-serif" font-size="10">{}</text>"#, l - 4.0, tick(v));
    }
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.3},{:.3}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="end" font-family="sans-serif" font-size="11" fill="{color}">{}</text>"#,
            r,
            t + 14.0 * (i as f64 + 1.0),
            escape(&s.name)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-3) {
        format!("{v:.3e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        rows.push(
            serde_json::from_str::<MetricsRow>(line)
                .map_err(|e| CliError::Runtime(format!("{}:{}: malformed metrics row: {e}", path.display(), i + 1)))?,
        );
    }
    if rows.is_empty() {
        return Err(CliError::Runtime(format!("{}: no metrics rows", path.display())));
    }
    Ok(rows)
}

/// Columns of a trajectory file, in header order.
pub fn read_trajectory(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    let ncol = TRAJECTORY_COLUMNS.split_whitespace().count();
    let mut cols = vec![Vec::new(); ncol];
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse::<f64>).collect();
        let vals = vals.map_err(|e| CliError::Runtime(format!("{}:{}: {e}", path.display(), i + 1)))?;
        if vals.len() != ncol {
            return Err(CliError::Runtime(format!(
                "{}:{}: expected {ncol} columns, found {}",
                path.display(),
                i + 1,
                vals.len()
            )));
        }
        for (c, v) in cols.iter_mut().zip(vals) {
            c.push(v);
        }
    }
    if cols[0].is_empty() {
        return Err(CliError::Runtime(format!("{}: no trajectory rows", path.display())));
    }
    Ok(cols)
}

fn column(name: &str) -> usize {
    TRAJECTORY_COLUMNS.split_whitespace().position(|c| c == name).expect("known column")
}

/// Reward and episode-length learning curves.
pub fn metrics_plots(rows: &[MetricsRow]) -> Vec<(&'static str, String)> {
    let xy = |f: fn(&MetricsRow) -> f64| rows.iter().map(|r| (r.env_steps as f64, f(r))).collect::<Vec<_>>();
    let reward = line_plot(
        "Reward per step",
        "environment steps",
        "reward",
        &[
            Series { name: "task".into(), points: xy(|r| r.mean_task_reward) },
            Series { name: "style".into(), points: xy(|r| r.mean_style_reward) },
            Series { name: "total".into(), points: xy(|r| r.mean_total_reward) },
        ],
    );
    let length = line_plot(
        "Episode length",
        "environment steps",
        "steps",
        &[Series { name: "episode length".into(), points: xy(|r| r.episode_length) }],
    );
    vec![("reward.svg", reward), ("episode_length.svg", length)]
}

/// Thrust and base-height traces of one episode.
pub fn trajectory_plots(cols: &[Vec<f64>]) -> Vec<(&'static str, String)> {
    let t = &cols[column("time")];
    let trace = |name: &str| t.iter().copied().zip(cols[column(name)].iter().copied()).collect::<Vec<_>>();
    let thrust = line_plot(
        "Jet thrust",
        "time (s)",
        "thrust (N)",
        &[Series { name: "jet 0".into(), points: trace("thrust0") }, Series { name: "jet 1".into(), points: trace("thrust1") }],
    );
    let height = line_plot("Base height", "time (s)", "z (m)", &[Series { name: "base".into(), points: trace("z") }]);
    vec![("thrust.svg", thrust), ("base_height.svg", height)]
}

/// Parse every input before writing anything, so malformed input leaves no
/// partial output. Returns the written files.
pub fn plot_files(metrics: Option<&Path>, trajectory: Option<&Path>, out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    if metrics.is_none() && trajectory.is_none() {
        return Err(CliError::Config("plot needs --metrics and/or --trajectory".into()));
    }
    let mut plots = Vec::new();
    if let Some(p) = metrics {
        plots.extend(metrics_plots(&read_metrics(p)?));
    }
    if let Some(p) = trajectory {
        plots.extend(trajectory_plots(&read_trajectory(p)?));
    }
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for (name, svg) in plots {
        let path = out_dir.join(name);
        std::fs::write(&path, svg)?;
        written.push(path);
    }
    Ok(written)
}
