//! Minimal static SVG line charts: axes, ticks, one polyline per series,
//! and a legend. Output is deterministic for identical input.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 56.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e"];

/// One labelled polyline.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

fn ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Render a line chart to `path`. Non-finite points (e.g. −∞ dB for exact
/// reconstructions) are skipped.
pub fn line_chart_svg(
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
) -> Result<()> {
    let finite: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.points.iter().copied())
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .collect();
    if finite.is_empty() {
        return Err(Error::InvalidInput("no finite points to plot".into()));
    }
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in &finite {
        x0 = x0.min(*x);
        x1 = x1.max(*x);
        y0 = y0.min(*y);
        y1 = y1.max(*y);
    }
    if x0 == x1 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y0 == y1 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let pad = (y1 - y0) * 0.06;
    y0 -= pad;
    y1 += pad;

    let px = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * (WIDTH - MARGIN_L - MARGIN_R);
    let py = |y: f64| HEIGHT - MARGIN_B - (y - y0) / (y1 - y0) * (HEIGHT - MARGIN_T - MARGIN_B);

    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
         <text x=\"{:.1}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
        (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
        xml_escape(title)
    );

    // axes
    let _ = write!(
        svg,
        "<line x1=\"{MARGIN_L}\" y1=\"{MARGIN_T}\" x2=\"{MARGIN_L}\" y2=\"{:.1}\" stroke=\"black\"/>\n\
         <line x1=\"{MARGIN_L}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
        HEIGHT - MARGIN_B,
        HEIGHT - MARGIN_B,
        WIDTH - MARGIN_R,
        HEIGHT - MARGIN_B
    );

    for t in ticks(x0, x1, 6) {
        let x = px(t);
        let _ = write!(
            svg,
            "<line x1=\"{x:.1}\" y1=\"{:.1}\" x2=\"{x:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n\
             <text x=\"{x:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{t:.2}</text>\n",
            HEIGHT - MARGIN_B,
            HEIGHT - MARGIN_B + 5.0,
            HEIGHT - MARGIN_B + 20.0
        );
    }
    for t in ticks(y0, y1, 6) {
        let y = py(t);
        let _ = write!(
            svg,
            "<line x1=\"{:.1}\" y1=\"{y:.1}\" x2=\"{MARGIN_L}\" y2=\"{y:.1}\" stroke=\"black\"/>\n\
             <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{t:.2}</text>\n",
            MARGIN_L - 5.0,
            MARGIN_L - 9.0,
            y + 4.0
        );
    }
    let _ = write!(
        svg,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n\
         <text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">{}</text>\n",
        (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
        HEIGHT - 12.0,
        xml_escape(x_label),
        (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
        (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
        xml_escape(y_label)
    );

    for (si, s) in series.iter().enumerate() {
        let color = COLORS[si % COLORS.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(x, y)| format!("{:.1},{:.1}", px(*x), py(*y)))
            .collect();
        if pts.len() > 1 {
            let _ = write!(
                svg,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
                pts.join(" ")
            );
        }
        for p in &pts {
            let mut it = p.split(',');
            let (cx, cy) = (it.next().unwrap(), it.next().unwrap());
            let _ = write!(
                svg,
                "<circle cx=\"{cx}\" cy=\"{cy}\" r=\"3\" fill=\"{color}\"/>\n"
            );
        }
        let ly = MARGIN_T + 14.0 + 18.0 * si as f64;
        let _ = write!(
            svg,
            "<line x1=\"{:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{color}\" stroke-width=\"2\"/>\n\
             <text x=\"{:.1}\" y=\"{:.1}\">{}</text>\n",
            WIDTH - MARGIN_R - 150.0,
            WIDTH - MARGIN_R - 126.0,
            WIDTH - MARGIN_R - 120.0,
            ly + 4.0,
            xml_escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    std::fs::write(path, svg)?;
    Ok(())
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Which config field goes on the x axis of a sweep chart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Ratio,
    Curvature,
    Angle,
}

impl SweepAxis {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ratio" => Ok(SweepAxis::Ratio),
            "curvature" => Ok(SweepAxis::Curvature),
            "angle" => Ok(SweepAxis::Angle),
            other => Err(Error::InvalidInput(format!(
                "unknown sweep axis {other} (expected ratio|curvature|angle)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
struct CsvRow {
    curvature: f64,
    angle: f64,
    ratio: f64,
    method: String,
    nmse_db: f64,
    cd: f64,
}

fn parse_results_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if !header.starts_with("curvature,angle_deg,mask_ratio,seed,method") {
        return Err(Error::Format(format!("unexpected CSV header: {header}")));
    }
    let mut rows = Vec::new();
    for (ln, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() < 8 {
            return Err(Error::Format(format!("short CSV row at line {}", ln + 2)));
        }
        if f[7] != "ok" {
            continue;
        }
        let num = |s: &str| -> Result<f64> {
            if s == "-inf" {
                return Ok(f64::NEG_INFINITY);
            }
            s.parse()
                .map_err(|_| Error::Format(format!("bad number {s} at line {}", ln + 2)))
        };
        rows.push(CsvRow {
            curvature: num(f[0])?,
            angle: num(f[1])?,
            ratio: num(f[2])?,
            method: f[4].to_string(),
            nmse_db: num(f[5])?,
            cd: num(f[6])?,
        });
    }
    Ok(rows)
}

fn median_of(mut vals: Vec<f64>) -> Option<f64> {
    vals.retain(|v| v.is_finite());
    if vals.is_empty() {
        return None;
    }
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = vals.len();
    Some(if n % 2 == 1 {
        vals[n / 2]
    } else {
        0.5 * (vals[n / 2 - 1] + vals[n / 2])
    })
}

/// Chart a results CSV: per fixed group, median metric over seeds versus
/// the chosen axis, one series per method. Returns the written files.
pub fn plot_csv(
    csv_path: &Path,
    axis: SweepAxis,
    out_dir: &Path,
) -> Result<Vec<std::path::PathBuf>> {
    let rows = parse_results_csv(csv_path)?;
    std::fs::create_dir_all(out_dir)?;

    let x_of = |r: &CsvRow| match axis {
        SweepAxis::Ratio => r.ratio,
        SweepAxis::Curvature => r.curvature,
        SweepAxis::Angle => r.angle,
    };
    let group_of = |r: &CsvRow| match axis {
        SweepAxis::Ratio => (r.curvature, r.angle),
        SweepAxis::Curvature => (r.angle, r.ratio),
        SweepAxis::Angle => (r.curvature, r.ratio),
    };
    let (axis_name, group_fmt): (&str, fn((f64, f64)) -> String) = match axis {
        SweepAxis::Ratio => ("ratio", |(c, a)| format!("c{c:.3}_a{a:03.0}")),
        SweepAxis::Curvature => ("curvature", |(a, r)| format!("a{a:03.0}_r{r:.2}")),
        SweepAxis::Angle => ("angle", |(c, r)| format!("c{c:.3}_r{r:.2}")),
    };

    let mut groups: Vec<(f64, f64)> = rows.iter().map(group_of).collect();
    groups.sort_by(|a, b| a.partial_cmp(b).unwrap());
    groups.dedup();

    let mut methods: Vec<String> = rows.iter().map(|r| r.method.clone()).collect();
    methods.sort();
    methods.dedup();

    let mut written = Vec::new();
    for group in groups {
        let tag = group_fmt(group);
        for (metric, label) in [("nmse", "NMSE [dB]"), ("cd", "cosine distance")] {
            let mut series = Vec::new();
            for method in &methods {
                let mut xs: Vec<f64> = rows
                    .iter()
                    .filter(|r| group_of(r) == group && &r.method == method)
                    .map(&x_of)
                    .collect();
                xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
                xs.dedup();
                let mut points = Vec::new();
                for x in xs {
                    let vals: Vec<f64> = rows
                        .iter()
                        .filter(|r| group_of(r) == group && &r.method == method && x_of(r) == x)
                        .map(|r| if metric == "nmse" { r.nmse_db } else { r.cd })
                        .collect();
                    if let Some(m) = median_of(vals) {
                        points.push((x, m));
                    }
                }
                if points.len() >= 2 {
                    series.push(Series {
                        label: method.clone(),
                        points,
                    });
                }
            }
            if !series.is_empty() {
                let file = out_dir.join(format!("{metric}_vs_{axis_name}_{tag}.svg"));
                line_chart_svg(
                    &file,
                    &format!("{label} vs {axis_name} ({tag})"),
                    axis_name,
                    label,
                    &series,
                )?;
                written.push(file);
            }
        }
    }
    Ok(written)
}
