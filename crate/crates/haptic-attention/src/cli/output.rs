//! Run artifacts: training-log CSV, JSON manifests, and SVG charts.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use crate::trainer::LogRow;
use crate::{Error, Result};

pub const LOG_HEADER: &str = "step,lr,mean_reward,baseline_loss,accuracy";

/// Streams log rows to a CSV file, one row per training step.
pub struct LogWriter {
    out: std::io::BufWriter<std::fs::File>,
}

impl LogWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "{LOG_HEADER}")?;
        Ok(Self { out })
    }

    pub fn write(&mut self, row: &LogRow) -> Result<()> {
        let acc = row.accuracy.map(|a| a.to_string()).unwrap_or_default();
        writeln!(
            self.out,
            "{},{},{},{},{}",
            row.step, row.lr, row.mean_reward, row.baseline_loss, acc
        )?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

/// Parses a CSV written by [`LogWriter`].
pub fn parse_log(text: &str) -> Result<Vec<LogRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == LOG_HEADER => {}
        other => {
            return Err(Error::format(
                "training log",
                format!("bad header {other:?}"),
            ))
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::format(
                "training log",
                format!("row {}: expected 5 fields", i + 2),
            ));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|e| Error::format("training log", format!("row {}: {e}", i + 2)))
        };
        rows.push(LogRow {
            step: fields[0]
                .parse()
                .map_err(|e| Error::format("training log", format!("row {}: {e}", i + 2)))?,
            lr: num(fields[1])?,
            mean_reward: num(fields[2])?,
            baseline_loss: num(fields[3])?,
            accuracy: if fields[4].is_empty() {
                None
            } else {
                Some(num(fields[4])?)
            },
        });
    }
    Ok(rows)
}

/// Writes pretty-printed JSON with a trailing newline.
pub fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::format("json", e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// One named line on a chart: (x, y) points in data coordinates.
pub struct Series<'a> {
    pub name: &'a str,
    pub color: &'a str,
    pub points: Vec<(f64, f64)>,
}

/// A y∈[0,1] line chart (accuracy, reward) over an x range starting at 0.
pub fn line_chart(title: &str, x_label: &str, series: &[Series]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const ML: f64 = 50.0;
    const MR: f64 = 20.0;
    const MT: f64 = 40.0;
    const MB: f64 = 40.0;
    let plot_w = W - ML - MR;
    let plot_h = H - MT - MB;
    let x_max = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .fold(1.0_f64, f64::max);

    let px = |x: f64| ML + x / x_max * plot_w;
    let py = |y: f64| MT + (1.0 - y.clamp(0.0, 1.0)) * plot_h;

    let mut out = String::new();
    write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\">\n"
    )
    .unwrap();
    writeln!(
        out,
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{title}</text>",
        W / 2.0
    )
    .unwrap();
    for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let y = py(tick);
        writeln!(
            out,
            "<line x1=\"{ML}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"#ddd\"/>",
            W - MR
        )
        .unwrap();
        writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"11\">{tick}</text>",
            ML - 6.0,
            y + 4.0
        )
        .unwrap();
    }
    writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"11\">{x_label} \
         (0 to {x_max})</text>",
        ML + plot_w / 2.0,
        H - 10.0
    )
    .unwrap();

    for (i, s) in series.iter().enumerate() {
        if s.points.is_empty() {
            continue;
        }
        let mut d = String::new();
        for (j, &(x, y)) in s.points.iter().enumerate() {
            let cmd = if j == 0 { 'M' } else { 'L' };
            write!(d, "{cmd}{:.2} {:.2} ", px(x), py(y)).unwrap();
        }
        writeln!(
            out,
            "<path d=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>",
            d.trim_end(),
            s.color
        )
        .unwrap();
        let ly = MT + 16.0 * i as f64 + 6.0;
        writeln!(
            out,
            "<rect x=\"{}\" y=\"{}\" width=\"12\" height=\"3\" fill=\"{}\"/>",
            ML + 10.0,
            ly - 4.0,
            s.color
        )
        .unwrap();
        writeln!(
            out,
            "<text x=\"{}\" y=\"{ly}\" font-size=\"11\">{}</text>",
            ML + 28.0,
            s.name
        )
        .unwrap();
    }
    writeln!(
        out,
        "<rect x=\"{ML}\" y=\"{MT}\" width=\"{plot_w}\" height=\"{plot_h}\" fill=\"none\" \
         stroke=\"#333\"/>"
    )
    .unwrap();
    out.push_str("</svg>\n");
    out
}

/// Keeps at most `cap` evenly strided points so charts stay small.
pub fn thin_points(points: Vec<(f64, f64)>, cap: usize) -> Vec<(f64, f64)> {
    if points.len() <= cap {
        return points;
    }
    let stride = points.len().div_ceil(cap);
    let last = *points.last().expect("nonempty");
    let mut thinned: Vec<(f64, f64)> = points.into_iter().step_by(stride).collect();
    if thinned.last() != Some(&last) {
        thinned.push(last);
    }
    thinned
}
