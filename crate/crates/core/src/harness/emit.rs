//! CSV, JSONL, plot-data and SVG output.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde_json::json;

use super::{CampaignResult, ExperimentConfig, HarnessError, RateSweepResult, SlopeFit, SweepRecord};

pub const SOFTWARE_VERSION: &str = concat!("opker ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Jsonl,
    Both,
}

impl OutputFormat {
    fn csv(self) -> bool {
        matches!(self, OutputFormat::Csv | OutputFormat::Both)
    }

    fn jsonl(self) -> bool {
        matches!(self, OutputFormat::Jsonl | OutputFormat::Both)
    }
}

impl std::str::FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "jsonl" => Ok(OutputFormat::Jsonl),
            "both" => Ok(OutputFormat::Both),
            other => Err(format!("unknown format {other:?} (expected csv, jsonl or both)")),
        }
    }
}

pub fn write_records_csv<W: Write>(records: &[SweepRecord], w: W) -> Result<(), csv::Error> {
    let mut wr = csv::Writer::from_writer(w);
    for r in records {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_records_csv<R: Read>(r: R) -> Result<Vec<SweepRecord>, csv::Error> {
    csv::Reader::from_reader(r).deserialize().collect()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

fn run_header(kind: &str, cfg: &ExperimentConfig) -> serde_json::Value {
    json!({
        "record": "run",
        "kind": kind,
        "config_hash": cfg.hash(),
        "software": SOFTWARE_VERSION,
        "config": cfg,
    })
}

fn jsonl(lines: &[serde_json::Value]) -> Vec<u8> {
    let mut out = Vec::new();
    for l in lines {
        out.extend(serde_json::to_vec(l).expect("json value serializes"));
        out.push(b'\n');
    }
    out
}

/// Writes sweep results into `dir`; returns the created paths.
pub fn emit_results(
    result: &RateSweepResult,
    cfg: &ExperimentConfig,
    format: OutputFormat,
    dir: &Path,
    plot: bool,
) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let stem = &result.experiment_id;
    let mut paths = Vec::new();
    if format.csv() {
        let p = dir.join(format!("{stem}.csv"));
        let mut buf = Vec::new();
        write_records_csv(&result.records, &mut buf)
            .map_err(|e| HarnessError::Format { path: p.clone(), message: e.to_string() })?;
        write_file(&p, &buf)?;
        paths.push(p);
    }
    if format.jsonl() {
        let p = dir.join(format!("{stem}.jsonl"));
        let mut lines = vec![run_header("rate_sweep", cfg)];
        lines.extend(result.points.iter().map(|pt| {
            let mut v = serde_json::to_value(pt).expect("point serializes");
            v["record"] = json!("point");
            v
        }));
        lines.push(json!({
            "record": "fit",
            "fit": result.fit,
            "exponent": result.exponent,
            "margin": result.margin,
            "passed": result.passed,
            "warnings": result.warnings,
        }));
        write_file(&p, &jsonl(&lines))?;
        paths.push(p);
    }
    if plot {
        let p = dir.join(format!("{stem}_loglog.dat"));
        write_file(&p, plot_data(result).as_bytes())?;
        paths.push(p);
        let p = dir.join(format!("{stem}.svg"));
        write_file(&p, render_svg(result).as_bytes())?;
        paths.push(p);
    }
    Ok(paths)
}

fn fitted_line(result: &RateSweepResult) -> Option<(f64, f64)> {
    match result.fit {
        SlopeFit::Fitted { slope, intercept, .. } => Some((slope, intercept)),
        SlopeFit::Degenerate { .. } => None,
    }
}

/// Whitespace-separated columns: `log_M log_mean_error log_fit`.
fn plot_data(result: &RateSweepResult) -> String {
    let line = fitted_line(result);
    let mut s = String::from("# log_M log_mean_error log_fit\n");
    for p in result.points.iter().filter(|p| !p.excluded && p.mean_total > 0.0) {
        let x = (p.m as f64).ln();
        let fit = line.map(|(sl, ic)| format!("{}", ic - sl * x)).unwrap_or_else(|| "nan".into());
        s.push_str(&format!("{} {} {}\n", x, p.mean_total.ln(), fit));
    }
    s
}

/// Self-contained log-log scatter plot with the fitted line.
pub fn render_svg(result: &RateSweepResult) -> String {
    let pts: Vec<(f64, f64)> = result
        .points
        .iter()
        .filter(|p| !p.excluded && p.mean_total > 0.0)
        .map(|p| ((p.m as f64).ln(), p.mean_total.ln()))
        .collect();
    let (w, h, pad) = (480.0, 320.0, 48.0);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    if pts.is_empty() {
        svg.push_str("<text x=\"20\" y=\"40\">no data</text>\n</svg>\n");
        return svg;
    }
    let line = fitted_line(result);
    let (x0, x1) = pts.iter().fold((f64::MAX, f64::MIN), |a, p| (a.0.min(p.0), a.1.max(p.0)));
    let mut ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    if let Some((sl, ic)) = line {
        ys.push(ic - sl * x0);
        ys.push(ic - sl * x1);
    }
    let (y0, y1) = ys.iter().fold((f64::MAX, f64::MIN), |a, &y| (a.0.min(y), a.1.max(y)));
    let sx = |x: f64| pad + (x - x0) / (x1 - x0).max(1e-12) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - y0) / (y1 - y0).max(1e-12) * (h - 2.0 * pad);
    svg.push_str(&format!(
        "<line x1=\"{pad}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <text x=\"{cx}\" y=\"{ty}\" text-anchor=\"middle\" font-size=\"12\">log M</text>\n\
         <text x=\"14\" y=\"{cy}\" font-size=\"12\" transform=\"rotate(-90 14 {cy})\" text-anchor=\"middle\">log mean error</text>\n",
        b = h - pad,
        r = w - pad,
        cx = w / 2.0,
        ty = h - 12.0,
        cy = h / 2.0,
    ));
    if let Some((sl, ic)) = line {
        svg.push_str(&format!(
            "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#c0392b\" stroke-width=\"1.5\"/>\n\
             <text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" fill=\"#c0392b\">slope {:.3} (theory {:.3})</text>\n",
            sx(x0),
            sy(ic - sl * x0),
            sx(x1),
            sy(ic - sl * x1),
            pad + 8.0,
            pad - 12.0,
            sl,
            result.exponent
        ));
    }
    for (x, y) in &pts {
        svg.push_str(&format!("<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"#2c3e50\"/>\n", sx(*x), sy(*y)));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes campaign reports as CSV and/or JSONL into `dir`.
pub fn emit_campaign(
    result: &CampaignResult,
    cfg: &ExperimentConfig,
    format: OutputFormat,
    dir: &Path,
) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let stem = format!("{}_diagnostics", result.experiment_id);
    let mut paths = Vec::new();
    if format.csv() {
        let p = dir.join(format!("{stem}.csv"));
        let mut s = String::from("experiment_id,event,n,M,kappa,bound,empirical,trials,se,informative,respected\n");
        for r in &result.reports {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                result.experiment_id,
                serde_json::to_value(r.event).expect("event").as_str().unwrap_or(""),
                r.n,
                r.m,
                r.kappa,
                r.analytic_bound,
                r.empirical_probability,
                r.trials,
                r.binomial_se(),
                r.is_informative(),
                r.respects_bound()
            ));
        }
        write_file(&p, s.as_bytes())?;
        paths.push(p);
    }
    if format.jsonl() {
        let p = dir.join(format!("{stem}.jsonl"));
        let mut lines = vec![run_header("diagnostics", cfg)];
        if let Some(m) = &result.moment {
            lines.push(json!({ "record": "moment", "kappa_hat": m.kappa, "stderr": m.stderr, "trials": m.trials }));
        }
        for r in &result.reports {
            let mut v = serde_json::to_value(r).expect("report serializes");
            v["record"] = json!("tail");
            v["respected"] = json!(r.respects_bound());
            lines.push(v);
        }
        write_file(&p, &jsonl(&lines))?;
        paths.push(p);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(i: usize) -> SweepRecord {
        SweepRecord {
            experiment_id: "x".into(),
            m: 128 << i,
            rep: i,
            n: 3,
            cutoff: i.is_multiple_of(2),
            var_err: 0.1 / (i + 1) as f64 + 1e-17,
            bias_err: std::f64::consts::PI * 1e-7,
            total_err: 1.0 / 3.0,
            seed_path: format!("1/{i}/0"),
        }
    }

    #[test]
    fn csv_round_trip() {
        let recs: Vec<SweepRecord> = (0..5).map(record).collect();
        let mut buf = Vec::new();
        write_records_csv(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("experiment_id,M,rep,n,cutoff,var_err,bias_err,total_err,seed_path\n"));
        assert_eq!(read_records_csv(buf.as_slice()).unwrap(), recs);
    }

    #[test]
    fn format_parsing() {
        assert_eq!("both".parse::<OutputFormat>().unwrap(), OutputFormat::Both);
        assert!("xml".parse::<OutputFormat>().is_err());
    }
}
