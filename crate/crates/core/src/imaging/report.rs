//! Sidecar text report for a fit.
//!
//! ```text
//! initial_loss final_loss generations n seed
//! 12.5 0.031 2000 20 7
//! # frame_offset 10.5 9.25 11
//! 12.1
//! ...
//! ```
//!
//! The values line follows the header; lines starting with `#` carry
//! optional metadata; every remaining line is one generation's loss.

use std::fmt::Write as _;

use super::FitReport;
use crate::{Error, Result, Vec3};

pub const REPORT_HEADER: &str = "initial_loss final_loss generations n seed";

pub fn write_report(report: &FitReport) -> String {
    let mut out = format!(
        "{REPORT_HEADER}\n{:?} {:?} {} {} {}\n",
        report.initial_loss, report.final_loss, report.generations, report.n, report.seed
    );
    let o = report.frame_offset;
    writeln!(out, "# frame_offset {:?} {:?} {:?}", o.x, o.y, o.z).unwrap();
    if report.diverged {
        out.push_str("# diverged\n");
    }
    if report.exhausted {
        out.push_str("# exhausted\n");
    }
    for l in &report.loss_history {
        writeln!(out, "{l:?}").unwrap();
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportSummary {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub generations: usize,
    pub n: usize,
    pub seed: u64,
    pub frame_offset: Option<Vec3>,
    pub diverged: bool,
    pub loss_history: Vec<f64>,
}

pub fn parse_report(text: &str) -> Result<ReportSummary> {
    let bad = |m: &str| Error::Format(format!("fit report: {m}"));
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(REPORT_HEADER) {
        return Err(bad("missing header"));
    }
    let values: Vec<&str> = lines
        .next()
        .ok_or_else(|| bad("missing values line"))?
        .split_whitespace()
        .collect();
    if values.len() != 5 {
        return Err(bad("values line needs five fields"));
    }
    let float = |s: &str| s.parse::<f64>().map_err(|_| bad(&format!("bad number {s:?}")));
    let int = |s: &str| s.parse::<u64>().map_err(|_| bad(&format!("bad integer {s:?}")));
    let mut summary = ReportSummary {
        initial_loss: float(values[0])?,
        final_loss: float(values[1])?,
        generations: int(values[2])? as usize,
        n: int(values[3])? as usize,
        seed: int(values[4])?,
        frame_offset: None,
        diverged: false,
        loss_history: Vec::new(),
    };
    for line in lines {
        let line = line.trim();
        if let Some(meta) = line.strip_prefix('#') {
            let fields: Vec<&str> = meta.split_whitespace().collect();
            match fields.as_slice() {
                ["frame_offset", x, y, z] => {
                    summary.frame_offset = Some(Vec3::new(float(x)?, float(y)?, float(z)?))
                }
                ["diverged"] => summary.diverged = true,
                _ => {}
            }
        } else if !line.is_empty() {
            summary.loss_history.push(float(line)?);
        }
    }
    Ok(summary)
}
