use std::fmt::Write as _;
use std::path::Path;

use crate::error::{KiError, Result};

pub const METRICS_HEADER: &str = "step,alpha,lr,loss_self,loss_ki,loss_total,valid_ppl,tokens_seen";

/// One optimizer step. `step` counts completed updates (1-based).
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub step: u64,
    pub alpha_t: f64,
    pub lr: f64,
    pub loss_self: f64,
    pub loss_ki: f64,
    pub loss_total: f64,
    pub valid_ppl: Option<f64>,
    pub tokens_seen: u64,
}

impl MetricsRow {
    pub fn to_csv_line(&self) -> String {
        let ppl = self.valid_ppl.map(|p| p.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            self.step, self.alpha_t, self.lr, self.loss_self, self.loss_ki, self.loss_total, ppl, self.tokens_seen
        )
    }

    pub fn parse_csv_line(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.trim_end_matches('\r').split(',').collect();
        if f.len() != 8 {
            return Err(KiError::FormatError(format!("metrics row with {} fields", f.len())));
        }
        let num = |i: usize| -> Result<f64> {
            f[i].parse()
                .map_err(|_| KiError::FormatError(format!("bad metrics value {:?}", f[i])))
        };
        let int = |i: usize| -> Result<u64> {
            f[i].parse()
                .map_err(|_| KiError::FormatError(format!("bad metrics value {:?}", f[i])))
        };
        Ok(MetricsRow {
            step: int(0)?,
            alpha_t: num(1)?,
            lr: num(2)?,
            loss_self: num(3)?,
            loss_ki: num(4)?,
            loss_total: num(5)?,
            valid_ppl: if f[6].is_empty() { None } else { Some(num(6)?) },
            tokens_seen: int(7)?,
        })
    }
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", r.to_csv_line());
    }
    out
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines();
    if lines.next().map(|h| h.trim_end_matches('\r')) != Some(METRICS_HEADER) {
        return Err(KiError::FormatError("missing metrics header".into()));
    }
    lines.filter(|l| !l.is_empty()).map(MetricsRow::parse_csv_line).collect()
}

pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    std::fs::write(path, metrics_csv(rows)).map_err(|e| KiError::io(path, e))
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| KiError::io(path, e))?;
    parse_metrics_csv(&text)
}

/// `(step, ppl)` for rows carrying a validation PPL.
pub fn ppl_curve(rows: &[MetricsRow]) -> Vec<(u64, f64)> {
    rows.iter().filter_map(|r| r.valid_ppl.map(|p| (r.step, p))).collect()
}
