//! Metric report serialization (JSON and CSV).

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MetricRow {
    pub label: String,
    pub psnr: f64,
    pub ssim: f64,
    pub lmd: f64,
    pub hs: f64,
    /// Audio-pose correlation; null when the distance samples degenerate.
    pub correlation: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
}

impl MetricReport {
    pub fn to_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let text =
            serde_json::to_string_pretty(self).map_err(|e| Error::format(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn from_json(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::format(e.to_string()))
    }

    pub fn to_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "label,psnr,ssim,lmd,hs,correlation")?;
        for r in &self.rows {
            let corr = r
                .correlation
                .map(|c| c.to_string())
                .unwrap_or_else(|| "null".into());
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.label, r.psnr, r.ssim, r.lmd, r.hs, corr
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_round_trips_json() {
        let report = MetricReport {
            rows: vec![MetricRow {
                label: "test".into(),
                psnr: 31.5,
                ssim: 0.82,
                lmd: 1.2,
                hs: 0.91,
                correlation: Some(0.44),
            }],
        };
        let dir = std::env::temp_dir().join("tf_report_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("r.json");
        report.to_json(&path).unwrap();
        let back = MetricReport::from_json(&path).unwrap();
        assert_eq!(back, report);
        report.to_csv(dir.join("r.csv")).unwrap();
        let text = std::fs::read_to_string(dir.join("r.csv")).unwrap();
        assert!(text.starts_with("label,psnr,ssim,lmd,hs,correlation"));
        assert!(text.contains("0.44"));
    }
}
