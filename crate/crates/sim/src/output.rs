//! Result tables and run metadata.

use std::path::Path;

use anyhow::Context;
use serde::Serialize;

use crate::config::ExperimentConfig;

/// Version string recorded in `meta.json`.
pub const VERSION: &str = concat!("idd-sim ", env!("CARGO_PKG_VERSION"), " (", env!("IDD_SIM_GIT_REV"), ")");

/// How SNR values in the configuration map to noise power.
pub const SNR_CONVENTION: &str = "SNR per receive antenna: every stream sends unit-energy symbols (E_s = 1, no 1/N_t power split), \
N0 = N_t*E_s/10^(SNR_dB/10), gamma = E_s/(N_t*N0)";

/// A CSV table with a fixed header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: &'static [&'static str],
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &'static [&'static str]) -> Self {
        Self { header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width does not match the header");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let i = self.header.iter().position(|h| *h == name)?;
        Some(self.rows.iter().map(|r| r[i].as_str()).collect())
    }

    /// Rows whose `key` column equals `value`.
    pub fn filter<'a>(&'a self, key: &str, value: &'a str) -> impl Iterator<Item = &'a Vec<String>> + 'a {
        let i = self.header.iter().position(|h| *h == key);
        self.rows.iter().filter(move |r| i.is_some_and(|i| r[i] == value))
    }

    pub fn get<'a>(&self, row: &'a [String], name: &str) -> Option<&'a str> {
        let i = self.header.iter().position(|h| *h == name)?;
        row.get(i).map(String::as_str)
    }

    pub fn write_csv(&self, path: &Path) -> anyhow::Result<()> {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
        w.write_record(self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Float formatting shared by every table.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

pub fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, num)
}

/// `a;b;c` with six decimals.
pub fn list(v: &[Option<f64>]) -> String {
    v.iter()
        .map(|x| x.map_or_else(String::new, |x| format!("{x:.6}")))
        .collect::<Vec<_>>()
        .join(";")
}

#[derive(Debug, Serialize)]
pub struct Meta<'a> {
    pub version: &'static str,
    pub experiment: &'static str,
    pub snr_convention: &'static str,
    pub config: &'a ExperimentConfig,
    pub summary: serde_json::Value,
    pub wall_time_s: f64,
}

pub fn write_meta(path: &Path, meta: &Meta<'_>) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(meta)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}
