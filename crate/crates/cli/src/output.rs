//! Plot-ready tables and their CSV/JSON encodings.

use std::io::Write;

use serde::Serialize;

use crate::config::Format;
use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metadata {
    pub command: String,
    pub build: String,
    pub config_sha256: String,
    pub seed: u64,
}

impl Metadata {
    pub fn new(command: &str, config_sha256: String, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            build: build_id(),
            config_sha256,
            seed,
        }
    }
}

/// Version string, with the commit appended when the build sets
/// `QTHERMOSTAT_BUILD_ID`.
pub fn build_id() -> String {
    let version = concat!("qthermostat-", env!("CARGO_PKG_VERSION"));
    match option_env!("QTHERMOSTAT_BUILD_ID") {
        Some(id) => format!("{version}+{id}"),
        None => version.to_string(),
    }
}

/// One row per sweep point, in sweep order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Table {
    pub metadata: Metadata,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

/// 17 significant digits.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.16e}")
    }
}

pub fn write_csv<W: Write>(table: &Table, out: W) -> Result<(), CliError> {
    let mut out = out;
    let m = &table.metadata;
    writeln!(out, "# command: {}", m.command)?;
    writeln!(out, "# build: {}", m.build)?;
    writeln!(out, "# config_sha256: {}", m.config_sha256)?;
    writeln!(out, "# seed: {}", m.seed)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&table.columns)?;
    for row in &table.rows {
        w.write_record(row.iter().map(|&x| format_float(x)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<W: Write>(value: &impl Serialize, out: W) -> Result<(), CliError> {
    let mut out = out;
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| CliError::Io(e.to_string()))?;
    writeln!(out)?;
    Ok(())
}

pub fn write_table<W: Write>(table: &Table, format: Format, out: W) -> Result<(), CliError> {
    match format {
        Format::Csv => write_csv(table, out),
        Format::Json => write_json(table, out),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits() {
        assert_eq!(format_float(0.1), "1.0000000000000001e-1");
        assert_eq!(format_float(-2.0), "-2.0000000000000000e0");
        assert_eq!(format_float(f64::NAN), "nan");
        let x = 0.123_456_789_012_345_68_f64;
        assert_eq!(format_float(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn csv_layout() {
        let t = Table {
            metadata: Metadata::new("transition-prob", "ab".into(), 7),
            columns: vec!["kinetic_energy".into(), "P_exact".into()],
            rows: vec![vec![1.0, 0.5]],
        };
        let mut buf = Vec::new();
        write_csv(&t, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[2], "# config_sha256: ab");
        assert_eq!(lines[3], "# seed: 7");
        assert_eq!(lines[4], "kinetic_energy,P_exact");
        assert_eq!(lines[5], "1.0000000000000000e0,5.0000000000000000e-1");
        assert_eq!(t.column("P_exact"), Some(vec![0.5]));
    }
}
