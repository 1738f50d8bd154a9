//! CSV, display-table and plot-data writers.

use std::fs;
use std::path::{Path, PathBuf};

use hdg_core::{HdgError, Result};

/// Full precision: 17 significant digits.
pub fn full(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn full_opt(v: Option<f64>) -> String {
    v.map(full).unwrap_or_default()
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> HdgError {
    HdgError::Config(format!("cannot write {}: {e}", path.display()))
}

/// A table kept as strings, written once as CSV (with the config hash as first column)
/// and once as a rounded, aligned display table.
pub struct Table {
    hash: String,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
    display: Vec<Vec<String>>,
}

impl Table {
    pub fn new(hash: &str, header: &[&str]) -> Self {
        Table {
            hash: hash.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
            display: Vec::new(),
        }
    }

    pub fn push(&mut self, cells: Vec<Cell>) {
        assert_eq!(cells.len(), self.header.len());
        self.rows.push(cells.iter().map(Cell::full).collect());
        self.display.push(cells.iter().map(Cell::rounded).collect());
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
        let mut header = vec!["config_hash".to_string()];
        header.extend(self.header.iter().cloned());
        w.write_record(&header).map_err(|e| io_err(path, e))?;
        for r in &self.rows {
            w.write_record(std::iter::once(&self.hash).chain(r)).map_err(|e| io_err(path, e))?;
        }
        w.flush().map_err(|e| io_err(path, e))
    }

    pub fn render(&self) -> String {
        let widths: Vec<usize> = (0..self.header.len())
            .map(|j| self.display.iter().map(|r| r[j].len()).chain([self.header[j].len()]).max().unwrap_or(0))
            .collect();
        let line = |cells: &[String]| {
            let s: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
            s.join("  ").trim_end().to_string() + "\n"
        };
        let mut out = line(&self.header);
        out += &(line(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>()));
        for r in &self.display {
            out += &line(r);
        }
        out
    }
}

pub enum Cell {
    Text(String),
    Int(usize),
    Num(Option<f64>),
    /// Rates are shown with two decimals.
    Rate(Option<f64>),
}

impl Cell {
    fn full(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Int(i) => i.to_string(),
            Cell::Num(v) | Cell::Rate(v) => full_opt(*v),
        }
    }

    fn rounded(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Int(i) => i.to_string(),
            Cell::Num(v) => v.map(|x| format!("{x:.3e}")).unwrap_or_else(|| "-".into()),
            Cell::Rate(v) => v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into()),
        }
    }
}

pub fn out_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Two whitespace-separated columns, one point per line.
pub fn write_plot_data(path: &Path, hash: &str, label: &str, points: &[(f64, f64)]) -> Result<()> {
    let mut text = format!("# config_hash {hash}\n# h {label}\n");
    for (h, e) in points {
        text += &format!("{} {}\n", full(*h), full(*e));
    }
    write_text(path, &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_precision_round_trips() {
        for v in [0.1, 1.0 / 3.0, 2.0f64.sqrt() * 1e-9, -7.25e12] {
            assert_eq!(full(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(full(0.1), "1.0000000000000001e-1");
    }

    #[test]
    fn csv_rows_carry_hash_and_table_aligns() {
        let mut t = Table::new("abcd", &["n", "err", "rate"]);
        t.push(vec![Cell::Int(4), Cell::Num(Some(0.125)), Cell::Rate(None)]);
        t.push(vec![Cell::Int(8), Cell::Num(Some(0.03125)), Cell::Rate(Some(2.0))]);
        let dir = std::env::temp_dir().join(format!("hdg-report-{}", std::process::id()));
        ensure_dir(&dir).unwrap();
        let path = dir.join("t.csv");
        t.write_csv(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let _ = fs::remove_dir_all(&dir);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "config_hash,n,err,rate");
        assert_eq!(lines[1], "abcd,4,1.2500000000000000e-1,");
        assert!(lines[2].starts_with("abcd,8,"));
        let shown = t.render();
        assert!(shown.contains("1.250e-1") && shown.contains("2.00"));
        let widths: Vec<usize> = shown.lines().map(str::len).collect();
        assert!(widths.iter().all(|w| *w == widths[0]));
    }
}
