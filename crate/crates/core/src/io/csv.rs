//! Plain CSV with a header row and 17 significant digits per real.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::diagnostics::{FrontHistory, HistoryRow};
use crate::error::{Error, Result};

/// Shortest form that reads back to the same `f64`; `{:.16e}` keeps 17 digits.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let k = self
            .header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("no column `{name}` (have {})", self.header.join(", "))))?;
        Ok(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn to_text(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            for (k, x) in row.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{}", fmt_real(*x));
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, head) = lines.next().ok_or_else(|| Error::Config("empty CSV".into()))?;
        let header: Vec<String> = head.split(',').map(|s| s.trim().to_string()).collect();
        let mut rows = Vec::new();
        for (k, line) in lines {
            let row = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|_| Error::ConfigSyntax {
                    line: k + 1,
                    message: "CSV cell is not a number".into(),
                })?;
            if row.len() != header.len() {
                return Err(Error::ConfigSyntax {
                    line: k + 1,
                    message: format!("expected {} columns, found {}", header.len(), row.len()),
                });
            }
            rows.push(row);
        }
        Ok(Table { header, rows })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Table::parse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

pub fn history_table(history: &FrontHistory) -> Table {
    let mut t = Table::new(&HistoryRow::HEADER);
    for row in history.rows() {
        t.push(row.to_array().to_vec());
    }
    t
}

pub fn history_from_table(table: &Table) -> Result<FrontHistory> {
    let cols = HistoryRow::HEADER
        .iter()
        .map(|name| table.column(name))
        .collect::<Result<Vec<_>>>()?;
    let mut history = FrontHistory::new();
    for i in 0..table.rows.len() {
        let mut a = [0.0; 10];
        for (slot, col) in a.iter_mut().zip(&cols) {
            *slot = col[i];
        }
        history.push(HistoryRow::from_array(a))?;
    }
    Ok(history)
}
