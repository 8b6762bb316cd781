//! Tab-separated report tables.

use std::fmt::Write as _;

/// Value written for undefined metrics.
pub const UNDEFINED: &str = "NA";

/// Fixed four-decimal formatting, so reports are stable across runs.
pub fn float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.4}")
    } else {
        UNDEFINED.to_string()
    }
}

pub fn opt_float(x: Option<f64>) -> String {
    x.map_or_else(|| UNDEFINED.to_string(), float)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    /// Panics if the row width differs from the header.
    pub fn push<S: Into<String>>(&mut self, row: impl IntoIterator<Item = S>) {
        let row: Vec<String> = row.into_iter().map(Into::into).collect();
        assert_eq!(row.len(), self.header.len(), "row width");
        self.rows.push(row);
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn header(&self) -> &[String] {
        &self.header
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for line in std::iter::once(&self.header).chain(&self.rows) {
            let _ = writeln!(out, "{}", line.join("\t"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render() {
        let mut t = Table::new(["a", "b"]);
        t.push(["1".to_string(), float(0.5)]);
        t.push(["2".to_string(), opt_float(None)]);
        assert_eq!(t.render(), "a\tb\n1\t0.5000\n2\tNA\n");
    }
}
