//! Column tables written as CSV with `# key = value` header lines.

use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Real(f64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Real(x) => real(*x),
            Cell::Text(s) => s.replace([',', '\n'], ";"),
        }
    }
}

/// Shortest round-trip form, always in exponent notation.
pub fn real(x: f64) -> String {
    if x.is_finite() {
        format!("{x:e}")
    } else {
        x.to_string()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    metadata: Vec<(String, String)>,
    columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl ResultTable {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), ..Self::default() }
    }

    pub fn meta(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.metadata.push((key.into(), value.into()));
    }

    pub fn result(&mut self, key: &str, value: f64) {
        self.meta(format!("result.{key}"), real(value));
    }

    /// Put `header`'s metadata lines ahead of this table's own.
    pub fn prepend_metadata(&mut self, header: ResultTable) {
        let own = std::mem::replace(&mut self.metadata, header.metadata);
        self.metadata.extend(own);
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.metadata {
            let _ = writeln!(out, "# {k} = {v}");
        }
        let _ = writeln!(out, "{}", self.columns.join(","));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut t = ResultTable::new(&["n", "p"]);
        t.meta("meta.command", "steady");
        t.result("mean_n", 0.25);
        t.push(vec![Cell::Int(0), Cell::Real(0.75)]);
        t.push(vec![Cell::Int(1), Cell::Real(1e-41)]);
        assert_eq!(t.to_csv(), "# meta.command = steady\n# result.mean_n = 2.5e-1\nn,p\n0,7.5e-1\n1,1e-41\n");
    }

    #[test]
    fn reals_round_trip() {
        for x in [0.1, 1.0 / 3.0, 8.799_166e-3, 6.02e23, -0.0] {
            assert_eq!(real(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }
}
