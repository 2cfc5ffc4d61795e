//! Plain-text reports: `key = value` lines followed by tab-separated tables.
//!
//! ```text
//! # masklm train
//! key = value
//!
//! [table epochs]
//! epoch	train_loss	dev_metric
//! 1	0.69	0.5
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::bytes::write_atomic;
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Table {
            name: name.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.header.len());
        self.rows.push(cells);
    }

    /// Cells of column `name`.
    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i].as_str()).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Report {
    pub title: String,
    pub entries: Vec<(String, String)>,
    pub tables: Vec<Table>,
}

impl Report {
    pub fn new(title: &str) -> Self {
        let mut r = Report {
            title: title.to_string(),
            ..Default::default()
        };
        r.set("version", env!("CARGO_PKG_VERSION"));
        r
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        let value = value.to_string().replace('\n', " ");
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn add_table(&mut self, table: Table) -> &mut Self {
        self.tables.push(table);
        self
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# masklm {}", self.title);
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        for t in &self.tables {
            let _ = writeln!(out, "\n[table {}]", t.name);
            let _ = writeln!(out, "{}", t.header.join("\t"));
            for row in &t.rows {
                let _ = writeln!(out, "{}", row.join("\t"));
            }
        }
        out
    }

    /// Inverse of [`Report::render`].
    pub fn parse(text: &str) -> Option<Report> {
        let mut lines = text.lines();
        let title = lines.next()?.strip_prefix("# masklm ")?.to_string();
        let mut report = Report {
            title,
            ..Default::default()
        };
        let mut current: Option<Table> = None;
        for line in lines {
            if let Some(name) = line.strip_prefix("[table ").and_then(|l| l.strip_suffix(']')) {
                report.tables.extend(current.take());
                current = Some(Table {
                    name: name.to_string(),
                    ..Default::default()
                });
            } else if line.is_empty() {
                continue;
            } else if let Some(t) = current.as_mut() {
                let cells: Vec<String> = line.split('\t').map(String::from).collect();
                if t.header.is_empty() {
                    t.header = cells;
                } else {
                    t.rows.push(cells);
                }
            } else {
                let (k, v) = line.split_once(" = ")?;
                report.entries.push((k.to_string(), v.to_string()));
            }
        }
        report.tables.extend(current);
        Some(report)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.render().as_bytes())
    }
}
