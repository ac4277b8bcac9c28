//! Output plumbing: atomic writes and table serialization. Every number is
//! emitted as the shortest decimal that parses back to exactly the same
//! 64-bit float, so no output loses precision.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::config::TableFormat;

fn tmp_sibling(path: &Path) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

/// Writes through a temp file in the same directory plus rename, so a crash
/// never leaves a half-written artifact at the final path.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = tmp_sibling(path);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

/// Runs a writer against a temp sibling of `path`, then renames into place.
pub fn atomic_via<F>(path: &Path, write: F) -> Result<(), lobcast::Error>
where
    F: FnOnce(&Path) -> Result<(), lobcast::Error>,
{
    let tmp = tmp_sibling(path);
    write(&tmp)?;
    fs::rename(&tmp, path).map_err(Into::into)
}

/// Shortest round-trip decimal form of `v`; up to 17 significant digits
/// when the value needs them.
pub fn num(v: f64) -> String {
    format!("{v}")
}

/// Serializes `value` as pretty JSON with a trailing newline and writes it
/// atomically.
pub fn write_json<S: serde::Serialize>(path: &Path, value: &S) -> io::Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("value serializes");
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub enum Cell {
    Str(String),
    F64(f64),
    Int(u64),
    OptF64(Option<f64>),
    OptStr(Option<String>),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Str(s) => s.clone(),
            Cell::F64(v) => num(*v),
            Cell::Int(v) => v.to_string(),
            Cell::OptF64(Some(v)) => num(*v),
            Cell::OptF64(None) => String::new(),
            Cell::OptStr(Some(s)) => s.clone(),
            Cell::OptStr(None) => String::new(),
        }
    }

    fn json(&self) -> serde_json::Value {
        match self {
            Cell::Str(s) => serde_json::Value::from(s.as_str()),
            Cell::F64(v) => serde_json::Value::from(*v),
            Cell::Int(v) => serde_json::Value::from(*v),
            Cell::OptF64(v) => match v {
                Some(x) => serde_json::Value::from(*x),
                None => serde_json::Value::Null,
            },
            Cell::OptStr(v) => match v {
                Some(s) => serde_json::Value::from(s.as_str()),
                None => serde_json::Value::Null,
            },
        }
    }
}

/// A rectangular result table written as `<stem>.csv` or, under the json
/// format, `<stem>.json` holding an array of objects.
pub struct Table {
    columns: Vec<&'static str>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: Vec<&'static str>) -> Self {
        Self {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn csv_bytes(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory csv");
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::csv))
                .expect("in-memory csv");
        }
        w.into_inner().expect("in-memory csv")
    }

    fn json_bytes(&self) -> Vec<u8> {
        let rows: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|row| {
                let mut obj = serde_json::Map::new();
                for (col, cell) in self.columns.iter().zip(row) {
                    obj.insert((*col).to_string(), cell.json());
                }
                serde_json::Value::Object(obj)
            })
            .collect();
        let mut bytes = serde_json::to_vec_pretty(&rows).expect("rows serialize");
        bytes.push(b'\n');
        bytes
    }

    /// Writes the table under `dir` and returns the path written.
    pub fn write(&self, dir: &Path, stem: &str, format: TableFormat) -> io::Result<PathBuf> {
        let (ext, bytes) = match format {
            TableFormat::Csv => ("csv", self.csv_bytes()),
            TableFormat::Json => ("json", self.json_bytes()),
        };
        let path = dir.join(format!("{stem}.{ext}"));
        write_atomic(&path, &bytes)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_quotes_embedded_commas() {
        let mut t = Table::new(vec!["name", "value"]);
        t.push(vec![Cell::Str("a,b".into()), Cell::F64(0.1)]);
        let text = String::from_utf8(t.csv_bytes()).unwrap();
        assert_eq!(text, "name,value\n\"a,b\",0.1\n");
    }

    #[test]
    fn numbers_round_trip_exactly() {
        for v in [0.1, 1.0 / 3.0, 6.02e23, -2e-3, f64::MIN_POSITIVE] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn missing_cells_serialize_as_empty_and_null() {
        let mut t = Table::new(vec!["x"]);
        t.push(vec![Cell::OptF64(None)]);
        assert_eq!(String::from_utf8(t.csv_bytes()).unwrap(), "x\n\"\"\n");
        let json: serde_json::Value = serde_json::from_slice(&t.json_bytes()).unwrap();
        assert!(json[0]["x"].is_null());
    }
}
