//! CSV artifacts: a header row, then one record per row, floats with 17
//! significant digits. Artifacts are rendered to bytes first so runs can be
//! compared and written atomically per file.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use multifrac::forward::Field;

use crate::error::CliError;

/// 17 significant digits, round-trip exact.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| CliError::Io(e.to_string()))
    }
}

/// Field as `t,x,u` records, interior nodes only.
pub fn field_table(u: &Field) -> Table {
    let mut t = Table::new(&["t", "x", "u"]);
    let xs = u.grid().nodes();
    for (k, &time) in u.times().iter().enumerate() {
        for (x, v) in xs.iter().zip(u.at(k)) {
            t.push(vec![num(time), num(*x), num(*v)]);
        }
    }
    t
}

/// Named files produced by one run, kept sorted by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Artifacts {
    files: BTreeMap<String, Vec<u8>>,
}

impl Artifacts {
    pub fn insert(&mut self, name: &str, table: &Table) -> Result<(), CliError> {
        self.files.insert(name.to_string(), table.to_bytes()?);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.get(name).map(Vec::as_slice)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.keys().map(String::as_str)
    }

    pub fn write_to(&self, dir: &Path) -> Result<(), CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            fs::write(&path, bytes).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        }
        Ok(())
    }
}

/// Read an observation CSV with header `t,u`.
pub fn read_series(path: &Path) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Config(format!("inverse.observation: {e}")))?;
    let header = r.headers().map_err(|e| CliError::Config(format!("inverse.observation: {e}")))?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| CliError::Config(format!("inverse.observation: missing column '{name}'")))
    };
    let (ti, ui) = (col("t")?, col("u")?);
    let (mut ts, mut us) = (Vec::new(), Vec::new());
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Config(format!("inverse.observation: {e}")))?;
        let parse = |i: usize| {
            rec.get(i)
                .and_then(|v| v.trim().parse::<f64>().ok())
                .ok_or_else(|| CliError::Config(format!("inverse.observation: bad number on data row {}", line + 1)))
        };
        ts.push(parse(ti)?);
        us.push(parse(ui)?);
    }
    Ok((ts, us))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(num(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn table_bytes_are_plain_csv() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec!["1".into(), "x, y".into()]);
        assert_eq!(String::from_utf8(t.to_bytes().unwrap()).unwrap(), "a,b\n1,\"x, y\"\n");
    }

    #[test]
    fn series_roundtrip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Table::new(&["t", "u"]);
        t.push(vec![num(0.5), num(0.25)]);
        t.push(vec![num(1.0), num(-1.0)]);
        let mut a = Artifacts::default();
        a.insert("obs.csv", &t).unwrap();
        a.write_to(dir.path()).unwrap();
        let (ts, us) = read_series(&dir.path().join("obs.csv")).unwrap();
        assert_eq!((ts, us), (vec![0.5, 1.0], vec![0.25, -1.0]));
        std::fs::write(dir.path().join("bad.csv"), "t,v\n1,2\n").unwrap();
        assert!(matches!(read_series(&dir.path().join("bad.csv")), Err(CliError::Config(_))));
    }
}
