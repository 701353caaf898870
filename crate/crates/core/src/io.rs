//! Tabular output. Every CSV starts with a `# config-hash:` line followed by
//! the header; numbers carry 17 significant digits. Files are written to a
//! temporary sibling and renamed into place.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::sde::Trajectory;

/// `{:.16e}`: 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn config_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self, hash: &str) -> String {
        let mut s = format!("# config-hash: {hash}\n{}\n", self.header.join(","));
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

fn temp_path(path: &Path) -> PathBuf {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!(".{name}.tmp{}", std::process::id()))
}

/// Writes through `fill` into a temporary file, then renames it to `path`.
/// On any failure the temporary file is removed and `path` is untouched.
pub fn write_atomic_with(path: &Path, fill: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    let tmp = temp_path(path);
    let result = (|| {
        let mut w = BufWriter::new(File::create(&tmp)?);
        fill(&mut w)?;
        let f = w.into_inner().map_err(|e| e.into_error())?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    write_atomic_with(path, |w| w.write_all(bytes))
}

pub fn write_table(path: &Path, table: &Table, hash: &str) -> Result<()> {
    write_atomic(path, table.render(hash).as_bytes())
}

/// Plain `key = value` lines.
pub fn render_summary(entries: &[(String, String)]) -> String {
    entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

/// Columns `time, coordinate, x, m`, coordinates numbered from 1.
pub fn trajectory_table(traj: &Trajectory) -> Table {
    let mut t = Table::new(&["time", "coordinate", "x", "m"]);
    for (k, time) in traj.times.iter().enumerate() {
        for i in 0..traj.n() {
            t.push(vec![fmt_num(*time), (i + 1).to_string(), fmt_num(traj.x[k][i]), fmt_num(traj.m[k][i])]);
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip_bit_exactly() {
        for x in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, f64::MIN_POSITIVE, 0.0] {
            assert_eq!(fmt_num(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn csv_starts_with_hash_then_header() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec!["1".into(), "2".into()]);
        let h = config_hash("x = 1\n");
        assert_eq!(h.len(), 64);
        let text = t.render(&h);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], format!("# config-hash: {h}"));
        assert_eq!(lines[1], "a,b");
        assert_eq!(lines[2], "1,2");
    }

    #[test]
    fn failed_write_leaves_nothing_behind() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("results.csv");
        let err = write_atomic_with(&target, |w| {
            w.write_all(b"# config-hash: 0\nhalf,a,row")?;
            Err(std::io::Error::other("interrupted"))
        });
        assert!(err.is_err());
        assert!(!target.exists());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn failed_rewrite_keeps_previous_file() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("results.csv");
        write_atomic(&target, b"old\n").unwrap();
        let _ = write_atomic_with(&target, |w| {
            w.write_all(b"new")?;
            Err(std::io::Error::other("interrupted"))
        });
        assert_eq!(fs::read_to_string(&target).unwrap(), "old\n");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
