//! `key=value` configuration files, manifests and CSV output helpers.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use sha2::{Digest, Sha256};

/// Values from an optional `key=value` file. Flags given on the command line
/// take precedence.
#[derive(Debug, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut values = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                bail!("{}:{}: expected key=value", path.display(), n + 1);
            };
            values.insert(k.trim().replace('_', "-"), v.trim().to_string());
        }
        Ok(Self { values })
    }

    /// Flag value if given, else the file value, else `None`.
    pub fn pick<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.values
            .get(key)
            .map(|v| v.parse::<T>().map_err(|e| anyhow::anyhow!("config key `{key}`: {e}")))
            .transpose()
    }

    pub fn flag(&self, flag: bool, key: &str) -> Result<bool> {
        Ok(flag || self.pick::<bool>(None, key)?.unwrap_or(false))
    }

    /// Keys not consumed by the command, reported as errors to catch typos.
    pub fn check_known(&self, known: &[&str]) -> Result<()> {
        let unknown: Vec<&str> = self.values.keys().map(String::as_str).filter(|k| !known.contains(k)).collect();
        if !unknown.is_empty() {
            bail!("unknown config keys: {}", unknown.join(", "));
        }
        Ok(())
    }
}

pub fn parse_list<T>(s: &str, what: &str) -> Result<Vec<T>>
where
    T: FromStr,
    T::Err: Display,
{
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<T>().map_err(|e| anyhow::anyhow!("{what}: `{p}`: {e}")))
        .collect()
}

/// Run description shared by every output file of one run.
#[derive(Debug, Default)]
pub struct Manifest {
    entries: Vec<(String, String)>,
    warnings: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        let mut m = Self::default();
        m.set("tool", concat!("sbps ", env!("CARGO_PKG_VERSION")));
        m.set("command", command);
        m
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn warn(&mut self, w: impl Into<String>) {
        self.warnings.push(w.into());
    }

    fn body(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            s.push_str(&format!("{k}={v}\n"));
        }
        for w in &self.warnings {
            s.push_str(&format!("warning={w}\n"));
        }
        s
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.body().as_bytes()))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let text = format!("hash={}\n{}", self.hash(), self.body());
        fs::write(dir.join("manifest.txt"), text).context("writing manifest.txt")
    }
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Writes a CSV whose first line carries the manifest hash.
pub fn write_table(dir: &Path, name: &str, hash: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut out = format!("# manifest sha256={hash}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
    }
    fs::write(dir.join(name), out).with_context(|| format!("writing {name}"))
}

/// A saved table: manifest hash from the first line and rows keyed by header.
pub struct SavedTable {
    pub hash: Option<String>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl SavedTable {
    pub fn read(dir: &Path, name: &str) -> Result<Self> {
        let path = dir.join(name);
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let hash = text.lines().next().and_then(|l| l.strip_prefix("# manifest sha256=")).map(String::from);
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        let header = r.headers()?.iter().map(String::from).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|rec| rec.iter().map(String::from).collect()))
            .collect::<Result<_, _>>()
            .with_context(|| format!("parsing {name}"))?;
        Ok(Self { hash, header, rows })
    }

    pub fn col(&self, name: &str) -> Result<usize> {
        self.header.iter().position(|h| h == name).with_context(|| format!("missing column `{name}`"))
    }
}

pub fn read_manifest_hash(dir: &Path) -> Result<String> {
    let text = fs::read_to_string(dir.join("manifest.txt")).context("reading manifest.txt")?;
    text.lines()
        .next()
        .and_then(|l| l.strip_prefix("hash="))
        .map(String::from)
        .context("manifest.txt has no hash line")
}

/// Two decimals; empty cells become `-`.
pub fn fmt2(cell: &str) -> String {
    match cell.parse::<f64>() {
        Ok(v) => format!("{v:.2}"),
        Err(_) => "-".into(),
    }
}

/// Fixed-width text table.
pub fn render_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut width: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in width.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: Vec<&str>| {
        cells.iter().zip(&width).map(|(c, w)| format!("{c:<w$}")).collect::<Vec<_>>().join("  ").trim_end().to_string()
    };
    let mut s = line(header.to_vec());
    s.push('\n');
    for r in rows {
        s.push_str(&line(r.iter().map(String::as_str).collect()));
        s.push('\n');
    }
    s
}
