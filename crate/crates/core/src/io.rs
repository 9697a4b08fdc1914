//! CSV ingestion and export.
//!
//! Required columns are `z` (0/1) and `g` (any label); `y` is required unless
//! outcomes are optional. An `id` column is kept when present. Every other
//! column is a covariate unless a covariate list is given. Lines starting
//! with `#` are skipped.

use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::data::{DataError, Dataset, UnitRecord};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot open {path}: {source}")]
    Open { path: String, source: std::io::Error },
    #[error("line {line}: {source}")]
    Csv { line: u64, source: csv::Error },
    #[error(transparent)]
    Write(#[from] csv::Error),
    #[error("file is empty")]
    Empty,
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),
    #[error("line {line}, column `{column}`: cannot parse `{value}` as a number")]
    NotNumeric { line: u64, column: String, value: String },
    #[error("line {line}: treatment `{value}` is not 0 or 1")]
    Treatment { line: u64, value: String },
    #[error("line {line}: empty subgroup label")]
    EmptyGroup { line: u64 },
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReadOptions {
    /// Covariate columns to keep, in order; `None` keeps every non-reserved column.
    pub covariates: Option<Vec<String>>,
    /// Columns expanded into 0/1 indicators, dropping the first level as baseline.
    pub categorical: Vec<String>,
    /// Accept a file without `y` or with empty outcome cells.
    pub outcome_optional: bool,
}

const RESERVED: [&str; 4] = ["id", "z", "g", "y"];

/// Orders labels numerically when all of them are numbers, lexically otherwise.
fn sort_labels(labels: BTreeSet<String>) -> Vec<String> {
    let mut v: Vec<String> = labels.into_iter().collect();
    if v.iter().all(|l| l.parse::<f64>().is_ok()) {
        v.sort_by(|a, b| a.parse::<f64>().unwrap().total_cmp(&b.parse::<f64>().unwrap()));
    }
    v
}

fn parse_num(cell: &str, line: u64, column: &str) -> Result<f64, IoError> {
    cell.trim().parse::<f64>().map_err(|_| IoError::NotNumeric {
        line,
        column: column.to_string(),
        value: cell.to_string(),
    })
}

pub fn read_csv(path: &Path, options: &ReadOptions) -> Result<Dataset, IoError> {
    let file = std::fs::File::open(path).map_err(|source| IoError::Open { path: path.display().to_string(), source })?;
    read_csv_from(file, options)
}

pub fn read_csv_from<R: Read>(reader: R, options: &ReadOptions) -> Result<Dataset, IoError> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|source| IoError::Csv { line: 1, source })?.clone();
    if headers.is_empty() {
        return Err(IoError::Empty);
    }
    let mut col = HashMap::new();
    for (i, h) in headers.iter().enumerate() {
        if col.insert(h.to_string(), i).is_some() {
            return Err(IoError::DuplicateColumn(h.to_string()));
        }
    }
    let find = |name: &str| col.get(name).copied().ok_or_else(|| IoError::MissingColumn(name.to_string()));
    let (zi, gi) = (find("z")?, find("g")?);
    let yi = match find("y") {
        Ok(i) => Some(i),
        Err(e) if !options.outcome_optional => return Err(e),
        Err(_) => None,
    };
    let idi = col.get("id").copied();
    let selected: Vec<String> = match &options.covariates {
        Some(c) => c.clone(),
        None => headers.iter().filter(|h| !RESERVED.contains(h)).map(String::from).collect(),
    };
    for c in options.categorical.iter().chain(&selected) {
        find(c)?;
    }

    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|source| {
            let line = source.position().map_or(0, |p| p.line());
            IoError::Csv { line, source }
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        rows.push((line, rec));
    }
    if rows.is_empty() {
        return Err(IoError::Empty);
    }

    let group_labels = sort_labels(rows.iter().map(|(_, r)| r[gi].to_string()).collect());
    if let Some((line, _)) = rows.iter().find(|(_, r)| r[gi].is_empty()) {
        return Err(IoError::EmptyGroup { line: *line });
    }
    let group_of: HashMap<&str, usize> = group_labels.iter().enumerate().map(|(i, l)| (l.as_str(), i + 1)).collect();
    let levels: HashMap<&str, Vec<String>> = options
        .categorical
        .iter()
        .map(|c| {
            let j = col[c.as_str()];
            (c.as_str(), sort_labels(rows.iter().map(|(_, r)| r[j].to_string()).collect()))
        })
        .collect();

    let mut names = Vec::new();
    for c in &selected {
        match levels.get(c.as_str()) {
            Some(lv) => names.extend(lv.iter().skip(1).map(|l| format!("{c}={l}"))),
            None => names.push(c.clone()),
        }
    }

    let mut units = Vec::with_capacity(rows.len());
    for (n, (line, rec)) in rows.iter().enumerate() {
        let line = *line;
        let z = match &rec[zi] {
            "0" => 0,
            "1" => 1,
            other => return Err(IoError::Treatment { line, value: other.to_string() }),
        };
        let y = match yi.map(|i| &rec[i]) {
            None => None,
            Some("") if options.outcome_optional => None,
            Some(cell) => Some(parse_num(cell, line, "y")?),
        };
        let mut x = Vec::with_capacity(names.len());
        for c in &selected {
            let cell = &rec[col[c.as_str()]];
            match levels.get(c.as_str()) {
                Some(lv) => x.extend(lv.iter().skip(1).map(|l| f64::from(u8::from(l == cell)))),
                None => x.push(parse_num(cell, line, c)?),
            }
        }
        let id = idi.map_or_else(|| (n + 1).to_string(), |i| rec[i].to_string());
        units.push(UnitRecord::new(id, z, group_of[&rec[gi]], x, y));
    }
    let ds = Dataset::new(units, group_labels.len(), names).with_group_labels(group_labels);
    ds.check()?;
    Ok(ds)
}

/// Writes `id,z,g,y,<covariates>` with original subgroup labels. Values use
/// the shortest representation that parses back to the same double.
pub fn write_csv<W: Write>(dataset: &Dataset, writer: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["id".to_string(), "z".into(), "g".into(), "y".into()];
    header.extend(dataset.covariate_names.iter().cloned());
    w.write_record(&header)?;
    for u in &dataset.units {
        let mut row = vec![u.id.clone(), u.z.to_string(), dataset.group_labels[u.g - 1].clone()];
        row.push(u.y.map_or_else(String::new, |y| y.to_string()));
        row.extend(u.x.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| IoError::Write(e.into()))?;
    Ok(())
}
