//! Delimited-text ingestion.
//!
//! The header row decides what the file holds:
//!
//! | header            | dataset                                  |
//! |-------------------|------------------------------------------|
//! | `value`           | individual observations                  |
//! | `subgroup,value`  | subgroups, rows grouped by the label     |
//! | `x1,...,xp,y`     | labeled points (any `x*` column names)   |
//! | `v1,...,vd`       | process vectors                          |
//!
//! Commas and tabs are both accepted as separators; the header line picks
//! which. Parse failures report the offending line number.

use std::path::{Path, PathBuf};

use conformal_spc::{LabeledPoint, Observation, ProcessVector, Record, Subgroup};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Individuals,
    Subgroups,
    Labeled,
    Vectors,
}

impl Layout {
    pub fn describe(self) -> &'static str {
        match self {
            Layout::Individuals => "individual values (`value`)",
            Layout::Subgroups => "subgroups (`subgroup,value`)",
            Layout::Labeled => "labeled points (`x...,y`)",
            Layout::Vectors => "vectors (`v1..vd`)",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    Individuals(Vec<Observation>),
    Subgroups(Vec<Subgroup>),
    Labeled(Vec<LabeledPoint>),
    Vectors(Vec<ProcessVector>),
}

impl Dataset {
    pub fn layout(&self) -> Layout {
        match self {
            Dataset::Individuals(_) => Layout::Individuals,
            Dataset::Subgroups(_) => Layout::Subgroups,
            Dataset::Labeled(_) => Layout::Labeled,
            Dataset::Vectors(_) => Layout::Vectors,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Dataset::Individuals(v) => v.len(),
            Dataset::Subgroups(v) => v.len(),
            Dataset::Labeled(v) => v.len(),
            Dataset::Vectors(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn into_records(self) -> Vec<Record> {
        match self {
            Dataset::Individuals(v) => v.into_iter().map(Record::from).collect(),
            Dataset::Subgroups(v) => v.into_iter().map(Record::from).collect(),
            Dataset::Labeled(v) => Record::labeled(&v),
            Dataset::Vectors(v) => v.into_iter().map(Record::Vector).collect(),
        }
    }
}

/// A dataset together with the raw bytes it was parsed from.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub dataset: Dataset,
    pub bytes: Vec<u8>,
}

pub fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load(path: &Path) -> Result<Loaded, CliError> {
    let bytes = read_file(path)?;
    let dataset = parse(&bytes, path)?;
    Ok(Loaded { dataset, bytes })
}

fn classify(header: &[String]) -> Option<Layout> {
    let names: Vec<&str> = header.iter().map(String::as_str).collect();
    match names.as_slice() {
        ["value"] => return Some(Layout::Individuals),
        ["subgroup", "value"] => return Some(Layout::Subgroups),
        _ => {}
    }
    if let Some((last, xs)) = names.split_last() {
        if *last == "y" && !xs.is_empty() && xs.iter().all(|c| c.starts_with('x')) {
            return Some(Layout::Labeled);
        }
    }
    let vectors = names
        .iter()
        .enumerate()
        .all(|(i, c)| c.strip_prefix('v') == Some((i + 1).to_string().as_str()));
    (vectors && !names.is_empty()).then_some(Layout::Vectors)
}

/// Parses delimited text whose header names the layout.
pub fn parse(bytes: &[u8], path: &Path) -> Result<Dataset, CliError> {
    let first_line = bytes.split(|b| *b == b'\n').next().unwrap_or_default();
    let delimiter = if first_line.contains(&b'\t') {
        b'\t'
    } else {
        b','
    };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_reader(bytes);

    let parse_err = |line: u64, message: String| CliError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let header: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .iter()
        .map(str::to_ascii_lowercase)
        .collect();
    let layout = classify(&header).ok_or_else(|| CliError::Format {
        path: path.to_path_buf(),
        message: format!(
            "unrecognized header `{}`; expected `value`, `subgroup,value`, `x...,y` or `v1..vd`",
            header.join(",")
        ),
    })?;

    let mut rows: Vec<(u64, csv::StringRecord)> = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line());
        if row.iter().all(str::is_empty) {
            continue;
        }
        rows.push((line, row));
    }

    let number = |line: u64, column: &str, field: &str| -> Result<f64, CliError> {
        let v: f64 = field.parse().map_err(|_| {
            parse_err(
                line,
                format!("column `{column}`: `{field}` is not a number"),
            )
        })?;
        if !v.is_finite() {
            return Err(parse_err(
                line,
                format!("column `{column}`: `{field}` is not finite"),
            ));
        }
        Ok(v)
    };
    let numbers = |line: u64, row: &csv::StringRecord, cols: std::ops::Range<usize>| {
        cols.map(|c| number(line, &header[c], &row[c]))
            .collect::<Result<Vec<f64>, _>>()
    };

    let width = header.len();
    let dataset = match layout {
        Layout::Individuals => Dataset::Individuals(
            rows.iter()
                .enumerate()
                .map(|(i, (line, row))| {
                    Ok(Observation::new(
                        i as u64,
                        number(*line, "value", &row[0])?,
                    )?)
                })
                .collect::<Result<_, CliError>>()?,
        ),
        Layout::Subgroups => {
            let mut groups: Vec<(String, u64, Vec<f64>)> = Vec::new();
            for (line, row) in &rows {
                let value = number(*line, "value", &row[1])?;
                match groups.iter_mut().find(|g| g.0 == row[0]) {
                    Some(g) => g.2.push(value),
                    None => groups.push((row[0].to_string(), *line, vec![value])),
                }
            }
            Dataset::Subgroups(
                groups
                    .into_iter()
                    .enumerate()
                    .map(|(i, (label, line, values))| {
                        Subgroup::new(i as u64, values)
                            .map_err(|e| parse_err(line, format!("subgroup `{label}`: {e}")))
                    })
                    .collect::<Result<_, _>>()?,
            )
        }
        Layout::Labeled => Dataset::Labeled(
            rows.iter()
                .map(|(line, row)| {
                    let x = numbers(*line, row, 0..width - 1)?;
                    let y = number(*line, "y", &row[width - 1])?;
                    Ok(LabeledPoint::new(x, y)?)
                })
                .collect::<Result<_, CliError>>()?,
        ),
        Layout::Vectors => Dataset::Vectors(
            rows.iter()
                .enumerate()
                .map(|(i, (line, row))| {
                    Ok(ProcessVector::new(
                        i as u64,
                        numbers(*line, row, 0..width)?,
                    )?)
                })
                .collect::<Result<_, CliError>>()?,
        ),
    };
    if dataset.is_empty() {
        return Err(CliError::Format {
            path: PathBuf::from(path),
            message: "no data rows".into(),
        });
    }
    Ok(dataset)
}
