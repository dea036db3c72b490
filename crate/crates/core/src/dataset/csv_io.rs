use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{SampleSet, TemporalSample};
use crate::error::{Error, Result};

/// How empty cells are resolved while loading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FillPolicy {
    /// Repeat the previous tick's value; leading gaps take the first
    /// observed value.
    #[default]
    HoldLast,
    /// Interpolate linearly between the nearest observed ticks; edges hold
    /// the nearest observation.
    LinearInterpolate,
    Reject,
}

/// Column roles for the long-format CSV layout. Every column that is not
/// the sample, tick or label column is a variable, in header order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsvSchema {
    pub sample_column: String,
    pub tick_column: String,
    pub label_column: String,
    pub fill: FillPolicy,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            sample_column: "sample_id".into(),
            tick_column: "tick".into(),
            label_column: "label".into(),
            fill: FillPolicy::HoldLast,
        }
    }
}

pub fn load_samples(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<SampleSet> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_samples(file, schema)
}

struct PendingSample {
    id: String,
    label: String,
    first_line: usize,
    // (tick, line, cells)
    rows: Vec<(usize, usize, Vec<Option<f64>>)>,
}

pub fn read_samples<R: Read>(reader: R, schema: &CsvSchema) -> Result<SampleSet> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    };
    let sample_col = find(&schema.sample_column)?;
    let tick_col = find(&schema.tick_column)?;
    let label_col = find(&schema.label_column)?;
    let var_cols: Vec<usize> = (0..header.len())
        .filter(|c| ![sample_col, tick_col, label_col].contains(c))
        .collect();
    if var_cols.is_empty() {
        return Err(Error::Data("header declares no variable columns".into()));
    }
    let variable_names: Vec<String> = var_cols.iter().map(|&c| header[c].to_string()).collect();

    let mut order: Vec<PendingSample> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        // header is line 1
        let line = r + 2;
        let id = record[sample_col].to_string();
        let tick_str = &record[tick_col];
        let tick: usize = tick_str.parse().map_err(|_| Error::NonNumeric {
            row: line,
            column: schema.tick_column.clone(),
            value: tick_str.to_string(),
        })?;
        let label = record[label_col].to_string();
        let mut cells = Vec::with_capacity(var_cols.len());
        for &c in &var_cols {
            let raw = &record[c];
            if raw.is_empty() {
                cells.push(None);
                continue;
            }
            let value: f64 = raw.parse().map_err(|_| Error::NonNumeric {
                row: line,
                column: header[c].to_string(),
                value: raw.to_string(),
            })?;
            if !value.is_finite() {
                return Err(Error::NonNumeric {
                    row: line,
                    column: header[c].to_string(),
                    value: raw.to_string(),
                });
            }
            cells.push(Some(value));
        }
        let slot = *index.entry(id.clone()).or_insert_with(|| {
            order.push(PendingSample {
                id: id.clone(),
                label: label.clone(),
                first_line: line,
                rows: Vec::new(),
            });
            order.len() - 1
        });
        let pending = &mut order[slot];
        if pending.label != label {
            return Err(Error::Data(format!(
                "sample '{id}' changes label from '{}' to '{label}' at row {line}",
                pending.label
            )));
        }
        pending.rows.push((tick, line, cells));
    }
    if order.is_empty() {
        return Err(Error::Data("file contains no samples".into()));
    }

    let (labels, class_names) = encode_labels(&order);
    let expected_ticks = order[0].rows.len();
    let mut samples = Vec::with_capacity(order.len());
    for (pending, label) in order.into_iter().zip(labels) {
        if pending.rows.len() != expected_ticks {
            return Err(Error::RaggedSample {
                sample_id: pending.id,
                expected: expected_ticks,
                found: pending.rows.len(),
            });
        }
        samples.push(assemble(pending, label, &variable_names, schema.fill)?);
    }
    SampleSet::new(samples, variable_names, class_names)
}

/// Integer labels are taken at face value; anything else is
/// dictionary-encoded in order of first appearance.
fn encode_labels(order: &[PendingSample]) -> (Vec<usize>, Vec<String>) {
    let numeric: Option<Vec<usize>> = order.iter().map(|p| p.label.parse::<usize>().ok()).collect();
    if let Some(values) = numeric {
        let max = values.iter().copied().max().unwrap_or(0);
        let names = (0..=max).map(|i| i.to_string()).collect();
        return (values, names);
    }
    let mut names: Vec<String> = Vec::new();
    let labels = order
        .iter()
        .map(|p| match names.iter().position(|n| *n == p.label) {
            Some(i) => i,
            None => {
                names.push(p.label.clone());
                names.len() - 1
            }
        })
        .collect();
    (labels, names)
}

fn assemble(
    mut pending: PendingSample,
    label: usize,
    variable_names: &[String],
    fill: FillPolicy,
) -> Result<TemporalSample> {
    let ticks = pending.rows.len();
    pending.rows.sort_by_key(|r| r.0);
    let seen: BTreeSet<usize> = pending.rows.iter().map(|r| r.0).collect();
    if seen.len() != ticks || pending.rows.last().map(|r| r.0) != Some(ticks - 1) {
        return Err(Error::Data(format!(
            "sample '{}' (first seen at row {}): ticks must be exactly 0..{}",
            pending.id,
            pending.first_line,
            ticks.saturating_sub(1)
        )));
    }
    let v = variable_names.len();
    let mut values = vec![0.0; ticks * v];
    for (j, name) in variable_names.iter().enumerate() {
        let column: Vec<Option<f64>> = pending.rows.iter().map(|r| r.2[j]).collect();
        if fill == FillPolicy::Reject {
            if let Some(i) = column.iter().position(Option::is_none) {
                return Err(Error::MissingValue {
                    row: pending.rows[i].1,
                    column: name.clone(),
                });
            }
        }
        let filled = fill_column(&column, fill).ok_or_else(|| {
            Error::Data(format!(
                "sample '{}': variable '{name}' has no observed values",
                pending.id
            ))
        })?;
        for (i, x) in filled.into_iter().enumerate() {
            values[i * v + j] = x;
        }
    }
    TemporalSample::from_row_major(pending.id, label, ticks, v, values)
}

fn fill_column(column: &[Option<f64>], fill: FillPolicy) -> Option<Vec<f64>> {
    let known: Vec<(usize, f64)> = column
        .iter()
        .enumerate()
        .filter_map(|(i, x)| x.map(|x| (i, x)))
        .collect();
    let &(first_i, first_x) = known.first()?;
    let mut out = Vec::with_capacity(column.len());
    let mut prev: Option<(usize, f64)> = None;
    let mut next_k = 0;
    for (i, cell) in column.iter().enumerate() {
        if let Some(x) = cell {
            out.push(*x);
            prev = Some((i, *x));
            next_k += 1;
            continue;
        }
        let value = match (fill, prev) {
            (_, None) => {
                debug_assert!(i < first_i);
                first_x
            }
            (FillPolicy::LinearInterpolate, Some((pi, px))) => match known.get(next_k) {
                Some(&(ni, nx)) => px + (nx - px) * (i - pi) as f64 / (ni - pi) as f64,
                None => px,
            },
            (_, Some((_, px))) => px,
        };
        out.push(value);
    }
    Some(out)
}

pub fn write_samples(set: &SampleSet, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_samples_to(set, &mut buf)?;
    crate::io::write_atomic(path.as_ref(), &buf)
}

/// Emits the long format read by [`read_samples`] with the default schema.
pub fn write_samples_to<W: Write>(set: &SampleSet, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["sample_id".to_string(), "tick".to_string()];
    header.extend(set.variable_names().iter().cloned());
    header.push("label".into());
    w.write_record(&header)?;
    for s in set.samples() {
        for i in 0..s.ticks() {
            let mut rec = Vec::with_capacity(header.len());
            rec.push(s.id.clone());
            rec.push(i.to_string());
            rec.extend(s.row(i).iter().map(|x| x.to_string()));
            rec.push(set.class_names()[s.label].clone());
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}
