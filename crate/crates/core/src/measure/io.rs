//! Dataset files: JSON-lines samples with a sidecar schema, or a CSV pair.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::sample::{ColumnKind, Dataset, Label, Sample, Schema, Value};
use crate::error::{DelError, Result};

pub fn read_schema(path: &Path) -> Result<Schema> {
    let schema: Schema = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    schema.check()?;
    Ok(schema)
}

pub fn write_schema(schema: &Schema, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, schema)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Reads one sample per non-empty line and validates each against `schema`.
pub fn read_jsonl(path: &Path, schema: Schema) -> Result<Dataset> {
    let reader = BufReader::new(File::open(path)?);
    let mut samples = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: Sample = serde_json::from_str(&line).map_err(|e| {
            DelError::Schema(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        samples.push(s);
    }
    Dataset::new(schema, samples)
}

pub fn write_jsonl(samples: &[Sample], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for s in samples {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a dataset stored as `<stem>.jsonl` next to `<stem>.schema.json`.
pub fn load_dataset(jsonl: &Path) -> Result<Dataset> {
    let schema_path = sidecar_schema_path(jsonl);
    let schema = read_schema(&schema_path)?;
    read_jsonl(jsonl, schema)
}

pub fn save_dataset(ds: &Dataset, jsonl: &Path) -> Result<()> {
    write_jsonl(&ds.samples, jsonl)?;
    write_schema(&ds.schema, &sidecar_schema_path(jsonl))
}

pub fn sidecar_schema_path(jsonl: &Path) -> std::path::PathBuf {
    let name = jsonl
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let stem = name.strip_suffix(".jsonl").unwrap_or(&name);
    jsonl.with_file_name(format!("{stem}.schema.json"))
}

/// Reads the CSV pair layout.
///
/// The base file has columns `sample_id,y,y_feat,base_0..` where `y_feat`
/// is a `;`-separated index list. The sequence file has `sample_id`
/// followed by the schema columns, one observation per line, in row order.
/// Samples keep the order of the base file.
pub fn read_csv_pair(seq_path: &Path, base_path: &Path, schema: Schema) -> Result<Dataset> {
    let mut base_rdr = csv::Reader::from_path(base_path)?;
    let mut order = Vec::new();
    let mut by_id: HashMap<String, Sample> = HashMap::new();
    for rec in base_rdr.records() {
        let rec = rec?;
        let id = rec.get(0).unwrap_or_default().to_string();
        let y = match rec.get(1).map(str::trim) {
            Some("1") | Some("+1") => Label::Positive,
            Some("-1") => Label::Negative,
            other => {
                return Err(DelError::Schema(format!(
                    "sample {id}: label must be 1 or -1, got {other:?}"
                )))
            }
        };
        let y_feat = rec
            .get(2)
            .unwrap_or_default()
            .split(';')
            .filter(|s| !s.trim().is_empty())
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| DelError::Schema(format!("sample {id}: bad y_feat entry {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let x_base = rec
            .iter()
            .skip(3)
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| DelError::Schema(format!("sample {id}: bad base value {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if by_id.contains_key(&id) {
            return Err(DelError::Schema(format!("duplicate sample id {id}")));
        }
        order.push(id.clone());
        by_id.insert(
            id,
            Sample {
                x_seq: Vec::new(),
                x_base,
                y,
                y_feat,
            },
        );
    }
    let mut seq_rdr = csv::Reader::from_path(seq_path)?;
    let headers = seq_rdr.headers()?.clone();
    let mut col_of = Vec::with_capacity(schema.columns.len());
    for c in &schema.columns {
        let idx = headers
            .iter()
            .position(|h| h == c.name)
            .ok_or_else(|| DelError::Schema(format!("sequence file lacks column {:?}", c.name)))?;
        col_of.push((idx, c.kind));
    }
    for rec in seq_rdr.records() {
        let rec = rec?;
        let id = rec.get(0).unwrap_or_default();
        let sample = by_id
            .get_mut(id)
            .ok_or_else(|| DelError::Schema(format!("sequence row for unknown sample {id}")))?;
        let row = col_of
            .iter()
            .map(|&(idx, kind)| {
                let raw = rec.get(idx).unwrap_or_default();
                match kind {
                    ColumnKind::Numeric => raw
                        .trim()
                        .parse::<f64>()
                        .map(Value::Num)
                        .map_err(|_| DelError::Schema(format!("sample {id}: bad number {raw:?}"))),
                    ColumnKind::Categorical => Ok(Value::Cat(raw.to_string())),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        sample.x_seq.push(row);
    }
    let samples = order
        .into_iter()
        .map(|id| by_id.remove(&id).expect("every ordered id is present"))
        .collect();
    Dataset::new(schema, samples)
}

pub fn write_csv_pair(ds: &Dataset, seq_path: &Path, base_path: &Path) -> Result<()> {
    let mut base = csv::Writer::from_path(base_path)?;
    let mut header = vec!["sample_id".to_string(), "y".into(), "y_feat".into()];
    header.extend((0..ds.schema.base_len).map(|i| format!("base_{i}")));
    base.write_record(&header)?;
    let mut seq = csv::Writer::from_path(seq_path)?;
    let mut sh = vec!["sample_id".to_string()];
    sh.extend(ds.schema.columns.iter().map(|c| c.name.clone()));
    seq.write_record(&sh)?;
    for (i, s) in ds.samples.iter().enumerate() {
        let id = i.to_string();
        let mut rec = vec![
            id.clone(),
            format!("{}", s.y.sign() as i8),
            s.y_feat
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(";"),
        ];
        rec.extend(s.x_base.iter().map(|v| format!("{v:?}")));
        base.write_record(&rec)?;
        for row in &s.x_seq {
            let mut r = vec![id.clone()];
            r.extend(row.iter().map(|v| match v {
                Value::Num(x) => format!("{x:?}"),
                Value::Cat(c) => c.clone(),
            }));
            seq.write_record(&r)?;
        }
    }
    base.flush()?;
    seq.flush()?;
    Ok(())
}
