//! Readers and writers for the on-disk formats:
//!
//! - predictions / gold / aggregated labels: UTF-8 CSV with a header row
//! - embeddings: JSON lines, `{"id": ..., "vector": [...]}`
//! - ranking: TSV with `annotator_id, theta, kappa_mean[, macro_f1]`
//!
//! Row numbers in parse errors count data rows from 1 (the header is row 0).
//! Column numbers count from 1.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::AnnotatorRow;
use crate::types::{EmbeddingSet, GoldLabels, LabelSpace, PredictionMatrix};

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, err: csv::Error) -> Error {
    let row = err.position().map_or(0, |p| p.record() as usize);
    match err.into_kind() {
        csv::ErrorKind::Io(e) => Error::io(path, e),
        kind => Error::parse(path, row, 0, format!("{kind:?}")),
    }
}

fn read_records(path: &Path, delimiter: u8) -> Result<Vec<csv::StringRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .delimiter(delimiter)
        .flexible(true)
        .from_reader(open(path)?);
    reader
        .records()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| csv_error(path, e))
}

fn csv_writer(path: &Path, delimiter: u8) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::WriterBuilder::new()
        .delimiter(delimiter)
        .from_writer(create(path)?))
}

fn finish(path: &Path, writer: csv::Writer<BufWriter<File>>) -> Result<()> {
    writer
        .into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?
        .flush()
        .map_err(|e| Error::io(path, e))
}

fn write_record<I, T>(path: &Path, writer: &mut csv::Writer<BufWriter<File>>, record: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: AsRef<[u8]>,
{
    writer.write_record(record).map_err(|e| csv_error(path, e))
}

fn expect_header(path: &Path, records: &[csv::StringRecord], expected: &[&str]) -> Result<()> {
    let header = records
        .first()
        .ok_or_else(|| Error::parse(path, 0, 0, "missing header row"))?;
    for (c, name) in expected.iter().enumerate() {
        if header.get(c) != Some(name) {
            return Err(Error::parse(
                path,
                0,
                c + 1,
                format!("expected header `{name}`, found `{}`", header.get(c).unwrap_or("")),
            ));
        }
    }
    Ok(())
}

fn parse_class(path: &Path, space: &LabelSpace, text: &str, row: usize, column: usize) -> Result<usize> {
    space
        .index_of(text)
        .ok_or_else(|| Error::parse(path, row, column, format!("unknown class `{text}`")))
}

fn parse_f64(path: &Path, text: &str, row: usize, column: usize) -> Result<f64> {
    text.parse()
        .map_err(|_| Error::parse(path, row, column, format!("invalid number `{text}`")))
}

pub fn read_predictions(path: impl AsRef<Path>, space: &LabelSpace) -> Result<PredictionMatrix> {
    let path = path.as_ref();
    let records = read_records(path, b',')?;
    expect_header(path, &records, &["item_id"])?;
    let annotator_ids: Vec<String> = records[0].iter().skip(1).map(str::to_string).collect();
    let mut seen = HashSet::new();
    for (j, id) in annotator_ids.iter().enumerate() {
        if id.is_empty() || !seen.insert(id.as_str()) {
            return Err(Error::parse(path, 0, j + 2, format!("empty or duplicate annotator id `{id}`")));
        }
    }

    let n = annotator_ids.len();
    let mut item_ids = Vec::with_capacity(records.len() - 1);
    let mut cells = Vec::with_capacity((records.len() - 1) * n);
    let mut seen = HashSet::new();
    for (row, record) in records.iter().enumerate().skip(1) {
        if record.len() != n + 1 {
            return Err(Error::parse(
                path,
                row,
                0,
                format!("expected {} fields, found {}", n + 1, record.len()),
            ));
        }
        let id = &record[0];
        if id.is_empty() || !seen.insert(id.to_string()) {
            return Err(Error::parse(path, row, 1, format!("empty or duplicate item id `{id}`")));
        }
        item_ids.push(id.to_string());
        for (j, text) in record.iter().enumerate().skip(1) {
            cells.push(if text.is_empty() {
                None
            } else {
                Some(parse_class(path, space, text, row, j + 1)?)
            });
        }
    }
    PredictionMatrix::new(item_ids, annotator_ids, cells)
}

pub fn write_predictions(path: impl AsRef<Path>, matrix: &PredictionMatrix, space: &LabelSpace) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv_writer(path, b',')?;
    write_record(
        path,
        &mut writer,
        std::iter::once("item_id").chain(matrix.annotator_ids().iter().map(String::as_str)),
    )?;
    for (id, row) in matrix.item_ids().iter().zip(matrix.rows()) {
        let cells = row.iter().map(|c| match c {
            Some(k) => space.class(*k).unwrap_or_else(|| panic!("class {k} outside label space")),
            None => "",
        });
        write_record(path, &mut writer, std::iter::once(id.as_str()).chain(cells))?;
    }
    finish(path, writer)
}

pub fn read_gold(path: impl AsRef<Path>, space: &LabelSpace) -> Result<GoldLabels> {
    let path = path.as_ref();
    let records = read_records(path, b',')?;
    expect_header(path, &records, &["item_id", "label"])?;
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    for (row, record) in records.iter().enumerate().skip(1) {
        if record.len() < 2 {
            return Err(Error::parse(path, row, 0, "expected item_id and label"));
        }
        ids.push(record[0].to_string());
        labels.push(parse_class(path, space, &record[1], row, 2)?);
    }
    GoldLabels::new(ids, labels, space)
}

pub fn write_gold(path: impl AsRef<Path>, gold: &GoldLabels, space: &LabelSpace) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv_writer(path, b',')?;
    write_record(path, &mut writer, ["item_id", "label"])?;
    for (id, &label) in gold.item_ids().iter().zip(gold.labels()) {
        write_record(path, &mut writer, [id.as_str(), space.classes()[label].as_str()])?;
    }
    finish(path, writer)
}

/// One row of `aggregated.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedLabel {
    pub item_id: String,
    pub label: usize,
    pub confidence: f64,
}

pub fn write_aggregated(path: impl AsRef<Path>, rows: &[AggregatedLabel], space: &LabelSpace) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv_writer(path, b',')?;
    write_record(path, &mut writer, ["item_id", "label", "confidence"])?;
    for row in rows {
        write_record(
            path,
            &mut writer,
            [
                row.item_id.as_str(),
                space.classes()[row.label].as_str(),
                row.confidence.to_string().as_str(),
            ],
        )?;
    }
    finish(path, writer)
}

pub fn read_aggregated(path: impl AsRef<Path>, space: &LabelSpace) -> Result<Vec<AggregatedLabel>> {
    let path = path.as_ref();
    let records = read_records(path, b',')?;
    expect_header(path, &records, &["item_id", "label", "confidence"])?;
    records
        .iter()
        .enumerate()
        .skip(1)
        .map(|(row, record)| {
            if record.len() != 3 {
                return Err(Error::parse(path, row, 0, "expected 3 fields"));
            }
            Ok(AggregatedLabel {
                item_id: record[0].to_string(),
                label: parse_class(path, space, &record[1], row, 2)?,
                confidence: parse_f64(path, &record[2], row, 3)?,
            })
        })
        .collect()
}

fn optional_number(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes `ranking.tsv`; the `macro_f1` column appears only when every row
/// carries one.
pub fn write_ranking(path: impl AsRef<Path>, rows: &[AnnotatorRow]) -> Result<()> {
    let path = path.as_ref();
    let with_f1 = !rows.is_empty() && rows.iter().all(|r| r.macro_f1.is_some());
    let mut writer = csv_writer(path, b'\t')?;
    let mut header = vec!["annotator_id", "theta", "kappa_mean"];
    if with_f1 {
        header.push("macro_f1");
    }
    write_record(path, &mut writer, header)?;
    for row in rows {
        let mut fields = vec![
            row.annotator_id.clone(),
            row.theta.to_string(),
            optional_number(row.kappa_mean),
        ];
        if with_f1 {
            fields.push(optional_number(row.macro_f1));
        }
        write_record(path, &mut writer, fields)?;
    }
    finish(path, writer)
}

pub fn read_ranking(path: impl AsRef<Path>) -> Result<Vec<AnnotatorRow>> {
    let path = path.as_ref();
    let records = read_records(path, b'\t')?;
    expect_header(path, &records, &["annotator_id", "theta", "kappa_mean"])?;
    let with_f1 = records[0].get(3) == Some("macro_f1");
    let width = if with_f1 { 4 } else { 3 };
    let optional = |text: &str, row, column| -> Result<Option<f64>> {
        if text.is_empty() {
            Ok(None)
        } else {
            parse_f64(path, text, row, column).map(Some)
        }
    };
    records
        .iter()
        .enumerate()
        .skip(1)
        .map(|(row, record)| {
            if record.len() != width {
                return Err(Error::parse(path, row, 0, format!("expected {width} fields")));
            }
            Ok(AnnotatorRow {
                annotator_id: record[0].to_string(),
                theta: parse_f64(path, &record[1], row, 2)?,
                kappa_mean: optional(&record[2], row, 3)?,
                macro_f1: if with_f1 { optional(&record[3], row, 4)? } else { None },
                accuracy: None,
            })
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct EmbeddingRecord {
    id: String,
    vector: Vec<f64>,
}

#[derive(Serialize)]
struct EmbeddingRecordRef<'a> {
    id: &'a str,
    vector: &'a [f64],
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    let reader = BufReader::new(open(path)?);
    let mut ids = Vec::new();
    let mut vectors = Vec::new();
    let mut seen = HashSet::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: EmbeddingRecord =
            serde_json::from_str(&line).map_err(|e| Error::parse(path, n + 1, e.column(), e.to_string()))?;
        if !seen.insert(record.id.clone()) {
            return Err(Error::parse(path, n + 1, 0, format!("duplicate id `{}`", record.id)));
        }
        ids.push(record.id);
        vectors.push(record.vector);
    }
    EmbeddingSet::new(ids, vectors)
}

pub fn write_embeddings(path: impl AsRef<Path>, set: &EmbeddingSet) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    for (id, vector) in set.iter() {
        serde_json::to_writer(&mut out, &EmbeddingRecordRef { id, vector })
            .map_err(|e| Error::io(path, e.into()))?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Per-cell class probabilities from the zero-shot head, one JSON line per
/// (item, description set).
pub fn write_probabilities(
    path: impl AsRef<Path>,
    predictions: &crate::zeroshot::ZeroShotPredictions,
) -> Result<()> {
    #[derive(Serialize)]
    struct Record<'a> {
        item_id: &'a str,
        annotator_id: &'a str,
        probabilities: &'a [f64],
    }
    let path = path.as_ref();
    let mut out = create(path)?;
    let matrix = &predictions.matrix;
    for (i, item_id) in matrix.item_ids().iter().enumerate() {
        for (j, annotator_id) in matrix.annotator_ids().iter().enumerate() {
            let record = Record {
                item_id,
                annotator_id,
                probabilities: predictions.probabilities(i, j),
            };
            serde_json::to_writer(&mut out, &record).map_err(|e| Error::io(path, e.into()))?;
            out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
    }
    out.flush().map_err(|e| Error::io(path, e))
}
