//! Multi-model CSV tables written by a run, and their readers.

use std::io::{Read, Write};

use audit_core::fairness::BucketRates;

use crate::{CliError, Result};

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| v.to_string())
}

fn parse_opt(field: Option<&str>, what: &str, row: usize) -> Result<Option<f64>> {
    match field.map(str::trim) {
        Some("NA") => Ok(None),
        Some(v) => v
            .parse()
            .map(Some)
            .map_err(|_| CliError::Artifact(format!("row {row}: bad {what} {v:?}"))),
        None => Err(CliError::Artifact(format!("row {row}: missing {what}"))),
    }
}

fn parse<T: std::str::FromStr>(field: Option<&str>, what: &str, row: usize) -> Result<T> {
    field
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| CliError::Artifact(format!("row {row}: bad {what}")))
}

fn expect_header<R: Read>(rdr: &mut csv::Reader<R>, header: &[&str]) -> Result<()> {
    if rdr.headers()?.iter().ne(header.iter().copied()) {
        return Err(CliError::Artifact(format!("expected header {}", header.join(","))));
    }
    Ok(())
}

/// One point of an audit-rate-by-income curve.
#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub label: String,
    pub bucket: usize,
    pub rate: Option<f64>,
    pub oracle_rate: Option<f64>,
}

const RATE_HEADER: [&str; 4] = ["label", "bucket", "rate", "oracle_rate"];

pub fn write_rates<W: Write>(rows: &[RateRow], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(RATE_HEADER)?;
    for r in rows {
        wtr.write_record([r.label.clone(), r.bucket.to_string(), opt(r.rate), opt(r.oracle_rate)])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_rates<R: Read>(reader: R) -> Result<Vec<RateRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    expect_header(&mut rdr, &RATE_HEADER)?;
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        out.push(RateRow {
            label: rec.get(0).unwrap_or_default().to_string(),
            bucket: parse(rec.get(1), "bucket", k + 1)?,
            rate: parse_opt(rec.get(2), "rate", k + 1)?,
            oracle_rate: parse_opt(rec.get(3), "oracle_rate", k + 1)?,
        });
    }
    Ok(out)
}

const DISPARITY_HEADER: [&str; 8] = [
    "label",
    "bucket",
    "selection_rate",
    "tpr",
    "fpr",
    "selection_rate_w",
    "tpr_w",
    "fpr_w",
];

pub fn write_disparity<W: Write>(rows: &[(String, BucketRates)], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(DISPARITY_HEADER)?;
    for (label, b) in rows {
        wtr.write_record([
            label.clone(),
            b.bucket.to_string(),
            opt(b.selection_rate),
            opt(b.tpr),
            opt(b.fpr),
            opt(b.selection_rate_w),
            opt(b.tpr_w),
            opt(b.fpr_w),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_disparity<R: Read>(reader: R) -> Result<Vec<(String, BucketRates)>> {
    let mut rdr = csv::Reader::from_reader(reader);
    expect_header(&mut rdr, &DISPARITY_HEADER)?;
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = k + 1;
        out.push((
            rec.get(0).unwrap_or_default().to_string(),
            BucketRates {
                bucket: parse(rec.get(1), "bucket", row)?,
                selection_rate: parse_opt(rec.get(2), "selection_rate", row)?,
                tpr: parse_opt(rec.get(3), "tpr", row)?,
                fpr: parse_opt(rec.get(4), "fpr", row)?,
                selection_rate_w: parse_opt(rec.get(5), "selection_rate_w", row)?,
                tpr_w: parse_opt(rec.get(6), "tpr_w", row)?,
                fpr_w: parse_opt(rec.get(7), "fpr_w", row)?,
            },
        ));
    }
    Ok(out)
}

/// Long-format intensities: one `(label, id, alpha)` row per record and
/// model.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationRow {
    pub label: String,
    pub id: u64,
    pub alpha: f64,
}

const ALLOCATION_HEADER: [&str; 3] = ["label", "id", "alpha"];

pub fn write_allocations<W: Write>(rows: &[AllocationRow], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(ALLOCATION_HEADER)?;
    for r in rows {
        wtr.write_record([r.label.clone(), r.id.to_string(), r.alpha.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_allocations<R: Read>(reader: R) -> Result<Vec<AllocationRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    expect_header(&mut rdr, &ALLOCATION_HEADER)?;
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        out.push(AllocationRow {
            label: rec.get(0).unwrap_or_default().to_string(),
            id: parse(rec.get(1), "id", k + 1)?,
            alpha: parse(rec.get(2), "alpha", k + 1)?,
        });
    }
    Ok(out)
}

/// Pass/fail line for one suite criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct CriterionResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

const SUMMARY_HEADER: [&str; 3] = ["criterion", "passed", "detail"];

pub fn write_summary<W: Write>(rows: &[CriterionResult], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(SUMMARY_HEADER)?;
    for r in rows {
        wtr.write_record([
            r.name.as_str(),
            if r.passed { "true" } else { "false" },
            r.detail.as_str(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_summary<R: Read>(reader: R) -> Result<Vec<CriterionResult>> {
    let mut rdr = csv::Reader::from_reader(reader);
    expect_header(&mut rdr, &SUMMARY_HEADER)?;
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        out.push(CriterionResult {
            name: rec.get(0).unwrap_or_default().to_string(),
            passed: parse(rec.get(1), "passed", k + 1)?,
            detail: rec.get(2).unwrap_or_default().to_string(),
        });
    }
    Ok(out)
}

/// Plain string table used for per-scenario suite outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(&self.header)?;
        for r in &self.rows {
            wtr.write_record(r)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header = rdr.headers()?.iter().map(str::to_string).collect();
        let rows = rdr
            .records()
            .map(|r| r.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<_, _>>()?;
        Ok(Self { header, rows })
    }

    /// Column `name` parsed as numbers.
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let j = self
            .header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Artifact(format!("no column {name:?}")))?;
        self.rows
            .iter()
            .enumerate()
            .map(|(k, r)| parse(r.get(j).map(String::as_str), name, k + 1))
            .collect()
    }
}
