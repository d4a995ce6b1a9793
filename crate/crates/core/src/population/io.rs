//! CSV persistence: `id,weight,reported_income,misreport,cost,f0,...,f{d-1}`.
//!
//! Buckets are never written. Row numbers in errors count data rows from 1;
//! header problems are reported as row 0.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{Population, PopulationError, Result, TaxpayerRecord};

const FIXED: [&str; 5] = ["id", "weight", "reported_income", "misreport", "cost"];

pub fn load_population(path: impl AsRef<Path>) -> Result<Population> {
    load_population_from_reader(File::open(path)?)
}

pub fn load_population_from_reader<R: Read>(reader: R) -> Result<Population> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let header_err = |column: &str, message: String| PopulationError::Parse {
        row: 0,
        column: column.to_string(),
        message,
    };
    for (pos, name) in FIXED.iter().enumerate() {
        match headers.get(pos) {
            Some(h) if h.trim() == *name => {}
            Some(h) => return Err(header_err(name, format!("expected column \"{name}\", found \"{h}\""))),
            None => return Err(header_err(name, "missing column".into())),
        }
    }
    let n_features = headers.len() - FIXED.len();
    for k in 0..n_features {
        let expected = format!("f{k}");
        let found = headers[FIXED.len() + k].trim();
        if found != expected {
            return Err(header_err(
                &expected,
                format!("expected column \"{expected}\", found \"{found}\""),
            ));
        }
    }

    let mut records = Vec::new();
    for (k, row) in rdr.records().enumerate() {
        let row_no = k + 1;
        let row = row?;
        let column_name = |c: usize| headers.get(c).unwrap_or("?").trim().to_string();
        let field = |c: usize| -> Result<f64> {
            let raw = row.get(c).ok_or_else(|| PopulationError::Parse {
                row: row_no,
                column: column_name(c),
                message: "missing field".into(),
            })?;
            raw.trim().parse::<f64>().map_err(|_| PopulationError::Parse {
                row: row_no,
                column: column_name(c),
                message: format!("not a number: \"{raw}\""),
            })
        };
        let id_raw = row.get(0).unwrap_or("");
        let id = id_raw.trim().parse::<u64>().map_err(|_| PopulationError::Parse {
            row: row_no,
            column: "id".into(),
            message: format!("not a non-negative integer: \"{id_raw}\""),
        })?;
        let weight = field(1)?;
        let reported_income = field(2)?;
        let misreport = field(3)?;
        let cost = field(4)?;
        let features = (0..n_features)
            .map(|j| field(FIXED.len() + j))
            .collect::<Result<Vec<f64>>>()?;

        let check = |ok: bool, column: &str, message: &str| {
            if ok {
                Ok(())
            } else {
                Err(PopulationError::Parse {
                    row: row_no,
                    column: column.to_string(),
                    message: message.to_string(),
                })
            }
        };
        check(weight.is_finite() && weight > 0.0, "weight", "must be > 0")?;
        check(cost.is_finite() && cost > 0.0, "cost", "must be > 0")?;
        check(
            reported_income.is_finite() && reported_income >= 0.0,
            "reported_income",
            "must be >= 0",
        )?;
        check(misreport.is_finite(), "misreport", "must be finite")?;
        for (j, f) in features.iter().enumerate() {
            check(f.is_finite(), &format!("f{j}"), "must be finite")?;
        }

        records.push(TaxpayerRecord {
            id,
            features,
            reported_income,
            misreport,
            cost,
            weight,
            bucket: None,
        });
    }
    Population::new(records)
}

pub fn save_population(pop: &Population, path: impl AsRef<Path>) -> Result<()> {
    write_population(pop, File::create(path)?)
}

/// Floats are written in shortest round-trip form, so save/load is lossless.
pub fn write_population<W: Write>(pop: &Population, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = FIXED.iter().map(|s| s.to_string()).collect();
    header.extend((0..pop.feature_count()).map(|k| format!("f{k}")));
    wtr.write_record(&header)?;
    for r in pop.records() {
        let mut row = vec![
            r.id.to_string(),
            r.weight.to_string(),
            r.reported_income.to_string(),
            r.misreport.to_string(),
            r.cost.to_string(),
        ];
        row.extend(r.features.iter().map(|f| f.to_string()));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}
