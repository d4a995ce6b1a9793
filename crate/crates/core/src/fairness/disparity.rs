use std::io::{Read, Write};

use crate::population::{misreport_flag, Population};

use super::{ConstraintKind, FairnessConstraint, FairnessError, Result};

/// Rates for one bucket; `None` marks an empty conditioning cell.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketRates {
    /// 1-based bucket index.
    pub bucket: usize,
    pub selection_rate: Option<f64>,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub selection_rate_w: Option<f64>,
    pub tpr_w: Option<f64>,
    pub fpr_w: Option<f64>,
}

/// Largest pairwise difference of each rate over buckets where it is defined.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DisparityGaps {
    pub selection_rate: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub selection_rate_w: f64,
    pub tpr_w: f64,
    pub fpr_w: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisparityReport {
    pub constraint: FairnessConstraint,
    pub tau: f64,
    pub buckets: Vec<BucketRates>,
    pub gaps: DisparityGaps,
}

const HEADER: [&str; 7] = [
    "bucket",
    "selection_rate",
    "tpr",
    "fpr",
    "selection_rate_w",
    "tpr_w",
    "fpr_w",
];

fn fmt_rate(r: Option<f64>) -> String {
    r.map_or_else(|| "NA".to_string(), |v| v.to_string())
}

fn parse_rate(s: &str) -> Result<Option<f64>> {
    match s.trim() {
        "NA" => Ok(None),
        v => v
            .parse()
            .map(Some)
            .map_err(|_| FairnessError::Parse(format!("bad rate {v:?}"))),
    }
}

fn max_gap(values: impl Iterator<Item = Option<f64>>) -> f64 {
    let defined: Vec<f64> = values.flatten().collect();
    match (
        defined.iter().copied().reduce(f64::min),
        defined.iter().copied().reduce(f64::max),
    ) {
        (Some(lo), Some(hi)) => hi - lo,
        _ => 0.0,
    }
}

impl DisparityGaps {
    fn from_buckets(b: &[BucketRates]) -> Self {
        Self {
            selection_rate: max_gap(b.iter().map(|r| r.selection_rate)),
            tpr: max_gap(b.iter().map(|r| r.tpr)),
            fpr: max_gap(b.iter().map(|r| r.fpr)),
            selection_rate_w: max_gap(b.iter().map(|r| r.selection_rate_w)),
            tpr_w: max_gap(b.iter().map(|r| r.tpr_w)),
            fpr_w: max_gap(b.iter().map(|r| r.fpr_w)),
        }
    }
}

impl DisparityReport {
    /// Gap in the quantity the report's constraint equalizes (unweighted).
    pub fn constraint_gap(&self) -> f64 {
        match self.constraint.kind {
            ConstraintKind::DemographicParity => self.gaps.selection_rate,
            ConstraintKind::EqualTpr => self.gaps.tpr,
            ConstraintKind::EqualizedOdds => self.gaps.tpr.max(self.gaps.fpr),
        }
    }

    /// Weighted counterpart of [`constraint_gap`](Self::constraint_gap).
    pub fn constraint_gap_weighted(&self) -> f64 {
        match self.constraint.kind {
            ConstraintKind::DemographicParity => self.gaps.selection_rate_w,
            ConstraintKind::EqualTpr => self.gaps.tpr_w,
            ConstraintKind::EqualizedOdds => self.gaps.tpr_w.max(self.gaps.fpr_w),
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(HEADER)?;
        for r in &self.buckets {
            wtr.write_record(r.to_fields())?;
        }
        wtr.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Reads the per-bucket table written by [`write_csv`](Self::write_csv).
    pub fn read_csv<R: Read>(reader: R) -> Result<Vec<BucketRates>> {
        let mut rdr = csv::Reader::from_reader(reader);
        if rdr.headers()?.iter().ne(HEADER) {
            return Err(FairnessError::Parse("unexpected header".into()));
        }
        rdr.records().map(|row| BucketRates::from_fields(&row?)).collect()
    }
}

impl BucketRates {
    pub(crate) fn to_fields(&self) -> Vec<String> {
        vec![
            self.bucket.to_string(),
            fmt_rate(self.selection_rate),
            fmt_rate(self.tpr),
            fmt_rate(self.fpr),
            fmt_rate(self.selection_rate_w),
            fmt_rate(self.tpr_w),
            fmt_rate(self.fpr_w),
        ]
    }

    pub(crate) fn from_fields(row: &csv::StringRecord) -> Result<Self> {
        if row.len() != HEADER.len() {
            return Err(FairnessError::Parse(format!("expected 7 fields, got {}", row.len())));
        }
        Ok(Self {
            bucket: row[0]
                .trim()
                .parse()
                .map_err(|_| FairnessError::Parse(format!("bad bucket {:?}", &row[0])))?,
            selection_rate: parse_rate(&row[1])?,
            tpr: parse_rate(&row[2])?,
            fpr: parse_rate(&row[3])?,
            selection_rate_w: parse_rate(&row[4])?,
            tpr_w: parse_rate(&row[5])?,
            fpr_w: parse_rate(&row[6])?,
        })
    }
}

/// Binary decisions `1[score >= threshold]`.
pub fn threshold_decisions(scores: &[f64], threshold: f64) -> Vec<f64> {
    scores.iter().map(|&s| f64::from(u8::from(s >= threshold))).collect()
}

#[derive(Default, Clone, Copy)]
struct Cell {
    mass: f64,
    selected: f64,
}

impl Cell {
    fn add(&mut self, mass: f64, decision: f64) {
        self.mass += mass;
        self.selected += mass * decision;
    }

    fn rate(self) -> Option<f64> {
        (self.mass > 0.0).then(|| self.selected / self.mass)
    }
}

/// Per-bucket selection rate, TPR and FPR of `decisions` (audit
/// intensities in `[0, 1]`, one per record), with and without weights.
pub fn constraint_disparity(
    decisions: &[f64],
    pop: &Population,
    constraint: FairnessConstraint,
    tau: f64,
) -> Result<DisparityReport> {
    if decisions.len() != pop.len() {
        return Err(FairnessError::LengthMismatch {
            expected: pop.len(),
            got: decisions.len(),
        });
    }
    if !pop.is_bucketed() {
        return Err(FairnessError::NotBucketed);
    }
    let buckets = pop.bucket_indices()?;
    let nb = pop.n_buckets();
    // [all, positive, negative] cells per bucket, unweighted then weighted
    let mut cells = vec![[[Cell::default(); 3]; 2]; nb];
    for ((r, &b), &a) in pop.records().iter().zip(&buckets).zip(decisions) {
        let label = if misreport_flag(r.misreport, tau) { 1 } else { 2 };
        for (v, mass) in [(0, 1.0), (1, r.weight)] {
            cells[b][v][0].add(mass, a);
            cells[b][v][label].add(mass, a);
        }
    }
    let rows: Vec<BucketRates> = cells
        .iter()
        .enumerate()
        .map(|(b, c)| BucketRates {
            bucket: b + 1,
            selection_rate: c[0][0].rate(),
            tpr: c[0][1].rate(),
            fpr: c[0][2].rate(),
            selection_rate_w: c[1][0].rate(),
            tpr_w: c[1][1].rate(),
            fpr_w: c[1][2].rate(),
        })
        .collect();
    Ok(DisparityReport {
        constraint,
        tau,
        gaps: DisparityGaps::from_buckets(&rows),
        buckets: rows,
    })
}
