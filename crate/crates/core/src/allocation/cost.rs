//! Audit cost lookup by (income bucket, taxpayer group).

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{AllocationError, Result};
use crate::population::{Population, TaxpayerRecord};
use crate::stats::{neumaier_sum, weighted_quantile};

/// How records are split into groups within a bucket.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum GroupRule {
    /// Everyone is group 1.
    #[default]
    Single,
    /// Group 2 when reported income exceeds the threshold, else group 1.
    IncomeAbove { threshold: f64 },
}

impl GroupRule {
    pub fn group_of(&self, rec: &TaxpayerRecord) -> usize {
        match *self {
            GroupRule::Single => 1,
            GroupRule::IncomeAbove { threshold } => 1 + usize::from(rec.reported_income > threshold),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostCell {
    pub bucket: usize,
    pub group: usize,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostModel {
    rule: GroupRule,
    cells: BTreeMap<(usize, usize), f64>,
}

impl CostModel {
    pub fn new(rule: GroupRule, cells: &[CostCell]) -> Result<Self> {
        let mut map = BTreeMap::new();
        for c in cells {
            if c.bucket == 0 || c.group == 0 {
                return Err(AllocationError::CostModel("bucket and group are 1-based".into()));
            }
            if !(c.cost > 0.0 && c.cost.is_finite()) {
                return Err(AllocationError::CostModel(format!(
                    "cost for bucket {}, group {} must be positive, got {}",
                    c.bucket, c.group, c.cost
                )));
            }
            if map.insert((c.bucket, c.group), c.cost).is_some() {
                return Err(AllocationError::CostModel(format!(
                    "duplicate cell for bucket {}, group {}",
                    c.bucket, c.group
                )));
            }
        }
        if map.is_empty() {
            return Err(AllocationError::CostModel("no cells".into()));
        }
        Ok(Self { rule, cells: map })
    }

    /// One group, cost `costs[b - 1]` in bucket `b`.
    pub fn by_bucket(costs: &[f64]) -> Result<Self> {
        let cells: Vec<CostCell> = costs
            .iter()
            .enumerate()
            .map(|(i, &cost)| CostCell {
                bucket: i + 1,
                group: 1,
                cost,
            })
            .collect();
        Self::new(GroupRule::Single, &cells)
    }

    /// Weighted mean of observed costs per cell, after clipping the
    /// observations to their weighted `(lower, upper)` quantiles.
    pub fn from_observations(
        pop: &Population,
        observed: &[f64],
        rule: GroupRule,
        winsorize: Option<(f64, f64)>,
    ) -> Result<Self> {
        if observed.len() != pop.len() {
            return Err(AllocationError::CostModel(format!(
                "{} observations for {} records",
                observed.len(),
                pop.len()
            )));
        }
        if !pop.is_bucketed() {
            return Err(AllocationError::NotBucketed);
        }
        let weights = pop.weights();
        let (lo, hi) = match winsorize {
            Some((ql, qh)) => {
                if !(0.0..=1.0).contains(&ql) || !(0.0..=1.0).contains(&qh) || ql >= qh {
                    return Err(AllocationError::CostModel(format!(
                        "bad winsorize quantiles ({ql}, {qh})"
                    )));
                }
                (
                    weighted_quantile(observed, &weights, ql).unwrap_or(f64::NEG_INFINITY),
                    weighted_quantile(observed, &weights, qh).unwrap_or(f64::INFINITY),
                )
            }
            None => (f64::NEG_INFINITY, f64::INFINITY),
        };
        let mut acc: BTreeMap<(usize, usize), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
        for (r, &c) in pop.records().iter().zip(observed) {
            let key = (r.bucket.expect("bucketed"), rule.group_of(r));
            let e = acc.entry(key).or_default();
            e.0.push(r.weight * c.clamp(lo, hi));
            e.1.push(r.weight);
        }
        let cells: Vec<CostCell> = acc
            .into_iter()
            .map(|((bucket, group), (num, den))| CostCell {
                bucket,
                group,
                cost: neumaier_sum(num) / neumaier_sum(den),
            })
            .collect();
        Self::new(rule, &cells)
    }

    pub fn rule(&self) -> GroupRule {
        self.rule
    }

    pub fn cells(&self) -> Vec<CostCell> {
        self.cells
            .iter()
            .map(|(&(bucket, group), &cost)| CostCell { bucket, group, cost })
            .collect()
    }

    pub fn cost(&self, bucket: usize, group: usize) -> Option<f64> {
        self.cells.get(&(bucket, group)).copied()
    }

    /// Most over least expensive cell.
    pub fn ratio(&self) -> f64 {
        let (lo, hi) = self
            .cells
            .values()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &c| (lo.min(c), hi.max(c)));
        hi / lo
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["bucket", "group", "cost"])?;
        for c in self.cells() {
            wtr.write_record([c.bucket.to_string(), c.group.to_string(), c.cost.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, rule: GroupRule) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let cells = rdr.deserialize().collect::<std::result::Result<Vec<CostCell>, _>>()?;
        Self::new(rule, &cells)
    }
}

/// Cost of every record under `model`.
pub fn estimate_costs(pop: &Population, model: &CostModel) -> Result<Vec<f64>> {
    pop.records()
        .iter()
        .map(|r| {
            let bucket = r.bucket.ok_or(AllocationError::NotBucketed)?;
            let group = model.rule.group_of(r);
            model
                .cost(bucket, group)
                .ok_or(AllocationError::MissingCell { bucket, group })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::test_support::{population, with_buckets};
    use crate::population::PopulationConfig;

    #[test]
    fn winsorized_mean_of_an_outlier() {
        let p = with_buckets(&population(&[1.0; 4], &[1.0; 4]), &[1; 4], 1);
        let m =
            CostModel::from_observations(&p, &[1.0, 1.0, 1.0, 1000.0], GroupRule::Single, Some((0.01, 0.99))).unwrap();
        assert!((m.cost(1, 1).unwrap() - 243.2575).abs() < 1e-9);
        let raw = CostModel::from_observations(&p, &[1.0, 1.0, 1.0, 1000.0], GroupRule::Single, None).unwrap();
        assert_eq!(raw.cost(1, 1), Some(250.75));
    }

    #[test]
    fn cells_split_by_bucket_and_group() {
        let p = with_buckets(
            &population(&[1.0, 3.0, 1.0, 1.0], &[10.0, 20.0, 30.0, 40.0]),
            &[1, 1, 2, 2],
            2,
        );
        let rule = GroupRule::IncomeAbove { threshold: 35.0 };
        let m = CostModel::from_observations(&p, &[2.0, 6.0, 7.0, 9.0], rule, None).unwrap();
        assert_eq!(m.cost(1, 1), Some(5.0));
        assert_eq!(m.cost(2, 1), Some(7.0));
        assert_eq!(m.cost(2, 2), Some(9.0));
        assert_eq!(estimate_costs(&p, &m).unwrap(), vec![5.0, 5.0, 7.0, 9.0]);
    }

    #[test]
    fn missing_cell_is_named() {
        let p = with_buckets(&population(&[1.0; 2], &[1.0, 2.0]), &[1, 2], 2);
        let m = CostModel::by_bucket(&[5.0]).unwrap();
        assert!(matches!(
            estimate_costs(&p, &m),
            Err(AllocationError::MissingCell { bucket: 2, group: 1 })
        ));
    }

    #[test]
    fn default_decile_costs_span_the_configured_ratio() {
        let m = CostModel::by_bucket(&PopulationConfig::default().mean_cost).unwrap();
        assert!((m.ratio() - 41.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_cells_are_rejected() {
        assert!(CostModel::by_bucket(&[1.0, -2.0]).is_err());
        assert!(CostModel::by_bucket(&[]).is_err());
        let dup = [CostCell {
            bucket: 1,
            group: 1,
            cost: 1.0,
        }; 2];
        assert!(CostModel::new(GroupRule::Single, &dup).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let m = CostModel::by_bucket(&[60.0, 75.5, 2460.0]).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        assert_eq!(CostModel::read_csv(buf.as_slice(), GroupRule::Single).unwrap(), m);
    }
}
