//! Group-specific randomized thresholds on top of a fitted classifier.

use microlp::{ComparisonOp, OptimizationDirection, Problem, Variable};
use serde::{Deserialize, Serialize};

use crate::population::{misreport_flag, Population, TaxpayerRecord};
use crate::scoring::{FittedModel, Scorer, TargetKind};
use crate::stats::keyed_uniform;

use super::{ConstraintKind, FairnessConstraint, FairnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    Never,
    Always,
    /// Accept when the base probability is at least this value.
    AtLeast(f64),
}

impl Threshold {
    pub fn accepts(self, p: f64) -> bool {
        match self {
            Threshold::Never => false,
            Threshold::Always => true,
            Threshold::AtLeast(t) => p >= t,
        }
    }

    /// Sort key from most to least permissive.
    fn strictness(self) -> f64 {
        match self {
            Threshold::Always => f64::NEG_INFINITY,
            Threshold::AtLeast(t) => t,
            Threshold::Never => f64::INFINITY,
        }
    }
}

/// Base classifier plus, per bucket, a probability mixture over thresholds.
/// A record's threshold is drawn from its bucket's mixture with a uniform
/// keyed by `(seed, id)`, so decisions are replayable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupThresholds {
    pub base: Box<FittedModel>,
    pub seed: u64,
    /// Index `b` holds bucket `b + 1`, ordered from most to least permissive.
    pub groups: Vec<Vec<(f64, Threshold)>>,
}

impl GroupThresholds {
    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    fn mixture(&self, record: &TaxpayerRecord) -> &[(f64, Threshold)] {
        record
            .bucket
            .and_then(|b| self.groups.get(b.wrapping_sub(1)))
            .map_or(&[], Vec::as_slice)
    }

    pub fn base_probability(&self, record: &TaxpayerRecord) -> f64 {
        self.base.predict(record)
    }

    /// Probability that the record is selected.
    pub fn expected_decision(&self, record: &TaxpayerRecord) -> f64 {
        let p = self.base_probability(record);
        self.mixture(record)
            .iter()
            .filter(|(_, t)| t.accepts(p))
            .map(|(q, _)| q)
            .sum::<f64>()
            .min(1.0)
    }

    /// The realized 0/1 decision.
    pub fn decision(&self, record: &TaxpayerRecord) -> f64 {
        let p = self.base_probability(record);
        let u = keyed_uniform(self.seed, record.id);
        let mut acc = 0.0;
        let mix = self.mixture(record);
        for (k, (q, t)) in mix.iter().enumerate() {
            acc += q;
            if u < acc || k + 1 == mix.len() {
                return f64::from(u8::from(t.accepts(p)));
            }
        }
        0.0
    }

    /// Ranking score: realized decision times the base probability.
    pub fn predict(&self, record: &TaxpayerRecord) -> f64 {
        self.decision(record) * self.base_probability(record)
    }
}

#[derive(Clone, Copy)]
struct RocPoint {
    fpr: f64,
    tpr: f64,
    threshold: Threshold,
}

fn cross(o: &RocPoint, a: &RocPoint, b: &RocPoint) -> f64 {
    (a.fpr - o.fpr) * (b.tpr - o.tpr) - (a.tpr - o.tpr) * (b.fpr - o.fpr)
}

/// Vertices of the convex hull of the points (monotone chain, collinear
/// points dropped).
fn hull(mut pts: Vec<RocPoint>) -> Vec<RocPoint> {
    pts.sort_by(|a, b| a.fpr.total_cmp(&b.fpr).then(a.tpr.total_cmp(&b.tpr)));
    pts.dedup_by(|a, b| a.fpr == b.fpr && a.tpr == b.tpr);
    if pts.len() <= 2 {
        return pts;
    }
    let mut lower: Vec<RocPoint> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<RocPoint> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

struct Group {
    n_pos: f64,
    n_neg: f64,
    vertices: Vec<RocPoint>,
}

impl Group {
    fn build(mut scored: Vec<(f64, bool)>) -> Self {
        let n_pos = scored.iter().filter(|s| s.1).count() as f64;
        let n_neg = scored.len() as f64 - n_pos;
        scored.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut pts = vec![RocPoint {
            fpr: 0.0,
            tpr: 0.0,
            threshold: Threshold::Never,
        }];
        let (mut tp, mut fp) = (0.0, 0.0);
        let mut i = 0;
        while i < scored.len() {
            let s = scored[i].0;
            while i < scored.len() && scored[i].0 == s {
                if scored[i].1 {
                    tp += 1.0;
                } else {
                    fp += 1.0;
                }
                i += 1;
            }
            pts.push(RocPoint {
                fpr: fp / n_neg,
                tpr: tp / n_pos,
                threshold: if i == scored.len() {
                    Threshold::Always
                } else {
                    Threshold::AtLeast(s)
                },
            });
        }
        Self {
            n_pos,
            n_neg,
            vertices: hull(pts),
        }
    }

    fn selection_rate(&self, fpr: f64, tpr: f64) -> f64 {
        (self.n_neg * fpr + self.n_pos * tpr) / (self.n_neg + self.n_pos)
    }
}

/// Returns `max_g stat_g − min_g stat_g`.
fn spread(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max) - v.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Chooses per-bucket randomized thresholds for `scorer` so that the
/// constraint holds on `train` (every pairwise gap at most `epsilon`) with
/// the smallest training error. If the 0.5 threshold already satisfies the
/// constraint it is kept everywhere.
pub fn postprocess_thresholds(
    scorer: &Scorer,
    train: &Population,
    constraint: FairnessConstraint,
    seed: u64,
) -> Result<Scorer> {
    constraint.validate()?;
    let TargetKind::Classification { tau } = scorer.target else {
        return Err(FairnessError::NotClassification);
    };
    if !train.is_bucketed() {
        return Err(FairnessError::NotBucketed);
    }
    if train.feature_count() != scorer.feature_count {
        return Err(crate::scoring::ScoringError::DimensionMismatch {
            expected: scorer.feature_count,
            got: train.feature_count(),
        }
        .into());
    }
    let nb = train.n_buckets();
    let buckets = train.bucket_indices()?;
    let mut per: Vec<Vec<(f64, bool)>> = vec![Vec::new(); nb];
    for (r, &b) in train.records().iter().zip(&buckets) {
        per[b].push((scorer.model.predict(r), misreport_flag(r.misreport, tau)));
    }
    for (b, rows) in per.iter().enumerate() {
        if !rows.iter().any(|r| r.1) {
            return Err(FairnessError::DegenerateGroup {
                bucket: b + 1,
                missing: "positive",
            });
        }
        if rows.iter().all(|r| r.1) {
            return Err(FairnessError::DegenerateGroup {
                bucket: b + 1,
                missing: "negative",
            });
        }
    }

    let wrap = |groups: Vec<Vec<(f64, Threshold)>>| {
        Scorer::new(
            format!("postprocess_{}", scorer.family),
            scorer.target,
            scorer.feature_count,
            FittedModel::GroupThresholds(GroupThresholds {
                base: Box::new(scorer.model.clone()),
                seed,
                groups,
            }),
        )
    };

    // rates at the default threshold
    let at_half: Vec<(f64, f64, f64)> = per
        .iter()
        .map(|rows| {
            let pos = rows.iter().filter(|r| r.1).count() as f64;
            let neg = rows.len() as f64 - pos;
            let tp = rows.iter().filter(|r| r.1 && r.0 >= 0.5).count() as f64;
            let fp = rows.iter().filter(|r| !r.1 && r.0 >= 0.5).count() as f64;
            ((tp + fp) / rows.len() as f64, tp / pos, fp / neg)
        })
        .collect();
    let gap = match constraint.kind {
        ConstraintKind::DemographicParity => spread(at_half.iter().map(|r| r.0)),
        ConstraintKind::EqualTpr => spread(at_half.iter().map(|r| r.1)),
        ConstraintKind::EqualizedOdds => spread(at_half.iter().map(|r| r.1)).max(spread(at_half.iter().map(|r| r.2))),
    };
    if gap <= constraint.epsilon {
        return Ok(wrap(vec![vec![(1.0, Threshold::AtLeast(0.5))]; nb]));
    }

    let groups: Vec<Group> = per.into_iter().map(Group::build).collect();
    let total = train.len() as f64;
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<Vec<Variable>> = groups
        .iter()
        .map(|g| {
            g.vertices
                .iter()
                .map(|v| lp.add_var((g.n_neg * v.fpr - g.n_pos * v.tpr) / total, (0.0, 1.0)))
                .collect()
        })
        .collect();
    for vs in &vars {
        lp.add_constraint(vs.iter().map(|&v| (v, 1.0)).collect::<Vec<_>>(), ComparisonOp::Eq, 1.0);
    }
    type Stat = fn(&Group, &RocPoint) -> f64;
    let stats: Vec<Stat> = match constraint.kind {
        ConstraintKind::DemographicParity => vec![|g, v| g.selection_rate(v.fpr, v.tpr)],
        ConstraintKind::EqualTpr => vec![|_, v| v.tpr],
        ConstraintKind::EqualizedOdds => vec![|_, v| v.tpr, |_, v| v.fpr],
    };
    for stat in stats {
        let lo = lp.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY));
        for (g, vs) in groups.iter().zip(&vars) {
            let mut row: Vec<(Variable, f64)> = g.vertices.iter().zip(vs).map(|(v, &x)| (x, stat(g, v))).collect();
            row.push((lo, -1.0));
            lp.add_constraint(row.clone(), ComparisonOp::Ge, 0.0);
            lp.add_constraint(row, ComparisonOp::Le, constraint.epsilon);
        }
    }
    let sol = lp.solve()?;

    let table = groups
        .iter()
        .zip(&vars)
        .map(|(g, vs)| {
            let mut mix: Vec<(f64, Threshold)> = g
                .vertices
                .iter()
                .zip(vs)
                .map(|(v, &x)| (sol.var_value(x).clamp(0.0, 1.0), v.threshold))
                .filter(|(q, _)| *q > 1e-12)
                .collect();
            let s: f64 = mix.iter().map(|m| m.0).sum();
            mix.iter_mut().for_each(|m| m.0 /= s);
            mix.sort_by(|a, b| a.1.strictness().total_cmp(&b.1.strictness()));
            mix
        })
        .collect();
    Ok(wrap(table))
}
