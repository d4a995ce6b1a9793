//! Small random instances checked against enumeration oracles.

use std::path::Path;

use audit_core::allocation::{monotone_allocation, monotone_objective, roi_allocation, weighted_objective, BudgetSpec};
use audit_core::population::{Population, TaxpayerRecord};
use audit_core::scoring::ScoreVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{criterion, write_table};
use crate::artifacts::{CriterionResult, Table};
use crate::Result;

const MONOTONE_INSTANCES: usize = 100;
const KNAPSACK_INSTANCES: usize = 200;
const MONOTONE_TOL: f64 = 1e-6;
const KNAPSACK_TOL: f64 = 1e-9;
const SEED: u64 = 0x501e;

/// Records with the given weights, scores-as-misreports, costs and 1-based
/// buckets.
pub fn instance_population(w: &[f64], c: &[f64], buckets: &[usize], n_buckets: usize) -> Result<Population> {
    let records = w
        .iter()
        .zip(c)
        .enumerate()
        .map(|(i, (&weight, &cost))| TaxpayerRecord {
            id: i as u64,
            features: Vec::new(),
            reported_income: i as f64,
            misreport: 0.0,
            cost,
            weight,
            bucket: None,
        })
        .collect();
    let pop = Population::new(records)?;
    Ok(pop.with_bucket_labels(buckets, n_buckets)?)
}

fn value_of(seg: &[(f64, f64)], mass: f64) -> Option<f64> {
    let mut left = mass;
    let mut v = 0.0;
    for &(s, len) in seg {
        let take = left.min(len);
        v += take * s.max(0.0);
        left -= take;
    }
    (left <= 1e-9 * mass.max(1.0)).then_some(v)
}

/// Optimum of the three-bucket monotone-rate problem by vertex enumeration
/// in bucket-mass coordinates `(A1, A2)`, with `A3 = mass - A1 - A2`.
/// `seg[b]` lists `(score, weight)` for bucket `b` in descending score
/// order and `w[b]` is the bucket's total weight.
pub fn three_bucket_optimum(seg: [&[(f64, f64)]; 3], w: [f64; 3], mass: f64) -> f64 {
    let cums = |seg: &[(f64, f64)]| -> Vec<f64> {
        let mut c = vec![0.0];
        let mut t = 0.0;
        for &(_, len) in seg {
            t += len;
            c.push(t);
        }
        c
    };
    // a*A1 + b*A2 = c: the two rate-equality lines, then every breakpoint
    let mut lines: Vec<(f64, f64, f64)> = vec![(w[1], -w[0], 0.0), (w[1], w[2] + w[1], w[1] * mass)];
    lines.extend(cums(seg[0]).into_iter().map(|c| (1.0, 0.0, c)));
    lines.extend(cums(seg[1]).into_iter().map(|c| (0.0, 1.0, c)));
    lines.extend(cums(seg[2]).into_iter().map(|c| (1.0, 1.0, mass - c)));
    let eps = 1e-9 * mass.max(1.0);
    let mut best = f64::NEG_INFINITY;
    for i in 0..lines.len() {
        for j in i + 1..lines.len() {
            let (a1, b1, c1) = lines[i];
            let (a2, b2, c2) = lines[j];
            let det = a1 * b2 - a2 * b1;
            if det.abs() < 1e-12 {
                continue;
            }
            let x = (c1 * b2 - c2 * b1) / det;
            let y = (a1 * c2 - a2 * c1) / det;
            let z = mass - x - y;
            if x < -eps || x / w[0] > y / w[1] + eps || y / w[1] > z / w[2] + eps {
                continue;
            }
            if let (Some(u), Some(v), Some(t)) = (
                value_of(seg[0], x.max(0.0)),
                value_of(seg[1], y.max(0.0)),
                value_of(seg[2], z.max(0.0)),
            ) {
                best = best.max(u + v + t);
            }
        }
    }
    best
}

/// Fractional knapsack optimum by enumeration: every subset taken whole,
/// plus at most one further item taken as far as the budget allows.
/// Scores must be nonnegative.
pub fn knapsack_optimum(value: &[f64], size: &[f64], budget: f64) -> f64 {
    let n = value.len();
    let mut best = 0.0f64;
    for mask in 0u32..(1 << n) {
        let (mut v, mut s) = (0.0, 0.0);
        for i in (0..n).filter(|i| mask >> i & 1 == 1) {
            v += value[i];
            s += size[i];
        }
        if s > budget * (1.0 + 1e-12) {
            continue;
        }
        best = best.max(v);
        let room = budget - s;
        for j in (0..n).filter(|j| mask >> j & 1 == 0) {
            best = best.max(v + value[j] * (room / size[j]).min(1.0));
        }
    }
    best
}

fn rel_error(got: f64, want: f64) -> f64 {
    let diff = (got - want).abs();
    if want == 0.0 {
        diff
    } else {
        diff / want.abs()
    }
}

struct Check {
    kind: &'static str,
    index: usize,
    n: usize,
    solver: f64,
    oracle: f64,
}

fn monotone_check(rng: &mut ChaCha8Rng, index: usize) -> Result<Check> {
    let n = rng.random_range(3..=30);
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..3.0)).collect();
    let s: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..10.0)).collect();
    let mut b: Vec<usize> = (0..n).map(|_| rng.random_range(1..=3)).collect();
    // every bucket needs a record
    b[..3].copy_from_slice(&[1, 2, 3]);
    let k = rng.random_range(0.02..1.0);
    let pop = instance_population(&w, &vec![1.0; n], &b, 3)?;
    let sv = ScoreVector::new(pop.ids().collect(), s.clone())?;
    let alloc = monotone_allocation(&sv, &pop, BudgetSpec::Rate { k })?;

    let mut seg: [Vec<(f64, f64)>; 3] = Default::default();
    let mut bw = [0.0; 3];
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| s[y].total_cmp(&s[x]));
    for i in order {
        seg[b[i] - 1].push((s[i], w[i]));
        bw[b[i] - 1] += w[i];
    }
    let oracle = three_bucket_optimum([&seg[0], &seg[1], &seg[2]], bw, k * pop.total_weight());
    Ok(Check {
        kind: "monotone",
        index,
        n,
        solver: monotone_objective(&alloc, &pop, &s),
        oracle,
    })
}

fn knapsack_check(rng: &mut ChaCha8Rng, index: usize) -> Result<Check> {
    let n = rng.random_range(1..=12);
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..5.0)).collect();
    let s: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
    let c: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..50.0)).collect();
    let size: Vec<f64> = w.iter().zip(&c).map(|(w, c)| w * c).collect();
    let budget = rng.random_range(0.01..1.0) * size.iter().sum::<f64>();
    let pop = instance_population(&w, &c, &vec![1; n], 1)?;
    let sv = ScoreVector::new(pop.ids().collect(), s.clone())?;
    let alloc = roi_allocation(&sv, &pop, BudgetSpec::Dollar { amount: budget })?;
    let value: Vec<f64> = w.iter().zip(&s).map(|(w, s)| w * s).collect();
    Ok(Check {
        kind: "knapsack",
        index,
        n,
        solver: weighted_objective(&alloc, &pop, &s),
        oracle: knapsack_optimum(&value, &size, budget),
    })
}

pub(super) fn run(out: &Path) -> Result<Vec<CriterionResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut checks = Vec::new();
    for i in 0..MONOTONE_INSTANCES {
        checks.push(monotone_check(&mut rng, i)?);
    }
    for i in 0..KNAPSACK_INSTANCES {
        checks.push(knapsack_check(&mut rng, i)?);
    }
    let mut table = Table::new(&["kind", "index", "n", "solver", "oracle", "rel_error"]);
    for c in &checks {
        table.push(vec![
            c.kind.into(),
            c.index.to_string(),
            c.n.to_string(),
            c.solver.to_string(),
            c.oracle.to_string(),
            rel_error(c.solver, c.oracle).to_string(),
        ]);
    }
    write_table(&table, out, "instances.csv")?;

    let summarize = |kind: &str, tol: f64, total: usize| {
        let errs: Vec<f64> = checks
            .iter()
            .filter(|c| c.kind == kind)
            .map(|c| rel_error(c.solver, c.oracle))
            .collect();
        let ok = errs.iter().filter(|&&e| e <= tol).count();
        let worst = errs.iter().copied().fold(0.0, f64::max);
        criterion(
            kind,
            ok == total,
            format!("{ok} of {total} within {tol:e}; worst relative error {worst:e}"),
        )
    };
    Ok(vec![
        summarize("monotone", MONOTONE_TOL, MONOTONE_INSTANCES),
        summarize("knapsack", KNAPSACK_TOL, KNAPSACK_INSTANCES),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn knapsack_oracle_by_hand() {
        // values 60, 100, 120 with sizes 10, 20, 30 and room 50
        assert!((knapsack_optimum(&[60.0, 100.0, 120.0], &[10.0, 20.0, 30.0], 50.0) - 240.0).abs() < 1e-12);
        assert_eq!(knapsack_optimum(&[5.0], &[10.0], 100.0), 5.0);
    }

    #[test]
    fn three_bucket_oracle_by_hand() {
        // one unit-weight record per bucket; rates must be nondecreasing, so
        // with mass 1 the best is all of it on bucket 3 or spread equally
        let seg_hi: &[(f64, f64)] = &[(9.0, 1.0)];
        let seg_lo: &[(f64, f64)] = &[(1.0, 1.0)];
        let got = three_bucket_optimum([seg_hi, seg_lo, seg_lo], [1.0, 1.0, 1.0], 1.0);
        assert!((got - 11.0 / 3.0).abs() < 1e-12, "{got}");
        let got = three_bucket_optimum([seg_lo, seg_lo, seg_hi], [1.0, 1.0, 1.0], 1.0);
        assert!((got - 9.0).abs() < 1e-12, "{got}");
    }
}
