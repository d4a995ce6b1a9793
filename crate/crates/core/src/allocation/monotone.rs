//! Revenue-maximising allocation whose weighted audit rate never decreases
//! from one income bucket to the next.
//!
//! Within a bucket the best use of mass `A` is greedy by score, giving a
//! concave piecewise-linear value `V_b(A)`. Pricing mass at `θ` turns the
//! budget-coupled problem into an isotonic one over bucket rates, solved by
//! pooling adjacent violators. Bisection on `θ` brackets the optimal face
//! between two rate vectors `L ≤ H`; rates are the water level
//! `clamp(c, L_b, H_b)` that spends the budget, so ties resolve to the most
//! equal rates.

use std::collections::HashMap;

use super::{check_aligned, rate_of, Allocation, AllocationError, BudgetSpec, Result};
use crate::population::Population;
use crate::scoring::ScoreVector;
use crate::stats::neumaier_sum;

/// Slope in the common rate `r` of `Σ V_b(W_b r)` over a range of buckets:
/// `slopes[i]` holds on `[ends[i-1], ends[i])`, zero past the last end.
struct Step {
    ends: Vec<f64>,
    slopes: Vec<f64>,
}

struct Buckets {
    /// Per bucket: (slope, length) segments by slope descending.
    segments: Vec<Vec<(f64, f64)>>,
    weights: Vec<f64>,
    cache: HashMap<(usize, usize), Step>,
}

impl Buckets {
    fn step(&mut self, l: usize, r: usize) -> &Step {
        let (segments, weights) = (&self.segments, &self.weights);
        self.cache.entry((l, r)).or_insert_with(|| {
            // (rate, bucket, next slope) events from every bucket in the range
            let mut current = Vec::with_capacity(r - l + 1);
            let mut events = Vec::new();
            for (k, (seg, &w)) in segments[l..=r].iter().zip(&weights[l..=r]).enumerate() {
                current.push(w * seg.first().map_or(0.0, |s| s.0));
                let mut cum = 0.0;
                for j in 0..seg.len() {
                    cum += seg[j].1;
                    let next = seg.get(j + 1).map_or(0.0, |n| n.0);
                    events.push(((cum / w).min(1.0), k, w * next));
                }
            }
            events.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut ends = Vec::with_capacity(events.len());
            let mut slopes = Vec::with_capacity(events.len());
            // summed afresh so slopes past the positive scores are exactly zero
            for (pos, k, next) in events {
                ends.push(pos);
                slopes.push(neumaier_sum(current.iter().copied()));
                current[k] = next;
            }
            Step { ends, slopes }
        })
    }

    /// Largest maximiser of `Σ_{b∈l..=r} V_b(W_b r) − θ·W_b·r` on `[0, 1]`.
    fn block_value(&mut self, l: usize, r: usize, theta: f64) -> f64 {
        if theta <= 0.0 {
            return 1.0;
        }
        let level = theta * self.weights[l..=r].iter().sum::<f64>();
        let step = self.step(l, r);
        let k = step.slopes.partition_point(|&s| s >= level);
        if k == 0 {
            0.0
        } else {
            step.ends[k - 1]
        }
    }

    /// Largest maximiser of the priced problem over nondecreasing rates.
    fn isotonic(&mut self, theta: f64) -> Vec<f64> {
        let nb = self.segments.len();
        let mut stack: Vec<(usize, usize, f64)> = Vec::with_capacity(nb);
        for b in 0..nb {
            let v = self.block_value(b, b, theta);
            stack.push((b, b, v));
            while stack.len() >= 2 && stack[stack.len() - 2].2 > stack[stack.len() - 1].2 {
                let (_, r, _) = stack.pop().expect("two blocks");
                let (l, _, _) = stack.pop().expect("two blocks");
                let v = self.block_value(l, r, theta);
                stack.push((l, r, v));
            }
        }
        let mut out = vec![0.0; nb];
        for (l, r, v) in stack {
            out[l..=r].fill(v);
        }
        out
    }
}

/// Level `c` with `Σ w_b clamp(c, lo_b, hi_b) = target`, returned as the
/// clamped vector.
fn water_fill(lo: &[f64], hi: &[f64], w: &[f64], target: f64) -> Vec<f64> {
    let at = |c: f64| -> f64 { neumaier_sum(lo.iter().zip(hi).zip(w).map(|((&l, &h), &w)| w * c.clamp(l, h.max(l)))) };
    let mut points: Vec<f64> = lo.iter().chain(hi).copied().collect();
    points.sort_by(f64::total_cmp);
    points.dedup();
    let mut c = *points.last().unwrap_or(&0.0);
    let mut prev = (points.first().copied().unwrap_or(0.0), f64::NEG_INFINITY);
    for &p in &points {
        let f = at(p);
        if f >= target {
            c = if prev.1 == f64::NEG_INFINITY || f == prev.1 {
                p
            } else {
                prev.0 + (p - prev.0) * (target - prev.1) / (f - prev.1)
            };
            break;
        }
        prev = (p, f);
    }
    lo.iter().zip(hi).map(|(&l, &h)| c.clamp(l, h.max(l))).collect()
}

/// Maximises `Σ α w max(s, 0)` subject to `Σ α w = k·Σw` and weighted audit
/// rates that are nondecreasing in bucket. At most one fractional record per
/// bucket.
pub fn monotone_allocation(scores: &ScoreVector, pop: &Population, budget: BudgetSpec) -> Result<Allocation> {
    let k = rate_of(budget)?;
    check_aligned(scores, pop)?;
    if !pop.is_bucketed() {
        return Err(AllocationError::NotBucketed);
    }
    if k > 1.0 {
        return Err(AllocationError::Infeasible(format!("rate {k} exceeds 1")));
    }
    let recs = pop.records();
    let bucket = pop.bucket_indices()?;
    let nb = pop.n_buckets();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); nb];
    for (i, &b) in bucket.iter().enumerate() {
        members[b].push(i);
    }
    for m in &mut members {
        m.sort_by(|&a, &b| {
            scores.scores[b]
                .total_cmp(&scores.scores[a])
                .then(recs[a].id.cmp(&recs[b].id))
        });
    }
    let weights = pop.bucket_weights()?;
    if let Some(b) = weights.iter().position(|&w| w <= 0.0) {
        return Err(AllocationError::Infeasible(format!("bucket {} is empty", b + 1)));
    }
    let target = k * pop.total_weight();

    let mut buckets = Buckets {
        segments: members
            .iter()
            .map(|m| m.iter().map(|&i| (scores.scores[i].max(0.0), recs[i].weight)).collect())
            .collect(),
        weights: weights.clone(),
        cache: HashMap::new(),
    };
    let top = scores.scores.iter().fold(0.0f64, |a, &s| a.max(s));
    let (mut lo, mut hi) = (0.0, top + 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let mass = neumaier_sum(buckets.isotonic(mid).iter().zip(&weights).map(|(r, w)| r * w));
        if mass >= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let upper = buckets.isotonic(lo);
    let lower = buckets.isotonic(hi);
    let rates = water_fill(&lower, &upper, &weights, target);

    let mut alpha = vec![0.0; pop.len()];
    for ((m, &rate), &w) in members.iter().zip(&rates).zip(&weights) {
        super::fill(m, |i| recs[i].weight, rate * w, &mut alpha);
    }
    Allocation::new(pop, alpha, budget)
}

/// `Σ α w max(s, 0)`, the quantity [`monotone_allocation`] maximises.
pub fn monotone_objective(alloc: &Allocation, pop: &Population, scores: &[f64]) -> f64 {
    neumaier_sum(
        pop.records()
            .iter()
            .zip(&alloc.alpha)
            .zip(scores)
            .map(|((r, a), s)| a * r.weight * s.max(0.0)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocation::test_support::{pop, scores};
    use crate::allocation::topk_allocation;
    use crate::population::test_support::with_buckets;
    use microlp::{ComparisonOp, OptimizationDirection, Problem};
    use proptest::prelude::*;

    fn rate(k: f64) -> BudgetSpec {
        BudgetSpec::Rate { k }
    }

    fn bucket_masses(a: &Allocation, p: &Population) -> Vec<f64> {
        let idx = p.bucket_indices().unwrap();
        let mut m = vec![0.0; p.n_buckets()];
        for ((r, &b), x) in p.records().iter().zip(&idx).zip(&a.alpha) {
            m[b] += x * r.weight;
        }
        m
    }

    fn bucket_rates(a: &Allocation, p: &Population) -> Vec<f64> {
        let w = p.bucket_weights().unwrap();
        bucket_masses(a, p).iter().zip(&w).map(|(m, w)| m / w).collect()
    }

    /// Same problem as a dense LP over per-record masses.
    fn lp_optimum(p: &Population, s: &[f64], k: f64) -> f64 {
        let mut lp = Problem::new(OptimizationDirection::Maximize);
        let idx = p.bucket_indices().unwrap();
        let bw = p.bucket_weights().unwrap();
        let vars: Vec<_> = p
            .records()
            .iter()
            .zip(s)
            .map(|(r, &s)| lp.add_var(s.max(0.0), (0.0, r.weight)))
            .collect();
        for b in 0..p.n_buckets() - 1 {
            let row: Vec<_> = vars
                .iter()
                .zip(&idx)
                .filter_map(|(&v, &i)| match i {
                    _ if i == b => Some((v, 1.0 / bw[b])),
                    _ if i == b + 1 => Some((v, -1.0 / bw[b + 1])),
                    _ => None,
                })
                .collect();
            lp.add_constraint(row, ComparisonOp::Le, 0.0);
        }
        let all: Vec<_> = vars.iter().map(|&v| (v, 1.0)).collect();
        lp.add_constraint(all, ComparisonOp::Eq, k * p.total_weight());
        lp.solve().unwrap().objective()
    }

    fn two_by_two(s: &[f64]) -> (Population, ScoreVector) {
        let p = with_buckets(&pop(&[1.0; 4]), &[1, 1, 2, 2], 2);
        let sv = scores(&p, s);
        (p, sv)
    }

    #[test]
    fn already_monotone_top_k_is_kept() {
        let (p, s) = two_by_two(&[0.9, 0.1, 0.5, 0.4]);
        let a = monotone_allocation(&s, &p, rate(0.5)).unwrap();
        assert_eq!(a.alpha, vec![1.0, 0.0, 1.0, 0.0]);
        assert!((monotone_objective(&a, &p, &s.scores) - 1.4).abs() < 1e-12);
    }

    #[test]
    fn constraint_binds_when_low_bucket_scores_high() {
        let (p, s) = two_by_two(&[0.9, 0.8, 0.2, 0.1]);
        let a = monotone_allocation(&s, &p, rate(0.5)).unwrap();
        assert_eq!(a.alpha, vec![1.0, 0.0, 1.0, 0.0]);
        assert!((monotone_objective(&a, &p, &s.scores) - 1.1).abs() < 1e-12);
    }

    #[test]
    fn equal_scores_give_equal_rates() {
        let p = with_buckets(&pop(&[1.0; 6]), &[1, 1, 2, 2, 3, 3], 3);
        let a = monotone_allocation(&scores(&p, &[0.4; 6]), &p, rate(0.5)).unwrap();
        for m in bucket_masses(&a, &p) {
            assert!((m - 1.0).abs() < 1e-12);
        }
        let p = with_buckets(&pop(&[1.0, 1.0, 2.0, 2.0]), &[1, 1, 2, 2], 2);
        let a = monotone_allocation(&scores(&p, &[0.0; 4]), &p, rate(0.25)).unwrap();
        for r in bucket_rates(&a, &p) {
            assert!((r - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn full_budget_and_bad_inputs() {
        let p = with_buckets(&pop(&[1.0, 1.0, 1.0]), &[1, 2, 2], 2);
        let s = scores(&p, &[1.0, 2.0, 3.0]);
        assert!(matches!(
            monotone_allocation(&s, &p, rate(1.5)),
            Err(AllocationError::Infeasible(_))
        ));
        let a = monotone_allocation(&s, &p, rate(1.0)).unwrap();
        assert_eq!(a.alpha, vec![1.0; 3]);
        let unbucketed = pop(&[1.0]);
        assert!(matches!(
            monotone_allocation(&scores(&unbucketed, &[1.0]), &unbucketed, rate(0.5)),
            Err(AllocationError::NotBucketed)
        ));
    }

    #[test]
    fn negative_scores_count_as_zero() {
        let (p, s) = two_by_two(&[-5.0, -6.0, 1.0, -1.0]);
        let a = monotone_allocation(&s, &p, rate(0.5)).unwrap();
        assert!((monotone_objective(&a, &p, &s.scores) - 1.0).abs() < 1e-12);
        assert!(bucket_rates(&a, &p).windows(2).all(|r| r[0] <= r[1] + 1e-12));
    }

    /// Vertex enumeration for three buckets: the optimum of a concave
    /// piecewise-linear function over a polygon sits where two breakpoint or
    /// constraint lines in bucket-mass coordinates `(A1, A2)` cross.
    fn three_bucket_optimum(seg: [&[(f64, f64)]; 3], w: [f64; 3], m: f64) -> f64 {
        let value = |seg: &[(f64, f64)], a: f64| -> Option<f64> {
            let mut left = a;
            let mut v = 0.0f64;
            for &(s, len) in seg {
                let take = left.min(len);
                v += take * s.max(0.0);
                left -= take;
            }
            (left <= 1e-9).then_some(v)
        };
        let cums = |seg: &[(f64, f64)]| -> Vec<f64> {
            let mut c = vec![0.0];
            let mut t = 0.0;
            for &(_, len) in seg {
                t += len;
                c.push(t);
            }
            c
        };
        // a*A1 + b*A2 = c, with A3 = m - A1 - A2
        let mut lines: Vec<(f64, f64, f64)> = vec![(w[1], -w[0], 0.0), (w[1], w[2] + w[1], w[1] * m)];
        lines.extend(cums(seg[0]).into_iter().map(|c| (1.0, 0.0, c)));
        lines.extend(cums(seg[1]).into_iter().map(|c| (0.0, 1.0, c)));
        lines.extend(cums(seg[2]).into_iter().map(|c| (1.0, 1.0, m - c)));
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
                let z = m - x - y;
                if x < -1e-9 || x / w[0] > y / w[1] + 1e-9 || y / w[1] > z / w[2] + 1e-9 {
                    continue;
                }
                if let (Some(u), Some(v), Some(t)) = (
                    value(seg[0], x.max(0.0)),
                    value(seg[1], y.max(0.0)),
                    value(seg[2], z.max(0.0)),
                ) {
                    best = best.max(u + v + t);
                }
            }
        }
        best
    }

    fn instance(
        buckets: std::ops::RangeInclusive<usize>,
    ) -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<usize>, usize, f64)> {
        buckets.prop_flat_map(|nb| {
            (nb..18).prop_flat_map(move |n| {
                (
                    proptest::collection::vec(0.2f64..3.0, n),
                    proptest::collection::vec(-1.0f64..10.0, n),
                    proptest::collection::vec(1usize..=nb, n),
                    Just(nb),
                    0.02f64..1.0,
                )
            })
        })
    }

    fn build(w: &[f64], b: &[usize], nb: usize) -> Population {
        // every bucket needs a record
        let mut b = b.to_vec();
        for (i, slot) in b.iter_mut().take(nb).enumerate() {
            *slot = i + 1;
        }
        with_buckets(&pop(w), &b, nb)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn matches_the_dense_lp((w, s, b, nb, k) in instance(2..=5)) {
            let p = build(&w, &b, nb);
            let a = monotone_allocation(&scores(&p, &s), &p, rate(k)).unwrap();
            let got = monotone_objective(&a, &p, &s);
            let want = lp_optimum(&p, &s, k);
            prop_assert!((got - want).abs() <= 1e-6 * want.abs().max(1.0), "{got} vs {want}");
            let target = k * p.total_weight();
            prop_assert!((a.spent - target).abs() <= 1e-9 * target);
            prop_assert!(bucket_rates(&a, &p).windows(2).all(|x| x[0] <= x[1] + 1e-9));
            let idx = p.bucket_indices().unwrap();
            for bk in 0..nb {
                let frac = a.alpha.iter().zip(&idx).filter(|(x, &i)| i == bk && **x > 0.0 && **x < 1.0).count();
                prop_assert!(frac <= 1);
            }
        }

        #[test]
        fn matches_three_bucket_vertex_enumeration((w, s, b, _nb, k) in instance(3..=3)) {
            let p = build(&w, &b, 3);
            let a = monotone_allocation(&scores(&p, &s), &p, rate(k)).unwrap();
            let idx = p.bucket_indices().unwrap();
            let bw = p.bucket_weights().unwrap();
            let mut seg: Vec<Vec<(f64, f64)>> = vec![Vec::new(); 3];
            let mut order: Vec<usize> = (0..w.len()).collect();
            order.sort_by(|&x, &y| s[y].total_cmp(&s[x]));
            for i in order {
                seg[idx[i]].push((s[i], w[i]));
            }
            let want = three_bucket_optimum([&seg[0], &seg[1], &seg[2]], [bw[0], bw[1], bw[2]], k * p.total_weight());
            let got = monotone_objective(&a, &p, &s);
            prop_assert!((got - want).abs() <= 1e-6 * want.abs().max(1.0), "{got} vs {want}");
        }

        #[test]
        fn sits_between_uniform_rates_and_topk((w, s, b, nb, k) in instance(2..=4)) {
            let p = build(&w, &b, nb);
            let sv = scores(&p, &s);
            let a = monotone_allocation(&sv, &p, rate(k)).unwrap();
            let got = monotone_objective(&a, &p, &s);
            let uniform = Allocation::new(&p, vec![k; w.len()], rate(k)).unwrap();
            prop_assert!(got >= monotone_objective(&uniform, &p, &s) - 1e-9);
            let nonneg: Vec<f64> = s.iter().map(|v| v.max(0.0)).collect();
            let top = topk_allocation(&scores(&p, &nonneg), &p, rate(k)).unwrap();
            let unconstrained = monotone_objective(&top, &p, &s);
            prop_assert!(got <= unconstrained + 1e-9 * unconstrained.max(1.0));
            if bucket_rates(&top, &p).windows(2).all(|x| x[0] <= x[1]) {
                prop_assert!((got - unconstrained).abs() <= 1e-9 * unconstrained.max(1.0));
            }
        }

        #[test]
        fn ignores_positive_score_scaling((w, s, b, nb, k) in instance(2..=4), lambda in 0.01f64..100.0) {
            let p = build(&w, &b, nb);
            let a = monotone_allocation(&scores(&p, &s), &p, rate(k)).unwrap();
            let scaled: Vec<f64> = s.iter().map(|v| v * lambda).collect();
            let c = monotone_allocation(&scores(&p, &scaled), &p, rate(k)).unwrap();
            for (x, y) in a.alpha.iter().zip(&c.alpha) {
                prop_assert!((x - y).abs() <= 1e-9);
            }
        }
    }
}
