//! Exponentiated-gradient reduction of constrained classification to a
//! sequence of cost-sensitive fits.
//!
//! The constraint moments are `γ_{e,a}(h) = E[h | A=a, E=e] − E[h | E=e]`
//! for every event `e` the constraint conditions on and every bucket `a`,
//! each bounded above and below by `ε`. Moments and the error are
//! unweighted averages over the training rows.

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use serde::{Deserialize, Serialize};

use crate::population::{misreport_flag, weighted_subsample, Population, TaxpayerRecord, DEFAULT_TAU};
use crate::scoring::{fit_model, FitMode, FittedModel, ModelSpec, Scorer, ScoringError, TargetKind};
use crate::stats::std_dev;

use super::{FairnessConstraint, FairnessError, Result};

const MIN_ITERS: usize = 5;
const REGRET_CHECK_START: usize = 5;
const REGRET_CHECK_STEP: usize = 5;
const SHRINK_REGRET: f64 = 0.8;
const SHRINK_ETA: f64 = 0.8;
const GAP_MULTIPLIERS: [f64; 4] = [1.0, 2.0, 5.0, 10.0];
const PRECISION: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReductionParams {
    pub max_iters: usize,
    /// Bound on the ℓ1 norm of the multipliers.
    pub bound: f64,
    /// Initial step size, divided by `bound`.
    pub eta0: f64,
    /// Misreport threshold defining the labels.
    pub tau: f64,
    /// Duality-gap tolerance; `None` derives it from the data.
    pub nu: Option<f64>,
}

impl Default for ReductionParams {
    fn default() -> Self {
        Self {
            max_iters: 50,
            bound: 100.0,
            eta0: 2.0,
            tau: DEFAULT_TAU,
            nu: None,
        }
    }
}

impl ReductionParams {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(FairnessError::InvalidParameter(m.to_string()));
        if self.max_iters == 0 {
            return bad("max_iters must be >= 1");
        }
        if !(self.bound > 0.0 && self.eta0 > 0.0) {
            return bad("bound and eta0 must be positive");
        }
        if !(self.tau >= 0.0) {
            return bad("tau must be >= 0");
        }
        if self.nu.is_some_and(|nu| !(nu > 0.0)) {
            return bad("nu must be positive");
        }
        Ok(())
    }
}

/// A randomized classifier: component `t` is used with probability `q_t`.
/// Its score is the probability of a positive decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mixture {
    pub components: Vec<(f64, FittedModel)>,
}

fn decide(p: f64) -> f64 {
    if p >= 0.5 {
        1.0
    } else {
        0.0
    }
}

impl Mixture {
    pub fn predict(&self, record: &TaxpayerRecord) -> f64 {
        self.components
            .iter()
            .map(|(q, m)| q * decide(m.predict(record)))
            .sum::<f64>()
            .clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone)]
pub struct ReductionFit {
    pub scorer: Scorer,
    /// Whether the best duality gap fell below `nu`.
    pub converged: bool,
    pub gap: f64,
    pub nu: f64,
    pub iterations: usize,
}

struct Hypothesis {
    model: FittedModel,
    decisions: Vec<f64>,
    error: f64,
    /// Constraint values, already signed: `[+γ_c, −γ_c]` per cell.
    constraints: Vec<f64>,
}

/// One `(event, bucket)` moment.
struct Cell {
    event: usize,
    group: usize,
    size: f64,
}

struct Lagrangian<'a> {
    spec: &'a ModelSpec,
    data: &'a Population,
    x: crate::scoring::Features,
    y: Vec<f64>,
    groups: Vec<usize>,
    /// `in_event[e][i]`: row i belongs to event e.
    in_event: Vec<Vec<bool>>,
    event_size: Vec<f64>,
    cells: Vec<Cell>,
    /// `cell_of[e][a]`.
    cell_of: Vec<Vec<Option<usize>>>,
    epsilon: f64,
    bound: f64,
    seed: u64,
    hs: Vec<Hypothesis>,
}

impl<'a> Lagrangian<'a> {
    fn n(&self) -> f64 {
        self.y.len() as f64
    }

    fn n_constraints(&self) -> usize {
        2 * self.cells.len()
    }

    fn evaluate(&self, model: FittedModel) -> Hypothesis {
        let decisions: Vec<f64> = self.data.records().iter().map(|r| decide(model.predict(r))).collect();
        let error = decisions.iter().zip(&self.y).filter(|(h, y)| h != y).count() as f64 / self.n();
        let constraints = self.constraint_values(&decisions);
        Hypothesis {
            model,
            decisions,
            error,
            constraints,
        }
    }

    fn constraint_values(&self, h: &[f64]) -> Vec<f64> {
        let ne = self.event_size.len();
        let mut event_sum = vec![0.0; ne];
        let mut cell_sum = vec![0.0; self.cells.len()];
        for (i, &hi) in h.iter().enumerate() {
            for e in 0..ne {
                if self.in_event[e][i] {
                    event_sum[e] += hi;
                    if let Some(c) = self.cell_of[e][self.groups[i]] {
                        cell_sum[c] += hi;
                    }
                }
            }
        }
        let mut out = Vec::with_capacity(self.n_constraints());
        for (c, cell) in self.cells.iter().enumerate() {
            let g = cell_sum[c] / cell.size - event_sum[cell.event] / self.event_size[cell.event];
            out.push(g);
            out.push(-g);
        }
        out
    }

    /// `err(h) + Σ_j λ_j g_j(h)`, without the constant `−ε Σλ`.
    fn value(&self, h: &Hypothesis, lambda: &[f64]) -> f64 {
        h.error + h.constraints.iter().zip(lambda).map(|(g, l)| g * l).sum::<f64>()
    }

    /// Full Lagrangian and its upper bound `L_high` for a mixture.
    fn eval(&self, q: &[f64], lambda: &[f64]) -> (f64, f64) {
        let mut error = 0.0;
        let mut g = vec![0.0; self.n_constraints()];
        for (qt, h) in q.iter().zip(&self.hs) {
            if *qt == 0.0 {
                continue;
            }
            error += qt * h.error;
            for (gj, hj) in g.iter_mut().zip(&h.constraints) {
                *gj += qt * hj;
            }
        }
        let slack: Vec<f64> = g.iter().map(|v| v - self.epsilon).collect();
        let l = error + slack.iter().zip(lambda).map(|(s, l)| s * l).sum::<f64>();
        let worst = slack.iter().copied().fold(0.0, f64::max);
        (l, error + self.bound * worst)
    }

    /// Cost-sensitive best response to `lambda`, returned as an index into
    /// the hypothesis list. The new fit is kept only if it improves on every
    /// hypothesis seen so far.
    fn best_h(&mut self, lambda: &[f64]) -> Result<usize> {
        let n = self.n();
        let ne = self.event_size.len();
        let mut net = vec![0.0; self.cells.len()];
        for (c, v) in net.iter_mut().enumerate() {
            *v = lambda[2 * c] - lambda[2 * c + 1];
        }
        let mut event_term = vec![0.0; ne];
        for (c, cell) in self.cells.iter().enumerate() {
            event_term[cell.event] += net[c] / self.event_size[cell.event];
        }
        let mut red_y = Vec::with_capacity(self.y.len());
        let mut red_w = Vec::with_capacity(self.y.len());
        for i in 0..self.y.len() {
            let mut cost = (1.0 - 2.0 * self.y[i]) / n;
            for e in 0..ne {
                if self.in_event[e][i] {
                    if let Some(c) = self.cell_of[e][self.groups[i]] {
                        cost += net[c] / self.cells[c].size;
                    }
                    cost -= event_term[e];
                }
            }
            red_y.push(if cost < 0.0 { 1.0 } else { 0.0 });
            red_w.push(cost.abs() * n);
        }
        let target = TargetKind::Classification { tau: 0.5 };
        let model = match fit_model(&self.spec.family, target, &self.x, &red_y, &red_w, self.seed) {
            Ok(m) => m,
            Err(ScoringError::DegenerateLabels | ScoringError::Data(_)) => {
                // every row prefers the same decision
                let pos = red_y.iter().zip(&red_w).any(|(y, w)| *y > 0.5 && *w > 0.0);
                FittedModel::Constant {
                    value: if pos { 1.0 } else { 0.0 },
                }
            }
            Err(e) => return Err(e.into()),
        };
        let h = self.evaluate(model);
        let best = (0..self.hs.len())
            .map(|t| (t, self.value(&self.hs[t], lambda)))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match best {
            Some((t, v)) if self.value(&h, lambda) >= v - PRECISION => Ok(t),
            _ => {
                self.hs.push(h);
                Ok(self.hs.len() - 1)
            }
        }
    }

    fn eval_gap(&mut self, q: &[f64], lambda: &[f64], nu: f64) -> Result<f64> {
        let (l, l_high) = self.eval(q, lambda);
        let mut l_low = l;
        let mut gap = (l_high - l).max(0.0);
        for mul in GAP_MULTIPLIERS {
            let scaled: Vec<f64> = lambda.iter().map(|v| v * mul).collect();
            let t = self.best_h(&scaled)?;
            let mut point = vec![0.0; self.hs.len()];
            point[t] = 1.0;
            l_low = l_low.min(self.eval(&point, lambda).0);
            gap = (l - l_low).max(l_high - l);
            if gap > nu + PRECISION {
                break;
            }
        }
        Ok(gap)
    }

    /// Best mixture over the hypotheses found so far and its dual multipliers.
    fn solve_lp(&self) -> std::result::Result<(Vec<f64>, Vec<f64>), microlp::Error> {
        let nh = self.hs.len();
        let nc = self.n_constraints();
        let mut primal = Problem::new(OptimizationDirection::Minimize);
        let q: Vec<_> = self
            .hs
            .iter()
            .map(|h| primal.add_var(h.error, (0.0, f64::INFINITY)))
            .collect();
        let xi = primal.add_var(self.bound, (0.0, f64::INFINITY));
        for j in 0..nc {
            let mut row: Vec<_> = (0..nh)
                .map(|t| (q[t], self.hs[t].constraints[j] - self.epsilon))
                .collect();
            row.push((xi, -1.0));
            primal.add_constraint(row, ComparisonOp::Le, 0.0);
        }
        primal.add_constraint(q.iter().map(|&v| (v, 1.0)).collect::<Vec<_>>(), ComparisonOp::Eq, 1.0);
        let sol = primal.solve()?;
        let mut qv: Vec<f64> = q.iter().map(|&v| sol.var_value(v).max(0.0)).collect();
        let total: f64 = qv.iter().sum();
        qv.iter_mut().for_each(|v| *v /= total);

        let mut dual = Problem::new(OptimizationDirection::Maximize);
        let lam: Vec<_> = (0..nc).map(|_| dual.add_var(0.0, (0.0, f64::INFINITY))).collect();
        let u = dual.add_var(1.0, (f64::NEG_INFINITY, f64::INFINITY));
        for h in &self.hs {
            let mut row: Vec<_> = (0..nc).map(|j| (lam[j], -(h.constraints[j] - self.epsilon))).collect();
            row.push((u, 1.0));
            dual.add_constraint(row, ComparisonOp::Le, h.error);
        }
        dual.add_constraint(
            lam.iter().map(|&v| (v, 1.0)).collect::<Vec<_>>(),
            ComparisonOp::Le,
            self.bound,
        );
        let sol = dual.solve()?;
        let lv = lam.iter().map(|&v| sol.var_value(v).max(0.0)).collect();
        Ok((qv, lv))
    }
}

/// Fits `base` under `constraint` by the exponentiated-gradient reduction.
/// A subsample fit mode on `base` resamples the training set first.
pub fn fit_reduction(
    base: &ModelSpec,
    train: &Population,
    constraint: FairnessConstraint,
    params: &ReductionParams,
    seed: u64,
) -> Result<ReductionFit> {
    constraint.validate()?;
    params.validate()?;
    base.validate()?;
    if !train.is_bucketed() {
        return Err(FairnessError::NotBucketed);
    }
    let resampled;
    let data = match base.fit_mode {
        FitMode::NativeWeights => train,
        FitMode::Subsample(n) => {
            resampled = weighted_subsample(train, n, seed)?;
            &resampled
        }
    };
    let y: Vec<f64> = data
        .records()
        .iter()
        .map(|r| f64::from(u8::from(misreport_flag(r.misreport, params.tau))))
        .collect();
    let groups = data.bucket_indices()?;
    let n_groups = data.n_buckets();
    let events = constraint.events();
    let in_event: Vec<Vec<bool>> = events
        .iter()
        .map(|ev| y.iter().map(|&yi| ev.is_none_or(|l| (yi > 0.5) == l)).collect())
        .collect();
    let event_size: Vec<f64> = in_event
        .iter()
        .map(|m| m.iter().filter(|&&b| b).count() as f64)
        .collect();
    let mut cells = Vec::new();
    let mut cell_of = vec![vec![None; n_groups]; events.len()];
    for e in 0..events.len() {
        let mut sizes = vec![0.0; n_groups];
        for (i, &inside) in in_event[e].iter().enumerate() {
            if inside {
                sizes[groups[i]] += 1.0;
            }
        }
        for (a, &size) in sizes.iter().enumerate() {
            if size > 0.0 {
                cell_of[e][a] = Some(cells.len());
                cells.push(Cell {
                    event: e,
                    group: a,
                    size,
                });
            }
        }
    }
    debug_assert!(cells.iter().all(|c| c.group < n_groups));

    let mut lag = Lagrangian {
        spec: base,
        data,
        x: crate::scoring::Features::from_population(data),
        y,
        groups,
        in_event,
        event_size,
        cells,
        cell_of,
        epsilon: constraint.epsilon,
        bound: params.bound,
        seed,
        hs: Vec::new(),
    };
    let nc = lag.n_constraints();

    let h0 = lag.best_h(&vec![0.0; nc])?;
    let nu = params.nu.unwrap_or_else(|| {
        let abs_err: Vec<f64> = lag.hs[h0]
            .decisions
            .iter()
            .zip(&lag.y)
            .map(|(h, y)| (h - y).abs())
            .collect();
        let sd = std_dev(&abs_err) * (lag.n() / (lag.n() - 1.0).max(1.0)).sqrt();
        (0.5 * sd / lag.n().sqrt()).max(PRECISION)
    });

    let mut theta = vec![0.0; nc];
    let mut lambda_sum = vec![0.0; nc];
    let mut q_counts: Vec<f64> = Vec::new();
    let mut eta = params.eta0 / params.bound;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut gaps_eg: Vec<f64> = Vec::new();
    let mut last_checked = REGRET_CHECK_START;
    let mut last_gap = f64::INFINITY;
    let mut iterations = 0;

    for t in 0..params.max_iters {
        iterations = t + 1;
        let shift = theta.iter().copied().fold(0.0, f64::max);
        let ex: Vec<f64> = theta.iter().map(|v| (v - shift).exp()).collect();
        let denom = (-shift).exp() + ex.iter().sum::<f64>();
        let lambda: Vec<f64> = ex.iter().map(|v| params.bound * v / denom).collect();
        lambda_sum.iter_mut().zip(&lambda).for_each(|(s, l)| *s += l);

        let h = lag.best_h(&lambda)?;
        q_counts.resize(lag.hs.len(), 0.0);
        q_counts[h] += 1.0;
        let steps = (t + 1) as f64;
        let mut q_eg: Vec<f64> = q_counts.iter().map(|c| c / steps).collect();
        let lambda_eg: Vec<f64> = lambda_sum.iter().map(|s| s / steps).collect();
        let gap_eg = lag.eval_gap(&q_eg, &lambda_eg, nu)?;
        q_eg.resize(lag.hs.len(), 0.0);
        gaps_eg.push(gap_eg);

        let mut chosen = (gap_eg, q_eg);
        if t > 0 {
            if let Ok((q_lp, lambda_lp)) = lag.solve_lp() {
                let gap_lp = lag.eval_gap(&q_lp, &lambda_lp, nu)?;
                if gap_lp <= chosen.0 {
                    chosen = (gap_lp, q_lp);
                }
            }
        }
        let gap_t = chosen.0;
        if best.as_ref().is_none_or(|(g, _)| gap_t < *g) {
            best = Some(chosen);
        }
        if gap_t < nu && t + 1 >= MIN_ITERS {
            break;
        }
        if t >= last_checked + REGRET_CHECK_STEP {
            let best_eg = gaps_eg.iter().copied().fold(f64::INFINITY, f64::min);
            if best_eg > last_gap * SHRINK_REGRET {
                eta *= SHRINK_ETA;
            }
            last_checked = t;
            last_gap = best_eg;
        }
        for (th, g) in theta.iter_mut().zip(&lag.hs[h].constraints) {
            *th += eta * (g - constraint.epsilon);
        }
    }

    let (gap, q) = best.expect("at least one iteration runs");
    let mut components: Vec<(f64, FittedModel)> = Vec::new();
    for (qt, h) in q.iter().zip(lag.hs) {
        if *qt > 1e-12 {
            components.push((*qt, h.model));
        }
    }
    let total: f64 = components.iter().map(|c| c.0).sum();
    components.iter_mut().for_each(|c| c.0 /= total);
    let scorer = Scorer::new(
        format!("reduction_{}", base.family.name()),
        TargetKind::Classification { tau: params.tau },
        train.feature_count(),
        FittedModel::Mixture(Mixture { components }),
    );
    Ok(ReductionFit {
        scorer,
        converged: gap < nu,
        gap,
        nu,
        iterations,
    })
}
