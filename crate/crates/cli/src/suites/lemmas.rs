use std::path::Path;

use audit_core::metrics::{lemma1_check, lemma2_check, GroupStats, Verdict};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{criterion, write_table};
use crate::artifacts::{CriterionResult, Table};
use crate::Result;

const CONSTRUCTIONS: usize = 500;
const SEED: u64 = 0x1e33a;

/// Two equal-size groups sharing a true positive rate `beta`; group `i`
/// has `m_i` misreporters and false positive rate `alpha_i`.
fn pair(rng: &mut ChaCha8Rng, shared_alpha: bool) -> (f64, f64, GroupStats, GroupStats) {
    let n = rng.random_range(10.0..10_000.0);
    let beta = rng.random_range(0.05..1.0);
    let alpha1: f64 = rng.random_range(0.0..0.5);
    let alpha2 = if shared_alpha {
        alpha1
    } else {
        rng.random_range(0.0..0.5)
    };
    let group = |rng: &mut ChaCha8Rng, alpha: f64| {
        let m = n * rng.random_range(0.01..0.99);
        GroupStats::new(n, m, beta * m, alpha * (n - m)).expect("valid counts")
    };
    let g1 = group(rng, alpha1);
    let g2 = group(rng, alpha2);
    (alpha1, beta, g1, g2)
}

fn fmt<T>(v: &Verdict<T>, f: impl Fn(&T) -> String) -> String {
    match v {
        Verdict::Checked(r) => f(r),
        Verdict::NotApplicable(why) => format!("not applicable: {why}"),
    }
}

pub(super) fn run(out: &Path) -> Result<Vec<CriterionResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut table = Table::new(&["index", "lemma", "n", "m1", "m2", "a1", "a2", "pass", "detail"]);
    let (mut pass1, mut pass2) = (0, 0);
    for i in 0..CONSTRUCTIONS {
        let (_, _, g1, g2) = pair(&mut rng, false);
        let v1 = lemma1_check(&g1, &g2);
        let ok1 = matches!(v1, Verdict::Checked(r) if r.pass);
        pass1 += usize::from(ok1);
        table.push(vec![
            i.to_string(),
            "1".into(),
            g1.n.to_string(),
            g1.m.to_string(),
            g2.m.to_string(),
            g1.a.to_string(),
            g2.a.to_string(),
            ok1.to_string(),
            fmt(&v1, |r| {
                format!(
                    "audits_increase={} precision_condition={}",
                    r.audits_increase, r.precision_condition
                )
            }),
        ]);

        let (alpha, beta, g1, g2) = pair(&mut rng, true);
        let v2 = lemma2_check(alpha, beta, &g1, &g2);
        let ok2 = matches!(v2, Verdict::Checked(r) if r.pass);
        pass2 += usize::from(ok2);
        table.push(vec![
            i.to_string(),
            "2".into(),
            g1.n.to_string(),
            g1.m.to_string(),
            g2.m.to_string(),
            g1.a.to_string(),
            g2.a.to_string(),
            ok2.to_string(),
            fmt(&v2, |r| {
                format!(
                    "difference={} predicted={} direction={}",
                    r.difference, r.predicted, r.direction
                )
            }),
        ]);
    }
    write_table(&table, out, "constructions.csv")?;
    Ok(vec![
        criterion(
            "lemma1",
            pass1 == CONSTRUCTIONS,
            format!("{pass1} of {CONSTRUCTIONS} constructions pass"),
        ),
        criterion(
            "lemma2",
            pass2 == CONSTRUCTIONS,
            format!("{pass2} of {CONSTRUCTIONS} constructions pass"),
        ),
    ])
}
