use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use super::{assign_buckets, Population, PopulationConfig, Result, TaxpayerRecord};

/// Multiplicative noise with mean one.
fn unit_lognormal<R: Rng>(rng: &mut R, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 1.0;
    }
    let z: f64 = StandardNormal.sample(rng);
    (sigma * z - 0.5 * sigma * sigma).exp()
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Draws a synthetic population whose per-decile misreport rates, mean
/// adjustments and audit costs follow `config`.
///
/// Income and weights are drawn first; deciles come from the weighted income
/// distribution; misreports, costs and features are then drawn per decile.
/// The result is bucketed with `config.n_buckets`.
pub fn generate_population(config: &PopulationConfig) -> Result<Population> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.n_records;

    let mut incomes = Vec::with_capacity(n);
    let mut raw_weights = Vec::with_capacity(n);
    for _ in 0..n {
        let income = config.income.median * (config.income.sigma * normal(&mut rng)).exp();
        let w = (income / config.income.median).powf(config.weights.income_elasticity)
            * unit_lognormal(&mut rng, config.weights.dispersion);
        incomes.push(income);
        raw_weights.push(w);
    }
    let raw_total: f64 = raw_weights.iter().sum();
    let scale = config.weights.total_weight / raw_total;

    let skeleton: Vec<TaxpayerRecord> = (0..n)
        .map(|i| TaxpayerRecord {
            id: i as u64,
            features: Vec::new(),
            reported_income: incomes[i],
            misreport: 0.0,
            cost: 1.0,
            weight: raw_weights[i] * scale,
            bucket: None,
        })
        .collect();
    let deciles = assign_buckets(&Population::new(skeleton)?, 10)?;

    let adj = &config.adjustment;
    let feat = &config.features;
    let mut records = Vec::with_capacity(n);
    for rec in deciles.records() {
        let d = rec.bucket.expect("bucketed") - 1;
        let rate = config.misreport_rate[d];

        let is_misreporter = rng.random::<f64>() < rate;
        let misreport = if is_misreporter {
            let excess = config.mean_adjustment[d] - adj.calibration_tau;
            adj.calibration_tau + excess * unit_lognormal(&mut rng, adj.dispersion)
        } else if rng.random::<f64>() < rate * adj.compliant_deviation_share {
            if rng.random::<bool>() {
                // small understatement at or below the threshold
                adj.calibration_tau * (1.0 - rng.random::<f64>())
            } else {
                let e: f64 = Exp1.sample(&mut rng);
                -adj.overstatement_mean * e
            }
        } else {
            0.0
        };

        let cost = config.mean_cost[d] * unit_lognormal(&mut rng, config.cost_dispersion);

        let noise_scale = 1.0 + (feat.noise_growth - 1.0) * d as f64 / 9.0;
        let log_income = (rec.reported_income + 1.0).ln();
        let mut features = Vec::with_capacity(feat.feature_count());
        features.push(log_income);
        features.push(f64::from(u8::from(is_misreporter)) + feat.flag_noise * noise_scale * normal(&mut rng));
        features.push(misreport.max(0.0).ln_1p() + feat.amount_noise * noise_scale * normal(&mut rng));
        features.push(0.5 * log_income + normal(&mut rng));
        for _ in 1..feat.n_nuisance {
            features.push(normal(&mut rng));
        }

        records.push(TaxpayerRecord {
            features,
            misreport,
            cost,
            bucket: None,
            ..rec.clone()
        });
    }
    assign_buckets(&Population::new(records)?, config.n_buckets)
}
