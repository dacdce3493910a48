//! Comparing two correlated models in an A/B test.
//!
//! When a new model is tested against the one it improves on, only units on
//! which the two models would act differently carry any signal: where they
//! agree, control and treatment are identical. The experiment's effective
//! traffic is therefore the disagreement rate, and that rate is bounded by
//! the two accuracies.

use num_rational::Ratio;
use num_traits::{Num, ToPrimitive};
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::PairedPrediction;
use crate::stats::{normal_cdf, normal_quantile, pooled_z, seeded_rng, stream_rng, unpooled_se, Arm};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisagreementReport {
    pub n_pairs: usize,
    pub n_disagree: usize,
    pub rate: f64,
    pub threshold: f64,
    /// Pairs that carried a label; accuracies are computed over these.
    pub n_labeled: usize,
    pub accuracy_a: Option<f64>,
    pub accuracy_b: Option<f64>,
    /// [`max_disagreement`] of the two accuracies.
    pub max_disagreement: Option<f64>,
    pub note: Option<String>,
}

/// Share of pairs on which the two models, thresholded at `threshold`,
/// would make different decisions.
pub fn disagreement(pairs: &[PairedPrediction], threshold: f64) -> Result<DisagreementReport> {
    if pairs.is_empty() {
        return Err(Error::precondition("no paired predictions"));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::precondition(format!(
            "threshold must be in (0, 1), got {threshold}"
        )));
    }
    let decide = |s: f64| s >= threshold;
    let mut n_disagree = 0;
    let (mut n_labeled, mut correct_a, mut correct_b) = (0, 0, 0);
    for p in pairs {
        let (a, b) = (decide(p.pred_a), decide(p.pred_b));
        if a != b {
            n_disagree += 1;
        }
        if let Some(y) = p.true_label {
            n_labeled += 1;
            correct_a += usize::from(a == y);
            correct_b += usize::from(b == y);
        }
    }
    let (accuracy_a, accuracy_b) = if n_labeled > 0 {
        (
            Some(correct_a as f64 / n_labeled as f64),
            Some(correct_b as f64 / n_labeled as f64),
        )
    } else {
        (None, None)
    };
    // from the counts, so 800/1000 and 900/1000 give exactly 0.3
    let bound = (n_labeled > 0).then(|| {
        let n = n_labeled as i64;
        ratio_to_f64(max_disagreement_in(
            Ratio::new(correct_a as i64, n),
            Ratio::new(correct_b as i64, n),
        ))
    });
    let note = (n_disagree == 0).then(|| {
        "no testable difference: the models agree on every unit, so an A/B test would enrol nobody"
            .to_string()
    });
    Ok(DisagreementReport {
        n_pairs: pairs.len(),
        n_disagree,
        rate: n_disagree as f64 / pairs.len() as f64,
        threshold,
        n_labeled,
        accuracy_a,
        accuracy_b,
        max_disagreement: bound,
        note,
    })
}

/// Largest possible disagreement between two binary classifiers with the
/// given accuracies: every error of one is a success of the other, as far
/// as the marginals allow. Generic so it can be evaluated in exact
/// arithmetic.
pub fn max_disagreement_in<T: Num + PartialOrd + Copy>(accuracy_a: T, accuracy_b: T) -> T {
    let min = |x: T, y: T| if x < y { x } else { y };
    let one = T::one();
    min(one - accuracy_a, accuracy_b) + min(one - accuracy_b, accuracy_a)
}

pub fn max_disagreement(accuracy_a: f64, accuracy_b: f64) -> Result<f64> {
    for a in [accuracy_a, accuracy_b] {
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::precondition(format!("accuracy {a} outside [0, 1]")));
        }
    }
    Ok(max_disagreement_in(accuracy_a, accuracy_b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub accuracy: f64,
    pub upper_bound: f64,
}

/// Upper bound of impacted traffic for a new model of each accuracy in
/// `grid` tested against a baseline of `baseline_accuracy`.
pub fn impacted_traffic_curve(baseline_accuracy: f64, grid: &[f64]) -> Result<Vec<CurvePoint>> {
    if !(0.0..=1.0).contains(&baseline_accuracy) {
        return Err(Error::precondition(format!(
            "baseline accuracy {baseline_accuracy} outside [0, 1]"
        )));
    }
    grid.iter()
        .map(|&a| {
            if a < baseline_accuracy || a > 1.0 {
                return Err(Error::precondition(format!(
                    "grid value {a} outside [{baseline_accuracy}, 1]"
                )));
            }
            Ok(CurvePoint {
                accuracy: a,
                upper_bound: max_disagreement(baseline_accuracy, a)?,
            })
        })
        .collect()
}

/// Exact value of a plain decimal such as `0.85` or `-3`.
pub fn parse_decimal(text: &str) -> Result<Ratio<i64>> {
    let t = text.trim();
    let bad = || Error::input(format!("{text:?} is not a plain decimal number"));
    let (neg, digits) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t.strip_prefix('+').unwrap_or(t)),
    };
    let (int, frac) = digits.split_once('.').unwrap_or((digits, ""));
    if int.is_empty() && frac.is_empty()
        || !int.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit())
        || int.len() + frac.len() > 17
    {
        return Err(bad());
    }
    let numer: i64 = format!("{int}{frac}").parse().map_err(|_| bad())?;
    let denom = 10i64.pow(frac.len() as u32);
    let r = Ratio::new(numer, denom);
    Ok(if neg { -r } else { r })
}

fn ratio_to_f64(r: Ratio<i64>) -> f64 {
    r.to_f64().expect("small ratios convert")
}

/// `start:end:step` in exact decimal arithmetic, inclusive of `end` when it
/// lies on the grid.
pub fn parse_grid_exact(grid: &str) -> Result<Vec<Ratio<i64>>> {
    let nums: Vec<Ratio<i64>> = grid.split(':').map(parse_decimal).collect::<Result<_>>()?;
    let [start, end, step] = nums[..] else {
        return Err(Error::input(format!("grid {grid:?} must be start:end:step")));
    };
    if step <= Ratio::from_integer(0) || end < start {
        return Err(Error::input(format!("grid {grid:?} needs step > 0 and end >= start")));
    }
    let count = ((end - start) / step).floor().to_integer();
    if count > 1_000_000 {
        return Err(Error::input(format!("grid {grid:?} has more than a million points")));
    }
    Ok((0..=count).map(|i| start + step * i).collect())
}

pub fn parse_grid(grid: &str) -> Result<Vec<f64>> {
    Ok(parse_grid_exact(grid)?.into_iter().map(ratio_to_f64).collect())
}

/// [`impacted_traffic_curve`] evaluated in exact arithmetic; each bound is
/// the double nearest the exact value.
pub fn impacted_traffic_curve_exact(
    baseline_accuracy: Ratio<i64>,
    grid: &[Ratio<i64>],
) -> Result<Vec<CurvePoint>> {
    let (zero, one) = (Ratio::from_integer(0), Ratio::from_integer(1));
    if baseline_accuracy < zero || baseline_accuracy > one {
        return Err(Error::precondition(format!(
            "baseline accuracy {baseline_accuracy} outside [0, 1]"
        )));
    }
    grid.iter()
        .map(|&a| {
            if a < baseline_accuracy || a > one {
                return Err(Error::precondition(format!(
                    "grid value {} outside [{}, 1]",
                    ratio_to_f64(a),
                    ratio_to_f64(baseline_accuracy)
                )));
            }
            Ok(CurvePoint {
                accuracy: ratio_to_f64(a),
                upper_bound: ratio_to_f64(max_disagreement_in(baseline_accuracy, a)),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerReport {
    pub p_control: f64,
    pub p_treatment: f64,
    pub alpha: f64,
    pub power: f64,
    /// Users per arm among those actually enrolled (i.e. disagreeing).
    pub n_per_arm: u64,
    pub disagreement_rate: f64,
    /// Users that must be exposed so that `2 * n_per_arm` of them disagree.
    pub total_traffic_required: u64,
}

/// Per-arm sample size for a two-sided two-proportion z-test (normal
/// approximation), diluted by the disagreement rate.
pub fn required_sample_size(
    p_control: f64,
    minimum_detectable_effect: f64,
    alpha: f64,
    power: f64,
    disagreement_rate: f64,
) -> Result<PowerReport> {
    let p_treatment = p_control + minimum_detectable_effect;
    if !(p_control > 0.0 && p_control < 1.0) || !(p_treatment > 0.0 && p_treatment < 1.0) {
        return Err(Error::precondition(format!(
            "rates must stay inside (0, 1): control {p_control}, treatment {p_treatment}"
        )));
    }
    if minimum_detectable_effect == 0.0 {
        return Err(Error::precondition("minimum detectable effect must be non-zero"));
    }
    if !(alpha > 0.0 && alpha < 1.0) || !(power > 0.0 && power < 1.0) {
        return Err(Error::precondition("alpha and power must be in (0, 1)"));
    }
    if disagreement_rate == 0.0 {
        return Err(Error::precondition(
            "experiment impossible: models identical (disagreement rate 0)",
        ));
    }
    if !(disagreement_rate > 0.0 && disagreement_rate <= 1.0) {
        return Err(Error::precondition(format!(
            "disagreement rate {disagreement_rate} outside (0, 1]"
        )));
    }
    let z_alpha = normal_quantile(1.0 - alpha / 2.0);
    let z_beta = normal_quantile(power);
    let p_bar = 0.5 * (p_control + p_treatment);
    let null_sd = (2.0 * p_bar * (1.0 - p_bar)).sqrt();
    let alt_sd = (p_control * (1.0 - p_control) + p_treatment * (1.0 - p_treatment)).sqrt();
    let n = ((z_alpha * null_sd + z_beta * alt_sd) / minimum_detectable_effect).powi(2);
    let n_per_arm = n.ceil() as u64;
    let total = (2.0 * n_per_arm as f64 / disagreement_rate).ceil() as u64;
    Ok(PowerReport {
        p_control,
        p_treatment,
        alpha,
        power,
        n_per_arm,
        disagreement_rate,
        total_traffic_required: total,
    })
}

/// Normal-approximation power of the pooled two-sided test at `n_per_arm`.
pub fn approximate_power(p_control: f64, p_treatment: f64, alpha: f64, n_per_arm: u64) -> f64 {
    let n = n_per_arm as f64;
    let z_alpha = normal_quantile(1.0 - alpha / 2.0);
    let p_bar = 0.5 * (p_control + p_treatment);
    let null_se = (2.0 * p_bar * (1.0 - p_bar) / n).sqrt();
    let alt_se = ((p_control * (1.0 - p_control) + p_treatment * (1.0 - p_treatment)) / n).sqrt();
    let d = (p_treatment - p_control).abs();
    normal_cdf((d - z_alpha * null_se) / alt_se) + normal_cdf((-d - z_alpha * null_se) / alt_se)
}

/// Share of `replications` two-arm experiments with `n_per_arm` users per
/// arm that the pooled two-sided z-test rejects at `alpha`. A direct check
/// of [`required_sample_size`].
pub fn monte_carlo_power(
    p_control: f64,
    p_treatment: f64,
    alpha: f64,
    n_per_arm: u64,
    replications: u64,
    seed: u64,
) -> Result<f64> {
    for p in [p_control, p_treatment] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::precondition(format!("rate {p} outside [0, 1]")));
        }
    }
    if replications == 0 {
        return Err(Error::precondition("need at least one replication"));
    }
    let crit = normal_quantile(1.0 - alpha / 2.0);
    let rejected: u64 = (0..replications)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i);
            let control = Arm::new(binomial(&mut rng, n_per_arm, p_control), n_per_arm);
            let treatment = Arm::new(binomial(&mut rng, n_per_arm, p_treatment), n_per_arm);
            u64::from(pooled_z(control, treatment).is_some_and(|z| z.abs() > crit))
        })
        .sum();
    Ok(rejected as f64 / replications as f64)
}

/// Joint distribution of which model is correct on a unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointCorrectness {
    pub both: f64,
    pub only_a: f64,
    pub only_b: f64,
    pub neither: f64,
}

impl JointCorrectness {
    fn validate(&self) -> Result<()> {
        let parts = [self.both, self.only_a, self.only_b, self.neither];
        if parts.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::precondition("joint probabilities must be in [0, 1]"));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::precondition(format!("joint probabilities sum to {sum}, not 1")));
        }
        Ok(())
    }

    pub fn disagreement(&self) -> f64 {
        self.only_a + self.only_b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSimConfig {
    pub n_users: u64,
    pub joint: JointCorrectness,
    /// Conversion rate when the shown model's decision is correct.
    pub cvr_correct: f64,
    /// Conversion rate when it is wrong.
    pub cvr_wrong: f64,
    pub alpha: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    pub enrolled: u64,
    /// Control shows model A, treatment shows model B.
    pub control: Arm,
    pub treatment: Arm,
    /// Treatment minus control conversion rate among enrolled users.
    pub effect_estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub z: Option<f64>,
    pub rejected_null: bool,
    pub note: Option<String>,
}

fn binomial<R: Rng>(rng: &mut R, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("p in (0, 1)").sample(rng)
}

/// Disagreement-routed A/B test. Users whose two predictions agree are not
/// enrolled; the rest are split 50/50 between the models and convert with a
/// rate that depends only on whether the shown model was right.
///
/// Users are i.i.d., so the simulation draws the per-cell counts directly
/// from their binomial laws instead of looping over users.
pub fn simulate_paired_experiment(config: &PairedSimConfig) -> Result<SimOutcome> {
    config.joint.validate()?;
    for r in [config.cvr_correct, config.cvr_wrong] {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::precondition(format!("conversion rate {r} outside [0, 1]")));
        }
    }
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(Error::precondition("alpha must be in (0, 1)"));
    }
    let mut rng = seeded_rng(config.seed);
    let j = &config.joint;
    let only_a = binomial(&mut rng, config.n_users, j.only_a);
    let rest = 1.0 - j.only_a;
    let only_b = if rest > 0.0 {
        binomial(&mut rng, config.n_users - only_a, (j.only_b / rest).min(1.0))
    } else {
        0
    };
    let enrolled = only_a + only_b;
    if enrolled == 0 {
        return Ok(SimOutcome {
            enrolled: 0,
            control: Arm::new(0, 0),
            treatment: Arm::new(0, 0),
            effect_estimate: 0.0,
            ci_low: 0.0,
            ci_high: 0.0,
            z: None,
            rejected_null: false,
            note: Some("no experiment possible: the models never disagree".into()),
        });
    }

    // only-A users: A right, B wrong. only-B users: the reverse.
    let ctrl_a = binomial(&mut rng, only_a, 0.5);
    let treat_a = only_a - ctrl_a;
    let ctrl_b = binomial(&mut rng, only_b, 0.5);
    let treat_b = only_b - ctrl_b;
    let conv_ctrl = binomial(&mut rng, ctrl_a, config.cvr_correct) + binomial(&mut rng, ctrl_b, config.cvr_wrong);
    let conv_treat =
        binomial(&mut rng, treat_a, config.cvr_wrong) + binomial(&mut rng, treat_b, config.cvr_correct);

    let control = Arm::new(conv_ctrl, ctrl_a + ctrl_b);
    let treatment = Arm::new(conv_treat, treat_a + treat_b);
    let effect = treatment.rate() - control.rate();
    let z = pooled_z(control, treatment);
    let crit = normal_quantile(1.0 - config.alpha / 2.0);
    let half = crit * unpooled_se(control, treatment);
    let note = (control.trials == 0 || treatment.trials == 0)
        .then(|| "one arm received no users; no test performed".to_string());
    Ok(SimOutcome {
        enrolled,
        control,
        treatment,
        effect_estimate: effect,
        ci_low: effect - half,
        ci_high: effect + half,
        z,
        rejected_null: z.is_some_and(|z| z.abs() > crit),
        note,
    })
}

/// `runs` independent replicates with seeds `seed, seed + 1, ...`, in seed
/// order.
pub fn replicate_paired_experiment(config: &PairedSimConfig, runs: usize) -> Result<Vec<SimOutcome>> {
    (0..runs as u64)
        .into_par_iter()
        .map(|i| {
            simulate_paired_experiment(&PairedSimConfig {
                seed: config.seed.wrapping_add(i),
                ..config.clone()
            })
        })
        .collect()
}
