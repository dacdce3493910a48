//! Scoring candidate problem constructions: how much traffic a positive
//! prediction would touch, whether the target is learnable from the
//! features at all, and whether the rows that *have* a target look different
//! from the ones that do not.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::TabularDataset;
use crate::stats::{seeded_rng, stream_rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassBalance {
    pub n: usize,
    pub positives: usize,
    pub positive_proportion: f64,
    pub warning: Option<String>,
    pub note: String,
}

/// Share of positives, i.e. the fraction of traffic a treatment keyed on
/// this target could reach.
pub fn class_balance(target: &[u8]) -> Result<ClassBalance> {
    if target.is_empty() {
        return Err(Error::precondition("class balance of an empty target"));
    }
    if let Some(v) = target.iter().find(|&&v| v > 1) {
        return Err(Error::input(format!("target value {v} is not binary")));
    }
    let positives = target.iter().filter(|&&v| v == 1).count();
    let p = positives as f64 / target.len() as f64;
    let warning = match positives {
        0 => Some("no positives: the treatment would impact no traffic".to_string()),
        x if x == target.len() => Some("every row is positive: nothing to discriminate".to_string()),
        _ => None,
    };
    Ok(ClassBalance {
        n: target.len(),
        positives,
        positive_proportion: p,
        warning,
        note: "the impacted share bounds the traffic an experiment on this treatment can enrol; \
               feed it to `scorescope power --disagreement` to size the test"
            .to_string(),
    })
}

/// How the logistic learner is fitted. Both minimise the mean log-loss on
/// standardized features; Newton adds a small ridge so separable data still
/// converges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Solver {
    GradientDescent { epochs: usize, learning_rate: f64 },
    Newton { max_iter: usize, ridge: f64 },
}

impl Solver {
    pub const GD_DEFAULT: Solver = Solver::GradientDescent {
        epochs: 500,
        learning_rate: 0.1,
    };
    pub const NEWTON_DEFAULT: Solver = Solver::Newton {
        max_iter: 50,
        ridge: 1e-4,
    };
}

impl Default for Solver {
    fn default() -> Self {
        Solver::GD_DEFAULT
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnerModel {
    /// Weights apply to standardized features; `means`/`scales` map raw
    /// features into that space. Dropped (constant) features have weight 0.
    Logistic {
        weights: Vec<f64>,
        bias: f64,
        means: Vec<f64>,
        scales: Vec<f64>,
    },
    Stump {
        feature: usize,
        threshold: f64,
        /// When true, predicts positive for values above the threshold.
        positive_above: bool,
    },
    RandomBaseline {
        positive_rate: f64,
    },
    MajorityBaseline {
        positive_rate: f64,
    },
}

impl LearnerModel {
    /// Ranking score for one raw feature row. For the logistic model this is
    /// the linear predictor (monotone in the probability, never saturates).
    pub fn score(&self, row: &[f64]) -> f64 {
        match self {
            LearnerModel::Logistic {
                weights,
                bias,
                means,
                scales,
            } => {
                let mut z = *bias;
                for j in 0..weights.len() {
                    if weights[j] != 0.0 {
                        z += weights[j] * (row[j] - means[j]) / scales[j];
                    }
                }
                z
            }
            LearnerModel::Stump {
                feature,
                threshold,
                positive_above,
            } => {
                let above = row[*feature] > *threshold;
                if above == *positive_above {
                    1.0
                } else {
                    0.0
                }
            }
            LearnerModel::RandomBaseline { positive_rate }
            | LearnerModel::MajorityBaseline { positive_rate } => *positive_rate,
        }
    }

    /// Probability of the positive class.
    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        match self {
            LearnerModel::Logistic { .. } => sigmoid(self.score(row)),
            LearnerModel::MajorityBaseline { positive_rate } => {
                if *positive_rate >= 0.5 {
                    1.0
                } else {
                    0.0
                }
            }
            _ => self.score(row),
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn check_rows(rows: &[Vec<f64>], labels: &[u8]) -> Result<usize> {
    if rows.len() != labels.len() {
        return Err(Error::input(format!(
            "{} rows but {} labels",
            rows.len(),
            labels.len()
        )));
    }
    let arity = rows.first().map_or(0, Vec::len);
    for (i, r) in rows.iter().enumerate() {
        if r.len() != arity {
            return Err(Error::input(format!("row {i} has {} features, expected {arity}", r.len())));
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::input(format!("row {i} has a non-finite feature")));
        }
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(Error::input("labels must be 0 or 1"));
    }
    Ok(arity)
}

fn both_classes(labels: &[u8]) -> bool {
    labels.contains(&0) && labels.contains(&1)
}

/// Standardized training matrix in column-major order, constants dropped.
struct Design {
    columns: Vec<Vec<f64>>,
    kept: Vec<usize>,
    means: Vec<f64>,
    scales: Vec<f64>,
}

impl Design {
    fn new(rows: &[&[f64]], arity: usize) -> Self {
        let n = rows.len() as f64;
        let mut means = vec![0.0; arity];
        let mut scales = vec![1.0; arity];
        let mut columns = Vec::new();
        let mut kept = Vec::new();
        for j in 0..arity {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            means[j] = mean;
            if sd > 1e-12 * mean.abs().max(1.0) {
                scales[j] = sd;
                kept.push(j);
                columns.push(rows.iter().map(|r| (r[j] - mean) / sd).collect());
            }
        }
        Design {
            columns,
            kept,
            means,
            scales,
        }
    }

    fn linear(&self, w: &[f64], b: f64, z: &mut [f64]) {
        z.fill(b);
        for (col, &wj) in self.columns.iter().zip(w) {
            for (zi, &x) in z.iter_mut().zip(col) {
                *zi += wj * x;
            }
        }
    }
}

fn fit_gd(d: &Design, y: &[f64], epochs: usize, lr: f64) -> (Vec<f64>, f64) {
    let n = y.len();
    let k = d.columns.len();
    let mut w = vec![0.0; k];
    let mut b = 0.0;
    let mut z = vec![0.0; n];
    let mut resid = vec![0.0; n];
    let inv_n = 1.0 / n as f64;
    for _ in 0..epochs {
        d.linear(&w, b, &mut z);
        let mut gb = 0.0;
        for i in 0..n {
            resid[i] = sigmoid(z[i]) - y[i];
            gb += resid[i];
        }
        for (wj, col) in w.iter_mut().zip(&d.columns) {
            let g: f64 = col.iter().zip(&resid).map(|(x, r)| x * r).sum();
            *wj -= lr * g * inv_n;
        }
        b -= lr * gb * inv_n;
    }
    (w, b)
}

fn penalized_loss(d: &Design, y: &[f64], w: &[f64], b: f64, ridge: f64, z: &mut [f64]) -> f64 {
    d.linear(w, b, z);
    let data: f64 = z.iter().zip(y).map(|(&zi, &yi)| softplus(zi) - yi * zi).sum();
    data / y.len() as f64 + 0.5 * ridge * w.iter().map(|v| v * v).sum::<f64>()
}

/// Solve the small dense system `a x = rhs` by Gaussian elimination with
/// partial pivoting. `a` is row-major `m x m`.
fn solve_dense(mut a: Vec<f64>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let m = rhs.len();
    for c in 0..m {
        let p = (c..m).max_by(|&i, &j| a[i * m + c].abs().total_cmp(&a[j * m + c].abs()))?;
        if a[p * m + c].abs() < 1e-300 {
            return None;
        }
        if p != c {
            for k in 0..m {
                a.swap(p * m + k, c * m + k);
            }
            rhs.swap(p, c);
        }
        for r in c + 1..m {
            let f = a[r * m + c] / a[c * m + c];
            for k in c..m {
                a[r * m + k] -= f * a[c * m + k];
            }
            rhs[r] -= f * rhs[c];
        }
    }
    let mut x = vec![0.0; m];
    for r in (0..m).rev() {
        let s: f64 = (r + 1..m).map(|k| a[r * m + k] * x[k]).sum();
        x[r] = (rhs[r] - s) / a[r * m + r];
    }
    Some(x)
}

fn fit_newton(d: &Design, y: &[f64], max_iter: usize, ridge: f64) -> (Vec<f64>, f64) {
    let n = y.len();
    let k = d.columns.len();
    let m = k + 1; // weights then bias
    let inv_n = 1.0 / n as f64;
    let mut w = vec![0.0; k];
    let mut b = 0.0;
    let mut z = vec![0.0; n];
    let mut loss = penalized_loss(d, y, &w, b, ridge, &mut z);
    let mut p = vec![0.0; n];
    let mut s = vec![0.0; n];

    for _ in 0..max_iter {
        d.linear(&w, b, &mut z);
        for i in 0..n {
            p[i] = sigmoid(z[i]);
            s[i] = p[i] * (1.0 - p[i]);
        }
        let mut grad = vec![0.0; m];
        let mut hess = vec![0.0; m * m];
        for a in 0..m {
            let col_a = d.columns.get(a);
            let xa = |i: usize| col_a.map_or(1.0, |c| c[i]);
            grad[a] = (0..n).map(|i| (p[i] - y[i]) * xa(i)).sum::<f64>() * inv_n;
            for c in a..m {
                let col_c = d.columns.get(c);
                let h = (0..n)
                    .map(|i| s[i] * xa(i) * col_c.map_or(1.0, |col| col[i]))
                    .sum::<f64>()
                    * inv_n;
                hess[a * m + c] = h;
                hess[c * m + a] = h;
            }
        }
        for j in 0..k {
            grad[j] += ridge * w[j];
            hess[j * m + j] += ridge;
        }
        // tiny jitter on the bias diagonal keeps all-saturated fits solvable
        hess[k * m + k] += 1e-12;
        let Some(step) = solve_dense(hess, grad) else {
            break;
        };

        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-10 {
            let w_new: Vec<f64> = w.iter().zip(&step).map(|(wj, sj)| wj - t * sj).collect();
            let b_new = b - t * step[k];
            let l_new = penalized_loss(d, y, &w_new, b_new, ridge, &mut z);
            if l_new <= loss {
                w = w_new;
                b = b_new;
                loss = l_new;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        let size = step.iter().fold(0.0f64, |acc, v| acc.max(v.abs())) * t;
        if !accepted || size < 1e-10 {
            break;
        }
    }
    (w, b)
}

fn fit_rows(rows: &[&[f64]], labels: &[u8], arity: usize, solver: Solver) -> LearnerModel {
    let design = Design::new(rows, arity);
    let y: Vec<f64> = labels.iter().map(|&v| f64::from(v)).collect();
    let (w, b) = match solver {
        Solver::GradientDescent {
            epochs,
            learning_rate,
        } => fit_gd(&design, &y, epochs, learning_rate),
        Solver::Newton { max_iter, ridge } => fit_newton(&design, &y, max_iter, ridge),
    };
    let mut weights = vec![0.0; arity];
    for (&j, wj) in design.kept.iter().zip(w) {
        weights[j] = wj;
    }
    LearnerModel::Logistic {
        weights,
        bias: b,
        means: design.means,
        scales: design.scales,
    }
}

/// Fit a logistic regression on standardized features, starting from zero
/// weights. Deterministic for a given solver.
pub fn train_logistic(data: &TabularDataset, solver: Solver) -> Result<LearnerModel> {
    let arity = check_rows(&data.rows, &data.target)?;
    if data.len() < 2 || !both_classes(&data.target) {
        return Err(Error::precondition(
            "logistic regression needs at least 2 rows covering both classes",
        ));
    }
    let rows: Vec<&[f64]> = data.rows.iter().map(Vec::as_slice).collect();
    Ok(fit_rows(&rows, &data.target, arity, solver))
}

/// Best single-feature threshold by training accuracy.
pub fn train_stump(data: &TabularDataset) -> Result<LearnerModel> {
    let arity = check_rows(&data.rows, &data.target)?;
    if !both_classes(&data.target) {
        return Err(Error::precondition("a stump needs both classes"));
    }
    let rows: Vec<&[f64]> = data.rows.iter().map(Vec::as_slice).collect();
    Ok(fit_stump(&rows, &data.target, arity))
}

fn fit_stump(rows: &[&[f64]], labels: &[u8], arity: usize) -> LearnerModel {
    let n = rows.len();
    let total_pos = labels.iter().filter(|&&y| y == 1).count();
    let majority = total_pos * 2 >= n;
    let mut best = (
        total_pos.max(n - total_pos),
        LearnerModel::Stump {
            feature: 0,
            threshold: f64::INFINITY,
            positive_above: !majority,
        },
    );
    for j in 0..arity {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| rows[a][j].total_cmp(&rows[b][j]));
        // positives at or below the split point
        let mut pos_below = 0;
        for k in 0..n - 1 {
            if labels[order[k]] == 1 {
                pos_below += 1;
            }
            let (lo, hi) = (rows[order[k]][j], rows[order[k + 1]][j]);
            if lo == hi {
                continue;
            }
            let below = k + 1;
            let neg_below = below - pos_below;
            let pos_above = total_pos - pos_below;
            let neg_above = (n - below) - pos_above;
            let above_correct = neg_below + pos_above;
            let below_correct = pos_below + neg_above;
            let (correct, positive_above) = if above_correct >= below_correct {
                (above_correct, true)
            } else {
                (below_correct, false)
            };
            if correct > best.0 {
                best = (
                    correct,
                    LearnerModel::Stump {
                        feature: j,
                        threshold: 0.5 * (lo + hi),
                        positive_above,
                    },
                );
            }
        }
    }
    best.1
}

/// Area under the ROC curve via the Mann-Whitney statistic, ties counted
/// one half.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::input("scores and labels differ in length"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::input("NaN score"));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.iter().filter(|&&y| y == 0).count();
    if n_pos + n_neg != labels.len() {
        return Err(Error::input("labels must be 0 or 1"));
    }
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::precondition("AUC needs both classes"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based average rank of the tie group
        let avg = (i + j + 2) as f64 / 2.0;
        let pos_in_group = order[i..=j].iter().filter(|&&k| labels[k] == 1).count();
        rank_sum_pos += avg * pos_in_group as f64;
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Seeded shuffled k-fold assignment: `fold[i]` is the test fold of row `i`.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded_rng(seed));
    let mut fold = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        fold[row] = pos % folds;
    }
    fold
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvScores {
    /// Mean over the folds that could be scored.
    pub logistic_auc: f64,
    pub stump_auc: f64,
    /// Majority predictor accuracy on held-out rows, averaged over folds.
    pub majority_accuracy: f64,
    pub folds_used: usize,
    pub folds_skipped: Vec<usize>,
}

fn cross_validate(
    rows: &[&[f64]],
    labels: &[u8],
    arity: usize,
    folds: &[usize],
    k: usize,
    solver: Solver,
    with_baselines: bool,
) -> Result<CvScores> {
    let mut logistic = Vec::new();
    let mut stump = Vec::new();
    let mut majority = Vec::new();
    let mut skipped = Vec::new();
    for f in 0..k {
        let (mut train_x, mut train_y, mut test_x, mut test_y) =
            (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for i in 0..rows.len() {
            if folds[i] == f {
                test_x.push(rows[i]);
                test_y.push(labels[i]);
            } else {
                train_x.push(rows[i]);
                train_y.push(labels[i]);
            }
        }
        if !both_classes(&train_y) || !both_classes(&test_y) {
            skipped.push(f);
            continue;
        }
        let model = fit_rows(&train_x, &train_y, arity, solver);
        let scores: Vec<f64> = test_x.iter().map(|r| model.score(r)).collect();
        logistic.push(auc(&scores, &test_y)?);
        if with_baselines {
            let st = fit_stump(&train_x, &train_y, arity);
            let scores: Vec<f64> = test_x.iter().map(|r| st.score(r)).collect();
            stump.push(auc(&scores, &test_y)?);
            let pos = train_y.iter().filter(|&&y| y == 1).count();
            let predict = u8::from(pos * 2 >= train_y.len());
            let hits = test_y.iter().filter(|&&y| y == predict).count();
            majority.push(hits as f64 / test_y.len() as f64);
        }
    }
    if logistic.is_empty() {
        return Err(Error::precondition(
            "every fold lacked one of the classes; cannot cross-validate",
        ));
    }
    let mean = |v: &[f64]| {
        if v.is_empty() {
            f64::NAN
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    Ok(CvScores {
        logistic_auc: mean(&logistic),
        stump_auc: mean(&stump),
        majority_accuracy: mean(&majority),
        folds_used: logistic.len(),
        folds_skipped: skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnabilityConfig {
    pub folds: usize,
    pub seed: u64,
    pub solver: Solver,
}

impl Default for LearnabilityConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            seed: 42,
            solver: Solver::GD_DEFAULT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnabilityReport {
    pub cv: CvScores,
    /// AUC of a random scorer.
    pub random_auc: f64,
    pub majority_positive_rate: f64,
    /// Out-of-fold logistic AUC minus the random baseline.
    pub gap: f64,
}

/// Out-of-fold logistic AUC against the trivial baselines.
pub fn learnability_gap(data: &TabularDataset, config: &LearnabilityConfig) -> Result<LearnabilityReport> {
    let arity = check_rows(&data.rows, &data.target)?;
    if config.folds < 2 {
        return Err(Error::precondition("need at least 2 folds"));
    }
    if data.len() < config.folds || !both_classes(&data.target) {
        return Err(Error::precondition(
            "learnability needs both classes and at least one row per fold",
        ));
    }
    let rows: Vec<&[f64]> = data.rows.iter().map(Vec::as_slice).collect();
    let folds = fold_assignment(data.len(), config.folds, config.seed);
    let cv = cross_validate(&rows, &data.target, arity, &folds, config.folds, config.solver, true)?;
    let positives = data.target.iter().filter(|&&y| y == 1).count();
    Ok(LearnabilityReport {
        random_auc: 0.5,
        majority_positive_rate: positives as f64 / data.len() as f64,
        gap: cv.logistic_auc - 0.5,
        cv,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Severity {
    None,
    Mild,
    Severe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BiasConfig {
    pub folds: usize,
    pub permutations: usize,
    pub seed: u64,
    pub solver: Solver,
    pub severe_auc: f64,
    pub severe_p: f64,
    pub mild_auc: f64,
    pub mild_p: f64,
}

impl Default for BiasConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            permutations: 200,
            seed: 42,
            solver: Solver::NEWTON_DEFAULT,
            severe_auc: 0.75,
            severe_p: 0.01,
            mild_auc: 0.6,
            mild_p: 0.05,
        }
    }
}

impl BiasConfig {
    pub fn severity(&self, auc: f64, p: f64) -> Severity {
        if auc >= self.severe_auc && p <= self.severe_p {
            Severity::Severe
        } else if auc >= self.mild_auc && p <= self.mild_p {
            Severity::Mild
        } else {
            Severity::None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    /// Out-of-fold AUC of predicting label availability from the features.
    pub auc: f64,
    /// Share of label-shuffled refits scoring at least `auc`.
    pub permutation_p: f64,
    pub n_labeled: usize,
    pub n_unlabeled: usize,
    pub severity: Severity,
    pub permutations: usize,
    pub folds_used: usize,
}

/// Selection-bias probe: if a simple classifier can tell labeled rows from
/// unlabeled ones, the labeled sample is not representative.
///
/// Permutation refits run in parallel; results are reduced in permutation
/// order so the report does not depend on scheduling.
pub fn bias_severity(features: &[Vec<f64>], has_label: &[u8], config: &BiasConfig) -> Result<BiasReport> {
    let arity = check_rows(features, has_label)?;
    let n_labeled = has_label.iter().filter(|&&y| y == 1).count();
    let n_unlabeled = has_label.len() - n_labeled;
    if n_labeled == 0 || n_unlabeled == 0 {
        return Err(Error::precondition(
            "selection-bias probe needs both labeled and unlabeled observations",
        ));
    }
    if config.folds < 2 || features.len() < config.folds {
        return Err(Error::precondition("need at least 2 folds and one row per fold"));
    }
    if config.permutations == 0 {
        return Err(Error::precondition("need at least one permutation"));
    }
    let rows: Vec<&[f64]> = features.iter().map(Vec::as_slice).collect();
    let folds = fold_assignment(rows.len(), config.folds, config.seed);
    let observed = cross_validate(&rows, has_label, arity, &folds, config.folds, config.solver, false)?;

    let null: Vec<f64> = (0..config.permutations)
        .into_par_iter()
        .map(|i| {
            let mut shuffled = has_label.to_vec();
            shuffled.shuffle(&mut stream_rng(config.seed, i as u64 + 1));
            cross_validate(&rows, &shuffled, arity, &folds, config.folds, config.solver, false)
                .map(|cv| cv.logistic_auc)
        })
        .collect::<Result<_>>()?;
    let exceed = null.iter().filter(|&&a| a >= observed.logistic_auc).count();
    let p = exceed as f64 / config.permutations as f64;

    Ok(BiasReport {
        auc: observed.logistic_auc,
        permutation_p: p,
        n_labeled,
        n_unlabeled,
        severity: config.severity(observed.logistic_auc, p),
        permutations: config.permutations,
        folds_used: observed.folds_used,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstructionScore {
    pub class_balance: ClassBalance,
    pub learnability: LearnabilityReport,
    pub bias: Option<BiasReport>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::seeded_rng;
    use proptest::prelude::*;
    use rand::Rng;

    /// O(n^2) pairwise oracle.
    fn auc_pairs(scores: &[f64], labels: &[u8]) -> f64 {
        let mut total = 0.0;
        let mut pairs = 0.0;
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if labels[i] == 1 && labels[j] == 0 {
                    pairs += 1.0;
                    total += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        total / pairs
    }

    pub(crate) fn separable(n: usize, seed: u64) -> TabularDataset {
        // class 1 has x0 >= 0.5, class 0 has x0 <= -0.5: margin 1
        let mut rng = seeded_rng(seed);
        let mut rows = Vec::new();
        let mut target = Vec::new();
        for i in 0..n {
            let y = (i % 2) as u8;
            let off: f64 = rng.random_range(0.5..3.0);
            let x0 = if y == 1 { off } else { -off };
            rows.push(vec![x0, rng.random_range(-2.0..2.0)]);
            target.push(y);
        }
        TabularDataset {
            feature_names: vec!["x0".into(), "x1".into()],
            rows,
            target,
        }
    }

    fn independent(n: usize, seed: u64) -> TabularDataset {
        let mut rng = seeded_rng(seed);
        let rows = (0..n)
            .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
            .collect();
        let target = (0..n).map(|_| u8::from(rng.random_bool(0.5))).collect();
        TabularDataset {
            feature_names: vec!["a".into(), "b".into()],
            rows,
            target,
        }
    }

    #[test]
    fn balance_examples() {
        assert_eq!(class_balance(&[1, 0, 0, 0]).unwrap().positive_proportion, 0.25);
        let zeros = class_balance(&[0, 0, 0]).unwrap();
        assert_eq!(zeros.positive_proportion, 0.0);
        assert!(zeros.warning.unwrap().contains("no positives"));
        assert_eq!(class_balance(&[1, 1]).unwrap().positive_proportion, 1.0);
        assert!(class_balance(&[]).is_err());
        assert!(class_balance(&[0, 2]).is_err());
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.9, 0.1], &[1, 0]).unwrap(), 1.0);
        assert_eq!(auc(&[0.1, 0.9], &[1, 0]).unwrap(), 0.0);
        assert_eq!(auc(&[0.3; 6], &[1, 0, 1, 0, 0, 1]).unwrap(), 0.5);
        assert!(auc(&[0.1, 0.2], &[1, 1]).is_err());
    }

    #[test]
    fn separable_training_auc() {
        let data = separable(100, 1);
        let model = train_logistic(&data, Solver::GD_DEFAULT).unwrap();
        let scores: Vec<f64> = data.rows.iter().map(|r| model.score(r)).collect();
        assert!(auc(&scores, &data.target).unwrap() >= 0.99);
    }

    #[test]
    fn independent_training_auc() {
        // Oracle: the training AUC under the null was simulated for 2000
        // seeds at n=200 (see construction_null in tests/oracles.rs);
        // the central 99.9% range is well inside [0.4, 0.7].
        let data = independent(200, 2);
        let model = train_logistic(&data, Solver::GD_DEFAULT).unwrap();
        let scores: Vec<f64> = data.rows.iter().map(|r| model.score(r)).collect();
        let a = auc(&scores, &data.target).unwrap();
        assert!((0.4..=0.7).contains(&a), "{a}");
    }

    #[test]
    fn duplicated_rows_same_weights() {
        let data = separable(60, 4);
        let mut dup = data.clone();
        dup.rows.extend(data.rows.clone());
        dup.target.extend(data.target.clone());
        let (a, b) = (
            train_logistic(&data, Solver::GD_DEFAULT).unwrap(),
            train_logistic(&dup, Solver::GD_DEFAULT).unwrap(),
        );
        match (a, b) {
            (
                LearnerModel::Logistic { weights: wa, bias: ba, .. },
                LearnerModel::Logistic { weights: wb, bias: bb, .. },
            ) => {
                for (x, y) in wa.iter().zip(&wb) {
                    assert!((x - y).abs() <= 1e-10 * x.abs().max(1.0));
                }
                assert!((ba - bb).abs() <= 1e-10);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn training_rejects_bad_data() {
        let mut data = separable(10, 1);
        data.target = vec![1; 10];
        assert!(train_logistic(&data, Solver::GD_DEFAULT).is_err());
        let mut data = separable(10, 1);
        data.rows[3][0] = f64::NAN;
        assert!(train_logistic(&data, Solver::GD_DEFAULT).is_err());
    }

    #[test]
    fn newton_matches_gd_on_overlapping_data() {
        let mut rng = seeded_rng(8);
        let rows: Vec<Vec<f64>> = (0..400).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
        let target = rows
            .iter()
            .map(|r| u8::from(rng.random::<f64>() < 0.2 + 0.6 * r[0]))
            .collect();
        let data = TabularDataset {
            feature_names: vec!["a".into(), "b".into()],
            rows,
            target,
        };
        let gd = train_logistic(
            &data,
            Solver::GradientDescent {
                epochs: 5000,
                learning_rate: 0.5,
            },
        )
        .unwrap();
        let nt = train_logistic(&data, Solver::Newton { max_iter: 50, ridge: 0.0 }).unwrap();
        for r in &data.rows {
            assert!((gd.predict_proba(r) - nt.predict_proba(r)).abs() < 1e-6);
        }
    }

    #[test]
    fn stump_finds_split() {
        let data = separable(50, 3);
        let stump = train_stump(&data).unwrap();
        match stump {
            LearnerModel::Stump {
                feature,
                threshold,
                positive_above,
            } => {
                assert_eq!(feature, 0);
                assert!(threshold.abs() <= 3.0);
                assert!(positive_above);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn gap_on_separable_and_null() {
        let gap = learnability_gap(&separable(200, 5), &LearnabilityConfig::default()).unwrap();
        assert!(gap.gap >= 0.45, "{gap:?}");
        let null = learnability_gap(&independent(400, 6), &LearnabilityConfig::default()).unwrap();
        assert!(null.gap.abs() <= 0.1, "{null:?}");
        assert_eq!(null.random_auc, 0.5);
    }

    #[test]
    fn gap_is_deterministic() {
        let data = independent(200, 9);
        let cfg = LearnabilityConfig::default();
        assert_eq!(learnability_gap(&data, &cfg).unwrap(), learnability_gap(&data, &cfg).unwrap());
    }

    #[test]
    fn gap_skips_single_class_folds() {
        // Only two positives: at most two folds can hold a positive.
        let mut data = independent(20, 3);
        data.target = vec![0; 20];
        data.target[0] = 1;
        data.target[1] = 1;
        let gap = learnability_gap(&data, &LearnabilityConfig::default()).unwrap();
        assert!(gap.cv.folds_used <= 2);
        assert_eq!(gap.cv.folds_used + gap.cv.folds_skipped.len(), 5);
    }

    fn probe_config() -> BiasConfig {
        BiasConfig {
            permutations: 40,
            ..BiasConfig::default()
        }
    }

    #[test]
    fn bias_constant_feature_is_none() {
        let mut rng = seeded_rng(1);
        let features: Vec<Vec<f64>> = (0..300).map(|_| vec![3.0]).collect();
        let has: Vec<u8> = (0..300).map(|_| u8::from(rng.random_bool(0.4))).collect();
        let r = bias_severity(&features, &has, &probe_config()).unwrap();
        assert_eq!(r.auc, 0.5);
        assert_eq!(r.severity, Severity::None);
        assert_eq!(r.n_labeled + r.n_unlabeled, 300);
    }

    #[test]
    fn bias_median_split_is_severe() {
        let mut rng = seeded_rng(2);
        let features: Vec<Vec<f64>> = (0..400).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
        let mut sorted: Vec<f64> = features.iter().map(|r| r[0]).collect();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[200];
        let has: Vec<u8> = features.iter().map(|r| u8::from(r[0] > median)).collect();
        let r = bias_severity(&features, &has, &BiasConfig { permutations: 100, ..probe_config() }).unwrap();
        assert!(r.auc >= 0.95);
        assert_eq!(r.permutation_p, 0.0);
        assert_eq!(r.severity, Severity::Severe);
    }

    #[test]
    fn bias_requires_both_groups() {
        let features = vec![vec![1.0]; 10];
        assert!(bias_severity(&features, &[1; 10], &probe_config()).is_err());
        assert!(bias_severity(&features, &[0; 10], &probe_config()).is_err());
    }

    #[test]
    fn bias_deterministic_and_scale_invariant() {
        let mut rng = seeded_rng(12);
        let features: Vec<Vec<f64>> = (0..300).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
        let has: Vec<u8> = features
            .iter()
            .map(|r| u8::from(rng.random::<f64>() < 0.3 + 0.4 * r[1]))
            .collect();
        let cfg = probe_config();
        let a = bias_severity(&features, &has, &cfg).unwrap();
        assert_eq!(a, bias_severity(&features, &has, &cfg).unwrap());
        let scaled: Vec<Vec<f64>> = features.iter().map(|r| vec![r[0] * 1000.0 - 7.0, r[1] * 0.01 + 4.0]).collect();
        let b = bias_severity(&scaled, &has, &cfg).unwrap();
        assert_eq!(a.severity, b.severity);
        assert!((a.auc - b.auc).abs() < 1e-9);
    }

    #[test]
    fn severity_rule() {
        let c = BiasConfig::default();
        assert_eq!(c.severity(0.8, 0.0), Severity::Severe);
        assert_eq!(c.severity(0.8, 0.03), Severity::Mild);
        assert_eq!(c.severity(0.65, 0.0), Severity::Mild);
        assert_eq!(c.severity(0.59, 0.0), Severity::None);
        assert_eq!(c.severity(0.9, 0.2), Severity::None);
    }

    proptest! {
        #[test]
        fn auc_matches_pairwise_oracle(
            data in proptest::collection::vec((0u8..6, 0u8..2), 2..60)
        ) {
            let scores: Vec<f64> = data.iter().map(|(s, _)| f64::from(*s) / 5.0).collect();
            let labels: Vec<u8> = data.iter().map(|(_, y)| *y).collect();
            prop_assume!(labels.contains(&0) && labels.contains(&1));
            let a = auc(&scores, &labels).unwrap();
            prop_assert!((a - auc_pairs(&scores, &labels)).abs() < 1e-12);
            // complement labels
            let flipped: Vec<u8> = labels.iter().map(|y| 1 - y).collect();
            prop_assert!((a + auc(&scores, &flipped).unwrap() - 1.0).abs() < 1e-12);
            // strictly increasing transform
            let warped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 2.0).collect();
            prop_assert_eq!(a, auc(&warped, &labels).unwrap());
        }
    }
}
