//! Small statistical helpers shared by the experiment modules.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

/// Seeded generator used everywhere a seed is accepted.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent generator for the `stream`-th replicate of a seeded job.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal is valid")
}

/// Inverse CDF of the standard normal.
pub fn normal_quantile(p: f64) -> f64 {
    standard_normal().inverse_cdf(p)
}

pub fn normal_cdf(x: f64) -> f64 {
    standard_normal().cdf(x)
}

/// Counts for one arm of a two-proportion comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arm {
    pub successes: u64,
    pub trials: u64,
}

impl Arm {
    pub fn new(successes: u64, trials: u64) -> Self {
        Self { successes, trials }
    }

    pub fn rate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.successes as f64 / self.trials as f64
        }
    }
}

/// Pooled-variance z statistic for `treatment - control`. `None` when either
/// arm is empty or the pooled variance is zero.
pub fn pooled_z(control: Arm, treatment: Arm) -> Option<f64> {
    if control.trials == 0 || treatment.trials == 0 {
        return None;
    }
    let n1 = control.trials as f64;
    let n2 = treatment.trials as f64;
    let pooled = (control.successes + treatment.successes) as f64 / (n1 + n2);
    let var = pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n2);
    if var <= 0.0 {
        return None;
    }
    Some((treatment.rate() - control.rate()) / var.sqrt())
}

/// Unpooled (Wald) standard error of `treatment - control`.
pub fn unpooled_se(control: Arm, treatment: Arm) -> f64 {
    let p1 = control.rate();
    let p2 = treatment.rate();
    let v1 = if control.trials == 0 {
        0.0
    } else {
        p1 * (1.0 - p1) / control.trials as f64
    };
    let v2 = if treatment.trials == 0 {
        0.0
    } else {
        p2 * (1.0 - p2) / treatment.trials as f64
    };
    (v1 + v2).sqrt()
}
