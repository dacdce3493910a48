//! Seeded score generators for the chart shapes the diagnostics recognise.
//! Used by the test suites and by `scorescope synth`.

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::ingest::ScoreRecord;
use crate::stats::seeded_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// Equal mixture of Beta(2, 8) and Beta(8, 2).
    Bimodal,
    /// Beta(5, 5).
    Central,
    /// 95% of scores at exactly 0, the rest uniform.
    Spike,
    /// Uniform scores; with few samples the chart is mostly sampling noise.
    Noise,
}

pub fn scores(family: Family, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = seeded_rng(seed);
    match family {
        Family::Bimodal => {
            let lo = Beta::new(2.0, 8.0).expect("valid shape");
            let hi = Beta::new(8.0, 2.0).expect("valid shape");
            (0..n)
                .map(|_| {
                    if rng.random_bool(0.5) {
                        lo.sample(&mut rng)
                    } else {
                        hi.sample(&mut rng)
                    }
                })
                .collect()
        }
        Family::Central => {
            let beta = Beta::new(5.0, 5.0).expect("valid shape");
            (0..n).map(|_| beta.sample(&mut rng)).collect()
        }
        Family::Spike => (0..n)
            .map(|_| {
                if rng.random_bool(0.95) {
                    0.0
                } else {
                    rng.random()
                }
            })
            .collect(),
        Family::Noise => (0..n).map(|_| rng.random()).collect(),
    }
}

/// Score log for one model with timestamps one second apart.
pub fn records(model_id: &str, family: Family, n: usize, seed: u64) -> Vec<ScoreRecord> {
    scores(family, n, seed)
        .into_iter()
        .enumerate()
        .map(|(i, s)| ScoreRecord::new(model_id, 1_000 * i as u64, s))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_stay_in_unit_interval_and_repeat() {
        for f in [Family::Bimodal, Family::Central, Family::Spike, Family::Noise] {
            let a = scores(f, 500, 4);
            assert!(a.iter().all(|s| (0.0..=1.0).contains(s)));
            assert_eq!(a, scores(f, 500, 4));
            assert_ne!(a, scores(f, 500, 5));
        }
    }

    #[test]
    fn spike_share() {
        let s = scores(Family::Spike, 10_000, 1);
        let zeros = s.iter().filter(|&&x| x == 0.0).count() as f64 / 1e4;
        assert!((zeros - 0.95).abs() < 0.01);
    }
}
