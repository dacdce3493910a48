//! Three-variant blocked experiment separating the cost of computing a new
//! model from the value of showing its output.
//!
//! `base` runs the old system, `v1` computes the new model but discards the
//! result, `v2` computes it and exposes it. `v1 - base` is the performance
//! effect, `v2 - v1` the feature effect.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{normal_quantile, seeded_rng, unpooled_se, Arm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Base,
    V1,
    V2,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Base, Variant::V1, Variant::V2];

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Base => "base",
            Variant::V1 => "v1",
            Variant::V2 => "v2",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "base" => Ok(Variant::Base),
            "v1" => Ok(Variant::V1),
            "v2" => Ok(Variant::V2),
            other => Err(Error::input(format!("unknown variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockedDesign {
    allocation: [f64; 3],
}

impl BlockedDesign {
    /// Proportions for base, v1, v2. Zero shares are allowed so degenerate
    /// designs can be simulated; the analysis then reports the empty arm.
    pub fn new(base: f64, v1: f64, v2: f64) -> Result<Self> {
        let allocation = [base, v1, v2];
        if allocation.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::precondition(format!(
                "allocation {allocation:?} has a negative share"
            )));
        }
        let sum: f64 = allocation.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::precondition(format!("allocation sums to {sum}, not 1")));
        }
        Ok(Self { allocation })
    }

    pub fn allocation(&self) -> [f64; 3] {
        self.allocation
    }
}

impl Default for BlockedDesign {
    fn default() -> Self {
        Self {
            allocation: [1.0 / 3.0; 3],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockedOutcome {
    pub variant: Variant,
    pub converted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockedSimConfig {
    pub n_users: usize,
    pub base_cvr: f64,
    /// Added to the conversion rate of v1 and v2.
    pub latency_penalty: f64,
    /// Added to the conversion rate of v2 only.
    pub feature_effect: f64,
    pub design: BlockedDesign,
    pub seed: u64,
}

impl BlockedSimConfig {
    pub fn rates(&self) -> [f64; 3] {
        let v1 = self.base_cvr + self.latency_penalty;
        [self.base_cvr, v1, v1 + self.feature_effect]
    }
}

pub fn simulate_blocked(config: &BlockedSimConfig) -> Result<Vec<BlockedOutcome>> {
    let rates = config.rates();
    for (v, r) in Variant::ALL.iter().zip(rates) {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::precondition(format!(
                "conversion rate of {v} is {r}, outside [0, 1]"
            )));
        }
    }
    let [p_base, p_v1, _] = config.design.allocation;
    let (cut_base, cut_v1) = (p_base, p_base + p_v1);
    let mut rng = seeded_rng(config.seed);
    let mut out = Vec::with_capacity(config.n_users);
    for _ in 0..config.n_users {
        let u: f64 = rng.random();
        let variant = if u < cut_base {
            Variant::Base
        } else if u < cut_v1 {
            Variant::V1
        } else {
            Variant::V2
        };
        let converted = rng.random::<f64>() < rates[variant.index()];
        out.push(BlockedOutcome { variant, converted });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub users: u64,
    pub conversions: u64,
    pub rate: f64,
}

/// A difference of two conversion rates with a normal-approximation CI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contrast {
    pub estimate: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Zero standard error: both arms saturated at 0 or 1, so the interval
    /// carries no information.
    pub degenerate: bool,
}

impl Contrast {
    fn between(control: Arm, treatment: Arm, z: f64) -> Self {
        let estimate = treatment.rate() - control.rate();
        let se = unpooled_se(control, treatment);
        Self {
            estimate,
            se,
            ci_low: estimate - z * se,
            ci_high: estimate + z * se,
            degenerate: se == 0.0,
        }
    }

    pub fn covers(&self, value: f64) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockedAnalysis {
    pub base: VariantSummary,
    pub v1: VariantSummary,
    pub v2: VariantSummary,
    pub confidence: f64,
    /// v1 - base.
    pub perf_effect: Contrast,
    /// v2 - v1.
    pub feature_effect: Contrast,
    /// v2 - base. The estimate is `perf + feature` so the decomposition is
    /// exact; the interval comes from the direct contrast.
    pub total_effect: Contrast,
}

pub const CONFIDENCE: f64 = 0.95;

pub fn analyze_blocked(outcomes: &[BlockedOutcome]) -> Result<BlockedAnalysis> {
    let mut users = [0u64; 3];
    let mut conversions = [0u64; 3];
    for o in outcomes {
        users[o.variant.index()] += 1;
        conversions[o.variant.index()] += u64::from(o.converted);
    }
    for (v, n) in Variant::ALL.iter().zip(users) {
        if n == 0 {
            return Err(Error::precondition(format!("variant {v} has no users")));
        }
    }
    let arm = |i: usize| Arm::new(conversions[i], users[i]);
    let summary = |i: usize| VariantSummary {
        users: users[i],
        conversions: conversions[i],
        rate: arm(i).rate(),
    };
    let z = normal_quantile(0.5 + CONFIDENCE / 2.0);
    let perf = Contrast::between(arm(0), arm(1), z);
    let feature = Contrast::between(arm(1), arm(2), z);
    let direct = Contrast::between(arm(0), arm(2), z);
    let estimate = perf.estimate + feature.estimate;
    let total = Contrast {
        estimate,
        ci_low: estimate - z * direct.se,
        ci_high: estimate + z * direct.se,
        ..direct
    };
    Ok(BlockedAnalysis {
        base: summary(0),
        v1: summary(1),
        v2: summary(2),
        confidence: CONFIDENCE,
        perf_effect: perf,
        feature_effect: feature,
        total_effect: total,
    })
}

fn parse_converted(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" => Some(true),
        "0" | "false" => Some(false),
        _ => None,
    }
}

/// CSV with header `variant,converted`; `converted` is 0/1 or true/false.
pub fn parse_outcomes<R: Read>(reader: R) -> Result<Vec<BlockedOutcome>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::input(format!("outcomes header: {e}")))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::input(format!("outcomes CSV lacks a {name:?} column")))
    };
    let (vi, ci) = (col("variant")?, col("converted")?);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Line {
            line,
            message: e.to_string(),
        })?;
        let field = |j: usize| rec.get(j).unwrap_or("");
        let variant = field(vi).parse::<Variant>().map_err(|e| Error::Line {
            line,
            message: e.to_string(),
        })?;
        let converted = parse_converted(field(ci)).ok_or_else(|| Error::Line {
            line,
            message: format!("converted must be 0/1, got {:?}", field(ci)),
        })?;
        out.push(BlockedOutcome { variant, converted });
    }
    Ok(out)
}

pub fn read_outcomes(path: &Path) -> Result<Vec<BlockedOutcome>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_outcomes(std::io::BufReader::new(file))
}

pub fn write_outcomes<W: Write>(writer: W, outcomes: &[BlockedOutcome]) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(writer);
    writeln!(w, "variant,converted")?;
    for o in outcomes {
        writeln!(w, "{},{}", o.variant, u8::from(o.converted))?;
    }
    w.flush()
}
