//! Response distribution charts.
//!
//! An RDC is the histogram of a scoring classifier's outputs over [0, 1].
//! A model that separates its two classes puts its mass near the two ends
//! with a low-density region in between, and a few recognisable departures
//! from that shape point at specific defects:
//!
//! | pattern            | shape                                    |
//! |--------------------|------------------------------------------|
//! | `HEALTHY_BIMODAL`  | two modes separated by a clear valley    |
//! | `CENTRAL_UNIMODAL` | one smooth mode in the middle            |
//! | `EXTREME_SPIKE`    | one bin holding an outsized share        |
//! | `NOISY`            | large residual against a moving average  |
//!
//! The classification is heuristic; every threshold lives in
//! [`DiagnosisConfig`] and is echoed back in the [`Evidence`].

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::ScoreRecord;

pub const DEFAULT_BINS: usize = 100;

/// Histogram of scores over equal-width bins partitioning [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rdc {
    edges: Vec<f64>,
    counts: Vec<u64>,
    n: u64,
}

impl Rdc {
    /// An empty chart with `bin_count` bins, for incremental accumulation.
    pub fn empty(bin_count: usize) -> Result<Self> {
        if bin_count < 2 {
            return Err(Error::precondition(format!(
                "bin count must be at least 2, got {bin_count}"
            )));
        }
        let edges = (0..=bin_count)
            .map(|i| i as f64 / bin_count as f64)
            .collect();
        Ok(Self {
            edges,
            counts: vec![0; bin_count],
            n: 0,
        })
    }

    /// Chart with the given per-bin counts.
    pub fn from_counts(counts: Vec<u64>) -> Result<Self> {
        let mut rdc = Self::empty(counts.len())?;
        rdc.n = counts.iter().sum();
        rdc.counts = counts;
        Ok(rdc)
    }

    pub fn bin_count(&self) -> usize {
        self.counts.len()
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        0.5 * (self.edges[i] + self.edges[i + 1])
    }

    /// Bin holding `score`; bins are half-open except the last, which also
    /// takes 1.0.
    pub fn bin_of(&self, score: f64) -> usize {
        let last = self.counts.len() - 1;
        let mut i = ((score * self.counts.len() as f64).floor() as usize).min(last);
        // keep the arithmetic guess consistent with the stored edges
        if i > 0 && score < self.edges[i] {
            i -= 1;
        } else if i < last && score >= self.edges[i + 1] {
            i += 1;
        }
        i
    }

    pub fn push(&mut self, score: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::input(format!("score {score} outside [0, 1]")));
        }
        let i = self.bin_of(score);
        self.counts[i] += 1;
        self.n += 1;
        Ok(())
    }

    /// Counts divided by `n`.
    pub fn frequencies(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }

    fn same_binning(&self, other: &Rdc) -> bool {
        self.edges == other.edges
    }
}

/// Histogram `scores` into `bin_count` equal-width bins.
pub fn build_rdc(scores: &[f64], bin_count: usize) -> Result<Rdc> {
    if scores.is_empty() {
        return Err(Error::precondition("cannot build an RDC from zero scores"));
    }
    let mut rdc = Rdc::empty(bin_count)?;
    for &s in scores {
        rdc.push(s)?;
    }
    Ok(rdc)
}

/// `ln(1 + count)` per bin. Makes small secondary modes visible when one
/// class dominates.
pub fn log_view(rdc: &Rdc) -> Vec<f64> {
    rdc.counts.iter().map(|&c| (c as f64).ln_1p()).collect()
}

/// Moving-average view of an [`Rdc`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmoothedRdc {
    pub base: Rdc,
    pub window: usize,
    /// Raw normalized frequencies.
    pub frequencies: Vec<f64>,
    /// Centered moving average of `frequencies`, window truncated at the
    /// edges, renormalized to sum to one.
    pub heights: Vec<f64>,
    /// L1 distance between `frequencies` and `heights`, in [0, 2].
    pub roughness: f64,
}

pub fn smooth(rdc: &Rdc, window: usize) -> Result<SmoothedRdc> {
    let bins = rdc.bin_count();
    if window == 0 || window % 2 == 0 || window > bins {
        return Err(Error::precondition(format!(
            "smoothing window must be odd and in 1..={bins}, got {window}"
        )));
    }
    if rdc.n == 0 {
        return Err(Error::precondition("cannot smooth an empty RDC"));
    }
    let half = window / 2;
    let n = rdc.n as f64;
    let frequencies = rdc.frequencies();

    // Window sums in integer counts so that scaling every count by k leaves
    // the result bit-identical.
    let mut raw = Vec::with_capacity(bins);
    for i in 0..bins {
        let lo = i.saturating_sub(half);
        let hi = (i + half).min(bins - 1);
        let sum: u64 = rdc.counts[lo..=hi].iter().sum();
        raw.push(sum as f64 / n / (hi - lo + 1) as f64);
    }
    let total: f64 = raw.iter().sum();
    let heights: Vec<f64> = raw.iter().map(|a| a / total).collect();
    let roughness = frequencies
        .iter()
        .zip(&heights)
        .map(|(f, h)| (f - h).abs())
        .sum();

    Ok(SmoothedRdc {
        base: rdc.clone(),
        window,
        frequencies,
        heights,
        roughness,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub bin_index: usize,
    /// Bin center.
    pub location: f64,
    pub height: f64,
    pub prominence: f64,
    /// Smoothed mass of the mode's basin (bins up to the neighbouring
    /// valley minima).
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Valley {
    /// Indices into [`ModeSet::modes`].
    pub left_mode: usize,
    pub right_mode: usize,
    /// Score range of the bins strictly between the two modes.
    pub interval: [f64; 2],
    pub min_bin: usize,
    pub min_height: f64,
    /// `min(adjacent mode heights) - min_height`.
    pub depth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSet {
    pub modes: Vec<Mode>,
    pub valleys: Vec<Valley>,
}

/// Plateau-aware local maxima: `(start, end)` of each maximal run that is
/// higher than both neighbours. A run covering the whole chart is not a peak.
fn local_maxima(h: &[f64]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let last = h.len() - 1;
    let mut s = 0;
    while s <= last {
        let mut e = s;
        while e < last && h[e + 1] == h[s] {
            e += 1;
        }
        let left_ok = s == 0 || h[s - 1] < h[s];
        let right_ok = e == last || h[e + 1] < h[e];
        if left_ok && right_ok && !(s == 0 && e == last) {
            out.push((s, e));
        }
        s = e + 1;
    }
    out
}

/// Topographic prominence of the run `[s, e]`: height above the higher of
/// the two lowest points separating it from higher ground (or the chart
/// edge) on each side.
fn prominence(h: &[f64], s: usize, e: usize) -> f64 {
    let peak = h[s];
    let side_min = |iter: &mut dyn Iterator<Item = usize>| -> Option<f64> {
        let mut lowest: Option<f64> = None;
        for i in iter {
            if h[i] > peak {
                break;
            }
            lowest = Some(lowest.map_or(h[i], |m: f64| m.min(h[i])));
        }
        lowest
    };
    let left = side_min(&mut (0..s).rev());
    let right = side_min(&mut (e + 1..h.len()));
    let base = match (left, right) {
        (Some(l), Some(r)) => l.max(r),
        (Some(b), None) | (None, Some(b)) => b,
        (None, None) => peak,
    };
    peak - base
}

fn valley_between(
    heights: &[f64],
    edges: &[f64],
    modes: &[Mode],
    left_mode: usize,
    right_mode: usize,
) -> Valley {
    let (l, r) = (modes[left_mode].bin_index, modes[right_mode].bin_index);
    let gap = &heights[l + 1..r];
    let min_height = gap.iter().copied().fold(f64::INFINITY, f64::min);
    let lowest: Vec<usize> = (l + 1..r).filter(|&i| heights[i] == min_height).collect();
    let min_bin = lowest[(lowest.len() - 1) / 2];
    Valley {
        left_mode,
        right_mode,
        interval: [edges[l + 1], edges[r]],
        min_bin,
        min_height,
        depth: modes[left_mode].height.min(modes[right_mode].height) - min_height,
    }
}

/// Modes of the smoothed heights with prominence at least
/// `prominence_min * max(heights)`, and the valleys between neighbours.
pub fn detect_modes(smoothed: &SmoothedRdc, prominence_min: f64) -> ModeSet {
    let h = &smoothed.heights;
    let edges = smoothed.base.edges();
    let cutoff = prominence_min * h.iter().copied().fold(0.0, f64::max);

    let mut modes: Vec<Mode> = local_maxima(h)
        .into_iter()
        .filter_map(|(s, e)| {
            let p = prominence(h, s, e);
            (p >= cutoff).then(|| {
                let bin = s + (e - s) / 2;
                Mode {
                    bin_index: bin,
                    location: smoothed.base.bin_center(bin),
                    height: h[bin],
                    prominence: p,
                    mass: 0.0,
                }
            })
        })
        .collect();

    let valleys: Vec<Valley> = (1..modes.len())
        .map(|k| valley_between(h, edges, &modes, k - 1, k))
        .collect();

    let mut start = 0;
    for (k, mode) in modes.iter_mut().enumerate() {
        let end = valleys.get(k).map_or(h.len() - 1, |v| v.min_bin);
        mode.mass = h[start..=end].iter().sum();
        start = end + 1;
    }

    ModeSet { modes, valleys }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Pattern {
    HealthyBimodal,
    CentralUnimodal,
    ExtremeSpike,
    Noisy,
    Indeterminate,
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pattern::HealthyBimodal => "HEALTHY_BIMODAL",
            Pattern::CentralUnimodal => "CENTRAL_UNIMODAL",
            Pattern::ExtremeSpike => "EXTREME_SPIKE",
            Pattern::Noisy => "NOISY",
            Pattern::Indeterminate => "INDETERMINATE",
        })
    }
}

/// Region of low density between the two modes of a healthy chart. Any
/// point inside separates the classes; `lower` favours recall, `upper`
/// favours precision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdBand {
    pub lower: f64,
    pub upper: f64,
    pub recommended: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnosisConfig {
    pub window: usize,
    /// Fraction of the tallest smoothed height a mode must rise above its
    /// surroundings.
    pub prominence_min: f64,
    pub min_samples: u64,
    /// Raw single-bin share that counts as a spike.
    pub spike_share: f64,
    /// Smoothed mass a second mode needs to rule out a spike.
    pub second_mode_mass: f64,
    pub rough_threshold: f64,
    pub central_region: [f64; 2],
    /// Required valley depth as a fraction of the lower adjacent mode.
    pub valley_depth_floor: f64,
    pub band_epsilon: f64,
}

impl Default for DiagnosisConfig {
    fn default() -> Self {
        Self {
            window: 5,
            prominence_min: 0.10,
            min_samples: 100,
            spike_share: 0.25,
            second_mode_mass: 0.10,
            rough_threshold: 0.35,
            central_region: [0.2, 0.8],
            valley_depth_floor: 0.2,
            band_epsilon: 0.10,
        }
    }
}

/// Measurements behind a diagnosis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub n: u64,
    pub roughness: f64,
    pub modes: Vec<Mode>,
    pub valleys: Vec<Valley>,
    /// Largest raw single-bin share and its bin.
    pub spike_share: f64,
    pub spike_bin: usize,
    /// Modes used for the bimodality test (indices into `modes`), when at
    /// least two were found.
    pub selected_modes: Option<[usize; 2]>,
    /// Valley between the selected modes.
    pub selected_valley: Option<Valley>,
    /// Modes beyond the two selected ones.
    pub extra_modes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdcDiagnosis {
    pub pattern: Pattern,
    pub evidence: Evidence,
    pub threshold_band: Option<ThresholdBand>,
}

/// Band between the two modes of `modes` (which must hold exactly two).
pub fn recommend_threshold(
    smoothed: &SmoothedRdc,
    modes: &ModeSet,
    epsilon: f64,
) -> Result<ThresholdBand> {
    if modes.modes.len() != 2 {
        return Err(Error::precondition(format!(
            "threshold band needs exactly 2 modes, found {}",
            modes.modes.len()
        )));
    }
    let h = &smoothed.heights;
    let edges = smoothed.base.edges();
    let valley = valley_between(h, edges, &modes.modes, 0, 1);
    let (left, right) = (modes.modes[0].bin_index, modes.modes[1].bin_index);
    let ceiling = (1.0 + epsilon) * valley.min_height;

    let mut lo = valley.min_bin;
    while lo > left + 1 && h[lo - 1] <= ceiling {
        lo -= 1;
    }
    let mut hi = valley.min_bin;
    while hi + 1 < right && h[hi + 1] <= ceiling {
        hi += 1;
    }
    let lower = edges[lo];
    let upper = edges[hi + 1];
    Ok(ThresholdBand {
        lower,
        upper,
        recommended: 0.5 * (lower + upper),
    })
}

/// Classify the chart. Rules are tried in order: spike, noisy, bimodal,
/// central unimodal, otherwise indeterminate.
pub fn diagnose(rdc: &Rdc, config: &DiagnosisConfig) -> Result<RdcDiagnosis> {
    if rdc.n < config.min_samples {
        return Err(Error::precondition(format!(
            "need at least {} samples to diagnose, have {}",
            config.min_samples, rdc.n
        )));
    }
    let smoothed = smooth(rdc, config.window)?;
    let modes = detect_modes(&smoothed, config.prominence_min);

    let (spike_bin, spike_count) = rdc
        .counts
        .iter()
        .enumerate()
        .fold((0, 0), |best, (i, &c)| if c > best.1 { (i, c) } else { best });
    let spike_share = spike_count as f64 / rdc.n as f64;

    let mut evidence = Evidence {
        n: rdc.n,
        roughness: smoothed.roughness,
        modes: modes.modes.clone(),
        valleys: modes.valleys.clone(),
        spike_share,
        spike_bin,
        selected_modes: None,
        selected_valley: None,
        extra_modes: Vec::new(),
    };
    let verdict = |pattern, evidence, threshold_band| RdcDiagnosis {
        pattern,
        evidence,
        threshold_band,
    };

    // Spike: the mode whose basin holds the spike bin is the spike itself;
    // any other sizeable mode means a legitimate two-sided shape.
    if spike_share >= config.spike_share {
        let own = owning_mode(&modes, spike_bin);
        let rival = modes
            .modes
            .iter()
            .enumerate()
            .any(|(k, m)| Some(k) != own && m.mass >= config.second_mode_mass);
        if !rival {
            return Ok(verdict(Pattern::ExtremeSpike, evidence, None));
        }
    }

    if smoothed.roughness > config.rough_threshold {
        return Ok(verdict(Pattern::Noisy, evidence, None));
    }

    if modes.modes.len() >= 2 {
        let mut order: Vec<usize> = (0..modes.modes.len()).collect();
        order.sort_by(|&a, &b| {
            modes.modes[b]
                .mass
                .total_cmp(&modes.modes[a].mass)
                .then(a.cmp(&b))
        });
        let (a, b) = (order[0].min(order[1]), order[0].max(order[1]));
        let valley = valley_between(&smoothed.heights, rdc.edges(), &modes.modes, a, b);
        let lower_mode = modes.modes[a].height.min(modes.modes[b].height);
        evidence.selected_modes = Some([a, b]);
        evidence.extra_modes = order[2..].to_vec();
        evidence.extra_modes.sort_unstable();
        evidence.selected_valley = Some(valley.clone());

        if valley.depth >= config.valley_depth_floor * lower_mode {
            let pair = ModeSet {
                modes: vec![modes.modes[a].clone(), modes.modes[b].clone()],
                valleys: vec![Valley {
                    left_mode: 0,
                    right_mode: 1,
                    ..valley
                }],
            };
            let band = recommend_threshold(&smoothed, &pair, config.band_epsilon)?;
            return Ok(verdict(Pattern::HealthyBimodal, evidence, Some(band)));
        }
    }

    if let [only] = modes.modes.as_slice() {
        let [lo, hi] = config.central_region;
        if (lo..=hi).contains(&only.location) {
            return Ok(verdict(Pattern::CentralUnimodal, evidence, None));
        }
    }

    Ok(verdict(Pattern::Indeterminate, evidence, None))
}

fn owning_mode(modes: &ModeSet, bin: usize) -> Option<usize> {
    if modes.modes.is_empty() {
        return None;
    }
    let k = modes
        .valleys
        .iter()
        .position(|v| bin <= v.min_bin)
        .unwrap_or(modes.modes.len() - 1);
    Some(k)
}

/// One chart per class label, each built from that class's scores.
pub fn one_vs_rest(records: &[ScoreRecord], bin_count: usize) -> Result<BTreeMap<String, Rdc>> {
    let mut out: BTreeMap<String, Rdc> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        let class = r
            .class_label
            .as_ref()
            .ok_or_else(|| Error::input(format!("record {} has no class label", i + 1)))?;
        if !out.contains_key(class) {
            out.insert(class.clone(), Rdc::empty(bin_count)?);
        }
        out.get_mut(class).expect("inserted above").push(r.score)?;
    }
    if out.is_empty() {
        return Err(Error::precondition("no records to group by class"));
    }
    Ok(out)
}

/// Total variation distance between two normalized charts.
pub fn rdc_distance(a: &Rdc, b: &Rdc) -> Result<f64> {
    if !a.same_binning(b) {
        return Err(Error::precondition(format!(
            "incompatible binning: {} vs {} bins",
            a.bin_count(),
            b.bin_count()
        )));
    }
    if a.n == 0 || b.n == 0 {
        return Err(Error::precondition("distance to an empty RDC is undefined"));
    }
    let (fa, fb) = (a.frequencies(), b.frequencies());
    let l1: f64 = fa.iter().zip(&fb).map(|(x, y)| (x - y).abs()).sum();
    Ok((0.5 * l1).min(1.0))
}
