//! Windowed response-distribution monitoring and output overrides.
//!
//! Records are grouped by `model_id` and cut into tumbling windows of a
//! fixed record count. Each full window is diagnosed and compared with a
//! reference chart: either the one supplied in the config or the model's
//! first window.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::ScoreRecord;
use crate::rdc::{diagnose, rdc_distance, DiagnosisConfig, Pattern, Rdc, RdcDiagnosis};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MonitorConfig {
    pub window_size: usize,
    /// Fixed reference chart. Without one, each model is compared with its
    /// own first window.
    pub reference: Option<Rdc>,
    pub tv_threshold: f64,
    pub bins: usize,
    pub diagnosis: DiagnosisConfig,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            window_size: 1000,
            reference: None,
            tv_threshold: 0.15,
            bins: 100,
            diagnosis: DiagnosisConfig::default(),
        }
    }
}

impl MonitorConfig {
    pub fn validate(&self) -> Result<()> {
        if (self.window_size as u64) < self.diagnosis.min_samples {
            return Err(Error::precondition(format!(
                "window size {} is below the {} samples a diagnosis needs",
                self.window_size, self.diagnosis.min_samples
            )));
        }
        if !(0.0..=1.0).contains(&self.tv_threshold) {
            return Err(Error::precondition(format!(
                "tv threshold {} outside [0, 1]",
                self.tv_threshold
            )));
        }
        Rdc::empty(self.bins)?;
        if let Some(r) = &self.reference {
            if r.bin_count() != self.bins {
                return Err(Error::precondition(format!(
                    "reference has {} bins, monitor uses {}",
                    r.bin_count(),
                    self.bins
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AlertKind {
    PatternChange,
    Drift,
    Pathology,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlertDetail {
    Patterns { prior: Pattern, current: Pattern },
    Distance { distance: f64, threshold: f64 },
    Pathology { pattern: Pattern },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertEvent {
    pub model_id: String,
    pub window_index: usize,
    pub kind: AlertKind,
    pub detail: AlertDetail,
}

/// Alerts for one window against its reference, in kind order: at most one
/// of each.
fn alerts_between(
    model_id: &str,
    window_index: usize,
    current: (&Rdc, &RdcDiagnosis),
    reference: (&Rdc, &RdcDiagnosis),
    tv_threshold: f64,
) -> Result<Vec<AlertEvent>> {
    let alert = |kind, detail| AlertEvent {
        model_id: model_id.to_string(),
        window_index,
        kind,
        detail,
    };
    let mut out = Vec::new();
    let (prior, now) = (reference.1.pattern, current.1.pattern);
    if prior != now {
        out.push(alert(
            AlertKind::PatternChange,
            AlertDetail::Patterns { prior, current: now },
        ));
    }
    let distance = rdc_distance(current.0, reference.0)?;
    if distance > tv_threshold {
        out.push(alert(
            AlertKind::Drift,
            AlertDetail::Distance {
                distance,
                threshold: tv_threshold,
            },
        ));
    }
    if now != Pattern::HealthyBimodal {
        out.push(alert(AlertKind::Pathology, AlertDetail::Pathology { pattern: now }));
    }
    Ok(out)
}

/// Compare `current` with `reference`. DRIFT needs a distance strictly above
/// the threshold; PATTERN_CHANGE fires when the two diagnoses differ;
/// PATHOLOGY when the current chart is anything but healthy bimodal.
pub fn check_drift(
    window_index: usize,
    current: &Rdc,
    reference: &Rdc,
    config: &MonitorConfig,
) -> Result<Vec<AlertEvent>> {
    let cur = diagnose(current, &config.diagnosis)?;
    let refd = diagnose(reference, &config.diagnosis)?;
    alerts_between("", window_index, (current, &cur), (reference, &refd), config.tv_threshold)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowReport {
    pub model_id: String,
    pub window_index: usize,
    pub size: u64,
    /// Trailing window cut short by the end of the stream.
    pub partial: bool,
    pub rdc: Rdc,
    pub diagnosis: RdcDiagnosis,
    pub alerts: Vec<AlertEvent>,
}

#[derive(Debug, Clone)]
struct ModelState {
    current: Rdc,
    next_index: usize,
    reference: Option<(Rdc, RdcDiagnosis)>,
}

/// Incremental monitor: feed records one at a time, get a report whenever a
/// window closes.
#[derive(Debug, Clone)]
pub struct WindowMonitor {
    config: MonitorConfig,
    fixed_reference: Option<(Rdc, RdcDiagnosis)>,
    models: BTreeMap<String, ModelState>,
}

impl WindowMonitor {
    pub fn new(config: MonitorConfig) -> Result<Self> {
        config.validate()?;
        let fixed_reference = match &config.reference {
            Some(r) => Some((r.clone(), diagnose(r, &config.diagnosis)?)),
            None => None,
        };
        Ok(Self {
            config,
            fixed_reference,
            models: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &MonitorConfig {
        &self.config
    }

    pub fn push(&mut self, record: &ScoreRecord) -> Result<Option<WindowReport>> {
        let bins = self.config.bins;
        if !self.models.contains_key(&record.model_id) {
            self.models.insert(
                record.model_id.clone(),
                ModelState {
                    current: Rdc::empty(bins)?,
                    next_index: 0,
                    reference: None,
                },
            );
        }
        let state = self.models.get_mut(&record.model_id).expect("inserted above");
        state.current.push(record.score)?;
        if state.current.n() < self.config.window_size as u64 {
            return Ok(None);
        }
        let model_id = record.model_id.clone();
        self.close_window(&model_id, false).map(Some)
    }

    fn close_window(&mut self, model_id: &str, partial: bool) -> Result<WindowReport> {
        let state = self.models.get_mut(model_id).expect("model state exists");
        let rdc = std::mem::replace(&mut state.current, Rdc::empty(self.config.bins)?);
        let diagnosis = diagnose(&rdc, &self.config.diagnosis)?;
        let window_index = state.next_index;
        state.next_index += 1;
        if self.fixed_reference.is_none() && state.reference.is_none() {
            state.reference = Some((rdc.clone(), diagnosis.clone()));
        }
        let reference = self
            .fixed_reference
            .as_ref()
            .or(state.reference.as_ref())
            .expect("reference set above");
        let alerts = alerts_between(
            model_id,
            window_index,
            (&rdc, &diagnosis),
            (&reference.0, &reference.1),
            self.config.tv_threshold,
        )?;
        Ok(WindowReport {
            model_id: model_id.to_string(),
            window_index,
            size: rdc.n(),
            partial,
            rdc,
            diagnosis,
            alerts,
        })
    }

    /// Close the stream: emit each model's trailing window if it holds at
    /// least `min_samples` records, otherwise count it as dropped.
    pub fn finish(mut self) -> Result<(Vec<WindowReport>, BTreeMap<String, u64>)> {
        let mut reports = Vec::new();
        let mut dropped = BTreeMap::new();
        let ids: Vec<String> = self.models.keys().cloned().collect();
        for id in ids {
            let n = self.models[&id].current.n();
            if n == 0 {
                dropped.insert(id, 0);
            } else if n >= self.config.diagnosis.min_samples {
                reports.push(self.close_window(&id, true)?);
                dropped.insert(id, 0);
            } else {
                dropped.insert(id, n);
            }
        }
        Ok((reports, dropped))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonitorRun {
    /// Windows in the order they closed; trailing partial windows last.
    pub windows: Vec<WindowReport>,
    /// Records per model left over in a trailing window too small to diagnose.
    pub dropped: BTreeMap<String, u64>,
}

impl MonitorRun {
    pub fn alerts(&self) -> impl Iterator<Item = &AlertEvent> {
        self.windows.iter().flat_map(|w| w.alerts.iter())
    }
}

/// One pass of [`WindowMonitor`] over a finished stream.
pub fn windowed_rdcs<'a>(
    records: impl IntoIterator<Item = &'a ScoreRecord>,
    config: &MonitorConfig,
) -> Result<MonitorRun> {
    let mut monitor = WindowMonitor::new(config.clone())?;
    let mut windows = Vec::new();
    for r in records {
        if let Some(w) = monitor.push(r)? {
            windows.push(w);
        }
    }
    let (tail, dropped) = monitor.finish()?;
    windows.extend(tail);
    Ok(MonitorRun { windows, dropped })
}

/// Forces the score of matching records. A rule with both ids set needs
/// both to match.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverrideRule {
    #[serde(default)]
    pub model_id: Option<String>,
    #[serde(default)]
    pub entity_id: Option<String>,
    pub forced_score: f64,
}

impl OverrideRule {
    pub fn validate(&self) -> Result<()> {
        if self.model_id.is_none() && self.entity_id.is_none() {
            return Err(Error::input("override rule must match on model_id or entity_id"));
        }
        if !(0.0..=1.0).contains(&self.forced_score) {
            return Err(Error::input(format!(
                "forced_score {} outside [0, 1]",
                self.forced_score
            )));
        }
        Ok(())
    }

    pub fn matches(&self, r: &ScoreRecord) -> bool {
        self.model_id.as_ref().is_none_or(|m| *m == r.model_id)
            && self
                .entity_id
                .as_ref()
                .is_none_or(|e| r.entity_id.as_ref() == Some(e))
    }
}

/// Ordered rule list; the first matching rule wins.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    rules: Vec<OverrideRule>,
    applied: u64,
}

impl Overrides {
    pub fn new(rules: Vec<OverrideRule>) -> Result<Self> {
        for r in &rules {
            r.validate()?;
        }
        Ok(Self { rules, applied: 0 })
    }

    pub fn apply(&mut self, record: &mut ScoreRecord) -> bool {
        match self.rules.iter().find(|rule| rule.matches(record)) {
            Some(rule) => {
                record.score = rule.forced_score;
                self.applied += 1;
                true
            }
            None => false,
        }
    }

    pub fn applied(&self) -> u64 {
        self.applied
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }
}

/// Apply `rules` to every record in place; returns the number overridden.
pub fn apply_overrides(records: &mut [ScoreRecord], rules: &[OverrideRule]) -> Result<u64> {
    let mut o = Overrides::new(rules.to_vec())?;
    for r in records.iter_mut() {
        o.apply(r);
    }
    Ok(o.applied())
}

/// JSON array of rules.
pub fn read_override_rules(path: &Path) -> Result<Vec<OverrideRule>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let rules: Vec<OverrideRule> = serde_json::from_str(&text)
        .map_err(|e| Error::input(format!("{}: {e}", path.display())))?;
    for r in &rules {
        r.validate()?;
    }
    Ok(rules)
}
