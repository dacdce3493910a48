//! `scorescope watch`: tail a score log through a [`WindowMonitor`].

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::time::Duration;

use serde_json::json;

use super::{load_overrides, Context, Outcome, Report, WatchArgs};
use crate::error::{Error, Result};
use crate::ingest::{parse_score_line, read_score_log, LineOutcome, LineTally, ScoreLogOptions};
use crate::monitor::{MonitorConfig, WindowMonitor, WindowReport};
use crate::rdc::build_rdc;

fn summary(w: &WindowReport) -> serde_json::Value {
    json!({
        "model_id": w.model_id,
        "window_index": w.window_index,
        "size": w.size,
        "partial": w.partial,
        "pattern": w.diagnosis.pattern,
        "threshold_band": w.diagnosis.threshold_band,
        "alerts": w.alerts.len(),
    })
}

struct Sink<'a, 'b> {
    out: &'a mut (dyn Write + 'b),
    windows: Vec<serde_json::Value>,
    alerts: usize,
}

impl Sink<'_, '_> {
    fn emit(&mut self, w: &WindowReport) -> Result<()> {
        for a in &w.alerts {
            let line = serde_json::to_string(a).expect("alert serializes");
            writeln!(self.out, "{line}").map_err(|e| Error::input(format!("stdout: {e}")))?;
        }
        self.out.flush().map_err(|e| Error::input(format!("stdout: {e}")))?;
        self.alerts += w.alerts.len();
        self.windows.push(summary(w));
        Ok(())
    }
}

/// Alerts go to stdout as one JSON object per line as soon as their window
/// closes; the report follows once the input is exhausted.
pub(crate) fn cmd_watch(a: &WatchArgs, ctx: &mut Context) -> Result<Outcome> {
    let mut report = Report::new("watch");
    let settings = &ctx.config.monitor;
    let mut config = MonitorConfig {
        window_size: a.window_size.unwrap_or(settings.window_size),
        tv_threshold: a.tv_threshold.unwrap_or(settings.tv_threshold),
        bins: a.bins.unwrap_or(ctx.config.bins),
        diagnosis: ctx.config.diagnosis.clone(),
        reference: None,
    };
    if let Some(path) = &a.reference {
        report.add_input(path)?;
        let log = read_score_log(path, ScoreLogOptions::default())?;
        let scores: Vec<f64> = log.records.iter().map(|r| r.score).collect();
        config.reference = Some(build_rdc(&scores, config.bins)?);
    }
    let mut overrides = load_overrides(a.overrides.as_deref(), &mut report)?;
    let mut monitor = WindowMonitor::new(config.clone())?;

    let file = File::open(&a.input).map_err(|e| Error::io(&a.input, e))?;
    let mut reader = BufReader::new(file);
    let mut sink = Sink {
        out: &mut *ctx.out,
        windows: Vec::new(),
        alerts: 0,
    };
    let mut tally = LineTally::default();
    let mut pending = String::new();
    let mut line_no = 0;
    let poll = Duration::from_millis(a.poll_ms.max(1));
    let mut idle = Duration::ZERO;

    let mut process = |line: &str, line_no: usize, sink: &mut Sink| -> Result<()> {
        let line = line.trim();
        if line.is_empty() {
            return Ok(());
        }
        tally.lines += 1;
        match parse_score_line(line, line_no, false)? {
            LineOutcome::Malformed => tally.skipped += 1,
            LineOutcome::Record(mut r) => {
                overrides.apply(&mut r);
                if let Some(w) = monitor.push(&r)? {
                    sink.emit(&w)?;
                }
            }
        }
        Ok(())
    };

    loop {
        let n = reader
            .read_line(&mut pending)
            .map_err(|e| Error::io(&a.input, e))?;
        if n == 0 {
            if !a.follow || a.idle_exit_ms.is_some_and(|ms| idle >= Duration::from_millis(ms)) {
                break;
            }
            std::thread::sleep(poll);
            idle += poll;
            continue;
        }
        idle = Duration::ZERO;
        if a.follow && !pending.ends_with('\n') {
            // the writer has not finished this line yet
            continue;
        }
        line_no += 1;
        process(&pending, line_no, &mut sink)?;
        pending.clear();
    }
    if !pending.is_empty() {
        line_no += 1;
        process(&pending, line_no, &mut sink)?;
    }
    drop(process);
    tally.check()?;
    let (tail, dropped) = monitor.finish()?;
    for w in &tail {
        sink.emit(w)?;
    }

    report.add_input(&a.input)?;
    report.results = json!({
        "lines": tally.lines,
        "skipped_lines": tally.skipped,
        "overrides_applied": overrides.applied(),
        "windows": sink.windows,
        "dropped": dropped,
        "alert_count": sink.alerts,
    });
    report.decisions = json!({
        "window_size": config.window_size,
        "tv_threshold": config.tv_threshold,
        "bins": config.bins,
        "diagnosis": config.diagnosis,
        "reference": a.reference.as_ref().map_or("first window of each model".to_string(), |p| p.display().to_string()),
        "strict_fails_on": "any alert",
    });
    Ok(Outcome {
        report: Some(report),
        finding: sink.alerts > 0,
    })
}
