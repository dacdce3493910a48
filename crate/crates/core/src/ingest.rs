//! Readers for the three input formats: score logs (one JSON object per
//! line), paired-prediction CSVs and numeric tabular CSVs.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One serving-time prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub model_id: String,
    /// Epoch milliseconds.
    pub ts: u64,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity_id: Option<String>,
    #[serde(rename = "class", default, skip_serializing_if = "Option::is_none")]
    pub class_label: Option<String>,
    #[serde(
        rename = "label",
        default,
        skip_serializing_if = "Option::is_none",
        with = "label_as_int"
    )]
    pub true_label: Option<bool>,
}

impl ScoreRecord {
    pub fn new(model_id: impl Into<String>, ts: u64, score: f64) -> Self {
        Self {
            model_id: model_id.into(),
            ts,
            score,
            entity_id: None,
            class_label: None,
            true_label: None,
        }
    }
}

mod label_as_int {
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<bool>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(b) => s.serialize_u8(u8::from(*b)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<bool>, D::Error> {
        use serde::de::Error;
        use serde::Deserialize;
        let v = Option::<serde_json::Value>::deserialize(d)?;
        match v {
            None | Some(serde_json::Value::Null) => Ok(None),
            Some(serde_json::Value::Bool(b)) => Ok(Some(b)),
            Some(serde_json::Value::Number(n)) => match n.as_u64() {
                Some(0) => Ok(Some(false)),
                Some(1) => Ok(Some(true)),
                _ => Err(D::Error::custom("label must be 0 or 1")),
            },
            Some(_) => Err(D::Error::custom("label must be 0 or 1")),
        }
    }
}

/// Wire shape before semantic validation. Anything that fails to deserialize
/// into this is a malformed line; anything that does but breaks a range
/// invariant is a hard error.
#[derive(Deserialize)]
struct RawRecord {
    model_id: String,
    ts: i64,
    score: f64,
    #[serde(default)]
    entity_id: Option<String>,
    #[serde(rename = "class", default)]
    class_label: Option<String>,
    #[serde(rename = "label", default)]
    label: Option<serde_json::Value>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScoreLogOptions {
    /// Min-max rescale all scores of the file into [0, 1] instead of
    /// rejecting out-of-range values.
    pub rescale: bool,
}

/// Result of reading a whole score log.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreLog {
    pub records: Vec<ScoreRecord>,
    /// Non-blank lines that could not be parsed.
    pub skipped: usize,
    /// Non-blank lines seen.
    pub lines: usize,
}

/// Outcome of parsing a single non-blank line.
#[derive(Debug)]
pub enum LineOutcome {
    Record(ScoreRecord),
    Malformed,
}

/// Parse one line of a score log. `line_no` is 1-based and only used for
/// error messages. Out-of-range scores are rejected unless
/// `allow_out_of_range` is set (the caller then rescales).
pub fn parse_score_line(line: &str, line_no: usize, allow_out_of_range: bool) -> Result<LineOutcome> {
    let raw: RawRecord = match serde_json::from_str(line) {
        Ok(r) => r,
        Err(_) => return Ok(LineOutcome::Malformed),
    };
    let bad = |message: String| Error::Line {
        line: line_no,
        message,
    };
    if raw.ts < 0 {
        return Err(bad(format!("negative timestamp {}", raw.ts)));
    }
    if !raw.score.is_finite() {
        return Err(bad("score is not finite".into()));
    }
    if !allow_out_of_range && !(0.0..=1.0).contains(&raw.score) {
        return Err(bad(format!(
            "score {} outside [0, 1] (pass --rescale to min-max rescale)",
            raw.score
        )));
    }
    let true_label = match raw.label {
        None | Some(serde_json::Value::Null) => None,
        Some(serde_json::Value::Bool(b)) => Some(b),
        Some(serde_json::Value::Number(n)) if n.as_u64() == Some(0) => Some(false),
        Some(serde_json::Value::Number(n)) if n.as_u64() == Some(1) => Some(true),
        Some(other) => return Err(bad(format!("label must be 0 or 1, got {other}"))),
    };
    Ok(LineOutcome::Record(ScoreRecord {
        model_id: raw.model_id,
        ts: raw.ts as u64,
        score: raw.score,
        entity_id: raw.entity_id,
        class_label: raw.class_label,
        true_label,
    }))
}

/// Tracks the malformed-line budget. A single bad line is always tolerated;
/// beyond that, more than 10% malformed lines aborts the read.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LineTally {
    pub lines: usize,
    pub skipped: usize,
}

impl LineTally {
    pub fn check(&self) -> Result<()> {
        if self.skipped > 1 && self.skipped * 10 > self.lines {
            return Err(Error::TooManyMalformed {
                malformed: self.skipped,
                total: self.lines,
            });
        }
        Ok(())
    }
}

/// Parse a score log from any buffered reader.
pub fn parse_score_log<R: BufRead>(reader: R, options: ScoreLogOptions) -> Result<ScoreLog> {
    let mut records = Vec::new();
    let mut tally = LineTally::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::input(format!("line {}: {e}", i + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        tally.lines += 1;
        match parse_score_line(&line, i + 1, options.rescale)? {
            LineOutcome::Record(r) => records.push(r),
            LineOutcome::Malformed => tally.skipped += 1,
        }
    }
    tally.check()?;
    if options.rescale {
        rescale_scores(&mut records)?;
    }
    Ok(ScoreLog {
        records,
        skipped: tally.skipped,
        lines: tally.lines,
    })
}

pub fn read_score_log(path: impl AsRef<Path>, options: ScoreLogOptions) -> Result<ScoreLog> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_score_log(BufReader::new(file), options)
}

fn rescale_scores(records: &mut [ScoreRecord]) -> Result<()> {
    if records.is_empty() {
        return Ok(());
    }
    let (lo, hi) = records.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
        (lo.min(r.score), hi.max(r.score))
    });
    if hi <= lo {
        return Err(Error::precondition(format!(
            "cannot rescale: every score equals {lo}"
        )));
    }
    let span = hi - lo;
    for r in records {
        r.score = ((r.score - lo) / span).clamp(0.0, 1.0);
    }
    Ok(())
}

/// Write records in the score-log format, one JSON object per line.
pub fn write_score_log<W: Write>(records: &[ScoreRecord], mut out: W) -> Result<()> {
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::input(e.to_string()))?;
        writeln!(out, "{line}").map_err(|e| Error::input(e.to_string()))?;
    }
    Ok(())
}

/// One entity scored by two models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedPrediction {
    pub entity_id: String,
    pub pred_a: f64,
    pub pred_b: f64,
    pub true_label: Option<bool>,
}

fn csv_reader<R: std::io::Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader)
}

fn column(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h == name)
}

fn parse_unit(cell: Option<&str>, what: &str, row: usize) -> Result<f64> {
    let cell = cell
        .filter(|c| !c.is_empty())
        .ok_or_else(|| Error::input(format!("row {row}: missing {what}")))?;
    let v: f64 = cell
        .parse()
        .map_err(|_| Error::input(format!("row {row}: {what} {cell:?} is not numeric")))?;
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::input(format!("row {row}: {what} {v} outside [0, 1]")));
    }
    Ok(v)
}

fn parse_binary(cell: &str) -> Option<bool> {
    match cell {
        "0" | "0.0" | "false" => Some(false),
        "1" | "1.0" | "true" => Some(true),
        _ => None,
    }
}

/// Parse paired predictions: header `entity_id,pred_a,pred_b[,label]`.
pub fn parse_paired<R: std::io::Read>(reader: R) -> Result<Vec<PairedPrediction>> {
    let mut rdr = csv_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::input(e.to_string()))?
        .clone();
    let idx = |name: &str| {
        column(&headers, name).ok_or_else(|| Error::input(format!("missing column {name:?}")))
    };
    let (ie, ia, ib) = (idx("entity_id")?, idx("pred_a")?, idx("pred_b")?);
    let il = column(&headers, "label");

    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::input(e.to_string()))?;
        let entity_id = rec
            .get(ie)
            .filter(|c| !c.is_empty())
            .ok_or_else(|| Error::input(format!("row {row}: missing entity_id")))?
            .to_string();
        let pred_a = parse_unit(rec.get(ia), "pred_a", row)?;
        let pred_b = parse_unit(rec.get(ib), "pred_b", row)?;
        let true_label = match il.and_then(|j| rec.get(j)).filter(|c| !c.is_empty()) {
            None => None,
            Some(c) => Some(
                parse_binary(c)
                    .ok_or_else(|| Error::input(format!("row {row}: label {c:?} is not 0/1")))?,
            ),
        };
        out.push(PairedPrediction {
            entity_id,
            pred_a,
            pred_b,
            true_label,
        });
    }
    Ok(out)
}

pub fn read_paired(path: impl AsRef<Path>) -> Result<Vec<PairedPrediction>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_paired(file)
}

/// A numeric CSV with possibly-missing cells, before a target is chosen.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan")
}

pub fn parse_table<R: std::io::Read>(reader: R) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let columns: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::input(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::input(format!("row {row}: {e}")))?;
        let mut values = Vec::with_capacity(columns.len());
        for (j, cell) in rec.iter().enumerate() {
            if is_missing(cell) {
                values.push(None);
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| {
                Error::input(format!(
                    "row {row}, column {:?}: {cell:?} is not numeric",
                    columns[j]
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::input(format!(
                    "row {row}, column {:?}: non-finite value",
                    columns[j]
                )));
            }
            values.push(Some(v));
        }
        rows.push(values);
    }
    Ok(RawTable { columns, rows })
}

pub fn read_table(path: impl AsRef<Path>) -> Result<RawTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_table(file)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TabularOptions {
    /// Replace missing feature cells by their column mean.
    pub impute: bool,
    /// Columns that are neither features nor the target.
    pub exclude: Vec<String>,
}

/// Numeric features plus a binary target.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    pub feature_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub target: Vec<u8>,
}

impl TabularDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn arity(&self) -> usize {
        self.feature_names.len()
    }

    /// Keep only the rows where `keep` is true.
    pub fn filter_rows(&self, keep: &[bool]) -> TabularDataset {
        let (rows, target) = self
            .rows
            .iter()
            .zip(&self.target)
            .zip(keep)
            .filter(|(_, k)| **k)
            .map(|((r, t), _)| (r.clone(), *t))
            .unzip();
        TabularDataset {
            feature_names: self.feature_names.clone(),
            rows,
            target,
        }
    }

    pub fn from_table(table: &RawTable, target: &str, options: &TabularOptions) -> Result<Self> {
        let ti = column_index(&table.columns, target)?;
        for name in &options.exclude {
            column_index(&table.columns, name)?;
        }
        let features: Vec<usize> = (0..table.columns.len())
            .filter(|&j| j != ti && !options.exclude.contains(&table.columns[j]))
            .collect();

        let mut target_values = Vec::with_capacity(table.rows.len());
        for (i, row) in table.rows.iter().enumerate() {
            let v = row[ti].ok_or_else(|| {
                Error::input(format!("row {}: target {target:?} is missing", i + 2))
            })?;
            if v == 0.0 {
                target_values.push(0);
            } else if v == 1.0 {
                target_values.push(1);
            } else {
                return Err(Error::input(format!(
                    "row {}: target {target:?} = {v} is not binary",
                    i + 2
                )));
            }
        }

        let mut means = vec![0.0; features.len()];
        if options.impute {
            for (k, &j) in features.iter().enumerate() {
                let present: Vec<f64> = table.rows.iter().filter_map(|r| r[j]).collect();
                if present.is_empty() {
                    return Err(Error::input(format!(
                        "column {:?} has no values to impute from",
                        table.columns[j]
                    )));
                }
                means[k] = present.iter().sum::<f64>() / present.len() as f64;
            }
        }

        let mut rows = Vec::with_capacity(table.rows.len());
        for (i, row) in table.rows.iter().enumerate() {
            let mut out = Vec::with_capacity(features.len());
            for (k, &j) in features.iter().enumerate() {
                match row[j] {
                    Some(v) => out.push(v),
                    None if options.impute => out.push(means[k]),
                    None => {
                        return Err(Error::input(format!(
                            "row {}: missing value in column {:?} (pass --impute for mean imputation)",
                            i + 2,
                            table.columns[j]
                        )))
                    }
                }
            }
            rows.push(out);
        }

        Ok(TabularDataset {
            feature_names: features.iter().map(|&j| table.columns[j].clone()).collect(),
            rows,
            target: target_values,
        })
    }
}

fn column_index(columns: &[String], name: &str) -> Result<usize> {
    columns
        .iter()
        .position(|c| c == name)
        .ok_or_else(|| Error::input(format!("no column named {name:?}")))
}

pub fn read_tabular(
    path: impl AsRef<Path>,
    target_column: &str,
    options: &TabularOptions,
) -> Result<TabularDataset> {
    TabularDataset::from_table(&read_table(path)?, target_column, options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn log(text: &str) -> Result<ScoreLog> {
        parse_score_log(text.as_bytes(), ScoreLogOptions::default())
    }

    #[test]
    fn single_line() {
        let parsed = log(r#"{"model_id":"m1","ts":0,"score":0.7}"#).unwrap();
        assert_eq!(parsed.records, vec![ScoreRecord::new("m1", 0, 0.7)]);
        assert_eq!(parsed.skipped, 0);
    }

    #[test]
    fn out_of_range_names_line() {
        let text = "{\"model_id\":\"m\",\"ts\":1,\"score\":0.2}\n{\"model_id\":\"m\",\"ts\":2,\"score\":1.3}\n";
        match log(text) {
            Err(Error::Line { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("1.3"));
            }
            other => panic!("expected line error, got {other:?}"),
        }
    }

    #[test]
    fn one_malformed_line_is_skipped() {
        let text = "{\"model_id\":\"m\",\"ts\":1,\"score\":0.2}\nnot json\n{\"model_id\":\"m\",\"ts\":2,\"score\":0.4}\n";
        let parsed = log(text).unwrap();
        assert_eq!(parsed.records.len(), 2);
        assert_eq!(parsed.skipped, 1);
        assert_eq!(parsed.lines, 3);
    }

    #[test]
    fn too_many_malformed_aborts() {
        let mut text = String::new();
        for i in 0..18 {
            text.push_str(&format!("{{\"model_id\":\"m\",\"ts\":{i},\"score\":0.5}}\n"));
        }
        text.push_str("{\"ts\":1}\n{\"model_id\":3}\n{broken\n");
        assert!(matches!(log(&text), Err(Error::TooManyMalformed { malformed: 3, total: 21 })));
        // 2 of 20 is exactly 10%: tolerated
        let trimmed: String = text.lines().take(20).map(|l| format!("{l}\n")).collect();
        assert_eq!(log(&trimmed).unwrap().skipped, 2);
    }

    #[test]
    fn optional_fields_and_labels() {
        let text = r#"{"model_id":"m","ts":5,"score":0.1,"entity_id":"e","class":"c","label":1}"#;
        let r = &log(text).unwrap().records[0];
        assert_eq!(r.entity_id.as_deref(), Some("e"));
        assert_eq!(r.class_label.as_deref(), Some("c"));
        assert_eq!(r.true_label, Some(true));
        assert!(log(r#"{"model_id":"m","ts":5,"score":0.1,"label":2}"#).is_err());
        assert!(log(r#"{"model_id":"m","ts":-5,"score":0.1}"#).is_err());
    }

    #[test]
    fn rescale_maps_to_unit_interval() {
        let text = "{\"model_id\":\"m\",\"ts\":1,\"score\":-2}\n{\"model_id\":\"m\",\"ts\":2,\"score\":2}\n{\"model_id\":\"m\",\"ts\":3,\"score\":0}\n";
        let parsed = parse_score_log(text.as_bytes(), ScoreLogOptions { rescale: true }).unwrap();
        let scores: Vec<f64> = parsed.records.iter().map(|r| r.score).collect();
        assert_eq!(scores, vec![0.0, 1.0, 0.5]);
    }

    #[test]
    fn paired_rows() {
        let p = parse_paired("entity_id,pred_a,pred_b,label\ne1,0.9,0.1,1\n".as_bytes()).unwrap();
        assert_eq!(
            p,
            vec![PairedPrediction {
                entity_id: "e1".into(),
                pred_a: 0.9,
                pred_b: 0.1,
                true_label: Some(true)
            }]
        );
        assert!(parse_paired("entity_id,pred_a,pred_b\n".as_bytes()).unwrap().is_empty());
        assert!(parse_paired("entity_id,pred_a,pred_b\ne1,0.3\n".as_bytes()).is_err());
        assert!(parse_paired("entity_id,pred_a\ne1,0.3\n".as_bytes()).is_err());
        assert!(parse_paired("entity_id,pred_a,pred_b\ne1,x,0.2\n".as_bytes()).is_err());
    }

    #[test]
    fn tabular_basic() {
        let csv = "a,b,y\n1,2,0\n3,4,1\n5,6,0\n7,8,1\n9,10,1\n";
        let t = parse_table(csv.as_bytes()).unwrap();
        let d = TabularDataset::from_table(&t, "y", &TabularOptions::default()).unwrap();
        assert_eq!(d.len(), 5);
        assert_eq!(d.arity(), 2);
        assert_eq!(d.feature_names, vec!["a", "b"]);
        assert_eq!(d.target, vec![0, 1, 0, 1, 1]);
    }

    #[test]
    fn tabular_rejects_nonbinary_target() {
        let t = parse_table("a,y\n1,0\n2,2\n".as_bytes()).unwrap();
        assert!(TabularDataset::from_table(&t, "y", &TabularOptions::default()).is_err());
    }

    #[test]
    fn tabular_missing_and_impute() {
        let t = parse_table("a,b,y\n1,,0\n3,4,1\n5,8,0\n".as_bytes()).unwrap();
        assert!(TabularDataset::from_table(&t, "y", &TabularOptions::default()).is_err());
        let opts = TabularOptions {
            impute: true,
            ..Default::default()
        };
        let d = TabularDataset::from_table(&t, "y", &opts).unwrap();
        assert_eq!(d.rows[0], vec![1.0, 6.0]);
    }

    #[test]
    fn tabular_exclude_columns() {
        let t = parse_table("a,y,avail\n1,,0\n3,1,1\n".as_bytes()).unwrap();
        let opts = TabularOptions {
            impute: false,
            exclude: vec!["y".into()],
        };
        let d = TabularDataset::from_table(&t, "avail", &opts).unwrap();
        assert_eq!(d.feature_names, vec!["a"]);
        assert_eq!(d.target, vec![0, 1]);
    }

    fn record_strategy() -> impl Strategy<Value = ScoreRecord> {
        (
            "[a-z0-9]{1,6}",
            0u64..u64::MAX / 2,
            0.0f64..=1.0,
            proptest::option::of("[a-z]{1,4}"),
            proptest::option::of("[a-c]"),
            proptest::option::of(any::<bool>()),
        )
            .prop_map(|(m, ts, score, entity_id, class_label, true_label)| ScoreRecord {
                model_id: m,
                ts,
                score,
                entity_id,
                class_label,
                true_label,
            })
    }

    proptest! {
        #[test]
        fn score_log_round_trip(records in proptest::collection::vec(record_strategy(), 0..40)) {
            let mut buf = Vec::new();
            write_score_log(&records, &mut buf).unwrap();
            let back = parse_score_log(buf.as_slice(), ScoreLogOptions::default()).unwrap();
            prop_assert_eq!(back.records, records);
            prop_assert_eq!(back.skipped, 0);
        }
    }
}
