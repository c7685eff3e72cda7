//! Text summary of a session directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::av::Dimension;
use crate::eet::parse_av_csv;
use crate::gameplay::Outcome;
use crate::glados::EventRecord;
use crate::worldgen::{PlacementAction, PlacementEntry};

#[derive(Debug, Error, PartialEq)]
pub enum ReportError {
    #[error("{file}: {reason}")]
    Read { file: String, reason: String },
    #[error("{file}:{line}: {reason}")]
    Malformed { file: String, line: usize, reason: String },
}

fn malformed(file: &str, line: usize, reason: impl Into<String>) -> ReportError {
    ReportError::Malformed { file: file.into(), line, reason: reason.into() }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionSummary {
    pub outcome: Outcome,
    pub end_time: f64,
    pub samples: usize,
    /// (mean, population sd) per dimension, Arousal first.
    pub av: [(f64, f64); 2],
    pub events: BTreeMap<String, usize>,
    pub directives: BTreeMap<String, usize>,
    pub spawns: usize,
    pub despawns: usize,
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, var.sqrt())
}

fn parse_outcome(text: &str) -> Result<(Outcome, f64), ReportError> {
    let mut lines = text.lines();
    let outcome = lines
        .next()
        .ok_or_else(|| malformed("outcome.txt", 1, "empty"))?
        .parse::<Outcome>()
        .map_err(|e| malformed("outcome.txt", 1, e))?;
    let end = lines
        .next()
        .and_then(|l| l.strip_prefix("end_time="))
        .ok_or_else(|| malformed("outcome.txt", 2, "expected end_time=<seconds>"))?;
    let end: f64 = end.trim().parse().map_err(|_| malformed("outcome.txt", 2, format!("bad end_time `{end}`")))?;
    Ok((outcome, end))
}

/// Builds the summary from file contents. Empty lines are skipped; anything
/// else that fails to parse is an error.
pub fn summarize(
    events_tsv: &str,
    av_csv: &str,
    directives_tsv: &str,
    outcome_txt: &str,
    placements_csv: &str,
) -> Result<SessionSummary, ReportError> {
    let (outcome, end_time) = parse_outcome(outcome_txt)?;

    let mut events = BTreeMap::new();
    for (i, line) in events_tsv.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r = EventRecord::parse_line(line).map_err(|e| malformed("events.tsv", i + 1, e))?;
        *events.entry(r.kind.to_string()).or_insert(0) += 1;
    }

    let trace = parse_av_csv(av_csv).map_err(|e| malformed("av.csv", 0, e.to_string()))?;
    let av = Dimension::BOTH.map(|d| mean_sd(&trace.values(d)));

    let mut directives = BTreeMap::new();
    for (i, line) in directives_tsv.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 || f[0].parse::<f64>().is_err() || f[1].is_empty() {
            return Err(malformed("directives.tsv", i + 1, "expected `timestamp<TAB>name<TAB>params`"));
        }
        *directives.entry(f[1].to_string()).or_insert(0) += 1;
    }

    let (mut spawns, mut despawns) = (0, 0);
    for (i, line) in placements_csv.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let p = PlacementEntry::parse_line(line).map_err(|e| malformed("placements.csv", i + 1, e))?;
        match p.action {
            PlacementAction::Spawn => spawns += 1,
            PlacementAction::Despawn => despawns += 1,
        }
    }

    Ok(SessionSummary { outcome, end_time, samples: trace.len(), av, events, directives, spawns, despawns })
}

pub fn summarize_dir(dir: &Path) -> Result<SessionSummary, ReportError> {
    let read = |name: &str| {
        fs::read_to_string(dir.join(name)).map_err(|e| ReportError::Read { file: name.into(), reason: e.to_string() })
    };
    summarize(
        &read("events.tsv")?,
        &read("av.csv")?,
        &read("directives.tsv")?,
        &read("outcome.txt")?,
        &read("placements.csv")?,
    )
}

impl SessionSummary {
    pub fn total_events(&self) -> usize {
        self.events.values().sum()
    }

    pub fn total_directives(&self) -> usize {
        self.directives.values().sum()
    }

    /// Tab-separated `key value` lines, stable across runs.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "outcome\t{}", self.outcome);
        let _ = writeln!(s, "end_time\t{}", crate::glados::format_ts(self.end_time));
        let _ = writeln!(s, "samples\t{}", self.samples);
        for (d, (m, sd)) in Dimension::BOTH.iter().zip(self.av) {
            let _ = writeln!(s, "{}_mean\t{:.4}", d.name().to_lowercase(), m);
            let _ = writeln!(s, "{}_sd\t{:.4}", d.name().to_lowercase(), sd);
        }
        let _ = writeln!(s, "blocks_spawned\t{}", self.spawns);
        let _ = writeln!(s, "blocks_despawned\t{}", self.despawns);
        let _ = writeln!(s, "events\t{}", self.total_events());
        for (k, n) in &self.events {
            let _ = writeln!(s, "event\t{k}\t{n}");
        }
        let _ = writeln!(s, "directives\t{}", self.total_directives());
        for (k, n) in &self.directives {
            let _ = writeln!(s, "directive\t{k}\t{n}");
        }
        s
    }
}
