//! Execution layer: applies directives to live game parameters and keeps the
//! timestamped event log.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clears::{Breathing, Category, Directive, ObjectiveTarget};
use crate::gameplay::{EnvEventKind, Modifiers};

pub const FAINT_DURATION: f64 = 2.5;
/// Chance that the creature is waiting next to the avatar after a blackout.
pub const POST_FAINT_CREATURE_PROBABILITY: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum GladosError {
    #[error("event at t={got} logged after t={last}")]
    OutOfOrder { last: f64, got: f64 },
    #[error("invalid timestamp {0}")]
    BadTimestamp(f64),
    #[error("field contains a reserved character: {0:?}")]
    ReservedChar(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventKind {
    EnvEvent(EnvEventKind),
    CreatureSpawn,
    CreatureChaseStart,
    CreatureRetreat,
    FolderPickup,
    Faint,
    SanityLevelUp,
    BlockSpawn,
    Win,
    Lose,
    /// Any kind written by another tool; kept verbatim.
    Other(String),
}

impl EventKind {
    const PLAIN: [(&'static str, EventKind); 9] = [
        ("CreatureSpawn", EventKind::CreatureSpawn),
        ("CreatureChaseStart", EventKind::CreatureChaseStart),
        ("CreatureRetreat", EventKind::CreatureRetreat),
        ("FolderPickup", EventKind::FolderPickup),
        ("Faint", EventKind::Faint),
        ("SanityLevelUp", EventKind::SanityLevelUp),
        ("BlockSpawn", EventKind::BlockSpawn),
        ("Win", EventKind::Win),
        ("Lose", EventKind::Lose),
    ];
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventKind::EnvEvent(k) => write!(f, "EnvEvent:{k}"),
            EventKind::Other(s) => f.write_str(s),
            k => f.write_str(EventKind::PLAIN.iter().find(|(_, p)| p == k).map(|(n, _)| *n).unwrap_or("?")),
        }
    }
}

impl FromStr for EventKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s.is_empty() {
            return Err("empty event kind".into());
        }
        if s.contains(['\t', '\n', '\r']) {
            return Err("event kind contains a control character".into());
        }
        if let Some(sub) = s.strip_prefix("EnvEvent:") {
            if let Ok(k) = sub.parse() {
                return Ok(EventKind::EnvEvent(k));
            }
        }
        Ok(EventKind::PLAIN
            .iter()
            .find(|(n, _)| *n == s)
            .map(|(_, k)| k.clone())
            .unwrap_or_else(|| EventKind::Other(s.to_string())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub timestamp: f64,
    pub kind: EventKind,
    pub params: Vec<(String, String)>,
    pub comment: Option<String>,
}

/// Snap to the millisecond grid used on disk.
pub fn quantize_ts(t: f64) -> f64 {
    (t * 1000.0).round() / 1000.0
}

/// At most three decimals, trailing zeros dropped: `12.5`, `3`, `0.001`.
pub fn format_ts(t: f64) -> String {
    let s = format!("{:.3}", quantize_ts(t));
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

impl EventRecord {
    pub fn new(timestamp: f64, kind: EventKind) -> Self {
        Self { timestamp: quantize_ts(timestamp), kind, params: Vec::new(), comment: None }
    }

    pub fn param(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.params.push((key.into(), value.to_string()));
        self
    }

    pub fn with_comment(mut self, comment: impl Into<String>) -> Self {
        let c = comment.into();
        self.comment = (!c.is_empty()).then_some(c);
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.params.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    fn validate(&self) -> Result<(), GladosError> {
        if !self.timestamp.is_finite() || self.timestamp < 0.0 {
            return Err(GladosError::BadTimestamp(self.timestamp));
        }
        let bad_param = |s: &String| s.is_empty() || s.contains(['\t', '\n', '\r', ';', '=']);
        for (k, v) in &self.params {
            if bad_param(k) || v.contains(['\t', '\n', '\r', ';']) {
                return Err(GladosError::ReservedChar(format!("{k}={v}")));
            }
        }
        if let Some(c) = &self.comment {
            if c.contains(['\t', '\n', '\r']) {
                return Err(GladosError::ReservedChar(c.clone()));
            }
        }
        let kind = self.kind.to_string();
        if kind.is_empty() || kind.contains(['\t', '\n', '\r']) {
            return Err(GladosError::ReservedChar(kind));
        }
        Ok(())
    }

    pub fn to_line(&self) -> String {
        let params: Vec<String> = self.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
        format!(
            "{}\t{}\t{}\t{}",
            format_ts(self.timestamp),
            self.kind,
            params.join(";"),
            self.comment.as_deref().unwrap_or("")
        )
    }

    /// Parses one log line. The params and comment columns may be omitted.
    pub fn parse_line(line: &str) -> Result<Self, String> {
        let line = line.strip_suffix('\r').unwrap_or(line);
        let fields: Vec<&str> = line.splitn(4, '\t').collect();
        if fields.len() < 2 {
            return Err("expected `timestamp<TAB>kind[<TAB>params[<TAB>comment]]`".into());
        }
        let t: f64 = fields[0].trim().parse().map_err(|_| format!("bad timestamp `{}`", fields[0]))?;
        if !t.is_finite() || t < 0.0 {
            return Err(format!("timestamp {t} must be non-negative"));
        }
        let kind: EventKind = fields[1].parse()?;
        let mut params = Vec::new();
        if let Some(p) = fields.get(2).filter(|p| !p.is_empty()) {
            for pair in p.split(';') {
                let (k, v) = pair.split_once('=').ok_or_else(|| format!("param `{pair}` lacks `=`"))?;
                if k.is_empty() {
                    return Err(format!("param `{pair}` has an empty key"));
                }
                params.push((k.to_string(), v.to_string()));
            }
        }
        let comment = fields.get(3).filter(|c| !c.is_empty()).map(|c| c.to_string());
        Ok(Self { timestamp: quantize_ts(t), kind, params, comment })
    }
}

/// Append-only log with non-decreasing timestamps.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    records: Vec<EventRecord>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn records(&self) -> &[EventRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn log_event(&mut self, mut record: EventRecord) -> Result<(), GladosError> {
        record.timestamp = quantize_ts(record.timestamp);
        if record.comment.as_deref() == Some("") {
            record.comment = None;
        }
        record.validate()?;
        if let Some(last) = self.records.last() {
            if record.timestamp < last.timestamp {
                return Err(GladosError::OutOfOrder { last: last.timestamp, got: record.timestamp });
            }
        }
        self.records.push(record);
        Ok(())
    }

    pub fn into_records(self) -> Vec<EventRecord> {
        self.records
    }
}

pub fn export_log(records: &[EventRecord]) -> String {
    records.iter().map(|r| r.to_line() + "\n").collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectiveLogEntry {
    pub timestamp: f64,
    pub directive: Directive,
}

impl DirectiveLogEntry {
    pub fn to_line(&self) -> String {
        format!("{}\t{}\t{}", format_ts(self.timestamp), self.directive.name(), self.directive.params_text())
    }
}

pub fn export_directives(entries: &[DirectiveLogEntry]) -> String {
    entries.iter().map(|e| e.to_line() + "\n").collect()
}

/// Effective game parameters; each field holds the latest directive of its
/// category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectiveSink {
    pub creature_scale: f64,
    pub env_scale: f64,
    pub key_room_weight: f64,
    pub exit_room_weight: f64,
    pub evasion_weight: f64,
    pub sprint: Modifiers,
    pub heartbeat: f64,
    pub hallucinations: bool,
    pub breathing: Breathing,
    pub tunnel_vision: f64,
    faint_armed: bool,
}

impl Default for DirectiveSink {
    fn default() -> Self {
        Self {
            creature_scale: 1.0,
            env_scale: 1.0,
            key_room_weight: 1.0,
            exit_room_weight: 1.0,
            evasion_weight: 1.0,
            sprint: Modifiers::default(),
            heartbeat: 0.0,
            hallucinations: false,
            breathing: Breathing::Normal,
            tunnel_vision: 0.0,
            faint_armed: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ApplyReport {
    /// Directives that changed a parameter, in input order.
    pub changed: Vec<Directive>,
    pub faint: bool,
}

impl DirectiveSink {
    pub fn faint_armed(&self) -> bool {
        self.faint_armed
    }

    /// Overwrites each directive's category. A faint fires once and re-arms
    /// on the first directive set without `TriggerFaint`, i.e. once arousal
    /// has dropped under the faint threshold.
    pub fn apply(&mut self, directives: &[Directive]) -> ApplyReport {
        let mut report = ApplyReport::default();
        let mut saw_faint = false;
        for d in directives {
            let changed = match *d {
                Directive::ScaleCreatureProbability(f) => set(&mut self.creature_scale, f),
                Directive::ScaleEnvEventProbability(f) => set(&mut self.env_scale, f),
                Directive::ScaleObjectiveRoomWeight { target: ObjectiveTarget::KeyRooms, factor } => {
                    set(&mut self.key_room_weight, factor)
                }
                Directive::ScaleObjectiveRoomWeight { target: ObjectiveTarget::ExitRoom, factor } => {
                    set(&mut self.exit_room_weight, factor)
                }
                Directive::ScaleEvasionTunnelWeight(f) => set(&mut self.evasion_weight, f),
                Directive::SetSprintParams { speed_mult, duration_mult } => {
                    let a = set(&mut self.sprint.sprint_speed_mult, speed_mult);
                    set(&mut self.sprint.sprint_duration_mult, duration_mult) || a
                }
                Directive::SetHeartbeatIntensity(x) => set(&mut self.heartbeat, x),
                Directive::TriggerFaint => {
                    saw_faint = true;
                    let fire = self.faint_armed;
                    self.faint_armed = false;
                    report.faint |= fire;
                    fire
                }
                Directive::SetHallucinations(on) => set(&mut self.hallucinations, on),
                Directive::SetBreathing(b) => set(&mut self.breathing, b),
                Directive::SetTunnelVision(x) => set(&mut self.tunnel_vision, x),
            };
            if changed {
                report.changed.push(*d);
            }
        }
        if !saw_faint {
            self.faint_armed = true;
        }
        report
    }

    pub fn value_of(&self, cat: Category) -> String {
        match cat {
            Category::CreatureScale => self.creature_scale.to_string(),
            Category::EnvScale => self.env_scale.to_string(),
            Category::KeyRoomWeight => self.key_room_weight.to_string(),
            Category::ExitRoomWeight => self.exit_room_weight.to_string(),
            Category::EvasionWeight => self.evasion_weight.to_string(),
            Category::Sprint => format!("{}/{}", self.sprint.sprint_speed_mult, self.sprint.sprint_duration_mult),
            Category::Heartbeat => self.heartbeat.to_string(),
            Category::Faint => self.faint_armed.to_string(),
            Category::Hallucinations => self.hallucinations.to_string(),
            Category::Breathing => format!("{:?}", self.breathing),
            Category::TunnelVision => self.tunnel_vision.to_string(),
        }
    }
}

fn set<T: PartialEq>(slot: &mut T, v: T) -> bool {
    if *slot == v {
        false
    } else {
        *slot = v;
        true
    }
}
