//! Emotion-event triangulation: finds reactions to logged events in an AV
//! trace, plus the file formats around it.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::av::{AvError, AvTrace, Dimension, EmotionalState};
use crate::glados::{EventKind, EventRecord};

pub const DEFAULT_WINDOW: f64 = 10.0;
/// Slack when mapping timestamps onto sample indices.
const INDEX_EPS: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum EetError {
    #[error("events out of order at index {index} (t={t} after t={prev})")]
    Unordered { index: usize, t: f64, prev: f64 },
    #[error("event index {0} out of range")]
    BadIndex(usize),
    #[error("trace [{trace_start}, {trace_end}] does not cover region [{start}, {end}] of event {index} ({kind} at t={t})")]
    Coverage { index: usize, kind: String, t: f64, start: f64, end: f64, trace_start: f64, trace_end: f64 },
    #[error("no parseable event lines ({0} rejected)")]
    NoEvents(usize),
    #[error("bad trace: {0}")]
    Trace(String),
    #[error("undefined ratio: zero events")]
    ZeroEvents,
    #[error("window must be positive, got {0}")]
    BadWindow(f64),
}

#[derive(Debug, Error, PartialEq)]
pub enum LoadError {
    #[error("missing EET header")]
    MissingHeader,
    #[error("unsupported container version `{0}`")]
    UnsupportedVersion(String),
    #[error("corrupt body: {0}")]
    Corrupt(String),
    #[error("checksum mismatch: stored {stored:016x}, computed {computed:016x}")]
    Checksum { stored: u64, computed: u64 },
}

impl From<AvError> for EetError {
    fn from(e: AvError) -> Self {
        EetError::Trace(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ThresholdMode {
    Literal,
    Deviation,
}

impl FromStr for ThresholdMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "literal" => Ok(ThresholdMode::Literal),
            "deviation" => Ok(ThresholdMode::Deviation),
            _ => Err(format!("unknown mode `{s}` (expected literal or deviation)")),
        }
    }
}

impl fmt::Display for ThresholdMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ThresholdMode::Literal => "literal",
            ThresholdMode::Deviation => "deviation",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeRegion {
    pub start: f64,
    pub end: f64,
}

/// `[T_i, min(T_i + W, T_{i+1})]`; the last event is bounded by `trace_end`.
pub fn time_region(event_times: &[f64], i: usize, window: f64, trace_end: f64) -> Result<TimeRegion, EetError> {
    check_order(event_times)?;
    let start = *event_times.get(i).ok_or(EetError::BadIndex(i))?;
    let next = event_times.get(i + 1).copied().unwrap_or(trace_end);
    Ok(TimeRegion { start, end: (start + window).min(next).max(start) })
}

fn check_order(ts: &[f64]) -> Result<(), EetError> {
    for (i, w) in ts.windows(2).enumerate() {
        if !(w[1] >= w[0]) {
            return Err(EetError::Unordered { index: i + 1, t: w[1], prev: w[0] });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectParams {
    pub window: f64,
    pub mode: ThresholdMode,
    /// Lower bound on φ; zero keeps the plain statistic.
    pub min_threshold: f64,
}

impl Default for DetectParams {
    fn default() -> Self {
        Self { window: DEFAULT_WINDOW, mode: ThresholdMode::Deviation, min_threshold: 0.0 }
    }
}

/// Population mean and standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mu = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / n;
    (mu, var.sqrt())
}

/// φ over the region's samples.
pub fn threshold(values: &[f64], mode: ThresholdMode) -> f64 {
    let (mu, sigma) = match mode {
        ThresholdMode::Literal => mean_std(values),
        ThresholdMode::Deviation => {
            let d: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
            mean_std(&d)
        }
    };
    mu + 2.0 * sigma
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    /// Index into the slice that was scanned.
    pub index: usize,
    pub maximum: bool,
}

/// Sign changes of the first difference. A flat run between two opposite
/// slopes yields one candidate at its middle sample.
pub fn zero_crossings(values: &[f64]) -> Vec<Candidate> {
    let nonzero: Vec<(usize, bool)> = values
        .windows(2)
        .enumerate()
        .filter_map(|(k, w)| {
            let d = w[1] - w[0];
            (d != 0.0).then_some((k, d > 0.0))
        })
        .collect();
    nonzero
        .windows(2)
        .filter(|p| p[0].1 != p[1].1)
        .map(|p| Candidate { index: (p[0].0 + 1 + p[1].0) / 2, maximum: p[0].1 })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extremum {
    pub timestamp: f64,
    pub value: f64,
    /// The reference state this extremum was measured against.
    pub is_value: f64,
    pub maximum: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResponseKind {
    Simple,
    Composite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionalResponse {
    pub event_index: usize,
    pub event_ts: f64,
    pub event_kind: EventKind,
    pub dimension: Dimension,
    pub region: TimeRegion,
    pub phi: f64,
    pub extrema: Vec<Extremum>,
}

impl EmotionalResponse {
    pub fn kind(&self) -> ResponseKind {
        if self.extrema.len() == 1 {
            ResponseKind::Simple
        } else {
            ResponseKind::Composite
        }
    }
}

/// Sample indices `[lo, hi]` inside `region` and the index of the reference
/// sample at or before its start.
fn region_indices(trace: &AvTrace, region: TimeRegion) -> (usize, usize, usize) {
    let p = trace.sample_period();
    let rel = |t: f64| (t - trace.start()) / p;
    let lo = (rel(region.start) - INDEX_EPS).ceil().max(0.0) as usize;
    let hi = ((rel(region.end) + INDEX_EPS).floor().max(0.0) as usize).min(trace.len() - 1);
    let is = (rel(region.start) + INDEX_EPS).floor().max(0.0) as usize;
    (lo, hi, is.min(trace.len() - 1))
}

/// Runs the chained search over one region of one dimension.
pub fn search_region(values: &[f64], is0: f64, phi: f64) -> Vec<(usize, f64, f64, bool)> {
    let mut is = is0;
    let mut last: Option<bool> = None;
    let mut out = Vec::new();
    for c in zero_crossings(values) {
        if last == Some(c.maximum) {
            continue;
        }
        let zs = values[c.index];
        if (is - zs).abs() >= phi {
            out.push((c.index, zs, is, c.maximum));
            is = zs;
            last = Some(c.maximum);
        }
    }
    out
}

pub fn detect_responses(
    trace: &AvTrace,
    events: &[EventRecord],
    params: &DetectParams,
) -> Result<Vec<EmotionalResponse>, EetError> {
    if !(params.window > 0.0) {
        return Err(EetError::BadWindow(params.window));
    }
    if trace.is_empty() {
        return Err(EetError::Trace("empty trace".into()));
    }
    let times: Vec<f64> = events.iter().map(|e| e.timestamp).collect();
    check_order(&times)?;
    let mut out = Vec::new();
    for (i, ev) in events.iter().enumerate() {
        let region = time_region(&times, i, params.window, trace.end())?;
        if region.start < trace.start() - INDEX_EPS || region.end > trace.end() + INDEX_EPS {
            return Err(EetError::Coverage {
                index: i,
                kind: ev.kind.to_string(),
                t: ev.timestamp,
                start: region.start,
                end: region.end,
                trace_start: trace.start(),
                trace_end: trace.end(),
            });
        }
        let (lo, hi, is_idx) = region_indices(trace, region);
        for dim in Dimension::BOTH {
            let all = trace.states();
            let values: Vec<f64> = if lo <= hi { all[lo..=hi].iter().map(|s| s.get(dim)).collect() } else { Vec::new() };
            let phi = threshold(&values, params.mode).max(params.min_threshold);
            let found = search_region(&values, all[is_idx].get(dim), phi);
            if found.is_empty() {
                continue;
            }
            let extrema = found
                .into_iter()
                .map(|(k, zs, is, maximum)| Extremum { timestamp: trace.time_at(lo + k), value: zs, is_value: is, maximum })
                .collect();
            out.push(EmotionalResponse {
                event_index: i,
                event_ts: ev.timestamp,
                event_kind: ev.kind.clone(),
                dimension: dim,
                region,
                phi,
                extrema,
            });
        }
    }
    Ok(out)
}

pub const RESPONSE_HEADER: &str =
    "event_ts,event_kind,dimension,response_index,extremum_index,extremum_ts,is_value,zs_value,delta,kind";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn export_responses(responses: &[EmotionalResponse]) -> String {
    let mut out = String::from(RESPONSE_HEADER);
    out.push('\n');
    for (ri, r) in responses.iter().enumerate() {
        let kind = match r.kind() {
            ResponseKind::Simple => "Simple",
            ResponseKind::Composite => "Composite",
        };
        for (xi, x) in r.extrema.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.event_ts,
                csv_field(&r.event_kind.to_string()),
                r.dimension.name(),
                ri,
                xi,
                x.timestamp,
                x.is_value,
                x.value,
                x.value - x.is_value,
                kind
            ));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportReport {
    pub records: Vec<EventRecord>,
    /// `(line number, reason)` for every rejected line.
    pub errors: Vec<(usize, String)>,
}

/// Lenient event-list reader: bad lines are reported and skipped. Blank
/// lines are ignored; a file with lines but none usable is an error.
pub fn import_events(text: &str) -> Result<ImportReport, EetError> {
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match EventRecord::parse_line(line) {
            Ok(r) => records.push(r),
            Err(e) => errors.push((n + 1, e)),
        }
    }
    if records.is_empty() && !errors.is_empty() {
        return Err(EetError::NoEvents(errors.len()));
    }
    Ok(ImportReport { records, errors })
}

pub const AV_HEADER: &str = "t,arousal,valence";

/// Writes `t,arousal,valence` rows.
pub fn av_csv(samples: impl IntoIterator<Item = (f64, EmotionalState)>) -> String {
    let mut out = String::from(AV_HEADER);
    out.push('\n');
    for (t, s) in samples {
        out.push_str(&format!("{},{},{}\n", crate::glados::format_ts(t), s.arousal(), s.valence()));
    }
    out
}

/// Reads `t,arousal,valence` rows (header optional) into a trace.
pub fn parse_av_csv(text: &str) -> Result<AvTrace, EetError> {
    let mut samples = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (n == 0 && line.starts_with(|c: char| c.is_alphabetic())) {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 3 {
            return Err(EetError::Trace(format!("line {}: expected 3 fields", n + 1)));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| EetError::Trace(format!("line {}: bad number `{s}`", n + 1)));
        let (t, a, v) = (num(f[0])?, num(f[1])?, num(f[2])?);
        let state = EmotionalState::new(a, v).map_err(|e| EetError::Trace(format!("line {}: {e}", n + 1)))?;
        samples.push((t, state));
    }
    Ok(AvTrace::from_samples(&samples)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseStats {
    pub events: usize,
    pub answered: usize,
    pub event_response_ratio: f64,
    /// Share of Simple responses; `None` without responses.
    pub simple_fraction: Option<f64>,
}

pub fn response_stats(event_count: usize, responses: &[EmotionalResponse]) -> Result<ResponseStats, EetError> {
    if event_count == 0 {
        return Err(EetError::ZeroEvents);
    }
    let mut answered: Vec<usize> = responses.iter().map(|r| r.event_index).collect();
    answered.sort_unstable();
    answered.dedup();
    let simple = responses.iter().filter(|r| r.kind() == ResponseKind::Simple).count();
    Ok(ResponseStats {
        events: event_count,
        answered: answered.len(),
        event_response_ratio: answered.len() as f64 / event_count as f64,
        simple_fraction: (!responses.is_empty()).then(|| simple as f64 / responses.len() as f64),
    })
}

/// Ratio over all events of all sessions taken together.
pub fn pooled_ratio(stats: &[ResponseStats]) -> Result<f64, EetError> {
    let events: usize = stats.iter().map(|s| s.events).sum();
    if events == 0 {
        return Err(EetError::ZeroEvents);
    }
    Ok(stats.iter().map(|s| s.answered).sum::<usize>() as f64 / events as f64)
}

/// Unweighted mean of the per-session ratios.
pub fn mean_session_ratio(stats: &[ResponseStats]) -> Result<f64, EetError> {
    if stats.is_empty() {
        return Err(EetError::ZeroEvents);
    }
    Ok(stats.iter().map(|s| s.event_response_ratio).sum::<f64>() / stats.len() as f64)
}

// ---------------------------------------------------------------------------
// .eet container

pub const EET_MAGIC: &str = "EETv1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EetSession {
    /// Where the trace came from, e.g. a path to av.csv.
    pub trace_ref: String,
    pub offset: f64,
    pub events: Vec<EventRecord>,
    pub params: DetectParams,
    pub responses: Vec<EmotionalResponse>,
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    checksum: String,
    session: serde_json::Value,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ *b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

pub fn save_session(s: &EetSession) -> Vec<u8> {
    let body = serde_json::to_value(s).expect("session is always serializable");
    let canonical = serde_json::to_string(&body).expect("json value serializes");
    let env = Envelope { checksum: format!("{:016x}", fnv1a(canonical.as_bytes())), session: body };
    let mut out = format!("{EET_MAGIC}\n").into_bytes();
    out.extend(serde_json::to_vec_pretty(&env).expect("json value serializes"));
    out.push(b'\n');
    out
}

pub fn load_session(bytes: &[u8]) -> Result<EetSession, LoadError> {
    let text = std::str::from_utf8(bytes).map_err(|e| LoadError::Corrupt(e.to_string()))?;
    let (header, body) = text.split_once('\n').ok_or(LoadError::MissingHeader)?;
    let header = header.trim_end_matches('\r');
    if !header.starts_with("EET") {
        return Err(LoadError::MissingHeader);
    }
    if header != EET_MAGIC {
        return Err(LoadError::UnsupportedVersion(header.to_string()));
    }
    let env: Envelope = serde_json::from_str(body).map_err(|e| LoadError::Corrupt(e.to_string()))?;
    let stored = u64::from_str_radix(&env.checksum, 16).map_err(|e| LoadError::Corrupt(format!("checksum: {e}")))?;
    let canonical = serde_json::to_string(&env.session).map_err(|e| LoadError::Corrupt(e.to_string()))?;
    let computed = fnv1a(canonical.as_bytes());
    if stored != computed {
        return Err(LoadError::Checksum { stored, computed });
    }
    serde_json::from_value(env.session).map_err(|e| LoadError::Corrupt(e.to_string()))
}
