//! Browser bindings. Each export wraps a plain function returning
//! `Result<String, String>` so the logic also runs (and is tested) natively.

use std::collections::BTreeMap;

use affectloop_core::clears::{decide, ClearsParams, Condition, DecisionContext, NeutralBaseline};
use affectloop_core::av::EmotionalState;
use affectloop_core::eet::{detect_responses, export_responses, import_events, parse_av_csv, response_stats, DetectParams};
use affectloop_core::simulator::{run, ScenarioConfig};
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Runs one session and returns a JSON summary with the AV trace, the
/// event log and the per-kind counts.
pub fn simulate_json(seed: u64, condition: &str, duration: f64) -> Result<String, String> {
    let condition: Condition = condition.parse()?;
    let cfg = ScenarioConfig { seed, condition, duration, ..ScenarioConfig::default() };
    let rec = run(&cfg).map_err(|e| e.to_string())?;
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for e in &rec.events {
        *counts.entry(e.kind.to_string()).or_insert(0) += 1;
    }
    let av: Vec<[f64; 3]> = rec.av.iter().map(|(t, s)| [*t, s.arousal(), s.valence()]).collect();
    let events: Vec<(f64, String)> = rec.events.iter().map(|e| (e.timestamp, e.kind.to_string())).collect();
    Ok(json!({
        "outcome": rec.outcome.to_string(),
        "end_time": rec.end_time,
        "directives": rec.directives.len(),
        "counts": counts,
        "av": av,
        "events": events,
        "av_csv": rec.av_csv(),
        "events_tsv": rec.events_tsv(),
    })
    .to_string())
}

/// Directive list for one emotional state, one `Name(params)` per line.
pub fn decide_text(condition: &str, arousal: f64, valence: f64, folders: u8, chasing: bool) -> Result<String, String> {
    let condition: Condition = condition.parse()?;
    let es = EmotionalState::new(arousal, valence).map_err(|e| e.to_string())?;
    let ctx = DecisionContext { folders: folders.min(2), chasing };
    let out = decide(condition, es, ctx, NeutralBaseline::default(), &ClearsParams::default());
    Ok(out.iter().map(|d| format!("{d}\n")).collect())
}

/// Response CSV followed by a blank line and the ratio summary.
pub fn triangulate_text(av_csv: &str, events_tsv: &str, mode: &str, window: f64) -> Result<String, String> {
    let trace = parse_av_csv(av_csv).map_err(|e| e.to_string())?;
    let events = import_events(events_tsv).map_err(|e| e.to_string())?;
    let params = DetectParams { window, mode: mode.parse()?, ..DetectParams::default() };
    let responses = detect_responses(&trace, &events.records, &params).map_err(|e| e.to_string())?;
    let stats = response_stats(events.records.len(), &responses).map_err(|e| e.to_string())?;
    Ok(format!(
        "{}\nevents={} answered={} ratio={:.4} skipped_lines={}\n",
        export_responses(&responses),
        stats.events,
        stats.answered,
        stats.event_response_ratio,
        events.errors.len()
    ))
}

#[wasm_bindgen]
pub fn simulate(seed: u32, condition: &str, duration: f64) -> Result<String, JsValue> {
    simulate_json(seed as u64, condition, duration).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn clears_decide(condition: &str, arousal: f64, valence: f64, folders: u8, chasing: bool) -> Result<String, JsValue> {
    decide_text(condition, arousal, valence, folders, chasing).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn triangulate(av_csv: &str, events_tsv: &str, mode: &str, window: f64) -> Result<String, JsValue> {
    triangulate_text(av_csv, events_tsv, mode, window).map_err(|e| JsValue::from_str(&e))
}
