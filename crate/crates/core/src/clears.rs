//! Adaptation rules: from the current emotional state to gameplay directives.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::av::EmotionalState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Condition {
    NBF,
    VIBF,
    NVIBF,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::NBF, Condition::VIBF, Condition::NVIBF];

    pub fn name(self) -> &'static str {
        match self {
            Condition::NBF => "nbf",
            Condition::VIBF => "vibf",
            Condition::NVIBF => "nvibf",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Condition {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let k: String = s.chars().filter(|c| *c != '-' && *c != '_').collect::<String>().to_ascii_lowercase();
        Condition::ALL
            .into_iter()
            .find(|c| c.name() == k)
            .ok_or_else(|| format!("unknown condition `{s}` (expected nbf, vibf or nvibf)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObjectiveTarget {
    KeyRooms,
    ExitRoom,
}

impl ObjectiveTarget {
    pub fn for_folders(folders: u8) -> Self {
        if folders < 2 {
            ObjectiveTarget::KeyRooms
        } else {
            ObjectiveTarget::ExitRoom
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ObjectiveTarget::KeyRooms => "KeyRooms",
            ObjectiveTarget::ExitRoom => "ExitRoom",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Breathing {
    Normal,
    Scared,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Directive {
    ScaleCreatureProbability(f64),
    ScaleEnvEventProbability(f64),
    ScaleObjectiveRoomWeight { target: ObjectiveTarget, factor: f64 },
    ScaleEvasionTunnelWeight(f64),
    SetSprintParams { speed_mult: f64, duration_mult: f64 },
    SetHeartbeatIntensity(f64),
    TriggerFaint,
    SetHallucinations(bool),
    SetBreathing(Breathing),
    SetTunnelVision(f64),
}

/// Directive categories for last-writer-wins bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    CreatureScale,
    EnvScale,
    KeyRoomWeight,
    ExitRoomWeight,
    EvasionWeight,
    Sprint,
    Heartbeat,
    Faint,
    Hallucinations,
    Breathing,
    TunnelVision,
}

impl Directive {
    pub fn name(&self) -> &'static str {
        match self {
            Directive::ScaleCreatureProbability(_) => "ScaleCreatureProbability",
            Directive::ScaleEnvEventProbability(_) => "ScaleEnvEventProbability",
            Directive::ScaleObjectiveRoomWeight { .. } => "ScaleObjectiveRoomWeight",
            Directive::ScaleEvasionTunnelWeight(_) => "ScaleEvasionTunnelWeight",
            Directive::SetSprintParams { .. } => "SetSprintParams",
            Directive::SetHeartbeatIntensity(_) => "SetHeartbeatIntensity",
            Directive::TriggerFaint => "TriggerFaint",
            Directive::SetHallucinations(_) => "SetHallucinations",
            Directive::SetBreathing(_) => "SetBreathing",
            Directive::SetTunnelVision(_) => "SetTunnelVision",
        }
    }

    pub fn category(&self) -> Category {
        match self {
            Directive::ScaleCreatureProbability(_) => Category::CreatureScale,
            Directive::ScaleEnvEventProbability(_) => Category::EnvScale,
            Directive::ScaleObjectiveRoomWeight { target: ObjectiveTarget::KeyRooms, .. } => Category::KeyRoomWeight,
            Directive::ScaleObjectiveRoomWeight { target: ObjectiveTarget::ExitRoom, .. } => Category::ExitRoomWeight,
            Directive::ScaleEvasionTunnelWeight(_) => Category::EvasionWeight,
            Directive::SetSprintParams { .. } => Category::Sprint,
            Directive::SetHeartbeatIntensity(_) => Category::Heartbeat,
            Directive::TriggerFaint => Category::Faint,
            Directive::SetHallucinations(_) => Category::Hallucinations,
            Directive::SetBreathing(_) => Category::Breathing,
            Directive::SetTunnelVision(_) => Category::TunnelVision,
        }
    }

    /// `k=v` pairs joined by `;`, as written to the directive log.
    pub fn params_text(&self) -> String {
        match self {
            Directive::ScaleCreatureProbability(f)
            | Directive::ScaleEnvEventProbability(f)
            | Directive::ScaleEvasionTunnelWeight(f) => format!("factor={}", fmt_real(*f)),
            Directive::ScaleObjectiveRoomWeight { target, factor } => {
                format!("target={};factor={}", target.name(), fmt_real(*factor))
            }
            Directive::SetSprintParams { speed_mult, duration_mult } => {
                format!("speed_mult={};duration_mult={}", fmt_real(*speed_mult), fmt_real(*duration_mult))
            }
            Directive::SetHeartbeatIntensity(x) | Directive::SetTunnelVision(x) => format!("intensity={}", fmt_real(*x)),
            Directive::TriggerFaint => String::new(),
            Directive::SetHallucinations(on) => format!("on={on}"),
            Directive::SetBreathing(b) => format!("mode={}", if *b == Breathing::Scared { "scared" } else { "normal" }),
        }
    }
}

impl fmt::Display for Directive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.name(), self.params_text())
    }
}

/// Six decimals, trailing zeros trimmed.
pub fn fmt_real(x: f64) -> String {
    let s = format!("{x:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".to_string() } else { s.to_string() }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeutralBaseline {
    pub arousal0: f64,
    pub valence0: f64,
}

impl Default for NeutralBaseline {
    fn default() -> Self {
        Self { arousal0: 5.0, valence0: 5.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClearsParams {
    pub beta: f64,
    pub gamma: f64,
    pub factor_min: f64,
    pub factor_max: f64,
}

impl Default for ClearsParams {
    fn default() -> Self {
        Self { beta: 1.0, gamma: 1.0, factor_min: 0.25, factor_max: 4.0 }
    }
}

impl ClearsParams {
    fn clamp(&self, f: f64) -> f64 {
        f.clamp(self.factor_min, self.factor_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DecisionContext {
    pub folders: u8,
    pub chasing: bool,
}

pub const FAINT_AROUSAL: f64 = 9.5;
pub const HALLUCINATION_AROUSAL: f64 = 8.0;
pub const HALLUCINATION_VALENCE: f64 = 2.0;

/// Hidden adaptations: creature, event, objective-room and evasion-tunnel
/// odds. The evasion factor is always present and reads 1 outside a chase.
pub fn decide_nvibf(es: EmotionalState, ctx: DecisionContext, baseline: NeutralBaseline, p: &ClearsParams) -> Vec<Directive> {
    let da = (es.arousal() - baseline.arousal0) / 5.0;
    let dv = (baseline.valence0 - es.valence()) / 5.0;
    let low_valence_boost = p.clamp(1.0 + p.gamma * dv);
    vec![
        Directive::ScaleCreatureProbability(p.clamp(1.0 - p.beta * da)),
        Directive::ScaleEnvEventProbability(p.clamp(1.0 + p.beta * da)),
        Directive::ScaleObjectiveRoomWeight { target: ObjectiveTarget::for_folders(ctx.folders), factor: low_valence_boost },
        Directive::ScaleEvasionTunnelWeight(if ctx.chasing { low_valence_boost } else { 1.0 }),
    ]
}

/// Perceptible adaptations on the avatar.
pub fn decide_vibf(es: EmotionalState, baseline: NeutralBaseline) -> Vec<Directive> {
    let a = es.arousal();
    let v = es.valence();
    let da = (a - baseline.arousal0) / 5.0;
    let mut out = vec![
        Directive::SetSprintParams {
            speed_mult: (1.0 + 0.5 * da).clamp(0.5, 1.5),
            duration_mult: (1.0 - 0.5 * da).clamp(0.5, 1.5),
        },
        Directive::SetHeartbeatIntensity(da.clamp(0.0, 1.0)),
    ];
    if a >= FAINT_AROUSAL {
        out.push(Directive::TriggerFaint);
    }
    out.push(Directive::SetHallucinations(a >= HALLUCINATION_AROUSAL || v <= HALLUCINATION_VALENCE));
    out.push(Directive::SetBreathing(if a > baseline.arousal0 { Breathing::Scared } else { Breathing::Normal }));
    let tunnel = if v < baseline.valence0 && baseline.valence0 > 0.0 {
        ((baseline.valence0 - v) / baseline.valence0).clamp(0.0, 1.0)
    } else {
        0.0
    };
    out.push(Directive::SetTunnelVision(tunnel));
    out
}

pub fn decide(
    condition: Condition,
    es: EmotionalState,
    ctx: DecisionContext,
    baseline: NeutralBaseline,
    p: &ClearsParams,
) -> Vec<Directive> {
    match condition {
        Condition::NBF => Vec::new(),
        Condition::VIBF => decide_vibf(es, baseline),
        Condition::NVIBF => decide_nvibf(es, ctx, baseline, p),
    }
}
