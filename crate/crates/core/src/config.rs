//! Flat `key = value` scenario files with dotted keys.
//!
//! ```text
//! # comments run to end of line
//! session.condition = nvibf
//! clears.beta = 1.0
//! worldgen.weight.ExitRoom = 5
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::av::clamp_to_scale;
use crate::piers::PiersModel;
use crate::simulator::{Kernel, ScenarioConfig};
use crate::worldgen::BlockType;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
    #[error("line {line}: bad value for `{key}`: {reason}")]
    Value { line: usize, key: String, reason: String },
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

/// A parsed file: the scenario plus an optional participant model path.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigFile {
    pub scenario: ScenarioConfig,
    pub model_file: Option<String>,
}

fn num<T: std::str::FromStr>(v: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| e.to_string())
}

fn real(v: &str) -> Result<f64, String> {
    let x: f64 = num(v)?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err("must be finite".into())
    }
}

fn scale(v: &str) -> Result<f64, String> {
    clamp_to_scale(real(v)?).map_err(|e| e.to_string())
}

fn kernel_field(k: &mut Kernel, field: &str, v: &str) -> Result<bool, String> {
    match field {
        "arousal" => k.arousal = real(v)?,
        "valence" => k.valence = real(v)?,
        "latency" => k.latency = real(v)?,
        "tau" => k.tau = real(v)?,
        _ => return Ok(false),
    }
    Ok(true)
}

/// Sets one key. `Ok(false)` means the key is unknown.
pub fn set_key(file: &mut ConfigFile, key: &str, v: &str) -> Result<bool, String> {
    let c = &mut file.scenario;
    match key {
        "session.seed" => c.seed = num(v)?,
        "session.condition" => c.condition = v.parse()?,
        "session.duration" => c.duration = real(v)?,
        "session.tick_period" => c.tick_period = real(v)?,
        "worldgen.delay.key_room" => c.delays.key_room = num(v)?,
        "worldgen.delay.exit_room" => c.delays.exit_room = num(v)?,
        "worldgen.delay.dead_end_initial" => c.delays.dead_end_initial = num(v)?,
        "worldgen.sphere_radius" => c.sphere_radius = real(v)?,
        "details.paper_delay" => c.paper_delay = num(v)?,
        "details.chalk_delay" => c.chalk_delay = num(v)?,
        "details.env_delay" => c.env_detail_delay = num(v)?,
        "details.per_block" => c.details_per_block = num(v)?,
        "events.probability" => c.event_probability = real(v)?,
        "events.tripwire_chance" => c.tripwire_chance = real(v)?,
        "creature.proximity" => c.creature.proximity = real(v)?,
        "creature.attack_range" => c.creature.attack_range = real(v)?,
        "creature.escape_blocks" => c.creature.escape_blocks = num(v)?,
        "creature.chase_probability" => c.creature.chase_probability = real(v)?,
        "creature.speed" => c.creature.speed = real(v)?,
        "creature.p0" => c.schedule.p0 = real(v)?,
        "creature.k" => c.schedule.k = real(v)?,
        "creature.pmax" => c.schedule.pmax = real(v)?,
        "avatar.base_speed" => c.movement.base_speed = real(v)?,
        "avatar.sprint_mult" => c.movement.sprint_mult = real(v)?,
        "avatar.crouch_mult" => c.movement.crouch_mult = real(v)?,
        "avatar.stamina_duration" => c.movement.stamina_duration = real(v)?,
        "avatar.stamina_regen_time" => c.movement.stamina_regen_time = real(v)?,
        "avatar.fear_decay" => c.fear_decay = real(v)?,
        "clears.beta" => c.clears.beta = real(v)?,
        "clears.gamma" => c.clears.gamma = real(v)?,
        "clears.factor_min" => c.clears.factor_min = real(v)?,
        "clears.factor_max" => c.clears.factor_max = real(v)?,
        "clears.arousal0" => c.baseline.arousal0 = scale(v)?,
        "clears.valence0" => c.baseline.valence0 = scale(v)?,
        "glados.faint_duration" => c.faint_duration = real(v)?,
        "glados.post_faint_creature_probability" => c.post_faint_creature_probability = real(v)?,
        "piers.smoothing_window" => c.smoothing_window = num(v)?,
        "piers.window_ticks" => c.window_ticks = num(v)?,
        "piers.model_file" => file.model_file = (!v.is_empty()).then(|| v.to_string()),
        "player.neutral_arousal" => c.player.neutral = c.player.neutral.with_arousal(scale(v)?),
        "player.neutral_valence" => c.player.neutral = c.player.neutral.with_valence(scale(v)?),
        "player.noise_sigma" => c.player.noise_sigma = real(v)?,
        "player.channel_noise" => c.player.channel_noise = real(v)?,
        "player.policy" => c.player.policy = v.parse()?,
        _ => {
            if let Some(t) = key.strip_prefix("worldgen.weight.") {
                let Ok(t) = t.parse::<BlockType>() else { return Ok(false) };
                let w = real(v)?;
                if w < 0.0 {
                    return Err("weights must be non-negative".into());
                }
                c.weights.set(t, w);
                return Ok(true);
            }
            if let Some(rest) = key.strip_prefix("player.kernel.") {
                let Some((which, field)) = rest.split_once('.') else { return Ok(false) };
                let k = match which {
                    "creature" => &mut c.player.creature,
                    "environment" => &mut c.player.environment,
                    "folder" => &mut c.player.folder,
                    _ => return Ok(false),
                };
                return kernel_field(k, field, v);
            }
            return Ok(false);
        }
    }
    Ok(true)
}

pub fn parse_config(text: &str) -> Result<ConfigFile, ConfigError> {
    let mut file = ConfigFile { scenario: ScenarioConfig::default(), model_file: None };
    let mut seen = std::collections::BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ConfigError::Syntax { line: line_no, reason: format!("expected `key = value`, got `{line}`") })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(ConfigError::Syntax { line: line_no, reason: "empty key".into() });
        }
        if !seen.insert(k.to_string()) {
            return Err(ConfigError::Duplicate { line: line_no, key: k.into() });
        }
        match set_key(&mut file, k, v) {
            Ok(true) => {}
            Ok(false) => return Err(ConfigError::UnknownKey { line: line_no, key: k.into() }),
            Err(reason) => return Err(ConfigError::Value { line: line_no, key: k.into(), reason }),
        }
    }
    file.scenario.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(file)
}

/// Every key with its current value, in a stable order.
pub fn entries(file: &ConfigFile) -> Vec<(String, String)> {
    let c = &file.scenario;
    let mut out: Vec<(String, String)> = Vec::new();
    let mut put = |k: &str, v: String| out.push((k.to_string(), v));
    put("session.seed", c.seed.to_string());
    put("session.condition", c.condition.to_string());
    put("session.duration", c.duration.to_string());
    put("session.tick_period", c.tick_period.to_string());
    put("worldgen.delay.key_room", c.delays.key_room.to_string());
    put("worldgen.delay.exit_room", c.delays.exit_room.to_string());
    put("worldgen.delay.dead_end_initial", c.delays.dead_end_initial.to_string());
    put("worldgen.sphere_radius", c.sphere_radius.to_string());
    for t in BlockType::ALL {
        put(&format!("worldgen.weight.{t}"), c.weights.get(t).to_string());
    }
    put("details.paper_delay", c.paper_delay.to_string());
    put("details.chalk_delay", c.chalk_delay.to_string());
    put("details.env_delay", c.env_detail_delay.to_string());
    put("details.per_block", c.details_per_block.to_string());
    put("events.probability", c.event_probability.to_string());
    put("events.tripwire_chance", c.tripwire_chance.to_string());
    put("creature.proximity", c.creature.proximity.to_string());
    put("creature.attack_range", c.creature.attack_range.to_string());
    put("creature.escape_blocks", c.creature.escape_blocks.to_string());
    put("creature.chase_probability", c.creature.chase_probability.to_string());
    put("creature.speed", c.creature.speed.to_string());
    put("creature.p0", c.schedule.p0.to_string());
    put("creature.k", c.schedule.k.to_string());
    put("creature.pmax", c.schedule.pmax.to_string());
    put("avatar.base_speed", c.movement.base_speed.to_string());
    put("avatar.sprint_mult", c.movement.sprint_mult.to_string());
    put("avatar.crouch_mult", c.movement.crouch_mult.to_string());
    put("avatar.stamina_duration", c.movement.stamina_duration.to_string());
    put("avatar.stamina_regen_time", c.movement.stamina_regen_time.to_string());
    put("avatar.fear_decay", c.fear_decay.to_string());
    put("clears.beta", c.clears.beta.to_string());
    put("clears.gamma", c.clears.gamma.to_string());
    put("clears.factor_min", c.clears.factor_min.to_string());
    put("clears.factor_max", c.clears.factor_max.to_string());
    put("clears.arousal0", c.baseline.arousal0.to_string());
    put("clears.valence0", c.baseline.valence0.to_string());
    put("glados.faint_duration", c.faint_duration.to_string());
    put("glados.post_faint_creature_probability", c.post_faint_creature_probability.to_string());
    put("piers.smoothing_window", c.smoothing_window.to_string());
    put("piers.window_ticks", c.window_ticks.to_string());
    put("piers.model_file", file.model_file.clone().unwrap_or_default());
    put("player.neutral_arousal", c.player.neutral.arousal().to_string());
    put("player.neutral_valence", c.player.neutral.valence().to_string());
    put("player.noise_sigma", c.player.noise_sigma.to_string());
    put("player.channel_noise", c.player.channel_noise.to_string());
    put("player.policy", c.player.policy.to_string());
    for (name, k) in [("creature", c.player.creature), ("environment", c.player.environment), ("folder", c.player.folder)] {
        put(&format!("player.kernel.{name}.arousal"), k.arousal.to_string());
        put(&format!("player.kernel.{name}.valence"), k.valence.to_string());
        put(&format!("player.kernel.{name}.latency"), k.latency.to_string());
        put(&format!("player.kernel.{name}.tau"), k.tau.to_string());
    }
    out
}

pub fn to_text(file: &ConfigFile) -> String {
    entries(file).into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

/// Reads a config file and the participant model it names. Relative model
/// paths resolve against the config file's directory.
pub fn load_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let io = |p: &Path, e: String| ConfigError::Io { path: p.display().to_string(), reason: e };
    let text = fs::read_to_string(path).map_err(|e| io(path, e.to_string()))?;
    let file = parse_config(&text)?;
    let mut scenario = file.scenario;
    if let Some(m) = file.model_file {
        let mut mp = PathBuf::from(&m);
        if mp.is_relative() {
            mp = path.parent().unwrap_or(Path::new(".")).join(mp);
        }
        let mtext = fs::read_to_string(&mp).map_err(|e| io(&mp, e.to_string()))?;
        let model = PiersModel::from_text(&mtext).map_err(|e| io(&mp, e.to_string()))?;
        scenario.model = Some(model);
    }
    scenario.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(scenario)
}
