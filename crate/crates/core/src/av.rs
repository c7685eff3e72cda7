//! Shared affective-state types: the bounded arousal/valence scale, sensor
//! samples, uniformly sampled AV traces and the simulation clock.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCALE_MIN: f64 = 0.0;
pub const SCALE_MAX: f64 = 10.0;
pub const NEUTRAL: f64 = 5.0;

/// Tolerance on sample spacing inside an [`AvTrace`].
pub const SPACING_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AvError {
    #[error("non-finite value {0}")]
    NonFinite(f64),
    #[error("invalid physiological sample at t={timestamp}: {reason}")]
    InvalidSample { timestamp: f64, reason: &'static str },
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
    #[error("shift by {offset} would move timestamp {timestamp} below zero")]
    NegativeShift { offset: f64, timestamp: f64 },
}

/// Clamps a finite value onto the AV scale.
pub fn clamp_to_scale(x: f64) -> Result<f64, AvError> {
    if !x.is_finite() {
        return Err(AvError::NonFinite(x));
    }
    Ok(x.clamp(SCALE_MIN, SCALE_MAX))
}

fn saturate(x: f64) -> f64 {
    if x.is_nan() {
        NEUTRAL
    } else {
        x.clamp(SCALE_MIN, SCALE_MAX)
    }
}

/// A point in arousal/valence space. Both coordinates always lie on `[0, 10]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawState", into = "RawState")]
pub struct EmotionalState {
    arousal: f64,
    valence: f64,
}

#[derive(Serialize, Deserialize)]
struct RawState {
    arousal: f64,
    valence: f64,
}

impl TryFrom<RawState> for EmotionalState {
    type Error = AvError;
    fn try_from(raw: RawState) -> Result<Self, AvError> {
        EmotionalState::new(raw.arousal, raw.valence)
    }
}

impl From<EmotionalState> for RawState {
    fn from(es: EmotionalState) -> Self {
        RawState { arousal: es.arousal, valence: es.valence }
    }
}

impl EmotionalState {
    /// Builds a state, clamping finite inputs onto the scale.
    pub fn new(arousal: f64, valence: f64) -> Result<Self, AvError> {
        Ok(Self { arousal: clamp_to_scale(arousal)?, valence: clamp_to_scale(valence)? })
    }

    /// Infallible constructor: infinities saturate, NaN maps to neutral.
    pub fn saturating(arousal: f64, valence: f64) -> Self {
        Self { arousal: saturate(arousal), valence: saturate(valence) }
    }

    pub fn neutral() -> Self {
        Self { arousal: NEUTRAL, valence: NEUTRAL }
    }

    pub fn arousal(&self) -> f64 {
        self.arousal
    }

    pub fn valence(&self) -> f64 {
        self.valence
    }

    pub fn get(&self, dim: Dimension) -> f64 {
        match dim {
            Dimension::Arousal => self.arousal,
            Dimension::Valence => self.valence,
        }
    }

    pub fn with_arousal(self, arousal: f64) -> Self {
        Self { arousal: saturate(arousal), ..self }
    }

    pub fn with_valence(self, valence: f64) -> Self {
        Self { valence: saturate(valence), ..self }
    }
}

impl Default for EmotionalState {
    fn default() -> Self {
        Self::neutral()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dimension {
    Arousal,
    Valence,
}

impl Dimension {
    pub const BOTH: [Dimension; 2] = [Dimension::Arousal, Dimension::Valence];

    pub fn name(self) -> &'static str {
        match self {
            Dimension::Arousal => "Arousal",
            Dimension::Valence => "Valence",
        }
    }
}

/// One multi-channel physiological reading (engineered features).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysiologicalSample {
    pub timestamp: f64,
    /// Skin conductance, microsiemens.
    pub sc: f64,
    /// Heart rate, beats per minute.
    pub hr: f64,
    /// Zygomaticus major activation, `[0, 1]`.
    pub emg_zyg: f64,
    /// Corrugator supercilii activation, `[0, 1]`.
    pub emg_corr: f64,
}

impl PhysiologicalSample {
    pub fn new(timestamp: f64, sc: f64, hr: f64, emg_zyg: f64, emg_corr: f64) -> Result<Self, AvError> {
        let s = Self { timestamp, sc, hr, emg_zyg, emg_corr };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), AvError> {
        let bad = |reason| Err(AvError::InvalidSample { timestamp: self.timestamp, reason });
        if ![self.timestamp, self.sc, self.hr, self.emg_zyg, self.emg_corr].iter().all(|v| v.is_finite()) {
            return bad("non-finite channel");
        }
        if self.timestamp < 0.0 {
            return bad("negative timestamp");
        }
        if self.hr <= 0.0 {
            return bad("heart rate must be positive");
        }
        if self.sc < 0.0 {
            return bad("skin conductance must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.emg_zyg) || !(0.0..=1.0).contains(&self.emg_corr) {
            return bad("EMG activation outside [0, 1]");
        }
        Ok(())
    }
}

/// Uniformly sampled AV classification stream.
///
/// Timestamps are `origin + offset + i * sample_period`. Shifts accumulate in
/// `offset` only, so shifting by `d` and then by `-d` restores the trace
/// bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvTrace {
    origin: f64,
    offset: f64,
    sample_period: f64,
    states: Vec<EmotionalState>,
}

impl AvTrace {
    pub fn new(start: f64, sample_period: f64, states: Vec<EmotionalState>) -> Result<Self, AvError> {
        if !start.is_finite() || start < 0.0 {
            return Err(AvError::InvalidTrace(format!("start time {start} must be finite and non-negative")));
        }
        if !sample_period.is_finite() || sample_period <= 0.0 {
            return Err(AvError::InvalidTrace(format!("sample period {sample_period} must be positive")));
        }
        Ok(Self { origin: start, offset: 0.0, sample_period, states })
    }

    /// Builds a trace from explicit `(t, state)` pairs, checking that the
    /// timestamps are strictly increasing and evenly spaced.
    pub fn from_samples(samples: &[(f64, EmotionalState)]) -> Result<Self, AvError> {
        match samples.len() {
            0 => return Err(AvError::InvalidTrace("empty trace".into())),
            1 => {
                return Self::new(samples[0].0, 1.0, vec![samples[0].1]);
            }
            _ => {}
        }
        let t0 = samples[0].0;
        let n = samples.len();
        let period = (samples[n - 1].0 - t0) / (n - 1) as f64;
        if !(period > 0.0) {
            return Err(AvError::InvalidTrace("timestamps must be strictly increasing".into()));
        }
        for (i, w) in samples.windows(2).enumerate() {
            let gap = w[1].0 - w[0].0;
            if gap <= 0.0 {
                return Err(AvError::InvalidTrace(format!("timestamps not increasing at sample {}", i + 1)));
            }
            if (gap - period).abs() > SPACING_TOLERANCE {
                return Err(AvError::InvalidTrace(format!(
                    "uneven spacing at sample {}: {gap} vs period {period}",
                    i + 1
                )));
            }
        }
        Self::new(t0, period, samples.iter().map(|s| s.1).collect())
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn sample_period(&self) -> f64 {
        self.sample_period
    }

    pub fn start(&self) -> f64 {
        self.origin + self.offset
    }

    pub fn end(&self) -> f64 {
        self.time_at(self.states.len().saturating_sub(1))
    }

    pub fn time_at(&self, i: usize) -> f64 {
        self.origin + self.offset + i as f64 * self.sample_period
    }

    pub fn states(&self) -> &[EmotionalState] {
        &self.states
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, EmotionalState)> + '_ {
        self.states.iter().enumerate().map(|(i, s)| (self.time_at(i), *s))
    }

    pub fn values(&self, dim: Dimension) -> Vec<f64> {
        self.states.iter().map(|s| s.get(dim)).collect()
    }

    /// Shifts every timestamp by `offset` seconds.
    pub fn align(&self, offset: f64) -> Result<AvTrace, AvError> {
        if !offset.is_finite() {
            return Err(AvError::NonFinite(offset));
        }
        let shifted = Self { offset: self.offset + offset, ..self.clone() };
        if shifted.start() < 0.0 {
            return Err(AvError::NegativeShift { offset, timestamp: self.start() });
        }
        Ok(shifted)
    }
}

/// Free-function form of [`AvTrace::align`].
pub fn align_trace(trace: &AvTrace, offset: f64) -> Result<AvTrace, AvError> {
    trace.align(offset)
}

/// Discrete session clock: `time = tick * tick_period`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimClock {
    tick: u64,
    tick_period: f64,
}

impl SimClock {
    pub fn new(tick_period: f64) -> Self {
        assert!(tick_period > 0.0 && tick_period.is_finite(), "tick period must be positive");
        Self { tick: 0, tick_period }
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn tick_period(&self) -> f64 {
        self.tick_period
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.tick_period
    }

    pub fn advance(&mut self) {
        self.tick += 1;
    }
}
