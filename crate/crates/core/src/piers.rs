//! Two-layer physiological emotion recognition.
//!
//! Layer one maps each sensor channel onto one AV dimension with a linear
//! regression fitted on per-participant calibration phases. Layer two fuses the
//! per-channel predictions of a dimension by inverse residual-sum-of-squares
//! weighting, and a trailing moving average keeps the output stream smooth.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::av::{AvError, Dimension, EmotionalState, PhysiologicalSample};

/// Added to every RSS before inversion so exact fits get finite weight.
pub const FUSION_EPSILON: f64 = 1e-6;
pub const DEFAULT_SMOOTHING_WINDOW: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PiersError {
    #[error("calibration needs at least two records, got {0}")]
    TooFewRecords(usize),
    #[error("duplicate calibration phase {0}")]
    DuplicatePhase(Phase),
    #[error("fusion input is empty or entirely degenerate")]
    NoVoters,
    #[error("every {0:?} model is degenerate")]
    DegenerateDimension(Dimension),
    #[error("classification window is empty")]
    EmptyWindow,
    #[error("smoothing window must be positive")]
    BadSmoothingWindow,
    #[error("model must hold exactly two channel models per dimension")]
    BadModelShape,
    #[error(transparent)]
    Sample(#[from] AvError),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    RelaxingMusic,
    WaldoScare,
    FunnyVideo,
    HorrorVideo,
}

impl Phase {
    pub const ALL: [Phase; 4] = [Phase::RelaxingMusic, Phase::WaldoScare, Phase::FunnyVideo, Phase::HorrorVideo];

    pub fn name(self) -> &'static str {
        match self {
            Phase::RelaxingMusic => "RelaxingMusic",
            Phase::WaldoScare => "WaldoScare",
            Phase::FunnyVideo => "FunnyVideo",
            Phase::HorrorVideo => "HorrorVideo",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Phase {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        Phase::ALL
            .into_iter()
            .find(|p| p.name().to_ascii_lowercase() == key)
            .ok_or_else(|| format!("unknown calibration phase `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    Sc,
    Hr,
    EmgZyg,
    EmgCorr,
}

impl Channel {
    pub const ALL: [Channel; 4] = [Channel::Sc, Channel::Hr, Channel::EmgZyg, Channel::EmgCorr];

    /// SC and HR track arousal; the facial EMG channels track valence.
    pub fn target(self) -> Dimension {
        match self {
            Channel::Sc | Channel::Hr => Dimension::Arousal,
            Channel::EmgZyg | Channel::EmgCorr => Dimension::Valence,
        }
    }

    pub fn read(self, s: &PhysiologicalSample) -> f64 {
        match self {
            Channel::Sc => s.sc,
            Channel::Hr => s.hr,
            Channel::EmgZyg => s.emg_zyg,
            Channel::EmgCorr => s.emg_corr,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::Sc => "sc",
            Channel::Hr => "hr",
            Channel::EmgZyg => "emg_zyg",
            Channel::EmgCorr => "emg_corr",
        }
    }
}

impl FromStr for Channel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Channel::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| format!("unknown channel `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub phase: Phase,
    /// Mean features over the phase.
    pub features: PhysiologicalSample,
    pub self_report: EmotionalState,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub channel: Channel,
    pub slope: f64,
    pub intercept: f64,
    pub rss: f64,
    /// Constant calibration feature: the model never votes.
    pub degenerate: bool,
}

impl ChannelModel {
    pub fn target(&self) -> Dimension {
        self.channel.target()
    }

    pub fn predict(&self, feature: f64) -> f64 {
        self.intercept + self.slope * feature
    }

    /// Feature value at which this model predicts `value`.
    pub fn invert(&self, value: f64) -> Option<f64> {
        if self.degenerate || self.slope == 0.0 {
            None
        } else {
            Some((value - self.intercept) / self.slope)
        }
    }
}

/// Ordinary least squares `y = intercept + slope * x`, returning
/// `(slope, intercept, rss, degenerate)`.
fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64, f64, bool) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let scale: f64 = xs.iter().map(|x| x * x).sum::<f64>().max(1.0);
    if sxx <= 1e-12 * scale {
        let rss = ys.iter().map(|y| (y - my) * (y - my)).sum();
        return (0.0, my, rss, true);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    (slope, intercept, rss, false)
}

/// Per-participant calibrated classifier parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiersModel {
    channel_models: Vec<ChannelModel>,
    smoothing_window: usize,
}

impl PiersModel {
    pub fn new(channel_models: Vec<ChannelModel>, smoothing_window: usize) -> Result<Self, PiersError> {
        if smoothing_window == 0 {
            return Err(PiersError::BadSmoothingWindow);
        }
        let channels: BTreeSet<Channel> = channel_models.iter().map(|m| m.channel).collect();
        if channel_models.len() != 4 || channels.len() != 4 {
            return Err(PiersError::BadModelShape);
        }
        let mut channel_models = channel_models;
        channel_models.sort_by_key(|m| m.channel);
        Ok(Self { channel_models, smoothing_window })
    }

    pub fn channel_models(&self) -> &[ChannelModel] {
        &self.channel_models
    }

    pub fn model(&self, channel: Channel) -> &ChannelModel {
        self.channel_models.iter().find(|m| m.channel == channel).expect("all four channels present")
    }

    pub fn smoothing_window(&self) -> usize {
        self.smoothing_window
    }

    pub fn with_smoothing_window(mut self, window: usize) -> Result<Self, PiersError> {
        if window == 0 {
            return Err(PiersError::BadSmoothingWindow);
        }
        self.smoothing_window = window;
        Ok(self)
    }

    /// Fused, clamped, unsmoothed prediction from one feature vector.
    pub fn predict(&self, features: &PhysiologicalSample) -> Result<EmotionalState, PiersError> {
        let mut out = [0.0; 2];
        for (slot, dim) in out.iter_mut().zip(Dimension::BOTH) {
            let preds: Vec<Prediction> = self
                .channel_models
                .iter()
                .filter(|m| m.target() == dim)
                .map(|m| Prediction { value: m.predict(m.channel.read(features)), rss: m.rss, degenerate: m.degenerate })
                .collect();
            *slot = fuse(&preds).map_err(|_| PiersError::DegenerateDimension(dim))?;
        }
        Ok(EmotionalState::saturating(out[0], out[1]))
    }

    /// Text form: a `smoothing_window=N` line followed by
    /// `channel,slope,intercept,rss,degenerate` rows.
    pub fn to_text(&self) -> String {
        let mut s = format!("smoothing_window={}\nchannel,slope,intercept,rss,degenerate\n", self.smoothing_window);
        for m in &self.channel_models {
            s.push_str(&format!("{},{:?},{:?},{:?},{}\n", m.channel.name(), m.slope, m.intercept, m.rss, m.degenerate));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, PiersError> {
        let mut window = DEFAULT_SMOOTHING_WINDOW;
        let mut models = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let err = |reason: String| PiersError::Parse { line: i + 1, reason };
            if line.is_empty() || line.starts_with('#') || line.starts_with("channel,") {
                continue;
            }
            if let Some(v) = line.strip_prefix("smoothing_window=") {
                window = v.trim().parse().map_err(|e| err(format!("{e}")))?;
                continue;
            }
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 5 {
                return Err(err(format!("expected 5 fields, got {}", f.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| err(format!("`{s}`: {e}")));
            models.push(ChannelModel {
                channel: f[0].parse().map_err(err)?,
                slope: num(f[1])?,
                intercept: num(f[2])?,
                rss: num(f[3])?,
                degenerate: f[4].parse().map_err(|e| err(format!("{e}")))?,
            });
        }
        Self::new(models, window)
    }
}

/// Fits one linear model per channel against its target dimension.
pub fn fit_calibration(records: &[CalibrationRecord], smoothing_window: usize) -> Result<PiersModel, PiersError> {
    if records.len() < 2 {
        return Err(PiersError::TooFewRecords(records.len()));
    }
    let mut seen = BTreeSet::new();
    for r in records {
        r.features.validate()?;
        if !seen.insert(r.phase) {
            return Err(PiersError::DuplicatePhase(r.phase));
        }
    }
    let models = Channel::ALL
        .into_iter()
        .map(|channel| {
            let xs: Vec<f64> = records.iter().map(|r| channel.read(&r.features)).collect();
            let ys: Vec<f64> = records.iter().map(|r| r.self_report.get(channel.target())).collect();
            let (slope, intercept, rss, degenerate) = least_squares(&xs, &ys);
            ChannelModel { channel, slope, intercept, rss, degenerate }
        })
        .collect();
    PiersModel::new(models, smoothing_window)
}

/// Self-reports of the built-in synthetic participant, one per phase.
pub const REFERENCE_REPORTS: [(f64, f64); 4] = [(2.0, 7.0), (8.0, 3.0), (6.0, 8.5), (7.5, 2.5)];

/// Physiology of the built-in participant: every channel is an exact
/// linear function of its target dimension.
pub fn reference_features(arousal: f64, valence: f64) -> PhysiologicalSample {
    PhysiologicalSample {
        timestamp: 0.0,
        sc: 2.0 + 0.8 * arousal,
        hr: 60.0 + 5.0 * arousal,
        emg_zyg: 0.05 + 0.09 * valence,
        emg_corr: 0.95 - 0.09 * valence,
    }
}

/// Calibration session of the built-in participant; fits with zero residual.
pub fn reference_calibration() -> Vec<CalibrationRecord> {
    Phase::ALL
        .iter()
        .zip(REFERENCE_REPORTS)
        .map(|(phase, (a, v))| CalibrationRecord {
            phase: *phase,
            features: reference_features(a, v),
            self_report: EmotionalState::saturating(a, v),
        })
        .collect()
}

/// Writes records in the format read by [`parse_calibration`].
pub fn calibration_text(records: &[CalibrationRecord]) -> String {
    let mut out = String::from("phase,sc,hr,emg_zyg,emg_corr,arousal,valence\n");
    for r in records {
        let f = &r.features;
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.phase.name(),
            f.sc,
            f.hr,
            f.emg_zyg,
            f.emg_corr,
            r.self_report.arousal(),
            r.self_report.valence()
        ));
    }
    out
}

/// Parses the calibration text format, one phase per line:
/// `phase,sc,hr,emg_zyg,emg_corr,arousal,valence`. A header row and `#`
/// comments are skipped.
pub fn parse_calibration(text: &str) -> Result<Vec<CalibrationRecord>, PiersError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.to_ascii_lowercase().starts_with("phase,") {
            continue;
        }
        let err = |reason: String| PiersError::Parse { line: i + 1, reason };
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 7 {
            return Err(err(format!("expected 7 fields, got {}", f.len())));
        }
        let phase: Phase = f[0].parse().map_err(err)?;
        let mut v = [0.0; 6];
        for (slot, s) in v.iter_mut().zip(&f[1..]) {
            *slot = s.parse().map_err(|e| err(format!("`{s}`: {e}")))?;
        }
        let features = PhysiologicalSample::new(0.0, v[0], v[1], v[2], v[3]).map_err(|e| err(e.to_string()))?;
        let self_report = EmotionalState::new(v[4], v[5]).map_err(|e| err(e.to_string()))?;
        out.push(CalibrationRecord { phase, features, self_report });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub value: f64,
    pub rss: f64,
    pub degenerate: bool,
}

impl Prediction {
    pub fn new(value: f64, rss: f64) -> Self {
        Self { value, rss, degenerate: false }
    }
}

fn voting(p: &Prediction) -> bool {
    !p.degenerate && p.rss.is_finite() && p.rss >= 0.0 && p.value.is_finite()
}

/// Normalised inverse-RSS weights; degenerate entries get weight zero.
pub fn fusion_weights(predictions: &[Prediction]) -> Result<Vec<f64>, PiersError> {
    let raw: Vec<f64> =
        predictions.iter().map(|p| if voting(p) { 1.0 / (p.rss + FUSION_EPSILON) } else { 0.0 }).collect();
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return Err(PiersError::NoVoters);
    }
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// Weighted mean of predictions with weights proportional to `1 / (rss + ε)`.
pub fn fuse(predictions: &[Prediction]) -> Result<f64, PiersError> {
    let w = fusion_weights(predictions)?;
    let value = predictions.iter().zip(&w).filter(|(_, w)| **w > 0.0).map(|(p, w)| p.value * w).sum::<f64>();
    // Rounding can nudge a convex combination a hair outside its hull.
    let (lo, hi) = predictions
        .iter()
        .filter(|p| voting(p))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.value), hi.max(p.value)));
    Ok(value.clamp(lo, hi))
}

/// Stateful classifier for one stream; holds the smoothing buffer.
#[derive(Debug, Clone)]
pub struct Classifier {
    model: PiersModel,
    history: VecDeque<EmotionalState>,
}

impl Classifier {
    pub fn new(model: PiersModel) -> Self {
        Self { history: VecDeque::with_capacity(model.smoothing_window), model }
    }

    pub fn model(&self) -> &PiersModel {
        &self.model
    }

    pub fn reset(&mut self) {
        self.history.clear();
    }

    /// Classifies a window of samples: per-channel means, per-channel
    /// predictions, fusion, clamping, then the trailing moving average over
    /// the last `smoothing_window` classifications.
    pub fn classify(&mut self, window: &[PhysiologicalSample]) -> Result<EmotionalState, PiersError> {
        let features = window_mean(window)?;
        let raw = self.model.predict(&features)?;
        if self.history.len() == self.model.smoothing_window {
            self.history.pop_front();
        }
        self.history.push_back(raw);
        let n = self.history.len() as f64;
        let (a, v) = self.history.iter().fold((0.0, 0.0), |(a, v), s| (a + s.arousal(), v + s.valence()));
        Ok(EmotionalState::saturating(a / n, v / n))
    }
}

/// Arithmetic mean of every channel over the window. The timestamp is the
/// window's last sample time.
pub fn window_mean(window: &[PhysiologicalSample]) -> Result<PhysiologicalSample, PiersError> {
    let last = window.last().ok_or(PiersError::EmptyWindow)?;
    let n = window.len() as f64;
    let mean = |f: fn(&PhysiologicalSample) -> f64| window.iter().map(f).sum::<f64>() / n;
    Ok(PhysiologicalSample {
        timestamp: last.timestamp,
        sc: mean(|s| s.sc),
        hr: mean(|s| s.hr),
        emg_zyg: mean(|s| s.emg_zyg),
        emg_corr: mean(|s| s.emg_corr),
    })
}

pub const PHYSIO_HEADER: &str = "t,sc,hr,emg_zyg,emg_corr";

/// Reads `t,sc,hr,emg_zyg,emg_corr` rows; the header line is optional.
pub fn parse_physio_csv(text: &str) -> Result<Vec<PhysiologicalSample>, PiersError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (n == 0 && line.starts_with(|c: char| c.is_alphabetic())) {
            continue;
        }
        let err = |reason: String| PiersError::Parse { line: n + 1, reason };
        let f: Vec<f64> = line
            .split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|_| err(format!("bad number `{x}`"))))
            .collect::<Result<_, _>>()?;
        if f.len() != 5 {
            return Err(err(format!("expected 5 fields, got {}", f.len())));
        }
        let s = PhysiologicalSample::new(f[0], f[1], f[2], f[3], f[4]).map_err(|e| err(e.to_string()))?;
        out.push(s);
    }
    Ok(out)
}

/// Offline replay: one classification per sample over the trailing
/// `window_ticks` samples.
pub fn classify_stream(
    model: &PiersModel,
    samples: &[PhysiologicalSample],
    window_ticks: usize,
) -> Result<Vec<(f64, EmotionalState)>, PiersError> {
    if window_ticks == 0 {
        return Err(PiersError::EmptyWindow);
    }
    let mut c = Classifier::new(model.clone());
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| Ok((s.timestamp, c.classify(&samples[(i + 1).saturating_sub(window_ticks)..=i])?)))
        .collect()
}
