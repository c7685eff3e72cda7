//! Deterministic session loop plus the synthetic player that closes it.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::fs;
use std::io;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::av::{Dimension, EmotionalState, PhysiologicalSample};
use crate::clears::{decide, ClearsParams, Condition, DecisionContext, NeutralBaseline};
use crate::eet::av_csv;
use crate::gameplay::{
    best_creature_anchor, distance, maybe_spawn_creature, Action, AvatarState, CreatureOutcome, CreatureParams,
    CreaturePlacement, CreatureState, DetailPool, EnvEventKind, EventTrigger, FearSource, FsmInput, FsmState,
    MovementMode, MovementParams, Outcome, SpawnSchedule,
};
use crate::glados::{
    export_directives, export_log, format_ts, DirectiveLogEntry, DirectiveSink, EventKind, EventLog, EventRecord,
    GladosError, FAINT_DURATION, POST_FAINT_CREATURE_PROBABILITY,
};
use crate::piers::{fit_calibration, PHYSIO_HEADER, reference_calibration, Channel, Classifier, PiersError, PiersModel};
use crate::worldgen::{
    placement_log_text, BlockId, BlockType, Cell, DelayConfig, PlacementEntry, SpawnWeights, WorldEvent, WorldGen,
    WorldgenError, DEFAULT_SPHERE_RADIUS,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("world generation failed at t={t}: {source}")]
    Worldgen { t: f64, source: WorldgenError },
    #[error("classification failed at t={t}: {source}")]
    Piers { t: f64, source: PiersError },
    #[error("event log: {0}")]
    Log(#[from] GladosError),
    #[error("invalid scenario: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Policy {
    Explorer,
    ObjectiveSeeker,
    Fleer,
}

impl Policy {
    pub fn name(self) -> &'static str {
        match self {
            Policy::Explorer => "explorer",
            Policy::ObjectiveSeeker => "objective_seeker",
            Policy::Fleer => "fleer",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Policy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let k: String = s.chars().filter(|c| *c != '_' && *c != '-').collect::<String>().to_ascii_lowercase();
        match k.as_str() {
            "explorer" => Ok(Policy::Explorer),
            "objectiveseeker" => Ok(Policy::ObjectiveSeeker),
            "fleer" => Ok(Policy::Fleer),
            _ => Err(format!("unknown policy `{s}`")),
        }
    }
}

/// Response to one event: a step of `(arousal, valence)` after `latency`
/// seconds, decaying with time constant `tau`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub arousal: f64,
    pub valence: f64,
    pub latency: f64,
    pub tau: f64,
}

impl Kernel {
    /// `(ΔA, ΔV)` contributed `dt` seconds after the event.
    pub fn at(&self, dt: f64) -> (f64, f64) {
        if dt < self.latency {
            return (0.0, 0.0);
        }
        let g = (-(dt - self.latency) / self.tau).exp();
        (self.arousal * g, self.valence * g)
    }

    /// Largest rate of change after onset.
    pub fn max_slope(&self) -> f64 {
        self.arousal.abs().max(self.valence.abs()) / self.tau
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KernelKind {
    Creature,
    Environment,
    Folder,
}

impl KernelKind {
    pub fn for_event(kind: &EventKind) -> Option<KernelKind> {
        match kind {
            EventKind::CreatureSpawn | EventKind::CreatureChaseStart => Some(KernelKind::Creature),
            EventKind::EnvEvent(_) => Some(KernelKind::Environment),
            EventKind::FolderPickup => Some(KernelKind::Folder),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Impulse {
    pub t: f64,
    pub kind: KernelKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPlayerModel {
    pub neutral: EmotionalState,
    pub creature: Kernel,
    pub environment: Kernel,
    pub folder: Kernel,
    /// Gaussian noise on the intended AV, scale units.
    pub noise_sigma: f64,
    /// Gaussian noise per channel before inversion, scale units.
    pub channel_noise: f64,
    pub policy: Policy,
}

impl Default for SyntheticPlayerModel {
    fn default() -> Self {
        Self {
            neutral: EmotionalState::neutral(),
            creature: Kernel { arousal: 3.0, valence: -1.5, latency: 1.5, tau: 8.0 },
            environment: Kernel { arousal: 1.5, valence: -0.5, latency: 1.5, tau: 6.0 },
            folder: Kernel { arousal: 0.5, valence: 1.5, latency: 1.5, tau: 8.0 },
            noise_sigma: 0.1,
            channel_noise: 0.0,
            policy: Policy::Explorer,
        }
    }
}

impl SyntheticPlayerModel {
    pub fn kernel(&self, kind: KernelKind) -> &Kernel {
        match kind {
            KernelKind::Creature => &self.creature,
            KernelKind::Environment => &self.environment,
            KernelKind::Folder => &self.folder,
        }
    }
}

/// Neutral plus every past impulse's kernel, unclamped and noise-free.
pub fn kernel_sum(model: &SyntheticPlayerModel, impulses: &[Impulse], t: f64) -> (f64, f64) {
    impulses.iter().filter(|i| i.t <= t).fold((model.neutral.arousal(), model.neutral.valence()), |(a, v), i| {
        let (da, dv) = model.kernel(i.kind).at(t - i.t);
        (a + da, v + dv)
    })
}

/// Intended emotional state at `t` with additive noise, clamped to scale.
pub fn synth_av(model: &SyntheticPlayerModel, impulses: &[Impulse], t: f64, noise: (f64, f64)) -> EmotionalState {
    let (a, v) = kernel_sum(model, impulses, t);
    EmotionalState::saturating(a + noise.0, v + noise.1)
}

/// Physiology that the given model reads back as `intended`; `noise` is
/// added per channel in scale units before inversion.
pub fn invert_to_sample(model: &PiersModel, intended: EmotionalState, t: f64, noise: [f64; 4]) -> PhysiologicalSample {
    let mut vals = [0.0; 4];
    for (k, ch) in Channel::ALL.into_iter().enumerate() {
        let m = model.model(ch);
        let target = intended.get(ch.target()) + noise[k];
        vals[k] = m.invert(target).unwrap_or(match ch {
            Channel::Sc => 5.0,
            Channel::Hr => 70.0,
            _ => 0.5,
        });
    }
    PhysiologicalSample {
        timestamp: t,
        sc: vals[0].max(0.0),
        hr: vals[1].max(1e-3),
        emg_zyg: vals[2].clamp(0.0, 1.0),
        emg_corr: vals[3].clamp(0.0, 1.0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub condition: Condition,
    pub duration: f64,
    pub tick_period: f64,
    pub delays: DelayConfig,
    pub sphere_radius: f64,
    pub weights: SpawnWeights,
    pub paper_delay: u32,
    pub chalk_delay: u32,
    pub env_detail_delay: u32,
    pub details_per_block: u32,
    pub event_probability: f64,
    /// Chance that a plain tunnel block carries a tripwire.
    pub tripwire_chance: f64,
    pub creature: CreatureParams,
    pub schedule: SpawnSchedule,
    pub movement: MovementParams,
    /// Tunnel-vision fade, intensity per second.
    pub fear_decay: f64,
    pub clears: ClearsParams,
    pub baseline: NeutralBaseline,
    pub faint_duration: f64,
    pub post_faint_creature_probability: f64,
    pub smoothing_window: usize,
    pub window_ticks: usize,
    /// Participant model; the built-in exact-fit participant when absent.
    pub model: Option<PiersModel>,
    pub player: SyntheticPlayerModel,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            condition: Condition::NBF,
            duration: 300.0,
            tick_period: 0.1,
            delays: DelayConfig::default(),
            sphere_radius: DEFAULT_SPHERE_RADIUS,
            weights: SpawnWeights::default(),
            paper_delay: 8,
            chalk_delay: 4,
            env_detail_delay: 2,
            details_per_block: 2,
            event_probability: 0.35,
            tripwire_chance: 0.5,
            creature: CreatureParams::default(),
            schedule: SpawnSchedule::default(),
            movement: MovementParams::default(),
            fear_decay: 0.2,
            clears: ClearsParams::default(),
            baseline: NeutralBaseline::default(),
            faint_duration: FAINT_DURATION,
            post_faint_creature_probability: POST_FAINT_CREATURE_PROBABILITY,
            smoothing_window: 5,
            window_ticks: 10,
            model: None,
            player: SyntheticPlayerModel::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Config(m.into()));
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad("duration must be positive");
        }
        if !(self.tick_period > 0.0 && self.tick_period.is_finite()) {
            return bad("tick period must be positive");
        }
        if self.smoothing_window == 0 || self.window_ticks == 0 {
            return bad("smoothing and classification windows must be positive");
        }
        for p in [self.event_probability, self.tripwire_chance, self.post_faint_creature_probability] {
            if !(0.0..=1.0).contains(&p) {
                return bad("probabilities must lie in [0, 1]");
            }
        }
        if self.player.noise_sigma < 0.0 || self.player.channel_noise < 0.0 {
            return bad("noise must be non-negative");
        }
        for k in [self.player.creature, self.player.environment, self.player.folder] {
            if !(k.tau > 0.0) || k.latency < 0.0 {
                return bad("kernel tau must be positive and latency non-negative");
            }
        }
        if !(self.clears.factor_min > 0.0 && self.clears.factor_min <= self.clears.factor_max) {
            return bad("factor bounds must satisfy 0 < min <= max");
        }
        if !(self.movement.base_speed > 0.0 && self.movement.stamina_duration > 0.0 && self.movement.stamina_regen_time > 0.0) {
            return bad("movement speeds and stamina times must be positive");
        }
        Ok(())
    }

    pub fn piers_model(&self) -> Result<PiersModel, SimError> {
        let m = match &self.model {
            Some(m) => m.clone(),
            None => fit_calibration(&reference_calibration(), self.smoothing_window)
                .map_err(|e| SimError::Config(e.to_string()))?,
        };
        m.with_smoothing_window(self.smoothing_window).map_err(|e| SimError::Config(e.to_string()))
    }

    pub fn ticks(&self) -> u64 {
        (self.duration / self.tick_period).round() as u64
    }
}

/// Per-subsystem random streams, all derived from one seed.
#[derive(Debug, Clone)]
struct Streams {
    world: ChaCha8Rng,
    events: ChaCha8Rng,
    creature: ChaCha8Rng,
    player: ChaCha8Rng,
    noise: ChaCha8Rng,
    details: ChaCha8Rng,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

impl Streams {
    fn new(seed: u64) -> Self {
        Self {
            world: stream(seed, 1),
            events: stream(seed, 2),
            creature: stream(seed, 3),
            player: stream(seed, 4),
            noise: stream(seed, 5),
            details: stream(seed, 6),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub events: Vec<EventRecord>,
    pub av: Vec<(f64, EmotionalState)>,
    /// Noise-free intended state per tick, kept for recovery checks.
    pub intended: Vec<(f64, EmotionalState)>,
    pub physio: Vec<PhysiologicalSample>,
    pub directives: Vec<DirectiveLogEntry>,
    pub placements: Vec<PlacementEntry>,
    pub outcome: Outcome,
    pub end_time: f64,
}

impl SessionRecord {
    pub fn count(&self, pred: impl Fn(&EventKind) -> bool) -> usize {
        self.events.iter().filter(|e| pred(&e.kind)).count()
    }

    pub fn events_tsv(&self) -> String {
        export_log(&self.events)
    }

    pub fn av_csv(&self) -> String {
        av_csv(self.av.iter().copied())
    }

    pub fn physio_csv(&self) -> String {
        let mut out = String::from(PHYSIO_HEADER);
        out.push('\n');
        for s in &self.physio {
            out.push_str(&format!("{},{},{},{},{}\n", format_ts(s.timestamp), s.sc, s.hr, s.emg_zyg, s.emg_corr));
        }
        out
    }

    pub fn directives_tsv(&self) -> String {
        export_directives(&self.directives)
    }

    pub fn outcome_txt(&self) -> String {
        format!("{}\nend_time={}\n", self.outcome, format_ts(self.end_time))
    }

    pub fn placements_csv(&self) -> String {
        placement_log_text(&self.placements)
    }

    /// Writes the session directory, creating it if needed.
    pub fn write_dir(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("events.tsv"), self.events_tsv())?;
        fs::write(dir.join("av.csv"), self.av_csv())?;
        fs::write(dir.join("physio.csv"), self.physio_csv())?;
        fs::write(dir.join("directives.tsv"), self.directives_tsv())?;
        fs::write(dir.join("outcome.txt"), self.outcome_txt())?;
        fs::write(dir.join("placements.csv"), self.placements_csv())?;
        Ok(())
    }
}

const ARRIVE_EPS: f64 = 1e-9;

/// A running session; [`run`] drives it to completion.
pub struct Session {
    cfg: ScenarioConfig,
    rng: Streams,
    world: WorldGen,
    avatar: AvatarState,
    creature: CreatureState,
    retreat_target: Option<[f64; 2]>,
    sink: DirectiveSink,
    classifier: Classifier,
    triggers: Vec<EventTrigger>,
    tripwires: BTreeMap<BlockId, EnvEventKind>,
    details: DetailPool,
    log: EventLog,
    impulses: Vec<Impulse>,
    window: VecDeque<PhysiologicalSample>,
    move_target: Option<BlockId>,
    visited: BTreeSet<BlockId>,
    record: SessionRecord,
    tick: u64,
    killed: bool,
    last_es: EmotionalState,
}

impl Session {
    pub fn new(cfg: ScenarioConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let model = cfg.piers_model()?;
        let triggers = EnvEventKind::ALL.iter().map(|k| EventTrigger::new(*k, cfg.event_probability)).collect();
        let details = DetailPool::standard(cfg.paper_delay, cfg.chalk_delay, cfg.env_detail_delay);
        let mut s = Self {
            rng: Streams::new(cfg.seed),
            world: WorldGen::new(cfg.delays.clone(), cfg.sphere_radius),
            avatar: AvatarState::default(),
            creature: CreatureState::default(),
            retreat_target: None,
            sink: DirectiveSink::default(),
            classifier: Classifier::new(model),
            triggers,
            tripwires: BTreeMap::new(),
            details,
            log: EventLog::new(),
            impulses: Vec::new(),
            window: VecDeque::new(),
            move_target: None,
            visited: BTreeSet::new(),
            record: SessionRecord {
                events: Vec::new(),
                av: Vec::new(),
                intended: Vec::new(),
                physio: Vec::new(),
                directives: Vec::new(),
                placements: Vec::new(),
                outcome: Outcome::Ongoing,
                end_time: 0.0,
            },
            tick: 0,
            killed: false,
            last_es: cfg.player.neutral,
            cfg,
        };
        s.visited.insert(0);
        let weights = s.weights();
        let events = s.world.start(&mut s.rng.world, &weights, 0).map_err(|e| SimError::Worldgen { t: 0.0, source: e })?;
        s.handle_world_events(&events, 0.0)?;
        Ok(s)
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.cfg.tick_period
    }

    pub fn outcome(&self) -> Outcome {
        self.record.outcome
    }

    pub fn finished(&self) -> bool {
        self.record.outcome != Outcome::Ongoing || self.tick >= self.cfg.ticks()
    }

    pub fn world(&self) -> &WorldGen {
        &self.world
    }

    pub fn avatar(&self) -> &AvatarState {
        &self.avatar
    }

    pub fn creature(&self) -> &CreatureState {
        &self.creature
    }

    pub fn sink(&self) -> &DirectiveSink {
        &self.sink
    }

    pub fn last_state(&self) -> EmotionalState {
        self.last_es
    }

    pub fn record(&self) -> &SessionRecord {
        &self.record
    }

    fn weights(&self) -> SpawnWeights {
        let s = &self.sink;
        self.cfg
            .weights
            .scaled(BlockType::KeyRoom1, s.key_room_weight)
            .scaled(BlockType::KeyRoom2, s.key_room_weight)
            .scaled(BlockType::ExitRoom, s.exit_room_weight)
            .scaled(BlockType::EvasionTunnel, s.evasion_weight)
    }

    fn emit(&mut self, record: EventRecord) -> Result<(), SimError> {
        if let Some(k) = KernelKind::for_event(&record.kind) {
            self.impulses.push(Impulse { t: record.timestamp, kind: k });
        }
        self.log.log_event(record.clone())?;
        self.record.events.push(record);
        Ok(())
    }

    fn scare(&mut self, source: FearSource, t: f64) -> Result<(), SimError> {
        self.avatar.feel(Some(source), false);
        if self.avatar.raise_sanity(source) {
            self.emit(EventRecord::new(t, EventKind::SanityLevelUp).param("level", self.avatar.sanity))?;
        }
        Ok(())
    }

    fn spawn_creature(&mut self, placement: CreaturePlacement, t: f64, cause: &str) -> Result<(), SimError> {
        self.creature.spawn(placement);
        self.retreat_target = None;
        self.emit(
            EventRecord::new(t, EventKind::CreatureSpawn)
                .param("block", placement.block)
                .param("anchor", placement.anchor)
                .param("hostility", format!("{:?}", self.creature.hostility))
                .param("cause", cause),
        )?;
        self.scare(FearSource::CreatureAppearance, t)
    }

    fn handle_world_events(&mut self, events: &[WorldEvent], t: f64) -> Result<(), SimError> {
        for ev in events {
            match *ev {
                WorldEvent::Spawned { id, block_type } => {
                    for trig in &mut self.triggers {
                        trig.on_block_spawned();
                    }
                    let details: Vec<String> = (0..self.cfg.details_per_block)
                        .filter_map(|_| self.details.select_detail(&mut self.rng.details).map(|d| d.to_string()))
                        .collect();
                    let plain =
                        matches!(block_type, BlockType::Straight | BlockType::Corner | BlockType::ThreeWay | BlockType::FourWay);
                    let wire_roll = self.rng.events.gen::<f64>();
                    let wire_kind = *EnvEventKind::ALL.choose(&mut self.rng.events).expect("non-empty");
                    if plain && wire_roll < self.cfg.tripwire_chance {
                        self.tripwires.insert(id, wire_kind);
                    }
                    let block = self.world.world().block(id).expect("just spawned").clone();
                    let mut rec = EventRecord::new(t, EventKind::BlockSpawn)
                        .param("id", id)
                        .param("type", block_type)
                        .param("x", block.cell.x)
                        .param("y", block.cell.y);
                    if !details.is_empty() {
                        rec = rec.param("details", details.join("+"));
                    }
                    self.emit(rec)?;
                    if !self.creature.spawned {
                        let placement = maybe_spawn_creature(
                            &block,
                            self.world.world(),
                            &mut self.rng.creature,
                            &self.cfg.schedule,
                            self.sink.creature_scale,
                            self.avatar.position,
                        );
                        if let Some(p) = placement {
                            self.spawn_creature(p, t, "schedule")?;
                        }
                    }
                }
                WorldEvent::Despawned { id, .. } => {
                    self.tripwires.remove(&id);
                    if self.creature.spawned && self.creature_block() == Some(id) {
                        self.creature.despawn();
                    }
                }
            }
        }
        // The creature may stand in a cell that no longer exists.
        if self.creature.spawned && self.creature_block().is_none() {
            self.creature.despawn();
        }
        Ok(())
    }

    fn creature_block(&self) -> Option<BlockId> {
        self.world.world().block_at(Cell::containing(self.creature.position)).map(|b| b.id)
    }

    fn current_block(&self) -> BlockId {
        self.world.sphere().current_block
    }

    fn chasing(&self) -> bool {
        self.creature.spawned && self.creature.fsm == FsmState::Chasing
    }

    /// Picks the next action and, when idle at a block centre, the next
    /// neighbour to walk to.
    fn choose_action(&mut self) -> Action {
        let current = self.world.current_block().clone();
        let chased = self.chasing();
        let policy = self.cfg.player.policy;
        if let Some(f) = folder_of(current.block_type) {
            if !self.avatar.folders_picked[f] && self.move_target.is_none() {
                return Action::Interact;
            }
        }
        let fleeing = chased && policy != Policy::Explorer;
        if fleeing && policy == Policy::Fleer && current.block_type == BlockType::EvasionTunnel && self.move_target.is_none()
        {
            return Action::Crouch;
        }
        if self.move_target.is_none() {
            let world = self.world.world();
            let neighbours: Vec<(BlockId, BlockType, [f64; 2])> = current
                .neighbours()
                .filter_map(|n| world.block(n).map(|b| (n, b.block_type, b.cell.center())))
                .collect();
            // Nobody walks into the creature's block while another way exists.
            let creature_block = self.creature.spawned.then(|| self.creature_block()).flatten();
            let neighbours: Vec<_> = if neighbours.iter().any(|n| Some(n.0) != creature_block) {
                neighbours.into_iter().filter(|n| Some(n.0) != creature_block).collect()
            } else {
                neighbours
            };
            let pick = |rng: &mut ChaCha8Rng, ids: Vec<BlockId>| ids.choose(rng).copied();
            let unvisited_open: Vec<BlockId> = neighbours
                .iter()
                .filter(|(n, t, _)| !self.visited.contains(n) && *t != BlockType::DeadEnd)
                .map(|n| n.0)
                .collect();
            let open: Vec<BlockId> = neighbours.iter().filter(|(_, t, _)| *t != BlockType::DeadEnd).map(|n| n.0).collect();
            let all: Vec<BlockId> = neighbours.iter().map(|n| n.0).collect();
            let explore = |rng: &mut ChaCha8Rng| {
                pick(rng, unvisited_open.clone()).or_else(|| pick(rng, open.clone())).or_else(|| pick(rng, all.clone()))
            };
            let creature = self.creature.position;
            let away = || neighbours.iter().max_by(|a, b| distance(a.2, creature).total_cmp(&distance(b.2, creature)));
            let target = if chased && policy == Policy::Fleer {
                neighbours.iter().find(|(_, t, _)| *t == BlockType::EvasionTunnel).or_else(away).map(|n| n.0)
            } else if chased && policy == Policy::Explorer {
                away().map(|n| n.0)
            } else if policy == Policy::ObjectiveSeeker {
                let wanted: Vec<BlockType> = if self.avatar.folders() < 2 {
                    [(0, BlockType::KeyRoom1), (1, BlockType::KeyRoom2)]
                        .into_iter()
                        .filter(|(f, _)| !self.avatar.folders_picked[*f])
                        .map(|(_, t)| t)
                        .collect()
                } else {
                    vec![BlockType::ExitRoom]
                };
                neighbours.iter().find(|(_, t, _)| wanted.contains(t)).map(|n| n.0).or_else(|| explore(&mut self.rng.player))
            } else {
                explore(&mut self.rng.player)
            };
            self.move_target = target;
        }
        if fleeing && self.avatar.stamina > 0.0 {
            Action::Sprint
        } else {
            Action::Walk
        }
    }

    fn move_avatar(&mut self, speed: f64, dt: f64) {
        let Some(target) = self.move_target else { return };
        let Some(goal) = self.world.world().block(target).map(|b| b.cell.center()) else {
            self.move_target = None;
            return;
        };
        let p = self.avatar.position;
        let (dx, dy) = (goal[0] - p[0], goal[1] - p[1]);
        let d = (dx * dx + dy * dy).sqrt();
        if d > 0.0 {
            self.avatar.heading = [dx / d, dy / d];
        }
        let step = speed * dt;
        if step + ARRIVE_EPS >= d {
            self.avatar.position = goal;
            self.move_target = None;
            self.visited.insert(target);
        } else if step > 0.0 {
            self.avatar.position = [p[0] + dx / d * step, p[1] + dy / d * step];
        }
    }

    /// Shortest link path in the loaded world.
    fn path(&self, from: BlockId, to: BlockId) -> Option<Vec<BlockId>> {
        let world = self.world.world();
        let mut prev: BTreeMap<BlockId, BlockId> = BTreeMap::new();
        let mut queue = VecDeque::from([from]);
        let mut seen = BTreeSet::from([from]);
        while let Some(b) = queue.pop_front() {
            if b == to {
                let mut path = vec![to];
                let mut cur = to;
                while let Some(p) = prev.get(&cur) {
                    path.push(*p);
                    cur = *p;
                }
                path.reverse();
                return Some(path);
            }
            for n in world.block(b)?.neighbours() {
                if seen.insert(n) {
                    prev.insert(n, b);
                    queue.push_back(n);
                }
            }
        }
        None
    }

    fn move_creature(&mut self, dt: f64) {
        if !self.creature.spawned {
            return;
        }
        let goal = match self.creature.fsm {
            FsmState::Chasing => {
                let (Some(cb), pb) = (self.creature_block(), self.current_block()) else { return };
                if cb == pb {
                    Some(self.avatar.position)
                } else {
                    self.path(cb, pb).and_then(|p| p.get(1).copied()).and_then(|n| self.world.world().block(n)).map(|b| {
                        let here = self.world.world().block(cb).expect("loaded").cell.center();
                        // Walk through the centre of the current block first.
                        if distance(self.creature.position, here) > 1e-9
                            && Cell::containing(self.creature.position) == Cell::containing(here)
                            && !on_segment(self.creature.position, here, b.cell.center())
                        {
                            here
                        } else {
                            b.cell.center()
                        }
                    })
                }
            }
            FsmState::Retreat => self.retreat_target,
            _ => None,
        };
        let Some(goal) = goal else { return };
        let p = self.creature.position;
        let d = distance(p, goal);
        let step = self.cfg.creature.speed * dt;
        self.creature.position = if step >= d {
            goal
        } else {
            [p[0] + (goal[0] - p[0]) / d * step, p[1] + (goal[1] - p[1]) / d * step]
        };
    }

    fn pick_retreat_target(&self) -> Option<[f64; 2]> {
        let cb = self.creature_block()?;
        let world = self.world.world();
        let block = world.block(cb)?;
        let player = self.avatar.position;
        block
            .neighbours()
            .filter_map(|n| world.block(n))
            .map(|b| b.cell.center())
            .filter(|c| Cell::containing(*c) != Cell::containing(player))
            .max_by(|a, b| distance(*a, player).total_cmp(&distance(*b, player)))
            .or(Some(block.cell.center()))
    }

    fn step_creature(&mut self, t: f64) -> Result<(), SimError> {
        if !self.creature.spawned {
            return Ok(());
        }
        let before = self.creature.fsm;
        let input = FsmInput {
            distance: distance(self.creature.position, self.avatar.position),
            block_hops: self.creature_block().and_then(|cb| self.world.world().hops(cb, self.current_block())),
            player_in_evasion_tunnel: self.world.current_block().block_type == BlockType::EvasionTunnel,
            player_crouched: self.avatar.movement_mode == MovementMode::Crouch,
            reached_retreat_target: self.retreat_target.is_some_and(|g| distance(g, self.creature.position) < 1e-6),
        };
        let folders = self.avatar.folders();
        let total = self.world.world().total_spawned();
        let outcomes = self.creature.step_fsm(&input, &self.cfg.creature, folders, total, &mut self.rng.creature);
        if self.creature.spawned && self.creature.fsm == FsmState::Chasing && before != FsmState::Chasing {
            self.emit(EventRecord::new(t, EventKind::CreatureChaseStart))?;
        }
        let retreated = outcomes.contains(&CreatureOutcome::RetreatIncrement)
            || (self.creature.fsm == FsmState::Retreat && before != FsmState::Retreat);
        if self.creature.fsm == FsmState::Retreat && before != FsmState::Retreat {
            self.retreat_target = self.pick_retreat_target();
        }
        if retreated {
            self.emit(EventRecord::new(t, EventKind::CreatureRetreat).param("count", self.creature.retreat_count))?;
        }
        if outcomes.contains(&CreatureOutcome::Kill) {
            self.killed = true;
        }
        let looking = {
            let (dx, dy) = (self.creature.position[0] - self.avatar.position[0], self.creature.position[1] - self.avatar.position[1]);
            dx * self.avatar.heading[0] + dy * self.avatar.heading[1] > 0.0
        };
        if self.chasing() {
            self.avatar.feel(None, looking);
        }
        Ok(())
    }

    fn enter_block(&mut self, id: BlockId, t: f64) -> Result<(), SimError> {
        if let Some(kind) = self.tripwires.remove(&id) {
            let scale = self.sink.env_scale;
            let trig = self.triggers.iter_mut().find(|x| x.kind == kind).expect("one trigger per kind");
            if trig.try_trigger_scaled(&mut self.rng.events, scale).is_some() {
                self.emit(EventRecord::new(t, EventKind::EnvEvent(kind)).param("block", id))?;
                self.scare(FearSource::Environmental(kind), t)?;
            }
        }
        Ok(())
    }

    /// Advances one tick. Returns false once the session is over.
    pub fn step(&mut self) -> Result<bool, SimError> {
        if self.finished() {
            return Ok(false);
        }
        let t = self.time();
        let dt = self.cfg.tick_period;

        // Synthetic player emits physiology for its intended state.
        let normal = |s: f64| Normal::new(0.0, s).expect("sigma validated");
        let clean = synth_av(&self.cfg.player, &self.impulses, t, (0.0, 0.0));
        let noise = if self.cfg.player.noise_sigma > 0.0 {
            let n = normal(self.cfg.player.noise_sigma);
            (n.sample(&mut self.rng.noise), n.sample(&mut self.rng.noise))
        } else {
            (0.0, 0.0)
        };
        let intended = synth_av(&self.cfg.player, &self.impulses, t, noise);
        let mut ch_noise = [0.0; 4];
        if self.cfg.player.channel_noise > 0.0 {
            let n = normal(self.cfg.player.channel_noise);
            for x in &mut ch_noise {
                *x = n.sample(&mut self.rng.noise);
            }
        }
        let sample = invert_to_sample(self.classifier.model(), intended, t, ch_noise);
        self.record.physio.push(sample);
        self.record.intended.push((t, clean));
        if self.window.len() == self.cfg.window_ticks {
            self.window.pop_front();
        }
        self.window.push_back(sample);

        // Classification.
        let window: Vec<PhysiologicalSample> = self.window.iter().copied().collect();
        let es = self.classifier.classify(&window).map_err(|e| SimError::Piers { t, source: e })?;
        self.last_es = es;
        self.record.av.push((t, es));

        // Decision and execution.
        let ctx = DecisionContext { folders: self.avatar.folders(), chasing: self.chasing() };
        let directives = decide(self.cfg.condition, es, ctx, self.cfg.baseline, &self.cfg.clears);
        let report = self.sink.apply(&directives);
        for d in report.changed {
            self.record.directives.push(DirectiveLogEntry { timestamp: t, directive: d });
        }
        if report.faint && !self.avatar.fainted {
            self.avatar.faint(self.cfg.faint_duration);
            self.move_target = None;
            self.emit(EventRecord::new(t, EventKind::Faint).param("arousal", crate::clears::fmt_real(es.arousal())))?;
            let roll = self.rng.creature.gen::<f64>();
            if !self.creature.spawned && roll < self.cfg.post_faint_creature_probability {
                let here = self.world.current_block().clone();
                if let Some((anchor, point)) = best_creature_anchor(&here, self.avatar.position) {
                    self.spawn_creature(CreaturePlacement { block: here.id, anchor, point }, t, "faint")?;
                }
            }
        }

        // Gameplay and world.
        self.avatar.tick_faint(dt);
        let action = if self.avatar.fainted { Action::Walk } else { self.choose_action() };
        let current = self.world.current_block().clone();
        let folder = folder_of(current.block_type).filter(|_| action == Action::Interact);
        let had = self.avatar.folders();
        let speed = self.avatar.update_avatar(action, dt, &self.cfg.movement, &self.sink.sprint, folder);
        if self.avatar.folders() > had {
            self.emit(
                EventRecord::new(t, EventKind::FolderPickup)
                    .param("folder", folder.expect("picked") + 1)
                    .param("total", self.avatar.folders()),
            )?;
        }
        self.move_avatar(speed, dt);
        let weights = self.weights();
        let events = self
            .world
            .step_sphere(self.avatar.position, &mut self.rng.world, &weights, self.tick)
            .map_err(|e| SimError::Worldgen { t, source: e })?;
        self.handle_world_events(&events, t)?;
        let now = self.current_block();
        if now != current.id {
            self.enter_block(now, t)?;
        }
        self.move_creature(dt);
        self.step_creature(t)?;
        self.creature.escalate(self.avatar.folders(), self.world.world().total_spawned());
        self.avatar.decay_fear(dt, self.cfg.fear_decay);

        let outcome = crate::gameplay::check_outcome(self.record.outcome, &self.avatar, self.world.world(), self.killed);
        if outcome != self.record.outcome {
            self.record.outcome = outcome;
            let kind = if outcome == Outcome::Win { EventKind::Win } else { EventKind::Lose };
            self.emit(EventRecord::new(t, kind).param("folders", self.avatar.folders()))?;
        }
        self.record.end_time = t;
        self.tick += 1;
        Ok(!self.finished())
    }

    pub fn finish(mut self) -> SessionRecord {
        self.record.placements = self.world.log().to_vec();
        self.record
    }
}

fn folder_of(t: BlockType) -> Option<usize> {
    match t {
        BlockType::KeyRoom1 => Some(0),
        BlockType::KeyRoom2 => Some(1),
        _ => None,
    }
}

fn on_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> bool {
    let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
    let dot = (p[0] - a[0]) * (b[0] - a[0]) + (p[1] - a[1]) * (b[1] - a[1]);
    cross.abs() < 1e-9 && dot >= 0.0
}

/// Runs a whole session.
pub fn run(cfg: &ScenarioConfig) -> Result<SessionRecord, SimError> {
    let mut s = Session::new(cfg.clone())?;
    while s.step()? {}
    Ok(s.finish())
}

/// Mean absolute deviation from the neutral arousal over the first
/// `horizon` seconds.
pub fn mean_arousal_deviation(rec: &SessionRecord, arousal0: f64, horizon: f64) -> f64 {
    let xs: Vec<f64> = rec.av.iter().filter(|(t, _)| *t <= horizon + 1e-9).map(|(_, s)| (s.arousal() - arousal0).abs()).collect();
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Trace of one dimension of the recorded classification.
pub fn av_values(rec: &SessionRecord, dim: Dimension) -> Vec<f64> {
    rec.av.iter().map(|(_, s)| s.get(dim)).collect()
}
