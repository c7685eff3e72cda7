//! In-world mechanics: block details, tripwire events, the creature, the
//! avatar and the win/lose rules.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::worldgen::{Block, BlockId, BlockType, Cell, WorldGraph};

// ---------------------------------------------------------------------------
// Block details

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EnvDetail {
    WallLight,
    WaterDripping,
    VerticalPipe,
    Steam,
    WaterSplash,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DetailKind {
    Paper(u8),
    Chalk(u8),
    Env(EnvDetail),
}

impl fmt::Display for DetailKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DetailKind::Paper(i) => write!(f, "Paper_{i}"),
            DetailKind::Chalk(i) => write!(f, "Chalk_{i}"),
            DetailKind::Env(e) => write!(f, "Env_{e:?}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct DetailSlot {
    kind: DetailKind,
    delay: u32,
    remaining: u32,
}

/// Detail kinds with their re-spawn delays, counted in filled slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetailPool {
    slots: Vec<DetailSlot>,
}

impl DetailPool {
    pub fn new(kinds: impl IntoIterator<Item = (DetailKind, u32)>) -> Self {
        Self { slots: kinds.into_iter().map(|(kind, delay)| DetailSlot { kind, delay, remaining: 0 }).collect() }
    }

    /// Seven papers, six chalk marks and the five environmental details.
    pub fn standard(paper_delay: u32, chalk_delay: u32, env_delay: u32) -> Self {
        let papers = (1..=7).map(|i| (DetailKind::Paper(i), paper_delay));
        let chalk = (1..=6).map(|i| (DetailKind::Chalk(i), chalk_delay));
        let env = [EnvDetail::WallLight, EnvDetail::WaterDripping, EnvDetail::VerticalPipe, EnvDetail::Steam, EnvDetail::WaterSplash]
            .into_iter()
            .map(|e| (DetailKind::Env(e), env_delay));
        Self::new(papers.chain(chalk).chain(env))
    }

    pub fn remaining(&self, kind: DetailKind) -> Option<u32> {
        self.slots.iter().find(|s| s.kind == kind).map(|s| s.remaining)
    }

    pub fn set_remaining(&mut self, kind: DetailKind, n: u32) {
        if let Some(s) = self.slots.iter_mut().find(|s| s.kind == kind) {
            s.remaining = n;
        }
    }

    pub fn eligible(&self) -> Vec<DetailKind> {
        self.slots.iter().filter(|s| s.remaining == 0).map(|s| s.kind).collect()
    }

    /// Fills one detail slot: uniform over kinds not in delay. Every call
    /// counts down the other kinds' delays by one; an all-delayed pool leaves
    /// the slot empty.
    pub fn select_detail<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<DetailKind> {
        let eligible: Vec<usize> = (0..self.slots.len()).filter(|i| self.slots[*i].remaining == 0).collect();
        let chosen = (!eligible.is_empty()).then(|| eligible[rng.gen_range(0..eligible.len())]);
        for (i, s) in self.slots.iter_mut().enumerate() {
            if Some(i) == chosen {
                s.remaining = s.delay;
            } else {
                s.remaining = s.remaining.saturating_sub(1);
            }
        }
        chosen.map(|i| self.slots[i].kind)
    }
}

// ---------------------------------------------------------------------------
// Environmental events

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EnvEventKind {
    Explosion,
    Bugs,
    LightBlast,
    PipeSteamBurst,
    PipeWaterBurst,
    PipeFall,
}

impl EnvEventKind {
    pub const ALL: [EnvEventKind; 6] = [
        EnvEventKind::Explosion,
        EnvEventKind::Bugs,
        EnvEventKind::LightBlast,
        EnvEventKind::PipeSteamBurst,
        EnvEventKind::PipeWaterBurst,
        EnvEventKind::PipeFall,
    ];

    /// Blocks that must spawn before the event can fire again. The explosion
    /// has no delay but fires once per session.
    pub fn delay_blocks(self) -> u32 {
        match self {
            EnvEventKind::Explosion => 0,
            EnvEventKind::Bugs => 20,
            EnvEventKind::LightBlast | EnvEventKind::PipeSteamBurst | EnvEventKind::PipeWaterBurst => 15,
            EnvEventKind::PipeFall => 10,
        }
    }

    pub fn one_shot(self) -> bool {
        self == EnvEventKind::Explosion
    }

    pub fn name(self) -> &'static str {
        match self {
            EnvEventKind::Explosion => "Explosion",
            EnvEventKind::Bugs => "Bugs",
            EnvEventKind::LightBlast => "LightBlast",
            EnvEventKind::PipeSteamBurst => "PipeSteamBurst",
            EnvEventKind::PipeWaterBurst => "PipeWaterBurst",
            EnvEventKind::PipeFall => "PipeFall",
        }
    }
}

impl fmt::Display for EnvEventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvEventKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        EnvEventKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| format!("unknown event `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventTrigger {
    pub kind: EnvEventKind,
    pub probability: f64,
    pub delay_blocks: u32,
    pub remaining_delay: u32,
    pub fired_once: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventOccurrence {
    pub kind: EnvEventKind,
}

impl EventTrigger {
    pub fn new(kind: EnvEventKind, probability: f64) -> Self {
        Self { kind, probability, delay_blocks: kind.delay_blocks(), remaining_delay: 0, fired_once: false }
    }

    pub fn ready(&self) -> bool {
        self.remaining_delay == 0 && !(self.kind.one_shot() && self.fired_once)
    }

    pub fn try_trigger<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<EventOccurrence> {
        self.try_trigger_scaled(rng, 1.0)
    }

    /// Player stepped on the tripwire. The configured probability is
    /// multiplied by `scale` and clamped onto `[0, 1]`.
    pub fn try_trigger_scaled<R: Rng + ?Sized>(&mut self, rng: &mut R, scale: f64) -> Option<EventOccurrence> {
        if !self.ready() {
            return None;
        }
        let p = (self.probability * scale).clamp(0.0, 1.0);
        if rng.gen::<f64>() < p {
            self.remaining_delay = self.delay_blocks;
            self.fired_once = true;
            Some(EventOccurrence { kind: self.kind })
        } else {
            None
        }
    }

    pub fn on_block_spawned(&mut self) {
        self.remaining_delay = self.remaining_delay.saturating_sub(1);
    }
}

// ---------------------------------------------------------------------------
// Creature

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Hostility {
    Passive,
    PassiveAggressive,
    Aggressive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FsmState {
    Passive,
    Searching,
    Chasing,
    Retreat,
}

pub const MAX_RETREATS: u8 = 3;
pub const AGGRESSIVE_AFTER_BLOCKS: u64 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HostilityContext {
    pub folders: u8,
    pub total_spawned: u64,
    pub retreat_count: u8,
}

/// Escalates hostility; never downgrades.
pub fn update_hostility(current: Hostility, ctx: HostilityContext) -> Hostility {
    let target = if ctx.total_spawned >= AGGRESSIVE_AFTER_BLOCKS || ctx.folders >= 2 || ctx.retreat_count >= MAX_RETREATS {
        Hostility::Aggressive
    } else if ctx.folders >= 1 {
        Hostility::PassiveAggressive
    } else {
        Hostility::Passive
    };
    current.max(target)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CreaturePlacement {
    pub block: BlockId,
    pub anchor: usize,
    pub point: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CreatureOutcome {
    Despawn,
    Kill,
    RetreatIncrement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreatureParams {
    /// Distance (cells) at which the player is noticed.
    pub proximity: f64,
    pub attack_range: f64,
    /// Chase ends when the player is more than this many blocks away.
    pub escape_blocks: u32,
    /// Chance a passive-aggressive creature chases instead of retreating.
    pub chase_probability: f64,
    /// Movement speed, cells per second.
    pub speed: f64,
}

impl Default for CreatureParams {
    fn default() -> Self {
        Self { proximity: 2.0, attack_range: 0.5, escape_blocks: 2, chase_probability: 0.5, speed: 2.5 }
    }
}

/// What the creature perceives this tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FsmInput {
    pub distance: f64,
    /// Links between the creature's block and the player's; `None` once the
    /// creature's block is gone.
    pub block_hops: Option<u32>,
    pub player_in_evasion_tunnel: bool,
    pub player_crouched: bool,
    pub reached_retreat_target: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreatureState {
    pub hostility: Hostility,
    pub fsm: FsmState,
    pub retreat_count: u8,
    pub spawned: bool,
    pub placement: Option<CreaturePlacement>,
    pub position: [f64; 2],
}

impl Default for CreatureState {
    fn default() -> Self {
        Self {
            hostility: Hostility::Passive,
            fsm: FsmState::Passive,
            retreat_count: 0,
            spawned: false,
            placement: None,
            position: [0.0, 0.0],
        }
    }
}

impl CreatureState {
    fn idle_state(&self) -> FsmState {
        if self.hostility == Hostility::Aggressive {
            FsmState::Searching
        } else {
            FsmState::Passive
        }
    }

    pub fn spawn(&mut self, placement: CreaturePlacement) {
        self.spawned = true;
        self.placement = Some(placement);
        self.position = placement.point;
        self.fsm = self.idle_state();
    }

    pub fn despawn(&mut self) {
        self.spawned = false;
        self.placement = None;
        self.fsm = self.idle_state();
    }

    pub fn escalate(&mut self, folders: u8, total_spawned: u64) {
        self.hostility =
            update_hostility(self.hostility, HostilityContext { folders, total_spawned, retreat_count: self.retreat_count });
        if self.hostility != Hostility::Aggressive {
            debug_assert!(self.fsm != FsmState::Searching);
        }
    }

    fn retreat(&mut self, out: &mut Vec<CreatureOutcome>) {
        if self.hostility != Hostility::Aggressive && self.retreat_count < MAX_RETREATS {
            self.retreat_count += 1;
            out.push(CreatureOutcome::RetreatIncrement);
        }
    }

    /// Advances the state machine one tick and applies its own bookkeeping:
    /// retreat counting, hostility escalation and despawning.
    pub fn step_fsm<R: Rng + ?Sized>(
        &mut self,
        input: &FsmInput,
        params: &CreatureParams,
        folders: u8,
        total_spawned: u64,
        rng: &mut R,
    ) -> Vec<CreatureOutcome> {
        let mut out = Vec::new();
        if !self.spawned {
            return out;
        }
        let near = input.distance <= params.proximity;
        match self.fsm {
            FsmState::Passive if near => match self.hostility {
                Hostility::Passive => {
                    self.retreat(&mut out);
                    out.push(CreatureOutcome::Despawn);
                }
                Hostility::PassiveAggressive => {
                    if rng.gen::<f64>() < params.chase_probability {
                        self.fsm = FsmState::Chasing;
                    } else {
                        self.retreat(&mut out);
                        out.push(CreatureOutcome::Despawn);
                    }
                }
                // Escalated while peeking: behaves as if searching.
                Hostility::Aggressive => self.fsm = FsmState::Chasing,
            },
            FsmState::Searching if near => self.fsm = FsmState::Chasing,
            FsmState::Chasing => {
                if input.block_hops.map_or(true, |h| h > params.escape_blocks) {
                    out.push(CreatureOutcome::Despawn);
                } else if input.player_in_evasion_tunnel && input.player_crouched {
                    self.fsm = FsmState::Retreat;
                    self.retreat(&mut out);
                } else if input.distance <= params.attack_range {
                    out.push(CreatureOutcome::Kill);
                }
            }
            FsmState::Retreat if input.reached_retreat_target => {}
            _ => {}
        }
        self.escalate(folders, total_spawned);
        if self.fsm == FsmState::Retreat && input.reached_retreat_target {
            self.fsm = self.idle_state();
        }
        if out.contains(&CreatureOutcome::Despawn) {
            self.despawn();
        }
        out
    }
}

/// Creature spawn chance as a function of blocks spawned so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpawnSchedule {
    pub p0: f64,
    pub k: f64,
    pub pmax: f64,
}

impl Default for SpawnSchedule {
    fn default() -> Self {
        Self { p0: 0.05, k: 0.005, pmax: 0.5 }
    }
}

impl SpawnSchedule {
    pub fn base_probability(&self, total_spawned: u64) -> f64 {
        (self.p0 + self.k * total_spawned as f64).clamp(0.0, self.pmax)
    }

    pub fn probability(&self, total_spawned: u64, scale: f64) -> f64 {
        (self.base_probability(total_spawned) * scale).clamp(0.0, 1.0)
    }
}

/// Ambush points: just inside each block entrance.
pub fn creature_anchors(block: &Block) -> Vec<[f64; 2]> {
    let c = block.cell.center();
    block
        .anchors
        .iter()
        .map(|a| {
            let (dx, dy) = a.dir.delta();
            [c[0] + 0.35 * dx as f64, c[1] + 0.35 * dy as f64]
        })
        .collect()
}

pub fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// The creature anchor farthest from the player; earliest index on ties.
pub fn best_creature_anchor(block: &Block, player: [f64; 2]) -> Option<(usize, [f64; 2])> {
    creature_anchors(block)
        .into_iter()
        .enumerate()
        .fold(None, |best: Option<(usize, [f64; 2])>, (i, p)| match best {
            Some((_, bp)) if distance(bp, player) >= distance(p, player) => best,
            _ => Some((i, p)),
        })
}

/// Rolls the creature spawn on a freshly spawned block. One uniform draw is
/// consumed on every call so that runs differing only in `scale` stay aligned.
pub fn maybe_spawn_creature<R: Rng + ?Sized>(
    block: &Block,
    world: &WorldGraph,
    rng: &mut R,
    schedule: &SpawnSchedule,
    scale: f64,
    player: [f64; 2],
) -> Option<CreaturePlacement> {
    let roll = rng.gen::<f64>();
    let (anchor, point) = best_creature_anchor(block, player)?;
    (roll < schedule.probability(world.total_spawned(), scale)).then_some(CreaturePlacement { block: block.id, anchor, point })
}

// ---------------------------------------------------------------------------
// Avatar

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MovementMode {
    Walk,
    Sprint,
    Crouch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Walk,
    Sprint,
    Crouch,
    Interact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovementParams {
    /// Cells per second.
    pub base_speed: f64,
    pub sprint_mult: f64,
    pub crouch_mult: f64,
    /// Seconds of sprint from full stamina.
    pub stamina_duration: f64,
    /// Seconds to refill stamina from empty.
    pub stamina_regen_time: f64,
}

impl Default for MovementParams {
    fn default() -> Self {
        Self { base_speed: 3.0, sprint_mult: 1.6, crouch_mult: 0.5, stamina_duration: 6.0, stamina_regen_time: 10.0 }
    }
}

/// Sprint adjustments pushed by the visible-feedback rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Modifiers {
    pub sprint_speed_mult: f64,
    pub sprint_duration_mult: f64,
}

impl Default for Modifiers {
    fn default() -> Self {
        Self { sprint_speed_mult: 1.0, sprint_duration_mult: 1.0 }
    }
}

pub const MAX_SANITY: u8 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SanityEffects {
    pub heavy_breathing: bool,
    pub auditory_hallucinations: bool,
    pub dizziness: bool,
    pub bug_visuals: bool,
}

impl SanityEffects {
    pub fn for_level(level: u8) -> Self {
        Self {
            heavy_breathing: level >= 2,
            auditory_hallucinations: level >= 3,
            dizziness: level >= 4,
            bug_visuals: level >= 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvatarState {
    pub position: [f64; 2],
    /// Unit facing direction.
    pub heading: [f64; 2],
    pub movement_mode: MovementMode,
    pub speed: f64,
    pub stamina: f64,
    pub sanity: u8,
    pub effects: SanityEffects,
    pub folders_picked: [bool; 2],
    pub fear_intensity: f64,
    pub camera_shake: bool,
    pub fainted: bool,
    pub faint_remaining: f64,
}

impl Default for AvatarState {
    fn default() -> Self {
        Self {
            position: [0.0, 0.0],
            heading: [0.0, -1.0],
            movement_mode: MovementMode::Walk,
            speed: 0.0,
            stamina: 1.0,
            sanity: 1,
            effects: SanityEffects::default(),
            folders_picked: [false; 2],
            fear_intensity: 0.0,
            camera_shake: false,
            fainted: false,
            faint_remaining: 0.0,
        }
    }
}

impl AvatarState {
    pub fn folders(&self) -> u8 {
        self.folders_picked.iter().filter(|p| **p).count() as u8
    }

    pub fn cell(&self) -> Cell {
        Cell::containing(self.position)
    }

    /// Applies one control action for `dt` seconds. `near_folder` names the
    /// folder (0 or 1) within reach, if any. Actions are ignored while fainted.
    pub fn update_avatar(
        &mut self,
        action: Action,
        dt: f64,
        params: &MovementParams,
        modifiers: &Modifiers,
        near_folder: Option<usize>,
    ) -> f64 {
        if self.fainted {
            self.speed = 0.0;
            return 0.0;
        }
        let sprint_duration = params.stamina_duration * modifiers.sprint_duration_mult;
        let regen = dt / params.stamina_regen_time;
        let (mode, speed) = match action {
            Action::Sprint if self.stamina > 0.0 => {
                self.stamina = (self.stamina - dt / sprint_duration).max(0.0);
                (MovementMode::Sprint, params.base_speed * params.sprint_mult * modifiers.sprint_speed_mult)
            }
            Action::Sprint => (MovementMode::Walk, params.base_speed),
            Action::Crouch => {
                self.stamina = (self.stamina + regen).min(1.0);
                (MovementMode::Crouch, params.base_speed * params.crouch_mult)
            }
            Action::Walk => {
                self.stamina = (self.stamina + regen).min(1.0);
                (MovementMode::Walk, params.base_speed)
            }
            Action::Interact => {
                self.stamina = (self.stamina + regen).min(1.0);
                if let Some(f) = near_folder.filter(|f| *f < 2) {
                    self.folders_picked[f] = true;
                }
                (MovementMode::Walk, 0.0)
            }
        };
        self.movement_mode = mode;
        self.speed = speed;
        speed
    }

    pub fn faint(&mut self, duration: f64) {
        self.fainted = true;
        self.faint_remaining = duration;
        self.speed = 0.0;
    }

    /// Counts down a blackout; returns true on the tick the avatar wakes.
    pub fn tick_faint(&mut self, dt: f64) -> bool {
        if !self.fainted {
            return false;
        }
        self.faint_remaining -= dt;
        if self.faint_remaining <= 1e-9 {
            self.fainted = false;
            self.faint_remaining = 0.0;
            return true;
        }
        false
    }

    pub fn raise_sanity(&mut self, source: FearSource) -> bool {
        let before = self.sanity;
        self.sanity = update_sanity(self.sanity, Some(source));
        self.effects = SanityEffects::for_level(self.sanity);
        self.sanity != before
    }

    pub fn feel(&mut self, source: Option<FearSource>, chasing_and_looking: bool) {
        let e = fear_intensity(source, chasing_and_looking);
        self.fear_intensity = self.fear_intensity.max(e.intensity);
        self.camera_shake |= e.camera_shake;
    }

    /// Linear fade of the tunnel-vision effect.
    pub fn decay_fear(&mut self, dt: f64, rate: f64) {
        self.fear_intensity = (self.fear_intensity - rate * dt).max(0.0);
        if self.fear_intensity == 0.0 {
            self.camera_shake = false;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FearSource {
    Environmental(EnvEventKind),
    CreatureAppearance,
}

/// One level per event, capped at 4; no event leaves the level unchanged.
pub fn update_sanity(level: u8, event: Option<FearSource>) -> u8 {
    match event {
        Some(_) => (level + 1).min(MAX_SANITY),
        None => level,
    }
}

pub const ENV_FEAR: f64 = 0.3;
pub const CREATURE_FEAR: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FearEffect {
    pub intensity: f64,
    pub camera_shake: bool,
}

pub fn fear_intensity(source: Option<FearSource>, chasing_and_looking: bool) -> FearEffect {
    if chasing_and_looking {
        return FearEffect { intensity: 1.0, camera_shake: true };
    }
    let intensity = match source {
        Some(FearSource::Environmental(_)) => ENV_FEAR,
        Some(FearSource::CreatureAppearance) => CREATURE_FEAR,
        None => 0.0,
    };
    FearEffect { intensity, camera_shake: false }
}

// ---------------------------------------------------------------------------
// Outcome

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Ongoing,
    Win,
    Lose,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Ongoing => "Ongoing",
            Outcome::Win => "Win",
            Outcome::Lose => "Lose",
        })
    }
}

impl FromStr for Outcome {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "Ongoing" => Ok(Outcome::Ongoing),
            "Win" => Ok(Outcome::Win),
            "Lose" => Ok(Outcome::Lose),
            other => Err(format!("unknown outcome `{other}`")),
        }
    }
}

/// Win needs both folders inside an exit room; a kill loses wherever the
/// avatar stands. Terminal outcomes stick.
pub fn check_outcome(previous: Outcome, avatar: &AvatarState, world: &WorldGraph, killed: bool) -> Outcome {
    if previous != Outcome::Ongoing {
        return previous;
    }
    if killed {
        return Outcome::Lose;
    }
    let in_exit = world.block_at(avatar.cell()).is_some_and(|b| b.block_type == BlockType::ExitRoom);
    if avatar.folders() == 2 && in_exit {
        Outcome::Win
    } else {
        Outcome::Ongoing
    }
}
