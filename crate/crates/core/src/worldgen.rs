//! Procedural block-graph level generation.
//!
//! Blocks live on a unit grid, one cell each, rotated in quarter turns. Every
//! block end carries an anchor; a spawned block is attached through one of its
//! anchors to the anchor that requested it. The spawning sphere follows the
//! player: entering a block activates it and fills its free anchors, leaving a
//! block deactivates it and drops its neighbours, keeping the block the sphere
//! is now in together with that block's own neighbours.
//!
//! Clearance rule: every outward anchor of a freshly placed block must face a
//! cell that is empty and not already faced by another open anchor. Each empty
//! cell is therefore claimed by at most one open anchor, which keeps occupancy
//! collision-free without any lookahead.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type BlockId = u64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldgenError {
    #[error("no block type is eligible for selection")]
    NoEligibleType,
    #[error("no legal placement at anchor {anchor} of block {block}")]
    NoPlacement { block: BlockId, anchor: usize },
    #[error("sphere moved to cell ({x}, {y}) which is not a block linked to the current one")]
    SphereOffGraph { x: i32, y: i32 },
    #[error("unknown block {0}")]
    UnknownBlock(BlockId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BlockType {
    Straight,
    Corner,
    ThreeWay,
    FourWay,
    DeadEnd,
    KeyRoom1,
    KeyRoom2,
    ExitRoom,
    EvasionTunnel,
}

impl BlockType {
    pub const ALL: [BlockType; 9] = [
        BlockType::Straight,
        BlockType::Corner,
        BlockType::ThreeWay,
        BlockType::FourWay,
        BlockType::DeadEnd,
        BlockType::KeyRoom1,
        BlockType::KeyRoom2,
        BlockType::ExitRoom,
        BlockType::EvasionTunnel,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            BlockType::Straight => "Straight",
            BlockType::Corner => "Corner",
            BlockType::ThreeWay => "ThreeWay",
            BlockType::FourWay => "FourWay",
            BlockType::DeadEnd => "DeadEnd",
            BlockType::KeyRoom1 => "KeyRoom1",
            BlockType::KeyRoom2 => "KeyRoom2",
            BlockType::ExitRoom => "ExitRoom",
            BlockType::EvasionTunnel => "EvasionTunnel",
        }
    }

    /// Anchor directions at rotation 0.
    pub fn base_anchors(self) -> &'static [Dir] {
        use Dir::*;
        match self {
            BlockType::Straight | BlockType::EvasionTunnel => &[North, South],
            BlockType::Corner => &[South, East],
            BlockType::ThreeWay => &[South, East, West],
            BlockType::FourWay | BlockType::KeyRoom1 | BlockType::KeyRoom2 => &[North, East, South, West],
            BlockType::DeadEnd | BlockType::ExitRoom => &[South],
        }
    }

    pub fn is_key_room(self) -> bool {
        matches!(self, BlockType::KeyRoom1 | BlockType::KeyRoom2)
    }
}

impl fmt::Display for BlockType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BlockType {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        BlockType::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown block type `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dir {
    North,
    East,
    South,
    West,
}

impl Dir {
    pub const ALL: [Dir; 4] = [Dir::North, Dir::East, Dir::South, Dir::West];

    /// Clockwise by `quarters` quarter turns.
    pub fn rotated(self, quarters: u8) -> Dir {
        Dir::ALL[(self as usize + quarters as usize) % 4]
    }

    pub fn opposite(self) -> Dir {
        self.rotated(2)
    }

    pub fn delta(self) -> (i32, i32) {
        match self {
            Dir::North => (0, 1),
            Dir::East => (1, 0),
            Dir::South => (0, -1),
            Dir::West => (-1, 0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub const ORIGIN: Cell = Cell { x: 0, y: 0 };

    pub fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn step(self, d: Dir) -> Cell {
        let (dx, dy) = d.delta();
        Cell { x: self.x + dx, y: self.y + dy }
    }

    /// Cell whose centre region contains a continuous position.
    pub fn containing(p: [f64; 2]) -> Cell {
        Cell { x: p[0].round() as i32, y: p[1].round() as i32 }
    }

    pub fn center(self) -> [f64; 2] {
        [self.x as f64, self.y as f64]
    }
}

/// Rotation in quarter turns, clockwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Rotation(u8);

impl Rotation {
    pub const ALL: [Rotation; 4] = [Rotation(0), Rotation(1), Rotation(2), Rotation(3)];

    pub fn quarters(self) -> u8 {
        self.0
    }

    pub fn degrees(self) -> u16 {
        self.0 as u16 * 90
    }

    pub fn from_degrees(deg: u16) -> Option<Rotation> {
        (deg % 90 == 0 && deg < 360).then_some(Rotation((deg / 90) as u8))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Anchor {
    pub dir: Dir,
    pub link: Option<BlockId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub id: BlockId,
    pub block_type: BlockType,
    pub cell: Cell,
    pub rotation: Rotation,
    pub anchors: Vec<Anchor>,
    pub active: bool,
}

impl Block {
    pub fn neighbours(&self) -> impl Iterator<Item = BlockId> + '_ {
        self.anchors.iter().filter_map(|a| a.link)
    }

    pub fn linked_to(&self, other: BlockId) -> bool {
        self.anchors.iter().any(|a| a.link == Some(other))
    }
}

fn rotated_anchors(t: BlockType, r: Rotation) -> Vec<Dir> {
    t.base_anchors().iter().map(|d| d.rotated(r.0)).collect()
}

/// Live map: spawned blocks, cell occupancy and the session spawn counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldGraph {
    blocks: BTreeMap<BlockId, Block>,
    occupancy: BTreeMap<Cell, BlockId>,
    total_spawned: u64,
    next_id: BlockId,
}

/// Fresh world: the exit room alone at the origin, active.
pub fn init_world() -> WorldGraph {
    let exit = Block {
        id: 0,
        block_type: BlockType::ExitRoom,
        cell: Cell::ORIGIN,
        rotation: Rotation(0),
        anchors: rotated_anchors(BlockType::ExitRoom, Rotation(0)).into_iter().map(|dir| Anchor { dir, link: None }).collect(),
        active: true,
    };
    WorldGraph {
        blocks: BTreeMap::from([(0, exit)]),
        occupancy: BTreeMap::from([(Cell::ORIGIN, 0)]),
        total_spawned: 1,
        next_id: 1,
    }
}

impl WorldGraph {
    pub fn block(&self, id: BlockId) -> Option<&Block> {
        self.blocks.get(&id)
    }

    pub fn blocks(&self) -> impl Iterator<Item = &Block> {
        self.blocks.values()
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn block_at(&self, cell: Cell) -> Option<&Block> {
        self.occupancy.get(&cell).and_then(|id| self.blocks.get(id))
    }

    pub fn total_spawned(&self) -> u64 {
        self.total_spawned
    }

    pub fn count_of(&self, t: BlockType) -> usize {
        self.blocks.values().filter(|b| b.block_type == t).count()
    }

    pub fn contains_type(&self, t: BlockType) -> bool {
        self.blocks.values().any(|b| b.block_type == t)
    }

    /// Cells faced by open anchors, with the claiming block.
    fn claimed_cells(&self) -> BTreeMap<Cell, BlockId> {
        let mut out = BTreeMap::new();
        for b in self.blocks.values() {
            for a in b.anchors.iter().filter(|a| a.link.is_none()) {
                out.insert(b.cell.step(a.dir), b.id);
            }
        }
        out
    }

    /// Graph distance in links, if both blocks are loaded and connected.
    pub fn hops(&self, from: BlockId, to: BlockId) -> Option<u32> {
        if !self.blocks.contains_key(&from) || !self.blocks.contains_key(&to) {
            return None;
        }
        let mut seen = BTreeSet::from([from]);
        let mut queue = VecDeque::from([(from, 0u32)]);
        while let Some((id, d)) = queue.pop_front() {
            if id == to {
                return Some(d);
            }
            for n in self.blocks[&id].neighbours() {
                if seen.insert(n) {
                    queue.push_back((n, d + 1));
                }
            }
        }
        None
    }

    /// Checks occupancy, link symmetry, connectivity and the singleton rules.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.occupancy.len() != self.blocks.len() {
            return Err(format!("{} cells occupied by {} blocks", self.occupancy.len(), self.blocks.len()));
        }
        for (cell, id) in &self.occupancy {
            match self.blocks.get(id) {
                Some(b) if b.cell == *cell => {}
                _ => return Err(format!("occupancy entry {cell:?} -> {id} is stale")),
            }
        }
        for b in self.blocks.values() {
            for a in &b.anchors {
                if let Some(other) = a.link {
                    let o = self.blocks.get(&other).ok_or(format!("block {} links to missing {other}", b.id))?;
                    if o.cell != b.cell.step(a.dir) {
                        return Err(format!("link {} -> {other} is not spatially adjacent", b.id));
                    }
                    if !o.anchors.iter().any(|oa| oa.dir == a.dir.opposite() && oa.link == Some(b.id)) {
                        return Err(format!("link {} -> {other} is not mutual", b.id));
                    }
                }
            }
        }
        if let Some(first) = self.blocks.keys().next() {
            let mut seen = BTreeSet::from([*first]);
            let mut stack = vec![*first];
            while let Some(id) = stack.pop() {
                for n in self.blocks[&id].neighbours() {
                    if seen.insert(n) {
                        stack.push(n);
                    }
                }
            }
            if seen.len() != self.blocks.len() {
                return Err("link graph is disconnected".into());
            }
        }
        for t in [BlockType::DeadEnd, BlockType::KeyRoom1, BlockType::KeyRoom2, BlockType::ExitRoom] {
            if self.count_of(t) > 1 {
                return Err(format!("more than one {t} spawned"));
            }
        }
        // An exit room may join a loaded key room; the reverse is blocked at
        // spawn time and checked by the placement oracle.
        if self.contains_type(BlockType::KeyRoom1) && self.contains_type(BlockType::KeyRoom2) {
            return Err("both key rooms spawned at once".into());
        }
        Ok(())
    }
}

/// Per-type re-spawn delays, counted in spawned blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayConfig {
    pub key_room: u32,
    pub exit_room: u32,
    pub dead_end_initial: u32,
}

impl Default for DelayConfig {
    fn default() -> Self {
        Self { key_room: 6, exit_room: 10, dead_end_initial: 4 }
    }
}

impl DelayConfig {
    fn reset_value(&self, t: BlockType) -> u32 {
        match t {
            BlockType::KeyRoom1 | BlockType::KeyRoom2 => self.key_room,
            BlockType::ExitRoom => self.exit_room,
            _ => 0,
        }
    }
}

/// Remaining blocks that must spawn before each type is eligible again.
///
/// A special room restarts its delay both when it spawns and when it is
/// despawned, so the count runs from the room's last presence in the world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayTable {
    remaining: [u32; 9],
    config: DelayConfig,
}

impl DelayTable {
    /// State right after [`init_world`]: the exit room has just spawned and
    /// dead ends wait for the first blocks.
    pub fn initial(config: DelayConfig) -> Self {
        let mut remaining = [0; 9];
        remaining[BlockType::ExitRoom.index()] = config.exit_room;
        remaining[BlockType::DeadEnd.index()] = config.dead_end_initial;
        Self { remaining, config }
    }

    pub fn zero() -> Self {
        Self { remaining: [0; 9], config: DelayConfig::default() }
    }

    pub fn remaining(&self, t: BlockType) -> u32 {
        self.remaining[t.index()]
    }

    pub fn set_remaining(&mut self, t: BlockType, n: u32) {
        self.remaining[t.index()] = n;
    }

    pub fn on_spawn(&mut self, t: BlockType) {
        for r in &mut self.remaining {
            *r = r.saturating_sub(1);
        }
        self.remaining[t.index()] = self.config.reset_value(t);
    }

    pub fn on_despawn(&mut self, t: BlockType) {
        let slot = &mut self.remaining[t.index()];
        *slot = (*slot).max(self.config.reset_value(t));
    }
}

/// Rule check for one type against the current world and delays.
pub fn can_spawn(t: BlockType, world: &WorldGraph, delays: &DelayTable) -> bool {
    if delays.remaining(t) > 0 {
        return false;
    }
    match t {
        BlockType::DeadEnd => !world.contains_type(BlockType::DeadEnd),
        BlockType::KeyRoom1 | BlockType::KeyRoom2 => ![BlockType::KeyRoom1, BlockType::KeyRoom2, BlockType::ExitRoom]
            .iter()
            .any(|o| world.contains_type(*o)),
        BlockType::ExitRoom => !world.contains_type(BlockType::ExitRoom),
        _ => true,
    }
}

/// Relative selection weight per block type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpawnWeights([f64; 9]);

impl Default for SpawnWeights {
    fn default() -> Self {
        let mut w = [0.0; 9];
        for (t, v) in [
            (BlockType::Straight, 40.0),
            (BlockType::Corner, 20.0),
            (BlockType::ThreeWay, 15.0),
            (BlockType::FourWay, 10.0),
            (BlockType::DeadEnd, 5.0),
            (BlockType::EvasionTunnel, 5.0),
            (BlockType::KeyRoom1, 2.5),
            (BlockType::KeyRoom2, 2.5),
            (BlockType::ExitRoom, 2.5),
        ] {
            w[t.index()] = v;
        }
        Self(w)
    }
}

impl SpawnWeights {
    pub fn zeros() -> Self {
        Self([0.0; 9])
    }

    pub fn get(&self, t: BlockType) -> f64 {
        self.0[t.index()]
    }

    pub fn set(&mut self, t: BlockType, w: f64) {
        assert!(w >= 0.0 && w.is_finite(), "weights must be finite and non-negative");
        self.0[t.index()] = w;
    }

    pub fn with(mut self, t: BlockType, w: f64) -> Self {
        self.set(t, w);
        self
    }

    pub fn scaled(&self, t: BlockType, factor: f64) -> Self {
        let mut out = self.clone();
        out.set(t, self.get(t) * factor);
        out
    }
}

fn weighted_pick<R: Rng + ?Sized, T: Copy>(rng: &mut R, items: &[(T, f64)]) -> Option<T> {
    let total: f64 = items.iter().map(|i| i.1).sum();
    if !(total > 0.0) {
        return None;
    }
    let mut x = rng.gen::<f64>() * total;
    for (item, w) in items {
        if *w <= 0.0 {
            continue;
        }
        if x < *w {
            return Some(*item);
        }
        x -= w;
    }
    items.iter().rev().find(|i| i.1 > 0.0).map(|i| i.0)
}

/// Samples a type proportionally to weight among rule-eligible types.
pub fn select_block_type<R: Rng + ?Sized>(
    rng: &mut R,
    world: &WorldGraph,
    delays: &DelayTable,
    weights: &SpawnWeights,
) -> Result<BlockType, WorldgenError> {
    let items: Vec<(BlockType, f64)> = BlockType::ALL
        .into_iter()
        .filter(|t| can_spawn(*t, world, delays))
        .map(|t| (t, weights.get(t)))
        .collect();
    weighted_pick(rng, &items).ok_or(WorldgenError::NoEligibleType)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlacementAction {
    Spawn,
    Despawn,
}

/// One line of the placement log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementEntry {
    pub tick: u64,
    pub action: PlacementAction,
    pub block_id: BlockId,
    pub block_type: BlockType,
    pub cell: Cell,
    pub rotation: Rotation,
}

impl PlacementEntry {
    pub fn to_line(&self) -> String {
        let action = match self.action {
            PlacementAction::Spawn => "spawn",
            PlacementAction::Despawn => "despawn",
        };
        format!(
            "{},{},{},{},{},{},{}",
            self.tick,
            action,
            self.block_id,
            self.block_type,
            self.cell.x,
            self.cell.y,
            self.rotation.degrees()
        )
    }

    pub fn parse_line(line: &str) -> Result<Self, String> {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 7 {
            return Err(format!("expected 7 fields, got {}", f.len()));
        }
        let num = |s: &str| s.parse::<i64>().map_err(|e| format!("`{s}`: {e}"));
        let action = match f[1] {
            "spawn" => PlacementAction::Spawn,
            "despawn" => PlacementAction::Despawn,
            other => return Err(format!("unknown action `{other}`")),
        };
        Ok(Self {
            tick: num(f[0])? as u64,
            action,
            block_id: num(f[2])? as u64,
            block_type: f[3].parse()?,
            cell: Cell::new(num(f[4])? as i32, num(f[5])? as i32),
            rotation: Rotation::from_degrees(num(f[6])? as u16).ok_or("bad rotation")?,
        })
    }
}

pub fn placement_log_text(entries: &[PlacementEntry]) -> String {
    entries.iter().map(|e| e.to_line() + "\n").collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WorldEvent {
    Spawned { id: BlockId, block_type: BlockType },
    Despawned { id: BlockId, block_type: BlockType },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpawningSphere {
    pub center: [f64; 2],
    pub radius: f64,
    pub current_block: BlockId,
}

pub const DEFAULT_SPHERE_RADIUS: f64 = 1.5;

/// World, delay table, sphere and placement log advanced together.
#[derive(Debug, Clone)]
pub struct WorldGen {
    world: WorldGraph,
    delays: DelayTable,
    sphere: SpawningSphere,
    log: Vec<PlacementEntry>,
}

impl WorldGen {
    pub fn new(config: DelayConfig, sphere_radius: f64) -> Self {
        let world = init_world();
        let mut log = Vec::new();
        let b = &world.blocks[&0];
        log.push(PlacementEntry {
            tick: 0,
            action: PlacementAction::Spawn,
            block_id: 0,
            block_type: b.block_type,
            cell: b.cell,
            rotation: b.rotation,
        });
        Self {
            world,
            delays: DelayTable::initial(config),
            sphere: SpawningSphere { center: [0.0, 0.0], radius: sphere_radius, current_block: 0 },
            log,
        }
    }

    pub fn world(&self) -> &WorldGraph {
        &self.world
    }

    pub fn delays(&self) -> &DelayTable {
        &self.delays
    }

    pub fn sphere(&self) -> &SpawningSphere {
        &self.sphere
    }

    pub fn log(&self) -> &[PlacementEntry] {
        &self.log
    }

    pub fn current_block(&self) -> &Block {
        &self.world.blocks[&self.sphere.current_block]
    }

    /// Activates the block the sphere starts in and fills its open anchors.
    pub fn start<R: Rng + ?Sized>(
        &mut self,
        rng: &mut R,
        weights: &SpawnWeights,
        tick: u64,
    ) -> Result<Vec<WorldEvent>, WorldgenError> {
        let mut events = Vec::new();
        self.enter(self.sphere.current_block, rng, weights, tick, &mut events)?;
        Ok(events)
    }

    /// Moves the sphere centre. Crossing into a linked block enters it and
    /// leaves the previous one.
    pub fn step_sphere<R: Rng + ?Sized>(
        &mut self,
        center: [f64; 2],
        rng: &mut R,
        weights: &SpawnWeights,
        tick: u64,
    ) -> Result<Vec<WorldEvent>, WorldgenError> {
        let cell = Cell::containing(center);
        let current = self.sphere.current_block;
        let mut events = Vec::new();
        if self.world.blocks[&current].cell == cell {
            self.sphere.center = center;
            return Ok(events);
        }
        let target = match self.world.occupancy.get(&cell) {
            Some(id) if self.world.blocks[&current].linked_to(*id) => *id,
            _ => return Err(WorldgenError::SphereOffGraph { x: cell.x, y: cell.y }),
        };
        self.sphere.center = center;
        self.sphere.current_block = target;
        self.enter(target, rng, weights, tick, &mut events)?;
        self.leave(current, target, tick, &mut events);
        Ok(events)
    }

    /// Moves the sphere to the centre of a block linked to the current one.
    pub fn move_to<R: Rng + ?Sized>(
        &mut self,
        target: BlockId,
        rng: &mut R,
        weights: &SpawnWeights,
        tick: u64,
    ) -> Result<Vec<WorldEvent>, WorldgenError> {
        let cell = self.world.blocks.get(&target).ok_or(WorldgenError::UnknownBlock(target))?.cell;
        self.step_sphere(cell.center(), rng, weights, tick)
    }

    fn enter<R: Rng + ?Sized>(
        &mut self,
        id: BlockId,
        rng: &mut R,
        weights: &SpawnWeights,
        tick: u64,
        events: &mut Vec<WorldEvent>,
    ) -> Result<(), WorldgenError> {
        let block = self.world.blocks.get_mut(&id).ok_or(WorldgenError::UnknownBlock(id))?;
        block.active = true;
        let open: Vec<usize> =
            block.anchors.iter().enumerate().filter(|(_, a)| a.link.is_none()).map(|(i, _)| i).collect();
        for anchor in open {
            let (new_id, t) = self.spawn_at(id, anchor, rng, weights, tick)?;
            events.push(WorldEvent::Spawned { id: new_id, block_type: t });
        }
        Ok(())
    }

    fn leave(&mut self, id: BlockId, now_in: BlockId, tick: u64, events: &mut Vec<WorldEvent>) {
        let Some(block) = self.world.blocks.get_mut(&id) else { return };
        block.active = false;
        let keep: BTreeSet<BlockId> =
            std::iter::once(now_in).chain(self.world.blocks[&now_in].neighbours()).collect();
        let doomed: Vec<BlockId> = self.world.blocks[&id].neighbours().filter(|n| !keep.contains(n)).collect();
        for d in doomed {
            let t = self.despawn(d, tick);
            events.push(WorldEvent::Despawned { id: d, block_type: t });
        }
    }

    /// Rotations of `t` that attach back through `back` and whose outward
    /// anchors all face unclaimed empty cells, deduplicated by anchor layout.
    fn legal_rotations(&self, t: BlockType, cell: Cell, back: Dir, claimed: &BTreeMap<Cell, BlockId>) -> Vec<Rotation> {
        let mut layouts = BTreeSet::new();
        let mut out = Vec::new();
        for r in Rotation::ALL {
            let dirs = rotated_anchors(t, r);
            if !dirs.contains(&back) {
                continue;
            }
            let clear = dirs.iter().filter(|d| **d != back).all(|d| {
                let c = cell.step(*d);
                !self.world.occupancy.contains_key(&c) && !claimed.contains_key(&c)
            });
            let mut key = dirs.clone();
            key.sort();
            if clear && layouts.insert(key) {
                out.push(r);
            }
        }
        out
    }

    fn spawn_at<R: Rng + ?Sized>(
        &mut self,
        parent: BlockId,
        anchor: usize,
        rng: &mut R,
        weights: &SpawnWeights,
        tick: u64,
    ) -> Result<(BlockId, BlockType), WorldgenError> {
        let dir = self.world.blocks[&parent].anchors[anchor].dir;
        let cell = self.world.blocks[&parent].cell.step(dir);
        let back = dir.opposite();
        let no_placement = WorldgenError::NoPlacement { block: parent, anchor };
        if self.world.occupancy.contains_key(&cell) {
            return Err(no_placement);
        }
        let mut claimed = self.world.claimed_cells();
        claimed.remove(&cell);

        let mut candidates: Vec<(BlockType, f64)> = Vec::new();
        for t in BlockType::ALL {
            let w = weights.get(t);
            if w > 0.0
                && can_spawn(t, &self.world, &self.delays)
                && !self.legal_rotations(t, cell, back, &claimed).is_empty()
            {
                candidates.push((t, w));
            }
        }
        let chosen = match weighted_pick(rng, &candidates) {
            Some(t) => t,
            // Cap with a dead end if the rules allow it, else a straight
            // piece pointing at free space.
            None if can_spawn(BlockType::DeadEnd, &self.world, &self.delays) => BlockType::DeadEnd,
            None if !self.legal_rotations(BlockType::Straight, cell, back, &claimed).is_empty() => BlockType::Straight,
            None => return Err(no_placement),
        };
        let rotations = self.legal_rotations(chosen, cell, back, &claimed);
        let rotation = if rotations.len() == 1 { rotations[0] } else { rotations[rng.gen_range(0..rotations.len())] };

        let id = self.world.next_id;
        self.world.next_id += 1;
        let anchors = rotated_anchors(chosen, rotation)
            .into_iter()
            .map(|d| Anchor { dir: d, link: (d == back).then_some(parent) })
            .collect();
        self.world.blocks.insert(id, Block { id, block_type: chosen, cell, rotation, anchors, active: false });
        self.world.occupancy.insert(cell, id);
        self.world.blocks.get_mut(&parent).expect("parent loaded").anchors[anchor].link = Some(id);
        self.world.total_spawned += 1;
        self.delays.on_spawn(chosen);
        self.log.push(PlacementEntry { tick, action: PlacementAction::Spawn, block_id: id, block_type: chosen, cell, rotation });
        Ok((id, chosen))
    }

    fn despawn(&mut self, id: BlockId, tick: u64) -> BlockType {
        let block = self.world.blocks.remove(&id).expect("despawning a loaded block");
        self.world.occupancy.remove(&block.cell);
        for n in block.neighbours() {
            if let Some(nb) = self.world.blocks.get_mut(&n) {
                for a in nb.anchors.iter_mut().filter(|a| a.link == Some(id)) {
                    a.link = None;
                }
            }
        }
        self.delays.on_despawn(block.block_type);
        self.log.push(PlacementEntry {
            tick,
            action: PlacementAction::Despawn,
            block_id: id,
            block_type: block.block_type,
            cell: block.cell,
            rotation: block.rotation,
        });
        block.block_type
    }
}
