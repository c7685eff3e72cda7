//! Independent oracles shared by the integration tests and the acceptance
//! runner. Nothing here calls the library code it checks.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use affectloop_core::av::{AvTrace, Dimension, EmotionalState};
use affectloop_core::clears::{decide, ClearsParams, Condition, DecisionContext, Directive, NeutralBaseline};
use affectloop_core::eet::{EmotionalResponse, ThresholdMode};
use affectloop_core::worldgen::{BlockType, DelayConfig, SpawnWeights, WorldGen, DEFAULT_SPHERE_RADIUS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

// ---------------------------------------------------------------- worldgen

/// Anchor vectors at rotation 0, by type name.
fn oracle_anchors(t: &str) -> Option<&'static [(i32, i32)]> {
    const N: (i32, i32) = (0, 1);
    const E: (i32, i32) = (1, 0);
    const S: (i32, i32) = (0, -1);
    const W: (i32, i32) = (-1, 0);
    Some(match t {
        "Straight" | "EvasionTunnel" => &[N, S],
        "Corner" => &[S, E],
        "ThreeWay" => &[S, E, W],
        "FourWay" | "KeyRoom1" | "KeyRoom2" => &[N, E, S, W],
        "DeadEnd" | "ExitRoom" => &[S],
        _ => return None,
    })
}

fn rotate_cw(v: (i32, i32), deg: i32) -> (i32, i32) {
    (0..deg / 90).fold(v, |(x, y), _| (y, -x))
}

#[derive(Clone)]
struct Placed {
    kind: String,
    cell: (i32, i32),
    rot: i32,
}

impl Placed {
    fn faces(&self, d: (i32, i32)) -> bool {
        oracle_anchors(&self.kind).unwrap().iter().any(|a| rotate_cw(*a, self.rot) == d)
    }
}

/// Replays a placement log (`tick,spawn|despawn,id,type,x,y,rotation`) and
/// returns every violation found: overlaps, singleton and blocking rules,
/// spawn delays, disconnected attachment and a disconnected map.
pub fn placement_oracle(log: &str, delays: &DelayConfig) -> Vec<String> {
    let mut errs = Vec::new();
    let mut loaded: BTreeMap<u64, Placed> = BTreeMap::new();
    let mut occupied: BTreeMap<(i32, i32), u64> = BTreeMap::new();
    let mut ever: BTreeSet<u64> = BTreeSet::new();
    let mut spawns = 0u64;
    // Spawn count at the last spawn or despawn of each special type.
    let mut last_presence: BTreeMap<String, u64> = BTreeMap::new();
    let mut tick_of_last: Option<u64> = None;

    let connected = |loaded: &BTreeMap<u64, Placed>| -> bool {
        let Some((&first, _)) = loaded.iter().next() else { return true };
        let by_cell: BTreeMap<(i32, i32), u64> = loaded.iter().map(|(id, p)| (p.cell, *id)).collect();
        let mut seen = BTreeSet::from([first]);
        let mut q = VecDeque::from([first]);
        while let Some(id) = q.pop_front() {
            let p = &loaded[&id];
            for a in oracle_anchors(&p.kind).unwrap() {
                let d = rotate_cw(*a, p.rot);
                let c = (p.cell.0 + d.0, p.cell.1 + d.1);
                if let Some(&n) = by_cell.get(&c) {
                    if loaded[&n].faces((-d.0, -d.1)) && seen.insert(n) {
                        q.push_back(n);
                    }
                }
            }
        }
        seen.len() == loaded.len()
    };

    for (ln, line) in log.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        let at = format!("line {}", ln + 1);
        if f.len() != 7 {
            errs.push(format!("{at}: malformed"));
            continue;
        }
        let tick: u64 = f[0].parse().unwrap();
        if let Some(prev) = tick_of_last {
            if tick < prev {
                errs.push(format!("{at}: tick goes backwards"));
            }
            if tick != prev && !connected(&loaded) {
                errs.push(format!("{at}: map disconnected after tick {prev}"));
            }
        }
        tick_of_last = Some(tick);
        let id: u64 = f[2].parse().unwrap();
        let kind = f[3].to_string();
        let cell = (f[4].parse::<i32>().unwrap(), f[5].parse::<i32>().unwrap());
        let rot: i32 = f[6].parse().unwrap();
        if oracle_anchors(&kind).is_none() || rot % 90 != 0 || !(0..360).contains(&rot) {
            errs.push(format!("{at}: bad type or rotation"));
            continue;
        }
        let count = |k: &str, loaded: &BTreeMap<u64, Placed>| loaded.values().filter(|p| p.kind == k).count();
        match f[1] {
            "spawn" => {
                if !ever.insert(id) {
                    errs.push(format!("{at}: id {id} reused"));
                }
                if occupied.contains_key(&cell) {
                    errs.push(format!("{at}: overlap at {cell:?}"));
                }
                let blocked = match kind.as_str() {
                    "DeadEnd" => count("DeadEnd", &loaded) > 0,
                    "KeyRoom1" | "KeyRoom2" => ["KeyRoom1", "KeyRoom2", "ExitRoom"].iter().any(|k| count(k, &loaded) > 0),
                    "ExitRoom" => count("ExitRoom", &loaded) > 0,
                    _ => false,
                };
                if blocked {
                    errs.push(format!("{at}: {kind} spawned against the blocking rules"));
                }
                let needed = match kind.as_str() {
                    "KeyRoom1" | "KeyRoom2" => delays.key_room as u64,
                    "ExitRoom" => delays.exit_room as u64,
                    _ => 0,
                };
                if let Some(&mark) = last_presence.get(&kind) {
                    if spawns - mark < needed {
                        errs.push(format!("{at}: {kind} after only {} blocks, needs {needed}", spawns - mark));
                    }
                }
                if kind == "DeadEnd" && spawns < 1 + delays.dead_end_initial as u64 {
                    errs.push(format!("{at}: DeadEnd among the first {} blocks", delays.dead_end_initial));
                }
                let p = Placed { kind: kind.clone(), cell, rot };
                if !loaded.is_empty() {
                    let attached = oracle_anchors(&kind).unwrap().iter().any(|a| {
                        let d = rotate_cw(*a, rot);
                        occupied
                            .get(&(cell.0 + d.0, cell.1 + d.1))
                            .is_some_and(|n| loaded[n].faces((-d.0, -d.1)))
                    });
                    if !attached {
                        errs.push(format!("{at}: block {id} attaches to nothing"));
                    }
                }
                spawns += 1;
                if matches!(kind.as_str(), "KeyRoom1" | "KeyRoom2" | "ExitRoom") {
                    last_presence.insert(kind.clone(), spawns);
                }
                occupied.insert(cell, id);
                loaded.insert(id, p);
            }
            "despawn" => match loaded.remove(&id) {
                Some(p) if p.kind == kind && p.cell == cell && p.rot == rot => {
                    occupied.remove(&cell);
                    if matches!(kind.as_str(), "KeyRoom1" | "KeyRoom2" | "ExitRoom") {
                        last_presence.insert(kind.clone(), spawns);
                    }
                }
                Some(_) => errs.push(format!("{at}: despawn of {id} does not match its spawn")),
                None => errs.push(format!("{at}: despawn of unloaded block {id}")),
            },
            other => errs.push(format!("{at}: unknown action {other}")),
        }
        for k in ["DeadEnd", "KeyRoom1", "KeyRoom2", "ExitRoom"] {
            if count(k, &loaded) > 1 {
                errs.push(format!("{at}: two {k} loaded"));
            }
        }
    }
    if !connected(&loaded) {
        errs.push("map disconnected at end of log".into());
    }
    errs
}

/// Seeded random walk over linked blocks. Odd seeds also jitter the
/// objective and evasion weights every step, as the adaptation layer would.
pub fn walk(seed: u64, steps: u64) -> WorldGen {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut wg = WorldGen::new(DelayConfig::default(), DEFAULT_SPHERE_RADIUS);
    let base = SpawnWeights::default();
    wg.start(&mut rng, &base, 0).expect("start");
    for step in 1..=steps {
        let weights = if seed % 2 == 1 {
            let f = |r: &mut ChaCha8Rng| 0.25 * 16f64.powf(r.gen::<f64>());
            let (k, e, v) = (f(&mut rng), f(&mut rng), f(&mut rng));
            base.scaled(BlockType::KeyRoom1, k)
                .scaled(BlockType::KeyRoom2, k)
                .scaled(BlockType::ExitRoom, e)
                .scaled(BlockType::EvasionTunnel, v)
        } else {
            base.clone()
        };
        let ns: Vec<u64> = wg.current_block().neighbours().collect();
        let target = ns[rng.gen_range(0..ns.len())];
        wg.move_to(target, &mut rng, &weights, step).unwrap_or_else(|e| panic!("seed {seed} step {step}: {e}"));
    }
    wg
}

pub fn log_text(wg: &WorldGen) -> String {
    wg.log().iter().map(|e| e.to_line() + "\n").collect()
}

// --------------------------------------------------------------------- eet

#[derive(Debug, Clone, PartialEq)]
pub struct OracleExtremum {
    pub sample: usize,
    pub zs: f64,
    pub is: f64,
    pub maximum: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResponse {
    pub event: usize,
    pub dimension: Dimension,
    pub phi: f64,
    pub extrema: Vec<OracleExtremum>,
}

fn pop_stats(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
}

pub fn oracle_phi(vals: &[f64], mode: ThresholdMode) -> f64 {
    let (m, s) = match mode {
        ThresholdMode::Literal => pop_stats(vals),
        ThresholdMode::Deviation => {
            let d: Vec<f64> = (1..vals.len()).map(|k| (vals[k] - vals[k - 1]).abs()).collect();
            pop_stats(&d)
        }
    };
    m + 2.0 * s
}

/// Every strict local extremum of `vals`, plateaus collapsed to their middle
/// sample, found by inspecting each sample's surrounding run.
pub fn local_extrema(vals: &[f64]) -> Vec<(usize, bool)> {
    let n = vals.len();
    let mut out = Vec::new();
    for j in 0..n {
        let (mut a, mut b) = (j, j);
        while a > 0 && vals[a - 1] == vals[j] {
            a -= 1;
        }
        while b + 1 < n && vals[b + 1] == vals[j] {
            b += 1;
        }
        if a == 0 || b == n - 1 || j != (a + b) / 2 {
            continue;
        }
        let (l, r, v) = (vals[a - 1], vals[b + 1], vals[j]);
        if l < v && r < v {
            out.push((j, true));
        } else if l > v && r > v {
            out.push((j, false));
        }
    }
    out
}

/// Sample indices inside `[start, end]` and the sample at or before `start`.
pub fn oracle_region(times: &[f64], start: f64, end: f64) -> (Vec<usize>, usize) {
    let tol = 1e-6 * if times.len() > 1 { times[1] - times[0] } else { 1.0 };
    let inside: Vec<usize> = (0..times.len()).filter(|&k| times[k] >= start - tol && times[k] <= end + tol).collect();
    let is = (0..times.len()).filter(|&k| times[k] <= start + tol).last().unwrap_or(0);
    (inside, is)
}

/// Brute-force detection. `Err(i)` names the first event whose region the
/// trace does not cover.
pub fn oracle_detect(
    trace: &AvTrace,
    event_times: &[f64],
    window: f64,
    mode: ThresholdMode,
    min_threshold: f64,
) -> Result<Vec<OracleResponse>, usize> {
    let times: Vec<f64> = (0..trace.len()).map(|k| trace.time_at(k)).collect();
    let (t0, t1) = (times[0], *times.last().unwrap());
    let tol = 1e-6 * trace.sample_period();
    let mut out = Vec::new();
    for (i, &t) in event_times.iter().enumerate() {
        let next = event_times.get(i + 1).copied().unwrap_or(t1);
        let end = (t + window).min(next).max(t);
        if t < t0 - tol || end > t1 + tol {
            return Err(i);
        }
        let (inside, is_k) = oracle_region(&times, t, end);
        for dim in Dimension::BOTH {
            let vals: Vec<f64> = inside.iter().map(|&k| trace.states()[k].get(dim)).collect();
            let phi = oracle_phi(&vals, mode).max(min_threshold);
            let mut is = trace.states()[is_k].get(dim);
            let mut last: Option<bool> = None;
            let mut extrema = Vec::new();
            for (j, maximum) in local_extrema(&vals) {
                if last == Some(maximum) {
                    continue;
                }
                if (is - vals[j]).abs() >= phi {
                    extrema.push(OracleExtremum { sample: inside[j], zs: vals[j], is, maximum });
                    is = vals[j];
                    last = Some(maximum);
                }
            }
            if !extrema.is_empty() {
                out.push(OracleResponse { event: i, dimension: dim, phi, extrema });
            }
        }
    }
    Ok(out)
}

/// Differences between library output and oracle output, empty when equal.
pub fn compare_responses(trace: &AvTrace, lib: &[EmotionalResponse], oracle: &[OracleResponse]) -> Vec<String> {
    let mut diffs = Vec::new();
    if lib.len() != oracle.len() {
        diffs.push(format!("{} responses vs oracle {}", lib.len(), oracle.len()));
        return diffs;
    }
    for (l, o) in lib.iter().zip(oracle) {
        if l.event_index != o.event || l.dimension != o.dimension || l.phi != o.phi || l.extrema.len() != o.extrema.len() {
            diffs.push(format!("event {} {:?}: header mismatch", o.event, o.dimension));
            continue;
        }
        for (le, oe) in l.extrema.iter().zip(&o.extrema) {
            let same = (le.timestamp - trace.time_at(oe.sample)).abs() < 1e-9
                && le.value == oe.zs
                && le.is_value == oe.is
                && le.maximum == oe.maximum;
            if !same {
                diffs.push(format!("event {} {:?}: extremum {le:?} vs {oe:?}", o.event, o.dimension));
            }
        }
    }
    diffs
}

/// Kernel pulses plus noise on a uniform grid, with random events.
pub fn synthetic_case(seed: u64) -> (AvTrace, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let period = [0.1, 0.25, 0.5, 1.0][rng.gen_range(0..4)];
    let n = rng.gen_range(60..500);
    let start = if rng.gen_bool(0.5) { 0.0 } else { (rng.gen_range(0..100) as f64) * period };
    let pulses: Vec<(f64, f64, f64, f64)> = (0..rng.gen_range(1..7))
        .map(|_| {
            (
                start + rng.gen::<f64>() * n as f64 * period,
                rng.gen_range(-4.0..4.0),
                rng.gen_range(-4.0..4.0),
                rng.gen_range(0.5..10.0),
            )
        })
        .collect();
    let sigma: f64 = [0.0, 0.02, 0.1, 0.4][rng.gen_range(0..4)];
    let noise = Normal::new(0.0, sigma.max(1e-12)).unwrap();
    let quantize = rng.gen_bool(0.3);
    let states = (0..n)
        .map(|k| {
            let t = start + k as f64 * period;
            let (mut a, mut v) = (5.0, 5.0);
            for &(on, da, dv, tau) in &pulses {
                if t >= on {
                    let g = (-(t - on) / tau).exp() * (1.0 - (-(t - on) / 0.7).exp());
                    a += da * g;
                    v += dv * g;
                }
            }
            if sigma > 0.0 {
                a += noise.sample(&mut rng);
                v += noise.sample(&mut rng);
            }
            if quantize {
                a = (a * 10.0).round() / 10.0;
                v = (v * 10.0).round() / 10.0;
            }
            EmotionalState::saturating(a, v)
        })
        .collect();
    let trace = AvTrace::new(start, period, states).unwrap();
    let span = (n - 1) as f64 * period;
    let mut events: Vec<f64> = (0..rng.gen_range(1..16))
        .map(|_| {
            let t = if rng.gen_bool(0.3) {
                start + rng.gen_range(0..n) as f64 * period
            } else {
                start + rng.gen::<f64>() * span
            };
            (t * 1000.0).round() / 1000.0
        })
        .filter(|t| *t >= start && *t <= start + span)
        .collect();
    if events.is_empty() {
        events.push(start);
    }
    events.sort_by(f64::total_cmp);
    (trace, events)
}

// ------------------------------------------------------------------ clears

/// Problems with threshold exactness over a 0.01 arousal sweep.
pub fn clears_threshold_sweep() -> Vec<String> {
    let mut bad = Vec::new();
    let base = NeutralBaseline::default();
    let p = ClearsParams::default();
    for vi in 0..=1000 {
        let v = vi as f64 / 100.0;
        for ai in 0..=1000 {
            let a = ai as f64 / 100.0;
            let es = EmotionalState::new(a, v).unwrap();
            let ds = decide(Condition::VIBF, es, DecisionContext { folders: 0, chasing: false }, base, &p);
            let faint = ds.iter().any(|d| matches!(d, Directive::TriggerFaint));
            let hall = ds.iter().any(|d| matches!(d, Directive::SetHallucinations(true)));
            if faint != (a >= 9.5) {
                bad.push(format!("faint at A={a} V={v}: {faint}"));
            }
            if hall != (a >= 8.0 || v <= 2.0) {
                bad.push(format!("hallucinations at A={a} V={v}: {hall}"));
            }
        }
    }
    bad
}

#[derive(Debug, Default, Clone, Copy)]
pub struct Factors {
    pub creature: Option<f64>,
    pub env: Option<f64>,
    pub objective: Option<f64>,
    pub evasion: Option<f64>,
    pub sprint: Option<(f64, f64)>,
    pub heartbeat: Option<f64>,
    pub tunnel: Option<f64>,
}

pub fn factors(ds: &[Directive]) -> Factors {
    let mut f = Factors::default();
    for d in ds {
        match d {
            Directive::ScaleCreatureProbability(x) => f.creature = Some(*x),
            Directive::ScaleEnvEventProbability(x) => f.env = Some(*x),
            Directive::ScaleObjectiveRoomWeight { factor, .. } => f.objective = Some(*factor),
            Directive::ScaleEvasionTunnelWeight(x) => f.evasion = Some(*x),
            Directive::SetSprintParams { speed_mult, duration_mult } => f.sprint = Some((*speed_mult, *duration_mult)),
            Directive::SetHeartbeatIntensity(x) => f.heartbeat = Some(*x),
            Directive::SetTunnelVision(x) => f.tunnel = Some(*x),
            _ => {}
        }
    }
    f
}

/// Monotonicity, bounds and the control condition over a 101x101 grid.
pub fn clears_grid_properties() -> Vec<String> {
    let mut bad = Vec::new();
    let base = NeutralBaseline::default();
    let p = ClearsParams::default();
    let at = |c: Condition, ai: usize, vi: usize, folders: u8, chasing: bool| {
        let es = EmotionalState::new(ai as f64 / 10.0, vi as f64 / 10.0).unwrap();
        factors(&decide(c, es, DecisionContext { folders, chasing }, base, &p))
    };
    let get = |o: Option<f64>, what: &str, bad: &mut Vec<String>| {
        o.unwrap_or_else(|| {
            bad.push(format!("{what} missing"));
            f64::NAN
        })
    };
    for folders in [0u8, 1, 2] {
        for chasing in [false, true] {
            for ai in 0..=100 {
                for vi in 0..=100 {
                    let ctx = DecisionContext { folders, chasing };
                    let es = EmotionalState::new(ai as f64 / 10.0, vi as f64 / 10.0).unwrap();
                    if !decide(Condition::NBF, es, ctx, base, &p).is_empty() {
                        bad.push(format!("NBF emitted at {ai},{vi}"));
                    }
                    let f = at(Condition::NVIBF, ai, vi, folders, chasing);
                    let g = at(Condition::VIBF, ai, vi, folders, chasing);
                    for x in [f.creature, f.env, f.objective, f.evasion].into_iter().flatten() {
                        if !(p.factor_min..=p.factor_max).contains(&x) {
                            bad.push(format!("factor {x} out of bounds at {ai},{vi}"));
                        }
                    }
                    for x in [g.heartbeat, g.tunnel].into_iter().flatten() {
                        if !(0.0..=1.0).contains(&x) {
                            bad.push(format!("intensity {x} out of [0,1] at {ai},{vi}"));
                        }
                    }
                    if chasing && f.evasion.is_none() {
                        bad.push("evasion factor missing while chased".into());
                    }
                    if ai > 0 {
                        let fp = at(Condition::NVIBF, ai - 1, vi, folders, chasing);
                        let gp = at(Condition::VIBF, ai - 1, vi, folders, chasing);
                        if get(f.creature, "creature", &mut bad) > get(fp.creature, "creature", &mut bad) {
                            bad.push(format!("creature factor rises with arousal at {ai},{vi}"));
                        }
                        if get(f.env, "env", &mut bad) < get(fp.env, "env", &mut bad) {
                            bad.push(format!("env factor falls with arousal at {ai},{vi}"));
                        }
                        let (s, d) = g.sprint.unwrap_or((f64::NAN, f64::NAN));
                        let (sp, dp) = gp.sprint.unwrap_or((f64::NAN, f64::NAN));
                        if !(s >= sp && d <= dp) {
                            bad.push(format!("sprint multipliers not monotone at {ai},{vi}"));
                        }
                    }
                    if vi > 0 {
                        let fp = at(Condition::NVIBF, ai, vi - 1, folders, chasing);
                        let gp = at(Condition::VIBF, ai, vi - 1, folders, chasing);
                        if get(f.objective, "objective", &mut bad) > get(fp.objective, "objective", &mut bad) {
                            bad.push(format!("objective factor rises with valence at {ai},{vi}"));
                        }
                        if get(g.tunnel, "tunnel", &mut bad) > get(gp.tunnel, "tunnel", &mut bad) {
                            bad.push(format!("tunnel vision rises with valence at {ai},{vi}"));
                        }
                    }
                }
            }
        }
    }
    bad
}

// ------------------------------------------------------------------- stats

/// One-sided exact sign test: P(X ≥ wins) for X ~ Bin(wins + losses, 1/2).
pub fn sign_test_p(wins: u32, losses: u32) -> f64 {
    let n = wins + losses;
    if n == 0 {
        return 1.0;
    }
    let choose = |n: u32, k: u32| (0..k).fold(1.0f64, |acc, i| acc * (n - i) as f64 / (i + 1) as f64);
    (wins..=n).map(|k| choose(n, k)).sum::<f64>() / 2f64.powi(n as i32)
}

// ------------------------------------------------------------------- piers

#[derive(Debug, Default)]
pub struct Recovery {
    pub checked: usize,
    pub excluded: usize,
    pub worst_error: f64,
    /// Largest error / bound over checked ticks with a non-zero bound.
    pub worst_ratio: f64,
    pub violations: Vec<String>,
}

/// Kernel of an event kind: (max |ΔA|,|ΔV| over τ, latency).
fn kernel_of(kind: &affectloop_core::glados::EventKind, m: &affectloop_core::simulator::SyntheticPlayerModel) -> Option<(f64, f64)> {
    use affectloop_core::glados::EventKind as K;
    let k = match kind {
        K::CreatureSpawn | K::CreatureChaseStart => m.creature,
        K::EnvEvent(_) => m.environment,
        K::FolderPickup => m.folder,
        _ => return None,
    };
    Some((k.arousal.abs().max(k.valence.abs()) / k.tau, k.latency))
}

/// Noise-free session with the exact-fit participant: per-tick recovery
/// error against the lag bound `span × Σ slopes` of the kernels already
/// running. Ticks whose averaging span contains a kernel onset (a step) are
/// excluded and counted.
pub fn piers_recovery(seed: u64, condition: Condition, duration: f64) -> Recovery {
    use affectloop_core::simulator::{run, ScenarioConfig};
    let mut cfg = ScenarioConfig { seed, condition, duration, ..ScenarioConfig::default() };
    cfg.player.noise_sigma = 0.0;
    cfg.player.channel_noise = 0.0;
    let rec = run(&cfg).expect("session runs");
    let span = ((cfg.window_ticks - 1) + (cfg.smoothing_window - 1)) as f64 * cfg.tick_period;
    let onsets: Vec<(f64, f64)> = rec
        .events
        .iter()
        .filter_map(|e| kernel_of(&e.kind, &cfg.player).map(|(slope, lat)| (e.timestamp + lat, slope)))
        .collect();
    let mut r = Recovery::default();
    for ((t, got), (ti, want)) in rec.av.iter().zip(&rec.intended) {
        assert_eq!(t, ti);
        if onsets.iter().any(|(o, _)| *o >= t - span - 1e-6 && *o <= t + 1e-6) {
            r.excluded += 1;
            continue;
        }
        let bound = span * onsets.iter().filter(|(o, _)| *o < t - span).map(|(_, s)| s).sum::<f64>() + 1e-9;
        let err = (got.arousal() - want.arousal()).abs().max((got.valence() - want.valence()).abs());
        r.checked += 1;
        r.worst_error = r.worst_error.max(err);
        if bound > 1e-9 {
            r.worst_ratio = r.worst_ratio.max(err / bound);
        }
        if err > bound {
            r.violations.push(format!("seed {seed} t={t}: error {err} > bound {bound}"));
        }
    }
    r
}

/// Fusion weights sum to one and fused outputs stay within the channel
/// predictions, over random predictions and every tick of a session.
pub fn fusion_checks(seed: u64) -> Vec<String> {
    use affectloop_core::piers::{fuse, fusion_weights, window_mean, Channel, Prediction};
    use affectloop_core::simulator::{run, ScenarioConfig};
    let mut bad = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..10_000 {
        let n = rng.gen_range(1..6);
        let ps: Vec<Prediction> = (0..n)
            .map(|_| Prediction::new(rng.gen_range(-5.0..15.0), 10f64.powf(rng.gen_range(-9.0..3.0))))
            .collect();
        let w = fusion_weights(&ps).unwrap();
        let s: f64 = w.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            bad.push(format!("weights sum to {s}"));
        }
        let f = fuse(&ps).unwrap();
        let lo = ps.iter().map(|p| p.value).fold(f64::INFINITY, f64::min);
        let hi = ps.iter().map(|p| p.value).fold(f64::NEG_INFINITY, f64::max);
        if f < lo - 1e-9 || f > hi + 1e-9 {
            bad.push(format!("fused {f} outside [{lo}, {hi}]"));
        }
    }
    let cfg = ScenarioConfig { seed, duration: 60.0, ..ScenarioConfig::default() };
    let model = cfg.piers_model().unwrap();
    let rec = run(&cfg).unwrap();
    for i in 0..rec.physio.len() {
        let lo_i = (i + 1).saturating_sub(cfg.window_ticks);
        let feat = window_mean(&rec.physio[lo_i..=i]).unwrap();
        let out = model.predict(&feat).unwrap();
        for dim in Dimension::BOTH {
            let ps: Vec<f64> = Channel::ALL
                .iter()
                .filter(|c| c.target() == dim)
                .map(|c| model.model(*c).predict(c.read(&feat)).clamp(0.0, 10.0))
                .collect();
            let (lo, hi) = (ps.iter().copied().fold(f64::INFINITY, f64::min), ps.iter().copied().fold(f64::NEG_INFINITY, f64::max));
            let v = out.get(dim);
            if v < lo - 1e-9 || v > hi + 1e-9 {
                bad.push(format!("tick {i} {dim:?}: {v} outside [{lo}, {hi}]"));
            }
        }
    }
    bad
}

// -------------------------------------------------------------- game logic

/// Scripted transitions; each entry is (name, holds, detail).
pub fn micro_scenarios() -> Vec<(&'static str, bool, String)> {
    use affectloop_core::gameplay::*;
    use affectloop_core::worldgen::init_world;
    let mut out = Vec::new();
    let params = CreatureParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let placement = CreaturePlacement { block: 0, anchor: 0, point: [0.0, 0.35] };
    let near = FsmInput {
        distance: 1.0,
        block_hops: Some(0),
        player_in_evasion_tunnel: false,
        player_crouched: false,
        reached_retreat_target: false,
    };

    // Picking up the first folder.
    let mut avatar = AvatarState::default();
    let mut c = CreatureState::default();
    let before = c.hostility;
    avatar.update_avatar(Action::Interact, 0.1, &MovementParams::default(), &Modifiers::default(), Some(0));
    c.escalate(avatar.folders(), 5);
    out.push((
        "first folder -> PassiveAggressive",
        before == Hostility::Passive && avatar.folders() == 1 && c.hostility == Hostility::PassiveAggressive,
        format!("{before:?} -> {:?} with {} folder(s)", c.hostility, avatar.folders()),
    ));

    // Thirty blocks spawned, driven through real world generation.
    let mut c = CreatureState::default();
    let mut rng_w = ChaCha8Rng::seed_from_u64(30);
    let mut wg = WorldGen::new(DelayConfig::default(), DEFAULT_SPHERE_RADIUS);
    wg.start(&mut rng_w, &SpawnWeights::default(), 0).unwrap();
    let mut ok = true;
    let mut step = 0;
    while wg.world().total_spawned() < 40 {
        step += 1;
        let ns: Vec<u64> = wg.current_block().neighbours().collect();
        let target = ns[rng_w.gen_range(0..ns.len())];
        wg.move_to(target, &mut rng_w, &SpawnWeights::default(), step).unwrap();
        c.escalate(0, wg.world().total_spawned());
        let want = if wg.world().total_spawned() >= 30 { Hostility::Aggressive } else { Hostility::Passive };
        ok &= c.hostility == want;
    }
    out.push(("30 blocks spawned -> Aggressive", ok, format!("{:?} at {} blocks", c.hostility, wg.world().total_spawned())));

    // Three retreats.
    let mut c = CreatureState::default();
    let mut trail = Vec::new();
    for _ in 0..3 {
        c.spawn(placement);
        let o = c.step_fsm(&near, &params, 0, 5, &mut rng);
        trail.push((c.retreat_count, c.hostility, o.contains(&CreatureOutcome::RetreatIncrement), c.spawned));
    }
    let ok = trail
        == vec![
            (1, Hostility::Passive, true, false),
            (2, Hostility::Passive, true, false),
            (3, Hostility::Aggressive, true, false),
        ];
    out.push(("three retreats -> Aggressive", ok, format!("{trail:?}")));

    // Escape through an evasion tunnel.
    let mut c = CreatureState { hostility: Hostility::Aggressive, ..CreatureState::default() };
    c.spawn(placement);
    let s0 = c.fsm;
    c.step_fsm(&near, &params, 2, 40, &mut rng);
    let s1 = c.fsm;
    let hide = FsmInput { player_in_evasion_tunnel: true, player_crouched: true, block_hops: Some(1), ..near };
    c.step_fsm(&hide, &params, 2, 40, &mut rng);
    out.push((
        "evasion tunnel escape -> Retreat",
        s0 == FsmState::Searching && s1 == FsmState::Chasing && c.fsm == FsmState::Retreat,
        format!("{s0:?} -> {s1:?} -> {:?}", c.fsm),
    ));

    // Caught within attack range.
    let mut c = CreatureState { hostility: Hostility::Aggressive, ..CreatureState::default() };
    c.spawn(placement);
    c.step_fsm(&near, &params, 1, 40, &mut rng);
    let strike = FsmInput { distance: params.attack_range, ..near };
    let o = c.step_fsm(&strike, &params, 1, 40, &mut rng);
    let killed = o.contains(&CreatureOutcome::Kill);
    let world = init_world();
    let res = check_outcome(Outcome::Ongoing, &AvatarState::default(), &world, killed);
    out.push(("attack range -> Lose", killed && res == Outcome::Lose, format!("{o:?} -> {res}")));

    // Both folders in the exit room.
    let mut avatar = AvatarState::default();
    let one = {
        avatar.folders_picked = [true, false];
        check_outcome(Outcome::Ongoing, &avatar, &world, false)
    };
    avatar.folders_picked = [true, true];
    let two = check_outcome(Outcome::Ongoing, &avatar, &world, false);
    avatar.position = [3.0, 3.0];
    let outside = check_outcome(Outcome::Ongoing, &avatar, &world, false);
    out.push((
        "two folders + ExitRoom -> Win",
        one == Outcome::Ongoing && two == Outcome::Win && outside == Outcome::Ongoing,
        format!("one folder {one}, two folders {two}, two folders elsewhere {outside}"),
    ));
    out
}

// ------------------------------------------------------------- closed loop

#[derive(Debug)]
pub struct SignResult {
    pub wins: u32,
    pub losses: u32,
    pub ties: u32,
    pub p: f64,
}

fn sign(pairs: &[(f64, f64)]) -> SignResult {
    let wins = pairs.iter().filter(|(nv, nb)| nv < nb).count() as u32;
    let losses = pairs.iter().filter(|(nv, nb)| nv > nb).count() as u32;
    let ties = pairs.len() as u32 - wins - losses;
    SignResult { wins, losses, ties, p: sign_test_p(wins, losses) }
}

/// Paired NV-IBF vs NBF sessions compared over their common horizon:
/// creature spawns and mean |A − A0|, both wins for NV-IBF when lower.
pub fn closed_loop(seeds: std::ops::Range<u64>) -> (SignResult, SignResult) {
    use affectloop_core::glados::EventKind;
    use affectloop_core::simulator::{run, ScenarioConfig};
    let mut spawns = Vec::new();
    let mut devs = Vec::new();
    for seed in seeds {
        let nb = run(&ScenarioConfig { seed, condition: Condition::NBF, ..ScenarioConfig::default() }).unwrap();
        let cfg = ScenarioConfig { seed, condition: Condition::NVIBF, ..ScenarioConfig::default() };
        let nv = run(&cfg).unwrap();
        let h = nb.end_time.min(nv.end_time);
        let count = |r: &affectloop_core::simulator::SessionRecord| {
            r.events.iter().filter(|e| e.kind == EventKind::CreatureSpawn && e.timestamp <= h + 1e-9).count() as f64
        };
        let a0 = cfg.baseline.arousal0;
        let dev = |r: &affectloop_core::simulator::SessionRecord| {
            let xs: Vec<f64> = r.av.iter().filter(|(t, _)| *t <= h + 1e-9).map(|(_, s)| (s.arousal() - a0).abs()).collect();
            xs.iter().sum::<f64>() / xs.len().max(1) as f64
        };
        spawns.push((count(&nv), count(&nb)));
        devs.push((dev(&nv), dev(&nb)));
    }
    (sign(&spawns), sign(&devs))
}
