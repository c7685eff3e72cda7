//! Acceptance runner: one PASS/FAIL line per criterion, non-zero exit on
//! any failure.

mod common;

use std::path::Path;
use std::time::Instant;

use affectloop_core::av::{AvTrace, EmotionalState};
use affectloop_core::clears::Condition;
use affectloop_core::eet::{detect_responses, time_region, DetectParams, ThresholdMode};
use affectloop_core::glados::{EventKind, EventRecord};
use affectloop_core::simulator::{run, ScenarioConfig};
use affectloop_core::worldgen::DelayConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = (bool, String);

fn records(times: &[f64]) -> Vec<EventRecord> {
    times
        .iter()
        .map(|&t| EventRecord { timestamp: t, kind: EventKind::CreatureSpawn, params: Vec::new(), comment: None })
        .collect()
}

fn c1_worldgen() -> Verdict {
    let t0 = Instant::now();
    let seeds = 10_000u64;
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(16) as u64;
    let delays = DelayConfig::default();
    let failures: Vec<String> = std::thread::scope(|s| {
        let hs: Vec<_> = (0..threads)
            .map(|k| {
                let delays = &delays;
                s.spawn(move || {
                    let mut bad = Vec::new();
                    for seed in (k..seeds).step_by(threads as usize) {
                        let wg = common::walk(seed, 200);
                        for e in common::placement_oracle(&common::log_text(&wg), delays) {
                            bad.push(format!("seed {seed}: {e}"));
                        }
                    }
                    bad
                })
            })
            .collect();
        hs.into_iter().flat_map(|h| h.join().unwrap()).collect()
    });
    let secs = t0.elapsed().as_secs_f64();
    let ok = failures.is_empty() && secs < 60.0;
    (ok, format!("{seeds} walks x 200 steps, {} violations, {secs:.1} s {}", failures.len(), failures.first().cloned().unwrap_or_default()))
}

fn c2_eet_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut disagreements = Vec::new();
    let mut responses = 0usize;
    for case in 0..1000u64 {
        let (trace, times) = common::synthetic_case(case);
        let window = [2.0, 5.0, 10.0][rng.gen_range(0..3)];
        for mode in [ThresholdMode::Literal, ThresholdMode::Deviation] {
            let params = DetectParams { window, mode, min_threshold: 0.0 };
            let lib = detect_responses(&trace, &records(&times), &params);
            let oracle = common::oracle_detect(&trace, &times, window, mode, 0.0);
            match (lib, oracle) {
                (Ok(l), Ok(o)) => {
                    responses += l.len();
                    for d in common::compare_responses(&trace, &l, &o) {
                        disagreements.push(format!("case {case} {mode:?}: {d}"));
                    }
                }
                (Err(_), Err(_)) => {}
                (l, o) => disagreements.push(format!("case {case} {mode:?}: lib {:?} vs oracle {:?}", l.is_ok(), o.is_ok())),
            }
        }
    }
    let mut constant_hits = 0;
    for k in 0..50u64 {
        let level = (k % 11) as f64 * 0.9;
        let n = 50 + k as usize * 7;
        let trace = AvTrace::new(0.0, 0.1, vec![EmotionalState::new(level, 10.0 - level).unwrap(); n]).unwrap();
        let times: Vec<f64> = (0..(k % 5 + 1)).map(|i| i as f64 * 0.5).collect();
        for mode in [ThresholdMode::Literal, ThresholdMode::Deviation] {
            let params = DetectParams { window: 10.0, mode, min_threshold: 0.0 };
            constant_hits += detect_responses(&trace, &records(&times), &params).unwrap().len();
        }
    }
    (
        disagreements.is_empty() && constant_hits == 0,
        format!(
            "1000 traces x 2 modes, {responses} responses, {} disagreements, {constant_hits} responses on constant traces {}",
            disagreements.len(),
            disagreements.first().cloned().unwrap_or_default()
        ),
    )
}

fn c3_eet_formula() -> Verdict {
    let a = time_region(&[100.0, 104.0], 0, 10.0, 1000.0).unwrap();
    let b = time_region(&[100.0, 150.0], 0, 10.0, 1000.0).unwrap();
    let mut bad = Vec::new();
    if (a.start, a.end) != (100.0, 104.0) {
        bad.push(format!("[100,104] gave {a:?}"));
    }
    if (b.start, b.end) != (100.0, 110.0) {
        bad.push(format!("[100,110] gave {b:?}"));
    }
    let mut checked = 0usize;
    for case in 0..300u64 {
        let (trace, times) = common::synthetic_case(10_000 + case);
        let ts: Vec<f64> = (0..trace.len()).map(|k| trace.time_at(k)).collect();
        for mode in [ThresholdMode::Literal, ThresholdMode::Deviation] {
            let Ok(rs) = detect_responses(&trace, &records(&times), &DetectParams { window: 10.0, mode, min_threshold: 0.0 })
            else {
                continue;
            };
            for r in rs {
                let (inside, is_k) = common::oracle_region(&ts, r.region.start, r.region.end);
                let vals: Vec<f64> = inside.iter().map(|&k| trace.states()[k].get(r.dimension)).collect();
                let phi = common::oracle_phi(&vals, mode);
                let mut is = trace.states()[is_k].get(r.dimension);
                for e in &r.extrema {
                    checked += 1;
                    if (is - e.value).abs() < phi || e.is_value != is {
                        bad.push(format!("case {case}: |{} - {}| vs phi {phi}", e.is_value, e.value));
                    }
                    if e.timestamp < r.region.start - 1e-9 || e.timestamp > r.region.end + 1e-9 {
                        bad.push(format!("case {case}: extremum at {} outside region", e.timestamp));
                    }
                    is = e.value;
                }
                if r.extrema.windows(2).any(|w| w[0].maximum == w[1].maximum) {
                    bad.push(format!("case {case}: extrema do not alternate"));
                }
            }
        }
    }
    (bad.is_empty(), format!("region examples exact, {checked} extrema re-checked, {} problems {}", bad.len(), bad.first().cloned().unwrap_or_default()))
}

fn c4_clears() -> Verdict {
    let sweep = common::clears_threshold_sweep();
    let grid = common::clears_grid_properties();
    (
        sweep.is_empty() && grid.is_empty(),
        format!("{} threshold problems, {} grid problems {}", sweep.len(), grid.len(), sweep.iter().chain(&grid).next().cloned().unwrap_or_default()),
    )
}

fn c5_closed_loop() -> Verdict {
    let (spawns, dev) = common::closed_loop(0..30);
    (
        spawns.p < 0.05 && dev.p < 0.05,
        format!(
            "30 pairs; creature spawns fewer {}/{} (ties {}) p={:.2e}; |A-A0| lower {}/{} (ties {}) p={:.2e}",
            spawns.wins,
            spawns.losses,
            spawns.ties,
            spawns.p,
            dev.wins,
            dev.losses,
            dev.ties,
            dev.p
        ),
    )
}

fn c6_piers() -> Verdict {
    let mut bad = Vec::new();
    let (mut checked, mut excluded, mut worst) = (0, 0, 0f64);
    for seed in 0..24u64 {
        let cond = [Condition::NBF, Condition::VIBF, Condition::NVIBF][seed as usize % 3];
        let r = common::piers_recovery(seed, cond, 120.0);
        checked += r.checked;
        excluded += r.excluded;
        worst = worst.max(r.worst_ratio);
        bad.extend(r.violations);
    }
    bad.extend(common::fusion_checks(24));
    (
        bad.is_empty() && checked > 0,
        format!("{checked} ticks within lag bound (worst error/bound {worst:.3}), {excluded} onset ticks skipped, {} problems {}", bad.len(), bad.first().cloned().unwrap_or_default()),
    )
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

fn c7_determinism() -> Verdict {
    let cfg = ScenarioConfig { seed: 42, condition: Condition::NVIBF, ..ScenarioConfig::default() };
    let base = std::env::temp_dir().join(format!("affectloop-acceptance-{}", std::process::id()));
    let (a, b) = (base.join("a"), base.join("b"));
    for d in [&a, &b] {
        std::fs::create_dir_all(d).unwrap();
        run(&cfg).unwrap().write_dir(d).unwrap();
    }
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden_seed42");
    let (da, db, df) = (dir_bytes(&a), dir_bytes(&b), dir_bytes(&fixture));
    let _ = std::fs::remove_dir_all(&base);
    (da == db && da == df, format!("repeat identical: {}, golden seed 42 identical: {} ({} files)", da == db, da == df, df.len()))
}

fn c8_game_logic() -> Verdict {
    let res = common::micro_scenarios();
    let failed: Vec<String> = res.iter().filter(|r| !r.1).map(|r| format!("{}: {}", r.0, r.2)).collect();
    (failed.is_empty() && res.len() == 6, format!("{}/{} scenarios hold {}", res.len() - failed.len(), res.len(), failed.join("; ")))
}

fn main() {
    let criteria: [(u8, &str, fn() -> Verdict); 8] = [
        (1, "worldgen soundness", c1_worldgen),
        (2, "eet oracle equivalence", c2_eet_oracle),
        (3, "eet region and threshold", c3_eet_formula),
        (4, "clears thresholds", c4_clears),
        (5, "closed-loop direction", c5_closed_loop),
        (6, "piers recovery", c6_piers),
        (7, "determinism", c7_determinism),
        (8, "game logic", c8_game_logic),
    ];
    let mut failed = 0;
    for (n, name, f) in criteria {
        let (ok, detail) = f();
        failed += usize::from(!ok);
        println!("criterion {n}: {} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
