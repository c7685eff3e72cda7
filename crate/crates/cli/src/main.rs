use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use affectloop_core::av::align_trace;
use affectloop_core::clears::Condition;
use affectloop_core::config::load_config;
use affectloop_core::eet::{
    detect_responses, export_responses, import_events, parse_av_csv, response_stats, save_session, DetectParams,
    EetError, EetSession, ThresholdMode, DEFAULT_WINDOW,
};
use affectloop_core::piers::{
    classify_stream, fit_calibration, parse_calibration, parse_physio_csv, reference_calibration, PiersModel,
};
use affectloop_core::report::summarize_dir;
use affectloop_core::simulator::{run, ScenarioConfig, SimError};
use clap::{Parser, Subcommand};

const SEED_ENV: &str = "AFFECTLOOP_SEED";

#[derive(Parser, Debug)]
#[command(name = "affectloop", version, about = "Closed-loop affective horror game simulator and emotion-event triangulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run seeded sessions and write their record directories.
    Simulate {
        /// Scenario file with dotted `key = value` lines; defaults otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides `session.seed`; AFFECTLOOP_SEED overrides this.
        #[arg(long)]
        seed: Option<u64>,
        /// nbf, vibf or nvibf; overrides `session.condition`.
        #[arg(long, value_parser = parse_condition)]
        condition: Option<Condition>,
        #[arg(long)]
        out: PathBuf,
        /// Number of consecutive seeds; each goes to `<out>/seed-<n>/` when above 1.
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        runs: u64,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        jobs: u64,
    },
    /// Fit a participant model from a calibration CSV.
    Calibrate {
        /// `phase,sc,hr,emg_zyg,emg_corr,arousal,valence` lines.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
        smoothing: u64,
    },
    /// Replay a physiological CSV through the classifier.
    Classify {
        /// `t,sc,hr,emg_zyg,emg_corr` rows.
        #[arg(long)]
        physio: PathBuf,
        /// Model written by `calibrate`; the built-in reference participant otherwise.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
        window_ticks: u64,
        /// Overrides the model's smoothing window.
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        smoothing: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Find emotional responses to logged events in an AV trace.
    Triangulate {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        events: PathBuf,
        #[arg(long, default_value = "deviation", value_parser = parse_mode)]
        mode: ThresholdMode,
        /// Region length in seconds.
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: f64,
        #[arg(long, default_value_t = 0.0)]
        min_threshold: f64,
        /// Shift applied to trace timestamps before matching.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        offset: f64,
        #[arg(long)]
        out: PathBuf,
        /// Also save an .eet session container.
        #[arg(long)]
        session: Option<PathBuf>,
    },
    /// Summarise a session directory.
    Report { dir: PathBuf },
}

fn parse_condition(s: &str) -> Result<Condition, String> {
    s.parse()
}

fn parse_mode(s: &str) -> Result<ThresholdMode, String> {
    s.parse()
}

/// Failure with its exit code: 1 usage, 2 unreadable input, 3 runtime.
struct Failure(u8, String);

fn usage(msg: impl Into<String>) -> Failure {
    Failure(1, msg.into())
}

fn input(msg: impl Into<String>) -> Failure {
    Failure(2, msg.into())
}

fn runtime(msg: impl Into<String>) -> Failure {
    Failure(3, msg.into())
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| runtime(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, bytes).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn env_seed() -> Result<Option<u64>, Failure> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| usage(format!("{SEED_ENV}: `{v}` is not a seed"))),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(usage(format!("{SEED_ENV}: {e}"))),
    }
}

fn sim_failure(seed: u64, e: SimError) -> Failure {
    match e {
        SimError::Config(m) => input(format!("seed {seed}: {m}")),
        other => runtime(format!("seed {seed}: {other}")),
    }
}

fn simulate(
    config: Option<PathBuf>,
    seed: Option<u64>,
    condition: Option<Condition>,
    out: PathBuf,
    runs: u64,
    jobs: u64,
) -> Result<(), Failure> {
    let mut base = match &config {
        Some(p) => load_config(p).map_err(|e| input(format!("{}: {e}", p.display())))?,
        None => ScenarioConfig::default(),
    };
    if let Some(s) = env_seed()?.or(seed) {
        base.seed = s;
    }
    if let Some(c) = condition {
        base.condition = c;
    }
    let first = base.seed;
    let last = first.checked_add(runs - 1).ok_or_else(|| usage("seed range overflows"))?;
    let seeds: Vec<u64> = (first..=last).collect();
    let dir_for = |s: u64| if runs == 1 { out.clone() } else { out.join(format!("seed-{s}")) };

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(u64, Result<String, Failure>)>> = Mutex::new(Vec::new());
    let workers = (jobs as usize).min(seeds.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&s) = seeds.get(i) else { break };
                let cfg = ScenarioConfig { seed: s, ..base.clone() };
                let r = run(&cfg).map_err(|e| sim_failure(s, e)).and_then(|rec| {
                    let dir = dir_for(s);
                    rec.write_dir(&dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
                    Ok(format!("{s}\t{}\t{}\t{}", cfg.condition, rec.outcome, dir.display()))
                });
                results.lock().expect("no worker panics while holding the lock").push((s, r));
            });
        }
    });

    let mut results = results.into_inner().expect("workers have finished");
    results.sort_by_key(|(s, _)| *s);
    let mut worst: Option<Failure> = None;
    for (_, r) in results {
        match r {
            Ok(line) => println!("{line}"),
            Err(f) => {
                eprintln!("error: {}", f.1);
                if worst.as_ref().map_or(true, |w| f.0 > w.0) {
                    worst = Some(f);
                }
            }
        }
    }
    worst.map_or(Ok(()), Err)
}

fn calibrate(input_path: PathBuf, out: PathBuf, smoothing: u64) -> Result<(), Failure> {
    let records = parse_calibration(&read(&input_path)?).map_err(|e| input(format!("{}: {e}", input_path.display())))?;
    let model = fit_calibration(&records, smoothing as usize).map_err(|e| input(e.to_string()))?;
    write(&out, model.to_text())?;
    for m in model.channel_models() {
        println!("{}\t{}\tslope={}\tintercept={}\trss={}", m.channel.name(), m.target().name(), m.slope, m.intercept, m.rss);
    }
    Ok(())
}

fn classify(
    physio: PathBuf,
    model: Option<PathBuf>,
    window_ticks: u64,
    smoothing: Option<u64>,
    out: PathBuf,
) -> Result<(), Failure> {
    let samples = parse_physio_csv(&read(&physio)?).map_err(|e| input(format!("{}: {e}", physio.display())))?;
    let mut m = match &model {
        Some(p) => PiersModel::from_text(&read(p)?).map_err(|e| input(format!("{}: {e}", p.display())))?,
        None => fit_calibration(&reference_calibration(), 5).map_err(|e| runtime(e.to_string()))?,
    };
    if let Some(w) = smoothing {
        m = m.with_smoothing_window(w as usize).map_err(|e| usage(e.to_string()))?;
    }
    let states = classify_stream(&m, &samples, window_ticks as usize).map_err(|e| runtime(e.to_string()))?;
    write(&out, affectloop_core::eet::av_csv(states.iter().copied()))?;
    println!("classified\t{}", states.len());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn triangulate(
    trace: PathBuf,
    events: PathBuf,
    mode: ThresholdMode,
    window: f64,
    min_threshold: f64,
    offset: f64,
    out: PathBuf,
    session: Option<PathBuf>,
) -> Result<(), Failure> {
    if !(window > 0.0 && window.is_finite()) {
        return Err(usage(format!("--window must be positive, got {window}")));
    }
    if !(min_threshold >= 0.0 && min_threshold.is_finite()) {
        return Err(usage(format!("--min-threshold must be non-negative, got {min_threshold}")));
    }
    let av = parse_av_csv(&read(&trace)?).map_err(|e| input(format!("{}: {e}", trace.display())))?;
    let av = align_trace(&av, offset).map_err(|e| input(format!("--offset: {e}")))?;
    let report = import_events(&read(&events)?).map_err(|e| input(format!("{}: {e}", events.display())))?;
    for (line, msg) in &report.errors {
        eprintln!("warning: {}:{line}: {msg}", events.display());
    }
    let params = DetectParams { window, mode, min_threshold };
    let responses = detect_responses(&av, &report.records, &params).map_err(|e| match e {
        EetError::Coverage { .. } => runtime(e.to_string()),
        other => input(other.to_string()),
    })?;
    let stats = response_stats(report.records.len(), &responses).map_err(|e| input(e.to_string()))?;
    write(&out, export_responses(&responses))?;
    if let Some(p) = session {
        let s = EetSession {
            trace_ref: trace.display().to_string(),
            offset,
            events: report.records,
            params,
            responses: responses.clone(),
        };
        write(&p, save_session(&s))?;
    }
    println!("events\t{}", stats.events);
    println!("responses\t{}", responses.len());
    println!("answered\t{}", stats.answered);
    println!("ratio\t{:.6}", stats.event_response_ratio);
    match stats.simple_fraction {
        Some(f) => println!("simple_fraction\t{f:.6}"),
        None => println!("simple_fraction\tNA"),
    }
    Ok(())
}

fn report(dir: PathBuf) -> Result<(), Failure> {
    let s = summarize_dir(&dir).map_err(|e| input(format!("{}: {e}", dir.display())))?;
    print!("{}", s.to_text());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Simulate { config, seed, condition, out, runs, jobs } => {
            simulate(config, seed, condition, out, runs, jobs)
        }
        Command::Calibrate { input, out, smoothing } => calibrate(input, out, smoothing),
        Command::Classify { physio, model, window_ticks, smoothing, out } => {
            classify(physio, model, window_ticks, smoothing, out)
        }
        Command::Triangulate { trace, events, mode, window, min_threshold, offset, out, session } => {
            triangulate(trace, events, mode, window, min_threshold, offset, out, session)
        }
        Command::Report { dir } => report(dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
