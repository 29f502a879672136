use std::collections::HashMap;
use std::io::Write;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Once};
use std::time::Duration;

use pdwatch_core::codec::{batch_decode, export_csv, write_iqf, DataStore};
use pdwatch_core::coverage::{p_detect_analytic, p_detect_monte_carlo, required_sweeps, DetectionModel, PulseProcess};
use pdwatch_core::dsp::{peak_search, spectrum_from_frame};
use pdwatch_core::frame::truncate_ms;
use pdwatch_core::sim::{EmitterScene, FrontEnd, SimDevice};
use pdwatch_core::sweep::{
    format_window_line, run_monitor, Clock, MonitorControl, MonitorObserver, SimClock, SweepResult, SystemClock,
    WindowReport,
};
use pdwatch_sync::agent::AgentConfig;
use pdwatch_sync::{spawn_server, Agent, HttpRemote, ServerConfig};

use crate::config::RunConfig;
use crate::control::ControlServer;
use crate::{
    AnalyzeArgs, Cli, CliError, ClockKind, Command, DecodeArgs, PlanFlags, ScanArgs, ServeArgs, SimulateArgs, SyncArgs,
    TableFormat,
};

static INTERRUPTED: AtomicBool = AtomicBool::new(false);
static HANDLER: Once = Once::new();

fn watch_interrupts() {
    HANDLER.call_once(|| {
        if let Err(e) = ctrlc::set_handler(|| INTERRUPTED.store(true, Ordering::SeqCst)) {
            tracing::warn!("cannot install interrupt handler: {e}");
        }
    });
    INTERRUPTED.store(false, Ordering::SeqCst);
}

fn interrupted() -> bool {
    INTERRUPTED.load(Ordering::SeqCst)
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn init_logging(level: &str) {
    let _ = tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::new(format!(
            "warn,pdwatch_core={level},pdwatch_sync={level},pdwatch_cli={level}"
        )))
        .with_writer(std::io::stderr)
        .try_init();
}

fn apply_plan_flags(cfg: &mut RunConfig, f: &PlanFlags) {
    let p = &mut cfg.plan;
    let set = |slot: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *slot = v;
        }
    };
    set(&mut p.f_start, f.f_start);
    set(&mut p.f_stop, f.f_stop);
    set(&mut p.step, f.step);
    set(&mut p.span, f.span);
    set(&mut p.dwell, f.dwell);
    set(&mut p.threshold_dbm, f.threshold_dbm);
    set(&mut cfg.device.iq_rate, f.iq_rate);
    if let Some(n) = f.n_fft {
        p.n_fft = n;
    }
}

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    let env: HashMap<String, String> = std::env::vars().collect();
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    cfg.apply_env(&env)?;
    if let Some(level) = cli.log {
        cfg.log = level;
    }
    match &cli.command {
        Command::Scan(a) => {
            apply_plan_flags(&mut cfg, &a.plan);
            if let Some(s) = &a.scene {
                cfg.scene = Some(s.clone());
            }
            if let Some(d) = &a.data_dir {
                cfg.data_dir = d.clone();
            }
            if let Some(b) = a.control_bind {
                cfg.control_bind = Some(b);
            }
        }
        Command::Simulate(a) => {
            apply_plan_flags(&mut cfg, &a.plan);
            if let Some(s) = &a.scene {
                cfg.scene = Some(s.clone());
            }
        }
        Command::Serve(a) => {
            if let Some(b) = a.bind {
                cfg.remote.bind = b;
            }
            if let Some(r) = &a.root {
                cfg.remote.root = r.clone();
            }
            if let Some(t) = &a.token {
                cfg.remote.token = Some(t.clone());
            }
            if let Some(u) = &a.public_url {
                cfg.remote.public_url = Some(u.clone());
            }
        }
        Command::Sync(a) => {
            if let Some(d) = &a.data_dir {
                cfg.data_dir = d.clone();
            }
            if let Some(u) = &a.remote_url {
                cfg.remote.url = u.clone();
            }
            if let Some(t) = &a.token {
                cfg.remote.token = Some(t.clone());
            }
        }
        Command::Decode(_) | Command::Analyze(_) => {}
    }
    cfg.validate()?;
    init_logging(&cfg.log);
    match cli.command {
        Command::Scan(a) => scan(&cfg, &a),
        Command::Decode(a) => decode(&a),
        Command::Analyze(a) => analyze(&a),
        Command::Serve(a) => serve(&cfg, &a),
        Command::Sync(a) => sync(&cfg, &a),
        Command::Simulate(a) => simulate(&cfg, &a),
    }
}

fn load_scene(cfg: &RunConfig) -> Result<EmitterScene, CliError> {
    match &cfg.scene {
        Some(p) => EmitterScene::load(p).map_err(config_err),
        None => EmitterScene::new(Vec::new(), EmitterScene::DEFAULT_NOISE_DENSITY, 0).map_err(config_err),
    }
}

fn build_device(cfg: &RunConfig) -> Result<SimDevice, CliError> {
    let mut dev = cfg.device.clone();
    dev.span = cfg.plan.span;
    SimDevice::new(load_scene(cfg)?, dev).map_err(config_err)
}

struct Printer {
    quiet: bool,
}

impl MonitorObserver<f64> for Printer {
    fn on_window(&mut self, r: &WindowReport) {
        if !self.quiet {
            let mut out = std::io::stdout().lock();
            let _ = writeln!(out, "{}", format_window_line(r));
        }
    }

    fn on_sweep(&mut self, r: &SweepResult<f64>) {
        let failed = r.windows.iter().filter(|w| w.error.is_some()).count();
        let mut out = std::io::stdout().lock();
        let _ = writeln!(
            out,
            "sweep {} {}: {} windows, {} events, {} failed, {:.1} ms",
            r.sweep_id,
            if r.complete { "complete" } else { "partial" },
            r.windows.len(),
            r.events.len(),
            failed,
            r.duration.as_secs_f64() * 1e3
        );
        let _ = out.flush();
    }
}

fn scan(cfg: &RunConfig, args: &ScanArgs) -> Result<(), CliError> {
    let mut device = build_device(cfg)?;
    let control = MonitorControl::new(cfg.plan.clone())
        .and_then(|c| c.with_span_limit(cfg.device.iq_rate))
        .map_err(config_err)?;
    let control = Arc::new(control);
    let store = DataStore::open(&cfg.data_dir).map_err(runtime_err)?.with_watermark(cfg.max_store_bytes);
    let _control_server = match cfg.control_bind {
        Some(bind) => {
            let server = ControlServer::start(bind, control.clone()).map_err(runtime_err)?;
            eprintln!("control endpoint listening on http://{}", server.addr);
            Some(server)
        }
        None => None,
    };
    let iterations = if args.forever { None } else { Some(args.iterations.unwrap_or(1)) };
    let mut clock: Box<dyn Clock> = match args.clock {
        ClockKind::System => Box::new(SystemClock),
        ClockKind::Sim => Box::new(SimClock::starting_at(truncate_ms(chrono::Utc::now()))),
    };
    watch_interrupts();
    let done = AtomicBool::new(false);
    let summary = std::thread::scope(|s| {
        s.spawn(|| {
            while !done.load(Ordering::SeqCst) {
                if interrupted() {
                    control.shutdown();
                    break;
                }
                std::thread::sleep(Duration::from_millis(20));
            }
        });
        let mut printer = Printer { quiet: args.quiet };
        let r = run_monitor::<f64, _, _>(&control, &mut device, clock.as_mut(), &store, iterations, &mut printer);
        done.store(true, Ordering::SeqCst);
        r
    })
    .map_err(runtime_err)?;
    eprintln!(
        "scan finished: {} sweeps ({} partial), {} events, data in {}",
        summary.sweeps,
        summary.partial_sweeps,
        summary.events,
        store.root().display()
    );
    if let Some(first) = summary.persist_errors.first() {
        return Err(CliError::Runtime(format!("{} sweeps failed to persist: {first}", summary.persist_errors.len())));
    }
    Ok(())
}

fn decode(args: &DecodeArgs) -> Result<(), CliError> {
    if !args.input.is_dir() {
        return Err(CliError::Config(format!("input directory {} does not exist", args.input.display())));
    }
    let manifest = batch_decode(&args.input, &args.output).map_err(runtime_err)?;
    let mut failed = 0;
    for entry in &manifest {
        match &entry.output {
            Ok(out) => println!("ok {} -> {}", entry.input.display(), out.display()),
            Err(e) => {
                failed += 1;
                println!("FAILED {}: {e}", entry.input.display());
            }
        }
    }
    println!("{} decoded, {failed} failed", manifest.len() - failed);
    if failed > 0 {
        return Err(CliError::Runtime(format!("{failed} of {} files failed to decode", manifest.len())));
    }
    Ok(())
}

const LTD_GRID: [f64; 5] = [0.01, 0.1, 1.0, 3.0, 10.0];

fn analyze(a: &AnalyzeArgs) -> Result<(), CliError> {
    let process = match a.period {
        Some(period) => PulseProcess::FixedPeriod { period },
        None => PulseProcess::Poisson { rate: a.rate },
    };
    let model = DetectionModel {
        process,
        dwell: a.dwell,
        n_windows: a.windows,
        overhead: a.overhead,
        n_sweeps: a.sweeps,
        p_single: a.p_single,
    };
    model.validate().map_err(config_err)?;
    if !(a.target_p > 0.0 && a.target_p < 1.0) {
        return Err(CliError::Config("--target-p must lie in (0, 1)".into()));
    }
    if a.trials < pdwatch_core::coverage::MIN_TRIALS {
        return Err(CliError::Config(format!("--trials must be at least {}", pdwatch_core::coverage::MIN_TRIALS)));
    }

    // rate grid: the standard λ·T_d points plus the requested model
    let own = match process {
        PulseProcess::Poisson { rate } => rate * a.dwell,
        PulseProcess::FixedPeriod { period } => a.dwell / period,
    };
    let mut grid: Vec<f64> = LTD_GRID.to_vec();
    if !grid.iter().any(|g| (g - own).abs() <= 1e-12 * own.max(1.0)) {
        grid.push(own);
        grid.sort_by(f64::total_cmp);
    }
    let with_ltd = |ltd: f64| DetectionModel {
        process: match process {
            PulseProcess::Poisson { .. } => PulseProcess::Poisson { rate: ltd / a.dwell },
            PulseProcess::FixedPeriod { .. } => PulseProcess::FixedPeriod { period: a.dwell / ltd },
        },
        ..model
    };
    let mut rate_rows = Vec::new();
    for (i, ltd) in grid.iter().enumerate() {
        let m = with_ltd(*ltd);
        let mc = p_detect_monte_carlo(&m, a.trials, a.seed.wrapping_add(i as u64)).map_err(config_err)?;
        rate_rows.push((*ltd, m, p_detect_analytic(&m), mc));
    }
    let required = required_sweeps(&model, a.target_p);
    let horizon = match &required {
        Ok(m) => (*m).clamp(a.sweeps, 50),
        Err(_) => a.sweeps.max(10),
    };
    let revisit = model.revisit_period();
    let sweep_rows: Vec<(usize, f64)> = (1..=horizon).map(|m| (m, p_detect_analytic(&model.with_sweeps(m)))).collect();
    let rate_of = |m: &DetectionModel| match m.process {
        PulseProcess::Poisson { rate } => rate,
        PulseProcess::FixedPeriod { period } => 1.0 / period,
    };

    let mut out = std::io::stdout().lock();
    let w = |out: &mut std::io::StdoutLock, s: String| writeln!(out, "{s}").map_err(runtime_err);
    match a.format {
        TableFormat::Text => {
            let mode = match process {
                PulseProcess::Poisson { rate } => format!("poisson arrivals, rate {rate} /s"),
                PulseProcess::FixedPeriod { period } => format!("fixed period {period} s"),
            };
            w(
                &mut out,
                format!(
                    "model: {mode}; dwell {:.3} ms; {} windows; overhead {} s; revisit {:.3} s; p_single {}",
                    a.dwell * 1e3,
                    a.windows,
                    a.overhead,
                    revisit,
                    a.p_single
                ),
            )?;
            w(&mut out, String::new())?;
            w(&mut out, format!("detection probability vs pulse rate ({} sweeps, {} trials)", a.sweeps, a.trials))?;
            w(
                &mut out,
                format!(
                    "{:>10} {:>12} {:>10} {:>12} {:>10}",
                    "lambda_Td", "rate_hz", "analytic", "monte_carlo", "stderr"
                ),
            )?;
            for (ltd, m, p, mc) in &rate_rows {
                w(
                    &mut out,
                    format!("{:>10.3} {:>12.3} {:>10.6} {:>12.6} {:>10.6}", ltd, rate_of(m), p, mc.estimate, mc.stderr),
                )?;
            }
            w(&mut out, String::new())?;
            w(&mut out, "detection probability vs sweeps".to_string())?;
            w(&mut out, format!("{:>6} {:>10} {:>10}", "sweeps", "time_s", "analytic"))?;
            for (m, p) in &sweep_rows {
                w(&mut out, format!("{:>6} {:>10.3} {:>10.6}", m, *m as f64 * revisit, p))?;
            }
            w(&mut out, String::new())?;
            match required {
                Ok(m) => w(
                    &mut out,
                    format!("required sweeps for P >= {}: {m} ({:.3} s of scanning)", a.target_p, m as f64 * revisit),
                )?,
                Err(e) => w(&mut out, format!("required sweeps for P >= {}: {e}", a.target_p))?,
            }
        }
        TableFormat::Csv => {
            w(&mut out, "table,lambda_td,rate_hz,sweeps,time_s,analytic,monte_carlo,stderr".into())?;
            for (ltd, m, p, mc) in &rate_rows {
                w(
                    &mut out,
                    format!(
                        "rate,{ltd},{},{},{},{p},{},{}",
                        rate_of(m),
                        a.sweeps,
                        a.sweeps as f64 * revisit,
                        mc.estimate,
                        mc.stderr
                    ),
                )?;
            }
            for (m, p) in &sweep_rows {
                w(&mut out, format!("sweeps,{own},{},{m},{},{p},,", rate_of(&model), *m as f64 * revisit))?;
            }
            if let Ok(m) = required {
                w(
                    &mut out,
                    format!(
                        "required,{own},{},{m},{},{},,",
                        rate_of(&model),
                        m as f64 * revisit,
                        p_detect_analytic(&model.with_sweeps(m))
                    ),
                )?;
            }
        }
    }
    Ok(())
}

fn serve(cfg: &RunConfig, _args: &ServeArgs) -> Result<(), CliError> {
    let mut sc = ServerConfig::new(&cfg.remote.root, cfg.remote.bind);
    sc.token = cfg.remote.token.clone();
    sc.public_url = cfg.remote.public_url.clone();
    let handle = spawn_server(sc).map_err(runtime_err)?;
    eprintln!("remote store listening on {}", handle.url());
    watch_interrupts();
    while !interrupted() {
        std::thread::sleep(Duration::from_millis(50));
    }
    handle.stop();
    eprintln!("remote store stopped");
    Ok(())
}

fn sync(cfg: &RunConfig, args: &SyncArgs) -> Result<(), CliError> {
    let s = &cfg.sync;
    let mut ac = AgentConfig::new(&cfg.data_dir);
    ac.workers = s.workers;
    ac.backoff_base = Duration::from_secs_f64(s.backoff_base_s);
    ac.backoff_cap = Duration::from_secs_f64(s.backoff_cap_s);
    ac.jitter = s.jitter;
    ac.poll_interval = Duration::from_secs_f64(s.poll_interval_s);
    let remote =
        HttpRemote::new(&cfg.remote.url, cfg.remote.token.clone(), Duration::from_secs(30)).map_err(runtime_err)?;
    let agent = Agent::open(ac, remote).map_err(runtime_err)?;
    if args.once {
        let pass = agent.run_once().map_err(runtime_err)?;
        let st = agent.status();
        println!(
            "uploaded {} of {} due; {} acked, {} pending",
            pass.acked,
            pass.attempted,
            st.acked,
            st.pending + st.uploaded
        );
        return Ok(());
    }
    eprintln!("syncing {} to {}", cfg.data_dir.display(), cfg.remote.url);
    watch_interrupts();
    let stop = AtomicBool::new(false);
    std::thread::scope(|scope| {
        scope.spawn(|| {
            while !stop.load(Ordering::SeqCst) {
                if interrupted() {
                    stop.store(true, Ordering::SeqCst);
                }
                std::thread::sleep(Duration::from_millis(20));
            }
        });
        let r = agent.run(&stop);
        stop.store(true, Ordering::SeqCst);
        r
    })
    .map_err(runtime_err)?;
    let st = agent.status();
    eprintln!("sync stopped: {} acked, {} pending", st.acked, st.pending + st.uploaded);
    Ok(())
}

fn simulate(cfg: &RunConfig, args: &SimulateArgs) -> Result<(), CliError> {
    let mut device = build_device(cfg)?;
    device.tune(args.center).map_err(config_err)?;
    let mut frame = device.acquire(cfg.plan.dwell, truncate_ms(chrono::Utc::now())).map_err(runtime_err)?;
    frame.window_index = 0;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(runtime_err)?;
    }
    let bytes = write_iqf(&frame, &args.out).map_err(runtime_err)?;
    let spec = spectrum_from_frame::<f64>(&frame, cfg.plan.n_fft, cfg.plan.window_fn).map_err(runtime_err)?;
    let peak = peak_search(&spec.trimmed_to_span());
    print!("wrote {} ({bytes} bytes, {} samples)", args.out.display(), frame.len());
    if let Some(p) = peak {
        print!("; peak {:.3} MHz at {:.3} dBm", p.freq / 1e6, p.power_dbm);
    }
    println!();
    if args.csv {
        let csv = args.out.with_extension("csv");
        export_csv(&frame, &csv).map_err(runtime_err)?;
        println!("wrote {}", csv.display());
    }
    Ok(())
}
