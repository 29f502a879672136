mod common;

use std::time::Duration;

use common::*;

const SMALL_PLAN: [&str; 10] =
    ["--f-start", "100e6", "--f-stop", "140e6", "--step", "20e6", "--span", "20e6", "--iq-rate", "20e6"];

#[test]
fn help_and_version_exit_zero() {
    let o = run(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("scan"));
    let o = run(&["--version"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(run(&["scan", "--help"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&[]).status.code(), Some(2));
    assert_eq!(run(&["scan", "--bogus"]).status.code(), Some(2));
    assert_eq!(run(&["scan", "--iterations", "2", "--forever"]).status.code(), Some(2));
    assert_eq!(run(&["analyze", "--rate", "nan"]).status.code(), Some(2));
    assert_eq!(run(&["analyze", "--p-single", "1.5"]).status.code(), Some(2));
    assert_eq!(run(&["analyze", "--trials", "10"]).status.code(), Some(2));
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    let o = run(&["--config", missing.to_str().unwrap(), "analyze"]);
    assert_eq!(o.status.code(), Some(2));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "colour = 3\n").unwrap();
    let o = run(&["--config", bad.to_str().unwrap(), "analyze"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let o = bin().env("PDWATCH_FROBNICATE", "1").arg("analyze").output().unwrap();
    assert_eq!(o.status.code(), Some(2));

    let data = dir.path().join("data");
    let o = run(&["scan", "--data-dir", data.to_str().unwrap(), "--span", "80e6", "--iq-rate", "40e6"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let scene = dir.path().join("scene.toml");
    std::fs::write(&scene, "noise_density_dbm_hz = -164\n[[emitters]]\nkind = \"cw\"\nfreq_hz = 1e8\n").unwrap();
    let o = run(&["scan", "--data-dir", data.to_str().unwrap(), "--scene", scene.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_env_and_flags_layer_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("pd.toml");
    std::fs::write(
        &cfg,
        "[plan]\nf_start = 100e6\nf_stop = 140e6\nstep = 20e6\nspan = 20e6\nthreshold_dbm = -10.0\n[device]\niq_rate = 20e6\n",
    )
    .unwrap();
    let scene = write_scene(dir.path(), "s.toml", 1, &[cw_toml(121e6, -30.0)]);
    let data = dir.path().join("d");
    let args = ["scan", "--clock", "sim", "--scene", scene.to_str().unwrap(), "--data-dir", data.to_str().unwrap()];

    // file threshold −10 dBm hides the −30 dBm tone
    let o = bin().arg("--config").arg(&cfg).args(args).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(!stdout(&o).contains("THRESHOLD"));

    // env lowers it
    let o = bin().env("PDWATCH_CONFIG", &cfg).env("PDWATCH_THRESHOLD_DBM", "-50").args(args).output().unwrap();
    assert!(stdout(&o).contains("THRESHOLD"), "{}", stdout(&o));

    // flag wins over env
    let o = bin()
        .env("PDWATCH_CONFIG", &cfg)
        .env("PDWATCH_THRESHOLD_DBM", "-50")
        .args(args)
        .args(["--threshold-dbm", "-20"])
        .output()
        .unwrap();
    assert!(!stdout(&o).contains("THRESHOLD"));
}

#[test]
fn scan_prints_window_lines_and_persists_only_events() {
    let dir = tempfile::tempdir().unwrap();
    let scene = write_scene(dir.path(), "s.toml", 3, &[cw_toml(121e6, -40.0)]);
    let data = dir.path().join("d");
    let mut args = vec!["scan", "--clock", "sim", "--iterations", "2", "--scene", scene.to_str().unwrap()];
    args.extend(["--data-dir", data.to_str().unwrap()]);
    args.extend(SMALL_PLAN);
    let o = run(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let windows: Vec<&str> = out.lines().filter(|l| l.contains(">>> cf MHz=")).collect();
    assert_eq!(windows.len(), 6);
    assert!(windows[1].contains("cf MHz= 120.000") && windows[1].ends_with("...THRESHOLD"));
    assert!(windows[0].ends_with("...noise") && windows[2].ends_with("...noise"));
    assert_eq!(out.lines().filter(|l| l.starts_with("sweep ")).count(), 2);

    let iqf = std::fs::read_dir(data.join("events"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "iqf"));
    assert_eq!(iqf.count(), 2);
    assert_eq!(std::fs::read_dir(data.join("sweeps")).unwrap().count(), 2);
    let index = std::fs::read_to_string(data.join("index/events.jsonl")).unwrap();
    assert_eq!(index.lines().count(), 2);
}

#[test]
fn scan_stops_cleanly_on_sigint() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    let mut cmd = bin();
    cmd.args(["scan", "--forever", "--quiet", "--data-dir", data.to_str().unwrap()]).args(SMALL_PLAN);
    let mut p = Spawned::start(cmd);
    std::thread::sleep(Duration::from_millis(1500));
    p.signal(libc::SIGINT);
    assert_eq!(p.wait_exit(Duration::from_secs(10)), Some(0));
    p.wait_line("scan finished:", Duration::from_secs(2));
    assert!(std::fs::read_dir(data.join("sweeps")).unwrap().count() >= 1);
}

#[test]
fn control_endpoint_drives_running_scan() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    let mut cmd = bin();
    cmd.args(["scan", "--forever", "--quiet", "--control-bind", "127.0.0.1:0"])
        .args(["--data-dir", data.to_str().unwrap()])
        .args(SMALL_PLAN);
    let mut p = Spawned::start(cmd);
    let url = p.wait_line("control endpoint listening on", Duration::from_secs(20));
    let http = reqwest::blocking::Client::new();

    let st: serde_json::Value = http.get(format!("{url}/plan")).send().unwrap().json().unwrap();
    assert_eq!(st["plan"]["threshold_dbm"], -50.0);
    assert_eq!(st["running"], true);

    let r = http
        .post(format!("{url}/plan"))
        .json(&serde_json::json!({"threshold_dbm": -72.5, "step_hz": 10e6}))
        .send()
        .unwrap();
    assert_eq!(r.status().as_u16(), 200);
    let st: serde_json::Value = http.get(format!("{url}/plan")).send().unwrap().json().unwrap();
    assert_eq!(st["plan"]["threshold_dbm"], -72.5);
    assert_eq!(st["plan"]["step"], 10e6);

    for bad in
        [serde_json::json!({"colour": 1}), serde_json::json!({"span_hz": 80e6}), serde_json::json!({"step_hz": -1})]
    {
        let r = http.post(format!("{url}/plan")).json(&bad).send().unwrap();
        assert_eq!(r.status().as_u16(), 400, "{bad}");
        let body: serde_json::Value = r.json().unwrap();
        assert_eq!(body["error"], "bad_plan");
    }

    let st: serde_json::Value = http.post(format!("{url}/stop")).send().unwrap().json().unwrap();
    assert_eq!(st["running"], false);
    let st: serde_json::Value = http.post(format!("{url}/start")).send().unwrap().json().unwrap();
    assert_eq!(st["running"], true);

    p.signal(libc::SIGINT);
    assert_eq!(p.wait_exit(Duration::from_secs(10)), Some(0));
}

#[test]
fn simulate_then_decode_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let scene = write_scene(dir.path(), "s.toml", 5, &[cw_toml(315e6, -36.0)]);
    let caps = dir.path().join("caps");
    let iqf = caps.join("tone.iqf");
    let o = run(&[
        "simulate",
        "--scene",
        scene.to_str().unwrap(),
        "--center",
        "315e6",
        "--out",
        iqf.to_str().unwrap(),
        "--iq-rate",
        "4e6",
        "--span",
        "4e6",
        "--csv",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("peak 315.000 MHz"), "{}", stdout(&o));
    let direct = std::fs::read_to_string(caps.join("tone.csv")).unwrap();

    let out = dir.path().join("csv");
    let o = run(&["decode", "--in", caps.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let decoded = std::fs::read_to_string(out.join("tone.csv")).unwrap();
    assert_eq!(decoded, direct);

    std::fs::write(caps.join("junk.iqf"), b"not a recording").unwrap();
    let o = run(&["decode", "--in", caps.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAILED"));

    let o = run(&["decode", "--in", dir.path().join("absent").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn analyze_csv_matches_closed_form() {
    let o = run(&[
        "analyze",
        "--rate",
        "100",
        "--dwell",
        "0.01",
        "--windows",
        "61",
        "--format",
        "csv",
        "--trials",
        "20000",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "table,lambda_td,rate_hz,sweeps,time_s,analytic,monte_carlo,stderr");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    for r in rows.iter().filter(|r| r[0] == "rate") {
        let ltd: f64 = r[1].parse().unwrap();
        let analytic: f64 = r[5].parse().unwrap();
        assert!((analytic - (1.0 - (-ltd).exp())).abs() < 1e-12);
    }
    let required: Vec<_> = rows.iter().filter(|r| r[0] == "required").collect();
    assert_eq!(required.len(), 1);
    // 1 − e^(−m) ≥ 0.99 first holds at m = 5
    assert_eq!(required[0][3], "5");
}

#[test]
fn serve_on_busy_port_exits_one() {
    let holder = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = holder.local_addr().unwrap().to_string();
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["serve", "--bind", &addr, "--root", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn serve_and_sync_once_deliver_scan_events() {
    let dir = tempfile::tempdir().unwrap();
    let port = free_port();
    let mut server = bin();
    server.args([
        "serve",
        "--bind",
        &format!("127.0.0.1:{port}"),
        "--root",
        dir.path().join("remote").to_str().unwrap(),
    ]);
    let mut server = Spawned::start(server);
    let url = server.wait_line("remote store listening on", Duration::from_secs(20));

    let scene = write_scene(dir.path(), "s.toml", 9, &[cw_toml(121e6, -40.0)]);
    let data = dir.path().join("d");
    let mut args = vec!["scan", "--clock", "sim", "--iterations", "3", "--quiet", "--scene", scene.to_str().unwrap()];
    args.extend(["--data-dir", data.to_str().unwrap()]);
    args.extend(SMALL_PLAN);
    assert_eq!(run(&args).status.code(), Some(0));

    let o = run(&["sync", "--once", "--data-dir", data.to_str().unwrap(), "--remote-url", &url]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let events: Vec<serde_json::Value> = reqwest::blocking::get(format!("{url}/events")).unwrap().json().unwrap();
    assert_eq!(events.len(), 3);

    server.signal(libc::SIGINT);
    assert_eq!(server.wait_exit(Duration::from_secs(10)), Some(0));
}
