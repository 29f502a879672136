#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::sync::mpsc;
use std::time::{Duration, Instant};

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_pdwatch"));
    for (k, _) in std::env::vars() {
        if k.starts_with("PDWATCH_") {
            c.env_remove(k);
        }
    }
    c
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn pdwatch")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// CW emitter received at `dbm` through a 0.5 V peak source.
pub fn cw_toml(freq_hz: f64, dbm: f64) -> String {
    // 0.5 V peak into 50 Ω is 2.5 mW
    let source_dbm = 10.0 * (2.5f64).log10();
    format!(
        "[[emitters]]\nkind = \"cw\"\nfreq_hz = {freq_hz:e}\namplitude_v = 0.5\nattenuation_db = {}\n",
        source_dbm - dbm
    )
}

pub fn burst_toml(freq_hz: f64, dbm: f64, duty: f64) -> String {
    format!(
        "[[emitters]]\nkind = \"burst\"\ncenter_freq_hz = {freq_hz:e}\nduty_cycle = {duty}\nburst_len_s = 0.000625\npower_dbm = {dbm}\n"
    )
}

pub fn write_scene(dir: &Path, name: &str, seed: u64, emitters: &[String]) -> PathBuf {
    let mut text = format!("noise_density_dbm_hz = -164.0\nseed = {seed}\n");
    for e in emitters {
        text.push_str(e);
    }
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

/// A child process whose stderr is forwarded line by line.
pub struct Spawned {
    pub child: Child,
    lines: mpsc::Receiver<String>,
    pub seen: Vec<String>,
}

impl Spawned {
    pub fn start(mut cmd: Command) -> Self {
        let mut child = cmd.stdout(Stdio::null()).stderr(Stdio::piped()).spawn().expect("spawn pdwatch");
        let err = child.stderr.take().unwrap();
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(err).lines().map_while(Result::ok) {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Self { child, lines: rx, seen: Vec::new() }
    }

    /// Wait for a stderr line containing `needle`, returning the text after it.
    pub fn wait_line(&mut self, needle: &str, timeout: Duration) -> String {
        let deadline = Instant::now() + timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            match self.lines.recv_timeout(left) {
                Ok(line) => {
                    self.seen.push(line.clone());
                    if let Some(i) = line.find(needle) {
                        return line[i + needle.len()..].trim().to_string();
                    }
                }
                Err(_) => panic!("no line containing {needle:?}; stderr so far: {:#?}", self.seen),
            }
        }
    }

    pub fn signal(&self, sig: i32) {
        unsafe {
            libc::kill(self.child.id() as i32, sig);
        }
    }

    pub fn wait_exit(&mut self, timeout: Duration) -> Option<i32> {
        let deadline = Instant::now() + timeout;
        while Instant::now() < deadline {
            if let Some(st) = self.child.try_wait().unwrap() {
                return st.code();
            }
            std::thread::sleep(Duration::from_millis(20));
        }
        None
    }
}

impl Drop for Spawned {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub fn free_port() -> u16 {
    std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}
