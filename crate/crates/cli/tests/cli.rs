use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use serde_json::Value;

fn nfb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nfb"))
        .args(args)
        .env_remove("NEUROFEEDBACK_LLM_ENDPOINT")
        .output()
        .expect("nfb runs")
}

fn ok(args: &[&str]) -> Output {
    let out = nfb(args);
    assert!(out.status.success(), "nfb {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    /// Separable recording, quick config, calibrated session.
    fn new() -> Self {
        let f = Self {
            dir: tempfile::tempdir().unwrap(),
        };
        fs::write(f.path("cfg.toml"), "[veto]\nepochs = 80\n").unwrap();
        ok(&["synth", "--profile", "separable", "--seed", "4", "--trials-per-class", "6", "--out", p(&f.path("rec.edf"))]);
        ok(&[
            "calibrate",
            "--data",
            p(&f.path("rec.edf")),
            "--config",
            p(&f.path("cfg.toml")),
            "--seed",
            "7",
            "--out",
            p(&f.path("session.json")),
        ]);
        f
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn calibrate_and_stream_are_byte_identical_across_runs() {
    let a = Fixture::new();
    let b = Fixture::new();
    assert_eq!(fs::read(a.path("session.json")).unwrap(), fs::read(b.path("session.json")).unwrap());
    for f in [&a, &b] {
        ok(&[
            "stream",
            "--session",
            p(&f.path("session.json")),
            "--data",
            p(&f.path("rec.edf")),
            "--realtime=false",
            "--out",
            p(&f.path("streamed.json")),
        ]);
    }
    let bytes = fs::read(a.path("streamed.json")).unwrap();
    assert_eq!(bytes, fs::read(b.path("streamed.json")).unwrap());

    let s = json(&a.path("streamed.json"));
    let frames = s["frames"].as_array().unwrap();
    assert!(frames.len() > 100);
    for (i, fr) in frames.iter().enumerate() {
        assert_eq!(fr["seq"], i as u64);
        assert_eq!(fr["latency_ms"], 0.0);
    }
    assert_eq!(s["calibration"]["training_accuracy"], 1.0);
    assert_eq!(s["reports"][0]["source"], "RuleBased");
}

#[test]
fn report_sonify_and_csv_input() {
    let f = Fixture::new();
    ok(&[
        "stream",
        "--session",
        p(&f.path("session.json")),
        "--data",
        p(&f.path("rec.edf")),
        "--no-report",
        "--out",
        p(&f.path("streamed.json")),
    ]);
    assert_eq!(json(&f.path("streamed.json"))["reports"], Value::Array(vec![]));

    let t0 = Instant::now();
    let out = ok(&[
        "report",
        "--session",
        p(&f.path("streamed.json")),
        "--endpoint",
        "http://127.0.0.1:9/generate",
        "--timeout-ms",
        "300",
        "--out",
        p(&f.path("reported.json")),
    ]);
    assert!(t0.elapsed() < Duration::from_secs(5));
    assert!(String::from_utf8(out.stdout).unwrap().contains("human verification by a qualified clinician"));
    assert_eq!(json(&f.path("reported.json"))["reports"][0]["source"], "RuleBased");

    ok(&["sonify", "--session", p(&f.path("streamed.json")), "--out", p(&f.path("audio.wav"))]);
    let n_frames = json(&f.path("streamed.json"))["frames"].as_array().unwrap().len();
    let wav = fs::read(f.path("audio.wav")).unwrap();
    assert_eq!(&wav[..4], b"RIFF");
    assert_eq!(wav.len(), 44 + 2 * 5512 * n_frames);

    // the same signal as CSV plus an events file streams to identical frames
    let s = json(&f.path("session.json"));
    let channels: Vec<&str> = s["calibration"]["channels"].as_array().unwrap().iter().map(|c| c.as_str().unwrap()).collect();
    let mut csv = channels.join(",") + "\n";
    for i in 0..1600 {
        let row: Vec<String> = (0..channels.len()).map(|c| format!("{}", ((i * (c + 3)) % 17) as f64 - 8.0)).collect();
        csv += &(row.join(",") + "\n");
    }
    fs::write(f.path("rec.csv"), csv).unwrap();
    fs::write(f.path("events.csv"), "onset_s,duration_s,label\n1,4,T1\n").unwrap();
    ok(&[
        "stream",
        "--session",
        p(&f.path("session.json")),
        "--data",
        p(&f.path("rec.csv")),
        "--sample-rate",
        "160",
        "--events",
        p(&f.path("events.csv")),
        "--no-report",
        "--out",
        p(&f.path("csv.json")),
    ]);
    let frames = json(&f.path("csv.json"))["frames"].as_array().unwrap().clone();
    assert_eq!(frames.len(), 73);
    assert!(frames.iter().any(|fr| fr["label"] == "Left"));
}

#[test]
fn exit_codes() {
    let f = Fixture::new();
    // data errors
    let missing = nfb(&["calibrate", "--data", p(&f.path("nope.edf")), "--out", p(&f.path("x.json"))]);
    assert_eq!(missing.status.code(), Some(2));
    fs::write(f.path("bad.json"), "{\"version\": 99}").unwrap();
    let schema = nfb(&["report", "--session", p(&f.path("bad.json"))]);
    assert_eq!(schema.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&schema.stderr).contains("schema version"));
    // config errors
    fs::write(f.path("bad.toml"), "[filter]\nmode = \"zero_phase\"\n").unwrap();
    let cfg = nfb(&["calibrate", "--data", p(&f.path("rec.edf")), "--config", p(&f.path("bad.toml")), "--out", p(&f.path("x.json"))]);
    assert_eq!(cfg.status.code(), Some(3));
    assert_eq!(nfb(&["stream", "--bogus"]).status.code(), Some(3));
    let csv_rate = nfb(&["stream", "--session", p(&f.path("session.json")), "--data", p(&f.path("r.csv")), "--out", "x"]);
    assert_eq!(csv_rate.status.code(), Some(3));
    assert_eq!(nfb(&["--help"]).status.code(), Some(0));
}

#[test]
fn eval_synthetic_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("eval.toml");
    fs::write(&cfg, "[veto]\nepochs = 60\n").unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = ok(&["eval", "--synthetic", "3", "--profile", "separable", "--seed", "1", "--config", p(&cfg), "--out", p(&out)]);
        (String::from_utf8(o.stdout).unwrap(), fs::read(&out).unwrap())
    };
    let (table, a) = run("a.json");
    let (_, b) = run("b.json");
    assert_eq!(a, b);
    for row in ["baseline", "explainable", "wilcoxon"] {
        assert!(table.lines().any(|l| l.starts_with(row)), "{row} row missing:\n{table}");
    }
    let v: Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(v["mean_baseline"], 1.0);
    assert_eq!(v["per_subject"].as_object().unwrap().len(), 3);
}

#[test]
fn serve_streams_frames_and_answers_commands() {
    let f = Fixture::new();
    let mut child = Command::new(env!("CARGO_BIN_EXE_nfb"))
        .args([
            "serve",
            "--session",
            p(&f.path("session.json")),
            "--data",
            p(&f.path("rec.edf")),
            "--bind",
            "127.0.0.1:0",
            "--speed",
            "16",
            "--wait-for-start",
            "--out",
            p(&f.path("served.json")),
        ])
        .env_remove("NEUROFEEDBACK_LLM_ENDPOINT")
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut err = BufReader::new(child.stderr.take().unwrap());
    let mut line = String::new();
    err.read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("telemetry on ").expect("address line").to_string();

    let stream = TcpStream::connect(&addr).unwrap();
    stream.set_read_timeout(Some(Duration::from_secs(20))).unwrap();
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut writer = stream;
    let mut next = || {
        let mut l = String::new();
        reader.read_line(&mut l).unwrap();
        serde_json::from_str::<Value>(&l).unwrap()
    };

    // paused until start: nothing arrives
    writer.write_all(b"garbage\n").unwrap();
    assert_eq!(next(), serde_json::json!({"error": "bad_command"}));
    writer.write_all(b"{\"cmd\":\"start\"}\n").unwrap();
    assert_eq!(next(), serde_json::json!({"ack": "start"}));

    let mut seqs = Vec::new();
    let report = loop {
        let v = next();
        if let Some(seq) = v.get("seq") {
            seqs.push(seq.as_u64().unwrap());
            assert!(v["latency_ms"].as_f64().unwrap() >= 0.0);
        } else if v.get("report").is_some() {
            break v;
        }
    };
    assert!(child.wait().unwrap().success());
    assert_eq!(seqs, (0..seqs.len() as u64).collect::<Vec<_>>());
    let saved = json(&f.path("served.json"));
    assert_eq!(saved["frames"].as_array().unwrap().len(), seqs.len());
    assert_eq!(report["report"]["source"], "RuleBased");
}
