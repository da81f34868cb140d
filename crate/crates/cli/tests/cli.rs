use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn otmlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_otmlab"))
        .args(args)
        .env_remove("OTMLAB_SEED")
        .output()
        .unwrap()
}

fn json_of(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "status {:?}, stderr {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

const SMALL: [&str; 10] = ["--k", "3", "--design-pe", "0.3", "--eps", "0.1", "--delta", "0.5", "--theta", "0.2"];

#[test]
fn params_example() {
    let v = json_of(&otmlab(&[
        "params", "--k", "16", "--pe", "0.5", "--eps", "0.1", "--delta", "0.5", "--theta", "0.2",
    ]));
    assert_eq!((v["n"].as_u64(), v["c"].as_u64(), v["c0"].as_u64()), (Some(53), Some(44), Some(22)));
    assert!((v["rate"].as_f64().unwrap() - 352.0 / 2332.0).abs() < 1e-15);
    assert_eq!(v["schema"], 1);
    assert_eq!(v["config"]["k"], 16);
}

#[test]
fn noiseless_sweep_never_fails() {
    let mut args = vec!["channel-sweep", "--pe", "0", "--trials", "50", "--max-failure-rate", "0"];
    args.extend(SMALL);
    let v = json_of(&otmlab(&args));
    assert_eq!(v["rows"][0]["failure_rate"], 0.0);
    assert_eq!(v["rows"][0]["recovered"], 50);
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let path = dir.path().join(name);
        let mut args = vec!["--seed", "11", "--out", path.to_str().unwrap(), "channel-sweep", "--pe", "0.2,0.3", "--trials", "40"];
        args.extend(SMALL);
        let out = otmlab(&args);
        assert!(out.status.success());
        (out.stdout, std::fs::read(path).unwrap())
    };
    let (a_stdout, a_csv) = run("a.csv");
    let (b_stdout, b_csv) = run("b.csv");
    assert_eq!(a_stdout, b_stdout);
    assert_eq!(a_csv, b_csv);
    let csv = String::from_utf8(a_csv).unwrap();
    assert!(csv.starts_with("pe,trials,recovered,failure_rate"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn config_file_and_seed_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"seed": 5, "k": 16, "pe": 0.3}"#).unwrap();
    let cfg = cfg.to_str().unwrap();
    let v = json_of(&otmlab(&["--config", cfg, "params", "--pe", "0.5"]));
    assert_eq!(v["seed"], 5);
    assert_eq!(v["config"]["pe"], 0.5);
    assert_eq!(v["n"], 53);
    let v = json_of(&otmlab(&["--config", cfg, "--seed", "9", "params"]));
    assert_eq!(v["seed"], 9);
    assert_eq!(v["config"]["pe"], 0.3);

    let out = Command::new(env!("CARGO_BIN_EXE_otmlab"))
        .args(["params"])
        .env("OTMLAB_SEED", "42")
        .output()
        .unwrap();
    assert_eq!(json_of(&out)["seed"], 42);
}

#[test]
fn exit_codes() {
    assert_eq!(otmlab(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(otmlab(&["params", "--bogus"]).status.code(), Some(1));
    assert_eq!(otmlab(&["params", "--pe", "1.5"]).status.code(), Some(1));
    assert_eq!(otmlab(&["--config", "/nonexistent.json", "params"]).status.code(), Some(1));
    assert_eq!(otmlab(&["--help"]).status.code(), Some(0));
    let mut args = vec!["channel-sweep", "--pe", "0.95", "--trials", "20", "--max-failure-rate", "0"];
    args.extend(SMALL);
    let out = otmlab(&args);
    assert_eq!(out.status.code(), Some(2));
    // The report is still printed.
    assert!(serde_json::from_slice::<Value>(&out.stdout).is_ok());
}

#[test]
fn bundle_encode_decode_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = dir.path().join("code");
    let b = bundle.to_str().unwrap();
    let v = json_of(&otmlab(&[
        "--seed", "3", "build-code", "--k", "3", "--pe", "0.3", "--eps", "0.1", "--delta", "0.5", "--theta", "0.2", "--dir", b,
    ]));
    assert!(Path::new(b).join("manifest.json").exists());
    let (c, c0) = (v["c"].as_u64().unwrap() as usize, v["c0"].as_u64().unwrap() as usize);
    let message: String = (0..3 * c0).map(|i| if i % 3 == 0 { '1' } else { '0' }).collect();
    let cw = json_of(&otmlab(&["encode", "--bundle", b, "--message", &message]))["codeword"]
        .as_str()
        .unwrap()
        .to_string();
    // Some single flip in block 0 leaves the inner code, since c0 < c.
    let flipped = (0..c)
        .map(|i| {
            let mut word: Vec<char> = cw.chars().collect();
            word[i] = if word[i] == '0' { '1' } else { '0' };
            json_of(&otmlab(&["decode", "--bundle", b, "--word", &word.into_iter().collect::<String>()]))
        })
        .find(|v| v["erased_blocks"] == 1)
        .expect("every single flip undetected");
    assert_eq!(flipped["message"].as_str().unwrap(), message);
    assert_eq!(flipped["status"], "success");
    let clean = json_of(&otmlab(&["decode", "--bundle", b, "--word", &cw]));
    assert_eq!(clean["erased_blocks"], 0);
    assert_eq!(clean["message"].as_str().unwrap(), message);
    assert_eq!(cw.len() % c, 0);
    // The sweep accepts the saved code.
    let v = json_of(&otmlab(&["channel-sweep", "--bundle", b, "--pe", "0", "--trials", "5"]));
    assert_eq!(v["rows"][0]["recovered"], 5);
}

#[test]
fn bounds_match_library() {
    let v = json_of(&otmlab(&["bounds", "--ell", "1000000", "--lgq", "100", "--alpha", "0.5", "--lambda", "0.001", "--tau0", "0.0001", "--delta", "0.001"]));
    let direct = otmlab::analysis::thm2_bound(&otmlab::analysis::Thm2Params {
        ell: 1e6,
        lgq: 100.0,
        alpha: 0.5,
        lambda: 1e-3,
        tau0: 1e-4,
        delta: 1e-3,
    })
    .unwrap();
    assert!((v["thm2"]["bound"].as_f64().unwrap() - direct.bound).abs() <= 1e-12 * direct.bound.abs());
    assert_eq!(v["thm2"]["vacuous"], false);
    for row in v["capacity"].as_array().unwrap() {
        let p = otmlab::channel::ChannelParams::new(row["lgq"].as_u64().unwrap() as usize, row["pe"].as_f64().unwrap())
            .unwrap();
        assert!((row["capacity"].as_f64().unwrap() - otmlab::channel::capacity(p)).abs() < 1e-12);
    }
}

#[test]
fn attack_and_entropy() {
    let dir = tempfile::tempdir().unwrap();
    let jsonl = dir.path().join("t.jsonl");
    let v = json_of(&otmlab(&[
        "--out", jsonl.to_str().unwrap(), "attack", "--code", "repetition:2", "--strategy", "breidbart", "--s", "10", "--t", "01",
    ]));
    assert_eq!(v["steps"], 4);
    assert_eq!(v["sealed"]["s"], "10");
    assert_eq!(std::fs::read_to_string(&jsonl).unwrap().lines().count(), 4);

    let v = json_of(&otmlab(&["entropy", "--code", "identity:1", "--strategy", "stop", "--eps", "0"]));
    assert_eq!(v["min_entropy"], 2.0);
    assert_eq!(v["smoothed"][0]["bits"], 2.0);
    assert_eq!(otmlab(&["entropy", "--strategy", "nope"]).status.code(), Some(1));
}

#[test]
fn identities_verify() {
    let v = json_of(&otmlab(&["verify-identities", "--states", "50", "--distributions", "20"]));
    assert_eq!(v["pass"], true);
}

#[test]
fn roundtrip_reports_both_choices() {
    let mut args = vec!["otm-roundtrip", "--trials", "20", "--fast"];
    args.extend(SMALL);
    let v = json_of(&otmlab(&args));
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1]["choice"], "second");
    assert_eq!(v["config"]["fast"], true);
}
