mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::asset;
use tapwise::eval::SuiteResult;

fn tapwise(args: &[&str]) -> Output {
    tapwise_env(args, &[])
}

fn tapwise_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_tapwise"));
    cmd.args(args).env_remove("MLLM_BASE_URL").env_remove("LOCATOR_BASE_URL");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = tapwise(&["run", "Open the Settings app", "--goal", "open_settings", "--out", s(dir.path())]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let trace = stdout(&out).trim().to_string();
    assert!(Path::new(&trace).is_file());

    let out = tapwise(&["run", "Forget HomeNet", "--goal", "forget_homenet", "--max-steps", "1", "--out", s(dir.path())]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));

    let out = tapwise(&["run", "x", "--goal", "open_settings", "--max-steps", "0"]);
    assert_eq!(code(&out), 64);
    assert_eq!(code(&tapwise(&["run", "x", "--goal", "open_settings", "--no-such-flag"])), 64);
    assert_eq!(code(&tapwise(&["run", "no goal for the simulator"])), 64);
}

#[test]
fn run_task_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let tasks = asset("tasks/all.tsv");
    let out = tapwise(&["run", "--task-id", "web-003", "--tasks", s(&tasks), "--out", s(dir.path())]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("web-003"));
}

#[test]
fn unreachable_adb_device_is_an_episode_error() {
    let cfg = asset("configs/http_adb.toml");
    let out = tapwise_env(
        &["run", "open Gmail", "--device", "adb", "--config", s(&cfg)],
        &[("ADB_PATH", "/nonexistent/adb"), ("MLLM_BASE_URL", "http://127.0.0.1:9"), ("LOCATOR_BASE_URL", "http://127.0.0.1:9")],
    );
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn eval_report_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let tasks = asset("tasks/all.tsv");
    assert_eq!(code(&tapwise(&["eval", "--tasks", "/nonexistent.tsv"])), 66);

    let a = dir.path().join("oracle");
    let out = tapwise(&["eval", "--tasks", s(&tasks), "--out", s(&a), "--seed", "4"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).lines().nth(2).unwrap().contains("100.0"));
    for f in ["report.csv", "report.txt", "results.json", "traces"] {
        assert!(a.join(f).exists(), "{f}");
    }
    let result = SuiteResult::read_json(&a).unwrap();
    assert_eq!(result.repeats, 3);
    assert_eq!(result.episodes.len(), 26 * 3);

    // Same seed, same bytes.
    let b = dir.path().join("oracle-again");
    assert_eq!(code(&tapwise(&["eval", "--tasks", s(&tasks), "--out", s(&b), "--seed", "4", "--label", "oracle", "--parallel", "1"])), 0);
    for f in ["report.csv", "results.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }

    let inj = dir.path().join("injected");
    let cfg = asset("configs/injection.toml");
    assert_eq!(code(&tapwise(&["eval", "--tasks", s(&tasks), "--config", s(&cfg), "--repeats", "1", "--out", s(&inj)])), 0);
    let out = tapwise(&["report", s(&a), s(&inj)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let lines: Vec<String> = stdout(&out).lines().map(String::from).collect();
    assert_eq!(lines.len(), 4, "{lines:?}");
    assert!(lines[2].starts_with("oracle ") && lines[3].starts_with("injected "));

    // Replay a recorded episode, then a tampered copy.
    let ep = &result.episodes.iter().find(|e| e.steps >= 3).unwrap();
    let trace_dir = a.join(ep.trace_dir.as_ref().unwrap());
    assert_eq!(code(&tapwise(&["replay", s(&trace_dir)])), 0);
    let trace_file = trace_dir.join("trace.jsonl");
    let text = std::fs::read_to_string(&trace_file).unwrap();
    let t = tapwise::trace::read_trace(&trace_dir).unwrap();
    let digest = &t.steps[1].post_obs.digest;
    std::fs::write(&trace_file, text.replace(digest.as_str(), &"0".repeat(64))).unwrap();
    let out = tapwise(&["replay", s(&trace_dir)]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
    assert!(stderr(&out).contains("step 1"), "{}", stderr(&out));
}

#[test]
fn eval_applies_human_labels() {
    let dir = tempfile::tempdir().unwrap();
    let tasks = asset("tasks/webshop.tsv");
    let labels = dir.path().join("labels.csv");
    std::fs::write(&labels, "task_id,run,verdict,category\nweb-001,0,failure,decision\nweb-002,0,failure,\n").unwrap();
    let out_dir = dir.path().join("labelled");
    let out = tapwise(&["eval", "--tasks", s(&tasks), "--repeats", "1", "--labels", s(&labels), "--out", s(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r = SuiteResult::read_json(&out_dir).unwrap();
    assert_eq!(r.subsets["WebShopping"].successes, 10);
    assert!(std::fs::read_to_string(out_dir.join("report.csv")).unwrap().contains(",83.3,"));

    std::fs::write(&labels, "web-999,0,success\n").unwrap();
    let out = tapwise(&["eval", "--tasks", s(&tasks), "--repeats", "1", "--labels", s(&labels), "--out", s(&out_dir)]);
    assert_eq!(code(&out), 65);
    assert!(stderr(&out).contains("web-999"));
}

#[test]
fn worlds_validate() {
    let good = asset("worlds/webshop.toml");
    let out = tapwise(&["worlds", "validate", s(&good)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("broken.toml");
    let src = std::fs::read_to_string(asset("worlds/general_apps.toml")).unwrap();
    std::fs::write(&bad, src.replacen("goto = \"chrome_news\"", "goto = \"nowhere\"", 1)).unwrap();
    let out = tapwise(&["worlds", "validate", s(&bad)]);
    assert_eq!(code(&out), 65);
    let err = stderr(&out);
    assert!(err.contains(s(&bad)) && err.contains("rules[") && err.contains("nowhere"), "{err}");

    assert_eq!(code(&tapwise(&["worlds", "validate", "/nonexistent.toml"])), 66);
}

#[test]
fn devices_list_includes_bundled_worlds() {
    let out = tapwise_env(&["devices", "list"], &[("ADB_PATH", "/nonexistent/adb")]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), "sim\tgeneral-apps\nsim\twebshop\n");
}

#[test]
fn help_and_version() {
    let out = tapwise(&["--help"]);
    assert_eq!(code(&out), 0);
    for sub in ["run", "eval", "replay", "report", "worlds", "devices"] {
        assert!(stdout(&out).contains(sub));
    }
    assert_eq!(code(&tapwise(&["--version"])), 0);
    assert_eq!(code(&tapwise(&[])), 64);
}
