use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::process::{Command, Output, Stdio};
use std::thread;
use std::time::Duration;

use fpgs::TaskSet;
use serde_json::Value;

fn fpgs() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_fpgs"));
    c.env_remove("FPGS_SEED");
    c
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json_lines(s: &str) -> Vec<Value> {
    s.lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn write_sets(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, body).unwrap();
    path
}

const RM: &str = r#"{"m":1,"tasks":[{"id":0,"C":1,"T":4,"D":4},{"id":1,"C":2,"T":6,"D":6},{"id":2,"C":3,"T":12,"D":12}]}"#;

#[test]
fn gen_is_seeded_and_valid() {
    let run = |seed: &str| {
        ok(fpgs()
            .args([
                "--seed", seed, "gen", "-n", "6", "-m", "2", "-u", "1.3", "--count", "4",
            ])
            .output()
            .unwrap())
    };
    let a = run("11");
    assert_eq!(a, run("11"));
    assert_ne!(a, run("12"));
    let lines: Vec<_> = a.lines().collect();
    assert_eq!(lines.len(), 4);
    for l in lines {
        let ts = TaskSet::from_json(l).unwrap();
        assert_eq!(ts.len(), 6);
        assert!((ts.utilization() - 1.3).abs() <= 6.0 / 10.0);
    }
}

#[test]
fn env_seed_is_the_default() {
    let args = ["gen", "-n", "4", "-m", "2", "-u", "1.0"];
    let flag = ok(fpgs().args(["--seed", "42"]).args(args).output().unwrap());
    let env = ok(fpgs().env("FPGS_SEED", "42").args(args).output().unwrap());
    assert_eq!(flag, env);
    let both = ok(fpgs()
        .env("FPGS_SEED", "1")
        .args(["--seed", "42"])
        .args(args)
        .output()
        .unwrap());
    assert_eq!(flag, both);
}

#[test]
fn test_reports_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_sets(&dir, "rm.json", RM);
    let out = json_lines(&ok(fpgs()
        .arg("test")
        .arg(&p)
        .args(["--test", "RTA_UNI"])
        .output()
        .unwrap()));
    assert_eq!(out[0]["response_bound"], serde_json::json!([1, 3, 10]));
    assert_eq!(out[0]["schedulable"], true);
    let reversed = json_lines(&ok(fpgs()
        .arg("test")
        .arg(&p)
        .args(["--order", "2,1,0"])
        .output()
        .unwrap()));
    assert_eq!(reversed[0]["schedulable"], false);
}

#[test]
fn invalid_input_fails() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_sets(
        &dir,
        "bad.json",
        r#"{"m":1,"tasks":[{"id":0,"C":5,"T":4,"D":4}]}"#,
    );
    let out = fpgs().arg("test").arg(&p).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("C > D"));
    let bad_order = fpgs()
        .arg("test")
        .arg(write_sets(&dir, "rm.json", RM))
        .args(["--order", "0,0,1"])
        .output()
        .unwrap();
    assert!(!bad_order.status.success());
}

#[test]
fn pretty_printed_input_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let ts = TaskSet::from_json(RM).unwrap();
    let pretty = serde_json::to_string_pretty(&ts).unwrap();
    let p = write_sets(&dir, "two.json", &format!("{pretty}\n{RM}\n"));
    let out = json_lines(&ok(fpgs().arg("test").arg(&p).output().unwrap()));
    assert_eq!(out.len(), 2);
    assert_eq!(out[0], out[1]);
}

#[test]
fn assign_and_enumerate() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_sets(&dir, "rm.json", RM);
    let out = json_lines(&ok(fpgs()
        .arg("assign")
        .arg(&p)
        .args(["--alg", "DM,OPA,SJF"])
        .output()
        .unwrap()));
    assert_eq!(out.len(), 3);
    assert_eq!(out[0]["algorithm"], "DM");
    assert_eq!(out[0]["order"], serde_json::json!([0, 1, 2]));
    assert_eq!(out[1]["verdict"]["test"], "DA_LC");
    let e = json_lines(&ok(fpgs().arg("enumerate").arg(&p).output().unwrap()));
    assert_eq!(e[0]["total"], 6);
    assert_eq!(e[0]["found"], true);
    let s = json_lines(&ok(fpgs()
        .arg("enumerate")
        .arg(&p)
        .args(["--samples", "50"])
        .output()
        .unwrap()));
    assert_eq!(s[0]["samples"], 50);
}

#[test]
fn simulate_emits_miss_fields() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_sets(&dir, "rm.json", RM);
    let out = json_lines(&ok(fpgs().arg("simulate").arg(&p).output().unwrap()));
    assert_eq!(
        out[0],
        serde_json::json!({"miss": false, "first_miss": null})
    );
    let over = write_sets(
        &dir,
        "over.json",
        r#"{"m":1,"tasks":[{"id":0,"C":2,"T":4,"D":4},{"id":1,"C":2,"T":4,"D":4},{"id":2,"C":1,"T":5,"D":5}]}"#,
    );
    // U > 1 is rejected before simulating
    assert!(!fpgs()
        .arg("simulate")
        .arg(&over)
        .output()
        .unwrap()
        .status
        .success());
    let tight = write_sets(
        &dir,
        "tight.json",
        r#"{"m":1,"tasks":[{"id":0,"C":2,"T":4,"D":4},{"id":1,"C":3,"T":8,"D":3}]}"#,
    );
    let out = json_lines(&ok(fpgs()
        .arg("simulate")
        .arg(&tight)
        .args(["--order", "0,1"])
        .output()
        .unwrap()));
    assert_eq!(out[0]["miss"], true);
    assert_eq!(
        out[0]["first_miss"],
        serde_json::json!({"task": 1, "time": 3})
    );
}

#[test]
fn experiment_csv_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("ratio.csv");
    ok(fpgs()
        .args(["--seed", "3", "--jobs", "1", "--out"])
        .arg(&csv)
        .args([
            "experiment",
            "-n",
            "4",
            "-m",
            "2",
            "--sets",
            "10",
            "--grid",
            "0.5,1.5",
            "--alg",
            "DM;RANDOM",
        ])
        .output()
        .unwrap());
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(
        lines[0],
        "utilization,algorithm,schedulable_count,total,ratio"
    );
    assert_eq!(lines.len(), 1 + 2 * 2);
    assert!(lines[1].starts_with("0.5000,DM,"));
    assert!(lines[2].starts_with("0.5000,RANDOM(3),"));
}

#[test]
fn experiment_with_missing_policy_file_fails() {
    let out = fpgs()
        .args([
            "experiment",
            "-n",
            "4",
            "-m",
            "2",
            "--sets",
            "2",
            "--alg",
            "DM;POLICY(/nonexistent/o.jsonl)",
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn table1_modes() {
    let ex = ok(fpgs()
        .args(["table1", "-n", "3,4", "--sets", "5"])
        .output()
        .unwrap());
    assert_eq!(
        ex.lines().next().unwrap(),
        "n,all_perm_fraction,dm_fraction"
    );
    assert_eq!(ex.lines().count(), 3);
    let sa = ok(fpgs()
        .args([
            "table1",
            "--mode",
            "sampled",
            "-n",
            "10",
            "--sets",
            "3",
            "--samples",
            "20",
        ])
        .output()
        .unwrap());
    assert_eq!(sa.lines().next().unwrap(), "n,sampled_fraction,dm_fraction");
    let capped = fpgs()
        .args(["table1", "-n", "9", "--sets", "1"])
        .output()
        .unwrap();
    assert!(!capped.status.success());
}

#[test]
fn serve_stdio_round_trip() {
    let mut child = fpgs()
        .args(["serve", "--transport", "stdio"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stdin = child.stdin.take().unwrap();
    writeln!(stdin, r#"{{"type":"load","tasksets":[{RM}]}}"#).unwrap();
    writeln!(stdin, r#"{{"type":"eval","id":0,"order":[0,1,2]}}"#).unwrap();
    writeln!(stdin, r#"{{"type":"eval","id":7,"order":[0,1,2]}}"#).unwrap();
    writeln!(stdin, r#"{{"type":"shutdown"}}"#).unwrap();
    drop(stdin);
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let replies = json_lines(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(replies.len(), 3);
    assert_eq!(replies[0], serde_json::json!({"ok": 1}));
    assert_eq!(replies[1]["reward"], 1.0);
    assert!(replies[2].get("error").is_some());
}

#[test]
fn serve_tcp_round_trip() {
    let mut child = fpgs()
        .args(["serve", "--transport", "tcp", "--port", "0"])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut err = BufReader::new(child.stderr.take().unwrap());
    let mut line = String::new();
    err.read_line(&mut line).unwrap();
    let addr = line
        .trim()
        .strip_prefix("listening on ")
        .unwrap()
        .to_string();
    let stream = TcpStream::connect(&addr).unwrap();
    stream
        .set_read_timeout(Some(Duration::from_secs(30)))
        .unwrap();
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut w = stream;
    writeln!(w, r#"{{"type":"load","tasksets":[{RM}]}}"#).unwrap();
    writeln!(w, r#"{{"type":"heuristic","id":0,"name":"DM"}}"#).unwrap();
    let mut reply = String::new();
    reader.read_line(&mut reply).unwrap();
    assert_eq!(reply.trim(), r#"{"ok":1}"#);
    reply.clear();
    reader.read_line(&mut reply).unwrap();
    assert_eq!(reply.trim(), r#"{"order":[0,1,2]}"#);
    writeln!(w, r#"{{"type":"shutdown"}}"#).unwrap();
    for _ in 0..300 {
        if let Some(status) = child.try_wait().unwrap() {
            assert!(status.success());
            return;
        }
        thread::sleep(Duration::from_millis(100));
    }
    child.kill().unwrap();
    panic!("server did not exit after shutdown");
}
