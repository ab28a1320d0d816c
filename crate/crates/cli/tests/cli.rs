use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use serde_json::Value;

const UAV: &str = "{\"ts\":1,\"user\":\"U\",\"item\":\"A\",\"verb\":\"view\"}\n\
{\"ts\":2,\"user\":\"V\",\"item\":\"A\",\"verb\":\"view\"}\n\
{\"ts\":3,\"user\":\"V\",\"item\":\"B\",\"verb\":\"view\"}\n";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_usagegraph"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn run_stdin(args: &[&str], input: &str) -> Output {
    let mut child = bin()
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn fixture(dir: &Path) -> PathBuf {
    let path = dir.join("uav.ndjson");
    std::fs::write(&path, UAV).unwrap();
    path
}

#[test]
fn recommend_prints_ranked_json() {
    let dir = tempfile::tempdir().unwrap();
    let events = fixture(dir.path());
    let ev = events.to_str().unwrap();
    let out = run(&["recommend", "--user", "U", "--depth", "3", "--events", ev]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let list: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(list["items"][0]["item_id"], "A");
    assert_eq!(list["items"][1]["item_id"], "B");

    let out = run(&["recommend", "--user", "ghost", "--events", ev]);
    assert_eq!(out.status.code(), Some(0));
    let list: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(list["items"], serde_json::json!([]));

    assert_eq!(run(&["recommend", "--user", "U", "--depth", "9", "--events", ev]).status.code(), Some(2));
    assert_eq!(run(&["recommend", "--user", "U", "--weighting", "cubic", "--events", ev]).status.code(), Some(2));
    assert_eq!(run(&["recommend", "--user", "U", "--max-usages", "0", "--events", ev]).status.code(), Some(2));
    assert_eq!(run(&["recommend", "--user", "U", "--events", "/no/such/file"]).status.code(), Some(1));
}

#[test]
fn recommend_from_snapshot_matches_events() {
    let dir = tempfile::tempdir().unwrap();
    let events = fixture(dir.path());
    let snap = dir.path().join("g.snap");
    let out = run(&["import", "--events", events.to_str().unwrap(), "--out", snap.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("\"imported\":3"));
    let a = run(&["recommend", "--user", "U", "--events", events.to_str().unwrap()]);
    let b = run(&["recommend", "--user", "U", "--snapshot", snap.to_str().unwrap()]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn rerank_reads_stdin() {
    let dir = tempfile::tempdir().unwrap();
    let events = fixture(dir.path());
    let ev = events.to_str().unwrap();
    let out = run_stdin(&["rerank", "--user", "U", "--alpha", "0", "--events", ev], "x\nB\ny\n");
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out), "x\nB\ny\n");
    let out = run_stdin(&["rerank", "--user", "ghost", "--alpha", "1", "--events", ev], "x\nB\ny\n");
    assert_eq!(stdout(&out), "x\nB\ny\n");
    // only B is recommended among the shown items: full boost at alpha 1, a tie at 0.5
    let out = run_stdin(&["rerank", "--user", "U", "--alpha", "1", "--events", ev], "x\ny\nB\n");
    assert_eq!(stdout(&out), "B\nx\ny\n");
    let out = run_stdin(&["rerank", "--user", "U", "--alpha", "0.5", "--events", ev], "x\ny\nB\n");
    assert_eq!(stdout(&out), "x\nB\ny\n");
    let out = run_stdin(&["rerank", "--user", "U", "--alpha", "1.5", "--events", ev], "x\n");
    assert_eq!(out.status.code(), Some(2));
    let out = run_stdin(&["rerank", "--user", "U", "--alpha", "0.5", "--events", ev], "");
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synthetic_generation_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.ndjson");
    let b = dir.path().join("b.ndjson");
    for path in [&a, &b] {
        let out = run(&["gen-synthetic", "--users-per", "10", "--items-per", "20", "--seed", "4", "--out", path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    assert_eq!(text.lines().count(), 2 * 10 * 30);
    assert_eq!(run(&["gen-synthetic", "--crossover", "1.0"]).status.code(), Some(2));
}

#[test]
fn sweep_single_point() {
    let dir = tempfile::tempdir().unwrap();
    let events = dir.path().join("s.ndjson");
    run(&["gen-synthetic", "--users-per", "10", "--items-per", "20", "--interactions-per-user", "10", "--seed", "2", "--out", events.to_str().unwrap()]);
    let csv = dir.path().join("sweep.csv");
    let args = [
        "eval-sweep", "--events", events.to_str().unwrap(), "--sample-size", "5", "--repetitions", "2",
        "--usage-windows", "25", "--depths", "3", "--weightings", "constant", "--heldout", "all-items",
        "--out", csv.to_str().unwrap(),
    ];
    let out = run(&args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,n,d,w,mean_hit_rate,stddev,users,repetitions");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("all,25,3,constant,"));
    let again = run(&args[..args.len() - 2]);
    assert_eq!(stdout(&again), text);

    let mut bad = args.to_vec();
    bad[12] = "0";
    assert_eq!(run(&bad).status.code(), Some(2));
    let too_many = run(&["eval-sweep", "--events", events.to_str().unwrap(), "--sample-size", "5000"]);
    assert_eq!(too_many.status.code(), Some(2));
}

#[test]
fn click_report_and_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("log.ndjson");
    std::fs::write(
        &log,
        "{\"ts\":1,\"user\":\"u\",\"query\":\"q\",\"shown\":[\"a\",\"b\",\"c\"],\"clicked\":\"a\",\"method\":\"latest\",\"click_position\":1}\n\
         {\"ts\":2,\"user\":\"u\",\"query\":\"q\",\"shown\":[\"a\",\"b\",\"c\"],\"clicked\":\"c\",\"method\":\"latest\",\"click_position\":3}\n\
         {\"ts\":3,\"user\":\"u\",\"query\":\"q\",\"shown\":[\"a\",\"b\"],\"clicked\":\"b\",\"method\":\"personal\",\"click_position\":2}\n",
    )
    .unwrap();
    let out = run(&["eval-clicks", "--log", log.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out), "group,count,mean_click_position\nlatest,2,2.000000\npersonal,1,2.000000\n");

    let events = dir.path().join("s.ndjson");
    run(&["gen-synthetic", "--users-per", "10", "--items-per", "20", "--seed", "2", "--out", events.to_str().unwrap()]);
    let sim = ["eval-clicks", "--events", events.to_str().unwrap(), "--sample-size", "5", "--alphas", "0,0.9"];
    let a = run(&sim);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(stdout(&a).lines().count(), 3);
    assert_eq!(a.stdout, run(&sim).stdout);
    assert_eq!(run(&["eval-clicks", "--events", events.to_str().unwrap(), "--alphas", "2"]).status.code(), Some(2));
}

#[test]
fn export_graph_documents() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.ndjson");
    std::fs::write(&empty, "").unwrap();
    let out = run(&["export-graph", "--events", empty.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let doc: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(doc, serde_json::json!({"nodes": [], "links": []}));

    let events = fixture(dir.path());
    let out = run(&["export-graph", "--events", events.to_str().unwrap(), "--limit-nodes", "1"]);
    let doc: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(doc["nodes"].as_array().unwrap().len(), 1);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&[]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["recommend", "--bogus"]).status.code(), Some(2));
    assert_eq!(run(&["recommend", "--user", "U"]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn serve_rejects_missing_config() {
    let out = run(&["serve", "--config", "/no/such/config.toml"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("config"));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "default_alpha = 3.0\n").unwrap();
    assert_eq!(run(&["serve", "--config", bad.to_str().unwrap()]).status.code(), Some(1));
}

fn http_get(addr: &str, path: &str) -> String {
    let mut stream = TcpStream::connect(addr).unwrap();
    write!(stream, "GET {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n").unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).unwrap();
    response.split("\r\n\r\n").nth(1).unwrap_or_default().to_owned()
}

#[test]
fn serve_imports_and_answers() {
    let dir = tempfile::tempdir().unwrap();
    let events = fixture(dir.path());
    let config = dir.path().join("service.toml");
    std::fs::write(&config, "listen = \"127.0.0.1:0\"\n").unwrap();
    let mut child = bin()
        .args(["serve", "--config", config.to_str().unwrap(), "--import", events.to_str().unwrap()])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on ").expect("listening line").to_owned();

    let deadline = Instant::now() + Duration::from_secs(10);
    let stats = loop {
        let stats: Value = serde_json::from_str(&http_get(&addr, "/stats")).unwrap();
        if stats["queue_depths"]["recbuild"] == 0 || Instant::now() > deadline {
            break stats;
        }
        std::thread::sleep(Duration::from_millis(20));
    };
    assert_eq!(stats["events"], 3);
    let list: Value = serde_json::from_str(&http_get(&addr, "/users/U/recommendations")).unwrap();
    assert_eq!(list["items"][0]["item_id"], "A");
    child.kill().unwrap();
    child.wait().unwrap();
}
