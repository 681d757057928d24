//! End-to-end tests of the `upairs` binary: JSON outputs, file artifacts,
//! exit codes, and bit-exact agreement between a CLI run and the same run
//! performed in-process through the library.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use upairs::aggregator::{run_full, RunOptions};
use upairs::ReturnSequence;

fn upairs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_upairs"))
        .args(args)
        .output()
        .expect("binary launches")
}

fn json_stdout(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "command failed; stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is one JSON document")
}

/// Asserts the command failed with `code` and returned a one-line JSON error
/// on stderr whose `error` field is `kind`; returns the error message.
fn expect_error(out: &Output, code: i32, kind: &str) -> String {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout: {} stderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().unwrap_or_default();
    let doc: Value = serde_json::from_str(line).expect("stderr ends with a JSON error line");
    assert_eq!(doc["error"], kind, "unexpected error kind in {doc}");
    doc["message"].as_str().expect("message").to_string()
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).expect("write test file");
}

#[test]
fn price_reports_guarantee_cost_and_bound() {
    let doc = json_stdout(&upairs(&["price", "--T", "2", "--s", "2", "--m", "3"]));
    assert!((doc["price"].as_f64().unwrap() - 2.5).abs() <= 1e-12);
    assert!((doc["hedge_cost"].as_f64().unwrap() - 7.5).abs() <= 1e-9);
    let expected_bound = 7.5f64.ln() / 2.0;
    assert!((doc["regret_bound"].as_f64().unwrap() - expected_bound).abs() <= 1e-12);
    assert_eq!(doc["universe_m"], 3);

    // Universe defaults to the support; the bound is only defined for pairs.
    let doc = json_stdout(&upairs(&["price", "--T", "2", "--s", "3"]));
    assert!((doc["price"].as_f64().unwrap() - 4.5).abs() <= 1e-12);
    assert!((doc["hedge_cost"].as_f64().unwrap() - 4.5).abs() <= 1e-9);
    assert!(doc["regret_bound"].is_null());
}

#[test]
fn horizon_finds_the_smallest_sufficient_t() {
    let doc = json_stdout(&upairs(&["horizon", "--epsilon", "0.5", "--m", "2"]));
    assert_eq!(doc["horizon"], 2);
    let at = doc["regret_bound_at_horizon"].as_f64().unwrap();
    assert!(at <= 0.5 && at > 0.0);
}

#[test]
fn prices_mode_turns_levels_into_returns() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("levels.csv");
    // Levels (1,2) -> (2,1) -> (4,0.5): asset 1 doubles twice, asset 2 halves twice.
    write(&csv, "t,alpha,beta\n1,1,2\n2,2,1\n3,4,0.5\n");
    let doc = json_stdout(&upairs(&[
        "hindsight",
        "--input",
        csv.to_str().unwrap(),
        "--mode",
        "prices",
    ]));
    assert_eq!(doc["sessions"], 2);
    assert_eq!(doc["assets"], 2);
    assert_eq!(doc["best_single"]["asset"], 0);
    assert!((doc["best_single"]["wealth"].as_f64().unwrap() - 4.0).abs() <= 1e-12);
    // Holding only the doubling asset is also the best pair rule here.
    assert!((doc["best_pair"]["solution"]["wealth"].as_f64().unwrap() - 4.0).abs() <= 1e-12);
}

#[test]
fn malformed_inputs_exit_2_with_json_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = |name: &str| dir.path().join(name);
    let arg = |p: &Path| p.to_str().unwrap().to_string();

    let missing = arg(&path("absent.csv"));
    let msg = expect_error(
        &upairs(&["hindsight", "--input", &missing]),
        2,
        "invalid_input",
    );
    assert!(msg.contains("absent.csv"), "message was: {msg}");

    let nonnumeric = path("nonnumeric.csv");
    write(&nonnumeric, "t,a,b\n1,1.0,oops\n");
    let msg = expect_error(
        &upairs(&["hindsight", "--input", &arg(&nonnumeric)]),
        2,
        "invalid_input",
    );
    assert!(msg.contains("line 2") && msg.contains("'b'"), "message was: {msg}");

    let negative = path("negative.csv");
    write(&negative, "t,a,b\n1,1.0,-0.5\n");
    expect_error(
        &upairs(&["run", "--input", &arg(&negative)]),
        2,
        "invalid_input",
    );

    let ragged = path("ragged.csv");
    write(&ragged, "t,a,b\n1,1.0\n");
    expect_error(
        &upairs(&["hindsight", "--input", &arg(&ragged)]),
        2,
        "invalid_input",
    );

    let all_zero = path("allzero.csv");
    write(&all_zero, "t,a,b\n1,0,0\n");
    expect_error(
        &upairs(&["hindsight", "--input", &arg(&all_zero)]),
        2,
        "invalid_input",
    );

    // Price levels need at least two rows to form one return.
    let one_level = path("onelevel.csv");
    write(&one_level, "t,a,b\n1,1.0,2.0\n");
    expect_error(
        &upairs(&["hindsight", "--input", &arg(&one_level), "--mode", "prices"]),
        2,
        "invalid_input",
    );
}

#[test]
fn run_on_a_flat_market_keeps_wealth_at_one() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("flat.csv");
    write(&csv, "t,a,b,c\n1,1,1,1\n2,1,1,1\n3,1,1,1\n4,1,1,1\n");
    let out = dir.path().join("out");
    let doc = json_stdout(&upairs(&[
        "run",
        "--input",
        csv.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]));
    let report = &doc["report"];
    assert!((report["final_wealth"].as_f64().unwrap() - 1.0).abs() <= 1e-12);
    assert!(report["excess_growth"].as_f64().unwrap().abs() <= 1e-12);
    assert_eq!(report["sessions"], 4);
    // The lean report omits per-pair engine states.
    assert!(report.get("pair_states").is_none());
    assert!(out.join("trajectory.csv").is_file());
    assert!(out.join("report.json").is_file());

    // Truncation keeps a prefix; asking beyond the file is an input error.
    let doc = json_stdout(&upairs(&[
        "run",
        "--input",
        csv.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--T",
        "2",
    ]));
    assert_eq!(doc["report"]["sessions"], 2);
    assert_eq!(doc["config"]["T"], 2);
    expect_error(
        &upairs(&[
            "run",
            "--input",
            csv.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--T",
            "9",
        ]),
        2,
        "invalid_input",
    );
}

#[test]
fn cli_run_matches_the_library_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let mkt = dir.path().join("mkt");
    json_stdout(&upairs(&[
        "simulate",
        "lognormal",
        "--m",
        "4",
        "--T",
        "30",
        "--seed",
        "99",
        "--out",
        mkt.to_str().unwrap(),
    ]));
    let market_csv = mkt.join("market.csv");

    let out = dir.path().join("run");
    let doc = json_stdout(&upairs(&[
        "run",
        "--input",
        market_csv.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--pairs-report",
    ]));
    let report = &doc["report"];
    assert!(report.get("pair_states").is_some());

    // Reload the CSV by hand and rerun through the library.
    let text = std::fs::read_to_string(&market_csv).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|line| {
            line.split(',')
                .skip(1)
                .map(|cell| cell.parse::<f64>().expect("float cell"))
                .collect()
        })
        .collect();
    assert_eq!(rows.len(), 30);
    let seq = ReturnSequence::from_rows(rows).unwrap();
    let options = RunOptions {
        horizon: None,
        restart: false,
        running_hindsight: true,
    };
    let expected = run_full(&seq, &options).unwrap();

    let bits = |v: &Value| v.as_f64().expect("finite float").to_bits();
    assert_eq!(
        bits(&report["final_log_wealth"]),
        expected.final_log_wealth.to_bits()
    );
    assert_eq!(bits(&report["log_benchmark"]), expected.log_benchmark.to_bits());
    let traj = report["trajectory"].as_array().unwrap();
    assert_eq!(traj.len(), expected.trajectory.len());
    for (got, want) in traj.iter().zip(&expected.trajectory) {
        assert_eq!(bits(&got["log_wealth"]), want.log_wealth.to_bits());
        let ws = got["weights"].as_array().unwrap();
        assert_eq!(ws.len(), want.weights.len());
        for (w_got, w_want) in ws.iter().zip(&want.weights) {
            assert_eq!(bits(w_got), w_want.to_bits());
        }
        assert_eq!(
            got["running_log_benchmark"].as_f64(),
            want.running_log_benchmark
        );
    }

    // The report file holds the same document that went to stdout.
    let on_disk: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(on_disk, doc);
}

#[test]
fn hindsight_reports_ruin_on_a_three_winner_race() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("race.csv");
    write(&csv, "t,a,b,c\n1,1,0,0\n2,0,1,0\n3,0,0,1\n");
    let doc = json_stdout(&upairs(&["hindsight", "--input", csv.to_str().unwrap()]));
    // Three distinct winners defeat every pair: ruin, wealth zero, log null.
    assert_eq!(doc["best_pair"]["solution"]["bankrupt"], true);
    assert_eq!(doc["best_pair"]["solution"]["wealth"].as_f64(), Some(0.0));
    assert!(doc["best_pair"]["solution"]["log_wealth"].is_null());

    // The online run is also ruined, at the session that kills the last pair.
    let out = dir.path().join("out");
    let run_doc = json_stdout(&upairs(&[
        "run",
        "--input",
        csv.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]));
    assert_eq!(run_doc["report"]["ruined_at"], 3);
    assert_eq!(run_doc["report"]["final_wealth"].as_f64(), Some(0.0));
}

#[test]
fn verify_passes_exhaustive_checks_and_rejects_bad_shapes() {
    let doc = json_stdout(&upairs(&["verify", "--m", "3", "--s", "3", "--T", "3"]));
    assert_eq!(doc["passed"], true);
    for check in doc["checks"].as_array().unwrap() {
        assert_eq!(check["passed"], true, "failed check: {check}");
    }
    let lower = doc["game_value"]["lower_value"].as_f64().unwrap();
    assert!((lower - 9.0 / 53.0).abs() <= 1e-12);

    // Supports strictly between a pair and the whole universe are not offered.
    expect_error(
        &upairs(&["verify", "--m", "4", "--s", "3", "--T", "3"]),
        2,
        "invalid_input",
    );
    // Enumerating m^T paths is guarded against runaway sizes.
    expect_error(
        &upairs(&["verify", "--m", "3", "--s", "2", "--T", "20"]),
        3,
        "scale_guard",
    );
}

#[test]
fn simulate_writes_deterministic_seeded_markets() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let doc = json_stdout(&upairs(&[
            "simulate",
            "gbm",
            "--time",
            "1.0",
            "--seed",
            "5",
            "--out",
            out.to_str().unwrap(),
        ]));
        assert_eq!(doc["diagnostics"]["steps"], 100);
        assert!(out.join("market.csv").is_file());
        assert!(out.join("diagnostics.json").is_file());
    }
    let market = |p: &Path| std::fs::read(p.join("market.csv")).unwrap();
    assert_eq!(market(&a), market(&b), "same seed, same market");

    let c = dir.path().join("c");
    let doc = json_stdout(&upairs(&[
        "simulate",
        "horserace",
        "--m",
        "3",
        "--T",
        "6",
        "--win-probs",
        "0.5,0.3,0.2",
        "--seed",
        "11",
        "--out",
        c.to_str().unwrap(),
    ]));
    let winners = doc["winners"].as_array().unwrap();
    assert_eq!(winners.len(), 6);
    // The written market has exactly one unit winner per row.
    let text = std::fs::read_to_string(c.join("market.csv")).unwrap();
    for (line, winner) in text.lines().skip(1).zip(winners) {
        let cells: Vec<&str> = line.split(',').skip(1).collect();
        let winner = winner.as_u64().unwrap() as usize;
        for (j, cell) in cells.iter().enumerate() {
            assert_eq!(*cell, if j == winner { "1" } else { "0" });
        }
    }
}
