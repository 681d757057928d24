//! Subcommand implementations. Every command prints one JSON document to
//! stdout (configs, seeds, and versions included for reproducibility) and
//! returns library errors for `main` to map onto exit codes. Wealth logs are
//! natural-base and always accompany linear values; non-finite numbers
//! (e.g. the log wealth of a ruined run) serialize as JSON `null`.

use std::path::Path;

use serde_json::{json, Value};
use upairs::aggregator::{self, RunOptions, RunReport};
use upairs::game;
use upairs::hindsight;
use upairs::pricing::{self, PriceQuery, Pricer};
use upairs::simulate::{self, GbmPairSpec, HorseRaceSpec, LogNormalSpec};
use upairs::{Error, Result};

use crate::csvio::{self, Mode};

fn versions() -> Value {
    json!({ "cli": env!("CARGO_PKG_VERSION"), "library": upairs::VERSION })
}

fn emit(doc: &Value) {
    use std::io::Write as _;
    let text = serde_json::to_string_pretty(doc).expect("serializable document");
    // Ignore write failures so a closed pipe (`upairs ... | head`) exits quietly.
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn write_json(path: &Path, doc: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(doc).expect("serializable document");
    text.push('\n');
    std::fs::write(path, text)
        .map_err(|e| Error::InvalidInput(format!("cannot write {}: {e}", path.display())))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::InvalidInput(format!("cannot create {}: {e}", dir.display())))
}

fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Returns => "returns",
        Mode::Prices => "prices",
    }
}

/// `price`: the guarantee price p(T,s), the universe-wide hedge cost
/// C(m,s)·p(T,s), and (for pairs) the per-session regret bound.
pub fn price(t: usize, s: usize, m: Option<usize>) -> Result<()> {
    let m = m.unwrap_or(s);
    let mut pricer = Pricer::new();
    let p = pricer.price(&PriceQuery::new(t, s, s)?)?;
    let cost = pricer.hedge_cost(&PriceQuery::new(t, s, m)?)?;
    let bound = if s == 2 {
        Some(pricer.regret_bound(&PriceQuery::new(t, 2, m)?)?)
    } else {
        None
    };
    emit(&json!({
        "horizon_t": t,
        "support_s": s,
        "universe_m": m,
        "price": p.value,
        "log_price": p.log_value,
        "hedge_cost": cost.value,
        "log_hedge_cost": cost.log_value,
        "regret_bound": bound,
        "version": versions(),
    }));
    Ok(())
}

/// `horizon`: least T whose pair regret bound drops below epsilon.
pub fn horizon(epsilon: f64, m: usize) -> Result<()> {
    let t = pricing::horizon_for_tolerance(epsilon, m)?;
    let at = pricing::regret_bound(&PriceQuery::new(t as usize, 2, m)?)?;
    emit(&json!({
        "epsilon": epsilon,
        "universe_m": m,
        "horizon": t,
        "regret_bound_at_horizon": at,
        "version": versions(),
    }));
    Ok(())
}

/// `hindsight`: best single asset, best pair rule (with its weights), and
/// optionally the best size-`s` rule for `s > 2`.
pub fn hindsight_benchmarks(
    input: &Path,
    mode: Mode,
    keep: Option<usize>,
    s: usize,
) -> Result<()> {
    if s < 1 {
        return Err(Error::InvalidInput("support size s must be >= 1".into()));
    }
    let seq = csvio::read_market(input, mode, keep)?;
    let single = hindsight::best_s_rule(&seq, 1)?;
    let pair = hindsight::best_pairs_rule_overall(&seq)?;
    let extra = if s > 2 {
        Some(hindsight::best_s_rule(&seq, s)?)
    } else {
        None
    };

    let mut single_doc = serde_json::to_value(&single).expect("serializable solution");
    single_doc["asset"] = json!(single.support.first());
    emit(&json!({
        "input": input.display().to_string(),
        "mode": mode_name(mode),
        "sessions": seq.sessions(),
        "assets": seq.assets(),
        "best_single": single_doc,
        "best_pair": {
            "pair": pair.pair,
            "solution": serde_json::to_value(&pair.solution).expect("serializable solution"),
        },
        "best_s": extra.map(|sol| {
            json!({ "s": s, "solution": serde_json::to_value(&sol).expect("serializable") })
        }),
        "version": versions(),
    }));
    Ok(())
}

/// `run`: replay the aggregated online pair strategy over the whole file,
/// writing `trajectory.csv` and `report.json` under `out`.
pub fn run(
    input: &Path,
    mode: Mode,
    keep: Option<usize>,
    out: &Path,
    pairs_report: bool,
) -> Result<()> {
    let seq = csvio::read_market(input, mode, keep)?;
    let options = RunOptions {
        horizon: None,
        restart: false,
        running_hindsight: pairs_report,
    };
    let report = aggregator::run_full(&seq, &options)?;
    ensure_dir(out)?;

    let traj_path = out.join("trajectory.csv");
    write_trajectory(&traj_path, &report, pairs_report)?;

    let mut report_doc = serde_json::to_value(&report).expect("serializable report");
    if !pairs_report {
        report_doc
            .as_object_mut()
            .expect("report is an object")
            .remove("pair_states");
    }
    let report_path = out.join("report.json");
    let doc = json!({
        "config": {
            "input": input.display().to_string(),
            "mode": mode_name(mode),
            "T": seq.sessions(),
            "out": out.display().to_string(),
            "pairs_report": pairs_report,
        },
        "files": {
            "trajectory": traj_path.display().to_string(),
            "report": report_path.display().to_string(),
        },
        "version": versions(),
        "report": report_doc,
    });
    write_json(&report_path, &doc)?;
    emit(&doc);
    Ok(())
}

fn write_trajectory(path: &Path, report: &RunReport, with_benchmark: bool) -> Result<()> {
    use std::fmt::Write as _;
    let mut out = String::from("t,log_wealth");
    for j in 1..=report.m {
        write!(out, ",w_{j}").expect("string write");
    }
    if with_benchmark {
        out.push_str(",running_log_benchmark,running_regret");
    }
    out.push('\n');
    for p in &report.trajectory {
        write!(out, "{},{}", p.t, p.log_wealth).expect("string write");
        for w in &p.weights {
            write!(out, ",{w}").expect("string write");
        }
        if with_benchmark {
            write!(
                out,
                ",{},{}",
                p.running_log_benchmark.unwrap_or(f64::NAN),
                p.running_regret.unwrap_or(f64::NAN)
            )
            .expect("string write");
        }
        out.push('\n');
    }
    std::fs::write(path, out)
        .map_err(|e| Error::InvalidInput(format!("cannot write {}: {e}", path.display())))
}

/// `simulate gbm`: one volatility-harvesting pair path plus diagnostics.
pub fn simulate_gbm(sigma: f64, dt: f64, time: f64, seed: u64, out: &Path) -> Result<()> {
    let spec = GbmPairSpec { sigma, dt, time, seed };
    let (seq, diag) = simulate::simulate_shannon_demon(&spec)?;
    ensure_dir(out)?;
    let market = out.join("market.csv");
    csvio::write_market(&market, &seq)?;
    let diag_path = out.join("diagnostics.json");
    let doc = json!({
        "config": serde_json::to_value(&spec).expect("serializable spec"),
        "files": {
            "market": market.display().to_string(),
            "diagnostics": diag_path.display().to_string(),
        },
        "diagnostics": serde_json::to_value(&diag).expect("serializable diagnostics"),
        "version": versions(),
    });
    write_json(&diag_path, &doc)?;
    emit(&doc);
    Ok(())
}

/// `simulate lognormal`: i.i.d. log-normal sessions for `m` assets.
pub fn simulate_lognormal(
    m: usize,
    t: usize,
    nu: f64,
    sigma: f64,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let spec = LogNormalSpec::independent(vec![nu; m], vec![sigma; m], t, seed);
    let seq = simulate::simulate_lognormal(&spec)?;
    ensure_dir(out)?;
    let market = out.join("market.csv");
    csvio::write_market(&market, &seq)?;
    emit(&json!({
        "config": { "kind": "lognormal", "m": m, "T": t, "nu": nu, "sigma": sigma, "seed": seed },
        "files": { "market": market.display().to_string() },
        "version": versions(),
    }));
    Ok(())
}

/// `simulate horserace`: one winning asset per session at unit odds.
pub fn simulate_horserace(
    m: usize,
    t: usize,
    win_probs: Option<Vec<f64>>,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let mut spec = HorseRaceSpec::unit_uniform(m, t, seed);
    if let Some(p) = win_probs {
        spec.win_probs = Some(p);
    }
    let (seq, path) = simulate::simulate_horse_race(&spec)?;
    ensure_dir(out)?;
    let market = out.join("market.csv");
    csvio::write_market(&market, &seq)?;
    emit(&json!({
        "config": {
            "kind": "horserace", "m": m, "T": t,
            "win_probs": spec.win_probs, "seed": seed,
        },
        "winners": path.winners,
        "files": { "market": market.display().to_string() },
        "version": versions(),
    }));
    Ok(())
}

/// `verify`: exhaustive game-theoretic self-checks at one configuration.
/// Prints a pass/fail JSON and fails with a verification error (exit 4)
/// when any check is violated.
pub fn verify(m: usize, s: usize, t: usize) -> Result<()> {
    if s != 2 && s != m {
        return Err(Error::InvalidInput(format!(
            "the guarantee strategy is implemented for pair supports (s = 2) or the full \
             universe (s = m); got s = {s} with m = {m}"
        )));
    }
    let value = game::game_value(m, s, t)?;
    let mut checks: Vec<Value> = Vec::new();

    let mix = game::natures_mixed_strategy(m, s, t)?;
    let mass = mix.total_mass();
    checks.push(json!({
        "name": "adversary_mixture_mass_is_one",
        "passed": (mass - 1.0).abs() <= 1e-12,
        "detail": format!("total mass {mass:.15}"),
    }));

    let total = game::wealth_conservation_check(m, t, || game::super_hedge_strategy(m, s, t))?;
    checks.push(json!({
        "name": "wealth_conservation_over_all_paths",
        "passed": (total - 1.0).abs() <= 1e-10,
        "detail": format!("wealth summed over all {m}^{t} unit-odds paths: {total:.15}"),
    }));

    match game::pure_value_check(m, s, t) {
        Ok(_) => checks.push(json!({
            "name": "worst_case_guarantee_suite",
            "passed": true,
            "detail": "guarantee holds on every path; random plays never beat the game value",
        })),
        Err(Error::Verification(msg)) => checks.push(json!({
            "name": "worst_case_guarantee_suite",
            "passed": false,
            "detail": msg,
        })),
        Err(e) => return Err(e),
    }

    let failed = checks
        .iter()
        .filter(|c| !c["passed"].as_bool().unwrap_or(false))
        .count();
    emit(&json!({
        "m": m,
        "s": s,
        "horizon": t,
        "game_value": serde_json::to_value(&value).expect("serializable value"),
        "checks": checks,
        "passed": failed == 0,
        "version": versions(),
    }));
    if failed > 0 {
        return Err(Error::Verification(format!(
            "{failed} verification check(s) failed"
        )));
    }
    Ok(())
}
