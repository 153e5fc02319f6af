//! The five subcommands. Each writes its files under `out` and returns the
//! numbers a sweep collects.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use spreadspeed::hj::{hj_solve, RaySolution};
use spreadspeed::simulate::{estimate_speed, simulate, SimResult, SpeedFit};
use spreadspeed::speeds::{kpp_two_shift, speed_homogeneous, speed_single_shift};
use spreadspeed::{io, Decay, SpeedResult};

use crate::config::{self, Regime, Resolved, RunConfig, SweepCommand};
use crate::error::CliError;

/// Headline numbers of one run.
#[derive(Clone, Debug, Default, Serialize)]
pub struct Outcome {
    pub analytic: Option<f64>,
    pub hj: Option<f64>,
    pub sim: Option<f64>,
    /// Set by `validate`.
    pub passed: Option<bool>,
    /// Printed on stdout.
    #[serde(skip)]
    pub summary: String,
}

fn create_dir(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))
}

fn create(out: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    let path = out.join(name);
    File::create(&path).map(BufWriter::new).map_err(|e| CliError::io(&path, e))
}

fn write_json<T: Serialize>(out: &Path, name: &str, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    let path = out.join(name);
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))
}

impl Regime {
    pub fn speed(&self, mu: Decay) -> Result<SpeedResult, CliError> {
        Ok(match self {
            Regime::Homogeneous(rel) => speed_homogeneous(rel, mu)?,
            Regime::SingleShift { minus, plus, c1 } => speed_single_shift(minus, plus, *c1, mu)?,
            Regime::TwoShift { r1, r2, c1, c2 } => {
                if !mu.is_infinite() {
                    return Err(spreadspeed::Error::Precondition(
                        "the two-shift speed is known for compactly supported data only (mu = inf)".into(),
                    )
                    .into());
                }
                kpp_two_shift(*r1, *r2, *c1, *c2)?
            }
            Regime::Unsupported(why) => return Err(spreadspeed::Error::Precondition(why.clone()).into()),
        })
    }
}

fn write_lambda_tables(cfg: &RunConfig, resolved: &Resolved, out: &Path) -> Result<(), CliError> {
    let regimes = resolved.profile.regimes();
    for (k, &(r1, r2)) in regimes.iter().enumerate() {
        let k_arc = if r2 == 0.0 { std::sync::Arc::new(spreadspeed::DelayKernel::absent()) } else { resolved.kernel.clone() };
        let rel = spreadspeed::DispersionRelation::new(r1, r2, k_arc)?;
        let p_max = match cfg.mu {
            Decay::Finite(m) => 2.0 * m.max(rel.mu_star()?.mu),
            Decay::Infinite => 2.0 * rel.mu_star()?.mu,
        };
        let name = if regimes.len() == 1 { "lambda.csv".to_string() } else { format!("lambda_{k}.csv") };
        io::write_lambda(create(out, &name)?, &rel, 0.0, p_max.max(1.0), 0.01)?;
    }
    Ok(())
}

pub fn speed(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let resolved = cfg.scenario.resolve()?;
    resolved.require_hypotheses()?;
    let result = resolved.regime.speed(cfg.mu)?;
    create_dir(out)?;
    write_json(out, "speed.json", &result)?;
    if cfg.output.lambda_table {
        write_lambda_tables(cfg, &resolved, out)?;
    }
    Ok(Outcome { analytic: Some(result.s_hat), summary: serde_json::to_string_pretty(&result)?, ..Outcome::default() })
}

fn solve_ray(cfg: &RunConfig, resolved: &Resolved) -> Result<RaySolution, CliError> {
    Ok(hj_solve(&resolved.profile, resolved.kernel.clone(), cfg.mu, &cfg.hj)?)
}

pub fn hj(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let resolved = cfg.scenario.resolve()?;
    let report = resolved.require_hypotheses()?;
    let sol = solve_ray(cfg, &resolved)?;
    let analytic = resolved.regime.speed(cfg.mu).ok();
    create_dir(out)?;
    io::write_rho(create(out, "rho.csv")?, &sol)?;
    let meta = json!({
        "command": "hj",
        "config": cfg,
        "s_hat": sol.s_hat,
        "flag": sol.flag,
        "mu_cap": sol.mu_cap,
        "diagnostics": sol.diagnostics,
        "analytic": analytic,
        "hypotheses": report,
    });
    write_json(out, "meta.json", &meta)?;
    Ok(Outcome {
        analytic: analytic.as_ref().map(|a| a.s_hat),
        hj: Some(sol.s_hat),
        summary: format!("s_hat = {:.6} ({})", sol.s_hat, serde_json::to_value(sol.flag)?.as_str().unwrap_or("")),
        ..Outcome::default()
    })
}

/// Right edge needed for a front moving at `c` until `t_end`.
fn widened(cfg: &RunConfig, expected: Option<f64>) -> spreadspeed::simulate::SimParams {
    let mut grid = cfg.sim.grid.clone();
    if cfg.sim.auto_domain {
        if let Some(c) = expected {
            grid.x_hi = grid.x_hi.max(1.1 * c * grid.t_end + 50.0);
        }
    }
    grid
}

fn run_sim(cfg: &RunConfig, resolved: &Resolved, expected: Option<f64>) -> Result<(SimResult, Result<SpeedFit, String>), CliError> {
    let ic = cfg.initial_data();
    let result = simulate(&resolved.model, &ic, &widened(cfg, expected))?;
    let [a, b] = cfg.sim.fit_window;
    let fit = estimate_speed(result.primary_trace(), (a * result.t_end, b * result.t_end)).map_err(|e| e.to_string());
    Ok((result, fit))
}

fn sim_meta(cfg: &RunConfig, result: &SimResult, fit: &Result<SpeedFit, String>) -> serde_json::Value {
    let fits: Vec<_> = result
        .traces
        .iter()
        .map(|tr| {
            let [a, b] = cfg.sim.fit_window;
            let f = estimate_speed(tr, (a * result.t_end, b * result.t_end));
            json!({ "theta": tr.theta, "fit": f.as_ref().ok(), "error": f.as_ref().err().map(|e| e.to_string()) })
        })
        .collect();
    json!({
        "x_lo": result.x.first(),
        "x_hi": result.x.last(),
        "initial": cfg.initial_data(),
        "speed": fit.as_ref().ok(),
        "speed_error": fit.as_ref().err(),
        "fits": fits,
        "stats": result.stats,
    })
}

pub fn simulate_cmd(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let resolved = cfg.scenario.resolve()?;
    let report = resolved.require_hypotheses()?;
    let analytic = resolved.regime.speed(cfg.mu).ok().map(|r| r.s_hat);
    let (result, fit) = run_sim(cfg, &resolved, analytic)?;
    create_dir(out)?;
    io::write_front(create(out, "front.csv")?, result.primary_trace())?;
    io::write_snapshots(create(out, "snapshots.csv")?, &result)?;
    let meta = json!({
        "command": "simulate",
        "config": cfg,
        "simulation": sim_meta(cfg, &result, &fit),
        "analytic": analytic,
        "hypotheses": report,
    });
    write_json(out, "meta.json", &meta)?;
    let summary = match &fit {
        Ok(f) => format!("c = {:.6} (stderr {:.2e}, {} samples)", f.c, f.stderr, f.n),
        Err(e) => format!("no speed estimate: {e}"),
    };
    Ok(Outcome { analytic, sim: fit.ok().map(|f| f.c), summary, ..Outcome::default() })
}

#[derive(Clone, Debug, Serialize)]
struct Check {
    check: &'static str,
    value: f64,
    reference: f64,
    error: f64,
    tolerance: f64,
    passed: bool,
}

impl Check {
    fn absolute(check: &'static str, value: f64, reference: f64, tolerance: f64) -> Self {
        let error = (value - reference).abs();
        Check { check, value, reference, error, tolerance, passed: error <= tolerance }
    }

    fn relative(check: &'static str, value: f64, reference: f64, tolerance: f64) -> Self {
        let error = (value - reference).abs() / reference.abs();
        Check { check, value, reference, error, tolerance, passed: error <= tolerance }
    }
}

/// Compares the analytic, ray-equation and simulated speeds.
pub fn validate(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let resolved = cfg.scenario.resolve()?;
    resolved.require_hypotheses()?;
    let analytic = match cfg.validate.force_s_hat {
        Some(s) => Some(s),
        None => match resolved.regime.speed(cfg.mu) {
            Ok(r) => Some(r.s_hat),
            Err(CliError::Core(spreadspeed::Error::Precondition(_))) if matches!(resolved.regime, Regime::Unsupported(_)) => None,
            Err(e) => return Err(e),
        },
    };
    let (sol, sim) = rayon::join(|| solve_ray(cfg, &resolved), || run_sim(cfg, &resolved, analytic));
    let sol = sol?;
    let (result, fit) = sim?;
    let fit = fit.map_err(|e| CliError::Core(spreadspeed::Error::Precondition(format!("speed fit: {e}"))))?;

    let tol = &cfg.validate;
    let mut checks = Vec::new();
    if let Some(a) = analytic {
        checks.push(Check::absolute("hj_vs_analytic", sol.s_hat, a, tol.hj_abs));
        checks.push(Check::relative("sim_vs_analytic", fit.c, a, tol.sim_rel));
    }
    checks.push(Check::relative("sim_vs_hj", fit.c, sol.s_hat, tol.sim_rel));
    let passed = checks.iter().all(|c| c.passed);

    create_dir(out)?;
    let mut w = csv::Writer::from_writer(create(out, "validate.csv")?);
    for c in &checks {
        w.serialize(c).map_err(spreadspeed::Error::from)?;
    }
    w.flush().map_err(|e| CliError::io(&out.join("validate.csv"), e))?;
    let meta = json!({
        "command": "validate",
        "config": cfg,
        "analytic": analytic,
        "hj": { "s_hat": sol.s_hat, "flag": sol.flag, "diagnostics": sol.diagnostics },
        "simulation": sim_meta(cfg, &result, &Ok(fit)),
        "checks": checks,
        "passed": passed,
    });
    write_json(out, "meta.json", &meta)?;

    let mut summary = format!("{:<16} {:>12} {:>12} {:>10} {:>10}  result\n", "check", "value", "reference", "error", "tol");
    for c in &checks {
        summary += &format!(
            "{:<16} {:>12.6} {:>12.6} {:>10.2e} {:>10.2e}  {}\n",
            c.check,
            c.value,
            c.reference,
            c.error,
            c.tolerance,
            if c.passed { "ok" } else { "FAIL" }
        );
    }
    summary.pop();
    Ok(Outcome { analytic, hj: Some(sol.s_hat), sim: Some(fit.c), passed: Some(passed), summary })
}

pub fn run(command: SweepCommand, cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    match command {
        SweepCommand::Speed => speed(cfg, out),
        SweepCommand::Hj => hj(cfg, out),
        SweepCommand::Simulate => simulate_cmd(cfg, out),
        SweepCommand::Validate => validate(cfg, out),
    }
}

#[derive(Serialize)]
struct SweepRow {
    index: usize,
    value: f64,
    analytic: Option<f64>,
    hj: Option<f64>,
    sim: Option<f64>,
    passed: Option<bool>,
    exit_code: u8,
    error: String,
}

/// Runs `sweep.command` once per value of `sweep.key`, each in `out/<index>`.
/// Returns the first failing exit status, after all entries have run.
pub fn sweep(tree: &toml::Table, cfg: &RunConfig, out: &Path) -> Result<(Outcome, u8), CliError> {
    let sw = &cfg.sweep;
    if sw.key.is_empty() || sw.values.is_empty() {
        return Err(CliError::Usage("sweep needs sweep.key and a nonempty sweep.values".into()));
    }
    // every entry is parsed up front so a bad key fails before any work
    let entries = sw
        .values
        .iter()
        .map(|&v| {
            let mut t = tree.clone();
            config::set_path(&mut t, &sw.key, toml::Value::Float(v))?;
            match config::from_tree(t) {
                // integer fields reject floats
                Err(_) if v.fract() == 0.0 => {
                    let mut t = tree.clone();
                    config::set_path(&mut t, &sw.key, toml::Value::Integer(v as i64))?;
                    config::from_tree(t)
                }
                r => r,
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    create_dir(out)?;
    let rows: Vec<SweepRow> = entries
        .par_iter()
        .enumerate()
        .map(|(index, entry)| {
            let dir = out.join(format!("{index:03}"));
            let value = sw.values[index];
            match run(sw.command, entry, &dir) {
                Ok(o) => SweepRow {
                    index,
                    value,
                    analytic: o.analytic,
                    hj: o.hj,
                    sim: o.sim,
                    passed: o.passed,
                    exit_code: if o.passed == Some(false) { 4 } else { 0 },
                    error: String::new(),
                },
                Err(e) => SweepRow {
                    index,
                    value,
                    analytic: None,
                    hj: None,
                    sim: None,
                    passed: None,
                    exit_code: e.exit_code(),
                    error: e.to_string(),
                },
            }
        })
        .collect();
    let mut w = csv::Writer::from_writer(create(out, "sweep.csv")?);
    for r in &rows {
        w.serialize(r).map_err(spreadspeed::Error::from)?;
    }
    w.flush().map_err(|e| CliError::io(&out.join("sweep.csv"), e))?;
    let code = rows.iter().map(|r| r.exit_code).find(|&c| c != 0).unwrap_or(0);
    let failed = rows.iter().filter(|r| r.exit_code != 0).count();
    let summary = format!("{} entries, {failed} failed; see {}", rows.len(), out.join("sweep.csv").display());
    Ok((Outcome { summary, ..Outcome::default() }, code))
}
