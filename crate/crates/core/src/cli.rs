//! Command implementations behind the `nash-seek` binary. Each command
//! writes its report to the given sink so it can be driven from tests.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use nalgebra::DVector;
use serde::Serialize;

use crate::config::{paper_example, ScenarioConfig};
use crate::error::{Assumption, Error, Result};
use crate::game::solve_nash_gradient_play;
use crate::seeker::{PlayerLaw, SeekerMode};
use crate::sim::{run, Summary, Trajectory};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_ASSUMPTION: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::AssumptionViolated { .. } => EXIT_ASSUMPTION,
            Error::SingularJacobian { .. }
            | Error::NotConverged { .. }
            | Error::SingularTransformation { .. }
            | Error::NonFinite { .. }
            | Error::Eigen(_) => EXIT_NUMERICAL,
            Error::IndexOutOfRange { .. }
            | Error::Dimension(_)
            | Error::InvalidParameter(_)
            | Error::NonPositiveGain { .. }
            | Error::ModeMismatch { .. }
            | Error::Config(_)
            | Error::Io(_) => EXIT_CONFIG,
        }
    }
}

/// `summary.json`: the run summary plus everything needed to repeat it.
#[derive(Serialize)]
struct SummaryRecord<'a> {
    #[serde(flatten)]
    summary: &'a Summary,
    resolved_config: &'a ScenarioConfig,
}

/// `t, y_1..y_N, u_1..u_N, err, tilde_norm, z_residual, xbar_tail_max`,
/// one row per logged step, 17 significant digits.
pub fn write_trajectory_csv(traj: &Trajectory<f64>, n: usize, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("y_{i}")));
    header.extend((1..=n).map(|i| format!("u_{i}")));
    header.extend(["err", "tilde_norm", "z_residual", "xbar_tail_max"].map(String::from));
    writeln!(w, "{}", header.join(","))?;
    for k in 0..traj.len() {
        let row = std::iter::once(traj.times[k])
            .chain(traj.y[k].iter().copied())
            .chain(traj.u[k].iter().copied())
            .chain([
                traj.err[k],
                traj.tilde_norm[k],
                traj.z_residual[k],
                traj.xbar_tail_max[k],
            ]);
        let cells: Vec<String> = row.map(|v| format!("{v:.16e}")).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Resolves and integrates one configuration, writing `trajectory.csv` and
/// `summary.json` into `out_dir`.
pub fn run_to_dir(cfg: &ScenarioConfig, out_dir: &Path) -> Result<Summary> {
    let resolved = cfg.resolve()?;
    let (traj, summary) = run(&resolved.scenario, &cfg.sim)?;
    fs::create_dir_all(out_dir)?;
    write_trajectory_csv(
        &traj,
        resolved.scenario.players.len(),
        &out_dir.join("trajectory.csv"),
    )?;
    let record = SummaryRecord {
        summary: &summary,
        resolved_config: &resolved.config,
    };
    let json = serde_json::to_string_pretty(&record).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(out_dir.join("summary.json"), json + "\n")?;
    Ok(summary)
}

/// Runs independent jobs on up to `jobs` threads, keeping input order.
fn run_batch(tasks: &[(ScenarioConfig, PathBuf)], jobs: usize) -> Vec<Result<Summary>> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<Summary>>>> =
        Mutex::new((0..tasks.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, tasks.len().max(1)) {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some((cfg, dir)) = tasks.get(k) else {
                    break;
                };
                let r = run_to_dir(cfg, dir);
                results.lock().unwrap()[k] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every task ran"))
        .collect()
}

fn summary_line(summary: &Summary) -> String {
    let max_u = summary.max_abs_u.iter().copied().fold(0.0, f64::max);
    format!(
        "converged = {}, final_err = {:.3e}, max|u| = {:.6}, bound_violated = {}",
        summary.converged, summary.final_err, max_u, summary.bound_violated
    )
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub allow_large_theta: bool,
    /// Randomized copies of the scenario instead of the configured
    /// initial conditions; 0 runs the file as written.
    pub replicates: u64,
    pub jobs: usize,
}

pub fn cmd_run(
    config_path: &Path,
    out_dir: &Path,
    opts: &RunOptions,
    out: &mut dyn Write,
) -> Result<()> {
    let mut cfg = ScenarioConfig::load(config_path)?;
    cfg.allow_large_theta |= opts.allow_large_theta;
    if opts.replicates == 0 {
        let summary = run_to_dir(&cfg, out_dir)?;
        writeln!(out, "{}", summary_line(&summary))?;
        return Ok(());
    }
    let tasks = (0..opts.replicates)
        .map(|k| Ok((cfg.randomized(k)?, out_dir.join(format!("replicate_{k}")))))
        .collect::<Result<Vec<_>>>()?;
    let mut first_err = None;
    for (k, r) in run_batch(&tasks, opts.jobs).into_iter().enumerate() {
        match r {
            Ok(s) => writeln!(out, "replicate {k}: {}", summary_line(&s))?,
            Err(e) => {
                writeln!(out, "replicate {k}: error: {e}")?;
                first_err.get_or_insert(e);
            }
        }
    }
    first_err.map_or(Ok(()), Err)
}

/// A named pass/fail verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

fn check(name: &str, passed: bool, detail: String) -> Check {
    Check {
        name: name.into(),
        passed,
        detail,
    }
}

pub const EXAMPLE_U_BOUND: f64 = 13.0 / 27.0;

/// Verdicts for the saturated example run and its unsaturated twin.
pub fn paper_example_checks(saturated: &Summary, unsaturated: &Summary) -> Vec<Check> {
    let sat_u = saturated.max_abs_u.iter().copied().fold(0.0, f64::max);
    let unsat_u = unsaturated.max_abs_u.iter().copied().fold(0.0, f64::max);
    vec![
        check(
            "saturated convergence",
            saturated.converged,
            format!(
                "err < 1e-2 over the trailing window; final_err = {:.3e}, settled at {:?}",
                saturated.final_err, saturated.t_converge
            ),
        ),
        check(
            "saturated final error",
            saturated.final_err < 1e-2,
            format!("|y(t_end) + 0.5|_inf = {:.3e} < 1e-2", saturated.final_err),
        ),
        check(
            "control bound",
            sat_u <= EXAMPLE_U_BOUND + 1e-9 && !saturated.bound_violated,
            format!("max_i sup|u_i| = {sat_u:.12} <= 13/27 = {EXAMPLE_U_BOUND:.12}"),
        ),
        check(
            "unsaturated convergence",
            unsaturated.converged,
            format!("final_err = {:.3e}", unsaturated.final_err),
        ),
        check(
            "unsaturated exceeds bound",
            unsat_u > EXAMPLE_U_BOUND,
            format!("max_i sup|u_i| = {unsat_u:.6} > 13/27"),
        ),
    ]
}

#[derive(Debug, Clone, Default)]
pub struct PaperOptions {
    /// Horizon override; the default configuration's horizon otherwise.
    pub t_end: Option<f64>,
    pub jobs: usize,
}

/// Runs the six-player example and its unsaturated comparison into
/// `out_dir/saturated` and `out_dir/unsaturated`.
pub fn cmd_paper_example(
    out_dir: &Path,
    opts: &PaperOptions,
    out: &mut dyn Write,
) -> Result<Vec<Check>> {
    let tasks: Vec<(ScenarioConfig, PathBuf)> =
        [SeekerMode::SaturatedDirected, SeekerMode::Unsaturated]
            .into_iter()
            .map(|mode| {
                let mut cfg = paper_example(mode);
                if let Some(t) = opts.t_end {
                    cfg.sim.t_end = t;
                }
                (
                    cfg,
                    out_dir.join(mode.name().split('_').next().unwrap_or("run")),
                )
            })
            .collect();
    let mut results = run_batch(&tasks, opts.jobs).into_iter();
    let sat = results.next().expect("two runs")?;
    let unsat = results.next().expect("two runs")?;
    writeln!(out, "saturated: {}", summary_line(&sat))?;
    writeln!(out, "unsaturated: {}", summary_line(&unsat))?;
    let checks = paper_example_checks(&sat, &unsat);
    for c in &checks {
        writeln!(out, "{c}")?;
    }
    Ok(checks)
}

fn fmt_vec(v: &DVector<f64>) -> String {
    let cells: Vec<String> = v.iter().map(|x| format!("{x:.12}")).collect();
    format!("[{}]", cells.join(", "))
}

/// Solves the configured game both ways and reports the deviation.
pub fn cmd_solve_ne(config_path: &Path, out: &mut dyn Write) -> Result<f64> {
    let cfg = ScenarioConfig::load(config_path)?;
    let game = cfg.build_game()?;
    let report = game.check_assumptions();
    report.require_strongly_monotone()?;
    let closed = game.solve_nash_closed_form()?;
    let step = game
        .default_gradient_step()
        .expect("strongly monotone game has a step");
    let iterative = solve_nash_gradient_play(
        &game,
        &DVector::zeros(closed.len()),
        step,
        1e-12,
        10_000_000,
    )?;
    let deviation = (&closed - &iterative).amax();
    writeln!(out, "closed form:   {}", fmt_vec(&closed))?;
    writeln!(out, "gradient play: {}", fmt_vec(&iterative))?;
    writeln!(out, "max deviation: {deviation:.3e}")?;
    Ok(deviation)
}

/// Smallest-denominator fraction within `1e-12` of `x`, if one has a
/// denominator up to 1000.
fn as_fraction(x: f64) -> Option<(i64, i64)> {
    (1..=1000i64).find_map(|d| {
        let n = (x * d as f64).round();
        ((n / d as f64 - x).abs() < 1e-12).then_some((n as i64, d))
    })
}

fn fmt_value(x: f64) -> String {
    match as_fraction(x) {
        Some((n, 1)) => format!("{n}"),
        Some((n, d)) => format!("{n}/{d}"),
        None => format!("{x:.12}"),
    }
}

/// Preflight of the standing assumptions and design conditions. Every
/// check is reported; the result is true when all pass.
pub fn cmd_check(config_path: &Path, allow_large_theta: bool, out: &mut dyn Write) -> Result<bool> {
    let mut cfg = ScenarioConfig::load(config_path)?;
    cfg.allow_large_theta |= allow_large_theta;
    let mut checks = Vec::new();

    let game = cfg.build_game()?;
    let report = game.check_assumptions();
    let l: Vec<String> = report.lipschitz.iter().map(|v| format!("{v:.6}")).collect();
    checks.push(check(
        &Assumption::LipschitzGradient.to_string(),
        report.lipschitz.iter().all(|v| v.is_finite()),
        format!("l_i = [{}]", l.join(", ")),
    ));
    checks.push(check(
        &Assumption::StrongMonotonicity.to_string(),
        report.is_strongly_monotone(),
        format!("omega = {:.6}", report.omega),
    ));

    let graph = cfg.build_graph()?;
    let connected = graph.is_strongly_connected();
    checks.push(check(
        &Assumption::StrongConnectivity.to_string(),
        connected,
        if connected {
            "strongly connected"
        } else {
            "some ordered pair has no directed path"
        }
        .into(),
    ));
    match graph.laplacian().h_diagnostic() {
        Ok(d) => checks.push(check(
            "H matrix",
            d.nonsingular && d.min_real_eig > 0.0,
            format!(
                "min Re(eig) = {:.6}, condition = {:.3e}",
                d.min_real_eig, d.condition
            ),
        )),
        Err(e) => checks.push(check("H matrix", false, e.to_string())),
    }

    let mut relaxed = cfg.clone();
    relaxed.allow_large_theta = true;
    let players = relaxed.build_players()?;
    for (i, p) in players.iter().enumerate() {
        let in_range = p.theta > 0.0 && p.theta < 0.5;
        checks.push(check(
            &format!("player {i} theta"),
            in_range || cfg.allow_large_theta,
            if in_range {
                format!("theta = {} in (0, 1/2)", fmt_value(p.theta))
            } else {
                format!(
                    "theta = {} outside (0, 1/2) required by Lemma 1{}",
                    fmt_value(p.theta),
                    if cfg.allow_large_theta {
                        " (override set)"
                    } else {
                        ""
                    }
                )
            },
        ));
        let bound = PlayerLaw::new(p, cfg.mode, i).map(|law| law.certified_bound());
        checks.push(match bound {
            Ok(Some(b)) => {
                check(
                    &format!("player {i} control bound"),
                    b <= p.u_limit * (1.0 + 1e-12),
                    format!(
                    "{} {} U = {} (Remark 2: choose delta so the certified bound stays within U)",
                    fmt_value(b),
                    if b <= p.u_limit * (1.0 + 1e-12) { "<=" } else { ">" },
                    fmt_value(p.u_limit)
                ),
                )
            }
            Ok(None) => check(
                &format!("player {i} control bound"),
                false,
                format!("mode {} has no certified bound", cfg.mode),
            ),
            Err(e) => check(&format!("player {i} control bound"), false, e.to_string()),
        });
    }

    if checks.iter().all(|c| c.passed) {
        checks.push(match cfg.resolve() {
            Ok(_) => check(
                "scenario",
                true,
                "initial conditions and sizes consistent".into(),
            ),
            Err(e) => check("scenario", false, e.to_string()),
        });
    }
    for c in &checks {
        writeln!(out, "{c}")?;
    }
    Ok(checks.iter().all(|c| c.passed))
}
