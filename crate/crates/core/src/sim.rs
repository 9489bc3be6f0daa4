//! Fixed-step integration of the closed loop, logging and diagnostics.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::PlayerSpec;
use crate::error::{Assumption, Error, Result};
use crate::game::GameModel;
use crate::graph::Digraph;
use crate::scalar::Scalar;
use crate::seeker::{ClosedLoop, SeekerMode, SeekerState};

/// Relative slack allowed when comparing `|u|` against its certified bound.
pub const BOUND_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub step_size: f64,
    pub t_end: f64,
    pub log_every: usize,
    pub conv_tol: f64,
    pub conv_window: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            step_size: 1e-3,
            t_end: 100.0,
            log_every: 100,
            conv_tol: 1e-2,
            conv_window: 10.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return bad(format!("step_size = {} must be positive", self.step_size));
        }
        if !(self.conv_window > 0.0) {
            return bad(format!(
                "conv_window = {} must be positive",
                self.conv_window
            ));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) || self.steps() == 0 {
            return bad(format!(
                "t_end = {} must be finite and span at least one step",
                self.t_end
            ));
        }
        if self.log_every == 0 {
            return bad("log_every must be at least 1".into());
        }
        if !(self.conv_tol > 0.0) {
            return bad(format!("conv_tol = {} must be positive", self.conv_tol));
        }
        Ok(())
    }

    /// Number of integration steps, `round(t_end / step_size)`.
    pub fn steps(&self) -> usize {
        (self.t_end / self.step_size).round() as usize
    }
}

/// Classical fourth-order Runge–Kutta step for an autonomous system.
///
/// `rhs(x, dx)` writes the derivative of `x` into `dx`. Fails with the index
/// of the first non-finite derivative component.
pub fn rk4_step<T, F>(rhs: F, state: &[T], h: T) -> Result<Vec<T>>
where
    T: Scalar,
    F: FnMut(&[T], &mut [T]) -> Result<()>,
{
    let mut rk = Rk4::new(state.len());
    let mut out = state.to_vec();
    rk.step(rhs, &mut out, h)
        .map_err(|component| Error::NonFinite {
            time: f64::NAN,
            component,
        })??;
    Ok(out)
}

/// Reusable RK4 buffers. State increments are added with compensated
/// summation, so rounding does not accumulate over long runs.
#[derive(Debug, Clone)]
pub struct Rk4<T> {
    k1: Vec<T>,
    k2: Vec<T>,
    k3: Vec<T>,
    k4: Vec<T>,
    tmp: Vec<T>,
    /// Low-order bits lost when adding increments to the state.
    carry: Vec<T>,
}

impl<T: Scalar> Rk4<T> {
    pub fn new(len: usize) -> Self {
        let z = vec![T::zero(); len];
        Self {
            k1: z.clone(),
            k2: z.clone(),
            k3: z.clone(),
            k4: z.clone(),
            tmp: z.clone(),
            carry: z,
        }
    }

    /// Advances `x` in place. The outer error carries the offending
    /// component of a non-finite derivative; the inner one is the rhs error.
    pub fn step<F>(
        &mut self,
        mut rhs: F,
        x: &mut [T],
        h: T,
    ) -> std::result::Result<Result<()>, usize>
    where
        F: FnMut(&[T], &mut [T]) -> Result<()>,
    {
        let half = h * T::lit(0.5);
        macro_rules! stage {
            ($k:ident, $src:expr) => {
                if let Err(e) = rhs($src, &mut self.$k) {
                    return Ok(Err(e));
                }
                if let Some(c) = self.$k.iter().position(|v| !v.is_finite_value()) {
                    return Err(c);
                }
            };
        }
        stage!(k1, x);
        for ((t, x), k) in self.tmp.iter_mut().zip(x.iter()).zip(&self.k1) {
            *t = *x + half * *k;
        }
        stage!(k2, &self.tmp);
        for ((t, x), k) in self.tmp.iter_mut().zip(x.iter()).zip(&self.k2) {
            *t = *x + half * *k;
        }
        stage!(k3, &self.tmp);
        for ((t, x), k) in self.tmp.iter_mut().zip(x.iter()).zip(&self.k3) {
            *t = *x + h * *k;
        }
        stage!(k4, &self.tmp);
        let sixth = h / T::lit(6.0);
        let two = T::lit(2.0);
        for (i, v) in x.iter_mut().enumerate() {
            let inc = sixth * (self.k1[i] + two * self.k2[i] + two * self.k3[i] + self.k4[i])
                - self.carry[i];
            let next = *v + inc;
            self.carry[i] = (next - *v) - inc;
            *v = next;
        }
        Ok(Ok(()))
    }
}

/// Everything needed to start a run.
#[derive(Debug, Clone)]
pub struct Scenario<T: Scalar, G> {
    pub game: G,
    pub graph: Digraph<T>,
    pub players: Vec<PlayerSpec<T>>,
    pub mode: SeekerMode,
    /// Initial plant states in chain coordinates `(y, y', ...)`.
    pub x0: Vec<DVector<T>>,
    pub z0: DMatrix<T>,
    pub c0: DMatrix<T>,
    /// Reference equilibrium used for the error signal, when known.
    pub nash: Option<DVector<T>>,
    /// Skip the strong-connectivity precondition.
    pub allow_disconnected: bool,
}

/// Logged time series. Row `k` holds the state after step
/// `(k + 1) * log_every`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T: Scalar> {
    pub times: Vec<f64>,
    pub y: Vec<DVector<T>>,
    pub u: Vec<DVector<T>>,
    /// `|y - y*|_inf`, NaN without a reference.
    pub err: Vec<f64>,
    /// `max_{i, k >= 2} |xbar_ik| - delta_i`; `-min_i delta_i` when every
    /// player is scalar.
    pub xbar_tail_max: Vec<f64>,
    /// `max_i |xtilde_i1|`.
    pub tilde_norm: Vec<f64>,
    /// `max_ij |z_ij + eta_j|`.
    pub z_residual: Vec<f64>,
    /// Gains at each logged row.
    pub c_log: Vec<DMatrix<T>>,
    pub c_snapshot: DMatrix<T>,
}

impl<T: Scalar> Trajectory<T> {
    fn empty(n: usize) -> Self {
        Self {
            times: Vec::new(),
            y: Vec::new(),
            u: Vec::new(),
            err: Vec::new(),
            xbar_tail_max: Vec::new(),
            tilde_norm: Vec::new(),
            z_residual: Vec::new(),
            c_log: Vec::new(),
            c_snapshot: DMatrix::zeros(n, n),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub converged: bool,
    pub t_converge: Option<f64>,
    pub final_err: f64,
    /// Per-player supremum of `|u_i|` over every integration step.
    pub max_abs_u: Vec<f64>,
    /// Per-player certified bound (`None` without saturation).
    pub certified_bounds: Vec<Option<f64>>,
    pub bound_violated: bool,
    pub c_final_range: (f64, f64),
    /// No gain decreased between consecutive steps.
    pub c_monotone: bool,
    /// `max_ij |c_ij(t_end) - c_ij(0.9 t_end)|`.
    pub c_trailing_drift: f64,
    pub lemma1_entry_time: Option<f64>,
    pub final_tilde_norm: f64,
    pub final_z_residual: f64,
    pub final_y: Vec<f64>,
    pub steps: usize,
}

/// Time after which `violates` stays false: `Some(0.0)` when it never
/// holds, the first time after the last violation otherwise, `None` when
/// the last sample violates.
fn settle_time(times: &[f64], values: &[f64], violates: impl Fn(f64) -> bool) -> Option<f64> {
    match values.iter().rposition(|v| violates(*v)) {
        None => Some(0.0),
        Some(k) if k + 1 < times.len() => Some(times[k + 1]),
        Some(_) => None,
    }
}

/// Convergence over the trailing window: every logged `err` with
/// `t >= t_end - window` is below `tol`, and `t_converge` is the time after
/// which the error stays below `tol`.
pub fn detect_convergence(
    times: &[f64],
    err: &[f64],
    tol: f64,
    window: f64,
) -> (bool, Option<f64>) {
    let Some(&t_end) = times.last() else {
        return (false, None);
    };
    let start = t_end - window;
    let mut in_window = times
        .iter()
        .zip(err)
        .filter(|(t, _)| **t >= start - 1e-9)
        .peekable();
    if in_window.peek().is_none() {
        return (false, None);
    }
    let converged = in_window.all(|(_, e)| *e < tol);
    if !converged {
        return (false, None);
    }
    (true, settle_time(times, err, |e| !(e < tol)))
}

/// Smallest logged time after which every `xbar_tail_max` sample is `<= 0`.
pub fn lemma1_entry(times: &[f64], xbar_tail_max: &[f64]) -> Option<f64> {
    if times.is_empty() {
        return None;
    }
    settle_time(times, xbar_tail_max, |v| !(v <= 0.0))
}

fn validate<T: Scalar, G: GameModel<T>>(s: &Scenario<T, G>) -> Result<()> {
    let n = s.players.len();
    if s.x0.len() != n {
        return Err(Error::Dimension(format!(
            "{} initial states for {n} players",
            s.x0.len()
        )));
    }
    for (i, (x, p)) in s.x0.iter().zip(&s.players).enumerate() {
        if x.len() != p.order {
            return Err(Error::Dimension(format!(
                "player {i} has order {} but initial state of length {}",
                p.order,
                x.len()
            )));
        }
    }
    if s.z0.shape() != (n, n) || s.c0.shape() != (n, n) {
        return Err(Error::Dimension(format!("z0 and c0 must be {n}x{n}")));
    }
    for i in 0..n {
        for j in 0..n {
            let c = s.c0[(i, j)];
            if !(c > T::zero()) {
                return Err(Error::NonPositiveGain {
                    i,
                    j,
                    value: c.to_f64_lossy(),
                });
            }
        }
    }
    if let Some(y) = &s.nash {
        if y.len() != n {
            return Err(Error::Dimension(format!(
                "reference equilibrium has length {}",
                y.len()
            )));
        }
    }
    if !s.allow_disconnected && !s.graph.is_strongly_connected() {
        return Err(Error::AssumptionViolated {
            assumption: Assumption::StrongConnectivity,
            detail: "some ordered pair of players has no directed path".into(),
        });
    }
    Ok(())
}

struct Recorder<'a, T: Scalar> {
    deltas: Vec<T>,
    nash: Option<&'a DVector<T>>,
    traj: Trajectory<T>,
}

impl<'a, T: Scalar> Recorder<'a, T> {
    fn record<G: GameModel<T> + ?Sized>(
        &mut self,
        t: f64,
        loop_: &ClosedLoop<'_, T, G>,
        state: &SeekerState<T>,
        u: DVector<T>,
    ) {
        let n = state.n_players();
        let y = loop_.outputs(state);
        let err = match self.nash {
            Some(ys) => (&y - ys).amax().to_f64_lossy(),
            None => f64::NAN,
        };
        let mut tail = f64::NEG_INFINITY;
        let mut tilde = 0.0f64;
        for (i, law) in loop_.laws.iter().enumerate() {
            let xbar = state.xbar(i);
            for v in &xbar[1..] {
                tail = tail.max((v.abs() - self.deltas[i]).to_f64_lossy());
            }
            tilde = tilde.max(crate::seeker::tilde_x1(i, state, law).abs().to_f64_lossy());
        }
        if tail == f64::NEG_INFINITY {
            tail = -self
                .deltas
                .iter()
                .map(|d| d.to_f64_lossy())
                .fold(f64::INFINITY, f64::min);
        }
        let mut z_res = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                z_res = z_res.max((state.z(i, j) + state.eta(j)).abs().to_f64_lossy());
            }
        }
        let c = DMatrix::from_fn(n, n, |i, j| state.c(i, j));
        let tr = &mut self.traj;
        tr.times.push(t);
        tr.y.push(y);
        tr.u.push(u);
        tr.err.push(err);
        tr.xbar_tail_max.push(tail);
        tr.tilde_norm.push(tilde);
        tr.z_residual.push(z_res);
        tr.c_log.push(c);
    }
}

/// Integrates the closed loop from the scenario's initial conditions.
pub fn run<T: Scalar, G: GameModel<T>>(
    scenario: &Scenario<T, G>,
    config: &SimConfig,
) -> Result<(Trajectory<T>, Summary)> {
    config.validate()?;
    validate(scenario)?;
    let loop_ = ClosedLoop::new(
        &scenario.game,
        &scenario.graph,
        &scenario.players,
        scenario.mode,
    )?;
    let n = scenario.players.len();

    let xbar0: Vec<DVector<T>> = loop_
        .laws
        .iter()
        .zip(&scenario.x0)
        .map(|(law, x)| law.transformation.to_canonical(x))
        .collect();
    let mut state =
        SeekerState::from_parts(&xbar0, &scenario.z0, &scenario.c0, &DVector::zeros(n))?;

    let bounds: Vec<Option<T>> = loop_.laws.iter().map(|l| l.certified_bound()).collect();
    let mut recorder = Recorder {
        deltas: scenario.players.iter().map(|p| p.delta).collect(),
        nash: scenario.nash.as_ref(),
        traj: Trajectory::empty(n),
    };

    let h = T::lit(config.step_size);
    let steps = config.steps();
    let mut rk = Rk4::new(state.layout().len());
    let mut max_abs_u = vec![0.0f64; n];
    let mut c_monotone = true;
    let mut prev_c: Vec<T> = (0..n * n).map(|k| state.c(k / n, k % n)).collect();
    let layout = state.layout().clone();
    let mut scratch = SeekerState::zeros(layout.clone());

    let track_u = |state: &SeekerState<T>, max_abs_u: &mut [f64]| {
        let u = loop_.controls(state);
        for (m, v) in max_abs_u.iter_mut().zip(u.iter()) {
            *m = m.max(v.abs().to_f64_lossy());
        }
        u
    };
    track_u(&state, &mut max_abs_u);

    for step in 1..=steps {
        let t_prev = (step - 1) as f64 * config.step_size;
        let outcome = rk.step(
            |x, dx| {
                scratch.as_mut_slice().copy_from_slice(x);
                loop_.derivative(&scratch, dx)
            },
            state.as_mut_slice(),
            h,
        );
        match outcome {
            Err(component) => {
                return Err(Error::NonFinite {
                    time: t_prev,
                    component,
                })
            }
            Ok(Err(e)) => return Err(e),
            Ok(Ok(())) => {}
        }
        if let Some(component) = state.as_slice().iter().position(|v| !v.is_finite_value()) {
            return Err(Error::NonFinite {
                time: step as f64 * config.step_size,
                component,
            });
        }
        for (k, prev) in prev_c.iter_mut().enumerate() {
            let c = state.c(k / n, k % n);
            if c < *prev {
                c_monotone = false;
            }
            *prev = c;
        }
        let u = track_u(&state, &mut max_abs_u);
        if step % config.log_every == 0 {
            recorder.record(step as f64 * config.step_size, &loop_, &state, u);
        }
    }

    let mut traj = recorder.traj;
    traj.c_snapshot = DMatrix::from_fn(n, n, |i, j| state.c(i, j));

    let (converged, t_converge) = if scenario.nash.is_some() {
        detect_convergence(&traj.times, &traj.err, config.conv_tol, config.conv_window)
    } else {
        (false, None)
    };
    let bound_violated = max_abs_u.iter().zip(&bounds).any(|(u, b)| match b {
        Some(b) => {
            let b = b.to_f64_lossy();
            *u > b + BOUND_SLACK * (1.0 + b)
        }
        None => false,
    });
    let c_final: Vec<f64> = traj.c_snapshot.iter().map(|c| c.to_f64_lossy()).collect();
    let c_final_range = (
        c_final.iter().copied().fold(f64::INFINITY, f64::min),
        c_final.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    let c_trailing_drift = trailing_drift(&traj, config.t_end);
    let final_y = state_outputs(&loop_, &state);
    let final_err = match &scenario.nash {
        Some(ys) => final_y
            .iter()
            .zip(ys.iter())
            .map(|(a, b)| (a - b.to_f64_lossy()).abs())
            .fold(0.0, f64::max),
        None => f64::NAN,
    };
    let summary = Summary {
        converged,
        t_converge,
        final_err,
        max_abs_u,
        certified_bounds: bounds.iter().map(|b| b.map(|v| v.to_f64_lossy())).collect(),
        bound_violated,
        c_final_range,
        c_monotone,
        c_trailing_drift,
        lemma1_entry_time: lemma1_entry(&traj.times, &traj.xbar_tail_max),
        final_tilde_norm: traj.tilde_norm.last().copied().unwrap_or(f64::NAN),
        final_z_residual: traj.z_residual.last().copied().unwrap_or(f64::NAN),
        final_y,
        steps,
    };
    Ok((traj, summary))
}

fn state_outputs<T: Scalar, G: GameModel<T> + ?Sized>(
    loop_: &ClosedLoop<'_, T, G>,
    state: &SeekerState<T>,
) -> Vec<f64> {
    loop_
        .outputs(state)
        .iter()
        .map(|v| v.to_f64_lossy())
        .collect()
}

/// `max_ij |c_ij(t_end) - c_ij(t)|` for the latest logged `t <= 0.9 t_end`.
fn trailing_drift<T: Scalar>(traj: &Trajectory<T>, t_end: f64) -> f64 {
    let cutoff = 0.9 * t_end + 1e-9;
    let Some(k) = traj.times.iter().rposition(|t| *t <= cutoff) else {
        return f64::NAN;
    };
    (&traj.c_snapshot - &traj.c_log[k]).amax().to_f64_lossy()
}
