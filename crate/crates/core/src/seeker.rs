//! Distributed seeking laws: bounded plant control plus the adaptive
//! consensus estimator.
//!
//! Player `i` keeps estimates `z_ij` (one per player `j`), adaptive gains
//! `c_ij`, and the gradient integral `eta_i = int_0^t grad_i f_i(z_i) dt`.
//! At steady state `z_ij = -eta_j` and `-eta = y*`, so player `i`'s estimate
//! of player `j`'s action is `-z_ij`.
//!
//! The consensus error
//!
//! ```text
//! xi_ij = sum_k a_ik (z_ij - z_kj) + a_ij (z_ij + eta_j)
//! ```
//!
//! drives `z_ij' = -(c_ij + xi_ij^2) xi_ij`, `c_ij' = xi_ij^2` on directed
//! graphs, or `z_ij' = -c_ij xi_ij`, `c_ij' = xi_ij^2` on undirected ones.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    build_transformation, integral_gain, saturation, CanonicalForm, PlayerSpec, Transformation,
};
use crate::error::{Error, Result};
use crate::game::GameModel;
use crate::graph::Digraph;
use crate::scalar::{powi, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeekerMode {
    /// Nested saturations on the standard canonical form, directed adaptive
    /// consensus. Second-order players are the `m = 2` case.
    SaturatedDirected,
    /// Scalar players with `u = -sat(x + eta)`.
    FirstOrder,
    /// Saturated plant law with the undirected adaptive estimator; needs a
    /// symmetric graph.
    UndirectedAdaptive,
    /// Linear plant law without saturation.
    Unsaturated,
    /// Nested saturations on the alternate canonical form.
    AlternateForm,
}

impl SeekerMode {
    pub const ALL: [SeekerMode; 5] = [
        SeekerMode::SaturatedDirected,
        SeekerMode::FirstOrder,
        SeekerMode::UndirectedAdaptive,
        SeekerMode::Unsaturated,
        SeekerMode::AlternateForm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SeekerMode::SaturatedDirected => "saturated_directed",
            SeekerMode::FirstOrder => "first_order",
            SeekerMode::UndirectedAdaptive => "undirected_adaptive",
            SeekerMode::Unsaturated => "unsaturated",
            SeekerMode::AlternateForm => "alternate_form",
        }
    }

    pub fn is_saturated(self) -> bool {
        self != SeekerMode::Unsaturated
    }

    /// Canonical form the player is driven in under this mode.
    pub fn effective_form(self, requested: CanonicalForm) -> CanonicalForm {
        match self {
            SeekerMode::AlternateForm => CanonicalForm::Alternate,
            _ => requested,
        }
    }
}

impl fmt::Display for SeekerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SeekerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SeekerMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode {s:?}")))
    }
}

/// Offsets of the flat closed-loop state
/// `[xbar_1 .. xbar_N | z row-major | c row-major | eta]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateLayout {
    orders: Vec<usize>,
    xbar_offsets: Vec<usize>,
    n: usize,
}

impl StateLayout {
    pub fn new(orders: &[usize]) -> Self {
        let mut xbar_offsets = Vec::with_capacity(orders.len() + 1);
        let mut acc = 0;
        for &m in orders {
            xbar_offsets.push(acc);
            acc += m;
        }
        xbar_offsets.push(acc);
        Self {
            orders: orders.to_vec(),
            xbar_offsets,
            n: orders.len(),
        }
    }

    pub fn n_players(&self) -> usize {
        self.n
    }

    pub fn orders(&self) -> &[usize] {
        &self.orders
    }

    fn plant_len(&self) -> usize {
        self.xbar_offsets[self.n]
    }

    pub fn xbar_range(&self, i: usize) -> std::ops::Range<usize> {
        self.xbar_offsets[i]..self.xbar_offsets[i + 1]
    }

    pub fn z_index(&self, i: usize, j: usize) -> usize {
        self.plant_len() + i * self.n + j
    }

    pub fn c_index(&self, i: usize, j: usize) -> usize {
        self.plant_len() + self.n * self.n + i * self.n + j
    }

    pub fn eta_index(&self, i: usize) -> usize {
        self.plant_len() + 2 * self.n * self.n + i
    }

    /// `sum m_i + 2 N^2 + N`.
    pub fn len(&self) -> usize {
        self.plant_len() + 2 * self.n * self.n + self.n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Full closed-loop state stored in the flat layout of [`StateLayout`].
#[derive(Debug, Clone, PartialEq)]
pub struct SeekerState<T: Scalar> {
    layout: StateLayout,
    data: Vec<T>,
}

impl<T: Scalar> SeekerState<T> {
    pub fn zeros(layout: StateLayout) -> Self {
        let data = vec![T::zero(); layout.len()];
        Self { layout, data }
    }

    /// Packs the components; fails on any size mismatch.
    pub fn from_parts(
        xbar: &[DVector<T>],
        z: &DMatrix<T>,
        c: &DMatrix<T>,
        eta: &DVector<T>,
    ) -> Result<Self> {
        let n = xbar.len();
        if z.shape() != (n, n) || c.shape() != (n, n) || eta.len() != n {
            return Err(Error::Dimension(format!(
                "state for {n} players needs {n}x{n} z and c and {n} eta, got z {:?}, c {:?}, eta {}",
                z.shape(),
                c.shape(),
                eta.len()
            )));
        }
        let orders: Vec<usize> = xbar.iter().map(|x| x.len()).collect();
        let mut state = Self::zeros(StateLayout::new(&orders));
        for (i, x) in xbar.iter().enumerate() {
            let r = state.layout.xbar_range(i);
            state.data[r].copy_from_slice(x.as_slice());
        }
        for i in 0..n {
            for j in 0..n {
                let (zi, ci) = (state.layout.z_index(i, j), state.layout.c_index(i, j));
                state.data[zi] = z[(i, j)];
                state.data[ci] = c[(i, j)];
            }
            let ei = state.layout.eta_index(i);
            state.data[ei] = eta[i];
        }
        Ok(state)
    }

    /// Wraps a flat vector; its length must match the layout.
    pub fn from_flat(layout: StateLayout, data: Vec<T>) -> Result<Self> {
        if data.len() != layout.len() {
            return Err(Error::Dimension(format!(
                "flat state has length {}, layout expects {}",
                data.len(),
                layout.len()
            )));
        }
        Ok(Self { layout, data })
    }

    pub fn to_parts(&self) -> (Vec<DVector<T>>, DMatrix<T>, DMatrix<T>, DVector<T>) {
        let n = self.n_players();
        let xbar = (0..n)
            .map(|i| DVector::from_column_slice(self.xbar(i)))
            .collect();
        let z = DMatrix::from_fn(n, n, |i, j| self.z(i, j));
        let c = DMatrix::from_fn(n, n, |i, j| self.c(i, j));
        let eta = DVector::from_fn(n, |i, _| self.eta(i));
        (xbar, z, c, eta)
    }

    pub fn layout(&self) -> &StateLayout {
        &self.layout
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_flat(self) -> Vec<T> {
        self.data
    }

    pub fn n_players(&self) -> usize {
        self.layout.n
    }

    pub fn xbar(&self, i: usize) -> &[T] {
        &self.data[self.layout.xbar_range(i)]
    }

    #[inline]
    pub fn z(&self, i: usize, j: usize) -> T {
        self.data[self.layout.z_index(i, j)]
    }

    /// Row `i` of `z`, i.e. player `i`'s estimate vector.
    pub fn z_row(&self, i: usize) -> &[T] {
        let start = self.layout.z_index(i, 0);
        &self.data[start..start + self.layout.n]
    }

    #[inline]
    pub fn c(&self, i: usize, j: usize) -> T {
        self.data[self.layout.c_index(i, j)]
    }

    #[inline]
    pub fn eta(&self, i: usize) -> T {
        self.data[self.layout.eta_index(i)]
    }

    pub fn set_z(&mut self, i: usize, j: usize, v: T) {
        let k = self.layout.z_index(i, j);
        self.data[k] = v;
    }

    pub fn set_c(&mut self, i: usize, j: usize, v: T) {
        let k = self.layout.c_index(i, j);
        self.data[k] = v;
    }

    pub fn set_eta(&mut self, i: usize, v: T) {
        let k = self.layout.eta_index(i);
        self.data[k] = v;
    }

    pub fn xbar_mut(&mut self, i: usize) -> &mut [T] {
        let r = self.layout.xbar_range(i);
        &mut self.data[r]
    }
}

/// A player's law, resolved once per run from its spec and the mode.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayerLaw<T: Scalar> {
    pub spec: PlayerSpec<T>,
    pub transformation: Transformation<T>,
    /// `weights[k - 1]` multiplies the `k`-th saturation term; the last
    /// entry multiplies the innermost term carrying the integral.
    pub weights: Vec<T>,
    /// Scale applied to `eta_i` inside the innermost term.
    pub integral_gain: T,
    pub saturated: bool,
}

impl<T: Scalar> PlayerLaw<T> {
    pub fn new(spec: &PlayerSpec<T>, mode: SeekerMode, player: usize) -> Result<Self> {
        let m = spec.order;
        if mode == SeekerMode::FirstOrder && m != 1 {
            return Err(Error::ModeMismatch {
                mode: mode.to_string(),
                player,
                order: m,
            });
        }
        let form = mode.effective_form(spec.form);
        let mut resolved = spec.clone();
        resolved.form = form;
        let transformation = build_transformation(&resolved)?;
        let theta = spec.theta;
        let weights = match (mode, form) {
            (SeekerMode::FirstOrder, _) => vec![T::one()],
            (_, CanonicalForm::Standard) => (1..=m).map(|k| powi(&theta, k)).collect(),
            (_, CanonicalForm::Alternate) => vec![theta; m],
        };
        Ok(Self {
            spec: resolved,
            transformation,
            weights,
            integral_gain: integral_gain(form, m, &theta),
            saturated: mode.is_saturated(),
        })
    }

    pub fn order(&self) -> usize {
        self.spec.order
    }

    /// Supremum of `|u|` guaranteed by construction; `None` without
    /// saturation.
    pub fn certified_bound(&self) -> Option<T> {
        self.saturated
            .then(|| self.weights.iter().fold(T::zero(), |acc, w| acc + *w) * self.spec.delta)
    }

    #[inline]
    fn shape(&self, v: T) -> T {
        if self.saturated {
            saturation(v, &self.spec.delta)
        } else {
            v
        }
    }

    /// `xbar_1 + gain * eta`.
    #[inline]
    pub fn tilde_x1(&self, xbar: &[T], eta: T) -> T {
        xbar[0] + self.integral_gain * eta
    }

    /// Plant input from the player's own transformed state and integral.
    pub fn control(&self, xbar: &[T], eta: T) -> T {
        let m = self.order();
        let mut u = T::zero();
        for k in 1..m {
            u -= self.weights[k - 1] * self.shape(xbar[m - k]);
        }
        u - self.weights[m - 1] * self.shape(self.tilde_x1(xbar, eta))
    }

    /// Output `y = first row of T . xbar`.
    pub fn output(&self, xbar: &[T]) -> T {
        let t = &self.transformation.t_matrix;
        xbar.iter()
            .enumerate()
            .fold(T::zero(), |acc, (k, v)| acc + t[(0, k)] * *v)
    }

    /// Accumulates `Abar xbar + Bbar u` into `out`.
    fn plant_rhs(&self, xbar: &[T], u: T, out: &mut [T]) {
        let a = &self.transformation.a_bar;
        let m = self.order();
        for k in 0..m {
            let mut acc = u;
            for l in k + 1..m {
                acc += a[(k, l)] * xbar[l];
            }
            out[k] = acc;
        }
    }
}

/// Consensus error `xi_ij`. Reads `z_ij`, `z_kj` and `eta_k` only for
/// in-neighbours `k` of `i` (with `j` counted when `a_ij > 0`).
#[inline]
pub fn xi<T: Scalar>(i: usize, j: usize, state: &SeekerState<T>, g: &Digraph<T>) -> T {
    let z_ij = state.z(i, j);
    let mut acc = T::zero();
    for k in 0..g.n() {
        let a = g.weight(i, k);
        if a > T::zero() {
            acc += a * (z_ij - state.z(k, j));
        }
    }
    let a_ij = g.weight(i, j);
    if a_ij > T::zero() {
        acc += a_ij * (z_ij + state.eta(j));
    }
    acc
}

/// Time derivatives of the estimator variables.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusRates<T: Scalar> {
    pub z_dot: DMatrix<T>,
    pub c_dot: DMatrix<T>,
    pub eta_dot: DVector<T>,
}

/// `(z_ij', c_ij')` for one entry.
#[inline]
fn estimator_rates<T: Scalar>(mode: SeekerMode, xi: T, c: T) -> (T, T) {
    let rho = xi * xi;
    match mode {
        SeekerMode::UndirectedAdaptive => (-c * xi, rho),
        _ => (-(c + rho) * xi, rho),
    }
}

fn check_gain<T: Scalar>(i: usize, j: usize, c: T) -> Result<()> {
    if c > T::zero() {
        Ok(())
    } else {
        Err(Error::NonPositiveGain {
            i,
            j,
            value: c.to_f64_lossy(),
        })
    }
}

pub fn consensus_rhs<T: Scalar, G: GameModel<T> + ?Sized>(
    state: &SeekerState<T>,
    g: &Digraph<T>,
    game: &G,
    mode: SeekerMode,
) -> Result<ConsensusRates<T>> {
    let n = state.n_players();
    if g.n() != n || game.n_players() != n {
        return Err(Error::Dimension(format!(
            "state has {n} players, graph {} and game {}",
            g.n(),
            game.n_players()
        )));
    }
    let mut z_dot = DMatrix::zeros(n, n);
    let mut c_dot = DMatrix::zeros(n, n);
    let mut eta_dot = DVector::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let c = state.c(i, j);
            check_gain(i, j, c)?;
            let (zd, cd) = estimator_rates(mode, xi(i, j, state, g), c);
            z_dot[(i, j)] = zd;
            c_dot[(i, j)] = cd;
        }
        eta_dot[i] = game.gradient(i, state.z_row(i))?;
    }
    Ok(ConsensusRates {
        z_dot,
        c_dot,
        eta_dot,
    })
}

/// Control of player `i` under `law`.
pub fn control<T: Scalar>(i: usize, state: &SeekerState<T>, law: &PlayerLaw<T>) -> T {
    law.control(state.xbar(i), state.eta(i))
}

/// `xbar_i1 + gain * eta_i`, whose vanishing ties the plant to the estimate.
pub fn tilde_x1<T: Scalar>(i: usize, state: &SeekerState<T>, law: &PlayerLaw<T>) -> T {
    law.tilde_x1(state.xbar(i), state.eta(i))
}

/// The coupled plant/estimator system for one run.
pub struct ClosedLoop<'a, T: Scalar, G: GameModel<T> + ?Sized> {
    pub game: &'a G,
    pub graph: &'a Digraph<T>,
    pub laws: Vec<PlayerLaw<T>>,
    pub mode: SeekerMode,
    pub layout: StateLayout,
}

impl<'a, T: Scalar, G: GameModel<T> + ?Sized> ClosedLoop<'a, T, G> {
    pub fn new(
        game: &'a G,
        graph: &'a Digraph<T>,
        specs: &[PlayerSpec<T>],
        mode: SeekerMode,
    ) -> Result<Self> {
        let n = specs.len();
        if graph.n() != n || game.n_players() != n {
            return Err(Error::Dimension(format!(
                "{n} player specs, graph has {} nodes, game has {} players",
                graph.n(),
                game.n_players()
            )));
        }
        if mode == SeekerMode::UndirectedAdaptive && !graph.is_symmetric() {
            return Err(Error::InvalidParameter(
                "undirected adaptive mode requires a symmetric weight matrix".into(),
            ));
        }
        let laws = specs
            .iter()
            .enumerate()
            .map(|(i, s)| PlayerLaw::new(s, mode, i))
            .collect::<Result<Vec<_>>>()?;
        let layout = StateLayout::new(&specs.iter().map(|s| s.order).collect::<Vec<_>>());
        Ok(Self {
            game,
            graph,
            laws,
            mode,
            layout,
        })
    }

    /// Controls of all players.
    pub fn controls(&self, state: &SeekerState<T>) -> DVector<T> {
        DVector::from_fn(self.laws.len(), |i, _| control(i, state, &self.laws[i]))
    }

    pub fn outputs(&self, state: &SeekerState<T>) -> DVector<T> {
        DVector::from_fn(self.laws.len(), |i, _| self.laws[i].output(state.xbar(i)))
    }

    /// Writes the full state derivative into `out`.
    pub fn derivative(&self, state: &SeekerState<T>, out: &mut [T]) -> Result<()> {
        let n = self.layout.n_players();
        let layout = &self.layout;
        for (i, law) in self.laws.iter().enumerate() {
            let xbar = state.xbar(i);
            let u = law.control(xbar, state.eta(i));
            law.plant_rhs(xbar, u, &mut out[layout.xbar_range(i)]);
        }
        for i in 0..n {
            for j in 0..n {
                let c = state.c(i, j);
                check_gain(i, j, c)?;
                let (zd, cd) = estimator_rates(self.mode, xi(i, j, state, self.graph), c);
                out[layout.z_index(i, j)] = zd;
                out[layout.c_index(i, j)] = cd;
            }
            out[layout.eta_index(i)] = self.game.gradient(i, state.z_row(i))?;
        }
        Ok(())
    }
}
