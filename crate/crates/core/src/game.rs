//! Games, pseudo-gradients and Nash equilibrium oracles.
//!
//! Player indices are zero-based throughout the crate.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Assumption, Error, Result};
use crate::scalar::Scalar;

/// Condition number above which a Jacobian is treated as singular.
pub const SINGULAR_CONDITION: f64 = 1e12;

/// Evaluation interface for a game given by each player's partial gradient
/// of its own cost, `grad_i f_i(y) = d f_i(y) / d y_i`.
pub trait GameModel<T: Scalar> {
    fn n_players(&self) -> usize;

    /// Partial gradient of player `i`'s cost with respect to its own action.
    fn gradient(&self, i: usize, y: &[T]) -> Result<T>;

    /// Stacked partial gradients `[grad_i f_i(y)]_vec`.
    fn pseudo_gradient(&self, y: &[T]) -> Result<DVector<T>> {
        check_len(y.len(), self.n_players())?;
        let mut out = DVector::zeros(self.n_players());
        for i in 0..self.n_players() {
            out[i] = self.gradient(i, y)?;
        }
        Ok(out)
    }
}

fn check_len(got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::Dimension(format!(
            "action profile has length {got}, game has {want} players"
        )));
    }
    Ok(())
}

/// Quadratic game with constant game Jacobian `R` and offset `r`, so that
/// `grad_i f_i(y) = (R y + r)_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticGame<T: Scalar> {
    jacobian: DMatrix<T>,
    offset: DVector<T>,
}

impl<T: Scalar> QuadraticGame<T> {
    pub fn new(jacobian: DMatrix<T>, offset: DVector<T>) -> Result<Self> {
        let n = jacobian.nrows();
        if n == 0 || jacobian.ncols() != n {
            return Err(Error::Dimension(format!(
                "game Jacobian must be square and non-empty, got {}x{}",
                jacobian.nrows(),
                jacobian.ncols()
            )));
        }
        if offset.len() != n {
            return Err(Error::Dimension(format!(
                "offset has length {}, Jacobian is {n}x{n}",
                offset.len()
            )));
        }
        if !jacobian
            .iter()
            .chain(offset.iter())
            .all(|v| v.is_finite_value())
        {
            return Err(Error::InvalidParameter(
                "game coefficients must be finite".into(),
            ));
        }
        Ok(Self { jacobian, offset })
    }

    pub fn jacobian(&self) -> &DMatrix<T> {
        &self.jacobian
    }

    pub fn offset(&self) -> &DVector<T> {
        &self.offset
    }

    /// Computes the monotonicity constant and per-player Lipschitz constants.
    ///
    /// `omega` is the smallest eigenvalue of the symmetric part of `R`;
    /// `lipschitz[i]` is the Euclidean norm of row `i`.
    pub fn check_assumptions(&self) -> AssumptionReport<T> {
        let sym = (&self.jacobian + self.jacobian.transpose()) * T::lit(0.5);
        let omega = SymmetricEigen::new(sym).eigenvalues.min();
        let lipschitz = DVector::from_iterator(
            self.n_players(),
            self.jacobian.row_iter().map(|row| row.norm()),
        );
        AssumptionReport { omega, lipschitz }
    }

    /// Unique Nash equilibrium, the root of `R y + r = 0`.
    pub fn solve_nash_closed_form(&self) -> Result<DVector<T>> {
        let condition = condition_number(&self.jacobian);
        if !(condition < SINGULAR_CONDITION) {
            return Err(Error::SingularJacobian { condition });
        }
        let rhs = -&self.offset;
        self.jacobian
            .clone()
            .lu()
            .solve(&rhs)
            .ok_or(Error::SingularJacobian { condition })
    }

    /// Gradient-play step `0.9 omega / L_max^2`, or `None` when the game is
    /// not strongly monotone.
    pub fn default_gradient_step(&self) -> Option<T> {
        let report = self.check_assumptions();
        let l_max = report.lipschitz.max();
        (report.is_strongly_monotone() && l_max > T::zero())
            .then(|| T::lit(0.9) * report.omega / (l_max * l_max))
    }
}

impl<T: Scalar> GameModel<T> for QuadraticGame<T> {
    fn n_players(&self) -> usize {
        self.offset.len()
    }

    fn gradient(&self, i: usize, y: &[T]) -> Result<T> {
        let n = self.n_players();
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, len: n });
        }
        check_len(y.len(), n)?;
        let mut acc = self.offset[i];
        for (j, yj) in y.iter().enumerate() {
            acc += self.jacobian[(i, j)] * *yj;
        }
        Ok(acc)
    }
}

/// Constants certifying the Lipschitz and strong monotonicity assumptions.
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport<T: Scalar> {
    pub omega: T,
    pub lipschitz: DVector<T>,
}

impl<T: Scalar> AssumptionReport<T> {
    pub fn is_strongly_monotone(&self) -> bool {
        self.omega > T::zero()
    }

    /// Errors with a named violation when `omega <= 0`.
    pub fn require_strongly_monotone(&self) -> Result<()> {
        if self.is_strongly_monotone() {
            Ok(())
        } else {
            Err(Error::AssumptionViolated {
                assumption: Assumption::StrongMonotonicity,
                detail: format!(
                    "smallest eigenvalue of the symmetric part is {}",
                    self.omega
                ),
            })
        }
    }
}

/// Ratio of extreme singular values; infinite for a singular matrix.
pub fn condition_number<T: Scalar>(m: &DMatrix<T>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.max().to_f64_lossy();
    let min = sv.min().to_f64_lossy();
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Iterates `y <- y - step * F(y)` until `|F(y)|_inf <= tol`.
pub fn solve_nash_gradient_play<T: Scalar, G: GameModel<T> + ?Sized>(
    game: &G,
    y0: &DVector<T>,
    step: T,
    tol: T,
    max_iters: usize,
) -> Result<DVector<T>> {
    if !(step > T::zero()) || !(tol > T::zero()) {
        return Err(Error::InvalidParameter(
            "gradient play needs positive step and tolerance".into(),
        ));
    }
    let mut y = y0.clone();
    let mut residual = T::zero();
    for _ in 0..=max_iters {
        let g = game.pseudo_gradient(y.as_slice())?;
        residual = g.amax();
        if !residual.is_finite_value() {
            break;
        }
        if residual <= tol {
            return Ok(y);
        }
        y.axpy(-step, &g, T::one());
    }
    Err(Error::NotConverged {
        iterations: max_iters,
        residual: residual.to_f64_lossy(),
    })
}

/// Ring game on `n` players with costs
/// `f_i(y) = y_i^2 + y_i + (y_i - y_{i+1})^2` (indices cyclic), so that
/// `R = 4I - 2P` where `P` shifts `i -> i+1`, and `r = 1`.
pub fn ring_game<T: Scalar>(n: usize) -> Result<QuadraticGame<T>> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "ring game needs at least 2 players, got {n}"
        )));
    }
    let mut r = DMatrix::from_diagonal_element(n, n, T::lit(4.0));
    for i in 0..n {
        r[(i, (i + 1) % n)] += T::lit(-2.0);
    }
    QuadraticGame::new(r, DVector::from_element(n, T::one()))
}
