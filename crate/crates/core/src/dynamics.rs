//! Integrator-chain players, saturation and the canonical-form transformation.
//!
//! Player `i` is the chain `x_1' = x_2, ..., x_m' = u` with output `y = x_1`.
//! Setting `x = T xbar` puts it in the form `xbar' = Abar xbar + Bbar u`
//! where `Bbar` is the all-ones vector and `Abar` is one of the two
//! strictly upper-triangular patterns in [`CanonicalForm`].
//!
//! Everything here is generic over [`Field`] so the construction can be
//! checked in exact rational arithmetic as well as in floating point.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{max_abs, powi, Field};

/// Condition estimate above which the floating-point transformation is
/// rejected.
pub const TRANSFORM_CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CanonicalForm {
    /// Entry `(k, l) = theta^(m - l)` above the diagonal (zero-based `l`).
    #[default]
    Standard,
    /// Every entry above the diagonal equals `theta`.
    Alternate,
}

/// `sign(value) * min(|value|, delta)`.
#[inline]
pub fn saturation<F: Field>(value: F, delta: &F) -> F {
    if value > *delta {
        delta.clone()
    } else if value < -delta.clone() {
        -delta.clone()
    } else {
        value
    }
}

pub fn abar_matrix<F: Field>(m: usize, theta: &F) -> DMatrix<F> {
    DMatrix::from_fn(
        m,
        m,
        |k, l| if l > k { powi(theta, m - l) } else { F::zero() },
    )
}

pub fn ahat_matrix<F: Field>(m: usize, theta: &F) -> DMatrix<F> {
    DMatrix::from_fn(m, m, |k, l| if l > k { theta.clone() } else { F::zero() })
}

pub fn canonical_matrix<F: Field>(form: CanonicalForm, m: usize, theta: &F) -> DMatrix<F> {
    match form {
        CanonicalForm::Standard => abar_matrix(m, theta),
        CanonicalForm::Alternate => ahat_matrix(m, theta),
    }
}

/// Integrator chain `(A, B)`: ones on the superdiagonal, `B = e_m`.
pub fn integrator_chain<F: Field>(m: usize) -> (DMatrix<F>, DVector<F>) {
    let a = DMatrix::from_fn(m, m, |k, l| if l == k + 1 { F::one() } else { F::zero() });
    let mut b = DVector::zeros(m);
    if m > 0 {
        b[m - 1] = F::one();
    }
    (a, b)
}

/// Columns `[b, A b, ..., A^(m-1) b]`.
pub fn controllability_matrix<F: Field>(a: &DMatrix<F>, b: &DVector<F>) -> Result<DMatrix<F>> {
    let m = a.nrows();
    if a.ncols() != m || b.len() != m {
        return Err(Error::Dimension(format!(
            "controllability matrix needs square A and matching B, got {}x{} and {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    let mut out = DMatrix::zeros(m, m);
    let mut col = b.clone();
    for k in 0..m {
        out.set_column(k, &col);
        if k + 1 < m {
            col = a * &col;
        }
    }
    Ok(out)
}

/// Solves `a X = rhs` by Gaussian elimination with partial pivoting.
/// Returns `None` for an exactly singular pivot.
pub fn lu_solve<F: Field>(a: &DMatrix<F>, rhs: &DMatrix<F>) -> Option<DMatrix<F>> {
    let n = a.nrows();
    let mut a = a.clone();
    let mut x = rhs.clone();
    for col in 0..n {
        let pivot = (col..n).max_by(|&p, &q| {
            a[(p, col)]
                .abs_val()
                .partial_cmp(&a[(q, col)].abs_val())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if a[(pivot, col)].is_zero() {
            return None;
        }
        a.swap_rows(col, pivot);
        x.swap_rows(col, pivot);
        for row in col + 1..n {
            let factor = a[(row, col)].clone() / a[(col, col)].clone();
            if factor.is_zero() {
                continue;
            }
            for k in col..n {
                let v = factor.clone() * a[(col, k)].clone();
                a[(row, k)] -= v;
            }
            for k in 0..x.ncols() {
                let v = factor.clone() * x[(col, k)].clone();
                x[(row, k)] -= v;
            }
        }
    }
    for col in (0..n).rev() {
        for k in 0..x.ncols() {
            let mut acc = x[(col, k)].clone();
            for j in col + 1..n {
                acc -= a[(col, j)].clone() * x[(j, k)].clone();
            }
            x[(col, k)] = acc / a[(col, col)].clone();
        }
    }
    Some(x)
}

fn inf_norm<F: Field>(m: &DMatrix<F>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs_val().to_f64_lossy()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Per-player design parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayerSpec<F: Field> {
    pub order: usize,
    pub theta: F,
    pub delta: F,
    pub u_limit: F,
    pub form: CanonicalForm,
    /// Set when `theta` in `[1/2, 1)` was explicitly allowed.
    pub large_theta: bool,
}

impl<F: Field> PlayerSpec<F> {
    /// Validates `order >= 1`, `theta` in `(0, 1/2)`, `delta > 0` and
    /// `u_limit > 0`. With `allow_large_theta` the range widens to `(0, 1)`.
    pub fn new(
        order: usize,
        theta: F,
        delta: F,
        u_limit: F,
        form: CanonicalForm,
        allow_large_theta: bool,
    ) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidParameter(
                "player order must be at least 1".into(),
            ));
        }
        let half = F::ratio(1, 2);
        if !(theta > F::zero() && theta < F::one()) {
            return Err(Error::InvalidParameter(format!(
                "theta = {theta} must lie in (0, 1)"
            )));
        }
        let large_theta = theta >= half;
        if large_theta && !allow_large_theta {
            return Err(Error::InvalidParameter(format!(
                "theta = {theta} outside (0, 1/2) required by Lemma 1; pass the large-theta override to allow it"
            )));
        }
        if !(delta > F::zero()) {
            return Err(Error::InvalidParameter(format!(
                "delta = {delta} must be positive"
            )));
        }
        if !(u_limit > F::zero()) {
            return Err(Error::InvalidParameter(format!(
                "u_limit = {u_limit} must be positive"
            )));
        }
        Ok(Self {
            order,
            theta,
            delta,
            u_limit,
            form,
            large_theta,
        })
    }

    pub fn warnings(&self) -> Vec<String> {
        if self.large_theta {
            vec![format!(
                "theta = {} is outside (0, 1/2); convergence is not guaranteed",
                self.theta
            )]
        } else {
            Vec::new()
        }
    }
}

/// Similarity pair `x = T xbar` with `A T = T Abar` and `B = T Bbar`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transformation<F: Field> {
    pub form: CanonicalForm,
    pub theta: F,
    pub t_matrix: DMatrix<F>,
    pub t_inverse: DMatrix<F>,
    pub a_bar: DMatrix<F>,
    pub b_bar: DVector<F>,
}

impl<F: Field> Transformation<F> {
    pub fn order(&self) -> usize {
        self.b_bar.len()
    }

    /// Output map: `y = output_coefficients . xbar` (first row of `T`).
    pub fn output_coefficients(&self) -> DVector<F> {
        self.t_matrix.row(0).transpose()
    }

    /// `max |A T - T Abar|` and `max |B - T Bbar|`.
    pub fn similarity_residuals(&self) -> (F, F) {
        let (a, b) = integrator_chain::<F>(self.order());
        let lhs = &a * &self.t_matrix - &self.t_matrix * &self.a_bar;
        let rhs = DMatrix::from_column_slice(b.len(), 1, b.as_slice())
            - &self.t_matrix * DMatrix::from_column_slice(b.len(), 1, self.b_bar.as_slice());
        (max_abs(&lhs), max_abs(&rhs))
    }

    /// Transformed state for a state given in chain coordinates.
    pub fn to_canonical(&self, x: &DVector<F>) -> DVector<F> {
        &self.t_inverse * x
    }

    pub fn to_chain(&self, xbar: &DVector<F>) -> DVector<F> {
        &self.t_matrix * xbar
    }
}

/// Builds `T = R(A, B) R(Abar, Bbar)^-1` for the player's order and form.
pub fn build_transformation<F: Field>(spec: &PlayerSpec<F>) -> Result<Transformation<F>> {
    build_transformation_for(spec.order, &spec.theta, spec.form)
}

pub fn build_transformation_for<F: Field>(
    m: usize,
    theta: &F,
    form: CanonicalForm,
) -> Result<Transformation<F>> {
    if m == 0 {
        return Err(Error::InvalidParameter(
            "player order must be at least 1".into(),
        ));
    }
    let a_bar = canonical_matrix(form, m, theta);
    let b_bar = DVector::from_element(m, F::one());
    if m == 1 {
        let one = DMatrix::from_element(1, 1, F::one());
        return Ok(Transformation {
            form,
            theta: theta.clone(),
            t_matrix: one.clone(),
            t_inverse: one,
            a_bar,
            b_bar,
        });
    }
    let singular = |condition: f64| Error::SingularTransformation {
        order: m,
        theta: theta.to_f64_lossy(),
        condition,
    };
    let (a, b) = integrator_chain::<F>(m);
    let r_chain = controllability_matrix(&a, &b)?;
    let r_canon = controllability_matrix(&a_bar, &b_bar)?;
    let identity = DMatrix::identity(m, m);
    let r_canon_inv = lu_solve(&r_canon, &identity).ok_or_else(|| singular(f64::INFINITY))?;
    if !F::EXACT {
        let condition = inf_norm(&r_canon) * inf_norm(&r_canon_inv);
        if !(condition < TRANSFORM_CONDITION_LIMIT) {
            return Err(singular(condition));
        }
    }
    let r_chain_inv = lu_solve(&r_chain, &identity).ok_or_else(|| singular(f64::INFINITY))?;
    Ok(Transformation {
        form,
        theta: theta.clone(),
        t_matrix: &r_chain * &r_canon_inv,
        t_inverse: &r_canon * &r_chain_inv,
        a_bar,
        b_bar,
    })
}

/// Scale applied to the gradient integral inside the innermost saturation:
/// `prod_{k=1}^{m-1} theta^k` for the standard form, `theta^(m-1)` for the
/// alternate one. It is the reciprocal of the first output coefficient.
pub fn integral_gain<F: Field>(form: CanonicalForm, m: usize, theta: &F) -> F {
    match form {
        CanonicalForm::Standard => powi(theta, m * (m.saturating_sub(1)) / 2),
        CanonicalForm::Alternate => powi(theta, m.saturating_sub(1)),
    }
}

/// Certified supremum of `|u|` under the saturated standard-form law:
/// `sum_{k=1}^m theta^k delta`.
pub fn max_control_bound<F: Field>(m: usize, theta: &F, delta: &F) -> F {
    let mut sum = F::zero();
    let mut p = F::one();
    for _ in 0..m {
        p *= theta.clone();
        sum += p.clone();
    }
    sum * delta.clone()
}

/// Order-independent sufficient bound `theta / (1 - theta) * delta`.
pub fn geometric_control_bound<F: Field>(theta: &F, delta: &F) -> F {
    theta.clone() / (F::one() - theta.clone()) * delta.clone()
}

/// Largest `delta` whose certified bound is at most `margin * u_limit`.
pub fn delta_for_limit<F: Field>(m: usize, theta: &F, u_limit: &F, margin: &F) -> F {
    margin.clone() * u_limit.clone() / max_control_bound(m, theta, &F::one())
}
