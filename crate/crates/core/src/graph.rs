//! Weighted directed communication graphs.
//!
//! Weight convention: `a[(i, j)] > 0` means player `i` receives information
//! from player `j` (the arc `j -> i`).

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector, Schur};
use rand::Rng;

use crate::error::{Error, Result};
use crate::game::{condition_number, SINGULAR_CONDITION};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Digraph<T: Scalar> {
    weights: DMatrix<T>,
}

impl<T: Scalar> Digraph<T> {
    /// Validates `n >= 2`, finite non-negative weights and an empty diagonal.
    pub fn new(weights: DMatrix<T>) -> Result<Self> {
        let n = weights.nrows();
        if weights.ncols() != n {
            return Err(Error::Dimension(format!(
                "adjacency matrix must be square, got {}x{}",
                weights.nrows(),
                weights.ncols()
            )));
        }
        if n < 2 {
            return Err(Error::InvalidParameter(format!(
                "graph needs at least 2 nodes, got {n}"
            )));
        }
        for i in 0..n {
            for j in 0..n {
                let w = weights[(i, j)];
                if !w.is_finite_value() || w < T::zero() {
                    return Err(Error::InvalidParameter(format!(
                        "edge weight a[{i}][{j}] = {w} must be finite and non-negative"
                    )));
                }
            }
            if weights[(i, i)] != T::zero() {
                return Err(Error::InvalidParameter(format!(
                    "self-loop weight a[{i}][{i}] must be 0"
                )));
            }
        }
        Ok(Self { weights })
    }

    pub fn n(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<T> {
        &self.weights
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> T {
        self.weights[(i, j)]
    }

    /// In-neighbours of `i`: the players `i` receives from.
    pub fn in_neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n()).filter(move |&k| self.weights[(i, k)] > T::zero())
    }

    pub fn is_symmetric(&self) -> bool {
        self.weights == self.weights.transpose()
    }

    /// Undirected version with weights `a + a^T`.
    pub fn symmetrized(&self) -> Self {
        Self {
            weights: &self.weights + self.weights.transpose(),
        }
    }

    /// Forward and backward reachability from node 0 over arcs with positive
    /// weight.
    pub fn is_strongly_connected(&self) -> bool {
        let n = self.n();
        let sweep = |reversed: bool| {
            let mut seen = vec![false; n];
            let mut queue = VecDeque::from([0usize]);
            seen[0] = true;
            while let Some(v) = queue.pop_front() {
                for w in 0..n {
                    // arc v -> w exists iff a[w][v] > 0
                    let weight = if reversed {
                        self.weights[(v, w)]
                    } else {
                        self.weights[(w, v)]
                    };
                    if weight > T::zero() && !seen[w] {
                        seen[w] = true;
                        queue.push_back(w);
                    }
                }
            }
            seen.into_iter().all(|s| s)
        };
        sweep(false) && sweep(true)
    }

    /// Laplacian `L = D - A` and the estimation-error matrix
    /// `H = L (x) I_N + diag{a_11, a_12, ..., a_NN}`.
    pub fn laplacian(&self) -> LaplacianBundle<T> {
        let n = self.n();
        let degrees = DVector::from_iterator(n, self.weights.row_iter().map(|r| r.sum()));
        let laplacian = DMatrix::from_diagonal(&degrees) - &self.weights;
        let mut h_matrix = laplacian.kronecker(&DMatrix::<T>::identity(n, n));
        for i in 0..n {
            for j in 0..n {
                h_matrix[(i * n + j, i * n + j)] += self.weights[(i, j)];
            }
        }
        LaplacianBundle {
            laplacian,
            h_matrix,
        }
    }
}

/// Directed `n`-cycle where player `i` receives from player `i - 1`.
pub fn default_cycle<T: Scalar>(n: usize) -> Result<Digraph<T>> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "cycle needs at least 2 nodes, got {n}"
        )));
    }
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        a[(i, (i + n - 1) % n)] = T::one();
    }
    Digraph::new(a)
}

/// Random strongly connected digraph: a random Hamiltonian cycle plus each
/// remaining arc with probability `extra_arc_prob`. Weights are drawn from
/// `[0.5, 1.5]`.
pub fn random_strongly_connected<T: Scalar, R: Rng + ?Sized>(
    n: usize,
    extra_arc_prob: f64,
    rng: &mut R,
) -> Result<Digraph<T>> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "graph needs at least 2 nodes, got {n}"
        )));
    }
    loop {
        let mut order: Vec<usize> = (0..n).collect();
        for k in (1..n).rev() {
            order.swap(k, rng.gen_range(0..=k));
        }
        let mut a = DMatrix::<T>::zeros(n, n);
        for k in 0..n {
            let from = order[k];
            let to = order[(k + 1) % n];
            a[(to, from)] = T::lit(rng.gen_range(0.5..=1.5));
        }
        for i in 0..n {
            for j in 0..n {
                if i != j && a[(i, j)] == T::zero() && rng.gen_bool(extra_arc_prob) {
                    a[(i, j)] = T::lit(rng.gen_range(0.5..=1.5));
                }
            }
        }
        let g = Digraph::new(a)?;
        if g.is_strongly_connected() {
            return Ok(g);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianBundle<T: Scalar> {
    pub laplacian: DMatrix<T>,
    pub h_matrix: DMatrix<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HDiagnostic {
    /// Smallest real part over the eigenvalues of `H`.
    pub min_real_eig: f64,
    pub condition: f64,
    /// Condition estimate below `1e12`.
    pub nonsingular: bool,
}

impl<T: Scalar> LaplacianBundle<T> {
    /// Block `j` of `H` after grouping coordinates by estimated player:
    /// `L + diag{a_1j, ..., a_Nj}`.
    fn h_block(&self, j: usize) -> DMatrix<T> {
        let n = self.laplacian.nrows();
        DMatrix::from_fn(n, n, |i, k| self.h_matrix[(i * n + j, k * n + j)])
    }

    pub fn h_diagnostic(&self) -> Result<HDiagnostic> {
        let n = self.laplacian.nrows();
        let mut min_real_eig = f64::INFINITY;
        for j in 0..n {
            for re in eigen_real_parts(self.h_block(j))? {
                min_real_eig = min_real_eig.min(re);
            }
        }
        let condition = condition_number(&self.h_matrix);
        Ok(HDiagnostic {
            min_real_eig,
            condition,
            nonsingular: condition < SINGULAR_CONDITION,
        })
    }
}

/// Real parts of the eigenvalues of a general square matrix.
///
/// The unshifted Francis iteration can stall on permutation-like matrices,
/// so a failed attempt is retried on an orthogonally similar matrix.
fn eigen_real_parts<T: Scalar>(m: DMatrix<T>) -> Result<Vec<f64>> {
    let n = m.nrows();
    let schur = Schur::try_new(m.clone(), T::default_epsilon(), 10_000).or_else(|| {
        let mixer = DMatrix::from_fn(n, n, |i, k| {
            T::lit(((i * 7 + k * 13 + 3) % 17) as f64 - 8.0)
        });
        let q = mixer.qr().q();
        let similar = q.transpose() * m * &q;
        Schur::try_new(similar, T::default_epsilon(), 10_000)
    });
    let schur = schur.ok_or_else(|| Error::Eigen("Schur iteration did not converge".into()))?;
    schur
        .complex_eigenvalues()
        .iter()
        .map(|e| {
            let (re, im) = (e.re.to_f64_lossy(), e.im.to_f64_lossy());
            if re.is_finite() && im.is_finite() {
                Ok(re)
            } else {
                Err(Error::Eigen("non-finite eigenvalue of H".into()))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn reach_closure(a: &DMatrix<f64>) -> bool {
        let n = a.nrows();
        let mut r = vec![vec![false; n]; n];
        for i in 0..n {
            r[i][i] = true;
            for j in 0..n {
                if a[(j, i)] > 0.0 {
                    r[i][j] = true;
                }
            }
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if r[i][k] && r[k][j] {
                        r[i][j] = true;
                    }
                }
            }
        }
        r.iter().all(|row| row.iter().all(|&x| x))
    }

    #[test]
    fn connectivity_examples() {
        assert!(default_cycle::<f64>(6).unwrap().is_strongly_connected());
        let one_way = Digraph::new(dmatrix![0.0, 0.0; 1.0, 0.0]).unwrap();
        assert!(!one_way.is_strongly_connected());
        let complete = Digraph::new(DMatrix::from_fn(
            5,
            5,
            |i, j| if i == j { 0.0 } else { 1.0 },
        ))
        .unwrap();
        assert!(complete.is_strongly_connected());
    }

    #[test]
    fn agrees_with_transitive_closure() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..2000 {
            let n = rng.gen_range(2..=6);
            let a = DMatrix::from_fn(n, n, |i, j| {
                if i != j && rng.gen_bool(0.3) {
                    1.0
                } else {
                    0.0
                }
            });
            let g = Digraph::new(a.clone()).unwrap();
            assert_eq!(g.is_strongly_connected(), reach_closure(&a), "{a}");
        }
    }

    #[test]
    fn laplacian_examples() {
        let b = default_cycle::<f64>(3).unwrap().laplacian();
        assert_eq!(
            b.laplacian,
            dmatrix![1.0, 0.0, -1.0; -1.0, 1.0, 0.0; 0.0, -1.0, 1.0]
        );
        assert_eq!(b.h_matrix.nrows(), 9);

        let empty = Digraph::new(DMatrix::<f64>::zeros(3, 3))
            .unwrap()
            .laplacian();
        assert_eq!(empty.laplacian, DMatrix::zeros(3, 3));
        assert_eq!(empty.h_matrix, DMatrix::zeros(9, 9));
        assert!(!empty.h_diagnostic().unwrap().nonsingular);

        let pair = Digraph::new(dmatrix![0.0, 1.0; 1.0, 0.0])
            .unwrap()
            .laplacian();
        assert_eq!(pair.laplacian, dmatrix![1.0, -1.0; -1.0, 1.0]);
        assert_eq!(
            default_cycle::<f64>(2).unwrap().weights(),
            &dmatrix![0.0, 1.0; 1.0, 0.0]
        );
    }

    #[test]
    fn cycle_h_spectrum() {
        // Reference minima from a dense LAPACK eigensolve of L (x) I + A_0.
        for (n, expected) in [(3, 0.24512233375330722), (6, 0.11872853836643016)] {
            let d = default_cycle::<f64>(n)
                .unwrap()
                .laplacian()
                .h_diagnostic()
                .unwrap();
            assert!(
                (d.min_real_eig - expected).abs() < 1e-9,
                "n = {n}: {}",
                d.min_real_eig
            );
        }
    }

    #[test]
    fn h_matrix_layout() {
        // H = L (x) I_2 + diag{a11, a12, a21, a22}
        let b = Digraph::new(dmatrix![0.0, 2.0; 3.0, 0.0])
            .unwrap()
            .laplacian();
        let expected = dmatrix![
            2.0, 0.0, -2.0, 0.0;
            0.0, 4.0, 0.0, -2.0;
            -3.0, 0.0, 6.0, 0.0;
            0.0, -3.0, 0.0, 3.0
        ];
        assert_eq!(b.h_matrix, expected);
    }

    #[test]
    fn h_diagnostic_strongly_connected() {
        for n in [3, 6] {
            let d = default_cycle::<f64>(n)
                .unwrap()
                .laplacian()
                .h_diagnostic()
                .unwrap();
            assert!(d.nonsingular, "n = {n}");
            assert!(d.min_real_eig > 0.0, "n = {n}: {}", d.min_real_eig);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = rng.gen_range(2..=5);
            let g = random_strongly_connected::<f64, _>(n, 0.3, &mut rng).unwrap();
            assert!(g.laplacian().h_diagnostic().unwrap().nonsingular);
        }
    }

    #[test]
    fn random_graphs_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let n = rng.gen_range(2..=6);
            let g = random_strongly_connected::<f64, _>(n, 0.3, &mut rng).unwrap();
            assert!(g.is_strongly_connected());
            let l = g.laplacian().laplacian;
            for i in 0..n {
                assert_eq!(g.weight(i, i), 0.0);
                assert!(l.row(i).sum().abs() < 1e-14);
            }
        }
    }

    #[test]
    fn rejects_invalid_weights() {
        assert!(Digraph::new(dmatrix![1.0, 0.0; 1.0, 0.0]).is_err());
        assert!(Digraph::new(dmatrix![0.0, -1.0; 1.0, 0.0]).is_err());
        assert!(Digraph::new(dmatrix![0.0]).is_err());
        assert!(default_cycle::<f64>(1).is_err());
    }

    #[test]
    fn symmetrized_cycle() {
        let u = default_cycle::<f64>(6).unwrap().symmetrized();
        assert!(u.is_symmetric());
        assert_eq!(u.in_neighbors(0).collect::<Vec<_>>(), vec![1, 5]);
    }
}
