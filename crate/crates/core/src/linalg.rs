//! Small dense linear-algebra helpers shared by the certification and
//! embedding code.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Symmetric eigendecomposition with eigenvalues sorted ascending.
#[derive(Debug, Clone)]
pub struct SortedEigen {
    pub values: DVector<f64>,
    /// Columns are unit eigenvectors, in the order of `values`.
    pub vectors: DMatrix<f64>,
}

impl SortedEigen {
    pub fn min(&self) -> f64 {
        if self.values.is_empty() {
            0.0
        } else {
            self.values[0]
        }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest eigenvalue in absolute value, the spectral norm of a symmetric matrix.
    pub fn scale(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
    }

    /// Number of eigenvalues above `rel_tol * scale`.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let cut = rel_tol * self.scale();
        self.values.iter().filter(|&&v| v > cut).count()
    }
}

pub fn sym_eigen(m: &DMatrix<f64>) -> SortedEigen {
    let n = m.nrows();
    if n == 0 {
        return SortedEigen {
            values: DVector::zeros(0),
            vectors: DMatrix::zeros(0, 0),
        };
    }
    // symmetrize to remove round-off asymmetry before the solver sees it
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }
    SortedEigen { values, vectors }
}

/// Max |m_ij - m_ji| relative to the largest entry.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = m.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst / scale
}

/// Centering projector `I - 11ᵀ/n`.
pub fn centering(n: usize) -> DMatrix<f64> {
    let mut p = DMatrix::from_element(n, n, -1.0 / n as f64);
    for i in 0..n {
        p[(i, i)] += 1.0;
    }
    p
}

/// Product of Euclidean row norms, the Hadamard bound on |det m|.
pub fn hadamard_bound(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.norm()).product()
}

/// Least-squares slope through the origin of `ys` against `xs`.
pub fn slope_through_origin(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    Some(sxy / sxx)
}

/// `log(exp(a_1) + ... + exp(a_k))` without overflow. Empty input gives `-inf`.
pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m.is_infinite() {
        return m;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}
