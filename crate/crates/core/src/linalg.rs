//! Small dense linear-algebra helpers on top of `nalgebra`.

use alloc::vec::Vec;

use nalgebra::{Complex, DMatrix, SymmetricEigen, SVD};
use num_traits::Float;

use crate::{Error, Result};

/// Relative rank threshold used by the pseudo-inverse.
pub const RANK_RTOL: f64 = 1e-10;

/// `(m + mᵀ) / 2`.
pub fn symmetric_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut values: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    values.sort_by(f64::total_cmp);
    values
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn lambda_min(m: &DMatrix<f64>) -> f64 {
    symmetric_eigenvalues(m).first().copied().unwrap_or(0.0)
}

/// Largest eigenvalue of a symmetric matrix.
pub fn lambda_max(m: &DMatrix<f64>) -> f64 {
    symmetric_eigenvalues(m).last().copied().unwrap_or(0.0)
}

/// Induced 2-norm (largest singular value).
pub fn norm2(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    SVD::new(m.clone(), false, false).singular_values.max()
}

/// Frobenius-relative asymmetry `‖m − mᵀ‖ / ‖m‖` (zero for the zero matrix).
pub fn relative_asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = m.norm();
    if scale == 0.0 {
        return 0.0;
    }
    (m - m.transpose()).norm() / scale
}

/// Minimum-norm (Moore–Penrose) pseudo-inverse together with the numerical rank.
///
/// Singular values below `RANK_RTOL · σ_max` are treated as zero.
pub fn pseudo_inverse(m: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let (rows, cols) = m.shape();
    if m.is_empty() {
        return (DMatrix::zeros(cols, rows), 0);
    }
    let svd = SVD::new(m.clone(), true, true);
    let u = svd.u.as_ref().expect("left singular vectors requested");
    let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
    let sigma_max = svd.singular_values.max();
    let threshold = RANK_RTOL * sigma_max;
    let mut pinv = DMatrix::zeros(cols, rows);
    let mut rank = 0;
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > threshold && s > 0.0 {
            rank += 1;
            pinv += v_t.row(i).transpose() * u.column(i).transpose() * (1.0 / s);
        }
    }
    (pinv, rank)
}

/// Eigenvalues of a general real square matrix.
pub fn complex_eigenvalues(m: &DMatrix<f64>) -> Vec<Complex<f64>> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    m.complex_eigenvalues().iter().copied().collect()
}

/// Largest real part of the spectrum (spectral abscissa).
pub fn spectral_abscissa(m: &DMatrix<f64>) -> f64 {
    complex_eigenvalues(m)
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Sorts complex values lexicographically by `(re, im)`.
pub fn sort_complex(values: &mut [Complex<f64>]) {
    values.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

/// Distance between two multisets of complex numbers.
///
/// Pairs the values by a minimum-total-distance assignment and returns the
/// largest pairwise distance of that assignment. Multisets of different size
/// are infinitely far apart.
pub fn multiset_distance(a: &[Complex<f64>], b: &[Complex<f64>]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let n = a.len();
    if n == 0 {
        return 0.0;
    }
    let cost = DMatrix::from_fn(n, n, |i, j| {
        let d = a[i] - b[j];
        Float::hypot(d.re, d.im)
    });
    let assignment = min_cost_assignment(&cost);
    assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[(i, j)])
        .fold(0.0, f64::max)
}

/// Hungarian algorithm on a square cost matrix; returns `row -> column`.
fn min_cost_assignment(cost: &DMatrix<f64>) -> Vec<usize> {
    let n = cost.nrows();
    // 1-based potentials; column 0 is a virtual start column.
    let mut u = alloc::vec![0.0; n + 1];
    let mut v = alloc::vec![0.0; n + 1];
    let mut owner = alloc::vec![0usize; n + 1];
    let mut way = alloc::vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0;
        let mut min_v = alloc::vec![f64::INFINITY; n + 1];
        let mut used = alloc::vec![false; n + 1];
        loop {
            used[col0] = true;
            let i0 = owner[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if reduced < min_v[j] {
                    min_v[j] = reduced;
                    way[j] = col0;
                }
                if min_v[j] < delta {
                    delta = min_v[j];
                    col1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_v[j] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            owner[col0] = owner[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assignment = alloc::vec![0usize; n];
    for j in 1..=n {
        if owner[j] > 0 {
            assignment[owner[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Checks that `m` has the expected shape.
pub fn expect_shape(what: &'static str, m: &DMatrix<f64>, rows: usize, cols: usize) -> Result<()> {
    if m.shape() != (rows, cols) {
        return Err(Error::Shape {
            what,
            expected: (rows, cols),
            got: m.shape(),
        });
    }
    Ok(())
}

pub(crate) fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|x| x.is_finite())
}

pub(crate) fn sqrt(x: f64) -> f64 {
    Float::sqrt(x)
}
