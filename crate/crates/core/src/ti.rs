//! Time-invariant special case: constant `H`, output injection gain `M` and
//! the eigenvalue-union property of the closed loop.

use alloc::vec::Vec;

use nalgebra::{Complex, DMatrix};

use crate::linalg::{expect_shape, multiset_distance, pseudo_inverse, sort_complex, spectral_abscissa};
use crate::{linalg, Error, Result};

/// Tolerance on `‖HB − I‖` under which the block-triangular structure applies.
pub const HB_IDENTITY_TOL: f64 = 1e-8;

/// Constant plant `(A, B, C)` with a nominal gain `K` making `A − BK` Hurwitz.
#[derive(Debug, Clone, PartialEq)]
pub struct TiPlant {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub k: DMatrix<f64>,
}

impl TiPlant {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, k: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        expect_shape("A", &a, n, n)?;
        let l = b.ncols();
        expect_shape("B", &b, n, l)?;
        let m = c.nrows();
        expect_shape("C", &c, m, n)?;
        expect_shape("K", &k, l, n)?;
        let plant = Self { a, b, c, k };
        let abscissa = spectral_abscissa(&plant.nominal());
        if !(abscissa < 0.0) {
            return Err(Error::NotHurwitz(abscissa));
        }
        Ok(plant)
    }

    /// `A − BK`.
    pub fn nominal(&self) -> DMatrix<f64> {
        &self.a - &self.b * &self.k
    }

    fn nominal_inverse(&self) -> Result<DMatrix<f64>> {
        self.nominal()
            .try_inverse()
            .ok_or(Error::Singular("A - BK"))
    }

    /// dc-gain `C (A − BK)⁻¹ B`.
    pub fn dc_gain(&self) -> Result<DMatrix<f64>> {
        Ok(&self.c * self.nominal_inverse()? * &self.b)
    }
}

/// `M = [C (A − BK)⁻¹ B]⁺`, requiring full column rank `l`.
pub fn compute_m_ti(p: &TiPlant) -> Result<DMatrix<f64>> {
    let dc = p.dc_gain()?;
    let (pinv, rank) = pseudo_inverse(&dc);
    let required = p.b.ncols();
    if rank < required {
        return Err(Error::SingularDcGain { rank, required });
    }
    Ok(pinv)
}

/// `H = M C (A − BK)⁻¹`.
pub fn compute_h_ti(p: &TiPlant, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    expect_shape("M", m, p.b.ncols(), p.c.nrows())?;
    Ok(m * &p.c * p.nominal_inverse()?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopEigs {
    /// Spectrum of the assembled closed-loop matrix, sorted by `(re, im)`.
    pub computed: Vec<Complex<f64>>,
    /// `eig(A − BK) ∪ eig(−Kᵢ)`, sorted by `(re, im)`.
    pub expected: Vec<Complex<f64>>,
    /// Optimal-matching distance between the two multisets.
    pub distance: f64,
    /// `‖HB − I‖` (Frobenius).
    pub hb_error: f64,
}

impl ClosedLoopEigs {
    /// Whether the block-triangular precondition `HB = I` held.
    pub fn precondition_holds(&self) -> bool {
        self.hb_error <= HB_IDENTITY_TOL
    }
}

/// Closed-loop matrix in `(x, z)` coordinates with `G = H(A − BK)`:
///
/// ```text
/// [ A − BK              B       ]
/// [ Kᵢ(G − H(A − BK))   −Kᵢ H B ]
/// ```
pub fn closed_loop_matrix(p: &TiPlant, ki: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, l) = p.b.shape();
    expect_shape("Ki", ki, l, l)?;
    expect_shape("H", h, l, n)?;
    let nominal = p.nominal();
    let g = h * &nominal;
    let mut out = DMatrix::zeros(n + l, n + l);
    out.view_mut((0, 0), (n, n)).copy_from(&nominal);
    out.view_mut((0, n), (n, l)).copy_from(&p.b);
    out.view_mut((n, 0), (l, n)).copy_from(&(ki * (&g - h * &nominal)));
    out.view_mut((n, n), (l, l)).copy_from(&(-(ki * h * &p.b)));
    Ok(out)
}

/// Closed-loop matrix in the original `(x, v)` coordinates:
///
/// ```text
/// [ A − BK − B Kᵢ H   B Kᵢ ]
/// [ H(A − BK)          0   ]
/// ```
pub fn closed_loop_matrix_xv(p: &TiPlant, ki: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, l) = p.b.shape();
    expect_shape("Ki", ki, l, l)?;
    expect_shape("H", h, l, n)?;
    let nominal = p.nominal();
    let mut out = DMatrix::zeros(n + l, n + l);
    out.view_mut((0, 0), (n, n)).copy_from(&(&nominal - &p.b * ki * h));
    out.view_mut((0, n), (n, l)).copy_from(&(&p.b * ki));
    out.view_mut((n, 0), (l, n)).copy_from(&(h * &nominal));
    Ok(out)
}

/// Eigenvalues of the closed loop next to `eig(A − BK) ∪ eig(−Kᵢ)`.
///
/// When `HB` differs from `I` by more than [`HB_IDENTITY_TOL`] the union need
/// not hold; a warning is logged and the comparison is still reported.
pub fn closed_loop_eigs(p: &TiPlant, ki: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<ClosedLoopEigs> {
    let l = p.b.ncols();
    let hb_error = (h * &p.b - DMatrix::<f64>::identity(l, l)).norm();
    if hb_error > HB_IDENTITY_TOL {
        log::warn!("HB deviates from identity by {hb_error:e}; eigenvalue union is not guaranteed");
    }
    let mut computed = linalg::complex_eigenvalues(&closed_loop_matrix(p, ki, h)?);
    let mut expected = linalg::complex_eigenvalues(&p.nominal());
    expected.extend(linalg::complex_eigenvalues(&(-ki)));
    sort_complex(&mut computed);
    sort_complex(&mut expected);
    let distance = multiset_distance(&computed, &expected);
    Ok(ClosedLoopEigs {
        computed,
        expected,
        distance,
        hb_error,
    })
}
