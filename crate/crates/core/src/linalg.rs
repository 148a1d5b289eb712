//! Dense kernels shared by the solvers.
//!
//! The pseudo-inverse of a basis matrix is applied through a thin singular
//! value decomposition. Singular values at or below `rank_tol * sigma_max`
//! are dropped, so rank-deficient matrices get the minimum-norm solution.
//! Neither `Φ†` nor `P⊥` is ever formed in the solver paths.

use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{check_len, Error, Result};

/// Relative singular-value cutoff used when none is configured.
pub const DEFAULT_RANK_TOL: f64 = 1e-12;

/// Relative residual a regularized normal-equation solve must reach to count as a success.
const NORMAL_SOLVE_TOL: f64 = 1e-10;

pub(crate) fn first_non_finite(m: &DMatrix<f64>) -> Option<(usize, usize)> {
    for col in 0..m.ncols() {
        for row in 0..m.nrows() {
            if !m[(row, col)].is_finite() {
                return Some((row, col));
            }
        }
    }
    None
}

pub(crate) fn ensure_finite_matrix(what: &'static str, m: &DMatrix<f64>) -> Result<()> {
    match first_non_finite(m) {
        Some((row, col)) => Err(Error::NonFinite { what, row, col }),
        None => Ok(()),
    }
}

pub(crate) fn ensure_finite_vector(what: &'static str, v: &DVector<f64>) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(row) => Err(Error::NonFinite { what, row, col: 0 }),
        None => Ok(()),
    }
}

/// Thin SVD of a basis matrix, truncated to its numerical rank.
#[derive(Debug, Clone)]
pub struct LeastSquaresFactorization {
    source: DMatrix<f64>,
    // m x r, r x r (diagonal), r x n
    u: DMatrix<f64>,
    sigma: DVector<f64>,
    v_t: DMatrix<f64>,
    rank_tol: f64,
}

impl LeastSquaresFactorization {
    pub fn nrows(&self) -> usize {
        self.source.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.source.ncols()
    }

    /// Number of singular values kept after truncation.
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn rank_tol(&self) -> f64 {
        self.rank_tol
    }

    pub fn is_rank_deficient(&self) -> bool {
        self.rank() < self.nrows().min(self.ncols())
    }

    pub fn source(&self) -> &DMatrix<f64> {
        &self.source
    }

    pub fn singular_values(&self) -> &DVector<f64> {
        &self.sigma
    }

    /// `Φ† y`, the minimum-norm minimizer of `‖y − Φc‖`.
    pub fn apply_pseudo_inverse(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("pseudo-inverse operand", self.nrows(), y.len())?;
        let mut t = self.u.tr_mul(y);
        t.component_div_assign(&self.sigma);
        Ok(self.v_t.tr_mul(&t))
    }

    /// `(Φ†)ᵀ w` for `w` in the coefficient space.
    pub fn apply_pseudo_inverse_transpose(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("transposed pseudo-inverse operand", self.ncols(), w.len())?;
        let mut t = &self.v_t * w;
        t.component_div_assign(&self.sigma);
        Ok(&self.u * t)
    }

    /// `ΦΦ† v`, the orthogonal projection onto the column space of `Φ`.
    pub fn apply_projector(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("projector operand", self.nrows(), v.len())?;
        Ok(&self.u * self.u.tr_mul(v))
    }

    /// `P⊥ v = v − ΦΦ† v`.
    ///
    /// `ΦΦ†` equals `U Uᵀ` for the retained singular vectors, which avoids
    /// the condition-number amplification of going through `Φ(Φ†v)`.
    pub fn apply_projector_complement(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(v - self.apply_projector(v)?)
    }

    /// Explicit `Φ†`. Only meant for diagnostics and small matrices.
    pub fn pseudo_inverse_matrix(&self) -> DMatrix<f64> {
        let mut scaled = self.v_t.transpose();
        for (j, s) in self.sigma.iter().enumerate() {
            scaled.column_mut(j).unscale_mut(*s);
        }
        scaled * self.u.transpose()
    }
}

/// Factorizes `phi` for repeated least-squares solves.
///
/// Singular values at or below `rank_tol` times the largest one are treated as zero.
pub fn factorize_least_squares(phi: &DMatrix<f64>, rank_tol: f64) -> Result<LeastSquaresFactorization> {
    if phi.nrows() == 0 || phi.ncols() == 0 {
        return Err(Error::InvalidInput(format!(
            "cannot factorize an empty {}x{} matrix",
            phi.nrows(),
            phi.ncols()
        )));
    }
    if !(rank_tol > 0.0) {
        return Err(Error::InvalidInput(format!(
            "rank tolerance must be positive, got {rank_tol}"
        )));
    }
    ensure_finite_matrix("basis matrix", phi)?;

    let svd = SVD::new(phi.clone(), true, true);
    let u_full = svd.u.expect("SVD computed with U");
    let v_t_full = svd.v_t.expect("SVD computed with Vᵀ");
    let sigma_full = svd.singular_values;
    let sigma_max = sigma_full.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = rank_tol * sigma_max;

    let keep: Vec<usize> = (0..sigma_full.len())
        .filter(|&i| sigma_max > 0.0 && sigma_full[i] > cutoff)
        .collect();
    let r = keep.len();
    let m = phi.nrows();
    let n = phi.ncols();
    let mut u = DMatrix::zeros(m, r);
    let mut v_t = DMatrix::zeros(r, n);
    let mut sigma = DVector::zeros(r);
    for (dst, &src) in keep.iter().enumerate() {
        u.set_column(dst, &u_full.column(src));
        v_t.set_row(dst, &v_t_full.row(src));
        sigma[dst] = sigma_full[src];
    }

    Ok(LeastSquaresFactorization {
        source: phi.clone(),
        u,
        sigma,
        v_t,
        rank_tol,
    })
}

/// Convenience wrapper matching the free-function form.
pub fn apply_pseudo_inverse(fac: &LeastSquaresFactorization, y: &DVector<f64>) -> Result<DVector<f64>> {
    fac.apply_pseudo_inverse(y)
}

pub fn apply_projector_complement(fac: &LeastSquaresFactorization, v: &DVector<f64>) -> Result<DVector<f64>> {
    fac.apply_projector_complement(v)
}

/// Outcome of a damped normal-equation solve.
#[derive(Debug, Clone, PartialEq)]
pub enum NormalStep {
    /// A direction with `dᵀg < 0`, or the zero step when `g = 0`.
    Descent(DVector<f64>),
    /// The system was not positive definite, too ill-conditioned to solve
    /// accurately, or produced a non-descent direction. Raise the damping.
    NeedsDamping,
}

/// Solves `(H + μI) d = −g` by Cholesky with one step of iterative refinement.
pub fn solve_regularized_normal(h: &DMatrix<f64>, g: &DVector<f64>, mu: f64) -> Result<NormalStep> {
    let k = g.len();
    check_len("normal matrix rows", k, h.nrows())?;
    check_len("normal matrix columns", k, h.ncols())?;
    if !(mu >= 0.0) {
        return Err(Error::InvalidInput(format!("damping must be non-negative, got {mu}")));
    }
    let g_norm = g.norm();
    if g_norm == 0.0 {
        return Ok(NormalStep::Descent(DVector::zeros(k)));
    }

    let mut a = h.clone();
    for i in 0..k {
        a[(i, i)] += mu;
    }
    if first_non_finite(&a).is_some() {
        return Ok(NormalStep::NeedsDamping);
    }
    let Some(chol) = a.clone().cholesky() else {
        return Ok(NormalStep::NeedsDamping);
    };
    let rhs = -g;
    let mut d = chol.solve(&rhs);
    let residual = &rhs - &a * &d;
    d += chol.solve(&residual);

    if d.iter().any(|x| !x.is_finite()) {
        return Ok(NormalStep::NeedsDamping);
    }
    let residual_norm = (&a * &d - &rhs).norm();
    if residual_norm > NORMAL_SOLVE_TOL * g_norm || d.dot(g) >= 0.0 {
        return Ok(NormalStep::NeedsDamping);
    }
    Ok(NormalStep::Descent(d))
}

/// Default central-difference step `ε^(1/3) · max(1, ‖a‖∞)`, which balances
/// truncation error against rounding error.
pub fn default_fd_step(a: &DVector<f64>) -> f64 {
    f64::EPSILON.cbrt() * a.amax().max(1.0)
}

/// Central-difference Jacobian of `f` at `a`. Column `j` is
/// `(f(a + h eⱼ) − f(a − h eⱼ)) / 2h`.
pub fn finite_difference_jacobian<F>(mut f: F, a: &DVector<f64>, h: f64) -> Result<DMatrix<f64>>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidInput(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let mut jac: Option<DMatrix<f64>> = None;
    let mut probe = a.clone();
    for j in 0..a.len() {
        probe[j] = a[j] + h;
        let plus = f(&probe).map_err(|_| Error::NonFiniteDifference { coordinate: j })?;
        probe[j] = a[j] - h;
        let minus = f(&probe).map_err(|_| Error::NonFiniteDifference { coordinate: j })?;
        probe[j] = a[j];
        if plus.len() != minus.len() {
            return Err(Error::DimensionMismatch {
                what: "finite-difference evaluations",
                expected: plus.len(),
                found: minus.len(),
            });
        }
        if plus.iter().chain(minus.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteDifference { coordinate: j });
        }
        let jm = jac.get_or_insert_with(|| DMatrix::zeros(plus.len(), a.len()));
        check_len("finite-difference output", jm.nrows(), plus.len())?;
        jm.set_column(j, &((plus - minus) / (2.0 * h)));
    }
    jac.ok_or_else(|| Error::InvalidInput("finite-difference point has no coordinates".into()))
}
