use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{check_params, sq_dist, Dataset, SeparableModel};
use crate::error::{check_len, Error, Result};

/// RBF-AR(p, m, d): an AR(p) model whose coefficients are Gaussian RBF
/// networks of the lag vector `x_{t−1} = (y_{t−1}, …, y_{t−d})`:
///
/// ```text
/// y_t = φ₀(x_{t−1}) + Σᵢ φᵢ(x_{t−1}) y_{t−i}
/// φᵢ(x) = c_{i,0} + Σⱼ c_{i,j} exp(−λⱼ ‖x − zⱼ‖²)
/// ```
///
/// Nonlinear parameters are `(λ₁ … λ_m, z₁ … z_m)`. Column `i·(m+1) + j` of
/// `Φ` holds `vᵢ·gⱼ` where `v = (1, y_{t−1}, …, y_{t−p})` and
/// `g = (1, exp(−λ₁‖x−z₁‖²), …)`. The first usable target is `y[max(p, d)]`
/// (zero-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RbfArModel {
    p: usize,
    m: usize,
    d: usize,
}

pub fn rbf_ar_model(p: usize, m: usize, d: usize) -> Result<RbfArModel> {
    if p == 0 || m == 0 || d == 0 {
        return Err(Error::InvalidInput(format!(
            "RBF-AR orders must be positive, got p={p}, m={m}, d={d}"
        )));
    }
    Ok(RbfArModel { p, m, d })
}

impl RbfArModel {
    pub fn ar_order(&self) -> usize {
        self.p
    }

    pub fn centers(&self) -> usize {
        self.m
    }

    pub fn lag_dim(&self) -> usize {
        self.d
    }

    /// Index of the first series value that can be regressed.
    pub fn start(&self) -> usize {
        self.p.max(self.d)
    }

    pub fn pack(&self, lambdas: &[f64], centers: &[DVector<f64>]) -> Result<DVector<f64>> {
        if lambdas.len() != self.m || centers.len() != self.m || centers.iter().any(|z| z.len() != self.d) {
            return Err(Error::InvalidInput(format!(
                "expected {} radii and {} centers of dimension {}",
                self.m, self.m, self.d
            )));
        }
        let mut a = DVector::zeros(self.n_nonlinear());
        for j in 0..self.m {
            a[j] = lambdas[j];
            for l in 0..self.d {
                a[self.m + j * self.d + l] = centers[j][l];
            }
        }
        Ok(a)
    }

    fn center<'a>(&self, a: &'a DVector<f64>, j: usize) -> &'a [f64] {
        let start = self.m + j * self.d;
        &a.as_slice()[start..start + self.d]
    }

    fn check_series(&self, len: usize) -> Result<()> {
        if len < self.start() + 1 {
            return Err(Error::InvalidInput(format!(
                "RBF-AR({},{},{}) needs at least {} observations, got {len}",
                self.p,
                self.m,
                self.d,
                self.start() + 1
            )));
        }
        Ok(())
    }

    /// Basis row for target index `t`, using `series[t−1]`, `series[t−2]`, ….
    fn row(&self, a: &DVector<f64>, series: &[f64], t: usize, out: &mut [f64]) {
        let lags = (1..=self.d).map(|l| series[t - l]);
        let mut gauss = vec![1.0; self.m + 1];
        for j in 0..self.m {
            let dist = sq_dist(lags.clone(), self.center(a, j).iter().copied());
            gauss[j + 1] = (-a[j] * dist).exp();
        }
        for i in 0..=self.p {
            let v = if i == 0 { 1.0 } else { series[t - i] };
            for j in 0..=self.m {
                out[i * (self.m + 1) + j] = v * gauss[j];
            }
        }
    }

    /// One-step prediction of `series[t]` from the observed lags before it.
    pub fn predict_at(&self, a: &DVector<f64>, c: &DVector<f64>, series: &[f64], t: usize) -> Result<f64> {
        check_params(self, a)?;
        check_len("RBF-AR linear parameters", self.n_linear(), c.len())?;
        if t < self.start() || t > series.len() {
            return Err(Error::InvalidInput(format!(
                "cannot predict index {t}: need {} lags and at most {} observations",
                self.start(),
                series.len()
            )));
        }
        let mut row = vec![0.0; self.n_linear()];
        self.row(a, series, t, &mut row);
        Ok(row.iter().zip(c.iter()).map(|(r, c)| r * c).sum())
    }

    /// Runs the model forward from `warmup`, adding `N(0, σ²)` innovations.
    pub fn simulate(
        &self,
        a: &DVector<f64>,
        c: &DVector<f64>,
        warmup: &[f64],
        len: usize,
        noise_sigma: f64,
        seed: u64,
    ) -> Result<DVector<f64>> {
        self.check_series(warmup.len() + 1)?;
        if !(noise_sigma >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "noise sigma must be non-negative, got {noise_sigma}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise_sigma.max(f64::MIN_POSITIVE)).expect("positive sigma");
        let mut series: Vec<f64> = warmup.to_vec();
        while series.len() < len {
            let t = series.len();
            let mut y = self.predict_at(a, c, &series, t)?;
            if noise_sigma > 0.0 {
                y += normal.sample(&mut rng);
            }
            if !y.is_finite() {
                return Err(Error::NonFinite {
                    what: "simulated series",
                    row: t,
                    col: 0,
                });
            }
            series.push(y);
        }
        series.truncate(len.max(warmup.len()));
        Ok(DVector::from_vec(series))
    }
}

impl SeparableModel for RbfArModel {
    fn name(&self) -> String {
        format!("rbf-ar({},{},{})", self.p, self.m, self.d)
    }

    fn n_linear(&self) -> usize {
        (self.p + 1) * (self.m + 1)
    }

    fn n_nonlinear(&self) -> usize {
        self.m * (1 + self.d)
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        let mut b = vec![(0.0, f64::INFINITY); self.m];
        b.extend(std::iter::repeat_n((f64::NEG_INFINITY, f64::INFINITY), self.m * self.d));
        b
    }

    fn is_autoregressive(&self) -> bool {
        true
    }

    fn response(&self, data: &Dataset) -> Result<DVector<f64>> {
        let y = data.targets();
        self.check_series(y.len())?;
        Ok(y.rows(self.start(), y.len() - self.start()).into_owned())
    }

    fn basis(&self, a: &DVector<f64>, data: &Dataset) -> Result<DMatrix<f64>> {
        check_params(self, a)?;
        let series = data.targets().as_slice();
        self.check_series(series.len())?;
        let s = self.start();
        let rows = series.len() - s;
        let mut phi = DMatrix::zeros(rows, self.n_linear());
        let mut buf = vec![0.0; self.n_linear()];
        for r in 0..rows {
            self.row(a, series, s + r, &mut buf);
            for (col, v) in buf.iter().enumerate() {
                phi[(r, col)] = *v;
            }
        }
        crate::linalg::ensure_finite_matrix("rbf-ar basis", &phi)?;
        Ok(phi)
    }

    fn basis_derivatives(&self, a: &DVector<f64>, data: &Dataset) -> Result<Vec<DMatrix<f64>>> {
        check_params(self, a)?;
        let series = data.targets().as_slice();
        self.check_series(series.len())?;
        let s = self.start();
        let rows = series.len() - s;
        let width = self.m + 1;
        let mut d = vec![DMatrix::zeros(rows, self.n_linear()); self.n_nonlinear()];
        for r in 0..rows {
            let t = s + r;
            let lags: Vec<f64> = (1..=self.d).map(|l| series[t - l]).collect();
            for j in 0..self.m {
                let z = self.center(a, j);
                let dist = sq_dist(lags.iter().copied(), z.iter().copied());
                let g = (-a[j] * dist).exp();
                for i in 0..=self.p {
                    let v = if i == 0 { 1.0 } else { series[t - i] };
                    let col = i * width + j + 1;
                    d[j][(r, col)] = -v * dist * g;
                    for l in 0..self.d {
                        d[self.m + j * self.d + l][(r, col)] = v * 2.0 * a[j] * (lags[l] - z[l]) * g;
                    }
                }
            }
        }
        Ok(d)
    }
}
