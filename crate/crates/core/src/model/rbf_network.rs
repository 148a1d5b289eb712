use nalgebra::{DMatrix, DVector};

use super::{check_features, check_params, sq_dist, Dataset, SeparableModel};
use crate::error::{Error, Result};

/// Gaussian RBF network `ŷ(x) = Σₖ cₖ exp(−rₖ ‖x − zₖ‖²)`.
///
/// Nonlinear parameters are laid out as `(r₁ … r_m, z₁ … z_m)` with every
/// center `zₖ` contributing `dim` consecutive entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RbfNetworkModel {
    centers: usize,
    dim: usize,
}

pub fn rbf_network_model(centers: usize, dim: usize) -> Result<RbfNetworkModel> {
    if centers == 0 || dim == 0 {
        return Err(Error::InvalidInput(format!(
            "RBF network needs at least one center and one input dimension, got m={centers}, d={dim}"
        )));
    }
    Ok(RbfNetworkModel { centers, dim })
}

impl RbfNetworkModel {
    pub fn centers(&self) -> usize {
        self.centers
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Packs radii and centers into a parameter vector.
    pub fn pack(&self, radii: &[f64], centers: &[DVector<f64>]) -> Result<DVector<f64>> {
        if radii.len() != self.centers || centers.len() != self.centers || centers.iter().any(|z| z.len() != self.dim) {
            return Err(Error::InvalidInput(format!(
                "expected {} radii and {} centers of dimension {}",
                self.centers, self.centers, self.dim
            )));
        }
        let mut a = DVector::zeros(self.n_nonlinear());
        for k in 0..self.centers {
            a[k] = radii[k];
            for l in 0..self.dim {
                a[self.centers + k * self.dim + l] = centers[k][l];
            }
        }
        Ok(a)
    }

    fn center<'v>(&self, a: &'v DVector<f64>, k: usize) -> impl Iterator<Item = f64> + 'v {
        let start = self.centers + k * self.dim;
        a.as_slice()[start..start + self.dim].iter().copied()
    }
}

impl SeparableModel for RbfNetworkModel {
    fn name(&self) -> String {
        format!("rbf-network({},{})", self.centers, self.dim)
    }

    fn n_linear(&self) -> usize {
        self.centers
    }

    fn n_nonlinear(&self) -> usize {
        self.centers * (1 + self.dim)
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        let mut b = vec![(0.0, f64::INFINITY); self.centers];
        b.extend(std::iter::repeat_n(
            (f64::NEG_INFINITY, f64::INFINITY),
            self.centers * self.dim,
        ));
        b
    }

    fn basis(&self, a: &DVector<f64>, data: &Dataset) -> Result<DMatrix<f64>> {
        check_params(self, a)?;
        check_features("rbf-network", self.dim, data)?;
        let x = data.inputs();
        let mut phi = DMatrix::zeros(x.nrows(), self.centers);
        for i in 0..x.nrows() {
            for k in 0..self.centers {
                let dist = sq_dist(x.row(i).iter().copied(), self.center(a, k));
                phi[(i, k)] = (-a[k] * dist).exp();
            }
        }
        crate::linalg::ensure_finite_matrix("rbf-network basis", &phi)?;
        Ok(phi)
    }

    fn basis_derivatives(&self, a: &DVector<f64>, data: &Dataset) -> Result<Vec<DMatrix<f64>>> {
        check_params(self, a)?;
        check_features("rbf-network", self.dim, data)?;
        let x = data.inputs();
        let m = x.nrows();
        let mut d = vec![DMatrix::zeros(m, self.centers); self.n_nonlinear()];
        for i in 0..m {
            for k in 0..self.centers {
                let dist = sq_dist(x.row(i).iter().copied(), self.center(a, k));
                let g = (-a[k] * dist).exp();
                d[k][(i, k)] = -dist * g;
                for (l, zl) in self.center(a, k).enumerate() {
                    d[self.centers + k * self.dim + l][(i, k)] = 2.0 * a[k] * (x[(i, l)] - zl) * g;
                }
            }
        }
        Ok(d)
    }
}
