//! Seeded stand-ins for the two real datasets, with the same shapes and
//! column order. Real CSV files can replace them without other changes.
//!
//! * ozone: 518 monthly column-thickness readings in Dobson units, all above 260.
//! * concrete: 1030 rows of cement, slag, fly ash, water, superplasticizer,
//!   coarse aggregate, fine aggregate (kg/m³), age (days), then compressive
//!   strength (MPa) as the target.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::Dataset;
use crate::error::Result;

pub const OZONE_LEN: usize = 518;
pub const CONCRETE_ROWS: usize = 1030;
pub const CONCRETE_FEATURES: [&str; 8] = [
    "cement",
    "slag",
    "fly_ash",
    "water",
    "superplasticizer",
    "coarse_aggregate",
    "fine_aggregate",
    "age",
];

/// Raw ozone series: annual cycle, slow drift and a nonlinear AR(2) anomaly.
pub fn ozone_series(seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shock = Normal::new(0.0, 9.0).expect("valid sigma");
    let mut anomaly = [0.0_f64; 2];
    let mut out = Vec::with_capacity(OZONE_LEN);
    for t in 0..OZONE_LEN {
        let phase = 2.0 * std::f64::consts::PI * (t as f64) / 12.0;
        let seasonal = 38.0 * (phase + 0.9).sin() + 9.0 * (2.0 * phase).cos();
        let drift = -4.0 * (t as f64) / OZONE_LEN as f64;
        // Persistence weakens for large excursions, which the RBF weights can pick up.
        let gate = (-(anomaly[0] / 25.0).powi(2)).exp();
        let next = (0.35 + 0.4 * gate) * anomaly[0] - 0.15 * anomaly[1] + shock.sample(&mut rng);
        anomaly = [next, anomaly[0]];
        let value = 330.0 + seasonal + drift + next;
        out.push(value.max(262.0));
    }
    DVector::from_vec(out)
}

/// Concrete mix rows with a strength response shaped like Abrams' law.
pub fn concrete_dataset(seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 4.0).expect("valid sigma");
    let ages = [3.0, 7.0, 14.0, 28.0, 28.0, 28.0, 56.0, 90.0, 180.0, 365.0];
    let mut x = DMatrix::zeros(CONCRETE_ROWS, 8);
    let mut y = DVector::zeros(CONCRETE_ROWS);
    for i in 0..CONCRETE_ROWS {
        let cement: f64 = rng.random_range(102.0..540.0);
        let slag = if rng.random_bool(0.55) {
            rng.random_range(0.0..360.0)
        } else {
            0.0
        };
        let ash = if rng.random_bool(0.45) {
            rng.random_range(24.0..200.0)
        } else {
            0.0
        };
        let water: f64 = rng.random_range(121.0..247.0);
        let sp = if rng.random_bool(0.6) {
            rng.random_range(1.7..32.0)
        } else {
            0.0
        };
        let coarse = rng.random_range(801.0..1145.0);
        let fine = rng.random_range(594.0..993.0);
        let age: f64 = ages[rng.random_range(0..ages.len())];

        let binder = cement + 0.6 * slag + 0.3 * ash;
        let ratio = binder / water;
        let maturity = (age / 28.0).ln().mul_add(0.22, 1.0).clamp(0.35, 1.45);
        let strength =
            38.0 * ratio.powf(1.3) * maturity + 0.25 * sp - 0.004 * (coarse + fine - 1750.0) + noise.sample(&mut rng);

        let row = [cement, slag, ash, water, sp, coarse, fine, age];
        for (j, v) in row.iter().enumerate() {
            x[(i, j)] = *v;
        }
        y[i] = strength.clamp(2.3, 82.6);
    }
    Dataset::tabular(x, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ozone_transform;

    #[test]
    fn ozone_shape_and_domain() {
        let y = ozone_series(1);
        assert_eq!(y.len(), OZONE_LEN);
        assert!(ozone_transform(&y).is_ok());
        assert_eq!(y, ozone_series(1));
    }

    #[test]
    fn concrete_shape() {
        let d = concrete_dataset(1).unwrap();
        assert_eq!(d.len(), CONCRETE_ROWS);
        assert_eq!(d.n_features(), 8);
        assert!(d.targets().iter().all(|v| v.is_finite() && *v > 0.0));
    }
}
