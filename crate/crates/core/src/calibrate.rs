//! Absolute-scale calibration of a relative modulus field from the applied
//! boundary force.

use std::path::Path;

use crate::container::Container;
use crate::dataset::{grid_from_block, push_grid};
use crate::error::{Error, Result};
use crate::fields::{ScalarGrid, StressField};

pub const CALIBRATION_KIND: &str = "calibration";

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub c_hat: f64,
    /// Boundary force implied by the relative stress field.
    pub boundary_force_predicted: f64,
    pub e_absolute: ScalarGrid,
}

/// Rectangle-rule resultant of `sigma_xx` along the rightmost stress column.
pub fn boundary_force(sig: &StressField, h: f64) -> Result<f64> {
    let sxx = sig.sxx().values();
    if sxx.is_empty() {
        return Err(Error::Invalid("boundary force of an empty stress lattice".into()));
    }
    let last = sxx.ncols() - 1;
    Ok(sxx.column(last).sum() * h)
}

pub fn calibrate(e_relative: &ScalarGrid, sig_relative: &StressField, f_applied: f64, h: f64) -> Result<CalibrationResult> {
    if !(f_applied > 0.0 && f_applied.is_finite()) {
        return Err(Error::Invalid(format!("applied force must be positive, got {f_applied}")));
    }
    let predicted = boundary_force(sig_relative, h)?;
    if !(predicted > 0.0) {
        return Err(Error::Uncalibratable(format!(
            "predicted boundary force {predicted} is not positive"
        )));
    }
    let c_hat = f_applied / predicted;
    Ok(CalibrationResult {
        c_hat,
        boundary_force_predicted: predicted,
        e_absolute: e_relative.scaled(c_hat)?,
    })
}

impl CalibrationResult {
    pub fn to_container(&self) -> Container {
        let mut c = Container::new(CALIBRATION_KIND);
        c.set("ny", self.e_absolute.ny());
        c.set("nx", self.e_absolute.nx());
        c.set_f64("h", self.e_absolute.h());
        c.set_f64("t", self.e_absolute.t());
        c.set_f64("c_hat", self.c_hat);
        c.set_f64("boundary_force_predicted", self.boundary_force_predicted);
        push_grid(&mut c, "E_absolute", &self.e_absolute);
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        if c.kind() != CALIBRATION_KIND {
            return Err(c.format_error(format!("expected a `{CALIBRATION_KIND}` container, found `{}`", c.kind())));
        }
        let dims = (c.parse_required("ny")?, c.parse_required("nx")?);
        let (h, t) = (c.parse_required("h")?, c.parse_required("t")?);
        let c_hat: f64 = c.parse_required("c_hat")?;
        if !(c_hat > 0.0 && c_hat.is_finite()) {
            return Err(c.format_error(format!("c_hat must be positive, got {c_hat}")));
        }
        Ok(CalibrationResult {
            c_hat,
            boundary_force_predicted: c.parse_required("boundary_force_predicted")?,
            e_absolute: grid_from_block(c, c.require_block("E_absolute")?, Some(dims), h, t)?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container().write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stress_with_sxx(sxx: ScalarGrid) -> StressField {
        let z = sxx.map(|_| 0.0).unwrap();
        StressField::new(sxx, z.clone(), z).unwrap()
    }

    #[test]
    fn boundary_force_examples() {
        let ones = stress_with_sxx(ScalarGrid::filled(10, 4, 1.0, 1.0, 1.0).unwrap());
        assert_eq!(boundary_force(&ones, 1.0).unwrap(), 10.0);
        assert_eq!(boundary_force(&ones, 2.0).unwrap(), 20.0);
        let col = ScalarGrid::from_fn(3, 2, 0.5, 1.0, |(i, j)| if j == 1 { (i + 1) as f64 } else { 9.0 }).unwrap();
        assert_eq!(boundary_force(&stress_with_sxx(col), 0.5).unwrap(), 3.0);
    }

    #[test]
    fn ratio_definition() {
        let sig = stress_with_sxx(ScalarGrid::filled(5, 3, 1.0, 1.0, 1.0).unwrap());
        let e = ScalarGrid::filled(5, 3, 1.0, 1.0, 0.7).unwrap();
        let r = calibrate(&e, &sig, 10.0, 1.0).unwrap();
        assert_eq!(r.c_hat, 2.0);
        assert!(r.e_absolute.values().iter().all(|v| *v == 1.4));
    }

    #[test]
    fn rejects_uncalibratable() {
        let e = ScalarGrid::filled(3, 3, 1.0, 1.0, 1.0).unwrap();
        let zero = stress_with_sxx(ScalarGrid::filled(3, 3, 1.0, 1.0, 0.0).unwrap());
        let neg = stress_with_sxx(ScalarGrid::filled(3, 3, 1.0, 1.0, -1.0).unwrap());
        let pos = stress_with_sxx(ScalarGrid::filled(3, 3, 1.0, 1.0, 1.0).unwrap());
        assert!(matches!(calibrate(&e, &zero, 1.0, 1.0), Err(Error::Uncalibratable(_))));
        assert!(matches!(calibrate(&e, &neg, 1.0, 1.0), Err(Error::Uncalibratable(_))));
        assert!(matches!(calibrate(&e, &pos, 0.0, 1.0), Err(Error::Invalid(_))));
        assert!(matches!(calibrate(&e, &pos, -2.0, 1.0), Err(Error::Invalid(_))));
    }

    #[test]
    fn container_round_trip() {
        let sig = stress_with_sxx(ScalarGrid::filled(4, 3, 0.5, 2.0, 0.3).unwrap());
        let e = ScalarGrid::from_fn(4, 3, 0.5, 2.0, |(i, j)| 0.1 + i as f64 * 0.07 + j as f64 / 3.0).unwrap();
        let r = calibrate(&e, &sig, 1.7, 0.5).unwrap();
        let back = CalibrationResult::from_container(&Container::parse_text(&r.to_container().to_text(), Path::new("x")).unwrap()).unwrap();
        assert_eq!(back, r);
    }

    proptest! {
        #[test]
        fn scale_equivariance_and_force_match(
            vals in proptest::collection::vec(0.05f64..3.0, 12),
            alpha in 0.01f64..100.0,
            f in 0.1f64..50.0,
        ) {
            let e = ScalarGrid::from_vec(4, 3, 1.0, 1.0, vals.clone()).unwrap();
            let sig = stress_with_sxx(e.map(|v| 0.01 * v).unwrap());
            let base = calibrate(&e, &sig, f, 1.0).unwrap();
            let scaled = calibrate(&e.scaled(alpha).unwrap(), &sig.scaled(alpha).unwrap(), f, 1.0).unwrap();
            prop_assert!(base.c_hat > 0.0);
            for (a, b) in base.e_absolute.values().iter().zip(scaled.e_absolute.values()) {
                prop_assert!((a - b).abs() <= 1e-14 * a.abs());
            }
            let after = boundary_force(&sig.scaled(base.c_hat).unwrap(), 1.0).unwrap();
            prop_assert!((after - f).abs() <= 1e-12 * f);
        }
    }
}
