//! Dataset container and the `.efd` file format.

use std::path::Path;

use crate::container::{Block, Container};
use crate::error::{Error, Result};
use crate::fields::{DisplacementField, ElasticityField, ScalarGrid};

pub const EFD_KIND: &str = "efd";

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub measured: DisplacementField,
    pub truth_elasticity: Option<ElasticityField>,
    pub truth_displacement: Option<DisplacementField>,
    /// Resultant of the boundary load. Present iff the dataset supports
    /// absolute-scale calibration.
    pub applied_force: Option<f64>,
    pub snr: Option<f64>,
    pub rng_seed: Option<u64>,
}

impl Dataset {
    pub fn new(measured: DisplacementField) -> Self {
        Dataset {
            measured,
            truth_elasticity: None,
            truth_displacement: None,
            applied_force: None,
            snr: None,
            rng_seed: None,
        }
    }

    pub fn dim(&self) -> (usize, usize) {
        self.measured.dim()
    }

    pub fn h(&self) -> f64 {
        self.measured.h()
    }

    pub fn t(&self) -> f64 {
        self.measured.t()
    }

    pub fn is_calibration_capable(&self) -> bool {
        self.applied_force.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        let (ny, nx) = self.dim();
        if let Some(truth) = &self.truth_displacement {
            if truth.dim() != (ny, nx) || truth.h() != self.h() || truth.t() != self.t() {
                return Err(Error::DimensionMismatch(format!(
                    "truth displacement {:?} vs measured {:?}",
                    truth.dim(),
                    (ny, nx)
                )));
            }
        }
        if let Some(elas) = &self.truth_elasticity {
            if ny < 2 || nx < 2 || elas.dim() != (ny - 1, nx - 1) {
                return Err(Error::DimensionMismatch(format!(
                    "truth elasticity {:?} must be one smaller per axis than displacement {:?}",
                    elas.dim(),
                    (ny, nx)
                )));
            }
        }
        if let Some(f) = self.applied_force {
            if !(f > 0.0 && f.is_finite()) {
                return Err(Error::Invalid(format!("applied force must be positive, got {f}")));
            }
        }
        if let Some(s) = self.snr {
            if !(s > 0.0) {
                return Err(Error::Invalid(format!("snr must be positive, got {s}")));
            }
        }
        Ok(())
    }

    pub fn to_container(&self) -> Container {
        let (ny, nx) = self.dim();
        let mut c = Container::new(EFD_KIND);
        c.set("ny", ny);
        c.set("nx", nx);
        c.set_f64("h", self.h());
        c.set_f64("t", self.t());
        c.set("calibration_capable", self.is_calibration_capable());
        if let Some(f) = self.applied_force {
            c.set_f64("applied_force", f);
        }
        if let Some(s) = self.snr {
            c.set_f64("snr", s);
        }
        if let Some(seed) = self.rng_seed {
            c.set("seed", seed);
        }
        push_grid(&mut c, "ux", &self.measured.ux);
        push_grid(&mut c, "uy", &self.measured.uy);
        if let Some(u) = &self.truth_displacement {
            push_grid(&mut c, "truth_ux", &u.ux);
            push_grid(&mut c, "truth_uy", &u.uy);
        }
        if let Some(el) = &self.truth_elasticity {
            push_grid(&mut c, "truth_E", &el.e);
            push_grid(&mut c, "truth_nu", &el.nu);
        }
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        if c.kind() != EFD_KIND {
            return Err(c.format_error(format!("expected an `{EFD_KIND}` container, found `{}`", c.kind())));
        }
        let ny: usize = c.parse_required("ny")?;
        let nx: usize = c.parse_required("nx")?;
        let h: f64 = c.parse_required("h")?;
        let t: f64 = c.parse_required("t")?;
        let capable: bool = c.parse("calibration_capable")?.unwrap_or(false);
        let applied_force: Option<f64> = c.parse("applied_force")?;
        if capable && applied_force.is_none() {
            return Err(Error::Invalid(
                "dataset is flagged calibration_capable but has no applied_force".into(),
            ));
        }
        let measured = DisplacementField::new(
            grid_from_block(c, c.require_block("ux")?, Some((ny, nx)), h, t)?,
            grid_from_block(c, c.require_block("uy")?, Some((ny, nx)), h, t)?,
        )?;
        let truth_displacement = match (c.block("truth_ux"), c.block("truth_uy")) {
            (Some(a), Some(b)) => Some(DisplacementField::new(
                grid_from_block(c, a, Some((ny, nx)), h, t)?,
                grid_from_block(c, b, Some((ny, nx)), h, t)?,
            )?),
            (None, None) => None,
            _ => return Err(c.format_error("truth_ux and truth_uy must appear together")),
        };
        let truth_elasticity = match (c.block("truth_E"), c.block("truth_nu")) {
            (Some(a), Some(b)) => Some(ElasticityField::new(
                grid_from_block(c, a, None, h, t)?,
                grid_from_block(c, b, None, h, t)?,
            )?),
            (None, None) => None,
            _ => return Err(c.format_error("truth_E and truth_nu must appear together")),
        };
        let ds = Dataset {
            measured,
            truth_elasticity,
            truth_displacement,
            applied_force,
            snr: c.parse("snr")?,
            rng_seed: c.parse("seed")?,
        };
        ds.validate()?;
        Ok(ds)
    }
}

pub(crate) fn push_grid(c: &mut Container, name: &str, g: &ScalarGrid) {
    c.push_block(name, g.ny(), g.nx(), g.to_vec());
}

pub(crate) fn grid_from_block(
    c: &Container,
    block: &Block,
    expect: Option<(usize, usize)>,
    h: f64,
    t: f64,
) -> Result<ScalarGrid> {
    if let Some((ny, nx)) = expect {
        if (block.rows, block.cols) != (ny, nx) {
            return Err(Error::DimensionMismatch(format!(
                "block `{}` is {}x{}, header declares {ny}x{nx}",
                block.name, block.rows, block.cols
            )));
        }
    }
    ScalarGrid::from_vec(block.rows, block.cols, h, t, block.data.clone())
        .map_err(|e| c.format_error(format!("block `{}`: {e}", block.name)))
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    dataset.validate()?;
    dataset.to_container().write(path)
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    Dataset::from_container(&Container::read(path)?)
}
