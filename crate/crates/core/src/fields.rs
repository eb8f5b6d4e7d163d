//! Grid-valued field types.
//!
//! Every field lives on a regular lattice. Row index `i` runs top to bottom
//! (decreasing physical y), column index `j` runs left to right (increasing
//! physical x). Displacements sit on the node lattice; strain, stress and
//! elasticity sit on the cell lattice, one smaller per axis.

use ndarray::Array2;

use crate::error::{Error, Result};

/// A regular 2-D array of finite samples with vertical spacing `h` and
/// horizontal spacing `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid {
    h: f64,
    t: f64,
    values: Array2<f64>,
}

impl ScalarGrid {
    pub fn new(values: Array2<f64>, h: f64, t: f64) -> Result<Self> {
        let (ny, nx) = values.dim();
        if ny == 0 || nx == 0 {
            return Err(Error::Invalid(format!("grid must be non-empty, got {ny}x{nx}")));
        }
        if !(h.is_finite() && h > 0.0 && t.is_finite() && t > 0.0) {
            return Err(Error::Invalid(format!(
                "grid spacing must be positive, got h={h} t={t}"
            )));
        }
        if let Some(((i, j), v)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite grid value {v} at ({i}, {j})")));
        }
        Ok(ScalarGrid { h, t, values })
    }

    /// Unit-spaced grid.
    pub fn unit(values: Array2<f64>) -> Result<Self> {
        Self::new(values, 1.0, 1.0)
    }

    pub fn from_fn(
        ny: usize,
        nx: usize,
        h: f64,
        t: f64,
        f: impl FnMut((usize, usize)) -> f64,
    ) -> Result<Self> {
        Self::new(Array2::from_shape_fn((ny, nx), f), h, t)
    }

    pub fn filled(ny: usize, nx: usize, h: f64, t: f64, value: f64) -> Result<Self> {
        Self::new(Array2::from_elem((ny, nx), value), h, t)
    }

    pub fn from_vec(ny: usize, nx: usize, h: f64, t: f64, data: Vec<f64>) -> Result<Self> {
        let values = Array2::from_shape_vec((ny, nx), data).map_err(|_| {
            Error::DimensionMismatch(format!("expected {} values for a {ny}x{nx} grid", ny * nx))
        })?;
        Self::new(values, h, t)
    }

    pub fn ny(&self) -> usize {
        self.values.nrows()
    }

    pub fn nx(&self) -> usize {
        self.values.ncols()
    }

    pub fn dim(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Row-major copy of the samples.
    pub fn to_vec(&self) -> Vec<f64> {
        self.values.iter().copied().collect()
    }

    pub fn mean(&self) -> f64 {
        self.values.sum() / self.values.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn same_lattice(&self, other: &ScalarGrid) -> bool {
        self.dim() == other.dim() && self.h == other.h && self.t == other.t
    }

    /// Same spacing, new samples. Fails if `f` produces a non-finite value.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<ScalarGrid> {
        Self::new(self.values.mapv(f), self.h, self.t)
    }

    pub fn scaled(&self, factor: f64) -> Result<ScalarGrid> {
        self.map(|v| v * factor)
    }

    /// A grid with the same spacing but different samples; used by operators
    /// that shrink the lattice.
    pub(crate) fn with_values(&self, values: Array2<f64>) -> Result<ScalarGrid> {
        Self::new(values, self.h, self.t)
    }
}

pub(crate) fn check_same(what: &str, a: &ScalarGrid, b: &ScalarGrid) -> Result<()> {
    if a.same_lattice(b) {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "{what}: {}x{} (h={}, t={}) vs {}x{} (h={}, t={})",
            a.ny(),
            a.nx(),
            a.h(),
            a.t(),
            b.ny(),
            b.nx(),
            b.h(),
            b.t()
        )))
    }
}

/// Horizontal and vertical displacement on the node lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    pub(crate) ux: ScalarGrid,
    pub(crate) uy: ScalarGrid,
}

impl DisplacementField {
    pub fn new(ux: ScalarGrid, uy: ScalarGrid) -> Result<Self> {
        check_same("displacement channels ux/uy", &ux, &uy)?;
        Ok(DisplacementField { ux, uy })
    }

    pub fn ux(&self) -> &ScalarGrid {
        &self.ux
    }

    pub fn uy(&self) -> &ScalarGrid {
        &self.uy
    }

    pub fn dim(&self) -> (usize, usize) {
        self.ux.dim()
    }

    pub fn h(&self) -> f64 {
        self.ux.h()
    }

    pub fn t(&self) -> f64 {
        self.ux.t()
    }
}

/// Axial strains and engineering shear strain on the cell lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct StrainField {
    pub(crate) exx: ScalarGrid,
    pub(crate) eyy: ScalarGrid,
    pub(crate) gxy: ScalarGrid,
}

impl StrainField {
    pub fn new(exx: ScalarGrid, eyy: ScalarGrid, gxy: ScalarGrid) -> Result<Self> {
        check_same("strain channels exx/eyy", &exx, &eyy)?;
        check_same("strain channels exx/gxy", &exx, &gxy)?;
        Ok(StrainField { exx, eyy, gxy })
    }

    pub fn exx(&self) -> &ScalarGrid {
        &self.exx
    }

    pub fn eyy(&self) -> &ScalarGrid {
        &self.eyy
    }

    pub fn gxy(&self) -> &ScalarGrid {
        &self.gxy
    }

    pub fn dim(&self) -> (usize, usize) {
        self.exx.dim()
    }

    pub fn channels(&self) -> [&ScalarGrid; 3] {
        [&self.exx, &self.eyy, &self.gxy]
    }
}

/// Plane-stress components on the cell lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct StressField {
    pub(crate) sxx: ScalarGrid,
    pub(crate) syy: ScalarGrid,
    pub(crate) txy: ScalarGrid,
}

impl StressField {
    pub fn new(sxx: ScalarGrid, syy: ScalarGrid, txy: ScalarGrid) -> Result<Self> {
        check_same("stress channels sxx/syy", &sxx, &syy)?;
        check_same("stress channels sxx/txy", &sxx, &txy)?;
        Ok(StressField { sxx, syy, txy })
    }

    pub fn sxx(&self) -> &ScalarGrid {
        &self.sxx
    }

    pub fn syy(&self) -> &ScalarGrid {
        &self.syy
    }

    pub fn txy(&self) -> &ScalarGrid {
        &self.txy
    }

    pub fn dim(&self) -> (usize, usize) {
        self.sxx.dim()
    }

    pub fn scaled(&self, factor: f64) -> Result<StressField> {
        StressField::new(
            self.sxx.scaled(factor)?,
            self.syy.scaled(factor)?,
            self.txy.scaled(factor)?,
        )
    }
}

/// Young's modulus and Poisson's ratio on the cell lattice.
///
/// Construction enforces `E > 0` and `0 < nu < 0.5` everywhere. Network
/// predictions, whose Poisson's ratio is only guaranteed positive, go
/// through [`ElasticityField::new_unbounded_nu`] instead.
#[derive(Debug, Clone, PartialEq)]
pub struct ElasticityField {
    pub(crate) e: ScalarGrid,
    pub(crate) nu: ScalarGrid,
}

impl ElasticityField {
    pub fn new(e: ScalarGrid, nu: ScalarGrid) -> Result<Self> {
        let field = Self::new_unbounded_nu(e, nu)?;
        if let Some(((i, j), v)) = field.nu.values().indexed_iter().find(|(_, v)| **v >= 0.5) {
            return Err(Error::Invalid(format!(
                "Poisson's ratio must lie in (0, 0.5), got {v} at ({i}, {j})"
            )));
        }
        Ok(field)
    }

    /// Requires `E > 0` and `nu > 0` but allows `nu >= 0.5`.
    pub fn new_unbounded_nu(e: ScalarGrid, nu: ScalarGrid) -> Result<Self> {
        check_same("elasticity channels E/nu", &e, &nu)?;
        if let Some(((i, j), v)) = e.values().indexed_iter().find(|(_, v)| **v <= 0.0) {
            return Err(Error::Invalid(format!(
                "Young's modulus must be positive, got {v} at ({i}, {j})"
            )));
        }
        if let Some(((i, j), v)) = nu.values().indexed_iter().find(|(_, v)| **v <= 0.0) {
            return Err(Error::Invalid(format!(
                "Poisson's ratio must be positive, got {v} at ({i}, {j})"
            )));
        }
        Ok(ElasticityField { e, nu })
    }

    pub fn homogeneous(ny: usize, nx: usize, e: f64, nu: f64) -> Result<Self> {
        Self::new(
            ScalarGrid::filled(ny, nx, 1.0, 1.0, e)?,
            ScalarGrid::filled(ny, nx, 1.0, 1.0, nu)?,
        )
    }

    pub fn e(&self) -> &ScalarGrid {
        &self.e
    }

    pub fn nu(&self) -> &ScalarGrid {
        &self.nu
    }

    pub fn dim(&self) -> (usize, usize) {
        self.e.dim()
    }

    /// Number of cells whose Poisson's ratio is at or above the physical bound 0.5.
    pub fn nu_bound_violations(&self) -> usize {
        self.nu.values().iter().filter(|v| **v >= 0.5).count()
    }
}
