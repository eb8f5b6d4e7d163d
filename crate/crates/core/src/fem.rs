//! Plane-stress finite elements for synthesizing ground-truth displacements.
//!
//! One bilinear quadrilateral per elasticity cell, 2x2 Gauss quadrature,
//! displacement-controlled stretch along x. The reduced stiffness matrix is
//! banded under row-major node numbering and is factored with a banded
//! Cholesky decomposition.

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::fields::{DisplacementField, ElasticityField, ScalarGrid};
use crate::noise::add_noise;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    /// Center and radius in cell units; `y` grows upward from the bottom edge.
    Disk { cx: f64, cy: f64, r: f64 },
    /// Axis-aligned box `[x0, x1] x [y0, y1]` in cell units.
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
}

impl Shape {
    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Shape::Disk { cx, cy, r } => (x - cx).powi(2) + (y - cy).powi(2) <= r * r,
            Shape::Rect { x0, y0, x1, y1 } => x >= x0 && x <= x1 && y >= y0 && y <= y1,
        }
    }

    fn bounds(&self) -> (f64, f64, f64, f64) {
        match *self {
            Shape::Disk { cx, cy, r } => (cx - r, cy - r, cx + r, cy + r),
            Shape::Rect { x0, y0, x1, y1 } => (x0, y0, x1, y1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inclusion {
    pub shape: Shape,
    pub e: f64,
    pub nu: f64,
}

/// Background material plus inclusions; later inclusions paint over earlier ones.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub background_e: f64,
    pub background_nu: f64,
    pub inclusions: Vec<Inclusion>,
}

impl PhantomSpec {
    pub fn homogeneous(e: f64, nu: f64) -> Self {
        PhantomSpec {
            background_e: e,
            background_nu: nu,
            inclusions: Vec::new(),
        }
    }

    /// Background `E = 1, nu = 0.3` with two stiff disks (`E = 2, nu = 0.4`),
    /// laid out relative to an `ny x nx` cell lattice.
    pub fn two_inclusion(ny: usize, nx: usize) -> Self {
        let (w, h) = (nx as f64, ny as f64);
        let s = w.min(h);
        let disk = |cx: f64, cy: f64, r: f64| Inclusion {
            shape: Shape::Disk { cx, cy, r },
            e: 2.0,
            nu: 0.4,
        };
        PhantomSpec {
            background_e: 1.0,
            background_nu: 0.3,
            inclusions: vec![
                disk(0.3 * w, 0.65 * h, 0.16 * s),
                disk(0.7 * w, 0.35 * h, 0.19 * s),
            ],
        }
    }

    pub fn validate(&self, ny: usize, nx: usize) -> Result<()> {
        let mats = std::iter::once((self.background_e, self.background_nu))
            .chain(self.inclusions.iter().map(|i| (i.e, i.nu)));
        for (e, nu) in mats {
            if !(e > 0.0 && e.is_finite()) || !(nu > 0.0 && nu < 0.5) {
                return Err(Error::Invalid(format!(
                    "phantom material needs E > 0 and 0 < nu < 0.5, got E={e} nu={nu}"
                )));
            }
        }
        for inc in &self.inclusions {
            let (x0, y0, x1, y1) = inc.bounds_checked()?;
            if x0 < 0.0 || y0 < 0.0 || x1 > nx as f64 || y1 > ny as f64 {
                return Err(Error::Invalid(format!(
                    "inclusion {:?} leaves the {ny}x{nx} domain",
                    inc.shape
                )));
            }
        }
        Ok(())
    }
}

impl Inclusion {
    fn bounds_checked(&self) -> Result<(f64, f64, f64, f64)> {
        let b = self.shape.bounds();
        let ok = [b.0, b.1, b.2, b.3].iter().all(|v| v.is_finite()) && b.0 < b.2 && b.1 < b.3;
        if !ok {
            return Err(Error::Invalid(format!("degenerate inclusion geometry {:?}", self.shape)));
        }
        Ok(b)
    }
}

/// Cell-center elasticity map of an `ny x nx` cell lattice with unit spacing.
pub fn rasterize_phantom(spec: &PhantomSpec, ny: usize, nx: usize) -> Result<ElasticityField> {
    if ny == 0 || nx == 0 {
        return Err(Error::Invalid("phantom lattice must be non-empty".into()));
    }
    spec.validate(ny, nx)?;
    let material = |i: usize, j: usize| {
        let (x, y) = (j as f64 + 0.5, (ny - 1 - i) as f64 + 0.5);
        spec.inclusions
            .iter()
            .rev()
            .find(|inc| inc.shape.contains(x, y))
            .map_or((spec.background_e, spec.background_nu), |inc| (inc.e, inc.nu))
    };
    ElasticityField::new(
        ScalarGrid::from_fn(ny, nx, 1.0, 1.0, |(i, j)| material(i, j).0)?,
        ScalarGrid::from_fn(ny, nx, 1.0, 1.0, |(i, j)| material(i, j).1)?,
    )
}

/// Left edge held at `u_x = 0`, right edge moved to `u_x = stretch * L`,
/// bottom-left node pinned in `y`, top and bottom traction-free.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryCondition {
    pub stretch: f64,
}

impl Default for BoundaryCondition {
    fn default() -> Self {
        BoundaryCondition { stretch: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardSolution {
    pub displacement: DisplacementField,
    /// Sum of x reactions on the right edge, per unit thickness.
    pub applied_force: f64,
    /// Sum of x reactions on the left edge; equals `-applied_force` at equilibrium.
    pub left_reaction: f64,
}

/// Gauss points of the 2-point rule on [-1, 1].
const GAUSS: [f64; 2] = [-0.577_350_269_189_625_8, 0.577_350_269_189_625_8];

/// Local nodes counter-clockwise from bottom-left, in natural coordinates.
const CORNERS: [(f64, f64); 4] = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];

/// 8x8 stiffness of a square `h x h` element of unit thickness, dof order
/// `(ux, uy)` per local node.
pub fn element_stiffness(e: f64, nu: f64, h: f64) -> [[f64; 8]; 8] {
    let k = e / (1.0 - nu * nu);
    let d = [[k, k * nu, 0.0], [k * nu, k, 0.0], [0.0, 0.0, k * (1.0 - nu) / 2.0]];
    let det_j = h * h / 4.0;
    let mut ke = [[0.0; 8]; 8];
    for xi in GAUSS {
        for eta in GAUSS {
            let mut b = [[0.0; 8]; 3];
            for (a, (xa, ea)) in CORNERS.iter().enumerate() {
                let dx = 0.25 * xa * (1.0 + eta * ea) * 2.0 / h;
                let dy = 0.25 * ea * (1.0 + xi * xa) * 2.0 / h;
                b[0][2 * a] = dx;
                b[1][2 * a + 1] = dy;
                b[2][2 * a] = dy;
                b[2][2 * a + 1] = dx;
            }
            let mut db = [[0.0; 8]; 3];
            for r in 0..3 {
                for c in 0..8 {
                    db[r][c] = (0..3).map(|m| d[r][m] * b[m][c]).sum();
                }
            }
            for r in 0..8 {
                for c in 0..8 {
                    ke[r][c] += (0..3).map(|m| b[m][r] * db[m][c]).sum::<f64>() * det_j;
                }
            }
        }
    }
    ke
}

/// Global dofs of cell `(i, j)` in the local order of [`element_stiffness`].
fn element_dofs(i: usize, j: usize, nx: usize) -> [usize; 8] {
    let node = |r: usize, c: usize| r * nx + c;
    let nodes = [node(i + 1, j), node(i + 1, j + 1), node(i, j + 1), node(i, j)];
    std::array::from_fn(|k| 2 * nodes[k / 2] + k % 2)
}

/// Lower band of a symmetric positive definite matrix, `band[i][k]` holding
/// entry `(i, i - bw + k)`.
struct BandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    fn zeros(n: usize, bw: usize) -> Self {
        BandMatrix {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + self.bw + j - i
    }

    fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    /// In-place `L L^T` factorization.
    fn cholesky(&mut self) -> Result<()> {
        let max_diag = (0..self.n).map(|i| self.data[self.idx(i, i)]).fold(0.0, f64::max);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..=i {
                let lo_k = lo.max(j.saturating_sub(self.bw));
                let mut s = self.data[self.idx(i, j)];
                for k in lo_k..j {
                    s -= self.data[self.idx(i, k)] * self.data[self.idx(j, k)];
                }
                if i == j {
                    if !(s > 1e-13 * max_diag) {
                        return Err(Error::SingularSystem(format!(
                            "stiffness matrix is not positive definite at unknown {i}"
                        )));
                    }
                    let k = self.idx(i, i);
                    self.data[k] = s.sqrt();
                } else {
                    let k = self.idx(i, j);
                    self.data[k] = s / self.data[self.idx(j, j)];
                }
            }
        }
        Ok(())
    }

    fn solve(&self, b: &mut [f64]) {
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let s: f64 = (lo..i).map(|k| self.data[self.idx(i, k)] * b[k]).sum();
            b[i] = (b[i] - s) / self.data[self.idx(i, i)];
        }
        for i in (0..self.n).rev() {
            let hi = (i + self.bw).min(self.n - 1);
            let s: f64 = (i + 1..=hi).map(|k| self.data[self.idx(k, i)] * b[k]).sum();
            b[i] = (b[i] - s) / self.data[self.idx(i, i)];
        }
    }
}

/// Solves for nodal displacements of the `(ny + 1) x (nx + 1)` node lattice
/// around an `ny x nx` elasticity field.
pub fn solve_forward(elas: &ElasticityField, bc: &BoundaryCondition) -> Result<ForwardSolution> {
    if !(bc.stretch > 0.0 && bc.stretch.is_finite()) {
        return Err(Error::Invalid(format!("stretch must be positive, got {}", bc.stretch)));
    }
    let (cy, cx) = elas.dim();
    if cy < 3 || cx < 3 {
        return Err(Error::GridTooSmall {
            what: "forward solve",
            min_rows: 4,
            min_cols: 4,
            rows: cy + 1,
            cols: cx + 1,
        });
    }
    if elas.nu_bound_violations() > 0 {
        return Err(Error::Invalid("forward solve needs nu < 0.5 everywhere".into()));
    }
    let h = elas.e().h();
    let (ny, nx) = (cy + 1, cx + 1);
    let ndof = 2 * ny * nx;

    // Prescribed dofs and their values.
    let mut prescribed: Vec<Option<f64>> = vec![None; ndof];
    let u_right = bc.stretch * (nx - 1) as f64 * h;
    for i in 0..ny {
        prescribed[2 * (i * nx)] = Some(0.0);
        prescribed[2 * (i * nx + nx - 1)] = Some(u_right);
    }
    prescribed[2 * ((ny - 1) * nx) + 1] = Some(0.0);

    let mut free_index = vec![usize::MAX; ndof];
    let mut nfree = 0;
    for (d, p) in prescribed.iter().enumerate() {
        if p.is_none() {
            free_index[d] = nfree;
            nfree += 1;
        }
    }

    let stiffness: Vec<[[f64; 8]; 8]> = (0..cy * cx)
        .map(|c| {
            let (i, j) = (c / cx, c % cx);
            element_stiffness(elas.e().get(i, j), elas.nu().get(i, j), h)
        })
        .collect();

    let bw = 2 * nx + 3;
    let mut k = BandMatrix::zeros(nfree, bw);
    let mut rhs = vec![0.0; nfree];
    for (c, ke) in stiffness.iter().enumerate() {
        let dofs = element_dofs(c / cx, c % cx, nx);
        for (a, &ga) in dofs.iter().enumerate() {
            let fa = free_index[ga];
            if fa == usize::MAX {
                continue;
            }
            for (b, &gb) in dofs.iter().enumerate() {
                match prescribed[gb] {
                    None => {
                        let fb = free_index[gb];
                        if fb <= fa {
                            k.add(fa, fb, ke[a][b]);
                        }
                    }
                    Some(v) => rhs[fa] -= ke[a][b] * v,
                }
            }
        }
    }
    k.cholesky()?;
    k.solve(&mut rhs);

    let u: Vec<f64> = (0..ndof)
        .map(|d| prescribed[d].unwrap_or_else(|| rhs[free_index[d]]))
        .collect();

    // Internal forces K u; at prescribed dofs these are the reactions.
    let mut f = vec![0.0; ndof];
    for (c, ke) in stiffness.iter().enumerate() {
        let dofs = element_dofs(c / cx, c % cx, nx);
        for (a, &ga) in dofs.iter().enumerate() {
            f[ga] += dofs.iter().enumerate().map(|(b, &gb)| ke[a][b] * u[gb]).sum::<f64>();
        }
    }
    let applied_force = (0..ny).map(|i| f[2 * (i * nx + nx - 1)]).sum();
    let left_reaction = (0..ny).map(|i| f[2 * (i * nx)]).sum();

    let t = elas.e().t();
    let ux = ScalarGrid::from_fn(ny, nx, h, t, |(i, j)| u[2 * (i * nx + j)])?;
    let uy = ScalarGrid::from_fn(ny, nx, h, t, |(i, j)| u[2 * (i * nx + j) + 1])?;
    Ok(ForwardSolution {
        displacement: DisplacementField::new(ux, uy)?,
        applied_force,
        left_reaction,
    })
}

/// Forward-solves `elas` and packages a dataset with truth fields and,
/// when `snr` is given, Gaussian measurement noise.
pub fn synthesize(elas: &ElasticityField, bc: &BoundaryCondition, snr: Option<f64>, seed: u64) -> Result<Dataset> {
    let sol = solve_forward(elas, bc)?;
    let measured = match snr {
        Some(s) => add_noise(&sol.displacement, s, seed)?,
        None => sol.displacement.clone(),
    };
    let mut ds = Dataset::new(measured);
    ds.truth_displacement = Some(sol.displacement);
    ds.truth_elasticity = Some(elas.clone());
    ds.applied_force = Some(sol.applied_force);
    ds.snr = snr;
    ds.rng_seed = snr.map(|_| seed);
    ds.validate()?;
    Ok(ds)
}
