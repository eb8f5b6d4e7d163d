//! Finite-difference stencils for plane-stress equilibrium.
//!
//! All operators are valid (non-padded) correlations: the 2x2 strain stencil
//! shrinks the lattice by one per axis, the 3x3 residual and modulus-sum
//! stencils by two. Kernel entries are indexed `[row offset][column offset]`
//! with rows listed top first.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::fields::{check_same, DisplacementField, ElasticityField, ScalarGrid, StrainField, StressField};

/// d/dx on a 2x2 patch.
pub const W_X: [[f64; 2]; 2] = [[-0.5, 0.5], [-0.5, 0.5]];
/// d/dy on a 2x2 patch (physical y grows upward, rows grow downward).
pub const W_Y: [[f64; 2]; 2] = [[0.5, 0.5], [-0.5, -0.5]];

/// Unnormalized x-difference summed over three rows.
pub const W_DX3: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-1.0, 0.0, 1.0], [-1.0, 0.0, 1.0]];
/// Unnormalized y-difference summed over three columns.
pub const W_DY3: [[f64; 3]; 3] = [[1.0, 1.0, 1.0], [0.0, 0.0, 0.0], [-1.0, -1.0, -1.0]];

/// Equilibrium residual on the lattice two smaller per axis than the stress lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualField {
    pub(crate) rx: ScalarGrid,
    pub(crate) ry: ScalarGrid,
}

impl ResidualField {
    pub fn new(rx: ScalarGrid, ry: ScalarGrid) -> Result<Self> {
        check_same("residual channels rx/ry", &rx, &ry)?;
        Ok(ResidualField { rx, ry })
    }

    pub fn rx(&self) -> &ScalarGrid {
        &self.rx
    }

    pub fn ry(&self) -> &ScalarGrid {
        &self.ry
    }

    pub fn dim(&self) -> (usize, usize) {
        self.rx.dim()
    }
}

fn require(what: &'static str, dim: (usize, usize), min: usize) -> Result<()> {
    if dim.0 < min || dim.1 < min {
        return Err(Error::GridTooSmall {
            what,
            min_rows: min,
            min_cols: min,
            rows: dim.0,
            cols: dim.1,
        });
    }
    Ok(())
}

/// Valid correlation of `input` with an `N x N` kernel.
pub(crate) fn correlate<const N: usize>(input: ArrayView2<f64>, kernel: &[[f64; N]; N]) -> Array2<f64> {
    let (ny, nx) = input.dim();
    let (oy, ox) = (ny + 1 - N, nx + 1 - N);
    Array2::from_shape_fn((oy, ox), |(i, j)| {
        let mut acc = 0.0;
        for (a, row) in kernel.iter().enumerate() {
            for (b, w) in row.iter().enumerate() {
                if *w != 0.0 {
                    acc += w * input[[i + a, j + b]];
                }
            }
        }
        acc
    })
}

/// Adjoint of [`correlate`]: scatters `upstream` back onto the input lattice,
/// accumulating into `out`.
pub(crate) fn correlate_adjoint_into<const N: usize>(
    upstream: ArrayView2<f64>,
    kernel: &[[f64; N]; N],
    scale: f64,
    out: &mut Array2<f64>,
) {
    let (oy, ox) = upstream.dim();
    debug_assert_eq!(out.dim(), (oy + N - 1, ox + N - 1));
    for i in 0..oy {
        for j in 0..ox {
            let g = upstream[[i, j]] * scale;
            if g == 0.0 {
                continue;
            }
            for (a, row) in kernel.iter().enumerate() {
                for (b, w) in row.iter().enumerate() {
                    if *w != 0.0 {
                        out[[i + a, j + b]] += w * g;
                    }
                }
            }
        }
    }
}

pub(crate) const SUM3: [[f64; 3]; 3] = [[1.0; 3]; 3];

/// Strain channels `(exx, eyy, gxy)` from raw displacement arrays.
pub(crate) fn strain_arrays(ux: ArrayView2<f64>, uy: ArrayView2<f64>) -> [Array2<f64>; 3] {
    let exx = correlate(ux, &W_X);
    let eyy = correlate(uy, &W_Y);
    let gxy = correlate(ux, &W_Y) + correlate(uy, &W_X);
    [exx, eyy, gxy]
}

/// Plane-stress constitutive map at one point. Returns `(sxx, syy, txy)`.
#[inline]
pub fn plane_stress(e: f64, nu: f64, exx: f64, eyy: f64, gxy: f64) -> (f64, f64, f64) {
    let k = e / (1.0 - nu * nu);
    (k * (exx + nu * eyy), k * (nu * exx + eyy), k * 0.5 * (1.0 - nu) * gxy)
}

/// Residual channels `(rx, ry)` from raw stress arrays, divided by `h * t`.
pub(crate) fn residual_arrays(
    sxx: ArrayView2<f64>,
    syy: ArrayView2<f64>,
    txy: ArrayView2<f64>,
    h: f64,
    t: f64,
) -> [Array2<f64>; 2] {
    let inv = 1.0 / (h * t);
    let rx = (correlate(sxx, &W_DX3) + correlate(txy, &W_DY3)) * inv;
    let ry = (correlate(syy, &W_DY3) + correlate(txy, &W_DX3)) * inv;
    [rx, ry]
}

/// Strain on the cell lattice from nodal displacement via the 2x2 stencils.
///
/// No division by the grid spacing is applied: strains are per grid unit.
pub fn strain_from_displacement(u: &DisplacementField) -> Result<StrainField> {
    require("strain_from_displacement", u.dim(), 2)?;
    let [exx, eyy, gxy] = strain_arrays(u.ux.values().view(), u.uy.values().view());
    StrainField::new(
        u.ux.with_values(exx)?,
        u.ux.with_values(eyy)?,
        u.ux.with_values(gxy)?,
    )
}

/// Pointwise plane-stress constitutive law.
pub fn stress_from_strain(eps: &StrainField, elas: &ElasticityField) -> Result<StressField> {
    if eps.dim() != elas.dim() {
        return Err(Error::DimensionMismatch(format!(
            "strain lattice {:?} vs elasticity lattice {:?}",
            eps.dim(),
            elas.dim()
        )));
    }
    let (ny, nx) = eps.dim();
    let mut sxx = Array2::zeros((ny, nx));
    let mut syy = Array2::zeros((ny, nx));
    let mut txy = Array2::zeros((ny, nx));
    for i in 0..ny {
        for j in 0..nx {
            let nu = elas.nu.get(i, j);
            if (nu * nu - 1.0).abs() == 0.0 {
                return Err(Error::Invalid(format!("Poisson's ratio {nu} at ({i}, {j}) is singular")));
            }
            let (a, b, c) = plane_stress(
                elas.e.get(i, j),
                nu,
                eps.exx.get(i, j),
                eps.eyy.get(i, j),
                eps.gxy.get(i, j),
            );
            sxx[[i, j]] = a;
            syy[[i, j]] = b;
            txy[[i, j]] = c;
        }
    }
    StressField::new(
        eps.exx.with_values(sxx)?,
        eps.exx.with_values(syy)?,
        eps.exx.with_values(txy)?,
    )
}

/// Equilibrium residual of a stress field, each stencil sum divided by `h * t`.
pub fn pde_residual(sig: &StressField, h: f64, t: f64) -> Result<ResidualField> {
    require("pde_residual", sig.dim(), 3)?;
    if !(h > 0.0 && t > 0.0) {
        return Err(Error::Invalid(format!("spacing must be positive, got h={h} t={t}")));
    }
    let [rx, ry] = residual_arrays(
        sig.sxx.values().view(),
        sig.syy.values().view(),
        sig.txy.values().view(),
        h,
        t,
    );
    ResidualField::new(sig.sxx.with_values(rx)?, sig.sxx.with_values(ry)?)
}

/// Sum of the modulus over every 3x3 sub-window.
pub fn local_modulus_sum(e: &ScalarGrid) -> Result<ScalarGrid> {
    require("local_modulus_sum", e.dim(), 3)?;
    e.with_values(correlate(e.values().view(), &SUM3))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grid(ny: usize, nx: usize, f: impl FnMut((usize, usize)) -> f64) -> ScalarGrid {
        ScalarGrid::from_fn(ny, nx, 1.0, 1.0, f).unwrap()
    }

    fn disp(ny: usize, nx: usize, fx: impl FnMut((usize, usize)) -> f64, fy: impl FnMut((usize, usize)) -> f64) -> DisplacementField {
        DisplacementField::new(grid(ny, nx, fx), grid(ny, nx, fy)).unwrap()
    }

    fn assert_const(g: &ScalarGrid, c: f64) {
        for v in g.values() {
            assert_abs_diff_eq!(*v, c, epsilon = 1e-14);
        }
    }

    #[test]
    fn constant_displacement_has_zero_strain() {
        let s = strain_from_displacement(&disp(5, 4, |_| 3.0, |_| -1.5)).unwrap();
        assert_eq!(s.dim(), (4, 3));
        s.channels().iter().for_each(|c| assert_const(c, 0.0));
    }

    #[test]
    fn linear_ux_gives_unit_axial_strain() {
        let s = strain_from_displacement(&disp(4, 5, |(_, j)| j as f64, |_| 0.0)).unwrap();
        assert_const(&s.exx, 1.0);
        assert_const(&s.eyy, 0.0);
        assert_const(&s.gxy, 0.0);
    }

    #[test]
    fn rigid_rotation_is_strain_free() {
        let s = strain_from_displacement(&disp(4, 4, |(i, _)| -(i as f64), |(_, j)| -(j as f64))).unwrap();
        s.channels().iter().for_each(|c| assert_const(c, 0.0));
    }

    #[test]
    fn strain_rejects_tiny_grid() {
        let u = disp(1, 4, |_| 0.0, |_| 0.0);
        assert!(matches!(strain_from_displacement(&u), Err(Error::GridTooSmall { .. })));
    }

    #[test]
    fn stress_examples() {
        let eps = StrainField::new(
            grid(1, 1, |_| 0.01),
            grid(1, 1, |_| 0.0),
            grid(1, 1, |_| 0.0),
        )
        .unwrap();
        // nu must be positive for ElasticityField; the nu -> 0 limit is checked on plane_stress directly.
        assert_eq!(plane_stress(1.0, 0.0, 0.01, 0.0, 0.0), (0.01, 0.0, 0.0));
        let elas = ElasticityField::homogeneous(1, 1, 1.0, 0.2).unwrap();
        assert!(stress_from_strain(&eps, &elas).is_ok());

        let eps = StrainField::new(
            grid(1, 1, |_| 0.01),
            grid(1, 1, |_| -0.003),
            grid(1, 1, |_| 0.004),
        )
        .unwrap();
        let elas = ElasticityField::homogeneous(1, 1, 2.0, 0.3).unwrap();
        let sig = stress_from_strain(&eps, &elas).unwrap();
        assert_abs_diff_eq!(sig.sxx.get(0, 0), 0.02, epsilon = 1e-15);
        assert_abs_diff_eq!(sig.syy.get(0, 0), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sig.txy.get(0, 0), 2.0 * 0.35 * 0.004 / 0.91, epsilon = 1e-15);
    }

    #[test]
    fn stress_rejects_lattice_mismatch() {
        let z = |n| grid(n, n, |_| 0.0);
        let eps = StrainField::new(z(3), z(3), z(3)).unwrap();
        let elas = ElasticityField::homogeneous(2, 2, 1.0, 0.3).unwrap();
        assert!(matches!(stress_from_strain(&eps, &elas), Err(Error::DimensionMismatch(_))));
    }

    fn stress(ny: usize, nx: usize, fxx: fn((usize, usize)) -> f64, fyy: fn((usize, usize)) -> f64, fxy: fn((usize, usize)) -> f64) -> StressField {
        StressField::new(grid(ny, nx, fxx), grid(ny, nx, fyy), grid(ny, nx, fxy)).unwrap()
    }

    #[test]
    fn residual_examples() {
        let r = pde_residual(&stress(5, 6, |_| 2.0, |_| -1.0, |_| 0.5), 1.0, 1.0).unwrap();
        assert_eq!(r.dim(), (3, 4));
        assert_const(&r.rx, 0.0);
        assert_const(&r.ry, 0.0);

        let r = pde_residual(&stress(5, 5, |(_, j)| j as f64, |_| 0.0, |_| 0.0), 1.0, 1.0).unwrap();
        assert_const(&r.rx, 6.0);
        assert_const(&r.ry, 0.0);

        let r = pde_residual(&stress(5, 5, |_| 0.0, |_| 0.0, |(_, j)| j as f64), 1.0, 1.0).unwrap();
        assert_const(&r.rx, 0.0);
        assert_const(&r.ry, 6.0);

        let r = pde_residual(&stress(5, 5, |(_, j)| j as f64, |_| 0.0, |_| 0.0), 0.5, 2.0).unwrap();
        assert_const(&r.rx, 6.0);
        let r = pde_residual(&stress(5, 5, |(_, j)| j as f64, |_| 0.0, |_| 0.0), 0.5, 0.5).unwrap();
        assert_const(&r.rx, 24.0);
    }

    #[test]
    fn residual_rejects_small_lattice() {
        let s = stress(2, 5, |_| 0.0, |_| 0.0, |_| 0.0);
        assert!(matches!(pde_residual(&s, 1.0, 1.0), Err(Error::GridTooSmall { .. })));
    }

    #[test]
    fn modulus_sum_examples() {
        let s = local_modulus_sum(&grid(4, 5, |_| 0.7)).unwrap();
        assert_eq!(s.dim(), (2, 3));
        assert_const(&s, 9.0 * 0.7);
        let s = local_modulus_sum(&grid(3, 3, |(i, _)| (i + 1) as f64)).unwrap();
        assert_eq!(s.values().as_slice().unwrap(), &[18.0]);
        assert!(local_modulus_sum(&grid(2, 3, |_| 1.0)).is_err());
    }

    #[test]
    fn adjoint_matches_inner_product() {
        // <K x, y> == <x, K^T y>
        let x = Array2::from_shape_fn((6, 7), |(i, j)| ((i * 31 + j * 17) % 11) as f64 - 5.0);
        let y = Array2::from_shape_fn((4, 5), |(i, j)| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let kx = correlate(x.view(), &W_DY3);
        let mut kty = Array2::zeros((6, 7));
        correlate_adjoint_into(y.view(), &W_DY3, 1.0, &mut kty);
        assert_abs_diff_eq!((&kx * &y).sum(), (&x * &kty).sum(), epsilon = 1e-12);
    }

    fn arr(ny: usize, nx: usize, v: &[f64]) -> ScalarGrid {
        ScalarGrid::from_vec(ny, nx, 1.0, 1.0, v[..ny * nx].to_vec()).unwrap()
    }

    proptest::proptest! {
        #[test]
        fn strain_is_linear(
            u in proptest::collection::vec(-1.0f64..1.0, 128),
            v in proptest::collection::vec(-1.0f64..1.0, 128),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let field = |s: &[f64]| DisplacementField::new(arr(8, 8, s), arr(8, 8, &s[64..])).unwrap();
            let mixed: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
            let lhs = strain_from_displacement(&field(&mixed)).unwrap();
            let (su, sv) = (strain_from_displacement(&field(&u)).unwrap(), strain_from_displacement(&field(&v)).unwrap());
            for c in 0..3 {
                let rhs = su.channels()[c].values() * a + sv.channels()[c].values() * b;
                for (x, y) in lhs.channels()[c].values().iter().zip(rhs.iter()) {
                    proptest::prop_assert!((x - y).abs() <= 1e-14);
                }
            }
        }

        #[test]
        fn stress_is_linear_in_strain(
            s in proptest::collection::vec(-0.1f64..0.1, 3 * 25),
            e in 0.1f64..5.0,
            nu in 0.0f64..0.49,
            a in -3.0f64..3.0,
        ) {
            let eps = |k: f64| StrainField::new(
                arr(5, 5, &s.iter().map(|x| k * x).collect::<Vec<_>>()),
                arr(5, 5, &s[25..].iter().map(|x| k * x).collect::<Vec<_>>()),
                arr(5, 5, &s[50..].iter().map(|x| k * x).collect::<Vec<_>>()),
            ).unwrap();
            let el = ElasticityField::homogeneous(5, 5, e, nu).unwrap();
            let (one, scaled) = (stress_from_strain(&eps(1.0), &el).unwrap(), stress_from_strain(&eps(a), &el).unwrap());
            for (x, y) in scaled.sxx().values().iter().chain(scaled.txy().values()).zip(one.sxx().values().iter().chain(one.txy().values())) {
                proptest::prop_assert!((x - a * y).abs() <= 1e-14 * (1.0 + x.abs()));
            }
        }

        #[test]
        fn affine_displacement_is_in_equilibrium(
            c in proptest::collection::vec(-0.05f64..0.05, 6),
            ny in 4usize..10,
            nx in 4usize..10,
            e in 0.1f64..5.0,
            nu in 0.0f64..0.49,
        ) {
            let u = disp(
                ny,
                nx,
                |(i, j)| c[0] + c[1] * j as f64 + c[2] * i as f64,
                |(i, j)| c[3] + c[4] * j as f64 + c[5] * i as f64,
            );
            let el = ElasticityField::homogeneous(ny - 1, nx - 1, e, nu).unwrap();
            let r = pde_residual(&stress_from_strain(&strain_from_displacement(&u).unwrap(), &el).unwrap(), 1.0, 1.0).unwrap();
            for v in r.rx().values().iter().chain(r.ry().values()) {
                proptest::prop_assert!(v.abs() <= 1e-12);
            }
        }
    }
}
