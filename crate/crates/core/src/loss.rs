//! Loss terms and the weighted training objective.
//!
//! * `L_u`: mean L1 misfit between predicted and measured displacement (node lattice).
//! * `L_eps`: mean L1 gap between predicted strain and strain derived from the
//!   predicted displacement (cell lattice).
//! * `L_r`: mean equilibrium residual normalized by the local 3x3 modulus sum.
//! * `L_E`: mean L1 distance of the predicted modulus from the target mean `E_c`.
//!
//! The subgradient of `|x|` at `x = 0` is taken as 0.

use ndarray::{Array2, ArrayView2};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::fields::{check_same, DisplacementField, ElasticityField, ScalarGrid, StrainField};
use crate::kernels::{self, ResidualField, SUM3, W_DX3, W_DY3, W_X, W_Y};
use crate::network::{cell_coords, encode_batch, node_coords, Networks};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_u: f64,
    pub lambda_eps: f64,
    pub lambda_r: f64,
    pub lambda_e: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_u: 2.0,
            lambda_eps: 1.0,
            lambda_r: 3.0,
            lambda_e: 0.02,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda_u, self.lambda_eps, self.lambda_r, self.lambda_e];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Invalid(format!("loss weights must be non-negative, got {all:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub l_u: f64,
    pub l_eps: f64,
    pub l_r: f64,
    pub l_e: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn weighted_total(&self, w: &LossWeights) -> f64 {
        w.lambda_u * self.l_u + w.lambda_eps * self.l_eps + w.lambda_r * self.l_r + w.lambda_e * self.l_e
    }
}

/// Which loss terms enter the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Terms {
    pub displacement: bool,
    pub strain: bool,
    /// Residual and mean-modulus terms (they both need the elasticity network).
    pub physics: bool,
}

impl Terms {
    pub const ALL: Terms = Terms {
        displacement: true,
        strain: true,
        physics: true,
    };
}

#[inline]
fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn loss_displacement(pred: &DisplacementField, measured: &DisplacementField) -> Result<f64> {
    check_same("predicted vs measured displacement", &pred.ux, &measured.ux)?;
    let n = pred.ux.len() as f64;
    let sum = (pred.ux.values() - measured.ux.values()).mapv(f64::abs).sum()
        + (pred.uy.values() - measured.uy.values()).mapv(f64::abs).sum();
    Ok(sum / n)
}

pub fn loss_strain(pred: &StrainField, derived: &StrainField) -> Result<f64> {
    if pred.dim() != derived.dim() {
        return Err(Error::DimensionMismatch(format!(
            "predicted strain {:?} vs derived strain {:?}",
            pred.dim(),
            derived.dim()
        )));
    }
    let n = pred.exx.len() as f64;
    let sum: f64 = pred
        .channels()
        .iter()
        .zip(derived.channels())
        .map(|(a, b)| (a.values() - b.values()).mapv(f64::abs).sum())
        .sum();
    Ok(sum / n)
}

/// Residual magnitude normalized by the local 3x3 modulus sum of `e_pred`
/// (given on the strain lattice).
pub fn loss_residual(res: &ResidualField, e_pred: &ScalarGrid) -> Result<f64> {
    let e_sum = kernels::local_modulus_sum(e_pred)?;
    if e_sum.dim() != res.dim() {
        return Err(Error::DimensionMismatch(format!(
            "residual lattice {:?} vs modulus-sum lattice {:?}",
            res.dim(),
            e_sum.dim()
        )));
    }
    if let Some(v) = e_sum.values().iter().find(|v| !(**v > 0.0)) {
        return Err(Error::Invalid(format!("local modulus sum must be positive, got {v}")));
    }
    let mut acc = 0.0;
    ndarray::Zip::from(res.rx.values())
        .and(res.ry.values())
        .and(e_sum.values())
        .for_each(|rx, ry, es| acc += (rx.abs() + ry.abs()) / es);
    Ok(acc / res.rx.len() as f64)
}

pub fn loss_mean_modulus(e_pred: &ScalarGrid, e_c: f64) -> Result<f64> {
    check_target(e_c)?;
    Ok(e_pred.values().mapv(|e| (e - e_c).abs()).sum() / e_pred.len() as f64)
}

fn check_target(e_c: f64) -> Result<()> {
    if e_c > 0.0 && e_c.is_finite() {
        Ok(())
    } else {
        Err(Error::Invalid(format!("target mean modulus must be positive, got {e_c}")))
    }
}

/// Raw network outputs on the dataset lattices, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    /// `N x 2` nodal displacement.
    pub displacement: Array2<f64>,
    /// `M x 3` strain at cell centers (empty when not evaluated).
    pub strain: Array2<f64>,
    /// `M x 2` modulus and Poisson's ratio at cell centers (empty when not evaluated).
    pub elasticity: Array2<f64>,
}

/// Loss gradients with respect to the raw network outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputGradients {
    pub displacement: Array2<f64>,
    pub strain: Option<Array2<f64>>,
    pub elasticity: Option<Array2<f64>>,
}

/// A dataset prepared for repeated objective evaluation: encoded coordinates
/// and measured displacement in network-output layout.
#[derive(Debug, Clone)]
pub struct Problem {
    pub ny: usize,
    pub nx: usize,
    pub h: f64,
    pub t: f64,
    pub node_inputs: Array2<f64>,
    pub cell_inputs: Array2<f64>,
    measured: Array2<f64>,
}

fn channel(a: &Array2<f64>, c: usize, ny: usize, nx: usize) -> Array2<f64> {
    a.column(c).to_owned().into_shape_with_order((ny, nx)).expect("lattice shape")
}

fn fill_column(target: &mut Array2<f64>, c: usize, grid: ArrayView2<f64>) {
    for (dst, src) in target.column_mut(c).iter_mut().zip(grid.iter()) {
        *dst = *src;
    }
}

impl Problem {
    pub fn new(dataset: &Dataset, encoding: &crate::network::EncodingConfig) -> Result<Self> {
        dataset.validate()?;
        let (ny, nx) = dataset.dim();
        if ny < 4 || nx < 4 {
            return Err(Error::GridTooSmall {
                what: "loss evaluation",
                min_rows: 4,
                min_cols: 4,
                rows: ny,
                cols: nx,
            });
        }
        let mut measured = Array2::zeros((ny * nx, 2));
        fill_column(&mut measured, 0, dataset.measured.ux.values().view());
        fill_column(&mut measured, 1, dataset.measured.uy.values().view());
        Ok(Problem {
            ny,
            nx,
            h: dataset.h(),
            t: dataset.t(),
            node_inputs: encode_batch(&node_coords(ny, nx, encoding.frame), encoding),
            cell_inputs: encode_batch(&cell_coords(ny, nx, encoding.frame), encoding),
            measured,
        })
    }

    pub fn nodes(&self) -> usize {
        self.ny * self.nx
    }

    pub fn cells(&self) -> usize {
        (self.ny - 1) * (self.nx - 1)
    }

    /// Evaluates the selected terms from raw outputs, and optionally the
    /// gradients of the weighted objective with respect to those outputs.
    pub fn objective(
        &self,
        pred: &Predictions,
        weights: &LossWeights,
        e_c: f64,
        terms: Terms,
        want_grad: bool,
    ) -> Result<(LossBreakdown, Option<OutputGradients>)> {
        check_target(e_c)?;
        let (ny, nx) = (self.ny, self.nx);
        let (cy, cx) = (ny - 1, nx - 1);
        let n_nodes = self.nodes() as f64;
        let n_cells = self.cells() as f64;
        if pred.displacement.dim() != (self.nodes(), 2) {
            return Err(Error::DimensionMismatch(format!(
                "displacement output {:?}, expected ({}, 2)",
                pred.displacement.dim(),
                self.nodes()
            )));
        }
        let mut out = LossBreakdown::default();
        let mut d_disp = Array2::zeros((self.nodes(), 2));

        if terms.displacement {
            let diff = &pred.displacement - &self.measured;
            out.l_u = diff.mapv(f64::abs).sum() / n_nodes;
            if want_grad {
                let g = weights.lambda_u / n_nodes;
                d_disp.zip_mut_with(&diff, |d, x| *d += g * sgn(*x));
            }
        }

        let need_strain = terms.strain || terms.physics;
        if need_strain && pred.strain.dim() != (self.cells(), 3) {
            return Err(Error::DimensionMismatch(format!(
                "strain output {:?}, expected ({}, 3)",
                pred.strain.dim(),
                self.cells()
            )));
        }
        if terms.physics && pred.elasticity.dim() != (self.cells(), 2) {
            return Err(Error::DimensionMismatch(format!(
                "elasticity output {:?}, expected ({}, 2)",
                pred.elasticity.dim(),
                self.cells()
            )));
        }
        let mut d_strain = need_strain.then(|| Array2::<f64>::zeros((self.cells(), 3)));

        if terms.strain {
            let ux = channel(&pred.displacement, 0, ny, nx);
            let uy = channel(&pred.displacement, 1, ny, nx);
            let derived = kernels::strain_arrays(ux.view(), uy.view());
            let mut d_derived: [Array2<f64>; 3] = std::array::from_fn(|_| Array2::zeros((cy, cx)));
            let mut acc = 0.0;
            let g = weights.lambda_eps / n_cells;
            for (c, der) in derived.iter().enumerate() {
                for (k, (p, d)) in pred.strain.column(c).iter().zip(der.iter()).enumerate() {
                    let diff = p - d;
                    acc += diff.abs();
                    if want_grad {
                        let s = g * sgn(diff);
                        d_strain.as_mut().expect("strain grad")[[k, c]] += s;
                        d_derived[c][[k / cx, k % cx]] -= s;
                    }
                }
            }
            out.l_eps = acc / n_cells;
            if want_grad {
                let mut dux = Array2::zeros((ny, nx));
                let mut duy = Array2::zeros((ny, nx));
                let [dexx, deyy, dgxy] = &d_derived;
                kernels::correlate_adjoint_into(dexx.view(), &W_X, 1.0, &mut dux);
                kernels::correlate_adjoint_into(dgxy.view(), &W_Y, 1.0, &mut dux);
                kernels::correlate_adjoint_into(deyy.view(), &W_Y, 1.0, &mut duy);
                kernels::correlate_adjoint_into(dgxy.view(), &W_X, 1.0, &mut duy);
                for (k, (a, b)) in dux.iter().zip(duy.iter()).enumerate() {
                    d_disp[[k, 0]] += a;
                    d_disp[[k, 1]] += b;
                }
            }
        }

        let mut d_elas = None;
        if terms.physics {
            let (breakdown_r, breakdown_e, grads) = self.physics_terms(pred, weights, e_c, want_grad)?;
            out.l_r = breakdown_r;
            out.l_e = breakdown_e;
            if let Some((ds, de)) = grads {
                *d_strain.as_mut().expect("strain grad") += &ds;
                d_elas = Some(de);
            }
        }

        let active = LossWeights {
            lambda_u: if terms.displacement { weights.lambda_u } else { 0.0 },
            lambda_eps: if terms.strain { weights.lambda_eps } else { 0.0 },
            lambda_r: if terms.physics { weights.lambda_r } else { 0.0 },
            lambda_e: if terms.physics { weights.lambda_e } else { 0.0 },
        };
        out.total = out.weighted_total(&active);
        let grads = want_grad.then(|| OutputGradients {
            displacement: d_disp,
            strain: d_strain,
            elasticity: d_elas,
        });
        Ok((out, grads))
    }

    #[allow(clippy::type_complexity)]
    fn physics_terms(
        &self,
        pred: &Predictions,
        weights: &LossWeights,
        e_c: f64,
        want_grad: bool,
    ) -> Result<(f64, f64, Option<(Array2<f64>, Array2<f64>)>)> {
        let (cy, cx) = (self.ny - 1, self.nx - 1);
        let (ky, kx) = (cy - 2, cx - 2);
        let m = self.cells();
        let n_cells = m as f64;
        let n_res = (ky * kx) as f64;
        let inv_ht = 1.0 / (self.h * self.t);

        let e = channel(&pred.elasticity, 0, cy, cx);
        let mut sxx = Array2::zeros((cy, cx));
        let mut syy = Array2::zeros((cy, cx));
        let mut txy = Array2::zeros((cy, cx));
        for k in 0..m {
            let (i, j) = (k / cx, k % cx);
            let (a, b, c) = kernels::plane_stress(
                pred.elasticity[[k, 0]],
                pred.elasticity[[k, 1]],
                pred.strain[[k, 0]],
                pred.strain[[k, 1]],
                pred.strain[[k, 2]],
            );
            sxx[[i, j]] = a;
            syy[[i, j]] = b;
            txy[[i, j]] = c;
        }
        let [rx, ry] = kernels::residual_arrays(sxx.view(), syy.view(), txy.view(), self.h, self.t);
        let e_sum = kernels::correlate(e.view(), &SUM3);
        if let Some(v) = e_sum.iter().find(|v| !(**v > 0.0)) {
            return Err(Error::Invalid(format!("local modulus sum must be positive, got {v}")));
        }
        let mut l_r = 0.0;
        ndarray::Zip::from(&rx)
            .and(&ry)
            .and(&e_sum)
            .for_each(|a, b, es| l_r += (a.abs() + b.abs()) / es);
        l_r /= n_res;
        let l_e = e.iter().map(|v| (v - e_c).abs()).sum::<f64>() / n_cells;

        if !want_grad {
            return Ok((l_r, l_e, None));
        }

        let g = weights.lambda_r / n_res;
        let drx = Array2::from_shape_fn((ky, kx), |(i, j)| g * sgn(rx[[i, j]]) / e_sum[[i, j]]);
        let dry = Array2::from_shape_fn((ky, kx), |(i, j)| g * sgn(ry[[i, j]]) / e_sum[[i, j]]);
        let de_sum = Array2::from_shape_fn((ky, kx), |(i, j)| {
            -g * (rx[[i, j]].abs() + ry[[i, j]].abs()) / (e_sum[[i, j]] * e_sum[[i, j]])
        });
        let mut dsxx = Array2::zeros((cy, cx));
        let mut dsyy = Array2::zeros((cy, cx));
        let mut dtxy = Array2::zeros((cy, cx));
        kernels::correlate_adjoint_into(drx.view(), &W_DX3, inv_ht, &mut dsxx);
        kernels::correlate_adjoint_into(drx.view(), &W_DY3, inv_ht, &mut dtxy);
        kernels::correlate_adjoint_into(dry.view(), &W_DY3, inv_ht, &mut dsyy);
        kernels::correlate_adjoint_into(dry.view(), &W_DX3, inv_ht, &mut dtxy);
        let mut de_grid = Array2::zeros((cy, cx));
        kernels::correlate_adjoint_into(de_sum.view(), &SUM3, 1.0, &mut de_grid);

        let ge = weights.lambda_e / n_cells;
        let mut d_strain = Array2::zeros((m, 3));
        let mut d_elas = Array2::zeros((m, 2));
        for k in 0..m {
            let (i, j) = (k / cx, k % cx);
            let (ev, nu) = (pred.elasticity[[k, 0]], pred.elasticity[[k, 1]]);
            let (exx, eyy, gxy) = (pred.strain[[k, 0]], pred.strain[[k, 1]], pred.strain[[k, 2]]);
            let (gs, gy, gt) = (dsxx[[i, j]], dsyy[[i, j]], dtxy[[i, j]]);
            let q = 1.0 - nu * nu;
            let kf = ev / q;
            let dk_dnu = 2.0 * ev * nu / (q * q);
            // sxx = k (exx + nu eyy), syy = k (nu exx + eyy), txy = E gxy / (2 (1 + nu))
            d_strain[[k, 0]] = kf * (gs + nu * gy);
            d_strain[[k, 1]] = kf * (nu * gs + gy);
            d_strain[[k, 2]] = gt * ev / (2.0 * (1.0 + nu));
            let d_e = gs * (exx + nu * eyy) / q + gy * (nu * exx + eyy) / q + gt * gxy / (2.0 * (1.0 + nu));
            let d_nu = gs * (dk_dnu * (exx + nu * eyy) + kf * eyy)
                + gy * (dk_dnu * (nu * exx + eyy) + kf * exx)
                - gt * ev * gxy / (2.0 * (1.0 + nu) * (1.0 + nu));
            d_elas[[k, 0]] = d_e + de_grid[[i, j]] + ge * sgn(ev - e_c);
            d_elas[[k, 1]] = d_nu;
        }
        Ok((l_r, l_e, Some((d_strain, d_elas))))
    }

    /// Runs the networks needed for `terms` on this problem's lattices.
    pub fn predict(&self, nets: &Networks, terms: Terms) -> Result<(Predictions, Caches)> {
        let (displacement, dc) = nets.displacement.forward_encoded(&self.node_inputs)?;
        let (strain, sc) = if terms.strain || terms.physics {
            let (o, c) = nets.strain.forward_encoded(&self.cell_inputs)?;
            (o, Some(c))
        } else {
            (Array2::zeros((0, 3)), None)
        };
        let (elasticity, ec) = if terms.physics {
            let (o, c) = nets.elasticity.forward_encoded(&self.cell_inputs)?;
            (o, Some(c))
        } else {
            (Array2::zeros((0, 2)), None)
        };
        Ok((
            Predictions {
                displacement,
                strain,
                elasticity,
            },
            Caches {
                displacement: dc,
                strain: sc,
                elasticity: ec,
            },
        ))
    }

    /// Objective value and parameter gradients for all three networks.
    /// Networks not involved in `terms` get an all-zero gradient.
    pub fn value_and_gradients(
        &self,
        nets: &Networks,
        weights: &LossWeights,
        e_c: f64,
        terms: Terms,
    ) -> Result<(LossBreakdown, [Vec<f64>; 3])> {
        let (pred, caches) = self.predict(nets, terms)?;
        let (breakdown, grads) = self.objective(&pred, weights, e_c, terms, true)?;
        let grads = grads.expect("requested");
        let gu = nets.displacement.backward(&caches.displacement, &grads.displacement);
        let ge = match (&caches.strain, &grads.strain) {
            (Some(c), Some(g)) => nets.strain.backward(c, g),
            _ => vec![0.0; nets.strain.num_params()],
        };
        let gm = match (&caches.elasticity, &grads.elasticity) {
            (Some(c), Some(g)) => nets.elasticity.backward(c, g),
            _ => vec![0.0; nets.elasticity.num_params()],
        };
        Ok((breakdown, [gu, ge, gm]))
    }

    pub fn value(&self, nets: &Networks, weights: &LossWeights, e_c: f64, terms: Terms) -> Result<LossBreakdown> {
        let (pred, _) = self.predict(nets, terms)?;
        Ok(self.objective(&pred, weights, e_c, terms, false)?.0)
    }
}

pub struct Caches {
    pub displacement: crate::network::ForwardCache,
    pub strain: Option<crate::network::ForwardCache>,
    pub elasticity: Option<crate::network::ForwardCache>,
}

/// Full four-term objective of the networks on a dataset.
pub fn total_loss(nets: &Networks, dataset: &Dataset, weights: &LossWeights, e_c: f64) -> Result<LossBreakdown> {
    weights.validate()?;
    let problem = Problem::new(dataset, nets.displacement.encoding())?;
    problem.value(nets, weights, e_c, Terms::ALL)
}

/// Full objective from already-evaluated fields (predicted displacement on the
/// node lattice, predicted strain and elasticity on the cell lattice).
pub fn total_loss_from_fields(
    displacement: &DisplacementField,
    strain: &StrainField,
    elasticity: &ElasticityField,
    dataset: &Dataset,
    weights: &LossWeights,
    e_c: f64,
) -> Result<LossBreakdown> {
    weights.validate()?;
    let (ny, nx) = dataset.dim();
    if displacement.dim() != (ny, nx) || strain.dim() != (ny - 1, nx - 1) || elasticity.dim() != strain.dim() {
        return Err(Error::DimensionMismatch(format!(
            "fields {:?}/{:?}/{:?} do not fit dataset {:?}",
            displacement.dim(),
            strain.dim(),
            elasticity.dim(),
            (ny, nx)
        )));
    }
    let m = (ny - 1) * (nx - 1);
    let mut pred = Predictions {
        displacement: Array2::zeros((ny * nx, 2)),
        strain: Array2::zeros((m, 3)),
        elasticity: Array2::zeros((m, 2)),
    };
    fill_column(&mut pred.displacement, 0, displacement.ux.values().view());
    fill_column(&mut pred.displacement, 1, displacement.uy.values().view());
    for (c, g) in strain.channels().iter().enumerate() {
        fill_column(&mut pred.strain, c, g.values().view());
    }
    fill_column(&mut pred.elasticity, 0, elasticity.e.values().view());
    fill_column(&mut pred.elasticity, 1, elasticity.nu.values().view());
    let problem = Problem {
        ny,
        nx,
        h: dataset.h(),
        t: dataset.t(),
        node_inputs: Array2::zeros((0, 0)),
        cell_inputs: Array2::zeros((0, 0)),
        measured: {
            let mut m = Array2::zeros((ny * nx, 2));
            fill_column(&mut m, 0, dataset.measured.ux.values().view());
            fill_column(&mut m, 1, dataset.measured.uy.values().view());
            m
        },
    };
    Ok(problem.objective(&pred, weights, e_c, Terms::ALL, false)?.0)
}

/// Splits an `N x C` output matrix into per-channel grids of shape `ny x nx`.
pub(crate) fn split_channels(out: &Array2<f64>, ny: usize, nx: usize) -> Vec<Array2<f64>> {
    (0..out.ncols()).map(|c| channel(out, c, ny, nx)).collect()
}
