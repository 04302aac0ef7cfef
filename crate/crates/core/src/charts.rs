//! Affine charts on a moduli family: `R` (relative flux periods) and `S`
//! (special flux periods) from a fixed basepoint lift, their transition
//! maps, the pulled-back forms `B` and `W`, and the Hessian potential.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ambient::AmbientModel;
use crate::dec::{Cochain, DecError, HodgeStructure};
use crate::flux::{self, FluxError, FluxOptions, ImmersionPath, PathSample};
use crate::immersion::{pullback_metric, ImmersionError, ImmersionFamily};
use crate::mesh::{CycleBasis, MeshError, SimplicialMesh};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChartError {
    #[error(transparent)]
    Flux(#[from] FluxError),
    #[error(transparent)]
    Immersion(#[from] ImmersionError),
    #[error(transparent)]
    Dec(#[from] DecError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("chart Jacobian is singular (smallest singular value {0:e})")]
    SingularJacobian(f64),
    #[error("need at least {needed} affinely independent samples, got {found}")]
    InsufficientSamples { needed: usize, found: usize },
    #[error("sample sets are not evaluated at the same parameters")]
    MismatchedSamples,
    #[error("Jacobian dv/du is not symmetric (residual {0:e})")]
    AsymmetricJacobian(f64),
    #[error("duality pairing is singular")]
    SingularPairing,
    #[error("invalid chart input: {0}")]
    Invalid(String),
}

/// Chart coordinates of one parameter point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSample {
    pub u: Vec<f64>,
    pub r: Vec<f64>,
    pub s: Vec<f64>,
    pub lift: String,
}

/// Intersection pairing of the relative and absolute cycle bases and the
/// constant forms `B`, `W` on `V x V*`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairingStructure {
    pub p: DMatrix<f64>,
    /// Whether the absolute basis was reordered or re-signed to reach `P = Id`.
    pub normalized: bool,
}

impl PairingStructure {
    /// `P_jk = (alpha_j u beta_k)[L]` for the dual cocycles of the bases.
    pub fn compute(mesh: &SimplicialMesh, relative: &CycleBasis, absolute: &CycleBasis) -> Self {
        let p = DMatrix::from_fn(relative.len(), absolute.len(), |j, k| {
            mesh.cup_pairing(&relative.cocycles[j], &absolute.cocycles[k]) as f64
        });
        Self {
            p,
            normalized: false,
        }
    }

    /// Reorder and re-sign `absolute` so that `P = Id` when `P` is a signed
    /// permutation.
    pub fn normalize(
        mesh: &SimplicialMesh,
        relative: &CycleBasis,
        absolute: &mut CycleBasis,
    ) -> Result<Self, ChartError> {
        let raw = Self::compute(mesh, relative, absolute);
        let m = raw.p.nrows();
        if m != raw.p.ncols() {
            return Err(ChartError::SingularPairing);
        }
        let mut target = Vec::with_capacity(m);
        for j in 0..m {
            let nz: Vec<usize> = (0..m).filter(|&k| raw.p[(j, k)] != 0.0).collect();
            if nz.len() != 1 || raw.p[(j, nz[0])].abs() != 1.0 || target.contains(&nz[0]) {
                if raw.p.clone().svd(false, false).singular_values.min() < 1e-12 {
                    return Err(ChartError::SingularPairing);
                }
                return Ok(raw);
            }
            target.push(nz[0]);
        }
        let changed = target.iter().enumerate().any(|(j, &k)| j != k || raw.p[(j, k)] < 0.0);
        let old = absolute.clone();
        for (j, &k) in target.iter().enumerate() {
            let sign = raw.p[(j, k)] as i64;
            absolute.cycles[j] = old.cycles[k].scaled(sign);
            absolute.cocycles[j] = old.cocycles[k].iter().map(|x| x * sign).collect();
        }
        let mut out = Self::compute(mesh, relative, absolute);
        out.normalized = changed;
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.p.nrows()
    }

    /// `B((u,v),(u',v')) = (u^T P v' + u'^T P v) / 2` as a `2m x 2m` matrix.
    pub fn b_matrix(&self) -> DMatrix<f64> {
        let m = self.dim();
        let mut b = DMatrix::zeros(2 * m, 2 * m);
        b.view_mut((0, m), (m, m)).copy_from(&(&self.p * 0.5));
        b.view_mut((m, 0), (m, m)).copy_from(&(self.p.transpose() * 0.5));
        b
    }

    /// `W((u,v),(u',v')) = u^T P v' - u'^T P v`.
    pub fn w_matrix(&self) -> DMatrix<f64> {
        let m = self.dim();
        let mut w = DMatrix::zeros(2 * m, 2 * m);
        w.view_mut((0, m), (m, m)).copy_from(&self.p);
        w.view_mut((m, 0), (m, m)).copy_from(&(-self.p.transpose()));
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChartOptions {
    pub flux: FluxOptions,
    pub intervals: usize,
    /// Finite-difference step; `None` picks `1e-3` of the domain diameter.
    pub step: Option<f64>,
    pub singular_tol: f64,
    pub symmetry_tol: f64,
}

impl Default for ChartOptions {
    fn default() -> Self {
        Self {
            flux: FluxOptions::default(),
            intervals: flux::DEFAULT_INTERVALS,
            step: None,
            singular_tol: 1e-8,
            symmetry_tol: 1e-6,
        }
    }
}

/// Derivatives of the chart map at a point, with their period-matrix
/// counterparts at the basepoint.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartJacobian {
    /// `dr[(j, i)] = dR_j / du_i`
    pub dr: DMatrix<f64>,
    pub ds: DMatrix<f64>,
    /// Periods of the tangent 1-forms on the relative basis.
    pub tangent_periods: DMatrix<f64>,
    /// Periods of their Hodge stars on the absolute basis.
    pub star_periods: DMatrix<f64>,
    pub dr_error: f64,
    pub ds_error: f64,
    pub min_singular_value: f64,
}

/// `B` and `W` pulled back to parameter space at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct FormSample {
    pub u: Vec<f64>,
    pub b_gram: DMatrix<f64>,
    pub w: DMatrix<f64>,
}

/// A chart centred at `family(base)`.
#[derive(Debug, Clone)]
pub struct Chart {
    family: Arc<ImmersionFamily>,
    base: Vec<f64>,
    relative: CycleBasis,
    absolute: CycleBasis,
    pairing: PairingStructure,
    options: ChartOptions,
    lift: String,
    diameter: f64,
}

impl Chart {
    pub fn new(
        family: Arc<ImmersionFamily>,
        base: &[f64],
        lift: impl Into<String>,
        options: ChartOptions,
    ) -> Result<Self, ChartError> {
        if base.len() != family.num_params() {
            return Err(ChartError::Invalid(format!(
                "basepoint has {} entries, family has {} parameters",
                base.len(),
                family.num_params()
            )));
        }
        let mesh = family.mesh().clone();
        let relative = mesh.relative_cycle_basis()?;
        let mut absolute = mesh.absolute_cycle_basis()?;
        let pairing = PairingStructure::normalize(&mesh, &relative, &mut absolute)?;
        Ok(Self {
            family,
            base: base.to_vec(),
            relative,
            absolute,
            pairing,
            options,
            lift: lift.into(),
            diameter: 1.0,
        })
    }

    /// Chart with explicitly supplied cycle bases.
    pub fn with_bases(
        family: Arc<ImmersionFamily>,
        base: &[f64],
        lift: impl Into<String>,
        options: ChartOptions,
        relative: CycleBasis,
        absolute: CycleBasis,
    ) -> Result<Self, ChartError> {
        let mut chart = Self::new(family, base, lift, options)?;
        chart.pairing = PairingStructure::compute(chart.family.mesh(), &relative, &absolute);
        chart.relative = relative;
        chart.absolute = absolute;
        Ok(chart)
    }

    /// Diameter of the parameter domain, used to scale the default step.
    pub fn with_diameter(mut self, diameter: f64) -> Self {
        self.diameter = diameter;
        self
    }

    pub fn family(&self) -> &Arc<ImmersionFamily> {
        &self.family
    }

    pub fn base(&self) -> &[f64] {
        &self.base
    }

    pub fn relative_basis(&self) -> &CycleBasis {
        &self.relative
    }

    pub fn absolute_basis(&self) -> &CycleBasis {
        &self.absolute
    }

    pub fn pairing(&self) -> &PairingStructure {
        &self.pairing
    }

    pub fn options(&self) -> &ChartOptions {
        &self.options
    }

    pub fn dim(&self) -> usize {
        self.family.num_params()
    }

    fn step(&self) -> f64 {
        self.options.step.unwrap_or(1e-3 * self.diameter)
    }

    /// `(R, S)` along the straight parameter path from the basepoint to `u`.
    pub fn evaluate(&self, model: &AmbientModel, u: &[f64]) -> Result<ChartSample, ChartError> {
        if u.len() != self.dim() {
            return Err(ChartError::Invalid(format!("point has {} entries", u.len())));
        }
        let zero = u.iter().zip(&self.base).all(|(a, b)| a == b);
        let (r, s) = if zero {
            (vec![0.0; self.relative.len()], vec![0.0; self.absolute.len()])
        } else {
            let path = ImmersionPath::straight(self.family.clone(), &self.base, u)?
                .with_intervals(self.options.intervals);
            (
                flux::relative_flux(model, &path, &self.relative, &self.options.flux)?.periods,
                flux::special_flux(model, &path, &self.absolute, &self.options.flux)?.periods,
            )
        };
        Ok(ChartSample {
            u: u.to_vec(),
            r,
            s,
            lift: self.lift.clone(),
        })
    }

    pub fn evaluate_grid(
        &self,
        model: &AmbientModel,
        points: &[Vec<f64>],
    ) -> Result<Vec<ChartSample>, ChartError> {
        points.par_iter().map(|u| self.evaluate(model, u)).collect()
    }

    /// Central-difference derivatives of `(R, S)` at `u`, with one
    /// Richardson step.
    pub fn derivatives(
        &self,
        model: &AmbientModel,
        u: &[f64],
    ) -> Result<(DMatrix<f64>, DMatrix<f64>), ChartError> {
        let m = self.dim();
        let h = self.step();
        let mut dr = DMatrix::zeros(self.relative.len(), m);
        let mut ds = DMatrix::zeros(self.absolute.len(), m);
        for i in 0..m {
            let shifted = |d: f64| {
                let mut p = u.to_vec();
                p[i] += d;
                p
            };
            let pts = [shifted(h), shifted(-h), shifted(h / 2.0), shifted(-h / 2.0)];
            let ev = self.evaluate_grid(model, &pts)?;
            let diff = |a: &[f64], b: &[f64], c: &[f64], d: &[f64]| -> Vec<f64> {
                (0..a.len())
                    .map(|j| {
                        let coarse = (a[j] - b[j]) / (2.0 * h);
                        let fine = (c[j] - d[j]) / h;
                        (4.0 * fine - coarse) / 3.0
                    })
                    .collect()
            };
            let r = diff(&ev[0].r, &ev[1].r, &ev[2].r, &ev[3].r);
            let s = diff(&ev[0].s, &ev[1].s, &ev[2].s, &ev[3].s);
            dr.column_mut(i).copy_from_slice(&r);
            ds.column_mut(i).copy_from_slice(&s);
        }
        Ok((dr, ds))
    }

    /// Tangent 1-forms of the family at the basepoint, one per parameter.
    pub fn tangent_forms(&self, model: &AmbientModel) -> Vec<Cochain> {
        let mesh = self.family.mesh();
        (0..self.dim())
            .map(|i| {
                let mut dir = vec![0.0; self.dim()];
                dir[i] = 1.0;
                let (p, v) = self.family.positions_and_velocities(&self.base, &dir);
                let sample = PathSample {
                    t: 0.0,
                    positions: p.iter().map(|x| DVector::from_column_slice(x)).collect(),
                    velocities: v.iter().map(|x| DVector::from_column_slice(x)).collect(),
                };
                flux::tangent_one_form(model, mesh, &sample)
            })
            .collect()
    }

    /// Hodge structure of the pulled-back metric at the basepoint.
    pub fn hodge(&self, model: &AmbientModel) -> Result<HodgeStructure, ChartError> {
        let imm = self.family.immersion(model, &self.base)?;
        let metric = pullback_metric(model, &imm)?;
        Ok(HodgeStructure::assemble(self.family.mesh().clone(), metric)?)
    }

    /// Chart Jacobian at the basepoint, checked against the period
    /// matrices of the tangent forms and their Hodge stars.
    pub fn jacobian(&self, model: &AmbientModel) -> Result<ChartJacobian, ChartError> {
        let (dr, ds) = self.derivatives(model, &self.base)?;
        let hodge = self.hodge(model)?;
        let thetas = self.tangent_forms(model);
        let stars = thetas
            .iter()
            .map(|t| hodge.star(t))
            .collect::<Result<Vec<_>, _>>()?;
        let tangent_periods = crate::dec::period_matrix(&self.relative, &thetas)?;
        let star_periods = crate::dec::period_matrix(&self.absolute, &stars)?;
        let min_singular_value = if dr.is_empty() {
            0.0
        } else {
            dr.clone().svd(false, false).singular_values.min()
        };
        let scale = dr.amax().max(f64::MIN_POSITIVE);
        if min_singular_value <= self.options.singular_tol * scale {
            return Err(ChartError::SingularJacobian(min_singular_value));
        }
        Ok(ChartJacobian {
            dr_error: (&dr - &tangent_periods).amax(),
            ds_error: (&ds - &star_periods).amax(),
            dr,
            ds,
            tangent_periods,
            star_periods,
            min_singular_value,
        })
    }

    /// `G_il = <theta_i, theta_l>` in the L2 metric of the basepoint.
    pub fn l2_gram(&self, model: &AmbientModel) -> Result<DMatrix<f64>, ChartError> {
        let hodge = self.hodge(model)?;
        let thetas = self.tangent_forms(model);
        let m = thetas.len();
        Ok(DMatrix::from_fn(m, m, |i, l| hodge.inner(&thetas[i], &thetas[l])))
    }

    /// `F^*B` and `F^*W` at each point, from finite-difference tangents.
    pub fn pullback_forms(
        &self,
        model: &AmbientModel,
        points: &[Vec<f64>],
    ) -> Result<Vec<FormSample>, ChartError> {
        let b = self.pairing.b_matrix();
        let w = self.pairing.w_matrix();
        points
            .iter()
            .map(|u| {
                let (dr, ds) = self.derivatives(model, u)?;
                let mut tangent = DMatrix::zeros(dr.nrows() + ds.nrows(), dr.ncols());
                tangent.view_mut((0, 0), dr.shape()).copy_from(&dr);
                tangent.view_mut((dr.nrows(), 0), ds.shape()).copy_from(&ds);
                Ok(FormSample {
                    u: u.clone(),
                    b_gram: tangent.transpose() * &b * &tangent,
                    w: tangent.transpose() * &w * &tangent,
                })
            })
            .collect()
    }
}

/// Least-squares affine map between two charts' coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineFit {
    /// Row-major linear part.
    pub linear: Vec<Vec<f64>>,
    pub translation: Vec<f64>,
    /// Fit residual relative to the spread of the target data.
    pub residual: f64,
    pub det: f64,
}

impl AffineFit {
    pub fn linear_matrix(&self) -> DMatrix<f64> {
        let m = self.linear.len();
        DMatrix::from_fn(m, m, |i, j| self.linear[i][j])
    }

    pub fn volume_defect(&self) -> f64 {
        (self.det - 1.0).abs()
    }
}

/// Fits `y = A x + b`.
pub fn affine_fit(xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Result<AffineFit, ChartError> {
    if xs.len() != ys.len() {
        return Err(ChartError::MismatchedSamples);
    }
    let m = xs.first().map_or(0, Vec::len);
    let k = ys.first().map_or(0, Vec::len);
    let n = xs.len();
    if n < m + 1 {
        return Err(ChartError::InsufficientSamples {
            needed: m + 1,
            found: n,
        });
    }
    let x = DMatrix::from_fn(n, m + 1, |i, j| if j < m { xs[i][j] } else { 1.0 });
    let y = DMatrix::from_fn(n, k, |i, j| ys[i][j]);
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() <= 1e-12 * smax {
        return Err(ChartError::InsufficientSamples {
            needed: m + 1,
            found: svd.singular_values.iter().filter(|&&s| s > 1e-12 * smax).count(),
        });
    }
    let coef = svd
        .solve(&y, 1e-14 * smax)
        .map_err(|e| ChartError::Invalid(e.to_string()))?;
    let resid = (&x * &coef - &y).norm();
    let mean = y.row_mean();
    let spread = (0..n)
        .map(|i| (y.row(i) - &mean).norm_squared())
        .sum::<f64>()
        .sqrt();
    let a = coef.rows(0, m).transpose();
    let det = if a.is_square() { a.determinant() } else { f64::NAN };
    Ok(AffineFit {
        linear: (0..a.nrows()).map(|i| a.row(i).iter().copied().collect()).collect(),
        translation: coef.row(m).iter().copied().collect(),
        residual: if spread > 0.0 { resid / spread } else { resid },
        det,
    })
}

/// Transition between two charts evaluated at the same parameter points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionFit {
    pub r: AffineFit,
    pub s: AffineFit,
}

pub fn transition_affine_fit(
    first: &[ChartSample],
    second: &[ChartSample],
) -> Result<TransitionFit, ChartError> {
    if first.len() != second.len()
        || first
            .iter()
            .zip(second)
            .any(|(a, b)| a.u.iter().zip(&b.u).any(|(x, y)| (x - y).abs() > 1e-12))
    {
        return Err(ChartError::MismatchedSamples);
    }
    let pick = |s: &[ChartSample], f: fn(&ChartSample) -> &Vec<f64>| -> Vec<Vec<f64>> {
        s.iter().map(|c| f(c).clone()).collect()
    };
    Ok(TransitionFit {
        r: affine_fit(&pick(first, |c| &c.r), &pick(second, |c| &c.r))?,
        s: affine_fit(&pick(first, |c| &c.s), &pick(second, |c| &c.s))?,
    })
}

/// Polynomial potential `h(u)` with `grad h ~ v` over chart samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HessianFit {
    pub degree: usize,
    /// Monomial exponents, one per coefficient.
    pub exponents: Vec<Vec<u32>>,
    pub coefficients: Vec<f64>,
    pub center: Vec<f64>,
    pub scale: f64,
    /// `|grad h - v| / |v|` over the samples.
    pub gradient_residual: f64,
    /// Max relative antisymmetric part of the fitted `dv/du`.
    pub symmetry_residual: f64,
}

fn monomials(m: usize, degree: usize) -> Vec<Vec<u32>> {
    fn rec(m: usize, left: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == m {
            out.push(prefix.clone());
            return;
        }
        for e in 0..=left {
            prefix.push(e);
            rec(m, left - e, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(m, degree as u32, &mut Vec::new(), &mut out);
    out.retain(|e| e.iter().any(|&x| x > 0));
    out.sort_by_key(|e| (e.iter().sum::<u32>(), std::cmp::Reverse(e.clone())));
    out
}

/// `d/dx_i` of a monomial at `x`, and the second derivatives.
fn monomial_grad(e: &[u32], x: &[f64], i: usize) -> f64 {
    if e[i] == 0 {
        return 0.0;
    }
    e.iter()
        .enumerate()
        .map(|(j, &k)| {
            if j == i {
                k as f64 * x[j].powi(k as i32 - 1)
            } else {
                x[j].powi(k as i32)
            }
        })
        .product()
}

fn monomial_hess(e: &[u32], x: &[f64], i: usize, l: usize) -> f64 {
    let mut e2 = e.to_vec();
    if e2[i] == 0 {
        return 0.0;
    }
    let c = e2[i] as f64;
    e2[i] -= 1;
    c * monomial_grad(&e2, x, l)
}

impl HessianFit {
    fn local(&self, u: &[f64]) -> Vec<f64> {
        u.iter().zip(&self.center).map(|(a, c)| (a - c) / self.scale).collect()
    }

    pub fn gradient(&self, u: &[f64]) -> Vec<f64> {
        let x = self.local(u);
        (0..x.len())
            .map(|i| {
                self.exponents
                    .iter()
                    .zip(&self.coefficients)
                    .map(|(e, c)| c * monomial_grad(e, &x, i))
                    .sum::<f64>()
                    / self.scale
            })
            .collect()
    }

    pub fn hessian(&self, u: &[f64]) -> DMatrix<f64> {
        let x = self.local(u);
        let m = x.len();
        DMatrix::from_fn(m, m, |i, l| {
            self.exponents
                .iter()
                .zip(&self.coefficients)
                .map(|(e, c)| c * monomial_hess(e, &x, i, l))
                .sum::<f64>()
                / (self.scale * self.scale)
        })
    }
}

fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>, ChartError> {
    let svd = a.clone().svd(true, true);
    let eps = 1e-12 * svd.singular_values.max();
    svd.solve(b, eps).map_err(|e| ChartError::Invalid(e.to_string()))
}

/// Fit `v = grad h(u)` on chart samples (`u = R`, `v = S`).
///
/// The symmetry residual comes from an unconstrained polynomial fit of the
/// field `v` of degree `degree - 1`; it must be below `symmetry_tol`.
pub fn hessian_fit(
    samples: &[ChartSample],
    degree: usize,
    symmetry_tol: f64,
) -> Result<HessianFit, ChartError> {
    let us: Vec<Vec<f64>> = samples.iter().map(|s| s.r.clone()).collect();
    let vs: Vec<Vec<f64>> = samples.iter().map(|s| s.s.clone()).collect();
    hessian_fit_field(&us, &vs, degree, symmetry_tol)
}

pub fn hessian_fit_field(
    us: &[Vec<f64>],
    vs: &[Vec<f64>],
    degree: usize,
    symmetry_tol: f64,
) -> Result<HessianFit, ChartError> {
    let m = us.first().map_or(0, Vec::len);
    if degree < 1 || us.len() != vs.len() || vs.iter().any(|v| v.len() != m) {
        return Err(ChartError::Invalid("sample shapes or degree".into()));
    }
    let n = us.len();
    let center: Vec<f64> = (0..m).map(|i| us.iter().map(|u| u[i]).sum::<f64>() / n as f64).collect();
    let scale = us
        .iter()
        .flat_map(|u| u.iter().zip(&center).map(|(a, c)| (a - c).abs()))
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let xs: Vec<Vec<f64>> = us
        .iter()
        .map(|u| u.iter().zip(&center).map(|(a, c)| (a - c) / scale).collect())
        .collect();

    // Unconstrained fit of each component of v; its Jacobian gives the
    // symmetry residual.
    let field_basis: Vec<Vec<u32>> = std::iter::once(vec![0; m])
        .chain(monomials(m, degree - 1))
        .collect();
    if n < field_basis.len() {
        return Err(ChartError::InsufficientSamples {
            needed: field_basis.len(),
            found: n,
        });
    }
    let eval = |e: &[u32], x: &[f64]| -> f64 { e.iter().zip(x).map(|(&k, v)| v.powi(k as i32)).product() };
    let a = DMatrix::from_fn(n, field_basis.len(), |r, c| eval(&field_basis[c], &xs[r]));
    let fields = (0..m)
        .map(|k| lstsq(&a, &DVector::from_fn(n, |r, _| vs[r][k])))
        .collect::<Result<Vec<_>, _>>()?;
    let mut symmetry_residual: f64 = 0.0;
    for x in &xs {
        let jac = DMatrix::from_fn(m, m, |k, i| {
            field_basis
                .iter()
                .zip(fields[k].iter())
                .map(|(e, c)| c * monomial_grad(e, x, i))
                .sum::<f64>()
        });
        let norm = jac.norm().max(f64::MIN_POSITIVE);
        symmetry_residual = symmetry_residual.max((&jac - jac.transpose()).norm() / norm);
    }

    // Potential fit: stack all gradient components.
    let exponents = monomials(m, degree);
    let mut a = DMatrix::zeros(n * m, exponents.len());
    let mut b = DVector::zeros(n * m);
    for (r, x) in xs.iter().enumerate() {
        for i in 0..m {
            for (c, e) in exponents.iter().enumerate() {
                a[(r * m + i, c)] = monomial_grad(e, x, i) / scale;
            }
            b[r * m + i] = vs[r][i];
        }
    }
    let coefficients = lstsq(&a, &b)?;
    let gradient_residual = (&a * &coefficients - &b).norm() / b.norm().max(f64::MIN_POSITIVE);
    if symmetry_residual > symmetry_tol {
        return Err(ChartError::AsymmetricJacobian(symmetry_residual));
    }
    Ok(HessianFit {
        degree,
        exponents,
        coefficients: coefficients.iter().copied().collect(),
        center,
        scale,
        gradient_residual,
        symmetry_residual,
    })
}

/// Summary of a set of charts and their transitions.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AtlasReport {
    pub transitions: Vec<TransitionRecord>,
    pub charts: Vec<ChartRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub from: String,
    pub to: String,
    pub fit: TransitionFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartRecord {
    pub lift: String,
    pub l2_gram: Vec<Vec<f64>>,
    pub b_gram: Vec<Vec<f64>>,
    pub max_w: f64,
    pub hessian: Option<HessianFit>,
}

pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}
