//! Flux functionals of paths of special Lagrangian immersions.
//!
//! Along a path `f_t` with velocity `V`, the tangent 1-form is
//! `theta_t = f_t^*(omega(V, .))` and the dual `(n-1)`-form is
//! `phi_t = f_t^*(Im Omega(V, ...))`. Integrating their cohomology classes in
//! time gives the relative flux (paired with `H_1(L, dL)`) and the special
//! flux (paired with `H_{n-1}(L)`).

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ambient::{AmbientError, AmbientModel};
use crate::dec::{self, Cochain};
use crate::expr::{Dual, Expr, ExprError};
use crate::immersion::{ImmersionError, ImmersionFamily};
use crate::mesh::{Chain, CycleBasis, CycleKind, MeshError, SimplicialMesh};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FluxError {
    #[error(transparent)]
    Immersion(#[from] ImmersionError),
    #[error(transparent)]
    Ambient(#[from] AmbientError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("sample at t = {t} is not Lagrangian (residual {residual:e})")]
    NonLagrangianSample { t: f64, residual: f64 },
    #[error("sample at t = {t} is not special (residual {residual:e})")]
    NonSpecialSample { t: f64, residual: f64 },
    #[error("velocity unavailable: {0}")]
    VelocityUnavailable(String),
    #[error("chain of degree {found} where degree {expected} is required")]
    DegreeMismatch { expected: usize, found: usize },
    #[error("paths do not share endpoints (distance {0:e})")]
    EndpointMismatch(f64),
    #[error("invalid path: {0}")]
    Invalid(String),
    #[error("swept-surface integrals are implemented for n <= 2")]
    UnsupportedDimension,
}

/// Curve in parameter space, `t` in `[0, 1]`.
#[derive(Debug, Clone)]
pub enum ParamCurve {
    Straight { from: Vec<f64>, to: Vec<f64> },
    /// One expression per parameter in the variables `t` and `u`.
    Exprs { exprs: Vec<Expr>, u: f64 },
}

impl ParamCurve {
    pub fn parse(srcs: &[String], u: f64) -> Result<Self, ExprError> {
        let exprs = srcs
            .iter()
            .map(|s| Expr::parse(s, &["t", "u"]))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ParamCurve::Exprs { exprs, u })
    }

    pub fn with_u(&self, u: f64) -> Self {
        match self {
            ParamCurve::Exprs { exprs, .. } => ParamCurve::Exprs {
                exprs: exprs.clone(),
                u,
            },
            other => other.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ParamCurve::Straight { from, .. } => from.len(),
            ParamCurve::Exprs { exprs, .. } => exprs.len(),
        }
    }

    /// Parameters and their time derivative at `t`.
    pub fn eval(&self, t: f64) -> (Vec<f64>, Vec<f64>) {
        match self {
            ParamCurve::Straight { from, to } => (
                from.iter().zip(to).map(|(a, b)| a + t * (b - a)).collect(),
                from.iter().zip(to).map(|(a, b)| b - a).collect(),
            ),
            ParamCurve::Exprs { exprs, u } => exprs
                .iter()
                .map(|e| {
                    let d = e.eval(&[Dual::var(t), Dual::new(*u, 0.0)]);
                    (d.re, d.du)
                })
                .unzip(),
        }
    }

}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum VelocityMode {
    /// Exact derivatives of the closed-form family.
    #[default]
    Analytic,
    /// Second-order finite differences of the time samples.
    FiniteDifference,
}

#[derive(Debug, Clone)]
enum Source {
    Family {
        family: Arc<ImmersionFamily>,
        curve: ParamCurve,
        reversed: bool,
    },
    /// Raw vertex positions at uniformly spaced times.
    Samples {
        mesh: Arc<SimplicialMesh>,
        positions: Vec<Vec<Vec<f64>>>,
    },
}

/// A piecewise path of immersions; each segment is sampled uniformly.
#[derive(Debug, Clone)]
pub struct ImmersionPath {
    segments: Vec<Source>,
    intervals: usize,
    velocity: VelocityMode,
}

/// Raw (continuous-lift) positions and velocities at one time.
#[derive(Debug, Clone)]
pub struct PathSample {
    pub t: f64,
    pub positions: Vec<DVector<f64>>,
    pub velocities: Vec<DVector<f64>>,
}

pub const DEFAULT_INTERVALS: usize = 32;

impl ImmersionPath {
    pub fn from_family(family: Arc<ImmersionFamily>, curve: ParamCurve) -> Result<Self, FluxError> {
        if curve.dim() != family.num_params() {
            return Err(FluxError::Invalid(format!(
                "curve has {} components, family has {} parameters",
                curve.dim(),
                family.num_params()
            )));
        }
        Ok(Self {
            segments: vec![Source::Family {
                family,
                curve,
                reversed: false,
            }],
            intervals: DEFAULT_INTERVALS,
            velocity: VelocityMode::Analytic,
        })
    }

    /// Straight segment `from -> to` in parameter space.
    pub fn straight(family: Arc<ImmersionFamily>, from: &[f64], to: &[f64]) -> Result<Self, FluxError> {
        Self::from_family(
            family,
            ParamCurve::Straight {
                from: from.to_vec(),
                to: to.to_vec(),
            },
        )
    }

    /// Explicit samples at `t_j = j / (len - 1)`; velocities by finite
    /// differences.
    pub fn from_samples(
        mesh: Arc<SimplicialMesh>,
        positions: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self, FluxError> {
        if positions.len() < 2 {
            return Err(FluxError::Invalid("need at least two samples".into()));
        }
        let intervals = positions.len() - 1;
        Ok(Self {
            segments: vec![Source::Samples { mesh, positions }],
            intervals,
            velocity: VelocityMode::FiniteDifference,
        })
    }

    pub fn with_intervals(mut self, intervals: usize) -> Self {
        if self.segments.iter().all(|s| matches!(s, Source::Family { .. })) {
            self.intervals = intervals.max(1);
        }
        self
    }

    pub fn with_velocity(mut self, mode: VelocityMode) -> Self {
        self.velocity = mode;
        self
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    /// This path followed by `next`.
    pub fn concat(&self, next: &ImmersionPath) -> Result<Self, FluxError> {
        if self.intervals != next.intervals || self.velocity != next.velocity {
            return Err(FluxError::Invalid("segments must share sampling".into()));
        }
        let mut segments = self.segments.clone();
        segments.extend(next.segments.iter().cloned());
        Ok(Self {
            segments,
            intervals: self.intervals,
            velocity: self.velocity,
        })
    }

    /// The same path run backwards.
    pub fn reversed(&self) -> Self {
        let segments = self
            .segments
            .iter()
            .rev()
            .map(|s| match s {
                Source::Family {
                    family,
                    curve,
                    reversed,
                } => Source::Family {
                    family: family.clone(),
                    curve: curve.clone(),
                    reversed: !reversed,
                },
                Source::Samples { mesh, positions } => Source::Samples {
                    mesh: mesh.clone(),
                    positions: positions.iter().rev().cloned().collect(),
                },
            })
            .collect();
        Self {
            segments,
            intervals: self.intervals,
            velocity: self.velocity,
        }
    }

    pub fn mesh(&self) -> Arc<SimplicialMesh> {
        match &self.segments[0] {
            Source::Family { family, .. } => family.mesh().clone(),
            Source::Samples { mesh, .. } => mesh.clone(),
        }
    }

    pub fn num_segments(&self) -> usize {
        self.segments.len()
    }

    fn family_state(
        family: &ImmersionFamily,
        curve: &ParamCurve,
        reversed: bool,
        t: f64,
    ) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let (s, sign) = if reversed { (1.0 - t, -1.0) } else { (t, 1.0) };
        let (p, dp) = curve.eval(s);
        let dp: Vec<f64> = dp.iter().map(|x| sign * x).collect();
        family.positions_and_velocities(&p, &dp)
    }

    /// Samples of every segment at `t_j = j / intervals`.
    pub fn sample(&self, model: &AmbientModel) -> Result<Vec<Vec<PathSample>>, FluxError> {
        self.segments
            .iter()
            .map(|seg| self.sample_segment(model, seg))
            .collect()
    }

    fn sample_segment(&self, model: &AmbientModel, seg: &Source) -> Result<Vec<PathSample>, FluxError> {
        let m = self.intervals;
        let times: Vec<f64> = (0..=m).map(|j| j as f64 / m as f64).collect();
        let raw: Vec<(Vec<Vec<f64>>, Option<Vec<Vec<f64>>>)> = match seg {
            Source::Family {
                family,
                curve,
                reversed,
            } => times
                .par_iter()
                .map(|&t| {
                    let (p, v) = Self::family_state(family, curve, *reversed, t);
                    (p, Some(v))
                })
                .collect(),
            Source::Samples { positions, .. } => {
                // Unwrap each vertex trajectory into a continuous lift.
                let mut lifted = positions.clone();
                for j in 1..lifted.len() {
                    for v in 0..lifted[j].len() {
                        let prev = lifted[j - 1][v].clone();
                        let d = model.displacement(&prev, &positions[j][v]);
                        lifted[j][v] = prev.iter().zip(d.iter()).map(|(a, b)| a + b).collect();
                    }
                }
                lifted.into_iter().map(|p| (p, None)).collect()
            }
        };
        let to_vecs = |ps: &[Vec<f64>]| -> Vec<DVector<f64>> {
            ps.iter().map(|p| DVector::from_column_slice(p)).collect()
        };
        let positions: Vec<Vec<DVector<f64>>> = raw.iter().map(|(p, _)| to_vecs(p)).collect();
        let velocities: Vec<Vec<DVector<f64>>> = match self.velocity {
            VelocityMode::Analytic => raw
                .iter()
                .map(|(_, v)| {
                    v.as_ref().map(|v| to_vecs(v)).ok_or_else(|| {
                        FluxError::VelocityUnavailable(
                            "sampled paths have no analytic velocity".into(),
                        )
                    })
                })
                .collect::<Result<_, _>>()?,
            VelocityMode::FiniteDifference => {
                if m < 2 {
                    return Err(FluxError::VelocityUnavailable(
                        "finite differences need at least three samples".into(),
                    ));
                }
                let h = 1.0 / m as f64;
                (0..=m)
                    .map(|j| {
                        (0..positions[j].len())
                            .map(|v| {
                                let p = |k: usize| &positions[k][v];
                                if j == 0 {
                                    (p(1) * 4.0 - p(0) * 3.0 - p(2)) / (2.0 * h)
                                } else if j == m {
                                    (p(m) * 3.0 - p(m - 1) * 4.0 + p(m - 2)) / (2.0 * h)
                                } else {
                                    (p(j + 1) - p(j - 1)) / (2.0 * h)
                                }
                            })
                            .collect()
                    })
                    .collect()
            }
        };
        Ok(times
            .into_iter()
            .zip(positions.into_iter().zip(velocities))
            .map(|(t, (positions, velocities))| PathSample {
                t,
                positions,
                velocities,
            })
            .collect())
    }
}

fn mean(vs: &[&DVector<f64>]) -> DVector<f64> {
    let mut acc = vs[0].clone();
    for v in &vs[1..] {
        acc += *v;
    }
    acc / vs.len() as f64
}

/// `theta_t` on every edge: `omega(mean velocity, edge vector)`.
pub fn tangent_one_form(model: &AmbientModel, mesh: &SimplicialMesh, s: &PathSample) -> Cochain {
    let values = mesh
        .simplices(1)
        .iter()
        .map(|e| {
            let (a, b) = (e[0], e[1]);
            let v = mean(&[&s.velocities[a], &s.velocities[b]]);
            let d = model.displacement(s.positions[a].as_slice(), s.positions[b].as_slice());
            model.omega(v.as_slice(), d.as_slice())
        })
        .collect();
    Cochain::new(1, values)
}

/// `phi_t` on every `(n-1)`-simplex: `Im Omega(mean velocity, e_1..e_{n-1})
/// / (n-1)!`.
pub fn dual_form(model: &AmbientModel, mesh: &SimplicialMesh, s: &PathSample) -> Cochain {
    let n = mesh.dim();
    let k = n - 1;
    let kfact: f64 = (1..=k).map(|i| i as f64).product();
    let values = mesh
        .simplices(k)
        .iter()
        .map(|simplex| {
            let vs: Vec<&DVector<f64>> = simplex.iter().map(|&v| &s.velocities[v]).collect();
            let v = mean(&vs);
            let p0 = s.positions[simplex[0]].as_slice();
            let edges: Vec<DVector<f64>> = simplex[1..]
                .iter()
                .map(|&q| model.displacement(p0, s.positions[q].as_slice()))
                .collect();
            let mut args: Vec<&[f64]> = vec![v.as_slice()];
            args.extend(edges.iter().map(|e| e.as_slice()));
            model.im_holomorphic(&args) / kfact
        })
        .collect();
    Cochain::new(k, values)
}

/// Scale-free Lagrangian and special residuals of one sample.
pub fn sample_residuals(model: &AmbientModel, mesh: &SimplicialMesh, s: &PathSample) -> (f64, f64) {
    let n = mesh.dim();
    let frame = |simplex: &[usize]| -> Vec<DVector<f64>> {
        let p0 = s.positions[simplex[0]].as_slice();
        simplex[1..]
            .iter()
            .map(|&q| model.displacement(p0, s.positions[q].as_slice()))
            .collect()
    };
    let mut lag: f64 = 0.0;
    if n >= 2 {
        for simplex in mesh.simplices(2) {
            let f = frame(simplex);
            lag = lag.max(model.omega(f[0].as_slice(), f[1].as_slice()).abs() / (f[0].norm() * f[1].norm()));
        }
    }
    let mut sp: f64 = 0.0;
    for simplex in mesh.simplices(n) {
        let f = frame(simplex);
        let refs: Vec<&[f64]> = f.iter().map(|v| v.as_slice()).collect();
        let norms: f64 = f.iter().map(|v| v.norm()).product();
        sp = sp.max(model.im_holomorphic(&refs).abs() / norms);
    }
    (lag, sp)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxOptions {
    pub lagrangian_tol: f64,
    pub special_tol: f64,
}

impl Default for FluxOptions {
    fn default() -> Self {
        Self {
            lagrangian_tol: 1e-10,
            special_tol: 1e-10,
        }
    }
}

/// Time-integrated class of the tangent or dual form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxClass {
    pub kind: CycleKind,
    pub periods: Vec<f64>,
    pub raw: Cochain,
    /// `max |d raw|`
    pub closed_residual: f64,
    /// `max |raw|` on boundary simplices (relative flux only).
    pub boundary_residual: f64,
    /// Richardson estimate of the time-quadrature error in the periods.
    pub quadrature_error: f64,
    pub samples: usize,
}

/// Simpson weights on `m` intervals when `m` is even, trapezoid otherwise.
pub fn quadrature_weights(m: usize) -> Vec<f64> {
    let h = 1.0 / m as f64;
    if m >= 2 && m % 2 == 0 {
        (0..=m)
            .map(|j| {
                let c = if j == 0 || j == m {
                    1.0
                } else if j % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                c * h / 3.0
            })
            .collect()
    } else {
        (0..=m)
            .map(|j| if j == 0 || j == m { h / 2.0 } else { h })
            .collect()
    }
}

/// Weights for an error estimate. On `4k` intervals this is the Richardson
/// difference between Simpson on the full and the half grid; on other even
/// counts Simpson is compared against the trapezoid rule.
fn error_weights(m: usize) -> Option<Vec<f64>> {
    if m % 2 == 1 {
        return None;
    }
    let fine = quadrature_weights(m);
    let other: Vec<f64> = if m % 4 == 0 {
        let coarse = quadrature_weights(m / 2);
        (0..=m)
            .map(|j| if j % 2 == 0 { coarse[j / 2] } else { 0.0 })
            .collect()
    } else {
        (0..=m)
            .map(|j| if j == 0 || j == m { 0.5 } else { 1.0 } / m as f64)
            .collect()
    };
    let factor = if m % 4 == 0 { 15.0 } else { 1.0 };
    Some(fine.iter().zip(&other).map(|(a, b)| (a - b) / factor).collect())
}

fn integrate_path<F>(
    model: &AmbientModel,
    path: &ImmersionPath,
    basis: &CycleBasis,
    opts: &FluxOptions,
    special: bool,
    form: F,
) -> Result<FluxClass, FluxError>
where
    F: Fn(&AmbientModel, &SimplicialMesh, &PathSample) -> Cochain + Sync,
{
    let mesh = path.mesh();
    let degree = if special { mesh.dim() - 1 } else { 1 };
    if basis.degree != degree {
        return Err(FluxError::DegreeMismatch {
            expected: degree,
            found: basis.degree,
        });
    }
    let m = path.intervals();
    let weights = quadrature_weights(m);
    let err_weights = error_weights(m);
    let size = mesh.num_simplices(degree);
    let mut raw = vec![0.0; size];
    let mut err = vec![0.0; size];
    let mut samples = 0;
    for segment in path.sample(model)? {
        let forms: Vec<Cochain> = segment
            .par_iter()
            .map(|s| {
                let (lag, sp) = sample_residuals(model, &mesh, s);
                if lag > opts.lagrangian_tol {
                    return Err(FluxError::NonLagrangianSample { t: s.t, residual: lag });
                }
                if special && sp > opts.special_tol {
                    return Err(FluxError::NonSpecialSample { t: s.t, residual: sp });
                }
                Ok(form(model, &mesh, s))
            })
            .collect::<Result<_, _>>()?;
        for (j, c) in forms.iter().enumerate() {
            for (r, v) in raw.iter_mut().zip(&c.values) {
                *r += weights[j] * v;
            }
            if let Some(ew) = &err_weights {
                for (r, v) in err.iter_mut().zip(&c.values) {
                    *r += ew[j] * v;
                }
            }
        }
        samples += segment.len();
    }
    let raw = Cochain::new(degree, raw);
    let periods: Vec<f64> = basis.cycles.iter().map(|c| c.pair(&raw.values)).collect();
    let quadrature_error = basis
        .cycles
        .iter()
        .map(|c| c.pair(&err).abs())
        .fold(0.0, f64::max);
    let closed_residual = dec::d(&mesh, &raw).max_abs();
    let boundary_residual = if special { 0.0 } else { raw.boundary_max(&mesh) };
    Ok(FluxClass {
        kind: basis.kind,
        periods,
        raw,
        closed_residual,
        boundary_residual,
        quadrature_error,
        samples,
    })
}

/// Relative flux: periods of `int_0^1 [theta_t] dt` on `H_1(L, dL)`.
pub fn relative_flux(
    model: &AmbientModel,
    path: &ImmersionPath,
    basis: &CycleBasis,
    opts: &FluxOptions,
) -> Result<FluxClass, FluxError> {
    integrate_path(model, path, basis, opts, false, tangent_one_form)
}

/// Special flux: periods of `int_0^1 [phi_t] dt` on `H_{n-1}(L)`.
pub fn special_flux(
    model: &AmbientModel,
    path: &ImmersionPath,
    basis: &CycleBasis,
    opts: &FluxOptions,
) -> Result<FluxClass, FluxError> {
    integrate_path(model, path, basis, opts, true, dual_form)
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = Vec::with_capacity(m);
    let mut weights = Vec::with_capacity(m);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pm = if m == 0 { 1.0 } else if m == 1 { x } else { p1 };
            let pm1 = if m == 1 { 1.0 } else { p0 };
            dp = m as f64 * (x * pm - pm1) / (x * x - 1.0);
            let dx = pm / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes.push(0.5 * (1.0 - x));
        weights.push(1.0 / ((1.0 - x * x) * dp * dp));
    }
    (nodes, weights)
}

/// Vertex trajectories used by the swept-surface oracles.
trait Trajectory {
    fn endpoints(&self, v: usize) -> (DVector<f64>, DVector<f64>);
    /// `int_0^1 alpha(p, dp/dt) dt / 2` for a constant 2-form `alpha`.
    fn liouville(&self, v: usize, alpha: &dyn Fn(&[f64], &[f64]) -> f64) -> f64;
}

struct FamilyTrajectory<'a> {
    family: &'a ImmersionFamily,
    curve: &'a ParamCurve,
    reversed: bool,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl FamilyTrajectory<'_> {
    fn state(&self, v: usize, t: f64) -> (DVector<f64>, DVector<f64>) {
        let (s, sign) = if self.reversed { (1.0 - t, -1.0) } else { (t, 1.0) };
        let (p, dp) = self.curve.eval(s);
        let duals: Vec<Dual> = p.iter().zip(&dp).map(|(&a, &b)| Dual::new(a, sign * b)).collect();
        let out = self.family.eval_vertex(v, &duals);
        (
            DVector::from_iterator(out.len(), out.iter().map(|d| d.re)),
            DVector::from_iterator(out.len(), out.iter().map(|d| d.du)),
        )
    }
}

impl Trajectory for FamilyTrajectory<'_> {
    fn endpoints(&self, v: usize) -> (DVector<f64>, DVector<f64>) {
        (self.state(v, 0.0).0, self.state(v, 1.0).0)
    }

    fn liouville(&self, v: usize, alpha: &dyn Fn(&[f64], &[f64]) -> f64) -> f64 {
        const PANELS: usize = 16;
        let mut acc = 0.0;
        for k in 0..PANELS {
            for (x, w) in self.nodes.iter().zip(&self.weights) {
                let t = (k as f64 + x) / PANELS as f64;
                let (p, dp) = self.state(v, t);
                acc += w / PANELS as f64 * 0.5 * alpha(p.as_slice(), dp.as_slice());
            }
        }
        acc
    }
}

struct SampleTrajectory<'a> {
    samples: &'a [PathSample],
}

impl Trajectory for SampleTrajectory<'_> {
    fn endpoints(&self, v: usize) -> (DVector<f64>, DVector<f64>) {
        (
            self.samples[0].positions[v].clone(),
            self.samples[self.samples.len() - 1].positions[v].clone(),
        )
    }

    fn liouville(&self, v: usize, alpha: &dyn Fn(&[f64], &[f64]) -> f64) -> f64 {
        // Exact for trajectories that are linear between samples.
        self.samples
            .windows(2)
            .map(|w| 0.5 * alpha(w[0].positions[v].as_slice(), w[1].positions[v].as_slice()))
            .sum()
    }
}

/// `int_{[0,1] x chain} alpha` for a constant 2-form by Stokes, using the
/// primitive `alpha(p, dp) / 2` around each swept edge.
fn swept_edges(
    model: &AmbientModel,
    mesh: &SimplicialMesh,
    traj: &dyn Trajectory,
    chain: &Chain,
    alpha: &dyn Fn(&[f64], &[f64]) -> f64,
) -> f64 {
    let mut cache: HashMap<usize, f64> = HashMap::new();
    let mut line = |v: usize| *cache.entry(v).or_insert_with(|| traj.liouville(v, alpha));
    let mut total = 0.0;
    for &(e, c) in &chain.terms {
        let (a, b) = (mesh.simplex(1, e)[0], mesh.simplex(1, e)[1]);
        let (a0, a1) = traj.endpoints(a);
        let (b0, b1) = traj.endpoints(b);
        // Lift b next to a; the lattice shift is constant along the path.
        let near = &a0 + model.displacement(a0.as_slice(), b0.as_slice());
        let shift = model.round_to_lattice((&near - &b0).as_slice());
        let (b0, b1s) = (&b0 + &shift, &b1 + &shift);
        let shift_term = 0.5 * alpha(shift.as_slice(), (&b1 - &traj.endpoints(b).0).as_slice());
        let side_a = line(a);
        let side_b = line(b) + shift_term;
        let top = 0.5 * alpha(a1.as_slice(), b1s.as_slice());
        let bottom = 0.5 * alpha(a0.as_slice(), b0.as_slice());
        total += c as f64 * (side_a - side_b + top - bottom);
    }
    total
}

fn swept_points(model: &AmbientModel, traj: &dyn Trajectory, chain: &Chain) -> f64 {
    chain
        .terms
        .iter()
        .map(|&(v, c)| {
            let (p0, p1) = traj.endpoints(v);
            let d = &p1 - &p0;
            c as f64 * model.im_holomorphic(&[d.as_slice()])
        })
        .sum()
}

enum Which {
    Relative,
    Special,
}

fn swept(
    model: &AmbientModel,
    path: &ImmersionPath,
    chain: &Chain,
    which: Which,
) -> Result<f64, FluxError> {
    let mesh = path.mesh();
    let n = mesh.dim();
    if n > 2 {
        return Err(FluxError::UnsupportedDimension);
    }
    let expected = match which {
        Which::Relative => 1,
        Which::Special => n - 1,
    };
    if chain.degree != expected {
        return Err(FluxError::DegreeMismatch {
            expected,
            found: chain.degree,
        });
    }
    let alpha: Box<dyn Fn(&[f64], &[f64]) -> f64> = match which {
        Which::Relative => Box::new(|u: &[f64], v: &[f64]| model.omega(u, v)),
        Which::Special => Box::new(|u: &[f64], v: &[f64]| model.im_holomorphic(&[u, v])),
    };
    let (nodes, weights) = gauss_legendre(10);
    let sampled = match path.segments.iter().any(|s| matches!(s, Source::Samples { .. })) {
        true => Some(path.sample(model)?),
        false => None,
    };
    let mut total = 0.0;
    for (i, seg) in path.segments.iter().enumerate() {
        let family_traj;
        let sample_traj;
        let traj: &dyn Trajectory = match seg {
            Source::Family {
                family,
                curve,
                reversed,
            } => {
                family_traj = FamilyTrajectory {
                    family,
                    curve,
                    reversed: *reversed,
                    nodes: nodes.clone(),
                    weights: weights.clone(),
                };
                &family_traj
            }
            Source::Samples { .. } => {
                sample_traj = SampleTrajectory {
                    samples: &sampled.as_ref().expect("sampled above")[i],
                };
                &sample_traj
            }
        };
        total += if chain.degree == 0 {
            swept_points(model, traj, chain)
        } else {
            swept_edges(model, &mesh, traj, chain, alpha.as_ref())
        };
    }
    Ok(total)
}

/// Independent route to a relative-flux period: `int_{[0,1] x gamma}`
/// of the pulled-back symplectic form over the swept surface.
pub fn swept_rf_oracle(model: &AmbientModel, path: &ImmersionPath, gamma: &Chain) -> Result<f64, FluxError> {
    swept(model, path, gamma, Which::Relative)
}

/// Independent route to a special-flux period over `[0,1] x sigma`.
pub fn swept_sf_oracle(model: &AmbientModel, path: &ImmersionPath, sigma: &Chain) -> Result<f64, FluxError> {
    swept(model, path, sigma, Which::Special)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomotopySweepPoint {
    pub u: f64,
    pub rf: Vec<f64>,
    pub sf: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomotopyReport {
    pub rf_a: Vec<f64>,
    pub rf_b: Vec<f64>,
    pub sf_a: Vec<f64>,
    pub sf_b: Vec<f64>,
    pub max_rf_difference: f64,
    pub max_sf_difference: f64,
    pub endpoint_distance: f64,
    /// Swept-surface periods along the homotopy; constant when the flux is
    /// homotopy invariant.
    pub sweep: Vec<HomotopySweepPoint>,
    pub max_sweep_variation: f64,
}

fn endpoint_distance(model: &AmbientModel, a: &ImmersionPath, b: &ImmersionPath) -> Result<f64, FluxError> {
    let sa = a.sample(model)?;
    let sb = b.sample(model)?;
    let (a0, a1) = (&sa[0][0], sa.last().unwrap().last().unwrap());
    let (b0, b1) = (&sb[0][0], sb.last().unwrap().last().unwrap());
    let mut worst: f64 = 0.0;
    for (x, y) in [(a0, b0), (a1, b1)] {
        for (p, q) in x.positions.iter().zip(&y.positions) {
            worst = worst.max(model.displacement(p.as_slice(), q.as_slice()).norm());
        }
    }
    Ok(worst)
}

/// Compare both flux functionals on two paths with common endpoints and,
/// when a homotopy family is given, track the swept periods along it.
pub fn homotopy_invariance(
    model: &AmbientModel,
    path_a: &ImmersionPath,
    path_b: &ImmersionPath,
    homotopy: Option<(&Arc<ImmersionFamily>, &ParamCurve)>,
    relative: &CycleBasis,
    absolute: &CycleBasis,
    opts: &FluxOptions,
    sweep_points: usize,
) -> Result<HomotopyReport, FluxError> {
    let distance = endpoint_distance(model, path_a, path_b)?;
    if distance > 1e-10 {
        return Err(FluxError::EndpointMismatch(distance));
    }
    let rf_a = relative_flux(model, path_a, relative, opts)?.periods;
    let rf_b = relative_flux(model, path_b, relative, opts)?.periods;
    let sf_a = special_flux(model, path_a, absolute, opts)?.periods;
    let sf_b = special_flux(model, path_b, absolute, opts)?.periods;
    let diff = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let mut sweep = Vec::new();
    if let Some((family, curve)) = homotopy {
        for k in 0..sweep_points.max(2) {
            let u = k as f64 / (sweep_points.max(2) - 1) as f64;
            let path = ImmersionPath::from_family(family.clone(), curve.with_u(u))?;
            let rf = relative
                .cycles
                .iter()
                .map(|g| swept_rf_oracle(model, &path, g))
                .collect::<Result<Vec<_>, _>>()?;
            let sf = absolute
                .cycles
                .iter()
                .map(|g| swept_sf_oracle(model, &path, g))
                .collect::<Result<Vec<_>, _>>()?;
            sweep.push(HomotopySweepPoint { u, rf, sf });
        }
    }
    let max_sweep_variation = sweep
        .iter()
        .flat_map(|p| {
            let first = &sweep[0];
            p.rf.iter()
                .zip(&first.rf)
                .chain(p.sf.iter().zip(&first.sf))
                .map(|(a, b)| (a - b).abs())
                .collect::<Vec<_>>()
        })
        .fold(0.0, f64::max);
    Ok(HomotopyReport {
        max_rf_difference: diff(&rf_a, &rf_b),
        max_sf_difference: diff(&sf_a, &sf_b),
        rf_a,
        rf_b,
        sf_a,
        sf_b,
        endpoint_distance: distance,
        sweep,
        max_sweep_variation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ambient::{make_model, ModelSpec, TopologyKind};
    use crate::fixtures::{self, Handedness};
    use crate::immersion::FamilySpec;
    use proptest::prelude::*;

    fn setup(position: [&str; 4]) -> (AmbientModel, Arc<ImmersionFamily>, CycleBasis, CycleBasis) {
        let model = make_model(&ModelSpec::standard(2, TopologyKind::Torus)).unwrap();
        let mesh = Arc::new(fixtures::cylinder(4, 8, Handedness::Negative).unwrap());
        let spec = FamilySpec {
            coords: vec!["s".into(), "th".into()],
            params: vec!["u".into()],
            position: position.iter().map(|s| s.to_string()).collect(),
        };
        let fam = Arc::new(ImmersionFamily::new(&model, mesh.clone(), spec).unwrap());
        let rel = mesh.relative_cycle_basis().unwrap();
        let abs = mesh.absolute_cycle_basis().unwrap();
        (model, fam, rel, abs)
    }

    const FLAT: [&str; 4] = ["0.5*s", "u", "th", "0.25"];
    const WOBBLE: [&str; 4] = ["0.5*s", "u", "th + 0.1*u*sin(2*pi*s)", "0.25"];

    #[test]
    fn translation_fluxes() {
        let (model, fam, rel, abs) = setup(FLAT);
        let path = ImmersionPath::straight(fam, &[0.0], &[0.3]).unwrap();
        let opts = FluxOptions::default();
        let rf = relative_flux(&model, &path, &rel, &opts).unwrap();
        let sf = special_flux(&model, &path, &abs, &opts).unwrap();
        assert_eq!(rf.periods.len(), 1);
        assert!((rf.periods[0] + 0.15).abs() < 1e-13, "{:?}", rf.periods);
        assert!((sf.periods[0].abs() - 0.3).abs() < 1e-13, "{:?}", sf.periods);
        assert!(rf.closed_residual < 1e-14 && rf.boundary_residual < 1e-14);
        assert!(sf.closed_residual < 1e-14);
        assert!(rf.quadrature_error < 1e-14);
        assert_eq!(rf.samples, 33);
    }

    #[test]
    fn swept_oracle_matches_dec_route() {
        let (model, fam, rel, abs) = setup(WOBBLE);
        let curve = ParamCurve::parse(&["0.3*t + 0.2*sin(pi*t)".into()], 0.0).unwrap();
        let path = ImmersionPath::from_family(fam, curve).unwrap().with_intervals(64);
        let opts = FluxOptions::default();
        let rf = relative_flux(&model, &path, &rel, &opts).unwrap();
        let sf = special_flux(&model, &path, &abs, &opts).unwrap();
        let rf_o = swept_rf_oracle(&model, &path, &rel.cycles[0]).unwrap();
        let sf_o = swept_sf_oracle(&model, &path, &abs.cycles[0]).unwrap();
        assert!((rf.periods[0] - rf_o).abs() < 1e-10, "{} {}", rf.periods[0], rf_o);
        assert!((sf.periods[0] - sf_o).abs() < 1e-10, "{} {}", sf.periods[0], sf_o);
        assert!((rf_o + 0.15).abs() < 1e-10);
    }

    #[test]
    fn finite_difference_velocities_converge() {
        let (model, fam, rel, _) = setup(FLAT);
        let curve = ParamCurve::parse(&["0.3*t*t".into()], 0.0).unwrap();
        let opts = FluxOptions::default();
        let exact = -0.15;
        let err = |m: usize| {
            let path = ImmersionPath::from_family(fam.clone(), curve.clone())
                .unwrap()
                .with_intervals(m)
                .with_velocity(VelocityMode::FiniteDifference);
            (relative_flux(&model, &path, &rel, &opts).unwrap().periods[0] - exact).abs()
        };
        // Quadratic curves are differentiated exactly by the second-order
        // stencils.
        assert!(err(8) < 1e-13);
        let curve = ParamCurve::parse(&["0.3*sin(pi*t/2)".into()], 0.0).unwrap();
        let err = |m: usize| {
            let path = ImmersionPath::from_family(fam.clone(), curve.clone())
                .unwrap()
                .with_intervals(m)
                .with_velocity(VelocityMode::FiniteDifference);
            (relative_flux(&model, &path, &rel, &opts).unwrap().periods[0] - exact).abs()
        };
        let (e1, e2) = (err(16), err(32));
        assert!(e2 < e1 / 3.0, "{e1} {e2}");
    }

    #[test]
    fn sampled_path_unwraps_the_torus() {
        let (model, fam, rel, abs) = setup(FLAT);
        let m = 16;
        let samples: Vec<Vec<Vec<f64>>> = (0..=m)
            .map(|j| {
                let u = 1.3 * j as f64 / m as f64;
                fam.raw_positions(&[u]).iter().map(|p| model.reduce(p)).collect()
            })
            .collect();
        let path = ImmersionPath::from_samples(fam.mesh().clone(), samples).unwrap();
        let opts = FluxOptions::default();
        let rf = relative_flux(&model, &path, &rel, &opts).unwrap();
        assert!((rf.periods[0] + 0.65).abs() < 1e-12, "{:?}", rf.periods);
        let o = swept_rf_oracle(&model, &path, &rel.cycles[0]).unwrap();
        assert!((o + 0.65).abs() < 1e-12, "{o}");
        let sf = special_flux(&model, &path, &abs, &opts).unwrap();
        let so = swept_sf_oracle(&model, &path, &abs.cycles[0]).unwrap();
        assert!((sf.periods[0] - so).abs() < 1e-12);
        let analytic = path.clone().with_velocity(VelocityMode::Analytic);
        assert!(matches!(
            relative_flux(&model, &analytic, &rel, &opts),
            Err(FluxError::VelocityUnavailable(_))
        ));
    }

    #[test]
    fn non_lagrangian_sample_is_reported() {
        let (model, fam, rel, _) = setup(["0.5*s", "u", "th", "0.25 + u*s"]);
        let path = ImmersionPath::straight(fam, &[0.0], &[0.1]).unwrap();
        assert!(matches!(
            relative_flux(&model, &path, &rel, &FluxOptions::default()),
            Err(FluxError::NonLagrangianSample { .. })
        ));
    }

    #[test]
    fn non_special_sample_is_reported() {
        let (model, fam, rel, abs) = setup(["0.5*s", "u + 0.2*u*s", "th", "0.25"]);
        let path = ImmersionPath::straight(fam, &[0.0], &[0.5]).unwrap();
        let opts = FluxOptions::default();
        assert!(relative_flux(&model, &path, &rel, &opts).is_ok());
        assert!(matches!(
            special_flux(&model, &path, &abs, &opts),
            Err(FluxError::NonSpecialSample { .. })
        ));
    }

    #[test]
    fn homotopic_paths_have_equal_flux() {
        let (model, fam, rel, abs) = setup(WOBBLE);
        let curve = ParamCurve::parse(&["0.3*t + 0.25*u*sin(pi*t)".into()], 0.0).unwrap();
        let a = ImmersionPath::from_family(fam.clone(), curve.with_u(0.0)).unwrap();
        let b = ImmersionPath::from_family(fam.clone(), curve.with_u(1.0)).unwrap();
        let opts = FluxOptions::default();
        let r = homotopy_invariance(&model, &a, &b, Some((&fam, &curve)), &rel, &abs, &opts, 5).unwrap();
        assert!(r.max_rf_difference < 1e-8, "{r:?}");
        assert!(r.max_sf_difference < 1e-8, "{r:?}");
        assert!(r.max_sweep_variation < 1e-10, "{r:?}");
        let c = ImmersionPath::straight(fam, &[0.0], &[0.2]).unwrap();
        assert!(matches!(
            homotopy_invariance(&model, &a, &c, None, &rel, &abs, &opts, 0),
            Err(FluxError::EndpointMismatch(_))
        ));
    }

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let (x, w) = gauss_legendre(5);
        for k in 0..10 {
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k)).sum();
            assert!((q - 1.0 / (k as f64 + 1.0)).abs() < 1e-14, "{k}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn flux_is_additive_and_odd(a in -0.5f64..0.5, b in -0.5f64..0.5, c in -0.5f64..0.5) {
            let (model, fam, rel, abs) = setup(WOBBLE);
            let opts = FluxOptions::default();
            let p = ImmersionPath::straight(fam.clone(), &[a], &[b]).unwrap();
            let q = ImmersionPath::straight(fam.clone(), &[b], &[c]).unwrap();
            let pq = p.concat(&q).unwrap();
            let rf = |path: &ImmersionPath| relative_flux(&model, path, &rel, &opts).unwrap().periods[0];
            let sf = |path: &ImmersionPath| special_flux(&model, path, &abs, &opts).unwrap().periods[0];
            prop_assert!((rf(&pq) - rf(&p) - rf(&q)).abs() < 1e-12);
            prop_assert!((sf(&pq) - sf(&p) - sf(&q)).abs() < 1e-12);
            prop_assert!((rf(&p.reversed()) + rf(&p)).abs() < 1e-12);
            prop_assert!((sf(&p.reversed()) + sf(&p)).abs() < 1e-12);
            prop_assert!((rf(&p) + 0.5 * (b - a)).abs() < 1e-12);
        }
    }
}
