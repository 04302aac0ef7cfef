//! Piecewise-linear immersions of a mesh into an ambient model, and
//! closed-form families of them.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ambient::{AmbientError, AmbientModel, BoundaryLagrangian, FormKind};
use crate::dec::{Cochain, DecError, MetricField};
use crate::expr::{Dual, Expr, ExprError, Scalar};
use crate::mesh::{Automorphism, MeshError, SimplicialMesh};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImmersionError {
    #[error(transparent)]
    Ambient(#[from] AmbientError),
    #[error(transparent)]
    Dec(#[from] DecError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("invalid immersion: {0}")]
    Invalid(String),
    #[error("image of top simplex {0} is degenerate")]
    DegenerateSimplex(usize),
    #[error("a {form_degree}-form cannot be pulled back to a mesh of dimension {mesh_dim}")]
    DegreeMismatch { form_degree: usize, mesh_dim: usize },
    #[error("no boundary Lagrangian with index {0}")]
    MissingLagrangian(usize),
}

/// Vertex positions of a piecewise-linear map, reduced to the fundamental
/// domain on tori.
#[derive(Debug, Clone)]
pub struct Immersion {
    mesh: Arc<SimplicialMesh>,
    positions: Vec<DVector<f64>>,
}

impl Immersion {
    pub fn new(
        model: &AmbientModel,
        mesh: Arc<SimplicialMesh>,
        positions: Vec<Vec<f64>>,
    ) -> Result<Self, ImmersionError> {
        if positions.len() != mesh.num_simplices(0) {
            return Err(ImmersionError::Invalid(format!(
                "{} positions for {} vertices",
                positions.len(),
                mesh.num_simplices(0)
            )));
        }
        if let Some(p) = positions.iter().find(|p| p.len() != model.real_dim()) {
            return Err(ImmersionError::Invalid(format!(
                "position has {} coordinates, model needs {}",
                p.len(),
                model.real_dim()
            )));
        }
        let positions = positions
            .iter()
            .map(|p| DVector::from_vec(model.reduce(p)))
            .collect();
        Ok(Self { mesh, positions })
    }

    pub fn mesh(&self) -> &Arc<SimplicialMesh> {
        &self.mesh
    }

    pub fn position(&self, v: usize) -> &[f64] {
        self.positions[v].as_slice()
    }

    /// Edge vectors `p_{v_i} - p_{v_0}` of a simplex with sorted vertices.
    pub fn frame(&self, model: &AmbientModel, simplex: &[usize]) -> Vec<DVector<f64>> {
        let p0 = self.position(simplex[0]);
        simplex[1..]
            .iter()
            .map(|&v| model.displacement(p0, self.position(v)))
            .collect()
    }

    /// `f o psi`: vertex `v` moves to where `psi(v)` was.
    pub fn reparametrize(&self, psi: &Automorphism) -> Immersion {
        let positions = psi
            .vertex_map()
            .iter()
            .map(|&w| self.positions[w].clone())
            .collect();
        Immersion {
            mesh: self.mesh.clone(),
            positions,
        }
    }
}

/// Per-simplex pullback of `g~ = rho^{-2/n} g`.
pub fn pullback_metric(model: &AmbientModel, imm: &Immersion) -> Result<MetricField, ImmersionError> {
    let mesh = imm.mesh();
    let n = mesh.dim();
    let mut grams = Vec::with_capacity(mesh.num_simplices(n));
    for (t, s) in mesh.simplices(n).iter().enumerate() {
        let frame = imm.frame(model, s);
        let c = model.conformal_factor(imm.position(s[0]));
        let g = DMatrix::from_fn(n, n, |i, j| c * model.metric(frame[i].as_slice(), frame[j].as_slice()));
        let scale = (0..n).map(|i| g[(i, i)]).fold(0.0, f64::max);
        if !(g.determinant() > 1e-12 * scale.powi(n as i32)) {
            return Err(ImmersionError::DegenerateSimplex(t));
        }
        grams.push(g);
    }
    MetricField::new(mesh, grams).map_err(|e| match e {
        DecError::DegenerateMetric { simplex } => ImmersionError::DegenerateSimplex(simplex),
        other => other.into(),
    })
}

fn form_degree(model: &AmbientModel, which: FormKind) -> Result<usize, ImmersionError> {
    match which {
        FormKind::Omega => Ok(2),
        FormKind::ReHolomorphic | FormKind::ImHolomorphic => Ok(model.n()),
        FormKind::Metric | FormKind::ConformalMetric => Err(ImmersionError::Invalid(
            "metrics are not differential forms".into(),
        )),
    }
}

/// Integrals of a constant ambient form over the image of each simplex of
/// matching degree.
pub fn pullback_form(
    model: &AmbientModel,
    imm: &Immersion,
    which: FormKind,
) -> Result<Cochain, ImmersionError> {
    let k = form_degree(model, which)?;
    let mesh = imm.mesh();
    if k > mesh.dim() {
        return Err(ImmersionError::DegreeMismatch {
            form_degree: k,
            mesh_dim: mesh.dim(),
        });
    }
    let kfact: f64 = (1..=k).map(|i| i as f64).product();
    let values = mesh
        .simplices(k)
        .iter()
        .map(|s| {
            let frame = imm.frame(model, s);
            let refs: Vec<&[f64]> = frame.iter().map(|v| v.as_slice()).collect();
            model.eval_form(which, imm.position(s[0]), &refs).map(|v| v / kfact)
        })
        .collect::<Result<Vec<f64>, _>>()?;
    Ok(Cochain::new(k, values))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationTolerances {
    pub rank: f64,
    pub containment: f64,
    pub transversality: f64,
    pub lagrangian: f64,
    pub special: f64,
}

impl Default for ValidationTolerances {
    fn default() -> Self {
        Self {
            rank: 1e-8,
            containment: 1e-10,
            transversality: 1e-6,
            lagrangian: 1e-10,
            special: 1e-10,
        }
    }
}

/// Scale-free residuals describing how well an immersion satisfies the
/// boundary value problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// Smallest `sigma_min / sigma_max` of the image edge frames.
    pub min_rank_margin: f64,
    /// Largest distance from a boundary vertex to its Lagrangian.
    pub max_containment: f64,
    /// Smallest `(n+1)`-th singular value of the stacked orthonormal tangent
    /// frames of `L` and `Lambda` along the boundary (1 for a right angle).
    pub min_transversality: f64,
    /// Largest `|omega(e_1, e_2)| / (|e_1| |e_2|)` over image 2-simplices.
    pub lagrangian_residual: f64,
    /// Largest `|Im Omega(e_1..e_n)| / prod |e_i|` over image top simplices.
    pub special_residual: f64,
}

impl ValidationReport {
    pub fn passes(&self, tol: &ValidationTolerances) -> bool {
        self.min_rank_margin >= tol.rank
            && self.max_containment <= tol.containment
            && self.min_transversality >= tol.transversality
            && self.lagrangian_residual <= tol.lagrangian
            && self.special_residual <= tol.special
    }

    pub fn is_lagrangian(&self, tol: &ValidationTolerances) -> bool {
        self.lagrangian_residual <= tol.lagrangian
    }
}

fn g_orthonormal(model: &AmbientModel, vs: &[DVector<f64>]) -> DMatrix<f64> {
    let chol = model
        .metric_matrix()
        .clone()
        .cholesky()
        .expect("model metric is positive definite");
    let r = chol.l().transpose();
    let dim = model.real_dim();
    let m = DMatrix::from_fn(dim, vs.len(), |i, j| (&r * &vs[j])[i]);
    m.qr().q()
}

pub fn validate(
    model: &AmbientModel,
    imm: &Immersion,
    lambdas: &[BoundaryLagrangian],
) -> Result<ValidationReport, ImmersionError> {
    let mesh = imm.mesh();
    let n = mesh.dim();
    let find = |label: usize| {
        lambdas
            .iter()
            .find(|l| l.index == label)
            .ok_or(ImmersionError::MissingLagrangian(label))
    };

    let mut min_rank_margin = f64::INFINITY;
    let mut special_residual: f64 = 0.0;
    for s in mesh.simplices(n) {
        let frame = imm.frame(model, s);
        let m = DMatrix::from_fn(model.real_dim(), n, |i, j| frame[j][i]);
        let sv = m.svd(false, false).singular_values;
        min_rank_margin = min_rank_margin.min(sv.min() / sv.max());
        let refs: Vec<&[f64]> = frame.iter().map(|v| v.as_slice()).collect();
        let norms: f64 = frame.iter().map(|v| v.norm()).product();
        special_residual = special_residual.max(model.im_holomorphic(&refs).abs() / norms);
    }

    let mut lagrangian_residual: f64 = 0.0;
    if n >= 2 {
        for s in mesh.simplices(2) {
            let f = imm.frame(model, s);
            let r = model.omega(f[0].as_slice(), f[1].as_slice()).abs() / (f[0].norm() * f[1].norm());
            lagrangian_residual = lagrangian_residual.max(r);
        }
    }

    let mut max_containment: f64 = 0.0;
    for v in 0..mesh.num_simplices(0) {
        if let Some(label) = mesh.vertex_label(v) {
            max_containment = max_containment.max(find(label)?.distance(model, imm.position(v)));
        }
    }

    let mut min_transversality = f64::INFINITY;
    for f in 0..mesh.num_simplices(n - 1) {
        let Some(label) = mesh.face_label(f) else { continue };
        let lambda = find(label)?;
        let (t, _) = mesh.cofaces(n - 1, f)[0];
        let tl = g_orthonormal(model, &imm.frame(model, mesh.simplex(n, t)));
        let dirs: Vec<DVector<f64>> = lambda
            .directions
            .iter()
            .map(|d| DVector::from_column_slice(d))
            .collect();
        let tlam = g_orthonormal(model, &dirs);
        let mut stacked = DMatrix::zeros(model.real_dim(), 2 * n);
        stacked.columns_mut(0, n).copy_from(&tl);
        stacked.columns_mut(n, n).copy_from(&tlam);
        let mut sv: Vec<f64> = stacked.svd(false, false).singular_values.iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        min_transversality = min_transversality.min(sv[n]);
    }
    if !min_transversality.is_finite() {
        min_transversality = 1.0;
    }

    Ok(ValidationReport {
        min_rank_margin,
        max_containment,
        min_transversality,
        lagrangian_residual,
        special_residual,
    })
}

/// Closed-form family `u -> f_u`. Each ambient coordinate is an expression
/// in the mesh reference coordinates followed by the family parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub coords: Vec<String>,
    pub params: Vec<String>,
    pub position: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ImmersionFamily {
    mesh: Arc<SimplicialMesh>,
    spec: FamilySpec,
    exprs: Vec<Expr>,
    vertex_map: Option<Vec<usize>>,
}

impl ImmersionFamily {
    pub fn new(
        model: &AmbientModel,
        mesh: Arc<SimplicialMesh>,
        spec: FamilySpec,
    ) -> Result<Self, ImmersionError> {
        if spec.position.len() != model.real_dim() {
            return Err(ImmersionError::Invalid(format!(
                "family gives {} coordinates, model needs {}",
                spec.position.len(),
                model.real_dim()
            )));
        }
        let ncoords = mesh.coords(0).len();
        if spec.coords.len() != ncoords {
            return Err(ImmersionError::Invalid(format!(
                "family names {} reference coordinates, mesh has {}",
                spec.coords.len(),
                ncoords
            )));
        }
        let names: Vec<&str> = spec
            .coords
            .iter()
            .chain(&spec.params)
            .map(String::as_str)
            .collect();
        let exprs = spec
            .position
            .iter()
            .map(|src| Expr::parse(src, &names))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            mesh,
            spec,
            exprs,
            vertex_map: None,
        })
    }

    pub fn mesh(&self) -> &Arc<SimplicialMesh> {
        &self.mesh
    }

    pub fn spec(&self) -> &FamilySpec {
        &self.spec
    }

    pub fn num_params(&self) -> usize {
        self.spec.params.len()
    }

    /// The family precomposed with a mesh automorphism.
    pub fn reparametrized(&self, psi: &Automorphism) -> Self {
        let map = match &self.vertex_map {
            Some(m) => psi.vertex_map().iter().map(|&w| m[w]).collect(),
            None => psi.vertex_map().to_vec(),
        };
        Self {
            vertex_map: Some(map),
            ..self.clone()
        }
    }

    fn source_vertex(&self, v: usize) -> usize {
        self.vertex_map.as_ref().map_or(v, |m| m[v])
    }

    /// Unreduced ambient position of vertex `v` at `params`.
    pub fn eval_vertex<S: Scalar>(&self, v: usize, params: &[S]) -> Vec<S> {
        let c = self.mesh.coords(self.source_vertex(v));
        let vars: Vec<S> = c
            .iter()
            .map(|&x| S::constant(x))
            .chain(params.iter().copied())
            .collect();
        self.exprs.iter().map(|e| e.eval(&vars)).collect()
    }

    pub fn raw_positions(&self, params: &[f64]) -> Vec<Vec<f64>> {
        (0..self.mesh.num_simplices(0))
            .map(|v| self.eval_vertex(v, params))
            .collect()
    }

    /// Positions and the derivative along `direction` in parameter space.
    pub fn positions_and_velocities(
        &self,
        params: &[f64],
        direction: &[f64],
    ) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let duals: Vec<Dual> = params
            .iter()
            .zip(direction)
            .map(|(&p, &d)| Dual::new(p, d))
            .collect();
        (0..self.mesh.num_simplices(0))
            .map(|v| {
                let out = self.eval_vertex(v, &duals);
                (
                    out.iter().map(|d| d.re).collect(),
                    out.iter().map(|d| d.du).collect(),
                )
            })
            .unzip()
    }

    pub fn immersion(&self, model: &AmbientModel, params: &[f64]) -> Result<Immersion, ImmersionError> {
        if params.len() != self.num_params() {
            return Err(ImmersionError::Invalid(format!(
                "{} parameters given, family has {}",
                params.len(),
                self.num_params()
            )));
        }
        Immersion::new(model, self.mesh.clone(), self.raw_positions(params))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ambient::{make_model, ModelSpec, TopologyKind};
    use crate::fixtures::{self, Handedness};

    fn cylinder_family() -> (AmbientModel, ImmersionFamily, Vec<BoundaryLagrangian>) {
        let model = make_model(&ModelSpec::standard(2, TopologyKind::Torus)).unwrap();
        let mesh = Arc::new(fixtures::cylinder(4, 8, Handedness::Negative).unwrap());
        let spec = FamilySpec {
            coords: vec!["s".into(), "th".into()],
            params: vec!["u".into()],
            position: vec!["0.5*s".into(), "u".into(), "th".into(), "0.25".into()],
        };
        let fam = ImmersionFamily::new(&model, mesh, spec).unwrap();
        let dirs = vec![vec![0.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 0.0]];
        let lambdas = vec![
            BoundaryLagrangian {
                index: 1,
                basepoint: vec![0.0, 0.0, 0.0, 0.25],
                directions: dirs.clone(),
            },
            BoundaryLagrangian {
                index: 2,
                basepoint: vec![0.5, 0.0, 0.0, 0.25],
                directions: dirs,
            },
        ];
        (model, fam, lambdas)
    }

    #[test]
    fn cylinder_is_a_valid_special_lagrangian() {
        let (model, fam, lambdas) = cylinder_family();
        let imm = fam.immersion(&model, &[0.3]).unwrap();
        let r = validate(&model, &imm, &lambdas).unwrap();
        assert!(r.passes(&ValidationTolerances::default()), "{r:?}");
        assert!((r.min_transversality - 1.0).abs() < 1e-12);
        let w = pullback_form(&model, &imm, FormKind::Omega).unwrap();
        assert!(w.max_abs() < 1e-15);
        let re = pullback_form(&model, &imm, FormKind::ReHolomorphic).unwrap();
        let area: f64 = (0..imm.mesh().num_simplices(2))
            .map(|t| re.values[t] * imm.mesh().orientation(t) as f64)
            .sum();
        // Anti-calibrated orientation: Re Omega integrates to minus the area.
        assert!((area + 0.5).abs() < 1e-12);
    }

    #[test]
    fn validation_detects_violations() {
        let (model, fam, lambdas) = cylinder_family();
        let mut spec = fam.spec().clone();
        spec.position[1] = "u + 0.1*s".into();
        let tilted = ImmersionFamily::new(&model, fam.mesh().clone(), spec).unwrap();
        let r = validate(&model, &tilted.immersion(&model, &[0.0]).unwrap(), &lambdas).unwrap();
        assert!(r.lagrangian_residual < 1e-15);
        assert!(r.special_residual > 1e-3);
        let mut spec = fam.spec().clone();
        spec.position[3] = "0.25 + 0.01*s".into();
        let lifted = ImmersionFamily::new(&model, fam.mesh().clone(), spec).unwrap();
        let r = validate(&model, &lifted.immersion(&model, &[0.0]).unwrap(), &lambdas).unwrap();
        assert!(r.max_containment > 1e-3);
        assert!(r.lagrangian_residual > 1e-3);
    }

    #[test]
    fn pullback_metric_matches_reference_geometry() {
        let (model, fam, _) = cylinder_family();
        let imm = fam.immersion(&model, &[0.1]).unwrap();
        let g = pullback_metric(&model, &imm).unwrap();
        let mesh = imm.mesh();
        let s = mesh.simplex(2, 0);
        let e = g.gram(0);
        let d = |a: usize, b: usize| {
            let (p, q) = (mesh.coords(a), mesh.coords(b));
            (0.5 * (q[0] - p[0]), q[1] - p[1])
        };
        let (a, b) = (d(s[0], s[1]), d(s[0], s[2]));
        assert!((e[(0, 1)] - (a.0 * b.0 + a.1 * b.1)).abs() < 1e-15);
    }

    #[test]
    fn two_form_on_a_curve_is_a_degree_mismatch() {
        let model = make_model(&ModelSpec::standard(1, TopologyKind::Euclidean)).unwrap();
        let mesh = Arc::new(fixtures::interval(4, Handedness::Negative).unwrap());
        let imm = Immersion::new(
            &model,
            mesh.clone(),
            (0..5).map(|i| vec![i as f64 * 0.1, 0.0]).collect(),
        )
        .unwrap();
        assert!(matches!(
            pullback_form(&model, &imm, FormKind::Omega),
            Err(ImmersionError::DegreeMismatch { .. })
        ));
        assert!(pullback_form(&model, &imm, FormKind::ImHolomorphic).unwrap().max_abs() == 0.0);
    }

    #[test]
    fn collapsed_simplex_is_rejected() {
        let model = make_model(&ModelSpec::standard(1, TopologyKind::Euclidean)).unwrap();
        let mesh = Arc::new(fixtures::interval(2, Handedness::Positive).unwrap());
        let imm = Immersion::new(&model, mesh, vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(pullback_metric(&model, &imm).unwrap_err(), ImmersionError::DegenerateSimplex(0));
    }

    #[test]
    fn reparametrization_permutes_positions() {
        let (model, fam, _) = cylinder_family();
        let mesh = fam.mesh().clone();
        let psi = mesh.automorphism(&fixtures::cylinder_rotation(4, 8, 3)).unwrap();
        let imm = fam.immersion(&model, &[0.2]).unwrap();
        let a = imm.reparametrize(&psi);
        let b = fam.reparametrized(&psi).immersion(&model, &[0.2]).unwrap();
        for v in 0..mesh.num_simplices(0) {
            let d = model.displacement(a.position(v), b.position(v));
            assert!(d.norm() < 1e-14);
        }
    }
}
