//! Flat Calabi-Yau and almost Calabi-Yau models on `C^n` and `C^n / lattice`.
//!
//! Real coordinates are interleaved as `(x1, y1, x2, y2, ...)` with
//! `z_k = x_k + i y_k`. The holomorphic volume form is
//! `Omega = c * dz_1 ^ ... ^ dz_n`, so `Omega(v_1..v_n) = c det(Z V)` where the
//! rows of `Z` are the complex covectors `dz_k`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Expr, ExprError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AmbientError {
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("symplectic form is degenerate")]
    Degenerate,
    #[error("J is not an omega-compatible complex structure: {0}")]
    Incompatible(String),
    #[error("Omega is not of type (n,0) for J (residual {0:e})")]
    NotHolomorphic(f64),
    #[error("normalization fails: relative residual {residual:e} ({detail})")]
    NormalizationFailure { residual: f64, detail: String },
    #[error("{form} takes {expected} vectors, got {found}")]
    ArityMismatch {
        form: &'static str,
        expected: usize,
        found: usize,
    },
    #[error(transparent)]
    Expr(#[from] ExprError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopologyKind {
    #[default]
    Euclidean,
    Torus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OmegaSpec {
    /// Complex prefactor `[re, im]`.
    #[serde(default = "unit_scale")]
    pub scale: [f64; 2],
    /// Rows `dz_k` as lists of `[re, im]` coefficients; defaults to
    /// `dz_k = dx_k + i dy_k`.
    #[serde(default)]
    pub dz: Option<Vec<Vec<[f64; 2]>>>,
}

fn unit_scale() -> [f64; 2] {
    [1.0, 0.0]
}

/// Serialized ambient model. Missing entries take standard values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub n: usize,
    #[serde(default)]
    pub topology: TopologyKind,
    /// Lattice generators, one per row. Defaults to the integer lattice.
    #[serde(default)]
    pub lattice: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub omega: Option<Vec<Vec<f64>>>,
    #[serde(default, rename = "J")]
    pub j: Option<Vec<Vec<f64>>>,
    #[serde(default, rename = "Omega")]
    pub holomorphic: Option<OmegaSpec>,
    /// Conformal factor; when given the model is almost Calabi-Yau.
    #[serde(default)]
    pub rho_expr: Option<String>,
}

impl ModelSpec {
    pub fn standard(n: usize, topology: TopologyKind) -> Self {
        Self {
            n,
            topology,
            lattice: None,
            omega: None,
            j: None,
            holomorphic: None,
            rho_expr: None,
        }
    }
}

/// Which ambient tensor to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FormKind {
    Omega,
    ReHolomorphic,
    ImHolomorphic,
    Metric,
    ConformalMetric,
}

#[derive(Debug, Clone)]
enum Topology {
    Euclidean,
    Torus {
        basis: DMatrix<f64>,
        inverse: DMatrix<f64>,
    },
}

#[derive(Debug, Clone)]
pub struct AmbientModel {
    n: usize,
    topology: Topology,
    omega: DMatrix<f64>,
    j: DMatrix<f64>,
    g: DMatrix<f64>,
    dz: DMatrix<Complex64>,
    scale: Complex64,
    rho: f64,
    almost: bool,
    normalization_residual: f64,
}

fn to_matrix(rows: &[Vec<f64>], dim: usize, what: &str) -> Result<DMatrix<f64>, AmbientError> {
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(AmbientError::Invalid(format!("{what} must be {dim}x{dim}")));
    }
    Ok(DMatrix::from_fn(dim, dim, |i, j| rows[i][j]))
}

/// Pfaffian of an antisymmetric matrix by cofactor expansion.
pub fn pfaffian(a: &DMatrix<f64>) -> f64 {
    let m = a.nrows();
    if m == 0 {
        return 1.0;
    }
    if m % 2 == 1 {
        return 0.0;
    }
    let mut total = 0.0;
    for j in 1..m {
        if a[(0, j)] == 0.0 {
            continue;
        }
        let keep: Vec<usize> = (1..m).filter(|&k| k != j).collect();
        let minor = DMatrix::from_fn(m - 2, m - 2, |r, c| a[(keep[r], keep[c])]);
        let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
        total += sign * a[(0, j)] * pfaffian(&minor);
    }
    total
}

fn complex_det(m: DMatrix<Complex64>) -> Complex64 {
    if m.nrows() == 0 {
        return Complex64::new(1.0, 0.0);
    }
    m.determinant()
}

pub fn make_model(spec: &ModelSpec) -> Result<AmbientModel, AmbientError> {
    let n = spec.n;
    if n == 0 {
        return Err(AmbientError::Invalid("n must be positive".into()));
    }
    let dim = 2 * n;
    let omega = match &spec.omega {
        Some(rows) => to_matrix(rows, dim, "omega")?,
        None => {
            let mut w = DMatrix::zeros(dim, dim);
            for k in 0..n {
                w[(2 * k, 2 * k + 1)] = 1.0;
                w[(2 * k + 1, 2 * k)] = -1.0;
            }
            w
        }
    };
    if (&omega + omega.transpose()).amax() > 1e-14 * omega.amax() {
        return Err(AmbientError::Invalid("omega must be antisymmetric".into()));
    }
    let pf = pfaffian(&omega);
    if pf.abs() <= 1e-12 * omega.amax().powi(n as i32) {
        return Err(AmbientError::Degenerate);
    }
    let j = match &spec.j {
        Some(rows) => to_matrix(rows, dim, "J")?,
        None => {
            // J e_{x_k} = e_{y_k}, J e_{y_k} = -e_{x_k}; columns are images.
            let mut m = DMatrix::zeros(dim, dim);
            for k in 0..n {
                m[(2 * k + 1, 2 * k)] = 1.0;
                m[(2 * k, 2 * k + 1)] = -1.0;
            }
            m
        }
    };
    let tol = 1e-12;
    let jj = &j * &j + DMatrix::identity(dim, dim);
    if jj.amax() > tol {
        return Err(AmbientError::Incompatible(format!("J^2 + 1 = {:e}", jj.amax())));
    }
    let inv = j.transpose() * &omega * &j - &omega;
    if inv.amax() > tol * omega.amax() {
        return Err(AmbientError::Incompatible(format!(
            "omega(J., J.) - omega = {:e}",
            inv.amax()
        )));
    }
    // g(u, v) = omega(u, J v)
    let g = &omega * &j;
    if (&g - g.transpose()).amax() > tol * g.amax() || g.clone().cholesky().is_none() {
        return Err(AmbientError::Incompatible("omega(., J.) is not positive definite".into()));
    }

    let hol = spec.holomorphic.clone().unwrap_or(OmegaSpec {
        scale: unit_scale(),
        dz: None,
    });
    let scale = Complex64::new(hol.scale[0], hol.scale[1]);
    let dz = match &hol.dz {
        Some(rows) => {
            if rows.len() != n || rows.iter().any(|r| r.len() != dim) {
                return Err(AmbientError::Invalid(format!("Omega.dz must be {n}x{dim}")));
            }
            DMatrix::from_fn(n, dim, |i, k| Complex64::new(rows[i][k][0], rows[i][k][1]))
        }
        None => DMatrix::from_fn(n, dim, |i, k| {
            if k == 2 * i {
                Complex64::new(1.0, 0.0)
            } else if k == 2 * i + 1 {
                Complex64::new(0.0, 1.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        }),
    };
    let jc = j.map(|x| Complex64::new(x, 0.0));
    let hol_res = (&dz * &jc - dz.map(|z| z * Complex64::i())).map(|z| z.norm()).max();
    if hol_res > tol {
        return Err(AmbientError::NotHolomorphic(hol_res));
    }

    let stacked = DMatrix::from_fn(dim, dim, |r, c| {
        if r < n {
            dz[(r, c)]
        } else {
            dz[(r - n, c)].conj()
        }
    });
    let sign = if (n * (n - 1) / 2) % 2 == 0 { 1.0 } else { -1.0 };
    let lhs = Complex64::new(sign, 0.0)
        * Complex64::new(0.0, 0.5).powu(n as u32)
        * scale.norm_sqr()
        * complex_det(stacked);

    let (rho, almost) = match &spec.rho_expr {
        None => (1.0, false),
        Some(src) => (constant_rho(src, dim)?, true),
    };
    if !(rho > 0.0) {
        return Err(AmbientError::Invalid(format!("rho must be positive, got {rho}")));
    }
    let rhs = rho * rho * pf;
    let residual = ((lhs - Complex64::new(rhs, 0.0)).norm()) / rhs.abs();
    if residual > 1e-12 {
        return Err(AmbientError::NormalizationFailure {
            residual,
            detail: format!("volume from Omega {:.6}, rho^2 omega^n/n! {:.6}", lhs.re, rhs),
        });
    }

    let topology = match spec.topology {
        TopologyKind::Euclidean => {
            if spec.lattice.is_some() {
                return Err(AmbientError::Invalid("lattice given for euclidean model".into()));
            }
            Topology::Euclidean
        }
        TopologyKind::Torus => {
            let basis = match &spec.lattice {
                Some(rows) => to_matrix(rows, dim, "lattice")?.transpose(),
                None => DMatrix::identity(dim, dim),
            };
            let inverse = basis
                .clone()
                .try_inverse()
                .ok_or_else(|| AmbientError::Invalid("lattice is degenerate".into()))?;
            Topology::Torus { basis, inverse }
        }
    };

    Ok(AmbientModel {
        n,
        topology,
        omega,
        j,
        g,
        dz,
        scale,
        rho,
        almost,
        normalization_residual: residual,
    })
}

fn constant_rho(src: &str, dim: usize) -> Result<f64, AmbientError> {
    let names: Vec<String> = (0..dim)
        .map(|i| format!("{}{}", if i % 2 == 0 { "x" } else { "y" }, i / 2 + 1))
        .collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let e = Expr::parse(src, &refs)?;
    let v0 = e.eval::<f64>(&vec![0.0; dim]);
    // Constant Omega and omega force a constant rho; probe a few points.
    for s in 1..=8 {
        let p: Vec<f64> = (0..dim)
            .map(|i| ((s * 7 + i * 3) % 11) as f64 / 11.0 - 0.5)
            .collect();
        let v = e.eval::<f64>(&p);
        if (v - v0).abs() > 1e-14 * v0.abs().max(1.0) {
            return Err(AmbientError::NormalizationFailure {
                residual: (v - v0).abs() / v0.abs().max(f64::MIN_POSITIVE),
                detail: "rho must be constant for constant-coefficient omega and Omega".into(),
            });
        }
    }
    Ok(v0)
}

impl AmbientModel {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn real_dim(&self) -> usize {
        2 * self.n
    }

    pub fn is_torus(&self) -> bool {
        matches!(self.topology, Topology::Torus { .. })
    }

    pub fn is_almost(&self) -> bool {
        self.almost
    }

    pub fn rho(&self, _point: &[f64]) -> f64 {
        self.rho
    }

    pub fn normalization_residual(&self) -> f64 {
        self.normalization_residual
    }

    pub fn omega_matrix(&self) -> &DMatrix<f64> {
        &self.omega
    }

    pub fn j_matrix(&self) -> &DMatrix<f64> {
        &self.j
    }

    pub fn metric_matrix(&self) -> &DMatrix<f64> {
        &self.g
    }

    /// Lattice generators as columns, if the model is a torus.
    pub fn lattice(&self) -> Option<&DMatrix<f64>> {
        match &self.topology {
            Topology::Torus { basis, .. } => Some(basis),
            Topology::Euclidean => None,
        }
    }

    pub fn omega(&self, u: &[f64], v: &[f64]) -> f64 {
        bilinear(&self.omega, u, v)
    }

    pub fn metric(&self, u: &[f64], v: &[f64]) -> f64 {
        bilinear(&self.g, u, v)
    }

    /// `g~ = rho^{-2/n} g`
    pub fn conformal_metric(&self, point: &[f64], u: &[f64], v: &[f64]) -> f64 {
        self.rho(point).powf(-2.0 / self.n as f64) * self.metric(u, v)
    }

    /// Conformal factor `rho^{-2/n}` at `point`.
    pub fn conformal_factor(&self, point: &[f64]) -> f64 {
        self.rho(point).powf(-2.0 / self.n as f64)
    }

    /// `Omega(v_1, ..., v_n)`
    pub fn holomorphic(&self, vectors: &[&[f64]]) -> Complex64 {
        let n = self.n;
        assert_eq!(vectors.len(), n);
        let m = DMatrix::from_fn(n, n, |r, c| {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..2 * n {
                acc += self.dz[(r, k)] * vectors[c][k];
            }
            acc
        });
        self.scale * complex_det(m)
    }

    pub fn im_holomorphic(&self, vectors: &[&[f64]]) -> f64 {
        self.holomorphic(vectors).im
    }

    pub fn re_holomorphic(&self, vectors: &[&[f64]]) -> f64 {
        self.holomorphic(vectors).re
    }

    pub fn eval_form(
        &self,
        which: FormKind,
        point: &[f64],
        tangents: &[&[f64]],
    ) -> Result<f64, AmbientError> {
        let (name, arity) = match which {
            FormKind::Omega => ("omega", 2),
            FormKind::ReHolomorphic => ("Re Omega", self.n),
            FormKind::ImHolomorphic => ("Im Omega", self.n),
            FormKind::Metric => ("g", 2),
            FormKind::ConformalMetric => ("g~", 2),
        };
        if tangents.len() != arity {
            return Err(AmbientError::ArityMismatch {
                form: name,
                expected: arity,
                found: tangents.len(),
            });
        }
        if let Some(t) = tangents.iter().find(|t| t.len() != 2 * self.n) {
            return Err(AmbientError::Invalid(format!(
                "tangent has {} components, expected {}",
                t.len(),
                2 * self.n
            )));
        }
        Ok(match which {
            FormKind::Omega => self.omega(tangents[0], tangents[1]),
            FormKind::ReHolomorphic => self.re_holomorphic(tangents),
            FormKind::ImHolomorphic => self.im_holomorphic(tangents),
            FormKind::Metric => self.metric(tangents[0], tangents[1]),
            FormKind::ConformalMetric => self.conformal_metric(point, tangents[0], tangents[1]),
        })
    }

    /// Shortest displacement from `p` to `q` (minimal lattice image).
    pub fn displacement(&self, p: &[f64], q: &[f64]) -> DVector<f64> {
        let d = DVector::from_iterator(p.len(), q.iter().zip(p).map(|(a, b)| a - b));
        match &self.topology {
            Topology::Euclidean => d,
            Topology::Torus { basis, inverse } => {
                let c = (inverse * &d).map(|x| x - x.round());
                basis * c
            }
        }
    }

    /// Representative of `p` in the fundamental domain `[0, 1)^{2n}` of
    /// lattice coordinates.
    pub fn reduce(&self, p: &[f64]) -> Vec<f64> {
        match &self.topology {
            Topology::Euclidean => p.to_vec(),
            Topology::Torus { basis, inverse } => {
                let v = DVector::from_column_slice(p);
                let c = (inverse * v).map(|x| x - x.floor());
                (basis * c).iter().copied().collect()
            }
        }
    }

    /// Nearest lattice vector to `v`.
    pub fn round_to_lattice(&self, v: &[f64]) -> DVector<f64> {
        match &self.topology {
            Topology::Euclidean => DVector::zeros(v.len()),
            Topology::Torus { basis, inverse } => {
                basis * (inverse * DVector::from_column_slice(v)).map(f64::round)
            }
        }
    }

    /// Lattice vectors with coefficients in `-r..=r`.
    pub fn lattice_translates(&self, r: i32) -> Vec<DVector<f64>> {
        let dim = self.real_dim();
        match &self.topology {
            Topology::Euclidean => vec![DVector::zeros(dim)],
            Topology::Torus { basis, .. } => {
                let side = (2 * r + 1) as usize;
                let total = side.pow(dim as u32);
                (0..total)
                    .map(|mut idx| {
                        let mut c = DVector::zeros(dim);
                        for k in 0..dim {
                            c[k] = (idx % side) as f64 - r as f64;
                            idx /= side;
                        }
                        basis * c
                    })
                    .collect()
            }
        }
    }
}

fn bilinear(m: &DMatrix<f64>, u: &[f64], v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..u.len() {
        if u[i] == 0.0 {
            continue;
        }
        for j in 0..v.len() {
            acc += u[i] * m[(i, j)] * v[j];
        }
    }
    acc
}

/// Affine Lagrangian `basepoint + span(directions)`, closed in the torus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryLagrangian {
    pub index: usize,
    pub basepoint: Vec<f64>,
    pub directions: Vec<Vec<f64>>,
}

impl BoundaryLagrangian {
    /// `max |omega(u_a, u_b)|` over the spanning directions.
    pub fn lagrangian_residual(&self, model: &AmbientModel) -> f64 {
        let mut r: f64 = 0.0;
        for a in 0..self.directions.len() {
            for b in a + 1..self.directions.len() {
                r = r.max(model.omega(&self.directions[a], &self.directions[b]).abs());
            }
        }
        r
    }

    pub fn validate(&self, model: &AmbientModel) -> Result<(), AmbientError> {
        let dim = model.real_dim();
        if self.basepoint.len() != dim || self.directions.iter().any(|d| d.len() != dim) {
            return Err(AmbientError::Invalid(format!(
                "boundary Lagrangian {} has wrong coordinate count",
                self.index
            )));
        }
        if self.directions.len() != model.n() {
            return Err(AmbientError::Invalid(format!(
                "boundary Lagrangian {} needs {} directions",
                self.index,
                model.n()
            )));
        }
        let span = DMatrix::from_fn(dim, self.directions.len(), |r, c| self.directions[c][r]);
        let sv = span.svd(false, false).singular_values;
        if sv.min() < 1e-12 * sv.max() {
            return Err(AmbientError::Invalid(format!(
                "directions of boundary Lagrangian {} are dependent",
                self.index
            )));
        }
        Ok(())
    }

    /// `g`-orthonormal basis of the direction span.
    pub fn frame(&self, model: &AmbientModel) -> Vec<DVector<f64>> {
        gram_schmidt(model, self.directions.iter().map(|d| DVector::from_column_slice(d)))
    }

    /// Distance from `point` to the nearest lattice image of the subspace.
    pub fn distance(&self, model: &AmbientModel, point: &[f64]) -> f64 {
        let frame = self.frame(model);
        let base = model.displacement(&self.basepoint, point);
        let mut best = f64::INFINITY;
        for l in model.lattice_translates(1) {
            let v = &base + l;
            best = best.min(perp_norm(model, &frame, &v));
        }
        best
    }
}

fn gram_schmidt(model: &AmbientModel, vs: impl Iterator<Item = DVector<f64>>) -> Vec<DVector<f64>> {
    let mut out: Vec<DVector<f64>> = Vec::new();
    for v in vs {
        let mut w = v.clone();
        for _ in 0..2 {
            for u in &out {
                let c = model.metric(u.as_slice(), w.as_slice());
                w -= u * c;
            }
        }
        let nw = model.metric(w.as_slice(), w.as_slice()).sqrt();
        if nw > 1e-12 * model.metric(v.as_slice(), v.as_slice()).sqrt() {
            out.push(w / nw);
        }
    }
    out
}

fn perp_norm(model: &AmbientModel, frame: &[DVector<f64>], v: &DVector<f64>) -> f64 {
    let mut w = v.clone();
    for u in frame {
        let c = model.metric(u.as_slice(), w.as_slice());
        w -= u * c;
    }
    model.metric(w.as_slice(), w.as_slice()).max(0.0).sqrt()
}

/// Smallest distance between the lattice images of two boundary Lagrangians;
/// zero when they meet.
pub fn separation(model: &AmbientModel, a: &BoundaryLagrangian, b: &BoundaryLagrangian) -> f64 {
    let frame = gram_schmidt(
        model,
        a.directions
            .iter()
            .chain(&b.directions)
            .map(|d| DVector::from_column_slice(d)),
    );
    if frame.len() == model.real_dim() {
        return 0.0;
    }
    let base = model.displacement(&a.basepoint, &b.basepoint);
    model
        .lattice_translates(2)
        .into_iter()
        .map(|l| perp_norm(model, &frame, &(&base + l)))
        .fold(f64::INFINITY, f64::min)
}
