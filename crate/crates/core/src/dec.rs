//! Whitney-form exterior calculus on a [`SimplicialMesh`] with a piecewise
//! constant metric.
//!
//! Mass matrices are Galerkin inner products of Whitney forms. The wedge
//! pairing `K[tau][sigma] = int W_tau ^ W_sigma` is metric-free and the
//! discrete Hodge star is the L2 projection
//! `*_k = (-1)^{k(n-k)} M_{n-k}^{-1} K`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use nalgebra_sparse::CsrMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, SpdSolver};
use crate::mesh::{CycleBasis, CycleKind, MeshError, SimplicialMesh};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("metric on top simplex {simplex} is not positive definite")]
    DegenerateMetric { simplex: usize },
    #[error("expected {expected} values, got {found}")]
    SizeMismatch { expected: usize, found: usize },
    #[error("cochain of degree {found} where degree {expected} is required")]
    DegreeMismatch { expected: usize, found: usize },
    #[error("mass matrix of degree {0} is not positive definite")]
    SingularMass(usize),
    #[error("harmonic space has dimension {found}, topology predicts {expected}")]
    HarmonicDimension { expected: usize, found: usize },
    #[error("cochain does not vanish on the boundary (max {0:e})")]
    BoundaryViolation(f64),
    #[error("{0} is only available for degree 1 (Dirichlet) or degree n-1 (Neumann)")]
    Unsupported(&'static str),
}

/// Real cochain of a fixed degree, indexed by simplex id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cochain {
    pub degree: usize,
    pub values: Vec<f64>,
}

impl Cochain {
    pub fn new(degree: usize, values: Vec<f64>) -> Self {
        Self { degree, values }
    }

    pub fn zeros(mesh: &SimplicialMesh, degree: usize) -> Self {
        Self::new(degree, vec![0.0; mesh.num_simplices(degree)])
    }

    pub fn from_int(degree: usize, values: &[i64]) -> Self {
        Self::new(degree, values.iter().map(|&v| v as f64).collect())
    }

    pub fn max_abs(&self) -> f64 {
        linalg::max_abs(&self.values)
    }

    pub fn axpy(&self, a: f64, other: &Cochain) -> Cochain {
        assert_eq!(self.degree, other.degree);
        Cochain::new(
            self.degree,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| x + a * y)
                .collect(),
        )
    }

    pub fn scale(&self, a: f64) -> Cochain {
        Cochain::new(self.degree, self.values.iter().map(|x| a * x).collect())
    }

    /// Largest absolute value on boundary simplices.
    pub fn boundary_max(&self, mesh: &SimplicialMesh) -> f64 {
        self.values
            .iter()
            .zip(mesh.boundary_flags(self.degree))
            .filter(|(_, &b)| b)
            .fold(0.0, |m, (v, _)| m.max(v.abs()))
    }
}

/// Per-top-simplex Gram matrices `E_ij = g(e_i, e_j)` in the edge frame
/// `e_i = p_{v_i} - p_{v_0}` of the sorted vertex tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricField {
    grams: Vec<DMatrix<f64>>,
}

impl MetricField {
    pub fn new(mesh: &SimplicialMesh, grams: Vec<DMatrix<f64>>) -> Result<Self, DecError> {
        let n = mesh.dim();
        let nt = mesh.num_simplices(n);
        if grams.len() != nt {
            return Err(DecError::SizeMismatch {
                expected: nt,
                found: grams.len(),
            });
        }
        for (t, g) in grams.iter().enumerate() {
            if g.nrows() != n || g.ncols() != n {
                return Err(DecError::SizeMismatch {
                    expected: n,
                    found: g.nrows(),
                });
            }
            let asym = (g - g.transpose()).amax();
            let scale = g.amax().max(f64::MIN_POSITIVE);
            if asym > 1e-12 * scale || g.clone().cholesky().is_none() {
                return Err(DecError::DegenerateMetric { simplex: t });
            }
            let det = g.determinant();
            if det <= 1e-14 * scale.powi(n as i32) {
                return Err(DecError::DegenerateMetric { simplex: t });
            }
        }
        Ok(Self { grams })
    }

    /// Metric from a tensor field evaluated at simplex barycentres of the
    /// reference coordinates. Coordinates with `Some(period)` are periodic and
    /// edge vectors use the shortest representative.
    pub fn from_tensor<F>(
        mesh: &SimplicialMesh,
        periods: &[Option<f64>],
        tensor: F,
    ) -> Result<Self, DecError>
    where
        F: Fn(&[f64]) -> DMatrix<f64>,
    {
        let n = mesh.dim();
        let grams = mesh
            .simplices(n)
            .iter()
            .map(|s| {
                let p0 = mesh.coords(s[0]);
                let d = p0.len();
                let delta = |v: usize, r: usize| {
                    let mut x = mesh.coords(v)[r] - p0[r];
                    if let Some(Some(per)) = periods.get(r) {
                        x -= per * (x / per).round();
                    }
                    x
                };
                let bary: Vec<f64> = (0..d)
                    .map(|r| p0[r] + s.iter().map(|&v| delta(v, r)).sum::<f64>() / s.len() as f64)
                    .collect();
                let g = tensor(&bary);
                let frame = DMatrix::from_fn(d, n, |r, c| delta(s[c + 1], r));
                frame.transpose() * g * frame
            })
            .collect();
        Self::new(mesh, grams)
    }

    /// Flat metric of the reference coordinates.
    pub fn euclidean(mesh: &SimplicialMesh, periods: &[Option<f64>]) -> Result<Self, DecError> {
        let d = mesh.coords(0).len();
        Self::from_tensor(mesh, periods, |_| DMatrix::identity(d, d))
    }

    pub fn gram(&self, t: usize) -> &DMatrix<f64> {
        &self.grams[t]
    }

    pub fn scaled(&self, c2: f64) -> Self {
        Self {
            grams: self.grams.iter().map(|g| g * c2).collect(),
        }
    }
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

fn subsets(len: usize, size: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(s: usize, len: usize, size: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for i in s..len {
            cur.push(i);
            rec(i + 1, len, size, cur, out);
            cur.pop();
        }
    }
    rec(0, len, size, &mut cur, &mut out);
    out
}

fn without(v: &[usize], j: usize) -> Vec<usize> {
    let mut w = v.to_vec();
    w.remove(j);
    w
}

fn sub_det(g: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> f64 {
    if rows.is_empty() {
        return 1.0;
    }
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| g[(rows[i], cols[j])]).determinant()
}

/// `<d lambda_a, d lambda_b>` for all barycentric coordinates of a simplex.
fn barycentric_gram(gram: &DMatrix<f64>) -> DMatrix<f64> {
    let n = gram.nrows();
    let inv = gram.clone().try_inverse().expect("metric validated as SPD");
    let mut g = DMatrix::zeros(n + 1, n + 1);
    for a in 0..n {
        for b in 0..n {
            g[(a + 1, b + 1)] = inv[(a, b)];
        }
    }
    for a in 1..=n {
        let s: f64 = (1..=n).map(|b| g[(a, b)]).sum();
        g[(a, 0)] = -s;
        g[(0, a)] = -s;
    }
    g[(0, 0)] = (1..=n).map(|a| -g[(a, 0)]).sum();
    g
}

/// Coefficients of `d lambda_a` in the basis `d lambda_1..d lambda_n`.
fn coefficient_row(a: usize, n: usize) -> Vec<f64> {
    if a == 0 {
        vec![-1.0; n]
    } else {
        let mut r = vec![0.0; n];
        r[a - 1] = 1.0;
        r
    }
}

fn wedge_det(left: &[usize], right: &[usize], n: usize) -> f64 {
    let rows: Vec<Vec<f64>> = left
        .iter()
        .chain(right)
        .map(|&a| coefficient_row(a, n))
        .collect();
    if rows.is_empty() {
        return 1.0;
    }
    DMatrix::from_fn(n, n, |i, j| rows[i][j]).determinant()
}

fn global_ids(mesh: &SimplicialMesh, top: &[usize], local: &[Vec<usize>], k: usize) -> Vec<usize> {
    local
        .iter()
        .map(|l| {
            let verts: Vec<usize> = l.iter().map(|&i| top[i]).collect();
            mesh.index_of(k, &verts).expect("face of a top simplex")
        })
        .collect()
}

/// Whitney mass matrix `M_k`.
pub fn mass_matrix(
    mesh: &SimplicialMesh,
    metric: &MetricField,
    k: usize,
) -> Result<CsrMatrix<f64>, DecError> {
    let n = mesh.dim();
    if k > n {
        return Err(DecError::DegreeMismatch {
            expected: n,
            found: k,
        });
    }
    let local = subsets(n + 1, k + 1);
    let kf2 = factorial(k).powi(2);
    let moment = 1.0 / ((n + 1) as f64 * (n + 2) as f64);
    let mut trip = Vec::new();
    for (t, top) in mesh.simplices(n).iter().enumerate() {
        let gram = metric.gram(t);
        let g = barycentric_gram(gram);
        let vol = gram.determinant().sqrt() / factorial(n);
        let ids = global_ids(mesh, top, &local, k);
        for (p, sp) in local.iter().enumerate() {
            for (q, sq) in local.iter().enumerate() {
                let mut acc = 0.0;
                for j in 0..=k {
                    for l in 0..=k {
                        let sign = if (j + l) % 2 == 0 { 1.0 } else { -1.0 };
                        let delta = if sp[j] == sq[l] { 2.0 } else { 1.0 };
                        acc += sign * delta * sub_det(&g, &without(sp, j), &without(sq, l));
                    }
                }
                trip.push((ids[p], ids[q], kf2 * vol * moment * acc));
            }
        }
    }
    let m = mesh.num_simplices(k);
    Ok(linalg::csr_from_triplets(m, m, trip))
}

/// Metric-free wedge pairing `K[tau][sigma] = int W_tau ^ W_sigma` between
/// `(n-k)`-forms (rows) and `k`-forms (columns).
pub fn wedge_matrix(mesh: &SimplicialMesh, k: usize) -> CsrMatrix<f64> {
    let n = mesh.dim();
    assert!(k <= n);
    let left = subsets(n + 1, n - k + 1);
    let right = subsets(n + 1, k + 1);
    let scale = factorial(n - k) * factorial(k) / factorial(n + 2);
    let mut local = DMatrix::zeros(left.len(), right.len());
    for (p, a) in left.iter().enumerate() {
        for (q, b) in right.iter().enumerate() {
            let mut acc = 0.0;
            for j in 0..a.len() {
                for l in 0..b.len() {
                    let sign = if (j + l) % 2 == 0 { 1.0 } else { -1.0 };
                    let delta = if a[j] == b[l] { 2.0 } else { 1.0 };
                    acc += sign * delta * wedge_det(&without(a, j), &without(b, l), n);
                }
            }
            local[(p, q)] = scale * acc;
        }
    }
    let mut trip = Vec::new();
    for (t, top) in mesh.simplices(n).iter().enumerate() {
        let flag = mesh.orientation(t) as f64;
        let li = global_ids(mesh, top, &left, n - k);
        let ri = global_ids(mesh, top, &right, k);
        for p in 0..left.len() {
            for q in 0..right.len() {
                if local[(p, q)] != 0.0 {
                    trip.push((li[p], ri[q], flag * local[(p, q)]));
                }
            }
        }
    }
    linalg::csr_from_triplets(mesh.num_simplices(n - k), mesh.num_simplices(k), trip)
}

/// Coboundary `d_k : C^k -> C^{k+1}` as an exact +-1 incidence matrix.
pub fn exterior_derivative(mesh: &SimplicialMesh, k: usize) -> CsrMatrix<f64> {
    let rows = mesh.num_simplices(k + 1);
    let cols = mesh.num_simplices(k);
    let trip = (0..rows).flat_map(|i| {
        mesh.faces(k + 1, i)
            .iter()
            .map(move |&(f, s)| (i, f, s as f64))
    });
    linalg::csr_from_triplets(rows, cols, trip)
}

/// Apply `d` to a cochain.
pub fn d(mesh: &SimplicialMesh, c: &Cochain) -> Cochain {
    let k = c.degree;
    if k >= mesh.dim() {
        return Cochain::new(k + 1, Vec::new());
    }
    let values = (0..mesh.num_simplices(k + 1))
        .map(|i| {
            mesh.faces(k + 1, i)
                .iter()
                .map(|&(f, s)| s as f64 * c.values[f])
                .sum()
        })
        .collect();
    Cochain::new(k + 1, values)
}

/// Columns of `d_0` restricted to `cols`, as a sparse matrix.
fn gradient_on(mesh: &SimplicialMesh, cols: &[usize]) -> CsrMatrix<f64> {
    let mut position = vec![usize::MAX; mesh.num_simplices(0)];
    for (p, &v) in cols.iter().enumerate() {
        position[v] = p;
    }
    let trip = (0..mesh.num_simplices(1)).flat_map(|e| {
        let pos = &position;
        mesh.faces(1, e).iter().filter_map(move |&(v, s)| {
            (pos[v] != usize::MAX).then_some((e, pos[v], s as f64))
        })
    });
    linalg::csr_from_triplets(mesh.num_simplices(1), cols.len(), trip)
}

/// M-orthogonal projection of edge cochains onto `d` of vertex functions
/// supported on a fixed vertex set.
struct GradientProjector {
    grad: CsrMatrix<f64>,
    solver: SpdSolver,
}

impl GradientProjector {
    fn new(mass1: &CsrMatrix<f64>, grad: CsrMatrix<f64>) -> Result<Self, DecError> {
        let stiff = grad.transpose() * &(mass1 * &grad);
        let solver = SpdSolver::new(&stiff).map_err(|_| DecError::SingularMass(0))?;
        Ok(Self { grad, solver })
    }

    /// The exact part `d beta` of `x`.
    fn exact_part(&self, mass1: &CsrMatrix<f64>, x: &[f64]) -> Vec<f64> {
        if self.solver.dim() == 0 {
            return vec![0.0; x.len()];
        }
        let rhs = linalg::matvec_t(&self.grad, &linalg::matvec(mass1, x));
        let beta = self.solver.solve(&rhs);
        linalg::matvec(&self.grad, &beta)
    }
}

/// Which harmonic space a basis spans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryCondition {
    /// Degree 1, vanishing on the boundary: dual to `H_1(L, dL)`.
    Dirichlet,
    /// Degree `n - 1`, free boundary: dual to `H_{n-1}(L)`.
    Neumann,
}

/// Algorithm used to compute harmonic fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum HarmonicMethod {
    /// Remove the exact part from integer cocycle representatives.
    #[default]
    Projection,
    /// Dense null space of the combined closedness and coclosedness
    /// operator. Only practical on coarse meshes.
    Eigen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HodgeDiagnostics {
    /// Smallest singular value of the Dirichlet period matrix.
    pub dirichlet_period_min_sv: f64,
    /// Smallest singular value of the Neumann period matrix.
    pub neumann_period_min_sv: f64,
}

/// Mass matrices, solvers and harmonic bases for one mesh and metric.
pub struct HodgeStructure {
    mesh: Arc<SimplicialMesh>,
    metric: MetricField,
    mass: Vec<CsrMatrix<f64>>,
    solvers: Vec<SpdSolver>,
    wedge: Vec<CsrMatrix<f64>>,
    relative: CycleBasis,
    absolute: CycleBasis,
    dirichlet_proj: GradientProjector,
    neumann_proj: Option<GradientProjector>,
    dirichlet: Vec<Cochain>,
    neumann: Vec<Cochain>,
    diagnostics: HodgeDiagnostics,
}

impl std::fmt::Debug for HodgeStructure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HodgeStructure")
            .field("dim", &self.mesh.dim())
            .field("dirichlet", &self.dirichlet.len())
            .field("neumann", &self.neumann.len())
            .field("diagnostics", &self.diagnostics)
            .finish()
    }
}

fn interior_vertices(mesh: &SimplicialMesh) -> Vec<usize> {
    (0..mesh.num_simplices(0))
        .filter(|&v| !mesh.is_boundary(0, v))
        .collect()
}

fn unpinned_vertices(mesh: &SimplicialMesh) -> Vec<usize> {
    let comp = mesh.vertex_components();
    let mut pinned = std::collections::HashSet::new();
    (0..mesh.num_simplices(0))
        .filter(|&v| !pinned.insert(comp[v]))
        .collect()
}

/// M-orthonormalize in order, then fix signs so the first nonzero period
/// against `basis` is positive.
fn orthonormalize(
    vectors: Vec<Vec<f64>>,
    mass: &CsrMatrix<f64>,
    basis: &CycleBasis,
    degree: usize,
) -> Result<Vec<Cochain>, DecError> {
    let expected = vectors.len();
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(expected);
    for v in vectors {
        let n0 = linalg::inner(mass, &v, &v).sqrt();
        let mut w = v;
        for _ in 0..2 {
            for u in &out {
                let c = linalg::inner(mass, u, &w);
                for (wi, ui) in w.iter_mut().zip(u) {
                    *wi -= c * ui;
                }
            }
        }
        let nw = linalg::inner(mass, &w, &w).sqrt();
        if !(nw > 1e-10 * n0.max(f64::MIN_POSITIVE)) {
            return Err(DecError::HarmonicDimension {
                expected,
                found: out.len(),
            });
        }
        w.iter_mut().for_each(|x| *x /= nw);
        out.push(w);
    }
    Ok(out
        .into_iter()
        .map(|mut w| {
            let first = basis
                .cycles
                .iter()
                .map(|c| c.pair(&w))
                .find(|p| p.abs() > 1e-12)
                .unwrap_or(1.0);
            if first < 0.0 {
                w.iter_mut().for_each(|x| *x = -*x);
            }
            Cochain::new(degree, w)
        })
        .collect())
}

/// Periods `P[j][k] = <cycle_j, cochain_k>`.
pub fn period_matrix(basis: &CycleBasis, cochains: &[Cochain]) -> Result<DMatrix<f64>, DecError> {
    for c in cochains {
        if c.degree != basis.degree {
            return Err(DecError::DegreeMismatch {
                expected: basis.degree,
                found: c.degree,
            });
        }
    }
    Ok(DMatrix::from_fn(basis.len(), cochains.len(), |j, k| {
        basis.cycles[j].pair(&cochains[k].values)
    }))
}

/// Output of [`HodgeStructure::decompose`].
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub exact: Cochain,
    pub harmonic: Cochain,
    pub coexact: Cochain,
}

fn min_singular_value(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b))
}

impl HodgeStructure {
    pub fn assemble(mesh: Arc<SimplicialMesh>, metric: MetricField) -> Result<Self, DecError> {
        Self::assemble_with(mesh, metric, HarmonicMethod::Projection)
    }

    pub fn assemble_with(
        mesh: Arc<SimplicialMesh>,
        metric: MetricField,
        method: HarmonicMethod,
    ) -> Result<Self, DecError> {
        let n = mesh.dim();
        let mut mass = Vec::with_capacity(n + 1);
        let mut solvers = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let m = mass_matrix(&mesh, &metric, k)?;
            solvers.push(SpdSolver::new(&m).map_err(|_| DecError::SingularMass(k))?);
            mass.push(m);
        }
        let wedge = (0..=n).map(|k| wedge_matrix(&mesh, k)).collect();
        let relative = mesh.relative_cycle_basis()?;
        let absolute = mesh.absolute_cycle_basis()?;
        let dirichlet_proj =
            GradientProjector::new(&mass[1], gradient_on(&mesh, &interior_vertices(&mesh)))?;
        let neumann_proj = if n == 2 {
            Some(GradientProjector::new(
                &mass[1],
                gradient_on(&mesh, &unpinned_vertices(&mesh)),
            )?)
        } else {
            None
        };

        let mut hs = Self {
            mesh,
            metric,
            mass,
            solvers,
            wedge,
            relative,
            absolute,
            dirichlet_proj,
            neumann_proj,
            dirichlet: Vec::new(),
            neumann: Vec::new(),
            diagnostics: HodgeDiagnostics {
                dirichlet_period_min_sv: 0.0,
                neumann_period_min_sv: 0.0,
            },
        };
        let (dir, neu) = match method {
            HarmonicMethod::Projection => (
                hs.project_representatives(BoundaryCondition::Dirichlet)?,
                hs.project_representatives(BoundaryCondition::Neumann)?,
            ),
            HarmonicMethod::Eigen => (
                hs.dense_kernel(BoundaryCondition::Dirichlet)?,
                hs.dense_kernel(BoundaryCondition::Neumann)?,
            ),
        };
        hs.dirichlet = orthonormalize(dir, &hs.mass[1], &hs.relative, 1)?;
        hs.neumann = orthonormalize(neu, &hs.mass[n - 1], &hs.absolute, n - 1)?;
        hs.diagnostics = HodgeDiagnostics {
            dirichlet_period_min_sv: min_singular_value(&period_matrix(&hs.relative, &hs.dirichlet)?),
            neumann_period_min_sv: min_singular_value(&period_matrix(&hs.absolute, &hs.neumann)?),
        };
        Ok(hs)
    }

    fn project_representatives(&self, bc: BoundaryCondition) -> Result<Vec<Vec<f64>>, DecError> {
        let n = self.mesh.dim();
        let (basis, proj) = match bc {
            BoundaryCondition::Dirichlet => (&self.relative, Some(&self.dirichlet_proj)),
            BoundaryCondition::Neumann => (&self.absolute, self.neumann_proj.as_ref()),
        };
        Ok(basis
            .cocycles
            .iter()
            .map(|c| {
                let x: Vec<f64> = c.iter().map(|&v| v as f64).collect();
                match proj {
                    Some(p) if bc == BoundaryCondition::Dirichlet || n == 2 => {
                        let ex = p.exact_part(&self.mass[1], &x);
                        x.iter().zip(&ex).map(|(a, b)| a - b).collect()
                    }
                    _ => x,
                }
            })
            .collect())
    }

    fn dense_kernel(&self, bc: BoundaryCondition) -> Result<Vec<Vec<f64>>, DecError> {
        let mesh = &self.mesh;
        let n = mesh.dim();
        let (degree, free, test_vertices, expected) = match bc {
            BoundaryCondition::Dirichlet => (
                1,
                (0..mesh.num_simplices(1))
                    .filter(|&e| !mesh.is_boundary(1, e))
                    .collect::<Vec<_>>(),
                interior_vertices(mesh),
                self.relative.len(),
            ),
            BoundaryCondition::Neumann => (
                n - 1,
                (0..mesh.num_simplices(n - 1)).collect(),
                (0..mesh.num_simplices(0)).collect(),
                self.absolute.len(),
            ),
        };
        let size = mesh.num_simplices(degree);
        let mut rows: Vec<Vec<f64>> = Vec::new();
        if degree < n {
            let dk = linalg::to_dense(&exterior_derivative(mesh, degree));
            for r in 0..dk.nrows() {
                rows.push(free.iter().map(|&c| dk[(r, c)]).collect());
            }
        }
        if degree >= 1 {
            let dm = linalg::to_dense(&exterior_derivative(mesh, degree - 1));
            let m = linalg::to_dense(&self.mass[degree]);
            let co = dm.transpose() * &m;
            let scale = 1.0 / m.amax();
            let vertex_rows: Vec<usize> = if degree == 1 {
                test_vertices
            } else {
                (0..co.nrows()).collect()
            };
            for r in vertex_rows {
                rows.push(free.iter().map(|&c| scale * co[(r, c)]).collect());
            }
        }
        let a = DMatrix::from_fn(rows.len(), free.len(), |i, j| rows[i][j]);
        let ata = a.transpose() * &a;
        let eig = SymmetricEigen::new(ata);
        let mut order: Vec<usize> = (0..free.len()).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let top = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
        let first_nonzero = order
            .iter()
            .map(|&i| eig.eigenvalues[i])
            .find(|&l| l > 1e-10 * top)
            .unwrap_or(top);
        let kernel: Vec<usize> = order
            .into_iter()
            .filter(|&i| eig.eigenvalues[i] < 1e-8 * first_nonzero)
            .collect();
        if kernel.len() != expected {
            return Err(DecError::HarmonicDimension {
                expected,
                found: kernel.len(),
            });
        }
        // Rotate the kernel so it is dual to the integer cocycles, which makes
        // the result comparable with the projection route.
        let basis = match bc {
            BoundaryCondition::Dirichlet => &self.relative,
            BoundaryCondition::Neumann => &self.absolute,
        };
        let vecs: Vec<Vec<f64>> = kernel
            .iter()
            .map(|&i| {
                let mut full = vec![0.0; size];
                for (p, &c) in free.iter().enumerate() {
                    full[c] = eig.eigenvectors[(p, i)];
                }
                full
            })
            .collect();
        let periods = DMatrix::from_fn(expected, expected, |j, k| basis.cycles[j].pair(&vecs[k]));
        let inv = periods
            .try_inverse()
            .ok_or(DecError::HarmonicDimension { expected, found: 0 })?;
        Ok((0..expected)
            .map(|j| {
                let mut v = vec![0.0; size];
                for (k, vk) in vecs.iter().enumerate() {
                    for (a, b) in v.iter_mut().zip(vk) {
                        *a += inv[(k, j)] * b;
                    }
                }
                v
            })
            .collect())
    }

    pub fn mesh(&self) -> &Arc<SimplicialMesh> {
        &self.mesh
    }

    pub fn metric(&self) -> &MetricField {
        &self.metric
    }

    pub fn mass(&self, k: usize) -> &CsrMatrix<f64> {
        &self.mass[k]
    }

    pub fn relative_basis(&self) -> &CycleBasis {
        &self.relative
    }

    pub fn absolute_basis(&self) -> &CycleBasis {
        &self.absolute
    }

    /// M-orthonormal Dirichlet harmonic 1-fields.
    pub fn dirichlet_fields(&self) -> &[Cochain] {
        &self.dirichlet
    }

    /// M-orthonormal Neumann harmonic `(n-1)`-fields.
    pub fn neumann_fields(&self) -> &[Cochain] {
        &self.neumann
    }

    pub fn diagnostics(&self) -> &HodgeDiagnostics {
        &self.diagnostics
    }

    pub fn inner(&self, a: &Cochain, b: &Cochain) -> f64 {
        assert_eq!(a.degree, b.degree);
        linalg::inner(&self.mass[a.degree], &a.values, &b.values)
    }

    pub fn norm(&self, a: &Cochain) -> f64 {
        self.inner(a, a).max(0.0).sqrt()
    }

    fn check_len(&self, c: &Cochain) -> Result<(), DecError> {
        let n = self.mesh.dim();
        if c.degree > n {
            return Err(DecError::DegreeMismatch {
                expected: n,
                found: c.degree,
            });
        }
        let expected = self.mesh.num_simplices(c.degree);
        if c.values.len() != expected {
            return Err(DecError::SizeMismatch {
                expected,
                found: c.values.len(),
            });
        }
        Ok(())
    }

    /// Discrete Hodge star `C^k -> C^{n-k}`.
    pub fn star(&self, c: &Cochain) -> Result<Cochain, DecError> {
        self.check_len(c)?;
        let n = self.mesh.dim();
        let k = c.degree;
        let sign = if (k * (n - k)) % 2 == 0 { 1.0 } else { -1.0 };
        let rhs: Vec<f64> = linalg::matvec(&self.wedge[k], &c.values)
            .into_iter()
            .map(|v| sign * v)
            .collect();
        Ok(Cochain::new(n - k, self.solvers[n - k].solve(&rhs)))
    }

    /// Codifferential `M_{k-1}^{-1} d^T M_k : C^k -> C^{k-1}`.
    pub fn codifferential(&self, c: &Cochain) -> Result<Cochain, DecError> {
        self.check_len(c)?;
        let k = c.degree;
        if k == 0 {
            return Err(DecError::DegreeMismatch {
                expected: 1,
                found: 0,
            });
        }
        let dk = exterior_derivative(&self.mesh, k - 1);
        let rhs = linalg::matvec_t(&dk, &linalg::matvec(&self.mass[k], &c.values));
        Ok(Cochain::new(k - 1, self.solvers[k - 1].solve(&rhs)))
    }

    /// Periods of `c` on the cycle basis matching its degree and boundary
    /// condition.
    pub fn periods(&self, c: &Cochain, kind: CycleKind) -> Result<DVector<f64>, DecError> {
        let basis = match kind {
            CycleKind::Relative => &self.relative,
            CycleKind::Absolute => &self.absolute,
        };
        let p = period_matrix(basis, std::slice::from_ref(c))?;
        Ok(p.column(0).into_owned())
    }

    /// Hodge decomposition into exact, harmonic and coexact parts.
    pub fn decompose(&self, c: &Cochain, bc: BoundaryCondition) -> Result<Decomposition, DecError> {
        self.check_len(c)?;
        let n = self.mesh.dim();
        let (degree, fields) = match bc {
            BoundaryCondition::Dirichlet => (1, &self.dirichlet),
            BoundaryCondition::Neumann => (n - 1, &self.neumann),
        };
        if c.degree != degree {
            return Err(DecError::DegreeMismatch {
                expected: degree,
                found: c.degree,
            });
        }
        if bc == BoundaryCondition::Dirichlet {
            let b = c.boundary_max(&self.mesh);
            if b > 1e-12 * c.max_abs().max(1.0) {
                return Err(DecError::BoundaryViolation(b));
            }
        }
        let exact = match bc {
            BoundaryCondition::Dirichlet => self.dirichlet_proj.exact_part(&self.mass[1], &c.values),
            BoundaryCondition::Neumann => match &self.neumann_proj {
                Some(p) => p.exact_part(&self.mass[1], &c.values),
                None => vec![0.0; c.values.len()],
            },
        };
        let exact = Cochain::new(degree, exact);
        let mut harmonic = Cochain::new(degree, vec![0.0; c.values.len()]);
        for h in fields {
            harmonic = harmonic.axpy(self.inner(c, h), h);
        }
        let coexact = c.axpy(-1.0, &exact).axpy(-1.0, &harmonic);
        Ok(Decomposition {
            exact,
            harmonic,
            coexact,
        })
    }
}
