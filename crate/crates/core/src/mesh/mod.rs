//! Oriented simplicial complexes with labelled boundary components.
//!
//! Simplices of every degree are stored as sorted vertex tuples in
//! lexicographic order, so simplex ids are canonical. The orientation of a
//! top simplex is a sign relative to its sorted vertex order.

mod homology;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use homology::{BettiProfile, CycleBasis, CycleKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("mesh parse error: {0}")]
    Parse(String),
    #[error("mesh has no top simplices")]
    Empty,
    #[error("mesh dimension must be at least 1")]
    ZeroDimension,
    #[error("vertex ids must be 0..{expected} in order, found id {found} at position {position}")]
    VertexIds {
        expected: usize,
        position: usize,
        found: usize,
    },
    #[error("simplex {simplex} references unknown vertex {vertex}")]
    InvalidVertex { simplex: usize, vertex: usize },
    #[error("simplex {simplex} has {found} vertices, expected {expected}")]
    WrongSimplexSize {
        simplex: usize,
        expected: usize,
        found: usize,
    },
    #[error("vertex {0} belongs to no simplex")]
    IsolatedVertex(usize),
    #[error("simplex {0} repeats a vertex")]
    DegenerateSimplex(usize),
    #[error("top simplex {0:?} listed twice")]
    DuplicateSimplex(Vec<usize>),
    #[error("face {face:?} is shared by {count} top simplices")]
    NonManifold { face: Vec<usize>, count: usize },
    #[error("complex is not orientable (conflict across face {face:?})")]
    NonOrientable { face: Vec<usize> },
    #[error("boundary face {0:?} carries no label")]
    UnlabeledBoundary(Vec<usize>),
    #[error("label given for {0:?}, which is not a boundary face")]
    LabelOnInterior(Vec<usize>),
    #[error("boundary label {0} must be at least 1")]
    ZeroLabel(usize),
    #[error("faces with label {0} are not connected")]
    DisconnectedLabel(usize),
    #[error("a boundary component carries labels {0} and {1}")]
    MixedLabels(usize, usize),
    #[error("labels must be 1..={max}, label {missing} is unused")]
    MissingLabel { max: usize, missing: usize },
    #[error("{operation} is implemented for dimension <= 2, mesh has dimension {dim}")]
    UnsupportedDimension { operation: &'static str, dim: usize },
    #[error("extracted {found} independent cycles, expected {expected}")]
    RankDeficient { expected: usize, found: usize },
    #[error("vertex map is not a simplicial automorphism: {0}")]
    NotAutomorphism(String),
    #[error("vertex map sends a face labelled {from} to a face labelled {to}")]
    LabelViolation { from: usize, to: usize },
}

/// Serialized mesh. Vertex ids must be `0..V` in order; top simplices are
/// oriented by the order in which their vertices are listed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawMesh {
    pub dim: usize,
    pub vertices: Vec<RawVertex>,
    pub simplices: Vec<Vec<usize>>,
    pub boundary_labels: Vec<RawLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawVertex {
    pub id: usize,
    #[serde(default)]
    pub coords: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawLabel {
    pub face: Vec<usize>,
    pub label: usize,
}

/// Integer chain: sorted `(simplex id, coefficient)` pairs with no zeros.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chain {
    pub degree: usize,
    pub terms: Vec<(usize, i64)>,
}

impl Chain {
    pub fn zero(degree: usize) -> Self {
        Self {
            degree,
            terms: Vec::new(),
        }
    }

    pub fn from_terms(degree: usize, terms: impl IntoIterator<Item = (usize, i64)>) -> Self {
        let mut acc: HashMap<usize, i64> = HashMap::new();
        for (s, c) in terms {
            *acc.entry(s).or_insert(0) += c;
        }
        let mut terms: Vec<_> = acc.into_iter().filter(|&(_, c)| c != 0).collect();
        terms.sort_unstable();
        Self { degree, terms }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn scaled(&self, k: i64) -> Self {
        Self::from_terms(self.degree, self.terms.iter().map(|&(s, c)| (s, c * k)))
    }

    pub fn add(&self, other: &Chain) -> Self {
        assert_eq!(self.degree, other.degree);
        Self::from_terms(
            self.degree,
            self.terms.iter().chain(other.terms.iter()).copied(),
        )
    }

    /// Evaluate a real cochain on this chain.
    pub fn pair(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(s, c)| c as f64 * values[s]).sum()
    }

    pub fn pair_int(&self, values: &[i64]) -> i64 {
        self.terms.iter().map(|&(s, c)| c * values[s]).sum()
    }

    pub fn boundary(&self, mesh: &SimplicialMesh) -> Chain {
        if self.degree == 0 {
            return Chain::zero(0);
        }
        Chain::from_terms(
            self.degree - 1,
            self.terms.iter().flat_map(|&(s, c)| {
                mesh.faces(self.degree, s)
                    .iter()
                    .map(move |&(f, sg)| (f, c * sg as i64))
            }),
        )
    }
}

#[derive(Debug, Clone)]
pub struct SimplicialMesh {
    dim: usize,
    coords: Vec<Vec<f64>>,
    simplices: Vec<Vec<Vec<usize>>>,
    lookup: Vec<HashMap<Vec<usize>, usize>>,
    orientation: Vec<i8>,
    faces: Vec<Vec<Vec<(usize, i8)>>>,
    cofaces: Vec<Vec<Vec<(usize, i8)>>>,
    on_boundary: Vec<Vec<bool>>,
    face_label: Vec<Option<usize>>,
    num_labels: usize,
    reoriented: usize,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }
    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Sign of the permutation sorting `v` (entries distinct).
pub(crate) fn sort_parity(v: &[usize]) -> i8 {
    let mut inversions = 0usize;
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            if v[i] > v[j] {
                inversions += 1;
            }
        }
    }
    if inversions % 2 == 0 {
        1
    } else {
        -1
    }
}

fn subsets(len: usize, size: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, len: usize, size: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for i in start..len {
            cur.push(i);
            rec(i + 1, len, size, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, len, size, &mut Vec::new(), &mut out);
    out
}

impl SimplicialMesh {
    /// Build and validate a mesh from oriented top simplices and face labels.
    pub fn build(
        dim: usize,
        coords: Vec<Vec<f64>>,
        tops: &[Vec<usize>],
        labels: &[(Vec<usize>, usize)],
    ) -> Result<Self, MeshError> {
        if dim == 0 {
            return Err(MeshError::ZeroDimension);
        }
        if tops.is_empty() {
            return Err(MeshError::Empty);
        }
        let nv = coords.len();
        let mut sorted_tops = Vec::with_capacity(tops.len());
        for (i, t) in tops.iter().enumerate() {
            if t.len() != dim + 1 {
                return Err(MeshError::WrongSimplexSize {
                    simplex: i,
                    expected: dim + 1,
                    found: t.len(),
                });
            }
            if let Some(&v) = t.iter().find(|&&v| v >= nv) {
                return Err(MeshError::InvalidVertex { simplex: i, vertex: v });
            }
            let mut s = t.clone();
            s.sort_unstable();
            if s.windows(2).any(|w| w[0] == w[1]) {
                return Err(MeshError::DegenerateSimplex(i));
            }
            sorted_tops.push((s, sort_parity(t)));
        }
        sorted_tops.sort();
        for w in sorted_tops.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(MeshError::DuplicateSimplex(w[0].0.clone()));
            }
        }

        let mut simplices: Vec<Vec<Vec<usize>>> = vec![Vec::new(); dim + 1];
        {
            let mut sets: Vec<std::collections::BTreeSet<Vec<usize>>> =
                vec![Default::default(); dim + 1];
            for (t, _) in &sorted_tops {
                for k in 0..=dim {
                    for sub in subsets(dim + 1, k + 1) {
                        sets[k].insert(sub.iter().map(|&i| t[i]).collect());
                    }
                }
            }
            for k in 0..=dim {
                simplices[k] = std::mem::take(&mut sets[k]).into_iter().collect();
            }
        }
        if simplices[0].len() != nv {
            let used: std::collections::HashSet<usize> =
                simplices[0].iter().map(|s| s[0]).collect();
            let v = (0..nv).find(|v| !used.contains(v)).unwrap_or(nv);
            return Err(MeshError::IsolatedVertex(v));
        }
        let lookup: Vec<HashMap<Vec<usize>, usize>> = simplices
            .iter()
            .map(|list| list.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect())
            .collect();

        let mut faces = vec![Vec::new(); dim + 1];
        let mut cofaces: Vec<Vec<Vec<(usize, i8)>>> =
            (0..=dim).map(|k| vec![Vec::new(); simplices[k].len()]).collect();
        for k in 1..=dim {
            faces[k] = simplices[k]
                .iter()
                .map(|s| {
                    (0..s.len())
                        .map(|j| {
                            let mut f = s.clone();
                            f.remove(j);
                            let sign = if j % 2 == 0 { 1 } else { -1 };
                            (lookup[k - 1][&f], sign)
                        })
                        .collect::<Vec<_>>()
                })
                .collect();
            for (i, fs) in faces[k].iter().enumerate() {
                for &(f, sg) in fs {
                    cofaces[k - 1][f].push((i, sg));
                }
            }
        }

        for (f, cf) in cofaces[dim - 1].iter().enumerate() {
            if cf.len() > 2 {
                return Err(MeshError::NonManifold {
                    face: simplices[dim - 1][f].clone(),
                    count: cf.len(),
                });
            }
        }

        let input_orientation: Vec<i8> = sorted_tops.iter().map(|(_, o)| *o).collect();
        let (orientation, reoriented) =
            Self::orient(&simplices, &faces, &cofaces, &input_orientation, dim)?;

        let mut on_boundary: Vec<Vec<bool>> =
            (0..=dim).map(|k| vec![false; simplices[k].len()]).collect();
        for (f, cf) in cofaces[dim - 1].iter().enumerate() {
            if cf.len() == 1 {
                on_boundary[dim - 1][f] = true;
            }
        }
        for k in (1..dim).rev() {
            for i in 0..simplices[k].len() {
                if on_boundary[k][i] {
                    for &(f, _) in &faces[k][i] {
                        on_boundary[k - 1][f] = true;
                    }
                }
            }
        }

        let mut mesh = Self {
            dim,
            coords,
            simplices,
            lookup,
            orientation,
            faces,
            cofaces,
            on_boundary,
            face_label: Vec::new(),
            num_labels: 0,
            reoriented,
        };
        mesh.assign_labels(labels)?;
        Ok(mesh)
    }

    fn orient(
        simplices: &[Vec<Vec<usize>>],
        faces: &[Vec<Vec<(usize, i8)>>],
        cofaces: &[Vec<Vec<(usize, i8)>>],
        input: &[i8],
        dim: usize,
    ) -> Result<(Vec<i8>, usize), MeshError> {
        let nt = simplices[dim].len();
        let mut flag = vec![0i8; nt];
        let mut queue = std::collections::VecDeque::new();
        for root in 0..nt {
            if flag[root] != 0 {
                continue;
            }
            flag[root] = input[root];
            queue.push_back(root);
            while let Some(t) = queue.pop_front() {
                for &(f, sg_t) in &faces[dim][t] {
                    for &(u, sg_u) in &cofaces[dim - 1][f] {
                        if u == t {
                            continue;
                        }
                        let want = -flag[t] * sg_t * sg_u;
                        if flag[u] == 0 {
                            flag[u] = want;
                            queue.push_back(u);
                        } else if flag[u] != want {
                            return Err(MeshError::NonOrientable {
                                face: simplices[dim - 1][f].clone(),
                            });
                        }
                    }
                }
            }
        }
        let reoriented = flag.iter().zip(input).filter(|(a, b)| a != b).count();
        Ok((flag, reoriented))
    }

    fn assign_labels(&mut self, labels: &[(Vec<usize>, usize)]) -> Result<(), MeshError> {
        let n = self.dim;
        let nf = self.simplices[n - 1].len();
        let mut face_label = vec![None; nf];
        for (face, label) in labels {
            let mut f = face.clone();
            f.sort_unstable();
            let idx = match self.lookup[n - 1].get(&f) {
                Some(&i) if self.on_boundary[n - 1][i] => i,
                _ => return Err(MeshError::LabelOnInterior(face.clone())),
            };
            if *label == 0 {
                return Err(MeshError::ZeroLabel(*label));
            }
            face_label[idx] = Some(*label);
        }
        let boundary: Vec<usize> = (0..nf).filter(|&f| self.on_boundary[n - 1][f]).collect();
        for &f in &boundary {
            if face_label[f].is_none() {
                return Err(MeshError::UnlabeledBoundary(self.simplices[n - 1][f].clone()));
            }
        }
        // Boundary components: boundary faces glued along shared ridges.
        let mut uf = UnionFind::new(nf);
        if n >= 2 {
            for r in 0..self.simplices[n - 2].len() {
                let around: Vec<usize> = self.cofaces[n - 2][r]
                    .iter()
                    .map(|&(f, _)| f)
                    .filter(|&f| self.on_boundary[n - 1][f])
                    .collect();
                for w in around.windows(2) {
                    uf.union(w[0], w[1]);
                }
            }
        }
        let mut comp_label: HashMap<usize, usize> = HashMap::new();
        let mut label_comp: HashMap<usize, usize> = HashMap::new();
        for &f in &boundary {
            let c = uf.find(f);
            let l = face_label[f].unwrap();
            match comp_label.get(&c) {
                Some(&l0) if l0 != l => return Err(MeshError::MixedLabels(l0.min(l), l0.max(l))),
                _ => {
                    comp_label.insert(c, l);
                }
            }
            match label_comp.get(&l) {
                Some(&c0) if c0 != c => return Err(MeshError::DisconnectedLabel(l)),
                _ => {
                    label_comp.insert(l, c);
                }
            }
        }
        let max = label_comp.keys().copied().max().unwrap_or(0);
        for l in 1..=max {
            if !label_comp.contains_key(&l) {
                return Err(MeshError::MissingLabel { max, missing: l });
            }
        }
        self.face_label = face_label;
        self.num_labels = max;
        Ok(())
    }

    pub fn from_raw(raw: &RawMesh) -> Result<Self, MeshError> {
        for (i, v) in raw.vertices.iter().enumerate() {
            if v.id != i {
                return Err(MeshError::VertexIds {
                    expected: raw.vertices.len(),
                    position: i,
                    found: v.id,
                });
            }
        }
        let coords = raw.vertices.iter().map(|v| v.coords.clone()).collect();
        let labels: Vec<_> = raw
            .boundary_labels
            .iter()
            .map(|l| (l.face.clone(), l.label))
            .collect();
        Self::build(raw.dim, coords, &raw.simplices, &labels)
    }

    pub fn from_json_str(s: &str) -> Result<Self, MeshError> {
        let raw: RawMesh = serde_json::from_str(s).map_err(|e| MeshError::Parse(e.to_string()))?;
        Self::from_raw(&raw)
    }

    /// Serialize back to the file format, tops in oriented vertex order.
    pub fn to_raw(&self) -> RawMesh {
        let n = self.dim;
        let vertices = self
            .coords
            .iter()
            .enumerate()
            .map(|(id, c)| RawVertex {
                id,
                coords: c.clone(),
            })
            .collect();
        let simplices = self.simplices[n]
            .iter()
            .zip(&self.orientation)
            .map(|(s, &o)| {
                let mut s = s.clone();
                if o < 0 {
                    s.swap(0, 1);
                }
                s
            })
            .collect();
        let boundary_labels = self
            .face_label
            .iter()
            .enumerate()
            .filter_map(|(f, l)| {
                l.map(|label| RawLabel {
                    face: self.simplices[n - 1][f].clone(),
                    label,
                })
            })
            .collect();
        RawMesh {
            dim: n,
            vertices,
            simplices,
            boundary_labels,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_vertices(&self) -> usize {
        self.simplices[0].len()
    }

    pub fn num_simplices(&self, k: usize) -> usize {
        self.simplices.get(k).map_or(0, |s| s.len())
    }

    pub fn simplex(&self, k: usize, i: usize) -> &[usize] {
        &self.simplices[k][i]
    }

    pub fn simplices(&self, k: usize) -> &[Vec<usize>] {
        &self.simplices[k]
    }

    pub fn index_of(&self, k: usize, vertices: &[usize]) -> Option<usize> {
        let mut v = vertices.to_vec();
        v.sort_unstable();
        self.lookup.get(k)?.get(&v).copied()
    }

    pub fn coords(&self, v: usize) -> &[f64] {
        &self.coords[v]
    }

    /// Orientation sign of top simplex `t` relative to its sorted order.
    pub fn orientation(&self, t: usize) -> i8 {
        self.orientation[t]
    }

    /// Number of top simplices whose input orientation was flipped to make
    /// the complex coherently oriented.
    pub fn reoriented(&self) -> usize {
        self.reoriented
    }

    /// Signed faces of `k`-simplex `i`; sign `(-1)^j` for the face omitting
    /// the `j`-th sorted vertex.
    pub fn faces(&self, k: usize, i: usize) -> &[(usize, i8)] {
        &self.faces[k][i]
    }

    pub fn cofaces(&self, k: usize, i: usize) -> &[(usize, i8)] {
        &self.cofaces[k][i]
    }

    pub fn is_boundary(&self, k: usize, i: usize) -> bool {
        self.on_boundary[k][i]
    }

    pub fn boundary_flags(&self, k: usize) -> &[bool] {
        &self.on_boundary[k]
    }

    pub fn has_boundary(&self) -> bool {
        self.on_boundary[self.dim - 1].iter().any(|&b| b)
    }

    pub fn face_label(&self, f: usize) -> Option<usize> {
        self.face_label[f]
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    /// Label of the boundary component containing vertex `v`, if any.
    pub fn vertex_label(&self, v: usize) -> Option<usize> {
        if !self.on_boundary[0][v] {
            return None;
        }
        let n = self.dim;
        if n == 1 {
            return self.face_label[v];
        }
        let mut stack = vec![(0usize, v)];
        while let Some((k, s)) = stack.pop() {
            for &(c, _) in &self.cofaces[k][s] {
                if k + 1 == n - 1 {
                    if let Some(l) = self.face_label[c] {
                        return Some(l);
                    }
                } else if self.on_boundary[k + 1][c] {
                    stack.push((k + 1, c));
                }
            }
        }
        None
    }

    /// Connected component id of every vertex, numbered by lowest vertex.
    pub fn vertex_components(&self) -> Vec<usize> {
        let nv = self.num_simplices(0);
        let mut uf = UnionFind::new(nv);
        if self.dim >= 1 {
            for e in &self.simplices[1] {
                uf.union(e[0], e[1]);
            }
        }
        let mut ids = HashMap::new();
        (0..nv)
            .map(|v| {
                let r = uf.find(v);
                let next = ids.len();
                *ids.entry(r).or_insert(next)
            })
            .collect()
    }

    /// Check that `vertex_map` is an automorphism preserving boundary labels.
    pub fn automorphism(&self, vertex_map: &[usize]) -> Result<Automorphism, MeshError> {
        self.automorphism_impl(vertex_map, false).map(|(a, _)| a)
    }

    /// Automorphism that may permute boundary labels; returns the induced
    /// label map (indexed by label, entry 0 unused).
    pub fn relabeling_automorphism(
        &self,
        vertex_map: &[usize],
    ) -> Result<(Automorphism, Vec<usize>), MeshError> {
        self.automorphism_impl(vertex_map, true)
    }

    fn automorphism_impl(
        &self,
        vertex_map: &[usize],
        relabel: bool,
    ) -> Result<(Automorphism, Vec<usize>), MeshError> {
        let nv = self.num_simplices(0);
        if vertex_map.len() != nv {
            return Err(MeshError::NotAutomorphism(format!(
                "map has {} entries for {} vertices",
                vertex_map.len(),
                nv
            )));
        }
        let mut seen = vec![false; nv];
        for &w in vertex_map {
            if w >= nv || seen[w] {
                return Err(MeshError::NotAutomorphism(format!("vertex {w} hit twice or out of range")));
            }
            seen[w] = true;
        }
        let mut maps = Vec::with_capacity(self.dim + 1);
        for k in 0..=self.dim {
            let mut m = Vec::with_capacity(self.simplices[k].len());
            for s in &self.simplices[k] {
                let image: Vec<usize> = s.iter().map(|&v| vertex_map[v]).collect();
                let j = self.index_of(k, &image).ok_or_else(|| {
                    MeshError::NotAutomorphism(format!("{s:?} maps to non-simplex {image:?}"))
                })?;
                m.push((j, sort_parity(&image)));
            }
            maps.push(m);
        }
        let n = self.dim;
        let mut label_map = vec![0usize; self.num_labels() + 1];
        for (f, &(g, _)) in maps[n - 1].iter().enumerate() {
            if let (Some(a), Some(b)) = (self.face_label[f], self.face_label[g]) {
                let consistent = label_map[a] == 0 || label_map[a] == b;
                if (!relabel && a != b) || !consistent {
                    return Err(MeshError::LabelViolation { from: a, to: b });
                }
                label_map[a] = b;
            }
        }
        let orientation_signs = maps[n]
            .iter()
            .enumerate()
            .map(|(t, &(u, p))| self.orientation[t] * p * self.orientation[u])
            .collect();
        Ok((
            Automorphism {
                vertex_map: vertex_map.to_vec(),
                maps,
                orientation_signs,
            },
            label_map,
        ))
    }
}

/// A simplicial automorphism given by a vertex permutation.
#[derive(Debug, Clone)]
pub struct Automorphism {
    vertex_map: Vec<usize>,
    maps: Vec<Vec<(usize, i8)>>,
    orientation_signs: Vec<i8>,
}

impl Automorphism {
    pub fn vertex_map(&self) -> &[usize] {
        &self.vertex_map
    }

    /// Image of `k`-simplex `i` and the parity of the induced vertex order.
    pub fn image(&self, k: usize, i: usize) -> (usize, i8) {
        self.maps[k][i]
    }

    /// True when every top simplex keeps its orientation.
    pub fn preserves_orientation(&self) -> bool {
        self.orientation_signs.iter().all(|&s| s == 1)
    }

    /// `(psi^* c)(s) = c(psi(s))`, with the sign of the induced vertex order.
    pub fn pull_back(&self, k: usize, values: &[f64]) -> Vec<f64> {
        self.maps[k]
            .iter()
            .map(|&(j, p)| p as f64 * values[j])
            .collect()
    }

    pub fn push_forward(&self, chain: &Chain) -> Chain {
        Chain::from_terms(
            chain.degree,
            chain.terms.iter().map(|&(s, c)| {
                let (j, p) = self.maps[chain.degree][s];
                (j, c * p as i64)
            }),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_strip() -> SimplicialMesh {
        // Two triangles forming a unit square, one labelled boundary loop.
        let coords = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0]];
        let tops = vec![vec![0, 1, 2], vec![0, 2, 3]];
        let labels = vec![
            (vec![0, 1], 1),
            (vec![1, 2], 1),
            (vec![2, 3], 1),
            (vec![0, 3], 1),
        ];
        SimplicialMesh::build(2, coords, &tops, &labels).unwrap()
    }

    #[test]
    fn counts_and_faces() {
        let m = square_strip();
        assert_eq!(m.num_simplices(0), 4);
        assert_eq!(m.num_simplices(1), 5);
        assert_eq!(m.num_simplices(2), 2);
        let diag = m.index_of(1, &[2, 0]).unwrap();
        assert!(!m.is_boundary(1, diag));
        assert_eq!(m.cofaces(1, diag).len(), 2);
        assert_eq!(m.num_labels(), 1);
        assert_eq!(m.vertex_label(2), Some(1));
    }

    #[test]
    fn boundary_of_boundary_is_zero() {
        let m = square_strip();
        let all = Chain::from_terms(2, (0..2).map(|t| (t, m.orientation(t) as i64)));
        let b = all.boundary(&m);
        assert_eq!(b.terms.len(), 4);
        assert!(b.boundary(&m).is_zero());
    }

    #[test]
    fn inconsistent_input_is_reoriented() {
        let coords = vec![vec![0.0; 2]; 4];
        let tops = vec![vec![0, 1, 2], vec![0, 3, 2]];
        let labels = vec![
            (vec![0, 1], 1),
            (vec![1, 2], 1),
            (vec![2, 3], 1),
            (vec![0, 3], 1),
        ];
        let m = SimplicialMesh::build(2, coords, &tops, &labels).unwrap();
        assert_eq!(m.reoriented(), 1);
        assert_eq!(m.orientation(0), m.orientation(1));
    }

    #[test]
    fn validation_errors() {
        let coords = vec![vec![0.0; 2]; 4];
        let tops = vec![vec![0, 1, 2], vec![0, 2, 3]];
        let partial = vec![(vec![0, 1], 1)];
        assert!(matches!(
            SimplicialMesh::build(2, coords.clone(), &tops, &partial),
            Err(MeshError::UnlabeledBoundary(_))
        ));
        let interior = vec![(vec![0, 2], 1)];
        assert!(matches!(
            SimplicialMesh::build(2, coords.clone(), &tops, &interior),
            Err(MeshError::LabelOnInterior(_))
        ));
        let bad = vec![vec![0, 1, 7]];
        assert!(matches!(
            SimplicialMesh::build(2, coords.clone(), &bad, &[]),
            Err(MeshError::InvalidVertex { .. })
        ));
        let fan = vec![vec![0, 1, 2], vec![0, 1, 3], vec![0, 1, 2]];
        assert!(matches!(
            SimplicialMesh::build(2, coords.clone(), &fan, &[]),
            Err(MeshError::DuplicateSimplex(_))
        ));
        let coords5 = vec![vec![0.0; 2]; 5];
        let fin = vec![vec![0, 1, 2], vec![0, 1, 3], vec![0, 1, 4]];
        assert!(matches!(
            SimplicialMesh::build(2, coords5, &fin, &[]),
            Err(MeshError::NonManifold { .. })
        ));
    }

    #[test]
    fn two_labels_on_one_loop_are_rejected() {
        let coords = vec![vec![0.0; 2]; 4];
        let tops = vec![vec![0, 1, 2], vec![0, 2, 3]];
        let labels = vec![
            (vec![0, 1], 1),
            (vec![1, 2], 2),
            (vec![2, 3], 1),
            (vec![0, 3], 1),
        ];
        assert!(matches!(
            SimplicialMesh::build(2, coords, &tops, &labels),
            Err(MeshError::MixedLabels(1, 2))
        ));
    }

    #[test]
    fn raw_round_trip() {
        let m = square_strip();
        let json = serde_json::to_string(&m.to_raw()).unwrap();
        let back = SimplicialMesh::from_json_str(&json).unwrap();
        assert_eq!(back.to_raw(), m.to_raw());
        for t in 0..2 {
            assert_eq!(back.orientation(t), m.orientation(t));
        }
    }

    #[test]
    fn automorphism_rejects_non_simplicial_map() {
        let m = square_strip();
        assert!(m.automorphism(&[0, 1, 2, 3]).unwrap().preserves_orientation());
        assert!(matches!(
            m.automorphism(&[1, 0, 2, 3]),
            Err(MeshError::NotAutomorphism(_))
        ));
        let rot = m.automorphism(&[2, 3, 0, 1]).unwrap();
        assert!(rot.preserves_orientation());
    }
}
