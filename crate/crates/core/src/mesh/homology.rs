//! Betti numbers and integral cycle bases.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{Chain, MeshError, SimplicialMesh};

const PRIME: u64 = 2_147_483_647;

fn inv_mod(a: u64) -> u64 {
    let (mut base, mut exp, mut acc) = (a % PRIME, PRIME - 2, 1u64);
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * base % PRIME;
        }
        base = base * base % PRIME;
        exp >>= 1;
    }
    acc
}

/// Rank over GF(p) of a sparse integer matrix given by columns.
pub(crate) fn rank_mod_p(columns: Vec<Vec<(usize, i64)>>) -> usize {
    use std::collections::HashMap;
    let to_field = |c: i64| (c.rem_euclid(PRIME as i64)) as u64;
    let mut pivots: HashMap<usize, Vec<(usize, u64)>> = HashMap::new();
    let mut rank = 0;
    for col in columns {
        let mut col: Vec<(usize, u64)> = col
            .into_iter()
            .map(|(r, c)| (r, to_field(c)))
            .filter(|&(_, c)| c != 0)
            .collect();
        col.sort_unstable();
        loop {
            let Some(&(low, val)) = col.last() else { break };
            let Some(other) = pivots.get(&low) else {
                pivots.insert(low, col);
                rank += 1;
                break;
            };
            // col -= (val / other_low) * other
            let factor = val * inv_mod(other.last().unwrap().1) % PRIME;
            let mut merged = Vec::with_capacity(col.len() + other.len());
            let (mut i, mut j) = (0, 0);
            while i < col.len() || j < other.len() {
                let take_col = j >= other.len() || (i < col.len() && col[i].0 < other[j].0);
                let take_other = i >= col.len() || (j < other.len() && other[j].0 < col[i].0);
                if take_col {
                    merged.push(col[i]);
                    i += 1;
                } else if take_other {
                    let v = (PRIME - factor * other[j].1 % PRIME) % PRIME;
                    if v != 0 {
                        merged.push((other[j].0, v));
                    }
                    j += 1;
                } else {
                    let v = (col[i].1 + PRIME - factor * other[j].1 % PRIME) % PRIME;
                    if v != 0 {
                        merged.push((col[i].0, v));
                    }
                    i += 1;
                    j += 1;
                }
            }
            col = merged;
        }
    }
    rank
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BettiProfile {
    /// `b_k(L)` for `k = 0..=n`.
    pub absolute: Vec<usize>,
    /// `b_k(L, dL)` for `k = 0..=n`.
    pub relative: Vec<usize>,
}

impl BettiProfile {
    pub fn relative_first(&self) -> usize {
        self.relative.get(1).copied().unwrap_or(0)
    }

    /// `b_{n-1}(L)`, the rank of the space carrying the special flux.
    pub fn absolute_codim_one(&self) -> usize {
        self.absolute[self.absolute.len() - 2]
    }

    /// Lefschetz duality `H^1(L, dL) = H_{n-1}(L)` in ranks.
    pub fn duality_holds(&self) -> bool {
        self.relative_first() == self.absolute_codim_one()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CycleKind {
    /// `H_1(L, dL)`
    Relative,
    /// `H_{n-1}(L)`
    Absolute,
}

/// Integral cycle representatives together with integer cocycles that
/// pair with them as the identity matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleBasis {
    pub kind: CycleKind,
    pub degree: usize,
    pub cycles: Vec<Chain>,
    pub cocycles: Vec<Vec<i64>>,
}

impl CycleBasis {
    pub fn len(&self) -> usize {
        self.cycles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cycles.is_empty()
    }
}

struct SpanningForest {
    parent: Vec<Option<(usize, usize)>>,
    tree_edge: Vec<bool>,
    order: Vec<usize>,
}

/// BFS forest; `adj[v]` lists `(edge, neighbour)` and must be sorted by edge.
fn bfs_forest(adj: &[Vec<(usize, usize)>], num_edges: usize, roots: &[usize]) -> SpanningForest {
    let n = adj.len();
    let mut parent = vec![None; n];
    let mut seen = vec![false; n];
    let mut tree_edge = vec![false; num_edges];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::new();
    let starts = roots.iter().copied().chain(0..n);
    for r in starts {
        if seen[r] {
            continue;
        }
        seen[r] = true;
        queue.push_back(r);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &(e, w) in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    tree_edge[e] = true;
                    parent[w] = Some((e, v));
                    queue.push_back(w);
                }
            }
        }
    }
    SpanningForest {
        parent,
        tree_edge,
        order,
    }
}

impl SimplicialMesh {
    fn boundary_columns(&self, k: usize, relative: bool) -> Vec<Vec<(usize, i64)>> {
        if k == 0 || k > self.dim {
            return Vec::new();
        }
        (0..self.num_simplices(k))
            .filter(|&i| !(relative && self.on_boundary[k][i]))
            .map(|i| {
                self.faces[k][i]
                    .iter()
                    .filter(|&&(f, _)| !(relative && self.on_boundary[k - 1][f]))
                    .map(|&(f, s)| (f, s as i64))
                    .collect()
            })
            .collect()
    }

    /// Betti numbers by exact sparse elimination over a large prime field.
    pub fn betti(&self) -> BettiProfile {
        let n = self.dim;
        let compute = |relative: bool| {
            let ranks: Vec<usize> = (0..=n + 1)
                .map(|k| rank_mod_p(self.boundary_columns(k, relative)))
                .collect();
            (0..=n)
                .map(|k| {
                    let cells = if relative {
                        self.on_boundary[k].iter().filter(|&&b| !b).count()
                    } else {
                        self.num_simplices(k)
                    };
                    cells - ranks[k] - ranks[k + 1]
                })
                .collect::<Vec<_>>()
        };
        BettiProfile {
            absolute: compute(false),
            relative: compute(true),
        }
    }

    fn require_low_dim(&self, operation: &'static str) -> Result<(), MeshError> {
        if self.dim > 2 {
            return Err(MeshError::UnsupportedDimension {
                operation,
                dim: self.dim,
            });
        }
        Ok(())
    }

    fn edge_path_to_root(
        &self,
        forest: &SpanningForest,
        node_of: &[usize],
        mut node: usize,
    ) -> Vec<(usize, i64)> {
        let mut terms = Vec::new();
        while let Some((e, up)) = forest.parent[node] {
            let s = &self.simplices[1][e];
            let sign = if node_of[s[0]] == node && node_of[s[1]] == up { 1 } else { -1 };
            terms.push((e, sign));
            node = up;
        }
        terms
    }

    /// Solve `dc = 0` on the cotree edges by peeling leaves of the dual forest.
    fn fill_cotree(
        &self,
        values: &mut [i64],
        dual: &SpanningForest,
        num_triangles: usize,
    ) -> Result<(), MeshError> {
        for &node in dual.order.iter().rev() {
            if node >= num_triangles {
                continue;
            }
            let faces = &self.faces[2][node];
            match dual.parent[node] {
                Some((pe, _)) => {
                    let mut acc = 0i64;
                    let mut sign_p = 0i64;
                    for &(e, s) in faces {
                        if e == pe {
                            sign_p = s as i64;
                        } else {
                            acc += s as i64 * values[e];
                        }
                    }
                    values[pe] = -acc * sign_p;
                }
                None => {
                    let r: i64 = faces.iter().map(|&(e, s)| s as i64 * values[e]).sum();
                    if r != 0 {
                        return Err(MeshError::RankDeficient {
                            expected: 0,
                            found: r.unsigned_abs() as usize,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Generators of `H_1(L, dL)` and dual relative integer 1-cocycles.
    ///
    /// Tree-cotree on the graph with all boundary vertices identified.
    pub fn relative_cycle_basis(&self) -> Result<CycleBasis, MeshError> {
        self.require_low_dim("relative cycle basis")?;
        let expected = self.betti().relative_first();
        let nv = self.num_simplices(0);
        let ne = self.num_simplices(1);
        let has_root = self.has_boundary();
        let mut node_of = vec![0usize; nv];
        let mut next = usize::from(has_root);
        for v in 0..nv {
            if self.on_boundary[0][v] {
                node_of[v] = 0;
            } else {
                node_of[v] = next;
                next += 1;
            }
        }
        let mut adj = vec![Vec::new(); next];
        for e in 0..ne {
            if self.on_boundary[1][e] {
                continue;
            }
            let (a, b) = (node_of[self.simplices[1][e][0]], node_of[self.simplices[1][e][1]]);
            if a != b {
                adj[a].push((e, b));
                adj[b].push((e, a));
            }
        }
        let roots: Vec<usize> = if has_root { vec![0] } else { Vec::new() };
        let forest = bfs_forest(&adj, ne, &roots);

        let candidates: Vec<usize> = (0..ne)
            .filter(|&e| !self.on_boundary[1][e] && !forest.tree_edge[e])
            .collect();
        let (leftover, dual) = if self.dim == 2 {
            let nt = self.num_simplices(2);
            let mut dadj = vec![Vec::new(); nt];
            for &e in &candidates {
                let cf = &self.cofaces[1][e];
                if cf.len() == 2 {
                    dadj[cf[0].0].push((e, cf[1].0));
                    dadj[cf[1].0].push((e, cf[0].0));
                }
            }
            let dual = bfs_forest(&dadj, ne, &[]);
            let left: Vec<usize> = candidates
                .iter()
                .copied()
                .filter(|&e| !dual.tree_edge[e])
                .collect();
            (left, Some(dual))
        } else {
            (candidates, None)
        };
        if leftover.len() != expected {
            return Err(MeshError::RankDeficient {
                expected,
                found: leftover.len(),
            });
        }

        let mut cycles = Vec::with_capacity(leftover.len());
        let mut cocycles = Vec::with_capacity(leftover.len());
        for &e in &leftover {
            let s = &self.simplices[1][e];
            let pb = self.edge_path_to_root(&forest, &node_of, node_of[s[1]]);
            let pa = self.edge_path_to_root(&forest, &node_of, node_of[s[0]]);
            let mut chain = Chain::from_terms(
                1,
                std::iter::once((e, 1))
                    .chain(pb)
                    .chain(pa.into_iter().map(|(x, c)| (x, -c))),
            );
            // Run from the lower boundary label to the higher one.
            let ends = chain.boundary(self);
            let mut start = None;
            let mut end = None;
            for &(v, c) in &ends.terms {
                let l = self.vertex_label(v);
                if c < 0 {
                    start = l;
                } else {
                    end = l;
                }
            }
            let flip = matches!((start, end), (Some(a), Some(b)) if a > b);
            let mut values = vec![0i64; ne];
            values[e] = 1;
            if let Some(dual) = &dual {
                self.fill_cotree(&mut values, dual, self.num_simplices(2))?;
            }
            if flip {
                chain = chain.scaled(-1);
                values.iter_mut().for_each(|x| *x = -*x);
            }
            cycles.push(chain);
            cocycles.push(values);
        }
        Ok(CycleBasis {
            kind: CycleKind::Relative,
            degree: 1,
            cycles,
            cocycles,
        })
    }

    /// Generators of `H_{n-1}(L)` and dual absolute integer cocycles.
    pub fn absolute_cycle_basis(&self) -> Result<CycleBasis, MeshError> {
        self.require_low_dim("absolute cycle basis")?;
        let expected = self.betti().absolute_codim_one();
        let nv = self.num_simplices(0);
        if self.dim == 1 {
            let comp = self.vertex_components();
            let ncomp = comp.iter().copied().max().map_or(0, |c| c + 1);
            let mut cycles = Vec::with_capacity(ncomp);
            let mut cocycles = Vec::with_capacity(ncomp);
            for c in 0..ncomp {
                let members: Vec<usize> = (0..nv).filter(|&v| comp[v] == c).collect();
                let rep = members
                    .iter()
                    .copied()
                    .find(|&v| !self.on_boundary[0][v])
                    .unwrap_or(members[0]);
                cycles.push(Chain::from_terms(0, [(rep, 1)]));
                cocycles.push((0..nv).map(|v| i64::from(comp[v] == c)).collect());
            }
            return Ok(CycleBasis {
                kind: CycleKind::Absolute,
                degree: 0,
                cycles,
                cocycles,
            });
        }

        let ne = self.num_simplices(1);
        let nt = self.num_simplices(2);
        let mut adj = vec![Vec::new(); nv];
        for e in 0..ne {
            let s = &self.simplices[1][e];
            adj[s[0]].push((e, s[1]));
            adj[s[1]].push((e, s[0]));
        }
        let forest = bfs_forest(&adj, ne, &[]);
        let node_of: Vec<usize> = (0..nv).collect();

        // Dual graph: triangles plus one node at infinity behind the boundary.
        let inf = nt;
        let mut dadj = vec![Vec::new(); nt + 1];
        for e in 0..ne {
            if forest.tree_edge[e] {
                continue;
            }
            let cf = &self.cofaces[1][e];
            if cf.len() == 2 {
                dadj[cf[0].0].push((e, cf[1].0));
                dadj[cf[1].0].push((e, cf[0].0));
            } else {
                dadj[cf[0].0].push((e, inf));
                dadj[inf].push((e, cf[0].0));
            }
        }
        let roots: Vec<usize> = if self.has_boundary() { vec![inf] } else { Vec::new() };
        let dual = bfs_forest(&dadj, ne, &roots);
        let leftover: Vec<usize> = (0..ne)
            .filter(|&e| !forest.tree_edge[e] && !dual.tree_edge[e])
            .collect();
        if leftover.len() != expected {
            return Err(MeshError::RankDeficient {
                expected,
                found: leftover.len(),
            });
        }
        let mut cycles = Vec::with_capacity(leftover.len());
        let mut cocycles = Vec::with_capacity(leftover.len());
        for &e in &leftover {
            let s = &self.simplices[1][e];
            let pb = self.edge_path_to_root(&forest, &node_of, s[1]);
            let pa = self.edge_path_to_root(&forest, &node_of, s[0]);
            cycles.push(Chain::from_terms(
                1,
                std::iter::once((e, 1))
                    .chain(pb)
                    .chain(pa.into_iter().map(|(x, c)| (x, -c))),
            ));
            let mut values = vec![0i64; ne];
            values[e] = 1;
            self.fill_cotree(&mut values, &dual, nt)?;
            cocycles.push(values);
        }
        Ok(CycleBasis {
            kind: CycleKind::Absolute,
            degree: 1,
            cycles,
            cocycles,
        })
    }

    /// Integer coboundary of a `k`-cochain.
    pub fn coboundary_int(&self, k: usize, values: &[i64]) -> Vec<i64> {
        if k >= self.dim {
            return Vec::new();
        }
        (0..self.num_simplices(k + 1))
            .map(|i| {
                self.faces[k + 1][i]
                    .iter()
                    .map(|&(f, s)| s as i64 * values[f])
                    .sum()
            })
            .collect()
    }

    /// Cup product `(a u b)[L]` of an integer 1-cochain and an integer
    /// `(n-1)`-cochain, evaluated on the oriented fundamental class.
    pub fn cup_pairing(&self, a: &[i64], b: &[i64]) -> i64 {
        let n = self.dim;
        let mut total = 0i64;
        for (t, s) in self.simplices[n].iter().enumerate() {
            let front = self.lookup[1][&s[0..2].to_vec()];
            let back = self.lookup[n - 1][&s[1..].to_vec()];
            total += self.orientation[t] as i64 * a[front] * b[back];
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_of_small_matrices() {
        assert_eq!(rank_mod_p(vec![vec![(0, 1), (1, -1)], vec![(1, 1), (2, -1)]]), 2);
        assert_eq!(
            rank_mod_p(vec![
                vec![(0, 1), (1, -1)],
                vec![(1, 1), (2, -1)],
                vec![(0, 1), (2, -1)]
            ]),
            2
        );
        assert_eq!(rank_mod_p(vec![vec![], vec![(3, 2)]]), 1);
    }

    fn annulus_mesh(ns: usize, nt: usize) -> SimplicialMesh {
        let id = |i: usize, j: usize| i * nt + (j % nt);
        let coords = (0..=ns)
            .flat_map(|i| (0..nt).map(move |j| vec![i as f64, j as f64]))
            .collect();
        let mut tops = Vec::new();
        for i in 0..ns {
            for j in 0..nt {
                tops.push(vec![id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                tops.push(vec![id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        let mut labels = Vec::new();
        for j in 0..nt {
            labels.push((vec![id(0, j), id(0, j + 1)], 1));
            labels.push((vec![id(ns, j), id(ns, j + 1)], 2));
        }
        SimplicialMesh::build(2, coords, &tops, &labels).unwrap()
    }

    #[test]
    fn annulus_bases_are_dual() {
        let m = annulus_mesh(3, 5);
        let b = m.betti();
        assert_eq!(b.absolute, vec![1, 1, 0]);
        assert_eq!(b.relative, vec![0, 1, 1]);
        let rel = m.relative_cycle_basis().unwrap();
        let abs = m.absolute_cycle_basis().unwrap();
        for basis in [&rel, &abs] {
            assert_eq!(basis.len(), 1);
            for (i, c) in basis.cocycles.iter().enumerate() {
                assert!(m.coboundary_int(1, c).iter().all(|&x| x == 0));
                for (j, g) in basis.cycles.iter().enumerate() {
                    assert_eq!(g.pair_int(c), i64::from(i == j));
                }
            }
        }
        assert!(abs.cycles[0].boundary(&m).is_zero());
        let ends = rel.cycles[0].boundary(&m);
        assert_eq!(ends.terms.len(), 2);
        for &(v, c) in &ends.terms {
            assert_eq!(m.vertex_label(v), Some(if c < 0 { 1 } else { 2 }));
        }
        for e in 0..m.num_simplices(1) {
            if m.is_boundary(1, e) {
                assert_eq!(rel.cocycles[0][e], 0);
            }
        }
        assert_eq!(m.cup_pairing(&rel.cocycles[0], &abs.cocycles[0]).abs(), 1);
    }
}
