//! Betti numbers and cycle bases checked against an integer Smith normal
//! form of the boundary matrices.

use proptest::prelude::*;
use slag_core::fixtures::{self, Handedness};
use slag_core::mesh::{Chain, SimplicialMesh};

/// Diagonal of the Smith normal form (nonzero entries only).
fn smith_diagonal(mut a: Vec<Vec<i128>>) -> Vec<i128> {
    let rows = a.len();
    let cols = a.first().map_or(0, Vec::len);
    let mut diag = Vec::new();
    let mut t = 0;
    while t < rows.min(cols) {
        // Pivot: smallest nonzero magnitude in the remaining block.
        let mut best: Option<(usize, usize)> = None;
        for i in t..rows {
            for j in t..cols {
                if a[i][j] != 0 && best.is_none_or(|(bi, bj)| a[i][j].abs() < a[bi][bj].abs()) {
                    best = Some((i, j));
                }
            }
        }
        let Some((pi, pj)) = best else { break };
        a.swap(t, pi);
        for row in a.iter_mut() {
            row.swap(t, pj);
        }
        loop {
            let p = a[t][t];
            let mut dirty = false;
            for i in t + 1..rows {
                let q = a[i][t] / p;
                if q != 0 {
                    for j in t..cols {
                        a[i][j] -= q * a[t][j];
                    }
                }
                dirty |= a[i][t] != 0;
            }
            for j in t + 1..cols {
                let q = a[t][j] / p;
                if q != 0 {
                    for row in a.iter_mut().skip(t) {
                        row[j] -= q * row[t];
                    }
                }
                dirty |= a[t][j] != 0;
            }
            if !dirty {
                // Divisibility of the remaining block.
                let bad = (t + 1..rows)
                    .flat_map(|i| (t + 1..cols).map(move |j| (i, j)))
                    .find(|&(i, j)| a[i][j] % p != 0);
                match bad {
                    Some((i, _)) => {
                        let row = a[i].clone();
                        for (x, y) in a[t].iter_mut().zip(row) {
                            *x += y;
                        }
                        continue;
                    }
                    None => break,
                }
            }
            // Move the smallest remaining entry of row/column t to the pivot.
            let mut best = (t, t);
            for i in t..rows {
                if a[i][t] != 0 && a[i][t].abs() < a[best.0][best.1].abs() {
                    best = (i, t);
                }
            }
            for j in t..cols {
                if a[t][j] != 0 && a[t][j].abs() < a[best.0][best.1].abs() {
                    best = (t, j);
                }
            }
            a.swap(t, best.0);
            for row in a.iter_mut() {
                row.swap(t, best.1);
            }
        }
        diag.push(a[t][t].abs());
        t += 1;
    }
    diag
}

/// Boundary matrix `C_k -> C_{k-1}`, optionally with boundary simplices
/// removed (relative chains).
fn boundary_matrix(mesh: &SimplicialMesh, k: usize, relative: bool) -> Vec<Vec<i128>> {
    let keep = |d: usize, i: usize| !(relative && mesh.is_boundary(d, i));
    let rows: Vec<usize> = (0..mesh.num_simplices(k - 1)).filter(|&i| keep(k - 1, i)).collect();
    let cols: Vec<usize> = (0..mesh.num_simplices(k)).filter(|&i| keep(k, i)).collect();
    let mut m = vec![vec![0i128; cols.len()]; rows.len()];
    for (c, &j) in cols.iter().enumerate() {
        for &(f, s) in mesh.faces(k, j) {
            if let Some(r) = rows.iter().position(|&x| x == f) {
                m[r][c] = s as i128;
            }
        }
    }
    m
}

fn count(mesh: &SimplicialMesh, k: usize, relative: bool) -> usize {
    (0..mesh.num_simplices(k))
        .filter(|&i| !(relative && mesh.is_boundary(k, i)))
        .count()
}

/// Betti numbers and the torsion-free flag from Smith normal forms.
fn snf_betti(mesh: &SimplicialMesh, relative: bool) -> (Vec<usize>, bool) {
    let n = mesh.dim();
    let mut ranks = vec![0usize; n + 2];
    let mut torsion_free = true;
    for k in 1..=n {
        let d = smith_diagonal(boundary_matrix(mesh, k, relative));
        torsion_free &= d.iter().all(|&x| x == 1);
        ranks[k] = d.len();
    }
    let betti = (0..=n)
        .map(|k| count(mesh, k, relative) - ranks[k] - ranks[k + 1])
        .collect();
    (betti, torsion_free)
}

fn rank(vectors: &[Vec<i128>]) -> usize {
    if vectors.is_empty() {
        return 0;
    }
    smith_diagonal(vectors.to_vec()).len()
}

fn as_vector(chain: &Chain, len: usize) -> Vec<i128> {
    let mut v = vec![0i128; len];
    for &(i, c) in &chain.terms {
        v[i] += c as i128;
    }
    v
}

fn check_bases(mesh: &SimplicialMesh) {
    let n = mesh.dim();
    let ne = mesh.num_simplices(1);

    let rel = mesh.relative_cycle_basis().unwrap();
    assert_eq!(rel.len(), mesh.betti().relative_first());
    for (j, c) in rel.cycles.iter().enumerate() {
        for &(v, _) in &c.boundary(mesh).terms {
            assert!(mesh.is_boundary(0, v), "relative cycle {j} ends inside");
        }
        for (k, a) in rel.cocycles.iter().enumerate() {
            assert_eq!(c.pair_int(a), i64::from(j == k));
        }
    }
    for a in &rel.cocycles {
        assert!(mesh.coboundary_int(1, a).iter().all(|&x| x == 0));
        assert!((0..ne).all(|e| !mesh.is_boundary(1, e) || a[e] == 0));
    }
    // Independence modulo boundaries and boundary edges.
    let mut span: Vec<Vec<i128>> = (0..mesh.num_simplices(2))
        .map(|t| {
            let mut v = vec![0i128; ne];
            for &(e, s) in mesh.faces(2, t) {
                v[e] = s as i128;
            }
            v
        })
        .chain((0..ne).filter(|&e| mesh.is_boundary(1, e)).map(|e| {
            let mut v = vec![0i128; ne];
            v[e] = 1;
            v
        }))
        .collect();
    let base = rank(&span);
    span.extend(rel.cycles.iter().map(|c| as_vector(c, ne)));
    assert_eq!(rank(&span) - base, rel.len());

    let abs = mesh.absolute_cycle_basis().unwrap();
    assert_eq!(abs.len(), mesh.betti().absolute_codim_one());
    assert_eq!(abs.degree, n - 1);
    for (j, c) in abs.cycles.iter().enumerate() {
        if n == 2 {
            assert!(c.boundary(mesh).is_zero());
        }
        for (k, b) in abs.cocycles.iter().enumerate() {
            assert_eq!(c.pair_int(b), i64::from(j == k));
        }
    }
    for b in &abs.cocycles {
        assert!(mesh.coboundary_int(n - 1, b).iter().all(|&x| x == 0));
    }
}

fn meshes() -> Vec<(&'static str, SimplicialMesh)> {
    vec![
        ("interval", fixtures::interval(7, Handedness::Negative).unwrap()),
        ("cylinder", fixtures::cylinder(3, 7, Handedness::Negative).unwrap()),
        (
            "two_cylinders",
            fixtures::two_cylinders((2, 5), (3, 6), Handedness::Positive).unwrap(),
        ),
        ("pair_of_pants", fixtures::pair_of_pants(1).unwrap()),
        ("pair_of_pants_fine", fixtures::pair_of_pants(2).unwrap()),
        ("sphere", fixtures::tetrahedron_surface().unwrap()),
    ]
}

#[test]
fn betti_numbers_agree_with_smith_normal_form() {
    for (name, mesh) in meshes() {
        let b = mesh.betti();
        let (abs, tf_abs) = snf_betti(&mesh, false);
        assert_eq!(b.absolute, abs, "{name}");
        assert!(tf_abs, "{name}");
        if mesh.has_boundary() {
            let (rel, _) = snf_betti(&mesh, true);
            assert_eq!(b.relative, rel, "{name}");
            assert!(b.duality_holds(), "{name}");
        }
    }
}

#[test]
fn cycle_bases_are_dual_and_independent() {
    for (name, mesh) in meshes() {
        if !mesh.has_boundary() {
            continue;
        }
        eprintln!("{name}");
        check_bases(&mesh);
    }
}

#[test]
fn cup_pairing_is_unimodular() {
    for (name, mesh) in meshes() {
        if !mesh.has_boundary() {
            continue;
        }
        let rel = mesh.relative_cycle_basis().unwrap();
        let abs = mesh.absolute_cycle_basis().unwrap();
        let p: Vec<Vec<i128>> = rel
            .cocycles
            .iter()
            .map(|a| abs.cocycles.iter().map(|b| mesh.cup_pairing(a, b) as i128).collect())
            .collect();
        let d = smith_diagonal(p);
        assert_eq!(d.len(), rel.len(), "{name}");
        assert!(d.iter().all(|&x| x == 1), "{name}: {d:?}");
    }
}

fn relabeled_cylinder(perm: &[usize], ns: usize, nt: usize) -> SimplicialMesh {
    let base = fixtures::cylinder(ns, nt, Handedness::Negative).unwrap();
    let raw = base.to_raw();
    let mut coords = vec![Vec::new(); perm.len()];
    for (v, &p) in perm.iter().enumerate() {
        coords[p] = base.coords(v).to_vec();
    }
    let tops: Vec<Vec<usize>> = raw.simplices.iter().map(|s| s.iter().map(|&v| perm[v]).collect()).collect();
    let labels: Vec<(Vec<usize>, usize)> = raw
        .boundary_labels
        .iter()
        .map(|l| (l.face.iter().map(|&v| perm[v]).collect(), l.label))
        .collect();
    SimplicialMesh::build(2, coords, &tops, &labels).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn homology_ignores_vertex_numbering(
        perm in Just((0..24).collect::<Vec<usize>>()).prop_shuffle()
    ) {
        let mesh = relabeled_cylinder(&perm, 3, 6);
        prop_assert_eq!(mesh.betti().relative, vec![0, 1, 1]);
        prop_assert_eq!(mesh.betti().absolute, vec![1, 1, 0]);
        check_bases(&mesh);
    }
}
