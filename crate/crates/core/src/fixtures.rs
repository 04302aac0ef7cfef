//! Mesh generators for the reference configurations.
//!
//! Reference coordinates live in the unit box: `s` in `[0, 1]` runs across
//! the strip, `th` in `[0, 1)` runs around the periodic direction.

use crate::mesh::{MeshError, SimplicialMesh};

/// Orientation of a generated mesh relative to its `(s, th)` coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Handedness {
    /// `ds` (n = 1) or `ds ^ dth` (n = 2) is positive.
    Positive,
    /// `-ds` (n = 1) or `dth ^ ds` (n = 2) is positive.
    Negative,
}

/// Interval `[0, 1]` with `ns` segments; vertex 0 has label 1, the last
/// vertex label 2.
pub fn interval(ns: usize, hand: Handedness) -> Result<SimplicialMesh, MeshError> {
    let coords = (0..=ns).map(|i| vec![i as f64 / ns as f64]).collect();
    let tops: Vec<Vec<usize>> = (0..ns)
        .map(|i| match hand {
            Handedness::Positive => vec![i, i + 1],
            Handedness::Negative => vec![i + 1, i],
        })
        .collect();
    SimplicialMesh::build(1, coords, &tops, &[(vec![0], 1), (vec![ns], 2)])
}

struct Strip {
    coords: Vec<Vec<f64>>,
    tops: Vec<Vec<usize>>,
    labels: Vec<(Vec<usize>, usize)>,
}

fn strip(ns: usize, nt: usize, hand: Handedness, offset: usize, labels: (usize, usize)) -> Strip {
    let id = |i: usize, j: usize| offset + i * nt + (j % nt);
    let coords = (0..=ns)
        .flat_map(|i| (0..nt).map(move |j| vec![i as f64 / ns as f64, j as f64 / nt as f64]))
        .collect();
    let mut tops = Vec::with_capacity(2 * ns * nt);
    for i in 0..ns {
        for j in 0..nt {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            match hand {
                Handedness::Positive => {
                    tops.push(vec![a, b, c]);
                    tops.push(vec![a, c, d]);
                }
                Handedness::Negative => {
                    tops.push(vec![a, c, b]);
                    tops.push(vec![a, d, c]);
                }
            }
        }
    }
    let mut lab = Vec::with_capacity(2 * nt);
    for j in 0..nt {
        lab.push((vec![id(0, j), id(0, j + 1)], labels.0));
        lab.push((vec![id(ns, j), id(ns, j + 1)], labels.1));
    }
    Strip {
        coords,
        tops,
        labels: lab,
    }
}

/// Annulus `[0, 1] x (R/Z)` with `ns` axial and `nt` periodic segments.
/// The circle `s = 0` has label 1 and `s = 1` label 2.
pub fn cylinder(ns: usize, nt: usize, hand: Handedness) -> Result<SimplicialMesh, MeshError> {
    let s = strip(ns, nt, hand, 0, (1, 2));
    SimplicialMesh::build(2, s.coords, &s.tops, &s.labels)
}

/// Disjoint union of two annuli with labels 1, 2 and 3, 4. Vertices of the
/// second annulus follow those of the first. Reference coordinates are
/// `(s, th, c)` with the component index `c` equal to 0 or 1.
pub fn two_cylinders(
    first: (usize, usize),
    second: (usize, usize),
    hand: Handedness,
) -> Result<SimplicialMesh, MeshError> {
    let a = strip(first.0, first.1, hand, 0, (1, 2));
    let offset = a.coords.len();
    let b = strip(second.0, second.1, hand, offset, (3, 4));
    let tag = |c: f64| move |mut x: Vec<f64>| {
        x.push(c);
        x
    };
    let coords = a
        .coords
        .into_iter()
        .map(tag(0.0))
        .chain(b.coords.into_iter().map(tag(1.0)))
        .collect();
    let tops: Vec<_> = a.tops.into_iter().chain(b.tops).collect();
    let labels: Vec<_> = a.labels.into_iter().chain(b.labels).collect();
    SimplicialMesh::build(2, coords, &tops, &labels)
}

/// Number of vertices in the first annulus of [`two_cylinders`].
pub fn first_cylinder_vertices(first: (usize, usize)) -> usize {
    (first.0 + 1) * first.1
}

/// A `7k x 3k` grid with two `k x k` holes: a disc with two holes. Outer
/// boundary label 1, hole boundaries labels 2 and 3.
pub fn pair_of_pants(k: usize) -> Result<SimplicialMesh, MeshError> {
    let (w, h) = (7 * k, 3 * k);
    let in_hole = |ci: usize, cj: usize| {
        let (x, y) = (ci / k, cj / k);
        y == 1 && (x == 1 || x == 5)
    };
    let vid = |i: usize, j: usize| j * (w + 1) + i;
    let mut used = vec![false; (w + 1) * (h + 1)];
    let mut raw_tops = Vec::new();
    for cj in 0..h {
        for ci in 0..w {
            if in_hole(ci, cj) {
                continue;
            }
            let (a, b, c, d) = (vid(ci, cj), vid(ci + 1, cj), vid(ci + 1, cj + 1), vid(ci, cj + 1));
            raw_tops.push(vec![a, b, c]);
            raw_tops.push(vec![a, c, d]);
            for v in [a, b, c, d] {
                used[v] = true;
            }
        }
    }
    let mut remap = vec![usize::MAX; used.len()];
    let mut coords = Vec::new();
    for j in 0..=h {
        for i in 0..=w {
            let v = vid(i, j);
            if used[v] {
                remap[v] = coords.len();
                coords.push(vec![i as f64 / k as f64, j as f64 / k as f64]);
            }
        }
    }
    let tops: Vec<Vec<usize>> = raw_tops
        .iter()
        .map(|t| t.iter().map(|&v| remap[v]).collect())
        .collect();
    // Label boundary edges by which loop they lie on.
    let mut count = std::collections::HashMap::new();
    for t in &tops {
        for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[0], t[2])] {
            *count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    let mut labels = Vec::new();
    for (&(a, b), &c) in &count {
        if c != 1 {
            continue;
        }
        let (pa, pb) = (&coords[a], &coords[b]);
        let mx = 0.5 * (pa[0] + pb[0]);
        let my = 0.5 * (pa[1] + pb[1]);
        let outer = my == 0.0 || my == 3.0 || mx == 0.0 || mx == 7.0;
        let label = if outer {
            1
        } else if mx < 3.5 {
            2
        } else {
            3
        };
        labels.push((vec![a, b], label));
    }
    labels.sort();
    SimplicialMesh::build(2, coords, &tops, &labels)
}

/// Triangulated Moebius band (non-orientable).
pub fn moebius(ns: usize, nt: usize) -> Vec<Vec<usize>> {
    // Strip [0, ns] x [0, nt] with column nt glued to column 0 flipped.
    let id = |i: usize, j: usize| -> usize {
        if j == nt {
            (ns - i) * nt
        } else {
            i * nt + j
        }
    };
    let mut tops = Vec::new();
    for i in 0..ns {
        for j in 0..nt {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            tops.push(vec![a, b, c]);
            tops.push(vec![a, c, d]);
        }
    }
    tops
}

/// Boundary of a tetrahedron: a closed oriented sphere.
pub fn tetrahedron_surface() -> Result<SimplicialMesh, MeshError> {
    let coords = vec![
        vec![0.0, 0.0, 0.0],
        vec![1.0, 0.0, 0.0],
        vec![0.0, 1.0, 0.0],
        vec![0.0, 0.0, 1.0],
    ];
    let tops = vec![vec![1, 2, 3], vec![0, 3, 2], vec![0, 1, 3], vec![0, 2, 1]];
    SimplicialMesh::build(2, coords, &tops, &[])
}

/// Vertex permutation rotating an annulus from [`cylinder`] by `shift`
/// steps in the periodic direction.
pub fn cylinder_rotation(ns: usize, nt: usize, shift: usize) -> Vec<usize> {
    (0..=ns)
        .flat_map(|i| (0..nt).map(move |j| i * nt + (j + shift) % nt))
        .collect()
}

/// Vertex permutation of [`two_cylinders`] with equal sizes exchanging the
/// two annuli.
pub fn cylinder_swap(ns: usize, nt: usize) -> Vec<usize> {
    let half = (ns + 1) * nt;
    (0..2 * half).map(|v| (v + half) % (2 * half)).collect()
}
