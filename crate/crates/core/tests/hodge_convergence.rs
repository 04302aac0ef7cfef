//! Refinement study on a cylinder with the warped metric
//! `ds^2 + r(s)^2 dth^2`, `r = 1 + 0.3 sin(pi s)`.
//!
//! The Dirichlet harmonic field is `ds / (C r)` with `C = int 1/r`, and its
//! Hodge star is `dth / C`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use slag_core::dec::{Cochain, HodgeStructure, MetricField};
use slag_core::fixtures::{self, Handedness};
use slag_core::flux::gauss_legendre;
use slag_core::mesh::{CycleKind, SimplicialMesh};

fn r(s: f64) -> f64 {
    1.0 + 0.3 * (PI * s).sin()
}

fn integral_inv_r(a: f64, b: f64) -> f64 {
    let (x, w) = gauss_legendre(20);
    let panels = 16;
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|p| {
            x.iter()
                .zip(&w)
                .map(|(x, w)| w * h / r(a + h * (p as f64 + x)))
                .sum::<f64>()
        })
        .sum()
}

fn structure(level: usize) -> HodgeStructure {
    let mesh = Arc::new(fixtures::cylinder(4 * level, 8 * level, Handedness::Positive).unwrap());
    let metric = MetricField::from_tensor(&mesh, &[None, Some(1.0)], |p| {
        DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, r(p[0]).powi(2)]))
    })
    .unwrap();
    HodgeStructure::assemble(mesh, metric).unwrap()
}

fn edge_delta(mesh: &SimplicialMesh, e: usize, coord: usize) -> (f64, f64) {
    let s = mesh.simplex(1, e);
    let (p, q) = (mesh.coords(s[0]), mesh.coords(s[1]));
    let mut d = q[coord] - p[coord];
    if coord == 1 {
        d -= d.round();
    }
    (p[coord], d)
}

fn order(errors: &[f64], levels: &[usize]) -> f64 {
    let xs: Vec<f64> = levels.iter().map(|&l| -(l as f64).ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    num / den
}

#[test]
fn dirichlet_field_and_star_converge() {
    let c = integral_inv_r(0.0, 1.0);
    let levels = [1, 2, 4];
    let mut field_err = Vec::new();
    let mut star_err = Vec::new();
    for &level in &levels {
        let hodge = structure(level);
        let mesh = hodge.mesh().clone();
        let exact = Cochain::new(
            1,
            (0..mesh.num_simplices(1))
                .map(|e| {
                    let (s0, ds) = edge_delta(&mesh, e, 0);
                    integral_inv_r(s0, s0 + ds) / c
                })
                .collect(),
        );
        let field = &hodge.dirichlet_fields()[0];
        let period = hodge.periods(field, CycleKind::Relative).unwrap()[0];
        let field = field.scale(1.0 / period);
        let diff = field.axpy(-1.0, &exact);
        field_err.push(hodge.norm(&diff) / hodge.norm(&exact));

        let star_exact = Cochain::new(
            1,
            (0..mesh.num_simplices(1))
                .map(|e| edge_delta(&mesh, e, 1).1 / c)
                .collect(),
        );
        let star = hodge.star(&exact).unwrap();
        star_err.push(hodge.norm(&star.axpy(-1.0, &star_exact)) / hodge.norm(&star_exact));
    }
    let (p_field, p_star) = (order(&field_err, &levels), order(&star_err, &levels));
    eprintln!("field errors {field_err:?} order {p_field:.2}");
    eprintln!("star errors {star_err:?} order {p_star:.2}");
    assert!(p_field >= 1.0, "{field_err:?}");
    assert!(p_star >= 1.0, "{star_err:?}");
    assert!(field_err[2] < 1e-2 && star_err[2] < 2e-2);
}

#[test]
fn harmonic_routes_agree_on_the_warped_cylinder() {
    let mesh = Arc::new(fixtures::cylinder(4, 8, Handedness::Positive).unwrap());
    let metric = MetricField::from_tensor(&mesh, &[None, Some(1.0)], |p| {
        DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, r(p[0]).powi(2)]))
    })
    .unwrap();
    let a = HodgeStructure::assemble_with(mesh.clone(), metric.clone(), Default::default()).unwrap();
    let b = HodgeStructure::assemble_with(mesh, metric, slag_core::dec::HarmonicMethod::Eigen).unwrap();
    for (x, y) in a.dirichlet_fields().iter().zip(b.dirichlet_fields()) {
        assert!(x.axpy(-1.0, y).max_abs() < 1e-8);
    }
    for (x, y) in a.neumann_fields().iter().zip(b.neumann_fields()) {
        assert!(x.axpy(-1.0, y).max_abs() < 1e-8);
    }
}
