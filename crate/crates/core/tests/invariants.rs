//! Randomized checks of the structural identities each layer promises.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use slag_core::ambient::{make_model, AmbientModel, BoundaryLagrangian, FormKind, ModelSpec, OmegaSpec, TopologyKind};
use slag_core::dec::{self, Cochain, HodgeStructure};
use slag_core::fixtures::{self, Handedness};
use slag_core::flux::{self, FluxOptions, ImmersionPath, ParamCurve};
use slag_core::immersion::{self, pullback_metric, FamilySpec, ImmersionFamily};

fn torus(n: usize) -> AmbientModel {
    make_model(&ModelSpec::standard(n, TopologyKind::Torus)).unwrap()
}

/// Flat torus with a skew lattice and conformal factor 2.
fn skew_almost() -> AmbientModel {
    let mut spec = ModelSpec::standard(2, TopologyKind::Torus);
    spec.lattice = Some(vec![
        vec![1.0, 0.0, 0.0, 0.0],
        vec![0.3, 1.0, 0.0, 0.0],
        vec![0.0, 0.0, 1.0, 0.0],
        vec![0.0, 0.2, 0.1, 1.0],
    ]);
    spec.rho_expr = Some("2".into());
    spec.holomorphic = Some(OmegaSpec {
        scale: [2.0, 0.0],
        dz: None,
    });
    make_model(&spec).unwrap()
}

fn family(position: [&str; 4]) -> ImmersionFamily {
    let model = torus(2);
    let mesh = Arc::new(fixtures::cylinder(3, 6, Handedness::Negative).unwrap());
    let spec = FamilySpec {
        coords: vec!["s".into(), "th".into()],
        params: vec!["u".into()],
        position: position.iter().map(|p| p.to_string()).collect(),
    };
    ImmersionFamily::new(&model, mesh, spec).unwrap()
}

fn translation() -> ImmersionFamily {
    family(["0.5*s", "u + 0.1*u^2", "th + 0.2*s", "0.25"])
}

/// Not Lagrangian; only its metric is used.
fn bumpy() -> ImmersionFamily {
    family(["0.5*s", "u + 0.1*sin(2*pi*th)", "th", "0.25 + 0.05*s^2"])
}

fn lambdas() -> Vec<BoundaryLagrangian> {
    let dirs = vec![vec![0.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 0.0]];
    [(1, 0.0), (2, 0.5)]
        .into_iter()
        .map(|(index, x)| BoundaryLagrangian {
            index,
            basepoint: vec![x, 0.0, 0.0, 0.25],
            directions: dirs.clone(),
        })
        .collect()
}

fn vec4() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-3.0f64..3.0, 4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn metric_is_positive_and_omega_is_j_invariant(u in vec4(), v in vec4()) {
        for model in [torus(2), skew_almost()] {
            let j = model.j_matrix();
            let (ju, jv) = (j * DVector::from_column_slice(&u), j * DVector::from_column_slice(&v));
            let lhs = model.omega(ju.as_slice(), jv.as_slice());
            prop_assert!((lhs - model.omega(&u, &v)).abs() <= 1e-14 * (1.0 + lhs.abs()));
            let norm2: f64 = u.iter().map(|x| x * x).sum();
            if norm2 > 1e-6 {
                prop_assert!(model.metric(&u, &u) > 0.0);
            }
        }
    }

    #[test]
    fn conformal_metric_is_rescaled(p in vec4(), u in vec4(), v in vec4()) {
        let model = skew_almost();
        let g = model.metric(&u, &v);
        let gt = model.conformal_metric(&p, &u, &v);
        prop_assert!((gt - 0.5 * g).abs() <= 1e-14 * (1.0 + g.abs()));
    }

    #[test]
    fn torus_evaluations_are_lattice_periodic(
        p in vec4(),
        q in vec4(),
        u in vec4(),
        v in vec4(),
        k in proptest::collection::vec(-3i32..=3, 4),
    ) {
        let model = skew_almost();
        let basis = model.lattice().unwrap().clone();
        let shift = &basis * DVector::from_iterator(4, k.iter().map(|&c| c as f64));
        let p2: Vec<f64> = p.iter().zip(shift.iter()).map(|(a, b)| a + b).collect();
        for kind in [FormKind::Omega, FormKind::Metric, FormKind::ConformalMetric] {
            let a = model.eval_form(kind, &p, &[&u, &v]).unwrap();
            let b = model.eval_form(kind, &p2, &[&u, &v]).unwrap();
            prop_assert_eq!(a, b);
        }
        let d1 = model.displacement(&p, &q);
        let d2 = model.displacement(&p2, &q);
        prop_assert!((d1 - d2).amax() < 1e-12);
        let (r1, r2) = (model.reduce(&p), model.reduce(&p2));
        prop_assert!(model.displacement(&r1, &r2).amax() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn codifferential_is_the_mass_adjoint(
        a in proptest::collection::vec(-1.0f64..1.0, 21 * 6),
        b in proptest::collection::vec(-1.0f64..1.0, 64),
    ) {
        let model = torus(2);
        let fam = bumpy();
        let mesh = fam.mesh().clone();
        let imm = fam.immersion(&model, &[0.1]).unwrap();
        let hodge = HodgeStructure::assemble(mesh.clone(), pullback_metric(&model, &imm).unwrap()).unwrap();
        let alpha = Cochain::new(0, a[..mesh.num_vertices()].to_vec());
        let flags = mesh.boundary_flags(1);
        let beta = Cochain::new(
            1,
            (0..mesh.num_simplices(1)).map(|e| if flags[e] { 0.0 } else { b[e % b.len()] }).collect(),
        );
        let lhs = hodge.inner(&dec::d(&mesh, &alpha), &beta);
        let rhs = hodge.inner(&alpha, &hodge.codifferential(&beta).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()), "{lhs} vs {rhs}");
    }

    #[test]
    fn reparametrization_covariance(shift in 1usize..6, u in -0.3f64..0.3) {
        let model = torus(2);
        let psi = fixtures::cylinder_rotation(3, 6, shift);
        let fam = translation();
        let psi = fam.mesh().automorphism(&psi).unwrap();
        let lifted = fam.reparametrized(&psi);

        // Validation residuals are unchanged.
        let a = immersion::validate(&model, &fam.immersion(&model, &[u]).unwrap(), &lambdas()).unwrap();
        let b = immersion::validate(&model, &lifted.immersion(&model, &[u]).unwrap(), &lambdas()).unwrap();
        prop_assert_eq!(a.lagrangian_residual, b.lagrangian_residual);
        prop_assert_eq!(a.special_residual, b.special_residual);
        prop_assert_eq!(a.max_containment, b.max_containment);

        // Pullback metrics agree simplex by simplex under psi.
        let bumpy = bumpy();
        let g = pullback_metric(&model, &bumpy.immersion(&model, &[u]).unwrap()).unwrap();
        let gl = pullback_metric(&model, &bumpy.reparametrized(&psi).immersion(&model, &[u]).unwrap()).unwrap();
        let n = fam.mesh().dim();
        for t in 0..fam.mesh().num_simplices(n) {
            let (img, _) = psi.image(n, t);
            let (d1, d2) = (g.gram(img).determinant(), gl.gram(t).determinant());
            prop_assert!((d1 - d2).abs() <= 1e-13 * d1.abs(), "{d1} vs {d2}");
        }

        // Flux cochains are pulled back.
        let curve = ParamCurve::parse(&["0.2*t + 0.1*sin(pi*t)".to_string()], 0.0).unwrap();
        let opts = FluxOptions::default();
        let rel = fam.mesh().relative_cycle_basis().unwrap();
        let p0 = ImmersionPath::from_family(Arc::new(fam.clone()), curve.clone()).unwrap();
        let p1 = ImmersionPath::from_family(Arc::new(lifted), curve).unwrap();
        let f0 = flux::relative_flux(&model, &p0, &rel, &opts).unwrap();
        let f1 = flux::relative_flux(&model, &p1, &rel, &opts).unwrap();
        let pulled = psi.pull_back(1, &f0.raw.values);
        let err = pulled.iter().zip(&f1.raw.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        prop_assert!(err < 1e-14, "{err}");
        let pushed: Vec<f64> = rel.cycles.iter().map(|c| psi.push_forward(c).pair(&f0.raw.values)).collect();
        for (x, y) in pushed.iter().zip(&f1.periods) {
            prop_assert!((x - y).abs() < 1e-14);
        }
    }
}

#[test]
fn skew_model_is_normalized() {
    let m = skew_almost();
    assert!(m.is_almost());
    assert!(m.normalization_residual() < 1e-12);
    let g: &DMatrix<f64> = m.metric_matrix();
    assert!(g.clone().cholesky().is_some());
}
