//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if a criterion outside `KNOWN_UNATTAINABLE` fails.

use std::time::{Duration, Instant};

use slag_cli::catalog;
use slag_cli::checks::{anchor, Check, Tolerances};
use slag_cli::converge::{convergence_study, ConvergenceReport};
use slag_cli::runner::{run_scenario, ScenarioReport};
use slag_cli::scenario::{Scenario, Setup, Suites};
use slag_core::ambient::OmegaSpec;

const FIXTURES: [&str; 3] = ["interval_c1", "cylinder_translation", "two_handle"];
const LEVELS: [usize; 3] = [1, 2, 4];

const TANGENT_LAWS: f64 = 1e-12;
const C1_SAMPLES: usize = 33;
const C1_SECONDS: f64 = 5.0;
const HODGE_ABS_L4: f64 = 2e-2;
const MIN_ORDER: f64 = 1.0;
const C2_SECONDS: f64 = 60.0;
const ORACLE: f64 = 1e-8;
const RANDOM_PATHS: usize = 20;
const HOMOTOPY: f64 = 1e-8;
const C5_RF: f64 = 0.15;
const C5_SF: f64 = 0.3;
const C5_TOL: f64 = 1e-10;
const JACOBIAN_R: f64 = 1e-6;
const JACOBIAN_S: f64 = 5e-2;
const AFFINE: f64 = 1e-6;
const VOLUME: f64 = 1e-6;
const IDENTITY: f64 = 1e-12;
const W_PULLBACK: f64 = 1e-6;
const B_VS_L2: f64 = 5e-2;
const SYMMETRY: f64 = 1e-6;
const RHO: f64 = 2.0;

/// Criteria whose failure is analysed in the decisions ledger.
const KNOWN_UNATTAINABLE: [&str; 1] = ["C10"];

struct Outcome {
    pass: bool,
    lines: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Self {
            pass: true,
            lines: Vec::new(),
        }
    }

    fn require(&mut self, ok: bool, what: impl Into<String>) {
        let what = what.into();
        if !ok {
            self.pass = false;
            self.lines.push(format!("  failed: {what}"));
        }
    }

    /// All checks with one of `anchors` must pass, and at least one must exist.
    fn checks<'a>(&mut self, label: &str, checks: impl IntoIterator<Item = &'a Check>, anchors: &[&str]) {
        let mut n = 0;
        for c in checks.into_iter().filter(|c| anchors.contains(&c.anchor.as_str())) {
            n += 1;
            self.require(
                c.pass,
                format!("{label} {}/{}: {:e} vs {:e} {}", c.scenario, c.id, c.value, c.tolerance, c.detail),
            );
        }
        self.require(n > 0, format!("{label}: no {anchors:?} checks ran"));
    }
}

fn tolerances() -> Tolerances {
    Tolerances {
        tangent_laws: TANGENT_LAWS,
        hodge_duality: HODGE_ABS_L4,
        oracle: ORACLE,
        homotopy: HOMOTOPY,
        regression: C5_TOL,
        jacobian_r: JACOBIAN_R,
        jacobian_s: JACOBIAN_S,
        affine_residual: AFFINE,
        volume: VOLUME,
        translation: IDENTITY,
        w_pullback: W_PULLBACK,
        b_vs_l2: B_VS_L2,
        symmetry: SYMMETRY,
        min_order: MIN_ORDER,
        ..Tolerances::default()
    }
}

fn only(f: impl FnOnce(&mut Suites)) -> Suites {
    let mut s = Suites {
        topology: false,
        validation: false,
        tangent_laws: false,
        hodge: false,
        flux: false,
        homotopy: false,
        regression: false,
        charts: false,
    };
    f(&mut s);
    s
}

#[derive(Clone, Copy, PartialEq)]
enum Variant {
    CalabiYau,
    /// Conformal factor `rho = 2`, with `Omega` rescaled to keep the
    /// normalization.
    AlmostCalabiYau,
}

fn scenario(name: &str, v: Variant) -> Scenario {
    let mut s = catalog::load(name).unwrap();
    if v == Variant::AlmostCalabiYau {
        s.model.rho_expr = Some(format!("{RHO}"));
        s.model.holomorphic = Some(OmegaSpec {
            scale: [RHO, 0.0],
            dz: None,
        });
    }
    s
}

struct Runs {
    full: Vec<ScenarioReport>,
    hodge_study: ConvergenceReport,
    hodge_seconds: f64,
    charts_study: ConvergenceReport,
    cylinder_charts_l4: ScenarioReport,
    tangent: ScenarioReport,
    tangent_seconds: f64,
}

fn collect(v: Variant) -> Runs {
    let tol = tolerances();
    let full = FIXTURES
        .iter()
        .map(|n| run_scenario(&scenario(n, v), &tol).unwrap().0)
        .collect();

    let mut s = scenario("cylinder_translation", v);
    s.suites = only(|s| s.tangent_laws = true);
    s.time_samples = C1_SAMPLES;
    let start = Instant::now();
    let tangent = run_scenario(&s, &tol).unwrap().0;
    let tangent_seconds = start.elapsed().as_secs_f64();

    let mut s = scenario("cylinder_translation", v);
    s.suites = only(|s| s.hodge = true);
    s.charts = None;
    s.expected = None;
    let start = Instant::now();
    let hodge_study = convergence_study(&s, &LEVELS, &tol).unwrap().0;
    let hodge_seconds = start.elapsed().as_secs_f64();

    let mut s = scenario("cylinder_translation", v);
    s.suites = only(|s| s.charts = true);
    let cylinder_charts_l4 = run_scenario(&s.at_level(4), &tol).unwrap().0;

    let mut s = scenario("two_handle", v);
    s.suites = only(|s| {
        s.charts = true;
        s.hodge = true;
    });
    s.expected = None;
    let charts_study = convergence_study(&s, &LEVELS, &tol).unwrap().0;

    Runs {
        full,
        hodge_study,
        hodge_seconds,
        charts_study,
        cylinder_charts_l4,
        tangent,
        tangent_seconds,
    }
}

fn all_checks(reports: &[ScenarioReport]) -> impl Iterator<Item = &Check> {
    reports.iter().flat_map(|r| &r.checks)
}

fn level_checks<'a>(study: &'a ConvergenceReport, level: usize) -> impl Iterator<Item = &'a Check> {
    let prefix = format!("L{level}/");
    study.checks.iter().filter(move |c| c.id.starts_with(&prefix))
}

fn c1(r: &Runs) -> Outcome {
    let mut o = Outcome::new();
    o.checks("tangent laws", &r.tangent.checks, &[anchor::THETA_CLOSED, anchor::THETA_BOUNDARY, anchor::PHI_CLOSED]);
    o.require(r.tangent_seconds < C1_SECONDS, format!("runtime {:.2}s", r.tangent_seconds));
    o.lines.push(format!("  runtime {:.2}s", r.tangent_seconds));
    o
}

fn c2(r: &Runs) -> Outcome {
    let mut o = Outcome::new();
    let order = r.hodge_study.checks.iter().filter(|c| c.id == "hodge-relative-order");
    o.checks("order", order, &[anchor::CONVERGENCE]);
    o.checks("level 4", level_checks(&r.hodge_study, 4), &[anchor::HODGE_DUALITY]);
    o.require(r.hodge_seconds < C2_SECONDS, format!("runtime {:.2}s", r.hodge_seconds));
    if let Some(s) = r.hodge_study.series("hodge-relative") {
        o.lines.push(format!("  relative errors {:?}, order {:?}", s.points, s.order));
    }
    o.lines.push(format!("  runtime {:.2}s", r.hodge_seconds));
    o
}

fn c3(r: &Runs) -> Outcome {
    let mut o = Outcome::new();
    o.checks("oracle", all_checks(&r.full), &[anchor::RF_ORACLE, anchor::SF_ORACLE]);
    for rep in &r.full {
        let random = rep.flux.iter().filter(|f| f.path.starts_with("random")).map(|f| &f.path);
        let distinct: std::collections::BTreeSet<_> = random.collect();
        o.require(distinct.len() == RANDOM_PATHS, format!("{}: {} random paths", rep.scenario, distinct.len()));
    }
    o
}

fn c4(r: &Runs) -> Outcome {
    let mut o = Outcome::new();
    o.checks("homotopy", all_checks(&r.full), &[anchor::HOMOTOPY]);
    o
}

/// Straight-path periods on `cylinder_translation`.
fn c5_periods(r: &Runs) -> (Vec<f64>, Vec<f64>) {
    let rep = r.full.iter().find(|r| r.scenario == "cylinder_translation").unwrap();
    let pick = |kind: &str| {
        rep.flux
            .iter()
            .filter(|f| f.path == "straight" && f.kind == kind)
            .map(|f| f.period)
            .collect::<Vec<_>>()
    };
    (pick("rf"), pick("sf"))
}

fn c5(r: &Runs) -> Outcome {
    let mut o = Outcome::new();
    let (rf, sf) = c5_periods(r);
    o.require(rf.len() == 1 && sf.len() == 1, "one relative and one absolute cycle");
    for p in &rf {
        o.require((p.abs() - C5_RF).abs() <= C5_TOL, format!("|RF| = {p}"));
    }
    for p in &sf {
        o.require((p.abs() - C5_SF).abs() <= C5_TOL, format!("|SF| = {p}"));
    }
    o.lines.push(format!("  RF {rf:?}, SF {sf:?}"));
    o
}

fn c6(r: &Runs) -> Outcome {
    let mut o = Outcome::new();
    let anchors = [anchor::JACOBIAN_R, anchor::JACOBIAN_S];
    o.checks("two_handle level 4", level_checks(&r.charts_study, 4), &anchors);
    o.require(r.cylinder_charts_l4.level == 4, "cylinder at level 4");
    o.checks("cylinder level 4", &r.cylinder_charts_l4.checks, &anchors);
    o
}

fn c7(r: &Runs) -> Outcome {
    let mut o = Outcome::new();
    o.checks("transitions", all_checks(&r.full), &[anchor::AFFINE, anchor::VOLUME, anchor::TRANSLATION]);
    o
}

fn c8(r: &Runs) -> Outcome {
    let mut o = Outcome::new();
    let two = r.full.iter().find(|r| r.scenario == "two_handle").unwrap();
    o.checks("grid", &two.checks, &[anchor::W_PULLBACK, anchor::HESSIAN, anchor::NEGATIVE_CONTROL]);
    o.checks("level 4", level_checks(&r.charts_study, 4), &[anchor::B_PULLBACK, anchor::W_PULLBACK]);
    let order = r.charts_study.checks.iter().filter(|c| c.id == "b-vs-l2-order");
    o.checks("order", order, &[anchor::CONVERGENCE]);
    if let Some(s) = r.charts_study.series("b-vs-l2") {
        o.lines.push(format!("  B vs L2 {:?}, order {:?}", s.points, s.order));
    }
    o
}

fn c9() -> Outcome {
    let mut o = Outcome::new();
    for (name, want) in [("cylinder_translation", 1), ("two_handle", 2)] {
        let setup = Setup::build(&scenario(name, Variant::CalabiYau)).unwrap();
        let b = setup.mesh.betti();
        o.require(
            b.relative_first() == want && b.absolute_codim_one() == want,
            format!("{name}: b_rel_1 = {}, b_(n-1) = {}", b.relative_first(), b.absolute_codim_one()),
        );
    }
    o
}

fn criteria_1_to_8(r: &Runs) -> Vec<(&'static str, Outcome)> {
    vec![
        ("C1 tangent-form laws", c1(r)),
        ("C2 Hodge duality under refinement", c2(r)),
        ("C3 flux against swept oracle", c3(r)),
        ("C4 homotopy invariance", c4(r)),
        ("C5 closed-form regression", c5(r)),
        ("C6 chart derivative identity", c6(r)),
        ("C7 affine transitions", c7(r)),
        ("C8 embedding and Hessian metric", c8(r)),
    ]
}

fn c10(cy: &Runs, acy: &Runs, topology: Outcome) -> Outcome {
    let mut o = Outcome::new();
    o.checks("topology", all_checks(&acy.full), &[anchor::TOPOLOGY, anchor::HARMONIC_COUNT]);
    o.pass &= topology.pass;
    for (label, sub) in criteria_1_to_8(acy) {
        o.require(sub.pass, format!("{label} with rho = {RHO}"));
        o.lines.extend(sub.lines.into_iter().map(|l| format!("  {l}")));
    }
    let (rf0, sf0) = c5_periods(cy);
    let (rf1, sf1) = c5_periods(acy);
    let same = |a: &[f64], b: &[f64]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= C5_TOL);
    o.require(same(&rf0, &rf1), format!("RF changed: {rf0:?} -> {rf1:?}"));
    o.require(same(&sf0, &sf1), format!("SF changed: {sf0:?} -> {sf1:?}"));
    o
}

fn main() {
    let start = Instant::now();
    let cy = collect(Variant::CalabiYau);
    let mut results = criteria_1_to_8(&cy);
    let mut topo = c9();
    topo.checks("topology", all_checks(&cy.full), &[anchor::TOPOLOGY, anchor::HARMONIC_COUNT]);
    let acy = collect(Variant::AlmostCalabiYau);
    let mut topo_acy = Outcome::new();
    topo_acy.pass = topo.pass;
    results.push(("C9 topology", topo));
    results.push(("C10 almost Calabi-Yau", c10(&cy, &acy, topo_acy)));

    let mut unexpected = Vec::new();
    for (label, o) in &results {
        println!("{} {label}", if o.pass { "PASS" } else { "FAIL" });
        for l in &o.lines {
            println!("{l}");
        }
        let id = label.split_whitespace().next().unwrap();
        if !o.pass && !KNOWN_UNATTAINABLE.contains(&id) {
            unexpected.push(id);
        }
    }
    let elapsed = Duration::from_secs_f64(start.elapsed().as_secs_f64());
    println!("acceptance finished in {elapsed:.1?}");
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
