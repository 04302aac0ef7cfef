//! Runs every check a scenario asks for and collects the results.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use slag_core::charts::{
    self, AtlasReport, Chart, ChartError, ChartOptions, ChartRecord, ChartSample, TransitionRecord,
};
use slag_core::dec::{self, Cochain, HodgeStructure};
use slag_core::flux::{self, FluxOptions, ImmersionPath, ParamCurve, PathSample};
use slag_core::immersion::{self, pullback_metric, Immersion, ValidationTolerances};
use slag_core::mesh::CycleBasis;

use crate::checks::{anchor, Check, Tolerances};
use crate::scenario::{ConfigError, LiftSpec, Scenario, Setup};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxRow {
    pub scenario: String,
    pub path: String,
    pub kind: String,
    pub cycle: usize,
    pub period: f64,
    pub oracle: f64,
    pub delta: f64,
}

/// Discretization-dependent errors tracked under refinement.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// `max |star theta_t - phi_t|_M / |phi_t|_M` over path samples.
    pub hodge_relative: Option<f64>,
    pub hodge_absolute: Option<f64>,
    pub jacobian_s: Option<f64>,
    pub b_vs_l2: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeshStats {
    pub dim: usize,
    pub vertices: usize,
    pub edges: usize,
    pub top_simplices: usize,
    pub boundary_edges: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub level: usize,
    pub mesh: MeshStats,
    pub checks: Vec<Check>,
    pub flux: Vec<FluxRow>,
    pub metrics: Metrics,
    pub atlas: Option<AtlasReport>,
}

impl ScenarioReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub scenario: String,
    pub phase: String,
    pub seconds: f64,
}

struct Ctx<'a> {
    s: &'a Scenario,
    setup: Setup,
    tol: Tolerances,
    intervals: usize,
    relative: CycleBasis,
    absolute: CycleBasis,
    report: ScenarioReport,
    timing: Vec<TimingRow>,
}

impl Ctx<'_> {
    fn id(&self) -> &str {
        &self.s.id
    }

    fn push(&mut self, c: Check) {
        self.report.checks.push(c);
    }

    fn at_most(&mut self, id: impl Into<String>, anchor: &str, value: f64, tol: f64) {
        let c = Check::at_most(&self.s.id, id, anchor, value, tol);
        self.push(c);
    }

    fn fail(&mut self, id: impl Into<String>, anchor: &str, err: impl std::fmt::Display) {
        let c = Check::error(&self.s.id, id, anchor, err.to_string());
        self.push(c);
    }

    fn timed<T>(&mut self, phase: &str, f: impl FnOnce(&mut Self) -> T) -> T {
        let start = Instant::now();
        let out = f(self);
        self.timing.push(TimingRow {
            scenario: self.s.id.clone(),
            phase: phase.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }

    fn flux_options(&self) -> FluxOptions {
        FluxOptions {
            lagrangian_tol: self.tol.lagrangian,
            special_tol: self.tol.special,
        }
    }

    fn path(&self, curve: &ParamCurve) -> Result<ImmersionPath, flux::FluxError> {
        Ok(ImmersionPath::from_family(self.setup.family.clone(), curve.clone())?.with_intervals(self.intervals))
    }

    fn hodge_at(&self, positions: Vec<Vec<f64>>) -> Result<HodgeStructure, String> {
        let imm = Immersion::new(&self.setup.model, self.setup.mesh.clone(), positions).map_err(|e| e.to_string())?;
        let metric = pullback_metric(&self.setup.model, &imm).map_err(|e| e.to_string())?;
        HodgeStructure::assemble(self.setup.mesh.clone(), metric).map_err(|e| e.to_string())
    }
}

/// Run one scenario. Configuration problems are returned as errors; failed
/// computations become failing checks.
pub fn run_scenario(s: &Scenario, tol: &Tolerances) -> Result<(ScenarioReport, Vec<TimingRow>), ConfigError> {
    let tol = tol.apply(&s.tolerances);
    let intervals = s.intervals()?;
    let start = Instant::now();
    let setup = Setup::build(s)?;
    let relative = setup.mesh.relative_cycle_basis().map_err(|e| s.invalid(e.to_string()))?;
    let absolute = setup.mesh.absolute_cycle_basis().map_err(|e| s.invalid(e.to_string()))?;
    for lift in s.charts.iter().flat_map(|c| &c.lifts) {
        setup.automorphism(s, &lift.lift)?;
        if lift.base.len() != setup.family.num_params() {
            return Err(s.invalid(format!("lift '{}' has the wrong number of parameters", lift.id)));
        }
    }
    let m = &setup.mesh;
    let stats = MeshStats {
        dim: m.dim(),
        vertices: m.num_vertices(),
        edges: m.num_simplices(1),
        top_simplices: m.num_simplices(m.dim()),
        boundary_edges: m.boundary_flags(1).iter().filter(|b| **b).count(),
    };
    let mut ctx = Ctx {
        s,
        setup,
        tol,
        intervals,
        relative,
        absolute,
        report: ScenarioReport {
            scenario: s.id.clone(),
            level: s.level,
            mesh: stats,
            checks: Vec::new(),
            flux: Vec::new(),
            metrics: Metrics::default(),
            atlas: None,
        },
        timing: vec![TimingRow {
            scenario: s.id.clone(),
            phase: "setup".into(),
            seconds: start.elapsed().as_secs_f64(),
        }],
    };
    let on = s.suites;
    if on.topology {
        ctx.timed("topology", topology);
    }
    if on.validation {
        ctx.timed("validation", validation);
    }
    ctx.timed("paths", paths);
    if on.flux {
        ctx.timed("random_paths", random_paths);
    }
    if on.homotopy {
        ctx.timed("homotopy", homotopies);
    }
    if on.charts {
        ctx.timed("charts", charts_phase);
    }
    Ok((ctx.report, ctx.timing))
}

fn topology(ctx: &mut Ctx) {
    let b = ctx.setup.mesh.betti();
    let (rel, abs) = (b.relative_first(), b.absolute_codim_one());
    let detail = format!("b_rel_1 = {rel}, b_(n-1) = {abs}");
    let c = Check::at_most(ctx.id(), "betti-duality", anchor::TOPOLOGY, rel.abs_diff(abs) as f64, 0.0).with_detail(detail);
    ctx.push(c);
    match ctx.hodge_at(ctx.setup.family.raw_positions(&ctx.s.base)) {
        Ok(h) => {
            let (nd, nn) = (h.dirichlet_fields().len(), h.neumann_fields().len());
            let off = nd.abs_diff(rel) + nn.abs_diff(abs);
            let c = Check::at_most(ctx.id(), "harmonic-counts", anchor::HARMONIC_COUNT, off as f64, 0.0)
                .with_detail(format!("dirichlet {nd}, neumann {nn}"));
            ctx.push(c);
        }
        Err(e) => ctx.fail("harmonic-counts", anchor::HARMONIC_COUNT, e),
    }
}

fn validation(ctx: &mut Ctx) {
    let model = &ctx.setup.model.clone();
    let imm = match ctx.setup.family.immersion(model, &ctx.s.base) {
        Ok(i) => i,
        Err(e) => return ctx.fail("base-valid", anchor::VALID, e),
    };
    match immersion::validate(model, &imm, &ctx.s.lagrangians) {
        Ok(r) => {
            let t = ctx.tol;
            ctx.at_most("base-lagrangian", anchor::VALID, r.lagrangian_residual, t.lagrangian);
            ctx.at_most("base-special", anchor::VALID, r.special_residual, t.special);
            if !ctx.s.lagrangians.is_empty() {
                ctx.at_most("base-containment", anchor::VALID, r.max_containment, t.containment);
                let c = Check::at_least(ctx.id(), "base-transversality", anchor::VALID, r.min_transversality, t.transversality);
                ctx.push(c);
            }
            let vt = ValidationTolerances::default();
            let c = Check::at_least(ctx.id(), "base-rank", anchor::VALID, r.min_rank_margin, vt.rank);
            ctx.push(c);
        }
        Err(e) => ctx.fail("base-valid", anchor::VALID, e),
    }
}

fn tangent_laws(ctx: &mut Ctx, id: &str, samples: &[PathSample]) {
    let model = &ctx.setup.model.clone();
    let mesh = ctx.setup.mesh.clone();
    let (mut dtheta, mut btheta, mut dphi): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for s in samples {
        let theta = flux::tangent_one_form(model, &mesh, s);
        let phi = flux::dual_form(model, &mesh, s);
        dtheta = dtheta.max(dec::d(&mesh, &theta).max_abs());
        btheta = btheta.max(theta.boundary_max(&mesh));
        dphi = dphi.max(dec::d(&mesh, &phi).max_abs());
    }
    let t = ctx.tol.tangent_laws;
    ctx.at_most(format!("{id}/theta-closed"), anchor::THETA_CLOSED, dtheta, t);
    ctx.at_most(format!("{id}/theta-boundary"), anchor::THETA_BOUNDARY, btheta, t);
    ctx.at_most(format!("{id}/phi-closed"), anchor::PHI_CLOSED, dphi, t);
}

/// Tangent laws and Hodge duality on one sampled path.
fn sample_laws(ctx: &mut Ctx, id: &str, samples: &[PathSample]) {
    let model = &ctx.setup.model.clone();
    let mesh = ctx.setup.mesh.clone();
    let n = mesh.dim();
    let on = ctx.s.suites;
    if on.tangent_laws {
        tangent_laws(ctx, id, samples);
    }
    if !on.hodge {
        return;
    }
    let picks = [0, samples.len() / 2, samples.len() - 1];
    let (mut abs_err, mut rel_err): (f64, f64) = (0.0, 0.0);
    for &j in &picks {
        let s = &samples[j];
        let positions = s.positions.iter().map(|p| p.iter().copied().collect()).collect();
        let hodge = match ctx.hodge_at(positions) {
            Ok(h) => h,
            Err(e) => return ctx.fail(format!("{id}/star-theta"), anchor::HODGE_DUALITY, e),
        };
        let theta = flux::tangent_one_form(model, &mesh, s);
        let phi = flux::dual_form(model, &mesh, s);
        let star = match hodge.star(&theta) {
            Ok(c) => c,
            Err(e) => return ctx.fail(format!("{id}/star-theta"), anchor::HODGE_DUALITY, e),
        };
        debug_assert_eq!(star.degree, n - 1);
        let diff: Cochain = star.axpy(-1.0, &phi);
        let a = hodge.norm(&diff);
        let scale = hodge.norm(&phi).max(hodge.norm(&star));
        abs_err = abs_err.max(a);
        rel_err = rel_err.max(if scale > 0.0 { a / scale } else { a });
    }
    let c = Check::at_most(ctx.id(), format!("{id}/star-theta"), anchor::HODGE_DUALITY, abs_err, ctx.tol.hodge_duality)
        .with_detail(format!("relative {rel_err:.3e}"));
    ctx.push(c);
    let m = &mut ctx.report.metrics;
    m.hodge_absolute = Some(m.hodge_absolute.unwrap_or(0.0).max(abs_err));
    m.hodge_relative = Some(m.hodge_relative.unwrap_or(0.0).max(rel_err));
}

/// Flux periods on both bases against the swept-surface oracle.
fn flux_vs_oracle(ctx: &mut Ctx, id: &str, path: &ImmersionPath, oracle: bool) -> Option<(Vec<f64>, Vec<f64>)> {
    let model = &ctx.setup.model.clone();
    let opts = ctx.flux_options();
    let rf = match flux::relative_flux(model, path, &ctx.relative, &opts) {
        Ok(f) => f,
        Err(e) => {
            ctx.fail(format!("{id}/rf"), anchor::RF_ORACLE, e);
            return None;
        }
    };
    let sf = match flux::special_flux(model, path, &ctx.absolute, &opts) {
        Ok(f) => f,
        Err(e) => {
            ctx.fail(format!("{id}/sf"), anchor::SF_ORACLE, e);
            return None;
        }
    };
    if !oracle {
        return Some((rf.periods, sf.periods));
    }
    let mut worst = [0.0f64, 0.0];
    for (kind, periods, basis) in [("rf", &rf.periods, ctx.relative.clone()), ("sf", &sf.periods, ctx.absolute.clone())] {
        for (j, (p, c)) in periods.iter().zip(&basis.cycles).enumerate() {
            let oracle = if kind == "rf" {
                flux::swept_rf_oracle(model, path, c)
            } else {
                flux::swept_sf_oracle(model, path, c)
            };
            let oracle = match oracle {
                Ok(o) => o,
                Err(e) => {
                    ctx.fail(format!("{id}/{kind}{j}"), anchor::RF_ORACLE, e);
                    continue;
                }
            };
            let delta = (p - oracle).abs();
            let slot = usize::from(kind == "sf");
            worst[slot] = worst[slot].max(delta);
            ctx.report.flux.push(FluxRow {
                scenario: ctx.s.id.clone(),
                path: id.to_string(),
                kind: kind.to_string(),
                cycle: j,
                period: *p,
                oracle,
                delta,
            });
        }
    }
    let t = ctx.tol.oracle;
    ctx.at_most(format!("{id}/rf-oracle"), anchor::RF_ORACLE, worst[0], t);
    ctx.at_most(format!("{id}/sf-oracle"), anchor::SF_ORACLE, worst[1], t);
    Some((rf.periods, sf.periods))
}

fn paths(ctx: &mut Ctx) {
    let named = ctx.setup.paths.clone();
    for (id, curve) in &named {
        let path = match ctx.path(curve) {
            Ok(p) => p,
            Err(e) => {
                ctx.fail(format!("{id}/path"), anchor::RF_ORACLE, e);
                continue;
            }
        };
        let on = ctx.s.suites;
        if on.tangent_laws || on.hodge {
            match path.sample(&ctx.setup.model) {
                Ok(samples) => sample_laws(ctx, id, &samples[0]),
                Err(e) => ctx.fail(format!("{id}/samples"), anchor::THETA_CLOSED, e),
            }
        }
        let expected = ctx.s.expected.clone().filter(|e| &e.path == id && on.regression);
        if !on.flux && expected.is_none() {
            continue;
        }
        let Some((rf, sf)) = flux_vs_oracle(ctx, id, &path, on.flux) else {
            continue;
        };
        if let Some(exp) = expected {
            if let Some(want) = &exp.rf {
                let err = if want.len() == rf.len() {
                    rf.iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
                } else {
                    f64::INFINITY
                };
                let c = Check::at_most(ctx.id(), format!("{id}/rf-closed-form"), anchor::REGRESSION, err, ctx.tol.regression)
                    .with_detail(format!("computed {rf:?}, expected {want:?}"));
                ctx.push(c);
            }
            if let Some(want) = &exp.sf_abs {
                let err = if want.len() == sf.len() {
                    sf.iter().zip(want).map(|(a, b)| (a.abs() - b).abs()).fold(0.0, f64::max)
                } else {
                    f64::INFINITY
                };
                let c = Check::at_most(ctx.id(), format!("{id}/sf-closed-form"), anchor::REGRESSION, err, ctx.tol.regression)
                    .with_detail(format!("computed {sf:?}, expected magnitudes {want:?}"));
                ctx.push(c);
            }
        }
    }
}

/// Curve expressions `base + d t + sum_k a_k sin(k pi t)`.
pub fn random_curves(base: &[f64], spec: &crate::scenario::RandomPaths) -> Vec<Vec<String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let r = spec.radius;
    (0..spec.count)
        .map(|_| {
            base.iter()
                .map(|b| {
                    let d: f64 = rng.random_range(-r..=r);
                    let mut e = format!("({b:.17}) + ({d:.17})*t");
                    for k in 1..=spec.modes {
                        let a: f64 = rng.random_range(-r..=r) / k as f64;
                        e.push_str(&format!(" + ({a:.17})*sin({k}*pi*t)"));
                    }
                    e
                })
                .collect()
        })
        .collect()
}

fn random_paths(ctx: &mut Ctx) {
    let Some(spec) = ctx.s.random_paths.clone() else {
        return;
    };
    let curves = random_curves(&ctx.s.base, &spec);
    let mut worst = [0.0f64; 2];
    let before = ctx.report.checks.len();
    for (i, exprs) in curves.iter().enumerate() {
        let id = format!("random{i:02}");
        let path = match ParamCurve::parse(exprs, 0.0).map_err(flux::FluxError::from).and_then(|c| ctx.path(&c)) {
            Ok(p) => p,
            Err(e) => {
                ctx.fail(id, anchor::RF_ORACLE, e);
                continue;
            }
        };
        flux_vs_oracle(ctx, &id, &path, true);
    }
    // Fold the per-path oracle rows into one check per kind.
    let added: Vec<Check> = ctx.report.checks.drain(before..).collect();
    let mut failures = Vec::new();
    for c in added {
        if c.value.is_nan() {
            failures.push(c);
        } else if c.id.ends_with("rf-oracle") {
            worst[0] = worst[0].max(c.value);
        } else {
            worst[1] = worst[1].max(c.value);
        }
    }
    ctx.report.checks.extend(failures);
    let t = ctx.tol.oracle;
    let n = curves.len();
    let c = Check::at_most(ctx.id(), "random/rf-oracle", anchor::RF_ORACLE, worst[0], t).with_detail(format!("{n} paths"));
    ctx.push(c);
    let c = Check::at_most(ctx.id(), "random/sf-oracle", anchor::SF_ORACLE, worst[1], t).with_detail(format!("{n} paths"));
    ctx.push(c);
}

fn homotopies(ctx: &mut Ctx) {
    for h in ctx.s.homotopies.clone() {
        let id = h.id.clone();
        let run = || -> Result<flux::HomotopyReport, String> {
            let curve = ParamCurve::parse(&h.exprs, 0.0).map_err(|e| e.to_string())?;
            let a = ctx.path(&curve.with_u(0.0)).map_err(|e| e.to_string())?;
            let b = ctx.path(&curve.with_u(1.0)).map_err(|e| e.to_string())?;
            flux::homotopy_invariance(
                &ctx.setup.model,
                &a,
                &b,
                Some((&ctx.setup.family, &curve)),
                &ctx.relative,
                &ctx.absolute,
                &ctx.flux_options(),
                h.sweep,
            )
            .map_err(|e| e.to_string())
        };
        match run() {
            Ok(r) => {
                let t = ctx.tol.homotopy;
                ctx.at_most(format!("{id}/rf-difference"), anchor::HOMOTOPY, r.max_rf_difference, t);
                ctx.at_most(format!("{id}/sf-difference"), anchor::HOMOTOPY, r.max_sf_difference, t);
                ctx.at_most(format!("{id}/sweep-variation"), anchor::HOMOTOPY, r.max_sweep_variation, t);
            }
            Err(e) => ctx.fail(format!("{id}/homotopy"), anchor::HOMOTOPY, e),
        }
    }
}

fn grid_points(center: &[f64], radius: f64, k: usize) -> Vec<Vec<f64>> {
    let k = k.max(2);
    let m = center.len();
    let total = k.pow(m as u32);
    (0..total)
        .map(|mut idx| {
            (0..m)
                .map(|i| {
                    let j = idx % k;
                    idx /= k;
                    center[i] - radius + 2.0 * radius * j as f64 / (k - 1) as f64
                })
                .collect()
        })
        .collect()
}

fn charts_phase(ctx: &mut Ctx) {
    let Some(spec) = ctx.s.charts.clone() else {
        return;
    };
    let model = ctx.setup.model.clone();
    let opts = ChartOptions {
        flux: ctx.flux_options(),
        intervals: spec.time_samples.map_or(ctx.intervals, |n| n.max(3) - 1),
        step: None,
        singular_tol: 1e-8,
        symmetry_tol: ctx.tol.symmetry,
    };
    let diameter = 2.0 * spec.grid.radius * (ctx.s.base.len() as f64).sqrt();
    let mut charts = Vec::new();
    for lift in &spec.lifts {
        let family = match ctx.setup.automorphism(ctx.s, &lift.lift) {
            Ok(Some(psi)) => Arc::new(ctx.setup.family.reparametrized(&psi)),
            Ok(None) => ctx.setup.family.clone(),
            Err(e) => return ctx.fail(format!("{}/lift", lift.id), anchor::AFFINE, e),
        };
        match Chart::new(family, &lift.base, lift.id.clone(), opts) {
            Ok(c) => charts.push((lift.clone(), c.with_diameter(diameter))),
            Err(e) => return ctx.fail(format!("{}/chart", lift.id), anchor::AFFINE, e),
        }
    }
    let Some((ref_lift, reference)) = charts.first().cloned() else {
        return;
    };
    let center = ref_lift.base.clone();
    let points = grid_points(&center, spec.grid.radius, spec.grid.points);
    let mut atlas = AtlasReport::default();

    // Chart derivative identity.
    let mut jac_dr = None;
    match reference.jacobian(&model) {
        Ok(j) => {
            let t = ctx.tol;
            ctx.at_most(format!("{}/dR-vs-theta", ref_lift.id), anchor::JACOBIAN_R, j.dr_error, t.jacobian_r);
            ctx.at_most(format!("{}/dS-vs-star-theta", ref_lift.id), anchor::JACOBIAN_S, j.ds_error, t.jacobian_s);
            ctx.report.metrics.jacobian_s = Some(j.ds_error);
            jac_dr = Some(j.dr);
        }
        Err(e) => ctx.fail(format!("{}/jacobian", ref_lift.id), anchor::JACOBIAN_R, e),
    }

    // Samples for every lift on the common grid.
    let mut samples: Vec<Vec<ChartSample>> = Vec::new();
    for (lift, chart) in &charts {
        match chart.evaluate_grid(&model, &points) {
            Ok(s) => samples.push(s),
            Err(e) => return ctx.fail(format!("{}/grid", lift.id), anchor::AFFINE, e),
        }
    }

    // Transitions from the reference chart.
    for (k, (lift, _)) in charts.iter().enumerate().skip(1) {
        let pair = format!("{}->{}", ref_lift.id, lift.id);
        let fit = match charts::transition_affine_fit(&samples[0], &samples[k]) {
            Ok(f) => f,
            Err(e) => {
                ctx.fail(format!("{pair}/fit"), anchor::AFFINE, e);
                continue;
            }
        };
        let t = ctx.tol;
        ctx.at_most(format!("{pair}/residual-R"), anchor::AFFINE, fit.r.residual, t.affine_residual);
        ctx.at_most(format!("{pair}/residual-S"), anchor::AFFINE, fit.s.residual, t.affine_residual);
        for (name, f, coords) in [("R", &fit.r, 0usize), ("S", &fit.s, 1)] {
            let mut det = f.det;
            let mut detail = format!("det {det:.15}");
            // A single reordering of the target basis flips the sign.
            if det < 0.0 && f.linear.len() >= 2 {
                let swapped: Vec<ChartSample> = samples[k]
                    .iter()
                    .map(|s| {
                        let mut s = s.clone();
                        let v = if coords == 0 { &mut s.r } else { &mut s.s };
                        v.swap(0, 1);
                        s
                    })
                    .collect();
                if let Ok(g) = charts::transition_affine_fit(&samples[0], &swapped) {
                    det = if coords == 0 { g.r.det } else { g.s.det };
                    detail = format!("det {:.15} before reordering the target basis, {det:.15} after", f.det);
                }
            }
            let c = Check::at_most(ctx.id(), format!("{pair}/det-{name}"), anchor::VOLUME, (det - 1.0).abs(), t.volume)
                .with_detail(detail);
            ctx.push(c);
        }
        if lift.lift == LiftSpec::Identity && ref_lift.lift == LiftSpec::Identity {
            let shift = match reference.evaluate(&model, &lift.base) {
                Ok(s) => s,
                Err(e) => {
                    ctx.fail(format!("{pair}/translation"), anchor::TRANSLATION, e);
                    continue;
                }
            };
            let m = fit.r.linear.len();
            let id_err = (fit.r.linear_matrix() - DMatrix::identity(m, m))
                .amax()
                .max((fit.s.linear_matrix() - DMatrix::identity(m, m)).amax());
            let b_err = fit
                .r
                .translation
                .iter()
                .zip(&shift.r)
                .chain(fit.s.translation.iter().zip(&shift.s))
                .map(|(b, r)| (b + r).abs())
                .fold(0.0, f64::max);
            let c = Check::at_most(ctx.id(), format!("{pair}/identity"), anchor::TRANSLATION, id_err, t.translation)
                .with_detail(format!("translation mismatch {b_err:.3e}"));
            ctx.push(c);
            ctx.at_most(format!("{pair}/translation"), anchor::TRANSLATION, b_err, t.regression);
        }
        atlas.transitions.push(TransitionRecord {
            from: ref_lift.id.clone(),
            to: lift.id.clone(),
            fit,
        });
    }

    // Pulled-back B and W, and the L2 metric.
    let form_points: Vec<Vec<f64>> = match &spec.form_points {
        Some(idx) => idx.iter().filter_map(|&i| points.get(i).cloned()).collect(),
        None => points.clone(),
    };
    let mut record = ChartRecord {
        lift: ref_lift.id.clone(),
        l2_gram: Vec::new(),
        b_gram: Vec::new(),
        max_w: f64::NAN,
        hessian: None,
    };
    let mut b_center = None;
    match reference.pullback_forms(&model, &form_points) {
        Ok(forms) => {
            let max_w = forms.iter().map(|f| f.w.amax()).fold(0.0, f64::max);
            record.max_w = max_w;
            let c = Check::at_most(ctx.id(), format!("{}/W-pullback", ref_lift.id), anchor::W_PULLBACK, max_w, ctx.tol.w_pullback)
                .with_detail(format!("{} points", forms.len()));
            ctx.push(c);
        }
        Err(e) => ctx.fail(format!("{}/W-pullback", ref_lift.id), anchor::W_PULLBACK, e),
    }
    match (reference.pullback_forms(&model, std::slice::from_ref(&center)), reference.l2_gram(&model)) {
        (Ok(b), Ok(l2)) => {
            let b = b[0].b_gram.clone();
            let rel = (&b - &l2).norm() / l2.norm();
            ctx.at_most(format!("{}/B-vs-L2", ref_lift.id), anchor::B_PULLBACK, rel, ctx.tol.b_vs_l2);
            ctx.report.metrics.b_vs_l2 = Some(rel);
            record.l2_gram = charts::matrix_rows(&l2);
            record.b_gram = charts::matrix_rows(&b);
            b_center = Some(b);
        }
        (Err(e), _) | (_, Err(e)) => ctx.fail(format!("{}/B-vs-L2", ref_lift.id), anchor::B_PULLBACK, e),
    }

    // Hessian potential over the reference grid.
    match charts::hessian_fit(&samples[0], spec.hessian_degree, ctx.tol.symmetry) {
        Ok(fit) => {
            ctx.at_most(format!("{}/hessian-symmetry", ref_lift.id), anchor::HESSIAN, fit.symmetry_residual, ctx.tol.symmetry);
            if let (Some(dr), Some(b)) = (&jac_dr, &b_center) {
                if let Some(inv) = dr.clone().try_inverse() {
                    let b_u = inv.transpose() * b * &inv;
                    let r0 = &samples[0][points.iter().position(|p| *p == center).unwrap_or(0)].r;
                    let h = fit.hessian(r0);
                    let err = (&h - &b_u).norm() / b_u.norm();
                    ctx.at_most(format!("{}/hessian-vs-B", ref_lift.id), anchor::HESSIAN, err, ctx.tol.b_vs_l2);
                }
            }
            record.hessian = Some(fit);
        }
        Err(ChartError::AsymmetricJacobian(r)) => {
            ctx.at_most(format!("{}/hessian-symmetry", ref_lift.id), anchor::HESSIAN, r, ctx.tol.symmetry)
        }
        Err(e) => ctx.fail(format!("{}/hessian-symmetry", ref_lift.id), anchor::HESSIAN, e),
    }
    if center.len() >= 2 {
        let us: Vec<Vec<f64>> = samples[0].iter().map(|s| s.r.clone()).collect();
        let vs: Vec<Vec<f64>> = us
            .iter()
            .map(|u| {
                let mut v = vec![0.0; u.len()];
                v[0] = u[1];
                v[1] = -u[0];
                v
            })
            .collect();
        let (value, pass) = match charts::hessian_fit_field(&us, &vs, spec.hessian_degree, ctx.tol.symmetry) {
            Err(ChartError::AsymmetricJacobian(r)) => (r, true),
            Ok(f) => (f.symmetry_residual, false),
            Err(_) => (f64::NAN, false),
        };
        let mut c = Check::at_least(ctx.id(), format!("{}/curl-rejected", ref_lift.id), anchor::NEGATIVE_CONTROL, value, ctx.tol.symmetry);
        c.pass = pass;
        ctx.push(c);
    }
    atlas.charts.push(record);
    ctx.report.atlas = Some(atlas);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_covers_box() {
        let g = grid_points(&[0.0, 1.0], 0.5, 3);
        assert_eq!(g.len(), 9);
        assert_eq!(g[0], vec![-0.5, 0.5]);
        assert_eq!(g[8], vec![0.5, 1.5]);
        assert_eq!(g[4], vec![0.0, 1.0]);
    }

    #[test]
    fn random_curves_are_seeded() {
        let spec = crate::scenario::RandomPaths {
            count: 3,
            seed: 9,
            radius: 0.2,
            modes: 2,
        };
        let a = random_curves(&[0.0, 0.1], &spec);
        assert_eq!(a, random_curves(&[0.0, 0.1], &spec));
        assert_eq!(a.len(), 3);
        let c = ParamCurve::parse(&a[0], 0.0).unwrap();
        assert_eq!(c.eval(0.0).0, vec![0.0, 0.1]);
    }
}
