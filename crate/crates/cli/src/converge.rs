//! Refinement studies: rerun a scenario at several mesh levels and fit the
//! order at which the discretization errors decay.

use serde::{Deserialize, Serialize};
use slag_core::flux::{self, FluxOptions, ImmersionPath};

use crate::checks::{anchor, Check, Tolerances};
use crate::runner::{run_scenario, Metrics, ScenarioReport, TimingRow};
use crate::scenario::{ConfigError, Scenario, Setup};

/// Time-sample counts for the quadrature study.
pub const QUADRATURE_SAMPLES: [usize; 3] = [9, 17, 33];
/// Composite Simpson is fourth order for smooth integrands.
pub const QUADRATURE_ORDER: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub quantity: String,
    /// `(refinement factor, error)`.
    pub points: Vec<(usize, f64)>,
    /// Least-squares slope of `-log(error)` against `log(factor)`.
    pub order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub scenario: String,
    pub levels: Vec<usize>,
    pub series: Vec<Series>,
    pub checks: Vec<Check>,
}

impl ConvergenceReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn series(&self, quantity: &str) -> Option<&Series> {
        self.series.iter().find(|s| s.quantity == quantity)
    }
}

/// Fitted decay order of `errors` against refinement `factors`.
pub fn fit_order(factors: &[usize], errors: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = factors
        .iter()
        .zip(errors)
        .filter(|(_, e)| **e > 0.0 && e.is_finite())
        .map(|(f, e)| ((*f as f64).ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(-sxy / sxx)
}

fn order_check(scenario: &str, series: &Series, min_order: f64, floor: f64) -> Check {
    let exact = series.points.iter().all(|(_, e)| *e <= floor);
    let errors: Vec<String> = series.points.iter().map(|(l, e)| format!("{l}:{e:.3e}")).collect();
    let id = format!("{}-order", series.quantity);
    if exact {
        let worst = series.points.iter().map(|p| p.1).fold(0.0, f64::max);
        let mut c = Check::at_least(scenario, id, anchor::CONVERGENCE, series.order.unwrap_or(f64::INFINITY), min_order)
            .with_detail(format!("exact at every level (max {worst:.3e}); errors {}", errors.join(" ")));
        c.pass = true;
        return c;
    }
    match series.order {
        Some(p) => Check::at_least(scenario, id, anchor::CONVERGENCE, p, min_order)
            .with_detail(format!("errors {}", errors.join(" "))),
        None => Check::error(scenario, id, anchor::CONVERGENCE, format!("cannot fit errors {}", errors.join(" "))),
    }
}

fn metric_series(levels: &[usize], metrics: &[Metrics]) -> Vec<Series> {
    let pick: [(&str, fn(&Metrics) -> Option<f64>); 3] = [
        ("hodge-relative", |m| m.hodge_relative),
        ("jacobian-s", |m| m.jacobian_s),
        ("b-vs-l2", |m| m.b_vs_l2),
    ];
    pick.iter()
        .filter_map(|(name, f)| {
            let points: Option<Vec<(usize, f64)>> = levels.iter().zip(metrics).map(|(l, m)| f(m).map(|e| (*l, e))).collect();
            let points = points?;
            let (ls, es): (Vec<usize>, Vec<f64>) = points.iter().copied().unzip();
            Some(Series {
                quantity: name.to_string(),
                order: fit_order(&ls, &es),
                points,
            })
        })
        .collect()
}

/// Error of the expected path's periods against their closed forms for each
/// time-sample count.
fn quadrature_series(s: &Scenario, tol: &Tolerances) -> Result<Option<Series>, ConfigError> {
    let Some(exp) = &s.expected else {
        return Ok(None);
    };
    let setup = Setup::build(s)?;
    let Some((_, curve)) = setup.paths.iter().find(|(id, _)| *id == exp.path) else {
        return Err(s.invalid(format!("expected values name unknown path '{}'", exp.path)));
    };
    let rel = setup.mesh.relative_cycle_basis().map_err(|e| s.invalid(e.to_string()))?;
    let abs = setup.mesh.absolute_cycle_basis().map_err(|e| s.invalid(e.to_string()))?;
    let opts = FluxOptions {
        lagrangian_tol: tol.lagrangian,
        special_tol: tol.special,
    };
    let mut points = Vec::new();
    for n in QUADRATURE_SAMPLES {
        let err = (|| -> Result<f64, flux::FluxError> {
            let path = ImmersionPath::from_family(setup.family.clone(), curve.clone())?.with_intervals(n - 1);
            let mut err: f64 = 0.0;
            if let Some(want) = &exp.rf {
                let got = flux::relative_flux(&setup.model, &path, &rel, &opts)?.periods;
                err = want.iter().zip(&got).map(|(w, g)| (w - g).abs()).fold(err, f64::max);
            }
            if let Some(want) = &exp.sf_abs {
                let got = flux::special_flux(&setup.model, &path, &abs, &opts)?.periods;
                err = want.iter().zip(&got).map(|(w, g)| (w - g.abs()).abs()).fold(err, f64::max);
            }
            Ok(err)
        })()
        .unwrap_or(f64::NAN);
        points.push((n - 1, err));
    }
    let (ls, es): (Vec<usize>, Vec<f64>) = points.iter().copied().unzip();
    Ok(Some(Series {
        quantity: "quadrature".into(),
        order: fit_order(&ls, &es),
        points,
    }))
}

/// Rerun `s` at each level. Per-level checks are kept with an `L<level>/`
/// prefix; random paths and homotopies are skipped since they feed no
/// refinement metric.
pub fn convergence_study(
    s: &Scenario,
    levels: &[usize],
    tol: &Tolerances,
) -> Result<(ConvergenceReport, Vec<ScenarioReport>, Vec<TimingRow>), ConfigError> {
    if levels.len() < 2 || levels.contains(&0) {
        return Err(s.invalid("a convergence study needs at least two positive levels"));
    }
    let tol = tol.apply(&s.tolerances);
    let mut base = s.clone();
    base.random_paths = None;
    base.homotopies.clear();
    let mut reports = Vec::new();
    let mut timing = Vec::new();
    let mut checks = Vec::new();
    for &l in levels {
        let (r, t) = run_scenario(&base.at_level(l), &tol)?;
        for c in &r.checks {
            let mut c = c.clone();
            c.id = format!("L{l}/{}", c.id);
            checks.push(c);
        }
        timing.extend(t.into_iter().map(|mut row| {
            row.phase = format!("L{l}/{}", row.phase);
            row
        }));
        reports.push(r);
    }
    let metrics: Vec<Metrics> = reports.iter().map(|r| r.metrics.clone()).collect();
    let mut series = metric_series(levels, &metrics);
    for sr in &series {
        checks.push(order_check(&s.id, sr, tol.min_order, tol.exactness_floor));
    }
    if let Some(q) = quadrature_series(s, &tol)? {
        checks.push(order_check(&s.id, &q, QUADRATURE_ORDER, tol.exactness_floor.max(tol.regression)));
        series.push(q);
    }
    Ok((
        ConvergenceReport {
            scenario: s.id.clone(),
            levels: levels.to_vec(),
            series,
            checks,
        },
        reports,
        timing,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_power_law() {
        let levels = [1, 2, 4, 8];
        let errs: Vec<f64> = levels.iter().map(|l| 3.0 / (*l as f64).powi(2)).collect();
        assert!((fit_order(&levels, &errs).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn exact_series_passes_on_the_floor() {
        let s = Series {
            quantity: "q".into(),
            points: vec![(1, 1e-16), (2, 3e-16), (4, 0.0)],
            order: fit_order(&[1, 2, 4], &[1e-16, 3e-16, 0.0]),
        };
        assert!(order_check("x", &s, 1.0, 1e-12).pass);
        let s = Series {
            quantity: "q".into(),
            points: vec![(1, 1e-2), (2, 1e-2)],
            order: Some(0.0),
        };
        assert!(!order_check("x", &s, 1.0, 1e-12).pass);
    }
}
