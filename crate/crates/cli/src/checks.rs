//! Check records and the pinned tolerances they are judged against.

use serde::{Deserialize, Serialize};

/// Acceptance tolerances. `--tol-scale` multiplies every entry except the
/// convergence order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub tangent_laws: f64,
    pub hodge_duality: f64,
    pub oracle: f64,
    pub homotopy: f64,
    pub regression: f64,
    pub jacobian_r: f64,
    pub jacobian_s: f64,
    pub affine_residual: f64,
    pub volume: f64,
    pub translation: f64,
    pub w_pullback: f64,
    pub b_vs_l2: f64,
    pub symmetry: f64,
    pub lagrangian: f64,
    pub special: f64,
    pub containment: f64,
    pub transversality: f64,
    pub min_order: f64,
    /// Errors below this are treated as exact and skip the order fit.
    pub exactness_floor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            tangent_laws: 1e-12,
            hodge_duality: 2e-2,
            oracle: 1e-8,
            homotopy: 1e-8,
            regression: 1e-10,
            jacobian_r: 1e-6,
            jacobian_s: 5e-2,
            affine_residual: 1e-6,
            volume: 1e-6,
            translation: 1e-12,
            w_pullback: 1e-6,
            b_vs_l2: 5e-2,
            symmetry: 1e-6,
            lagrangian: 1e-10,
            special: 1e-10,
            containment: 1e-10,
            transversality: 1e-6,
            min_order: 1.0,
            exactness_floor: 1e-12,
        }
    }
}

impl Tolerances {
    pub fn scaled(mut self, x: f64) -> Self {
        let min_order = self.min_order;
        let transversality = self.transversality;
        for t in [
            &mut self.tangent_laws,
            &mut self.hodge_duality,
            &mut self.oracle,
            &mut self.homotopy,
            &mut self.regression,
            &mut self.jacobian_r,
            &mut self.jacobian_s,
            &mut self.affine_residual,
            &mut self.volume,
            &mut self.translation,
            &mut self.w_pullback,
            &mut self.b_vs_l2,
            &mut self.symmetry,
            &mut self.lagrangian,
            &mut self.special,
            &mut self.containment,
            &mut self.exactness_floor,
        ] {
            *t *= x;
        }
        // Lower bounds do not scale up.
        self.transversality = transversality / x.max(1.0);
        self.min_order = min_order;
        self
    }

    pub fn apply(mut self, o: &ToleranceOverrides) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = o.$f { self.$f = v; } )* };
        }
        take!(
            tangent_laws, hodge_duality, oracle, homotopy, regression, jacobian_r, jacobian_s,
            affine_residual, volume, translation, w_pullback, b_vs_l2, symmetry, lagrangian,
            special, containment, transversality, min_order, exactness_floor
        );
        self
    }
}

/// Per-scenario replacements for individual tolerances.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceOverrides {
    pub tangent_laws: Option<f64>,
    pub hodge_duality: Option<f64>,
    pub oracle: Option<f64>,
    pub homotopy: Option<f64>,
    pub regression: Option<f64>,
    pub jacobian_r: Option<f64>,
    pub jacobian_s: Option<f64>,
    pub affine_residual: Option<f64>,
    pub volume: Option<f64>,
    pub translation: Option<f64>,
    pub w_pullback: Option<f64>,
    pub b_vs_l2: Option<f64>,
    pub symmetry: Option<f64>,
    pub lagrangian: Option<f64>,
    pub special: Option<f64>,
    pub containment: Option<f64>,
    pub transversality: Option<f64>,
    pub min_order: Option<f64>,
    pub exactness_floor: Option<f64>,
}

impl ToleranceOverrides {
    pub fn first_negative(&self) -> Option<&'static str> {
        let all = [
            ("tangent_laws", self.tangent_laws),
            ("hodge_duality", self.hodge_duality),
            ("oracle", self.oracle),
            ("homotopy", self.homotopy),
            ("regression", self.regression),
            ("jacobian_r", self.jacobian_r),
            ("jacobian_s", self.jacobian_s),
            ("affine_residual", self.affine_residual),
            ("volume", self.volume),
            ("translation", self.translation),
            ("w_pullback", self.w_pullback),
            ("b_vs_l2", self.b_vs_l2),
            ("symmetry", self.symmetry),
            ("lagrangian", self.lagrangian),
            ("special", self.special),
            ("containment", self.containment),
            ("transversality", self.transversality),
            ("min_order", self.min_order),
            ("exactness_floor", self.exactness_floor),
        ];
        all.into_iter()
            .find(|(_, v)| v.is_some_and(|v| !(v >= 0.0)))
            .map(|(k, _)| k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Comparison {
    /// `value <= tolerance`
    AtMost,
    /// `value >= tolerance`
    AtLeast,
}

/// One judged quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub scenario: String,
    pub id: String,
    /// Name of the property the check exercises.
    pub anchor: String,
    pub value: f64,
    pub tolerance: f64,
    pub comparison: Comparison,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn at_most(scenario: &str, id: impl Into<String>, anchor: &str, value: f64, tolerance: f64) -> Self {
        Self {
            scenario: scenario.to_string(),
            id: id.into(),
            anchor: anchor.to_string(),
            value,
            tolerance,
            comparison: Comparison::AtMost,
            // NaN never passes.
            pass: value <= tolerance,
            detail: String::new(),
        }
    }

    pub fn at_least(scenario: &str, id: impl Into<String>, anchor: &str, value: f64, tolerance: f64) -> Self {
        Self {
            comparison: Comparison::AtLeast,
            pass: value >= tolerance,
            ..Self::at_most(scenario, id, anchor, value, tolerance)
        }
    }

    /// A computation that could not be carried out.
    pub fn error(scenario: &str, id: impl Into<String>, anchor: &str, message: impl Into<String>) -> Self {
        Self {
            pass: false,
            detail: message.into(),
            ..Self::at_most(scenario, id, anchor, f64::NAN, 0.0)
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }
}

/// Descriptive anchors naming the property behind each check family.
pub mod anchor {
    pub const VALID: &str = "special-lagrangian-boundary-problem";
    pub const TOPOLOGY: &str = "relative-absolute-duality";
    pub const HARMONIC_COUNT: &str = "harmonic-field-dimension";
    pub const THETA_CLOSED: &str = "tangent-form-closed";
    pub const THETA_BOUNDARY: &str = "tangent-form-vanishes-on-boundary";
    pub const PHI_CLOSED: &str = "dual-form-closed";
    pub const HODGE_DUALITY: &str = "star-theta-equals-phi";
    pub const RF_ORACLE: &str = "relative-flux-swept-surface";
    pub const SF_ORACLE: &str = "special-flux-swept-cycle";
    pub const HOMOTOPY: &str = "flux-homotopy-invariance";
    pub const REGRESSION: &str = "closed-form-flux";
    pub const JACOBIAN_R: &str = "chart-derivative-theta";
    pub const JACOBIAN_S: &str = "chart-derivative-star-theta";
    pub const AFFINE: &str = "affine-transition";
    pub const VOLUME: &str = "volume-preserving-transition";
    pub const TRANSLATION: &str = "basepoint-change-translation";
    pub const W_PULLBACK: &str = "lagrangian-embedding";
    pub const B_PULLBACK: &str = "l2-metric-embedding";
    pub const HESSIAN: &str = "hessian-potential";
    pub const NEGATIVE_CONTROL: &str = "curl-field-rejected";
    pub const CONVERGENCE: &str = "refinement-order";
}
