//! Scenario files: a JSON tree describing the ambient model, mesh, family,
//! paths and chart requests for one run.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use slag_core::ambient::{make_model, AmbientModel, BoundaryLagrangian, ModelSpec};
use slag_core::fixtures::{self, Handedness};
use slag_core::flux::ParamCurve;
use slag_core::immersion::{FamilySpec, ImmersionFamily};
use slag_core::mesh::{Automorphism, RawMesh, SimplicialMesh};
use thiserror::Error;

use crate::checks::ToleranceOverrides;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
    #[error("unknown fixture '{0}'")]
    UnknownFixture(String),
    #[error("scenario '{id}': {message}")]
    Invalid { id: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hand {
    Positive,
    #[default]
    Negative,
}

impl From<Hand> for Handedness {
    fn from(h: Hand) -> Self {
        match h {
            Hand::Positive => Handedness::Positive,
            Hand::Negative => Handedness::Negative,
        }
    }
}

/// Mesh source. Generator sizes are multiplied by the refinement level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeshSpec {
    Interval {
        segments: usize,
        #[serde(default)]
        handedness: Hand,
    },
    Cylinder {
        ns: usize,
        nt: usize,
        #[serde(default)]
        handedness: Hand,
    },
    TwoCylinders {
        ns: usize,
        nt: usize,
        #[serde(default)]
        handedness: Hand,
    },
    PairOfPants {
        k: usize,
    },
    Inline {
        mesh: RawMesh,
    },
    File {
        path: PathBuf,
    },
}

/// Reparametrization of the family used as a chart lift.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LiftSpec {
    #[default]
    Identity,
    /// Rotate a cylinder by `shift` periodic steps.
    Rotate { shift: usize },
    /// Exchange the two annuli of a two-cylinder mesh.
    Swap,
    VertexMap { map: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSpec {
    pub id: String,
    /// Straight segment endpoints, or parameter expressions in `t`.
    #[serde(default)]
    pub from: Option<Vec<f64>>,
    #[serde(default)]
    pub to: Option<Vec<f64>>,
    #[serde(default)]
    pub exprs: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomotopySpec {
    pub id: String,
    /// Parameter expressions in `t` and `u`; `u = 0` and `u = 1` are the two
    /// compared paths.
    pub exprs: Vec<String>,
    #[serde(default = "default_sweep")]
    pub sweep: usize,
}

fn default_sweep() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomPaths {
    pub count: usize,
    pub seed: u64,
    /// Endpoints and sine amplitudes are drawn from `[-radius, radius]`.
    pub radius: f64,
    #[serde(default = "default_modes")]
    pub modes: usize,
}

fn default_modes() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartLift {
    pub id: String,
    pub base: Vec<f64>,
    #[serde(default)]
    pub lift: LiftSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub radius: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartsSpec {
    pub lifts: Vec<ChartLift>,
    pub grid: GridSpec,
    #[serde(default = "default_degree")]
    pub hessian_degree: usize,
    /// Grid points (by index) where `B` and `W` are pulled back; all when
    /// omitted.
    #[serde(default)]
    pub form_points: Option<Vec<usize>>,
    /// Time samples along the straight chart paths; the scenario value when
    /// omitted.
    #[serde(default)]
    pub time_samples: Option<usize>,
}

fn default_degree() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expected {
    pub path: String,
    #[serde(default)]
    pub rf: Option<Vec<f64>>,
    /// Special flux magnitudes; the sign depends on the cycle orientation.
    #[serde(default)]
    pub sf_abs: Option<Vec<f64>>,
}

/// Which check families run. Everything is on unless switched off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Suites {
    pub topology: bool,
    pub validation: bool,
    pub tangent_laws: bool,
    pub hodge: bool,
    pub flux: bool,
    pub homotopy: bool,
    pub regression: bool,
    pub charts: bool,
}

impl Default for Suites {
    fn default() -> Self {
        Self {
            topology: true,
            validation: true,
            tangent_laws: true,
            hodge: true,
            flux: true,
            homotopy: true,
            regression: true,
            charts: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub id: String,
    #[serde(default)]
    pub description: String,
    pub model: ModelSpec,
    pub mesh: MeshSpec,
    #[serde(default = "one")]
    pub level: usize,
    pub family: FamilySpec,
    pub base: Vec<f64>,
    #[serde(default)]
    pub lagrangians: Vec<BoundaryLagrangian>,
    #[serde(default)]
    pub paths: Vec<PathSpec>,
    #[serde(default)]
    pub homotopies: Vec<HomotopySpec>,
    #[serde(default)]
    pub random_paths: Option<RandomPaths>,
    #[serde(default)]
    pub charts: Option<ChartsSpec>,
    #[serde(default)]
    pub expected: Option<Expected>,
    #[serde(default = "default_samples")]
    pub time_samples: usize,
    #[serde(default)]
    pub tolerances: ToleranceOverrides,
    #[serde(default)]
    pub suites: Suites,
    /// Output directory; `--out` takes precedence.
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn one() -> usize {
    1
}

fn default_samples() -> usize {
    33
}

impl Scenario {
    pub fn from_json(src: &str, origin: &str) -> Result<Self, ConfigError> {
        let s: Self = serde_json::from_str(src).map_err(|source| ConfigError::Parse {
            path: origin.to_string(),
            source,
        })?;
        if let Some(bad) = s.tolerances.first_negative() {
            return Err(s.invalid(format!("tolerance '{bad}' must not be negative")));
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let src = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut s = Self::from_json(&src, &path.display().to_string())?;
        // Mesh files are resolved relative to the scenario file.
        if let MeshSpec::File { path: p } = &mut s.mesh {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(s)
    }

    pub fn at_level(&self, level: usize) -> Self {
        Self {
            level,
            ..self.clone()
        }
    }

    pub fn invalid(&self, message: impl Into<String>) -> ConfigError {
        ConfigError::Invalid {
            id: self.id.clone(),
            message: message.into(),
        }
    }

    pub fn intervals(&self) -> Result<usize, ConfigError> {
        if self.time_samples < 3 {
            return Err(self.invalid("time_samples must be at least 3"));
        }
        Ok(self.time_samples - 1)
    }
}

/// Everything built from a scenario before any check runs.
pub struct Setup {
    pub model: AmbientModel,
    pub mesh: Arc<SimplicialMesh>,
    pub family: Arc<ImmersionFamily>,
    pub paths: Vec<(String, ParamCurve)>,
}

impl Setup {
    pub fn build(s: &Scenario) -> Result<Self, ConfigError> {
        let model = make_model(&s.model).map_err(|e| s.invalid(e.to_string()))?;
        let mesh = Arc::new(build_mesh(s)?);
        if mesh.dim() != model.n() {
            return Err(s.invalid(format!(
                "mesh dimension {} does not match model n = {}",
                mesh.dim(),
                model.n()
            )));
        }
        let family = ImmersionFamily::new(&model, mesh.clone(), s.family.clone())
            .map_err(|e| s.invalid(e.to_string()))?;
        if s.base.len() != family.num_params() {
            return Err(s.invalid("base has the wrong number of parameters"));
        }
        for l in &s.lagrangians {
            l.validate(&model).map_err(|e| s.invalid(e.to_string()))?;
        }
        let paths = s
            .paths
            .iter()
            .map(|p| Ok((p.id.clone(), path_curve(s, p)?)))
            .collect::<Result<Vec<_>, ConfigError>>()?;
        for (id, c) in &paths {
            if c.dim() != family.num_params() {
                return Err(s.invalid(format!("path '{id}' has the wrong number of parameters")));
            }
        }
        Ok(Self {
            model,
            mesh,
            family: Arc::new(family),
            paths,
        })
    }

    pub fn automorphism(&self, s: &Scenario, lift: &LiftSpec) -> Result<Option<Automorphism>, ConfigError> {
        let map = match (lift, &s.mesh) {
            (LiftSpec::Identity, _) => return Ok(None),
            (LiftSpec::Rotate { shift }, MeshSpec::Cylinder { ns, nt, .. }) => {
                fixtures::cylinder_rotation(ns * s.level, nt * s.level, shift * s.level)
            }
            (LiftSpec::Swap, MeshSpec::TwoCylinders { ns, nt, .. }) => {
                fixtures::cylinder_swap(ns * s.level, nt * s.level)
            }
            (LiftSpec::VertexMap { map }, _) => map.clone(),
            _ => return Err(s.invalid("lift does not apply to this mesh")),
        };
        self.mesh
            .relabeling_automorphism(&map)
            .map(|(a, _)| Some(a))
            .map_err(|e| s.invalid(e.to_string()))
    }
}

fn path_curve(s: &Scenario, p: &PathSpec) -> Result<ParamCurve, ConfigError> {
    match (&p.from, &p.to, &p.exprs) {
        (Some(from), Some(to), None) if from.len() == to.len() => Ok(ParamCurve::Straight {
            from: from.clone(),
            to: to.clone(),
        }),
        (None, None, Some(exprs)) => {
            ParamCurve::parse(exprs, 0.0).map_err(|e| s.invalid(format!("path '{}': {e}", p.id)))
        }
        _ => Err(s.invalid(format!(
            "path '{}' needs either matching 'from'/'to' or 'exprs'",
            p.id
        ))),
    }
}

fn build_mesh(s: &Scenario) -> Result<SimplicialMesh, ConfigError> {
    let l = s.level;
    if l == 0 {
        return Err(s.invalid("level must be positive"));
    }
    let err = |e: slag_core::mesh::MeshError| s.invalid(e.to_string());
    match &s.mesh {
        MeshSpec::Interval {
            segments,
            handedness,
        } => fixtures::interval(segments * l, (*handedness).into()).map_err(err),
        MeshSpec::Cylinder { ns, nt, handedness } => {
            fixtures::cylinder(ns * l, nt * l, (*handedness).into()).map_err(err)
        }
        MeshSpec::TwoCylinders { ns, nt, handedness } => {
            fixtures::two_cylinders((ns * l, nt * l), (ns * l, nt * l), (*handedness).into()).map_err(err)
        }
        MeshSpec::PairOfPants { k } => fixtures::pair_of_pants(k * l).map_err(err),
        MeshSpec::Inline { mesh } => SimplicialMesh::from_raw(mesh).map_err(err),
        MeshSpec::File { path } => {
            let src = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                path: path.clone(),
                source,
            })?;
            SimplicialMesh::from_json_str(&src).map_err(err)
        }
    }
}
