//! JSON scenario files.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "name": "relay",
//!   "dim": 2,
//!   "modes": [
//!     { "name": "lower",
//!       "field": { "kind": "constant", "value": [1.0, 1.0] },
//!       "domain": { "half_spaces": [{ "normal": [0.0, 1.0], "offset": 0.0 }],
//!                   "bounds": { "lo": [-5.0, -5.0], "hi": [5.0, 5.0] } } }
//!   ],
//!   "edges": [
//!     { "source": "lower", "target": "upper",
//!       "guard": { "normal": [0.0, 1.0], "offset": 0.0 },
//!       "image": { "normal": [0.0, 1.0], "offset": 0.0 },
//!       "reset": { "kind": "identity" } }
//!   ],
//!   "input_set": { "kind": "empty" },
//!   "x0": { "mode": "lower", "coords": [0.0, -1.0] },
//!   "horizon": 2.0,
//!   "control": [0.0],
//!   "simulation": { "epsilon": 0.01, "rel_tol": 1e-8 }
//! }
//! ```
//!
//! Fields: `constant {value}`, `affine {a, b?, offset?}` (`f = a x + b u + offset`),
//! `gravity {g}`. Resets: `identity`, `affine {m, b}`, `bouncing_ball {c}`.
//! Optional `guard_set` on an edge is a list of half-spaces `normal·x ≤ offset`
//! restricting the guard inside its plane. Input sets: `empty`,
//! `box {lo, hi}`, `ball {center, radius}`. `control` is an optional constant
//! input. ε is global; an edge carrying its own `epsilon` is rejected.

use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{
    BoundingBox, ControlSignal, Domain, Edge, HybridSystem, HyperplaneData, InputSet, Matrix, Mode, ModeField,
    Predicate, ResetMap, Vector,
};
use crate::scenarios::{Oracles, Scenario};
use crate::sim::QuotientPoint;

const DOMAIN_TOL: f64 = 1e-9;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileDoc {
    schema_version: u32,
    name: String,
    dim: usize,
    modes: Vec<ModeDoc>,
    edges: Vec<serde_json::Value>,
    #[serde(default)]
    input_set: InputDoc,
    x0: PointDoc,
    horizon: f64,
    #[serde(default)]
    control: Option<Vec<f64>>,
    #[serde(default)]
    simulation: SimulationDoc,
}

/// Simulation settings a scenario file may carry; command-line flags override them.
#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SimulationDoc {
    pub epsilon: Option<f64>,
    pub rel_tol: Option<f64>,
    pub abs_tol: Option<f64>,
    pub max_step: Option<f64>,
    pub method: Option<String>,
    pub transition: Option<String>,
    pub branch_policy: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModeDoc {
    name: String,
    field: FieldDoc,
    domain: DomainDoc,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum FieldDoc {
    Constant { value: Vec<f64> },
    Affine { a: Vec<Vec<f64>>, b: Option<Vec<Vec<f64>>>, offset: Option<Vec<f64>> },
    Gravity { g: f64 },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DomainDoc {
    #[serde(default)]
    half_spaces: Vec<PlaneDoc>,
    bounds: BoundsDoc,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundsDoc {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlaneDoc {
    normal: Vec<f64>,
    offset: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeDoc {
    source: String,
    target: String,
    guard: PlaneDoc,
    image: PlaneDoc,
    reset: ResetDoc,
    #[serde(default)]
    guard_set: Vec<PlaneDoc>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum ResetDoc {
    Identity,
    Affine { m: Vec<Vec<f64>>, b: Vec<f64> },
    BouncingBall { c: f64 },
}

#[derive(Debug, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum InputDoc {
    #[default]
    Empty,
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PointDoc {
    mode: String,
    coords: Vec<f64>,
}

/// A scenario read from disk with its simulation overrides.
#[derive(Clone, Debug)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub simulation: SimulationDoc,
}

pub fn load_scenario_file(path: &Path) -> Result<LoadedScenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_scenario(&text)
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn matrix(rows: &[Vec<f64>], nrows: usize, ncols: usize, what: &str) -> Result<Matrix> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(cfg_err(format!("{what} must be {nrows}×{ncols}")));
    }
    Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn vector(xs: &[f64], n: usize, what: &str) -> Result<Vector> {
    if xs.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: xs.len() })
            .map_err(|e| cfg_err(format!("{what}: {e}")));
    }
    Ok(Vector::from_row_slice(xs))
}

fn half_spaces(planes: &[PlaneDoc], n: usize) -> Result<Vec<(Vector, f64)>> {
    planes.iter().map(|p| Ok((vector(&p.normal, n, "half-space normal")?, p.offset))).collect()
}

/// Parses a scenario document.
pub fn parse_scenario(text: &str) -> Result<LoadedScenario> {
    let raw: serde_json::Value = serde_json::from_str(text)?;
    if let Some(edges) = raw.get("edges").and_then(|e| e.as_array()) {
        if edges.iter().any(|e| e.get("epsilon").is_some()) {
            return Err(cfg_err("epsilon is global; per-edge epsilon is not supported"));
        }
    }
    let doc: FileDoc = serde_json::from_value(raw)?;
    if doc.schema_version != crate::SCHEMA_VERSION {
        return Err(cfg_err(format!("unsupported schema_version {}", doc.schema_version)));
    }
    let n = doc.dim;
    let input_set = match &doc.input_set {
        InputDoc::Empty => InputSet::Empty,
        InputDoc::Box { lo, hi } => InputSet::Box {
            lo: Vector::from_row_slice(lo),
            hi: vector(hi, lo.len(), "input box")?,
        },
        InputDoc::Ball { center, radius } => InputSet::Ball { center: Vector::from_row_slice(center), radius: *radius },
    };
    let m = input_set.dim();

    let mut modes = Vec::new();
    for md in &doc.modes {
        let field = match &md.field {
            FieldDoc::Constant { value } => ModeField::constant(vector(value, n, "constant field")?),
            FieldDoc::Affine { a, b, offset } => {
                let b = b.as_ref().map(|b| matrix(b, n, m, "input matrix b")).transpose()?;
                let offset = match offset {
                    Some(o) => vector(o, n, "field offset")?,
                    None => Vector::zeros(n),
                };
                ModeField::affine(matrix(a, n, n, "field matrix a")?, b, offset)
            }
            FieldDoc::Gravity { g } if n == 2 => ModeField::gravity(*g),
            FieldDoc::Gravity { .. } => return Err(cfg_err("gravity field needs dim = 2")),
        };
        let bounds = BoundingBox::new(
            vector(&md.domain.bounds.lo, n, "bounds.lo")?,
            vector(&md.domain.bounds.hi, n, "bounds.hi")?,
        );
        let domain = Domain::half_spaces(half_spaces(&md.domain.half_spaces, n)?, bounds, DOMAIN_TOL);
        modes.push(Mode { name: md.name.clone(), domain, field });
    }
    let mode_id = |name: &str| {
        modes
            .iter()
            .position(|md| md.name == name)
            .ok_or_else(|| cfg_err(format!("unknown mode `{name}`")))
    };

    let mut edges = Vec::new();
    for raw in doc.edges {
        let ed: EdgeDoc = serde_json::from_value(raw)?;
        let planes = HyperplaneData::new(
            vector(&ed.guard.normal, n, "guard normal")?,
            ed.guard.offset,
            vector(&ed.image.normal, n, "image normal")?,
            ed.image.offset,
        )?;
        let reset = match ed.reset {
            ResetDoc::Identity => ResetMap::identity(n),
            ResetDoc::Affine { m, b } => ResetMap::affine(matrix(&m, n, n, "reset matrix")?, vector(&b, n, "reset offset")?)?,
            ResetDoc::BouncingBall { c } if n == 2 => ResetMap::bouncing_ball(c)?,
            ResetDoc::BouncingBall { .. } => return Err(cfg_err("bouncing_ball reset needs dim = 2")),
        };
        let mut edge = Edge::new(mode_id(&ed.source)?, mode_id(&ed.target)?, planes, reset);
        if !ed.guard_set.is_empty() {
            let cons = half_spaces(&ed.guard_set, n)?;
            let pred: Predicate = Arc::new(move |x: &Vector| {
                let slack = DOMAIN_TOL * (1.0 + x.norm());
                cons.iter().all(|(a, b)| a.dot(x) - b <= slack)
            });
            edge = edge.with_guard(pred);
        }
        edges.push(edge);
    }

    let x0_mode = mode_id(&doc.x0.mode)?;
    let x0 = QuotientPoint::new(x0_mode, &vector(&doc.x0.coords, n, "x0")?);
    let system = HybridSystem::new(n, modes, edges, input_set)?;
    let default_u = match &doc.control {
        None if m == 0 => ControlSignal::none(doc.horizon),
        None => return Err(cfg_err("a system with inputs needs a `control` value")),
        Some(u) => ControlSignal::constant(doc.horizon, vector(u, m, "control")?)?,
    };
    if let Some(eps) = doc.simulation.epsilon {
        if !(eps > 0.0) {
            return Err(Error::NonPositiveEpsilon(eps));
        }
    }
    let scenario = Scenario {
        name: doc.name,
        system,
        default_x0: x0,
        default_u,
        default_t: doc.horizon,
        oracles: Oracles::default(),
        expected_violations: Vec::new(),
        params: Default::default(),
    };
    Ok(LoadedScenario { scenario, simulation: doc.simulation })
}
