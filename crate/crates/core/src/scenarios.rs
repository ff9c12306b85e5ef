//! Built-in systems: transversal crossing (identity and affine reset),
//! attracting and repelling relays, the figure-8 system and the bouncing ball.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::charts::EdgeChart;
use crate::error::{Error, Result};
use crate::filippov::filippov_set;
use crate::model::{
    BoundingBox, ControlSignal, Domain, Edge, HybridSystem, HyperplaneData, InputSet, Matrix, Mode, ModeField,
    ModeId, Predicate, ResetMap, Vector,
};
use crate::sim::QuotientPoint;

const DOMAIN_TOL: f64 = 1e-9;

pub type TrajectoryOracle = Arc<dyn Fn(f64) -> Option<QuotientPoint> + Send + Sync>;

/// Closed-form references.
#[derive(Clone, Default)]
pub struct Oracles {
    pub trajectory: Option<TrajectoryOracle>,
    /// Surface crossings (or resets) in order.
    pub event_times: Vec<f64>,
    pub impact_speeds: Vec<f64>,
    pub accumulation_time: Option<f64>,
}

impl fmt::Debug for Oracles {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Oracles")
            .field("trajectory", &self.trajectory.is_some())
            .field("event_times", &self.event_times)
            .field("accumulation_time", &self.accumulation_time)
            .finish()
    }
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub system: HybridSystem,
    pub default_x0: QuotientPoint,
    pub default_u: ControlSignal,
    pub default_t: f64,
    pub oracles: Oracles,
    /// Validation checks this scenario is known to violate.
    pub expected_violations: Vec<String>,
    pub params: BTreeMap<String, f64>,
}

impl Scenario {
    /// Largest distance from the oracle's finite-difference derivative to
    /// the mode field (the Filippov set on a surface), over `samples` times away from events.
    pub fn oracle_residual(&self, samples: usize) -> Option<f64> {
        let oracle = self.oracles.trajectory.as_ref()?;
        let dt = 1e-5;
        let end = self.oracles.accumulation_time.unwrap_or(self.default_t).min(self.default_t);
        let mut worst: f64 = 0.0;
        for i in 1..samples {
            let t = end * i as f64 / samples as f64;
            if self.oracles.event_times.iter().any(|s| (s - t).abs() < 4.0 * dt) {
                continue;
            }
            let (Some(a), Some(m), Some(b)) = (oracle(t - dt), oracle(t), oracle(t + dt)) else { continue };
            if a.mode != m.mode || b.mode != m.mode {
                continue;
            }
            let deriv = (b.vector() - a.vector()) / (2.0 * dt);
            let u = self.default_u.eval_clamped(t);
            let x = m.vector();
            let f = self.system.modes[m.mode].field.eval(&x, &u);
            let mut err = (&deriv - &f).norm();
            for (k, e) in self.system.edges.iter().enumerate() {
                if e.source != m.mode || e.guard_value(&x).abs() > 1e-12 {
                    continue;
                }
                let chart = EdgeChart { system: &self.system, edge_index: k, edge: e };
                if let Ok(f2) = chart.pullback_field(&x, &u) {
                    err = err.min(filippov_set(&f, &f2, true).distance(&deriv));
                }
            }
            worst = worst.max(err / (1.0 + f.norm()));
        }
        Some(worst)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ScenarioInfo {
    pub name: &'static str,
    pub description: &'static str,
    pub params: BTreeMap<&'static str, f64>,
}

type Builder = fn(&BTreeMap<String, f64>) -> Result<Scenario>;

fn registry() -> Vec<(ScenarioInfo, Builder)> {
    let info = |name, description, params: &[(&'static str, f64)]| ScenarioInfo {
        name,
        description,
        params: params.iter().copied().collect(),
    };
    vec![
        (info("crossing_linear", "constant fields crossing x2 = 0 with identity reset", &[]), |_| {
            Ok(crossing_linear())
        }),
        (info("crossing_affine", "transversal crossing through a non-identity affine reset", &[]), |_| {
            Ok(crossing_affine())
        }),
        (info("sliding_relay", "relay with an attracting sliding segment", &[]), |_| Ok(sliding_relay())),
        (info("repelling_relay", "relay whose surface repels for x1 > 0", &[]), |_| Ok(repelling_relay())),
        (info("figure8", "two spiral modes glued by an affine reset", &[("reverse", 0.0)]), |p| {
            Ok(figure8(p.get("reverse").copied().unwrap_or(0.0) != 0.0))
        }),
        (
            info("bouncing_ball", "four-mode bouncing ball with restitution c", &[("c", 0.5), ("g", 9.81), ("h0", 1.0)]),
            |p| {
                let get = |k: &str, d: f64| p.get(k).copied().unwrap_or(d);
                bouncing_ball(get("c", 0.5), get("g", 9.81), get("h0", 1.0))
            },
        ),
        (info("equal_fields", "identical fields on both sides of the surface", &[]), |_| Ok(equal_fields())),
    ]
}

/// Names, descriptions and default parameters of the built-in scenarios.
pub fn list_scenarios() -> Vec<ScenarioInfo> {
    registry().into_iter().map(|(i, _)| i).collect()
}

/// Builds a scenario by name; unknown names or parameters are errors.
pub fn build_scenario(name: &str, params: &BTreeMap<String, f64>) -> Result<Scenario> {
    let (info, build) = registry()
        .into_iter()
        .find(|(i, _)| i.name == name)
        .ok_or_else(|| Error::Config(format!("unknown scenario `{name}`")))?;
    if let Some(k) = params.keys().find(|k| !info.params.contains_key(k.as_str())) {
        return Err(Error::Config(format!("scenario `{name}` has no parameter `{k}`")));
    }
    let mut s = build(params)?;
    for (k, v) in &info.params {
        s.params.insert((*k).to_string(), params.get(*k).copied().unwrap_or(*v));
    }
    Ok(s)
}

fn v(xs: &[f64]) -> Vector {
    Vector::from_row_slice(xs)
}

fn m2(xs: [f64; 4]) -> Matrix {
    Matrix::from_row_slice(2, 2, &xs)
}

fn half_plane(normal: [f64; 2], bounds: f64) -> Domain {
    Domain::half_spaces(vec![(v(&normal), 0.0)], BoundingBox::cube(2, bounds), DOMAIN_TOL)
}

fn mode(name: &str, domain: Domain, field: ModeField) -> Mode {
    Mode { name: name.into(), domain, field }
}

fn planes(g: [f64; 2], r: [f64; 2]) -> HyperplaneData {
    HyperplaneData::new(v(&g), 0.0, v(&r), 0.0).expect("unit normals")
}

fn pt(mode: ModeId, xs: [f64; 2]) -> QuotientPoint {
    QuotientPoint::new(mode, &v(&xs))
}

fn system(modes: Vec<Mode>, edges: Vec<Edge>) -> HybridSystem {
    HybridSystem::new(2, modes, edges, InputSet::Empty).expect("well-formed scenario")
}

fn scenario(name: &str, system: HybridSystem, x0: QuotientPoint, horizon: f64, oracles: Oracles) -> Scenario {
    Scenario {
        name: name.into(),
        system,
        default_x0: x0,
        default_u: ControlSignal::none(horizon),
        default_t: horizon,
        oracles,
        expected_violations: Vec::new(),
        params: BTreeMap::new(),
    }
}

/// Lower mode `x2 ≤ 0` and upper mode `x2 ≥ 0` glued by the identity.
fn relay(f1: ModeField, f2: ModeField, reverse: bool) -> HybridSystem {
    let modes = vec![
        mode("lower", half_plane([0.0, 1.0], 5.0), f1),
        mode("upper", half_plane([0.0, -1.0], 5.0), f2),
    ];
    let mut edges = vec![Edge::new(0, 1, planes([0.0, 1.0], [0.0, 1.0]), ResetMap::identity(2))];
    if reverse {
        edges.push(Edge::new(1, 0, planes([0.0, -1.0], [0.0, -1.0]), ResetMap::identity(2)));
    }
    system(modes, edges)
}

pub fn crossing_linear() -> Scenario {
    let h = relay(ModeField::constant(v(&[1.0, 1.0])), ModeField::constant(v(&[1.0, 2.0])), false);
    let oracle: TrajectoryOracle = Arc::new(|t| {
        Some(if t <= 1.0 { pt(0, [t, t - 1.0]) } else { pt(1, [t, 2.0 * (t - 1.0)]) })
    });
    let oracles = Oracles { trajectory: Some(oracle), event_times: vec![1.0], ..Default::default() };
    scenario("crossing_linear", h, pt(0, [0.0, -1.0]), 2.0, oracles)
}

pub fn equal_fields() -> Scenario {
    let f = || ModeField::constant(v(&[1.0, 1.0]));
    let h = relay(f(), f(), false);
    let oracle: TrajectoryOracle = Arc::new(|t| Some(if t <= 1.0 { pt(0, [t, t - 1.0]) } else { pt(1, [t, t - 1.0]) }));
    let oracles = Oracles { trajectory: Some(oracle), event_times: vec![1.0], ..Default::default() };
    scenario("equal_fields", h, pt(0, [0.0, -1.0]), 2.0, oracles)
}

/// Crossing `x2 = 0` into a mode whose image plane is `y1 = 0`, through
/// `R(x) = [[0, 1], [2, 0]] x + (0, 1)`.
pub fn crossing_affine() -> Scenario {
    let modes = vec![
        mode("lower", half_plane([0.0, 1.0], 5.0), ModeField::constant(v(&[0.5, 1.0]))),
        mode("right", half_plane([-1.0, 0.0], 5.0), ModeField::affine(m2([0.0, 0.0, 0.0, -1.0]), None, v(&[1.0, 0.0]))),
    ];
    let reset = ResetMap::affine(m2([0.0, 1.0, 2.0, 0.0]), v(&[0.0, 1.0])).expect("invertible");
    let edges = vec![Edge::new(0, 1, planes([0.0, 1.0], [1.0, 0.0]), reset)];
    let oracle: TrajectoryOracle = Arc::new(|t| {
        Some(if t <= 1.0 { pt(0, [0.5 * t, t - 1.0]) } else { pt(1, [t - 1.0, 2.0 * (1.0 - t).exp()]) })
    });
    let oracles = Oracles { trajectory: Some(oracle), event_times: vec![1.0], ..Default::default() };
    scenario("crossing_affine", system(modes, edges), pt(0, [0.0, -1.0]), 2.0, oracles)
}

pub fn sliding_relay() -> Scenario {
    let h = relay(ModeField::constant(v(&[1.0, 1.0])), ModeField::constant(v(&[1.0, -1.0])), false);
    let oracle: TrajectoryOracle = Arc::new(|t| Some(pt(0, [t, (t - 1.0).min(0.0)])));
    let oracles = Oracles { trajectory: Some(oracle), event_times: vec![1.0], ..Default::default() };
    scenario("sliding_relay", h, pt(0, [0.0, -1.0]), 3.0, oracles)
}

/// `f1 = (1, −1)`, `f2 = (1, x1)`: the surface repels where `x1 > 0`. The
/// default start in the upper mode crosses back down at `t = 2 − √3`.
pub fn repelling_relay() -> Scenario {
    let f2 = ModeField::affine(m2([0.0, 0.0, 1.0, 0.0]), None, v(&[1.0, 0.0]));
    let h = relay(ModeField::constant(v(&[1.0, -1.0])), f2, true);
    let hit = 2.0 - 3f64.sqrt();
    let oracle: TrajectoryOracle = Arc::new(move |t| {
        Some(if t <= hit {
            pt(1, [t - 2.0, 0.5 - 2.0 * t + 0.5 * t * t])
        } else {
            pt(0, [t - 2.0, hit - t])
        })
    });
    let oracles = Oracles { trajectory: Some(oracle), event_times: vec![hit], ..Default::default() };
    let mut s = scenario("repelling_relay", h, pt(1, [-2.0, 0.5]), 2.0, oracles);
    s.expected_violations = vec!["disjoint_surfaces".into()];
    s
}

const F8_A: [f64; 2] = [0.1, 0.2];
const F8_W: [f64; 2] = [1.0, 2.0];

fn spiral(a: f64, w: f64) -> Matrix {
    m2([-a, -w, w, -a])
}

fn spiral_flow(a: f64, w: f64, z: [f64; 2], s: f64) -> [f64; 2] {
    let (c, sn) = ((w * s).cos(), (w * s).sin());
    let k = (-a * s).exp();
    [k * (c * z[0] - sn * z[1]), k * (sn * z[0] + c * z[1])]
}

/// Two spiral modes. Mode `lower` (`x2 ≤ 0`) follows `B1 x`; mode `upper`
/// (`y2 ≥ 0`) follows the second spiral centred at `y = (1, 0)` and
/// stretched by 2 along `y1`. The reset `(2 x1 + 1, x2 / 2)` glues the guard
/// `x2 = 0` to `y2 = 0`; `reverse` adds the redundant inverse edge.
pub fn figure8(reverse: bool) -> Scenario {
    let d = m2([2.0, 0.0, 0.0, 1.0]);
    let shrink = m2([0.5, 0.0, 0.0, 1.0]);
    let b2 = spiral(F8_A[1], F8_W[1]);
    let a2 = &d * &b2 * &shrink;
    let off = -(&d * &b2 * v(&[0.5, 0.0]));
    let modes = vec![
        mode("lower", half_plane([0.0, 1.0], 3.0), ModeField::affine(spiral(F8_A[0], F8_W[0]), None, v(&[0.0, 0.0]))),
        mode("upper", half_plane([0.0, -1.0], 3.0), ModeField::affine(a2, None, off)),
    ];
    let fwd = ResetMap::affine(m2([2.0, 0.0, 0.0, 0.5]), v(&[1.0, 0.0])).expect("invertible");
    let mut edges = vec![Edge::new(0, 1, planes([0.0, 1.0], [0.0, 1.0]), fwd)];
    if reverse {
        let back = ResetMap::affine(m2([0.5, 0.0, 0.0, 2.0]), v(&[-0.5, 0.0])).expect("invertible");
        edges.push(Edge::new(1, 0, planes([0.0, -1.0], [0.0, -1.0]), back));
    }
    let horizon = 10.0;
    // Phases alternate between the modes, each a half turn after the first quarter.
    let mut phases: Vec<(f64, ModeId, [f64; 2], f64)> = Vec::new();
    let (mut t, mut z, mut m) = (0.0, [0.0, -1.0], 0usize);
    let mut dur = 0.5 * PI / F8_W[0];
    while t < horizon + 10.0 {
        phases.push((t, m, z, dur));
        z = spiral_flow(F8_A[m], F8_W[m], z, dur);
        z[1] = 0.0;
        t += dur;
        m = 1 - m;
        dur = PI / F8_W[m];
    }
    let event_times: Vec<f64> = phases.iter().skip(1).map(|p| p.0).filter(|s| *s <= horizon).collect();
    let oracle: TrajectoryOracle = Arc::new(move |t| {
        let k = phases.partition_point(|p| p.0 < t).max(1) - 1;
        let (t0, m, z0, _) = phases[k];
        let z = spiral_flow(F8_A[m], F8_W[m], z0, t - t0);
        Some(if m == 0 { pt(0, z) } else { pt(1, [2.0 * z[0] + 1.0, z[1]]) })
    });
    let oracles = Oracles { trajectory: Some(oracle), event_times, ..Default::default() };
    let mut s = scenario("figure8", system(modes, edges), pt(0, [0.0, -1.0]), horizon, oracles);
    if reverse {
        s.expected_violations = vec!["disjoint_surfaces".into()];
    }
    s
}

/// Four-mode bouncing ball started at rest from height `h0`.
pub fn bouncing_ball(c: f64, g: f64, h0: f64) -> Result<Scenario> {
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::Config(format!("restitution c must lie in (0, 1], got {c}")));
    }
    if !(g > 0.0) || !(h0 > 0.0) || !g.is_finite() || !h0.is_finite() {
        return Err(Error::Config(format!("g and h0 must be positive, got g = {g}, h0 = {h0}")));
    }
    let reach = 2.0 * h0.max(1.0) + (2.0 * g * h0).sqrt();
    let bounds = BoundingBox::new(v(&[0.0, -reach]), v(&[reach, reach]));
    let up = || {
        Domain::half_spaces(vec![(v(&[-1.0, 0.0]), 0.0), (v(&[0.0, -1.0]), 0.0)], bounds.clone(), DOMAIN_TOL)
    };
    let down = || {
        Domain::half_spaces(vec![(v(&[-1.0, 0.0]), 0.0), (v(&[0.0, 1.0]), 0.0)], bounds.clone(), DOMAIN_TOL)
    };
    let modes = vec![
        mode("rise_a", up(), ModeField::gravity(g)),
        mode("fall_a", down(), ModeField::gravity(g)),
        mode("rise_b", up(), ModeField::gravity(g)),
        mode("fall_b", down(), ModeField::gravity(g)),
    ];
    let apex_set: Predicate = Arc::new(|x: &Vector| x[0] >= -DOMAIN_TOL * (1.0 + x.norm()));
    let ground_set: Predicate = Arc::new(|x: &Vector| x[1] <= DOMAIN_TOL * (1.0 + x.norm()));
    let apex = |s, t| {
        Edge::new(s, t, planes([0.0, -1.0], [0.0, -1.0]), ResetMap::identity(2)).with_guard(apex_set.clone())
    };
    let ground = |s, t| -> Result<Edge> {
        Ok(Edge::new(s, t, planes([-1.0, 0.0], [1.0, 0.0]), ResetMap::bouncing_ball(c)?).with_guard(ground_set.clone()))
    };
    let edges = vec![apex(0, 1), ground(1, 2)?, apex(2, 3), ground(3, 0)?];

    let v0 = (2.0 * g * h0).sqrt();
    let fall = (2.0 * h0 / g).sqrt();
    let horizon = if c < 1.0 { 2.0 * fall * (1.0 + 2.0 * c / (1.0 - c)) } else { 4.0 * fall };
    let accumulation = (c < 1.0).then(|| fall * (1.0 + 2.0 * c / (1.0 - c)));
    let mut impacts = Vec::new();
    let mut speeds = Vec::new();
    let (mut t, mut speed) = (fall, v0);
    while t <= horizon && speed > 1e-12 * v0 && impacts.len() < 400 {
        impacts.push(t);
        speeds.push(speed);
        speed *= c;
        t += 2.0 * speed / g;
    }
    let mut event_times = vec![0.0];
    for (k, ti) in impacts.iter().enumerate() {
        event_times.push(*ti);
        event_times.push(ti + c * speeds[k] / g);
    }
    let (imp, spd) = (impacts.clone(), speeds.clone());
    let oracle: TrajectoryOracle = Arc::new(move |t| {
        if accumulation.is_some_and(|a| t >= a) {
            return None;
        }
        let k = imp.partition_point(|s| *s <= t);
        if k == 0 {
            return Some(pt(1, [h0 - 0.5 * g * t * t, -g * t]));
        }
        if k > imp.len() - 1 && imp.len() >= 400 {
            return None;
        }
        let s = t - imp[k - 1];
        let w = c * spd[k - 1];
        let x = [w * s - 0.5 * g * s * s, w - g * s];
        let rising = x[1] > 0.0 || (x[1] == 0.0 && s == 0.0);
        let even = (k - 1) % 2 == 0;
        let mode = match (even, rising) {
            (true, true) => 2,
            (true, false) => 3,
            (false, true) => 0,
            (false, false) => 1,
        };
        Some(pt(mode, x))
    });
    let oracles = Oracles {
        trajectory: Some(oracle),
        event_times,
        impact_speeds: speeds,
        accumulation_time: accumulation,
    };
    let mut s = scenario("bouncing_ball", system(modes, edges), pt(0, [h0, 0.0]), horizon, oracles);
    s.expected_violations = vec!["disjoint_surfaces".into()];
    Ok(s)
}

/// Every scenario at its default parameters, figure-8 in both variants.
pub fn all_scenarios() -> Vec<Scenario> {
    let mut out = vec![
        crossing_linear(),
        crossing_affine(),
        sliding_relay(),
        repelling_relay(),
        figure8(false),
        figure8(true),
        bouncing_ball(0.5, 9.81, 1.0).expect("default parameters"),
        equal_fields(),
    ];
    out[5].params.insert("reverse".into(), 1.0);
    out
}
