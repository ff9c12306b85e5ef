//! Trajectory engines: executions with explicit resets, hybrid Filippov
//! solutions on the quotient space, and ε-relaxed solutions.

mod distance;
mod execution;
mod relaxed;
mod solution;

use serde::{Deserialize, Serialize};

use crate::charts::{build_relaxed_chart, surface_band, EdgeChart};
use crate::error::{Error, Result};
use crate::filippov::zero_rate_tol;
use crate::integrate::{DensePath, IntegratorConfig, Stats};
use crate::model::{ControlSignal, HybridSystem, ModeId, Plane, Vector};
use crate::relaxation::TransitionKind;

pub use distance::quotient_distance;
pub use execution::simulate_execution;
pub use relaxed::simulate_relaxed;
pub use solution::simulate_filippov;

/// A point of the quotient space, stored by a canonical representative.
/// Strip points of a relaxed space carry `(edge, depth)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuotientPoint {
    pub mode: ModeId,
    pub coords: Vec<f64>,
    pub epsilon_layer: Option<(usize, f64)>,
}

impl QuotientPoint {
    pub fn new(mode: ModeId, coords: &Vector) -> Self {
        Self { mode, coords: coords.iter().copied().collect(), epsilon_layer: None }
    }

    pub fn vector(&self) -> Vector {
        Vector::from_row_slice(&self.coords)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Crossing,
    ResetJump,
    SlideStart,
    SlideEnd,
    ZenoTruncation,
    ChartSwitch,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Crossing => "crossing",
            EventKind::ResetJump => "reset_jump",
            EventKind::SlideStart => "slide_start",
            EventKind::SlideEnd => "slide_end",
            EventKind::ZenoTruncation => "zeno_truncation",
            EventKind::ChartSwitch => "chart_switch",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    pub edge: Option<usize>,
    /// State just before the event.
    pub point: Option<QuotientPoint>,
}

/// What to do when a trajectory reaches a repelling sliding region.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BranchPolicy {
    #[default]
    Fail,
    PreferSource,
    PreferTarget,
}

impl BranchPolicy {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "fail" => Some(Self::Fail),
            "prefer-f1" | "prefer-source" => Some(Self::PreferSource),
            "prefer-f2" | "prefer-target" => Some(Self::PreferTarget),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub integrator: IntegratorConfig,
    pub branch_policy: BranchPolicy,
    /// Zeno detection: this many events inside `zeno_fraction · T`.
    pub zeno_window: usize,
    pub zeno_fraction: f64,
    pub corner_tol: f64,
    pub event_budget: usize,
    pub transition: TransitionKind,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            integrator: IntegratorConfig::default(),
            branch_policy: BranchPolicy::Fail,
            zeno_window: 20,
            zeno_fraction: 1e-6,
            corner_tol: 1e-8,
            event_budget: 100_000,
            transition: TransitionKind::SmoothExp,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub engine: String,
    pub horizon: f64,
    pub epsilon: Option<f64>,
    /// Time at which the state was pinned at a corner of the quotient space.
    pub pinned_at: Option<f64>,
    pub zeno_accumulation: Option<f64>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub field_evaluations: usize,
}

/// How segment coordinates map to the quotient space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Rep {
    Mode(ModeId),
    Chart(usize),
    Relaxed(usize, f64),
}

#[derive(Clone, Debug)]
pub(crate) struct Segment {
    pub rep: Rep,
    pub path: DensePath,
}

/// A simulated trajectory: accepted-step samples, events and dense segments.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<QuotientPoint>,
    pub events: Vec<Event>,
    pub meta: TrajectoryMeta,
    segments: Vec<Segment>,
}

impl Trajectory {
    pub(crate) fn new(engine: &str, horizon: f64, epsilon: Option<f64>) -> Self {
        Self {
            times: Vec::new(),
            points: Vec::new(),
            events: Vec::new(),
            meta: TrajectoryMeta { engine: engine.into(), horizon, epsilon, ..Default::default() },
            segments: Vec::new(),
        }
    }

    pub fn horizon(&self) -> f64 {
        self.meta.horizon
    }

    /// End of the simulated interval.
    pub fn t_end(&self) -> f64 {
        self.segments.last().and_then(|s| s.path.t_end()).unwrap_or(0.0)
    }

    pub fn final_point(&self) -> Option<&QuotientPoint> {
        self.points.last()
    }

    /// Events of one kind.
    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    pub(crate) fn push_segment(&mut self, h: &HybridSystem, rep: Rep, path: DensePath, stats: &Stats) {
        if path.is_empty() {
            return;
        }
        for (t, x) in path.nodes() {
            self.times.push(t);
            self.points.push(to_quotient(h, rep, &x));
        }
        self.meta.accepted_steps += stats.accepted;
        self.meta.rejected_steps += stats.rejected;
        self.meta.field_evaluations += stats.evaluations;
        self.segments.push(Segment { rep, path });
    }

    pub(crate) fn push_event(&mut self, time: f64, kind: EventKind, edge: Option<usize>, point: Option<QuotientPoint>) {
        self.events.push(Event { time, kind, edge, point });
    }

    /// State at time `t`; at jump times the post-event state.
    pub fn sample(&self, h: &HybridSystem, t: f64) -> Option<QuotientPoint> {
        let k = self
            .segments
            .partition_point(|s| s.path.t_start().is_some_and(|t0| t0 <= t));
        let seg = self.segments.get(k.checked_sub(1)?)?;
        if t > seg.path.t_end()? + 1e-12 * (1.0 + t.abs()) {
            return None;
        }
        Some(to_quotient(h, seg.rep, &seg.path.eval(t)?))
    }
}

pub(crate) fn to_quotient(h: &HybridSystem, rep: Rep, x: &Vector) -> QuotientPoint {
    match rep {
        Rep::Mode(m) => QuotientPoint::new(m, x),
        Rep::Chart(e) => {
            let (m, y) = EdgeChart { system: h, edge_index: e, edge: &h.edges[e] }.global_rep(x);
            QuotientPoint::new(m, &y)
        }
        Rep::Relaxed(e, eps) => {
            let chart = build_relaxed_chart(h, e, eps).expect("validated epsilon");
            let (m, y, depth) = chart.global_rep(x);
            QuotientPoint { epsilon_layer: depth.map(|d| (e, d)), ..QuotientPoint::new(m, &y) }
        }
    }
}

/// A surface bounding mode `m`: the guard of an outgoing edge or the image
/// plane of an incoming one.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Surface {
    Guard(usize),
    Image(usize),
}

impl Surface {
    pub fn edge(self) -> usize {
        match self {
            Surface::Guard(k) | Surface::Image(k) => k,
        }
    }

    pub fn plane(self, h: &HybridSystem) -> Plane {
        match self {
            Surface::Guard(k) => h.edges[k].guard_plane(),
            Surface::Image(k) => h.edges[k].image_plane(),
        }
    }

    /// Negative inside the mode, rising through zero when leaving.
    pub fn value(self, h: &HybridSystem, y: &Vector) -> f64 {
        match self {
            Surface::Guard(k) => h.edges[k].guard_value(y),
            Surface::Image(k) => -h.edges[k].image_value(y),
        }
    }

    /// Whether the surface point nearest `y` belongs to the guard or image set.
    pub fn admits(self, h: &HybridSystem, y: &Vector) -> bool {
        let e = &h.edges[self.edge()];
        match self {
            Surface::Guard(_) => e.in_guard_set(&crate::charts::project_guard(e, y)),
            Surface::Image(_) => {
                let p = y - &e.planes.r_normal * e.image_value(y);
                e.in_image_set(&p)
            }
        }
    }
}

/// Bounding surfaces of mode `m` in declaration order, minus those
/// coinciding with `exclude`.
pub(crate) fn mode_surfaces(h: &HybridSystem, m: ModeId, exclude: Option<&Plane>) -> Vec<Surface> {
    let mut out: Vec<Surface> = Vec::new();
    let candidates = h
        .outgoing(m)
        .map(Surface::Guard)
        .chain(h.incoming(m).map(Surface::Image));
    for s in candidates {
        let p = s.plane(h);
        if exclude.is_some_and(|x| x.coincides(&p, 1e-12)) {
            continue;
        }
        if out.iter().any(|o| o.plane(h).coincides(&p, 1e-12)) {
            continue;
        }
        out.push(s);
    }
    out
}

/// Chart chosen for a starting representative: the incident surface with
/// the smallest distance, ties broken by edge order.
pub(crate) fn initial_chart(h: &HybridSystem, m: ModeId, y: &Vector) -> Option<(usize, bool)> {
    let mut best: Option<(f64, usize, bool)> = None;
    for (k, e) in h.edges.iter().enumerate() {
        let mut cands = Vec::new();
        if e.source == m {
            cands.push((e.guard_value(y).abs(), true));
        }
        if e.target == m {
            cands.push((e.image_value(y).abs(), false));
        }
        for (d, src) in cands {
            if best.is_none_or(|(b, _, _)| d < b) {
                best = Some((d, k, src));
            }
        }
    }
    best.map(|(_, k, src)| (k, src))
}

/// Time limits of integration pieces so that control breakpoints are never
/// stepped over.
pub(crate) fn next_stop(u: &ControlSignal, t: f64, horizon: f64) -> f64 {
    u.next_breakpoint_after(t).map_or(horizon, |b| b.min(horizon))
}

pub(crate) fn check_inputs(h: &HybridSystem, x0: &QuotientPoint, u: &ControlSignal, horizon: f64) -> Result<Vector> {
    h.mode(x0.mode)?;
    if x0.coords.len() != h.dim {
        return Err(Error::DimensionMismatch { expected: h.dim, got: x0.coords.len() });
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::Config(format!("horizon must be positive, got {horizon}")));
    }
    if horizon > u.horizon() * (1.0 + 1e-12) {
        return Err(Error::OutsideHorizon { t: horizon, horizon: u.horizon() });
    }
    if u.dim() != h.input_dim() {
        return Err(Error::DimensionMismatch { expected: h.input_dim(), got: u.dim() });
    }
    let y = x0.vector();
    if !h.modes[x0.mode].domain.contains(&y) {
        return Err(Error::LeftAllDomains { t: 0.0, mode: x0.mode });
    }
    Ok(y)
}

/// Whether `y` in mode `m` lies within `tol` of the intersection of two
/// bounding surfaces, with every edge adjacent to that corner non-repelling.
/// Returns the projected corner point.
pub(crate) fn corner_pin(h: &HybridSystem, m: ModeId, y: &Vector, u: &Vector, tol: f64) -> Option<Vector> {
    let surfaces = mode_surfaces(h, m, None);
    for (i, a) in surfaces.iter().enumerate() {
        for b in &surfaces[i + 1..] {
            let (pa, pb) = (a.plane(h), b.plane(h));
            let c = pa.normal.dot(&pb.normal);
            if 1.0 - c.abs() < 1e-12 {
                continue;
            }
            let (va, vb) = (pa.value(y), pb.value(y));
            let det = 1.0 - c * c;
            let la = (va - c * vb) / det;
            let lb = (vb - c * va) / det;
            let p = y - &pa.normal * la - &pb.normal * lb;
            if (y - &p).norm() > tol {
                continue;
            }
            if [*a, *b].iter().all(|s| edge_non_repelling(h, s.edge(), m, &p, u)) {
                return Some(p);
            }
        }
    }
    None
}

fn edge_non_repelling(h: &HybridSystem, k: usize, m: ModeId, p: &Vector, u: &Vector) -> bool {
    let chart = EdgeChart { system: h, edge_index: k, edge: &h.edges[k] };
    let Some(x) = chart.from_global(m, p) else { return false };
    let f1 = chart.source_field(&x, u);
    let Ok(f2) = chart.pullback_field(&x, u) else { return false };
    let grad = &chart.edge.planes.g_normal;
    let tol = zero_rate_tol(&f1, &f2, grad);
    grad.dot(&f1) >= -tol && grad.dot(&f2) >= -tol
}

/// Slack used when deciding that a representative sits on a surface.
pub(crate) fn on_surface(value: f64, x: &Vector) -> bool {
    value.abs() <= surface_band(x)
}
