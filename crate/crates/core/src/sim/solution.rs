use crate::charts::EdgeChart;
use crate::error::{Error, Result};
use crate::filippov::{classify_rates, CellKind, MIN_DENOMINATOR};
use crate::integrate::{integrate_until, DensePath, Direction, EventSpec, Stats};
use crate::model::{ControlSignal, HybridSystem, ModeId, Vector};

use super::{
    check_inputs, corner_pin, initial_chart, mode_surfaces, next_stop, on_surface, BranchPolicy, EventKind,
    QuotientPoint, Rep, SimConfig, Surface, Trajectory,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Side {
    Source,
    Target,
    Sliding,
}

#[derive(Clone, Copy, Debug)]
enum Place {
    Bare(ModeId),
    Edge(usize, Side),
}

#[derive(Clone, Copy, Debug)]
enum Trigger {
    Surface,
    SlideToSource,
    SlideToTarget,
    Exit(Surface),
}

struct Engine<'a> {
    h: &'a HybridSystem,
    u: &'a ControlSignal,
    cfg: &'a SimConfig,
    horizon: f64,
    traj: Trajectory,
    t: f64,
    x: Vector,
    place: Place,
    pinned: bool,
}

/// Hybrid Filippov solution on the quotient space, integrated chart by chart.
pub fn simulate_filippov(
    h: &HybridSystem,
    x0: &QuotientPoint,
    u: &ControlSignal,
    horizon: f64,
    cfg: &SimConfig,
) -> Result<Trajectory> {
    let y = check_inputs(h, x0, u, horizon)?;
    let mut eng = Engine {
        h,
        u,
        cfg,
        horizon,
        traj: Trajectory::new("filippov", horizon, None),
        t: 0.0,
        x: y.clone(),
        place: Place::Bare(x0.mode),
        pinned: false,
    };
    match initial_chart(h, x0.mode, &y) {
        None => {}
        Some((k, true)) => {
            eng.place = Place::Edge(k, Side::Source);
            if on_surface(h.edges[k].guard_value(&y), &y) {
                eng.arrive(k, y, Side::Source)?;
            }
        }
        Some((k, false)) => {
            let chart = eng.chart(k);
            let x = chart.attach_inverse(&y);
            eng.x = x.clone();
            eng.place = Place::Edge(k, Side::Target);
            if on_surface(h.edges[k].image_value(&y), &y) {
                eng.arrive(k, x, Side::Target)?;
            }
        }
    }
    while eng.t < horizon && !eng.pinned {
        if eng.traj.events.len() >= cfg.event_budget {
            return Err(Error::EventBudget(cfg.event_budget));
        }
        eng.advance()?;
    }
    Ok(eng.traj)
}

impl<'a> Engine<'a> {
    fn chart(&self, k: usize) -> EdgeChart<'a> {
        EdgeChart { system: self.h, edge_index: k, edge: &self.h.edges[k] }
    }

    fn advance(&mut self) -> Result<()> {
        let (h, u) = (self.h, self.u);
        let stop = next_stop(u, self.t, self.horizon);
        let (k, side) = match self.place {
            Place::Bare(m) => {
                let field = &h.modes[m].field;
                let mut rhs = |s: f64, z: &Vector| Ok(field.eval(z, &u.eval_clamped(s)));
                let out = integrate_until(&mut rhs, self.t, &self.x, stop, &self.cfg.integrator, &[])?;
                self.check_domain(&out.path, |z| (m, z.clone()))?;
                self.t = out.path.t_end().unwrap_or(stop);
                self.x = out.path.final_state().cloned().unwrap_or_else(|| self.x.clone());
                self.traj.push_segment(h, Rep::Mode(m), out.path, &out.stats);
                return Ok(());
            }
            Place::Edge(k, side) => (k, side),
        };
        let chart = self.chart(k);
        let grad = chart.edge.planes.g_normal.clone();
        let mut triggers = Vec::new();
        let mut events: Vec<EventSpec<'_>> = Vec::new();
        match side {
            Side::Source => {
                triggers.push(Trigger::Surface);
                events.push(EventSpec::new(Direction::Rising, move |_, z: &Vector| chart.guard_value(z)));
            }
            Side::Target => {
                triggers.push(Trigger::Surface);
                events.push(EventSpec::new(Direction::Falling, move |_, z: &Vector| chart.guard_value(z)));
            }
            Side::Sliding => {
                let g1 = grad.clone();
                triggers.push(Trigger::SlideToSource);
                events.push(EventSpec::new(Direction::Falling, move |s, z: &Vector| {
                    g1.dot(&chart.source_field(z, &u.eval_clamped(s)))
                }));
                let g2 = grad.clone();
                triggers.push(Trigger::SlideToTarget);
                events.push(EventSpec::new(Direction::Rising, move |s, z: &Vector| {
                    chart.pullback_field(z, &u.eval_clamped(s)).map_or(0.0, |f| g2.dot(&f))
                }));
            }
        }
        let (exit_mode, own_plane) = match side {
            Side::Target => (chart.target(), chart.edge.image_plane()),
            _ => (chart.source(), chart.edge.guard_plane()),
        };
        for s in mode_surfaces(h, exit_mode, Some(&own_plane)) {
            triggers.push(Trigger::Exit(s));
            if side == Side::Target {
                events.push(EventSpec::new(Direction::Rising, move |_, z: &Vector| s.value(h, &chart.attach(z))));
            } else {
                events.push(EventSpec::new(Direction::Rising, move |_, z: &Vector| s.value(h, z)));
            }
        }

        let mut rhs = |s: f64, z: &Vector| -> Result<Vector> {
            let uu = u.eval_clamped(s);
            match side {
                Side::Source => Ok(chart.source_field(z, &uu)),
                Side::Target => chart.pullback_field(z, &uu),
                Side::Sliding => {
                    let f1 = chart.source_field(z, &uu);
                    let f2 = chart.pullback_field(z, &uu)?;
                    let (r1, r2) = (grad.dot(&f1), grad.dot(&f2));
                    let den = r1 - r2;
                    if den.abs() < MIN_DENOMINATOR {
                        return Err(Error::DivisionDegenerate(den.abs()));
                    }
                    let alpha = (r1 / den).clamp(0.0, 1.0);
                    Ok(f1 * (1.0 - alpha) + f2 * alpha)
                }
            }
        };
        let out = integrate_until(&mut rhs, self.t, &self.x, stop, &self.cfg.integrator, &events)?;
        drop(events);
        self.check_domain(&out.path, |z| match side {
            Side::Target => (chart.target(), chart.attach(z)),
            _ => (chart.source(), z.clone()),
        })?;
        let end = out.path.final_state().cloned().unwrap_or_else(|| self.x.clone());
        let t_end = out.path.t_end().unwrap_or(stop);
        self.traj.push_segment(h, Rep::Chart(k), out.path, &out.stats);

        let Some(hit) = out.hit else {
            self.t = t_end;
            self.x = end;
            return Ok(());
        };
        self.t = hit.t;
        match triggers[hit.index] {
            Trigger::Surface => self.arrive(k, hit.x, side),
            Trigger::SlideToSource | Trigger::SlideToTarget => {
                let p = chart.project(&hit.x);
                self.traj.push_event(self.t, EventKind::SlideEnd, Some(k), Some(QuotientPoint::new(chart.source(), &p)));
                let next = if matches!(triggers[hit.index], Trigger::SlideToSource) { Side::Source } else { Side::Target };
                self.x = p;
                self.place = Place::Edge(k, next);
                Ok(())
            }
            Trigger::Exit(s) => {
                let (m, y) = match side {
                    Side::Target => (chart.target(), chart.attach(&hit.x)),
                    _ => (chart.source(), hit.x.clone()),
                };
                if self.try_pin(m, &y) {
                    return Ok(());
                }
                if !s.admits(h, &y) {
                    return Err(Error::LeftAllDomains { t: self.t, mode: m });
                }
                self.traj.push_event(self.t, EventKind::ChartSwitch, Some(s.edge()), Some(QuotientPoint::new(m, &y)));
                match s {
                    Surface::Guard(k2) => {
                        self.place = Place::Edge(k2, Side::Source);
                        self.arrive(k2, y, Side::Source)
                    }
                    Surface::Image(k2) => {
                        let x2 = self.chart(k2).attach_inverse(&y);
                        self.place = Place::Edge(k2, Side::Target);
                        self.arrive(k2, x2, Side::Target)
                    }
                }
            }
        }
    }

    /// Handles arrival at the surface of edge `k` from side `from`.
    fn arrive(&mut self, k: usize, x: Vector, from: Side) -> Result<()> {
        let chart = self.chart(k);
        let p = chart.project(&x);
        let src = chart.source();
        if !chart.edge.in_guard_set(&p) {
            let mode = if from == Side::Target { chart.target() } else { src };
            return Err(Error::LeftAllDomains { t: self.t, mode });
        }
        if self.try_pin(src, &p) {
            return Ok(());
        }
        let uu = self.u.eval_clamped(self.t);
        let f1 = chart.source_field(&p, &uu);
        let f2 = chart.pullback_field(&p, &uu)?;
        let cell = classify_rates(&f1, &f2, &chart.edge.planes.g_normal);
        let (r1, r2) = cell.normal_rates;
        let here = Some(QuotientPoint::new(src, &p));
        let next = match cell.kind {
            CellKind::CrossingForward => Side::Target,
            CellKind::CrossingBackward => Side::Source,
            CellKind::AttractingSliding => {
                self.traj.push_event(self.t, EventKind::SlideStart, Some(k), here.clone());
                Side::Sliding
            }
            CellKind::RepellingSliding => match self.cfg.branch_policy {
                BranchPolicy::Fail => return Err(Error::NonUniqueContinuation { t: self.t, edge: k }),
                BranchPolicy::PreferSource => Side::Source,
                BranchPolicy::PreferTarget => Side::Target,
            },
            CellKind::TangentDegenerate | CellKind::Interior => {
                return Err(Error::TangentDegenerate { t: self.t, edge: k, rate_source: r1, rate_target: r2 })
            }
        };
        if next != Side::Sliding && next != from {
            self.traj.push_event(self.t, EventKind::Crossing, Some(k), here);
        }
        self.x = p;
        self.place = Place::Edge(k, next);
        Ok(())
    }

    /// Pins the state at a corner of the quotient space for the rest of the horizon.
    fn try_pin(&mut self, m: ModeId, y: &Vector) -> bool {
        let uu = self.u.eval_clamped(self.t);
        let Some(p) = corner_pin(self.h, m, y, &uu, self.cfg.corner_tol) else { return false };
        let path = DensePath::constant(self.t, self.horizon.max(self.t), p);
        self.traj.push_segment(self.h, Rep::Mode(m), path, &Stats::default());
        self.traj.meta.pinned_at = Some(self.t);
        self.pinned = true;
        true
    }

    fn check_domain(&self, path: &DensePath, rep: impl Fn(&Vector) -> (ModeId, Vector)) -> Result<()> {
        if let Place::Edge(k, Side::Sliding) = self.place {
            let chart = self.chart(k);
            for (s, z) in path.nodes() {
                if !chart.edge.in_guard_set(&chart.project(&z)) {
                    return Err(Error::LeftAllDomains { t: s, mode: chart.source() });
                }
            }
            return Ok(());
        }
        for (s, z) in path.nodes() {
            let (m, y) = rep(&z);
            if !self.h.modes[m].domain.contains(&y) {
                return Err(Error::LeftAllDomains { t: s, mode: m });
            }
        }
        Ok(())
    }
}
