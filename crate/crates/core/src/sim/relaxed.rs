use crate::charts::{build_relaxed_chart, RelaxedEdgeChart};
use crate::error::{Error, Result};
use crate::integrate::{integrate_until, Direction, EventSpec};
use crate::model::{ControlSignal, HybridSystem, ModeId, Vector};
use crate::relaxation::{make_transition, relaxed_local_field_unchecked, TransitionVariant};

use super::{
    check_inputs, initial_chart, mode_surfaces, next_stop, on_surface, EventKind, QuotientPoint, Rep, SimConfig,
    Surface, Trajectory,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Region {
    Below,
    Strip,
    Above,
}

#[derive(Clone, Copy, Debug)]
enum Place {
    Bare(ModeId),
    Edge(usize, Region),
}

#[derive(Clone, Copy, Debug)]
enum Trigger {
    Region(Region),
    Exit(Surface),
    Overlap,
}

/// Solution of the ε-relaxed system: in each chart the hybrid blend of the
/// source field and the shifted pullback across the strip `0 ≤ g ≤ ε`.
pub fn simulate_relaxed(
    h: &HybridSystem,
    x0: &QuotientPoint,
    u: &ControlSignal,
    horizon: f64,
    epsilon: f64,
    cfg: &SimConfig,
) -> Result<Trajectory> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::NonPositiveEpsilon(epsilon));
    }
    if x0.epsilon_layer.is_some() {
        return Err(Error::Config("the initial state must lie off the relaxation strips".into()));
    }
    let y = check_inputs(h, x0, u, horizon)?;
    let phi = make_transition(cfg.transition, TransitionVariant::Hybrid);
    let mut traj = Trajectory::new("relaxed", horizon, Some(epsilon));
    let uu = u.eval_clamped(0.0);
    let (mut place, mut x) = match initial_chart(h, x0.mode, &y) {
        None => (Place::Bare(x0.mode), y.clone()),
        Some((k, true)) => {
            let chart = build_relaxed_chart(h, k, epsilon)?;
            let inward = chart.edge().planes.g_normal.dot(&chart.base.source_field(&y, &uu)) > 0.0;
            let region = if on_surface(chart.guard_value(&y), &y) && inward { Region::Strip } else { Region::Below };
            (Place::Edge(k, region), y.clone())
        }
        Some((k, false)) => {
            let chart = build_relaxed_chart(h, k, epsilon)?;
            let x = chart.attach_inverse(&y);
            let inward = chart.edge().planes.g_normal.dot(&chart.pullback_field(&x, &uu)?) < 0.0;
            let region = if on_surface(chart.edge().image_value(&y), &y) && inward { Region::Strip } else { Region::Above };
            (Place::Edge(k, region), x)
        }
    };
    let mut t = 0.0;
    while t < horizon {
        if traj.events.len() >= cfg.event_budget {
            return Err(Error::EventBudget(cfg.event_budget));
        }
        let stop = next_stop(u, t, horizon);
        let (k, region) = match place {
            Place::Bare(m) => {
                let field = &h.modes[m].field;
                let mut rhs = |s: f64, z: &Vector| Ok(field.eval(z, &u.eval_clamped(s)));
                let out = integrate_until(&mut rhs, t, &x, stop, &cfg.integrator, &[])?;
                if let Some((s, _)) = out.path.nodes().into_iter().find(|(_, z)| !h.modes[m].domain.contains(z)) {
                    return Err(Error::LeftAllDomains { t: s, mode: m });
                }
                t = out.path.t_end().unwrap_or(stop);
                x = out.path.final_state().cloned().unwrap_or(x);
                traj.push_segment(h, Rep::Mode(m), out.path, &out.stats);
                continue;
            }
            Place::Edge(k, r) => (k, r),
        };
        let chart = build_relaxed_chart(h, k, epsilon)?;
        let (triggers, events) = region_events(h, chart, region);
        let integ = if region == Region::Strip {
            cfg.integrator.with_max_step(epsilon / 4.0)
        } else {
            cfg.integrator.clone()
        };
        let mut rhs = |s: f64, z: &Vector| relaxed_local_field_unchecked(&chart, &phi, z, &u.eval_clamped(s));
        let out = integrate_until(&mut rhs, t, &x, stop, &integ, &events)?;
        drop(events);
        check_domain(h, &chart, region, &out.path.nodes())?;
        let end = out.path.final_state().cloned().unwrap_or_else(|| x.clone());
        let t_end = out.path.t_end().unwrap_or(stop);
        traj.push_segment(h, Rep::Relaxed(k, epsilon), out.path, &out.stats);
        let Some(hit) = out.hit else {
            t = t_end;
            x = end;
            continue;
        };
        t = hit.t;
        let before = super::to_quotient(h, Rep::Relaxed(k, epsilon), &hit.x);
        match triggers[hit.index] {
            Trigger::Region(next) => {
                traj.push_event(t, EventKind::Crossing, Some(k), Some(before));
                place = Place::Edge(k, next);
                x = hit.x;
            }
            Trigger::Overlap => return Err(Error::OverlappingStrips { t }),
            Trigger::Exit(s) => {
                let (m, y) = if region == Region::Above {
                    (chart.edge().target, chart.attach(&hit.x))
                } else {
                    (chart.edge().source, hit.x.clone())
                };
                if !s.admits(h, &y) {
                    return Err(Error::LeftAllDomains { t, mode: m });
                }
                traj.push_event(t, EventKind::ChartSwitch, Some(s.edge()), Some(QuotientPoint::new(m, &y)));
                traj.push_event(t, EventKind::Crossing, Some(s.edge()), Some(QuotientPoint::new(m, &y)));
                let next = build_relaxed_chart(h, s.edge(), epsilon)?;
                x = match s {
                    Surface::Guard(_) => y,
                    Surface::Image(_) => next.attach_inverse(&y),
                };
                place = Place::Edge(s.edge(), Region::Strip);
            }
        }
    }
    Ok(traj)
}

fn region_events<'a>(
    h: &'a HybridSystem,
    chart: RelaxedEdgeChart<'a>,
    region: Region,
) -> (Vec<Trigger>, Vec<EventSpec<'a>>) {
    let eps = chart.epsilon;
    let g = move |_: f64, z: &Vector| chart.guard_value(z);
    let g_top = move |_: f64, z: &Vector| chart.guard_value(z) - eps;
    let edge = chart.edge();
    let mut triggers = Vec::new();
    let mut events = Vec::new();
    match region {
        Region::Below => {
            triggers.push(Trigger::Region(Region::Strip));
            events.push(EventSpec::new(Direction::Rising, g));
            for s in mode_surfaces(h, edge.source, Some(&edge.guard_plane())) {
                triggers.push(Trigger::Exit(s));
                events.push(EventSpec::new(Direction::Rising, move |_, z: &Vector| s.value(h, z)));
            }
        }
        Region::Strip => {
            triggers.push(Trigger::Region(Region::Below));
            events.push(EventSpec::new(Direction::Falling, g));
            triggers.push(Trigger::Region(Region::Above));
            events.push(EventSpec::new(Direction::Rising, g_top));
            for s in mode_surfaces(h, edge.source, Some(&edge.guard_plane())) {
                triggers.push(Trigger::Overlap);
                events.push(EventSpec::new(Direction::Rising, move |_, z: &Vector| s.value(h, z)));
            }
        }
        Region::Above => {
            triggers.push(Trigger::Region(Region::Strip));
            events.push(EventSpec::new(Direction::Falling, g_top));
            for s in mode_surfaces(h, edge.target, Some(&edge.image_plane())) {
                triggers.push(Trigger::Exit(s));
                events.push(EventSpec::new(Direction::Rising, move |_, z: &Vector| s.value(h, &chart.attach(z))));
            }
        }
    }
    (triggers, events)
}

fn check_domain(h: &HybridSystem, chart: &RelaxedEdgeChart<'_>, region: Region, nodes: &[(f64, Vector)]) -> Result<()> {
    let edge = chart.edge();
    for (s, z) in nodes {
        let ok = match region {
            Region::Below => h.modes[edge.source].domain.contains(z),
            Region::Strip => edge.in_guard_set(&chart.base.project(z)),
            Region::Above => h.modes[edge.target].domain.contains(&chart.attach(z)),
        };
        if !ok {
            let mode = if region == Region::Above { edge.target } else { edge.source };
            return Err(Error::LeftAllDomains { t: *s, mode });
        }
    }
    Ok(())
}
