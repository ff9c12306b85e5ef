use crate::charts::project_guard;
use crate::error::{Error, Result};
use crate::filippov::zero_rate_tol;
use crate::integrate::{integrate_until, DensePath, Direction, EventSpec, Stats};
use crate::model::{ControlSignal, HybridSystem, ModeId, Vector};

use super::{check_inputs, next_stop, on_surface, EventKind, QuotientPoint, Rep, SimConfig, Trajectory};

/// Classical execution: flow in a mode until a guard is reached, then apply
/// the reset. Both the pre- and post-reset states are recorded at the jump time.
pub fn simulate_execution(
    h: &HybridSystem,
    x0: &QuotientPoint,
    u: &ControlSignal,
    horizon: f64,
    cfg: &SimConfig,
) -> Result<Trajectory> {
    let mut y = check_inputs(h, x0, u, horizon)?;
    let mut m = x0.mode;
    let mut t = 0.0;
    let mut traj = Trajectory::new("execution", horizon, None);
    let mut jumps: Vec<(f64, usize)> = Vec::new();

    while t < horizon {
        if traj.events.len() >= cfg.event_budget {
            return Err(Error::EventBudget(cfg.event_budget));
        }
        let uu = u.eval_clamped(t);
        if let Some(k) = immediate_guard(h, m, &y, &uu) {
            let e = &h.edges[k];
            let p = project_guard(e, &y);
            traj.push_event(t, EventKind::ResetJump, Some(k), Some(QuotientPoint::new(m, &y)));
            y = e.reset.forward(&p);
            m = e.target;
            jumps.push((t, k));
            if let Some(acc) = zeno_check(&jumps, cfg, horizon) {
                freeze(h, &mut traj, m, &y, t, acc, horizon);
                return Ok(traj);
            }
            continue;
        }

        let stop = next_stop(u, t, horizon);
        let guards: Vec<usize> = h.outgoing(m).collect();
        let events: Vec<EventSpec<'_>> = guards
            .iter()
            .map(|&k| {
                let e = &h.edges[k];
                EventSpec::new(Direction::Rising, move |_, z: &Vector| e.guard_value(z))
            })
            .collect();
        let field = &h.modes[m].field;
        let mut rhs = |s: f64, z: &Vector| Ok(field.eval(z, &u.eval_clamped(s)));
        let out = integrate_until(&mut rhs, t, &y, stop, &cfg.integrator, &events)?;
        let domain = &h.modes[m].domain;
        if let Some((s, _)) = out.path.nodes().into_iter().find(|(_, z)| !domain.contains(z)) {
            return Err(Error::LeftAllDomains { t: s, mode: m });
        }
        let end = out.path.final_state().cloned().unwrap_or_else(|| y.clone());
        let t_end = out.path.t_end().unwrap_or(stop);
        traj.push_segment(h, Rep::Mode(m), out.path, &out.stats);

        let Some(hit) = out.hit else {
            t = t_end;
            y = end;
            continue;
        };
        t = hit.t;
        let k = guards[hit.index];
        let e = &h.edges[k];
        let p = project_guard(e, &hit.x);
        if !e.in_guard_set(&p) {
            y = hit.x;
            continue;
        }
        traj.push_event(t, EventKind::ResetJump, Some(k), Some(QuotientPoint::new(m, &hit.x)));
        y = e.reset.forward(&p);
        m = e.target;
        jumps.push((t, k));
        if let Some(acc) = zeno_check(&jumps, cfg, horizon) {
            freeze(h, &mut traj, m, &y, t, acc, horizon);
            return Ok(traj);
        }
        if t >= horizon {
            traj.push_segment(h, Rep::Mode(m), DensePath::constant(t, t, y.clone()), &Stats::default());
        }
    }
    Ok(traj)
}

/// An outgoing guard the state already sits on while the field points out.
fn immediate_guard(h: &HybridSystem, m: ModeId, y: &Vector, u: &Vector) -> Option<usize> {
    let f = h.modes[m].field.eval(y, u);
    h.outgoing(m).find(|&k| {
        let e = &h.edges[k];
        let grad = &e.planes.g_normal;
        on_surface(e.guard_value(y), y)
            && grad.dot(&f) > zero_rate_tol(&f, &f, grad)
            && e.in_guard_set(&project_guard(e, y))
    })
}

/// Accumulation-time estimate once `zeno_window` jumps fall inside
/// `zeno_fraction · horizon`.
fn zeno_check(jumps: &[(f64, usize)], cfg: &SimConfig, horizon: f64) -> Option<f64> {
    let n = jumps.len();
    if cfg.zeno_window < 2 || n < cfg.zeno_window {
        return None;
    }
    let (last, edge) = jumps[n - 1];
    if last - jumps[n - cfg.zeno_window].0 >= cfg.zeno_fraction * horizon {
        return None;
    }
    let same: Vec<f64> = jumps.iter().rev().filter(|j| j.1 == edge).take(3).map(|j| j.0).collect();
    let estimate = match same.as_slice() {
        [c, b, a] => aitken(*a, *b, *c).unwrap_or(last),
        _ => last,
    };
    Some(estimate.max(last))
}

/// Aitken Δ² limit of three consecutive terms.
pub(crate) fn aitken(a: f64, b: f64, c: f64) -> Option<f64> {
    let (d1, d2) = (b - a, c - b);
    let den = d1 - d2;
    (den > 0.0 && d2 >= 0.0).then(|| c + d2 * d2 / den)
}

fn freeze(h: &HybridSystem, traj: &mut Trajectory, m: ModeId, y: &Vector, t: f64, acc: f64, horizon: f64) {
    traj.push_segment(h, Rep::Mode(m), DensePath::constant(t, horizon.max(t), y.clone()), &Stats::default());
    traj.meta.zeno_accumulation = Some(acc);
    traj.push_event(acc, EventKind::ZenoTruncation, None, Some(QuotientPoint::new(m, y)));
}
