//! Adaptive ODE integration with dense output and event location.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Matrix, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Dormand–Prince 5(4).
    Rk45,
    /// Backward Euler with damped Newton.
    BackwardEuler,
}

impl Method {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "rk45" => Some(Self::Rk45),
            "be" => Some(Self::BackwardEuler),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub method: Method,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    /// Target accuracy of located event values.
    pub event_tol: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Disables error control when set.
    pub fixed_step: Option<f64>,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: Method::Rk45,
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_step: f64::INFINITY,
            event_tol: 1e-12,
            newton_tol: 1e-10,
            newton_max_iter: 25,
            fixed_step: None,
            max_steps: 5_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        pos("rel_tol", self.rel_tol)?;
        pos("abs_tol", self.abs_tol)?;
        pos("max_step", self.max_step)?;
        pos("event_tol", self.event_tol)?;
        pos("newton_tol", self.newton_tol)?;
        if let Some(h) = self.fixed_step {
            pos("fixed_step", h)?;
        }
        Ok(())
    }

    pub fn with_max_step(&self, max_step: f64) -> Self {
        Self { max_step: self.max_step.min(max_step), ..self.clone() }
    }
}

/// Steps smaller than this fraction of the span signal stiffness.
pub const UNDERFLOW_FRACTION: f64 = 1e-14;

#[derive(Clone, Debug)]
enum Interp {
    /// Dormand–Prince continuous extension `r1..r5`.
    Dopri([Vector; 5]),
    Linear,
}

#[derive(Clone, Debug)]
struct Step {
    t0: f64,
    /// End of the accepted (possibly event-truncated) step.
    t1: f64,
    /// Length of the step the interpolant was built for.
    h: f64,
    y0: Vector,
    y1: Vector,
    interp: Interp,
}

impl Step {
    fn new(t0: f64, t1: f64, y0: Vector, y1: Vector, interp: Interp) -> Self {
        Self { t0, t1, h: t1 - t0, y0, y1, interp }
    }

    fn eval(&self, t: f64) -> Vector {
        if t == self.t0 {
            return self.y0.clone();
        }
        if t == self.t1 {
            return self.y1.clone();
        }
        let th = if self.h > 0.0 { (t - self.t0) / self.h } else { 1.0 };
        self.eval_theta(th)
    }

    fn eval_theta(&self, th: f64) -> Vector {
        if th == 0.0 {
            return self.y0.clone();
        }
        match &self.interp {
            Interp::Linear if th == 1.0 => self.y1.clone(),
            Interp::Linear => &self.y0 + (&self.y1 - &self.y0) * th,
            Interp::Dopri([r1, r2, r3, r4, r5]) => {
                let th1 = 1.0 - th;
                r1 + (r2 + (r3 + (r4 + r5 * th1) * th) * th1) * th
            }
        }
    }

    /// Shortens the step to end at `(t, y)`, keeping the interpolant.
    fn truncate(&self, t: f64, y: Vector) -> Step {
        let mut out = self.clone();
        if let Interp::Linear = self.interp {
            out.h = t - self.t0;
        }
        out.t1 = t;
        out.y1 = y;
        out
    }
}

/// Piecewise dense solution.
#[derive(Clone, Debug, Default)]
pub struct DensePath {
    steps: Vec<Step>,
}

impl DensePath {
    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn t_start(&self) -> Option<f64> {
        self.steps.first().map(|s| s.t0)
    }

    pub fn t_end(&self) -> Option<f64> {
        self.steps.last().map(|s| s.t1)
    }

    pub fn final_state(&self) -> Option<&Vector> {
        self.steps.last().map(|s| &s.y1)
    }

    /// Accepted step boundaries and states.
    pub fn nodes(&self) -> Vec<(f64, Vector)> {
        let mut out = Vec::with_capacity(self.steps.len() + 1);
        if let Some(s) = self.steps.first() {
            out.push((s.t0, s.y0.clone()));
        }
        out.extend(self.steps.iter().map(|s| (s.t1, s.y1.clone())));
        out
    }

    /// Dense output at `t`, clamped to the covered interval.
    pub fn eval(&self, t: f64) -> Option<Vector> {
        let first = self.steps.first()?;
        if t <= first.t0 {
            return Some(first.y0.clone());
        }
        let k = self.steps.partition_point(|s| s.t1 < t);
        let s = self.steps.get(k).unwrap_or_else(|| self.steps.last().unwrap());
        Some(if t >= s.t1 { s.y1.clone() } else { s.eval(t) })
    }

    /// Constant path on `[t0, t1]`.
    pub fn constant(t0: f64, t1: f64, y: Vector) -> Self {
        Self { steps: vec![Step::new(t0, t1, y.clone(), y, Interp::Linear)] }
    }
}

/// Crossing direction that triggers an event.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// From negative to nonnegative.
    Rising,
    /// From positive to nonpositive.
    Falling,
    Either,
}

pub struct EventSpec<'a> {
    pub f: Box<dyn Fn(f64, &Vector) -> f64 + 'a>,
    pub direction: Direction,
}

impl<'a> EventSpec<'a> {
    pub fn new(direction: Direction, f: impl Fn(f64, &Vector) -> f64 + 'a) -> Self {
        Self { f: Box::new(f), direction }
    }

    fn triggered(&self, prev: f64, cur: f64) -> bool {
        let rising = prev < 0.0 && cur >= 0.0;
        let falling = prev > 0.0 && cur <= 0.0;
        match self.direction {
            Direction::Rising => rising,
            Direction::Falling => falling,
            Direction::Either => rising || falling,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EventHit {
    pub index: usize,
    pub t: f64,
    pub x: Vector,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

impl Stats {
    pub fn add(&mut self, o: &Stats) {
        self.accepted += o.accepted;
        self.rejected += o.rejected;
        self.evaluations += o.evaluations;
    }
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub path: DensePath,
    pub hit: Option<EventHit>,
    pub stats: Stats,
}

pub type FieldMut<'a> = dyn FnMut(f64, &Vector) -> Result<Vector> + 'a;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn scaled_norm(v: &Vector, y0: &Vector, y1: &Vector, cfg: &IntegratorConfig) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let s: f64 = v
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let sc = cfg.abs_tol + cfg.rel_tol * y0[i].abs().max(y1[i].abs());
            (e / sc).powi(2)
        })
        .sum();
    (s / v.len() as f64).sqrt()
}

fn initial_step(f: &mut FieldMut<'_>, t0: f64, y0: &Vector, f0: &Vector, span: f64, cfg: &IntegratorConfig, stats: &mut Stats) -> Result<f64> {
    let d0 = scaled_norm(y0, y0, y0, cfg);
    let d1 = scaled_norm(f0, y0, y0, cfg);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(span).min(cfg.max_step);
    let y1 = y0 + f0 * h0;
    let f1 = f(t0 + h0, &y1)?;
    stats.evaluations += 1;
    let d2 = scaled_norm(&(f1 - f0), y0, y0, cfg) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    let floor = 1e3 * UNDERFLOW_FRACTION * span;
    Ok((100.0 * h0).min(h1).max(floor).min(span).min(cfg.max_step))
}

struct EventState<'a, 'b> {
    events: &'b [EventSpec<'a>],
    prev: Vec<f64>,
}

impl EventState<'_, '_> {
    /// Earliest event inside `step`, located on its interpolant.
    fn check(&mut self, step: &Step) -> Option<EventHit> {
        let mut best: Option<EventHit> = None;
        for (i, ev) in self.events.iter().enumerate() {
            let cur = (ev.f)(step.t1, &step.y1);
            let prev = self.prev[i];
            self.prev[i] = cur;
            if !ev.triggered(prev, cur) {
                continue;
            }
            let (t, x) = locate_in_step(step, &ev.f, prev, cur);
            if best.as_ref().is_none_or(|b| t < b.t) {
                best = Some(EventHit { index: i, t, x });
            }
        }
        best
    }
}

/// Illinois iteration on the step-local parameter; returns the endpoint on
/// the far side of the sign change.
fn locate_in_step(step: &Step, f: &dyn Fn(f64, &Vector) -> f64, v0: f64, v1: f64) -> (f64, Vector) {
    if v1 == 0.0 {
        return (step.t1, step.y1.clone());
    }
    let h = step.h;
    let (mut a, mut fa) = (0.0f64, v0);
    let (mut b, mut fb) = (1.0f64, v1);
    let mut side = 0i8;
    let tb = |th: f64| if th == 1.0 { step.t1 } else { step.t0 + th * h };
    for _ in 0..200 {
        if (b - a) * h.abs() <= 2.0 * f64::EPSILON * step.t1.abs().max(step.t0.abs()).max(1e-300) {
            break;
        }
        let mut c = b - fb * (b - a) / (fb - fa);
        if !(c > a && c < b) {
            c = 0.5 * (a + b);
        }
        let yc = step.eval_theta(c);
        let fc = f(tb(c), &yc);
        if fc == 0.0 {
            return (tb(c), yc);
        }
        if (fc > 0.0) == (fb > 0.0) {
            b = c;
            fb = fc;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        } else {
            a = c;
            fa = fc;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        }
        if b - a <= 4.0 * f64::EPSILON {
            break;
        }
    }
    (tb(b), step.eval_theta(b))
}

/// Integrates from `(t0, x0)` towards `t1`, stopping at the first event.
pub fn integrate_until(
    field: &mut FieldMut<'_>,
    t0: f64,
    x0: &Vector,
    t1: f64,
    cfg: &IntegratorConfig,
    events: &[EventSpec<'_>],
) -> Result<Outcome> {
    cfg.validate()?;
    let mut stats = Stats::default();
    let mut path = DensePath::default();
    let span = t1 - t0;
    if !(span > 0.0) {
        return Ok(Outcome { path: DensePath::constant(t0, t0, x0.clone()), hit: None, stats });
    }
    let mut ev = EventState { events, prev: events.iter().map(|e| (e.f)(t0, x0)).collect() };
    match cfg.method {
        Method::Rk45 => rk45(field, t0, x0, t1, cfg, &mut ev, &mut path, &mut stats),
        Method::BackwardEuler => backward_euler(field, t0, x0, t1, cfg, &mut ev, &mut path, &mut stats),
    }
    .map(|hit| Outcome { path, hit, stats })
}

/// Integrates over `t_span` without events.
pub fn integrate(
    field: &mut FieldMut<'_>,
    x0: &Vector,
    t_span: (f64, f64),
    cfg: &IntegratorConfig,
) -> Result<DensePath> {
    Ok(integrate_until(field, t_span.0, x0, t_span.1, cfg, &[])?.path)
}

/// Root of `event_fn` along `path` inside `bracket`.
pub fn locate_event(
    path: &DensePath,
    event_fn: &dyn Fn(f64, &Vector) -> f64,
    bracket: (f64, f64),
    event_tol: f64,
) -> Result<(f64, Vector)> {
    let (ta, tb) = bracket;
    let ya = path.eval(ta).ok_or(Error::NoSignChange { t0: ta, t1: tb })?;
    let yb = path.eval(tb).ok_or(Error::NoSignChange { t0: ta, t1: tb })?;
    let (mut a, mut fa) = (ta, event_fn(ta, &ya));
    let (mut b, mut fb) = (tb, event_fn(tb, &yb));
    if fa == 0.0 {
        return Ok((a, ya));
    }
    if fb == 0.0 {
        return Ok((b, yb));
    }
    if (fa > 0.0) == (fb > 0.0) {
        return Err(Error::NoSignChange { t0: ta, t1: tb });
    }
    let mut side = 0i8;
    let mut best = if fa.abs() < fb.abs() { (a, ya) } else { (b, yb) };
    for _ in 0..400 {
        let mut c = b - fb * (b - a) / (fb - fa);
        if !(c > a && c < b) {
            c = 0.5 * (a + b);
        }
        let yc = path.eval(c).expect("nonempty path");
        let fc = event_fn(c, &yc);
        best = (c, yc);
        if fc.abs() <= event_tol && (b - a) <= 1e-12 * (1.0 + c.abs()) || fc == 0.0 {
            break;
        }
        if (fc > 0.0) == (fb > 0.0) {
            b = c;
            fb = fc;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        } else {
            a = c;
            fa = fc;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        }
        if b - a <= 2.0 * f64::EPSILON * b.abs().max(1e-300) {
            break;
        }
    }
    Ok(best)
}

fn underflow(t: f64, h: f64, span: f64) -> bool {
    h < UNDERFLOW_FRACTION * span || t + h == t
}

#[allow(clippy::too_many_arguments)]
fn rk45(
    f: &mut FieldMut<'_>,
    t0: f64,
    x0: &Vector,
    t1: f64,
    cfg: &IntegratorConfig,
    ev: &mut EventState<'_, '_>,
    path: &mut DensePath,
    stats: &mut Stats,
) -> Result<Option<EventHit>> {
    let span = t1 - t0;
    let mut t = t0;
    let mut y = x0.clone();
    let mut k1 = f(t, &y)?;
    stats.evaluations += 1;
    let mut h = match cfg.fixed_step {
        Some(hf) => hf.min(cfg.max_step),
        None => initial_step(f, t, &y, &k1, span, cfg, stats)?,
    };
    let mut fac_old: f64 = 1e-4;
    let mut last_rejected = false;
    loop {
        if stats.accepted + stats.rejected >= cfg.max_steps {
            return Err(Error::Config(format!("step budget of {} exhausted at t = {t}", cfg.max_steps)));
        }
        let remaining = t1 - t;
        let last = h >= remaining;
        let hh = if last { remaining } else { h.min(cfg.max_step) };
        if !last && underflow(t, hh, span) {
            return Err(Error::StepSizeUnderflow { t, h: hh });
        }
        let k2 = f(t + C2 * hh, &(&y + &k1 * (hh * A21)))?;
        let k3 = f(t + C3 * hh, &(&y + (&k1 * A31 + &k2 * A32) * hh))?;
        let k4 = f(t + C4 * hh, &(&y + (&k1 * A41 + &k2 * A42 + &k3 * A43) * hh))?;
        let k5 = f(t + C5 * hh, &(&y + (&k1 * A51 + &k2 * A52 + &k3 * A53 + &k4 * A54) * hh))?;
        let tn = if last { t1 } else { t + hh };
        let k6 = f(tn, &(&y + (&k1 * A61 + &k2 * A62 + &k3 * A63 + &k4 * A64 + &k5 * A65) * hh))?;
        let yn = &y + (&k1 * A71 + &k3 * A73 + &k4 * A74 + &k5 * A75 + &k6 * A76) * hh;
        let k7 = f(tn, &yn)?;
        stats.evaluations += 6;
        let err = if cfg.fixed_step.is_some() {
            0.0
        } else {
            let e = (&k1 * E1 + &k3 * E3 + &k4 * E4 + &k5 * E5 + &k6 * E6 + &k7 * E7) * hh;
            scaled_norm(&e, &y, &yn, cfg)
        };
        if !err.is_finite() {
            stats.rejected += 1;
            h = hh * 0.2;
            last_rejected = true;
            continue;
        }
        if err <= 1.0 {
            stats.accepted += 1;
            let ydiff = &yn - &y;
            let bspl = &k1 * hh - &ydiff;
            let r4 = &ydiff - &k7 * hh - &bspl;
            let r5 = (&k1 * D1 + &k3 * D3 + &k4 * D4 + &k5 * D5 + &k6 * D6 + &k7 * D7) * hh;
            let step = Step::new(t, tn, y.clone(), yn.clone(), Interp::Dopri([y.clone(), ydiff, bspl, r4, r5]));
            if let Some(hit) = ev.check(&step) {
                let cut = step.truncate(hit.t, hit.x.clone());
                path.steps.push(cut);
                return Ok(Some(hit));
            }
            path.steps.push(step);
            t = tn;
            y = yn;
            k1 = k7;
            if last || t >= t1 {
                return Ok(None);
            }
            if cfg.fixed_step.is_none() {
                let fac11 = err.powf(0.2 - 0.04 * 0.75);
                let mut fac = fac11 / fac_old.powf(0.04) / 0.9;
                fac = fac.clamp(0.1, 5.0);
                fac_old = err.max(1e-4);
                let mut hnew = hh / fac;
                if last_rejected {
                    hnew = hnew.min(hh);
                }
                h = hnew.min(cfg.max_step);
            }
            last_rejected = false;
        } else {
            stats.rejected += 1;
            let fac = (err.powf(0.2 - 0.04 * 0.75) / 0.9).min(5.0);
            h = hh / fac;
            last_rejected = true;
            if underflow(t, h, span) {
                return Err(Error::StepSizeUnderflow { t, h });
            }
        }
    }
}

fn newton_solve(
    f: &mut FieldMut<'_>,
    t: f64,
    y0: &Vector,
    h: f64,
    cfg: &IntegratorConfig,
    stats: &mut Stats,
) -> Result<Option<Vector>> {
    let n = y0.len();
    let mut y = y0 + f(t - h, y0)? * h;
    stats.evaluations += 1;
    let resid = |f: &mut FieldMut<'_>, y: &Vector, stats: &mut Stats| -> Result<Vector> {
        stats.evaluations += 1;
        Ok(y - y0 - f(t, y)? * h)
    };
    let mut r = resid(f, &y, stats)?;
    for _ in 0..cfg.newton_max_iter {
        let scale = cfg.abs_tol + cfg.rel_tol * y.amax();
        if r.amax() <= cfg.newton_tol.max(1e-3 * scale) {
            return Ok(Some(y));
        }
        let mut jac = Matrix::identity(n, n);
        let fy = f(t, &y)?;
        for j in 0..n {
            let d = 1e-7 * (1.0 + y[j].abs());
            let mut yp = y.clone();
            yp[j] += d;
            let col = (f(t, &yp)? - &fy) / d;
            for i in 0..n {
                jac[(i, j)] -= h * col[i];
            }
        }
        stats.evaluations += n + 1;
        let Some(delta) = jac.lu().solve(&r) else {
            return Ok(None);
        };
        let mut lambda = 1.0;
        loop {
            let cand = &y - &delta * lambda;
            let rc = resid(f, &cand, stats)?;
            if rc.norm() < r.norm() || lambda < 1e-4 {
                y = cand;
                r = rc;
                break;
            }
            lambda *= 0.5;
        }
        if !r.iter().all(|v| v.is_finite()) {
            return Ok(None);
        }
    }
    let scale = cfg.abs_tol + cfg.rel_tol * y.amax();
    Ok((r.amax() <= cfg.newton_tol.max(1e-3 * scale)).then_some(y))
}

#[allow(clippy::too_many_arguments)]
fn backward_euler(
    f: &mut FieldMut<'_>,
    t0: f64,
    x0: &Vector,
    t1: f64,
    cfg: &IntegratorConfig,
    ev: &mut EventState<'_, '_>,
    path: &mut DensePath,
    stats: &mut Stats,
) -> Result<Option<EventHit>> {
    let span = t1 - t0;
    let mut t = t0;
    let mut y = x0.clone();
    let mut h = cfg.fixed_step.unwrap_or((span * 1e-3).max(1e-8)).min(cfg.max_step).min(span);
    loop {
        if stats.accepted + stats.rejected >= cfg.max_steps {
            return Err(Error::Config(format!("step budget of {} exhausted at t = {t}", cfg.max_steps)));
        }
        let remaining = t1 - t;
        let last = h >= remaining;
        let hh = if last { remaining } else { h.min(cfg.max_step) };
        if !last && underflow(t, hh, span) {
            return Err(Error::StepSizeUnderflow { t, h: hh });
        }
        let tn = if last { t1 } else { t + hh };
        let nodes: Vec<(f64, Vector)> = if cfg.fixed_step.is_some() {
            match newton_solve(f, tn, &y, hh, cfg, stats)? {
                Some(yn) => vec![(tn, yn)],
                None => return Err(Error::NewtonDivergence { t }),
            }
        } else {
            let full = newton_solve(f, tn, &y, hh, cfg, stats)?;
            let tm = t + 0.5 * hh;
            let half1 = newton_solve(f, tm, &y, 0.5 * hh, cfg, stats)?;
            let half2 = match &half1 {
                Some(ym) => newton_solve(f, tn, ym, 0.5 * hh, cfg, stats)?,
                None => None,
            };
            match (full, half1, half2) {
                (Some(yf), Some(ym), Some(y2)) => {
                    let err = scaled_norm(&(&y2 - &yf), &y, &y2, cfg);
                    if err > 1.0 {
                        stats.rejected += 1;
                        h = hh * (0.9 / err.sqrt()).max(0.2);
                        if underflow(t, h, span) {
                            return Err(Error::StepSizeUnderflow { t, h });
                        }
                        continue;
                    }
                    h = hh * (0.9 / err.max(1e-10).sqrt()).min(4.0);
                    vec![(tm, ym), (tn, y2)]
                }
                _ => {
                    stats.rejected += 1;
                    h = hh * 0.25;
                    if underflow(t, h, span) {
                        return Err(Error::NewtonDivergence { t });
                    }
                    continue;
                }
            }
        };
        stats.accepted += 1;
        for (ts, ys) in nodes {
            let step = Step::new(t, ts, y.clone(), ys.clone(), Interp::Linear);
            if let Some(hit) = ev.check(&step) {
                path.steps.push(step.truncate(hit.t, hit.x.clone()));
                return Ok(Some(hit));
            }
            path.steps.push(step);
            t = ts;
            y = ys;
        }
        if last || t >= t1 {
            return Ok(None);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_row_slice(xs)
    }

    fn decay() -> impl FnMut(f64, &Vector) -> Result<Vector> {
        |_t, x: &Vector| Ok(-x)
    }

    #[test]
    fn exponential_decay() {
        let path = integrate(&mut decay(), &v(&[1.0]), (0.0, 1.0), &IntegratorConfig::default()).unwrap();
        assert!((path.final_state().unwrap()[0] - (-1.0f64).exp()).abs() < 1e-7);
        for t in [0.1, 0.33, 0.77] {
            assert!((path.eval(t).unwrap()[0] - (-t).exp()).abs() < 1e-7);
        }
    }

    #[test]
    fn ballistic_arc() {
        let g = 9.81;
        let mut f = move |_t: f64, x: &Vector| Ok(v(&[x[1], -g]));
        let path = integrate(&mut f, &v(&[1.0, 2.0]), (0.0, 1.5), &IntegratorConfig::default()).unwrap();
        for t in [0.2, 0.9, 1.5] {
            assert!((path.eval(t).unwrap()[0] - (1.0 + 2.0 * t - g * t * t / 2.0)).abs() < 1e-8);
        }
    }

    #[test]
    fn stiff_decay_with_backward_euler() {
        let eps = 1e-5;
        let mut f = move |_t: f64, x: &Vector| Ok(-x / eps);
        let cfg = IntegratorConfig { method: Method::BackwardEuler, ..Default::default() };
        let path = integrate(&mut f, &v(&[1.0]), (0.0, 1.0), &cfg).unwrap();
        assert!(path.final_state().unwrap()[0].abs() <= cfg.abs_tol);
    }

    #[test]
    fn nodes_are_reproduced_exactly() {
        let path = integrate(&mut decay(), &v(&[1.0, -2.0]), (0.0, 3.0), &IntegratorConfig::default()).unwrap();
        for (t, y) in path.nodes() {
            assert_eq!(path.eval(t).unwrap(), y);
        }
    }

    #[test]
    fn linear_event_and_fall_time() {
        let path = integrate(&mut decay(), &v(&[1.0]), (0.0, 2.0), &IntegratorConfig::default()).unwrap();
        let (t, _) = locate_event(&path, &|t, _x| 1.0 - t, (0.0, 2.0), 1e-12).unwrap();
        assert!((t - 1.0).abs() < 1e-12);

        let g = 9.81;
        let mut f = move |_t: f64, x: &Vector| Ok(v(&[x[1], -g]));
        let path = integrate(&mut f, &v(&[1.0, 0.0]), (0.0, 1.0), &IntegratorConfig::default()).unwrap();
        let (t, x) = locate_event(&path, &|_t, x| x[0], (0.0, 1.0), 1e-12).unwrap();
        assert!((t - (2.0 / g).sqrt()).abs() < 1e-9);
        assert!(x[0].abs() <= 1e-12);
    }

    #[test]
    fn grazing_event_has_no_sign_change() {
        let mut f = |_t: f64, _x: &Vector| Ok(v(&[1.0]));
        let path = integrate(&mut f, &v(&[-1.0]), (0.0, 2.0), &IntegratorConfig::default()).unwrap();
        let graze = |_t: f64, x: &Vector| x[0] * x[0];
        assert!(matches!(locate_event(&path, &graze, (0.0, 2.0), 1e-12), Err(Error::NoSignChange { .. })));
    }

    #[test]
    fn terminal_event_truncates_path() {
        let g = 9.81;
        let mut f = move |_t: f64, x: &Vector| Ok(v(&[x[1], -g]));
        let ev = [EventSpec::new(Direction::Falling, |_t, x: &Vector| x[0])];
        let out = integrate_until(&mut f, 0.0, &v(&[1.0, 0.0]), 5.0, &IntegratorConfig::default(), &ev).unwrap();
        let hit = out.hit.unwrap();
        assert!((hit.t - (2.0 / g).sqrt()).abs() < 1e-9);
        assert!(hit.x[0] <= 0.0 && hit.x[0] > -1e-12);
        assert_eq!(out.path.t_end(), Some(hit.t));
        // Dense output inside the truncated step still follows the arc.
        let tm = 0.9 * hit.t;
        assert!((out.path.eval(tm).unwrap()[0] - (1.0 - g * tm * tm / 2.0)).abs() < 1e-9);
    }

    #[test]
    fn event_times_are_deterministic() {
        let run = || {
            let mut f = |_t: f64, x: &Vector| Ok(v(&[x[1], -x[0]]));
            let ev = [EventSpec::new(Direction::Either, |_t, x: &Vector| x[0])];
            integrate_until(&mut f, 0.0, &v(&[1.0, 0.0]), 5.0, &IntegratorConfig::default(), &ev)
                .unwrap()
                .hit
                .unwrap()
                .t
        };
        assert_eq!(run().to_bits(), run().to_bits());
        assert!((run() - std::f64::consts::FRAC_PI_2).abs() < 1e-9);
    }

    fn slope(hs: &[f64], errs: &[f64]) -> f64 {
        let xs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
        let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
        let n = xs.len() as f64;
        let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        num / den
    }

    #[test]
    fn observed_orders() {
        let exact = (-1.0f64).exp();
        let hs = [0.2, 0.1, 0.05, 0.025];
        let run = |method, h: f64| {
            let cfg = IntegratorConfig { method, fixed_step: Some(h), ..Default::default() };
            let p = integrate(&mut decay(), &v(&[1.0]), (0.0, 1.0), &cfg).unwrap();
            (p.final_state().unwrap()[0] - exact).abs()
        };
        let rk: Vec<f64> = hs.iter().map(|h| run(Method::Rk45, *h)).collect();
        assert!(slope(&hs, &rk) >= 4.5, "{rk:?}");
        let be: Vec<f64> = hs.iter().map(|h| run(Method::BackwardEuler, *h)).collect();
        let s = slope(&hs, &be);
        assert!((s - 1.0).abs() < 0.15, "{s}");
    }

    #[test]
    fn underflow_is_reported() {
        let mut f = |t: f64, _x: &Vector| Ok(v(&[1.0 / (1.0 - t).powi(3)]));
        let err = integrate(&mut f, &v(&[0.0]), (0.0, 2.0), &IntegratorConfig::default()).unwrap_err();
        assert!(matches!(err, Error::StepSizeUnderflow { .. }), "{err:?}");
    }

    #[test]
    fn bad_config_rejected() {
        let cfg = IntegratorConfig { rel_tol: 0.0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}
