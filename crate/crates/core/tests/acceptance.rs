use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use hyfil::charts::{build_relaxed_chart, EdgeChart};
use hyfil::filippov::{classify, classify_rates, sliding_field, CellKind};
use hyfil::model::{HybridSystem, Vector};
use hyfil::relaxation::{make_transition, relaxed_local_field, TransitionKind, TransitionVariant};
use hyfil::scenarios::{all_scenarios, bouncing_ball, crossing_affine, crossing_linear, equal_fields, figure8, repelling_relay, sliding_relay, Scenario};
use hyfil::sim::{quotient_distance, simulate_execution, simulate_filippov, simulate_relaxed, EventKind, SimConfig, Trajectory};
use hyfil::sweep::{run_sweep, sup_distance, time_grid, Reference, SweepSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn v2(a: f64, b: f64) -> Vector {
    Vector::from_vec(vec![a, b])
}

fn grid(horizon: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| horizon * i as f64 / (n - 1) as f64).collect()
}

fn sweep_slope(s: &Scenario) -> Result<f64, String> {
    let r = run_sweep(s, &SweepSpec::default(), &SimConfig::default()).map_err(|e| e.to_string())?;
    r.slope.ok_or_else(|| format!("{}: no slope ({:?})", s.name, r.notice))
}

fn bimodal_rate() -> Outcome {
    let start = Instant::now();
    let a = sweep_slope(&crossing_linear())?;
    let b = sweep_slope(&sliding_relay())?;
    let secs = start.elapsed().as_secs_f64();
    check(
        a >= 0.9 && b >= 0.9 && secs < 60.0,
        format!("slopes crossing_linear {a:.3}, sliding_relay {b:.3}, {secs:.1} s"),
    )
}

fn hybrid_rate() -> Outcome {
    let s = sweep_slope(&crossing_affine())?;
    check(s >= 0.9, format!("crossing_affine slope {s:.3}"))
}

fn cauchy_convergence() -> Outcome {
    let spec = SweepSpec { reference: Reference::FinestEps, ..Default::default() };
    let r = run_sweep(&repelling_relay(), &spec, &SimConfig::default()).map_err(|e| e.to_string())?;
    let decreasing = r.cauchy.windows(2).all(|w| w[1] < w[0]);
    check(decreasing, format!("cauchy column {:?}", r.cauchy))
}

fn bouncing_ball_zeno() -> Outcome {
    let (c, g, h0) = (0.5, 9.81, 1.0);
    let s = bouncing_ball(c, g, h0).map_err(|e| e.to_string())?;
    let cfg = SimConfig::default();
    let t_inf = (2.0 * h0 / g).sqrt() * (1.0 + 2.0 * c / (1.0 - c));

    let ex = simulate_execution(&s.system, &s.default_x0, &s.default_u, s.default_t, &cfg).map_err(|e| e.to_string())?;
    let acc = ex.events.iter().find(|e| e.kind == EventKind::ZenoTruncation).map(|e| e.time);
    let zeno_ok = acc.is_some_and(|a| (a - t_inf).abs() <= 1e-3);

    let v0 = (2.0 * g * h0).sqrt();
    let mut worst_speed = 0.0f64;
    let mut impacts = 0;
    for (k, e) in ex
        .events
        .iter()
        .filter(|e| e.kind == EventKind::ResetJump && matches!(e.edge, Some(1) | Some(3)))
        .enumerate()
    {
        let speed = e.point.as_ref().map_or(f64::NAN, |p| p.coords[1].abs());
        let expected = c.powi(k as i32) * v0;
        worst_speed = worst_speed.max((speed - expected).abs() / expected);
        impacts += 1;
    }
    let speed_ok = impacts > 0 && worst_speed <= 1e-6;

    let fl = simulate_filippov(&s.system, &s.default_x0, &s.default_u, s.default_t, &cfg).map_err(|e| e.to_string())?;
    let mut worst_norm = 0.0f64;
    for t in grid(s.default_t, 2000).into_iter().filter(|t| *t >= t_inf + 0.05) {
        let n = fl.sample(&s.system, t).map_or(f64::INFINITY, |p| p.vector().norm());
        worst_norm = worst_norm.max(n);
    }
    let rest_ok = worst_norm <= 1e-6;

    check(
        zeno_ok && speed_ok && rest_ok,
        format!(
            "(a) accumulation {acc:?} vs {t_inf:.6}; (b) max |x| after rest {worst_norm:.2e}; (c) {impacts} impacts, worst relative speed error {worst_speed:.2e}"
        ),
    )
}

/// Depth `q` with `(1 − φ(q/ε))·r1 + φ(q/ε)·r2 = 0`, by bisection.
fn boundary_layer_depth(r1: f64, r2: f64, eps: f64) -> f64 {
    let phi = make_transition(TransitionKind::SmoothExp, TransitionVariant::Hybrid);
    let rate = |s: f64| {
        let w = phi.eval(s);
        (1.0 - w) * r1 + w * r2
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if rate(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    eps * 0.5 * (lo + hi)
}

fn sliding_intervals(traj: &Trajectory) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut open = None;
    for e in &traj.events {
        match e.kind {
            EventKind::SlideStart => open = Some(e.time),
            EventKind::SlideEnd => {
                if let Some(s) = open.take() {
                    out.push((s, e.time));
                }
            }
            _ => {}
        }
    }
    if let Some(s) = open {
        out.push((s, traj.horizon()));
    }
    out
}

fn sliding_correctness() -> Outcome {
    let s = sliding_relay();
    let h = &s.system;
    let cfg = SimConfig::default();
    let fl = simulate_filippov(h, &s.default_x0, &s.default_u, s.default_t, &cfg).map_err(|e| e.to_string())?;
    let intervals = sliding_intervals(&fl);
    let grad = h.edges[0].planes.g_normal.clone();
    let (mut worst_g, mut worst_rate) = (0.0f64, 0.0f64);
    let delta = 1e-6;
    for &(a, b) in &intervals {
        for t in grid(b - a, 500).into_iter().map(|t| a + t).filter(|t| *t - delta >= a && *t + delta <= b) {
            let x = fl.sample(h, t).ok_or("sample outside trajectory")?;
            worst_g = worst_g.max(h.edges[0].guard_value(&x.vector()).abs());
            let (p, q) = (fl.sample(h, t - delta).ok_or("gap")?, fl.sample(h, t + delta).ok_or("gap")?);
            let xdot = (q.vector() - p.vector()) / (2.0 * delta);
            worst_rate = worst_rate.max(grad.dot(&xdot).abs() / xdot.norm());
        }
    }

    let eps = 1e-3;
    let rx = simulate_relaxed(h, &s.default_x0, &s.default_u, s.default_t, eps, &cfg).map_err(|e| e.to_string())?;
    let end = rx.final_point().ok_or("empty relaxed run")?;
    let depth = end.epsilon_layer.map(|(_, d)| d);
    let f1 = h.modes[0].field.eval(&end.vector(), &Vector::zeros(0));
    let f2 = h.modes[1].field.eval(&end.vector(), &Vector::zeros(0));
    let oracle = boundary_layer_depth(grad.dot(&f1), grad.dot(&f2), eps);
    let depth_ok = depth.is_some_and(|d| (d - oracle).abs() <= 5.0 * eps);

    check(
        !intervals.is_empty() && worst_g <= 1e-9 && worst_rate <= 1e-9 && depth_ok,
        format!(
            "{} sliding interval(s), max |g| {worst_g:.2e}, max normal rate {worst_rate:.2e}, strip depth {depth:?} vs {oracle:.3e}",
            intervals.len()
        ),
    )
}

/// Source-domain points, guard points and pulled-back target-domain points.
fn chart_samples(h: &HybridSystem, k: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vector> {
    let e = &h.edges[k];
    let chart = EdgeChart::new(h, k).expect("edge exists");
    let (src, tgt) = (&h.modes[e.source].domain, &h.modes[e.target].domain);
    let mut out = Vec::with_capacity(n);
    let mut tries = 0;
    while out.len() < n && tries < 200 * n {
        tries += 1;
        let x = match out.len() % 3 {
            0 => src.bounds.sample(rng),
            1 => chart.project(&src.bounds.sample(rng)),
            _ => chart.attach_inverse(&tgt.bounds.sample(rng)),
        };
        if chart.contains(&x) {
            out.push(x);
        }
    }
    out
}

fn chart_algebra() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = [0.0f64; 4];
    let mut edges = 0;
    for s in all_scenarios() {
        let h = &s.system;
        let u = Vector::zeros(h.input_dim());
        for k in 0..h.edges.len() {
            let chart = EdgeChart::new(h, k).map_err(|e| e.to_string())?;
            let e = chart.edge;
            let pts = chart_samples(h, k, 1000, &mut rng);
            if pts.len() < 1000 {
                return Err(format!("{} edge {k}: only {} chart samples", s.name, pts.len()));
            }
            for x in &pts {
                let scale = 1.0 + x.norm();
                let y = chart.attach(x);
                worst[0] = worst[0].max((chart.attach_inverse(&y) - x).norm() / scale);
                let pulled = chart.pullback_field(x, &u).map_err(|e| e.to_string())?;
                let fy = h.modes[e.target].field.eval(&y, &u);
                worst[1] = worst[1].max((chart.attach_jacobian(x) * pulled - &fy).norm() / (1.0 + fy.norm()));
                let p = chart.project(x);
                worst[2] = worst[2].max((chart.project(&p) - &p).norm() / scale);
                worst[3] = worst[3].max((e.image_value(&y) - e.guard_value(x)).abs() / scale);
            }
            edges += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let ok = worst[0] <= 1e-12 && worst[1] <= 1e-12 && worst[2] <= 1e-14 && worst[3] <= 1e-12 && secs < 5.0;
    check(
        ok,
        format!(
            "{edges} edges: round trip {:.1e}, pushforward {:.1e}, idempotence {:.1e}, plane {:.1e}, {secs:.2} s",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

fn classification() -> Outcome {
    let grad = v2(0.0, 1.0);
    let mut failures = Vec::new();
    for a in [-1.0, 0.0, 1.0] {
        for b in [-1.0, 0.0, 1.0] {
            let expected = match (a, b) {
                (a, b) if a == 0.0 || b == 0.0 => CellKind::TangentDegenerate,
                (a, b) if a > 0.0 && b > 0.0 => CellKind::CrossingForward,
                (a, b) if a < 0.0 && b < 0.0 => CellKind::CrossingBackward,
                (a, _) if a > 0.0 => CellKind::AttractingSliding,
                _ => CellKind::RepellingSliding,
            };
            let (f1, f2) = (v2(1.0, a), v2(1.0, b));
            if classify(0.0, &grad, &v2(0.3, 0.0), &f1, &f2).kind != expected {
                failures.push(format!("sign table ({a}, {b})"));
            }
            if classify(0.5, &grad, &v2(0.3, 0.5), &f1, &f2).kind != CellKind::Interior {
                failures.push(format!("interior ({a}, {b})"));
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let r1: f64 = rng.gen_range(1e-3..10.0);
        let r2: f64 = -rng.gen_range(1e-3..10.0);
        let (t1, t2) = (rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
        let g = v2(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        if g.norm() < 1e-2 {
            continue;
        }
        let n = g.normalize();
        let tangent = v2(-n[1], n[0]);
        let f1 = &n * (r1 / g.norm()) + &tangent * t1;
        let f2 = &n * (r2 / g.norm()) + &tangent * t2;
        for (p, q) in [(&f1, &f2), (&f2, &f1)] {
            match sliding_field(p, q, &g) {
                Ok((fs, alpha)) => {
                    if !(0.0..=1.0).contains(&alpha) {
                        failures.push(format!("alpha {alpha} out of range"));
                    }
                    if g.dot(&fs).abs() > 1e-12 * g.norm() * (p.norm() + q.norm()) {
                        failures.push(format!("sliding field not tangent: {}", g.dot(&fs)));
                    }
                }
                Err(e) => failures.push(e.to_string()),
            }
        }
        let base = classify_rates(&f1, &f2, &g);
        for lambda in [1e-3, 1.0, 1e3] {
            let scaled = classify_rates(&f1, &f2, &(&g * lambda));
            let same_alpha = match (base.sliding_alpha, scaled.sliding_alpha) {
                (Some(x), Some(y)) => (x - y).abs() <= 1e-12,
                (None, None) => true,
                _ => false,
            };
            if scaled.kind != base.kind || !same_alpha {
                failures.push(format!("scale {lambda}: {:?} vs {:?}", scaled.kind, base.kind));
            }
        }
    }
    check(failures.is_empty(), format!("{} failure(s) {:?}", failures.len(), failures.iter().take(3).collect::<Vec<_>>()))
}

fn exactness_off_strips() -> Outcome {
    let phi = make_transition(TransitionKind::SmoothExp, TransitionVariant::Hybrid);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut mismatches = 0;
    let mut checked = 0;
    for s in all_scenarios() {
        let h = &s.system;
        let u = Vector::zeros(h.input_dim());
        let mut per_scenario = 0;
        for k in 0..h.edges.len() {
            for eps in [1e-1, 1e-2, 1e-3] {
                let chart = build_relaxed_chart(h, k, eps).map_err(|e| e.to_string())?;
                let e = chart.edge();
                let mut n = 0;
                let mut tries = 0;
                while n < 1000 && tries < 100_000 {
                    tries += 1;
                    let x = if n % 2 == 0 {
                        h.modes[e.source].domain.bounds.sample(&mut rng)
                    } else {
                        chart.attach_inverse(&h.modes[e.target].domain.bounds.sample(&mut rng))
                    };
                    let g = chart.guard_value(&x);
                    if (0.0..=eps).contains(&g) || !chart.contains(&x) {
                        continue;
                    }
                    let got = relaxed_local_field(&chart, &phi, &x, &u).map_err(|e| e.to_string())?;
                    let want = if g < 0.0 {
                        h.modes[e.source].field.eval(&x, &u)
                    } else {
                        chart.pullback_field(&x, &u).map_err(|e| e.to_string())?
                    };
                    if got.as_slice() != want.as_slice() {
                        mismatches += 1;
                    }
                    n += 1;
                }
                per_scenario += n;
            }
        }
        if per_scenario < 1000 {
            return Err(format!("{}: only {per_scenario} samples", s.name));
        }
        checked += per_scenario;
    }
    check(mismatches == 0, format!("{checked} samples, {mismatches} mismatches"))
}

fn reverse_edge_equivalence() -> Outcome {
    let cfg = SimConfig::default();
    let plain = figure8(false);
    let rev = figure8(true);
    let a = simulate_filippov(&plain.system, &plain.default_x0, &plain.default_u, plain.default_t, &cfg).map_err(|e| e.to_string())?;
    let b = simulate_filippov(&rev.system, &rev.default_x0, &rev.default_u, rev.default_t, &cfg).map_err(|e| e.to_string())?;
    let mut times = time_grid(plain.default_t, 2000, &a);
    times.extend(b.events.iter().map(|e| e.time));
    times.sort_by(f64::total_cmp);
    let d = sup_distance(&plain, &a, &b, 0.0, &times);
    let crossings = a.count(EventKind::Crossing);
    let r0 = plain.default_x0.vector().norm();
    let r_end = a.final_point().map_or(f64::INFINITY, |p| p.vector().norm());
    check(
        d <= 1e-6,
        format!("sup distance {d:.2e}; {crossings} crossings, radius {r0:.3} -> {r_end:.3}"),
    )
}

fn execution_agreement() -> Outcome {
    let cfg = SimConfig::default();
    let mut lines = Vec::new();
    let mut ok = true;
    for s in [crossing_linear(), crossing_affine(), repelling_relay(), figure8(true), equal_fields()] {
        let h = &s.system;
        let ex = simulate_execution(h, &s.default_x0, &s.default_u, s.default_t, &cfg).map_err(|e| format!("{}: {e}", s.name))?;
        let fl = simulate_filippov(h, &s.default_x0, &s.default_u, s.default_t, &cfg).map_err(|e| format!("{}: {e}", s.name))?;
        let (jumps, crossings) = (ex.count(EventKind::ResetJump), fl.count(EventKind::Crossing));
        let mut times = time_grid(s.default_t, 2000, &fl);
        times.extend(ex.events.iter().map(|e| e.time));
        times.sort_by(f64::total_cmp);
        let d = times
            .iter()
            .map(|&t| match (ex.sample(h, t), fl.sample(h, t)) {
                (Some(p), Some(q)) => quotient_distance(h, &p, &q, 0.0),
                _ => f64::INFINITY,
            })
            .fold(0.0, f64::max);
        ok &= jumps == crossings && jumps > 0 && d <= 1e-6;
        let tag = if s.name == "figure8" { "figure8(reverse)" } else { s.name.as_str() };
        lines.push(format!("{tag} {jumps}/{crossings} events, {d:.1e}"));
    }
    check(ok, lines.join("; "))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("bimodal convergence rate", bimodal_rate),
        ("hybrid convergence rate with affine reset", hybrid_rate),
        ("Cauchy convergence without uniqueness", cauchy_convergence),
        ("bouncing ball Zeno", bouncing_ball_zeno),
        ("sliding correctness", sliding_correctness),
        ("chart algebra", chart_algebra),
        ("Filippov classification", classification),
        ("exactness off strips", exactness_off_strips),
        ("reverse-edge equivalence", reverse_edge_equivalence),
        ("execution/Filippov agreement", execution_agreement),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
