//! Sample-based audit of the standing assumptions on a hybrid system.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{fd_jacobian, rel_frobenius, Edge, HybridSystem, Mode, ModeId, Plane, Vector};
use crate::charts::EdgeChart;
use crate::error::{Error, Result};

pub const SIGN_TOL: f64 = 1e-10;
pub const ROUND_TRIP_TOL: f64 = 1e-9;
pub const MIN_SINGULAR: f64 = 1e-8;
pub const JACOBIAN_REL_TOL: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct ValidationConfig {
    /// Samples per set.
    pub samples: usize,
    pub seed: u64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self { samples: 256, seed: 0x5eed }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Violated,
    /// Informational estimate, not pass/fail.
    Reported,
    NotCheckable,
}

#[derive(Clone, Debug, Serialize)]
pub struct AssumptionEntry {
    /// Short key: `lipschitz`, `hyperplane_signs`, `reset_diffeomorphism`,
    /// `jacobian_consistency`, `disjoint_surfaces`, `boundary_coverage`,
    /// `chart_overlap`.
    pub assumption: String,
    pub subject: String,
    pub status: CheckStatus,
    pub value: Option<f64>,
    pub message: String,
    pub witnesses: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub schema_version: u32,
    pub samples: usize,
    pub entries: Vec<AssumptionEntry>,
}

impl ValidationReport {
    pub fn violations(&self) -> impl Iterator<Item = &AssumptionEntry> {
        self.entries.iter().filter(|e| e.status == CheckStatus::Violated)
    }

    pub fn is_violated(&self, assumption: &str) -> bool {
        self.violations().any(|e| e.assumption == assumption)
    }

    /// Violations outside the given whitelist of assumption keys.
    pub fn unexpected_violations<'a>(&'a self, allowed: &'a [&str]) -> Vec<&'a AssumptionEntry> {
        self.violations()
            .filter(|e| !allowed.contains(&e.assumption.as_str()))
            .collect()
    }
}

fn entry(assumption: &str, subject: String, status: CheckStatus, value: Option<f64>, message: String) -> AssumptionEntry {
    AssumptionEntry {
        assumption: assumption.into(),
        subject,
        status,
        value,
        message,
        witnesses: Vec::new(),
    }
}

fn witness(x: &Vector) -> Vec<f64> {
    x.iter().copied().collect()
}

pub(crate) fn rng_for(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// Rejection samples from `D_j` inside its bounding box.
pub(crate) fn sample_domain(mode: &Mode, rng: &mut ChaCha8Rng, n: usize) -> Vec<Vector> {
    let mut out = Vec::with_capacity(n);
    let mut tries = 0;
    while out.len() < n && tries < 200 * n.max(1) {
        tries += 1;
        let x = mode.domain.bounds.sample(rng);
        if mode.domain.contains(&x) {
            out.push(x);
        }
    }
    out
}

/// Samples of `G_e`: box samples of the source domain projected onto the
/// guard plane, kept when they are in the guard set and the source domain.
pub(crate) fn sample_guard(h: &HybridSystem, e: &Edge, rng: &mut ChaCha8Rng, n: usize) -> Vec<Vector> {
    let mode = &h.modes[e.source];
    let mut out = Vec::with_capacity(n);
    let mut tries = 0;
    while out.len() < n && tries < 200 * n.max(1) {
        tries += 1;
        let x = mode.domain.bounds.sample(rng);
        let p = &x - &e.planes.g_normal * e.guard_value(&x);
        if e.in_guard_set(&p) && mode.domain.contains(&p) {
            out.push(p);
        }
    }
    out
}

/// Validates the standing assumptions by sampling.
pub fn validate_system(h: &HybridSystem, cfg: &ValidationConfig) -> Result<ValidationReport> {
    if h.modes.iter().any(|m| m.field.dim() != h.dim) {
        return Err(Error::Structural("mode field dimension disagrees with system".into()));
    }
    let n = cfg.samples.max(2);
    let mut entries = Vec::new();
    let u0 = |rng: &mut ChaCha8Rng| h.input_set.sample(rng);

    // Lipschitz estimates and Jacobian consistency of the mode fields.
    for (j, mode) in h.modes.iter().enumerate() {
        let mut rng = rng_for(cfg.seed, 1 + j as u64);
        let xs = sample_domain(mode, &mut rng, n);
        let est = |count: usize, rng: &mut ChaCha8Rng| {
            let mut lip: f64 = 0.0;
            for w in xs[..count.min(xs.len())].windows(2) {
                let u = u0(rng);
                let dx = (&w[0] - &w[1]).norm();
                if dx > 0.0 {
                    lip = lip.max((mode.field.eval(&w[0], &u) - mode.field.eval(&w[1], &u)).norm() / dx);
                }
            }
            lip
        };
        let half = est(xs.len() / 2, &mut rng);
        let full = est(xs.len(), &mut rng);
        let growing = full > 1.05 * half && full > 1e-12;
        entries.push(entry(
            "lipschitz",
            format!("mode {}", mode.name),
            CheckStatus::Reported,
            Some(full),
            if growing {
                format!("estimate {full:.6e} still growing with sample count (half-sample estimate {half:.6e})")
            } else {
                format!("estimate {full:.6e}")
            },
        ));
        if mode.field.has_jacobian() {
            let mut worst: f64 = 0.0;
            let mut wit = None;
            for x in xs.iter().take(32) {
                let u = u0(&mut rng);
                let a = mode.field.analytic_jacobian(x, &u).expect("has jacobian");
                let fd = fd_jacobian(|y| mode.field.eval(y, &u), x);
                let err = if fd.norm() < 1e-12 && a.norm() < 1e-12 { 0.0 } else { rel_frobenius(&a, &fd) };
                if err > worst {
                    worst = err;
                    wit = Some(x.clone());
                }
            }
            let mut en = entry(
                "jacobian_consistency",
                format!("field of mode {}", mode.name),
                if worst <= JACOBIAN_REL_TOL { CheckStatus::Pass } else { CheckStatus::Violated },
                Some(worst),
                format!("max relative Frobenius error {worst:.3e}"),
            );
            if worst > JACOBIAN_REL_TOL {
                en.witnesses.extend(wit.iter().map(witness));
            }
            entries.push(en);
        }
    }

    // Per-edge checks.
    for (k, e) in h.edges.iter().enumerate() {
        let name = format!("edge {k} ({} -> {})", h.modes[e.source].name, h.modes[e.target].name);
        let mut rng = rng_for(cfg.seed, 1000 + k as u64);
        let src = sample_domain(&h.modes[e.source], &mut rng, n);
        let tgt = sample_domain(&h.modes[e.target], &mut rng, n);
        let guard = sample_guard(h, e, &mut rng, n);

        // Sign convention.
        let mut worst_g = f64::NEG_INFINITY;
        let mut wit_g = None;
        for x in &src {
            let g = e.guard_value(x);
            let on_guard = g.abs() <= SIGN_TOL && e.in_guard_set(x);
            if !on_guard && g > worst_g {
                worst_g = g;
                wit_g = Some(x.clone());
            }
        }
        let mut worst_r = f64::INFINITY;
        let mut wit_r = None;
        for y in &tgt {
            let r = e.image_value(y);
            let on_image = r.abs() <= SIGN_TOL && e.in_image_set(y);
            if !on_image && r < worst_r {
                worst_r = r;
                wit_r = Some(y.clone());
            }
        }
        let ok = worst_g <= SIGN_TOL && worst_r >= -SIGN_TOL;
        let mut en = entry(
            "hyperplane_signs",
            name.clone(),
            if ok { CheckStatus::Pass } else { CheckStatus::Violated },
            Some(worst_g.max(-worst_r)),
            format!("max g_e on source samples {worst_g:.3e}, min r_e on target samples {worst_r:.3e}"),
        );
        if !ok {
            if worst_g > SIGN_TOL {
                en.witnesses.extend(wit_g.iter().map(witness));
            }
            if worst_r < -SIGN_TOL {
                en.witnesses.extend(wit_r.iter().map(witness));
            }
        }
        entries.push(en);

        // Reset invertibility and conditioning.
        let mut worst_rt: f64 = 0.0;
        let mut min_sv = f64::INFINITY;
        let mut max_cond: f64 = 1.0;
        let mut wit = Vec::new();
        let mut jac_err: f64 = 0.0;
        for x in &guard {
            let y = e.reset.forward(x);
            let back = e.reset.inverse(&y);
            let rt = (&back - x).norm() / (1.0 + x.norm());
            let fwd = (e.reset.forward(&e.reset.inverse(&y)) - &y).norm() / (1.0 + y.norm());
            let err = rt.max(fwd);
            if err > ROUND_TRIP_TOL {
                wit.push(witness(x));
            }
            worst_rt = worst_rt.max(err);
            let jac = e.reset.jacobian(x);
            let sv = jac.singular_values();
            let lo = sv.min();
            let hi = sv.max();
            min_sv = min_sv.min(lo);
            max_cond = max_cond.max(if lo > 0.0 { hi / lo } else { f64::INFINITY });
            if let Some(a) = e.reset.analytic_jacobian(x) {
                jac_err = jac_err.max(rel_frobenius(&a, &fd_jacobian(|z| e.reset.forward(z), x)));
            }
        }
        let ok = worst_rt <= ROUND_TRIP_TOL && min_sv > MIN_SINGULAR;
        let mut en = entry(
            "reset_diffeomorphism",
            name.clone(),
            if guard.is_empty() {
                CheckStatus::NotCheckable
            } else if ok {
                CheckStatus::Pass
            } else {
                CheckStatus::Violated
            },
            Some(min_sv),
            format!(
                "round-trip error {worst_rt:.3e}, smallest singular value {min_sv:.6e}, condition number {max_cond:.6e}"
            ),
        );
        en.witnesses = wit.into_iter().take(8).collect();
        entries.push(en);
        if e.reset.has_jacobian() && !guard.is_empty() {
            entries.push(entry(
                "jacobian_consistency",
                format!("reset of {name}"),
                if jac_err <= JACOBIAN_REL_TOL { CheckStatus::Pass } else { CheckStatus::Violated },
                Some(jac_err),
                format!("max relative Frobenius error {jac_err:.3e}"),
            ));
        }

        // Chart overlap: attached copy of the target domain intruding into D_j.
        let chart = EdgeChart::new(h, k)?;
        let mut intrusions = Vec::new();
        for y in &tgt {
            let x = chart.attach_inverse(y);
            if e.guard_value(&x) < -SIGN_TOL && h.modes[e.source].domain.contains(&x) {
                intrusions.push(witness(&x));
            }
        }
        let mut en = entry(
            "chart_overlap",
            name.clone(),
            if intrusions.is_empty() { CheckStatus::Pass } else { CheckStatus::Reported },
            Some(intrusions.len() as f64),
            if intrusions.is_empty() {
                "attached target domain stays on the positive side of the guard".into()
            } else {
                format!("warning: {} attached samples fall inside the source domain", intrusions.len())
            },
        );
        en.witnesses = intrusions.into_iter().take(8).collect();
        entries.push(en);
    }

    entries.extend(check_disjoint_surfaces(h, cfg, n));

    for mode in &h.modes {
        entries.push(entry(
            "boundary_coverage",
            format!("mode {}", mode.name),
            CheckStatus::NotCheckable,
            None,
            format!("declared boundary pieces: [{}]", mode.domain.boundary_pieces.join("; ")),
        ));
    }

    Ok(ValidationReport { schema_version: crate::SCHEMA_VERSION, samples: n, entries })
}

struct Surface<'a> {
    label: String,
    mode: ModeId,
    plane: Plane,
    edge: &'a Edge,
    is_guard: bool,
}

impl Surface<'_> {
    fn contains(&self, h: &HybridSystem, x: &Vector) -> bool {
        let in_set = if self.is_guard { self.edge.in_guard_set(x) } else { self.edge.in_image_set(x) };
        in_set && self.plane.value(x).abs() <= 1e-9 * (1.0 + x.norm()) && h.modes[self.mode].domain.contains(x)
    }
}

fn surfaces(h: &HybridSystem) -> Vec<Surface<'_>> {
    let mut out = Vec::new();
    for (k, e) in h.edges.iter().enumerate() {
        out.push(Surface {
            label: format!("G_{k}"),
            mode: e.source,
            plane: e.guard_plane(),
            edge: e,
            is_guard: true,
        });
        out.push(Surface {
            label: format!("R_{k}(G_{k})"),
            mode: e.target,
            plane: e.image_plane(),
            edge: e,
            is_guard: false,
        });
    }
    out
}

/// Closest point to `x` on the intersection of two non-parallel planes.
fn project_to_intersection(a: &Plane, b: &Plane, x: &Vector) -> Vector {
    let g11 = a.normal.dot(&a.normal);
    let g12 = a.normal.dot(&b.normal);
    let g22 = b.normal.dot(&b.normal);
    let ra = a.value(x);
    let rb = b.value(x);
    let det = g11 * g22 - g12 * g12;
    let la = (g22 * ra - g12 * rb) / det;
    let lb = (g11 * rb - g12 * ra) / det;
    x - &a.normal * la - &b.normal * lb
}

fn check_disjoint_surfaces(h: &HybridSystem, cfg: &ValidationConfig, n: usize) -> Vec<AssumptionEntry> {
    let surfs = surfaces(h);
    let mut out = Vec::new();
    let mut rng = rng_for(cfg.seed, 77);
    for i in 0..surfs.len() {
        for j in (i + 1)..surfs.len() {
            let (a, b) = (&surfs[i], &surfs[j]);
            if a.mode != b.mode {
                continue;
            }
            let subject = format!("{} vs {} in mode {}", a.label, b.label, h.modes[a.mode].name);
            // Sample the first surface.
            let mode = &h.modes[a.mode];
            let mut samples = Vec::new();
            let mut tries = 0;
            while samples.len() < n && tries < 200 * n {
                tries += 1;
                let x = mode.domain.bounds.sample(&mut rng);
                let p = &x - &a.plane.normal * a.plane.value(&x);
                if a.contains(h, &p) {
                    samples.push(p);
                }
            }
            let parallel = (a.plane.normal.dot(&b.plane.normal).abs() - 1.0).abs() < 1e-12;
            let mut hits = Vec::new();
            let mut min_dist = f64::INFINITY;
            if parallel {
                if a.plane.coincides(&b.plane, 1e-12) {
                    for x in &samples {
                        if b.contains(h, x) {
                            hits.push(x.clone());
                        }
                    }
                    min_dist = if hits.is_empty() { f64::NAN } else { 0.0 };
                } else {
                    min_dist = (a.plane.value(&(&b.plane.normal * b.plane.offset))).abs();
                }
            } else {
                let mut candidates: Vec<Vector> =
                    samples.iter().map(|x| project_to_intersection(&a.plane, &b.plane, x)).collect();
                candidates.push(project_to_intersection(&a.plane, &b.plane, &Vector::zeros(h.dim)));
                for x in &candidates {
                    if a.contains(h, x) && b.contains(h, x) {
                        hits.push(x.clone());
                    }
                }
                for x in &samples {
                    min_dist = min_dist.min(b.plane.value(x).abs());
                }
                if !hits.is_empty() {
                    min_dist = 0.0;
                }
            }
            let mut en = entry(
                "disjoint_surfaces",
                subject,
                if hits.is_empty() { CheckStatus::Pass } else { CheckStatus::Violated },
                Some(min_dist),
                if hits.is_empty() {
                    format!("sampled minimum distance {min_dist:.3e}")
                } else {
                    format!("surfaces intersect ({} witnesses)", hits.len())
                },
            );
            hits.sort_by(|p, q| p.norm().total_cmp(&q.norm()));
            en.witnesses = hits.iter().take(4).map(witness).collect();
            out.push(en);
        }
    }
    out
}
