//! Filippov's solution concept for a bimodal discontinuous field across one
//! surface: the convex set, point classification and the sliding field.

use serde::Serialize;

use crate::charts::{surface_band, EdgeChart};
use crate::error::{Error, Result};
use crate::model::{rng_for, sample_guard, HybridSystem, ValidationConfig, Vector};

/// Relative size below which a normal rate counts as zero.
pub const ZERO_RATE_TOL: f64 = 1e-9;
/// Smallest admissible `|∇g·(f₁ − f₂)|`.
pub const MIN_DENOMINATOR: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CellKind {
    Interior,
    CrossingForward,
    CrossingBackward,
    AttractingSliding,
    RepellingSliding,
    TangentDegenerate,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FilippovCell {
    pub kind: CellKind,
    pub sliding_alpha: Option<f64>,
    /// `(∇g·f₁, ∇g·f₂)`.
    pub normal_rates: (f64, f64),
}

/// Filippov set of a bimodal field at one point.
#[derive(Clone, Debug, PartialEq)]
pub enum SetDescriptor {
    Singleton(Vector),
    /// `{(1−α)a + αb : α ∈ [0,1]}`.
    Segment(Vector, Vector),
}

impl SetDescriptor {
    /// Euclidean distance from `v` to the set.
    pub fn distance(&self, v: &Vector) -> f64 {
        match self {
            SetDescriptor::Singleton(a) => (v - a).norm(),
            SetDescriptor::Segment(a, b) => {
                let d = b - a;
                let dd = d.norm_squared();
                let t = if dd > 0.0 { ((v - a).dot(&d) / dd).clamp(0.0, 1.0) } else { 0.0 };
                (v - (a + d * t)).norm()
            }
        }
    }

    pub fn contains(&self, v: &Vector, tol: f64) -> bool {
        self.distance(v) <= tol
    }
}

/// `f₁` off the surface, the segment `[f₁, f₂]` on it.
pub fn filippov_set(f1: &Vector, f2: &Vector, on_surface: bool) -> SetDescriptor {
    if !on_surface || f1 == f2 {
        SetDescriptor::Singleton(f1.clone())
    } else {
        SetDescriptor::Segment(f1.clone(), f2.clone())
    }
}

pub fn zero_rate_tol(f1: &Vector, f2: &Vector, grad: &Vector) -> f64 {
    ZERO_RATE_TOL * grad.norm() * (f1.norm() + f2.norm())
}

/// Sign-table classification of a point on the surface.
pub fn classify_rates(f1: &Vector, f2: &Vector, grad: &Vector) -> FilippovCell {
    let (r1, r2) = (grad.dot(f1), grad.dot(f2));
    let tol = zero_rate_tol(f1, f2, grad);
    let kind = if r1.abs() <= tol || r2.abs() <= tol {
        CellKind::TangentDegenerate
    } else if r1 > 0.0 && r2 > 0.0 {
        CellKind::CrossingForward
    } else if r1 < 0.0 && r2 < 0.0 {
        CellKind::CrossingBackward
    } else if r1 > 0.0 {
        CellKind::AttractingSliding
    } else {
        CellKind::RepellingSliding
    };
    let sliding_alpha = matches!(kind, CellKind::AttractingSliding | CellKind::RepellingSliding)
        .then(|| r1 / (r1 - r2));
    FilippovCell { kind, sliding_alpha, normal_rates: (r1, r2) }
}

/// Classifies `x` with surface value `g`, `Interior` outside the band.
pub fn classify(g: f64, grad: &Vector, x: &Vector, f1: &Vector, f2: &Vector) -> FilippovCell {
    if g.abs() > surface_band(x) * grad.norm().max(1.0) {
        return FilippovCell {
            kind: CellKind::Interior,
            sliding_alpha: None,
            normal_rates: (grad.dot(f1), grad.dot(f2)),
        };
    }
    classify_rates(f1, f2, grad)
}

/// Classifies a point of the chart of `edge` using `f_j` and the pullback.
pub fn classify_on_edge(h: &HybridSystem, edge: usize, x: &Vector, u: &Vector) -> Result<FilippovCell> {
    let chart = EdgeChart::new(h, edge)?;
    let f1 = chart.source_field(x, u);
    let f2 = chart.pullback_field(x, u)?;
    Ok(classify(chart.guard_value(x), &chart.edge.planes.g_normal, x, &f1, &f2))
}

/// `f_s = (1−α)f₁ + αf₂` with `α = ∇g·f₁ / ∇g·(f₁ − f₂)`.
pub fn sliding_field(f1: &Vector, f2: &Vector, grad: &Vector) -> Result<(Vector, f64)> {
    let r1 = grad.dot(f1);
    let r2 = grad.dot(f2);
    let den = r1 - r2;
    if den.abs() < MIN_DENOMINATOR {
        return Err(Error::DivisionDegenerate(den.abs()));
    }
    let alpha = r1 / den;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::NotSliding(r1, r2));
    }
    Ok((f1 * (1.0 - alpha) + f2 * alpha, alpha))
}

#[derive(Clone, Debug, Serialize)]
pub struct EdgeTransversality {
    pub edge: usize,
    pub source: String,
    pub target: String,
    pub samples: usize,
    pub violations: usize,
    /// `min over samples of max(ĝᵀf_j, −r̂ᵀf_{j'}∘R)`; positive when every sample passes.
    pub margin: f64,
    pub witnesses: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TransversalityReport {
    pub schema_version: u32,
    pub satisfied: bool,
    pub edges: Vec<EdgeTransversality>,
}

/// Samples `G_e × U` and tests `ĝᵀf_j(x,u) > 0 or r̂ᵀf_{j'}(R(x),u) < 0`.
pub fn check_transversality(h: &HybridSystem, cfg: &ValidationConfig) -> TransversalityReport {
    let mut edges = Vec::new();
    for (k, e) in h.edges.iter().enumerate() {
        let mut rng = rng_for(cfg.seed, 3000 + k as u64);
        let pts = sample_guard(h, e, &mut rng, cfg.samples.max(1));
        let mut margin = f64::INFINITY;
        let mut violations = 0;
        let mut witnesses = Vec::new();
        for x in &pts {
            let u = h.input_set.sample(&mut rng);
            let r1 = e.planes.g_normal.dot(&h.modes[e.source].field.eval(x, &u));
            let r2 = e.planes.r_normal.dot(&h.modes[e.target].field.eval(&e.reset.forward(x), &u));
            let m = r1.max(-r2);
            margin = margin.min(m);
            if m <= 0.0 {
                violations += 1;
                if witnesses.len() < 8 {
                    witnesses.push(x.iter().copied().collect());
                }
            }
        }
        edges.push(EdgeTransversality {
            edge: k,
            source: h.modes[e.source].name.clone(),
            target: h.modes[e.target].name.clone(),
            samples: pts.len(),
            violations,
            margin,
            witnesses,
        });
    }
    TransversalityReport {
        schema_version: crate::SCHEMA_VERSION,
        satisfied: edges.iter().all(|e| e.violations == 0),
        edges,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_row_slice(xs)
    }

    #[test]
    fn set_descriptor_cases() {
        assert_eq!(filippov_set(&v(&[1.0, 1.0]), &v(&[1.0, 2.0]), false), SetDescriptor::Singleton(v(&[1.0, 1.0])));
        assert_eq!(filippov_set(&v(&[1.0, 1.0]), &v(&[1.0, 1.0]), true), SetDescriptor::Singleton(v(&[1.0, 1.0])));
        let s = filippov_set(&v(&[1.0, -1.0]), &v(&[1.0, 1.0]), true);
        assert!(matches!(s, SetDescriptor::Segment(..)));
        assert!(s.contains(&v(&[1.0, 0.0]), 0.0));
        assert!(!s.contains(&v(&[1.0, 2.0]), 0.5));
    }

    #[test]
    fn relay_is_attracting_with_half_alpha() {
        let c = classify_rates(&v(&[1.0, 1.0]), &v(&[1.0, -1.0]), &v(&[0.0, 1.0]));
        assert_eq!(c.kind, CellKind::AttractingSliding);
        assert_eq!(c.sliding_alpha, Some(0.5));
        assert_eq!(c.normal_rates, (1.0, -1.0));
    }

    #[test]
    fn sign_table() {
        let g = v(&[0.0, 1.0]);
        let k = |a: f64, b: f64| classify_rates(&v(&[1.0, a]), &v(&[1.0, b]), &g).kind;
        assert_eq!(k(1.0, 2.0), CellKind::CrossingForward);
        assert_eq!(k(-1.0, -2.0), CellKind::CrossingBackward);
        assert_eq!(k(1.0, -2.0), CellKind::AttractingSliding);
        assert_eq!(k(-1.0, 2.0), CellKind::RepellingSliding);
        assert_eq!(k(0.0, 0.0), CellKind::TangentDegenerate);
        assert_eq!(k(0.0, 1.0), CellKind::TangentDegenerate);
        assert_eq!(k(-1.0, 0.0), CellKind::TangentDegenerate);
        assert_eq!(k(1e-12, 1.0), CellKind::TangentDegenerate);
        let off = classify(0.5, &g, &v(&[0.0, 0.5]), &v(&[1.0, 1.0]), &v(&[1.0, -1.0]));
        assert_eq!(off.kind, CellKind::Interior);
        assert_eq!(off.sliding_alpha, None);
    }

    #[test]
    fn sliding_examples() {
        let (fs, a) = sliding_field(&v(&[1.0, 1.0]), &v(&[1.0, -1.0]), &v(&[0.0, 1.0])).unwrap();
        assert_eq!((fs, a), (v(&[1.0, 0.0]), 0.5));
        let (fs, a) = sliding_field(&v(&[2.0, 3.0]), &v(&[0.0, -1.0]), &v(&[0.0, 1.0])).unwrap();
        assert_eq!(a, 0.75);
        assert!((fs - v(&[0.5, 0.0])).norm() < 1e-15);
        let (fs, a) = sliding_field(&v(&[2.0, 3.0]), &v(&[0.0, -1e-12]), &v(&[0.0, 1.0])).unwrap();
        assert!(1.0 - a < 1e-11);
        assert!(fs.norm() < 1e-11);
    }

    #[test]
    fn degenerate_and_nonsliding_errors() {
        let g = v(&[0.0, 1.0]);
        assert!(matches!(
            sliding_field(&v(&[1.0, 0.0]), &v(&[2.0, 0.0]), &g),
            Err(Error::DivisionDegenerate(_))
        ));
        assert!(matches!(sliding_field(&v(&[1.0, 1.0]), &v(&[1.0, 2.0]), &g), Err(Error::NotSliding(..))));
    }

    proptest! {
        #[test]
        fn sliding_is_tangent_and_alpha_in_range(
            a in prop::array::uniform3(-5.0f64..5.0),
            b in prop::array::uniform3(-5.0f64..5.0),
            g in prop::array::uniform3(-1.0f64..1.0),
        ) {
            let (f1, f2, grad) = (v(&a), v(&b), v(&g));
            prop_assume!(grad.norm() > 1e-3);
            let r1 = grad.dot(&f1);
            let r2 = grad.dot(&f2);
            prop_assume!(r1 > 1e-6 && r2 < -1e-6);
            let (fs, alpha) = sliding_field(&f1, &f2, &grad).unwrap();
            prop_assert!(alpha > 0.0 && alpha < 1.0);
            prop_assert!(grad.dot(&fs).abs() <= 1e-12 * grad.norm() * (f1.norm() + f2.norm()));
        }

        #[test]
        fn classification_is_scale_invariant(
            a in prop::array::uniform2(-5.0f64..5.0),
            b in prop::array::uniform2(-5.0f64..5.0),
            g in prop::array::uniform2(-1.0f64..1.0),
            li in 0usize..3,
        ) {
            let lambda = [1e-3, 1.0, 1e3][li];
            let (f1, f2, grad) = (v(&a), v(&b), v(&g));
            prop_assume!(grad.norm() > 1e-3);
            let c1 = classify_rates(&f1, &f2, &grad);
            let c2 = classify_rates(&f1, &f2, &(&grad * lambda));
            prop_assert_eq!(c1.kind, c2.kind);
            match (c1.sliding_alpha, c2.sliding_alpha) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() <= 1e-12),
                (None, None) => {}
                _ => prop_assert!(false),
            }
        }
    }
}
