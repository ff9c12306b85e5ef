use crate::charts::{build_relaxed_chart, EdgeChart};
use crate::model::HybridSystem;

use super::QuotientPoint;

/// Distance on the (relaxed, when `epsilon > 0`) quotient space: the
/// smallest Euclidean distance over the mode and edge charts that contain
/// both points. Infinite when no chart does.
pub fn quotient_distance(h: &HybridSystem, a: &QuotientPoint, b: &QuotientPoint, epsilon: f64) -> f64 {
    let (xa, xb) = (a.vector(), b.vector());
    let mut best = if a.mode == b.mode { (&xa - &xb).norm() } else { f64::INFINITY };
    for (k, e) in h.edges.iter().enumerate() {
        let touches = |q: &QuotientPoint| q.mode == e.source || q.mode == e.target;
        if !touches(a) || !touches(b) {
            continue;
        }
        let coords = if epsilon > 0.0 {
            let Ok(chart) = build_relaxed_chart(h, k, epsilon) else { continue };
            chart
                .from_global(a.mode, &xa, a.epsilon_layer)
                .zip(chart.from_global(b.mode, &xb, b.epsilon_layer))
        } else {
            let chart = EdgeChart { system: h, edge_index: k, edge: e };
            chart.from_global(a.mode, &xa).zip(chart.from_global(b.mode, &xb))
        };
        if let Some((ca, cb)) = coords {
            best = best.min((ca - cb).norm());
        }
    }
    best
}
