//! Transition functions and ε-relaxed vector fields.

use serde::{Deserialize, Serialize};

use crate::charts::RelaxedEdgeChart;
use crate::error::{Error, Result};
use crate::model::{ModeField, Plane, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransitionKind {
    /// `B(s)/(B(s)+B(1−s))` with `B(t) = exp(−1/t)`; C^∞.
    SmoothExp,
    /// Quintic smoothstep, only C².
    PolynomialC2,
    /// Nonic smoothstep, only C⁴.
    PolynomialC4,
}

impl TransitionKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "smooth-exp" => Some(Self::SmoothExp),
            "poly-c2" => Some(Self::PolynomialC2),
            "poly-c4" => Some(Self::PolynomialC4),
            _ => None,
        }
    }

    pub fn is_smooth(self) -> bool {
        self == Self::SmoothExp
    }
}

/// Interval on which the transition ramps from 0 to 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransitionVariant {
    /// `(−1, 1)`, for bimodal relaxations.
    Symmetric,
    /// `(0, 1)`, for hybrid strips.
    Hybrid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionFunction {
    pub kind: TransitionKind,
    pub variant: TransitionVariant,
}

pub fn make_transition(kind: TransitionKind, variant: TransitionVariant) -> TransitionFunction {
    TransitionFunction { kind, variant }
}

fn bump(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

impl TransitionFunction {
    /// Value in `[0, 1]`; exactly 0 below and exactly 1 above the ramp.
    pub fn eval(&self, a: f64) -> f64 {
        let s = match self.variant {
            TransitionVariant::Symmetric => (a + 1.0) / 2.0,
            TransitionVariant::Hybrid => a,
        };
        if s <= 0.0 {
            return 0.0;
        }
        if s >= 1.0 {
            return 1.0;
        }
        match self.kind {
            TransitionKind::SmoothExp => {
                let (p, q) = (bump(s), bump(1.0 - s));
                p / (p + q)
            }
            TransitionKind::PolynomialC2 => (s * s * s * (10.0 + s * (-15.0 + 6.0 * s))).clamp(0.0, 1.0),
            TransitionKind::PolynomialC4 => {
                let s5 = s.powi(5);
                (s5 * (126.0 + s * (-420.0 + s * (540.0 + s * (-315.0 + 70.0 * s))))).clamp(0.0, 1.0)
            }
        }
    }
}

/// `(1−w)a + w b`, returning an endpoint verbatim when `w ∈ {0, 1}`.
pub fn blend(a: &Vector, b: &Vector, w: f64) -> Vector {
    if w == 0.0 {
        a.clone()
    } else if w == 1.0 {
        b.clone()
    } else {
        a * (1.0 - w) + b * w
    }
}

/// Bimodal relaxation `(1 − φ(g/ε)) f₁ + φ(g/ε) f₂`.
pub fn relaxed_bimodal_field(
    f1: &ModeField,
    f2: &ModeField,
    g: &Plane,
    phi: &TransitionFunction,
    eps: f64,
    x: &Vector,
    u: &Vector,
) -> Result<Vector> {
    if !(eps > 0.0) {
        return Err(Error::NonPositiveEpsilon(eps));
    }
    if phi.variant != TransitionVariant::Symmetric {
        return Err(Error::Config("bimodal relaxation needs the symmetric transition variant".into()));
    }
    let w = phi.eval(g.value(x) / eps);
    Ok(if w == 0.0 {
        f1.eval(x, u)
    } else if w == 1.0 {
        f2.eval(x, u)
    } else {
        blend(&f1.eval(x, u), &f2.eval(x, u), w)
    })
}

/// Blend weight `φ(g_e(x)/ε)` of the hybrid relaxation.
pub fn hybrid_weight(chart: &RelaxedEdgeChart<'_>, phi: &TransitionFunction, x: &Vector) -> f64 {
    phi.eval(chart.guard_value(x) / chart.epsilon)
}

/// Relaxed local field without the chart-membership check.
pub(crate) fn relaxed_local_field_unchecked(
    chart: &RelaxedEdgeChart<'_>,
    phi: &TransitionFunction,
    x: &Vector,
    u: &Vector,
) -> Result<Vector> {
    let w = hybrid_weight(chart, phi, x);
    if w == 0.0 {
        Ok(chart.base.source_field(x, u))
    } else if w == 1.0 {
        chart.pullback_field(x, u)
    } else {
        Ok(blend(&chart.base.source_field(x, u), &chart.pullback_field(x, u)?, w))
    }
}

/// `f_e^ε = (1 − φ(g_e/ε)) f_j + φ(g_e/ε) f^ε_{j',e}`.
pub fn relaxed_local_field(
    chart: &RelaxedEdgeChart<'_>,
    phi: &TransitionFunction,
    x: &Vector,
    u: &Vector,
) -> Result<Vector> {
    if phi.variant != TransitionVariant::Hybrid {
        return Err(Error::Config("hybrid relaxation needs the hybrid transition variant".into()));
    }
    if !chart.contains(x) {
        return Err(Error::OutsideChart { edge: chart.base.edge_index });
    }
    relaxed_local_field_unchecked(chart, phi, x, u)
}

/// Bilinear blend over two independent weights, fields ordered
/// `[f(0,0), f(1,0), f(0,1), f(1,1)]`.
pub fn corner_blend(fields: [&Vector; 4], w1: f64, w2: f64) -> Vector {
    let low = blend(fields[0], fields[1], w1);
    let high = blend(fields[2], fields[3], w1);
    blend(&low, &high, w2)
}
