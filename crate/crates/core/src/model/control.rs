use std::fmt;
use std::sync::Arc;

use super::{InputSet, Vector};
use crate::error::{Error, Result};

type SegmentFn = Arc<dyn Fn(f64) -> Vector + Send + Sync>;

/// Piecewise-continuous input `u: [0, T] → U`, right-continuous at breakpoints.
#[derive(Clone)]
pub struct ControlSignal {
    horizon: f64,
    /// Start time of each segment; `starts[0] == 0`.
    starts: Vec<f64>,
    segments: Vec<SegmentFn>,
    dim: usize,
}

impl ControlSignal {
    /// `starts` must begin at 0, increase strictly and stay below `horizon`.
    pub fn piecewise(horizon: f64, starts: Vec<f64>, segments: Vec<SegmentFn>, dim: usize) -> Result<Self> {
        if !(horizon > 0.0) {
            return Err(Error::Config(format!("control horizon must be positive, got {horizon}")));
        }
        if starts.is_empty() || starts.len() != segments.len() || starts[0] != 0.0 {
            return Err(Error::Config("control segments must start at t = 0".into()));
        }
        if starts.windows(2).any(|w| w[1] <= w[0]) || starts.iter().any(|s| *s >= horizon) {
            return Err(Error::Config("control breakpoints must increase inside [0, T)".into()));
        }
        Ok(Self { horizon, starts, segments, dim })
    }

    pub fn constant(horizon: f64, value: Vector) -> Result<Self> {
        let dim = value.len();
        Self::piecewise(horizon, vec![0.0], vec![Arc::new(move |_t| value.clone())], dim)
    }

    /// Zero-dimensional input for autonomous systems.
    pub fn none(horizon: f64) -> Self {
        Self::constant(horizon, Vector::zeros(0)).expect("positive horizon")
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Interior breakpoints (segment starts after 0).
    pub fn breakpoints(&self) -> &[f64] {
        &self.starts[1..]
    }

    pub fn eval(&self, t: f64) -> Result<Vector> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::OutsideHorizon { t, horizon: self.horizon });
        }
        let k = self.starts.partition_point(|s| *s <= t) - 1;
        Ok((self.segments[k])(t))
    }

    /// Evaluation clamped into the horizon, used inside integrators whose
    /// stage times may overshoot by rounding.
    pub(crate) fn eval_clamped(&self, t: f64) -> Vector {
        let t = t.clamp(0.0, self.horizon);
        let k = self.starts.partition_point(|s| *s <= t) - 1;
        (self.segments[k])(t)
    }

    /// Segment containing `t` for the purpose of integrating over `[t, ·)`.
    pub(crate) fn next_breakpoint_after(&self, t: f64) -> Option<f64> {
        self.starts.iter().copied().find(|s| *s > t)
    }

    /// Checks values at `samples` uniformly spaced times lie in `set`.
    pub fn within(&self, set: &InputSet, samples: usize) -> bool {
        (0..=samples).all(|i| {
            let t = self.horizon * i as f64 / samples.max(1) as f64;
            set.contains(&self.eval_clamped(t), 1e-12)
        })
    }
}

/// Evaluates the input at `t`.
pub fn eval_control(u: &ControlSignal, t: f64) -> Result<Vector> {
    u.eval(t)
}

impl fmt::Debug for ControlSignal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlSignal")
            .field("horizon", &self.horizon)
            .field("starts", &self.starts)
            .field("dim", &self.dim)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn constant_signal() {
        let u = ControlSignal::constant(1.0, Vector::from_element(1, 0.3)).unwrap();
        assert_eq!(eval_control(&u, 0.5).unwrap()[0], 0.3);
    }

    #[test]
    fn right_continuous_at_breakpoint() {
        let u = ControlSignal::piecewise(
            2.0,
            vec![0.0, 1.0],
            vec![
                Arc::new(|_t| Vector::from_element(1, 0.0)),
                Arc::new(|_t| Vector::from_element(1, 1.0)),
            ],
            1,
        )
        .unwrap();
        assert_eq!(u.eval(1.0).unwrap()[0], 1.0);
        assert_eq!(u.eval(0.999).unwrap()[0], 0.0);
        assert_eq!(u.eval(2.0).unwrap()[0], 1.0);
    }

    #[test]
    fn sinusoid_segment() {
        let u = ControlSignal::piecewise(PI, vec![0.0], vec![Arc::new(|t: f64| Vector::from_element(1, t.sin()))], 1)
            .unwrap();
        assert!((u.eval(PI / 2.0).unwrap()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn outside_horizon_is_an_error() {
        let u = ControlSignal::none(1.0);
        assert!(matches!(u.eval(1.5), Err(Error::OutsideHorizon { .. })));
        assert!(matches!(u.eval(-0.1), Err(Error::OutsideHorizon { .. })));
    }

    #[test]
    fn bad_breakpoints_rejected() {
        let seg: SegmentFn = Arc::new(|_t| Vector::zeros(0));
        assert!(ControlSignal::piecewise(1.0, vec![0.0, 0.0], vec![seg.clone(), seg.clone()], 0).is_err());
        assert!(ControlSignal::piecewise(1.0, vec![0.5], vec![seg], 0).is_err());
    }
}
