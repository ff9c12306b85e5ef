//! ε-convergence sweeps: sup-grid quotient distance between relaxed runs
//! and a reference, with a log-log slope fit and a Cauchy column.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filippov::check_transversality;
use crate::model::ValidationConfig;
use crate::scenarios::Scenario;
use crate::sim::{quotient_distance, simulate_filippov, simulate_relaxed, SimConfig, Trajectory};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reference {
    Filippov,
    FinestEps,
}

impl Reference {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "filippov" => Some(Self::Filippov),
            "finest-eps" => Some(Self::FinestEps),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub epsilons: Vec<f64>,
    pub reference: Reference,
    pub sample_count: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            epsilons: vec![1e-1, 3e-2, 1e-2, 3e-3, 1e-3],
            reference: Reference::Filippov,
            sample_count: 2000,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.epsilons.len() < 3 {
            return Err(Error::Config("a sweep needs at least 3 epsilons".into()));
        }
        if let Some(e) = self.epsilons.iter().find(|e| !(**e > 0.0) || !e.is_finite()) {
            return Err(Error::NonPositiveEpsilon(*e));
        }
        if self.epsilons.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config("epsilons must be strictly decreasing".into()));
        }
        if self.sample_count < 2 {
            return Err(Error::Config("sample_count must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub schema_version: u32,
    pub scenario: String,
    pub reference: Reference,
    pub sample_count: usize,
    pub epsilons: Vec<f64>,
    /// Sup-grid distance to the reference, one per ε.
    pub errors: Vec<f64>,
    /// Sup-grid distance between consecutive ε runs.
    pub cauchy: Vec<f64>,
    pub slope: Option<f64>,
    pub notice: Option<String>,
}

/// Runs the relaxed system for every ε of `spec` (in parallel) and measures
/// the distance to the reference trajectory.
pub fn run_sweep(scenario: &Scenario, spec: &SweepSpec, cfg: &SimConfig) -> Result<SweepReport> {
    spec.validate()?;
    let (h, x0, u, horizon) = (&scenario.system, &scenario.default_x0, &scenario.default_u, scenario.default_t);
    let reference = match spec.reference {
        Reference::Filippov => {
            let report = check_transversality(h, &ValidationConfig::default());
            if let Some(bad) = report.edges.iter().find(|e| e.violations > 0) {
                return Err(Error::Transversality { edge: bad.edge, violations: bad.violations, samples: bad.samples });
            }
            Some(simulate_filippov(h, x0, u, horizon, cfg)?)
        }
        Reference::FinestEps => None,
    };
    let runs: Vec<Trajectory> = spec
        .epsilons
        .par_iter()
        .map(|&eps| simulate_relaxed(h, x0, u, horizon, eps, cfg))
        .collect::<Result<_>>()?;
    let reference = reference.as_ref().unwrap_or_else(|| runs.last().expect("validated length"));
    let grid = time_grid(horizon, spec.sample_count, reference);
    let finest = *spec.epsilons.last().expect("validated length");

    let errors: Vec<f64> = runs
        .par_iter()
        .zip(spec.epsilons.par_iter())
        .map(|(run, &eps)| {
            let metric = if spec.reference == Reference::Filippov { eps } else { finest };
            sup_distance(scenario, reference, run, metric, &grid)
        })
        .collect();
    let cauchy: Vec<f64> = (1..runs.len())
        .into_par_iter()
        .map(|i| sup_distance(scenario, &runs[i - 1], &runs[i], spec.epsilons[i], &grid))
        .collect();

    let floor = 10.0 * (cfg.integrator.abs_tol + cfg.integrator.rel_tol);
    let fit: Vec<(f64, f64)> = spec
        .epsilons
        .iter()
        .zip(&errors)
        .filter(|(_, e)| **e > floor && e.is_finite())
        .map(|(x, e)| (x.ln(), e.ln()))
        .collect();
    let (slope, notice) = if fit.len() >= 3 {
        (Some(least_squares_slope(&fit)), None)
    } else {
        (None, Some(format!("slope fit skipped: {} of {} errors above the tolerance floor {floor:e}", fit.len(), errors.len())))
    };
    Ok(SweepReport {
        schema_version: crate::SCHEMA_VERSION,
        scenario: scenario.name.clone(),
        reference: spec.reference,
        sample_count: spec.sample_count,
        epsilons: spec.epsilons.clone(),
        errors,
        cauchy,
        slope,
        notice,
    })
}

/// Uniform grid on `[0, T]` merged with the reference's event times.
pub fn time_grid(horizon: f64, samples: usize, reference: &Trajectory) -> Vec<f64> {
    let mut grid: Vec<f64> = (0..samples).map(|i| horizon * i as f64 / (samples - 1) as f64).collect();
    grid.extend(reference.events.iter().map(|e| e.time).filter(|t| (0.0..=horizon).contains(t)));
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// `sup_t d(a(t), b(t))` over `grid`; infinite where either run is undefined.
pub fn sup_distance(scenario: &Scenario, a: &Trajectory, b: &Trajectory, epsilon: f64, grid: &[f64]) -> f64 {
    let h = &scenario.system;
    grid.iter()
        .map(|&t| match (a.sample(h, t), b.sample(h, t)) {
            (Some(p), Some(q)) => quotient_distance(h, &p, &q, epsilon),
            _ => f64::INFINITY,
        })
        .fold(0.0, f64::max)
}

/// Ordinary least-squares slope of `y` against `x`.
pub fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
