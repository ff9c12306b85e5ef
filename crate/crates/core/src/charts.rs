//! Per-edge coordinate charts of the hybrid quotient space and their
//! ε-relaxed variants.
//!
//! A chart for edge `e = (j, j')` lives in the coordinates of mode `j`: the
//! half-space `g_e < 0` is (part of) `D_j` and the half-space `g_e > 0` is the
//! copy of `D_{j'}` glued across the guard by the attach map `R̄_e`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{rng_for, sample_domain, sample_guard, Edge, HybridSystem, Matrix, ModeId, Vector};

/// Relative half-width of the band treated as "on the surface".
pub const SURFACE_TOL: f64 = 1e-9;
/// Attach Jacobians with a smaller reciprocal condition number are singular.
pub const RCOND_MIN: f64 = 1e-10;

pub fn surface_band(x: &Vector) -> f64 {
    SURFACE_TOL * (1.0 + x.norm())
}

/// `p_e(x) = x − ĝ_e g_e(x)`.
pub fn project_guard(e: &Edge, x: &Vector) -> Vector {
    x - &e.planes.g_normal * e.guard_value(x)
}

/// `R̄_e(x) = R_e(p_e(x)) + r̂_e g_e(x)`.
pub fn attach_map(e: &Edge, x: &Vector) -> Vector {
    e.reset.forward(&project_guard(e, x)) + &e.planes.r_normal * e.guard_value(x)
}

/// `R̄_e^{-1}(y) = R_e^{-1}(y − r̂_e r_e(y)) + ĝ_e r_e(y)`.
pub fn attach_map_inverse(e: &Edge, y: &Vector) -> Vector {
    let r = e.image_value(y);
    e.reset.inverse(&(y - &e.planes.r_normal * r)) + &e.planes.g_normal * r
}

/// `∇R̄_e(x) = ∇R_e(p_e(x))(I − ĝĝᵀ) + r̂ĝᵀ`.
pub fn attach_jacobian(e: &Edge, x: &Vector) -> Matrix {
    let g = &e.planes.g_normal;
    let n = g.len();
    let tangential = Matrix::identity(n, n) - g * g.transpose();
    e.reset.jacobian(&project_guard(e, x)) * tangential + &e.planes.r_normal * g.transpose()
}

fn norm1(m: &Matrix) -> f64 {
    m.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Solves `m z = rhs` by LU, rejecting ill-conditioned `m`.
pub(crate) fn solve_chart(m: &Matrix, rhs: &Vector, edge: usize) -> Result<Vector> {
    let lu = m.clone().lu();
    let inv = lu.try_inverse().ok_or(Error::ChartSingular { edge, rcond: 0.0 })?;
    let rcond = 1.0 / (norm1(m) * norm1(&inv));
    if !(rcond >= RCOND_MIN) {
        return Err(Error::ChartSingular { edge, rcond });
    }
    m.clone()
        .lu()
        .solve(rhs)
        .ok_or(Error::ChartSingular { edge, rcond })
}

/// Chart of one edge.
#[derive(Clone, Copy, Debug)]
pub struct EdgeChart<'a> {
    pub system: &'a HybridSystem,
    pub edge_index: usize,
    pub edge: &'a Edge,
}

impl<'a> EdgeChart<'a> {
    pub fn new(system: &'a HybridSystem, edge_index: usize) -> Result<Self> {
        let edge = system.edge(edge_index)?;
        Ok(Self { system, edge_index, edge })
    }

    pub fn source(&self) -> ModeId {
        self.edge.source
    }

    pub fn target(&self) -> ModeId {
        self.edge.target
    }

    pub fn guard_value(&self, x: &Vector) -> f64 {
        self.edge.guard_value(x)
    }

    pub fn project(&self, x: &Vector) -> Vector {
        project_guard(self.edge, x)
    }

    pub fn attach(&self, x: &Vector) -> Vector {
        attach_map(self.edge, x)
    }

    pub fn attach_inverse(&self, y: &Vector) -> Vector {
        attach_map_inverse(self.edge, y)
    }

    pub fn attach_jacobian(&self, x: &Vector) -> Matrix {
        attach_jacobian(self.edge, x)
    }

    /// `f_{j',e}(x, u) = (∇R̄_e(x))^{-1} f_{j'}(R̄_e(x), u)`, evaluated
    /// wherever the attach Jacobian is regular.
    pub fn pullback_field(&self, x: &Vector, u: &Vector) -> Result<Vector> {
        let y = self.attach(x);
        let fy = self.system.modes[self.edge.target].field.eval(&y, u);
        solve_chart(&self.attach_jacobian(x), &fy, self.edge_index)
    }

    /// `f_j` on the source side.
    pub fn source_field(&self, x: &Vector, u: &Vector) -> Vector {
        self.system.modes[self.edge.source].field.eval(x, u)
    }

    /// Piecewise local field `f_e`; undefined on the surface band.
    pub fn local_field(&self, x: &Vector, u: &Vector) -> Result<Vector> {
        let g = self.guard_value(x);
        if g.abs() < surface_band(x) {
            return Err(Error::OnDiscontinuity { edge: self.edge_index, value: g.abs() });
        }
        if !self.contains(x) {
            return Err(Error::OutsideChart { edge: self.edge_index });
        }
        if g < 0.0 {
            Ok(self.source_field(x, u))
        } else {
            self.pullback_field(x, u)
        }
    }

    /// Membership in `D̂_e = int(D_j) ∪ G_e ∪ int(D_{j',e})`.
    pub fn contains(&self, x: &Vector) -> bool {
        let g = self.guard_value(x);
        if g.abs() <= surface_band(x) {
            return self.edge.in_guard_set(&self.project(x));
        }
        if g < 0.0 {
            self.system.modes[self.edge.source].domain.contains(x)
        } else {
            self.system.modes[self.edge.target].domain.contains(&self.attach(x))
        }
    }

    /// Canonical `(mode, point)` representative; guard points stay in the source mode.
    pub fn global_rep(&self, x: &Vector) -> (ModeId, Vector) {
        if self.guard_value(x) <= 0.0 {
            (self.edge.source, x.clone())
        } else {
            (self.edge.target, self.attach(x))
        }
    }

    /// Chart coordinates of a global representative.
    pub fn from_global(&self, mode: ModeId, y: &Vector) -> Option<Vector> {
        let e = self.edge;
        if mode == e.source && (mode != e.target || e.guard_value(y) <= surface_band(y)) {
            Some(y.clone())
        } else if mode == e.target {
            Some(self.attach_inverse(y))
        } else {
            None
        }
    }
}

/// Builds the unrelaxed chart of edge `edge_index`.
pub fn build_chart(h: &HybridSystem, edge_index: usize) -> Result<EdgeChart<'_>> {
    EdgeChart::new(h, edge_index)
}

/// Local field `f_e` of edge `edge_index` at `x`.
pub fn local_field(h: &HybridSystem, edge_index: usize, x: &Vector, u: &Vector) -> Result<Vector> {
    EdgeChart::new(h, edge_index)?.local_field(x, u)
}

/// Re-expresses chart coordinates of `from` in chart `to`.
pub fn chart_transition(h: &HybridSystem, from: usize, to: usize, x: &Vector) -> Result<Vector> {
    let a = EdgeChart::new(h, from)?;
    let b = EdgeChart::new(h, to)?;
    let (mode, y) = a.global_rep(x);
    b.from_global(mode, &y).ok_or(Error::NotInOverlap { from, to })
}

/// Chart of edge `e` on the ε-relaxed quotient space.
#[derive(Clone, Copy, Debug)]
pub struct RelaxedEdgeChart<'a> {
    pub base: EdgeChart<'a>,
    pub epsilon: f64,
}

/// Builds the relaxed chart; `ε` must be positive.
pub fn build_relaxed_chart(h: &HybridSystem, edge_index: usize, epsilon: f64) -> Result<RelaxedEdgeChart<'_>> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::NonPositiveEpsilon(epsilon));
    }
    Ok(RelaxedEdgeChart { base: EdgeChart::new(h, edge_index)?, epsilon })
}

impl<'a> RelaxedEdgeChart<'a> {
    pub fn edge(&self) -> &'a Edge {
        self.base.edge
    }

    pub fn guard_value(&self, x: &Vector) -> f64 {
        self.base.guard_value(x)
    }

    /// `g_e^ε(x) = g_e(x) − ε`.
    pub fn relaxed_guard_value(&self, x: &Vector) -> f64 {
        self.guard_value(x) - self.epsilon
    }

    fn shift(&self) -> Vector {
        &self.edge().planes.g_normal * self.epsilon
    }

    /// `p_e^ε(x) = x − ĝ_e g_e^ε(x)`.
    pub fn project(&self, x: &Vector) -> Vector {
        x - &self.edge().planes.g_normal * self.relaxed_guard_value(x)
    }

    /// `R_e^ε(x) = R_e(x − ĝ_e ε)`.
    pub fn relaxed_reset(&self, x: &Vector) -> Vector {
        self.edge().reset.forward(&(x - self.shift()))
    }

    /// `R̄_e^ε(x) = R_e^ε(p_e^ε(x)) + r̂_e g_e^ε(x)`.
    pub fn attach(&self, x: &Vector) -> Vector {
        self.relaxed_reset(&self.project(x)) + &self.edge().planes.r_normal * self.relaxed_guard_value(x)
    }

    pub fn attach_inverse(&self, y: &Vector) -> Vector {
        self.base.attach_inverse(y) + self.shift()
    }

    pub fn attach_jacobian(&self, x: &Vector) -> Matrix {
        self.base.attach_jacobian(&(x - self.shift()))
    }

    /// Relaxed pullback `f_{j',e}^ε(x) = f_{j',e}(x − ĝ_e ε)`.
    pub fn pullback_field(&self, x: &Vector, u: &Vector) -> Result<Vector> {
        self.base.pullback_field(&(x - self.shift()), u)
    }

    /// Membership in the strip `S_e^ε`.
    pub fn in_strip(&self, x: &Vector) -> bool {
        let g = self.guard_value(x);
        (0.0..=self.epsilon).contains(&g) && self.edge().in_guard_set(&self.base.project(x))
    }

    /// Membership in `D̂_e^ε`.
    pub fn contains(&self, x: &Vector) -> bool {
        let g = self.guard_value(x);
        if g < 0.0 {
            self.base.system.modes[self.edge().source].domain.contains(x)
        } else if g <= self.epsilon {
            self.edge().in_guard_set(&self.base.project(x))
        } else {
            self.base.system.modes[self.edge().target].domain.contains(&self.attach(x))
        }
    }

    /// `(mode, point, strip depth)`; strip points keep source coordinates.
    pub fn global_rep(&self, x: &Vector) -> (ModeId, Vector, Option<f64>) {
        let g = self.guard_value(x);
        if g < 0.0 {
            (self.edge().source, x.clone(), None)
        } else if g <= self.epsilon {
            (self.edge().source, x.clone(), Some(g))
        } else {
            (self.edge().target, self.attach(x), None)
        }
    }

    pub fn from_global(&self, mode: ModeId, y: &Vector, layer: Option<(usize, f64)>) -> Option<Vector> {
        let e = self.edge();
        match layer {
            Some((k, _)) if k == self.base.edge_index => Some(y.clone()),
            Some(_) => None,
            None if mode == e.source && (mode != e.target || e.guard_value(y) <= 0.0) => Some(y.clone()),
            None if mode == e.target => Some(self.attach_inverse(y)),
            None => None,
        }
    }
}

/// Sampled chart diagnostics, as dumped by the CLI.
#[derive(Clone, Debug, Serialize)]
pub struct ChartDiagnostics {
    pub edge: usize,
    pub source: String,
    pub target: String,
    pub g_normal: Vec<f64>,
    pub g_offset: f64,
    pub r_normal: Vec<f64>,
    pub r_offset: f64,
    pub samples: usize,
    pub max_round_trip_error: f64,
    pub max_plane_correspondence_error: f64,
    pub max_pushforward_error: f64,
    pub max_jacobian_fd_error: f64,
    /// Sampled difference-quotient bound of the pullback field.
    pub pullback_lipschitz_estimate: f64,
}

/// Points of `D̂_e`: source-domain samples, guard samples and pulled-back
/// target-domain samples.
pub(crate) fn sample_chart_points(h: &HybridSystem, edge_index: usize, n: usize, seed: u64) -> Vec<Vector> {
    let e = &h.edges[edge_index];
    let mut rng = rng_for(seed, 5000 + edge_index as u64);
    let mut pts = sample_domain(&h.modes[e.source], &mut rng, n / 3 + 1);
    pts.extend(sample_guard(h, e, &mut rng, n / 3 + 1));
    pts.extend(
        sample_domain(&h.modes[e.target], &mut rng, n / 3 + 1)
            .iter()
            .map(|y| attach_map_inverse(e, y)),
    );
    pts.truncate(n);
    pts
}

pub fn chart_diagnostics(h: &HybridSystem, samples: usize, seed: u64) -> Result<Vec<ChartDiagnostics>> {
    let mut out = Vec::new();
    for k in 0..h.edges.len() {
        let chart = EdgeChart::new(h, k)?;
        let e = chart.edge;
        let pts = sample_chart_points(h, k, samples, seed);
        let mut rng = rng_for(seed, 9000 + k as u64);
        let (mut rt, mut pc, mut pf, mut jf, mut lip) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
        let mut prev: Option<(Vector, Vector)> = None;
        for x in &pts {
            let y = chart.attach(x);
            rt = rt.max((chart.attach_inverse(&y) - x).norm() / (1.0 + x.norm()));
            pc = pc.max((e.image_value(&y) - e.guard_value(x)).abs());
            let fd = crate::model::fd_jacobian(|z| chart.attach(z), x);
            jf = jf.max(crate::model::rel_frobenius(&chart.attach_jacobian(x), &fd));
            let u = h.input_set.sample(&mut rng);
            if let Ok(pb) = chart.pullback_field(x, &u) {
                let fy = h.modes[e.target].field.eval(&y, &u);
                pf = pf.max((chart.attach_jacobian(x) * &pb - &fy).norm() / (1.0 + fy.norm()));
                if let Some((xp, fp)) = &prev {
                    let dx = (x - xp).norm();
                    if dx > 0.0 && h.input_set.dim() == 0 {
                        lip = lip.max((&pb - fp).norm() / dx);
                    }
                }
                prev = Some((x.clone(), pb));
            }
        }
        out.push(ChartDiagnostics {
            edge: k,
            source: h.modes[e.source].name.clone(),
            target: h.modes[e.target].name.clone(),
            g_normal: e.planes.g_normal.iter().copied().collect(),
            g_offset: e.planes.g_offset,
            r_normal: e.planes.r_normal.iter().copied().collect(),
            r_offset: e.planes.r_offset,
            samples: pts.len(),
            max_round_trip_error: rt,
            max_plane_correspondence_error: pc,
            max_pushforward_error: pf,
            max_jacobian_fd_error: jf,
            pullback_lipschitz_estimate: lip,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BoundingBox, Domain, HyperplaneData, InputSet, Mode, ModeField, ResetMap};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_row_slice(xs)
    }

    fn edge(g: &[f64], c: f64, r: &[f64], d: f64, reset: ResetMap) -> Edge {
        Edge::new(0, 1, HyperplaneData::new(v(g), c, v(r), d).unwrap(), reset)
    }

    fn ground_edge(c: f64) -> Edge {
        edge(&[-1.0, 0.0], 0.0, &[1.0, 0.0], 0.0, ResetMap::bouncing_ball(c).unwrap())
    }

    fn two_modes(e: Edge, f1: ModeField, f2: ModeField) -> HybridSystem {
        let b = BoundingBox::cube(2, 3.0);
        let m = |name: &str, f| Mode { name: name.into(), domain: Domain::whole_space(b.clone()), field: f };
        HybridSystem::new(2, vec![m("1", f1), m("2", f2)], vec![e], InputSet::Empty).unwrap()
    }

    #[test]
    fn projection_examples() {
        let e = edge(&[0.0, 1.0], 0.0, &[0.0, 1.0], 0.0, ResetMap::identity(2));
        assert_eq!(project_guard(&e, &v(&[3.0, 2.0])), v(&[3.0, 0.0]));
        assert_eq!(project_guard(&e, &v(&[3.0, 0.0])), v(&[3.0, 0.0]));
        let s = 0.5f64.sqrt();
        let e = edge(&[s, s], 0.0, &[0.0, 1.0], 0.0, ResetMap::identity(2));
        let p = project_guard(&e, &v(&[1.0, 0.0]));
        assert_abs_diff_eq!(p[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], -0.5, epsilon = 1e-15);
    }

    #[test]
    fn ground_attach_by_hand() {
        let e = ground_edge(0.5);
        let y = attach_map(&e, &v(&[-0.2, -3.0]));
        assert_abs_diff_eq!(y[0], 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(y[1], 1.5, epsilon = 1e-15);
        let x = attach_map_inverse(&e, &v(&[0.2, 1.5]));
        assert_abs_diff_eq!(x[0], -0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(x[1], -3.0, epsilon = 1e-15);
        let x0 = v(&[-0.2, -3.0]);
        let fd = crate::model::fd_jacobian(|z| attach_map(&e, z), &x0);
        assert!(crate::model::rel_frobenius(&attach_jacobian(&e, &x0), &fd) <= 1e-5);
    }

    #[test]
    fn identity_chart_is_identity() {
        let e = edge(&[0.0, 1.0], 0.0, &[0.0, 1.0], 0.0, ResetMap::identity(2));
        let x = v(&[0.3, -0.7]);
        assert_eq!(attach_map(&e, &x), x);
        assert_eq!(attach_jacobian(&e, &x), Matrix::identity(2, 2));
    }

    #[test]
    fn affine_attach_jacobian_closed_form() {
        let m = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 0.0]);
        let e = edge(&[0.0, 1.0], 0.0, &[1.0, 0.0], 0.0, ResetMap::affine(m.clone(), v(&[0.0, 1.0])).unwrap());
        let g = v(&[0.0, 1.0]);
        let r = v(&[1.0, 0.0]);
        let expect = &m * (Matrix::identity(2, 2) - &g * g.transpose()) + &r * g.transpose();
        for x in [v(&[0.1, 0.2]), v(&[-4.0, 7.0])] {
            assert!((attach_jacobian(&e, &x) - &expect).norm() < 1e-15);
        }
    }

    #[test]
    fn singular_attach_jacobian_is_reported() {
        let m = Matrix::from_row_slice(2, 2, &[1e-12, 0.0, 0.0, 1.0]);
        let e = edge(&[0.0, 1.0], 0.0, &[0.0, 1.0], 0.0, ResetMap::affine(m, Vector::zeros(2)).unwrap());
        let h = two_modes(e, ModeField::constant(v(&[1.0, 1.0])), ModeField::constant(v(&[1.0, 1.0])));
        let chart = EdgeChart::new(&h, 0).unwrap();
        assert!(matches!(
            chart.pullback_field(&v(&[0.0, 1.0]), &Vector::zeros(0)),
            Err(Error::ChartSingular { .. })
        ));
    }

    #[test]
    fn local_field_branches() {
        let e = edge(&[0.0, 1.0], 0.0, &[0.0, 1.0], 0.0, ResetMap::identity(2));
        let h = two_modes(e, ModeField::constant(v(&[1.0, 1.0])), ModeField::constant(v(&[1.0, 2.0])));
        let u = Vector::zeros(0);
        assert_eq!(local_field(&h, 0, &v(&[0.0, -1.0]), &u).unwrap(), v(&[1.0, 1.0]));
        assert_eq!(local_field(&h, 0, &v(&[0.0, 1.0]), &u).unwrap(), v(&[1.0, 2.0]));
        assert!(matches!(local_field(&h, 0, &v(&[0.0, 0.0]), &u), Err(Error::OnDiscontinuity { .. })));
    }

    #[test]
    fn relaxed_chart_rejects_nonpositive_eps() {
        let e = edge(&[0.0, 1.0], 0.0, &[0.0, 1.0], 0.0, ResetMap::identity(2));
        let h = two_modes(e, ModeField::constant(v(&[1.0, 1.0])), ModeField::constant(v(&[1.0, 2.0])));
        assert!(matches!(build_relaxed_chart(&h, 0, 0.0), Err(Error::NonPositiveEpsilon(_))));
        assert!(matches!(build_relaxed_chart(&h, 0, -1.0), Err(Error::NonPositiveEpsilon(_))));
    }

    #[test]
    fn relaxed_reset_lands_on_image_plane() {
        let e = ground_edge(0.5);
        let h = two_modes(e, ModeField::gravity(9.81), ModeField::gravity(9.81));
        let ch = build_relaxed_chart(&h, 0, 0.1).unwrap();
        // Points of G_e^ε: g_e = ε.
        for s in [-2.0, 0.0, 0.7] {
            let x = v(&[-0.1, s]);
            assert_abs_diff_eq!(ch.relaxed_guard_value(&x), 0.0, epsilon = 1e-15);
            assert!(ch.edge().image_value(&ch.relaxed_reset(&x)).abs() <= 1e-10);
        }
    }

    #[test]
    fn chart_transition_through_shared_mode() {
        // Edges (0 -> 1) and (1 -> 2) share mode 1.
        let b = BoundingBox::cube(2, 3.0);
        let m = |name: &str| Mode {
            name: name.into(),
            domain: Domain::whole_space(b.clone()),
            field: ModeField::constant(v(&[1.0, 0.0])),
        };
        let e0 = Edge::new(
            0,
            1,
            HyperplaneData::new(v(&[1.0, 0.0]), 0.0, v(&[1.0, 0.0]), 0.0).unwrap(),
            ResetMap::affine(Matrix::identity(2, 2) * 2.0, Vector::zeros(2)).unwrap(),
        );
        let e1 = Edge::new(
            1,
            2,
            HyperplaneData::new(v(&[1.0, 0.0]), 1.0, v(&[1.0, 0.0]), 0.0).unwrap(),
            ResetMap::affine(Matrix::identity(2, 2), v(&[-1.0, 0.0])).unwrap(),
        );
        let h = HybridSystem::new(2, vec![m("a"), m("b"), m("c")], vec![e0, e1], InputSet::Empty).unwrap();
        let x = v(&[0.25, 0.5]);
        let y = chart_transition(&h, 0, 1, &x).unwrap();
        assert_eq!(y, attach_map(&h.edges[0], &x));
        let back = chart_transition(&h, 1, 0, &y).unwrap();
        assert!((back - x).norm() < 1e-12);
        let x = v(&[-0.5, 0.0]);
        assert!(matches!(chart_transition(&h, 0, 1, &x), Err(Error::NotInOverlap { .. })));
    }

    /// Affine edge whose reset maps the guard plane onto the image plane.
    fn random_affine_edge(a: [f64; 4], b: [f64; 2], g: [f64; 2], flip: bool, c: f64) -> Option<Edge> {
        let m = Matrix::from_row_slice(2, 2, &a);
        if m.determinant().abs() < 0.1 || v(&g).norm() < 0.1 {
            return None;
        }
        let gn = v(&g).normalize();
        let n = m.clone().try_inverse()?.transpose() * &gn;
        let s = if flip { -1.0 } else { 1.0 };
        let d = c + n.dot(&v(&b));
        let r = &n * s;
        Some(Edge::new(
            0,
            1,
            HyperplaneData::new(gn, c, r, d * s).ok()?,
            ResetMap::affine(m, v(&b)).ok()?,
        ))
    }

    proptest! {
        #[test]
        fn chart_algebra_holds(
            a in prop::array::uniform4(-2.0f64..2.0),
            b in prop::array::uniform2(-1.0f64..1.0),
            g in prop::array::uniform2(-1.0f64..1.0),
            flip in any::<bool>(),
            c in -1.0f64..1.0,
            x in prop::array::uniform2(-3.0f64..3.0),
            eps in 1e-4f64..0.5,
        ) {
            let Some(e) = random_affine_edge(a, b, g, flip, c) else { return Ok(()); };
            let x = v(&x);
            let p = project_guard(&e, &x);
            prop_assert!(e.guard_value(&p).abs() <= 1e-12 * (1.0 + x.norm()));
            prop_assert!((project_guard(&e, &p) - &p).norm() <= 1e-14 * (1.0 + x.norm()));
            let y = attach_map(&e, &x);
            prop_assert!((e.image_value(&y) - e.guard_value(&x)).abs() <= 1e-10 * (1.0 + x.norm()));
            let back = attach_map_inverse(&e, &y);
            prop_assert!((back - &x).norm() <= 1e-9 * (1.0 + x.norm()));

            let h = two_modes(e.clone(), ModeField::constant(v(&[1.0, 0.5])), ModeField::affine(
                Matrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]), None, v(&[0.2, 0.0])));
            let ch = build_relaxed_chart(&h, 0, eps).unwrap();
            prop_assert_eq!(ch.relaxed_guard_value(&x), e.guard_value(&x) - eps);
            let shifted = &x - &e.planes.g_normal * eps;
            let lhs = ch.attach(&x);
            prop_assert!((&lhs - attach_map(&e, &shifted)).norm() <= 1e-10 * (1.0 + x.norm()));
            prop_assert!((&lhs - (attach_map(&e, &x) - &e.planes.r_normal * eps)).norm() <= 1e-10 * (1.0 + x.norm()));
            prop_assert!((ch.attach_inverse(&lhs) - &x).norm() <= 1e-9 * (1.0 + x.norm()));
            let u = Vector::zeros(0);
            let base = EdgeChart::new(&h, 0).unwrap();
            if let (Ok(a), Ok(b)) = (ch.pullback_field(&x, &u), base.pullback_field(&shifted, &u)) {
                prop_assert!((a - b).norm() <= 1e-10);
            }
            if let Ok(pb) = base.pullback_field(&x, &u) {
                let fy = h.modes[1].field.eval(&y, &u);
                prop_assert!((attach_jacobian(&e, &x) * pb - &fy).norm() <= 1e-9 * (1.0 + fy.norm()));
            }
        }
    }
}
