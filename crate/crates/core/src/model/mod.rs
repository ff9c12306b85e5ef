//! Hybrid dynamical systems: modes, domains, vector fields, guards and
//! reset maps.
//!
//! A [`HybridSystem`] is the tuple of modes, edges, domains, admissible
//! inputs, per-mode vector fields, guards and resets. Every guard lies in a
//! hyperplane `ĝ·x = c` and every reset image in a hyperplane `r̂·x = d`;
//! the sign convention is `g_e < 0` inside the source domain and `r_e > 0`
//! inside the target domain.

mod control;
mod validate;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};

pub use control::{eval_control, ControlSignal};
pub(crate) use validate::{rng_for, sample_domain, sample_guard};
pub use validate::{
    validate_system, AssumptionEntry, CheckStatus, ValidationConfig, ValidationReport,
};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Index of a mode inside [`HybridSystem::modes`].
pub type ModeId = usize;

pub type FieldFn = Arc<dyn Fn(&Vector, &Vector) -> Vector + Send + Sync>;
pub type FieldJacobianFn = Arc<dyn Fn(&Vector, &Vector) -> Matrix + Send + Sync>;
pub type MapFn = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;
pub type MapJacobianFn = Arc<dyn Fn(&Vector) -> Matrix + Send + Sync>;
pub type Predicate = Arc<dyn Fn(&Vector) -> bool + Send + Sync>;

/// Tolerance on unit normals.
pub const UNIT_NORMAL_TOL: f64 = 1e-12;
/// Normals shorter than this are rejected at construction.
pub const MIN_NORMAL_NORM: f64 = 1e-8;

/// Central finite-difference Jacobian with step `1e-6·(1+|x_i|)`.
pub fn fd_jacobian(f: impl Fn(&Vector) -> Vector, x: &Vector) -> Matrix {
    let n = x.len();
    let mut cols = Vec::with_capacity(n);
    let mut xp = x.clone();
    for i in 0..n {
        let h = 1e-6 * (1.0 + x[i].abs());
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        cols.push((fp - fm) / (2.0 * h));
    }
    let m = cols.first().map_or(0, |c| c.len());
    Matrix::from_fn(m, n, |r, c| cols[c][r])
}

/// Relative Frobenius discrepancy `‖a − b‖_F / max(‖b‖_F, 1e-300)`.
pub fn rel_frobenius(a: &Matrix, b: &Matrix) -> f64 {
    let denom = b.norm().max(a.norm()).max(1e-300);
    (a - b).norm() / denom
}

/// Vector field of a single mode, globally defined on `R^n × U`.
#[derive(Clone)]
pub struct ModeField {
    dim: usize,
    eval: FieldFn,
    jacobian_x: Option<FieldJacobianFn>,
}

impl ModeField {
    pub fn new(dim: usize, eval: FieldFn) -> Self {
        Self { dim, eval, jacobian_x: None }
    }

    pub fn with_jacobian(mut self, jac: FieldJacobianFn) -> Self {
        self.jacobian_x = Some(jac);
        self
    }

    /// `f(x, u) = A x + B u + b`.
    pub fn affine(a: Matrix, b_in: Option<Matrix>, offset: Vector) -> Self {
        let dim = a.nrows();
        let a_eval = a.clone();
        let eval: FieldFn = Arc::new(move |x: &Vector, u: &Vector| {
            let mut out = &a_eval * x + &offset;
            if let Some(b) = &b_in {
                out += b * u;
            }
            out
        });
        let jac: FieldJacobianFn = Arc::new(move |_x: &Vector, _u: &Vector| a.clone());
        Self::new(dim, eval).with_jacobian(jac)
    }

    pub fn constant(value: Vector) -> Self {
        let dim = value.len();
        Self::affine(Matrix::zeros(dim, dim), None, value)
    }

    /// Free flight `(x_2, −g)` in height/velocity coordinates.
    pub fn gravity(g: f64) -> Self {
        let a = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        Self::affine(a, None, Vector::from_vec(vec![0.0, -g]))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn has_jacobian(&self) -> bool {
        self.jacobian_x.is_some()
    }

    pub fn eval(&self, x: &Vector, u: &Vector) -> Vector {
        (self.eval)(x, u)
    }

    /// State Jacobian; central differences when no analytic form is given.
    pub fn jacobian(&self, x: &Vector, u: &Vector) -> Matrix {
        match &self.jacobian_x {
            Some(j) => j(x, u),
            None => fd_jacobian(|y| (self.eval)(y, u), x),
        }
    }

    pub(crate) fn analytic_jacobian(&self, x: &Vector, u: &Vector) -> Option<Matrix> {
        self.jacobian_x.as_ref().map(|j| j(x, u))
    }
}

impl fmt::Debug for ModeField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModeField")
            .field("dim", &self.dim)
            .field("analytic_jacobian", &self.jacobian_x.is_some())
            .finish()
    }
}

/// Guard plane `ĝ·x = c` and reset-image plane `r̂·x = d` of one edge.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperplaneData {
    pub g_normal: Vector,
    pub g_offset: f64,
    pub r_normal: Vector,
    pub r_offset: f64,
}

impl HyperplaneData {
    /// Normalizes both normals (scaling the offsets along with them).
    pub fn new(g_normal: Vector, g_offset: f64, r_normal: Vector, r_offset: f64) -> Result<Self> {
        if g_normal.len() != r_normal.len() {
            return Err(Error::DimensionMismatch {
                expected: g_normal.len(),
                got: r_normal.len(),
            });
        }
        let (g_normal, g_offset) = normalize_plane(g_normal, g_offset)?;
        let (r_normal, r_offset) = normalize_plane(r_normal, r_offset)?;
        Ok(Self { g_normal, g_offset, r_normal, r_offset })
    }

    pub fn g(&self, x: &Vector) -> f64 {
        self.g_normal.dot(x) - self.g_offset
    }

    pub fn r(&self, x: &Vector) -> f64 {
        self.r_normal.dot(x) - self.r_offset
    }
}

fn normalize_plane(n: Vector, c: f64) -> Result<(Vector, f64)> {
    let norm = n.norm();
    if !(norm >= MIN_NORMAL_NORM) {
        return Err(Error::DegenerateNormal(norm));
    }
    Ok((n / norm, c / norm))
}

/// An oriented hyperplane `normal·x = offset` (unit normal).
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    pub normal: Vector,
    pub offset: f64,
}

impl Plane {
    pub fn value(&self, x: &Vector) -> f64 {
        self.normal.dot(x) - self.offset
    }

    /// Same point set, orientation ignored.
    pub fn coincides(&self, other: &Plane, tol: f64) -> bool {
        let same = (&self.normal - &other.normal).norm() <= tol
            && (self.offset - other.offset).abs() <= tol;
        let flipped = (&self.normal + &other.normal).norm() <= tol
            && (self.offset + other.offset).abs() <= tol;
        same || flipped
    }
}

/// Diffeomorphic reset `R_e` with its inverse.
#[derive(Clone)]
pub struct ResetMap {
    forward: MapFn,
    inverse: MapFn,
    jacobian: Option<MapJacobianFn>,
    inverse_jacobian: Option<MapJacobianFn>,
}

impl ResetMap {
    pub fn new(forward: MapFn, inverse: MapFn) -> Self {
        Self { forward, inverse, jacobian: None, inverse_jacobian: None }
    }

    pub fn with_jacobians(mut self, jac: MapJacobianFn, inv_jac: MapJacobianFn) -> Self {
        self.jacobian = Some(jac);
        self.inverse_jacobian = Some(inv_jac);
        self
    }

    pub fn identity(dim: usize) -> Self {
        Self::affine(Matrix::identity(dim, dim), Vector::zeros(dim))
            .expect("identity is invertible")
    }

    /// `R(x) = M x + b`; fails when `M` is singular.
    pub fn affine(m: Matrix, b: Vector) -> Result<Self> {
        let m_inv = m
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Structural("affine reset matrix is singular".into()))?;
        let (mf, bf) = (m.clone(), b.clone());
        let (mi, bi) = (m_inv.clone(), b);
        let forward: MapFn = Arc::new(move |x: &Vector| &mf * x + &bf);
        let inverse: MapFn = Arc::new(move |y: &Vector| &mi * (y - &bi));
        let jac: MapJacobianFn = Arc::new(move |_x: &Vector| m.clone());
        let inv_jac: MapJacobianFn = Arc::new(move |_y: &Vector| m_inv.clone());
        Ok(Self::new(forward, inverse).with_jacobians(jac, inv_jac))
    }

    /// Impact law `(x_1, x_2) ↦ (x_1, −c·x_2)`.
    pub fn bouncing_ball(c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::Config(format!("restitution must be positive, got {c}")));
        }
        Self::affine(
            Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -c]),
            Vector::zeros(2),
        )
    }

    pub fn forward(&self, x: &Vector) -> Vector {
        (self.forward)(x)
    }

    pub fn inverse(&self, y: &Vector) -> Vector {
        (self.inverse)(y)
    }

    pub fn jacobian(&self, x: &Vector) -> Matrix {
        match &self.jacobian {
            Some(j) => j(x),
            None => fd_jacobian(|y| (self.forward)(y), x),
        }
    }

    pub fn inverse_jacobian(&self, y: &Vector) -> Matrix {
        match &self.inverse_jacobian {
            Some(j) => j(y),
            None => fd_jacobian(|z| (self.inverse)(z), y),
        }
    }

    pub fn has_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    pub(crate) fn analytic_jacobian(&self, x: &Vector) -> Option<Matrix> {
        self.jacobian.as_ref().map(|j| j(x))
    }
}

impl fmt::Debug for ResetMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ResetMap")
            .field("analytic_jacobian", &self.jacobian.is_some())
            .finish()
    }
}

/// Edge `e = (source, target)` with its guard/reset geometry.
#[derive(Clone)]
pub struct Edge {
    pub source: ModeId,
    pub target: ModeId,
    pub planes: HyperplaneData,
    pub reset: ResetMap,
    /// Restricts the guard `G_e` inside the plane; `None` means the whole plane.
    pub guard_membership: Option<Predicate>,
}

impl Edge {
    pub fn new(source: ModeId, target: ModeId, planes: HyperplaneData, reset: ResetMap) -> Self {
        Self { source, target, planes, reset, guard_membership: None }
    }

    pub fn with_guard(mut self, pred: Predicate) -> Self {
        self.guard_membership = Some(pred);
        self
    }

    /// `g_e(x) = ĝ_e·x − c_e`.
    pub fn guard_value(&self, x: &Vector) -> f64 {
        self.planes.g(x)
    }

    /// `r_e(y) = r̂_e·y − d_e`.
    pub fn image_value(&self, y: &Vector) -> f64 {
        self.planes.r(y)
    }

    pub fn guard_plane(&self) -> Plane {
        Plane { normal: self.planes.g_normal.clone(), offset: self.planes.g_offset }
    }

    pub fn image_plane(&self) -> Plane {
        Plane { normal: self.planes.r_normal.clone(), offset: self.planes.r_offset }
    }

    /// Membership in `G_e` beyond the plane test.
    pub fn in_guard_set(&self, x: &Vector) -> bool {
        self.guard_membership.as_ref().is_none_or(|p| p(x))
    }

    /// Membership of `y` in `R_e(G_e)`.
    pub fn in_image_set(&self, y: &Vector) -> bool {
        self.in_guard_set(&self.reset.inverse(y))
    }
}

impl fmt::Debug for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Edge")
            .field("source", &self.source)
            .field("target", &self.target)
            .field("planes", &self.planes)
            .finish()
    }
}

/// Axis-aligned sampling box.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundingBox {
    pub lo: Vector,
    pub hi: Vector,
}

impl BoundingBox {
    pub fn new(lo: Vector, hi: Vector) -> Self {
        Self { lo, hi }
    }

    pub fn cube(dim: usize, half_width: f64) -> Self {
        Self::new(
            Vector::from_element(dim, -half_width),
            Vector::from_element(dim, half_width),
        )
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vector {
        Vector::from_fn(self.lo.len(), |i, _| rng.gen_range(self.lo[i]..=self.hi[i]))
    }

    pub fn contains(&self, x: &Vector) -> bool {
        x.iter()
            .enumerate()
            .all(|(i, v)| *v >= self.lo[i] && *v <= self.hi[i])
    }
}

/// Mode domain `D_j` as a membership predicate plus a sampling box.
#[derive(Clone)]
pub struct Domain {
    pub contains: Predicate,
    pub bounds: BoundingBox,
    /// Human-readable boundary pieces, reported for the boundary-coverage check.
    pub boundary_pieces: Vec<String>,
}

impl Domain {
    pub fn new(contains: Predicate, bounds: BoundingBox) -> Self {
        Self { contains, bounds, boundary_pieces: Vec::new() }
    }

    /// Intersection of half-spaces `a_k·x ≤ b_k`, with slack `tol·(1+‖x‖)`.
    pub fn half_spaces(constraints: Vec<(Vector, f64)>, bounds: BoundingBox, tol: f64) -> Self {
        let pieces = constraints
            .iter()
            .map(|(a, b)| format!("{:?}·x = {b}", a.as_slice()))
            .collect();
        let contains: Predicate = Arc::new(move |x: &Vector| {
            let slack = tol * (1.0 + x.norm());
            constraints.iter().all(|(a, b)| a.dot(x) - b <= slack)
        });
        Self { contains, bounds, boundary_pieces: pieces }
    }

    pub fn whole_space(bounds: BoundingBox) -> Self {
        Self::new(Arc::new(|_x: &Vector| true), bounds)
    }

    pub fn contains(&self, x: &Vector) -> bool {
        (self.contains)(x)
    }
}

impl fmt::Debug for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Domain")
            .field("bounds", &self.bounds)
            .field("boundary_pieces", &self.boundary_pieces)
            .finish()
    }
}

/// Admissible input set `U`.
#[derive(Clone, Debug, PartialEq)]
pub enum InputSet {
    /// `U = {}` for autonomous systems (`m = 0`).
    Empty,
    Box { lo: Vector, hi: Vector },
    Ball { center: Vector, radius: f64 },
}

impl InputSet {
    pub fn dim(&self) -> usize {
        match self {
            InputSet::Empty => 0,
            InputSet::Box { lo, .. } => lo.len(),
            InputSet::Ball { center, .. } => center.len(),
        }
    }

    pub fn contains(&self, u: &Vector, tol: f64) -> bool {
        match self {
            InputSet::Empty => u.is_empty(),
            InputSet::Box { lo, hi } => {
                u.len() == lo.len()
                    && u.iter()
                        .enumerate()
                        .all(|(i, v)| *v >= lo[i] - tol && *v <= hi[i] + tol)
            }
            InputSet::Ball { center, radius } => {
                u.len() == center.len() && (u - center).norm() <= radius + tol
            }
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vector {
        match self {
            InputSet::Empty => Vector::zeros(0),
            InputSet::Box { lo, hi } => {
                Vector::from_fn(lo.len(), |i, _| rng.gen_range(lo[i]..=hi[i]))
            }
            InputSet::Ball { center, radius } => loop {
                let d = Vector::from_fn(center.len(), |_, _| rng.gen_range(-1.0..=1.0));
                if d.norm() <= 1.0 {
                    break center + d * *radius;
                }
            },
        }
    }
}

/// One discrete mode.
#[derive(Clone, Debug)]
pub struct Mode {
    pub name: String,
    pub domain: Domain,
    pub field: ModeField,
}

/// A hybrid dynamical system.
#[derive(Clone, Debug)]
pub struct HybridSystem {
    pub dim: usize,
    pub modes: Vec<Mode>,
    pub edges: Vec<Edge>,
    pub input_set: InputSet,
}

impl HybridSystem {
    /// Checks structural well-formedness (indices resolve, dimensions agree).
    pub fn new(dim: usize, modes: Vec<Mode>, edges: Vec<Edge>, input_set: InputSet) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Structural("state dimension must be positive".into()));
        }
        if modes.is_empty() {
            return Err(Error::Structural("a hybrid system needs at least one mode".into()));
        }
        for m in &modes {
            if m.field.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: m.field.dim() });
            }
            if m.domain.bounds.lo.len() != dim || m.domain.bounds.hi.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: m.domain.bounds.lo.len(),
                });
            }
        }
        for (k, e) in edges.iter().enumerate() {
            if e.source >= modes.len() || e.target >= modes.len() {
                return Err(Error::Structural(format!(
                    "edge {k} references a mode outside 0..{}",
                    modes.len()
                )));
            }
            if e.planes.g_normal.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: e.planes.g_normal.len() });
            }
        }
        Ok(Self { dim, modes, edges, input_set })
    }

    pub fn input_dim(&self) -> usize {
        self.input_set.dim()
    }

    pub fn mode(&self, j: ModeId) -> Result<&Mode> {
        self.modes.get(j).ok_or(Error::UnknownMode(j))
    }

    pub fn edge(&self, e: usize) -> Result<&Edge> {
        self.edges.get(e).ok_or(Error::UnknownEdge(e))
    }

    pub fn mode_by_name(&self, name: &str) -> Option<ModeId> {
        self.modes.iter().position(|m| m.name == name)
    }

    /// Edges leaving mode `j`.
    pub fn outgoing(&self, j: ModeId) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().enumerate().filter(move |(_, e)| e.source == j).map(|(k, _)| k)
    }

    /// Edges entering mode `j`.
    pub fn incoming(&self, j: ModeId) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().enumerate().filter(move |(_, e)| e.target == j).map(|(k, _)| k)
    }

    /// Returns a copy without the given edges (indices shift down).
    pub fn without_edges(&self, drop: &[usize]) -> Self {
        let edges = self
            .edges
            .iter()
            .enumerate()
            .filter(|(k, _)| !drop.contains(k))
            .map(|(_, e)| e.clone())
            .collect();
        Self { edges, ..self.clone() }
    }
}

/// Evaluates `f_j(x, u)`.
pub fn eval_field(h: &HybridSystem, j: ModeId, x: &Vector, u: &Vector) -> Result<Vector> {
    let mode = h.mode(j)?;
    if x.len() != h.dim {
        return Err(Error::DimensionMismatch { expected: h.dim, got: x.len() });
    }
    Ok(mode.field.eval(x, u))
}

/// `g_e(x) = ĝ_e·x − c_e`.
pub fn guard_value(e: &Edge, x: &Vector) -> f64 {
    e.guard_value(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_row_slice(xs)
    }

    fn planes(g: &[f64], c: f64, r: &[f64], d: f64) -> HyperplaneData {
        HyperplaneData::new(v(g), c, v(r), d).unwrap()
    }

    #[test]
    fn guard_value_is_affine() {
        let e = Edge::new(0, 0, planes(&[0.0, 1.0], 0.0, &[0.0, 1.0], 0.0), ResetMap::identity(2));
        assert_eq!(guard_value(&e, &v(&[3.0, 0.0])), 0.0);
        assert_eq!(guard_value(&e, &v(&[3.0, -2.0])), -2.0);
    }

    #[test]
    fn ground_edge_sign_convention() {
        let e = Edge::new(
            1,
            2,
            planes(&[-1.0, 0.0], 0.0, &[1.0, 0.0], 0.0),
            ResetMap::bouncing_ball(0.5).unwrap(),
        );
        assert_eq!(guard_value(&e, &v(&[0.5, -1.0])), -0.5);
    }

    #[test]
    fn normals_are_normalized_and_degenerate_rejected() {
        let p = planes(&[3.0, 4.0], 10.0, &[0.0, 2.0], 1.0);
        assert_abs_diff_eq!(p.g_normal.norm(), 1.0, epsilon = UNIT_NORMAL_TOL);
        assert_abs_diff_eq!(p.g_offset, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.r_offset, 0.5, epsilon = 1e-15);
        let bad = HyperplaneData::new(v(&[1e-9, 0.0]), 0.0, v(&[1.0, 0.0]), 0.0);
        assert!(matches!(bad, Err(Error::DegenerateNormal(_))));
    }

    #[test]
    fn gravity_field_matches_free_flight() {
        let f = ModeField::gravity(9.81);
        let out = f.eval(&v(&[1.0, 2.0]), &Vector::zeros(0));
        assert_eq!(out, v(&[2.0, -9.81]));
    }

    #[test]
    fn zero_linear_field() {
        let f = ModeField::affine(
            Matrix::zeros(2, 2),
            Some(Matrix::identity(2, 2)),
            Vector::zeros(2),
        );
        assert_eq!(f.eval(&v(&[4.0, -1.0]), &v(&[0.0, 0.0])), Vector::zeros(2));
    }

    #[test]
    fn fd_fallback_matches_analytic_jacobian() {
        let a = Matrix::from_row_slice(2, 2, &[0.3, -1.0, 2.0, 0.1]);
        let analytic = ModeField::affine(a.clone(), None, Vector::zeros(2));
        let eval: FieldFn = {
            let a = a.clone();
            Arc::new(move |x: &Vector, _u: &Vector| &a * x)
        };
        let bare = ModeField::new(2, eval);
        let x = v(&[0.7, -2.0]);
        let u = Vector::zeros(0);
        assert!(rel_frobenius(&bare.jacobian(&x, &u), &analytic.jacobian(&x, &u)) < 1e-8);
    }

    #[test]
    fn affine_reset_round_trip() {
        let r = ResetMap::affine(
            Matrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 0.0]),
            v(&[0.0, 1.0]),
        )
        .unwrap();
        let x = v(&[0.25, -3.0]);
        assert!((r.inverse(&r.forward(&x)) - &x).norm() < 1e-14);
        assert!(ResetMap::affine(Matrix::zeros(2, 2), Vector::zeros(2)).is_err());
    }

    #[test]
    fn structural_errors_are_hard_failures() {
        let dom = Domain::whole_space(BoundingBox::cube(2, 1.0));
        let mode = Mode {
            name: "a".into(),
            domain: dom,
            field: ModeField::constant(v(&[1.0, 0.0])),
        };
        let dangling = Edge::new(0, 3, planes(&[1.0, 0.0], 0.0, &[1.0, 0.0], 0.0), ResetMap::identity(2));
        let err = HybridSystem::new(2, vec![mode.clone()], vec![dangling], InputSet::Empty);
        assert!(matches!(err, Err(Error::Structural(_))));
        let err = HybridSystem::new(3, vec![mode.clone()], vec![], InputSet::Empty);
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
        let h = HybridSystem::new(2, vec![mode], vec![], InputSet::Empty).unwrap();
        assert!(matches!(
            eval_field(&h, 4, &v(&[0.0, 0.0]), &Vector::zeros(0)),
            Err(Error::UnknownMode(4))
        ));
    }

    #[test]
    fn plane_coincidence_ignores_orientation() {
        let a = Plane { normal: v(&[0.0, 1.0]), offset: 0.5 };
        let b = Plane { normal: v(&[0.0, -1.0]), offset: -0.5 };
        let c = Plane { normal: v(&[0.0, 1.0]), offset: 0.4 };
        assert!(a.coincides(&b, 1e-12));
        assert!(!a.coincides(&c, 1e-12));
    }
}
