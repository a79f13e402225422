//! Successive approximations for Perov contractions in vector B-metric
//! spaces, with matrix-valued a-priori error certificates.
//!
//! A map `N` is a Perov contraction when `d(N x, N y) <= A d(x, y)` with `A`
//! nonnegative and convergent to zero. Two certificate forms are available
//! depending on `B`:
//!
//! - case (a), `B` and `B⁻¹ − A` inverse-positive: `d(x_k, x*) <= (B⁻¹ − A)⁻¹ A^k d(x_0, x_1)`;
//! - case (b), `B` positive and `I − BA` inverse-positive: `d(x_k, x*) <= (I − BA)⁻¹ B A^k d(x_0, x_1)`.
//!
//! The contraction matrix is supplied by the caller and only checked along
//! the computed orbit and on optional samples.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{self, Env, EvalError, Expr, SyntaxError, VarKind};
use crate::matops::{inverse, is_convergent_to_zero, is_inverse_positive, BClass, Mat, MatError, DEFAULT_KMAX, DEFAULT_TOL};
use crate::metric::{self, le, norm_inf, rho, MetricError, MetricSpec, Norm, VecN};

/// Iterates whose sup-norm exceeds this abort the run.
pub const DIVERGENCE_NORM: f64 = 1e12;
/// Relative slack of the orbit contraction check on top of the absolute `tol`.
pub const ORBIT_RTOL: f64 = 1e-9;
/// Number of trailing iterates kept in a result.
pub const ORBIT_TAIL: usize = 5;
/// A sequence "vanishes" when its last ρ₁ value is below this fraction of its peak (floored at 1).
pub const VANISH_RTOL: f64 = 1e-6;
/// Per-component tolerance used when a reference fixed point is computed internally.
pub const REFERENCE_TOL: f64 = 1e-13;
/// Slack for comparing a measured distance with a computed bound.
pub const BOUND_CHECK_TOL: f64 = 1e-9;
/// Damping of the Avramescu outer refinement `y <- (1 - λ) y + λ g(y)`.
pub const AVRAMESCU_LAMBDA: f64 = 0.5;
/// Per-component tolerance of the inner solve `S(y)`.
pub const AVRAMESCU_INNER_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("operator evaluation failed: {0}")]
    Eval(#[from] EvalError),
    #[error("operator component {component}: {source}")]
    Syntax { component: usize, source: SyntaxError },
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Mat(#[from] MatError),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("B is neither positive nor inverse-positive; no convergence theory applies")]
    BClassUnsupported,
    #[error("no convergence after {iterations} iterations: {reason}")]
    MaxIterExceeded { iterations: usize, best: Vec<f64>, residual: VecN, reason: String },
    #[error("contraction check failed at k = {k}: d(x_k+1, x_k+2) = {lhs:?} exceeds A d(x_k, x_k+1) = {rhs:?}")]
    ContractionViolated { k: usize, lhs: VecN, rhs: VecN },
    #[error("case ({case}) certificate unavailable: {reason}")]
    CertificationFailed { case: Case, reason: String },
    #[error("graph condition fails at {point:?}: d(Nx, N²x) = {lhs:?} exceeds A d(x, Nx) = {rhs:?}")]
    GraphConditionViolated { point: Vec<f64>, lhs: VecN, rhs: VecN, on_orbit: bool },
    #[error("subordination d1 <= C d2 fails at ({u:?}, {v:?}): {lhs:?} vs {rhs:?}")]
    SubordinationViolated { u: Vec<f64>, v: Vec<f64>, lhs: VecN, rhs: VecN },
    #[error("Lipschitz condition in x fails at y = {y:?}: {lhs:?} exceeds {rhs:?}")]
    LipschitzViolated { y: Vec<f64>, lhs: VecN, rhs: VecN },
    #[error("outer search stalled at y = {y:?} with residual {residual}")]
    NoFixedPointFound { y: Vec<f64>, residual: f64 },
    #[error("parameter dimension {0} unsupported; the grid search handles at most 2")]
    DimensionUnsupported(usize),
}

type Result<T, E = SolverError> = std::result::Result<T, E>;

/// An operator `N: ℝᵐ → ℝᵐ`.
pub trait SelfMap: Send + Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Result<Vec<f64>>;
}

/// An operator `(x, y) ↦ N(x, y)` with `x ∈ ℝᵐ`, `y ∈ ℝ^q`.
pub trait PairMap: Send + Sync {
    fn dims(&self) -> (usize, usize);
    fn apply_pair(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>>;
}

/// Operator given by one expression per output component in `x1..` and `y1..`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprMap {
    exprs: Vec<Expr>,
    dim_x: usize,
    dim_y: usize,
}

impl ExprMap {
    pub fn new<S: AsRef<str>>(components: &[S], dim_x: usize, dim_y: usize) -> Result<Self> {
        let exprs = expr::parse_all(components).map_err(|(component, source)| SolverError::Syntax { component, source })?;
        for (i, e) in exprs.iter().enumerate() {
            if e.max_index(VarKind::X) > dim_x
                || e.max_index(VarKind::Y) > dim_y
                || e.max_index(VarKind::U) > 0
                || e.max_index(VarKind::V) > 0
            {
                return Err(SolverError::InvalidProblem(format!(
                    "operator component {i} ({e}) uses variables outside x1..x{dim_x}, y1..y{dim_y}"
                )));
            }
        }
        Ok(ExprMap { exprs, dim_x, dim_y })
    }

    pub fn out_dim(&self) -> usize {
        self.exprs.len()
    }

    pub fn exprs(&self) -> &[Expr] {
        &self.exprs
    }
}

impl SelfMap for ExprMap {
    fn dim(&self) -> usize {
        self.dim_x
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(expr::eval_all(&self.exprs, &Env::x(x))?)
    }
}

impl PairMap for ExprMap {
    fn dims(&self) -> (usize, usize) {
        (self.dim_x, self.dim_y)
    }

    fn apply_pair(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        Ok(expr::eval_all(&self.exprs, &Env::xy(x, y))?)
    }
}

/// Closure-backed [`SelfMap`].
pub struct FnMap<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> Vec<f64> + Send + Sync> FnMap<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnMap { dim, f }
    }
}

impl<F: Fn(&[f64]) -> Vec<f64> + Send + Sync> SelfMap for FnMap<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok((self.f)(x))
    }
}

/// Closure-backed [`PairMap`].
pub struct FnPairMap<F> {
    dims: (usize, usize),
    f: F,
}

impl<F: Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync> FnPairMap<F> {
    pub fn new(dim_x: usize, dim_y: usize, f: F) -> Self {
        FnPairMap { dims: (dim_x, dim_y), f }
    }
}

impl<F: Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync> PairMap for FnPairMap<F> {
    fn dims(&self) -> (usize, usize) {
        self.dims
    }

    fn apply_pair(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        Ok((self.f)(x, y))
    }
}

/// `N(·, y)` for a frozen parameter `y`.
struct Frozen {
    map: Arc<dyn PairMap>,
    y: Vec<f64>,
}

impl SelfMap for Frozen {
    fn dim(&self) -> usize {
        self.map.dims().0
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.map.apply_pair(x, &self.y)
    }
}

#[derive(Clone)]
pub struct ContractionProblem {
    pub map: Arc<dyn SelfMap>,
    pub metric: MetricSpec,
    pub a: Mat,
    pub x0: Vec<f64>,
    pub tol: VecN,
    pub max_iter: usize,
}

impl std::fmt::Debug for ContractionProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ContractionProblem")
            .field("metric", &self.metric)
            .field("a", &self.a)
            .field("x0", &self.x0)
            .field("tol", &self.tol)
            .field("max_iter", &self.max_iter)
            .finish_non_exhaustive()
    }
}

impl ContractionProblem {
    pub fn new(map: Arc<dyn SelfMap>, metric: MetricSpec, a: Mat, x0: Vec<f64>, tol: VecN, max_iter: usize) -> Self {
        ContractionProblem { map, metric, a, x0, tol, max_iter }
    }

    fn validate(&self) -> Result<()> {
        let (m, n) = (self.metric.m(), self.metric.n());
        if self.map.dim() != m || self.x0.len() != m {
            return Err(SolverError::InvalidProblem(format!(
                "operator acts on ℝ^{}, x0 has {} entries, metric expects points in ℝ^{m}",
                self.map.dim(),
                self.x0.len()
            )));
        }
        if self.a.n() != n || self.tol.len() != n {
            return Err(SolverError::InvalidProblem(format!(
                "A is {}×{} and tol has {} entries, metric has {n} components",
                self.a.n(),
                self.a.n(),
                self.tol.len()
            )));
        }
        if self.tol.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(SolverError::InvalidProblem("tolerances must be positive".into()));
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::InvalidProblem("x0 must be finite".into()));
        }
        if self.metric.b_class() == BClass::Neither {
            return Err(SolverError::BClassUnsupported);
        }
        let conv = is_convergent_to_zero(&self.a, DEFAULT_TOL, DEFAULT_KMAX)?;
        if !conv.convergent {
            return Err(MatError::NotConvergent { spectral_radius: conv.spectral_radius }.into());
        }
        Ok(())
    }

    fn step(&self, x: &[f64]) -> Result<Vec<f64>> {
        let y = self.map.apply(x)?;
        if y.len() != x.len() {
            return Err(SolverError::InvalidProblem(format!("operator returned {} components, expected {}", y.len(), x.len())));
        }
        Ok(y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Case {
    /// `B` inverse-positive.
    A,
    /// `B` positive.
    B,
}

impl std::fmt::Display for Case {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Case::A => "a",
            Case::B => "b",
        })
    }
}

/// The matrix `Φ` with `d(x, x*) <= Φ d(x, N x)`: `(B⁻¹ − A)⁻¹` in case (a),
/// `(I − BA)⁻¹ B` in case (b).
pub fn certificate_matrix(case: Case, a: &Mat, b: &Mat, tol: f64) -> Result<Mat> {
    let fail = |reason: String| SolverError::CertificationFailed { case, reason };
    match case {
        Case::A => {
            let bp = is_inverse_positive(b, tol)?;
            let binv = match bp.inverse {
                Some(inv) if bp.inverse_positive => inv,
                _ => return Err(fail(format!("B is not inverse-positive ({})", bp.reason.unwrap_or_default()))),
            };
            let aux = binv.try_sub(a)?;
            let ip = is_inverse_positive(&aux, tol)?;
            match ip.inverse {
                Some(inv) if ip.inverse_positive => Ok(inv),
                _ => Err(fail(format!("B⁻¹ − A is not inverse-positive ({})", ip.reason.clone().unwrap_or_default()))),
            }
        }
        Case::B => {
            if !b.is_nonnegative(tol) {
                return Err(fail("B is not positive".into()));
            }
            let ba = b.matmul(a);
            let aux = Mat::identity(b.n()).try_sub(&ba)?;
            let ip = is_inverse_positive(&aux, tol)?;
            match ip.inverse {
                Some(inv) if ip.inverse_positive => Ok(inv.matmul(b)),
                _ => Err(fail(format!("I − BA is not inverse-positive ({})", ip.reason.clone().unwrap_or_default()))),
            }
        }
    }
}

/// `Φ A^k d01`: the a-priori bound on `d(x_k, x*)`.
pub fn apriori_bound(a: &Mat, b: &Mat, d01: &[f64], k: u64, case: Case, tol: f64) -> Result<VecN> {
    let phi = certificate_matrix(case, a, b, tol)?;
    if d01.len() != a.n() {
        return Err(SolverError::InvalidProblem("d01 dimension does not match A".into()));
    }
    Ok(phi.apply(&a.pow(k).apply(d01)))
}

fn certified_cases(a: &Mat, b: &Mat, class: BClass, tol: f64) -> (Result<Mat>, Result<Mat>) {
    let ca = if class.is_inverse_positive() {
        certificate_matrix(Case::A, a, b, tol)
    } else {
        Err(SolverError::CertificationFailed { case: Case::A, reason: "B is not inverse-positive".into() })
    };
    let cb = if class.is_positive() {
        certificate_matrix(Case::B, a, b, tol)
    } else {
        Err(SolverError::CertificationFailed { case: Case::B, reason: "B is not positive".into() })
    };
    (ca, cb)
}

/// Picks the certified case whose bound `Φ v` is smaller: componentwise if
/// comparable, else by ρ₁; case (a) on ties.
fn select_case(ca: Option<&Mat>, cb: Option<&Mat>, v: &[f64]) -> Option<(Case, Mat)> {
    match (ca, cb) {
        (Some(pa), Some(pb)) => {
            let ba = pa.apply(v);
            let bb = pb.apply(v);
            let pick_b = if metric::le_exact(&ba, &bb) {
                false
            } else if metric::le_exact(&bb, &ba) {
                true
            } else {
                rho(Norm::L1, &bb) < rho(Norm::L1, &ba)
            };
            Some(if pick_b { (Case::B, pb.clone()) } else { (Case::A, pa.clone()) })
        }
        (Some(pa), None) => Some((Case::A, pa.clone())),
        (None, Some(pb)) => Some((Case::B, pb.clone())),
        (None, None) => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateRow {
    pub k: usize,
    /// A-priori bound on `d(x_k, x*)`; absent for uncertified runs.
    pub bound: Option<VecN>,
    /// `d(x_k, x_{k+1})`.
    pub residual: VecN,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub case: Option<Case>,
    pub bound_valid: bool,
    pub d01: VecN,
    /// `(B⁻¹ − A)⁻¹` for case (a), `(I − BA)⁻¹ B` for case (b).
    pub matrix: Option<Mat>,
    pub case_a_certified: bool,
    pub case_b_certified: bool,
    pub rows: Vec<CertificateRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    AprioriBound,
    Residual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointResult {
    pub x_star: Vec<f64>,
    pub iterations: usize,
    /// `d(x*, N x*)` in the stopping metric.
    pub residual: VecN,
    pub orbit_tail: Vec<Vec<f64>>,
    pub certificate: Certificate,
    pub empirical_contraction_ok: bool,
    pub unique: bool,
    pub stop_rule: StopRule,
    pub stopping_metric: String,
    /// Graph solves: the contraction condition was checked along the orbit only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verified_along_orbit: Option<bool>,
    /// Maia solves: residual and error bound in the first metric.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d1_residual: Option<VecN>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d1_bound: Option<VecN>,
}

fn orbit_ok(a: &Mat, prev: &[f64], next: &[f64], tol: &[f64]) -> (bool, VecN) {
    let rhs = a.apply(prev);
    let ok = next.iter().zip(&rhs).zip(tol).all(|((l, r), t)| *l <= r + t + ORBIT_RTOL * r.abs().max(l.abs()));
    (ok, rhs)
}

fn push_tail(tail: &mut Vec<Vec<f64>>, x: &[f64]) {
    if tail.len() == ORBIT_TAIL {
        tail.remove(0);
    }
    tail.push(x.to_vec());
}

struct Iteration {
    certified: Option<(Case, Mat)>,
    require_contraction: bool,
    unique: bool,
}

fn iterate(p: &ContractionProblem, how: Iteration, case_flags: (bool, bool)) -> Result<FixedPointResult> {
    let d = |u: &[f64], v: &[f64]| p.metric.eval(u, v);
    let mut x = p.x0.clone();
    let mut next = p.step(&x)?;
    let d01 = d(&x, &next)?;
    let mut ak_d01 = d01.clone();
    let mut rows = Vec::new();
    let mut tail = Vec::new();
    let mut prev_residual: Option<VecN> = None;
    let mut best = (f64::INFINITY, x.clone(), d01.clone());

    for k in 0..=p.max_iter {
        push_tail(&mut tail, &x);
        let residual = d(&x, &next)?;
        if let Some(prev) = &prev_residual {
            let (ok, rhs) = orbit_ok(&p.a, prev, &residual, &p.tol);
            if !ok {
                return Err(if how.require_contraction {
                    SolverError::ContractionViolated { k: k - 1, lhs: residual, rhs }
                } else {
                    SolverError::GraphConditionViolated { point: tail[tail.len() - 2].clone(), lhs: residual, rhs, on_orbit: true }
                });
            }
        }
        let r1 = rho(Norm::L1, &residual);
        if r1 < best.0 {
            best = (r1, x.clone(), residual.clone());
        }
        let bound = how.certified.as_ref().map(|(_, phi)| phi.apply(&ak_d01));
        let done = match &bound {
            Some(b) => metric::le_exact(b, &p.tol),
            None => metric::le_exact(&residual, &p.tol),
        };
        rows.push(CertificateRow { k, bound, residual: residual.clone() });
        if done {
            return Ok(FixedPointResult {
                x_star: x,
                iterations: k,
                residual,
                orbit_tail: tail,
                certificate: Certificate {
                    case: how.certified.as_ref().map(|c| c.0),
                    bound_valid: how.certified.is_some(),
                    d01,
                    matrix: how.certified.as_ref().map(|c| c.1.clone()),
                    case_a_certified: case_flags.0,
                    case_b_certified: case_flags.1,
                    rows,
                },
                empirical_contraction_ok: true,
                unique: how.unique,
                stop_rule: if how.certified.is_some() { StopRule::AprioriBound } else { StopRule::Residual },
                stopping_metric: "d".into(),
                verified_along_orbit: None,
                d1_residual: None,
                d1_bound: None,
            });
        }
        if norm_inf(&next) > DIVERGENCE_NORM || next.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::MaxIterExceeded {
                iterations: k + 1,
                best: best.1,
                residual: best.2,
                reason: format!("iterate norm exceeded {DIVERGENCE_NORM:e}"),
            });
        }
        prev_residual = Some(residual);
        x = std::mem::take(&mut next);
        next = p.step(&x)?;
        ak_d01 = p.a.apply(&ak_d01);
    }
    Err(SolverError::MaxIterExceeded {
        iterations: p.max_iter,
        best: best.1,
        residual: best.2,
        reason: "iteration limit reached".into(),
    })
}

/// Picard iteration `x_{k+1} = N(x_k)` for a Perov contraction, stopped at
/// the first `k` whose a-priori bound is below `tol`. Without a certified
/// case the run stops on the residual `d(x_k, x_{k+1}) <= tol` and the
/// certificate is marked invalid.
pub fn perov_solve(p: &ContractionProblem) -> Result<FixedPointResult> {
    p.validate()?;
    let b = p.metric.b();
    let (ca, cb) = certified_cases(&p.a, b, p.metric.b_class(), DEFAULT_TOL);
    let flags = (ca.is_ok(), cb.is_ok());
    let x1 = p.step(&p.x0)?;
    let d01 = p.metric.eval(&p.x0, &x1)?;
    let certified = select_case(ca.as_ref().ok(), cb.as_ref().ok(), &p.a.apply(&d01));
    iterate(p, Iteration { certified, require_contraction: true, unique: true }, flags)
}

/// Iteration under the graph condition `d(N x, N² x) <= A d(x, N x)`.
/// The condition is checked on `sample` and along the orbit; the result
/// makes no uniqueness claim and stops on the residual.
pub fn graph_solve(p: &ContractionProblem, sample: &[Vec<f64>]) -> Result<FixedPointResult> {
    p.validate()?;
    for x in sample {
        if x.len() != p.metric.m() {
            return Err(SolverError::InvalidProblem("sample point has the wrong dimension".into()));
        }
        let nx = p.step(x)?;
        let nnx = p.step(&nx)?;
        let lhs = p.metric.eval(&nx, &nnx)?;
        let (ok, rhs) = orbit_ok(&p.a, &p.metric.eval(x, &nx)?, &lhs, &p.tol);
        if !ok {
            return Err(SolverError::GraphConditionViolated { point: x.clone(), lhs, rhs, on_orbit: false });
        }
    }
    let mut r = iterate(p, Iteration { certified: None, require_contraction: false, unique: false }, (false, false))?;
    r.verified_along_orbit = Some(true);
    Ok(r)
}

/// Maia-type iteration: contraction and stopping in `d2`, subordination
/// `d1 <= C d2` checked on all pairs of `sample`.
pub fn maia_solve(
    map: Arc<dyn SelfMap>,
    d1: &MetricSpec,
    d2: &MetricSpec,
    c: &Mat,
    a: &Mat,
    x0: Vec<f64>,
    tol: VecN,
    max_iter: usize,
    sample: &[Vec<f64>],
) -> Result<FixedPointResult> {
    if d1.n() != d2.n() || d1.m() != d2.m() || c.n() != d1.n() {
        return Err(SolverError::InvalidProblem("d1, d2 and C must share dimensions".into()));
    }
    c.check_finite()?;
    for (i, u) in sample.iter().enumerate() {
        for v in &sample[i + 1..] {
            let lhs = d1.eval(u, v)?;
            let rhs = c.apply(&d2.eval(u, v)?);
            if !le(&lhs, &rhs, DEFAULT_TOL) {
                return Err(SolverError::SubordinationViolated { u: u.clone(), v: v.clone(), lhs, rhs });
            }
        }
    }
    let p = ContractionProblem::new(map, d2.clone(), a.clone(), x0, tol, max_iter);
    let mut r = perov_solve(&p)?;
    let nx = p.step(&r.x_star)?;
    r.d1_residual = Some(d1.eval(&r.x_star, &nx)?);
    if c.is_nonnegative(0.0) {
        r.d1_bound = r.certificate.rows.last().and_then(|row| row.bound.as_ref()).map(|b| c.apply(b));
    }
    r.stopping_metric = "d2".into();
    Ok(r)
}

/// `x_0, N(x_0), …, N^k(x_0)`.
pub fn picard_orbit(map: &dyn SelfMap, x0: &[f64], k: usize) -> Result<Vec<Vec<f64>>> {
    let mut out = vec![x0.to_vec()];
    for _ in 0..k {
        let next = map.apply(out.last().unwrap())?;
        out.push(next);
    }
    Ok(out)
}

fn vanishes(values: &[f64]) -> bool {
    match values.last() {
        None => true,
        Some(last) => *last <= VANISH_RTOL * values.iter().fold(1.0f64, |m, v| m.max(*v)),
    }
}

fn reference_fixed_point(p: &ContractionProblem) -> Result<Vec<f64>> {
    let q = ContractionProblem { tol: vec![REFERENCE_TOL; p.tol.len()], max_iter: p.max_iter.max(10_000), ..p.clone() };
    Ok(perov_solve(&q)?.x_star)
}

fn stability_case(p: &ContractionProblem, mk: impl Fn(Case) -> Result<Mat>) -> Result<(Case, Mat)> {
    let class = p.metric.b_class();
    let ca = if class.is_inverse_positive() { mk(Case::A) } else { Err(SolverError::CertificationFailed { case: Case::A, reason: "B is not inverse-positive".into() }) };
    let cb = if class.is_positive() { mk(Case::B) } else { Err(SolverError::CertificationFailed { case: Case::B, reason: "B is not positive".into() }) };
    let ones = vec![1.0; p.a.n()];
    match select_case(ca.as_ref().ok(), cb.as_ref().ok(), &ones) {
        Some(c) => Ok(c),
        None => Err(match (ca, cb) {
            (Err(e), _) if class.is_inverse_positive() => e,
            (_, Err(e)) => e,
            (Err(e), _) => e,
            _ => unreachable!(),
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub k: usize,
    /// `d(x_k, N x_k)` for Reich–Zaslavski, `d(x_k, N x_{k-1})` for Ostrowski.
    pub residual: VecN,
    pub distance: VecN,
    pub bound: VecN,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RzReport {
    pub case: Case,
    pub matrix: Mat,
    pub x_star: Vec<f64>,
    pub rows: Vec<StabilityRow>,
    pub bound_holds: bool,
    pub residual_vanishing: bool,
    pub convergence_confirmed: bool,
    pub note: Option<String>,
}

/// Reich–Zaslavski check: for each `x_k` in `seq`, `d(x_k, x*) <= Φ d(x_k, N x_k)`,
/// and `x_k → x*` whenever the residuals vanish.
pub fn rz_stability_check(p: &ContractionProblem, seq: &[Vec<f64>]) -> Result<RzReport> {
    p.validate()?;
    let (case, phi) = stability_case(p, |c| certificate_matrix(c, &p.a, p.metric.b(), DEFAULT_TOL))?;
    let x_star = reference_fixed_point(p)?;
    let mut rows = Vec::with_capacity(seq.len());
    for (k, x) in seq.iter().enumerate() {
        let residual = p.metric.eval(x, &p.step(x)?)?;
        let bound = phi.apply(&residual);
        let distance = p.metric.eval(x, &x_star)?;
        let holds = metric::le_exact(&distance, &metric::add(&bound, &vec![BOUND_CHECK_TOL; bound.len()]));
        rows.push(StabilityRow { k, residual, distance, bound, holds });
    }
    let residual_vanishing = vanishes(&rows.iter().map(|r| rho(Norm::L1, &r.residual)).collect::<Vec<_>>());
    let distance_vanishing = vanishes(&rows.iter().map(|r| rho(Norm::L1, &r.distance)).collect::<Vec<_>>());
    Ok(RzReport {
        case,
        matrix: phi,
        x_star,
        bound_holds: rows.iter().all(|r| r.holds),
        residual_vanishing,
        convergence_confirmed: residual_vanishing && distance_vanishing,
        note: (!residual_vanishing).then(|| "residual does not vanish; the vanishing-residual hypothesis is unmet".to_string()),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OstrowskiReport {
    pub case: Case,
    /// `b̃ = max_i b_ii` in case (a), absent in case (b).
    pub b_tilde: Option<f64>,
    /// `(I − b̃A)⁻¹ b̃` or `(I − BA)⁻¹ B`: maps a steady perturbation level to the limiting error scale.
    pub limit_matrix: Mat,
    pub x_star: Vec<f64>,
    pub rows: Vec<StabilityRow>,
    pub majorant_dominates: bool,
    pub schedule_vanishing: bool,
    pub error_converges: bool,
    /// `limit_matrix · d(x_K, N x_{K-1})` for the final step.
    pub limit_bound: VecN,
    pub note: Option<String>,
}

/// Perturbed iteration `x_{k+1} = N(x_k) + s_k` for a schedule of additive
/// perturbations `s_k ∈ ℝᵐ`, with the error compared at every step to the
/// partial-sum majorant
///
/// - case (a): `b̃ Σ_{p=0..k} (b̃A)^p e_{k-p} + (b̃A)^{k+1} d(x_0, x*)`,
/// - case (b): `Σ_{p=0..k} (BA)^p B e_{k-p} + (BA)^{k+1} d(x_0, x*)`,
///
/// where `e_j = d(x_{j+1}, N x_j)` is measured.
pub fn ostrowski_run(p: &ContractionProblem, schedule: &[Vec<f64>]) -> Result<OstrowskiReport> {
    p.validate()?;
    let b = p.metric.b();
    let n = p.a.n();
    let b_tilde = b.max_diag();
    let (case, _) = stability_case(p, |c| match c {
        Case::A => {
            let aux = Mat::identity(n).try_sub(&p.a.scale(b_tilde))?;
            let ip = is_inverse_positive(&aux, DEFAULT_TOL)?;
            match ip.inverse {
                Some(inv) if ip.inverse_positive => Ok(inv.scale(b_tilde)),
                _ => Err(SolverError::CertificationFailed { case: Case::A, reason: format!("I − b̃A is not inverse-positive ({})", ip.reason.clone().unwrap_or_default()) }),
            }
        }
        Case::B => certificate_matrix(Case::B, &p.a, b, DEFAULT_TOL),
    })?;
    let (step_mat, weight): (Mat, Mat) = match case {
        Case::A => (p.a.scale(b_tilde), Mat::scalar(n, b_tilde)),
        Case::B => (b.matmul(&p.a), b.clone()),
    };
    let limit_matrix = inverse(&Mat::identity(n).try_sub(&step_mat)?, DEFAULT_TOL)?
        .ok_or_else(|| SolverError::CertificationFailed { case, reason: "I − b̃A or I − BA is singular".into() })?
        .matmul(&weight);
    for s in schedule {
        if s.len() != p.metric.m() || s.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::InvalidProblem("perturbations must be finite points of the operator's dimension".into()));
        }
    }
    let x_star = reference_fixed_point(p)?;
    let d0 = p.metric.eval(&p.x0, &x_star)?;
    let mut rows = vec![StabilityRow { k: 0, residual: vec![0.0; n], distance: d0.clone(), bound: d0.clone(), holds: true }];
    let mut perturb: Vec<VecN> = Vec::with_capacity(schedule.len());
    let mut x = p.x0.clone();
    // powers[p] = step_mat^p
    let mut powers = vec![Mat::identity(n)];
    for (k, s) in schedule.iter().enumerate() {
        let nx = p.step(&x)?;
        let next: Vec<f64> = nx.iter().zip(s).map(|(a, b)| a + b).collect();
        let e = p.metric.eval(&next, &nx)?;
        perturb.push(weight.apply(&e));
        powers.push(powers[k].matmul(&step_mat));
        let mut bound = powers[k + 1].apply(&d0);
        for q in 0..=k {
            bound = metric::add(&bound, &powers[q].apply(&perturb[k - q]));
        }
        let distance = p.metric.eval(&next, &x_star)?;
        let holds = metric::le_exact(&distance, &metric::add(&bound, &vec![BOUND_CHECK_TOL; n]));
        rows.push(StabilityRow { k: k + 1, residual: e, distance, bound, holds });
        if norm_inf(&next) > DIVERGENCE_NORM {
            return Err(SolverError::MaxIterExceeded { iterations: k + 1, best: x, residual: rows[k].distance.clone(), reason: format!("iterate norm exceeded {DIVERGENCE_NORM:e}") });
        }
        x = next;
    }
    let schedule_vanishing = vanishes(&rows[1..].iter().map(|r| rho(Norm::L1, &r.residual)).collect::<Vec<_>>());
    let error_converges = vanishes(&rows.iter().map(|r| rho(Norm::L1, &r.distance)).collect::<Vec<_>>());
    let last = rows.last().unwrap().residual.clone();
    Ok(OstrowskiReport {
        case,
        b_tilde: (case == Case::A).then_some(b_tilde),
        limit_bound: limit_matrix.apply(&last),
        limit_matrix,
        x_star,
        majorant_dominates: rows.iter().all(|r| r.holds),
        schedule_vanishing,
        error_converges,
        note: (!schedule_vanishing).then(|| "perturbation schedule does not vanish; convergence is not implied".to_string()),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityWitness {
    pub y: Vec<f64>,
    pub y_bar: Vec<f64>,
    pub lhs: VecN,
    pub rhs: VecN,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityReport {
    pub case: Case,
    pub matrix: Mat,
    pub pairs: usize,
    pub violations: usize,
    /// Largest `max_i (lhs_i − rhs_i)` over the sampled pairs.
    pub max_margin: f64,
    pub witnesses: Vec<ContinuityWitness>,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvramescuResult {
    pub x_star: Vec<f64>,
    pub y_star: Vec<f64>,
    /// `‖N1(x*, y*) − x*‖∞`.
    pub residual_x: f64,
    /// `‖N2(x*, y*) − y*‖∞`.
    pub residual_y: f64,
    pub grid_points: usize,
    pub grid_start: Vec<f64>,
    pub refine_steps: usize,
    pub lipschitz_checks: usize,
    pub continuity: ContinuityReport,
}

#[derive(Clone)]
pub struct AvramescuProblem {
    pub n1: Arc<dyn PairMap>,
    pub n2: Arc<dyn PairMap>,
    pub metric: MetricSpec,
    pub a: Mat,
    /// Box `D = Π [lo_i, hi_i]` for `y`.
    pub dbox: Vec<(f64, f64)>,
    pub x0: Vec<f64>,
    pub tol: f64,
    pub max_iter: usize,
    pub grid: usize,
    pub refine_iters: usize,
    pub continuity_pairs: usize,
    pub seed: u64,
}

impl AvramescuProblem {
    fn inner(&self, y: &[f64]) -> ContractionProblem {
        ContractionProblem::new(
            Arc::new(Frozen { map: self.n1.clone(), y: y.to_vec() }),
            self.metric.clone(),
            self.a.clone(),
            self.x0.clone(),
            vec![AVRAMESCU_INNER_TOL; self.a.n()],
            self.max_iter,
        )
    }

    fn s(&self, y: &[f64]) -> Result<Vec<f64>> {
        Ok(perov_solve(&self.inner(y))?.x_star)
    }

    fn grid_points(&self) -> Vec<Vec<f64>> {
        let axis = |&(lo, hi): &(f64, f64)| -> Vec<f64> {
            if self.grid <= 1 {
                vec![0.5 * (lo + hi)]
            } else {
                (0..self.grid).map(|i| lo + (hi - lo) * i as f64 / (self.grid - 1) as f64).collect()
            }
        };
        let axes: Vec<Vec<f64>> = self.dbox.iter().map(axis).collect();
        axes.iter().fold(vec![Vec::new()], |acc, ax| {
            acc.iter().flat_map(|prefix| ax.iter().map(move |v| [prefix.clone(), vec![*v]].concat())).collect()
        })
    }
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Coupled fixed point `N1(x*, y*) = x*`, `N2(x*, y*) = y*`. `S(y)` is the
/// Perov fixed point of `N1(·, y)`; the outer fixed point of
/// `g(y) = N2(S(y), y)` is searched on a grid over `D` and refined by the
/// damped iteration `y <- (1 − λ) y + λ g(y)`. The search is heuristic.
pub fn avramescu_solve(q: &AvramescuProblem) -> Result<AvramescuResult> {
    let dim_y = q.dbox.len();
    if dim_y > 2 {
        return Err(SolverError::DimensionUnsupported(dim_y));
    }
    if dim_y == 0 || q.dbox.iter().any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi)) {
        return Err(SolverError::InvalidProblem("Dbox must list finite intervals lo <= hi".into()));
    }
    let (mx, my) = q.n1.dims();
    let (mx2, my2) = q.n2.dims();
    if mx != q.metric.m() || mx2 != mx || my != dim_y || my2 != dim_y {
        return Err(SolverError::InvalidProblem("operator dimensions do not match the metric and Dbox".into()));
    }
    if !(q.tol > 0.0) {
        return Err(SolverError::InvalidProblem("tol must be positive".into()));
    }
    let (case, phi) = {
        let p = q.inner(&q.dbox.iter().map(|(lo, _)| *lo).collect::<Vec<_>>());
        p.validate()?;
        stability_case(&p, |c| certificate_matrix(c, &q.a, q.metric.b(), DEFAULT_TOL))?
    };

    let grid = q.grid_points();
    let evaluated: Vec<(Vec<f64>, Vec<f64>, f64)> = grid
        .par_iter()
        .map(|y| {
            let x = q.s(y)?;
            let g = q.n2.apply_pair(&x, y)?;
            let r = sup_diff(&g, y);
            Ok((y.clone(), x, r))
        })
        .collect::<Result<_>>()?;

    // Lipschitz condition in x, spot-checked on pairs of computed S values.
    let mut lipschitz_checks = 0;
    let stride = (evaluated.len() / 8).max(1);
    let probes: Vec<&(Vec<f64>, Vec<f64>, f64)> = evaluated.iter().step_by(stride).collect();
    for (y, _, _) in &probes {
        for (i, (_, xa, _)) in probes.iter().enumerate() {
            for (_, xb, _) in &probes[i + 1..] {
                let lhs = q.metric.eval(&q.n1.apply_pair(xa, y)?, &q.n1.apply_pair(xb, y)?)?;
                let (ok, rhs) = orbit_ok(&q.a, &q.metric.eval(xa, xb)?, &lhs, &vec![AVRAMESCU_INNER_TOL; q.a.n()]);
                lipschitz_checks += 1;
                if !ok {
                    return Err(SolverError::LipschitzViolated { y: y.clone(), lhs, rhs });
                }
            }
        }
    }

    let start = evaluated
        .iter()
        .fold(None::<&(Vec<f64>, Vec<f64>, f64)>, |best, e| match best {
            Some(b) if b.2 <= e.2 => Some(b),
            _ => Some(e),
        })
        .expect("grid is nonempty");
    let mut y = start.0.clone();
    let mut refine_steps = 0;
    let (x_star, y_star, rx, ry) = loop {
        let x = q.s(&y)?;
        let rx = sup_diff(&q.n1.apply_pair(&x, &y)?, &x);
        let g = q.n2.apply_pair(&x, &y)?;
        let ry = sup_diff(&g, &y);
        if rx <= q.tol && ry <= q.tol {
            break (x, y, rx, ry);
        }
        if refine_steps >= q.refine_iters {
            return Err(SolverError::NoFixedPointFound { y, residual: ry.max(rx) });
        }
        y = y.iter().zip(&g).map(|(a, b)| (1.0 - AVRAMESCU_LAMBDA) * a + AVRAMESCU_LAMBDA * b).collect();
        refine_steps += 1;
    };

    let continuity = continuity_report(q, case, phi)?;
    Ok(AvramescuResult {
        x_star,
        y_star,
        residual_x: rx,
        residual_y: ry,
        grid_points: grid.len(),
        grid_start: start.0.clone(),
        refine_steps,
        lipschitz_checks,
        continuity,
    })
}

/// The continuity estimate of `S`:
/// `d(S(y), S(ȳ)) <= Φ d(N1(S(ȳ), y), N1(S(ȳ), ȳ))` on seeded pairs from `D`.
pub fn s_continuity_bound(q: &AvramescuProblem, phi: &Mat, y: &[f64], y_bar: &[f64]) -> Result<ContinuityWitness> {
    let sy = q.s(y)?;
    let sb = q.s(y_bar)?;
    let lhs = q.metric.eval(&sy, &sb)?;
    let rhs = phi.apply(&q.metric.eval(&q.n1.apply_pair(&sb, y)?, &q.n1.apply_pair(&sb, y_bar)?)?);
    Ok(ContinuityWitness { y: y.to_vec(), y_bar: y_bar.to_vec(), lhs, rhs })
}

fn continuity_report(q: &AvramescuProblem, case: Case, phi: Mat) -> Result<ContinuityReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(q.seed);
    let mut draw = || -> Vec<f64> { q.dbox.iter().map(|&(lo, hi)| if lo == hi { lo } else { rng.gen_range(lo..=hi) }).collect() };
    let mut pairs: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(q.continuity_pairs);
    if q.continuity_pairs > 0 {
        let y = draw();
        pairs.push((y.clone(), y));
    }
    while pairs.len() < q.continuity_pairs {
        pairs.push((draw(), draw()));
    }
    let checked: Vec<ContinuityWitness> =
        pairs.par_iter().map(|(y, yb)| s_continuity_bound(q, &phi, y, yb)).collect::<Result<_>>()?;
    let margin = |w: &ContinuityWitness| w.lhs.iter().zip(&w.rhs).map(|(l, r)| l - r).fold(f64::NEG_INFINITY, f64::max);
    let bad: Vec<ContinuityWitness> = checked.iter().filter(|w| margin(w) > BOUND_CHECK_TOL).cloned().collect();
    Ok(ContinuityReport {
        case,
        matrix: phi,
        pairs: checked.len(),
        violations: bad.len(),
        max_margin: checked.iter().map(margin).fold(f64::NEG_INFINITY, f64::max),
        holds: bad.is_empty(),
        witnesses: bad.into_iter().take(10).collect(),
    })
}
