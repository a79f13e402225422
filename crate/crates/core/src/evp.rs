//! Ekeland's variational principle and Caristi's fixed point theorem on
//! finite vector B-metric spaces.
//!
//! On a finite carrier completeness, continuity of `d`, lower semicontinuity
//! and boundedness of `f` are automatic, so every hypothesis and every
//! conclusion can be checked exhaustively. Set membership, condition (H) and
//! the Caristi conditions use exact comparisons; conclusions derived through
//! the triangle inequality allow a relative slack of [`SLACK`].

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matops::{classify, BClass, Mat, MatError, DEFAULT_TOL};
use crate::metric::{self, MetricError, MetricSpec, Norm, VecN};

/// Relative slack for inequalities that pass through the triangle inequality.
pub const SLACK: f64 = 1e-12;
/// Largest supported carrier.
pub const MAX_POINTS: usize = 10_000;
/// Iterations allowed beyond `ceil(log2(eps0 / gap))`.
pub const EXTRA_STEPS: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvpError {
    #[error("invalid finite space: {0}")]
    InvalidSpace(String),
    #[error("triangle inequality fails for ({i}, {j}, {k}): d(i,k) = {lhs:?} exceeds B(d(i,j) + d(j,k)) = {rhs:?}")]
    TriangleViolated { i: usize, j: usize, k: usize, lhs: VecN, rhs: VecN },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("set {k} is empty")]
    EmptySet { k: usize },
    #[error("set {k} is not contained in set {}", k - 1)]
    NotDescending { k: usize },
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
    #[error("condition (H) fails at step {k} with eps = {eps}: no point of {set:?} is an eps-minimizer of every component")]
    ConditionHFailed { k: usize, eps: f64, set: Vec<usize> },
    #[error("precondition f(x0) <= f(x) + eps e fails at x = {x}")]
    PreconditionCiFailed { x: usize },
    #[error("condition d(Nx, y) <= d(x, y) + B d(Nx, x) fails at x = {x}, y = {y}")]
    Cc1Violated { x: usize, y: usize },
    #[error("condition B d(Nx, x) <= f(x) - f(Nx) fails at x = {x}")]
    Cc2Violated { x: usize },
    #[error("Ekeland point {x_star} is not fixed by N")]
    NoFixedPoint { x_star: usize },
    #[error("conclusion {conclusion} fails at x = {x}")]
    ConclusionViolated { conclusion: String, x: usize },
    #[error("eps schedule exhausted at step {k}")]
    ScheduleExhausted { k: usize },
    #[error("internal error: {0}")]
    InternalError(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Mat(#[from] MatError),
}

type Result<T, E = EvpError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FiniteSpaceDoc {
    points: Vec<String>,
    dist: Vec<Vec<VecN>>,
    #[serde(rename = "B")]
    b: Mat,
}

/// A finite vector B-metric space with precomputed distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FiniteSpaceDoc", into = "FiniteSpaceDoc")]
pub struct FiniteSpace {
    labels: Vec<String>,
    n: usize,
    /// `dist[(i * len + j) * n + c]`.
    dist: Vec<f64>,
    b: Mat,
    b_class: BClass,
}

impl TryFrom<FiniteSpaceDoc> for FiniteSpace {
    type Error = EvpError;
    fn try_from(doc: FiniteSpaceDoc) -> Result<Self> {
        FiniteSpace::new(doc.points, &doc.dist, doc.b)
    }
}

impl From<FiniteSpace> for FiniteSpaceDoc {
    fn from(s: FiniteSpace) -> Self {
        let p = s.len();
        FiniteSpaceDoc {
            dist: (0..p).map(|i| (0..p).map(|j| s.d(i, j).to_vec()).collect()).collect(),
            points: s.labels,
            b: s.b,
        }
    }
}

impl FiniteSpace {
    /// Builds the space and verifies every metric axiom on all pairs and
    /// all ordered triples.
    pub fn new(labels: Vec<String>, dist: &[Vec<VecN>], b: Mat) -> Result<Self> {
        let p = labels.len();
        if p == 0 || p > MAX_POINTS {
            return Err(EvpError::InvalidSpace(format!("need 1..={MAX_POINTS} points, got {p}")));
        }
        b.check_finite()?;
        let n = b.n();
        if dist.len() != p || dist.iter().any(|row| row.len() != p || row.iter().any(|d| d.len() != n)) {
            return Err(EvpError::InvalidSpace(format!("dist must be {p}×{p} vectors of length {n}")));
        }
        let mut flat = Vec::with_capacity(p * p * n);
        for (i, row) in dist.iter().enumerate() {
            for (j, d) in row.iter().enumerate() {
                if d.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(EvpError::InvalidSpace(format!("d({i},{j}) = {d:?} is not a finite nonnegative vector")));
                }
                if i == j && d.iter().any(|v| *v != 0.0) {
                    return Err(EvpError::InvalidSpace(format!("d({i},{i}) = {d:?} is not zero")));
                }
                if i != j && d.iter().all(|v| *v == 0.0) {
                    return Err(EvpError::InvalidSpace(format!("distinct points {i} and {j} are at distance zero")));
                }
                if d != &dist[j][i] {
                    return Err(EvpError::InvalidSpace(format!("d({i},{j}) differs from d({j},{i})")));
                }
                flat.extend_from_slice(d);
            }
        }
        let b_class = classify(&b, DEFAULT_TOL)?;
        let space = FiniteSpace { labels, n, dist: flat, b, b_class };
        space.check_triangle()?;
        Ok(space)
    }

    /// Distances induced by `spec` on `points`, with `spec`'s matrix `B`.
    pub fn from_metric(spec: &MetricSpec, points: &[Vec<f64>], labels: Option<Vec<String>>) -> Result<Self> {
        let dist: Vec<Vec<VecN>> = points
            .iter()
            .map(|u| points.iter().map(|v| spec.eval(u, v)).collect::<Result<Vec<_>, _>>())
            .collect::<Result<_, _>>()?;
        let labels = labels.unwrap_or_else(|| (0..points.len()).map(|i| i.to_string()).collect());
        if labels.len() != points.len() {
            return Err(EvpError::InvalidSpace("one label per point is required".into()));
        }
        FiniteSpace::new(labels, &dist, spec.b().clone())
    }

    fn check_triangle(&self) -> Result<()> {
        let p = self.len();
        let bad = (0..p).into_par_iter().find_map_first(|i| {
            for j in 0..p {
                for k in 0..p {
                    let lhs = self.d(i, k);
                    let rhs = self.b.apply(&metric::add(self.d(i, j), self.d(j, k)));
                    if !metric::le(lhs, &rhs, SLACK) {
                        return Some(EvpError::TriangleViolated { i, j, k, lhs: lhs.to_vec(), rhs });
                    }
                }
            }
            None
        });
        bad.map_or(Ok(()), Err)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn b(&self) -> &Mat {
        &self.b
    }

    pub fn b_class(&self) -> BClass {
        self.b_class
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn d(&self, i: usize, j: usize) -> &[f64] {
        let p = self.len();
        let at = (i * p + j) * self.n;
        &self.dist[at..at + self.n]
    }

    /// The same carrier with distances `c·d`; a vector B-metric with the same `B`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(EvpError::InvalidInput(format!("scale must be positive, got {c}")));
        }
        Ok(FiniteSpace { dist: self.dist.iter().map(|v| v * c).collect(), ..self.clone() })
    }

    /// Smallest positive ρ₁ distance; `None` for a single point.
    pub fn gap(&self) -> Option<f64> {
        let p = self.len();
        (0..p)
            .flat_map(|i| (i + 1..p).map(move |j| (i, j)))
            .map(|(i, j)| metric::rho(Norm::L1, self.d(i, j)))
            .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.min(v))))
    }

    fn check_values(&self, f: &[VecN]) -> Result<()> {
        if f.len() != self.len() || f.iter().any(|v| v.len() != self.n || v.iter().any(|x| !x.is_finite())) {
            return Err(EvpError::InvalidInput(format!("f must give {} finite {}-vectors", self.len(), self.n)));
        }
        Ok(())
    }

    fn check_index(&self, x: usize) -> Result<()> {
        if x >= self.len() {
            return Err(EvpError::InvalidInput(format!("point index {x} out of range")));
        }
        Ok(())
    }
}

/// The unique common element of a descending sequence of index sets whose
/// tail shrinks to a single point.
pub fn cantor_intersect(space: &FiniteSpace, sets: &[Vec<usize>]) -> Result<usize> {
    for (k, s) in sets.iter().enumerate() {
        if s.is_empty() {
            return Err(EvpError::EmptySet { k });
        }
        if let Some(&bad) = s.iter().find(|&&x| x >= space.len()) {
            return Err(EvpError::InvalidInput(format!("set {k} contains index {bad} out of range")));
        }
        if k > 0 && !s.iter().all(|x| sets[k - 1].contains(x)) {
            return Err(EvpError::NotDescending { k });
        }
    }
    let last = sets.last().ok_or_else(|| EvpError::InvalidInput("no sets given".into()))?;
    let first = last[0];
    if let Some(&other) = last.iter().find(|&&y| space.d(first, y).iter().any(|v| *v != 0.0)) {
        return Err(EvpError::HypothesisViolated(format!(
            "diameters do not vanish: the last set still contains {first} and {other} at distance {:?}",
            space.d(first, other)
        )));
    }
    Ok(first)
}

/// Condition (H) on the set `set`: the smallest index `p` with
/// `f(p) <= f(x) + eps e` for all `x` in the set.
pub fn find_h_point(f: &[VecN], set: &[usize], eps: f64) -> Option<usize> {
    let n = f.get(*set.first()?)?.len();
    let mins: Vec<f64> = (0..n).map(|c| set.iter().map(|&x| f[x][c]).fold(f64::INFINITY, f64::min)).collect();
    let mut candidates: Vec<usize> = set.to_vec();
    candidates.sort_unstable();
    candidates.into_iter().find(|&p| f[p].iter().zip(&mins).all(|(v, m)| *v <= m + eps))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsSchedule {
    /// `eps_k = eps0 · 2^{-k}`, `k >= 1`.
    Geometric { eps0: f64 },
    /// `eps_1, eps_2, …` given explicitly.
    Explicit(Vec<f64>),
}

impl Default for EpsSchedule {
    fn default() -> Self {
        EpsSchedule::Geometric { eps0: 1.0 }
    }
}

impl EpsSchedule {
    fn eps(&self, k: usize) -> Result<f64> {
        match self {
            EpsSchedule::Geometric { eps0 } => Ok(eps0 * 0.5f64.powi(k as i32)),
            EpsSchedule::Explicit(v) => v.get(k - 1).copied().ok_or(EvpError::ScheduleExhausted { k }),
        }
    }

    fn eps0(&self) -> f64 {
        match self {
            EpsSchedule::Geometric { eps0 } => *eps0,
            EpsSchedule::Explicit(v) => v.first().copied().unwrap_or(1.0) * 2.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            EpsSchedule::Geometric { eps0 } => eps0.is_finite() && *eps0 > 0.0,
            EpsSchedule::Explicit(v) => v.iter().all(|e| e.is_finite() && *e > 0.0),
        };
        if ok {
            Ok(())
        } else {
            Err(EvpError::InvalidInput("eps values must be positive and finite".into()))
        }
    }
}

/// A strict inequality `lhs_i < rhs_i` at step `k`, component `i`, for point `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub x: usize,
    pub k: usize,
    pub i: usize,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conclusions {
    pub c1: bool,
    pub c2: bool,
    pub c2_witnesses: Vec<Witness>,
    pub c3: bool,
    pub c3_witnesses: Vec<Witness>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EkelandTrace {
    /// `eps_1, …, eps_K`.
    pub eps: Vec<f64>,
    /// `x_0, …, x_K`.
    pub xs: Vec<usize>,
    /// `F(x_0), …, F(x_K)`, each sorted.
    pub sets: Vec<Vec<usize>>,
    pub x_star: usize,
    pub conclusions: Conclusions,
}

fn f_plus_d_le(f: &[VecN], space: &FiniteSpace, x: usize, anchor: usize) -> bool {
    f[x].iter().zip(space.d(x, anchor)).zip(&f[anchor]).all(|((fx, d), fa)| fx + d <= *fa)
}

fn ekeland_core(space: &FiniteSpace, f: &[VecN], x0: usize, schedule: &EpsSchedule) -> Result<(Vec<f64>, Vec<usize>, Vec<Vec<usize>>)> {
    space.check_values(f)?;
    space.check_index(x0)?;
    schedule.validate()?;
    let cap = EXTRA_STEPS
        + match space.gap() {
            Some(g) => (schedule.eps0() / g).log2().ceil().max(0.0) as usize,
            None => 0,
        };
    let mut xs = vec![x0];
    let mut eps = Vec::new();
    let mut sets = vec![(0..space.len()).filter(|&x| f_plus_d_le(f, space, x, x0)).collect::<Vec<_>>()];
    let mut k = 0;
    while sets[k].len() > 1 {
        k += 1;
        if k > cap {
            return Err(EvpError::InternalError(format!("no singleton after {cap} steps")));
        }
        let e = schedule.eps(k)?;
        let prev = &sets[k - 1];
        let xk = find_h_point(f, prev, e).ok_or_else(|| EvpError::ConditionHFailed { k, eps: e, set: prev.clone() })?;
        let next: Vec<usize> = prev.iter().copied().filter(|&x| f_plus_d_le(f, space, x, xk)).collect();
        if next.is_empty() || !next.contains(&xk) {
            return Err(EvpError::InternalError(format!("F(x_{k}) lost its anchor")));
        }
        eps.push(e);
        xs.push(xk);
        sets.push(next);
    }
    Ok((eps, xs, sets))
}

/// Weak Ekeland principle: builds `F(x_k) = {x ∈ F(x_{k-1}) : f(x) + d(x, x_k) <= f(x_k)}`
/// with `x_k` chosen by condition (H), stops when the set is a singleton
/// `{x*}` and verifies the conclusions.
pub fn ekeland_weak(space: &FiniteSpace, f: &[VecN], x0: usize, schedule: &EpsSchedule) -> Result<EkelandTrace> {
    let (eps, xs, sets) = ekeland_core(space, f, x0, schedule)?;
    let x_star = cantor_intersect(space, &sets)?;
    let mut trace = EkelandTrace {
        eps,
        xs,
        sets,
        x_star,
        conclusions: Conclusions { c1: false, c2: false, c2_witnesses: vec![], c3: false, c3_witnesses: vec![] },
    };
    trace.conclusions = verify_conclusions(&trace, space, f)?;
    Ok(trace)
}

fn first_strict(x: usize, ks: &[usize], n: usize, lhs: impl Fn(usize, usize) -> f64, rhs: impl Fn(usize, usize) -> f64) -> Option<Witness> {
    for (k, _) in ks.iter().enumerate() {
        for i in 0..n {
            let (l, r) = (lhs(k, i), rhs(k, i));
            if l < r {
                return Some(Witness { x, k, i, lhs: l, rhs: r });
            }
        }
    }
    None
}

/// Exhaustive check of
///
/// - (c1) `f(x*) + d(x*, x_0) <= f(x_0)`;
/// - (c2) for each `x ≠ x*` some `(k, i)` with `f_i(x*) + d_i(x*, x_k) < f_i(x) + d_i(x, x_k)`;
/// - (c3) for each `x ≠ x*` some `(k, i)` with `f_i(x*) < f_i(x) + (B d(x*, x))_i + ((B − I) d(x*, x_k))_i`.
///
/// Witnesses are the lowest `(k, i)` for each `x`; a (c3) witness needs the
/// relative slack [`SLACK`] only when no exact one exists.
pub fn verify_conclusions(trace: &EkelandTrace, space: &FiniteSpace, f: &[VecN]) -> Result<Conclusions> {
    space.check_values(f)?;
    let xs = &trace.xs;
    let s = trace.x_star;
    let n = space.n();
    if !f_plus_d_le(f, space, s, xs[0]) {
        return Err(EvpError::ConclusionViolated { conclusion: "c1".into(), x: s });
    }
    let bmi = space.b().try_sub(&Mat::identity(n))?;
    let per_x: Vec<(usize, Option<Witness>, Option<Witness>)> = (0..space.len())
        .into_par_iter()
        .filter(|&x| x != s)
        .map(|x| {
            let c2 = first_strict(
                x,
                xs,
                n,
                |k, i| f[s][i] + space.d(s, xs[k])[i],
                |k, i| f[x][i] + space.d(x, xs[k])[i],
            );
            let bd = space.b().apply(space.d(s, x));
            let terms: Vec<VecN> = xs.iter().map(|&xk| bmi.apply(space.d(s, xk))).collect();
            let rhs3 = |k: usize, i: usize| f[x][i] + bd[i] + terms[k][i];
            // exact witnesses first; the slack only absorbs rounding in `(B − I) d`
            let c3 = first_strict(x, xs, n, |_, i| f[s][i], rhs3).or_else(|| {
                first_strict(x, xs, n, |_, i| f[s][i], |k, i| {
                    let r = rhs3(k, i);
                    r + SLACK * r.abs().max(f[s][i].abs()).max(1.0)
                })
            });
            (x, c2, c3)
        })
        .collect();
    let mut c2_witnesses = Vec::with_capacity(per_x.len());
    let mut c3_witnesses = Vec::with_capacity(per_x.len());
    for (x, c2, c3) in per_x {
        c2_witnesses.push(c2.ok_or_else(|| EvpError::ConclusionViolated { conclusion: "c2".into(), x })?);
        c3_witnesses.push(c3.ok_or_else(|| EvpError::ConclusionViolated { conclusion: "c3".into(), x })?);
    }
    Ok(Conclusions { c1: true, c2: true, c2_witnesses, c3: true, c3_witnesses })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrongEkeland {
    pub eps: f64,
    pub delta: f64,
    /// Trace of the weak principle on the metric `(eps/delta)·d`.
    pub trace: EkelandTrace,
    /// `f(x*) <= f(x_0)`.
    pub s1: bool,
    /// `d(x*, x_0) <= delta e` in the original metric.
    pub s2: bool,
}

/// Strong Ekeland principle for `x_0` satisfying `f(x_0) <= f(x) + eps e`
/// for every `x`.
pub fn ekeland_strong(space: &FiniteSpace, f: &[VecN], x0: usize, eps: f64, delta: f64, schedule: &EpsSchedule) -> Result<StrongEkeland> {
    space.check_values(f)?;
    space.check_index(x0)?;
    if !(eps.is_finite() && eps > 0.0 && delta.is_finite() && delta > 0.0) {
        return Err(EvpError::InvalidInput("eps and delta must be positive".into()));
    }
    if let Some(x) = (0..space.len()).find(|&x| !f[x0].iter().zip(&f[x]).all(|(a, b)| *a <= b + eps)) {
        return Err(EvpError::PreconditionCiFailed { x });
    }
    let scaled = space.scaled(eps / delta)?;
    let trace = ekeland_weak(&scaled, f, x0, schedule)?;
    let s = trace.x_star;
    let s1 = metric::le_exact(&f[s], &f[x0]);
    let s2 = metric::le(space.d(s, x0), &vec![delta; space.n()], SLACK);
    if !s1 {
        return Err(EvpError::ConclusionViolated { conclusion: "s1".into(), x: s });
    }
    if !s2 {
        return Err(EvpError::ConclusionViolated { conclusion: "s2".into(), x: s });
    }
    Ok(StrongEkeland { eps, delta, trace, s1, s2 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaristiResult {
    pub fixed_point: usize,
    /// All fixed points of `N`, by direct scan.
    pub fixed_points: Vec<usize>,
    pub trace: EkelandTrace,
}

/// Fixed point of `N` under the Caristi conditions, obtained from the weak
/// Ekeland principle started at `x0` and cross-checked against a direct scan.
pub fn caristi_solve(space: &FiniteSpace, f: &[VecN], nmap: &[usize], x0: usize) -> Result<CaristiResult> {
    space.check_values(f)?;
    if nmap.len() != space.len() || nmap.iter().any(|&y| y >= space.len()) {
        return Err(EvpError::InvalidInput("N must map every point index into the space".into()));
    }
    let p = space.len();
    let bdn: Vec<VecN> = (0..p).map(|x| space.b().apply(space.d(nmap[x], x))).collect();
    let cc1 = (0..p).into_par_iter().find_map_first(|x| {
        (0..p)
            .find(|&y| {
                let rhs = metric::add(space.d(x, y), &bdn[x]);
                !metric::le_exact(space.d(nmap[x], y), &rhs)
            })
            .map(|y| (x, y))
    });
    if let Some((x, y)) = cc1 {
        return Err(EvpError::Cc1Violated { x, y });
    }
    if let Some(x) = (0..p).find(|&x| !bdn[x].iter().zip(&f[x]).zip(&f[nmap[x]]).all(|((b, fx), fnx)| *b <= fx - fnx)) {
        return Err(EvpError::Cc2Violated { x });
    }
    let trace = ekeland_weak(space, f, x0, &EpsSchedule::default())?;
    let fixed_points: Vec<usize> = (0..p).filter(|&x| nmap[x] == x).collect();
    if nmap[trace.x_star] != trace.x_star || !fixed_points.contains(&trace.x_star) {
        return Err(EvpError::NoFixedPoint { x_star: trace.x_star });
    }
    Ok(CaristiResult { fixed_point: trace.x_star, fixed_points, trace })
}

/// The scalar inequality `f(x*) < f(x) + ρ(x*, x)` for every `x ≠ x*`; the
/// form the third conclusion takes when `n = 1` and `B = [1]`. Returns the
/// points where it fails.
pub fn classical_strict_failures(space: &FiniteSpace, f: &[VecN], x_star: usize) -> Result<Vec<usize>> {
    space.check_values(f)?;
    if space.n() != 1 {
        return Err(EvpError::InvalidInput("the classical inequality needs n = 1".into()));
    }
    Ok((0..space.len()).filter(|&x| x != x_star && f[x_star][0] >= f[x][0] + space.d(x_star, x)[0]).collect())
}
