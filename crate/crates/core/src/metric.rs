//! Vector B-metrics: distances valued in the nonnegative orthant of ℝⁿ whose
//! triangle inequality carries a matrix coefficient `B`.
//!
//! Points live in ℝᵐ. A [`MetricSpec`] is either one of the builtin metrics
//! or a vector of expressions in `u1..um`, `v1..vm`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{self, Env, EvalError, Expr, SyntaxError, VarKind};
use crate::matops::{classify, BClass, Mat, MatError, DEFAULT_TOL};

/// Distances, bounds and residuals. Comparisons are componentwise.
pub type VecN = Vec<f64>;

/// Cap on the number of ordered triples checked by [`verify_axioms`].
pub const TRIPLE_CAP: usize = 1_000_000;
/// Violations stored in a report; all of them are counted.
pub const MAX_REPORTED_VIOLATIONS: usize = 1000;
/// Relative tolerance of the diagonal test `|u1 - u2| <= 1e-12 (1 + |u1|)` for Example 2.
pub const DIAGONAL_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("point has dimension {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("metric component {component}: {source}")]
    Eval { component: usize, source: EvalError },
    #[error("metric component {component}: {source}")]
    Syntax { component: usize, source: SyntaxError },
    #[error("B has a negative entry; the induced scalar b-metric needs a positive B")]
    NotPositive,
    #[error("invalid metric: {0}")]
    Invalid(String),
    #[error(transparent)]
    Mat(#[from] MatError),
}

/// `a <= b` componentwise with relative slack `tol * max(1, |a_i|, |b_i|)`.
pub fn le(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| *x <= *y + tol * 1f64.max(x.abs()).max(y.abs()))
}

/// Exact componentwise `a <= b`.
pub fn le_exact(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y)
}

pub fn add(a: &[f64], b: &[f64]) -> VecN {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn sub(a: &[f64], b: &[f64]) -> VecN {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn scale(a: &[f64], c: f64) -> VecN {
    a.iter().map(|x| c * x).collect()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    L1,
    Linf,
    L2,
}

/// The scalar value ρ₁, ρ∞ or ρ₂ of a distance vector.
pub fn rho(norm: Norm, d: &[f64]) -> f64 {
    match norm {
        Norm::L1 => d.iter().sum(),
        Norm::Linf => d.iter().fold(f64::NEG_INFINITY, |m, x| m.max(*x)).max(0.0),
        Norm::L2 => d.iter().map(|x| x * x).sum::<f64>().sqrt(),
    }
}

/// Constant `b` of the scalar b-metric ρ induced by a positive `B`:
/// `b1 = Σ_i max_j B_ij`, `b∞ = max_i Σ_j B_ij`, `b2 = (Σ B_ij²)^½`.
pub fn induced_constant(b: &Mat, norm: Norm) -> Result<f64, MetricError> {
    b.check_finite()?;
    if !b.is_nonnegative(DEFAULT_TOL) {
        return Err(MetricError::NotPositive);
    }
    let rows = b.rows();
    Ok(match norm {
        Norm::L1 => rows.iter().map(|r| r.iter().fold(f64::NEG_INFINITY, |m, x| m.max(*x))).sum(),
        Norm::Linf => rows.iter().map(|r| r.iter().sum::<f64>()).fold(f64::NEG_INFINITY, f64::max),
        Norm::L2 => b.entries().iter().map(|x| x * x).sum::<f64>().sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    /// `d(x,y) = (|x1-y1|² + |x2-y2|, |x2-y2|)` on ℝ².
    Example1,
    /// The ℓ¹-based metric on ℝ² that distinguishes the diagonal `S = {(t,t)}`.
    Example2,
    /// `d_i(x,y) = |x_i - y_i|`, so `n = m`.
    ComponentwiseAbs,
    Expression,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MetricSpecDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    m: Option<usize>,
    kind: MetricKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    components: Vec<String>,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    b: Option<Mat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    b_class: Option<BClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scale: Option<f64>,
}

/// A vector B-metric on ℝᵐ with values in ℝⁿ₊.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MetricSpecDoc", into = "MetricSpecDoc")]
pub struct MetricSpec {
    n: usize,
    m: usize,
    kind: MetricKind,
    components: Vec<Expr>,
    b: Mat,
    b_class: BClass,
    scale: f64,
}

impl TryFrom<MetricSpecDoc> for MetricSpec {
    type Error = MetricError;

    fn try_from(doc: MetricSpecDoc) -> Result<Self, Self::Error> {
        let mut spec = match doc.kind {
            MetricKind::Example1 => MetricSpec::example1(),
            MetricKind::Example2 => MetricSpec::example2(),
            MetricKind::ComponentwiseAbs => {
                let m = doc.m.or(doc.n).ok_or_else(|| MetricError::Invalid("componentwise_abs needs \"m\"".into()))?;
                MetricSpec::componentwise_abs(m)?
            }
            MetricKind::Expression => {
                let m = doc.m.ok_or_else(|| MetricError::Invalid("expression metric needs \"m\"".into()))?;
                let b = doc.b.clone().ok_or_else(|| MetricError::Invalid("expression metric needs \"B\"".into()))?;
                MetricSpec::expression(m, &doc.components, b)?
            }
        };
        if let Some(n) = doc.n {
            if n != spec.n {
                return Err(MetricError::Invalid(format!("declared n = {n}, metric has {} components", spec.n)));
            }
        }
        if let Some(m) = doc.m {
            if m != spec.m {
                return Err(MetricError::Invalid(format!("declared m = {m}, metric acts on ℝ^{}", spec.m)));
            }
        }
        if doc.kind != MetricKind::Expression && !doc.components.is_empty() {
            return Err(MetricError::Invalid("\"components\" is only allowed for kind \"expression\"".into()));
        }
        if let Some(b) = doc.b {
            spec = spec.with_b(b)?;
        }
        if let Some(c) = doc.scale {
            spec = spec.scaled(c)?;
        }
        Ok(spec)
    }
}

impl From<MetricSpec> for MetricSpecDoc {
    fn from(s: MetricSpec) -> Self {
        MetricSpecDoc {
            n: Some(s.n),
            m: Some(s.m),
            kind: s.kind,
            components: s.components.iter().map(|e| e.to_string()).collect(),
            b: Some(s.b),
            b_class: Some(s.b_class),
            scale: (s.scale != 1.0).then_some(s.scale),
        }
    }
}

impl MetricSpec {
    fn builtin(n: usize, m: usize, kind: MetricKind, b: Mat) -> Self {
        let b_class = classify(&b, DEFAULT_TOL).expect("builtin B is finite");
        MetricSpec { n, m, kind, components: Vec::new(), b, b_class, scale: 1.0 }
    }

    /// Example 1 with `B = [[2,-1],[0,1]]`, inverse-positive but not positive.
    pub fn example1() -> Self {
        Self::builtin(2, 2, MetricKind::Example1, Mat::from_rows(&[[2.0, -1.0], [0.0, 1.0]]).unwrap())
    }

    /// Example 2 with the matrix `B0 = [[2,2],[1,1]]` claimed for it.
    pub fn example2() -> Self {
        Self::builtin(2, 2, MetricKind::Example2, Mat::from_rows(&[[2.0, 2.0], [1.0, 1.0]]).unwrap())
    }

    pub fn componentwise_abs(m: usize) -> Result<Self, MetricError> {
        if m == 0 || m > crate::matops::MAX_DIM {
            return Err(MatError::InvalidDimension(m).into());
        }
        Ok(Self::builtin(m, m, MetricKind::ComponentwiseAbs, Mat::identity(m)))
    }

    pub fn expression<S: AsRef<str>>(m: usize, components: &[S], b: Mat) -> Result<Self, MetricError> {
        let exprs = expr::parse_all(components).map_err(|(component, source)| MetricError::Syntax { component, source })?;
        if exprs.is_empty() {
            return Err(MetricError::Invalid("expression metric needs at least one component".into()));
        }
        for (i, e) in exprs.iter().enumerate() {
            let used = e.max_index(VarKind::U).max(e.max_index(VarKind::V));
            if used > m || e.max_index(VarKind::X) > 0 || e.max_index(VarKind::Y) > 0 {
                return Err(MetricError::Invalid(format!(
                    "component {i} must use only u1..u{m} and v1..v{m}"
                )));
            }
        }
        if m == 0 {
            return Err(MetricError::Invalid("m must be at least 1".into()));
        }
        let n = exprs.len();
        let mut spec = Self::builtin(n, m, MetricKind::Expression, Mat::identity(n));
        spec.components = exprs;
        spec.with_b(b)
    }

    /// Same distance with a different triangle matrix.
    pub fn with_b(mut self, b: Mat) -> Result<Self, MetricError> {
        b.check_finite()?;
        if b.n() != self.n {
            return Err(MatError::DimensionMismatch { expected: self.n, found: b.n() }.into());
        }
        self.b_class = classify(&b, DEFAULT_TOL)?;
        self.b = b;
        Ok(self)
    }

    /// `c·d`, a vector B-metric with the same `B` whenever `d` is one.
    pub fn scaled(mut self, c: f64) -> Result<Self, MetricError> {
        if !(c.is_finite() && c > 0.0) {
            return Err(MetricError::Invalid(format!("scale must be positive and finite, got {c}")));
        }
        self.scale *= c;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    pub fn b(&self) -> &Mat {
        &self.b
    }

    pub fn b_class(&self) -> BClass {
        self.b_class
    }

    pub fn scale_factor(&self) -> f64 {
        self.scale
    }

    pub fn eval(&self, u: &[f64], v: &[f64]) -> Result<VecN, MetricError> {
        for p in [u, v] {
            if p.len() != self.m {
                return Err(MetricError::DimensionMismatch { expected: self.m, found: p.len() });
            }
        }
        let mut d = match self.kind {
            MetricKind::Example1 => {
                let a = (u[0] - v[0]).abs();
                let c = (u[1] - v[1]).abs();
                vec![a * a + c, c]
            }
            MetricKind::Example2 => {
                if u == v {
                    vec![0.0, 0.0]
                } else {
                    let r = (u[0] - v[0]).abs() + (u[1] - v[1]).abs();
                    if on_diagonal(u) && on_diagonal(v) {
                        vec![r * r, r]
                    } else {
                        vec![r, r * r]
                    }
                }
            }
            MetricKind::ComponentwiseAbs => u.iter().zip(v).map(|(a, b)| (a - b).abs()).collect(),
            MetricKind::Expression => {
                let env = Env::uv(u, v);
                self.components
                    .iter()
                    .enumerate()
                    .map(|(component, e)| e.eval(&env).map_err(|source| MetricError::Eval { component, source }))
                    .collect::<Result<_, _>>()?
            }
        };
        if self.scale != 1.0 {
            d.iter_mut().for_each(|x| *x *= self.scale);
        }
        Ok(d)
    }

    /// Right-hand side `B (d(u,v) + d(v,w))` of the triangle inequality.
    pub fn triangle_rhs(&self, duv: &[f64], dvw: &[f64]) -> VecN {
        self.b.apply(&add(duv, dvw))
    }
}

fn on_diagonal(p: &[f64]) -> bool {
    (p[0] - p[1]).abs() <= DIAGONAL_RTOL * (1.0 + p[0].abs())
}

pub fn induced_rho(spec: &MetricSpec, norm: Norm, u: &[f64], v: &[f64]) -> Result<f64, MetricError> {
    Ok(rho(norm, &spec.eval(u, v)?))
}

/// Largest ρ₁ distance over pairs of `points`; 0 for fewer than two points.
pub fn diameter(spec: &MetricSpec, points: &[Vec<f64>]) -> Result<f64, MetricError> {
    let mut best = 0.0f64;
    for (i, u) in points.iter().enumerate() {
        for v in &points[i + 1..] {
            best = best.max(rho(Norm::L1, &spec.eval(u, v)?));
        }
    }
    Ok(best)
}

/// Uniform points in the box `[lo, hi]^m`.
pub fn sample_box(m: usize, count: usize, lo: f64, hi: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| (0..m).map(|_| rng.gen_range(lo..=hi)).collect()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axiom {
    Positivity,
    Identity,
    Symmetry,
    Triangle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub axiom: Axiom,
    /// Indices into the sample: one for positivity, two for identity and
    /// symmetry, `(u, v, w)` for the triangle inequality `d(u,w) <= B(d(u,v)+d(v,w))`.
    pub indices: Vec<usize>,
    pub points: Vec<Vec<f64>>,
    pub lhs: VecN,
    pub rhs: VecN,
    /// `max_i (lhs_i - rhs_i)`; positive on a violation.
    pub margin: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxiomCounts {
    pub positivity: u64,
    pub identity: u64,
    pub symmetry: u64,
    pub triangle: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub b: Mat,
    pub b_class: BClass,
    pub tol: f64,
    pub points: usize,
    pub triples_total: u128,
    pub subsampled: bool,
    pub checked: AxiomCounts,
    pub violation_count: u64,
    pub violations: Vec<Violation>,
}

impl ViolationReport {
    pub fn ok(&self) -> bool {
        self.violation_count == 0
    }
}

fn margin(lhs: &[f64], rhs: &[f64]) -> f64 {
    lhs.iter().zip(rhs).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max)
}

/// Checks positivity, identity, symmetry and the matrix triangle inequality on
/// `points`. All ordered triples are checked when there are at most
/// `max_triples` of them; otherwise `max_triples` triples are drawn with `seed`.
pub fn verify_axioms(
    spec: &MetricSpec,
    points: &[Vec<f64>],
    tol: f64,
    max_triples: usize,
    seed: u64,
) -> Result<ViolationReport, MetricError> {
    let p = points.len();
    let dist: Vec<Vec<VecN>> = points
        .par_iter()
        .map(|u| points.iter().map(|v| spec.eval(u, v)).collect::<Result<Vec<_>, _>>())
        .collect::<Result<_, _>>()?;

    let mut checked = AxiomCounts::default();
    let mut violations = Vec::new();
    let mut count = 0u64;
    let mut push = |v: Violation, violations: &mut Vec<Violation>| {
        count += 1;
        if violations.len() < MAX_REPORTED_VIOLATIONS {
            violations.push(v);
        }
    };
    let zero = vec![0.0; spec.n];

    for i in 0..p {
        for j in 0..p {
            let d = &dist[i][j];
            checked.positivity += 1;
            if d.iter().any(|x| *x < -tol) {
                push(
                    Violation {
                        axiom: Axiom::Positivity,
                        indices: vec![i, j],
                        points: vec![points[i].clone(), points[j].clone()],
                        lhs: zero.clone(),
                        rhs: d.clone(),
                        margin: margin(&zero, d),
                    },
                    &mut violations,
                );
            }
            checked.identity += 1;
            let same = points[i].iter().zip(&points[j]).all(|(a, b)| (a - b).abs() <= DIAGONAL_RTOL * (1.0 + a.abs()));
            let vanishes = d.iter().all(|x| x.abs() <= tol);
            if same != vanishes {
                push(
                    Violation {
                        axiom: Axiom::Identity,
                        indices: vec![i, j],
                        points: vec![points[i].clone(), points[j].clone()],
                        lhs: d.clone(),
                        rhs: zero.clone(),
                        margin: norm_inf(d),
                    },
                    &mut violations,
                );
            }
            if i < j {
                checked.symmetry += 1;
                let e = &dist[j][i];
                if !le(d, e, tol) || !le(e, d, tol) {
                    push(
                        Violation {
                            axiom: Axiom::Symmetry,
                            indices: vec![i, j],
                            points: vec![points[i].clone(), points[j].clone()],
                            lhs: d.clone(),
                            rhs: e.clone(),
                            margin: norm_inf(&sub(d, e)),
                        },
                        &mut violations,
                    );
                }
            }
        }
    }

    let total = (p as u128).pow(3);
    let subsampled = total > max_triples as u128;
    let codes: Vec<(usize, usize, usize)> = if subsampled {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..max_triples).map(|_| (rng.gen_range(0..p), rng.gen_range(0..p), rng.gen_range(0..p))).collect()
    } else {
        (0..p).flat_map(|i| (0..p).flat_map(move |j| (0..p).map(move |k| (i, j, k)))).collect()
    };
    checked.triangle = codes.len() as u64;
    let bad: Vec<Violation> = codes
        .par_iter()
        .filter_map(|&(i, j, k)| {
            let lhs = &dist[i][k];
            let rhs = spec.triangle_rhs(&dist[i][j], &dist[j][k]);
            (!le(lhs, &rhs, tol)).then(|| Violation {
                axiom: Axiom::Triangle,
                indices: vec![i, j, k],
                points: vec![points[i].clone(), points[j].clone(), points[k].clone()],
                lhs: lhs.clone(),
                margin: margin(lhs, &rhs),
                rhs,
            })
        })
        .collect();
    for v in bad {
        push(v, &mut violations);
    }

    Ok(ViolationReport {
        b: spec.b.clone(),
        b_class: spec.b_class,
        tol,
        points: p,
        triples_total: total,
        subsampled,
        checked,
        violation_count: count,
        violations,
    })
}

/// Evaluates the triangle inequality for Example 2's metric with a candidate
/// matrix on two witness triples, `d(x,y) <= B(d(x,z) + d(z,y))` with
/// `x = (t,t)`, `y = (0,0)` and `z = (α,0)` off the diagonal or `z = (α,α)` on it.
pub fn example2_minimality_probe(candidate: &Mat, t: f64, alpha: f64) -> Result<ViolationReport, MetricError> {
    if t == 0.0 || alpha == 0.0 || !t.is_finite() || !alpha.is_finite() {
        return Err(MetricError::Invalid("t and alpha must be finite and nonzero".into()));
    }
    let spec = MetricSpec::example2().with_b(candidate.clone())?;
    let x = vec![t, t];
    let y = vec![0.0, 0.0];
    let mut violations = Vec::new();
    for z in [vec![alpha, 0.0], vec![alpha, alpha]] {
        let lhs = spec.eval(&x, &y)?;
        let rhs = spec.triangle_rhs(&spec.eval(&x, &z)?, &spec.eval(&z, &y)?);
        if !le(&lhs, &rhs, DEFAULT_TOL) {
            violations.push(Violation {
                axiom: Axiom::Triangle,
                indices: vec![0, 1, 2],
                points: vec![x.clone(), z.clone(), y.clone()],
                margin: margin(&lhs, &rhs),
                lhs,
                rhs,
            });
        }
    }
    Ok(ViolationReport {
        b: spec.b.clone(),
        b_class: spec.b_class,
        tol: DEFAULT_TOL,
        points: 4,
        triples_total: 2,
        subsampled: false,
        checked: AxiomCounts { triangle: 2, ..Default::default() },
        violation_count: violations.len() as u64,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[[f64; 2]]) -> Mat {
        Mat::from_rows(rows).unwrap()
    }

    #[test]
    fn builtin_values() {
        let e1 = MetricSpec::example1();
        assert_eq!(e1.eval(&[1.0, 0.0], &[0.0, 0.0]).unwrap(), vec![1.0, 0.0]);
        assert_eq!(e1.b_class(), BClass::InversePositive);
        let e2 = MetricSpec::example2();
        assert_eq!(e2.eval(&[1.0, 1.0], &[0.0, 0.0]).unwrap(), vec![4.0, 2.0]);
        assert_eq!(e2.eval(&[1.0, 0.0], &[0.0, 0.0]).unwrap(), vec![1.0, 1.0]);
        assert_eq!(e2.eval(&[3.0, 0.0], &[0.0, 0.0]).unwrap(), vec![3.0, 9.0]);
        assert_eq!(e2.b_class(), BClass::Positive);
        for s in [e1, e2, MetricSpec::componentwise_abs(3).unwrap()] {
            let u = vec![0.3; s.m()];
            assert!(s.eval(&u, &u).unwrap().iter().all(|x| *x == 0.0));
        }
    }

    #[test]
    fn dimension_is_checked() {
        let e = MetricSpec::example1().eval(&[1.0], &[0.0, 0.0]).unwrap_err();
        assert_eq!(e, MetricError::DimensionMismatch { expected: 2, found: 1 });
    }

    #[test]
    fn induced_constants() {
        let b0 = m(&[[2.0, 2.0], [1.0, 1.0]]);
        assert_eq!(induced_constant(&b0, Norm::L1).unwrap(), 3.0);
        assert_eq!(induced_constant(&b0, Norm::Linf).unwrap(), 4.0);
        assert!((induced_constant(&b0, Norm::L2).unwrap() - 10f64.sqrt()).abs() < 1e-15);
        assert_eq!(induced_constant(&m(&[[2.0, -1.0], [0.0, 1.0]]), Norm::L1), Err(MetricError::NotPositive));
    }

    #[test]
    fn rho_values() {
        assert_eq!(rho(Norm::L1, &[1.0, 2.0]), 3.0);
        assert_eq!(rho(Norm::Linf, &[1.0, 2.0]), 2.0);
        assert_eq!(rho(Norm::L2, &[3.0, 4.0]), 5.0);
    }

    #[test]
    fn diameters() {
        let s = MetricSpec::componentwise_abs(2).unwrap();
        assert_eq!(diameter(&s, &[vec![1.0, 1.0]]).unwrap(), 0.0);
        assert_eq!(diameter(&s, &[vec![0.0, 0.0], vec![1.0, 2.0]]).unwrap(), 3.0);
        let pts: Vec<Vec<f64>> = (0..5).map(|i| vec![0.1 * i as f64, 0.05 * i as f64]).collect();
        assert!(diameter(&s, &pts).unwrap() <= 1.0);
    }

    #[test]
    fn example1_sample_has_no_violations() {
        let pts = sample_box(2, 200, -5.0, 5.0, 7);
        let r = verify_axioms(&MetricSpec::example1(), &pts, DEFAULT_TOL, TRIPLE_CAP, 7).unwrap();
        assert!(r.ok(), "{:?}", r.violations.first());
        assert!(r.subsampled);
        assert_eq!(r.checked.triangle, TRIPLE_CAP as u64);
    }

    #[test]
    fn example1_with_identity_matrix_fails() {
        let s = MetricSpec::example1().with_b(Mat::identity(2)).unwrap();
        let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![2.0, 0.0]];
        let r = verify_axioms(&s, &pts, DEFAULT_TOL, TRIPLE_CAP, 0).unwrap();
        let tri: Vec<_> = r.violations.iter().filter(|v| v.axiom == Axiom::Triangle).collect();
        assert!(tri.iter().any(|v| v.indices == vec![0, 1, 2] && v.lhs == vec![4.0, 0.0] && v.rhs == vec![2.0, 0.0]));
    }

    #[test]
    fn singleton_sample_is_vacuous() {
        let r = verify_axioms(&MetricSpec::example2(), &[vec![1.0, 2.0]], DEFAULT_TOL, TRIPLE_CAP, 0).unwrap();
        assert!(r.ok());
    }

    #[test]
    fn expression_metric_asymmetry_is_reported() {
        let s = MetricSpec::expression(1, &["abs(u1 - v1) + max(u1 - v1, 0)"], Mat::identity(1)).unwrap();
        let r = verify_axioms(&s, &[vec![0.0], vec![1.0]], DEFAULT_TOL, TRIPLE_CAP, 0).unwrap();
        assert!(r.violations.iter().any(|v| v.axiom == Axiom::Symmetry));
    }

    #[test]
    fn expression_metric_rejects_foreign_variables() {
        assert!(MetricSpec::expression(1, &["abs(x1 - v1)"], Mat::identity(1)).is_err());
        assert!(MetricSpec::expression(1, &["abs(u2 - v1)"], Mat::identity(1)).is_err());
    }

    #[test]
    fn minimality_probe() {
        let b0 = m(&[[2.0, 2.0], [1.0, 1.0]]);
        assert!(example2_minimality_probe(&b0, 10.0, 10.0).unwrap().ok());
        let r = example2_minimality_probe(&m(&[[2.0, 1.9], [1.0, 1.0]]), 1000.0, 1000.0).unwrap();
        assert!(r.violations.iter().any(|v| v.lhs[0] > v.rhs[0]));
        let r = example2_minimality_probe(&m(&[[2.0, 2.0], [0.9, 1.0]]), 0.01, 0.005).unwrap();
        assert!(r.violations.iter().any(|v| v.lhs[1] > v.rhs[1]));
        let r = example2_minimality_probe(&m(&[[1.9, 2.0], [1.0, 1.0]]), 1000.0, 500.0).unwrap();
        assert!(r.violations.iter().any(|v| v.lhs[0] > v.rhs[0]));
        let r = example2_minimality_probe(&m(&[[2.0, 2.0], [1.0, 0.9]]), 0.01, 0.005).unwrap();
        assert!(r.violations.iter().any(|v| v.lhs[1] > v.rhs[1]));
    }

    #[test]
    fn json_round_trip() {
        let s: MetricSpec = serde_json::from_str(r#"{"kind":"example1"}"#).unwrap();
        assert_eq!(s, MetricSpec::example1());
        let s: MetricSpec =
            serde_json::from_str(r#"{"n":1,"m":1,"kind":"expression","components":["abs(u1 - v1)"],"B":[[1.0]],"scale":2}"#).unwrap();
        assert_eq!(s.eval(&[0.0], &[1.5]).unwrap(), vec![3.0]);
        let back: MetricSpec = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<MetricSpec>(r#"{"kind":"example1","B":[[1.0]]}"#).is_err());
    }
}
