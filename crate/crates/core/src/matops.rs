//! Small dense matrices and the matrix-class oracles the fixed-point theory
//! depends on: spectral radius, convergence to zero, Neumann inversion,
//! inverse positivity, monotonicity and the `sI - M̄` splitting.
//!
//! Everything is floating point and tolerance governed. Matrices are capped
//! at `MAX_DIM` so closed-form cross checks and exhaustive tests stay cheap.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest supported matrix dimension.
pub const MAX_DIM: usize = 8;

/// Default tolerance for every matrix verdict.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Default cap on the power exponent used by [`is_convergent_to_zero`].
pub const DEFAULT_KMAX: u64 = 1 << 60;

/// Verdicts with `|r(M) - 1|` below this band are reported as marginal.
pub const MARGINAL_BAND: f64 = 1e-6;

const GELFAND_STABLE_RTOL: f64 = 1e-9;
const GELFAND_MAX_DOUBLINGS: u32 = 80;
/// `k = 2^40`: an oscillating factor `c` in `‖M^k‖ ≈ c r^k` then moves the
/// estimate by at most `ln(c) / 2^40`.
const GELFAND_MIN_DOUBLINGS: u32 = 40;
const CROSS_CHECK_RTOL: f64 = 1e-5;
const DIVERGENCE_CEILING: f64 = 1e150;
const MONOTONE_MAX_DRAWS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatError {
    #[error("matrix contains a NaN or infinite entry")]
    NonFinite,
    #[error("unsupported matrix dimension {0} (expected 1..={MAX_DIM})")]
    InvalidDimension(usize),
    #[error("matrix is not square: row {row} has {len} entries, expected {n}")]
    NotSquare { row: usize, len: usize, n: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("entry ({row},{col}) = {value} is negative")]
    NotNonnegative { row: usize, col: usize, value: f64 },
    #[error("matrix is not convergent to zero (spectral radius {spectral_radius})")]
    NotConvergent { spectral_radius: f64 },
    #[error("off-diagonal entry ({row},{col}) = {value} is positive")]
    NotZPattern { row: usize, col: usize, value: f64 },
    #[error("no feasible sample with Mx >= 0 in {draws} draws")]
    SamplingExhausted { draws: usize },
    #[error("matrix powers left the floating range; spectral radius >= {lower_bound}")]
    Overflow { lower_bound: f64 },
    #[error("internal consistency failure: {0}")]
    Inconsistent(String),
}

/// Square real matrix, row-major, `1 <= n <= MAX_DIM`, finite entries.
///
/// Serializes as a JSON array of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Mat {
    n: usize,
    data: Vec<f64>,
}

impl TryFrom<Vec<Vec<f64>>> for Mat {
    type Error = MatError;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, Self::Error> {
        Mat::from_rows(&rows)
    }
}

impl From<Mat> for Vec<Vec<f64>> {
    fn from(m: Mat) -> Self {
        m.rows()
    }
}

impl Mat {
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, MatError> {
        let n = rows.len();
        if n == 0 || n > MAX_DIM {
            return Err(MatError::InvalidDimension(n));
        }
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != n {
                return Err(MatError::NotSquare { row: i, len: row.len(), n });
            }
            data.extend_from_slice(row);
        }
        let m = Mat { n, data };
        m.check_finite()?;
        Ok(m)
    }

    pub fn zeros(n: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&n), "dimension {n} out of range");
        Mat { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        Self::scalar(n, 1.0)
    }

    pub fn scalar(n: usize, s: f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = s;
        }
        m
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m.data[i * d.len() + i] = v;
        }
        m
    }

    /// Matrix whose entries are all equal to `value`.
    pub fn constant(n: usize, value: f64) -> Self {
        Mat { n, data: vec![value; n * n] }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.n).map(|r| r.to_vec()).collect()
    }

    pub fn entries(&self) -> &[f64] {
        &self.data
    }

    pub fn check_finite(&self) -> Result<(), MatError> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(MatError::NonFinite)
        }
    }

    fn check_same_dim(&self, other: &Mat) -> Result<(), MatError> {
        if self.n == other.n {
            Ok(())
        } else {
            Err(MatError::DimensionMismatch { expected: self.n, found: other.n })
        }
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.n, other.n, "matmul dimension mismatch");
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        Mat { n, data: out }
    }

    /// `M x` for a vector of length `n`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n, "vector length mismatch");
        self.data
            .chunks(self.n)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn scale(&self, s: f64) -> Mat {
        Mat { n: self.n, data: self.data.iter().map(|v| v * s).collect() }
    }

    pub fn transpose(&self) -> Mat {
        let n = self.n;
        let mut t = Mat::zeros(n);
        for i in 0..n {
            for j in 0..n {
                t.data[j * n + i] = self.data[i * n + j];
            }
        }
        t
    }

    /// `M^k` by repeated squaring; `M^0 = I`.
    pub fn pow(&self, mut k: u64) -> Mat {
        let mut result = Mat::identity(self.n);
        let mut base = self.clone();
        while k > 0 {
            if k & 1 == 1 {
                result = result.matmul(&base);
            }
            k >>= 1;
            if k > 0 {
                base = base.matmul(&base);
            }
        }
        result
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        self.data
            .chunks(self.n)
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_entry(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_entry(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_diag(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// True when every entry is `>= -tol` (a "positive" matrix in the
    /// componentwise-order sense).
    pub fn is_nonnegative(&self, tol: f64) -> bool {
        self.first_negative(tol).is_none()
    }

    fn first_negative(&self, tol: f64) -> Option<(usize, usize, f64)> {
        self.data
            .iter()
            .position(|&v| v < -tol)
            .map(|p| (p / self.n, p % self.n, self.data[p]))
    }

    pub fn is_diagonal(&self, tol: f64) -> bool {
        (0..self.n).all(|i| (0..self.n).all(|j| i == j || self.get(i, j).abs() <= tol))
    }

    pub fn approx_eq(&self, other: &Mat, tol: f64) -> bool {
        self.n == other.n && self.data.iter().zip(&other.data).all(|(a, b)| (a - b).abs() <= tol)
    }

    pub fn max_abs_diff(&self, other: &Mat) -> f64 {
        self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn try_add(&self, other: &Mat) -> Result<Mat, MatError> {
        self.check_same_dim(other)?;
        Ok(Mat { n: self.n, data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect() })
    }

    pub fn try_sub(&self, other: &Mat) -> Result<Mat, MatError> {
        self.check_same_dim(other)?;
        Ok(Mat { n: self.n, data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect() })
    }
}

impl fmt::Display for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, row) in self.data.chunks(self.n).enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "[")?;
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{v}")?;
            }
            write!(f, "]")?;
        }
        write!(f, "]")
    }
}

impl Mul for &Mat {
    type Output = Mat;
    fn mul(self, rhs: &Mat) -> Mat {
        self.matmul(rhs)
    }
}

impl Add for &Mat {
    type Output = Mat;
    fn add(self, rhs: &Mat) -> Mat {
        self.try_add(rhs).expect("matrix add dimension mismatch")
    }
}

impl Sub for &Mat {
    type Output = Mat;
    fn sub(self, rhs: &Mat) -> Mat {
        self.try_sub(rhs).expect("matrix sub dimension mismatch")
    }
}

// ---------------------------------------------------------------------------
// Spectral radius
// ---------------------------------------------------------------------------

/// Spectral radius `r(M)`.
///
/// Uses the Gelfand limit in ratio form, `(‖M^2k‖∞ / ‖M^k‖∞)^(1/k)` with `k`
/// doubling, which cancels the constant in `‖M^k‖ ~ c r^k`. Powers are
/// renormalized after each squaring and the scale is tracked in log space,
/// so the estimate never leaves the floating range. For `n <= 3` the result
/// is cross-checked against the roots of the characteristic polynomial.
pub fn spectral_radius(m: &Mat) -> Result<f64, MatError> {
    m.check_finite()?;
    let g = gelfand_radius(m)?;
    if m.n() <= 3 {
        let c = closed_form_radius(m);
        if (g - c).abs() > CROSS_CHECK_RTOL * (1.0 + g.max(c)) {
            return Err(MatError::Inconsistent(format!(
                "spectral radius cross-check failed: gelfand {g}, characteristic roots {c}"
            )));
        }
    }
    Ok(g)
}

fn gelfand_radius(m: &Mat) -> Result<f64, MatError> {
    let norm0 = m.norm_inf();
    if norm0 == 0.0 {
        return Ok(0.0);
    }
    let mut p = m.scale(1.0 / norm0);
    // invariant: M^k = exp(log_scale) * p with ‖p‖ = 1, so log_scale = ln ‖M^k‖
    let mut log_scale = norm0.ln();
    let mut k = 1.0f64;
    let mut estimate = norm0;
    for j in 1..=GELFAND_MAX_DOUBLINGS {
        let prev = log_scale;
        p = p.matmul(&p);
        log_scale *= 2.0;
        let norm = p.norm_inf();
        if norm == 0.0 {
            return Ok(0.0);
        }
        if !norm.is_finite() {
            return Err(MatError::Overflow { lower_bound: estimate });
        }
        p = p.scale(1.0 / norm);
        log_scale += norm.ln();
        let next = ((log_scale - prev) / k).exp();
        k *= 2.0;
        if !next.is_finite() {
            return Err(MatError::Overflow { lower_bound: estimate });
        }
        let stable = (next - estimate).abs() < GELFAND_STABLE_RTOL * (1.0 + next);
        estimate = next;
        if stable && j >= GELFAND_MIN_DOUBLINGS {
            break;
        }
    }
    Ok(estimate)
}

/// Spectral radius from the closed-form roots of the characteristic
/// polynomial. Only defined for `n <= 3`.
pub fn closed_form_radius(m: &Mat) -> f64 {
    match m.n() {
        1 => m.get(0, 0).abs(),
        2 => {
            let tr = m.get(0, 0) + m.get(1, 1);
            let det = m.get(0, 0) * m.get(1, 1) - m.get(0, 1) * m.get(1, 0);
            quadratic_max_modulus(-tr, det)
        }
        3 => cubic_max_modulus(m),
        n => panic!("closed-form spectral radius needs n <= 3, got {n}"),
    }
}

/// Largest root modulus of `λ² + bλ + c`.
fn quadratic_max_modulus(b: f64, c: f64) -> f64 {
    let disc = b * b - 4.0 * c;
    if disc >= 0.0 {
        (b.abs() + disc.sqrt()) / 2.0
    } else {
        c.sqrt()
    }
}

fn cubic_max_modulus(m: &Mat) -> f64 {
    let g = |i, j| m.get(i, j);
    let tr = g(0, 0) + g(1, 1) + g(2, 2);
    let minors = g(0, 0) * g(1, 1) - g(0, 1) * g(1, 0) + g(0, 0) * g(2, 2) - g(0, 2) * g(2, 0)
        + g(1, 1) * g(2, 2)
        - g(1, 2) * g(2, 1);
    let det = g(0, 0) * (g(1, 1) * g(2, 2) - g(1, 2) * g(2, 1))
        - g(0, 1) * (g(1, 0) * g(2, 2) - g(1, 2) * g(2, 0))
        + g(0, 2) * (g(1, 0) * g(2, 1) - g(1, 1) * g(2, 0));
    // λ³ + aλ² + bλ + c
    let (a, b, c) = (-tr, minors, -det);
    let shift = a / 3.0;
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    if p < 0.0 {
        let disc = -(4.0 * p * p * p + 27.0 * q * q);
        if disc > 0.0 {
            let r = 2.0 * (-p / 3.0).sqrt();
            let arg = ((3.0 * q / (2.0 * p)) * (-3.0 / p).sqrt()).clamp(-1.0, 1.0);
            let phi = arg.acos() / 3.0;
            return (0..3)
                .map(|k| (r * (phi - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos() - shift).abs())
                .fold(0.0, f64::max);
        }
    }
    let inner = (q * q / 4.0 + p * p * p / 27.0).max(0.0).sqrt();
    let t = (-q / 2.0 + inner).cbrt() + (-q / 2.0 - inner).cbrt();
    let root = t - shift;
    // deflate: λ² + (a + root)λ + (b + root(a + root))
    let qb = a + root;
    let qc = b + root * qb;
    root.abs().max(quadratic_max_modulus(qb, qc))
}

// ---------------------------------------------------------------------------
// Convergence to zero and the Neumann series
// ---------------------------------------------------------------------------

/// Evidence from the power sequence `M, M², M⁴, …`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PowerWitness {
    /// All entries of `M^power` fell below the tolerance.
    Vanished { power: u64, max_entry: f64 },
    /// Entries of `M^power` exceeded the divergence ceiling.
    Diverged { power: u64, max_entry: f64 },
    /// `kmax` was reached with entries still above the tolerance.
    Stalled { power: u64, max_entry: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub convergent: bool,
    /// `|r(M) - 1| < MARGINAL_BAND`; such verdicts are not certified.
    pub marginal: bool,
    pub spectral_radius: f64,
    pub witness: PowerWitness,
}

fn power_test(m: &Mat, tol: f64, kmax: u64) -> PowerWitness {
    let mut p = m.clone();
    let mut k: u64 = 1;
    loop {
        let max_entry = p.max_abs();
        if max_entry < tol {
            return PowerWitness::Vanished { power: k, max_entry };
        }
        if max_entry > DIVERGENCE_CEILING {
            return PowerWitness::Diverged { power: k, max_entry };
        }
        match k.checked_mul(2) {
            Some(next) if next <= kmax => {
                p = p.matmul(&p);
                k = next;
            }
            _ => return PowerWitness::Stalled { power: k, max_entry },
        }
    }
}

/// Decides whether a nonnegative matrix is convergent to zero.
///
/// Two independent sub-tests must agree: the power sequence reaching entries
/// below `tol` within `kmax`, and `r(M) < 1 - tol`. Inside the marginal band
/// a disagreement yields `convergent = false, marginal = true`; outside it is
/// an [`MatError::Inconsistent`] error.
pub fn is_convergent_to_zero(m: &Mat, tol: f64, kmax: u64) -> Result<Convergence, MatError> {
    m.check_finite()?;
    if let Some((row, col, value)) = m.first_negative(tol) {
        return Err(MatError::NotNonnegative { row, col, value });
    }
    let r = spectral_radius(m)?;
    let witness = power_test(m, tol, kmax.max(1));
    let by_power = matches!(witness, PowerWitness::Vanished { .. });
    let by_radius = r < 1.0 - tol;
    let marginal = (r - 1.0).abs() < MARGINAL_BAND;
    if by_power == by_radius {
        return Ok(Convergence { convergent: by_power, marginal, spectral_radius: r, witness });
    }
    if marginal {
        return Ok(Convergence { convergent: false, marginal, spectral_radius: r, witness });
    }
    Err(MatError::Inconsistent(format!(
        "power test ({witness:?}) disagrees with spectral radius {r}; kmax = {kmax}"
    )))
}

/// `(I - M)^{-1}` as the truncated Neumann series `Σ M^k`.
///
/// The series is summed in doubling blocks, `S_{2K} = S_K + M^K S_K`, and
/// truncated after the first block whose largest entry is below `tol`. At
/// that point `M^K < tol` entrywise, so the remaining tail is `O(tol²)`.
pub fn neumann_inverse(m: &Mat, tol: f64) -> Result<Mat, MatError> {
    let conv = is_convergent_to_zero(m, tol, DEFAULT_KMAX)?;
    if !conv.convergent {
        return Err(MatError::NotConvergent { spectral_radius: conv.spectral_radius });
    }
    let mut sum = Mat::identity(m.n());
    let mut power = m.clone();
    for _ in 0..64 {
        let block = power.matmul(&sum);
        sum = &sum + &block;
        if block.max_abs() < tol {
            return Ok(sum);
        }
        power = power.matmul(&power);
    }
    Err(MatError::NotConvergent { spectral_radius: conv.spectral_radius })
}

// ---------------------------------------------------------------------------
// Inversion, inverse positivity, monotonicity
// ---------------------------------------------------------------------------

/// Gauss-Jordan inverse with partial pivoting. Returns `None` when a pivot
/// satisfies `|pivot| <= tol * max|M_ij|`.
pub fn inverse(m: &Mat, tol: f64) -> Result<Option<Mat>, MatError> {
    m.check_finite()?;
    let n = m.n();
    let scale = m.max_abs();
    if scale == 0.0 {
        return Ok(None);
    }
    let mut a = m.rows();
    let mut inv = Mat::identity(n).rows();
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("nonempty range");
        if a[pivot_row][col].abs() <= tol * scale {
            return Ok(None);
        }
        a.swap(col, pivot_row);
        inv.swap(col, pivot_row);
        let p = a[col][col];
        for j in 0..n {
            a[col][j] /= p;
            inv[col][j] /= p;
        }
        for i in 0..n {
            if i == col {
                continue;
            }
            let factor = a[i][col];
            if factor == 0.0 {
                continue;
            }
            for j in 0..n {
                a[i][j] -= factor * a[col][j];
                inv[i][j] -= factor * inv[col][j];
            }
        }
    }
    Ok(Some(Mat::from_rows(&inv)?))
}

/// A nonzero `z` with `Mz ≈ 0`, normalized to `‖z‖∞ = 1`, when `M` is
/// numerically singular.
pub fn null_vector(m: &Mat, tol: f64) -> Option<Vec<f64>> {
    let n = m.n();
    let scale = m.max_abs();
    if scale == 0.0 {
        let mut z = vec![0.0; n];
        z[0] = 1.0;
        return Some(z);
    }
    let mut a = m.rows();
    let mut pivots: Vec<(usize, usize)> = Vec::new();
    let mut free = None;
    let mut row = 0;
    for col in 0..n {
        if row == n {
            free.get_or_insert(col);
            continue;
        }
        let pr = (row..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("nonempty range");
        if a[pr][col].abs() <= tol * scale {
            free.get_or_insert(col);
            continue;
        }
        a.swap(row, pr);
        let p = a[row][col];
        for v in a[row].iter_mut() {
            *v /= p;
        }
        for i in 0..n {
            if i != row {
                let f = a[i][col];
                if f != 0.0 {
                    for j in 0..n {
                        a[i][j] -= f * a[row][j];
                    }
                }
            }
        }
        pivots.push((row, col));
        row += 1;
    }
    let free = free?;
    let mut z = vec![0.0; n];
    z[free] = 1.0;
    for (r, c) in pivots {
        z[c] = -a[r][free];
    }
    let norm = z.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Some(z.into_iter().map(|v| v / norm).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversePositivity {
    pub inverse_positive: bool,
    /// Present exactly when `inverse_positive` is true.
    pub inverse: Option<Mat>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

/// True iff `M` is invertible and every entry of `M^{-1}` is `>= -tol`.
pub fn is_inverse_positive(m: &Mat, tol: f64) -> Result<InversePositivity, MatError> {
    let Some(inv) = inverse(m, tol)? else {
        return Ok(InversePositivity {
            inverse_positive: false,
            inverse: None,
            reason: Some("singular".into()),
        });
    };
    match inv.first_negative(tol) {
        None => Ok(InversePositivity { inverse_positive: true, inverse: Some(inv), reason: None }),
        Some((i, j, v)) => Ok(InversePositivity {
            inverse_positive: false,
            inverse: None,
            reason: Some(format!("inverse entry ({i},{j}) = {v} is negative")),
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneCheck {
    pub monotone: bool,
    /// An `x` with `Mx >= 0` but some `x_i < -tol`.
    pub witness: Option<Vec<f64>>,
    pub feasible_checked: usize,
    pub draws: usize,
}

/// Sampled test of monotonicity (`Mx >= 0 ⟹ x >= 0`).
///
/// Candidates are the columns of `M^{-1}` when it exists, `±z` for a null
/// vector `z` when it does not, then uniform draws from `[-1,1]^n` kept
/// when `Mx >= 0`. This is a property-test counterpart of
/// [`is_inverse_positive`], not a proof.
pub fn is_monotone_sampled(m: &Mat, samples: usize, seed: u64, tol: f64) -> Result<MonotoneCheck, MatError> {
    m.check_finite()?;
    let n = m.n();
    let mut candidates: Vec<Vec<f64>> = Vec::new();
    match inverse(m, tol)? {
        Some(inv) => {
            let t = inv.transpose();
            candidates.extend(t.rows());
        }
        None => {
            if let Some(z) = null_vector(m, tol) {
                candidates.push(z.iter().map(|v| -v).collect());
                candidates.push(z);
            }
        }
    }
    let norm = m.norm_inf();
    let feasible = |x: &[f64]| {
        let xn = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let slack = 1e-12 * norm * xn;
        m.apply(x).iter().all(|&v| v >= -slack)
    };
    let violates = |x: &[f64]| x.iter().any(|&v| v < -tol);

    let mut checked = 0;
    for x in candidates {
        if feasible(&x) {
            checked += 1;
            if violates(&x) {
                return Ok(MonotoneCheck { monotone: false, witness: Some(x), feasible_checked: checked, draws: 0 });
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws = 0;
    let mut found = 0;
    while found < samples && draws < MONOTONE_MAX_DRAWS {
        draws += 1;
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        if !feasible(&x) {
            continue;
        }
        found += 1;
        checked += 1;
        if violates(&x) {
            return Ok(MonotoneCheck { monotone: false, witness: Some(x), feasible_checked: checked, draws });
        }
    }
    if checked == 0 {
        return Err(MatError::SamplingExhausted { draws });
    }
    Ok(MonotoneCheck { monotone: true, witness: None, feasible_checked: checked, draws })
}

/// Representation `M = sI - M̄` with `M̄ >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Splitting {
    pub s: f64,
    pub mbar: Mat,
    pub mbar_spectral_radius: f64,
    /// `s > r(M̄)`, which certifies that `M` is inverse-positive.
    pub certified: bool,
}

/// Splits a Z-pattern matrix as `sI - M̄` with `s = max_i M_ii + 1`.
pub fn split_representation(m: &Mat, tol: f64) -> Result<Splitting, MatError> {
    m.check_finite()?;
    let n = m.n();
    for i in 0..n {
        for j in 0..n {
            if i != j && m.get(i, j) > tol {
                return Err(MatError::NotZPattern { row: i, col: j, value: m.get(i, j) });
            }
        }
    }
    let s = m.max_diag() + 1.0;
    let mut mbar = m.scale(-1.0);
    for i in 0..n {
        mbar.set(i, i, s - m.get(i, i));
    }
    for v in mbar.data.iter_mut() {
        // clear tolerated positive off-diagonal noise
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let r = spectral_radius(&mbar)?;
    Ok(Splitting { s, mbar, mbar_spectral_radius: r, certified: r < s * (1.0 - tol) })
}

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

/// Order class of a triangle-inequality matrix `B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BClass {
    Positive,
    InversePositive,
    Both,
    Neither,
}

impl BClass {
    pub fn is_positive(self) -> bool {
        matches!(self, BClass::Positive | BClass::Both)
    }

    pub fn is_inverse_positive(self) -> bool {
        matches!(self, BClass::InversePositive | BClass::Both)
    }
}

impl fmt::Display for BClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BClass::Positive => "positive",
            BClass::InversePositive => "inverse_positive",
            BClass::Both => "both",
            BClass::Neither => "neither",
        };
        f.write_str(s)
    }
}

pub fn classify(b: &Mat, tol: f64) -> Result<BClass, MatError> {
    let pos = b.is_nonnegative(tol);
    let inv = is_inverse_positive(b, tol)?.inverse_positive;
    Ok(match (pos, inv) {
        (true, true) => BClass::Both,
        (true, false) => BClass::Positive,
        (false, true) => BClass::InversePositive,
        (false, false) => BClass::Neither,
    })
}

/// Everything the oracles can say about one matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatClassReport {
    pub n: usize,
    pub tol: f64,
    pub spectral_radius_estimate: f64,
    pub convergent_to_zero: bool,
    /// Power-sequence evidence; absent when `M` has negative entries.
    pub convergence_witness: Option<PowerWitness>,
    pub marginal: bool,
    pub positive: bool,
    pub inverse_positive: bool,
    pub inverse: Option<Mat>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inverse_note: Option<String>,
    pub splitting: Option<Splitting>,
    pub b_class: BClass,
}

pub fn class_report(m: &Mat, tol: f64) -> Result<MatClassReport, MatError> {
    let r = spectral_radius(m)?;
    let positive = m.is_nonnegative(tol);
    let (convergent, witness, marginal) = if positive {
        let c = is_convergent_to_zero(m, tol, DEFAULT_KMAX)?;
        (c.convergent, Some(c.witness), c.marginal)
    } else {
        (false, None, (r - 1.0).abs() < MARGINAL_BAND)
    };
    let ip = is_inverse_positive(m, tol)?;
    let splitting = match split_representation(m, tol) {
        Ok(s) => Some(s),
        Err(MatError::NotZPattern { .. }) => None,
        Err(e) => return Err(e),
    };
    let b_class = match (positive, ip.inverse_positive) {
        (true, true) => BClass::Both,
        (true, false) => BClass::Positive,
        (false, true) => BClass::InversePositive,
        (false, false) => BClass::Neither,
    };
    Ok(MatClassReport {
        n: m.n(),
        tol,
        spectral_radius_estimate: r,
        convergent_to_zero: convergent,
        convergence_witness: witness,
        marginal,
        positive,
        inverse_positive: ip.inverse_positive,
        inverse: ip.inverse,
        inverse_note: ip.reason,
        splitting,
        b_class,
    })
}
