//! Acceptance gate: one `[PASS]` or `[FAIL]` line per criterion. Exits
//! nonzero when any criterion fails.

use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vbm_core::evp::{caristi_solve, classical_strict_failures, ekeland_weak, EkelandTrace, EpsSchedule, EvpError, FiniteSpace};
use vbm_core::matops::{
    is_convergent_to_zero, is_inverse_positive, is_monotone_sampled, neumann_inverse, spectral_radius, split_representation,
    BClass, Mat, MatError, DEFAULT_KMAX, DEFAULT_TOL,
};
use vbm_core::metric::{example2_minimality_probe, sample_box, verify_axioms, MetricSpec, VecN};
use vbm_core::solver::{
    ostrowski_run, perov_solve, picard_orbit, rz_stability_check, s_continuity_bound, AvramescuProblem, ContractionProblem,
    ExprMap, FnMap,
};

const SPECTRAL_EXCLUSION: f64 = 1e-6;
const CRITERION_1_BUDGET: Duration = Duration::from_secs(30);
const CRITERION_3_BUDGET: Duration = Duration::from_secs(10);
const INVERSE_TOL: f64 = 1e-12;
const BOUND_TOL: f64 = 1e-9;
const STOP_TOL: f64 = 1e-8;
const UNIQUENESS_TOL: f64 = 1e-7;
const RESIDUAL_TOL: f64 = 1e-8;
/// Rows of `M^{-1}` within this of the oracle count as equal.
const NEUMANN_RTOL: f64 = 1e-7;
const NEAR_SINGULAR_DET: f64 = 1e-6;

struct Gate {
    results: Vec<(&'static str, bool)>,
}

impl Gate {
    fn record(&mut self, id: &'static str, title: &str, pass: bool, detail: String) {
        println!("[{}] {id} {title}: {detail}", if pass { "PASS" } else { "FAIL" });
        self.results.push((id, pass));
    }
}

fn to_na(m: &Mat) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.n(), m.n(), m.entries())
}

fn from_na(m: &DMatrix<f64>) -> Mat {
    let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
    Mat::from_rows(&rows).unwrap()
}

fn oracle_radius(m: &Mat) -> f64 {
    to_na(m).complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn random_square(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Mat {
    let v: Vec<f64> = (0..n * n).map(|_| rng.gen_range(lo..=hi)).collect();
    Mat::from_rows(&v.chunks(n).collect::<Vec<_>>()).unwrap()
}

fn criterion_1(g: &mut Gate) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut tested, mut excluded, mut convergent) = (0usize, 0usize, 0usize);
    let mut disagreements = Vec::new();
    while tested < 10_000 {
        let n = rng.gen_range(2..=4);
        let m = random_square(&mut rng, n, 0.0, 1.5);
        let r = oracle_radius(&m);
        if (r - 1.0).abs() < SPECTRAL_EXCLUSION {
            excluded += 1;
            continue;
        }
        tested += 1;
        let truth = r < 1.0;
        convergent += truth as usize;
        let by_powers = is_convergent_to_zero(&m, DEFAULT_TOL, DEFAULT_KMAX).map(|c| c.convergent);
        let by_radius = spectral_radius(&m).map(|s| s < 1.0);
        let i_minus_m = Mat::identity(n).try_sub(&m).unwrap();
        let by_series = match neumann_inverse(&m, DEFAULT_TOL) {
            Ok(s) => match to_na(&i_minus_m).try_inverse() {
                Some(direct) => Ok(s.max_abs_diff(&from_na(&direct)) <= NEUMANN_RTOL * direct.amax().max(1.0)),
                None => Ok(false),
            },
            Err(MatError::NotConvergent { .. }) => Ok(false),
            Err(e) => Err(e),
        };
        let by_inverse = is_inverse_positive(&i_minus_m, DEFAULT_TOL).map(|ip| ip.inverse_positive);
        let verdicts = [by_powers, by_radius, by_series, by_inverse];
        if verdicts.iter().any(|v| v.as_ref().map_or(true, |b| *b != truth)) {
            disagreements.push((m, r, verdicts));
        }
    }
    let elapsed = start.elapsed();
    let mut detail = format!(
        "{tested} matrices ({convergent} convergent, {excluded} excluded near r = 1), {} disagreements, {:.2}s",
        disagreements.len(),
        elapsed.as_secs_f64()
    );
    if let Some((m, r, v)) = disagreements.first() {
        detail += &format!("; first: {m} with r = {r}, verdicts {v:?}");
    }
    g.record("1", "convergence characterizations agree", disagreements.is_empty() && elapsed < CRITERION_1_BUDGET, detail);
}

fn criterion_2(g: &mut Gate) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut tested, mut excluded, mut positive) = (0usize, 0usize, 0usize);
    let mut disagreements = Vec::new();
    while tested < 1000 {
        let n = rng.gen_range(2..=4);
        let mut m = random_square(&mut rng, n, -1.5, 0.0);
        for i in 0..n {
            m.set(i, i, rng.gen_range(0.0..3.0));
        }
        let split = split_representation(&m, DEFAULT_TOL).unwrap();
        if to_na(&m).determinant().abs() <= NEAR_SINGULAR_DET
            || (split.s - split.mbar_spectral_radius).abs() <= SPECTRAL_EXCLUSION * split.s
        {
            excluded += 1;
            continue;
        }
        tested += 1;
        let truth = to_na(&m).try_inverse().is_some_and(|inv| inv.min() >= -DEFAULT_TOL);
        positive += truth as usize;
        let ip = is_inverse_positive(&m, DEFAULT_TOL).map(|r| r.inverse_positive);
        let mono = is_monotone_sampled(&m, 1000, tested as u64, DEFAULT_TOL).map(|r| r.monotone);
        let verdicts = [ip, mono, Ok(split.certified)];
        if verdicts.iter().any(|v| v.as_ref().map_or(true, |b| *b != truth)) {
            disagreements.push((m, verdicts));
        }
    }
    let ex1 = Mat::from_rows(&[[2.0, -1.0], [0.0, 1.0]]).unwrap();
    let expected = Mat::from_rows(&[[0.5, 0.5], [0.0, 1.0]]).unwrap();
    let ip = is_inverse_positive(&ex1, DEFAULT_TOL).unwrap();
    let inv_err = ip.inverse.as_ref().map_or(f64::INFINITY, |inv| inv.max_abs_diff(&expected));
    let ex1_ok = ip.inverse_positive && inv_err <= INVERSE_TOL;
    let mut detail = format!(
        "{tested} Z-pattern matrices ({positive} inverse-positive, {excluded} excluded as near-singular or marginal), {} disagreements; \
         Example 1 inverse error {inv_err:e}",
        disagreements.len()
    );
    if let Some((m, v)) = disagreements.first() {
        detail += &format!("; first: {m} verdicts {v:?}");
    }
    g.record("2", "inverse positivity, monotonicity and splitting agree", disagreements.is_empty() && ex1_ok, detail);
}

fn criterion_3(g: &mut Gate) {
    let start = Instant::now();
    let pts = sample_box(2, 200, -10.0, 10.0, 3);
    let r1 = verify_axioms(&MetricSpec::example1(), &pts, DEFAULT_TOL, 10_000, 3).unwrap();
    g.record(
        "3a",
        "Example 1 metric axioms",
        r1.ok() && r1.checked.triangle == 10_000,
        format!("{} triples checked, {} violations", r1.checked.triangle, r1.violation_count),
    );

    let r2 = verify_axioms(&MetricSpec::example2(), &pts, DEFAULT_TOL, 10_000, 3).unwrap();
    let mut detail = format!("{} triples checked with B0 = {}, {} violations", r2.checked.triangle, r2.b, r2.violation_count);
    if let Some(v) = r2.violations.iter().max_by(|a, b| a.margin.total_cmp(&b.margin)) {
        detail += &format!("; worst: points {:?}, d(u,w) = {:?} > B(d(u,v) + d(v,w)) = {:?}", v.points, v.lhs, v.rhs);
    }
    g.record("3b", "Example 2 metric axioms with B0", r2.ok(), detail);

    // (candidate, t, alpha)
    let probes: [([[f64; 2]; 2], f64, f64); 4] = [
        ([[2.0, 1.9], [1.0, 1.0]], 1000.0, 1000.0),
        ([[2.0, 2.0], [0.9, 1.0]], 0.01, 0.005),
        ([[1.9, 2.0], [1.0, 1.0]], 1000.0, 500.0),
        ([[2.0, 2.0], [1.0, 0.9]], 0.01, 0.005),
    ];
    let mut found = Vec::new();
    let mut all_violated = true;
    for (rows, t, alpha) in probes {
        let cand = Mat::from_rows(&rows).unwrap();
        let rep = example2_minimality_probe(&cand, t, alpha).unwrap();
        found.push(match rep.violations.first() {
            Some(v) => format!("{cand} violated at {:?} (lhs {:?}, rhs {:?})", v.points, v.lhs, v.rhs),
            None => format!("{cand} NOT violated at t = {t}, alpha = {alpha}"),
        });
        all_violated &= !rep.ok();
    }
    let elapsed = start.elapsed();
    g.record(
        "3c",
        "minimality probes for lowered B0 entries",
        all_violated && elapsed < CRITERION_3_BUDGET,
        format!("{}; criterion time {:.2}s", found.join("; "), elapsed.as_secs_f64()),
    );
}

const AFFINE_M: [[f64; 2]; 2] = [[0.5, 0.0], [0.25, 0.5]];
const AFFINE_C: [f64; 2] = [1.0, 1.0];

fn affine_step(x: &[f64]) -> Vec<f64> {
    (0..2).map(|i| AFFINE_M[i][0] * x[0] + AFFINE_M[i][1] * x[1] + AFFINE_C[i]).collect()
}

fn affine_problem(x0: Vec<f64>, tol: f64) -> ContractionProblem {
    let map = ExprMap::new(&["0.5*x1 + 1", "0.25*x1 + 0.5*x2 + 1"], 2, 0).unwrap();
    ContractionProblem::new(
        Arc::new(map),
        MetricSpec::componentwise_abs(2).unwrap(),
        Mat::from_rows(&AFFINE_M).unwrap(),
        x0,
        vec![tol; 2],
        10_000,
    )
}

/// `x*` from an LU solve of `(I − M) x = c`.
fn affine_x_star() -> Vec<f64> {
    let i_minus_m = DMatrix::identity(2, 2) - DMatrix::from_row_slice(2, 2, &AFFINE_M.concat());
    let x = i_minus_m.lu().solve(&DVector::from_row_slice(&AFFINE_C)).unwrap();
    x.iter().copied().collect()
}

/// `(I − A)^{-1}`, the error matrix for `B = I`.
fn affine_phi() -> DMatrix<f64> {
    (DMatrix::identity(2, 2) - DMatrix::from_row_slice(2, 2, &AFFINE_M.concat())).try_inverse().unwrap()
}

fn abs_diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect()
}

fn na_apply(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (m * DVector::from_row_slice(v)).iter().copied().collect()
}

fn criterion_4(g: &mut Gate) {
    let x_star = affine_x_star();
    let r = perov_solve(&affine_problem(vec![0.0, 0.0], STOP_TOL)).unwrap();
    let phi = affine_phi();
    let a = DMatrix::from_row_slice(2, 2, &AFFINE_M.concat());
    let d01 = abs_diff(&[0.0, 0.0], &affine_step(&[0.0, 0.0]));
    let mut x = vec![0.0, 0.0];
    let mut a_k = DMatrix::identity(2, 2);
    let mut worst_slack = f64::INFINITY;
    let mut mismatch = 0.0f64;
    let mut first_below = None;
    let mut rows_ok = true;
    for row in &r.certificate.rows {
        let oracle_bound = na_apply(&(&phi * &a_k), &d01);
        if first_below.is_none() && oracle_bound.iter().all(|b| *b <= STOP_TOL) {
            first_below = Some(row.k);
        }
        let Some(bound) = &row.bound else {
            rows_ok = false;
            break;
        };
        let err = abs_diff(&x, &x_star);
        for i in 0..2 {
            worst_slack = worst_slack.min(bound[i] + BOUND_TOL - err[i]);
            mismatch = mismatch.max((bound[i] - oracle_bound[i]).abs() / oracle_bound[i].max(f64::MIN_POSITIVE));
        }
        x = affine_step(&x);
        a_k = &a * a_k;
    }
    let final_err = abs_diff(&r.x_star, &x_star);
    let stops_first = first_below == Some(r.iterations);
    let pass = rows_ok
        && worst_slack >= 0.0
        && mismatch <= 1e-9
        && stops_first
        && final_err.iter().all(|e| *e <= STOP_TOL)
        && r.certificate.bound_valid;
    g.record(
        "4",
        "a-priori bound dominates the true error",
        pass,
        format!(
            "x* = {x_star:?}, case {:?}, {} iterations (first k with bound <= 1e-8: {first_below:?}), \
             min slack {worst_slack:e}, bound vs oracle rel. diff {mismatch:e}, final error {final_err:?}",
            r.certificate.case, r.iterations
        ),
    );
}

fn rho1(v: &[f64]) -> f64 {
    v.iter().sum()
}

fn criterion_5(g: &mut Gate) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let starts: Vec<Vec<f64>> = (0..10).map(|_| (0..2).map(|_| rng.gen_range(-10.0..=10.0)).collect()).collect();

    let x_star = affine_x_star();
    let mut worst_affine = 0.0f64;
    let mut affine_ok = true;
    for s in &starts {
        match perov_solve(&affine_problem(s.clone(), 1e-10)) {
            Ok(r) => worst_affine = worst_affine.max(rho1(&abs_diff(&r.x_star, &x_star))),
            Err(_) => affine_ok = false,
        }
    }

    let metric = MetricSpec::example1();
    let halving = FnMap::new(2, |x: &[f64]| x.iter().map(|v| v / 2.0).collect());
    let map: Arc<FnMap<_>> = Arc::new(halving);
    let mut sols = Vec::new();
    let mut ex1_ok = true;
    for s in &starts {
        let p = ContractionProblem::new(map.clone(), metric.clone(), Mat::diag(&[0.5, 0.5]), s.clone(), vec![1e-10; 2], 10_000);
        match perov_solve(&p) {
            Ok(r) => sols.push(r.x_star),
            Err(_) => ex1_ok = false,
        }
    }
    let mut worst_ex1 = 0.0f64;
    for a in &sols {
        worst_ex1 = worst_ex1.max(rho1(&metric.eval(a, &[0.0, 0.0]).unwrap()));
        for b in &sols {
            worst_ex1 = worst_ex1.max(rho1(&metric.eval(a, b).unwrap()));
        }
    }
    g.record(
        "5",
        "uniqueness from 10 starting points",
        affine_ok && ex1_ok && worst_affine < UNIQUENESS_TOL && worst_ex1 < UNIQUENESS_TOL,
        format!("affine: max rho1 to x* = {worst_affine:e}; Example 1 metric: max pairwise rho1 = {worst_ex1:e}"),
    );
}

fn criterion_6(g: &mut Gate) {
    let x_star = affine_x_star();
    let phi = affine_phi();
    let p = affine_problem(vec![0.0, 0.0], STOP_TOL);
    let orbit = picard_orbit(p.map.as_ref(), &p.x0, 60).unwrap();
    let rz = rz_stability_check(&p, &orbit).unwrap();
    let mut rz_oracle_ok = true;
    for x in &orbit {
        let bound = na_apply(&phi, &abs_diff(x, &affine_step(x)));
        let err = abs_diff(x, &x_star);
        rz_oracle_ok &= err.iter().zip(&bound).all(|(e, b)| *e <= b + BOUND_TOL);
    }

    let steps = 60;
    let schedule: Vec<Vec<f64>> = (0..steps).map(|k| vec![0.5f64.powi(k); 2]).collect();
    let os = ostrowski_run(&p, &schedule).unwrap();
    // independent replay: x_{k+1} = N x_k + s_k, majorant Σ A^p e_{k-p} + A^{k+1} d(x0, x*)
    let a = DMatrix::from_row_slice(2, 2, &AFFINE_M.concat());
    let mut x = p.x0.clone();
    let d0 = abs_diff(&x, &x_star);
    let mut es: Vec<Vec<f64>> = Vec::new();
    let mut powers = vec![DMatrix::identity(2, 2)];
    let mut worst_slack = f64::INFINITY;
    let mut row_mismatch = 0.0f64;
    for (k, s) in schedule.iter().enumerate() {
        let nx = affine_step(&x);
        let next: Vec<f64> = nx.iter().zip(s).map(|(u, v)| u + v).collect();
        es.push(abs_diff(&next, &nx));
        powers.push(&powers[k] * &a);
        let mut maj = na_apply(&powers[k + 1], &d0);
        for q in 0..=k {
            let t = na_apply(&powers[q], &es[k - q]);
            maj.iter_mut().zip(&t).for_each(|(m, v)| *m += v);
        }
        let err = abs_diff(&next, &x_star);
        for i in 0..2 {
            worst_slack = worst_slack.min(maj[i] + BOUND_TOL - err[i]);
            row_mismatch = row_mismatch.max((os.rows[k + 1].distance[i] - err[i]).abs());
        }
        x = next;
    }
    let final_err = abs_diff(&x, &x_star).into_iter().fold(0.0, f64::max);
    let pass = rz.bound_holds
        && rz.convergence_confirmed
        && rz_oracle_ok
        && os.majorant_dominates
        && os.error_converges
        && worst_slack >= 0.0
        && row_mismatch <= 1e-12
        && final_err <= BOUND_TOL;
    g.record(
        "6",
        "Reich-Zaslavski and Ostrowski stability",
        pass,
        format!(
            "RZ bound holds on {} orbit points (oracle {rz_oracle_ok}); Ostrowski over {steps} steps: min majorant slack \
             {worst_slack:e}, final error {final_err:e}",
            orbit.len()
        ),
    );
}

fn avramescu(n1: &str, n2: &str) -> AvramescuProblem {
    AvramescuProblem {
        n1: Arc::new(ExprMap::new(&[n1], 1, 1).unwrap()),
        n2: Arc::new(ExprMap::new(&[n2], 1, 1).unwrap()),
        metric: MetricSpec::componentwise_abs(1).unwrap(),
        a: Mat::from_rows(&[[0.5]]).unwrap(),
        dbox: vec![(0.0, 1.0)],
        x0: vec![0.0],
        tol: 1e-10,
        max_iter: 10_000,
        grid: 21,
        refine_iters: 500,
        continuity_pairs: 1000,
        seed: 0,
    }
}

fn criterion_7(g: &mut Gate) {
    // (N1, N2, closed-form S, x*, y*)
    let cases: [(&str, &str, fn(f64) -> f64, f64, f64); 2] =
        [("0.5*x1 + y1", "0.25*x1", |y| 2.0 * y, 0.0, 0.0), ("0.5*x1 + 0.5", "0.3", |_| 1.0, 1.0, 0.3)];
    let mut all = true;
    let mut details = Vec::new();
    for (n1, n2, s_closed, xs, ys) in cases {
        let q = avramescu(n1, n2);
        let r = match vbm_core::solver::avramescu_solve(&q) {
            Ok(r) => r,
            Err(e) => {
                all = false;
                details.push(format!("N1 = {n1}: {e}"));
                continue;
            }
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut oracle_ok = true;
        for _ in 0..1000 {
            let (y, yb) = (rng.gen_range(0.0..=1.0), rng.gen_range(0.0..=1.0));
            let w = s_continuity_bound(&q, &r.continuity.matrix, &[y], &[yb]).unwrap();
            let lhs = (s_closed(y) - s_closed(yb)).abs();
            oracle_ok &= (w.lhs[0] - lhs).abs() <= 1e-9 && w.lhs[0] <= w.rhs[0] + BOUND_TOL;
        }
        let ok = r.residual_x <= RESIDUAL_TOL
            && r.residual_y <= RESIDUAL_TOL
            && (r.x_star[0] - xs).abs() <= RESIDUAL_TOL
            && (r.y_star[0] - ys).abs() <= RESIDUAL_TOL
            && r.continuity.holds
            && r.continuity.pairs == 1000
            && oracle_ok;
        all &= ok;
        details.push(format!(
            "(x*, y*) = ({:.3e}, {:.3e}) residuals ({:.1e}, {:.1e}), continuity {}/{} pairs, closed-form S check {oracle_ok}",
            r.x_star[0],
            r.y_star[0],
            r.residual_x,
            r.residual_y,
            r.continuity.pairs - r.continuity.violations,
            r.continuity.pairs
        ));
    }
    g.record("7", "coupled fixed points and continuity of S", all, details.join("; "));
}

/// Integer points; component `i` is `|Δ_i|` or `|Δ_i|²`, `B >= I` with diagonal at least 2 on squared components.
fn positive_instance(rng: &mut ChaCha8Rng, p: usize, n: usize) -> (FiniteSpace, Vec<VecN>) {
    let squared: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
    let mut b = Mat::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let v = if i == j {
                let floor = if squared[i] { 2.0 } else { 1.0 };
                floor + 0.5 * rng.gen_range(0..3) as f64
            } else if rng.gen_bool(0.5) {
                0.25 * rng.gen_range(0..4) as f64
            } else {
                0.0
            };
            b.set(i, j, v);
        }
    }
    let pts: Vec<Vec<i64>> = (0..p).map(|_| (0..n).map(|_| rng.gen_range(-20..=20)).collect()).collect();
    let dist = move |u: &[i64], v: &[i64]| -> VecN {
        (0..n)
            .map(|i| {
                let a = (u[i] - v[i]).abs() as f64;
                if squared[i] {
                    a * a
                } else {
                    a
                }
            })
            .collect()
    };
    build(rng, pts, dist, b, n)
}

/// `d_i = |Δ_i|² + |Δ_n|` for `i < n`, `d_n = |Δ_n|`, with an upper-triangular
/// inverse-positive `B` whose last column is negative above the diagonal.
fn inverse_positive_instance(rng: &mut ChaCha8Rng, p: usize, n: usize) -> (FiniteSpace, Vec<VecN>) {
    let mut b = Mat::identity(n);
    for i in 0..n - 1 {
        b.set(i, i, 2.0 + 0.5 * rng.gen_range(0..3) as f64);
        b.set(i, n - 1, -0.25 * rng.gen_range(1..=4) as f64);
    }
    let pts: Vec<Vec<i64>> = (0..p).map(|_| (0..n).map(|_| rng.gen_range(-10..=10)).collect()).collect();
    let dist = move |u: &[i64], v: &[i64]| -> VecN {
        let last = (u[n - 1] - v[n - 1]).abs() as f64;
        (0..n).map(|i| if i + 1 == n { last } else { ((u[i] - v[i]) as f64).powi(2) + last }).collect()
    };
    build(rng, pts, dist, b, n)
}

fn build(
    rng: &mut ChaCha8Rng,
    mut pts: Vec<Vec<i64>>,
    dist: impl Fn(&[i64], &[i64]) -> VecN,
    b: Mat,
    n: usize,
) -> (FiniteSpace, Vec<VecN>) {
    pts.sort();
    pts.dedup();
    let d: Vec<Vec<VecN>> = pts.iter().map(|u| pts.iter().map(|v| dist(u, v)).collect()).collect();
    let labels = (0..pts.len()).map(|i| format!("p{i}")).collect();
    let space = FiniteSpace::new(labels, &d, b).expect("construction satisfies the axioms");
    let f = (0..pts.len())
        .map(|_| {
            let base = rng.gen_range(0..60) as f64;
            (0..n).map(|_| base + 0.5 * rng.gen_range(0..3) as f64).collect()
        })
        .collect();
    (space, f)
}

fn evp_instance(seed: u64) -> (FiniteSpace, Vec<VecN>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = rng.gen_range(1..=50);
    let n = rng.gen_range(1..=3);
    if n > 1 && rng.gen_bool(0.5) {
        inverse_positive_instance(&mut rng, p, n)
    } else {
        positive_instance(&mut rng, p, n)
    }
}

/// Brute-force check of the trace and of the three conclusions, including every reported witness.
fn trace_sound(t: &EkelandTrace, space: &FiniteSpace, f: &[VecN]) -> Result<(), String> {
    let n = space.n();
    let p = space.len();
    let le_fd = |x: usize, anchor: usize| (0..n).all(|i| f[x][i] + space.d(x, anchor)[i] <= f[anchor][i]);
    for k in 0..t.sets.len() {
        for x in 0..p {
            let member = (k == 0 || t.sets[k - 1].contains(&x)) && le_fd(x, t.xs[k]);
            if member != t.sets[k].contains(&x) {
                return Err(format!("F(x_{k}) membership of {x} is wrong"));
            }
        }
    }
    if t.sets.last().map(|s| s.as_slice()) != Some(&[t.x_star][..]) {
        return Err("last set is not {x*}".into());
    }
    let s = t.x_star;
    if !le_fd(s, t.xs[0]) {
        return Err("c1 fails".into());
    }
    let b = space.b();
    for x in (0..p).filter(|&x| x != s) {
        let c2 = t.xs.iter().any(|&xk| (0..n).any(|i| f[s][i] + space.d(s, xk)[i] < f[x][i] + space.d(x, xk)[i]));
        let bd = b.apply(space.d(s, x));
        let c3 = t.xs.iter().any(|&xk| {
            let bdk = b.apply(space.d(s, xk));
            (0..n).any(|i| f[s][i] < f[x][i] + bd[i] + bdk[i] - space.d(s, xk)[i])
        });
        if !(c2 && c3) {
            return Err(format!("c2 = {c2}, c3 = {c3} at x = {x}"));
        }
    }
    let c = &t.conclusions;
    if !(c.c1 && c.c2 && c.c3) || c.c2_witnesses.len() != p - 1 || c.c3_witnesses.len() != p - 1 {
        return Err("engine conclusions incomplete".into());
    }
    for w in &c.c2_witnesses {
        let xk = t.xs[w.k];
        if !(f[s][w.i] + space.d(s, xk)[w.i] < f[w.x][w.i] + space.d(w.x, xk)[w.i]) {
            return Err(format!("c2 witness {w:?} does not hold"));
        }
    }
    for w in &c.c3_witnesses {
        let xk = t.xs[w.k];
        let rhs = f[w.x][w.i] + b.apply(space.d(s, w.x))[w.i] + b.apply(space.d(s, xk))[w.i] - space.d(s, xk)[w.i];
        if !(f[s][w.i] < rhs) {
            return Err(format!("c3 witness {w:?} does not hold"));
        }
    }
    Ok(())
}

fn criterion_8(g: &mut Gate) {
    let line = FiniteSpace::from_metric(&MetricSpec::componentwise_abs(1).unwrap(), &[vec![0.0], vec![1.0], vec![2.0]], None).unwrap();
    let squares = vec![vec![0.0], vec![1.0], vec![4.0]];
    let hand = match ekeland_weak(&line, &squares, 2, &EpsSchedule::default()) {
        Ok(t) => t.xs == [2, 0] && t.x_star == 0 && t.sets == [vec![0, 1, 2], vec![0]] && trace_sound(&t, &line, &squares).is_ok(),
        Err(_) => false,
    };

    let (mut verified, mut h_failures, mut inverse_positive) = (0, 0, 0);
    let mut problems = Vec::new();
    for seed in 0..100u64 {
        let (space, f) = evp_instance(seed);
        inverse_positive += (space.b_class() == BClass::InversePositive) as usize;
        let x0 = (seed as usize * 7) % space.len();
        match ekeland_weak(&space, &f, x0, &EpsSchedule::default()) {
            Ok(t) => match trace_sound(&t, &space, &f) {
                Ok(()) => verified += 1,
                Err(e) => problems.push(format!("seed {seed}: {e}")),
            },
            Err(EvpError::ConditionHFailed { eps, set, .. }) => {
                // no point of the set may eps-minimize every component
                let has_h_point = set.iter().any(|&q| set.iter().all(|&x| (0..space.n()).all(|i| f[q][i] <= f[x][i] + eps)));
                if has_h_point || set.is_empty() {
                    problems.push(format!("seed {seed}: condition (H) reported failed but holds"));
                } else {
                    h_failures += 1;
                }
            }
            Err(e) => problems.push(format!("seed {seed}: unexpected {e}")),
        }
    }
    g.record(
        "8",
        "Ekeland principle on finite spaces",
        hand && problems.is_empty(),
        format!(
            "hand trace on {{0,1,2}} with f = x^2 {}; 100 instances ({inverse_positive} with inverse-positive B): {verified} verified, \
             {h_failures} correctly reported condition (H) failures, {} wrong{}",
            if hand { "matches" } else { "DIFFERS" },
            problems.len(),
            problems.first().map(|p| format!("; first: {p}")).unwrap_or_default()
        ),
    );
}

struct CaristiInstance {
    space: FiniteSpace,
    f: Vec<VecN>,
    nmap: Vec<usize>,
    x0: usize,
}

fn caristi_instance(seed: u64) -> CaristiInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = rng.gen_range(1..=40);
    let n = rng.gen_range(1..=3);
    let mut b = Mat::identity(n);
    for i in 0..n {
        for j in 0..n {
            b.set(i, j, b.get(i, j) + 0.25 * rng.gen_range(0..3) as f64);
        }
    }
    let mut pts: Vec<Vec<i64>> = (0..p).map(|_| (0..n).map(|_| rng.gen_range(-10..=10)).collect()).collect();
    pts.sort();
    pts.dedup();
    let p = pts.len();
    let d: Vec<Vec<VecN>> =
        pts.iter().map(|u| pts.iter().map(|v| u.iter().zip(v).map(|(a, c)| (a - c).abs() as f64).collect()).collect()).collect();
    let space = FiniteSpace::new((0..p).map(|i| i.to_string()).collect(), &d, b.clone()).unwrap();
    let nmap: Vec<usize> = (0..p).map(|x| if x == 0 || rng.gen_bool(0.3) { x } else { rng.gen_range(0..x) }).collect();
    let mut f: Vec<VecN> = vec![vec![]; p];
    for x in 0..p {
        let slack = rng.gen_range(0..3) as f64;
        f[x] = if nmap[x] == x {
            vec![rng.gen_range(0..10) as f64; n]
        } else {
            let bd = b.apply(space.d(nmap[x], x));
            f[nmap[x]].iter().zip(&bd).map(|(a, c)| a + c + slack).collect()
        };
    }
    let x0 = rng.gen_range(0..p);
    CaristiInstance { space, f, nmap, x0 }
}

/// Both Caristi conditions by brute force.
fn caristi_conditions_hold(c: &CaristiInstance) -> bool {
    let (space, f, nmap) = (&c.space, &c.f, &c.nmap);
    let n = space.n();
    (0..space.len()).all(|x| {
        let bd = space.b().apply(space.d(nmap[x], x));
        let cc2 = (0..n).all(|i| bd[i] <= f[x][i] - f[nmap[x]][i]);
        let cc1 = (0..space.len()).all(|y| (0..n).all(|i| space.d(nmap[x], y)[i] <= space.d(x, y)[i] + bd[i]));
        cc1 && cc2
    })
}

fn criterion_9(g: &mut Gate) {
    let (mut attempted, mut correct, mut skipped) = (0, 0, 0);
    let mut problems = Vec::new();
    let mut seed = 0u64;
    while attempted < 100 {
        let inst = caristi_instance(seed);
        seed += 1;
        if !caristi_conditions_hold(&inst) {
            skipped += 1;
            continue;
        }
        attempted += 1;
        let fixed: Vec<usize> = (0..inst.space.len()).filter(|&x| inst.nmap[x] == x).collect();
        match caristi_solve(&inst.space, &inst.f, &inst.nmap, inst.x0) {
            Ok(r) if fixed.contains(&r.fixed_point) => correct += 1,
            Ok(r) => problems.push(format!("seed {}: {} is not fixed", seed - 1, r.fixed_point)),
            Err(e) => problems.push(format!("seed {}: {e}", seed - 1)),
        }
    }
    g.record(
        "9",
        "Caristi fixed points",
        correct == 100,
        format!(
            "{correct}/{attempted} outputs in the brute-force fixed-point set ({skipped} generated instances failed the conditions){}",
            problems.first().map(|p| format!("; first problem: {p}")).unwrap_or_default()
        ),
    );
}

fn criterion_10(g: &mut Gate) {
    let mut details = Vec::new();
    let mut all = true;
    for b in [1.0, 2.0] {
        let (mut runs, mut ok_runs) = (0, 0);
        for seed in 0..50u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut pts: Vec<i64> = (0..rng.gen_range(2..=40)).map(|_| rng.gen_range(-30..=30)).collect();
            pts.sort();
            pts.dedup();
            let rho = |u: i64, v: i64| {
                let a = (u - v).abs() as f64;
                if b == 1.0 {
                    a
                } else {
                    a * a
                }
            };
            let d: Vec<Vec<VecN>> = pts.iter().map(|&u| pts.iter().map(|&v| vec![rho(u, v)]).collect()).collect();
            let space = FiniteSpace::new(pts.iter().map(|p| p.to_string()).collect(), &d, Mat::scalar(1, b)).unwrap();
            let f: Vec<VecN> = pts.iter().map(|_| vec![rng.gen_range(0..100) as f64]).collect();
            runs += 1;
            let Ok(t) = ekeland_weak(&space, &f, rng.gen_range(0..pts.len()), &EpsSchedule::default()) else {
                continue;
            };
            let s = t.x_star;
            let fv = |x: usize| f[x][0];
            let rho_i = |x: usize, y: usize| rho(pts[x], pts[y]);
            let reduction = (0..pts.len())
                .filter(|&x| x != s)
                .all(|x| t.xs.iter().any(|&xk| fv(s) < fv(x) + b * rho_i(s, x) + (b - 1.0) * rho_i(s, xk)));
            let classical = b != 1.0
                || ((0..pts.len()).filter(|&x| x != s).all(|x| fv(s) < fv(x) + rho_i(s, x))
                    && classical_strict_failures(&space, &f, s).unwrap().is_empty());
            ok_runs += (reduction && classical) as usize;
        }
        all &= ok_runs == runs;
        details.push(format!("b = {b}: {ok_runs}/{runs} runs with a witness for every x != x*"));
    }
    details.push("classical strict inequality checked at b = 1".into());
    g.record("10", "scalar reduction", all, details.join("; "));
}

fn criterion_11(g: &mut Gate) {
    let bin = vbm_validation::vbm_binary();
    let dir = vbm_validation::cli_examples();
    let runs: [(&str, &str, Option<&str>); 16] = [
        ("check-matrix", "matrix_example1.json", None),
        ("check-matrix", "matrix_convergent.json", None),
        ("verify-metric", "metric_example1.json", None),
        ("verify-metric", "metric_example2.json", None),
        ("solve", "affine_perov.json", None),
        ("solve", "example1_halving.json", None),
        ("solve", "translation.json", None),
        ("solve", "graph_square.json", Some("graph")),
        ("solve", "maia.json", Some("maia")),
        ("solve", "avramescu_zero.json", Some("avramescu")),
        ("solve", "avramescu_const.json", Some("avramescu")),
        ("stability", "ostrowski.json", Some("rz")),
        ("stability", "ostrowski.json", Some("ostrowski")),
        ("ekeland", "evp_squares.json", None),
        ("ekeland", "evp_strong.json", Some("strong")),
        ("ekeland", "caristi.json", Some("caristi")),
    ];
    let mut invocations = 0;
    let mut differing = Vec::new();
    for (cmd, file, mode) in runs {
        for seed in ["0", "42"] {
            for format in ["json", "text"] {
                let path = dir.join(file);
                let mut args = vec![cmd, "--input", path.to_str().unwrap(), "--seed", seed, "--format", format];
                if let Some(m) = mode {
                    args.extend(["--mode", m]);
                }
                let a = Command::new(&bin).args(&args).output().expect("vbm runs");
                let b = Command::new(&bin).args(&args).output().expect("vbm runs");
                invocations += 2;
                if a.stdout != b.stdout || a.status.code() != b.status.code() || a.stdout.is_empty() {
                    differing.push(format!("{cmd} {file} seed {seed} {format}"));
                }
            }
        }
    }
    g.record(
        "11",
        "CLI determinism",
        differing.is_empty(),
        format!("{invocations} invocations, {} differing pairs{}", differing.len(), differing.first().map(|d| format!(": {d}")).unwrap_or_default()),
    );
}

fn main() {
    let mut g = Gate { results: Vec::new() };
    criterion_1(&mut g);
    criterion_2(&mut g);
    criterion_3(&mut g);
    criterion_4(&mut g);
    criterion_5(&mut g);
    criterion_6(&mut g);
    criterion_7(&mut g);
    criterion_8(&mut g);
    criterion_9(&mut g);
    criterion_10(&mut g);
    criterion_11(&mut g);
    let failed: Vec<&str> = g.results.iter().filter(|(_, ok)| !ok).map(|(id, _)| *id).collect();
    println!("acceptance: {} of {} criteria pass", g.results.len() - failed.len(), g.results.len());
    if !failed.is_empty() {
        println!("failing: {}", failed.join(", "));
        std::process::exit(1);
    }
}
