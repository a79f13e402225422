use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Value};
use vbm_core::evp::{self, EkelandTrace, EvpError, FiniteSpace};
use vbm_core::expr::{self, Env};
use vbm_core::matops::{self, MatError, DEFAULT_TOL};
use vbm_core::metric::{self, MetricError, TRIPLE_CAP};
use vbm_core::solver::{self, AvramescuProblem, ContractionProblem, ExprMap, FixedPointResult, SolverError};

use crate::input::{self, EkelandFile, MatrixFile, MetricFile, ProblemFile};
use crate::{Cli, CliError, Outcome, EXIT_EVP_HYPOTHESIS, EXIT_HYPOTHESIS, EXIT_INPUT, EXIT_INTERNAL, EXIT_NO_CONVERGENCE, EXIT_OK};

const DEFAULT_MONOTONE_SAMPLES: usize = 1000;
const DEFAULT_METRIC_SAMPLES: usize = 200;
const DEFAULT_SUBORDINATION_SAMPLES: usize = 50;
const DEFAULT_CONTINUITY_PAIRS: usize = 1000;
const DEFAULT_BOX: [f64; 2] = [-10.0, 10.0];

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report serializes")
}

fn ok(mode: Option<&str>, tol: Value, result: Value, summary: Vec<String>) -> Outcome {
    Outcome { mode: mode.map(str::to_string), status: "ok", code: EXIT_OK, tol, result, summary }
}

fn mat_error(e: MatError) -> CliError {
    match e {
        MatError::NotConvergent { .. } => CliError::new(EXIT_HYPOTHESIS, "not_convergent", e.to_string()),
        MatError::Inconsistent(_) => CliError::new(EXIT_INTERNAL, "internal_error", e.to_string()),
        _ => CliError::new(EXIT_INPUT, "matrix_error", e.to_string()),
    }
}

fn metric_error(e: MetricError) -> CliError {
    match e {
        MetricError::Mat(m) => mat_error(m),
        MetricError::Eval { .. } => CliError::new(EXIT_INPUT, "eval_error", e.to_string()),
        _ => CliError::new(EXIT_INPUT, "metric_error", e.to_string()),
    }
}

fn solver_error(e: SolverError) -> CliError {
    let msg = e.to_string();
    match e {
        SolverError::MaxIterExceeded { iterations, best, residual, reason } => {
            CliError::new(EXIT_NO_CONVERGENCE, "max_iter_exceeded", msg)
                .with_detail(json!({ "iterations": iterations, "best": best, "residual": residual, "reason": reason }))
        }
        SolverError::NoFixedPointFound { y, residual } => {
            CliError::new(EXIT_NO_CONVERGENCE, "no_fixed_point_found", msg).with_detail(json!({ "y": y, "residual": residual }))
        }
        SolverError::ContractionViolated { k, lhs, rhs } => {
            CliError::new(EXIT_HYPOTHESIS, "contraction_violated", msg).with_detail(json!({ "k": k, "lhs": lhs, "rhs": rhs }))
        }
        SolverError::GraphConditionViolated { point, lhs, rhs, on_orbit } => CliError::new(EXIT_HYPOTHESIS, "graph_condition_violated", msg)
            .with_detail(json!({ "point": point, "lhs": lhs, "rhs": rhs, "on_orbit": on_orbit })),
        SolverError::SubordinationViolated { u, v, lhs, rhs } => CliError::new(EXIT_HYPOTHESIS, "subordination_violated", msg)
            .with_detail(json!({ "u": u, "v": v, "lhs": lhs, "rhs": rhs })),
        SolverError::LipschitzViolated { y, lhs, rhs } => {
            CliError::new(EXIT_HYPOTHESIS, "lipschitz_violated", msg).with_detail(json!({ "y": y, "lhs": lhs, "rhs": rhs }))
        }
        SolverError::CertificationFailed { .. } => CliError::new(EXIT_HYPOTHESIS, "certification_failed", msg),
        SolverError::BClassUnsupported => CliError::new(EXIT_HYPOTHESIS, "b_class_unsupported", msg),
        SolverError::Mat(m) => mat_error(m),
        SolverError::Metric(m) => metric_error(m),
        SolverError::Eval(_) => CliError::new(EXIT_INPUT, "eval_error", msg),
        SolverError::Syntax { .. } => CliError::new(EXIT_INPUT, "syntax_error", msg),
        SolverError::InvalidProblem(_) => CliError::new(EXIT_INPUT, "invalid_problem", msg),
        SolverError::DimensionUnsupported(_) => CliError::new(EXIT_INPUT, "dimension_unsupported", msg),
    }
}

fn evp_error(e: EvpError) -> CliError {
    let msg = e.to_string();
    match e {
        EvpError::ConditionHFailed { k, eps, set } => CliError::new(EXIT_EVP_HYPOTHESIS, "condition_h_failed", msg)
            .with_detail(json!({ "k": k, "eps": eps, "set": set })),
        EvpError::PreconditionCiFailed { x } => {
            CliError::new(EXIT_EVP_HYPOTHESIS, "precondition_ci_failed", msg).with_detail(json!({ "x": x }))
        }
        EvpError::Cc1Violated { x, y } => CliError::new(EXIT_EVP_HYPOTHESIS, "cc1_violated", msg).with_detail(json!({ "x": x, "y": y })),
        EvpError::Cc2Violated { x } => CliError::new(EXIT_EVP_HYPOTHESIS, "cc2_violated", msg).with_detail(json!({ "x": x })),
        EvpError::TriangleViolated { i, j, k, lhs, rhs } => CliError::new(EXIT_INPUT, "triangle_violated", msg)
            .with_detail(json!({ "i": i, "j": j, "k": k, "lhs": lhs, "rhs": rhs })),
        EvpError::InvalidSpace(_) | EvpError::InvalidInput(_) => CliError::new(EXIT_INPUT, "invalid_input", msg),
        EvpError::ScheduleExhausted { .. } => CliError::new(EXIT_NO_CONVERGENCE, "schedule_exhausted", msg),
        EvpError::Metric(m) => metric_error(m),
        EvpError::Mat(m) => mat_error(m),
        _ => CliError::new(EXIT_INTERNAL, "internal_error", msg),
    }
}

fn mode_of<'a>(cli: &'a Cli, default: &'a str, allowed: &[&str]) -> Result<&'a str, CliError> {
    let mode = cli.mode.as_deref().unwrap_or(default);
    if allowed.contains(&mode) {
        Ok(mode)
    } else {
        Err(CliError::input(format!("unknown --mode {mode}; expected one of {}", allowed.join(", "))))
    }
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6e}")).collect();
    format!("({})", parts.join(", "))
}

pub fn check_matrix(cli: &Cli, text: &str) -> Result<Outcome, CliError> {
    let m = input::parse::<MatrixFile>(text, "matrix")?.into_matrix()?;
    let tol = cli.tol.unwrap_or(DEFAULT_TOL);
    let report = matops::class_report(&m, tol).map_err(mat_error)?;
    let samples = cli.samples.unwrap_or(DEFAULT_MONOTONE_SAMPLES);
    let monotone = match matops::is_monotone_sampled(&m, samples, cli.seed, tol) {
        Ok(c) => to_value(&c),
        Err(MatError::SamplingExhausted { draws }) => json!({ "inconclusive": true, "draws": draws }),
        Err(e) => return Err(mat_error(e)),
    };
    let summary = vec![
        format!("matrix: {m}"),
        format!("spectral radius: {:.12}", report.spectral_radius_estimate),
        format!("convergent to zero: {}{}", report.convergent_to_zero, if report.marginal { " (marginal)" } else { "" }),
        format!("positive: {}", report.positive),
        format!(
            "inverse-positive: {}{}",
            report.inverse_positive,
            report.inverse.as_ref().map(|i| format!(", inverse {i}")).unwrap_or_default()
        ),
        format!("class: {}", report.b_class),
        match &report.splitting {
            Some(s) => format!("splitting: s = {}, r(M̄) = {:.12}, certified {}", s.s, s.mbar_spectral_radius, s.certified),
            None => "splitting: not a Z-pattern matrix".to_string(),
        },
    ];
    let mut result = to_value(&report);
    result["monotone_sampled"] = monotone;
    Ok(ok(None, json!(tol), result, summary))
}

pub fn verify_metric(cli: &Cli, text: &str) -> Result<Outcome, CliError> {
    let file: MetricFile = input::parse(text, "metric")?;
    input::check_version(file.format_version)?;
    let spec = file.metric;
    let [lo, hi] = file.sample_box.unwrap_or(DEFAULT_BOX);
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(CliError::input("sample_box must be [lo, hi] with lo <= hi"));
    }
    let points = match file.points {
        Some(p) => p,
        None => metric::sample_box(spec.m(), cli.samples.unwrap_or(DEFAULT_METRIC_SAMPLES), lo, hi, cli.seed),
    };
    let tol = cli.tol.unwrap_or(DEFAULT_TOL);
    let report = metric::verify_axioms(&spec, &points, tol, file.max_triples.unwrap_or(TRIPLE_CAP), cli.seed).map_err(metric_error)?;
    let mut summary = vec![
        format!("B = {} ({})", report.b, report.b_class),
        format!(
            "points: {}, triples checked: {} of {}{}",
            report.points,
            report.checked.triangle,
            report.triples_total,
            if report.subsampled { " (subsampled)" } else { "" }
        ),
        format!("violations: {}", report.violation_count),
    ];
    for v in report.violations.iter().take(5) {
        summary.push(format!("  {:?} at {:?}: lhs {} rhs {} margin {:.3e}", v.axiom, v.indices, fmt_vec(&v.lhs), fmt_vec(&v.rhs), v.margin));
    }
    let (status, code) = if report.ok() { ("ok", EXIT_OK) } else { ("violations", EXIT_HYPOTHESIS) };
    Ok(Outcome { mode: None, status, code, tol: json!(tol), result: to_value(&report), summary })
}

fn contraction_problem(file: &ProblemFile, cli: &Cli) -> Result<ContractionProblem, CliError> {
    let map = ExprMap::new(&file.operator, file.x0.len(), 0).map_err(solver_error)?;
    let n = file.metric.n();
    let tol = match cli.tol {
        Some(t) => vec![t; n],
        None => file.tol.expand(n)?,
    };
    Ok(ContractionProblem::new(
        Arc::new(map),
        file.metric.clone(),
        file.a.clone(),
        file.x0.clone(),
        tol,
        file.max_iter.unwrap_or(input::DEFAULT_MAX_ITER),
    ))
}

fn fixed_point_summary(r: &FixedPointResult) -> Vec<String> {
    let mut s = vec![
        format!("x* = {}", fmt_vec(&r.x_star)),
        format!("iterations: {}, stop rule: {:?} in {}", r.iterations, r.stop_rule, r.stopping_metric),
        format!("residual d(x*, N x*) = {}", fmt_vec(&r.residual)),
        format!(
            "certificate: case {}, bound valid {}",
            r.certificate.case.map(|c| c.to_string()).unwrap_or_else(|| "none".into()),
            r.certificate.bound_valid
        ),
    ];
    if let Some(b) = r.certificate.rows.last().and_then(|row| row.bound.as_ref()) {
        s.push(format!("final a-priori bound: {}", fmt_vec(b)));
    }
    s.push(format!("unique: {}", r.unique));
    s
}

pub fn solve(cli: &Cli, text: &str) -> Result<Outcome, CliError> {
    let file: ProblemFile = input::parse(text, "problem")?;
    input::check_version(file.format_version)?;
    let mode = mode_of(cli, "perov", &["perov", "graph", "maia", "avramescu"])?;
    let tol = cli.tol.map_or_else(|| json!(file.tol), |t| json!(t));
    match mode {
        "perov" => {
            let r = solver::perov_solve(&contraction_problem(&file, cli)?).map_err(solver_error)?;
            Ok(ok(Some(mode), json!(tol), to_value(&r), fixed_point_summary(&r)))
        }
        "graph" => {
            let p = contraction_problem(&file, cli)?;
            let r = solver::graph_solve(&p, file.sample.as_deref().unwrap_or(&[])).map_err(solver_error)?;
            let mut s = fixed_point_summary(&r);
            s.push("graph condition verified along the orbit and on the given sample only".into());
            Ok(ok(Some(mode), json!(tol), to_value(&r), s))
        }
        "maia" => {
            let d2 = file.metric2.clone().ok_or_else(|| CliError::input("maia mode needs metric2"))?;
            let c = file.c.clone().ok_or_else(|| CliError::input("maia mode needs C"))?;
            let p = contraction_problem(&file, cli)?;
            let sample = match &file.sample {
                Some(s) => s.clone(),
                None => {
                    let [lo, hi] = DEFAULT_BOX;
                    metric::sample_box(file.metric.m(), cli.samples.unwrap_or(DEFAULT_SUBORDINATION_SAMPLES), lo, hi, cli.seed)
                }
            };
            let r = solver::maia_solve(p.map, &file.metric, &d2, &c, &p.a, p.x0, p.tol, p.max_iter, &sample).map_err(solver_error)?;
            let mut s = fixed_point_summary(&r);
            if let Some(d1) = &r.d1_residual {
                s.push(format!("residual in d1: {}", fmt_vec(d1)));
            }
            Ok(ok(Some(mode), json!(tol), to_value(&r), s))
        }
        _ => {
            let op2 = file.operator2.as_ref().ok_or_else(|| CliError::input("avramescu mode needs operator2"))?;
            let dbox = file.dbox.as_ref().ok_or_else(|| CliError::input("avramescu mode needs Dbox"))?;
            let (mx, my) = (file.x0.len(), dbox.len());
            let q = AvramescuProblem {
                n1: Arc::new(ExprMap::new(&file.operator, mx, my).map_err(solver_error)?),
                n2: Arc::new(ExprMap::new(op2, mx, my).map_err(solver_error)?),
                metric: file.metric.clone(),
                a: file.a.clone(),
                dbox: dbox.iter().map(|[lo, hi]| (*lo, *hi)).collect(),
                x0: file.x0.clone(),
                tol: cli.tol.unwrap_or_else(|| file.tol.min()),
                max_iter: file.max_iter.unwrap_or(input::DEFAULT_MAX_ITER),
                grid: file.grid.unwrap_or(input::DEFAULT_GRID),
                refine_iters: file.refine_iters.unwrap_or(input::DEFAULT_REFINE_ITERS),
                continuity_pairs: cli.samples.or(file.continuity_pairs).unwrap_or(DEFAULT_CONTINUITY_PAIRS),
                seed: cli.seed,
            };
            let r = solver::avramescu_solve(&q).map_err(solver_error)?;
            let s = vec![
                format!("x* = {}, y* = {}", fmt_vec(&r.x_star), fmt_vec(&r.y_star)),
                format!("residuals: x {:.3e}, y {:.3e}", r.residual_x, r.residual_y),
                format!("grid points: {}, refinement steps: {}", r.grid_points, r.refine_steps),
                format!(
                    "continuity bound (case {}): {} of {} pairs violate, holds {}",
                    r.continuity.case, r.continuity.violations, r.continuity.pairs, r.continuity.holds
                ),
            ];
            Ok(ok(Some(mode), json!(tol), to_value(&r), s))
        }
    }
}

pub fn stability(cli: &Cli, text: &str) -> Result<Outcome, CliError> {
    let file: ProblemFile = input::parse(text, "problem")?;
    input::check_version(file.format_version)?;
    let mode = mode_of(cli, "rz", &["rz", "ostrowski"])?;
    let tol = cli.tol.map_or_else(|| json!(file.tol), |t| json!(t));
    let p = contraction_problem(&file, cli)?;
    if mode == "rz" {
        let seq = match &file.sequence {
            Some(s) => s.clone(),
            None => solver::picard_orbit(p.map.as_ref(), &p.x0, file.orbit_len.unwrap_or(input::DEFAULT_ORBIT_LEN)).map_err(solver_error)?,
        };
        let r = solver::rz_stability_check(&p, &seq).map_err(solver_error)?;
        let mut s = vec![
            format!("case {}: Φ = {}", r.case, r.matrix),
            format!("x* = {}", fmt_vec(&r.x_star)),
            format!("bound holds at every k: {}", r.bound_holds),
            format!("residual vanishing: {}, convergence confirmed: {}", r.residual_vanishing, r.convergence_confirmed),
        ];
        s.extend(r.note.clone());
        return Ok(ok(Some(mode), json!(tol), to_value(&r), s));
    }
    let schedule = match (&file.perturbations, &file.schedule) {
        (Some(list), None) => list.clone(),
        (None, Some(spec)) => spec.expand(p.metric.m()),
        (None, None) => return Err(CliError::input("ostrowski mode needs perturbations or schedule")),
        (Some(_), Some(_)) => return Err(CliError::input("give either perturbations or schedule, not both")),
    };
    let r = solver::ostrowski_run(&p, &schedule).map_err(solver_error)?;
    let last = r.rows.last().expect("row for k = 0");
    let mut s = vec![
        format!("case {}{}", r.case, r.b_tilde.map(|b| format!(", b̃ = {b}")).unwrap_or_default()),
        format!("x* = {}", fmt_vec(&r.x_star)),
        format!("steps: {}, final error {}, final majorant {}", last.k, fmt_vec(&last.distance), fmt_vec(&last.bound)),
        format!("majorant dominates at every k: {}", r.majorant_dominates),
        format!("schedule vanishing: {}, error converges: {}", r.schedule_vanishing, r.error_converges),
        format!("limit bound: {}", fmt_vec(&r.limit_bound)),
    ];
    s.extend(r.note.clone());
    Ok(ok(Some(mode), json!(tol), to_value(&r), s))
}

fn finite_space(file: &EkelandFile) -> Result<(FiniteSpace, Vec<Vec<f64>>), CliError> {
    let space = match (&file.space, &file.metric, &file.points) {
        (Some(s), None, None) => s.clone(),
        (None, Some(m), Some(p)) => FiniteSpace::from_metric(m, p, file.labels.clone()).map_err(evp_error)?,
        _ => return Err(CliError::input("give either space or metric with points")),
    };
    let f = match (&file.f, &file.f_expr) {
        (Some(t), None) => t.clone(),
        (None, Some(exprs)) => {
            let points = file.points.as_ref().ok_or_else(|| CliError::input("f_expr needs points"))?;
            let parsed = expr::parse_all(exprs).map_err(|(i, e)| CliError::new(EXIT_INPUT, "syntax_error", format!("f component {i}: {e}")))?;
            points
                .iter()
                .map(|x| expr::eval_all(&parsed, &Env::x(x)))
                .collect::<Result<_, _>>()
                .map_err(|e| CliError::new(EXIT_INPUT, "eval_error", format!("f: {e}")))?
        }
        _ => return Err(CliError::input("give exactly one of f or f_expr")),
    };
    Ok((space, f))
}

fn trace_summary(t: &EkelandTrace, space: &FiniteSpace) -> Vec<String> {
    let label = |i: usize| space.labels()[i].clone();
    let mut s = vec![format!("x* = {} (index {})", label(t.x_star), t.x_star)];
    for (k, set) in t.sets.iter().enumerate() {
        let members: Vec<String> = set.iter().map(|&i| label(i)).collect();
        let eps = if k == 0 { String::new() } else { format!(", eps {}", t.eps[k - 1]) };
        s.push(format!("k = {k}: x_k = {}{eps}, F = {{{}}}", label(t.xs[k]), members.join(", ")));
    }
    let c = &t.conclusions;
    s.push(format!("c1 {}, c2 {} ({} witnesses), c3 {} ({} witnesses)", c.c1, c.c2, c.c2_witnesses.len(), c.c3, c.c3_witnesses.len()));
    s
}

pub fn ekeland(cli: &Cli, text: &str) -> Result<Outcome, CliError> {
    let file: EkelandFile = input::parse(text, "ekeland")?;
    input::check_version(file.format_version)?;
    let mode = mode_of(cli, "weak", &["weak", "strong", "caristi"])?;
    let (space, f) = finite_space(&file)?;
    let schedule = file.eps_schedule.clone().unwrap_or_default();
    let with_labels = |mut v: Value, x_star: usize| {
        v["x_star_label"] = json!(space.labels()[x_star]);
        v
    };
    match mode {
        "weak" => {
            let t = evp::ekeland_weak(&space, &f, file.x0, &schedule).map_err(evp_error)?;
            Ok(ok(Some(mode), Value::Null, with_labels(to_value(&t), t.x_star), trace_summary(&t, &space)))
        }
        "strong" => {
            let eps = file.eps.ok_or_else(|| CliError::input("strong mode needs eps"))?;
            let delta = file.delta.ok_or_else(|| CliError::input("strong mode needs delta"))?;
            let r = evp::ekeland_strong(&space, &f, file.x0, eps, delta, &schedule).map_err(evp_error)?;
            let mut s = trace_summary(&r.trace, &space);
            s.push(format!("s1 {}, s2 {} (eps {eps}, delta {delta})", r.s1, r.s2));
            Ok(ok(Some(mode), Value::Null, with_labels(to_value(&r), r.trace.x_star), s))
        }
        _ => {
            let nmap = file.nmap.as_ref().ok_or_else(|| CliError::input("caristi mode needs N"))?;
            let r = evp::caristi_solve(&space, &f, nmap, file.x0).map_err(evp_error)?;
            let mut s = trace_summary(&r.trace, &space);
            s.push(format!("fixed point {} in the fixed-point set {:?}", space.labels()[r.fixed_point], r.fixed_points));
            Ok(ok(Some(mode), Value::Null, with_labels(to_value(&r), r.fixed_point), s))
        }
    }
}
