//! JSON problem files.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use vbm_core::evp::{EpsSchedule, FiniteSpace};
use vbm_core::matops::Mat;
use vbm_core::metric::MetricSpec;

use crate::CliError;

pub const FORMAT_VERSION: u32 = 1;

pub fn parse<T: DeserializeOwned>(text: &str, what: &str) -> Result<T, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::input(format!("malformed {what} file: {e}")))
}

pub fn check_version(v: Option<u32>) -> Result<(), CliError> {
    match v {
        None | Some(FORMAT_VERSION) => Ok(()),
        Some(other) => Err(CliError::input(format!("unsupported format_version {other}; expected {FORMAT_VERSION}"))),
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum MatrixFile {
    Bare(Mat),
    Wrapped { format_version: Option<u32>, matrix: Mat },
}

impl MatrixFile {
    pub fn into_matrix(self) -> Result<Mat, CliError> {
        match self {
            MatrixFile::Bare(m) => Ok(m),
            MatrixFile::Wrapped { format_version, matrix } => {
                check_version(format_version)?;
                Ok(matrix)
            }
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricFile {
    pub format_version: Option<u32>,
    pub metric: MetricSpec,
    /// Explicit sample; generated from `sample_box` when absent.
    pub points: Option<Vec<Vec<f64>>>,
    /// `[lo, hi]` for every coordinate of generated points.
    pub sample_box: Option<[f64; 2]>,
    pub max_triples: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Tol {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Tol {
    pub fn expand(&self, n: usize) -> Result<Vec<f64>, CliError> {
        match self {
            Tol::Scalar(t) => Ok(vec![*t; n]),
            Tol::Vector(v) if v.len() == n => Ok(v.clone()),
            Tol::Vector(v) => Err(CliError::input(format!("tol has {} entries, the metric has {n} components", v.len()))),
        }
    }

    pub fn min(&self) -> f64 {
        match self {
            Tol::Scalar(t) => *t,
            Tol::Vector(v) => v.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }
}

/// Perturbation schedules for the Ostrowski run; each step adds `value · e`.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSpec {
    /// `scale · ratio^k`.
    Geometric { scale: f64, ratio: f64, steps: usize },
    Constant { value: f64, steps: usize },
}

impl ScheduleSpec {
    pub fn expand(&self, m: usize) -> Vec<Vec<f64>> {
        match *self {
            ScheduleSpec::Geometric { scale, ratio, steps } => {
                (0..steps).map(|k| vec![scale * ratio.powi(k as i32); m]).collect()
            }
            ScheduleSpec::Constant { value, steps } => vec![vec![value; m]; steps],
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub format_version: Option<u32>,
    /// `N(x)` in `x1..xm`; for the coupled problem `N1(x, y)` in `x1.., y1..`.
    pub operator: Vec<String>,
    pub metric: MetricSpec,
    #[serde(rename = "A")]
    pub a: Mat,
    pub x0: Vec<f64>,
    pub tol: Tol,
    pub max_iter: Option<usize>,
    /// Points on which hypotheses are spot-checked (graph condition, subordination).
    pub sample: Option<Vec<Vec<f64>>>,
    /// Second metric of the two-metric solve; `metric` is the first.
    pub metric2: Option<MetricSpec>,
    #[serde(rename = "C")]
    pub c: Option<Mat>,
    /// `N2(x, y)` of the coupled problem.
    pub operator2: Option<Vec<String>>,
    #[serde(rename = "Dbox")]
    pub dbox: Option<Vec<[f64; 2]>>,
    pub grid: Option<usize>,
    pub refine_iters: Option<usize>,
    pub continuity_pairs: Option<usize>,
    /// Sequence for the Reich–Zaslavski check; the Picard orbit when absent.
    pub sequence: Option<Vec<Vec<f64>>>,
    pub orbit_len: Option<usize>,
    pub perturbations: Option<Vec<Vec<f64>>>,
    pub schedule: Option<ScheduleSpec>,
}

pub const DEFAULT_MAX_ITER: usize = 10_000;
pub const DEFAULT_ORBIT_LEN: usize = 60;
pub const DEFAULT_GRID: usize = 21;
pub const DEFAULT_REFINE_ITERS: usize = 500;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EkelandFile {
    pub format_version: Option<u32>,
    /// Explicit finite space `{"points", "dist", "B"}`.
    pub space: Option<FiniteSpace>,
    /// Alternatively a metric evaluated on `points`.
    pub metric: Option<MetricSpec>,
    pub points: Option<Vec<Vec<f64>>>,
    pub labels: Option<Vec<String>>,
    /// Per-point value table.
    pub f: Option<Vec<Vec<f64>>>,
    /// One expression per component in `x1..xm`, evaluated at `points`.
    pub f_expr: Option<Vec<String>>,
    #[serde(default)]
    pub x0: usize,
    pub eps_schedule: Option<EpsSchedule>,
    pub eps: Option<f64>,
    pub delta: Option<f64>,
    #[serde(rename = "N")]
    pub nmap: Option<Vec<usize>>,
}
