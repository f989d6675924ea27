//! Probes of `y ↓ 0` along `z = λ + iy`: convergence/divergence verdicts,
//! rate fits, the compactness witness and Stone-formula density recovery.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_input, Error, Result};
use crate::fit::{fit_line, fit_log_log, LineFit};
use crate::matrix_oracle::{EmbeddingSpec, MatrixModel, OperatorSample, SandwichMatrix};

/// Geometric schedule `y_k = y_max·ratio^k`, stopping at `y_min`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScheduleParams")]
pub struct YSchedule {
    y_max: f64,
    y_min: f64,
    ratio: f64,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct ScheduleParams {
    y_max: f64,
    y_min: f64,
    ratio: f64,
}

impl TryFrom<ScheduleParams> for YSchedule {
    type Error = Error;

    fn try_from(p: ScheduleParams) -> Result<Self> {
        YSchedule::new(p.y_max, p.y_min, p.ratio)
    }
}

impl Default for YSchedule {
    fn default() -> Self {
        YSchedule::new(1e-1, 1e-6, 0.5).expect("default schedule is valid")
    }
}

impl YSchedule {
    pub const MIN_LEN: usize = 8;

    pub fn new(y_max: f64, y_min: f64, ratio: f64) -> Result<Self> {
        if !(y_max.is_finite() && y_min > 0.0 && y_min <= y_max) {
            return Err(invalid_input(format!(
                "schedule needs 0 < y_min ≤ y_max (got {y_min}, {y_max})"
            )));
        }
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(invalid_input(format!(
                "schedule ratio {ratio} must lie in (0, 1)"
            )));
        }
        // slack so that e.g. 1e-1·(1/10)^5 still counts as reaching 1e-6
        let floor = y_min * (1.0 - 1e-9);
        let mut values = Vec::new();
        let mut k = 0;
        loop {
            let y = y_max * ratio.powi(k);
            if y < floor {
                break;
            }
            values.push(y);
            k += 1;
        }
        if values.len() < Self::MIN_LEN {
            return Err(invalid_input(format!(
                "schedule has {} values, need at least {}",
                values.len(),
                Self::MIN_LEN
            )));
        }
        Ok(Self {
            y_max,
            y_min,
            ratio,
            values,
        })
    }

    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn y_min(&self) -> f64 {
        self.y_min
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// What an evaluator returns at one `z`.
#[derive(Clone, Debug, PartialEq)]
pub enum Sample {
    Scalar(Complex64),
    Matrix(SandwichMatrix),
}

impl From<Complex64> for Sample {
    fn from(v: Complex64) -> Self {
        Sample::Scalar(v)
    }
}

impl From<OperatorSample> for Sample {
    fn from(s: OperatorSample) -> Self {
        Sample::Matrix(s.t)
    }
}

impl Sample {
    /// `|v|` or the operator norm.
    pub fn magnitude(&self) -> f64 {
        match self {
            Sample::Scalar(v) => v.norm(),
            Sample::Matrix(t) => t.norm(),
        }
    }

    fn distance(&self, other: &Sample) -> Result<f64> {
        match (self, other) {
            (Sample::Scalar(a), Sample::Scalar(b)) => Ok((a - b).norm()),
            (Sample::Matrix(a), Sample::Matrix(b)) if a.dim() == b.dim() => Ok(a.sub(b).norm()),
            _ => Err(invalid_input("evaluator mixed sample kinds or dimensions")),
        }
    }

    fn source(&self) -> SampleSource {
        match self {
            Sample::Scalar(_) => SampleSource::Scalar,
            Sample::Matrix(_) => SampleSource::Matrix,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleSource {
    Scalar,
    Matrix,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Converges,
    Diverges,
    Inconclusive,
}

/// One row of a probe curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbePoint {
    pub y: f64,
    /// Present for scalar evaluators.
    pub value: Option<Complex64>,
    pub norm: f64,
    /// Distance to the previous sample; absent on the first row.
    pub diff: Option<f64>,
    pub source: SampleSource,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitReport {
    pub lambda: f64,
    pub schedule: YSchedule,
    pub tolerance: f64,
    pub samples: Vec<ProbePoint>,
    pub verdict: Verdict,
    /// Slope of log(norm) against log(y) for a divergent probe, of
    /// log(diff) against log(y) otherwise. Absent when no fit is possible.
    pub fitted_rate: Option<f64>,
    pub rate_residual: Option<f64>,
    /// Scalar limit, for scalar evaluators that converge.
    pub limit_estimate: Option<Complex64>,
    /// Norm of the limiting operator (or `|limit|`) when the probe converges.
    pub limit_norm: Option<f64>,
    /// Whether the Richardson step was applied to the final sample.
    pub refined: bool,
}

impl LimitReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| invalid_input(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| invalid_input(e.to_string()))
    }

    /// One row per `y_k`: `y,re,im,norm,diff`. Matrix samples leave `re,im`
    /// empty; the first row has no `diff`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("# lap probe-limit curve v1\ny,re,im,norm,diff\n");
        for p in &self.samples {
            let (re, im) = match p.value {
                Some(v) => (sci(v.re), sci(v.im)),
                None => (String::new(), String::new()),
            };
            let diff = p.diff.map(sci).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                sci(p.y),
                re,
                im,
                sci(p.norm),
                diff
            ));
        }
        out
    }
}

/// 17 significant digits in scientific notation.
pub fn sci(v: f64) -> String {
    format!("{v:.16e}")
}

/// Slack on the monotonicity of successive differences, relative to the
/// tolerance; absorbs round-off in samples that have already settled.
const MONOTONE_SLACK: f64 = 1e-3;
const DIVERGENCE_SLOPE: f64 = -0.5;
const DIVERGENCE_RESIDUAL: f64 = 0.1;
const RICHARDSON_RESIDUAL: f64 = 0.05;

/// Evaluates `evaluator(λ + iy_k)` over the schedule and classifies the
/// behaviour as `y ↓ 0`.
///
/// Divergence is tested first: nondecreasing norms whose log-log slope is
/// at most −1/2 with residual below 0.1. Otherwise the probe converges when
/// successive differences are nonincreasing and the last one is below
/// `tolerance`. A converged estimate gets one Richardson step
/// `v_K + (v_K − v_{K−1})·r^p/(1 − r^p)` when the difference rate `p` is
/// positive and fitted with residual below 0.05.
pub fn limit_probe<F, S>(
    evaluator: F,
    lambda: f64,
    schedule: &YSchedule,
    tolerance: f64,
) -> Result<LimitReport>
where
    F: Fn(Complex64) -> Result<S> + Sync,
    S: Into<Sample>,
{
    if !(tolerance > 0.0 && tolerance.is_finite()) {
        return Err(invalid_input(format!(
            "tolerance {tolerance} must be positive"
        )));
    }
    let ys = schedule.values();
    let evaluated: Vec<Result<Sample>> = ys
        .par_iter()
        .map(|&y| {
            evaluator(Complex64::new(lambda, y))
                .map(Into::into)
                .map_err(|e| Error::EvaluatorFailure {
                    y,
                    source: Box::new(e),
                })
        })
        .collect();
    let samples = evaluated.into_iter().collect::<Result<Vec<Sample>>>()?;

    let diffs = samples
        .windows(2)
        .map(|w| w[1].distance(&w[0]))
        .collect::<Result<Vec<f64>>>()?;
    let norms: Vec<f64> = samples.iter().map(Sample::magnitude).collect();

    let points: Vec<ProbePoint> = samples
        .iter()
        .enumerate()
        .map(|(k, s)| ProbePoint {
            y: ys[k],
            value: match s {
                Sample::Scalar(v) => Some(*v),
                Sample::Matrix(_) => None,
            },
            norm: norms[k],
            diff: k.checked_sub(1).map(|j| diffs[j]),
            source: s.source(),
        })
        .collect();

    let mut report = LimitReport {
        lambda,
        schedule: schedule.clone(),
        tolerance,
        samples: points,
        verdict: Verdict::Inconclusive,
        fitted_rate: None,
        rate_residual: None,
        limit_estimate: None,
        limit_norm: None,
        refined: false,
    };

    let norm_fit = fit_log_log(ys, &norms).ok();
    let increasing = norms.windows(2).all(|w| w[1] >= w[0]);
    if let Some(fit) = norm_fit {
        if increasing && fit.slope <= DIVERGENCE_SLOPE && fit.residual < DIVERGENCE_RESIDUAL {
            report.verdict = Verdict::Diverges;
            report.fitted_rate = Some(fit.slope);
            report.rate_residual = Some(fit.residual);
            return Ok(report);
        }
    }

    let diff_fit = difference_rate(&ys[1..], &diffs);
    if let Some(fit) = diff_fit {
        report.fitted_rate = Some(fit.slope);
        report.rate_residual = Some(fit.residual);
    }

    let slack = MONOTONE_SLACK * tolerance;
    let settling = diffs.windows(2).all(|w| w[1] <= w[0] + slack);
    let last_diff = *diffs.last().expect("schedule has at least 8 values");
    if !(settling && last_diff < tolerance) {
        return Ok(report);
    }
    report.verdict = Verdict::Converges;

    let k = samples.len() - 1;
    let last = &samples[k];
    let prev = &samples[k - 1];
    let factor = match diff_fit {
        Some(fit) if fit.slope > 0.0 && fit.residual < RICHARDSON_RESIDUAL => {
            let rp = (ys[k] / ys[k - 1]).powf(fit.slope);
            Some(rp / (1.0 - rp))
        }
        _ => None,
    };
    report.refined = factor.is_some();
    let c = factor.unwrap_or(0.0);
    match (last, prev) {
        (Sample::Scalar(v), Sample::Scalar(u)) => {
            let l = v + (v - u) * c;
            report.limit_estimate = Some(l);
            report.limit_norm = Some(l.norm());
        }
        (Sample::Matrix(v), Sample::Matrix(u)) => {
            let l = v.add(&v.sub(u).scale(Complex64::new(c, 0.0)));
            report.limit_norm = Some(l.norm());
        }
        _ => unreachable!("sample kinds were checked when differencing"),
    }
    Ok(report)
}

/// Log-log fit of the strictly positive successive differences; `None` when
/// fewer than three are available.
fn difference_rate(ys: &[f64], diffs: &[f64]) -> Option<LineFit> {
    let (x, d): (Vec<f64>, Vec<f64>) = ys
        .iter()
        .zip(diffs)
        .filter(|(_, d)| **d > 0.0 && d.is_finite())
        .map(|(y, d)| (*y, *d))
        .unzip();
    if x.len() < 3 {
        return None;
    }
    fit_log_log(&x, &d).ok()
}

/// Slope and residual of `log(norm)` against `log(y)`.
pub fn fit_divergence_rate(norms: &[f64], ys: &[f64]) -> Result<LineFit> {
    if norms.len() != ys.len() {
        return Err(invalid_input(format!(
            "{} norms but {} abscissae",
            norms.len(),
            ys.len()
        )));
    }
    if norms.len() < 4 {
        return Err(invalid_input("need at least four samples"));
    }
    if norms.iter().all(|v| *v == norms[0]) {
        return Err(Error::DegenerateFit("all norms are equal".into()));
    }
    fit_log_log(ys, norms)
}

/// Fits `|v(y) − limit|` against `y` on a log-log scale.
pub fn convergence_rate(values: &[Complex64], limit: Complex64, ys: &[f64]) -> Result<LineFit> {
    let gaps: Vec<f64> = values.iter().map(|v| (v - limit).norm()).collect();
    fit_log_log(ys, &gaps)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompactnessReport {
    pub s: f64,
    /// Singular values of the model's `F(1 + |H|)^{−s}`, descending.
    pub singular_values: Vec<f64>,
    pub radii: Vec<f64>,
    /// `max |g(x_i)|` over nodes with `|x_i| > R`, for `g = w·(1 + |x|)^{−s}`.
    pub sup_bounds: Vec<f64>,
}

impl CompactnessReport {
    pub fn singular_values_csv(&self) -> String {
        let mut out = String::from("# lap compactness singular values v1\nindex,sigma\n");
        for (k, s) in self.singular_values.iter().enumerate() {
            out.push_str(&format!("{},{}\n", k, sci(*s)));
        }
        out
    }

    pub fn sup_bounds_csv(&self) -> String {
        let mut out = String::from("# lap compactness sup bounds v1\nradius,sup_bound\n");
        for (r, b) in self.radii.iter().zip(&self.sup_bounds) {
            out.push_str(&format!("{},{}\n", sci(*r), sci(*b)));
        }
        out
    }
}

/// Finite witness that `F(1 + |H|)^{−s}` is compact for `s > 1/2`: its
/// singular values, and how fast truncating `g` at radius `R` converges.
pub fn compactness_probe(
    model: &MatrixModel,
    s: f64,
    truncation_radii: &[f64],
) -> Result<CompactnessReport> {
    if !(s > 0.5) {
        return Err(Error::InvalidExponent { s });
    }
    if truncation_radii
        .iter()
        .any(|r| !(*r > 0.0 && r.is_finite()))
        || truncation_radii.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(invalid_input(
            "truncation radii must be positive and increasing",
        ));
    }
    let g: Vec<f64> = model
        .nodes()
        .iter()
        .zip(model.weights())
        .map(|(x, w)| w * (1.0 + x.abs()).powf(-s))
        .collect();
    let diag: Vec<f64> = g
        .iter()
        .zip(model.masses())
        .map(|(g, m)| g * m.sqrt())
        .collect();

    let mut singular_values = if model.embedding() == EmbeddingSpec::Identity {
        diag.iter().map(|d| d.abs()).collect::<Vec<f64>>()
    } else {
        // σ(J·D) = √eig(J·D²·Jᵀ)
        let mut jd = model.embedding_matrix();
        for (mut col, d) in jd.column_iter_mut().zip(&diag) {
            col *= *d;
        }
        let gram: DMatrix<f64> = &jd * jd.transpose();
        SymmetricEigen::new(gram)
            .eigenvalues
            .iter()
            .map(|v| v.max(0.0).sqrt())
            .collect()
    };
    singular_values.sort_by(|a, b| b.total_cmp(a));

    let sup_bounds = truncation_radii
        .iter()
        .map(|r| {
            model
                .nodes()
                .iter()
                .zip(&g)
                .filter(|(x, _)| x.abs() > *r)
                .map(|(_, g)| g.abs())
                .fold(0.0, f64::max)
        })
        .collect();

    Ok(CompactnessReport {
        s,
        singular_values,
        radii: truncation_radii.to_vec(),
        sup_bounds,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoneDensity {
    pub ys: Vec<f64>,
    /// `Im C(λ + iy_k)/π`.
    pub density_estimates: Vec<f64>,
    /// Intercept at `y = 0` of a straight-line fit in `y` over the smallest
    /// [`STONE_FIT_POINTS`] values of the schedule.
    pub extrapolated: f64,
}

pub const STONE_FIT_POINTS: usize = 6;

/// Recovers the weighted density at `λ` from `Im C(λ + iy)/π`.
pub fn stone_density<F>(evaluator: F, lambda: f64, schedule: &YSchedule) -> Result<StoneDensity>
where
    F: Fn(Complex64) -> Result<Complex64> + Sync,
{
    let ys = schedule.values();
    let density_estimates = ys
        .par_iter()
        .map(|&y| {
            evaluator(Complex64::new(lambda, y))
                .map(|v| v.im / std::f64::consts::PI)
                .map_err(|e| Error::EvaluatorFailure {
                    y,
                    source: Box::new(e),
                })
        })
        .collect::<Vec<Result<f64>>>()
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
    let tail = ys.len() - STONE_FIT_POINTS.min(ys.len());
    let fit = fit_line(&ys[tail..], &density_estimates[tail..])?;
    Ok(StoneDensity {
        ys: ys.to_vec(),
        density_estimates,
        extrapolated: fit.intercept,
    })
}
