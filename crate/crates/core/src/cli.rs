//! Config-driven batch commands behind the `lap` binary.
//!
//! Every command reads one TOML [`ExperimentConfig`], computes everything in
//! memory, then writes its outputs into `out_dir` through temp files that are
//! renamed into place. A failing run leaves no output files behind.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cauchy_transform::{evaluate_offaxis, far_bound, near_far_split, plemelj_boundary};
use crate::error::{Error, Result};
use crate::limit_analysis::{
    compactness_probe, limit_probe, sci, stone_density, CompactnessReport, LimitReport,
    StoneDensity, Verdict, YSchedule,
};
use crate::matrix_oracle::{
    discretize, eigen_contribution, regularized_resolvent, sandwiched_resolvent, EmbeddingDim,
    MatrixModel,
};
use crate::spectral_model::{
    estimate_holder, geometric_radii, HolderEstimate, SpectralMeasure, WeightFunction,
};

/// Which object `probe-limit` follows as `y ↓ 0`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvaluatorKind {
    /// The scalar weighted Cauchy transform, by quadrature.
    #[default]
    Transform,
    /// The operator `T_z` of a discretized model.
    Matrix,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HolderTarget {
    #[default]
    Density,
    Weight,
    /// `w²ρ`
    Weighted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HolderSettings {
    #[serde(default)]
    pub target: HolderTarget,
    #[serde(default = "default_r_max")]
    pub r_max: f64,
    #[serde(default = "default_half")]
    pub ratio: f64,
    #[serde(default = "default_count")]
    pub count: usize,
}

impl Default for HolderSettings {
    fn default() -> Self {
        Self {
            target: HolderTarget::default(),
            r_max: default_r_max(),
            ratio: default_half(),
            count: default_count(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSettings {
    /// Heights to compare at; the schedule values when absent.
    #[serde(default)]
    pub ys: Option<Vec<f64>>,
    /// Relative gap allowed between the matrix form and the transform.
    #[serde(default = "default_compare_tol")]
    pub tolerance: f64,
}

impl Default for CompareSettings {
    fn default() -> Self {
        Self {
            ys: None,
            tolerance: default_compare_tol(),
        }
    }
}

/// One experiment. Only `lambda`, `measure` and `weight` are required.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub lambda: f64,
    /// Near-zone radius; enables the near/far diagnostics of `probe-limit`.
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Convergence tolerance of `probe-limit`.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_embedding")]
    pub embedding_dim: EmbeddingDim,
    #[serde(default)]
    pub evaluator: EvaluatorKind,
    /// Project out the atom at `lambda` before probing.
    #[serde(default)]
    pub regularize: bool,
    #[serde(default = "default_s")]
    pub s: f64,
    #[serde(default = "default_radii")]
    pub radii: Vec<f64>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub schedule: YSchedule,
    pub measure: SpectralMeasure,
    pub weight: WeightFunction,
    #[serde(default)]
    pub holder: HolderSettings,
    #[serde(default)]
    pub compare: CompareSettings,
}

fn default_tolerance() -> f64 {
    1e-6
}
fn default_compare_tol() -> f64 {
    1e-3
}
fn default_n() -> usize {
    2000
}
fn default_embedding() -> EmbeddingDim {
    EmbeddingDim::Same
}
fn default_s() -> f64 {
    1.0
}
fn default_radii() -> Vec<f64> {
    vec![0.25, 0.5, 1.0, 2.0, 4.0, 8.0]
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_r_max() -> f64 {
    0.1
}
fn default_half() -> f64 {
    0.5
}
fn default_count() -> usize {
    16
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing {}", path.display()))
    }

    fn model(&self) -> Result<MatrixModel> {
        discretize(
            &self.measure,
            &self.weight,
            self.n,
            self.embedding_dim,
            self.seed,
        )
    }

    fn measure_without_probe_atom(&self) -> Result<SpectralMeasure> {
        SpectralMeasure::new(
            self.measure.ac_parts().to_vec(),
            self.measure
                .atoms()
                .iter()
                .filter(|a| a.location != self.lambda)
                .copied()
                .collect(),
        )
    }

    /// Whether the density (rather than a gap) surrounds `lambda`.
    fn continuum_at_probe(&self) -> bool {
        self.measure
            .ac_parts()
            .iter()
            .any(|p| p.support.lo < self.lambda && self.lambda < p.support.hi)
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "lap",
    version,
    about = "Boundary values of sandwiched resolvents"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `out_dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the tolerance used by the command.
    #[arg(long, global = true)]
    pub tolerance: Option<f64>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Follow T at λ + iy as y ↓ 0 and classify the behaviour.
    ProbeLimit,
    /// Compare the matrix model's quadratic form with the quadrature transform.
    CompareOracle,
    /// Singular values and truncation bounds of F(1 + |H|)^(-s).
    Compactness,
    /// Recover w²ρ at λ from Im C(λ + iy)/π.
    StoneDensity,
    /// Empirical Hölder exponent at λ.
    HolderFit,
}

/// Files produced by a command plus its exit status.
#[derive(Debug)]
pub struct Outcome {
    pub files: Vec<(String, String)>,
    pub exit: u8,
    pub summary: String,
}

#[derive(Serialize)]
struct NearFar {
    epsilon: f64,
    y: f64,
    near: Complex64,
    far: Complex64,
    total: Complex64,
    error_estimate: f64,
    far_bound: f64,
}

#[derive(Serialize)]
struct ProbeOutput<'a> {
    evaluator: EvaluatorKind,
    regularized: bool,
    report: &'a LimitReport,
    /// Boundary value from the principal-value route, for scalar probes.
    plemelj: Option<Complex64>,
    /// `‖FP_λ‖²` when the model stores an atom at `λ`.
    eigen_norm: Option<f64>,
    /// Largest entrywise gap of `T = T^reg + E/(λ − z)` over the schedule,
    /// relative to the largest entry of `T`.
    decomposition_gap: Option<f64>,
    near_far: Option<NearFar>,
}

fn probe_limit(cfg: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let lambda = cfg.lambda;
    let mut eigen_norm = None;
    let mut decomposition_gap = None;
    let mut plemelj = None;

    let report = match cfg.evaluator {
        EvaluatorKind::Transform => {
            let measure = if cfg.regularize {
                cfg.measure_without_probe_atom()?
            } else {
                cfg.measure.clone()
            };
            plemelj = plemelj_boundary(&measure, &cfg.weight, lambda).ok();
            limit_probe(
                |z| evaluate_offaxis(&measure, &cfg.weight, z).map(|t| t.value),
                lambda,
                &cfg.schedule,
                cfg.tolerance,
            )?
        }
        EvaluatorKind::Matrix => {
            let model = cfg.model()?;
            let mut schedule = cfg.schedule.clone();
            if cfg.continuum_at_probe() {
                // below ten grid spacings the finite model looks like point spectrum
                let floor = 10.0 * model.local_spacing(lambda);
                if floor > schedule.y_min() {
                    schedule = YSchedule::new(schedule.y_max(), floor, schedule.ratio())
                        .with_context(|| {
                            format!("n = {} is too coarse: y must stay above {floor:e}", cfg.n)
                        })?;
                }
            }
            if let Ok((e, norm)) = eigen_contribution(&model, lambda) {
                eigen_norm = Some(norm);
                let gaps = schedule
                    .values()
                    .par_iter()
                    .map(|&y| {
                        let z = Complex64::new(lambda, y);
                        let full = sandwiched_resolvent(&model, z)?.t;
                        let reg = regularized_resolvent(&model, z, lambda)?.t;
                        let rebuilt = reg.add(&e.scale(1.0 / (lambda - z)));
                        Ok(full.sub(&rebuilt).max_abs_entry() / full.max_abs_entry())
                    })
                    .collect::<Result<Vec<f64>>>()?;
                decomposition_gap = Some(gaps.into_iter().fold(0.0, f64::max));
            }
            if cfg.regularize {
                limit_probe(
                    |z| regularized_resolvent(&model, z, lambda),
                    lambda,
                    &schedule,
                    cfg.tolerance,
                )?
            } else {
                limit_probe(
                    |z| sandwiched_resolvent(&model, z),
                    lambda,
                    &schedule,
                    cfg.tolerance,
                )?
            }
        }
    };

    let near_far = match cfg.epsilon {
        Some(eps) => {
            let split = near_far_split(&cfg.measure, lambda, eps)?;
            let y = cfg.schedule.y_min();
            let z = Complex64::new(lambda, y);
            let near = evaluate_offaxis(&split.near, &cfg.weight, z)?;
            let far = evaluate_offaxis(&split.far, &cfg.weight, z)?;
            let total = evaluate_offaxis(&cfg.measure, &cfg.weight, z)?;
            Some(NearFar {
                epsilon: eps,
                y,
                near: near.value,
                far: far.value,
                total: total.value,
                error_estimate: near.abs_error_estimate
                    + far.abs_error_estimate
                    + total.abs_error_estimate,
                far_bound: far_bound(&split, &cfg.weight),
            })
        }
        None => None,
    };

    let out = ProbeOutput {
        evaluator: cfg.evaluator,
        regularized: cfg.regularize,
        report: &report,
        plemelj,
        eigen_norm,
        decomposition_gap,
        near_far,
    };
    let exit = if report.verdict == Verdict::Inconclusive {
        2
    } else {
        0
    };
    let summary = format!(
        "verdict {} fitted_rate {}",
        serde_json::to_string(&report.verdict)?.trim_matches('"'),
        report.fitted_rate.map_or("none".to_string(), sci)
    );
    Ok(Outcome {
        files: vec![
            (
                "probe_limit.json".into(),
                serde_json::to_string_pretty(&out)? + "\n",
            ),
            ("probe_limit.csv".into(), report.to_csv()),
        ],
        exit,
        summary,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RowStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Serialize)]
struct CompareRow {
    y: f64,
    form: Complex64,
    transform: Complex64,
    relative_gap: f64,
    status: RowStatus,
}

#[derive(Serialize)]
struct CompareOutput {
    n: usize,
    seed: u64,
    grid_spacing: f64,
    tolerance: f64,
    rows: Vec<CompareRow>,
}

/// `|a − b|/|b|`, with `0/0 = 0`.
fn relative_gap(a: Complex64, b: Complex64) -> f64 {
    let d = (a - b).norm();
    if d == 0.0 {
        0.0
    } else {
        d / b.norm()
    }
}

/// Unimodular test vector `u_i = e^{iθ_i}` with seeded phases. Under the
/// identity embedding `⟨T_z u, u⟩ = Σ w_i²μ_i/(x_i − z)` for any phases.
fn phase_vector(n: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU)))
        .collect()
}

fn compare_oracle(cfg: &ExperimentConfig, tolerance: f64) -> anyhow::Result<Outcome> {
    // the form only reproduces the transform under the identity embedding
    let model = discretize(
        &cfg.measure,
        &cfg.weight,
        cfg.n,
        EmbeddingDim::Same,
        cfg.seed,
    )?;
    let spacing = model.local_spacing(cfg.lambda);
    let u = phase_vector(model.len(), cfg.seed);
    let ys = cfg
        .compare
        .ys
        .clone()
        .unwrap_or_else(|| cfg.schedule.values().to_vec());
    if ys.iter().any(|y| !(*y > 0.0 && y.is_finite())) {
        bail!("compare heights must be positive");
    }
    let rows = ys
        .par_iter()
        .map(|&y| {
            let z = Complex64::new(cfg.lambda, y);
            let form = sandwiched_resolvent(&model, z)?.t.form(&u)?;
            let transform = evaluate_offaxis(&cfg.measure, &cfg.weight, z)?.value;
            let relative_gap = relative_gap(form, transform);
            let status = if y < 10.0 * spacing {
                RowStatus::Skipped
            } else if relative_gap < tolerance {
                RowStatus::Pass
            } else {
                RowStatus::Fail
            };
            Ok(CompareRow {
                y,
                form,
                transform,
                relative_gap,
                status,
            })
        })
        .collect::<Result<Vec<CompareRow>>>()?;

    let failed = rows.iter().filter(|r| r.status == RowStatus::Fail).count();
    let skipped = rows
        .iter()
        .filter(|r| r.status == RowStatus::Skipped)
        .count();
    let mut csv = String::from("# lap compare-oracle table v1\ny,form_re,form_im,transform_re,transform_im,relative_gap,status\n");
    for r in &rows {
        let status = serde_json::to_string(&r.status)?;
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            sci(r.y),
            sci(r.form.re),
            sci(r.form.im),
            sci(r.transform.re),
            sci(r.transform.im),
            sci(r.relative_gap),
            status.trim_matches('"')
        ));
    }
    let out = CompareOutput {
        n: model.len(),
        seed: cfg.seed,
        grid_spacing: spacing,
        tolerance,
        rows,
    };
    Ok(Outcome {
        files: vec![
            (
                "compare_oracle.json".into(),
                serde_json::to_string_pretty(&out)? + "\n",
            ),
            ("compare_oracle.csv".into(), csv),
        ],
        exit: if failed == 0 { 0 } else { 1 },
        summary: format!("{failed} failed, {skipped} skipped of {}", out.rows.len()),
    })
}

fn compactness(cfg: &ExperimentConfig) -> anyhow::Result<Outcome> {
    if !(cfg.s > 0.5) {
        return Err(Error::InvalidExponent { s: cfg.s }.into());
    }
    let model = cfg.model()?;
    let report: CompactnessReport = compactness_probe(&model, cfg.s, &cfg.radii)?;
    Ok(Outcome {
        files: vec![
            (
                "compactness.json".into(),
                serde_json::to_string_pretty(&report)? + "\n",
            ),
            (
                "compactness_singular_values.csv".into(),
                report.singular_values_csv(),
            ),
            ("compactness_sup_bounds.csv".into(), report.sup_bounds_csv()),
        ],
        exit: 0,
        summary: format!(
            "{} singular values, largest {}",
            report.singular_values.len(),
            report
                .singular_values
                .first()
                .copied()
                .map_or("none".into(), sci)
        ),
    })
}

#[derive(Serialize)]
struct StoneOutput<'a> {
    lambda: f64,
    stone: &'a StoneDensity,
    /// `w(λ)²ρ(λ)` from the catalog formulas.
    reference: f64,
}

fn stone(cfg: &ExperimentConfig) -> anyhow::Result<Outcome> {
    if cfg.measure.atom_at(cfg.lambda).is_some() {
        return Err(Error::AtomAtProbe { lambda: cfg.lambda }.into());
    }
    let s = stone_density(
        |z| evaluate_offaxis(&cfg.measure, &cfg.weight, z).map(|t| t.value),
        cfg.lambda,
        &cfg.schedule,
    )?;
    let w = cfg.weight.value(cfg.lambda);
    let reference = w * w * cfg.measure.density(cfg.lambda);
    let mut csv = String::from("# lap stone-density curve v1\ny,density\n");
    for (y, d) in s.ys.iter().zip(&s.density_estimates) {
        csv.push_str(&format!("{},{}\n", sci(*y), sci(*d)));
    }
    let out = StoneOutput {
        lambda: cfg.lambda,
        stone: &s,
        reference,
    };
    Ok(Outcome {
        files: vec![
            (
                "stone_density.json".into(),
                serde_json::to_string_pretty(&out)? + "\n",
            ),
            ("stone_density.csv".into(), csv),
        ],
        exit: 0,
        summary: format!(
            "extrapolated {} reference {}",
            sci(s.extrapolated),
            sci(reference)
        ),
    })
}

#[derive(Serialize)]
struct HolderOutput {
    lambda: f64,
    target: HolderTarget,
    estimate: HolderEstimate,
    /// Exponent implied by the catalog formulas.
    catalog_exponent: f64,
}

fn holder_fit(cfg: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let h = &cfg.holder;
    let radii = geometric_radii(h.r_max, h.ratio, h.count);
    let (m, w) = (&cfg.measure, &cfg.weight);
    let estimate = match h.target {
        HolderTarget::Density => estimate_holder(|x| m.density(x), cfg.lambda, &radii)?,
        HolderTarget::Weight => estimate_holder(|x| w.value(x), cfg.lambda, &radii)?,
        HolderTarget::Weighted => {
            estimate_holder(|x| w.value(x).powi(2) * m.density(x), cfg.lambda, &radii)?
        }
    };
    let catalog_exponent = match h.target {
        HolderTarget::Density => m.holder_exponent_at(cfg.lambda),
        HolderTarget::Weight => w.holder_exponent_at(cfg.lambda),
        HolderTarget::Weighted => m
            .holder_exponent_at(cfg.lambda)
            .min(w.holder_exponent_at(cfg.lambda)),
    };
    let out = HolderOutput {
        lambda: cfg.lambda,
        target: h.target,
        estimate,
        catalog_exponent,
    };
    Ok(Outcome {
        files: vec![(
            "holder_fit.json".into(),
            serde_json::to_string_pretty(&out)? + "\n",
        )],
        exit: 0,
        summary: format!(
            "alpha_hat {} constant_hat {}",
            sci(estimate.alpha_hat),
            sci(estimate.constant_hat)
        ),
    })
}

/// Runs one command from a parsed config; nothing is written.
pub fn execute(
    command: Command,
    cfg: &ExperimentConfig,
    tolerance: Option<f64>,
) -> anyhow::Result<Outcome> {
    match command {
        Command::ProbeLimit => {
            let mut cfg = cfg.clone();
            if let Some(t) = tolerance {
                cfg.tolerance = t;
            }
            probe_limit(&cfg)
        }
        Command::CompareOracle => compare_oracle(cfg, tolerance.unwrap_or(cfg.compare.tolerance)),
        Command::Compactness => compactness(cfg),
        Command::StoneDensity => stone(cfg),
        Command::HolderFit => holder_fit(cfg),
    }
}

/// Writes each file to a temp file in `dir`, then renames it into place.
pub fn write_atomically(dir: &Path, files: &[(String, String)]) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut staged = Vec::with_capacity(files.len());
    for (name, body) in files {
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(body.as_bytes())?;
        tmp.as_file().sync_all()?;
        staged.push((tmp, dir.join(name)));
    }
    for (tmp, path) in staged {
        tmp.persist(&path)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    let Some(path) = cli.common.config.as_deref() else {
        bail!("--config is required");
    };
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.common.out {
        cfg.out_dir = out;
    }
    let outcome = execute(cli.command, &cfg, cli.common.tolerance)?;
    write_atomically(&cfg.out_dir, &outcome.files)?;
    Ok(outcome)
}

/// Entry point of the binary: parses `args`, runs, and maps the outcome to
/// an exit code (0 ok, 1 error or failed check, 2 inconclusive probe).
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            ExitCode::from(outcome.exit)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
