//! End-to-end acceptance checks, run as a plain binary so that every
//! criterion prints one PASS/FAIL line (wall-clock budget included) under a
//! normal `cargo test`. Any failure makes the target exit nonzero.

use std::f64::consts::PI;
use std::fs;
use std::process::Command;
use std::time::{Duration, Instant};

use lap_core::cauchy_transform::{evaluate_offaxis, far_bound, near_far_split, plemelj_boundary};
use lap_core::limit_analysis::{
    compactness_probe, convergence_rate, fit_divergence_rate, limit_probe, stone_density, Verdict,
    YSchedule,
};
use lap_core::matrix_oracle::{
    discretize, eigen_contribution, regularized_resolvent, sandwiched_resolvent, EmbeddingDim,
    MatrixModel,
};
use lap_core::spectral_model::{Atom, DensityFamily, SpectralMeasure, WeightFunction};
use lap_core::Error;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(
    n: u32,
    name: &str,
    ok: bool,
    elapsed: Duration,
    budget: Duration,
    detail: String,
) -> bool {
    let within = elapsed < budget;
    let verdict = if ok && within { "PASS" } else { "FAIL" };
    println!(
        "criterion {n:>2} [{name}]: {verdict} ({detail}; {:.3} s of {:.0} s)",
        elapsed.as_secs_f64(),
        budget.as_secs_f64()
    );
    ok && within
}

fn unit_box() -> (SpectralMeasure, WeightFunction) {
    (
        SpectralMeasure::absolutely_continuous(vec![DensityFamily::constant(1.0, -1.0, 1.0)])
            .unwrap(),
        WeightFunction::plateau(-1.0, 1.0),
    )
}

fn transform(m: &SpectralMeasure, w: &WeightFunction, z: Complex64) -> Complex64 {
    evaluate_offaxis(m, w, z).unwrap().value
}

fn criterion_01_closed_form_transform() -> bool {
    let start = Instant::now();
    let (m, w) = unit_box();
    let z = Complex64::new(0.0, 1.0);
    let v = evaluate_offaxis(&m, &w, z).unwrap().value;
    // antiderivative Log(x − z); x − i stays off the branch cut
    let oracle = (Complex64::new(1.0, 0.0) - z).ln() - (Complex64::new(-1.0, 0.0) - z).ln();
    let err = (v - Complex64::new(0.0, PI / 2.0))
        .norm()
        .max((v - oracle).norm());
    report(
        1,
        "closed-form transform",
        err <= 1e-10,
        start.elapsed(),
        Duration::from_secs(1),
        format!("|C(i) − iπ/2| = {err:.2e}"),
    )
}

fn criterion_02_plemelj_jump() -> bool {
    let start = Instant::now();
    let (m, w) = unit_box();
    let b = plemelj_boundary(&m, &w, 0.0).unwrap();
    let (re_err, im_err) = (b.re.abs(), (b.im - PI).abs());
    report(
        2,
        "Plemelj jump",
        re_err <= 1e-8 && im_err <= 1e-8,
        start.elapsed(),
        Duration::from_secs(1),
        format!("|p.v.| = {re_err:.2e}, |Im − π| = {im_err:.2e}"),
    )
}

fn criterion_03_holder_rate() -> bool {
    let start = Instant::now();
    let schedule = YSchedule::new(1e-1, 1e-5, 0.5).unwrap();
    let ys = schedule.values();
    let cases: Vec<(&str, f64, SpectralMeasure, WeightFunction, f64)> = vec![
        (
            "|x|^½ bump, plateau",
            0.5,
            SpectralMeasure::absolutely_continuous(vec![DensityFamily::power_bump(
                1.0, 0.5, 0.0, 0.0, -1.0, 1.0,
            )])
            .unwrap(),
            WeightFunction::plateau(-1.0, 1.0),
            0.0,
        ),
        (
            "½ + |x|^½, cosine",
            0.5,
            SpectralMeasure::absolutely_continuous(vec![DensityFamily::power_bump(
                1.0, 0.5, 0.0, 0.5, -1.0, 1.0,
            )])
            .unwrap(),
            WeightFunction::CosineBump {
                center: 0.0,
                half_width: 2.0,
            },
            0.0,
        ),
        ("constant, plateau", 1.0, unit_box().0, unit_box().1, 0.0),
        (
            "affine, cosine",
            1.0,
            SpectralMeasure::absolutely_continuous(vec![DensityFamily::affine(
                1.0, 0.5, 0.0, -1.0, 1.0,
            )])
            .unwrap(),
            WeightFunction::CosineBump {
                center: 0.0,
                half_width: 1.5,
            },
            0.2,
        ),
    ];
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, alpha, m, w, lambda) in &cases {
        let limit = plemelj_boundary(m, w, *lambda).unwrap();
        let values: Vec<Complex64> = ys
            .iter()
            .map(|y| transform(m, w, Complex64::new(*lambda, *y)))
            .collect();
        let rate = convergence_rate(&values, limit, ys).unwrap().slope;
        let need = if *alpha == 1.0 { 0.85 } else { alpha - 0.1 };
        ok &= rate >= need;
        detail.push(format!("{name}: {rate:.3} ≥ {need}"));
    }
    report(
        3,
        "Hölder convergence rate",
        ok,
        start.elapsed(),
        Duration::from_secs(10),
        detail.join(", "),
    )
}

/// Isolated eigenvalue at 0 in a gap of a Hölder background, seen through a
/// seeded 16-dimensional isometry.
fn atom_in_gap_model() -> MatrixModel {
    let measure = SpectralMeasure::new(
        vec![
            DensityFamily::affine(1.0, 0.5, -0.6, -1.0, -0.3),
            DensityFamily::power_bump(1.0, 0.5, 0.6, 0.2, 0.3, 1.0),
        ],
        vec![Atom {
            location: 0.0,
            mass: 1.0,
        }],
    )
    .unwrap();
    let weight = WeightFunction::CosineBump {
        center: 0.0,
        half_width: 1.5,
    };
    discretize(&measure, &weight, 400, EmbeddingDim::Dim(16), 7).unwrap()
}

fn criterion_04_divergence_law() -> bool {
    let start = Instant::now();
    let model = atom_in_gap_model();
    let schedule = YSchedule::new(1e-2, 1e-6, 0.5).unwrap();
    let (_, fp2) = eigen_contribution(&model, 0.0).unwrap();
    let mut norms = Vec::new();
    let mut bound_ok = true;
    for &y in schedule.values() {
        let s = sandwiched_resolvent(&model, Complex64::new(0.0, y)).unwrap();
        bound_ok &= s.norm >= fp2 / y - 1e-10;
        norms.push(s.norm);
    }
    let fit = fit_divergence_rate(&norms, schedule.values()).unwrap();
    report(
        4,
        "divergence law",
        (fit.slope + 1.0).abs() <= 0.05 && bound_ok && fp2 > 0.0,
        start.elapsed(),
        Duration::from_secs(5),
        format!(
            "slope {:.4}, ‖FP‖² = {fp2:.4}, pointwise bound held: {bound_ok}",
            fit.slope
        ),
    )
}

fn criterion_05_regularized_limit() -> bool {
    let start = Instant::now();
    let model = atom_in_gap_model();
    let lambda = 0.0;
    let schedule = YSchedule::new(1e-2, 1e-8, 0.5).unwrap();
    let probe = limit_probe(
        |z| regularized_resolvent(&model, z, lambda),
        lambda,
        &schedule,
        1e-6,
    )
    .unwrap();
    let last_diff = probe.samples.last().unwrap().diff.unwrap();

    let (e, _) = eigen_contribution(&model, lambda).unwrap();
    let mut worst: f64 = 0.0;
    for &y in schedule.values() {
        let z = Complex64::new(lambda, y);
        let full = sandwiched_resolvent(&model, z).unwrap().t;
        let reg = regularized_resolvent(&model, z, lambda).unwrap().t;
        let rebuilt = reg.add(&e.scale(Complex64::new(0.0, 1.0 / y)));
        worst = worst.max(full.sub(&rebuilt).max_abs_entry() / full.max_abs_entry());
    }
    report(
        5,
        "regularized limit",
        probe.verdict == Verdict::Converges && last_diff < 1e-6 && worst <= 1e-12,
        start.elapsed(),
        Duration::from_secs(5),
        format!(
            "verdict {:?}, final diff {last_diff:.2e}, decomposition gap {worst:.2e}",
            probe.verdict
        ),
    )
}

fn criterion_06_near_far() -> bool {
    let start = Instant::now();
    let measure = SpectralMeasure::new(
        vec![
            DensityFamily::power_bump(1.0, 0.5, 0.1, 0.3, -1.0, 0.5),
            DensityFamily::affine(0.5, 0.4, 0.5, 0.2, 1.0),
        ],
        vec![
            Atom {
                location: -0.4,
                mass: 0.3,
            },
            Atom {
                location: 0.75,
                mass: 0.2,
            },
        ],
    )
    .unwrap();
    let weight = WeightFunction::CosineBump {
        center: 0.0,
        half_width: 1.2,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut ok = true;
    let mut worst_ratio: f64 = 0.0;
    for _ in 0..20 {
        let lambda = rng.random_range(-0.9..0.9);
        let eps = rng.random_range(0.05..0.5);
        let y = 10f64.powf(rng.random_range(-6.0..-1.0));
        let z = Complex64::new(lambda, y);
        let split = near_far_split(&measure, lambda, eps).unwrap();
        let near = evaluate_offaxis(&split.near, &weight, z).unwrap();
        let far = evaluate_offaxis(&split.far, &weight, z).unwrap();
        let total = evaluate_offaxis(&measure, &weight, z).unwrap();
        let gap = (near.value + far.value - total.value).norm();
        let budget = near.abs_error_estimate + far.abs_error_estimate + total.abs_error_estimate;
        let bound = far_bound(&split, &weight);
        ok &= gap <= budget && far.value.norm() <= bound;
        worst_ratio = worst_ratio.max(far.value.norm() / bound);
    }
    report(
        6,
        "near/far additivity and far bound",
        ok,
        start.elapsed(),
        Duration::from_secs(5),
        format!("20 triples, max |C_far|/bound = {worst_ratio:.3}"),
    )
}

fn criterion_07_oracle_equivalence() -> bool {
    let start = Instant::now();
    let cases: Vec<(&str, SpectralMeasure, WeightFunction, f64)> = vec![
        ("constant, plateau", unit_box().0, unit_box().1, 0.0),
        (
            "affine, cosine",
            SpectralMeasure::absolutely_continuous(vec![DensityFamily::affine(
                1.0, 0.5, 0.0, -1.0, 1.0,
            )])
            .unwrap(),
            WeightFunction::CosineBump {
                center: 0.0,
                half_width: 1.5,
            },
            0.2,
        ),
        (
            "smooth bump, hat",
            SpectralMeasure::absolutely_continuous(vec![DensityFamily::smooth_bump(1.0, 0.0, 1.0)])
                .unwrap(),
            WeightFunction::Hat {
                center: 0.0,
                half_width: 1.0,
            },
            0.3,
        ),
        (
            "power bump, cosine",
            SpectralMeasure::absolutely_continuous(vec![DensityFamily::power_bump(
                1.0, 0.5, 0.0, 0.5, -1.0, 1.0,
            )])
            .unwrap(),
            WeightFunction::CosineBump {
                center: 0.0,
                half_width: 1.0,
            },
            0.3,
        ),
        (
            "constant + atom, power hat",
            SpectralMeasure::new(
                vec![DensityFamily::constant(1.0, -1.0, 1.0)],
                vec![Atom {
                    location: 0.5,
                    mass: 0.3,
                }],
            )
            .unwrap(),
            WeightFunction::PowerHat {
                center: 0.0,
                half_width: 1.2,
                exponent: 0.5,
            },
            -0.3,
        ),
    ];
    let schedule = YSchedule::default();
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, m, w, lambda) in &cases {
        let model = discretize(m, w, 10_000, EmbeddingDim::Same, 0).unwrap();
        let spacing = model.local_spacing(*lambda);
        let mut worst: f64 = 0.0;
        let mut checked = 0;
        for &y in schedule.values().iter().filter(|y| **y >= 10.0 * spacing) {
            let z = Complex64::new(*lambda, y);
            let form = model.transform_form(z).unwrap();
            let exact = transform(m, w, z);
            worst = worst.max((form - exact).norm() / exact.norm());
            checked += 1;
        }
        ok &= worst < 1e-3 && checked > 0;
        detail.push(format!("{name}: {worst:.1e} over {checked} heights"));
    }
    report(
        7,
        "oracle equivalence",
        ok,
        start.elapsed(),
        Duration::from_secs(30),
        detail.join(", "),
    )
}

fn criterion_08_stone_density() -> bool {
    let start = Instant::now();
    let cases: Vec<(&str, SpectralMeasure, WeightFunction, f64)> = vec![
        ("constant, plateau", unit_box().0, unit_box().1, 0.0),
        (
            "affine, cosine",
            SpectralMeasure::absolutely_continuous(vec![DensityFamily::affine(
                1.0, 0.5, 0.0, -1.0, 1.0,
            )])
            .unwrap(),
            WeightFunction::CosineBump {
                center: 0.0,
                half_width: 1.5,
            },
            0.2,
        ),
        (
            "smooth bump, hat",
            SpectralMeasure::absolutely_continuous(vec![DensityFamily::smooth_bump(1.0, 0.0, 1.0)])
                .unwrap(),
            WeightFunction::Hat {
                center: 0.0,
                half_width: 1.0,
            },
            0.3,
        ),
        (
            "constant, wide cosine",
            SpectralMeasure::absolutely_continuous(vec![DensityFamily::constant(2.0, -1.0, 1.5)])
                .unwrap(),
            WeightFunction::CosineBump {
                center: 0.0,
                half_width: 2.0,
            },
            0.5,
        ),
        (
            "affine with atoms, plateau",
            SpectralMeasure::new(
                vec![DensityFamily::affine(1.0, -0.3, 1.0, 0.0, 2.0)],
                vec![Atom {
                    location: 0.4,
                    mass: 0.5,
                }],
            )
            .unwrap(),
            WeightFunction::plateau(-1.0, 3.0),
            1.0,
        ),
    ];
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, m, w, lambda) in &cases {
        let s = stone_density(
            |z| evaluate_offaxis(m, w, z).map(|t| t.value),
            *lambda,
            &YSchedule::default(),
        )
        .unwrap();
        let target = w.value(*lambda).powi(2) * m.density(*lambda);
        let rel = (s.extrapolated - target).abs() / target;
        ok &= rel <= 0.02;
        detail.push(format!("{name}: {rel:.1e}"));
    }
    report(
        8,
        "Stone density",
        ok,
        start.elapsed(),
        Duration::from_secs(10),
        detail.join(", "),
    )
}

fn criterion_09_compactness_witness() -> bool {
    let start = Instant::now();
    let measure =
        SpectralMeasure::absolutely_continuous(vec![DensityFamily::constant(1.0, -3.0, 3.0)])
            .unwrap();
    let weight = WeightFunction::Hat {
        center: 0.5,
        half_width: 1.0,
    };
    let cover = 1.5;
    let model = discretize(&measure, &weight, 600, EmbeddingDim::Same, 0).unwrap();
    let radii = [0.1, 0.25, 0.5, 1.0, 1.25, 1.5, 2.0, 3.0];
    let r = compactness_probe(&model, 1.0, &radii).unwrap();
    let monotone = r.sup_bounds.windows(2).all(|w| w[1] <= w[0]);
    let zero_when_covered = radii
        .iter()
        .zip(&r.sup_bounds)
        .all(|(rad, b)| *rad < cover || *b == 0.0);
    let positive_before = radii
        .iter()
        .zip(&r.sup_bounds)
        .all(|(rad, b)| *rad >= cover - 0.05 || *b > 0.0);
    let rejects = [0.5, 0.4, -1.0].iter().all(|s| {
        matches!(
            compactness_probe(&model, *s, &radii),
            Err(Error::InvalidExponent { .. })
        )
    });
    report(
        9,
        "compactness witness",
        monotone && zero_when_covered && positive_before && rejects,
        start.elapsed(),
        Duration::from_secs(1),
        format!("sup bounds {:?}, s ≤ ½ rejected: {rejects}", r.sup_bounds),
    )
}

fn criterion_10_determinism() -> bool {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("probe.toml");
    fs::write(
        &config,
        r#"
lambda = 0.25
seed = 11
n = 3000
embedding_dim = 6
evaluator = "matrix"
epsilon = 0.2

[schedule]
y_max = 0.1
y_min = 1e-4
ratio = 0.7

[measure]
ac_parts = [
  { kind = "power_bump", level = 1.0, exponent = 0.5, center = 0.0, offset = 0.2, support = [-1.0, 1.0] },
]
atoms = [{ location = 0.25, mass = 0.5 }]

[weight]
kind = "cosine_bump"
center = 0.0
half_width = 1.2
"#,
    )
    .unwrap();
    let run = |out: &str| {
        let status = Command::new(env!("CARGO_BIN_EXE_lap"))
            .args(["probe-limit", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(dir.path().join(out))
            .output()
            .unwrap();
        let code = status.status.code();
        assert!(
            matches!(code, Some(0) | Some(2)),
            "{}",
            String::from_utf8_lossy(&status.stderr)
        );
        ["probe_limit.json", "probe_limit.csv"]
            .map(|f| fs::read(dir.path().join(out).join(f)).unwrap())
    };
    let (a, b) = (run("a"), run("b"));
    report(
        10,
        "determinism",
        a == b,
        start.elapsed(),
        Duration::from_secs(5),
        format!("{} + {} bytes compared", a[0].len(), a[1].len()),
    )
}

fn main() {
    let criteria: [fn() -> bool; 10] = [
        criterion_01_closed_form_transform,
        criterion_02_plemelj_jump,
        criterion_03_holder_rate,
        criterion_04_divergence_law,
        criterion_05_regularized_limit,
        criterion_06_near_far,
        criterion_07_oracle_equivalence,
        criterion_08_stone_density,
        criterion_09_compactness_witness,
        criterion_10_determinism,
    ];
    let mut failed = 0;
    for (k, criterion) in criteria.iter().enumerate() {
        match std::panic::catch_unwind(criterion) {
            Ok(true) => {}
            Ok(false) => failed += 1,
            Err(_) => {
                println!("criterion {:>2}: FAIL (panicked)", k + 1);
                failed += 1;
            }
        }
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
