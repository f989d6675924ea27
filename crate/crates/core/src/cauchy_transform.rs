//! The weighted Cauchy transform `C(z) = ∫ w(x)² dμ(x) / (x − z)`.
//!
//! Off the axis the transform is integrated with adaptive Gauss–Kronrod
//! panels graded towards `Re z`. On the axis the principal value is computed
//! by singularity subtraction on a window around `λ`, and the boundary value
//! from the upper half-plane is `p.v. + iπ·w(λ)²ρ(λ)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_input, Error, Result};
use crate::quadrature::{
    integrate_partition, partition, pole_grading, Integral, QuadratureOptions,
};
use crate::spectral_model::{
    DensityFamily, HolderEstimate, Interval, SpectralMeasure, WeightFunction,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformValue {
    pub value: Complex64,
    /// Sum of the per-panel quadrature error estimates.
    pub abs_error_estimate: f64,
    pub panels_used: usize,
}

/// Region of `part`'s support where the weight is nonzero.
fn weighted_support(part: &DensityFamily, weight: &WeightFunction) -> Option<Interval> {
    part.support.intersect(&weight.support())
}

fn part_breakpoints(part: &DensityFamily, weight: &WeightFunction) -> Vec<f64> {
    let mut pts = part.breakpoints();
    pts.extend(weight.breakpoints());
    pts
}

fn split_tolerance(opts: &QuadratureOptions, pieces: usize) -> QuadratureOptions {
    QuadratureOptions {
        abs_tol: opts.abs_tol / pieces.max(1) as f64,
        ..*opts
    }
}

pub fn evaluate_offaxis(
    measure: &SpectralMeasure,
    weight: &WeightFunction,
    z: Complex64,
) -> Result<TransformValue> {
    evaluate_offaxis_with(measure, weight, z, &QuadratureOptions::default())
}

pub fn evaluate_offaxis_with(
    measure: &SpectralMeasure,
    weight: &WeightFunction,
    z: Complex64,
    opts: &QuadratureOptions,
) -> Result<TransformValue> {
    if z.im == 0.0 {
        return Err(Error::NonrealRequired { re: z.re });
    }
    weight.validate()?;

    let part_opts = split_tolerance(opts, measure.ac_parts().len());
    let mut total = Integral::<Complex64>::zero();
    for part in measure.ac_parts() {
        let Some(iv) = weighted_support(part, weight) else {
            continue;
        };
        let mut bps = part_breakpoints(part, weight);
        bps.extend(pole_grading(z.re, z.im, iv.lo, iv.hi));
        let pts = partition(iv.lo, iv.hi, bps);
        let piece = integrate_partition(
            |x| {
                let w = weight.value(x);
                Complex64::new(w * w * part.value(x), 0.0) / (x - z)
            },
            &pts,
            &part_opts,
        );
        total = total.merge(piece);
    }

    let mut atoms = Complex64::new(0.0, 0.0);
    let mut atom_scale = 0.0;
    for a in measure.atoms() {
        let w = weight.value(a.location);
        let term = Complex64::new(a.mass * w * w, 0.0) / (a.location - z);
        atom_scale += term.norm();
        atoms += term;
    }
    let value = total.value + atoms;
    // rounding in the atom sum and the final addition
    let rounding = 4.0 * f64::EPSILON * (atom_scale + value.norm());

    Ok(TransformValue {
        value,
        abs_error_estimate: total.abs_error + rounding,
        panels_used: total.panels,
    })
}

/// Tuning for the on-axis principal value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PvOptions {
    /// Half-width of the subtraction window; `None` picks
    /// `min(near_radius/2, distance to the nearest support endpoint)/2`.
    pub window: Option<f64>,
    pub near_radius: f64,
    /// Caller-supplied regularity certificate. Without one, the catalog's
    /// declared exponents at `λ` are used.
    pub certificate: Option<HolderEstimate>,
    pub quadrature: QuadratureOptions,
}

impl Default for PvOptions {
    fn default() -> Self {
        Self {
            window: None,
            near_radius: 0.5,
            certificate: None,
            quadrature: QuadratureOptions::default(),
        }
    }
}

fn check_probe(
    measure: &SpectralMeasure,
    weight: &WeightFunction,
    lambda: f64,
    opts: &PvOptions,
) -> Result<()> {
    weight.validate()?;
    if !lambda.is_finite() {
        return Err(invalid_input("probe point must be finite"));
    }
    if measure.atom_at(lambda).is_some() {
        return Err(Error::AtomAtProbe { lambda });
    }
    let alpha = match opts.certificate {
        Some(cert) => cert.alpha_hat,
        None => measure
            .holder_exponent_at(lambda)
            .min(weight.holder_exponent_at(lambda)),
    };
    if !(alpha > 0.0) {
        return Err(Error::NotHolder { lambda, alpha });
    }
    Ok(())
}

pub fn principal_value(
    measure: &SpectralMeasure,
    weight: &WeightFunction,
    lambda: f64,
) -> Result<f64> {
    principal_value_with(measure, weight, lambda, &PvOptions::default()).map(|r| r.value)
}

/// `p.v. ∫ w(x)² dμ(x) / (x − λ)` with its quadrature error estimate.
pub fn principal_value_with(
    measure: &SpectralMeasure,
    weight: &WeightFunction,
    lambda: f64,
    opts: &PvOptions,
) -> Result<Integral<f64>> {
    check_probe(measure, weight, lambda, opts)?;

    // each part contributes up to three integrals
    let q = split_tolerance(&opts.quadrature, 3 * measure.ac_parts().len());
    let mut total = Integral::<f64>::zero();
    for part in measure.ac_parts() {
        let Some(iv) = weighted_support(part, weight) else {
            continue;
        };
        let phi = |x: f64| {
            let w = weight.value(x);
            w * w * part.value(x)
        };
        let mut bps = part_breakpoints(part, weight);
        bps.push(lambda);

        if !(iv.lo < lambda && lambda < iv.hi) {
            let pts = partition(iv.lo, iv.hi, bps);
            total = total.merge(integrate_partition(|x| phi(x) / (x - lambda), &pts, &q));
            continue;
        }

        let room = (lambda - iv.lo).min(iv.hi - lambda);
        let delta = opts
            .window
            .unwrap_or_else(|| 0.5 * (0.5 * opts.near_radius).min(room));
        if !(delta > 0.0) {
            return Err(invalid_input(format!(
                "subtraction window {delta} must be positive"
            )));
        }
        let left = delta.min(lambda - iv.lo);
        let right = delta.min(iv.hi - lambda);
        let (wl, wr) = (lambda - left, lambda + right);
        let phi0 = phi(lambda);

        let inner_pts = partition(wl, wr, bps.iter().copied());
        let inner = integrate_partition(|x| (phi(x) - phi0) / (x - lambda), &inner_pts, &q);
        let correction = phi0 * (right / left).ln();
        total = total.merge(inner);
        total.value += correction;

        for (a, b) in [(iv.lo, wl), (wr, iv.hi)] {
            if b > a {
                let pts = partition(a, b, bps.iter().copied());
                total = total.merge(integrate_partition(|x| phi(x) / (x - lambda), &pts, &q));
            }
        }
    }

    total.value += measure
        .atoms()
        .iter()
        .map(|a| {
            let w = weight.value(a.location);
            a.mass * w * w / (a.location - lambda)
        })
        .sum::<f64>();
    Ok(total)
}

pub fn plemelj_boundary(
    measure: &SpectralMeasure,
    weight: &WeightFunction,
    lambda: f64,
) -> Result<Complex64> {
    plemelj_boundary_with(measure, weight, lambda, &PvOptions::default())
}

/// `lim_{y↓0} C(λ + iy) = p.v. + iπ·w(λ)²ρ(λ)`.
pub fn plemelj_boundary_with(
    measure: &SpectralMeasure,
    weight: &WeightFunction,
    lambda: f64,
    opts: &PvOptions,
) -> Result<Complex64> {
    let pv = principal_value_with(measure, weight, lambda, opts)?;
    let w = weight.value(lambda);
    Ok(Complex64::new(
        pv.value,
        PI * w * w * measure.density(lambda),
    ))
}

/// A measure split into `I_near = (λ − ε, λ + ε)` and its complement.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitMeasure {
    pub near: SpectralMeasure,
    pub far: SpectralMeasure,
    pub lambda: f64,
    pub epsilon: f64,
}

pub fn near_far_split(
    measure: &SpectralMeasure,
    lambda: f64,
    epsilon: f64,
) -> Result<SplitMeasure> {
    if !(epsilon > 0.0 && epsilon.is_finite()) || !lambda.is_finite() {
        return Err(invalid_input(format!(
            "near/far split needs finite λ and ε > 0 (got λ = {lambda}, ε = {epsilon})"
        )));
    }
    let near_win = Interval::new(lambda - epsilon, lambda + epsilon);
    let far_wins = [
        Interval::new(f64::NEG_INFINITY, lambda - epsilon),
        Interval::new(lambda + epsilon, f64::INFINITY),
    ];

    let mut near_parts = Vec::new();
    let mut far_parts = Vec::new();
    for part in measure.ac_parts() {
        near_parts.extend(part.restrict(near_win));
        far_parts.extend(far_wins.iter().filter_map(|w| part.restrict(*w)));
    }
    let (near_atoms, far_atoms) = measure
        .atoms()
        .iter()
        .partition(|a| (a.location - lambda).abs() < epsilon);

    Ok(SplitMeasure {
        near: SpectralMeasure::new(near_parts, near_atoms)?,
        far: SpectralMeasure::new(far_parts, far_atoms)?,
        lambda,
        epsilon,
    })
}

/// `∫ w² dμ`.
pub fn weighted_mass(measure: &SpectralMeasure, weight: &WeightFunction) -> Integral<f64> {
    let opts = split_tolerance(&QuadratureOptions::default(), measure.ac_parts().len());
    let mut total = Integral::<f64>::zero();
    for part in measure.ac_parts() {
        let Some(iv) = weighted_support(part, weight) else {
            continue;
        };
        let pts = partition(iv.lo, iv.hi, part_breakpoints(part, weight));
        total = total.merge(integrate_partition(
            |x| {
                let w = weight.value(x);
                w * w * part.value(x)
            },
            &pts,
            &opts,
        ));
    }
    total.value += measure
        .atoms()
        .iter()
        .map(|a| a.mass * weight.value(a.location).powi(2))
        .sum::<f64>();
    total
}

/// A priori bound `(∫ w² dμ_far)/ε ≥ |C_far(λ + iy)|`, uniform in `y`.
pub fn far_bound(split: &SplitMeasure, weight: &WeightFunction) -> f64 {
    weighted_mass(&split.far, weight).value / split.epsilon
}
