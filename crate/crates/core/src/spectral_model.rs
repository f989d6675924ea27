//! Spectral measures and weight functions drawn from a closed parametric
//! catalog, plus empirical estimation of local Hölder exponents.
//!
//! Every family knows its own regularity, so a probe point can be certified
//! Hölder (or not) without sampling. Measures and weights round-trip through
//! TOML config text; see `README.md` for the schema.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid_input, invalid_model, Error, Result};
use crate::fit::fit_log_log;
use crate::quadrature::{integrate_partition, partition, QuadratureOptions};

/// Closed interval `[lo, hi]` on the spectral axis. Serialized as `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo < hi).then_some(Interval { lo, hi })
    }

    fn validate(&self, what: &str) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(invalid_model(format!(
                "{what} support [{}, {}] must be a finite nonempty interval",
                self.lo, self.hi
            )));
        }
        Ok(())
    }
}

impl From<[f64; 2]> for Interval {
    fn from(v: [f64; 2]) -> Self {
        Interval { lo: v[0], hi: v[1] }
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.lo, i.hi]
    }
}

/// Shape of an absolutely continuous density, before clipping to its support.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensityShape {
    Constant {
        level: f64,
    },
    /// `level + slope·(x − center)`
    Affine {
        level: f64,
        slope: f64,
        center: f64,
    },
    /// `offset + level·|x − center|^exponent`, Hölder-`exponent` at `center`.
    PowerBump {
        level: f64,
        exponent: f64,
        center: f64,
        #[serde(default)]
        offset: f64,
    },
    /// `level·exp(1 − 1/(1 − t²))` with `t = (x − center)/half_width`; C^∞.
    SmoothBump {
        level: f64,
        center: f64,
        half_width: f64,
    },
}

impl DensityShape {
    fn value(&self, x: f64) -> f64 {
        match *self {
            DensityShape::Constant { level } => level,
            DensityShape::Affine {
                level,
                slope,
                center,
            } => level + slope * (x - center),
            DensityShape::PowerBump {
                level,
                exponent,
                center,
                offset,
            } => offset + level * (x - center).abs().powf(exponent),
            DensityShape::SmoothBump {
                level,
                center,
                half_width,
            } => {
                let t = (x - center) / half_width;
                if t.abs() < 1.0 {
                    level * (1.0 - 1.0 / (1.0 - t * t)).exp()
                } else {
                    0.0
                }
            }
        }
    }
}

/// A catalog density clipped to a closed support interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityFamily {
    #[serde(flatten)]
    pub shape: DensityShape,
    pub support: Interval,
}

impl DensityFamily {
    pub fn constant(level: f64, lo: f64, hi: f64) -> Self {
        Self {
            shape: DensityShape::Constant { level },
            support: Interval::new(lo, hi),
        }
    }

    pub fn affine(level: f64, slope: f64, center: f64, lo: f64, hi: f64) -> Self {
        Self {
            shape: DensityShape::Affine {
                level,
                slope,
                center,
            },
            support: Interval::new(lo, hi),
        }
    }

    pub fn power_bump(
        level: f64,
        exponent: f64,
        center: f64,
        offset: f64,
        lo: f64,
        hi: f64,
    ) -> Self {
        Self {
            shape: DensityShape::PowerBump {
                level,
                exponent,
                center,
                offset,
            },
            support: Interval::new(lo, hi),
        }
    }

    /// Smooth bump whose support is its natural one, `[center − h, center + h]`.
    pub fn smooth_bump(level: f64, center: f64, half_width: f64) -> Self {
        Self {
            shape: DensityShape::SmoothBump {
                level,
                center,
                half_width,
            },
            support: Interval::new(center - half_width, center + half_width),
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        if self.support.contains(x) {
            self.shape.value(x)
        } else {
            0.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.support.validate("density")?;
        let Interval { lo, hi } = self.support;
        let finite = |v: f64, name: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(invalid_model(format!(
                    "density parameter {name} = {v} is not finite"
                )))
            }
        };
        match self.shape {
            DensityShape::Constant { level } => {
                finite(level, "level")?;
                if level < 0.0 {
                    return Err(invalid_model("constant density level must be ≥ 0"));
                }
            }
            DensityShape::Affine {
                level,
                slope,
                center,
            } => {
                finite(level, "level")?;
                finite(slope, "slope")?;
                finite(center, "center")?;
                if self.shape.value(lo) < 0.0 || self.shape.value(hi) < 0.0 {
                    return Err(invalid_model("affine density is negative on its support"));
                }
            }
            DensityShape::PowerBump {
                level,
                exponent,
                center,
                offset,
            } => {
                finite(level, "level")?;
                finite(center, "center")?;
                finite(offset, "offset")?;
                if level < 0.0 || offset < 0.0 {
                    return Err(invalid_model("power bump level and offset must be ≥ 0"));
                }
                if !(exponent > 0.0 && exponent <= 1.0) {
                    return Err(invalid_model(format!(
                        "power bump exponent {exponent} must lie in (0, 1]"
                    )));
                }
            }
            DensityShape::SmoothBump {
                level,
                center,
                half_width,
            } => {
                finite(level, "level")?;
                finite(center, "center")?;
                if level < 0.0 {
                    return Err(invalid_model("smooth bump level must be ≥ 0"));
                }
                if !(half_width > 0.0 && half_width.is_finite()) {
                    return Err(invalid_model("smooth bump half_width must be positive"));
                }
            }
        }
        Ok(())
    }

    /// Points where the density may fail to be smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut pts = vec![self.support.lo, self.support.hi];
        match self.shape {
            DensityShape::PowerBump { center, .. } => pts.push(center),
            DensityShape::SmoothBump {
                center, half_width, ..
            } => {
                pts.extend([center - half_width, center, center + half_width]);
            }
            _ => {}
        }
        pts
    }

    /// Known Hölder exponent at `x`; `0.0` marks a jump discontinuity.
    pub fn holder_exponent_at(&self, x: f64) -> f64 {
        let Interval { lo, hi } = self.support;
        if x < lo || x > hi {
            return 1.0;
        }
        let interior = match self.shape {
            DensityShape::PowerBump {
                exponent, center, ..
            } if x == center => exponent,
            _ => 1.0,
        };
        if (x == lo || x == hi) && self.shape.value(x) != 0.0 {
            0.0
        } else {
            interior
        }
    }

    /// `∫ρ dx` over the support.
    pub fn mass(&self) -> f64 {
        let Interval { lo, hi } = self.support;
        match self.shape {
            DensityShape::Constant { level } => level * (hi - lo),
            DensityShape::Affine {
                level,
                slope,
                center,
            } => level * (hi - lo) + 0.5 * slope * ((hi - center).powi(2) - (lo - center).powi(2)),
            DensityShape::PowerBump {
                level,
                exponent,
                center,
                offset,
            } => {
                let p = exponent + 1.0;
                let g = |x: f64| (x - center).signum() * (x - center).abs().powf(p) / p;
                offset * (hi - lo) + level * (g(hi) - g(lo))
            }
            DensityShape::SmoothBump { .. } => {
                let pts = partition(lo, hi, self.breakpoints());
                integrate_partition(|x| self.value(x), &pts, &QuadratureOptions::default()).value
            }
        }
    }

    /// Restriction to `[lo, hi] ∩ support`, or `None` when that is empty.
    pub fn restrict(&self, window: Interval) -> Option<DensityFamily> {
        self.support
            .intersect(&window)
            .map(|support| DensityFamily {
                shape: self.shape,
                support,
            })
    }
}

/// Compactly supported continuous weight `w` of the rigging operator.
///
/// `Plateau` is the one discontinuous member (an indicator times `level`); it
/// exists for closed-form checks and is not Hölder at its endpoints.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", try_from = "RawWeight")]
pub enum WeightFunction {
    /// `1 − |x − c|/h`
    Hat { center: f64, half_width: f64 },
    /// `cos²(π(x − c)/(2h))`
    CosineBump { center: f64, half_width: f64 },
    /// `1 − (|x − c|/h)^exponent`, Hölder-`exponent` at `center`.
    PowerHat {
        center: f64,
        half_width: f64,
        exponent: f64,
    },
    Plateau {
        support: Interval,
        #[serde(default = "unit_level")]
        level: f64,
    },
}

fn unit_level() -> f64 {
    1.0
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum RawWeight {
    Hat {
        center: f64,
        half_width: f64,
    },
    CosineBump {
        center: f64,
        half_width: f64,
    },
    PowerHat {
        center: f64,
        half_width: f64,
        exponent: f64,
    },
    Plateau {
        support: Interval,
        #[serde(default = "unit_level")]
        level: f64,
    },
}

impl TryFrom<RawWeight> for WeightFunction {
    type Error = Error;

    fn try_from(raw: RawWeight) -> Result<Self> {
        let w = match raw {
            RawWeight::Hat { center, half_width } => WeightFunction::Hat { center, half_width },
            RawWeight::CosineBump { center, half_width } => {
                WeightFunction::CosineBump { center, half_width }
            }
            RawWeight::PowerHat {
                center,
                half_width,
                exponent,
            } => WeightFunction::PowerHat {
                center,
                half_width,
                exponent,
            },
            RawWeight::Plateau { support, level } => WeightFunction::Plateau { support, level },
        };
        w.validate()?;
        Ok(w)
    }
}

impl WeightFunction {
    pub fn plateau(lo: f64, hi: f64) -> Self {
        WeightFunction::Plateau {
            support: Interval::new(lo, hi),
            level: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            WeightFunction::Hat { center, half_width }
            | WeightFunction::CosineBump { center, half_width }
            | WeightFunction::PowerHat {
                center, half_width, ..
            } => {
                if !center.is_finite() || !(half_width > 0.0 && half_width.is_finite()) {
                    return Err(invalid_model(format!(
                        "weight needs finite center and positive half_width (got {center}, {half_width})"
                    )));
                }
                if let WeightFunction::PowerHat { exponent, .. } = *self {
                    if !(exponent > 0.0 && exponent <= 1.0) {
                        return Err(invalid_model(format!(
                            "power_hat exponent {exponent} must lie in (0, 1]"
                        )));
                    }
                }
            }
            WeightFunction::Plateau { support, level } => {
                support.validate("weight")?;
                if !(level >= 0.0 && level.is_finite()) {
                    return Err(invalid_model("plateau level must be finite and ≥ 0"));
                }
            }
        }
        Ok(())
    }

    pub fn support(&self) -> Interval {
        match *self {
            WeightFunction::Hat { center, half_width }
            | WeightFunction::CosineBump { center, half_width }
            | WeightFunction::PowerHat {
                center, half_width, ..
            } => Interval::new(center - half_width, center + half_width),
            WeightFunction::Plateau { support, .. } => support,
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match *self {
            WeightFunction::Hat { center, half_width } => {
                (1.0 - (x - center).abs() / half_width).max(0.0)
            }
            WeightFunction::CosineBump { center, half_width } => {
                let t = (x - center) / half_width;
                if t.abs() <= 1.0 {
                    (0.5 * PI * t).cos().powi(2)
                } else {
                    0.0
                }
            }
            WeightFunction::PowerHat {
                center,
                half_width,
                exponent,
            } => {
                let t = (x - center).abs() / half_width;
                if t <= 1.0 {
                    1.0 - t.powf(exponent)
                } else {
                    0.0
                }
            }
            WeightFunction::Plateau { support, level } => {
                if support.contains(x) {
                    level
                } else {
                    0.0
                }
            }
        }
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        let s = self.support();
        match *self {
            WeightFunction::Plateau { .. } => vec![s.lo, s.hi],
            WeightFunction::Hat { center, .. }
            | WeightFunction::CosineBump { center, .. }
            | WeightFunction::PowerHat { center, .. } => vec![s.lo, center, s.hi],
        }
    }

    /// Known Hölder exponent at `x`; `0.0` marks a jump.
    pub fn holder_exponent_at(&self, x: f64) -> f64 {
        match *self {
            WeightFunction::PowerHat {
                center, exponent, ..
            } if x == center => exponent,
            WeightFunction::Plateau { support, level }
                if level != 0.0 && (x == support.lo || x == support.hi) =>
            {
                0.0
            }
            _ => 1.0,
        }
    }

    /// Global `(C, α)` with `|w(x) − w(x')| ≤ C|x − x'|^α` for all real x, x'.
    /// `None` for the discontinuous plateau.
    pub fn global_holder(&self) -> Option<(f64, f64)> {
        match *self {
            WeightFunction::Hat { half_width, .. } => Some((1.0 / half_width, 1.0)),
            WeightFunction::CosineBump { half_width, .. } => Some((0.5 * PI / half_width, 1.0)),
            WeightFunction::PowerHat {
                half_width,
                exponent,
                ..
            } => Some((half_width.powf(-exponent), exponent)),
            WeightFunction::Plateau { .. } => None,
        }
    }

    pub fn to_config_text(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| invalid_input(e.to_string()))
    }

    pub fn from_config_text(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| invalid_input(e.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub location: f64,
    pub mass: f64,
}

/// `μ = ρ dx + Σ m_j δ_{λ_j}`, compactly supported.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMeasure")]
pub struct SpectralMeasure {
    ac_parts: Vec<DensityFamily>,
    atoms: Vec<Atom>,
}

#[derive(Deserialize)]
struct RawMeasure {
    #[serde(default)]
    ac_parts: Vec<DensityFamily>,
    #[serde(default)]
    atoms: Vec<Atom>,
}

impl TryFrom<RawMeasure> for SpectralMeasure {
    type Error = Error;

    fn try_from(raw: RawMeasure) -> Result<Self> {
        SpectralMeasure::new(raw.ac_parts, raw.atoms)
    }
}

impl SpectralMeasure {
    pub fn new(ac_parts: Vec<DensityFamily>, atoms: Vec<Atom>) -> Result<Self> {
        for part in &ac_parts {
            part.validate()?;
        }
        for (i, atom) in atoms.iter().enumerate() {
            if !atom.location.is_finite() {
                return Err(invalid_model("atom location must be finite"));
            }
            if !(atom.mass > 0.0 && atom.mass.is_finite()) {
                return Err(invalid_model(format!(
                    "atom at {} has non-positive mass {}",
                    atom.location, atom.mass
                )));
            }
            if atoms[..i].iter().any(|a| a.location == atom.location) {
                return Err(invalid_model(format!(
                    "duplicate atom location {}",
                    atom.location
                )));
            }
        }
        Ok(Self { ac_parts, atoms })
    }

    pub fn empty() -> Self {
        Self {
            ac_parts: Vec::new(),
            atoms: Vec::new(),
        }
    }

    pub fn absolutely_continuous(parts: Vec<DensityFamily>) -> Result<Self> {
        Self::new(parts, Vec::new())
    }

    pub fn ac_parts(&self) -> &[DensityFamily] {
        &self.ac_parts
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn is_empty(&self) -> bool {
        self.ac_parts.is_empty() && self.atoms.is_empty()
    }

    /// Sum of the absolutely continuous densities at `x`; atoms excluded.
    pub fn density(&self, x: f64) -> f64 {
        self.ac_parts.iter().map(|p| p.value(x)).sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.ac_parts.iter().map(DensityFamily::mass).sum::<f64>()
            + self.atoms.iter().map(|a| a.mass).sum::<f64>()
    }

    pub fn atom_at(&self, x: f64) -> Option<&Atom> {
        self.atoms.iter().find(|a| a.location == x)
    }

    /// Smallest interval containing every density support and atom.
    pub fn hull(&self) -> Option<Interval> {
        let lo = self
            .ac_parts
            .iter()
            .map(|p| p.support.lo)
            .chain(self.atoms.iter().map(|a| a.location))
            .min_by(f64::total_cmp)?;
        let hi = self
            .ac_parts
            .iter()
            .map(|p| p.support.hi)
            .chain(self.atoms.iter().map(|a| a.location))
            .max_by(f64::total_cmp)?;
        Some(Interval::new(lo, hi))
    }

    /// Hölder exponent of the total density at `x` (minimum over parts).
    pub fn holder_exponent_at(&self, x: f64) -> f64 {
        self.ac_parts
            .iter()
            .map(|p| p.holder_exponent_at(x))
            .fold(1.0, f64::min)
    }

    pub fn to_config_text(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| invalid_input(e.to_string()))
    }

    pub fn from_config_text(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| invalid_input(e.to_string()))
    }
}

pub fn evaluate_density(measure: &SpectralMeasure, x: f64) -> f64 {
    measure.density(x)
}

pub fn evaluate_weight(weight: &WeightFunction, x: f64) -> f64 {
    weight.value(x)
}

/// Empirical local Hölder data `|f(x) − f(λ)| ≈ C|x − λ|^α`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderEstimate {
    pub alpha_hat: f64,
    pub constant_hat: f64,
    /// Smallest and largest `|x − λ|` that entered the regression.
    pub fit_window: Interval,
    pub residual: f64,
}

/// `count` radii `r_max, r_max·ratio, …`.
pub fn geometric_radii(r_max: f64, ratio: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| r_max * ratio.powi(k as i32)).collect()
}

/// Regresses `log ½(|f(λ+r) − f(λ)| + |f(λ−r) − f(λ)|)` on `log r`.
///
/// Radii with vanishing increments are dropped; if more than half vanish the
/// function is treated as locally constant and `DegenerateSamples` is returned.
pub fn estimate_holder<F>(f: F, lambda: f64, radii: &[f64]) -> Result<HolderEstimate>
where
    F: Fn(f64) -> f64,
{
    if radii.len() < 8 {
        return Err(invalid_input(format!(
            "need at least 8 radii, got {}",
            radii.len()
        )));
    }
    if radii.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
        return Err(invalid_input("radii must be finite and positive"));
    }
    if radii.windows(2).any(|w| w[1] >= w[0]) {
        return Err(invalid_input("radii must be strictly decreasing"));
    }

    let f0 = f(lambda);
    let mut rs = Vec::with_capacity(radii.len());
    let mut incs = Vec::with_capacity(radii.len());
    for &r in radii {
        let inc = 0.5 * ((f(lambda + r) - f0).abs() + (f(lambda - r) - f0).abs());
        if inc > 0.0 {
            rs.push(r);
            incs.push(inc);
        }
    }
    let zero = radii.len() - rs.len();
    if 2 * zero > radii.len() || rs.len() < 2 {
        return Err(Error::DegenerateSamples {
            zero,
            total: radii.len(),
        });
    }

    let line = fit_log_log(&rs, &incs)?;
    Ok(HolderEstimate {
        alpha_hat: line.slope,
        constant_hat: line.intercept.exp(),
        fit_window: Interval::new(rs[rs.len() - 1], rs[0]),
        residual: line.residual,
    })
}
