//! Adaptive Gauss–Kronrod (7/15) panel quadrature.
//!
//! Integrals are split at caller-supplied breakpoints and refined by global
//! bisection of the panel with the largest error estimate until the summed
//! estimate meets the tolerance. Integrands may be real or complex.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

/// Gauss–Kronrod abscissae on [0, 1], descending; the centre node is last.
#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_838_258_730,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

/// Gauss weights for XGK[1], XGK[3], XGK[5] and the centre.
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Values that can be integrated: closed under addition and real scaling.
pub trait Integrand:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> + Send + Sync
{
    fn zero() -> Self;
    fn magnitude(&self) -> f64;
}

impl Integrand for f64 {
    fn zero() -> Self {
        0.0
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl Integrand for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_panels: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 0.0,
            max_panels: 20_000,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Integral<T> {
    pub value: T,
    pub abs_error: f64,
    pub panels: usize,
}

impl<T: Integrand> Integral<T> {
    pub fn zero() -> Self {
        Self {
            value: T::zero(),
            abs_error: 0.0,
            panels: 0,
        }
    }

    pub fn merge(self, other: Self) -> Self {
        Self {
            value: self.value + other.value,
            abs_error: self.abs_error + other.abs_error,
            panels: self.panels + other.panels,
        }
    }
}

struct Panel<T> {
    a: f64,
    b: f64,
    value: T,
    error: f64,
}

impl<T> PartialEq for Panel<T> {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
    }
}

impl<T> Eq for Panel<T> {}

impl<T> PartialOrd for Panel<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T> Ord for Panel<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod_panel<T: Integrand, F: Fn(f64) -> T>(f: &F, a: f64, b: f64) -> Panel<T> {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);

    let fc = f(centre);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut abs_sum = fc.magnitude() * WGK[7];

    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(centre - dx);
        let f2 = f(centre + dx);
        let pair = f1 + f2;
        kronrod = kronrod + pair * WGK[j];
        abs_sum += (f1.magnitude() + f2.magnitude()) * WGK[j];
        if j % 2 == 1 {
            gauss = gauss + pair * WG[j / 2];
        }
    }

    let value = kronrod * half;
    let mut error = ((kronrod - gauss) * half).magnitude();
    let round_off = 50.0 * f64::EPSILON * abs_sum * half.abs();
    if round_off > error {
        error = round_off;
    }
    Panel { a, b, value, error }
}

/// Panels this narrow relative to their location are not bisected: the
/// outermost Kronrod nodes would round onto the endpoints. Their error
/// estimate is kept as is, so the reported total stays honest.
fn is_unrefinable(a: f64, b: f64) -> bool {
    let scale = a.abs().max(b.abs());
    (b - a) <= 1e4 * f64::EPSILON * scale
}

/// Integrates `f` over the partition given by `points` (sorted, at least two
/// entries). Each initial interval is one panel; refinement is global.
pub fn integrate_partition<T, F>(f: F, points: &[f64], opts: &QuadratureOptions) -> Integral<T>
where
    T: Integrand,
    F: Fn(f64) -> T,
{
    if points.len() < 2 {
        return Integral::zero();
    }

    let mut heap = BinaryHeap::new();
    let mut frozen: Vec<Panel<T>> = Vec::new();
    for w in points.windows(2) {
        if w[1] > w[0] {
            heap.push(kronrod_panel(&f, w[0], w[1]));
        }
    }
    let mut panels = heap.len();
    let mut total_err: f64 = heap.iter().map(|p| p.error).sum();
    let mut total_val = heap.iter().fold(T::zero(), |acc, p| acc + p.value);

    loop {
        let target = opts.abs_tol.max(opts.rel_tol * total_val.magnitude());
        if total_err <= target || panels >= opts.max_panels {
            break;
        }
        let Some(worst) = heap.pop() else { break };
        if is_unrefinable(worst.a, worst.b) {
            frozen.push(worst);
            continue;
        }
        let mid = 0.5 * (worst.a + worst.b);
        let left = kronrod_panel(&f, worst.a, mid);
        let right = kronrod_panel(&f, mid, worst.b);
        total_err += left.error + right.error - worst.error;
        total_val = total_val + left.value + right.value - worst.value;
        heap.push(left);
        heap.push(right);
        panels += 1;
    }

    let mut ordered: Vec<Panel<T>> = heap.into_vec().into_iter().chain(frozen).collect();
    ordered.sort_by(|p, q| p.a.total_cmp(&q.a));
    let value = ordered.iter().fold(T::zero(), |acc, p| acc + p.value);
    let abs_error = ordered.iter().map(|p| p.error).sum();
    Integral {
        value,
        abs_error,
        panels: ordered.len(),
    }
}

/// Builds a sorted partition of [a, b] containing every breakpoint that lies
/// strictly inside the interval.
pub fn partition(a: f64, b: f64, breakpoints: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut pts = vec![a, b];
    pts.extend(breakpoints.into_iter().filter(|&x| x > a && x < b));
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

/// Breakpoints that grade panels towards a near-real pole at `centre + i·height`:
/// width `height/4` within one `height` of the centre, then doubling outwards.
pub fn pole_grading(centre: f64, height: f64, a: f64, b: f64) -> Vec<f64> {
    let h = height.abs();
    if h == 0.0 || !h.is_finite() {
        return vec![centre];
    }
    let mut pts = vec![centre];
    for k in 1..=4 {
        let d = 0.25 * h * k as f64;
        pts.push(centre - d);
        pts.push(centre + d);
    }
    let span = (b - centre).abs().max((centre - a).abs());
    let mut d = 2.0 * h;
    while d < span {
        pts.push(centre - d);
        pts.push(centre + d);
        d *= 2.0;
    }
    pts
}
