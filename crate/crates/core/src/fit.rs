//! Ordinary least squares on log-log data.

use crate::error::{invalid_input, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square of the regression residuals.
    pub residual: f64,
}

/// Least-squares line through `(xs[k], ys[k])`.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    if xs.len() != ys.len() {
        return Err(invalid_input(format!(
            "length mismatch: {} abscissae, {} ordinates",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::DegenerateFit("fewer than two points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("abscissae are all equal".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    Ok(LineFit {
        slope,
        intercept,
        residual: (ss / n).sqrt(),
    })
}

/// Fits `log(values) = intercept + slope·log(abscissae)`.
pub fn fit_log_log(abscissae: &[f64], values: &[f64]) -> Result<LineFit> {
    if abscissae
        .iter()
        .chain(values)
        .any(|v| !(*v > 0.0) || !v.is_finite())
    {
        return Err(invalid_input("log-log fit needs finite positive data"));
    }
    let lx: Vec<f64> = abscissae.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    fit_line(&lx, &ly)
}
