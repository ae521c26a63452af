//! Log-log regression for the Hurst index, two-segment fits for piecewise
//! power laws, and band energies of an estimated spectrum.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{EstimateResult, FrequencyUnit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    /// `J(a) ~ C a^(2H + 1)`.
    Scale,
    /// `f(xi) ~ C xi^-(2H + 1)`.
    Frequency,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub sse: f64,
    pub slope_se: f64,
    pub points: usize,
}

/// Ordinary least squares of `y` on `x`.
pub fn ols(x: &[f64], y: &[f64]) -> Result<LineFit> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::Size(format!("{n} abscissae but {} ordinates", y.len())));
    }
    if n < 2 {
        return Err(Error::domain("a line fit needs at least two points"));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::domain("abscissae must not all coincide"));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let slope_se = if n > 2 { (sse / (n - 2) as f64 / sxx).sqrt() } else { f64::NAN };
    Ok(LineFit {
        slope,
        intercept,
        sse,
        slope_se,
        points: n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub axis: Axis,
    pub line: LineFit,
    pub h_hat: f64,
    /// `exp(intercept)`, the constant of the power law.
    pub c_hat: f64,
    /// Standard error of `h_hat` from the OLS slope.
    pub h_se: f64,
}

fn hurst_from_slope(axis: Axis, slope: f64) -> f64 {
    match axis {
        Axis::Scale => (slope - 1.0) / 2.0,
        Axis::Frequency => (-slope - 1.0) / 2.0,
    }
}

pub fn loglog_fit(xs: &[f64], ys: &[f64], axis: Axis) -> Result<LogLogFit> {
    if xs.len() < 3 {
        return Err(Error::domain(format!("log-log fit needs at least 3 points, got {}", xs.len())));
    }
    if let Some(i) = ys.iter().position(|&y| !(y > 0.0)) {
        return Err(Error::domain(format!("value {} at index {i} is not positive", ys[i])));
    }
    if let Some(i) = xs.iter().position(|&x| !(x > 0.0)) {
        return Err(Error::domain(format!("abscissa {} at index {i} is not positive", xs[i])));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let line = ols(&lx, &ly)?;
    Ok(LogLogFit {
        axis,
        h_hat: hurst_from_slope(axis, line.slope),
        c_hat: line.intercept.exp(),
        h_se: line.slope_se / 2.0,
        line,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoSegmentFit {
    /// Geometric midpoint of the two data points around the split.
    pub breakpoint: f64,
    /// Number of points in the left segment.
    pub split: usize,
    pub left: LineFit,
    pub right: LineFit,
    pub sse: f64,
    pub single: LineFit,
}

impl TwoSegmentFit {
    /// Two-segment SSE divided by the single-line SSE.
    pub fn sse_ratio(&self) -> f64 {
        if self.single.sse > 0.0 {
            self.sse / self.single.sse
        } else {
            1.0
        }
    }
}

/// Best split of the points (sorted by `log_xs`) into two independent OLS
/// lines, by exhaustive search. Ties go to the smaller breakpoint.
pub fn two_segment_fit(log_xs: &[f64], log_ys: &[f64], min_points_per_side: usize) -> Result<TwoSegmentFit> {
    let m = log_xs.len();
    if m != log_ys.len() {
        return Err(Error::Size(format!("{m} abscissae but {} ordinates", log_ys.len())));
    }
    if min_points_per_side < 3 {
        return Err(Error::domain("each segment needs at least 3 points"));
    }
    if m < 2 * min_points_per_side {
        return Err(Error::domain(format!(
            "{m} points cannot be split into two segments of {min_points_per_side}"
        )));
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| log_xs[i].total_cmp(&log_xs[j]));
    let x: Vec<f64> = order.iter().map(|&i| log_xs[i]).collect();
    let y: Vec<f64> = order.iter().map(|&i| log_ys[i]).collect();
    let single = ols(&x, &y)?;

    let my = y.iter().sum::<f64>() / m as f64;
    let sst: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let tie = 1e-10 * (1.0 + sst);

    let mut best: Option<(usize, LineFit, LineFit, f64)> = None;
    for k in min_points_per_side..=m - min_points_per_side {
        if x[k] == x[k - 1] {
            continue;
        }
        let left = ols(&x[..k], &y[..k])?;
        let right = ols(&x[k..], &y[k..])?;
        let sse = left.sse + right.sse;
        if best.as_ref().is_none_or(|b| sse < b.3 - tie) {
            best = Some((k, left, right, sse));
        }
    }
    let (k, left, right, sse) =
        best.ok_or_else(|| Error::domain("no admissible breakpoint between distinct abscissae"))?;
    Ok(TwoSegmentFit {
        breakpoint: (0.5 * (x[k - 1] + x[k])).exp(),
        split: k,
        left,
        right,
        sse,
        single,
    })
}

/// Integral of the estimated density over `[lo_hz, hi_hz]`, in the units
/// of `int f(xi) dxi` over the matching angular band.
pub fn band_energy(result: &EstimateResult, lo_hz: f64, hi_hz: f64) -> Result<f64> {
    if !(hi_hz >= lo_hz) {
        return Err(Error::domain(format!("band [{lo_hz}, {hi_hz}] is reversed")));
    }
    if lo_hz == hi_hz {
        return Ok(0.0);
    }
    let to_unit = match result.unit {
        FrequencyUnit::Hz => 1.0,
        FrequencyUnit::RadPerSec => 2.0 * PI,
    };
    let (lo, hi) = (lo_hz * to_unit, hi_hz * to_unit);
    let mut pts: Vec<(f64, f64)> = result.frequencies.iter().copied().zip(result.f_hat.iter().copied()).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    if pts.len() < 2 {
        return Err(Error::domain("band energy needs at least two estimated frequencies"));
    }
    let (first, last) = (pts[0].0, pts[pts.len() - 1].0);
    let slack = 1e-9 * last;
    if lo < first - slack || hi > last + slack {
        return Err(Error::domain(format!(
            "band [{lo_hz}, {hi_hz}] Hz is outside the estimated range [{:.6}, {:.6}] Hz",
            first / to_unit,
            last / to_unit
        )));
    }
    let (lo, hi) = (lo.max(first), hi.min(last));
    let interp = |x: f64| -> f64 {
        let i = pts.partition_point(|p| p.0 <= x).clamp(1, pts.len() - 1);
        let (x0, y0) = pts[i - 1];
        let (x1, y1) = pts[i];
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    };
    let mut nodes = vec![(lo, interp(lo))];
    nodes.extend(pts.iter().copied().filter(|p| p.0 > lo && p.0 < hi));
    nodes.push((hi, interp(hi)));
    Ok(nodes.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum())
}

/// `count` log-spaced values from `lo` to `hi` inclusive.
pub fn geometric_grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo) || count < 2 {
        return Err(Error::domain("geometric grid needs 0 < lo < hi and at least two points"));
    }
    let r = (hi / lo).ln() / (count - 1) as f64;
    Ok((0..count).map(|i| if i + 1 == count { hi } else { lo * (r * i as f64).exp() }).collect())
}

/// Default Hurst-regression scales: 8 per decade from `8 delta` to `T / 64`.
pub fn default_scales(delta: f64, span: f64) -> Result<Vec<f64>> {
    let lo = 8.0 * delta;
    let hi = (span / 64.0).max(2.0 * lo);
    let decades = (hi / lo).log10();
    let count = ((8.0 * decades).round() as usize + 1).max(3);
    geometric_grid(lo, hi, count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn result_in(unit: FrequencyUnit, freqs: Vec<f64>, values: Vec<f64>) -> EstimateResult {
        EstimateResult {
            unit,
            ci_halfwidths: vec![0.0; freqs.len()],
            frequencies: freqs,
            f_hat: values,
            level: 0.95,
            lambda: 15.0,
            span: 1.0,
            n: 1,
            normalization: 1.0,
            failures: vec![],
        }
    }

    #[test]
    fn exact_power_law() {
        let a = [0.5, 1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = a.iter().map(|x: &f64| 3.0 * x.powf(1.8)).collect();
        let fit = loglog_fit(&a, &y, Axis::Scale).unwrap();
        assert!((fit.h_hat - 0.4).abs() < 1e-12);
        assert!((fit.c_hat - 3.0).abs() < 1e-12);
        let f: Vec<f64> = a.iter().map(|x: &f64| 2.0 * x.powf(-1.4)).collect();
        let fit = loglog_fit(&a, &f, Axis::Frequency).unwrap();
        assert!((fit.h_hat - 0.2).abs() < 1e-12);
    }

    #[test]
    fn loglog_rejects_bad_input() {
        assert!(loglog_fit(&[1.0], &[1.0], Axis::Scale).is_err());
        assert!(loglog_fit(&[1.0, 2.0, 3.0], &[1.0, 0.0, 2.0], Axis::Scale).is_err());
    }

    #[test]
    fn kinked_line_recovered() {
        let lx: Vec<f64> = (0..40).map(|i| (0.01f64).ln() + i as f64 * 0.1).collect();
        let kink = 0.1f64.ln();
        let ly: Vec<f64> = lx
            .iter()
            .map(|&x| if x < kink { -1.0 * (x - kink) } else { -3.0 * (x - kink) })
            .collect();
        let fit = two_segment_fit(&lx, &ly, 3).unwrap();
        assert!(fit.sse < 1e-20);
        let k = fit.split;
        assert!(lx[k - 1] < kink + 1e-9 && kink <= lx[k] + 1e-9);
        assert!((fit.left.slope + 1.0).abs() < 1e-10 && (fit.right.slope + 3.0).abs() < 1e-10);
    }

    #[test]
    fn single_line_ties_to_smallest_split() {
        let lx: Vec<f64> = (0..12).map(|i| i as f64 * 0.3).collect();
        let ly: Vec<f64> = lx.iter().map(|x| 2.0 - 1.7 * x).collect();
        let fit = two_segment_fit(&lx, &ly, 3).unwrap();
        assert_eq!(fit.split, 3);
        assert!((fit.left.slope - fit.right.slope).abs() < 1e-8);
        assert!(two_segment_fit(&lx[..5], &ly[..5], 3).is_err());
    }

    #[test]
    fn band_energy_basics() {
        let freqs: Vec<f64> = (0..=100).map(|i| 0.01 * i as f64).collect();
        let r = result_in(FrequencyUnit::Hz, freqs.clone(), vec![2.5; 101]);
        assert!((band_energy(&r, 0.04, 0.15).unwrap() - 2.5 * 0.11).abs() < 1e-12);
        assert_eq!(band_energy(&r, 0.2, 0.2).unwrap(), 0.0);
        assert!(band_energy(&r, 0.5, 1.5).is_err());
        // A rad/s result integrates over the matching angular band.
        let rad = result_in(
            FrequencyUnit::RadPerSec,
            freqs.iter().map(|f| f * 2.0 * PI).collect(),
            vec![2.5; 101],
        );
        assert!((band_energy(&rad, 0.04, 0.15).unwrap() - 2.5 * 0.11 * 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn band_energy_of_ou_curve() {
        // Closed-form OU density sampled on a fine grid against the arctan integral.
        let alpha = 1.0;
        let f = |x: f64| alpha / (PI * (alpha * alpha + x * x));
        let freqs: Vec<f64> = (0..=2000).map(|i| 0.0005 * i as f64 * 2.0 * PI).collect();
        let vals = freqs.iter().map(|&x| f(x)).collect();
        let r = result_in(FrequencyUnit::RadPerSec, freqs, vals);
        let exact = |lo: f64, hi: f64| ((2.0 * PI * hi / alpha).atan() - (2.0 * PI * lo / alpha).atan()) / PI;
        assert!((band_energy(&r, 0.04, 0.15).unwrap() - exact(0.04, 0.15)).abs() < 1e-6);
        assert!((band_energy(&r.to_hz(), 0.15, 0.5).unwrap() - exact(0.15, 0.5)).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn scaling_only_moves_intercept(c in 0.01f64..100.0, h in 0.05f64..0.95, noise in proptest::collection::vec(-0.1f64..0.1, 6)) {
            let a = [0.5f64, 0.8, 1.3, 2.0, 3.1, 4.0];
            let y: Vec<f64> = a.iter().zip(&noise).map(|(x, e): (&f64, &f64)| x.powf(2.0 * h + 1.0) * e.exp()).collect();
            let yc: Vec<f64> = y.iter().map(|v| v * c).collect();
            let f1 = loglog_fit(&a, &y, Axis::Scale).unwrap();
            let f2 = loglog_fit(&a, &yc, Axis::Scale).unwrap();
            prop_assert!((f1.h_hat - f2.h_hat).abs() < 1e-10);
        }

        #[test]
        fn two_segments_never_worse(ys in proptest::collection::vec(-5.0f64..5.0, 8..30)) {
            let xs: Vec<f64> = (0..ys.len()).map(|i| i as f64).collect();
            let fit = two_segment_fit(&xs, &ys, 3).unwrap();
            prop_assert!(fit.sse <= fit.single.sse + 1e-9);
        }

        #[test]
        fn band_energy_is_additive(vals in proptest::collection::vec(0.0f64..10.0, 20), cut in 0.06f64..0.16) {
            let freqs: Vec<f64> = (0..20).map(|i| 0.02 + 0.01 * i as f64).collect();
            let r = result_in(FrequencyUnit::Hz, freqs, vals);
            let whole = band_energy(&r, 0.03, 0.2).unwrap();
            let parts = band_energy(&r, 0.03, cut).unwrap() + band_energy(&r, cut, 0.2).unwrap();
            prop_assert!((whole - parts).abs() < 1e-12);
        }
    }
}
