//! Empirical wavelet coefficients, their sample variance, the pointwise
//! spectral density estimator with confidence intervals, and the variance
//! and discretization diagnostics.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::processes::{gamma_with, FinePath, ObservedPath, SpectralModel};
use crate::quad::{integrate, QuadConfig};
use crate::sampling::{build_shifts, ShiftFamily, DEFAULT_LAMBDA};
use crate::wavelet::{Kernel, MotherWavelet, RescaledWavelet};

/// Smallest record accepted by the estimator.
pub const MIN_OBSERVATIONS: usize = 16;

/// What to do when the tabulated wavelet support around a shift reaches
/// past the ends of the record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum BoundaryPolicy {
    /// Sum over the observed record only; the part of the support outside
    /// `[0, T_n]` carries no data and contributes nothing.
    #[default]
    Truncate,
    /// Reject shifts whose support `[b - a R', b + a R']` leaves `[0, T_n]`.
    Strict,
}

/// Which tabulated wavelet a coefficient uses.
#[derive(Debug, Clone, Copy)]
pub enum Wavelet<'a> {
    Plain(&'a MotherWavelet),
    Rescaled(&'a RescaledWavelet),
}

impl Wavelet<'_> {
    /// Half-width of the tabulated support in wavelet time.
    pub fn radius(&self) -> f64 {
        match self {
            Wavelet::Plain(w) => w.radius,
            Wavelet::Rescaled(r) => r.radius,
        }
    }

    pub fn kernel(&self) -> Kernel {
        match self {
            Wavelet::Plain(w) => Kernel::Plain { support: w.support },
            Wavelet::Rescaled(r) => Kernel::Rescaled {
                support: r.base.support,
                lambda: r.lambda,
            },
        }
    }
}

/// Index range `lo..hi` of observation times whose intervals can touch
/// `[left, right]`, widened by one on each side.
fn window(times: &[f64], left: f64, right: f64) -> (usize, usize) {
    let lo = times.partition_point(|&t| t <= left).saturating_sub(1);
    let hi = (times.partition_point(|&t| t < right) + 1).min(times.len());
    (lo, hi.max(lo))
}

fn check_support(path: &ObservedPath, b: f64, half_width: f64, index: usize, policy: BoundaryPolicy) -> Result<()> {
    let span = path.grid.span();
    if !(0.0..=span).contains(&b) {
        return Err(Error::domain(format!("shift {b} lies outside the record [0, {span}]")));
    }
    if policy == BoundaryPolicy::Strict && (b - half_width < 0.0 || b + half_width > span) {
        return Err(Error::Boundary {
            index,
            lo: b - half_width,
            hi: b + half_width,
            span,
        });
    }
    Ok(())
}

/// `sum_i X(t_i) [A(t_{i+1}) - A(t_i)]` for an antiderivative lookup `anti`
/// evaluated at the node times, restricted to the indices `lo..hi`.
#[inline]
fn riemann_sum<T, F>(times: &[f64], values: &[f64], lo: usize, hi: usize, anti: F) -> T
where
    T: Copy + Default + std::ops::Add<Output = T> + std::ops::Sub<Output = T> + std::ops::Mul<f64, Output = T>,
    F: Fn(f64) -> T,
{
    let n = times.len() - 1;
    let hi = hi.min(n + 1);
    if hi <= lo + 1 {
        return T::default();
    }
    let mut acc = T::default();
    let mut prev = anti(times[lo]);
    for i in lo..hi - 1 {
        let next = anti(times[i + 1]);
        acc = acc + (next - prev) * values[i];
        prev = next;
    }
    acc
}

/// Plain mode: `e_X(a, b) = sqrt(a) sum_i X(t_i) [Psi((t_{i+1}-b)/a) - Psi((t_i-b)/a)]`.
/// Rescaled mode (`a = 1/xi`): the inner sum
/// `sum_i X(t_i) int_{t_i}^{t_{i+1}} psi_lambda(xi (t - b)) dt`, with no
/// scale prefactor.
pub fn empirical_coeff(path: &ObservedPath, wavelet: Wavelet<'_>, a: f64, b: f64, policy: BoundaryPolicy) -> Result<Complex64> {
    coeff_at(path, wavelet, a, b, policy, 0, true)
}

/// The same sum without windowing, for checking the windowed kernel.
pub fn empirical_coeff_full(path: &ObservedPath, wavelet: Wavelet<'_>, a: f64, b: f64) -> Result<Complex64> {
    coeff_at(path, wavelet, a, b, BoundaryPolicy::Truncate, 0, false)
}

fn coeff_at(
    path: &ObservedPath,
    wavelet: Wavelet<'_>,
    a: f64,
    b: f64,
    policy: BoundaryPolicy,
    index: usize,
    windowed: bool,
) -> Result<Complex64> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::domain(format!("scale {a} must be positive")));
    }
    let half_width = a * wavelet.radius();
    check_support(path, b, half_width, index, policy)?;
    let times = path.times();
    let (lo, hi) = if windowed {
        window(times, b - half_width, b + half_width)
    } else {
        (0, times.len())
    };
    let inv = 1.0 / a;
    Ok(match wavelet {
        Wavelet::Plain(w) => {
            let s: f64 = riemann_sum(times, &path.values, lo, hi, |t| w.eval_big_psi((t - b) * inv));
            Complex64::new(a.sqrt() * s, 0.0)
        }
        Wavelet::Rescaled(r) => {
            let s: Complex64 = riemann_sum(times, &path.values, lo, hi, |t| r.eval_phi((t - b) * inv));
            s * a
        }
    })
}

/// Coefficients at every shift of the family, in shift order.
pub fn coefficients(
    path: &ObservedPath,
    wavelet: Wavelet<'_>,
    a: f64,
    shifts: &ShiftFamily,
    policy: BoundaryPolicy,
) -> Result<Vec<Complex64>> {
    shifts
        .shifts
        .iter()
        .enumerate()
        .map(|(k, &b)| coeff_at(path, wavelet, a, b, policy, k, true))
        .collect()
}

/// `J_n(a)`: mean squared modulus of the coefficients over the shifts.
/// In rescaled mode the inner sums are divided by `sqrt(a)` first, so that
/// `J` estimates the variance of the continuous coefficient in both modes.
pub fn sample_variance_j(
    path: &ObservedPath,
    shifts: &ShiftFamily,
    a: f64,
    wavelet: Wavelet<'_>,
    policy: BoundaryPolicy,
) -> Result<f64> {
    let coeffs = coefficients(path, wavelet, a, shifts, policy)?;
    let mean = coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>() / coeffs.len() as f64;
    Ok(match wavelet {
        Wavelet::Plain(_) => mean,
        Wavelet::Rescaled(_) => mean / a,
    })
}

/// `d_X(a, b) = a^{-1/2} int psi((t - b)/a) X(t) dt` by the trapezoid rule on
/// the fine companion grid, restricted to `[0, T]` under `Truncate`.
pub fn continuous_coeff_oracle(
    fine: &FinePath,
    wavelet: Wavelet<'_>,
    a: f64,
    b: f64,
    policy: BoundaryPolicy,
) -> Result<Complex64> {
    let (step, radius) = match wavelet {
        Wavelet::Plain(w) => (w.step, w.radius),
        Wavelet::Rescaled(r) => (r.step, r.radius),
    };
    if fine.step > a * step / 4.0 * (1.0 + 1e-12) {
        return Err(Error::domain(format!(
            "fine grid step {} exceeds a * h / 4 = {}",
            fine.step,
            a * step / 4.0
        )));
    }
    let span = fine.span();
    let half_width = a * radius;
    if policy == BoundaryPolicy::Strict && (b - half_width < 0.0 || b + half_width > span) {
        return Err(Error::Boundary {
            index: 0,
            lo: b - half_width,
            hi: b + half_width,
            span,
        });
    }
    let lo = ((b - half_width) / fine.step).floor().max(0.0) as usize;
    let hi = (((b + half_width) / fine.step).ceil() as usize).min(fine.values.len() - 1);
    if hi <= lo {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let inv = 1.0 / a;
    let term = |j: usize| -> Complex64 {
        let u = (j as f64 * fine.step - b) * inv;
        let k = match wavelet {
            Wavelet::Plain(w) => Complex64::new(w.eval_psi(u), 0.0),
            Wavelet::Rescaled(r) => r.eval_psi_lambda(u),
        };
        k * fine.values[j]
    };
    let mut acc = (term(lo) + term(hi)) * 0.5;
    for j in lo + 1..hi {
        acc += term(j);
    }
    Ok(acc * (fine.step / a.sqrt()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscretizationReport {
    /// `|e_X(a, c_k) - d_X(a, c_k)|^2` per shift.
    pub squared_errors: Vec<f64>,
    pub mean: f64,
    /// `n delta_n` times the mean.
    pub scaled: f64,
}

/// Compares empirical and continuous coefficients at every shift. In
/// rescaled mode both are normalized as coefficients of `psi_lambda` at
/// scale `a`.
pub fn discretization_error_report(
    path: &ObservedPath,
    wavelet: Wavelet<'_>,
    a: f64,
    shifts: &ShiftFamily,
    policy: BoundaryPolicy,
) -> Result<DiscretizationReport> {
    let fine = path
        .fine
        .as_ref()
        .ok_or_else(|| Error::domain("discretization report needs a fine-grid companion path"))?;
    let scale = match wavelet {
        Wavelet::Plain(_) => 1.0,
        Wavelet::Rescaled(_) => 1.0 / a.sqrt(),
    };
    let squared_errors = shifts
        .shifts
        .iter()
        .enumerate()
        .map(|(k, &b)| {
            let e = coeff_at(path, wavelet, a, b, policy, k, true)? * scale;
            let d = continuous_coeff_oracle(fine, wavelet, a, b, policy)?;
            Ok((e - d).norm_sqr())
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean = squared_errors.iter().sum::<f64>() / squared_errors.len() as f64;
    let n = path.grid.n() as f64;
    Ok(DiscretizationReport {
        squared_errors,
        mean,
        scaled: n * path.grid.delta * mean,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub lambda: f64,
    pub rho: f64,
    /// Number of shift intervals; `None` uses one per observation interval.
    pub shift_count: Option<usize>,
    pub level: f64,
    pub policy: BoundaryPolicy,
    /// Divisor of the raw coefficient energy; `None` uses `int |psi_hat|^2`.
    pub normalization: Option<f64>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            rho: 0.8,
            shift_count: None,
            level: 0.95,
            policy: BoundaryPolicy::Truncate,
            normalization: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointEstimate {
    pub xi: f64,
    pub f_hat: f64,
    pub ci_halfwidth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FrequencyUnit {
    #[default]
    RadPerSec,
    Hz,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyFailure {
    pub frequency: f64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub unit: FrequencyUnit,
    pub frequencies: Vec<f64>,
    pub f_hat: Vec<f64>,
    pub ci_halfwidths: Vec<f64>,
    pub level: f64,
    pub lambda: f64,
    pub span: f64,
    pub n: usize,
    pub normalization: f64,
    #[serde(default)]
    pub failures: Vec<FrequencyFailure>,
}

impl EstimateResult {
    /// Frequencies in Hz (`nu = xi / 2 pi`) and densities per Hz
    /// (`2 pi f(2 pi nu)`), so integrals over a band are unchanged.
    pub fn to_hz(&self) -> Self {
        if self.unit == FrequencyUnit::Hz {
            return self.clone();
        }
        let two_pi = 2.0 * PI;
        Self {
            unit: FrequencyUnit::Hz,
            frequencies: self.frequencies.iter().map(|x| x / two_pi).collect(),
            f_hat: self.f_hat.iter().map(|v| v * two_pi).collect(),
            ci_halfwidths: self.ci_halfwidths.iter().map(|v| v * two_pi).collect(),
            failures: self
                .failures
                .iter()
                .map(|f| FrequencyFailure {
                    frequency: f.frequency / two_pi,
                    message: f.message.clone(),
                })
                .collect(),
            ..self.clone()
        }
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }
}

/// Normal quantile `z` with `P(|Z| <= z) = level`.
pub fn two_sided_z(level: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&level) {
        return Err(Error::domain(format!("confidence level {level} must lie in [0, 1)")));
    }
    if level == 0.0 {
        return Ok(0.0);
    }
    let n = Normal::standard();
    Ok(n.inverse_cdf(0.5 * (1.0 + level)))
}

/// Pointwise estimator of the spectral density built on one rescaled wavelet.
#[derive(Debug, Clone)]
pub struct Estimator {
    pub wavelet: Arc<RescaledWavelet>,
    pub config: EstimatorConfig,
    normalization: f64,
    q_ratio: f64,
}

impl Estimator {
    pub fn new(mother: Arc<MotherWavelet>, config: EstimatorConfig) -> Result<Self> {
        let wavelet = Arc::new(RescaledWavelet::build(mother, config.lambda)?);
        Self::with_wavelet(wavelet, config)
    }

    pub fn with_wavelet(wavelet: Arc<RescaledWavelet>, config: EstimatorConfig) -> Result<Self> {
        if (wavelet.lambda - config.lambda).abs() > 0.0 {
            return Err(Error::domain("estimator lambda differs from the tabulated wavelet"));
        }
        two_sided_z(config.level)?;
        let f = wavelet.base.functionals;
        let normalization = config.normalization.unwrap_or(f.int_psihat_sq);
        if !(normalization > 0.0) {
            return Err(Error::domain("normalization constant must be positive"));
        }
        Ok(Self {
            q_ratio: f.q_ratio(),
            normalization,
            wavelet,
            config,
        })
    }

    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    /// Shift family for a record, following the configured count and `rho`.
    pub fn shifts_for(&self, path: &ObservedPath) -> Result<ShiftFamily> {
        let n = path.grid.n();
        if n < MIN_OBSERVATIONS {
            return Err(Error::domain(format!(
                "record has {n} intervals; at least {MIN_OBSERVATIONS} are needed"
            )));
        }
        build_shifts(path.grid.span(), self.config.shift_count.unwrap_or(n).max(1), self.config.rho)
    }

    /// Half-width of the `level` interval around `f_hat` at frequency `xi`.
    pub fn ci_halfwidth(&self, f_hat: f64, xi: f64, span: f64) -> f64 {
        let z = two_sided_z(self.config.level).expect("level validated at construction");
        z * f_hat * ((4.0 * PI / xi) * self.q_ratio * self.config.lambda / span).sqrt()
    }

    pub fn estimate_f(&self, path: &ObservedPath, xi: f64, shifts: &ShiftFamily) -> Result<PointEstimate> {
        if !(xi > 0.0 && xi.is_finite()) {
            return Err(Error::domain(format!("frequency {xi} must be positive")));
        }
        let a = 1.0 / xi;
        let coeffs = coefficients(path, Wavelet::Rescaled(&self.wavelet), a, shifts, self.config.policy)?;
        let energy = coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>() / coeffs.len() as f64;
        let f_hat = xi * energy / self.normalization;
        Ok(PointEstimate {
            xi,
            f_hat,
            ci_halfwidth: self.ci_halfwidth(f_hat, xi, path.grid.span()),
        })
    }

    /// Estimates at every frequency (rad/s), in parallel. Frequencies that
    /// fail are reported in `failures` and left out of the arrays.
    pub fn estimate_curve(&self, path: &ObservedPath, frequencies: &[f64]) -> Result<EstimateResult> {
        let shifts = self.shifts_for(path)?;
        let outcomes: Vec<Result<PointEstimate>> = frequencies
            .par_iter()
            .map(|&xi| self.estimate_f(path, xi, &shifts))
            .collect();
        let mut result = EstimateResult {
            unit: FrequencyUnit::RadPerSec,
            frequencies: Vec::new(),
            f_hat: Vec::new(),
            ci_halfwidths: Vec::new(),
            level: self.config.level,
            lambda: self.config.lambda,
            span: path.grid.span(),
            n: path.grid.n(),
            normalization: self.normalization,
            failures: Vec::new(),
        };
        for (xi, out) in frequencies.iter().zip(outcomes) {
            match out {
                Ok(p) => {
                    result.frequencies.push(p.xi);
                    result.f_hat.push(p.f_hat);
                    result.ci_halfwidths.push(p.ci_halfwidth);
                }
                Err(e) => result.failures.push(FrequencyFailure {
                    frequency: *xi,
                    message: e.to_string(),
                }),
            }
        }
        Ok(result)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleSpectrum {
    pub scales: Vec<f64>,
    pub j: Vec<f64>,
    /// Limit variances `4 pi a^2 int |psi_hat(a z)|^4 f^2(z) dz` when a model is known.
    pub variances: Option<Vec<f64>>,
}

/// `J_n(a)` at each scale with the plain wavelet.
pub fn scale_spectrum(
    path: &ObservedPath,
    shifts: &ShiftFamily,
    scales: &[f64],
    mother: &MotherWavelet,
    policy: BoundaryPolicy,
    model: Option<&SpectralModel>,
) -> Result<ScaleSpectrum> {
    let j = scales
        .par_iter()
        .map(|&a| sample_variance_j(path, shifts, a, Wavelet::Plain(mother), policy))
        .collect::<Result<Vec<f64>>>()?;
    let variances = match model {
        None => None,
        Some(m) => {
            let kernel = Kernel::Plain { support: mother.support };
            Some(
                scales
                    .iter()
                    .map(|&a| variance_limit(|x| m.density(x), &kernel, a))
                    .collect::<Result<Vec<f64>>>()?,
            )
        }
    };
    Ok(ScaleSpectrum {
        scales: scales.to_vec(),
        j,
        variances,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceSn {
    pub finite_n: f64,
    pub limit: f64,
    /// `c_n - c_0`, the factor linking the two.
    pub shift_span: f64,
}

/// True for kernels whose transform is even, so that coefficients are real.
fn real_kernel(kernel: &Kernel) -> bool {
    matches!(kernel, Kernel::Plain { .. })
}

/// `(2 pi) a^2 int |hat(a z)|^4 f^2(z) dz`, doubled for real kernels, which
/// gives `4 pi a^2 int |psi_hat(a z)|^4 f^2(z) dz` for the plain wavelet.
pub fn variance_limit<F: Fn(f64) -> f64>(density: F, kernel: &Kernel, a: f64) -> Result<f64> {
    let cfg = QuadConfig {
        rel_tol: 1e-10,
        abs_tol: 1e-300,
        max_intervals: 4000,
        initial_panels: 8,
    };
    let mut total = 0.0;
    for (lo, hi) in kernel.bands() {
        let g = |z: f64| {
            let k = kernel.hat(a * z);
            if k == 0.0 {
                0.0
            } else {
                let f = density(z);
                k.powi(4) * f * f
            }
        };
        total += integrate(g, lo / a, hi / a, &cfg)?.value;
    }
    let factor = if real_kernel(kernel) { 4.0 * PI } else { 2.0 * PI };
    Ok(factor * a * a * total)
}

/// Variance of `J_n(a)` over the shift family: the finite-`n` double sum of
/// squared covariances (by its Toeplitz structure) and its limit.
pub fn variance_sn_with<F: Fn(f64) -> f64 + Sync>(
    density: F,
    kernel: &Kernel,
    shifts: &ShiftFamily,
    a: f64,
) -> Result<VarianceSn> {
    let m = shifts.len();
    let spacing = shifts.spacing();
    let g2 = (0..m)
        .into_par_iter()
        .map(|j| Ok(gamma_with(&density, kernel, j as f64 * spacing, a, a)?.norm_sqr()))
        .collect::<Result<Vec<f64>>>()?;
    let mut sum = m as f64 * g2[0];
    for (j, v) in g2.iter().enumerate().skip(1) {
        sum += 2.0 * (m - j) as f64 * v;
    }
    let factor = if real_kernel(kernel) { 2.0 } else { 1.0 };
    let finite_n = factor * a * a * sum / (m as f64 * m as f64);
    let shift_span = shifts.shifts.last().unwrap_or(&0.0) - shifts.shifts.first().unwrap_or(&0.0);
    Ok(VarianceSn {
        finite_n,
        limit: variance_limit(&density, kernel, a)?,
        shift_span,
    })
}

pub fn variance_sn(shifts: &ShiftFamily, a: f64, model: &SpectralModel, kernel: &Kernel) -> Result<VarianceSn> {
    variance_sn_with(|x| model.density(x), kernel, shifts, a)
}

/// The same double sum evaluated term by term.
pub fn variance_sn_brute_force<F: Fn(f64) -> f64>(density: F, kernel: &Kernel, shifts: &ShiftFamily, a: f64) -> Result<f64> {
    let c = &shifts.shifts;
    let m = c.len();
    let mut sum = 0.0;
    for k in 0..m {
        for l in 0..m {
            sum += gamma_with(&density, kernel, c[k] - c[l], a, a)?.norm_sqr();
        }
    }
    let factor = if real_kernel(kernel) { 2.0 } else { 1.0 };
    Ok(factor * a * a * sum / (m as f64 * m as f64))
}
