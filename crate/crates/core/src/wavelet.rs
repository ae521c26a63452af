//! Fourier-defined mother wavelet and its modulated, dilated family.
//!
//! The wavelet is given by its transform
//! `psi_hat(xi) = exp(-1 / (|xi| (L - |xi|)))` on `0 < |xi| < L`, zero elsewhere.
//! It has an essential zero at the origin, so every moment of `psi` vanishes,
//! and `psi` itself is real, even and decays faster than any power.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{integrate, QuadConfig};

/// Default upper edge of the frequency support.
pub const DEFAULT_SUPPORT: f64 = 5.0;

/// `psi_hat` for a general support bound `support`.
pub fn psi_hat_with(support: f64, xi: f64) -> f64 {
    let a = xi.abs();
    if a > 0.0 && a < support {
        (-1.0 / (a * (support - a))).exp()
    } else {
        0.0
    }
}

/// `psi_hat` with the default support bound 5.
pub fn eval_psi_hat(xi: f64) -> f64 {
    psi_hat_with(DEFAULT_SUPPORT, xi)
}

/// The three integrals that enter the estimator normalization and its
/// limiting variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralFunctionals {
    pub int_psihat_sq: f64,
    pub int_psihat_4: f64,
    pub norm_psi_sq: f64,
}

impl SpectralFunctionals {
    /// `Q = int |psi_hat|^4 / (int |psi_hat|^2)^2`.
    pub fn q_ratio(&self) -> f64 {
        self.int_psihat_4 / (self.int_psihat_sq * self.int_psihat_sq)
    }
}

/// Integrates `g(|psi_hat|)` over the symmetric support.
pub fn integrate_even_transform<F: Fn(f64) -> f64>(support: f64, g: F) -> Result<f64> {
    let cfg = QuadConfig {
        rel_tol: 1e-12,
        abs_tol: 1e-300,
        max_intervals: 2000,
        initial_panels: 8,
    };
    Ok(2.0 * integrate(g, 0.0, support, &cfg)?.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveletConfig {
    pub support: f64,
    pub step: f64,
    pub tail_tol: f64,
    /// Largest admissible truncation radius.
    pub radius_cap: f64,
}

impl Default for WaveletConfig {
    fn default() -> Self {
        Self {
            support: DEFAULT_SUPPORT,
            step: 1.0 / 64.0,
            tail_tol: 1e-8,
            radius_cap: 4096.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MotherWavelet {
    pub support: f64,
    pub step: f64,
    pub radius: f64,
    pub tail_tol: f64,
    /// Number of grid steps on each side of the origin; the grid is
    /// `t_k = (k - half_len) * step` for `k = 0..=2 * half_len`.
    pub half_len: usize,
    pub psi_table: Vec<f64>,
    pub big_psi_table: Vec<f64>,
    pub functionals: SpectralFunctionals,
    /// `int |psi|` over the table, the scale of the tail criterion.
    pub l1_norm: f64,
}

/// Inverse transform of a frequency function sampled on the FFT grid
/// matching time step `step`. Returns complex samples at `t = k * step` for
/// `k` in `-half..=half`, ordered from most negative to most positive.
fn inverse_transform<F: Fn(f64) -> f64 + Sync>(transform: F, step: f64, half: usize) -> Vec<Complex64> {
    let needed = 2 * half + 1;
    let mut size = needed.next_power_of_two();
    // Keep the periodic images of the table well away from its edges.
    if (size as f64) < 1.25 * needed as f64 {
        size *= 2;
    }
    let d_omega = 2.0 * PI / (size as f64 * step);
    let mut buf: Vec<Complex64> = (0..size)
        .map(|m| {
            let signed = if m <= size / 2 { m as f64 } else { m as f64 - size as f64 };
            Complex64::new(transform(signed * d_omega), 0.0)
        })
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_inverse(size).process(&mut buf);
    let scale = 1.0 / (size as f64 * step);
    (0..needed)
        .map(|i| {
            let k = i as isize - half as isize;
            let idx = k.rem_euclid(size as isize) as usize;
            buf[idx] * scale
        })
        .collect()
}

fn cumulative_trapezoid<T>(values: &[T], step: f64) -> Vec<T>
where
    T: Copy + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T> + Default,
{
    let mut out = Vec::with_capacity(values.len());
    let mut acc = T::default();
    out.push(acc);
    for w in values.windows(2) {
        acc = acc + (w[0] + w[1]) * (0.5 * step);
        out.push(acc);
    }
    out
}

#[inline]
fn interp_index(x: f64, radius: f64, step: f64, last: usize) -> Option<(usize, f64)> {
    let u = (x + radius) / step;
    if u <= 0.0 {
        return None;
    }
    let i = u.floor() as usize;
    if i >= last {
        return Some((last, 0.0));
    }
    Some((i, u - i as f64))
}

impl MotherWavelet {
    pub fn build(cfg: &WaveletConfig) -> Result<Self> {
        if !(cfg.support > 0.0 && cfg.support.is_finite()) {
            return Err(Error::domain("wavelet support bound must be positive"));
        }
        if !(cfg.step > 0.0 && cfg.step <= PI / (4.0 * cfg.support)) {
            return Err(Error::domain(format!(
                "time step {} must lie in (0, pi/(4*support)] = (0, {:.6}]",
                cfg.step,
                PI / (4.0 * cfg.support)
            )));
        }
        if !(cfg.tail_tol > 0.0) {
            return Err(Error::domain("tail tolerance must be positive"));
        }
        let support = cfg.support;
        let cap_steps = (cfg.radius_cap / cfg.step).ceil() as usize;
        // Tabulate well past the cap so the periodic images of the FFT
        // do not touch the candidate radius.
        let wide = inverse_transform(|w| psi_hat_with(support, w), cfg.step, 2 * cap_steps);
        let center = 2 * cap_steps;
        let right: Vec<f64> = wide[center..=center + cap_steps].iter().map(|z| z.re).collect();

        // tail[j] = 2 * int_{j h}^{cap} |psi|, accumulated from the outside in.
        let mut tail = vec![0.0; cap_steps + 1];
        for j in (0..cap_steps).rev() {
            tail[j] = tail[j + 1] + cfg.step * (right[j].abs() + right[j + 1].abs());
        }
        let half_len = (1..=cap_steps).find(|&j| tail[j] < cfg.tail_tol).ok_or_else(|| {
            Error::Convergence(format!(
                "tail mass {:.3e} at radius cap {} still exceeds {:.3e}",
                tail[cap_steps.saturating_sub(1)],
                cfg.radius_cap,
                cfg.tail_tol
            ))
        })?;
        let psi_table: Vec<f64> = wide[center - half_len..=center + half_len]
            .iter()
            .map(|z| z.re)
            .collect();
        let big_psi_table = cumulative_trapezoid(&psi_table, cfg.step);

        let int_psihat_sq = integrate_even_transform(support, |u| psi_hat_with(support, u).powi(2))?;
        let int_psihat_4 = integrate_even_transform(support, |u| psi_hat_with(support, u).powi(4))?;
        let norm_psi_sq = trapezoid(psi_table.iter().map(|v| v * v), cfg.step);
        let l1_norm = trapezoid(psi_table.iter().map(|v| v.abs()), cfg.step);

        Ok(Self {
            support,
            step: cfg.step,
            radius: half_len as f64 * cfg.step,
            tail_tol: cfg.tail_tol,
            half_len,
            psi_table,
            big_psi_table,
            functionals: SpectralFunctionals {
                int_psihat_sq,
                int_psihat_4,
                norm_psi_sq,
            },
            l1_norm,
        })
    }

    /// Builds the wavelet, reusing a JSON cache file when its key matches.
    pub fn build_cached(cfg: &WaveletConfig, path: &Path) -> Result<Self> {
        if let Ok(text) = fs::read_to_string(path) {
            if let Ok(cached) = serde_json::from_str::<CachedWavelet>(&text) {
                if cached.version == CACHE_VERSION && cached.config == *cfg {
                    return Ok(cached.wavelet);
                }
            }
        }
        let w = Self::build(cfg)?;
        w.save_json(path, cfg)?;
        Ok(w)
    }

    pub fn save_json(&self, path: &Path, cfg: &WaveletConfig) -> Result<()> {
        let blob = CachedWavelet {
            version: CACHE_VERSION,
            config: *cfg,
            wavelet: self.clone(),
        };
        fs::write(path, serde_json::to_string(&blob)?)?;
        Ok(())
    }

    pub fn psi_hat(&self, xi: f64) -> f64 {
        psi_hat_with(self.support, xi)
    }

    pub fn time(&self, k: usize) -> f64 {
        (k as f64 - self.half_len as f64) * self.step
    }

    pub fn len(&self) -> usize {
        self.psi_table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi_table.is_empty()
    }

    /// `psi(t)` by six-point Lagrange interpolation of the table, zero
    /// outside `[-R, R]`. The table oversamples a band-limited function, so
    /// this is accurate to near round-off.
    pub fn eval_psi(&self, t: f64) -> f64 {
        lagrange6(&self.psi_table, (t + self.radius) / self.step)
    }

    /// Antiderivative `Psi(t) = int_{-R}^t psi`, clamped outside `[-R, R]`.
    #[inline]
    pub fn eval_big_psi(&self, t: f64) -> f64 {
        let tab = &self.big_psi_table;
        match interp_index(t, self.radius, self.step, tab.len() - 1) {
            None => 0.0,
            Some((i, f)) if f == 0.0 => tab[i],
            Some((i, f)) => tab[i] + (tab[i + 1] - tab[i]) * f,
        }
    }

    pub fn spectral_functionals(&self) -> SpectralFunctionals {
        self.functionals
    }

    /// `int t^n psi(t) dt` by trapezoid quadrature over the table.
    pub fn moment(&self, n: i32) -> f64 {
        let t = |k: usize| self.time(k);
        trapezoid(self.psi_table.iter().enumerate().map(|(k, v)| t(k).powi(n) * v), self.step)
    }

    /// `int |t^n psi(t)| dt`, the scale against which `moment` cancels.
    pub fn abs_moment(&self, n: i32) -> f64 {
        let t = |k: usize| self.time(k);
        trapezoid(
            self.psi_table.iter().enumerate().map(|(k, v)| (t(k).powi(n) * v).abs()),
            self.step,
        )
    }
}

fn lagrange6<T>(table: &[T], u: f64) -> T
where
    T: Copy + Default + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
{
    let last = table.len() - 1;
    if !(u >= 0.0 && u <= last as f64) {
        return T::default();
    }
    let i = u.floor() as isize;
    let f = u - i as f64;
    if f == 0.0 {
        return table[i as usize];
    }
    let mut acc = T::default();
    for j in -2..=3isize {
        let idx = i + j;
        if idx < 0 || idx > last as isize {
            continue;
        }
        let mut w = 1.0;
        for m in -2..=3isize {
            if m != j {
                w *= (f - m as f64) / (j - m) as f64;
            }
        }
        acc = acc + table[idx as usize] * w;
    }
    acc
}

const CACHE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CachedWavelet {
    version: u32,
    config: WaveletConfig,
    wavelet: MotherWavelet,
}

pub(crate) fn trapezoid<I: Iterator<Item = f64>>(values: I, step: f64) -> f64 {
    let mut sum = 0.0;
    let mut first = None;
    let mut last = 0.0;
    for v in values {
        if first.is_none() {
            first = Some(v);
        }
        sum += v;
        last = v;
    }
    match first {
        None => 0.0,
        Some(f) => step * (sum - 0.5 * (f + last)),
    }
}

/// The modulated family `psi_lambda(x) = lambda^{-1/2} e^{ix} psi(x / lambda)`,
/// whose transform `sqrt(lambda) psi_hat(lambda (omega - 1))` is concentrated
/// around frequency 1.
#[derive(Debug, Clone)]
pub struct RescaledWavelet {
    pub lambda: f64,
    pub base: Arc<MotherWavelet>,
    pub step: f64,
    pub radius: f64,
    pub half_len: usize,
    pub psi_table: Vec<Complex64>,
    pub phi_table: Vec<Complex64>,
}

impl RescaledWavelet {
    pub fn build(base: Arc<MotherWavelet>, lambda: f64) -> Result<Self> {
        if !(lambda >= base.support) || !lambda.is_finite() {
            return Err(Error::domain(format!(
                "bandwidth lambda = {lambda} must be at least the wavelet support bound {}",
                base.support
            )));
        }
        let step = base.step.min(1.0 / 8.0);
        let radius = lambda * base.radius;
        let half_len = (radius / step).ceil() as usize;
        let radius = half_len as f64 * step;
        let support = base.support;
        let root = lambda.sqrt();
        let psi_table = inverse_transform(
            |w| root * psi_hat_with(support, lambda * (w - 1.0)),
            step,
            half_len,
        );
        let phi_table = cumulative_trapezoid(&psi_table, step);
        Ok(Self {
            lambda,
            base,
            step,
            radius,
            half_len,
            psi_table,
            phi_table,
        })
    }

    pub fn psi_hat(&self, omega: f64) -> f64 {
        self.lambda.sqrt() * psi_hat_with(self.base.support, self.lambda * (omega - 1.0))
    }

    pub fn time(&self, k: usize) -> f64 {
        (k as f64 - self.half_len as f64) * self.step
    }

    /// Antiderivative `Phi_lambda(x) = int_{-inf}^x psi_lambda`, clamped
    /// outside `[-lambda R, lambda R]`.
    #[inline]
    pub fn eval_phi(&self, x: f64) -> Complex64 {
        let tab = &self.phi_table;
        match interp_index(x, self.radius, self.step, tab.len() - 1) {
            None => Complex64::new(0.0, 0.0),
            Some((i, f)) if f == 0.0 => tab[i],
            Some((i, f)) => tab[i] + (tab[i + 1] - tab[i]) * f,
        }
    }

    /// `psi_lambda(x)` by six-point Lagrange interpolation, zero outside the table.
    pub fn eval_psi_lambda(&self, x: f64) -> Complex64 {
        lagrange6(&self.psi_table, (x + self.radius) / self.step)
    }

    /// `int |psi_lambda|^2` over the table.
    pub fn norm_sq(&self) -> f64 {
        trapezoid(self.psi_table.iter().map(|z| z.norm_sqr()), self.step)
    }
}

/// Closed-form transform used by the variance formulas: either the mother
/// `psi_hat(u)` or the rescaled `sqrt(lambda) psi_hat(lambda (u - 1))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Kernel {
    Plain { support: f64 },
    Rescaled { support: f64, lambda: f64 },
}

impl Kernel {
    pub fn plain() -> Self {
        Kernel::Plain {
            support: DEFAULT_SUPPORT,
        }
    }

    pub fn rescaled(lambda: f64) -> Self {
        Kernel::Rescaled {
            support: DEFAULT_SUPPORT,
            lambda,
        }
    }

    #[inline]
    pub fn hat(&self, u: f64) -> f64 {
        match *self {
            Kernel::Plain { support } => psi_hat_with(support, u),
            Kernel::Rescaled { support, lambda } => lambda.sqrt() * psi_hat_with(support, lambda * (u - 1.0)),
        }
    }

    /// Open intervals of `u` outside which `hat(u)` vanishes.
    pub fn bands(&self) -> Vec<(f64, f64)> {
        match *self {
            Kernel::Plain { support } => vec![(-support, 0.0), (0.0, support)],
            Kernel::Rescaled { support, lambda } => {
                let lo = 1.0 - support / lambda;
                let hi = 1.0 + support / lambda;
                if lo < 0.0 {
                    vec![(lo, 0.0), (0.0, hi)]
                } else {
                    vec![(lo, hi)]
                }
            }
        }
    }
}
