//! Gaussian path simulators, closed-form spectral densities and the
//! quadrature oracles for wavelet-coefficient variances and covariances.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::quad::{integrate, integrate_complex, QuadConfig};
use crate::sampling::TimeGrid;
use crate::wavelet::Kernel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant")]
pub enum SpectralModel {
    /// Standard fractional Brownian motion, `E X(1)^2 = 1`.
    Fbm { h: f64 },
    /// Stationary Ornstein–Uhlenbeck process with covariance `exp(-alpha |t|)`.
    OrnsteinUhlenbeck { alpha: f64 },
    /// Piecewise power law `sigma_i |xi|^-(2 H_i + 1)` on `(omega_i, omega_{i+1})`,
    /// with `omega_0 = 0` and `omega_{K+1} = inf`.
    MultiscaleFbm {
        breakpoints: Vec<f64>,
        exponents: Vec<f64>,
        scales: Vec<f64>,
    },
}

/// `C(H) = H Gamma(2H) sin(pi H) / pi`, the constant making `E X(1)^2 = 1`.
pub fn fbm_constant(h: f64) -> f64 {
    h * gamma(2.0 * h) * (PI * h).sin() / PI
}

impl SpectralModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Fbm { h } if !(*h > 0.0 && *h < 1.0) => {
                Err(Error::domain(format!("fBm Hurst index {h} must lie in (0, 1)")))
            }
            Self::OrnsteinUhlenbeck { alpha } if !(*alpha > 0.0) => {
                Err(Error::domain(format!("OU rate {alpha} must be positive")))
            }
            Self::MultiscaleFbm {
                breakpoints,
                exponents,
                scales,
            } => {
                let k = breakpoints.len();
                if exponents.len() != k + 1 || scales.len() != k + 1 {
                    return Err(Error::domain(format!(
                        "multiscale model with {k} breakpoints needs {} exponents and scales",
                        k + 1
                    )));
                }
                if breakpoints.first().is_some_and(|&w| !(w > 0.0))
                    || breakpoints.windows(2).any(|w| !(w[1] > w[0]))
                {
                    return Err(Error::domain("breakpoints must be positive and increasing"));
                }
                if scales.iter().any(|&s| !(s > 0.0)) {
                    return Err(Error::domain("multiscale scales must be positive"));
                }
                if !(exponents[0] < 1.0) {
                    return Err(Error::domain(format!(
                        "lowest-band exponent {} must be below 1 for integrability at 0",
                        exponents[0]
                    )));
                }
                if !(exponents[k] > 0.0) {
                    return Err(Error::domain(format!(
                        "highest-band exponent {} must be positive for integrability at infinity",
                        exponents[k]
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Spectral density without the domain check; power laws return
    /// infinity at the origin.
    #[inline]
    pub fn density(&self, xi: f64) -> f64 {
        let a = xi.abs();
        match self {
            Self::Fbm { h } => fbm_constant(*h) * a.powf(-(2.0 * h + 1.0)),
            Self::OrnsteinUhlenbeck { alpha } => alpha / (PI * (alpha * alpha + xi * xi)),
            Self::MultiscaleFbm {
                breakpoints,
                exponents,
                scales,
            } => {
                let i = breakpoints.partition_point(|&w| w <= a);
                scales[i] * a.powf(-(2.0 * exponents[i] + 1.0))
            }
        }
    }

    pub fn eval_f(&self, xi: f64) -> Result<f64> {
        if !xi.is_finite() {
            return Err(Error::domain("frequency must be finite"));
        }
        if xi == 0.0 && !matches!(self, Self::OrnsteinUhlenbeck { .. }) {
            return Err(Error::domain("power-law spectral density is infinite at 0"));
        }
        Ok(self.density(xi))
    }

    /// Regularity index used for schedule checks: the Hurst index of the
    /// high-frequency regime.
    pub fn regularity(&self) -> f64 {
        match self {
            Self::Fbm { h } => *h,
            Self::OrnsteinUhlenbeck { .. } => 0.5,
            Self::MultiscaleFbm { exponents, .. } => *exponents.last().expect("validated"),
        }
    }
}

/// Values on a regular grid `j * step`, `j = 0..values.len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinePath {
    pub step: f64,
    pub values: Vec<f64>,
}

impl FinePath {
    pub fn span(&self) -> f64 {
        self.step * (self.values.len() - 1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedPath {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fine: Option<FinePath>,
}

impl ObservedPath {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if grid.times.len() != values.len() {
            return Err(Error::Size(format!(
                "{} times but {} values",
                grid.times.len(),
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!("value at index {k} is not finite")));
        }
        Ok(Self {
            grid,
            values,
            fine: None,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.grid.times
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
            fine: self.fine.as_ref().map(|f| FinePath {
                step: f.step,
                values: f.values.iter().map(|v| v * c).collect(),
            }),
        }
    }

    /// Subtracts the sample mean of the observed values.
    pub fn centered(&self) -> Self {
        let mean = self.values.iter().sum::<f64>() / self.values.len() as f64;
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v - mean).collect(),
            fine: self.fine.clone(),
        }
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Exact stationary simulation of the OU process at the grid times.
pub fn simulate_ou<R: Rng + ?Sized>(alpha: f64, grid: &TimeGrid, rng: &mut R) -> Result<ObservedPath> {
    if !(alpha > 0.0) {
        return Err(Error::domain(format!("OU rate {alpha} must be positive")));
    }
    let mut values = Vec::with_capacity(grid.times.len());
    let mut x = normal(rng);
    values.push(x);
    for w in grid.times.windows(2) {
        let rho = (-alpha * (w[1] - w[0])).exp();
        x = rho * x + (1.0 - rho * rho).sqrt() * normal(rng);
        values.push(x);
    }
    ObservedPath::new(grid.clone(), values)
}

/// Largest grid for the exact fBm simulator.
pub const EXACT_FBM_CAP: usize = 4096;

fn fbm_cov(h: f64, t: f64, s: f64) -> f64 {
    let e = 2.0 * h;
    0.5 * (t.abs().powf(e) + s.abs().powf(e) - (t - s).abs().powf(e))
}

/// Exact fBm draws at fixed times through a Cholesky factor computed once.
pub struct FbmExactSampler {
    times: Vec<f64>,
    factor: DMatrix<f64>,
}

impl FbmExactSampler {
    pub fn new(h: f64, grid: &TimeGrid) -> Result<Self> {
        if !(h > 0.0 && h < 1.0) {
            return Err(Error::domain(format!("fBm Hurst index {h} must lie in (0, 1)")));
        }
        let n = grid.n();
        if n > EXACT_FBM_CAP {
            return Err(Error::Size(format!(
                "exact fBm simulation is capped at n = {EXACT_FBM_CAP}, got {n}"
            )));
        }
        let t = &grid.times[1..];
        let cov = DMatrix::from_fn(n, n, |i, j| fbm_cov(h, t[i], t[j]));
        let chol = match cov.clone().cholesky() {
            Some(c) => c,
            None => {
                let jittered = cov + DMatrix::identity(n, n) * 1e-10;
                jittered.cholesky().ok_or_else(|| {
                    Error::Factorization(format!(
                        "fBm covariance at {n} times is not positive definite even with 1e-10 jitter"
                    ))
                })?
            }
        };
        Ok(Self {
            times: grid.times.clone(),
            factor: chol.l(),
        })
    }

    /// Values at all grid times, starting with `X(0) = 0`.
    pub fn sample_values<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.times.len() - 1;
        let z = DVector::from_fn(n, |_, _| normal(rng));
        let x = &self.factor * z;
        std::iter::once(0.0).chain(x.iter().copied()).collect()
    }
}

pub fn simulate_fbm_exact<R: Rng + ?Sized>(h: f64, grid: &TimeGrid, rng: &mut R) -> Result<ObservedPath> {
    let sampler = FbmExactSampler::new(h, grid)?;
    ObservedPath::new(grid.clone(), sampler.sample_values(rng))
}

/// Stationary fractional Gaussian noise of length `len` with step `step`
/// by circulant embedding.
pub fn fgn_circulant<R: Rng + ?Sized>(h: f64, len: usize, step: f64, rng: &mut R) -> Result<Vec<f64>> {
    let e = 2.0 * h;
    let scale = step.powf(e);
    let r = |k: f64| 0.5 * scale * ((k + 1.0).powf(e) - 2.0 * k.powf(e) + (k - 1.0).abs().powf(e));
    let mut embed = len.max(2).next_power_of_two();
    for attempt in 0..2 {
        let m = 2 * embed;
        let mut c: Vec<Complex64> = (0..m)
            .map(|j| {
                let k = if j <= embed { j } else { m - j };
                Complex64::new(r(k as f64), 0.0)
            })
            .collect();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(m);
        fft.process(&mut c);
        let max_eig = c.iter().map(|z| z.re).fold(0.0, f64::max);
        let min_eig = c.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
        if min_eig < -1e-10 * max_eig {
            if attempt == 0 {
                embed *= 2;
                continue;
            }
            return Err(Error::Embedding(format!(
                "circulant eigenvalue {min_eig:.3e} is negative (H = {h}, size {m})"
            )));
        }
        let mut w: Vec<Complex64> = c
            .iter()
            .map(|lam| {
                let s = (lam.re.max(0.0) / m as f64).sqrt();
                Complex64::new(s * normal(rng), s * normal(rng))
            })
            .collect();
        fft.process(&mut w);
        return Ok(w[..len].iter().map(|z| z.re).collect());
    }
    unreachable!("embedding loop returns on its second pass")
}

/// fBm on a fine regular grid of step `delta / kappa`, read off at the
/// observation times by nearest node. The fine path is kept as a companion.
pub fn simulate_fbm_fast<R: Rng + ?Sized>(h: f64, grid: &TimeGrid, rng: &mut R, kappa: usize) -> Result<ObservedPath> {
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::domain(format!("fBm Hurst index {h} must lie in (0, 1)")));
    }
    if kappa < 4 {
        return Err(Error::domain(format!("refinement factor {kappa} must be at least 4")));
    }
    let step = grid.delta / kappa as f64;
    let steps = (grid.span() / step).ceil() as usize + 1;
    let noise = fgn_circulant(h, steps, step, rng)?;
    let mut fine = Vec::with_capacity(steps + 1);
    let mut acc = 0.0;
    fine.push(0.0);
    for z in noise {
        acc += z;
        fine.push(acc);
    }
    let values = grid
        .times
        .iter()
        .map(|&t| fine[((t / step).round() as usize).min(steps)])
        .collect();
    let mut path = ObservedPath::new(grid.clone(), values)?;
    path.fine = Some(FinePath { step, values: fine });
    Ok(path)
}

/// Frequency window of the spectral synthesis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthesisBand {
    pub omega_min: f64,
    pub omega_max: f64,
}

impl SynthesisBand {
    /// `[pi / (4 T), min(4 support lambda / delta, 1e4)]`.
    pub fn for_grid(grid: &TimeGrid, support: f64, lambda: f64) -> Self {
        Self {
            omega_min: PI / (4.0 * grid.span()),
            omega_max: (4.0 * support * lambda / grid.delta).min(1e4),
        }
    }
}

/// Spectral synthesis `X(t) = sum_j 2 Re[(e^{i t xi_j} - 1) sqrt(f(xi_j) dxi_j) zeta_j]`
/// over `count` log-spaced cells of `band`.
pub fn simulate_multiscale<R: Rng + ?Sized>(
    model: &SpectralModel,
    grid: &TimeGrid,
    rng: &mut R,
    count: usize,
    band: SynthesisBand,
) -> Result<ObservedPath> {
    if !matches!(model, SpectralModel::MultiscaleFbm { .. } | SpectralModel::Fbm { .. }) {
        return Err(Error::domain("spectral synthesis expects an fBm or multiscale fBm model"));
    }
    model.validate()?;
    if count == 0 || !(band.omega_min > 0.0 && band.omega_max > band.omega_min) {
        return Err(Error::domain("synthesis needs a positive frequency window and cell count"));
    }
    let ratio = (band.omega_max / band.omega_min).ln() / count as f64;
    let edge = |j: usize| band.omega_min * (ratio * j as f64).exp();
    let mut xis = Vec::with_capacity(count);
    let mut coeffs = Vec::with_capacity(count);
    for j in 0..count {
        let (lo, hi) = (edge(j), edge(j + 1));
        let xi = (lo * hi).sqrt();
        let amp = (model.density(xi) * (hi - lo)).sqrt();
        // Real and imaginary parts N(0, 1/2), so E|zeta|^2 = 1.
        let z = Complex64::new(normal(rng), normal(rng)) * std::f64::consts::FRAC_1_SQRT_2;
        xis.push(xi);
        coeffs.push(z * amp);
    }
    let values: Vec<f64> = grid
        .times
        .par_iter()
        .map(|&t| {
            let mut acc = 0.0;
            for (xi, c) in xis.iter().zip(&coeffs) {
                let (s, co) = (t * xi).sin_cos();
                acc += (co - 1.0) * c.re - s * c.im;
            }
            2.0 * acc
        })
        .collect();
    ObservedPath::new(grid.clone(), values)
}

/// Adds `sum_j a_j t^j` to every observation (and to the fine companion).
pub fn add_polynomial_trend(path: &ObservedPath, coefficients: &[f64]) -> Result<ObservedPath> {
    if coefficients.len() > 9 {
        return Err(Error::domain("trend degree is limited to 8"));
    }
    let poly = |t: f64| coefficients.iter().rev().fold(0.0, |acc, a| acc * t + a);
    let mut out = path.clone();
    for (v, &t) in out.values.iter_mut().zip(&path.grid.times) {
        *v += poly(t);
    }
    if let Some(fine) = out.fine.as_mut() {
        for (j, v) in fine.values.iter_mut().enumerate() {
            *v += poly(j as f64 * fine.step);
        }
    }
    Ok(out)
}

fn quad_cfg(panels: usize) -> QuadConfig {
    QuadConfig {
        rel_tol: 1e-10,
        abs_tol: 1e-300,
        max_intervals: 20_000,
        initial_panels: panels,
    }
}

/// `I_1(a) = a int |hat(a u)|^2 f(u) du` for an arbitrary density.
pub fn i1_with<F: Fn(f64) -> f64>(density: F, kernel: &Kernel, a: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::domain(format!("scale {a} must be positive")));
    }
    let mut total = 0.0;
    for (lo, hi) in kernel.bands() {
        let g = |u: f64| {
            let k = kernel.hat(a * u);
            if k == 0.0 {
                0.0
            } else {
                k * k * density(u)
            }
        };
        total += integrate(g, lo / a, hi / a, &quad_cfg(8))?.value;
    }
    Ok(a * total)
}

pub fn theoretical_i1(model: &SpectralModel, kernel: &Kernel, a: f64) -> Result<f64> {
    i1_with(|u| model.density(u), kernel, a)
}

/// `gamma(theta, a1, a2) = int e^{i theta xi} hat(a1 xi) hat(a2 xi) f(xi) dxi`.
pub fn gamma_with<F: Fn(f64) -> f64>(density: F, kernel: &Kernel, theta: f64, a1: f64, a2: f64) -> Result<Complex64> {
    if !(a1 > 0.0 && a2 > 0.0) {
        return Err(Error::domain("scales must be positive"));
    }
    let mut total = Complex64::new(0.0, 0.0);
    for (lo1, hi1) in kernel.bands() {
        for (lo2, hi2) in kernel.bands() {
            let lo = (lo1 / a1).max(lo2 / a2);
            let hi = (hi1 / a1).min(hi2 / a2);
            if !(hi > lo) {
                continue;
            }
            let panels = 8 + ((theta.abs() * (hi - lo)) / PI).ceil() as usize;
            let g = |x: f64| {
                let k = kernel.hat(a1 * x) * kernel.hat(a2 * x);
                if k == 0.0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::from_polar(k * density(x), theta * x)
                }
            };
            total += integrate_complex(g, lo, hi, &quad_cfg(panels.min(5000)))?;
        }
    }
    Ok(total)
}

pub fn gamma_cov(theta: f64, a1: f64, a2: f64, model: &SpectralModel, kernel: &Kernel) -> Result<Complex64> {
    gamma_with(|x| model.density(x), kernel, theta, a1, a2)
}
