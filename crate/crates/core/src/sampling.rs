//! Observation times under the round-off model `t_{k+1} - t_k = delta_n L_k`,
//! the evaluation shifts and the admissibility of a mesh schedule.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Open01};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Source of the positive durations `L_k`.
pub trait DurationSampler {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64;
}

/// The four duration laws of the simulation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DurationLaw {
    /// `L = 1`: regular sampling.
    T1,
    /// Exponential with mean 1.
    T2,
    /// Pareto with cdf `1 - x^-4` on `x >= 1`.
    T3,
    /// Pareto with cdf `1 - x^-2` on `x >= 1`.
    T4,
}

impl DurationLaw {
    pub const ALL: [DurationLaw; 4] = [Self::T1, Self::T2, Self::T3, Self::T4];

    /// Supremum of the orders `s` with `E L^s < inf`.
    pub fn moment_order(self) -> f64 {
        match self {
            Self::T1 | Self::T2 => f64::INFINITY,
            Self::T3 => 4.0,
            Self::T4 => 2.0,
        }
    }

    pub fn mean(self) -> f64 {
        match self {
            Self::T1 | Self::T2 => 1.0,
            Self::T3 => 4.0 / 3.0,
            Self::T4 => 2.0,
        }
    }

    pub fn variance(self) -> f64 {
        match self {
            Self::T1 => 0.0,
            Self::T2 => 1.0,
            Self::T3 => 2.0 / 9.0,
            Self::T4 => f64::INFINITY,
        }
    }

    /// Inverse cdf, for `u` in `(0, 1]`.
    pub fn quantile(self, u: f64) -> f64 {
        match self {
            Self::T1 => 1.0,
            Self::T2 => -(1.0 - u).ln(),
            Self::T3 => u.powf(-0.25),
            Self::T4 => u.powf(-0.5),
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_uppercase().as_str() {
            "T1" => Ok(Self::T1),
            "T2" => Ok(Self::T2),
            "T3" => Ok(Self::T3),
            "T4" => Ok(Self::T4),
            other => Err(Error::Parse(format!("unknown sampling law '{other}' (expected T1..T4)"))),
        }
    }
}

impl DurationSampler for DurationLaw {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::T1 => 1.0,
            Self::T2 => Exp1.sample(rng),
            // Pareto tails by inversion of the survival function, U in (0, 1).
            Self::T3 | Self::T4 => {
                let u: f64 = Open01.sample(rng);
                self.quantile(u)
            }
        }
    }
}

pub fn gen_durations<S: DurationSampler, R: Rng + ?Sized>(law: &S, n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| law.sample(rng)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    /// `t_0 = 0 < t_1 < ... < t_n`.
    pub times: Vec<f64>,
    pub delta: f64,
}

impl TimeGrid {
    /// Grid from explicit times, which must start at zero and increase.
    pub fn from_times(times: Vec<f64>, delta: f64) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::domain("a time grid needs at least two points"));
        }
        if times[0] != 0.0 {
            return Err(Error::domain("time grid must start at t = 0"));
        }
        if let Some(k) = times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::domain(format!("times not strictly increasing at index {}", k + 1)));
        }
        Ok(Self { times, delta })
    }

    /// Number of intervals `n` (there are `n + 1` times).
    pub fn n(&self) -> usize {
        self.times.len() - 1
    }

    pub fn span(&self) -> f64 {
        *self.times.last().expect("non-empty grid")
    }

    pub fn durations(&self) -> impl Iterator<Item = f64> + '_ {
        self.times.windows(2).map(|w| (w[1] - w[0]) / self.delta)
    }
}

/// Mesh `delta_n = n^-d`.
pub fn mesh(n: usize, d: f64) -> f64 {
    (n as f64).powf(-d)
}

pub fn build_grid<S: DurationSampler, R: Rng + ?Sized>(law: &S, n: usize, d: f64, rng: &mut R) -> Result<TimeGrid> {
    if n < 2 {
        return Err(Error::domain(format!("grid size n = {n} must be at least 2")));
    }
    if !(d > 0.0 && d < 1.0) {
        return Err(Error::domain(format!("mesh exponent d = {d} must lie in (0, 1)")));
    }
    let delta = mesh(n, d);
    let mut times = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    times.push(0.0);
    for _ in 0..n {
        let l = law.sample(rng);
        acc += delta * l;
        times.push(acc);
    }
    Ok(TimeGrid { times, delta })
}

/// Evaluation positions `c_k = T^rho + k (T - 2 T^rho) / count`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftFamily {
    pub rho: f64,
    pub shifts: Vec<f64>,
}

impl ShiftFamily {
    pub fn spacing(&self) -> f64 {
        if self.shifts.len() < 2 {
            0.0
        } else {
            self.shifts[1] - self.shifts[0]
        }
    }

    pub fn len(&self) -> usize {
        self.shifts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shifts.is_empty()
    }

    /// Distance kept free at either end of the record.
    pub fn margin(&self) -> f64 {
        self.shifts.first().copied().unwrap_or(0.0)
    }
}

/// `count + 1` equally spaced shifts. Using `count` smaller than the number
/// of observations thins the family without changing its span.
pub fn build_shifts(span: f64, count: usize, rho: f64) -> Result<ShiftFamily> {
    if !(rho > 0.75 && rho < 1.0) {
        return Err(Error::domain(format!("shift exponent rho = {rho} must lie in (3/4, 1)")));
    }
    if count == 0 {
        return Err(Error::domain("shift count must be positive"));
    }
    let margin = span.powf(rho);
    let width = span - 2.0 * margin;
    if !(width > 0.0) {
        return Err(Error::domain(format!(
            "record length T = {span:.4} is too short for boundary margins T^rho = {margin:.4}; \
             increase n * delta_n"
        )));
    }
    let step = width / count as f64;
    let mut shifts: Vec<f64> = (0..=count).map(|k| margin + k as f64 * step).collect();
    shifts[count] = span - margin;
    Ok(ShiftFamily { rho, shifts })
}

/// Bandwidth `lambda_n`; the default keeps it at 15 for every `n`.
pub fn lambda_schedule(n: usize, override_value: Option<f64>, support: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::domain(format!("n = {n} must be at least 2")));
    }
    match override_value {
        None => Ok(DEFAULT_LAMBDA),
        Some(l) if l >= support && l.is_finite() => Ok(l),
        Some(l) => Err(Error::domain(format!(
            "lambda override {l} is below the wavelet support bound {support}"
        ))),
    }
}

pub const DEFAULT_LAMBDA: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleCheck {
    pub valid: bool,
    /// Lower bound that `d` must strictly exceed.
    pub bound: f64,
    /// Exponent `e` in the rate `n^-e` of the semiparametric CLT.
    pub clt_rate_exp: f64,
    /// Exponent `e` in the rate `n^-e` of the pointwise estimator.
    pub np_rate_exp: f64,
}

/// Whether the mesh exponent `d` is admissible for durations with `s`
/// finite moments and a spectral density of regularity `h`.
pub fn check_schedule(s: f64, h: f64, d: f64) -> Result<ScheduleCheck> {
    if !(h > 0.0) {
        return Err(Error::domain(format!("regularity H = {h} must be positive")));
    }
    if !(d > 0.0 && d < 1.0) {
        return Err(Error::domain(format!("mesh exponent d = {d} must lie in (0, 1)")));
    }
    let s_min = 2.0 + (1.0 - 3.0 * h).max(0.0) / (2.0 * h);
    if !(s > s_min) {
        return Err(Error::domain(format!(
            "moment order s = {s} must exceed {s_min:.4} for H = {h}"
        )));
    }
    let m = (2.0 * h).min(1.0);
    let h1 = h.min(1.0);
    let bound = if s.is_infinite() {
        1.0 / (2.0 + h1)
    } else {
        ((1.0 + m) / (1.0 + s * m)).max((s + h1) / (s * (2.0 + h1) - 1.0))
    };
    Ok(ScheduleCheck {
        valid: d > bound,
        bound,
        clt_rate_exp: (1.0 - d) / 2.0,
        np_rate_exp: 2.0 * (1.0 - d) / 5.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    #[test]
    fn constant_law() {
        let mut rng = stream(1, 0);
        assert_eq!(gen_durations(&DurationLaw::T1, 5, &mut rng), vec![1.0; 5]);
    }

    #[test]
    fn pareto_inverse_cdf() {
        let l = DurationLaw::T3.quantile(0.0625);
        assert!((l - 2.0).abs() < 1e-15);
        assert!((1.0 - l.powi(-4) - 0.9375).abs() < 1e-15);
        assert_eq!(DurationLaw::T4.quantile(1.0), 1.0);
    }

    #[test]
    fn regular_grid() {
        let mut rng = stream(1, 0);
        let g = build_grid(&DurationLaw::T1, 4, 0.6, &mut rng).unwrap();
        let dl = 4f64.powf(-0.6);
        let expect = [0.0, dl, 2.0 * dl, 3.0 * dl, 4f64.powf(0.4)];
        for (a, b) in g.times.iter().zip(expect) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn grid_rejects_bad_exponent() {
        let mut rng = stream(1, 0);
        assert!(build_grid(&DurationLaw::T1, 4, 1.5, &mut rng).is_err());
        assert!(build_grid(&DurationLaw::T1, 1, 0.5, &mut rng).is_err());
    }

    #[test]
    fn exponential_span_concentrates() {
        let n = 10_000;
        let expect = (n as f64).powf(0.4);
        let inside = (0..200)
            .filter(|&seed| {
                let mut rng = stream(seed, 0);
                let g = build_grid(&DurationLaw::T2, n, 0.6, &mut rng).unwrap();
                let r = g.span() / expect;
                (0.9..=1.1).contains(&r)
            })
            .count();
        assert!(inside >= 198, "{inside}");
    }

    fn moments(law: DurationLaw, n: usize) -> (f64, f64) {
        let mut rng = stream(99, law as u64);
        let xs = gen_durations(&law, n, &mut rng);
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (mean, var)
    }

    #[test]
    fn law_means_within_five_standard_errors() {
        let n = 100_000;
        for law in [DurationLaw::T2, DurationLaw::T3] {
            let (mean, var) = moments(law, n);
            let se = (law.variance() / n as f64).sqrt();
            assert!((mean - law.mean()).abs() < 5.0 * se, "{law:?} {mean}");
            // Variance check for the laws with a finite fourth moment. The
            // Pareto(4) fourth moment is infinite, so only a loose bound.
            let tol = if law == DurationLaw::T2 { 5.0 * (8.0 / n as f64).sqrt() } else { 0.05 };
            assert!((var - law.variance()).abs() < tol, "{law:?} var {var}");
        }
        // The heavy-tailed law has infinite variance; its mean is still checked
        // against a generous band.
        let (mean, _) = moments(DurationLaw::T4, n);
        assert!((mean - 2.0).abs() < 0.2, "T4 mean {mean}");
    }

    #[test]
    fn pareto3_variance_by_quadrature() {
        // Var L = int_1^inf (x - 4/3)^2 4 x^-5 dx, mapped to (0, 1] by x = 1/v.
        let v = crate::quad::integrate(
            |v: f64| 4.0 * v.powi(3) * (1.0 / v - 4.0 / 3.0).powi(2),
            0.0,
            1.0,
            &crate::quad::QuadConfig::default(),
        )
        .unwrap()
        .value;
        assert!((v - 2.0 / 9.0).abs() < 1e-6, "{v}");
    }

    #[test]
    fn shift_family() {
        let f = build_shifts(100.0, 10, 0.8).unwrap();
        assert!((f.shifts[0] - 39.810717).abs() < 1e-5);
        assert!((f.shifts[10] - (100.0 - 100f64.powf(0.8))).abs() < 1e-12);
        let sp = f.spacing();
        for w in f.shifts.windows(2) {
            assert!((w[1] - w[0] - sp).abs() < 1e-12);
        }
        assert!(matches!(build_shifts(10.0, 10, 0.8), Err(Error::Domain(_))));
        assert!(build_shifts(100.0, 10, 0.7).is_err());
    }

    #[test]
    fn lambda_defaults() {
        assert_eq!(lambda_schedule(1000, None, 5.0).unwrap(), 15.0);
        assert_eq!(lambda_schedule(50_000, None, 5.0).unwrap(), 15.0);
        assert_eq!(lambda_schedule(1000, Some(20.0), 5.0).unwrap(), 20.0);
        assert!(lambda_schedule(1000, Some(4.0), 5.0).is_err());
    }

    #[test]
    fn schedule_examples() {
        let c = check_schedule(f64::INFINITY, 0.3, 0.5).unwrap();
        assert!(c.valid);
        assert!((c.clt_rate_exp - 0.25).abs() < 1e-15);

        let c = check_schedule(3.0, 1.0, 0.6).unwrap();
        assert!((c.bound - 0.5).abs() < 1e-15);
        assert!(c.valid);
        assert!((c.np_rate_exp - 4.0 / 25.0).abs() < 1e-15);

        let c = check_schedule(4.0, 1.0 / 3.0, 0.45).unwrap();
        assert!(!c.valid);
        assert!((c.bound - 13.0 / 25.0).abs() < 1e-12);

        assert!(check_schedule(2.0, 0.5, 0.6).is_err());
        assert!(check_schedule(3.0, 0.1, 0.6).is_err());
    }

    proptest! {
        #[test]
        fn grids_increase(seed in 0u64..1000, law in 0usize..4, n in 2usize..300, d in 0.05f64..0.95) {
            let law = DurationLaw::ALL[law];
            let mut rng = stream(seed, 0);
            let g = build_grid(&law, n, d, &mut rng).unwrap();
            prop_assert_eq!(g.times[0], 0.0);
            prop_assert!(g.times.windows(2).all(|w| w[1] > w[0]));
            let (lo, hi) = g.durations().fold((f64::MAX, 0.0f64), |(lo, hi), l| (lo.min(l), hi.max(l)));
            let nd = g.delta * n as f64;
            prop_assert!(nd * lo <= g.span() * (1.0 + 1e-12));
            prop_assert!(g.span() <= nd * hi * (1.0 + 1e-12));
        }

        #[test]
        fn schedule_monotone_in_d(h in 0.34f64..2.0, s in 2.1f64..50.0, d1 in 0.01f64..0.99, d2 in 0.01f64..0.99) {
            let (lo, hi) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
            if let (Ok(a), Ok(b)) = (check_schedule(s, h, lo), check_schedule(s, h, hi)) {
                prop_assert!(!a.valid || b.valid);
            }
        }
    }
}
