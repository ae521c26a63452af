//! Monte Carlo experiments: accuracy at a reference frequency, integrated
//! squared error over a frequency window, interval coverage and rate studies.

use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{Estimator, EstimatorConfig};
use crate::inference::ols;
use crate::processes::{
    add_polynomial_trend, simulate_fbm_exact, simulate_fbm_fast, simulate_multiscale, simulate_ou, ObservedPath,
    SpectralModel, SynthesisBand, EXACT_FBM_CAP,
};
use crate::rng::stream;
use crate::sampling::{build_grid, check_schedule, DurationLaw, TimeGrid};
use crate::wavelet::MotherWavelet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Simulator {
    /// Exact where affordable, otherwise the fast approximation.
    Auto,
    FbmExact,
    FbmFast { kappa: usize },
    Spectral { count: usize },
}

/// Default refinement factor of the fine fBm grid.
pub const DEFAULT_KAPPA: usize = 8;
/// Default number of cells of the spectral synthesis.
pub const DEFAULT_SYNTHESIS_CELLS: usize = 4096;

/// Draws one path of `model` at the grid times.
pub fn simulate_path<R: Rng + ?Sized>(
    model: &SpectralModel,
    grid: &TimeGrid,
    rng: &mut R,
    simulator: Simulator,
    lambda: f64,
    support: f64,
) -> Result<ObservedPath> {
    model.validate()?;
    match (model, simulator) {
        (SpectralModel::OrnsteinUhlenbeck { alpha }, _) => simulate_ou(*alpha, grid, rng),
        (SpectralModel::Fbm { h }, Simulator::FbmExact) => simulate_fbm_exact(*h, grid, rng),
        (SpectralModel::Fbm { h }, Simulator::FbmFast { kappa }) => simulate_fbm_fast(*h, grid, rng, kappa),
        (SpectralModel::Fbm { h }, Simulator::Auto) => {
            if grid.n() <= EXACT_FBM_CAP {
                simulate_fbm_exact(*h, grid, rng)
            } else {
                simulate_fbm_fast(*h, grid, rng, DEFAULT_KAPPA)
            }
        }
        (_, Simulator::Spectral { count }) => {
            simulate_multiscale(model, grid, rng, count, SynthesisBand::for_grid(grid, support, lambda))
        }
        (SpectralModel::MultiscaleFbm { .. }, _) => simulate_multiscale(
            model,
            grid,
            rng,
            DEFAULT_SYNTHESIS_CELLS,
            SynthesisBand::for_grid(grid, support, lambda),
        ),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: SpectralModel,
    pub law: DurationLaw,
    pub n: usize,
    pub d: f64,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    pub replications: usize,
    pub reference_frequency: f64,
    /// Frequency window and step of the integrated error; `None` skips it.
    pub mise: Option<MiseGrid>,
    pub seed: u64,
    pub simulator: Simulator,
    /// Polynomial trend added to every path.
    #[serde(default)]
    pub trend: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiseGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Default for MiseGrid {
    fn default() -> Self {
        Self {
            lo: 0.3,
            hi: 5.0,
            step: 0.1,
        }
    }
}

impl MiseGrid {
    pub fn points(&self) -> Vec<f64> {
        let count = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize;
        (0..=count).map(|i| self.lo + i as f64 * self.step).collect()
    }
}

impl ExperimentConfig {
    /// Defaults of the simulation study: 50 replications, `d = 0.6`,
    /// integrated error over `[0.3, 5]` with step 0.1.
    pub fn new(model: SpectralModel, law: DurationLaw, n: usize, reference_frequency: f64) -> Self {
        Self {
            model,
            law,
            n,
            d: 0.6,
            estimator: EstimatorConfig::default(),
            replications: 50,
            reference_frequency,
            mise: Some(MiseGrid::default()),
            seed: 0,
            simulator: Simulator::Auto,
            trend: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.replications == 0 {
            return Err(Error::domain("replication count must be at least 1"));
        }
        if !(self.d > 0.0 && self.d < 1.0) {
            return Err(Error::domain(format!("mesh exponent d = {} must lie in (0, 1)", self.d)));
        }
        if !(self.reference_frequency > 0.0) {
            return Err(Error::domain("reference frequency must be positive"));
        }
        if let Some(g) = self.mise {
            if !(g.lo > 0.0 && g.hi > g.lo && g.step > 0.0) {
                return Err(Error::domain("integrated-error window must satisfy 0 < lo < hi, step > 0"));
            }
        }
        Ok(())
    }

    /// Warning when the sampling law and mesh fall outside the admissible
    /// schedule of the limit theory. The run still proceeds.
    pub fn schedule_warning(&self) -> Option<String> {
        let s = self.law.moment_order();
        let h = self.model.regularity();
        match check_schedule(s, h, self.d) {
            Ok(c) if c.valid => None,
            Ok(c) => Some(format!(
                "d = {} does not exceed the admissible bound {:.4} for law {:?} and H = {h}",
                self.d, c.bound, self.law
            )),
            Err(e) => Some(format!("law {:?} is outside the limit theory: {e}", self.law)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationOutcome {
    pub index: usize,
    /// Master seed and stream index that reproduce this replication.
    pub seed: (u64, u64),
    pub f_hat: Option<f64>,
    pub ci_halfwidth: Option<f64>,
    pub ise: Option<f64>,
    pub span: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub true_f: f64,
    pub replications: Vec<ReplicationOutcome>,
    pub rmse: f64,
    pub mise: Option<f64>,
    pub failures: usize,
    pub warnings: Vec<String>,
    pub runtime_secs: f64,
}

impl ExperimentReport {
    /// Reference-frequency estimates of the successful replications.
    pub fn estimates(&self) -> Vec<f64> {
        self.replications.iter().filter_map(|r| r.f_hat).collect()
    }

    /// JSON without the wall-clock runtime, identical across reruns.
    pub fn canonical_json(&self) -> Result<String> {
        let mut copy = self.clone();
        copy.runtime_secs = 0.0;
        Ok(serde_json::to_string_pretty(&copy)?)
    }
}

/// Shared wavelet tables and estimator for a family of experiments.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    estimator: Estimator,
}

impl Experiment {
    pub fn new(config: ExperimentConfig, mother: Arc<MotherWavelet>) -> Result<Self> {
        config.validate()?;
        let estimator = Estimator::new(mother, config.estimator)?;
        Ok(Self { config, estimator })
    }

    /// Reuses an estimator whose configuration must match.
    pub fn with_estimator(config: ExperimentConfig, estimator: Estimator) -> Result<Self> {
        config.validate()?;
        if estimator.config != config.estimator {
            return Err(Error::domain("estimator configuration differs from the experiment"));
        }
        Ok(Self { config, estimator })
    }

    pub fn estimator(&self) -> &Estimator {
        &self.estimator
    }

    /// Grid and path of replication `index`.
    pub fn replicate_path(&self, index: usize) -> Result<ObservedPath> {
        let c = &self.config;
        let mut rng = stream(c.seed, index as u64);
        let grid = build_grid(&c.law, c.n, c.d, &mut rng)?;
        let path = simulate_path(
            &c.model,
            &grid,
            &mut rng,
            c.simulator,
            c.estimator.lambda,
            self.estimator.wavelet.base.support,
        )?;
        if c.trend.is_empty() {
            Ok(path)
        } else {
            add_polynomial_trend(&path, &c.trend)
        }
    }

    fn replicate(&self, index: usize, grid_points: &[f64]) -> ReplicationOutcome {
        let c = &self.config;
        let mut out = ReplicationOutcome {
            index,
            seed: (c.seed, index as u64),
            f_hat: None,
            ci_halfwidth: None,
            ise: None,
            span: None,
            error: None,
        };
        let run = || -> Result<(f64, f64, Option<f64>, f64)> {
            let path = self.replicate_path(index)?;
            let shifts = self.estimator.shifts_for(&path)?;
            let p = self.estimator.estimate_f(&path, c.reference_frequency, &shifts)?;
            let ise = if grid_points.is_empty() {
                None
            } else {
                let sq = grid_points
                    .iter()
                    .map(|&xi| {
                        let e = self.estimator.estimate_f(&path, xi, &shifts)?;
                        Ok((e.f_hat - c.model.eval_f(xi)?).powi(2))
                    })
                    .collect::<Result<Vec<f64>>>()?;
                let step = grid_points[1] - grid_points[0];
                Some(step * (sq.iter().sum::<f64>() - 0.5 * (sq[0] + sq[sq.len() - 1])))
            };
            Ok((p.f_hat, p.ci_halfwidth, ise, path.grid.span()))
        };
        match run() {
            Ok((f, ci, ise, span)) => {
                out.f_hat = Some(f);
                out.ci_halfwidth = Some(ci);
                out.ise = ise;
                out.span = Some(span);
            }
            Err(e) => out.error = Some(e.to_string()),
        }
        out
    }

    pub fn run(&self) -> Result<ExperimentReport> {
        let start = Instant::now();
        let c = &self.config;
        let true_f = c.model.eval_f(c.reference_frequency)?;
        let grid_points = c.mise.map(|g| g.points()).unwrap_or_default();
        if grid_points.len() == 1 {
            return Err(Error::domain("integrated-error grid needs at least two points"));
        }
        let replications: Vec<ReplicationOutcome> = (0..c.replications)
            .into_par_iter()
            .map(|i| self.replicate(i, &grid_points))
            .collect();
        let failures = replications.iter().filter(|r| r.error.is_some()).count();
        if failures * 10 > c.replications {
            let first = replications
                .iter()
                .find_map(|r| r.error.clone())
                .unwrap_or_default();
            return Err(Error::Replications {
                failed: failures,
                total: c.replications,
                first,
            });
        }
        let ok: Vec<&ReplicationOutcome> = replications.iter().filter(|r| r.error.is_none()).collect();
        let rmse = (ok.iter().map(|r| (r.f_hat.unwrap() - true_f).powi(2)).sum::<f64>() / ok.len() as f64).sqrt();
        let mise = if grid_points.is_empty() {
            None
        } else {
            Some(ok.iter().map(|r| r.ise.unwrap()).sum::<f64>() / ok.len() as f64)
        };
        let warnings = c.schedule_warning().into_iter().collect();
        Ok(ExperimentReport {
            config: c.clone(),
            true_f,
            replications,
            rmse,
            mise,
            failures,
            warnings,
            runtime_secs: start.elapsed().as_secs_f64(),
        })
    }
}

pub fn run_experiment(config: ExperimentConfig, mother: Arc<MotherWavelet>) -> Result<ExperimentReport> {
    Experiment::new(config, mother)?.run()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub level: f64,
    pub coverage: f64,
    /// Sample variance of `sqrt(T_n / lambda) (f_hat - f)`.
    pub normalized_variance: f64,
    /// Limit variance `(4 pi / xi) f^2 Q`.
    pub limit_variance: f64,
    pub replications: usize,
}

/// Coverage of the `level` intervals at the reference frequency, with the
/// normalized spread of the estimates. The level comes from the
/// experiment's estimator configuration.
pub fn run_coverage(config: ExperimentConfig, mother: Arc<MotherWavelet>) -> Result<CoverageReport> {
    let cfg = ExperimentConfig { mise: None, ..config };
    let exp = Experiment::new(cfg, mother)?;
    let report = exp.run()?;
    let f = report.true_f;
    let xi = exp.config.reference_frequency;
    let lambda = exp.config.estimator.lambda;
    let ok: Vec<&ReplicationOutcome> = report.replications.iter().filter(|r| r.error.is_none()).collect();
    let covered = ok
        .iter()
        .filter(|r| (r.f_hat.unwrap() - f).abs() <= r.ci_halfwidth.unwrap())
        .count();
    let z: Vec<f64> = ok
        .iter()
        .map(|r| (r.span.unwrap() / lambda).sqrt() * (r.f_hat.unwrap() - f))
        .collect();
    let mean = z.iter().sum::<f64>() / z.len() as f64;
    let var = if z.len() > 1 {
        z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (z.len() - 1) as f64
    } else {
        0.0
    };
    let q = exp.estimator().wavelet.base.functionals.q_ratio();
    Ok(CoverageReport {
        level: exp.config.estimator.level,
        coverage: covered as f64 / ok.len() as f64,
        normalized_variance: var,
        limit_variance: 4.0 * std::f64::consts::PI / xi * f * f * q,
        replications: ok.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateStudy {
    pub ns: Vec<usize>,
    pub rmses: Vec<f64>,
    /// OLS slope of `log rmse` on `log n`.
    pub slope: f64,
}

/// Slope of `log rmse` against `log n`.
pub fn rate_slope(ns: &[usize], rmses: &[f64]) -> Result<f64> {
    if ns.len() < 3 {
        return Err(Error::domain("a rate study needs at least three sample sizes"));
    }
    let x: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let y: Vec<f64> = rmses.iter().map(|r| r.ln()).collect();
    Ok(ols(&x, &y)?.slope)
}

pub fn run_rate_study(configs: &[ExperimentConfig], mother: Arc<MotherWavelet>) -> Result<RateStudy> {
    if configs.len() < 3 {
        return Err(Error::domain("a rate study needs at least three sample sizes"));
    }
    let first = &configs[0];
    if configs
        .iter()
        .any(|c| c.law != first.law || c.model != first.model || c.d != first.d)
    {
        return Err(Error::domain("rate study configurations must share law, model and d"));
    }
    let mut ns = Vec::new();
    let mut rmses = Vec::new();
    for c in configs {
        let report = run_experiment(c.clone(), mother.clone())?;
        ns.push(c.n);
        rmses.push(report.rmse);
    }
    let slope = rate_slope(&ns, &rmses)?;
    Ok(RateStudy { ns, rmses, slope })
}
