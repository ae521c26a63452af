//! Heart-rate variability analysis of inter-beat series, zone by zone:
//! spectral curve, single and two-line log-log fits, LF/HF energies.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{EstimateResult, Estimator, EstimatorConfig};
use crate::inference::{band_energy, geometric_grid, loglog_fit, two_segment_fit, Axis, LogLogFit, TwoSegmentFit};
use crate::io::{SeriesFile, Zone};
use crate::processes::ObservedPath;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeartbeatConfig {
    /// Estimated curve range in Hz.
    pub curve: Band,
    pub curve_points: usize,
    /// Regression range in Hz.
    pub fit: Band,
    pub lf: Band,
    pub hf: Band,
    pub min_points_per_side: usize,
    /// Two lines are recommended when the SSE ratio falls below this.
    pub two_line_threshold: f64,
    pub estimator: EstimatorConfig,
}

impl Default for HeartbeatConfig {
    fn default() -> Self {
        Self {
            curve: Band { lo: 0.02, hi: 1.0 },
            curve_points: 64,
            fit: Band { lo: 0.04, hi: 0.5 },
            lf: Band { lo: 0.04, hi: 0.15 },
            hf: Band { lo: 0.15, hi: 0.5 },
            min_points_per_side: 4,
            two_line_threshold: 0.8,
            estimator: EstimatorConfig {
                // Full shift families cost O(n^2) per frequency on long recordings.
                shift_count: Some(256),
                ..EstimatorConfig::default()
            },
        }
    }
}

impl HeartbeatConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |b: &Band| b.lo > 0.0 && b.hi > b.lo;
        if !(ok(&self.curve) && ok(&self.fit) && ok(&self.lf) && ok(&self.hf)) {
            return Err(Error::domain("bands must satisfy 0 < lo < hi"));
        }
        for (name, b) in [("fit", self.fit), ("lf", self.lf), ("hf", self.hf)] {
            if b.lo < self.curve.lo || b.hi > self.curve.hi {
                return Err(Error::domain(format!(
                    "{name} band [{}, {}] Hz lies outside the curve range [{}, {}] Hz",
                    b.lo, b.hi, self.curve.lo, self.curve.hi
                )));
            }
        }
        if self.curve_points < 2 * self.min_points_per_side {
            return Err(Error::domain("too few curve points for a two-segment fit"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSummary {
    pub slope: f64,
    pub h_hat: f64,
    pub sse: f64,
    pub points: usize,
}

impl SegmentSummary {
    fn from_line(line: &crate::inference::LineFit) -> Self {
        Self {
            slope: line.slope,
            h_hat: (-line.slope - 1.0) / 2.0,
            sse: line.sse,
            points: line.points,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneReport {
    pub label: String,
    pub start: f64,
    pub end: f64,
    pub n: usize,
    /// RR rows of the zone outside the plausible duration range.
    pub flagged: usize,
    /// Curve in Hz, density per Hz.
    pub curve: EstimateResult,
    pub single: LogLogFit,
    pub two_segment: TwoSegmentFit,
    pub left: SegmentSummary,
    pub right: SegmentSummary,
    pub breakpoint_hz: f64,
    pub sse_ratio: f64,
    pub recommend_two_lines: bool,
    pub lf_energy: f64,
    pub hf_energy: f64,
    pub lf_hf_ratio: f64,
}

/// Analysis of one centered path whose clock is in seconds.
pub fn analyze_path(path: &ObservedPath, estimator: &Estimator, cfg: &HeartbeatConfig) -> Result<ZoneReport> {
    cfg.validate()?;
    let path = path.centered();
    let hz = geometric_grid(cfg.curve.lo, cfg.curve.hi, cfg.curve_points)?;
    let rad: Vec<f64> = hz.iter().map(|v| 2.0 * PI * v).collect();
    let curve = estimator.estimate_curve(&path, &rad)?.to_hz();

    let slack = 1e-9;
    let (xs, ys): (Vec<f64>, Vec<f64>) = curve
        .frequencies
        .iter()
        .zip(&curve.f_hat)
        .filter(|(&v, &f)| v >= cfg.fit.lo * (1.0 - slack) && v <= cfg.fit.hi * (1.0 + slack) && f > 0.0)
        .map(|(&v, &f)| (v, f))
        .unzip();
    let single = loglog_fit(&xs, &ys, Axis::Frequency)?;
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let two = two_segment_fit(&lx, &ly, cfg.min_points_per_side)?;
    let lf = band_energy(&curve, cfg.lf.lo, cfg.lf.hi)?;
    let hf = band_energy(&curve, cfg.hf.lo, cfg.hf.hi)?;
    let ratio = two.sse_ratio();
    Ok(ZoneReport {
        label: String::new(),
        start: 0.0,
        end: path.grid.span(),
        n: path.grid.n(),
        flagged: 0,
        left: SegmentSummary::from_line(&two.left),
        right: SegmentSummary::from_line(&two.right),
        breakpoint_hz: two.breakpoint,
        sse_ratio: ratio,
        recommend_two_lines: ratio < cfg.two_line_threshold,
        lf_energy: lf,
        hf_energy: hf,
        lf_hf_ratio: lf / hf,
        curve,
        single,
        two_segment: two,
    })
}

/// Analysis of each zone of a recording. Zones must lie inside the
/// recorded time span.
pub fn analyze_recording(
    series: &SeriesFile,
    zones: &[Zone],
    estimator: &Estimator,
    cfg: &HeartbeatConfig,
) -> Result<Vec<ZoneReport>> {
    let (t0, t1) = (series.start(), series.end());
    for z in zones {
        if z.start < t0 || z.end > t1 {
            return Err(Error::domain(format!(
                "zone {:?} [{}, {}] s lies outside the recording [{t0}, {t1}] s",
                z.label, z.start, z.end
            )));
        }
    }
    let default_zone = [Zone {
        start: t0,
        end: t1,
        label: "all".into(),
    }];
    let zones = if zones.is_empty() { &default_zone[..] } else { zones };
    zones
        .iter()
        .map(|z| {
            let path = series.window(z.start, z.end)?;
            let mut r = analyze_path(&path, estimator, cfg)?;
            r.label = z.label.clone();
            r.start = z.start;
            r.end = z.end;
            r.flagged = series
                .flagged
                .iter()
                .filter(|&&k| series.times[k] >= z.start && series.times[k] <= z.end)
                .count();
            Ok(r)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::SeriesFormat;
    use crate::processes::simulate_ou;
    use crate::rng::stream;
    use crate::sampling::TimeGrid;
    use crate::wavelet::{MotherWavelet, WaveletConfig};
    use std::sync::Arc;

    fn estimator() -> Estimator {
        let m = Arc::new(MotherWavelet::build(&WaveletConfig::default()).unwrap());
        let cfg = HeartbeatConfig::default();
        Estimator::new(m, EstimatorConfig {
            shift_count: Some(32),
            ..cfg.estimator
        })
        .unwrap()
    }

    fn rr_series() -> SeriesFile {
        let text: String = (0..3000).map(|k| format!("{}\n", 800 + (k * 37) % 100)).collect();
        SeriesFile::read(text.as_bytes(), SeriesFormat::Rr, false).unwrap()
    }

    #[test]
    fn zone_outside_recording_is_rejected() {
        let s = rr_series();
        let zones = vec![Zone {
            start: 10.0,
            end: s.end() + 1.0,
            label: "late".into(),
        }];
        let err = analyze_recording(&s, &zones, &estimator(), &HeartbeatConfig::default()).unwrap_err();
        assert!(err.to_string().contains("late"), "{err}");
    }

    #[test]
    fn bands_must_lie_in_curve() {
        let mut cfg = HeartbeatConfig::default();
        cfg.hf.hi = 2.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn report_fields_are_consistent() {
        // OU sampled at 2 Hz for 40 minutes.
        let grid = TimeGrid::from_times((0..4800).map(|k| k as f64 * 0.5).collect(), 0.5).unwrap();
        let path = simulate_ou(0.5, &grid, &mut stream(3, 0)).unwrap();
        let cfg = HeartbeatConfig::default();
        let r = analyze_path(&path, &estimator(), &cfg).unwrap();
        assert!(r.sse_ratio <= 1.0 + 1e-12);
        assert_eq!(r.recommend_two_lines, r.sse_ratio < 0.8);
        assert!(r.breakpoint_hz > cfg.fit.lo && r.breakpoint_hz < cfg.fit.hi);
        assert!(r.lf_energy > 0.0 && r.hf_energy > 0.0);
        assert_eq!(r.curve.unit, crate::estimator::FrequencyUnit::Hz);
    }
}
