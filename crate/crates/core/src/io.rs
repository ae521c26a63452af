//! CSV and JSON readers and writers for grids, paths, estimates and
//! recorded series.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{EstimateResult, FrequencyFailure, ScaleSpectrum};
use crate::processes::ObservedPath;
use crate::sampling::TimeGrid;

/// Plausible inter-beat durations in seconds.
pub const RR_RANGE: (f64, f64) = (0.25, 2.0);

pub fn write_json<T: Serialize, P: AsRef<Path>>(path: P, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned, P: AsRef<Path>>(path: P) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

fn fmt(v: f64) -> String {
    // Shortest representation that parses back to the same f64.
    format!("{v:?}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

fn parse_field(s: &str, line: usize, column: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("line {line}: column {column}: cannot parse {s:?} as a number")))
}

fn parse_opt(s: &str, line: usize, column: &str) -> Result<Option<f64>> {
    if s.trim().is_empty() {
        Ok(None)
    } else {
        parse_field(s, line, column).map(Some)
    }
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().from_writer(w)
}

fn check_header(rdr: &mut csv::Reader<impl Read>, expected: &[&str]) -> Result<()> {
    let h = rdr.headers()?;
    let got: Vec<&str> = h.iter().map(str::trim).collect();
    if got.len() < expected.len() || got[..expected.len()] != *expected {
        return Err(Error::Parse(format!("expected columns {expected:?}, found {got:?}")));
    }
    Ok(())
}

// ---------------------------------------------------------------- grids

pub fn write_grid_csv<W: Write>(w: W, grid: &TimeGrid) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record(["index", "t", "L"])?;
    for (i, &t) in grid.times.iter().enumerate() {
        let l = if i == 0 {
            String::new()
        } else {
            fmt((t - grid.times[i - 1]) / grid.delta)
        };
        wr.write_record([i.to_string(), fmt(t), l])?;
    }
    wr.flush()?;
    Ok(())
}

/// Reads a grid written by [`write_grid_csv`]; `delta` is recovered from
/// the durations column.
pub fn read_grid_csv<R: Read>(r: R) -> Result<TimeGrid> {
    let mut rdr = csv::Reader::from_reader(r);
    check_header(&mut rdr, &["index", "t", "L"])?;
    let mut times = Vec::new();
    let mut delta = None;
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        let t = parse_field(&rec[1], line, "t")?;
        if let Some(l) = parse_opt(&rec[2], line, "L")? {
            if delta.is_none() && l > 0.0 {
                delta = Some((t - times.last().copied().unwrap_or(0.0)) / l);
            }
        }
        times.push(t);
    }
    let delta = delta.ok_or_else(|| Error::Parse("grid file has no durations".into()))?;
    TimeGrid::from_times(times, delta)
}

// ---------------------------------------------------------------- paths

pub fn write_path_csv<W: Write>(w: W, path: &ObservedPath) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record(["t", "x"])?;
    for (t, x) in path.times().iter().zip(&path.values) {
        wr.write_record([fmt(*t), fmt(*x)])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn save_path_csv<P: AsRef<Path>>(file: P, path: &ObservedPath) -> Result<()> {
    write_path_csv(BufWriter::new(File::create(file)?), path)
}

/// Rows of a recorded series, in file order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesFile {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Indices of RR rows whose duration falls outside [`RR_RANGE`].
    #[serde(default)]
    pub flagged: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum SeriesFormat {
    /// Two columns `t` (seconds) and `x`.
    #[default]
    TimeValue,
    /// One column of inter-beat durations in milliseconds.
    Rr,
}

impl SeriesFile {
    pub fn read<R: Read>(r: R, format: SeriesFormat, has_header: bool) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(has_header)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(r);
        let offset = if has_header { 2 } else { 1 };
        let mut out = Self {
            times: Vec::new(),
            values: Vec::new(),
            flagged: Vec::new(),
        };
        let mut clock = 0.0;
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = k + offset;
            match format {
                SeriesFormat::TimeValue => {
                    if rec.len() < 2 {
                        return Err(Error::Parse(format!("line {line}: expected two columns t, x")));
                    }
                    out.times.push(parse_field(&rec[0], line, "t")?);
                    out.values.push(parse_field(&rec[1], line, "x")?);
                }
                SeriesFormat::Rr => {
                    let rr = parse_field(&rec[0], line, "rr")?;
                    if !(rr > 0.0) {
                        return Err(Error::Parse(format!("line {line}: RR duration {rr} ms must be positive")));
                    }
                    let secs = rr / 1000.0;
                    if !(RR_RANGE.0..=RR_RANGE.1).contains(&secs) {
                        out.flagged.push(k);
                    }
                    clock += secs;
                    out.times.push(clock);
                    out.values.push(rr);
                }
            }
        }
        if out.times.len() < 2 {
            return Err(Error::Parse("series needs at least two rows".into()));
        }
        if let Some(k) = out.times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::Parse(format!(
                "times not strictly increasing at row {}",
                k + 1 + offset
            )));
        }
        Ok(out)
    }

    pub fn load<P: AsRef<Path>>(file: P, format: SeriesFormat, has_header: bool) -> Result<Self> {
        Self::read(BufReader::new(File::open(file)?), format, has_header)
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().expect("non-empty series")
    }

    /// Observations with `lo <= t <= hi`, as a path whose clock starts at
    /// zero. `delta` is the mean spacing.
    pub fn window(&self, lo: f64, hi: f64) -> Result<ObservedPath> {
        let first = self.times.partition_point(|&t| t < lo);
        let last = self.times.partition_point(|&t| t <= hi);
        if last < first + 2 {
            return Err(Error::domain(format!("window [{lo}, {hi}] holds fewer than two observations")));
        }
        let t0 = self.times[first];
        let times: Vec<f64> = self.times[first..last].iter().map(|t| t - t0).collect();
        let delta = times[times.len() - 1] / (times.len() - 1) as f64;
        let grid = TimeGrid::from_times(times, delta)?;
        ObservedPath::new(grid, self.values[first..last].to_vec())
    }

    pub fn to_path(&self) -> Result<ObservedPath> {
        self.window(self.start(), self.end())
    }
}

// ---------------------------------------------------------------- zones

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub start: f64,
    pub end: f64,
    pub label: String,
}

pub fn read_zones<R: Read>(r: R) -> Result<Vec<Zone>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    check_header(&mut rdr, &["start", "end", "label"])?;
    let mut zones = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        let z = Zone {
            start: parse_field(&rec[0], line, "start")?,
            end: parse_field(&rec[1], line, "end")?,
            label: rec.get(2).unwrap_or("").to_string(),
        };
        if !(z.end > z.start) {
            return Err(Error::Parse(format!("line {line}: zone end must exceed its start")));
        }
        zones.push(z);
    }
    Ok(zones)
}

pub fn load_zones<P: AsRef<Path>>(file: P) -> Result<Vec<Zone>> {
    read_zones(BufReader::new(File::open(file)?))
}

pub fn write_zones<W: Write>(w: W, zones: &[Zone]) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record(["start", "end", "label"])?;
    for z in zones {
        wr.write_record([fmt(z.start), fmt(z.end), z.label.clone()])?;
    }
    wr.flush()?;
    Ok(())
}

// ---------------------------------------------------------------- estimates

/// Columns `xi, f_hat, ci_lo, ci_hi, error`. Failed frequencies get an
/// empty estimate and the error message.
pub fn write_estimate_csv<W: Write>(w: W, result: &EstimateResult) -> Result<()> {
    let mut rows: Vec<(f64, [String; 4])> = result
        .frequencies
        .iter()
        .zip(result.f_hat.iter().zip(&result.ci_halfwidths))
        .map(|(&xi, (&f, &h))| (xi, [fmt(f), fmt(f - h), fmt(f + h), String::new()]))
        .collect();
    rows.extend(result.failures.iter().map(|e| {
        (
            e.frequency,
            [String::new(), String::new(), String::new(), e.message.clone()],
        )
    }));
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut wr = writer(w);
    wr.write_record(["xi", "f_hat", "ci_lo", "ci_hi", "error"])?;
    for (xi, [f, lo, hi, err]) in rows {
        wr.write_record([fmt(xi), f, lo, hi, err])?;
    }
    wr.flush()?;
    Ok(())
}

/// Rows of an estimate CSV, failed rows included.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRow {
    pub xi: f64,
    pub f_hat: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub error: Option<String>,
}

pub fn read_estimate_csv<R: Read>(r: R) -> Result<Vec<EstimateRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    check_header(&mut rdr, &["xi", "f_hat", "ci_lo", "ci_hi"])?;
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        let error = rec.get(4).filter(|s| !s.is_empty()).map(str::to_string);
        rows.push(EstimateRow {
            xi: parse_field(&rec[0], line, "xi")?,
            f_hat: parse_opt(&rec[1], line, "f_hat")?,
            ci_lo: parse_opt(&rec[2], line, "ci_lo")?,
            ci_hi: parse_opt(&rec[3], line, "ci_hi")?,
            error,
        });
    }
    Ok(rows)
}

/// Rebuilds an estimate from its CSV rows and the run metadata.
pub fn estimate_from_rows(rows: &[EstimateRow], template: &EstimateResult) -> EstimateResult {
    let mut out = EstimateResult {
        frequencies: Vec::new(),
        f_hat: Vec::new(),
        ci_halfwidths: Vec::new(),
        failures: Vec::new(),
        ..template.clone()
    };
    for r in rows {
        match (r.f_hat, r.ci_hi) {
            (Some(f), Some(hi)) => {
                out.frequencies.push(r.xi);
                out.f_hat.push(f);
                out.ci_halfwidths.push(hi - f);
            }
            _ => out.failures.push(FrequencyFailure {
                frequency: r.xi,
                message: r.error.clone().unwrap_or_default(),
            }),
        }
    }
    out
}

/// Columns `log_xi, log_f_hat, log_ci_lo, log_ci_hi` (natural logs). A
/// lower bound at or below zero is left empty.
pub fn write_loglog_csv<W: Write>(w: W, result: &EstimateResult) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record(["log_xi", "log_f_hat", "log_ci_lo", "log_ci_hi"])?;
    let ln = |v: f64| if v > 0.0 { Some(v.ln()) } else { None };
    for ((&xi, &f), &h) in result.frequencies.iter().zip(&result.f_hat).zip(&result.ci_halfwidths) {
        wr.write_record([
            fmt(xi.ln()),
            fmt_opt(ln(f)),
            fmt_opt(ln(f - h)),
            fmt_opt(ln(f + h)),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_scale_spectrum_csv<W: Write>(w: W, s: &ScaleSpectrum) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record(["a", "J", "var"])?;
    for (i, (&a, &j)) in s.scales.iter().zip(&s.j).enumerate() {
        let var = s.variances.as_ref().map(|v| v[i]);
        wr.write_record([fmt(a), fmt(j), fmt_opt(var)])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_scale_spectrum_csv<R: Read>(r: R) -> Result<ScaleSpectrum> {
    let mut rdr = csv::Reader::from_reader(r);
    check_header(&mut rdr, &["a", "J", "var"])?;
    let mut scales = Vec::new();
    let mut j = Vec::new();
    let mut vars = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        scales.push(parse_field(&rec[0], line, "a")?);
        j.push(parse_field(&rec[1], line, "J")?);
        vars.push(parse_opt(&rec[2], line, "var")?);
    }
    let variances = vars.iter().copied().collect::<Option<Vec<f64>>>();
    Ok(ScaleSpectrum { scales, j, variances })
}

// ---------------------------------------------------------------- tables

/// Numeric CSV with a header row; empty cells read as `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl NumericTable {
    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

pub fn read_numeric_table<R: Read>(r: R) -> Result<NumericTable> {
    let mut rdr = csv::Reader::from_reader(r);
    let columns: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .zip(&columns)
            .map(|(s, c)| parse_opt(s, k + 2, c))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(NumericTable { columns, rows })
}

/// Summary table: one row per sampling law, one column per parameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    /// Header of the parameter columns, e.g. `H=0.5`.
    pub columns: Vec<String>,
    pub rows: BTreeMap<String, Vec<Option<f64>>>,
}

impl SummaryTable {
    pub fn new(columns: Vec<String>) -> Self {
        Self {
            columns,
            rows: BTreeMap::new(),
        }
    }

    pub fn set(&mut self, law: &str, column: usize, value: f64) {
        let width = self.columns.len();
        self.rows.entry(law.to_string()).or_insert_with(|| vec![None; width])[column] = Some(value);
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = writer(w);
        let mut header = vec!["law".to_string()];
        header.extend(self.columns.iter().cloned());
        wr.write_record(&header)?;
        for (law, vals) in &self.rows {
            let mut rec = vec![law.clone()];
            rec.extend(vals.iter().map(|v| fmt_opt(*v)));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header.first().map(String::as_str) != Some("law") {
            return Err(Error::Parse("summary table must start with a law column".into()));
        }
        let mut table = Self::new(header[1..].to_vec());
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let vals = rec
                .iter()
                .skip(1)
                .zip(&table.columns)
                .map(|(s, c)| parse_opt(s, k + 2, c))
                .collect::<Result<Vec<_>>>()?;
            table.rows.insert(rec[0].to_string(), vals);
        }
        Ok(table)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::FrequencyUnit;
    use proptest::prelude::*;

    fn sample_result() -> EstimateResult {
        EstimateResult {
            unit: FrequencyUnit::RadPerSec,
            frequencies: vec![0.5, 2.0],
            f_hat: vec![1.25, 0.1],
            ci_halfwidths: vec![0.25, 0.2],
            level: 0.95,
            lambda: 15.0,
            span: 100.0,
            n: 1000,
            normalization: 5.57,
            failures: vec![FrequencyFailure {
                frequency: 1.0,
                message: "record too short".into(),
            }],
        }
    }

    #[test]
    fn estimate_round_trip() {
        let r = sample_result();
        let mut buf = Vec::new();
        write_estimate_csv(&mut buf, &r).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("xi,f_hat,ci_lo,ci_hi,error\n"));
        let rows = read_estimate_csv(buf.as_slice()).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[1].error.as_deref(), Some("record too short"));
        let back = estimate_from_rows(&rows, &r);
        assert_eq!(back.frequencies, r.frequencies);
        assert_eq!(back.f_hat, r.f_hat);
        assert_eq!(back.failures, r.failures);
        for (a, b) in back.ci_halfwidths.iter().zip(&r.ci_halfwidths) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn loglog_leaves_negative_bounds_empty() {
        let mut buf = Vec::new();
        write_loglog_csv(&mut buf, &sample_result()).unwrap();
        let t = read_numeric_table(buf.as_slice()).unwrap();
        assert_eq!(t.rows.len(), 2);
        assert_eq!(t.rows[1][2], None);
        assert_eq!(t.rows[0][1], Some(1.25f64.ln()));
    }

    #[test]
    fn rr_series_accumulates_and_flags() {
        let text = "800\n3000\n900\n200\n";
        let s = SeriesFile::read(text.as_bytes(), SeriesFormat::Rr, false).unwrap();
        assert_eq!(s.times, vec![0.8, 3.8, 4.7, 4.9]);
        assert_eq!(s.values, vec![800.0, 3000.0, 900.0, 200.0]);
        assert_eq!(s.flagged, vec![1, 3]);
    }

    #[test]
    fn series_rejects_unsorted_times() {
        let text = "t,x\n0,1\n2,1\n1,1\n";
        let err = SeriesFile::read(text.as_bytes(), SeriesFormat::TimeValue, true).unwrap_err();
        assert!(err.to_string().contains("row 4"), "{err}");
    }

    #[test]
    fn window_rebases_clock() {
        let text = "t,x\n1,1\n2,2\n3,3\n4,4\n";
        let s = SeriesFile::read(text.as_bytes(), SeriesFormat::TimeValue, true).unwrap();
        let p = s.window(1.5, 4.0).unwrap();
        assert_eq!(p.times(), &[0.0, 1.0, 2.0]);
        assert_eq!(p.values, vec![2.0, 3.0, 4.0]);
        assert!(s.window(1.1, 1.9).is_err());
    }

    #[test]
    fn zones_round_trip() {
        let z = vec![
            Zone {
                start: 0.0,
                end: 600.0,
                label: "quiet".into(),
            },
            Zone {
                start: 600.0,
                end: 1200.5,
                label: "sleep".into(),
            },
        ];
        let mut buf = Vec::new();
        write_zones(&mut buf, &z).unwrap();
        assert_eq!(read_zones(buf.as_slice()).unwrap(), z);
        assert!(read_zones("start,end,label\n5,1,x\n".as_bytes()).is_err());
    }

    #[test]
    fn scale_spectrum_round_trip() {
        let s = ScaleSpectrum {
            scales: vec![0.5, 1.0],
            j: vec![0.3, 0.7],
            variances: None,
        };
        let mut buf = Vec::new();
        write_scale_spectrum_csv(&mut buf, &s).unwrap();
        assert_eq!(read_scale_spectrum_csv(buf.as_slice()).unwrap(), s);
    }

    #[test]
    fn summary_table_round_trip() {
        let mut t = SummaryTable::new(vec!["H=0.2".into(), "H=0.5".into()]);
        t.set("T2", 0, 0.45);
        t.set("T2", 1, 0.47);
        t.set("T4", 1, 0.9);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(SummaryTable::read_csv(buf.as_slice()).unwrap(), t);
    }

    proptest! {
        #[test]
        fn grid_and_path_round_trip(steps in prop::collection::vec(0.01f64..3.0, 2..40), delta in 0.001f64..1.0) {
            let mut times = vec![0.0];
            for s in &steps {
                let last = *times.last().unwrap();
                times.push(last + s * delta);
            }
            let grid = TimeGrid::from_times(times.clone(), delta).unwrap();
            let mut buf = Vec::new();
            write_grid_csv(&mut buf, &grid).unwrap();
            let back = read_grid_csv(buf.as_slice()).unwrap();
            prop_assert_eq!(&back.times, &grid.times);
            prop_assert!((back.delta - delta).abs() <= 1e-9 * delta);

            let values: Vec<f64> = times.iter().map(|t| (3.0 * t).sin() / 7.0).collect();
            let path = ObservedPath::new(grid, values).unwrap();
            let mut buf = Vec::new();
            write_path_csv(&mut buf, &path).unwrap();
            let s = SeriesFile::read(buf.as_slice(), SeriesFormat::TimeValue, true).unwrap();
            prop_assert_eq!(&s.times, &path.grid.times);
            prop_assert_eq!(&s.values, &path.values);
        }
    }
}
