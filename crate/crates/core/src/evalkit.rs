//! Trajectory-error metrics and ECDF reports.
//!
//! Error is the distance from each fix to the nearest point of the reference
//! polyline, so it is blind to lag along the path.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::world::geometry::point_segment_distance;
use crate::world::Point;

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSummary {
    pub samples: Vec<f64>,
    pub median: f64,
    pub mean: f64,
    pub p90: f64,
}

impl ErrorSummary {
    /// Median and p90 use lower interpolation: the sorted sample at index
    /// `floor(q * (n - 1))`.
    pub fn from_samples(samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("no samples"));
        }
        if samples.iter().any(|s| *s < 0.0 || !s.is_finite()) {
            return Err(Error::invalid("samples must be finite and non-negative"));
        }
        let mut sorted = samples.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let mean = sorted.iter().sum::<f64>() / n as f64;
        Ok(ErrorSummary {
            median: sorted[(n - 1) / 2],
            p90: sorted[(9 * (n - 1)) / 10],
            mean,
            samples,
        })
    }
}

/// Distance of every fix to the reference polyline.
pub fn trajectory_error(fixes: &[Point], reference: &[Point]) -> Result<ErrorSummary> {
    if fixes.is_empty() {
        return Err(Error::invalid("no fixes"));
    }
    if reference.len() < 2 {
        return Err(Error::invalid("reference polyline needs at least 2 vertices"));
    }
    let samples = fixes
        .iter()
        .map(|&p| {
            reference
                .windows(2)
                .map(|s| point_segment_distance(p, s[0], s[1]))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    ErrorSummary::from_samples(samples)
}

/// Empirical CDF as `(value, fraction of samples <= value)` at each distinct
/// value, ascending. The last probability is exactly 1.
pub fn ecdf(samples: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (k, &v) in sorted.iter().enumerate() {
        let prob = (k + 1) as f64 / n as f64;
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 = prob,
            _ => out.push((v, prob)),
        }
    }
    out
}

/// How much better `adaptive` is than `fixed`; positive means smaller error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Improvement {
    pub median_gain: f64,
    pub mean_gain: f64,
}

pub fn compare(adaptive: &ErrorSummary, fixed: &ErrorSummary) -> Improvement {
    Improvement {
        median_gain: fixed.median - adaptive.median,
        mean_gain: fixed.mean - adaptive.mean,
    }
}

/// CSV `error_m,probability`.
pub fn write_ecdf_csv<W: Write>(points: &[(f64, f64)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["error_m", "probability"])?;
    for (v, p) in points {
        w.write_record([v.to_string(), p.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<ecdf csv>", e))?;
    Ok(())
}

/// CSV `run,n,median_m,mean_m,p90_m`, one row per named run.
pub fn write_summary_csv<W: Write>(runs: &[(&str, &ErrorSummary)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["run", "n", "median_m", "mean_m", "p90_m"])?;
    for (name, s) in runs {
        w.write_record([
            name.to_string(),
            s.samples.len().to_string(),
            s.median.to_string(),
            s.mean.to_string(),
            s.p90.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<summary csv>", e))?;
    Ok(())
}

/// Points from any CSV with `x` and `y` columns, such as fix, track,
/// pose or waypoint files.
pub fn read_points_csv<R: Read>(input: R, path: &Path) -> Result<Vec<Point>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let headers = r.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_err(1, format!("missing column {name}")))
    };
    let (ix, iy) = (column("x")?, column("y")?);
    let mut points = Vec::new();
    for (i, record) in r.records().enumerate() {
        let line = i + 2;
        let record = record?;
        let field = |k: usize, name: &str| -> Result<f64> {
            let v: f64 = record
                .get(k)
                .ok_or_else(|| parse_err(line, format!("missing {name}")))?
                .parse()
                .map_err(|e| parse_err(line, format!("{name}: {e}")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(parse_err(line, format!("non-finite {name}")))
            }
        };
        points.push(Point::new(field(ix, "x")?, field(iy, "y")?));
    }
    Ok(points)
}

pub fn load_points_csv(path: impl AsRef<Path>) -> Result<Vec<Point>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_points_csv(std::io::BufReader::new(file), path)
}

/// CSV `x,y`.
pub fn write_points_csv<W: Write>(points: &[Point], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "y"])?;
    for q in points {
        w.write_record([q.x.to_string(), q.y.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<points csv>", e))?;
    Ok(())
}
