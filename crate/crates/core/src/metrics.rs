//! Coverage curves, multi-seed summaries and rank-test comparisons.

use std::collections::BTreeSet;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numkit::{mann_whitney_u, percentile, Alternative, NumError, RankTestResult};
use crate::search::CoveragePoint;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no curves to summarise")]
    NoCurves,
    #[error("invalid curve: {0}")]
    InvalidCurve(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("unexpected csv header {found:?}, expected one of {expected:?}")]
    Header {
        found: Vec<String>,
        expected: Vec<&'static str>,
    },
    #[error(transparent)]
    Numeric(#[from] NumError),
}

pub const COVERAGE_HEADER: [&str; 2] = ["evals", "coverage"];
pub const MIXING_HEADER: [&str; 2] = ["loop", "ratio"];
pub const FINALS_HEADER: [&str; 2] = ["seed", "final_coverage"];

/// Coverage against cumulative evaluations for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageCurve {
    pub variant: String,
    pub env: String,
    pub seed: u64,
    pub points: Vec<CoveragePoint>,
}

impl CoverageCurve {
    pub fn new(
        variant: impl Into<String>,
        env: impl Into<String>,
        seed: u64,
        points: Vec<CoveragePoint>,
    ) -> Result<Self, MetricsError> {
        let curve = Self {
            variant: variant.into(),
            env: env.into(),
            seed,
            points,
        };
        curve.validate()?;
        Ok(curve)
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        if self.points.is_empty() {
            return Err(MetricsError::InvalidCurve("no points".into()));
        }
        for p in &self.points {
            if !(0.0..=1.0).contains(&p.coverage) {
                return Err(MetricsError::InvalidCurve(format!(
                    "coverage {} outside [0, 1]",
                    p.coverage
                )));
            }
        }
        for w in self.points.windows(2) {
            if w[1].evals <= w[0].evals {
                return Err(MetricsError::InvalidCurve(format!(
                    "evals not strictly increasing at {}",
                    w[1].evals
                )));
            }
            if w[1].coverage < w[0].coverage {
                return Err(MetricsError::InvalidCurve(format!(
                    "coverage decreases at {}",
                    w[1].evals
                )));
            }
        }
        Ok(())
    }

    /// Step value at `evals`: the last recorded coverage at or before it,
    /// zero before the first checkpoint.
    pub fn value_at(&self, evals: u64) -> f64 {
        let idx = self.points.partition_point(|p| p.evals <= evals);
        if idx == 0 {
            0.0
        } else {
            self.points[idx - 1].coverage
        }
    }

    pub fn final_coverage(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.coverage)
    }
}

/// Step-resamples `curve` onto `grid`.
pub fn resample(curve: &CoverageCurve, grid: &[u64]) -> Vec<f64> {
    grid.iter().map(|&e| curve.value_at(e)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub checkpoint: u64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub rows: Vec<SummaryRow>,
}

fn quartiles(values: &[f64]) -> (f64, f64, f64) {
    let q = |p| percentile(values, p).expect("non-empty sample");
    (q(0.25), q(0.5), q(0.75))
}

/// Median and quartiles across seeds at every checkpoint of any curve.
pub fn summarise(curves: &[CoverageCurve]) -> Result<SeedSummary, MetricsError> {
    if curves.is_empty() {
        return Err(MetricsError::NoCurves);
    }
    for c in curves {
        c.validate()?;
    }
    let grid: Vec<u64> = curves
        .iter()
        .flat_map(|c| c.points.iter().map(|p| p.evals))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let columns: Vec<Vec<f64>> = curves.iter().map(|c| resample(c, &grid)).collect();
    let rows = grid
        .iter()
        .enumerate()
        .map(|(i, &checkpoint)| {
            let values: Vec<f64> = columns.iter().map(|col| col[i]).collect();
            let (q25, median, q75) = quartiles(&values);
            SummaryRow {
                checkpoint,
                median,
                q25,
                q75,
            }
        })
        .collect();
    Ok(SeedSummary { rows })
}

/// Per-loop median and quartiles of mixing-ratio histories. Loops missing
/// from shorter histories are left out of that loop's statistics.
pub fn summarise_mixing(histories: &[Vec<f64>]) -> Vec<SummaryRow> {
    let loops = histories.iter().map(Vec::len).max().unwrap_or(0);
    (0..loops)
        .map(|l| {
            let values: Vec<f64> = histories.iter().filter_map(|h| h.get(l).copied()).collect();
            let (q25, median, q75) = quartiles(&values);
            SummaryRow {
                checkpoint: l as u64 + 1,
                median,
                q25,
                q75,
            }
        })
        .collect()
}

/// One-sided rank test that `a` tends to exceed `b`.
pub fn compare(a: &[f64], b: &[f64]) -> Result<RankTestResult, MetricsError> {
    Ok(mann_whitney_u(a, b, Alternative::Greater)?)
}

fn check_header<R: Read>(
    reader: &mut csv::Reader<R>,
    expected: &[&'static str],
) -> Result<(), MetricsError> {
    let found: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if found != expected {
        return Err(MetricsError::Header {
            found,
            expected: expected.to_vec(),
        });
    }
    Ok(())
}

pub fn write_coverage_csv<W: Write>(points: &[CoveragePoint], out: W) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COVERAGE_HEADER)?;
    for p in points {
        w.write_record([p.evals.to_string(), p.coverage.to_string()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_coverage_csv<R: Read>(input: R) -> Result<Vec<CoveragePoint>, MetricsError> {
    let mut r = csv::Reader::from_reader(input);
    check_header(&mut r, &COVERAGE_HEADER)?;
    r.deserialize::<(u64, f64)>()
        .map(|row| {
            let (evals, coverage) = row?;
            Ok(CoveragePoint { evals, coverage })
        })
        .collect()
}

pub fn write_mixing_csv<W: Write>(ratios: &[f64], out: W) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(MIXING_HEADER)?;
    for (i, r) in ratios.iter().enumerate() {
        w.write_record([(i + 1).to_string(), r.to_string()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_mixing_csv<R: Read>(input: R) -> Result<Vec<f64>, MetricsError> {
    let mut r = csv::Reader::from_reader(input);
    check_header(&mut r, &MIXING_HEADER)?;
    r.deserialize::<(usize, f64)>()
        .map(|row| Ok(row?.1))
        .collect()
}

pub fn write_finals_csv<W: Write>(finals: &[(u64, f64)], out: W) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FINALS_HEADER)?;
    for (seed, c) in finals {
        w.write_record([seed.to_string(), c.to_string()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Final coverages from either a `seed,final_coverage` table (one value per
/// row) or a single `evals,coverage` curve (its last value).
pub fn read_final_coverages<R: Read>(input: R) -> Result<Vec<f64>, MetricsError> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header == FINALS_HEADER {
        r.deserialize::<(u64, f64)>().map(|row| Ok(row?.1)).collect()
    } else if header == COVERAGE_HEADER {
        let points: Vec<(u64, f64)> = r.deserialize().collect::<Result<_, _>>()?;
        let last = points
            .last()
            .ok_or_else(|| MetricsError::InvalidCurve("no points".into()))?;
        Ok(vec![last.1])
    } else {
        Err(MetricsError::Header {
            found: header,
            expected: vec!["seed,final_coverage", "evals,coverage"],
        })
    }
}
