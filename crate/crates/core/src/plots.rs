//! Plot-ready CSV tables derived from a campaign trace.
//!
//! | figure            | columns                                                                       |
//! |-------------------|-------------------------------------------------------------------------------|
//! | `progress`        | `index,iteration,provenance,cumulative_cost,objective,cost,failed`            |
//! | `fidelity-map`    | `z0,…,z{m-1},count,total_cost,mean_cost`                                      |
//! | `budget-tracking` | `index,iteration,provenance,c_max,c_max_standard,c_max_greedy,realized_cost,remaining` |
//! | `rtd`             | `index,theta,e_theta,e_model`                                                 |
//!
//! `progress` has one row per record. `fidelity-map` and `budget-tracking`
//! cover the records after the design of experiments; the fidelity map groups
//! them by fidelity rounded to a grid of `cell` units. `rtd` lists every stored
//! curve in dimensionless form beside the fitted tanks-in-series model.
//! A failed evaluation leaves `objective` empty.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::engine::{Provenance, Record};
use crate::error::{Error, Result};
use crate::rtd::{tanks_in_series_curve, to_dimensionless};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Figure {
    Progress,
    FidelityMap,
    BudgetTracking,
    Rtd,
}

impl Figure {
    pub const ALL: [Figure; 4] = [Self::Progress, Self::FidelityMap, Self::BudgetTracking, Self::Rtd];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Progress => "progress",
            Self::FidelityMap => "fidelity-map",
            Self::BudgetTracking => "budget-tracking",
            Self::Rtd => "rtd",
        }
    }
}

impl FromStr for Figure {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown figure {s:?}; expected progress, fidelity-map, budget-tracking or rtd")))
    }
}

/// Reads a JSON-lines trace, one record per line.
pub fn read_trace<R: Read>(reader: R) -> Result<Vec<Record>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line)
            .map_err(|e| Error::Config(format!("trace line {}: {e}", i + 1)))?;
        out.push(record);
    }
    Ok(out)
}

pub fn read_trace_path(path: &Path) -> Result<Vec<Record>> {
    read_trace(std::fs::File::open(path)?)
}

pub fn write_trace_line<W: Write>(record: &Record, mut w: W) -> Result<()> {
    serde_json::to_writer(&mut w, record)?;
    w.write_all(b"\n")?;
    Ok(())
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn progress_csv<W: Write>(records: &[Record], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["index", "iteration", "provenance", "cumulative_cost", "objective", "cost", "failed"])?;
    for r in records {
        out.write_record([
            r.index.to_string(),
            r.iteration.to_string(),
            r.provenance.as_str().to_string(),
            num(r.cumulative_cost),
            opt(r.objective),
            num(r.cost),
            r.failed.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Non-DoE records grouped by fidelity rounded to multiples of `cell`.
pub fn fidelity_cells(records: &[Record], cell: f64) -> Result<Vec<(Vec<f64>, usize, f64)>> {
    if !(cell.is_finite() && cell > 0.0) {
        return Err(Error::Config(format!("cell size must be positive, got {cell}")));
    }
    let mut cells: BTreeMap<Vec<i64>, (usize, f64)> = BTreeMap::new();
    for r in records.iter().filter(|r| r.provenance != Provenance::Doe) {
        let key = r.z.iter().map(|z| (z / cell).round() as i64).collect();
        let e = cells.entry(key).or_default();
        e.0 += 1;
        e.1 += r.cost;
    }
    Ok(cells
        .into_iter()
        .map(|(k, (n, c))| (k.iter().map(|k| *k as f64 * cell).collect(), n, c))
        .collect())
}

pub fn fidelity_map_csv<W: Write>(records: &[Record], cell: f64, w: W) -> Result<()> {
    let m = records.first().map_or(0, |r| r.z.len());
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = (0..m).map(|j| format!("z{j}")).collect();
    header.extend(["count", "total_cost", "mean_cost"].map(String::from));
    out.write_record(&header)?;
    for (z, n, c) in fidelity_cells(records, cell)? {
        let mut row: Vec<String> = z.into_iter().map(num).collect();
        row.extend([n.to_string(), num(c), num(c / n as f64)]);
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn budget_tracking_csv<W: Write>(records: &[Record], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "index",
        "iteration",
        "provenance",
        "c_max",
        "c_max_standard",
        "c_max_greedy",
        "realized_cost",
        "remaining",
    ])?;
    for r in records.iter().filter(|r| r.provenance != Provenance::Doe) {
        out.write_record([
            r.index.to_string(),
            r.iteration.to_string(),
            r.provenance.as_str().to_string(),
            opt(r.c_max.map(|b| b.total())),
            opt(r.c_max.map(|b| b.standard)),
            opt(r.c_max.map(|b| b.greedy)),
            num(r.cost),
            num(r.remaining_budget),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn rtd_csv<W: Write>(records: &[Record], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["index", "theta", "e_theta", "e_model"])?;
    for r in records {
        let Some(curve) = &r.curve else { continue };
        let d = to_dimensionless(curve)?;
        let model = match &r.fit {
            Some(fit) => Some(tanks_in_series_curve(&d.theta, fit.n)?),
            None => None,
        };
        for (i, (t, e)) in d.theta.iter().zip(&d.e_theta).enumerate() {
            out.write_record([r.index.to_string(), num(*t), num(*e), opt(model.as_ref().map(|m| m[i]))])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_figure<W: Write>(records: &[Record], figure: Figure, cell: f64, w: W) -> Result<()> {
    match figure {
        Figure::Progress => progress_csv(records, w),
        Figure::FidelityMap => fidelity_map_csv(records, cell, w),
        Figure::BudgetTracking => budget_tracking_csv(records, w),
        Figure::Rtd => rtd_csv(records, w),
    }
}
