//! Residence-time distributions and the tanks-in-series reduction.
//!
//! A raw outlet curve `C(t)` is normalized to `E(t) = C / ∫C dt`, rescaled by
//! the mean residence time `t̄ = ∫ t E dt` to `θ = t / t̄`, `E(θ) = t̄ E(t)`, and
//! summarized by the tanks-in-series number `N` whose model curve
//!
//! ```text
//! E(θ; N) = N (Nθ)^(N−1) e^(−Nθ) / Γ(N)
//! ```
//!
//! has the same peak height.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MIN_CURVE_LEN: usize = 8;
/// Lower edge of the `N` search interval; `N = 1` itself is excluded.
pub const N_MIN: f64 = 1.0 + 1e-6;
pub const DEFAULT_N_MAX: f64 = 200.0;
/// Data peaks this close to the `N → 1` limit are pinned to `N_MIN`.
pub const PIN_TOLERANCE: f64 = 1e-3;
/// Data peaks below this are treated as a flat curve.
pub const MIN_PEAK: f64 = 1e-9;

/// Outlet concentration samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RtdCurve {
    pub times: Vec<f64>,
    pub concentrations: Vec<f64>,
}

impl RtdCurve {
    pub fn new(times: Vec<f64>, concentrations: Vec<f64>) -> Result<Self> {
        let c = Self { times, concentrations };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.times.len();
        if n != self.concentrations.len() {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: self.concentrations.len(),
            });
        }
        if n < MIN_CURVE_LEN {
            return Err(Error::DegenerateCurve(format!(
                "curve has {n} samples, at least {MIN_CURVE_LEN} are required"
            )));
        }
        if !(self.times[0].is_finite() && self.times[0] >= 0.0) {
            return Err(Error::DegenerateCurve(format!("first time {} is negative", self.times[0])));
        }
        if let Some(i) = self.times.windows(2).position(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(Error::DegenerateCurve(format!(
                "times are not strictly increasing at row {}",
                i + 1
            )));
        }
        if let Some(i) = self.concentrations.iter().position(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::DegenerateCurve(format!(
                "concentration {} at row {i} is not a non-negative number",
                self.concentrations[i]
            )));
        }
        if self.concentrations.iter().all(|c| *c == 0.0) {
            return Err(Error::DegenerateCurve("all concentrations are zero".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// SHA-256 over the little-endian bytes of every time then every concentration.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for v in self.times.iter().chain(&self.concentrations) {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Reads `time_s,concentration` rows; a non-numeric first row is taken as a header.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let mut times = Vec::new();
        let mut conc = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != 2 {
                return Err(Error::DegenerateCurve(format!(
                    "row {} has {} columns, expected time_s,concentration",
                    row + 1,
                    rec.len()
                )));
            }
            let parsed = (rec[0].parse::<f64>(), rec[1].parse::<f64>());
            match parsed {
                (Ok(t), Ok(c)) => {
                    times.push(t);
                    conc.push(c);
                }
                _ if row == 0 => continue,
                _ => {
                    return Err(Error::DegenerateCurve(format!(
                        "row {} is not numeric: {:?}",
                        row + 1,
                        rec.iter().collect::<Vec<_>>()
                    )))
                }
            }
        }
        Self::new(times, conc)
    }

    pub fn read_csv_path(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["time_s", "concentration"])?;
        for (t, c) in self.times.iter().zip(&self.concentrations) {
            w.write_record([format!("{t:e}"), format!("{c:e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Dimensionless RTD, `∫E dθ = 1` and `∫θ E dθ = 1` under the trapezoidal rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionlessRtd {
    pub theta: Vec<f64>,
    pub e_theta: Vec<f64>,
    /// Mean residence time `t̄` of the source curve, in its time units.
    pub mean_time: f64,
}

impl DimensionlessRtd {
    pub fn peak(&self) -> f64 {
        self.e_theta.iter().copied().fold(0.0, f64::max)
    }
}

pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

pub fn to_dimensionless(curve: &RtdCurve) -> Result<DimensionlessRtd> {
    curve.validate()?;
    let area = trapezoid(&curve.times, &curve.concentrations);
    if !(area > 0.0) {
        return Err(Error::DegenerateCurve(format!("curve area {area} is not positive")));
    }
    let e_t: Vec<f64> = curve.concentrations.iter().map(|c| c / area).collect();
    let te: Vec<f64> = curve.times.iter().zip(&e_t).map(|(t, e)| t * e).collect();
    let mean_time = trapezoid(&curve.times, &te);
    if !(mean_time > 0.0 && mean_time.is_finite()) {
        return Err(Error::DegenerateCurve(format!("mean residence time {mean_time} is not positive")));
    }
    Ok(DimensionlessRtd {
        theta: curve.times.iter().map(|t| t / mean_time).collect(),
        e_theta: e_t.iter().map(|e| e * mean_time).collect(),
        mean_time,
    })
}

fn check_n(n: f64) -> Result<()> {
    if n.is_finite() && n > 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("tanks-in-series N must exceed 1, got {n}")))
    }
}

/// `ln E(θ; N)`; `−∞` at `θ = 0`.
pub fn tanks_in_series_ln(theta: f64, n: f64) -> f64 {
    if theta == 0.0 {
        return f64::NEG_INFINITY;
    }
    n.ln() + (n - 1.0) * (n * theta).ln() - n * theta - libm::lgamma(n)
}

/// Evaluates the tanks-in-series density at each `θ ≥ 0`.
pub fn tanks_in_series_curve(theta: &[f64], n: f64) -> Result<Vec<f64>> {
    check_n(n)?;
    theta
        .iter()
        .map(|&t| {
            if t.is_finite() && t >= 0.0 {
                Ok(tanks_in_series_ln(t, n).exp())
            } else {
                Err(Error::Domain(format!("theta must be non-negative, got {t}")))
            }
        })
        .collect()
}

/// The density's mode, `(N − 1) / N`.
pub fn tanks_in_series_mode(n: f64) -> f64 {
    (n - 1.0) / n
}

/// Height of the density at its mode.
pub fn tanks_in_series_peak(n: f64) -> f64 {
    let m = n - 1.0;
    let ln_mm = if m > 0.0 { m * m.ln() } else { 0.0 };
    (n.ln() + ln_mm - m - libm::lgamma(n)).exp()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMethod {
    /// Match the peak heights of data and model.
    #[default]
    PeakMatching,
    /// Minimize the summed squared residual over all samples.
    LeastSquares,
}

impl std::str::FromStr for FitMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "peak-matching" => Ok(Self::PeakMatching),
            "least-squares" => Ok(Self::LeastSquares),
            other => Err(Error::Config(format!(
                "unknown fit method {other:?}, expected peak-matching or least-squares"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TisFit {
    pub n: f64,
    pub data_peak: f64,
    pub model_peak: f64,
    /// `|data_peak − model_peak|`.
    pub peak_discrepancy: f64,
    /// Set when no model peak matches the data and `n` sits on an edge of its search interval.
    pub pinned: bool,
    pub method: FitMethod,
}

fn golden_section<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol * (1.0 + a.abs()) {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Peak-matching fit of `N` over `(1, N_MAX]`.
pub fn fit_tanks_in_series(d: &DimensionlessRtd) -> Result<TisFit> {
    fit_tanks_in_series_with(d, FitMethod::PeakMatching, DEFAULT_N_MAX)
}

pub fn fit_tanks_in_series_with(d: &DimensionlessRtd, method: FitMethod, n_max: f64) -> Result<TisFit> {
    if !(n_max > N_MIN) {
        return Err(Error::Config(format!("n_max must exceed {N_MIN}, got {n_max}")));
    }
    let data_peak = d.peak();
    if !(data_peak >= MIN_PEAK) {
        return Err(Error::DegenerateCurve(format!(
            "peak of E(theta) is {data_peak:e}, below {MIN_PEAK:e}"
        )));
    }
    let (n, pinned) = match method {
        FitMethod::PeakMatching => peak_matching(d, data_peak, n_max)?,
        FitMethod::LeastSquares => least_squares(d, n_max),
    };
    let model_peak = tanks_in_series_peak(n);
    Ok(TisFit {
        n,
        data_peak,
        model_peak,
        peak_discrepancy: (data_peak - model_peak).abs(),
        pinned,
        method,
    })
}

/// `N` at which the model peak height is smallest (about 1.63). The peak falls
/// from 1 towards this point and rises monotonically beyond it.
pub fn peak_turning_point() -> f64 {
    golden_section(tanks_in_series_peak, 1.0 + 1e-9, 3.0, 1e-12)
}

fn peak_matching(d: &DimensionlessRtd, data_peak: f64, n_max: f64) -> Result<(f64, bool)> {
    let n_turn = peak_turning_point();
    let discrepancy = |n: f64| (data_peak - tanks_in_series_peak(n)).abs();
    let data_mode = d
        .theta
        .iter()
        .zip(&d.e_theta)
        .fold((0.0, f64::NEG_INFINITY), |acc, (&t, &e)| if e > acc.1 { (t, e) } else { acc })
        .0;
    if data_mode < tanks_in_series_mode(n_turn) {
        // near-exponential curves: the falling branch
        if data_peak >= tanks_in_series_peak(N_MIN) - PIN_TOLERANCE {
            return Ok((N_MIN, true));
        }
        if data_peak <= tanks_in_series_peak(n_turn) {
            return Ok((n_turn, true));
        }
        return Ok((golden_section(discrepancy, N_MIN, n_turn, 1e-12), false));
    }
    if data_peak > tanks_in_series_peak(n_max) {
        return Err(Error::Fit(format!(
            "data peak {data_peak} exceeds every model peak for N in [{N_MIN}, {n_max}]"
        )));
    }
    if data_peak <= tanks_in_series_peak(n_turn) {
        return Ok((n_turn, true));
    }
    Ok((golden_section(discrepancy, n_turn, n_max, 1e-12), false))
}

fn least_squares(d: &DimensionlessRtd, n_max: f64) -> (f64, bool) {
    let sse = |n: f64| -> f64 {
        d.theta
            .iter()
            .zip(&d.e_theta)
            .map(|(&t, &e)| (e - tanks_in_series_ln(t, n).exp()).powi(2))
            .sum()
    };
    const GRID: usize = 400;
    let (lo, hi) = (N_MIN.ln(), n_max.ln());
    let grid: Vec<f64> = (0..GRID)
        .map(|i| (lo + (hi - lo) * i as f64 / (GRID - 1) as f64).exp())
        .collect();
    let best = (0..GRID)
        .map(|i| (i, sse(grid[i])))
        .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc })
        .0;
    let a = grid[best.saturating_sub(1)];
    let b = grid[(best + 1).min(GRID - 1)];
    let n = golden_section(sse, a, b, 1e-10);
    (n, best == 0 && n <= N_MIN * (1.0 + 1e-6))
}

/// Samples the model density on `[0, theta_max]` with `count` points.
pub fn sample_model(n: f64, theta_max: f64, count: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let theta: Vec<f64> = (0..count)
        .map(|i| theta_max * i as f64 / (count.max(2) - 1) as f64)
        .collect();
    let e = tanks_in_series_curve(&theta, n)?;
    Ok((theta, e))
}
