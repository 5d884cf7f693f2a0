//! Center-line geometry of a fixed-length helical coil with an optional
//! winding inversion, and the oscillatory inlet velocity.
//!
//! The coil axis is the `x` axis. The path is
//!
//! ```text
//! inlet line → quadratic blend → helix [→ inverted helix] → quadratic blend → outlet line
//! ```
//!
//! with inlet and outlet parallel to the axis. The inverted lobe is the point
//! reflection of the first helix through the inversion point, which keeps the
//! path C¹ and reverses the sign of its torsion.

use std::f64::consts::PI;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

type V3 = [f64; 3];

pub const PITCH_BOUNDS: (f64, f64) = (7.5, 15.0);
pub const COIL_RADIUS_BOUNDS: (f64, f64) = (3.0, 12.5);
pub const INVERSION_BOUNDS: (f64, f64) = (0.0, 1.0);
pub const AMPLITUDE_BOUNDS: (f64, f64) = (1.0, 8.0);
pub const FREQUENCY_BOUNDS: (f64, f64) = (2.0, 8.0);
pub const REYNOLDS_BOUNDS: (f64, f64) = (10.0, 50.0);

/// Leg length of each quadratic blend, mm.
pub const BLEND_LEG: f64 = 2.0;
/// Kinematic viscosity of water, mm²/s.
pub const WATER_KINEMATIC_VISCOSITY: f64 = 1.0;

const BEZIER_TABLE: usize = 1024;

fn add(a: V3, b: V3) -> V3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}
fn sub(a: V3, b: V3) -> V3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}
fn scale(a: V3, s: f64) -> V3 {
    [a[0] * s, a[1] * s, a[2] * s]
}
fn dot(a: V3, b: V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
fn cross(a: V3, b: V3) -> V3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}
fn norm(a: V3) -> f64 {
    dot(a, a).sqrt()
}
fn unit(a: V3) -> V3 {
    scale(a, 1.0 / norm(a))
}

pub(crate) fn distance(a: &V3, b: &V3) -> f64 {
    norm(sub(*a, *b))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoilParams {
    /// Axial advance per turn φ, mm.
    pub pitch: f64,
    /// Helix radius ρ, mm.
    pub coil_radius: f64,
    /// Arc-length fraction δ of the coil section at which the winding reverses.
    pub inversion: f64,
    #[serde(default = "default_tube_length")]
    pub tube_length: f64,
    #[serde(default = "default_tube_radius")]
    pub tube_radius: f64,
    #[serde(default = "default_straight")]
    pub inlet_len: f64,
    #[serde(default = "default_straight")]
    pub outlet_len: f64,
}

fn default_tube_length() -> f64 {
    75.0
}
fn default_tube_radius() -> f64 {
    2.5
}
fn default_straight() -> f64 {
    10.0
}

impl CoilParams {
    pub fn new(pitch: f64, coil_radius: f64, inversion: f64) -> Self {
        Self {
            pitch,
            coil_radius,
            inversion,
            tube_length: default_tube_length(),
            tube_radius: default_tube_radius(),
            inlet_len: default_straight(),
            outlet_len: default_straight(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("pitch", self.pitch),
            ("coil_radius", self.coil_radius),
            ("tube_length", self.tube_length),
            ("tube_radius", self.tube_radius),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Geometry(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("inlet_len", self.inlet_len), ("outlet_len", self.outlet_len)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Geometry(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.inversion) {
            return Err(Error::Geometry(format!("inversion must lie in [0, 1], got {}", self.inversion)));
        }
        if self.tube_length <= self.inlet_len + self.outlet_len {
            return Err(Error::Geometry(format!(
                "tube_length {} must exceed inlet_len + outlet_len = {}",
                self.tube_length,
                self.inlet_len + self.outlet_len
            )));
        }
        Ok(())
    }

    /// `true` when pitch, radius and inversion lie in the standard design box.
    pub fn within_design_bounds(&self) -> bool {
        let inside = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        inside(self.pitch, PITCH_BOUNDS)
            && inside(self.coil_radius, COIL_RADIUS_BOUNDS)
            && inside(self.inversion, INVERSION_BOUNDS)
    }

    fn has_inversion(&self) -> bool {
        self.inversion > 0.0 && self.inversion < 1.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SegmentKind {
    Inlet,
    InletBlend,
    Helix,
    InvertedHelix,
    OutletBlend,
    Outlet,
}

#[derive(Clone, Debug)]
enum Shape {
    Line { start: V3, dir: V3 },
    Bezier { p: [V3; 3], table: Vec<f64> },
    Helix { k: f64, rho: f64, psi0: f64, mirror: Option<(V3, f64)> },
}

#[derive(Clone, Debug)]
struct Segment {
    kind: SegmentKind,
    shape: Shape,
    length: f64,
}

fn helix_raw(k: f64, rho: f64, psi: f64) -> V3 {
    [k * psi, rho * psi.cos(), rho * psi.sin()]
}

fn helix_raw_d(k: f64, rho: f64, psi: f64) -> V3 {
    [k, -rho * psi.sin(), rho * psi.cos()]
}

fn bezier(p: &[V3; 3], t: f64) -> V3 {
    let u = 1.0 - t;
    add(add(scale(p[0], u * u), scale(p[1], 2.0 * u * t)), scale(p[2], t * t))
}

fn bezier_d(p: &[V3; 3], t: f64) -> V3 {
    add(scale(sub(p[1], p[0]), 2.0 * (1.0 - t)), scale(sub(p[2], p[1]), 2.0 * t))
}

/// Cumulative arc length of a quadratic Bézier at `BEZIER_TABLE + 1` equally spaced `t`,
/// each cell integrated with 5-point Gauss–Legendre.
fn bezier_table(p: &[V3; 3]) -> Vec<f64> {
    const NODES: [f64; 5] = [0.0, -0.538_469_310_105_683, 0.538_469_310_105_683, -0.906_179_845_938_664, 0.906_179_845_938_664];
    const WEIGHTS: [f64; 5] = [
        0.568_888_888_888_889,
        0.478_628_670_499_366,
        0.478_628_670_499_366,
        0.236_926_885_056_189,
        0.236_926_885_056_189,
    ];
    let h = 1.0 / BEZIER_TABLE as f64;
    let mut acc = vec![0.0];
    for i in 0..BEZIER_TABLE {
        let mid = (i as f64 + 0.5) * h;
        let cell: f64 = NODES
            .iter()
            .zip(&WEIGHTS)
            .map(|(x, w)| w * norm(bezier_d(p, mid + 0.5 * h * x)))
            .sum::<f64>()
            * 0.5
            * h;
        acc.push(acc[i] + cell);
    }
    acc
}

impl Segment {
    fn line(kind: SegmentKind, start: V3, dir: V3, length: f64) -> Self {
        Self {
            kind,
            shape: Shape::Line { start, dir: unit(dir) },
            length,
        }
    }

    fn bezier(kind: SegmentKind, p: [V3; 3]) -> Self {
        let table = bezier_table(&p);
        let length = *table.last().unwrap();
        Self {
            kind,
            shape: Shape::Bezier { p, table },
            length,
        }
    }

    /// Bézier parameter at arc length `s` by linear interpolation of the table.
    fn bezier_t(table: &[f64], s: f64) -> f64 {
        let i = table.partition_point(|v| *v <= s).clamp(1, table.len() - 1);
        let (a, b) = (table[i - 1], table[i]);
        let frac = if b > a { ((s - a) / (b - a)).clamp(0.0, 1.0) } else { 0.0 };
        ((i - 1) as f64 + frac) / BEZIER_TABLE as f64
    }

    /// Position and unit tangent at local arc length `s ∈ [0, length]`.
    fn eval(&self, s: f64) -> (V3, V3) {
        match &self.shape {
            Shape::Line { start, dir } => (add(*start, scale(*dir, s)), *dir),
            Shape::Bezier { p, table } => {
                let t = Self::bezier_t(table, s);
                (bezier(p, t), unit(bezier_d(p, t)))
            }
            Shape::Helix { k, rho, psi0, mirror } => {
                let psi = psi0 + s / (rho * rho + k * k).sqrt();
                match mirror {
                    None => (helix_raw(*k, *rho, psi), unit(helix_raw_d(*k, *rho, psi))),
                    Some((pivot, psi_inv)) => {
                        let q = 2.0 * psi_inv - psi;
                        (sub(scale(*pivot, 2.0), helix_raw(*k, *rho, q)), unit(helix_raw_d(*k, *rho, q)))
                    }
                }
            }
        }
    }
}

/// Analytic center line: a chain of segments with known arc lengths.
#[derive(Clone, Debug)]
pub struct CoilCurve {
    params: CoilParams,
    segments: Vec<Segment>,
    helix_angle: f64,
}

fn build_segments(params: &CoilParams, helix_angle: f64) -> Vec<Segment> {
    let rho = params.coil_radius;
    let k = params.pitch / (2.0 * PI);
    let c = (rho * rho + k * k).sqrt();
    let axis = [1.0, 0.0, 0.0];
    let psi_inv = params.inversion * helix_angle;
    let inverted = params.has_inversion() && psi_inv < helix_angle;

    let h0 = helix_raw(k, rho, 0.0);
    let t0 = unit(helix_raw_d(k, rho, 0.0));
    let c0 = sub(h0, scale(t0, BLEND_LEG));
    let inlet_end = sub(c0, scale(axis, BLEND_LEG));

    let mut segs = vec![Segment::line(
        SegmentKind::Inlet,
        sub(inlet_end, scale(axis, params.inlet_len)),
        axis,
        params.inlet_len,
    )];
    segs.push(Segment::bezier(SegmentKind::InletBlend, [inlet_end, c0, h0]));

    let (h_end, t_end) = if inverted {
        let pivot = helix_raw(k, rho, psi_inv);
        segs.push(Segment {
            kind: SegmentKind::Helix,
            shape: Shape::Helix { k, rho, psi0: 0.0, mirror: None },
            length: psi_inv * c,
        });
        let second = Segment {
            kind: SegmentKind::InvertedHelix,
            shape: Shape::Helix {
                k,
                rho,
                psi0: psi_inv,
                mirror: Some((pivot, psi_inv)),
            },
            length: (helix_angle - psi_inv) * c,
        };
        let end = second.eval(second.length);
        segs.push(second);
        end
    } else {
        let seg = Segment {
            kind: SegmentKind::Helix,
            shape: Shape::Helix { k, rho, psi0: 0.0, mirror: None },
            length: helix_angle * c,
        };
        let end = seg.eval(seg.length);
        segs.push(seg);
        end
    };

    let c1 = add(h_end, scale(t_end, BLEND_LEG));
    let outlet_start = add(c1, scale(axis, BLEND_LEG));
    segs.push(Segment::bezier(SegmentKind::OutletBlend, [h_end, c1, outlet_start]));
    segs.push(Segment::line(SegmentKind::Outlet, outlet_start, axis, params.outlet_len));
    segs
}

impl CoilCurve {
    /// Solves for the helix angular extent that makes the total length `tube_length`.
    pub fn new(params: &CoilParams) -> Result<Self> {
        params.validate()?;
        let total = |angle: f64| build_segments(params, angle).iter().map(|s| s.length).sum::<f64>();
        let k = params.pitch / (2.0 * PI);
        let c = (params.coil_radius.powi(2) + k * k).sqrt();
        let (mut lo, mut hi) = (0.0, params.tube_length / c);
        if total(lo) >= params.tube_length {
            return Err(Error::Geometry(format!(
                "straight sections and blends already exceed tube_length {}",
                params.tube_length
            )));
        }
        while total(hi) < params.tube_length {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if total(mid) < params.tube_length {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-13 * hi {
                break;
            }
        }
        let helix_angle = 0.5 * (lo + hi);
        Ok(Self {
            params: params.clone(),
            segments: build_segments(params, helix_angle),
            helix_angle,
        })
    }

    pub fn params(&self) -> &CoilParams {
        &self.params
    }

    pub fn length(&self) -> f64 {
        self.segments.iter().map(|s| s.length).sum()
    }

    /// Angular extent of the coil section, radians.
    pub fn helix_angle(&self) -> f64 {
        self.helix_angle
    }

    pub fn turns(&self) -> f64 {
        self.helix_angle / (2.0 * PI)
    }

    /// Arc length of the coil section (both lobes).
    pub fn helix_length(&self) -> f64 {
        self.segments
            .iter()
            .filter(|s| matches!(s.kind, SegmentKind::Helix | SegmentKind::InvertedHelix))
            .map(|s| s.length)
            .sum()
    }

    /// `(kind, start, end)` arc-length spans of every segment.
    pub fn spans(&self) -> Vec<(SegmentKind, f64, f64)> {
        let mut s = 0.0;
        self.segments
            .iter()
            .map(|seg| {
                let span = (seg.kind, s, s + seg.length);
                s += seg.length;
                span
            })
            .collect()
    }

    /// Position and unit tangent at global arc length `s`. At a join the
    /// segment ending there is used unless `right` is set.
    pub fn eval(&self, s: f64, right: bool) -> (V3, V3) {
        let mut start = 0.0;
        let last = self.segments.len() - 1;
        for (i, seg) in self.segments.iter().enumerate() {
            let end = start + seg.length;
            let take = if right { s < end } else { s <= end };
            if take || i == last {
                return seg.eval((s - start).clamp(0.0, seg.length));
            }
            start = end;
        }
        unreachable!()
    }

    /// Samples the curve uniformly in arc length at roughly `samples_per_mm`.
    pub fn sample(&self, samples_per_mm: f64) -> Result<CenterlinePath> {
        if !(samples_per_mm.is_finite() && samples_per_mm > 0.0) {
            return Err(Error::Geometry(format!("samples_per_mm must be positive, got {samples_per_mm}")));
        }
        let total = self.length();
        let count = ((total * samples_per_mm).ceil() as usize).max(1);
        let points: Vec<V3> = (0..=count)
            .map(|i| self.eval(total * i as f64 / count as f64, false).0)
            .collect();
        Ok(CenterlinePath::from_points(points))
    }
}

/// Sampled center line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CenterlinePath {
    pub points: Vec<V3>,
    pub cumulative_arclength: Vec<f64>,
}

impl CenterlinePath {
    pub fn from_points(points: Vec<V3>) -> Self {
        let mut cumulative = Vec::with_capacity(points.len());
        let mut s = 0.0;
        for (i, p) in points.iter().enumerate() {
            if i > 0 {
                s += distance(&points[i - 1], p);
            }
            cumulative.push(s);
        }
        Self {
            points,
            cumulative_arclength: cumulative,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Smallest distance between samples more than `exclusion` apart in arc length.
    pub fn min_clearance(&self, exclusion: f64) -> f64 {
        let s = &self.cumulative_arclength;
        let mut best = f64::INFINITY;
        for i in 0..self.points.len() {
            let j0 = s.partition_point(|v| *v <= s[i] + exclusion);
            for j in j0..self.points.len() {
                best = best.min(distance(&self.points[i], &self.points[j]));
            }
        }
        best
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["index", "x_mm", "y_mm", "z_mm", "arclength_mm"])?;
        for (i, (p, s)) in self.points.iter().zip(&self.cumulative_arclength).enumerate() {
            w.write_record([i.to_string(), p[0].to_string(), p[1].to_string(), p[2].to_string(), s.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut points = Vec::new();
        let mut cumulative = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| Error::Geometry(format!("bad path row {:?}", rec.iter().collect::<Vec<_>>())))
            };
            points.push([num(1)?, num(2)?, num(3)?]);
            cumulative.push(num(4)?);
        }
        Ok(Self {
            points,
            cumulative_arclength: cumulative,
        })
    }

    /// Wavefront OBJ with one polyline element.
    pub fn write_obj<W: Write>(&self, mut writer: W) -> Result<()> {
        writeln!(writer, "# coil center line, {} vertices, units mm", self.points.len())?;
        for p in &self.points {
            writeln!(writer, "v {} {} {}", p[0], p[1], p[2])?;
        }
        write!(writer, "l")?;
        for i in 1..=self.points.len() {
            write!(writer, " {i}")?;
        }
        writeln!(writer)?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExportFormat {
    Csv,
    Json,
    PolylineObj,
}

impl std::str::FromStr for ExportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            "obj" | "polyline-obj" => Ok(Self::PolylineObj),
            other => Err(Error::Config(format!("unknown export format {other:?}, expected csv, json or obj"))),
        }
    }
}

#[derive(Serialize)]
struct JsonExport<'a> {
    params: &'a CoilParams,
    arc_length: f64,
    points: &'a [V3],
    cumulative_arclength: &'a [f64],
}

pub fn export_path<W: Write>(path: &CenterlinePath, params: &CoilParams, format: ExportFormat, writer: W) -> Result<()> {
    match format {
        ExportFormat::Csv => path.write_csv(writer),
        ExportFormat::PolylineObj => path.write_obj(writer),
        ExportFormat::Json => {
            let doc = JsonExport {
                params,
                arc_length: arc_length(path),
                points: &path.points,
                cumulative_arclength: &path.cumulative_arclength,
            };
            serde_json::to_writer_pretty(writer, &doc)?;
            Ok(())
        }
    }
}

/// Sum of chord lengths.
pub fn arc_length(path: &CenterlinePath) -> f64 {
    path.points.windows(2).map(|w| distance(&w[0], &w[1])).sum()
}

/// Arc-length window treated as "the same stretch of tube" by the self-intersection check.
pub fn neighbour_window(tube_radius: f64) -> f64 {
    PI * 2.0 * tube_radius
}

/// Builds and samples the center line, rejecting self-intersecting tubes.
pub fn coil_path(params: &CoilParams, samples_per_mm: f64) -> Result<CenterlinePath> {
    let path = CoilCurve::new(params)?.sample(samples_per_mm)?;
    let clearance = path.min_clearance(neighbour_window(params.tube_radius));
    if clearance < 2.0 * params.tube_radius {
        return Err(Error::Geometry(format!(
            "tube self-intersects: center-line clearance {clearance:.3} mm is below the tube diameter {} mm",
            2.0 * params.tube_radius
        )));
    }
    Ok(path)
}

/// Signed discrete torsion at each interior sample, from finite differences.
pub fn torsion_estimate(path: &CenterlinePath) -> Vec<f64> {
    let p = &path.points;
    (2..p.len().saturating_sub(2))
        .map(|i| {
            let h = 0.5 * (path.cumulative_arclength[i + 1] - path.cumulative_arclength[i - 1]);
            let d1 = scale(sub(p[i + 1], p[i - 1]), 0.5 / h);
            let d2 = scale(add(sub(p[i + 1], scale(p[i], 2.0)), p[i - 1]), 1.0 / (h * h));
            let d3 = scale(
                add(sub(sub(p[i + 2], scale(p[i + 1], 2.0)), p[i - 2]), scale(p[i - 1], 2.0)),
                0.5 / (h * h * h),
            );
            let c = cross(d1, d2);
            let c2 = dot(c, c);
            if c2 < 1e-12 {
                0.0
            } else {
                dot(c, d3) / c2
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscillationParams {
    /// Oscillation amplitude, mm.
    pub amplitude: f64,
    /// Oscillation frequency, Hz.
    pub frequency: f64,
    /// Net-flow Reynolds number.
    pub reynolds: f64,
}

impl OscillationParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v, (lo, hi)) in [
            ("amplitude", self.amplitude, AMPLITUDE_BOUNDS),
            ("frequency", self.frequency, FREQUENCY_BOUNDS),
            ("reynolds", self.reynolds, REYNOLDS_BOUNDS),
        ] {
            if !(v >= lo && v <= hi) {
                return Err(Error::Geometry(format!("{name} = {v} is outside [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

/// `v_o(t) = 2π f a sin(2π f t)` in mm/s.
pub fn oscillatory_velocity(p: &OscillationParams, t: f64) -> f64 {
    2.0 * PI * p.frequency * p.amplitude * (2.0 * PI * p.frequency * t).sin()
}

/// Mean net-flow velocity in mm/s for a tube of radius `tube_radius` mm carrying water.
pub fn net_velocity(reynolds: f64, tube_radius: f64) -> f64 {
    reynolds * WATER_KINEMATIC_VISCOSITY / (2.0 * tube_radius)
}
