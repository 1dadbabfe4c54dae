//! TDOA formation and a constant-velocity Extended Kalman Filter.
//!
//! Measurements are range differences `d_i - d_j` in meters. The filter
//! state is `[px, py, vx, vy]`; process noise is continuous white
//! acceleration, so consecutive predictions compose exactly.

use std::fmt;
use std::io::Write;

use nalgebra::{Matrix4, RowVector4, Vector4};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::simkit::ToaFrame;
use crate::world::{Point, Scenario};

/// Positions closer than this to an anchor make the Jacobian singular.
pub const SINGULARITY_RADIUS: f64 = 1e-6;

/// Grid pitch of the initialization search, meters.
pub const INIT_GRID_PITCH: f64 = 0.25;

/// An unordered anchor pair stored as `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AnchorPair {
    i: u32,
    j: u32,
}

impl AnchorPair {
    pub fn new(a: u32, b: u32) -> Result<Self> {
        match a.cmp(&b) {
            std::cmp::Ordering::Less => Ok(AnchorPair { i: a, j: b }),
            std::cmp::Ordering::Greater => Ok(AnchorPair { i: b, j: a }),
            std::cmp::Ordering::Equal => Err(Error::invalid(format!("pair ({a} {b}) repeats an anchor"))),
        }
    }

    pub fn i(&self) -> u32 {
        self.i
    }

    pub fn j(&self) -> u32 {
        self.j
    }

    pub fn contains(&self, anchor: u32) -> bool {
        self.i == anchor || self.j == anchor
    }
}

impl fmt::Display for AnchorPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({} {})", self.i, self.j)
    }
}

/// Formats a pair list as `(1 2) (1 6) ...`.
pub fn format_pairs(pairs: &[AnchorPair]) -> String {
    pairs.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TdoaMeasurement {
    pub pair: AnchorPair,
    /// Range difference `d_i - d_j`, meters.
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerState {
    /// `[px, py, vx, vy]`.
    pub x: Vector4<f64>,
    pub p: Matrix4<f64>,
    pub t: f64,
}

impl TrackerState {
    pub fn position(&self) -> Point {
        Point::new(self.x[0], self.x[1])
    }

    pub fn velocity(&self) -> Point {
        Point::new(self.x[2], self.x[3])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EkfConfig {
    /// Spectral density of the white acceleration noise is this squared.
    pub process_noise_accel_sigma: f64,
    pub tdoa_noise_sigma: f64,
    /// Per-measurement bound on the normalized innovation squared.
    pub gate_threshold: f64,
    pub init_position_sigma: f64,
    pub init_velocity_sigma: f64,
}

impl Default for EkfConfig {
    fn default() -> Self {
        EkfConfig {
            process_noise_accel_sigma: 0.7,
            tdoa_noise_sigma: 0.15,
            gate_threshold: 9.0,
            init_position_sigma: 3.0,
            init_velocity_sigma: 1.0,
        }
    }
}

impl EkfConfig {
    pub fn validate(&self) -> Result<()> {
        let sigmas = [
            self.process_noise_accel_sigma,
            self.tdoa_noise_sigma,
            self.init_position_sigma,
            self.init_velocity_sigma,
        ];
        if sigmas.iter().all(|s| s.is_finite() && *s > 0.0) && self.gate_threshold > 0.0 {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid EKF configuration {self:?}")))
        }
    }
}

/// Range differences `c * (toa_i - toa_j)` for every pair whose anchors are
/// both present in the frame, in input order. Pairs with a missing anchor
/// are skipped.
pub fn form_tdoas(frame: &ToaFrame, pairs: &[AnchorPair], c: f64) -> Vec<TdoaMeasurement> {
    pairs
        .iter()
        .filter_map(|&pair| {
            let ti = frame.toas.get(&pair.i)?;
            let tj = frame.toas.get(&pair.j)?;
            Some(TdoaMeasurement {
                pair,
                value: c * (ti - tj),
            })
        })
        .collect()
}

/// Every unordered pair of `anchor_ids`, sorted lexicographically.
pub fn all_pairs(anchor_ids: &[u32]) -> Result<Vec<AnchorPair>> {
    let mut ids = anchor_ids.to_vec();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid("anchor ids must be unique"));
    }
    if ids.len() < 2 {
        return Err(Error::invalid("need at least 2 anchors to form a pair"));
    }
    let mut pairs = Vec::with_capacity(ids.len() * (ids.len() - 1) / 2);
    for (k, &a) in ids.iter().enumerate() {
        for &b in &ids[k + 1..] {
            pairs.push(AnchorPair { i: a, j: b });
        }
    }
    Ok(pairs)
}

fn transition(dt: f64) -> Matrix4<f64> {
    let mut f = Matrix4::identity();
    f[(0, 2)] = dt;
    f[(1, 3)] = dt;
    f
}

fn process_noise(dt: f64, accel_sigma: f64) -> Matrix4<f64> {
    let q = accel_sigma * accel_sigma;
    let (a, b, c) = (q * dt * dt * dt / 3.0, q * dt * dt / 2.0, q * dt);
    let mut m = Matrix4::zeros();
    for axis in 0..2 {
        m[(axis, axis)] = a;
        m[(axis, axis + 2)] = b;
        m[(axis + 2, axis)] = b;
        m[(axis + 2, axis + 2)] = c;
    }
    m
}

pub fn predict(state: &TrackerState, dt: f64, config: &EkfConfig) -> Result<TrackerState> {
    if dt < 0.0 || !dt.is_finite() {
        return Err(Error::invalid(format!("cannot predict over dt = {dt}")));
    }
    let f = transition(dt);
    Ok(TrackerState {
        x: f * state.x,
        p: f * state.p * f.transpose() + process_noise(dt, config.process_noise_accel_sigma),
        t: state.t + dt,
    })
}

fn anchor_position(scenario: &Scenario, id: u32) -> Result<Point> {
    scenario
        .anchor(id)
        .map(|a| a.position)
        .ok_or_else(|| Error::invalid(format!("anchor {id} is not in the scenario")))
}

fn unit_from(anchor: Point, anchor_id: u32, p: Point) -> Result<(Point, f64)> {
    let d = p - anchor;
    let r = d.norm();
    if r < SINGULARITY_RADIUS {
        return Err(Error::Singularity { anchor: anchor_id });
    }
    Ok((d * (1.0 / r), r))
}

/// Predicted range difference and its gradient with respect to the state.
fn measurement_model(position: Point, pair: AnchorPair, scenario: &Scenario) -> Result<(f64, RowVector4<f64>)> {
    let (ui, ri) = unit_from(anchor_position(scenario, pair.i)?, pair.i, position)?;
    let (uj, rj) = unit_from(anchor_position(scenario, pair.j)?, pair.j, position)?;
    let g = ui - uj;
    Ok((ri - rj, RowVector4::new(g.x, g.y, 0.0, 0.0)))
}

/// Gradient of `|p - a_i| - |p - a_j|` with respect to `[px, py, vx, vy]`.
pub fn tdoa_jacobian(position: Point, pair: AnchorPair, scenario: &Scenario) -> Result<RowVector4<f64>> {
    measurement_model(position, pair, scenario).map(|(_, h)| h)
}

/// Sequential scalar updates. A measurement whose normalized innovation
/// squared exceeds the gate is skipped.
pub fn update(
    state: &TrackerState,
    measurements: &[TdoaMeasurement],
    scenario: &Scenario,
    config: &EkfConfig,
) -> Result<TrackerState> {
    let r = config.tdoa_noise_sigma * config.tdoa_noise_sigma;
    let mut x = state.x;
    let mut p = state.p;
    for m in measurements {
        let (predicted, h) = measurement_model(Point::new(x[0], x[1]), m.pair, scenario)?;
        let ph = p * h.transpose();
        let s = (h * ph)[0] + r;
        let innovation = m.value - predicted;
        if !s.is_finite() || s <= 0.0 || !innovation.is_finite() {
            return Err(Error::FilterDivergence { pair: m.pair });
        }
        if innovation * innovation / s > config.gate_threshold {
            continue;
        }
        let k = ph / s;
        x += k * innovation;
        let i_kh = Matrix4::identity() - k * h;
        // Joseph form keeps P positive semi-definite.
        p = i_kh * p * i_kh.transpose() + k * k.transpose() * r;
        p = (p + p.transpose()) * 0.5;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::FilterDivergence { pair: m.pair });
        }
    }
    Ok(TrackerState { x, p, t: state.t })
}

/// Coarse start: the node of a 0.25 m grid over the scenario bounding box
/// minimizing the squared TDOA residuals of the first frame. Later frames
/// are ignored.
pub fn initialize(
    frames: &[ToaFrame],
    pairs: &[AnchorPair],
    scenario: &Scenario,
    config: &EkfConfig,
) -> Result<TrackerState> {
    let first = frames
        .first()
        .ok_or_else(|| Error::invalid("initialization needs at least one frame"))?;
    let measurements = form_tdoas(first, pairs, scenario.speed_of_light());
    if measurements.is_empty() {
        return Err(Error::Initialization(format!(
            "no pair of {} is available at t = {}",
            format_pairs(pairs),
            first.t
        )));
    }
    let anchors: Vec<(Point, Point, f64)> = measurements
        .iter()
        .map(|m| {
            Ok((
                anchor_position(scenario, m.pair.i)?,
                anchor_position(scenario, m.pair.j)?,
                m.value,
            ))
        })
        .collect::<Result<_>>()?;

    let bounds = scenario.bounds();
    let nx = ((bounds.max.x - bounds.min.x) / INIT_GRID_PITCH + 1e-9).floor() as usize;
    let ny = ((bounds.max.y - bounds.min.y) / INIT_GRID_PITCH + 1e-9).floor() as usize;
    let mut best: Option<(f64, Point)> = None;
    for iy in 0..=ny {
        for ix in 0..=nx {
            let node = Point::new(
                bounds.min.x + ix as f64 * INIT_GRID_PITCH,
                bounds.min.y + iy as f64 * INIT_GRID_PITCH,
            );
            let cost: f64 = anchors
                .iter()
                .map(|&(ai, aj, z)| {
                    let r = z - (node.distance(ai) - node.distance(aj));
                    r * r
                })
                .sum();
            if cost.is_finite() && best.is_none_or(|(c, _)| cost < c) {
                best = Some((cost, node));
            }
        }
    }
    let (_, position) = best.ok_or_else(|| Error::Initialization("every grid residual is non-finite".into()))?;
    let (sp, sv) = (config.init_position_sigma, config.init_velocity_sigma);
    Ok(TrackerState {
        x: Vector4::new(position.x, position.y, 0.0, 0.0),
        p: Matrix4::from_diagonal(&Vector4::new(sp * sp, sp * sp, sv * sv, sv * sv)),
        t: first.t,
    })
}

/// One predict/update cycle onto `frame` with the given pairs.
pub fn advance(
    state: &TrackerState,
    frame: &ToaFrame,
    pairs: &[AnchorPair],
    scenario: &Scenario,
    config: &EkfConfig,
) -> Result<TrackerState> {
    let predicted = predict(state, frame.t - state.t, config)?;
    let measurements = form_tdoas(frame, pairs, scenario.speed_of_light());
    update(&predicted, &measurements, scenario, config)
}

/// Plain tracking with a fixed pair list: initialize on the first frame,
/// then one predict/update cycle per frame (the first with `dt = 0`).
pub fn run_filter(
    frames: &[ToaFrame],
    pairs: &[AnchorPair],
    scenario: &Scenario,
    config: &EkfConfig,
) -> Result<Vec<TrackerState>> {
    let mut state = initialize(frames, pairs, scenario, config)?;
    let mut out = Vec::with_capacity(frames.len());
    for frame in frames {
        state = advance(&state, frame, pairs, scenario, config)?;
        out.push(state);
    }
    Ok(out)
}

pub const FIX_CSV_HEADER: [&str; 7] = ["t", "x", "y", "vx", "vy", "p00", "p11"];

pub(crate) fn fix_fields(s: &TrackerState) -> [String; 7] {
    [
        s.t.to_string(),
        s.x[0].to_string(),
        s.x[1].to_string(),
        s.x[2].to_string(),
        s.x[3].to_string(),
        s.p[(0, 0)].to_string(),
        s.p[(1, 1)].to_string(),
    ]
}

/// Position fixes as CSV `t,x,y,vx,vy,p00,p11`.
pub fn write_fix_csv<W: Write>(states: &[TrackerState], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FIX_CSV_HEADER)?;
    for s in states {
        w.write_record(fix_fields(s))?;
    }
    w.flush().map_err(|e| Error::io("<fix csv>", e))?;
    Ok(())
}
