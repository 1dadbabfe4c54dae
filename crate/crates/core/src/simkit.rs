//! Trajectories and synthetic time-of-arrival measurements.
//!
//! Each TOA is the geometric flight time plus a flat per-wall delay for every
//! attenuating wall on the direct path, a body-shadowing delay that depends
//! on where the anchor sits relative to the user's facing direction, a
//! per-epoch offset shared by all anchors and Gaussian noise.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::world::{count_wall_crossings, zone_of, Point, Scenario, Zone};

/// Hardware-like timestamp resolution: 2^-36 s (about 14.6 ps).
pub const DEFAULT_TIMESTAMP_TICK: f64 = 1.0 / (1u64 << 36) as f64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub t: f64,
    pub position: Point,
    /// Direction the user faces, world frame, in [-pi, pi).
    pub heading: f64,
}

fn wrap_heading(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w >= PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Delay added when the user's body is between the tag and an anchor.
///
/// No delay up to `theta_clear`, a linear ramp to `delay_partial` up to
/// `theta_full`, and a jump to `delay_full` beyond it, where the tag is
/// wholly covered.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BodyShadowModel {
    pub theta_clear: f64,
    pub theta_full: f64,
    /// Nanoseconds.
    pub delay_partial: f64,
    /// Nanoseconds.
    pub delay_full: f64,
}

impl Default for BodyShadowModel {
    fn default() -> Self {
        BodyShadowModel {
            theta_clear: PI / 2.0,
            theta_full: 5.0 * PI / 6.0,
            delay_partial: 0.35,
            delay_full: 1.5,
        }
    }
}

impl BodyShadowModel {
    /// A model that never delays.
    pub fn none() -> Self {
        BodyShadowModel {
            delay_partial: 0.0,
            delay_full: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 < self.theta_clear
            && self.theta_clear < self.theta_full
            && self.theta_full <= PI
            && 0.0 <= self.delay_partial
            && self.delay_partial <= self.delay_full;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid body shadow model {self:?}")))
        }
    }
}

/// Shadowing delay in nanoseconds for an anchor `theta` radians away from
/// the facing direction.
pub fn shadow_delay(model: &BodyShadowModel, theta: f64) -> Result<f64> {
    if !(0.0..=PI).contains(&theta) {
        return Err(Error::invalid(format!("shadow angle {theta} outside [0, pi]")));
    }
    Ok(if theta <= model.theta_clear {
        0.0
    } else if theta <= model.theta_full {
        model.delay_partial * (theta - model.theta_clear) / (model.theta_full - model.theta_clear)
    } else {
        model.delay_full
    })
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Nanoseconds per attenuating wall on the direct path.
    pub wall_delay: f64,
    pub shadow: BodyShadowModel,
    /// Nanoseconds.
    pub toa_noise_sigma: f64,
    /// Seconds, added to every TOA of an epoch.
    pub clock_offset: f64,
    /// TOAs are rounded to multiples of this many seconds; 0 disables.
    pub timestamp_tick: f64,
    #[serde(skip)]
    pub rng_seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            wall_delay: 0.3,
            shadow: BodyShadowModel::default(),
            toa_noise_sigma: 0.1,
            clock_offset: 0.0,
            timestamp_tick: DEFAULT_TIMESTAMP_TICK,
            rng_seed: 0,
        }
    }
}

impl SimConfig {
    /// Pure geometry: no walls, shadowing, noise, offset or quantization.
    pub fn ideal() -> Self {
        SimConfig {
            wall_delay: 0.0,
            shadow: BodyShadowModel::none(),
            toa_noise_sigma: 0.0,
            clock_offset: 0.0,
            timestamp_tick: 0.0,
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.shadow.validate()?;
        if !(self.wall_delay >= 0.0 && self.toa_noise_sigma >= 0.0 && self.timestamp_tick >= 0.0) {
            return Err(Error::invalid("wall delay, noise and tick must be non-negative"));
        }
        if !self.clock_offset.is_finite() {
            return Err(Error::invalid("clock offset must be finite"));
        }
        Ok(())
    }
}

/// One epoch of per-anchor arrival times, in seconds.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ToaFrame {
    pub t: f64,
    pub toas: BTreeMap<u32, f64>,
}

impl ToaFrame {
    /// The same frame with `offset` seconds added to every TOA.
    pub fn shifted(&self, offset: f64) -> ToaFrame {
        ToaFrame {
            t: self.t,
            toas: self.toas.iter().map(|(&id, &v)| (id, v + offset)).collect(),
        }
    }
}

/// Samples a constant-speed walk along the polyline every `dt` seconds.
/// The final waypoint is always emitted; a pose sitting exactly on a turn
/// takes the heading of the leg that starts there.
pub fn waypoint_trajectory(waypoints: &[Point], speed: f64, dt: f64) -> Result<Vec<Pose>> {
    if waypoints.len() < 2 {
        return Err(Error::invalid("need at least 2 waypoints"));
    }
    if !(speed > 0.0 && dt > 0.0 && speed.is_finite() && dt.is_finite()) {
        return Err(Error::invalid("speed and dt must be positive"));
    }
    if waypoints.iter().any(|p| !p.is_finite()) {
        return Err(Error::invalid("waypoints must be finite"));
    }
    if let Some(w) = waypoints.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::invalid(format!(
            "duplicate consecutive waypoint ({}, {})",
            w[0].x, w[0].y
        )));
    }

    // Cumulative arc length at the start of each leg.
    let legs: Vec<(Point, Point, f64)> = waypoints
        .windows(2)
        .map(|w| (w[0], w[1], w[0].distance(w[1])))
        .collect();
    let mut starts = Vec::with_capacity(legs.len());
    let mut total = 0.0;
    for leg in &legs {
        starts.push(total);
        total += leg.2;
    }

    let pose_at = |s: f64, t: f64| {
        // Last leg whose start is <= s.
        let i = starts.partition_point(|&st| st <= s).saturating_sub(1);
        let (a, b, len) = legs[i];
        let u = ((s - starts[i]) / len).clamp(0.0, 1.0);
        let dir = b - a;
        Pose {
            t,
            position: a.lerp(b, u),
            heading: wrap_heading(dir.y.atan2(dir.x)),
        }
    };

    let step = speed * dt;
    let eps = 1e-9 * total.max(1.0);
    let mut poses = Vec::new();
    let mut k = 0u64;
    loop {
        let s = k as f64 * step;
        if s >= total - eps {
            break;
        }
        poses.push(pose_at(s, k as f64 * dt));
        k += 1;
    }
    let mut last = pose_at(total, total / speed);
    last.position = *waypoints.last().unwrap();
    poses.push(last);
    Ok(poses)
}

/// Angle in [0, pi] between the facing direction and the tag-to-anchor direction.
fn shadow_angle(heading: f64, from: Point, to: Point) -> f64 {
    let d = to - from;
    let facing = Point::new(heading.cos(), heading.sin());
    let cos = facing.dot(d) / d.norm();
    cos.clamp(-1.0, 1.0).acos()
}

fn quantize(value: f64, tick: f64) -> f64 {
    if tick > 0.0 {
        (value / tick).round() * tick
    } else {
        value
    }
}

/// Simulated TOAs for one pose. Noise is drawn from the substream `stream`
/// of the configured seed, so frames can be produced in any order.
pub fn simulate_toa(scenario: &Scenario, config: &SimConfig, pose: &Pose, stream: u64) -> Result<ToaFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    rng.set_stream(stream);
    let noise = if config.toa_noise_sigma > 0.0 {
        Some(Normal::new(0.0, config.toa_noise_sigma * 1e-9).map_err(|e| Error::invalid(e.to_string()))?)
    } else {
        None
    };
    let c = scenario.speed_of_light();
    let mut toas = BTreeMap::new();
    for anchor in scenario.anchors() {
        let distance = anchor.position.distance(pose.position);
        let mut toa = distance / c + config.clock_offset;
        if distance > 0.0 {
            let walls = count_wall_crossings(scenario, pose.position, anchor.position)?;
            toa += config.wall_delay * 1e-9 * walls as f64;
            let theta = shadow_angle(pose.heading, pose.position, anchor.position);
            toa += shadow_delay(&config.shadow, theta)? * 1e-9;
        }
        if let Some(n) = &noise {
            toa += n.sample(&mut rng);
        }
        toas.insert(anchor.id, quantize(toa, config.timestamp_tick));
    }
    Ok(ToaFrame { t: pose.t, toas })
}

/// One frame per pose; pose `i` uses noise substream `i`.
pub fn simulate_session(scenario: &Scenario, config: &SimConfig, trajectory: &[Pose]) -> Result<Vec<ToaFrame>> {
    if trajectory.is_empty() {
        return Err(Error::invalid("trajectory is empty"));
    }
    config.validate()?;
    trajectory
        .par_iter()
        .enumerate()
        .map(|(i, pose)| simulate_toa(scenario, config, pose, i as u64))
        .collect()
}

/// Random room-to-room walk through the scenario's doors.
///
/// Inside a zone the walker visits one or two random interior points, then
/// heads for a door, passes its center along the door normal and continues
/// in the neighbouring zone. Zones are assumed convex.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TourConfig {
    /// Minimum clearance of interior waypoints from zone edges, meters.
    pub margin: f64,
    /// Distance of the approach and exit points from the door line, meters.
    pub door_standoff: f64,
    #[serde(skip)]
    pub seed: u64,
}

impl Default for TourConfig {
    fn default() -> Self {
        TourConfig {
            margin: 0.6,
            door_standoff: 0.8,
            seed: 0,
        }
    }
}

fn random_interior_point(zone: &Zone, margin: f64, rng: &mut ChaCha8Rng) -> Result<Point> {
    let poly = zone.polygon();
    let (mut lo, mut hi) = (poly[0], poly[0]);
    for p in poly {
        lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    for _ in 0..10_000 {
        let p = Point::new(rng.random_range(lo.x..=hi.x), rng.random_range(lo.y..=hi.y));
        let clear = zone
            .edges()
            .all(|(a, b)| crate::world::geometry::point_segment_distance(p, a, b) >= margin);
        if clear && zone.contains(p) {
            return Ok(p);
        }
    }
    Err(Error::invalid(format!(
        "zone {} has no interior point with margin {margin}",
        zone.id
    )))
}

/// Waypoints for a tour of at least `length` meters.
pub fn random_tour(scenario: &Scenario, length: f64, config: &TourConfig) -> Result<Vec<Point>> {
    // (door index, zone on the negative side, zone on the positive side)
    let links: Vec<(usize, u32, u32)> = scenario
        .doors()
        .iter()
        .enumerate()
        .filter_map(|(i, d)| {
            let back = zone_of(scenario, d.center - d.normal * config.door_standoff)?;
            let front = zone_of(scenario, d.center + d.normal * config.door_standoff)?;
            (back != front).then_some((i, back, front))
        })
        .collect();
    if links.is_empty() {
        return Err(Error::invalid("no door connects two zones"));
    }
    let zone = |id: u32| scenario.zones().iter().find(|z| z.id == id).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut current = links[rng.random_range(0..links.len())].1;
    let mut points = vec![random_interior_point(zone(current), config.margin, &mut rng)?];
    let mut travelled = 0.0;
    let mut push = |points: &mut Vec<Point>, p: Point| {
        let last = *points.last().unwrap();
        if last != p {
            travelled += last.distance(p);
            points.push(p);
        }
        travelled
    };

    let mut so_far = 0.0;
    while so_far < length {
        for _ in 0..rng.random_range(1..=2) {
            let p = random_interior_point(zone(current), config.margin, &mut rng)?;
            push(&mut points, p);
        }
        let exits: Vec<_> = links
            .iter()
            .filter(|(_, back, front)| *back == current || *front == current)
            .collect();
        if exits.is_empty() {
            return Err(Error::invalid(format!("zone {current} has no door")));
        }
        let &(door_idx, back, front) = exits[rng.random_range(0..exits.len())];
        let door = &scenario.doors()[door_idx];
        let (sign, next) = if back == current { (1.0, front) } else { (-1.0, back) };
        push(&mut points, door.center - door.normal * (sign * config.door_standoff));
        push(&mut points, door.center);
        so_far = push(&mut points, door.center + door.normal * (sign * config.door_standoff));
        current = next;
    }
    Ok(points)
}

/// Tour waypoints sampled into poses, truncated to `duration` seconds.
pub fn random_walk(scenario: &Scenario, duration: f64, speed: f64, dt: f64, config: &TourConfig) -> Result<Vec<Pose>> {
    let waypoints = random_tour(scenario, duration * speed + 5.0, config)?;
    let mut poses = waypoint_trajectory(&waypoints, speed, dt)?;
    poses.retain(|p| p.t <= duration + 1e-9);
    Ok(poses)
}

/// Writes frames as CSV with header `t,anchor_id,toa_s`, one row per
/// (frame, anchor). Floats use the shortest round-trip representation.
pub fn write_toa_csv<W: Write>(frames: &[ToaFrame], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "anchor_id", "toa_s"])?;
    for f in frames {
        for (id, toa) in &f.toas {
            w.write_record([f.t.to_string(), id.to_string(), toa.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io("<toa csv>", e))?;
    Ok(())
}

/// Reads the TOA CSV. Consecutive rows sharing a timestamp form one frame;
/// timestamps must not decrease.
pub fn read_toa_csv<R: Read>(input: R, path: &Path) -> Result<Vec<ToaFrame>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["t", "anchor_id", "toa_s"] {
        return Err(parse_err(
            1,
            format!("expected header t,anchor_id,toa_s, got {:?}", headers),
        ));
    }
    let mut frames: Vec<ToaFrame> = Vec::new();
    for (i, record) in r.records().enumerate() {
        let line = i + 2;
        let record = record?;
        if record.len() != 3 {
            return Err(parse_err(line, format!("expected 3 fields, got {}", record.len())));
        }
        let t: f64 = record[0].parse().map_err(|e| parse_err(line, format!("t: {e}")))?;
        let id: u32 = record[1]
            .parse()
            .map_err(|e| parse_err(line, format!("anchor_id: {e}")))?;
        let toa: f64 = record[2].parse().map_err(|e| parse_err(line, format!("toa_s: {e}")))?;
        if !t.is_finite() || !toa.is_finite() {
            return Err(parse_err(line, "non-finite value".into()));
        }
        match frames.last_mut() {
            Some(f) if f.t == t => {
                if f.toas.insert(id, toa).is_some() {
                    return Err(parse_err(line, format!("duplicate anchor {id} at t={t}")));
                }
            }
            Some(f) if f.t > t => {
                return Err(parse_err(line, format!("time went backwards: {t} after {}", f.t)));
            }
            _ => frames.push(ToaFrame {
                t,
                toas: BTreeMap::from([(id, toa)]),
            }),
        }
    }
    Ok(frames)
}

pub fn load_toa_csv(path: impl AsRef<Path>) -> Result<Vec<ToaFrame>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_toa_csv(std::io::BufReader::new(file), path)
}

pub fn save_toa_csv(frames: &[ToaFrame], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_toa_csv(frames, std::io::BufWriter::new(file))
}

/// Ground-truth poses as CSV `t,x,y,heading`.
pub fn write_pose_csv<W: Write>(poses: &[Pose], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "x", "y", "heading"])?;
    for p in poses {
        w.write_record([
            p.t.to_string(),
            p.position.x.to_string(),
            p.position.y.to_string(),
            p.heading.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<pose csv>", e))?;
    Ok(())
}
