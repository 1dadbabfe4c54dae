//! Static world model: walls, doors, zones and anchors, plus the geometric
//! predicates the simulator, the tracker and the calibration consume.
//!
//! The world is planar. A [`Scenario`] is validated on construction and
//! immutable afterwards, so every query here is a pure function.

mod config;
pub mod geometry;

use std::collections::HashSet;

pub use config::{load_scenario, parse_scenario, scenario_to_toml, write_scenario, DoorsSection};
pub use geometry::Point;

use crate::error::{Error, Result};
use geometry::{point_segment_distance, segments_cross_strictly, segments_intersect};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Tolerance used for boundary-inclusive containment tests, in meters.
pub const BOUNDARY_EPS: f64 = 1e-9;

/// Doors must sit on a zone boundary within this distance.
pub const DOOR_BOUNDARY_TOLERANCE: f64 = 0.1;

pub const MIN_DOOR_WIDTH: f64 = 0.4;
pub const MAX_DOOR_WIDTH: f64 = 1.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wall {
    pub a: Point,
    pub b: Point,
    /// Only attenuating walls add through-wall propagation delay.
    pub attenuating: bool,
}

impl Wall {
    pub fn new(a: Point, b: Point, attenuating: bool) -> Result<Self> {
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::invalid("wall endpoints must be finite"));
        }
        if a == b {
            return Err(Error::invalid(format!("wall from ({}, {}) has zero length", a.x, a.y)));
        }
        Ok(Wall { a, b, attenuating })
    }

    pub fn length(&self) -> f64 {
        self.a.distance(self.b)
    }
}

/// A doorway: an opening of `width` meters centered on `center`, running
/// along `axis`. `normal` is the axis rotated by +90 degrees and defines the
/// positive travel direction through the door.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Door {
    pub id: u32,
    pub center: Point,
    pub axis: Point,
    pub width: f64,
    pub normal: Point,
}

impl Door {
    /// `axis` need not be normalized.
    pub fn new(id: u32, center: Point, axis: Point, width: f64) -> Result<Self> {
        let len = axis.norm();
        if !center.is_finite() || !len.is_finite() || len == 0.0 {
            return Err(Error::invalid(format!("door {id}: invalid center or axis")));
        }
        if !(MIN_DOOR_WIDTH..=MAX_DOOR_WIDTH).contains(&width) {
            return Err(Error::invalid(format!(
                "door {id}: width {width} m outside [{MIN_DOOR_WIDTH}, {MAX_DOOR_WIDTH}]"
            )));
        }
        let axis = axis * (1.0 / len);
        Ok(Door {
            id,
            center,
            axis,
            width,
            normal: axis.perp(),
        })
    }

    /// Endpoints of the opening, extended by `margin` on each side along the axis.
    pub fn opening(&self, margin: f64) -> (Point, Point) {
        let half = self.width / 2.0 + margin;
        (self.center - self.axis * half, self.center + self.axis * half)
    }

    /// Signed distance of `p` from the door line, measured along the normal.
    pub fn normal_offset(&self, p: Point) -> f64 {
        (p - self.center).dot(self.normal)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Zone {
    pub id: u32,
    polygon: Vec<Point>,
}

impl Zone {
    pub fn new(id: u32, polygon: Vec<Point>) -> Result<Self> {
        if polygon.len() < 3 {
            return Err(Error::invalid(format!("zone {id}: needs at least 3 vertices")));
        }
        if polygon.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid(format!("zone {id}: non-finite vertex")));
        }
        let zone = Zone { id, polygon };
        if !zone.is_simple() {
            return Err(Error::invalid(format!("zone {id}: polygon is not simple")));
        }
        Ok(zone)
    }

    pub fn polygon(&self) -> &[Point] {
        &self.polygon
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.polygon.len();
        (0..n).map(move |i| (self.polygon[i], self.polygon[(i + 1) % n]))
    }

    fn is_simple(&self) -> bool {
        let n = self.polygon.len();
        let edges: Vec<_> = self.edges().collect();
        for (i, &(a, b)) in edges.iter().enumerate() {
            if a == b {
                return false;
            }
            for (j, &(c, d)) in edges.iter().enumerate().skip(i + 1) {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    // Adjacent edges may only share their common vertex.
                    let (shared, other_end, far) = if j == i + 1 { (b, a, d) } else { (a, b, c) };
                    if (far - shared).cross(other_end - shared) == 0.0 && (far - shared).dot(other_end - shared) > 0.0 {
                        return false;
                    }
                } else if segments_intersect(a, b, c, d) {
                    return false;
                }
            }
        }
        true
    }

    pub fn on_boundary(&self, p: Point) -> bool {
        self.edges()
            .any(|(a, b)| point_segment_distance(p, a, b) <= BOUNDARY_EPS)
    }

    /// Even-odd rule on the open interior.
    fn strictly_inside(&self, p: Point) -> bool {
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        inside && !self.on_boundary(p)
    }

    /// Boundary-inclusive containment.
    pub fn contains(&self, p: Point) -> bool {
        self.on_boundary(p) || self.strictly_inside(p)
    }

    /// Mean of the vertices.
    pub fn vertex_centroid(&self) -> Point {
        let sum = self.polygon.iter().fold(Point::ORIGIN, |acc, &p| acc + p);
        sum * (1.0 / self.polygon.len() as f64)
    }

    fn overlaps(&self, other: &Zone) -> bool {
        for (a, b) in self.edges() {
            for (c, d) in other.edges() {
                if segments_cross_strictly(a, b, c, d) {
                    return true;
                }
            }
        }
        let probes = |z: &Zone| {
            let mut v = z.polygon.clone();
            v.push(z.vertex_centroid());
            v
        };
        probes(self).iter().any(|&p| other.strictly_inside(p)) || probes(other).iter().any(|&p| self.strictly_inside(p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub id: u32,
    pub position: Point,
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min: Point,
    pub max: Point,
}

impl Bounds {
    fn around(points: impl IntoIterator<Item = Point>) -> Option<Bounds> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut b = Bounds { min: first, max: first };
        for p in it {
            b.min.x = b.min.x.min(p.x);
            b.min.y = b.min.y.min(p.y);
            b.max.x = b.max.x.max(p.x);
            b.max.y = b.max.y.max(p.y);
        }
        Some(b)
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }
}

/// The validated, immutable world description.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    walls: Vec<Wall>,
    doors: Vec<Door>,
    zones: Vec<Zone>,
    anchors: Vec<Anchor>,
    speed_of_light: f64,
}

impl Scenario {
    /// Validates and assembles a scenario. Zones, doors and anchors are stored
    /// sorted by id.
    pub fn new(
        walls: Vec<Wall>,
        mut doors: Vec<Door>,
        mut zones: Vec<Zone>,
        mut anchors: Vec<Anchor>,
        speed_of_light: f64,
    ) -> Result<Self> {
        if !(speed_of_light.is_finite() && speed_of_light > 0.0) {
            return Err(Error::invalid("speed_of_light must be positive"));
        }
        if anchors.len() < 3 {
            return Err(Error::invalid("a scenario needs at least 3 anchors"));
        }
        if anchors.iter().any(|a| !a.position.is_finite()) {
            return Err(Error::invalid("anchor positions must be finite"));
        }
        check_unique("anchor", anchors.iter().map(|a| a.id))?;
        check_unique("door", doors.iter().map(|d| d.id))?;
        check_unique("zone", zones.iter().map(|z| z.id))?;
        anchors.sort_by_key(|a| a.id);
        doors.sort_by_key(|d| d.id);
        zones.sort_by_key(|z| z.id);

        for (i, a) in zones.iter().enumerate() {
            for b in &zones[i + 1..] {
                if a.overlaps(b) {
                    return Err(Error::invalid(format!("zones {} and {} overlap", a.id, b.id)));
                }
            }
        }
        for door in &doors {
            let on_boundary = zones.iter().any(|z| {
                z.edges()
                    .any(|(a, b)| point_segment_distance(door.center, a, b) <= DOOR_BOUNDARY_TOLERANCE)
            });
            if !on_boundary {
                return Err(Error::invalid(format!("door {} is not on any zone boundary", door.id)));
            }
        }
        Ok(Scenario {
            walls,
            doors,
            zones,
            anchors,
            speed_of_light,
        })
    }

    pub fn walls(&self) -> &[Wall] {
        &self.walls
    }

    pub fn doors(&self) -> &[Door] {
        &self.doors
    }

    pub fn zones(&self) -> &[Zone] {
        &self.zones
    }

    pub fn anchors(&self) -> &[Anchor] {
        &self.anchors
    }

    pub fn speed_of_light(&self) -> f64 {
        self.speed_of_light
    }

    pub fn anchor_ids(&self) -> Vec<u32> {
        self.anchors.iter().map(|a| a.id).collect()
    }

    pub fn anchor(&self, id: u32) -> Option<&Anchor> {
        self.anchors
            .binary_search_by_key(&id, |a| a.id)
            .ok()
            .map(|i| &self.anchors[i])
    }

    pub fn door(&self, id: u32) -> Option<&Door> {
        self.doors
            .binary_search_by_key(&id, |d| d.id)
            .ok()
            .map(|i| &self.doors[i])
    }

    /// Bounding box of every anchor, wall, zone vertex and door center.
    pub fn bounds(&self) -> Bounds {
        let points = self
            .anchors
            .iter()
            .map(|a| a.position)
            .chain(self.walls.iter().flat_map(|w| [w.a, w.b]))
            .chain(self.zones.iter().flat_map(|z| z.polygon.iter().copied()))
            .chain(self.doors.iter().map(|d| d.center));
        Bounds::around(points).expect("scenario has at least 3 anchors")
    }

    /// Same scenario with its doors replaced.
    pub fn with_doors(&self, doors: Vec<Door>) -> Result<Scenario> {
        Scenario::new(
            self.walls.clone(),
            doors,
            self.zones.clone(),
            self.anchors.clone(),
            self.speed_of_light,
        )
    }

    /// Same scenario rigidly translated by `offset`.
    pub fn translated(&self, offset: Point) -> Scenario {
        let walls = self
            .walls
            .iter()
            .map(|w| Wall {
                a: w.a + offset,
                b: w.b + offset,
                attenuating: w.attenuating,
            })
            .collect();
        let doors = self
            .doors
            .iter()
            .map(|d| Door {
                center: d.center + offset,
                ..*d
            })
            .collect();
        let zones = self
            .zones
            .iter()
            .map(|z| Zone {
                id: z.id,
                polygon: z.polygon.iter().map(|&p| p + offset).collect(),
            })
            .collect();
        let anchors = self
            .anchors
            .iter()
            .map(|a| Anchor {
                id: a.id,
                position: a.position + offset,
            })
            .collect();
        Scenario {
            walls,
            doors,
            zones,
            anchors,
            speed_of_light: self.speed_of_light,
        }
    }
}

fn check_unique(kind: &str, ids: impl Iterator<Item = u32>) -> Result<()> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::invalid(format!("duplicate {kind} id {id}")));
        }
    }
    Ok(())
}

/// Number of attenuating walls met by the closed segment `from`–`to`.
///
/// A segment endpoint lying on a wall counts as a crossing, and a wall
/// overlapping the segment collinearly counts once.
pub fn count_wall_crossings(scenario: &Scenario, from: Point, to: Point) -> Result<usize> {
    if from == to {
        return Err(Error::invalid("degenerate segment: from == to"));
    }
    Ok(scenario
        .walls
        .iter()
        .filter(|w| w.attenuating && segments_intersect(from, to, w.a, w.b))
        .count())
}

/// Id of the zone containing `p`, boundary inclusive; the lowest id wins on
/// shared edges.
pub fn zone_of(scenario: &Scenario, p: Point) -> Option<u32> {
    scenario.zones.iter().find(|z| z.contains(p)).map(|z| z.id)
}

/// `count` points spread evenly over the door opening, at the centers of
/// `count` equal sub-intervals.
pub fn door_reference_points(door: &Door, count: usize) -> Result<Vec<Point>> {
    if count == 0 {
        return Err(Error::invalid("reference point count must be positive"));
    }
    let n = count as f64;
    Ok((0..count)
        .map(|k| {
            let along = -door.width / 2.0 + door.width * (k as f64 + 0.5) / n;
            door.center + door.axis * along
        })
        .collect())
}

/// Splits `p - reference` into its magnitudes along the door axis (`h`) and
/// along the door normal (`v`).
pub fn decompose_against_door(door: &Door, p: Point, reference: Point) -> (f64, f64) {
    let d = p - reference;
    (d.dot(door.axis).abs(), d.dot(door.normal).abs())
}
