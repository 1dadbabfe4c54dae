//! Doorway detection on occupancy grids and synthetic apartment maps.
//!
//! The detector looks for narrow passages: free cells whose clearance (from
//! a Euclidean distance transform) matches half a door width and which sit
//! between two roughly opposite obstacles. Candidate clusters survive only
//! if blocking them cuts the free space around them in two.

use std::collections::VecDeque;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmDecoder, PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageDecoder, ImageEncoder};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::{Door, Point};

pub const DEFAULT_RESOLUTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cell {
    Free,
    Occupied,
    Unknown,
}

impl Cell {
    /// Graymap value written for this cell.
    pub fn gray(self) -> u8 {
        match self {
            Cell::Occupied => 0,
            Cell::Unknown => 128,
            Cell::Free => 255,
        }
    }

    /// Dark is occupied, light is free, the middle band is unknown.
    pub fn from_gray(v: u8) -> Cell {
        match v {
            0..64 => Cell::Occupied,
            193.. => Cell::Free,
            _ => Cell::Unknown,
        }
    }
}

/// Row-major raster; row 0 is the southern edge. `origin` is the world
/// position of the outer corner of cell (0, 0).
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    width: usize,
    height: usize,
    resolution: f64,
    origin: Point,
    cells: Vec<Cell>,
}

impl OccupancyGrid {
    pub fn new(width: usize, height: usize, resolution: f64, origin: Point, fill: Cell) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("grid must have at least one cell"));
        }
        if !(resolution > 0.0 && resolution.is_finite()) || !origin.is_finite() {
            return Err(Error::invalid("grid resolution must be positive and origin finite"));
        }
        Ok(OccupancyGrid {
            width,
            height,
            resolution,
            origin,
            cells: vec![fill; width * height],
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    pub fn get(&self, col: usize, row: usize) -> Cell {
        self.cells[row * self.width + col]
    }

    pub fn set(&mut self, col: usize, row: usize, cell: Cell) {
        self.cells[row * self.width + col] = cell;
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn cell_center(&self, col: usize, row: usize) -> Point {
        self.origin
            + Point::new(
                (col as f64 + 0.5) * self.resolution,
                (row as f64 + 0.5) * self.resolution,
            )
    }

    /// Cell containing `p`, if inside the grid.
    pub fn cell_of(&self, p: Point) -> Option<(usize, usize)> {
        let c = ((p.x - self.origin.x) / self.resolution).floor();
        let r = ((p.y - self.origin.y) / self.resolution).floor();
        if c >= 0.0 && r >= 0.0 && (c as usize) < self.width && (r as usize) < self.height {
            Some((c as usize, r as usize))
        } else {
            None
        }
    }

    /// Same cells, shifted in the world.
    pub fn translated(&self, offset: Point) -> OccupancyGrid {
        OccupancyGrid {
            origin: self.origin + offset,
            ..self.clone()
        }
    }

    /// The grid rotated a quarter turn counterclockwise about the world origin.
    pub fn rotated_ccw(&self) -> OccupancyGrid {
        let (w, h) = (self.width, self.height);
        let mut cells = vec![Cell::Unknown; w * h];
        for r in 0..h {
            for c in 0..w {
                // (c, r) -> (h - 1 - r, c) in a grid h wide.
                cells[c * h + (h - 1 - r)] = self.get(c, r);
            }
        }
        OccupancyGrid {
            width: h,
            height: w,
            resolution: self.resolution,
            origin: Point::new(-self.origin.y - h as f64 * self.resolution, self.origin.x),
            cells,
        }
    }
}

/// Quarter-turn counterclockwise rotation of a world point about the origin.
pub fn rotate_ccw(p: Point) -> Point {
    Point::new(-p.y, p.x)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    resolution: f64,
    origin: [f64; 2],
}

/// `map.pgm` keeps its metadata in `map.pgm.toml`.
pub fn sidecar_path(pgm: &Path) -> PathBuf {
    let mut s = pgm.as_os_str().to_owned();
    s.push(".toml");
    PathBuf::from(s)
}

/// Writes a binary graymap (the top image row is the northern grid row) and
/// its sidecar.
pub fn save_grid(grid: &OccupancyGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut pixels = Vec::with_capacity(grid.cells.len());
    for r in (0..grid.height).rev() {
        pixels.extend((0..grid.width).map(|c| grid.get(c, r).gray()));
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    PnmEncoder::new(BufWriter::new(file))
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(&pixels, grid.width as u32, grid.height as u32, ExtendedColorType::L8)?;
    let sidecar = Sidecar {
        resolution: grid.resolution,
        origin: grid.origin.into(),
    };
    let side = sidecar_path(path);
    let text = toml::to_string(&sidecar).map_err(|e| Error::Config {
        path: side.clone(),
        message: e.to_string(),
    })?;
    std::fs::write(&side, text).map_err(|e| Error::io(side, e))
}

/// Reads an ASCII or binary graymap and its sidecar. Without a sidecar the
/// default resolution and a zero origin are assumed.
pub fn load_grid(path: impl AsRef<Path>) -> Result<OccupancyGrid> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let decoder = PnmDecoder::new(BufReader::new(file))?;
    let (w, h) = decoder.dimensions();
    let image = image::DynamicImage::from_decoder(decoder)?.into_luma8();

    let side = sidecar_path(path);
    let sidecar = if side.exists() {
        let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        toml::from_str::<Sidecar>(&text).map_err(|e| Error::Config {
            path: side.clone(),
            message: e.to_string(),
        })?
    } else {
        Sidecar {
            resolution: DEFAULT_RESOLUTION,
            origin: [0.0, 0.0],
        }
    };
    let mut grid = OccupancyGrid::new(
        w as usize,
        h as usize,
        sidecar.resolution,
        sidecar.origin.into(),
        Cell::Unknown,
    )?;
    for (x, y, px) in image.enumerate_pixels() {
        grid.set(x as usize, (h - 1 - y) as usize, Cell::from_gray(px.0[0]));
    }
    Ok(grid)
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapGenConfig {
    /// Inclusive.
    pub room_count: (usize, usize),
    /// Meters, inclusive.
    pub door_width: (f64, f64),
    /// Probability that a known cell flips between free and occupied.
    pub noise_level: f64,
    pub resolution: f64,
    pub min_room_size: f64,
    /// Clearance between a door and any wall junction.
    pub junction_margin: f64,
}

impl Default for MapGenConfig {
    fn default() -> Self {
        MapGenConfig {
            room_count: (3, 5),
            door_width: (0.6, 0.8),
            noise_level: 0.0,
            resolution: DEFAULT_RESOLUTION,
            min_room_size: 1.8,
            junction_margin: 0.5,
        }
    }
}

const INTERIOR_HALF_THICKNESS: i64 = 1;
const GEN_ATTEMPTS: usize = 200;
const PAD_CELLS: i64 = 10;

/// A rectangular room in cell coordinates; walls run along the bounding
/// lines `x0`, `x1`, `y0`, `y1`.
#[derive(Debug, Clone, Copy)]
struct Room {
    x0: i64,
    x1: i64,
    y0: i64,
    y1: i64,
}

/// An interior wall: `vertical` walls sit at column `at` and span rows `from..=to`.
#[derive(Debug, Clone, Copy)]
struct Split {
    vertical: bool,
    at: i64,
    from: i64,
    to: i64,
}

struct Layout {
    width: i64,
    height: i64,
    splits: Vec<Split>,
    /// (split index, first free cell along the wall, free cell count)
    doors: Vec<(usize, i64, i64)>,
}

fn try_layout(rng: &mut ChaCha8Rng, cfg: &MapGenConfig) -> Option<Layout> {
    let res = cfg.resolution;
    let cells = |m: f64| (m / res).round() as i64;
    let rooms_wanted = rng.random_range(cfg.room_count.0..=cfg.room_count.1);
    let width = cells(rng.random_range(6.0..10.0));
    let height = cells(rng.random_range(5.0..8.0));
    let min_room = cells(cfg.min_room_size);

    let mut rooms = vec![Room {
        x0: 0,
        x1: width,
        y0: 0,
        y1: height,
    }];
    let mut splits = Vec::new();
    while rooms.len() < rooms_wanted {
        let (idx, room) = rooms
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, r)| (r.x1 - r.x0).max(r.y1 - r.y0) >= 2 * min_room)
            .max_by_key(|(_, r)| (r.x1 - r.x0) * (r.y1 - r.y0))?;
        let vertical = room.x1 - room.x0 >= room.y1 - room.y0;
        let (lo, hi) = if vertical {
            (room.x0, room.x1)
        } else {
            (room.y0, room.y1)
        };
        let at = rng.random_range(lo + min_room..=hi - min_room);
        let (a, b) = if vertical {
            splits.push(Split {
                vertical,
                at,
                from: room.y0,
                to: room.y1,
            });
            (Room { x1: at, ..room }, Room { x0: at, ..room })
        } else {
            splits.push(Split {
                vertical,
                at,
                from: room.x0,
                to: room.x1,
            });
            (Room { y1: at, ..room }, Room { y0: at, ..room })
        };
        rooms[idx] = a;
        rooms.push(b);
    }

    let margin = cells(cfg.junction_margin);
    let mut doors = Vec::new();
    for (k, s) in splits.iter().enumerate() {
        let door_cells = cells(rng.random_range(cfg.door_width.0..=cfg.door_width.1));
        // Walls meeting this one, plus its own ends.
        let mut junctions = vec![s.from, s.to];
        for o in &splits {
            if o.vertical != s.vertical && (o.from == s.at || o.to == s.at) && o.at > s.from && o.at < s.to {
                junctions.push(o.at);
            }
        }
        junctions.sort_unstable();
        let mut starts = Vec::new();
        for piece in junctions.windows(2) {
            let first = piece[0] + margin + INTERIOR_HALF_THICKNESS + 1;
            let last = piece[1] - margin - INTERIOR_HALF_THICKNESS - door_cells;
            starts.extend(first..=last);
        }
        if starts.is_empty() {
            return None;
        }
        doors.push((k, starts[rng.random_range(0..starts.len())], door_cells));
    }
    Some(Layout {
        width,
        height,
        splits,
        doors,
    })
}

/// Random rectilinear apartment: a rectangle cut recursively into rooms,
/// with one door in every cut so all rooms are reachable. Walls are three
/// cells thick inside and four outside; everything outside is unknown.
pub fn generate_map(seed: u64, cfg: &MapGenConfig) -> Result<(OccupancyGrid, Vec<Door>)> {
    if cfg.room_count.0 < 3 || cfg.room_count.0 > cfg.room_count.1 {
        return Err(Error::invalid(
            "room_count must be an ordered range starting at 3 or more",
        ));
    }
    if !(cfg.door_width.0 > 0.0 && cfg.door_width.0 <= cfg.door_width.1) {
        return Err(Error::invalid("door_width must be an ordered positive range"));
    }
    if !(0.0..=1.0).contains(&cfg.noise_level) {
        return Err(Error::invalid("noise_level must lie in [0, 1]"));
    }
    if !(cfg.resolution > 0.0 && cfg.min_room_size > 0.0 && cfg.junction_margin >= 0.0) {
        return Err(Error::invalid("resolution, min_room_size must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout = (0..GEN_ATTEMPTS)
        .find_map(|_| try_layout(&mut rng, cfg))
        .ok_or_else(|| Error::Generation(format!("no layout fits after {GEN_ATTEMPTS} attempts")))?;

    let res = cfg.resolution;
    let w = (layout.width + 2 * PAD_CELLS + 1) as usize;
    let h = (layout.height + 2 * PAD_CELLS + 1) as usize;
    let origin = Point::new(-(PAD_CELLS as f64 + 0.5) * res, -(PAD_CELLS as f64 + 0.5) * res);
    let mut grid = OccupancyGrid::new(w, h, res, origin, Cell::Unknown)?;
    // Layout coordinate k sits at grid index k + PAD_CELLS, whose center is
    // world coordinate k * res.
    let at = |k: i64| (k + PAD_CELLS) as usize;
    for y in -2..=layout.height + 2 {
        for x in -2..=layout.width + 2 {
            let exterior = x < 2 || y < 2 || x > layout.width - 2 || y > layout.height - 2;
            grid.set(at(x), at(y), if exterior { Cell::Occupied } else { Cell::Free });
        }
    }
    for s in &layout.splits {
        for along in s.from..=s.to {
            for across in s.at - INTERIOR_HALF_THICKNESS..=s.at + INTERIOR_HALF_THICKNESS {
                let (x, y) = if s.vertical { (across, along) } else { (along, across) };
                grid.set(at(x), at(y), Cell::Occupied);
            }
        }
    }
    let mut doors = Vec::new();
    for (id, &(k, start, count)) in layout.doors.iter().enumerate() {
        let s = layout.splits[k];
        for along in start..start + count {
            for across in s.at - INTERIOR_HALF_THICKNESS..=s.at + INTERIOR_HALF_THICKNESS {
                let (x, y) = if s.vertical { (across, along) } else { (along, across) };
                grid.set(at(x), at(y), Cell::Free);
            }
        }
        let mid_along = (start as f64 + (count - 1) as f64 / 2.0) * res;
        let line = s.at as f64 * res;
        let (center, axis) = if s.vertical {
            (Point::new(line, mid_along), Point::new(0.0, 1.0))
        } else {
            (Point::new(mid_along, line), Point::new(1.0, 0.0))
        };
        doors.push(Door::new(id as u32 + 1, center, axis, count as f64 * res)?);
    }

    if cfg.noise_level > 0.0 {
        for cell in grid.cells.iter_mut() {
            if *cell != Cell::Unknown && rng.random_bool(cfg.noise_level) {
                *cell = if *cell == Cell::Free {
                    Cell::Occupied
                } else {
                    Cell::Free
                };
            }
        }
    }
    Ok((grid, doors))
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectConfig {
    /// Accepted door widths, meters.
    pub width_band: (f64, f64),
    /// Occupied or free specks smaller than this (8-connected cells) are removed first.
    pub min_speck_cells: usize,
    /// Cosine bound for two obstacles to count as opposite.
    pub opposite_cos: f64,
    pub min_cluster_cells: usize,
    /// Side of the square window used for the connectivity test, meters.
    pub window: f64,
    /// Distance of the connectivity seeds from the candidate, meters.
    pub seed_offset: f64,
    pub min_score: f64,
    /// Detections closer than this keep only the best one, meters.
    pub suppression_radius: f64,
}

impl Default for DetectConfig {
    fn default() -> Self {
        DetectConfig {
            width_band: (0.5, 1.0),
            min_speck_cells: 4,
            opposite_cos: -0.7,
            min_cluster_cells: 3,
            window: 2.0,
            seed_offset: 0.3,
            min_score: 0.5,
            suppression_radius: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DoorDetection {
    pub door: Door,
    /// Fraction of the cluster whose local cut separates free space.
    pub score: f64,
}

const NEIGHBORS8: [(i64, i64); 8] = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];
const NEIGHBORS4: [(i64, i64); 4] = [(0, -1), (-1, 0), (1, 0), (0, 1)];

/// 8-connected components of cells satisfying `member`, in scan order.
fn components(w: usize, h: usize, member: impl Fn(usize) -> bool) -> Vec<Vec<usize>> {
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    for start in 0..w * h {
        if seen[start] || !member(start) {
            continue;
        }
        seen[start] = true;
        let mut comp = vec![start];
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            let (c, r) = ((i % w) as i64, (i / w) as i64);
            for (dc, dr) in NEIGHBORS8 {
                let (nc, nr) = (c + dc, r + dr);
                if nc < 0 || nr < 0 || nc >= w as i64 || nr >= h as i64 {
                    continue;
                }
                let j = nr as usize * w + nc as usize;
                if !seen[j] && member(j) {
                    seen[j] = true;
                    comp.push(j);
                    queue.push_back(j);
                }
            }
        }
        out.push(comp);
    }
    out
}

/// Removes occupied specks and fills free specks smaller than `min_cells`.
pub fn denoise(grid: &OccupancyGrid, min_cells: usize) -> OccupancyGrid {
    let mut out = grid.clone();
    for (kind, replacement) in [(Cell::Occupied, Cell::Free), (Cell::Free, Cell::Occupied)] {
        let cells = &grid.cells;
        for comp in components(grid.width, grid.height, |i| cells[i] == kind) {
            if comp.len() < min_cells {
                for i in comp {
                    out.cells[i] = replacement;
                }
            }
        }
    }
    out
}

/// Exact squared Euclidean distance transform of a sampled function along
/// one line (lower envelope of parabolas).
fn edt_1d(f: &[f64], out: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let sq = |q: usize| (q * q) as f64;
    for q in 1..n {
        loop {
            let p = v[k];
            let s = ((f[q] + sq(q)) - (f[p] + sq(p))) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] && k > 0 {
                k -= 1;
                continue;
            }
            if s <= z[k] {
                // k == 0 and the new parabola dominates from the start.
                v[0] = q;
                z[1] = f64::INFINITY;
                break;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let d = q as f64 - p as f64;
        *o = d * d + f[p];
    }
}

/// Squared distance, in cells, from every cell center to the nearest
/// obstacle cell center.
fn squared_distance_transform(w: usize, h: usize, obstacle: &[bool]) -> Vec<f64> {
    const FAR: f64 = 1e20;
    let mut d: Vec<f64> = obstacle.iter().map(|&o| if o { 0.0 } else { FAR }).collect();
    let mut col = vec![0.0; h];
    let mut tmp = vec![0.0; h];
    for c in 0..w {
        for r in 0..h {
            col[r] = d[r * w + c];
        }
        edt_1d(&col, &mut tmp);
        for r in 0..h {
            d[r * w + c] = tmp[r];
        }
    }
    let mut row_out = vec![0.0; w];
    for r in 0..h {
        edt_1d(&d[r * w..(r + 1) * w], &mut row_out);
        d[r * w..(r + 1) * w].copy_from_slice(&row_out);
    }
    d
}

struct Detector<'a> {
    grid: &'a OccupancyGrid,
    cfg: &'a DetectConfig,
    /// Occupied or unknown.
    obstacle: Vec<bool>,
}

impl Detector<'_> {
    fn w(&self) -> i64 {
        self.grid.width as i64
    }

    fn h(&self) -> i64 {
        self.grid.height as i64
    }

    fn is_obstacle(&self, c: i64, r: i64) -> bool {
        c < 0 || r < 0 || c >= self.w() || r >= self.h() || self.obstacle[r as usize * self.grid.width + c as usize]
    }

    fn to_world(&self, c: Point) -> Point {
        self.grid.origin + (c + Point::new(0.5, 0.5)) * self.grid.resolution
    }

    /// Nearest obstacle cell to `p` (cell units) and the nearest obstacle
    /// roughly opposite to it, searching within `radius` cells.
    fn opposite_obstacles(&self, p: Point, radius: f64) -> Option<(Point, Point)> {
        let span = radius.ceil() as i64 + 1;
        let (pc, pr) = (p.x.round() as i64, p.y.round() as i64);
        let mut near: Vec<(f64, Point)> = Vec::new();
        for r in pr - span..=pr + span {
            for c in pc - span..=pc + span {
                if !self.is_obstacle(c, r) {
                    continue;
                }
                let o = Point::new(c as f64, r as f64);
                let d = o.distance(p);
                if d <= radius {
                    near.push((d, o));
                }
            }
        }
        let (d1, o1) = near.iter().copied().min_by(|a, b| a.0.total_cmp(&b.0))?;
        if d1 == 0.0 {
            return None;
        }
        let u1 = (o1 - p) * (1.0 / d1);
        let (_, o2) = near
            .iter()
            .copied()
            .filter(|&(d, o)| d > 0.0 && d <= d1 + 1.5 && u1.dot((o - p) * (1.0 / d)) <= self.cfg.opposite_cos)
            .min_by(|a, b| a.0.total_cmp(&b.0))?;
        Some((o1, o2))
    }

    /// Whether blocking the segment `o1`-`o2` separates the two sides of it
    /// near `p` (all in cell units). Unknown cells are passable here.
    fn cuts_free_space(&self, p: Point, o1: Point, o2: Point) -> bool {
        let dir = o2 - o1;
        let len = dir.norm();
        if len == 0.0 {
            return false;
        }
        let normal = dir.perp() * (1.0 / len);
        let offset = self.cfg.seed_offset / self.grid.resolution;
        let half = (self.cfg.window / self.grid.resolution / 2.0).round() as i64;
        let (pc, pr) = (p.x.round() as i64, p.y.round() as i64);
        let (c0, r0) = ((pc - half).max(0), (pr - half).max(0));
        let (c1, r1) = ((pc + half).min(self.w() - 1), (pr + half).min(self.h() - 1));
        let ww = (c1 - c0 + 1) as usize;
        let wh = (r1 - r0 + 1) as usize;
        let local = |c: i64, r: i64| (r - r0) as usize * ww + (c - c0) as usize;
        let inside = |c: i64, r: i64| c >= c0 && c <= c1 && r >= r0 && r <= r1;

        let mut blocked = vec![false; ww * wh];
        for r in r0..=r1 {
            for c in c0..=c1 {
                blocked[local(c, r)] = self.grid.get(c as usize, r as usize) == Cell::Occupied;
            }
        }
        for (c, r) in bresenham(o1, o2) {
            if inside(c, r) {
                blocked[local(c, r)] = true;
            }
        }
        let seed = |s: Point| {
            let (c, r) = (s.x.round() as i64, s.y.round() as i64);
            (inside(c, r) && !blocked[local(c, r)]).then_some((c, r))
        };
        let (Some(a), Some(b)) = (seed(p + normal * offset), seed(p - normal * offset)) else {
            return false;
        };
        // Both sides must be separated and reach the window border; a cut
        // that only seals off a pocket (a corner, say) is not a doorway.
        let mut seen = vec![false; ww * wh];
        let mut flood = |from: (i64, i64), other: (i64, i64)| -> Option<bool> {
            let mut touches_border = false;
            seen[local(from.0, from.1)] = true;
            let mut queue = VecDeque::from([from]);
            while let Some((c, r)) = queue.pop_front() {
                if (c, r) == other {
                    return None;
                }
                touches_border |= c == c0 || c == c1 || r == r0 || r == r1;
                for (dc, dr) in NEIGHBORS4 {
                    let (nc, nr) = (c + dc, r + dr);
                    if inside(nc, nr) && !blocked[local(nc, nr)] && !seen[local(nc, nr)] {
                        seen[local(nc, nr)] = true;
                        queue.push_back((nc, nr));
                    }
                }
            }
            Some(touches_border)
        };
        flood(a, b) == Some(true) && flood(b, a) == Some(true)
    }

    /// Door through `p` (cell units) spanning the two opposite obstacles.
    fn reconstruct(&self, id: u32, p: Point, radius: f64) -> Option<Door> {
        let (o1, o2) = self.opposite_obstacles(p, radius)?;
        let (a, b) = (self.to_world(o1), self.to_world(o2));
        let width = a.distance(b) - self.grid.resolution;
        let (lo, hi) = self.cfg.width_band;
        if !(width >= lo - 1e-9 && width <= hi + 1e-9) {
            return None;
        }
        let mut axis = b - a;
        if axis.x < 0.0 || (axis.x == 0.0 && axis.y < 0.0) {
            axis = -axis;
        }
        Door::new(id, a.lerp(b, 0.5), axis, width).ok()
    }
}

/// Cells on the 8-connected digital line between two cell positions.
fn bresenham(a: Point, b: Point) -> Vec<(i64, i64)> {
    let (mut x0, mut y0) = (a.x.round() as i64, a.y.round() as i64);
    let (x1, y1) = (b.x.round() as i64, b.y.round() as i64);
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    let mut out = Vec::new();
    loop {
        out.push((x0, y0));
        if x0 == x1 && y0 == y1 {
            return out;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

/// Finds doorway-like narrow passages. Detections are sorted by descending
/// score and numbered from 1 in that order.
pub fn detect_doors(grid: &OccupancyGrid, cfg: &DetectConfig) -> Vec<DoorDetection> {
    let clean = denoise(grid, cfg.min_speck_cells);
    let (w, h) = (clean.width, clean.height);
    let res = clean.resolution;
    let obstacle: Vec<bool> = clean.cells.iter().map(|&c| c != Cell::Free).collect();
    let sq = squared_distance_transform(w, h, &obstacle);
    let det = Detector {
        grid: &clean,
        cfg,
        obstacle,
    };
    // Clearance to the nearest obstacle's edge, in meters.
    let band = (cfg.width_band.0 / 2.0, cfg.width_band.1 / 2.0);
    let search = (band.1 + res / 2.0) / res + 1.5;

    let mut candidate = vec![false; w * h];
    let mut openings: Vec<Option<(Point, Point)>> = vec![None; w * h];
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            if det.obstacle[i] {
                continue;
            }
            let clearance = sq[i].sqrt() * res - res / 2.0;
            if clearance < band.0 - 1e-9 || clearance > band.1 + 1e-9 {
                continue;
            }
            let p = Point::new(c as f64, r as f64);
            if let Some(pair) = det.opposite_obstacles(p, search) {
                candidate[i] = true;
                openings[i] = Some(pair);
            }
        }
    }

    let mut found = Vec::new();
    for cluster in components(w, h, |i| candidate[i]) {
        if cluster.len() < cfg.min_cluster_cells {
            continue;
        }
        let passing = cluster
            .iter()
            .filter(|&&i| {
                let p = Point::new((i % w) as f64, (i / w) as f64);
                let (o1, o2) = openings[i].expect("candidates carry an opening");
                det.cuts_free_space(p, o1, o2)
            })
            .count();
        let score = passing as f64 / cluster.len() as f64;
        if score < cfg.min_score {
            continue;
        }
        let n = cluster.len() as f64;
        let centroid = cluster.iter().fold(Point::new(0.0, 0.0), |acc, &i| {
            acc + Point::new((i % w) as f64, (i / w) as f64)
        }) * (1.0 / n);
        if let Some(door) = det.reconstruct(0, centroid, search) {
            found.push(DoorDetection { door, score });
        }
    }

    found.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.door.center.y.total_cmp(&b.door.center.y))
            .then(a.door.center.x.total_cmp(&b.door.center.x))
    });
    let mut kept: Vec<DoorDetection> = Vec::new();
    for d in found {
        if kept
            .iter()
            .all(|k| k.door.center.distance(d.door.center) >= cfg.suppression_radius)
        {
            kept.push(d);
        }
    }
    for (k, d) in kept.iter_mut().enumerate() {
        d.door.id = k as u32 + 1;
    }
    kept
}

/// Cells whose centers lie on the open part of `door`, between the jambs.
pub fn opening_cells(grid: &OccupancyGrid, door: &Door) -> Vec<(usize, usize)> {
    let res = grid.resolution;
    let half = (door.width - res) / 2.0;
    let steps = (2.0 * half / (res / 4.0)).ceil().max(1.0) as usize;
    let mut out = Vec::new();
    for k in 0..=steps {
        let t = -half + 2.0 * half * k as f64 / steps as f64;
        if let Some(cell) = grid.cell_of(door.center + door.axis * t) {
            if out.last() != Some(&cell) {
                out.push(cell);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchReport {
    pub precision: f64,
    pub recall: f64,
    /// Center error of every matched ground-truth door, ordered by distance.
    pub center_errors: Vec<f64>,
    /// There were no detections; precision is reported as 1 by convention.
    pub precision_undefined: bool,
}

/// Greedy one-to-one matching by center distance under `tolerance`.
pub fn match_detections(detections: &[DoorDetection], truth: &[Door], tolerance: f64) -> Result<MatchReport> {
    if tolerance.is_nan() || tolerance <= 0.0 {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, d) in detections.iter().enumerate() {
        for (j, t) in truth.iter().enumerate() {
            let dist = d.door.center.distance(t.center);
            if dist < tolerance {
                pairs.push((dist, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_d = vec![false; detections.len()];
    let mut used_t = vec![false; truth.len()];
    let mut center_errors = Vec::new();
    for (dist, i, j) in pairs {
        if !used_d[i] && !used_t[j] {
            used_d[i] = true;
            used_t[j] = true;
            center_errors.push(dist);
        }
    }
    let matched = center_errors.len() as f64;
    let precision_undefined = detections.is_empty();
    Ok(MatchReport {
        precision: if precision_undefined {
            1.0
        } else {
            matched / detections.len() as f64
        },
        recall: if truth.is_empty() {
            1.0
        } else {
            matched / truth.len() as f64
        },
        center_errors,
        precision_undefined,
    })
}
