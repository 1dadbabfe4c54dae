//! Door-transition calibration of anchor-pair sets.
//!
//! A doorway confines where the user can be while walking through it. The
//! calibration replays historical TOA data around every detected door
//! crossing with each candidate pair set and scores the resulting fixes by
//! their distance from points spread along the door opening:
//!
//! ```text
//! cost(set) = sum over fixes near the door of (h_i + v_i)
//! ```
//!
//! where `h_i` and `v_i` are the components, along the door axis and the
//! door normal, of the offset between fix `i` and its nearest reference
//! point. Crossings are grouped by the zone being entered and the travel
//! heading, so opposite directions through the same door (where the user's
//! body shadows different anchors) get separate sets.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::simkit::ToaFrame;
use crate::tdoa_ekf::{all_pairs, format_pairs, run_filter, AnchorPair, EkfConfig};
use crate::world::geometry::segment_intersection_param;
use crate::world::{decompose_against_door, door_reference_points, zone_of, Door, Point, Scenario};

/// Minimum pairs per set for 2-D TDOA observability.
pub const MIN_PAIRS_PER_SET: usize = 3;

/// Cardinal travel direction in the world frame (x east, y north).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum HeadingClass {
    North,
    South,
    East,
    West,
}

impl HeadingClass {
    pub const ALL: [HeadingClass; 4] = [
        HeadingClass::North,
        HeadingClass::South,
        HeadingClass::East,
        HeadingClass::West,
    ];

    /// Nearest cardinal direction of `v`. Sectors are 90 degrees wide and
    /// centered on the axes; a vector exactly on a sector boundary belongs to
    /// the counterclockwise sector. `None` for the zero vector.
    pub fn of_direction(v: Point) -> Option<HeadingClass> {
        let (x, y) = (v.x, v.y);
        if x > 0.0 && -x <= y && y < x {
            Some(HeadingClass::East)
        } else if y > 0.0 && -y < x && x <= y {
            Some(HeadingClass::North)
        } else if x < 0.0 && x < y && y <= -x {
            Some(HeadingClass::West)
        } else if y < 0.0 && y <= x && x < -y {
            Some(HeadingClass::South)
        } else {
            None
        }
    }

    /// Pair-table label.
    pub fn label(self) -> &'static str {
        match self {
            HeadingClass::North => "up",
            HeadingClass::South => "down",
            HeadingClass::East => "right",
            HeadingClass::West => "left",
        }
    }

    pub fn from_label(s: &str) -> Option<HeadingClass> {
        HeadingClass::ALL.into_iter().find(|h| h.label() == s)
    }
}

impl fmt::Display for HeadingClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DirectionKey {
    pub zone: u32,
    pub heading: HeadingClass,
}

impl fmt::Display for DirectionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.zone, self.heading)
    }
}

/// Data around one doorway crossing.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionWindow {
    pub door: u32,
    /// +1 when travelling along the door normal, -1 against it.
    pub direction: i8,
    pub frames: Vec<ToaFrame>,
    pub t_cross: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMode {
    /// Every subset of every candidate size.
    Exhaustive,
    /// Best triple, then forward selection one pair at a time.
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    /// Seconds of data kept on each side of a crossing.
    pub window_half_width: f64,
    /// Widening of the door opening along its axis when detecting crossings.
    pub door_margin: f64,
    /// Fixes farther than this from the door line (along the normal) are not scored.
    pub evaluation_band: f64,
    pub ref_point_count: usize,
    /// Leading fixes of each window left out of the score while the filter settles.
    pub warmup_frames: usize,
    /// Distance past the door line used to decide which zone a crossing enters.
    pub entry_offset: f64,
    pub candidate_sizes: Vec<usize>,
    pub search: SearchMode,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            window_half_width: 1.5,
            door_margin: 0.3,
            evaluation_band: 1.0,
            ref_point_count: 5,
            warmup_frames: 5,
            entry_offset: 0.5,
            candidate_sizes: vec![4, 5, 6],
            search: SearchMode::Exhaustive,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.window_half_width > 0.0
            && self.door_margin >= 0.0
            && self.evaluation_band > 0.0
            && self.entry_offset > 0.0)
        {
            return Err(Error::invalid("window, band and offsets must be positive"));
        }
        if self.ref_point_count == 0 {
            return Err(Error::invalid("ref_point_count must be positive"));
        }
        if self.candidate_sizes.is_empty() || self.candidate_sizes.iter().any(|&k| k < MIN_PAIRS_PER_SET) {
            return Err(Error::invalid(format!(
                "candidate sizes must be non-empty and at least {MIN_PAIRS_PER_SET}"
            )));
        }
        Ok(())
    }
}

/// Crossing instants found on one door, before windowing.
fn door_crossings(fixes: &[(f64, Point)], door: &Door, margin: f64) -> Vec<(f64, i8)> {
    let (q1, q2) = door.opening(margin);
    let mut out = Vec::new();
    for w in fixes.windows(2) {
        let ((ta, a), (tb, b)) = (w[0], w[1]);
        if a == b {
            continue;
        }
        let Some(s) = segment_intersection_param(a, b, q1, q2) else {
            continue;
        };
        let along = (b - a).dot(door.normal);
        if along == 0.0 {
            continue;
        }
        out.push((ta + s * (tb - ta), if along > 0.0 { 1 } else { -1 }));
    }
    out
}

/// Keeps the later of any two crossings closer than `min_gap` seconds.
fn merge_crossings(crossings: Vec<(f64, i8)>, min_gap: f64) -> Vec<(f64, i8)> {
    let mut kept: Vec<(f64, i8)> = Vec::new();
    for c in crossings {
        match kept.last_mut() {
            Some(last) if c.0 - last.0 < min_gap => *last = c,
            _ => kept.push(c),
        }
    }
    kept
}

fn frames_between(session: &[ToaFrame], from: f64, to: f64) -> Vec<ToaFrame> {
    let start = session.partition_point(|f| f.t < from);
    let end = session.partition_point(|f| f.t <= to);
    session[start..end.max(start)].to_vec()
}

/// Finds doorway crossings by tracking the whole session with the baseline
/// pairs and intersecting consecutive fixes with each door opening.
pub fn extract_transitions(
    scenario: &Scenario,
    session: &[ToaFrame],
    baseline_pairs: &[AnchorPair],
    config: &CalibrationConfig,
    ekf: &EkfConfig,
) -> Result<Vec<TransitionWindow>> {
    if baseline_pairs.len() < MIN_PAIRS_PER_SET {
        return Err(Error::invalid(format!(
            "baseline needs at least {MIN_PAIRS_PER_SET} pairs"
        )));
    }
    if session.windows(2).any(|w| w[1].t < w[0].t) {
        return Err(Error::invalid("session frames must be time-ordered"));
    }
    if session.is_empty() {
        return Ok(Vec::new());
    }
    let fixes: Vec<(f64, Point)> = run_filter(session, baseline_pairs, scenario, ekf)?
        .iter()
        .map(|s| (s.t, s.position()))
        .collect();

    let half = config.window_half_width;
    let mut windows = Vec::new();
    for door in scenario.doors() {
        let crossings = merge_crossings(door_crossings(&fixes, door, config.door_margin), 2.0 * half);
        for (t_cross, direction) in crossings {
            let frames = frames_between(session, t_cross - half, t_cross + half);
            if !frames.is_empty() {
                windows.push(TransitionWindow {
                    door: door.id,
                    direction,
                    frames,
                    t_cross,
                });
            }
        }
    }
    windows.sort_by(|a, b| a.t_cross.total_cmp(&b.t_cross).then(a.door.cmp(&b.door)));
    Ok(windows)
}

/// The (zone entered, heading) a crossing belongs to, if the far side of
/// the door lies in a zone.
pub fn window_key(scenario: &Scenario, window: &TransitionWindow, config: &CalibrationConfig) -> Option<DirectionKey> {
    let door = scenario.door(window.door)?;
    let travel = door.normal * f64::from(window.direction);
    let zone = zone_of(scenario, door.center + travel * config.entry_offset)?;
    Some(DirectionKey {
        zone,
        heading: HeadingClass::of_direction(travel)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowCost {
    /// Sum of `h_i + v_i`, meters.
    pub cost: f64,
    pub n_points: usize,
}

/// Scores one pair set on one crossing.
///
/// The filter is started afresh from the window's first frame. Fixes past
/// the warm-up that lie within the evaluation band of the door line are
/// matched to their nearest reference point on the opening and contribute
/// `h + v`.
pub fn transition_cost(
    scenario: &Scenario,
    window: &TransitionWindow,
    pairs: &[AnchorPair],
    config: &CalibrationConfig,
    ekf: &EkfConfig,
) -> Result<WindowCost> {
    let door = scenario
        .door(window.door)
        .ok_or_else(|| Error::invalid(format!("window references unknown door {}", window.door)))?;
    let references = door_reference_points(door, config.ref_point_count)?;
    let states = run_filter(&window.frames, pairs, scenario, ekf)?;
    let fixes = states.iter().skip(config.warmup_frames).map(|s| s.position());
    score_fixes(door, &references, fixes, config.evaluation_band)
}

fn score_fixes(door: &Door, references: &[Point], fixes: impl Iterator<Item = Point>, band: f64) -> Result<WindowCost> {
    let mut cost = 0.0;
    let mut n_points = 0;
    for p in fixes {
        if door.normal_offset(p).abs() > band {
            continue;
        }
        let nearest = references
            .iter()
            .copied()
            .min_by(|a, b| a.distance(p).total_cmp(&b.distance(p)))
            .expect("at least one reference point");
        let (h, v) = decompose_against_door(door, p, nearest);
        cost += h + v;
        n_points += 1;
    }
    if n_points == 0 {
        return Err(Error::ZeroEvidence { door: door.id });
    }
    Ok(WindowCost { cost, n_points })
}

/// One evaluated pair set for one key.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateCost {
    pub pairs: Vec<AnchorPair>,
    /// `None` when some window produced no evidence or the filter failed.
    pub total: Option<WindowCost>,
    /// Per window of the key, in window order.
    pub per_window: Vec<Option<WindowCost>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeyReport {
    pub key: DirectionKey,
    pub window_count: usize,
    /// In evaluation order.
    pub candidates: Vec<CandidateCost>,
    /// Index into `candidates`; `None` when every candidate was disqualified.
    pub selected: Option<usize>,
    /// The key fell back to the full pair set.
    pub flagged: bool,
}

impl KeyReport {
    /// Qualified candidates sorted best first by (cost, set size, pair order).
    pub fn ranked(&self) -> Vec<&CandidateCost> {
        let mut ranked: Vec<&CandidateCost> = self.candidates.iter().filter(|c| c.total.is_some()).collect();
        ranked.sort_by(|a, b| candidate_order(a, b));
        ranked
    }
}

fn candidate_order(a: &CandidateCost, b: &CandidateCost) -> std::cmp::Ordering {
    let ca = a.total.map_or(f64::INFINITY, |t| t.cost);
    let cb = b.total.map_or(f64::INFINITY, |t| t.cost);
    ca.total_cmp(&cb)
        .then(a.pairs.len().cmp(&b.pairs.len()))
        .then_with(|| a.pairs.cmp(&b.pairs))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CostReport {
    pub keys: Vec<KeyReport>,
}

impl CostReport {
    /// Checks that every selected set costs no more than any other evaluated
    /// candidate of its key. Exact comparison.
    pub fn verify_argmin(&self) -> Result<()> {
        for k in &self.keys {
            let Some(sel) = k.selected else { continue };
            let best = k.candidates[sel]
                .total
                .ok_or_else(|| Error::Calibration(format!("key {} selected a disqualified set", k.key)))?
                .cost;
            if let Some(c) = k.candidates.iter().filter_map(|c| c.total).find(|t| t.cost < best) {
                return Err(Error::Calibration(format!(
                    "key {}: selected cost {best} exceeds candidate cost {}",
                    k.key, c.cost
                )));
            }
        }
        Ok(())
    }

    /// CSV `zone,heading,set_rank,pairs,cost_m,n_points`, qualified
    /// candidates only, ranked within each key.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["zone", "heading", "set_rank", "pairs", "cost_m", "n_points"])?;
        for k in &self.keys {
            for (rank, c) in k.ranked().into_iter().enumerate() {
                let total = c.total.expect("ranked candidates are qualified");
                w.write_record([
                    k.key.zone.to_string(),
                    k.key.heading.label().to_string(),
                    (rank + 1).to_string(),
                    format_pairs(&c.pairs),
                    total.cost.to_string(),
                    total.n_points.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("<cost report>", e))?;
        Ok(())
    }
}

/// Lexicographic k-subsets of `0..n`.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k == 0 || k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return out;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Number of k-subsets of n items.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k.min(n - k)).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

fn evaluate(
    scenario: &Scenario,
    windows: &[&TransitionWindow],
    pairs: Vec<AnchorPair>,
    config: &CalibrationConfig,
    ekf: &EkfConfig,
) -> CandidateCost {
    let per_window: Vec<Option<WindowCost>> = windows
        .iter()
        .map(|w| transition_cost(scenario, w, &pairs, config, ekf).ok())
        .collect();
    let total = per_window
        .iter()
        .try_fold(WindowCost { cost: 0.0, n_points: 0 }, |acc, w| {
            w.map(|w| WindowCost {
                cost: acc.cost + w.cost,
                n_points: acc.n_points + w.n_points,
            })
        });
    CandidateCost {
        pairs,
        total,
        per_window,
    }
}

/// Candidate sets are scored in parallel; results keep candidate order.
fn evaluate_all(
    scenario: &Scenario,
    windows: &[&TransitionWindow],
    sets: Vec<Vec<AnchorPair>>,
    config: &CalibrationConfig,
    ekf: &EkfConfig,
) -> Vec<CandidateCost> {
    sets.into_par_iter()
        .map(|pairs| evaluate(scenario, windows, pairs, config, ekf))
        .collect()
}

fn exhaustive(
    scenario: &Scenario,
    windows: &[&TransitionWindow],
    universe: &[AnchorPair],
    config: &CalibrationConfig,
    ekf: &EkfConfig,
) -> Vec<CandidateCost> {
    let sets: Vec<Vec<AnchorPair>> = config
        .candidate_sizes
        .iter()
        .flat_map(|&k| combinations(universe.len(), k))
        .map(|idx| idx.iter().map(|&i| universe[i]).collect())
        .collect();
    evaluate_all(scenario, windows, sets, config, ekf)
}

fn greedy(
    scenario: &Scenario,
    windows: &[&TransitionWindow],
    universe: &[AnchorPair],
    config: &CalibrationConfig,
    ekf: &EkfConfig,
) -> Vec<CandidateCost> {
    let sizes: BTreeSet<usize> = config.candidate_sizes.iter().copied().collect();
    let max_size = *sizes.last().expect("validated non-empty").min(&universe.len());
    let mut candidates = Vec::new();

    let seeds: Vec<Vec<AnchorPair>> = combinations(universe.len(), MIN_PAIRS_PER_SET)
        .into_iter()
        .map(|idx| idx.iter().map(|&i| universe[i]).collect())
        .collect();
    let mut level = evaluate_all(scenario, windows, seeds, config, ekf);
    loop {
        let size = level.first().map_or(0, |c| c.pairs.len());
        let best = level
            .iter()
            .filter(|c| c.total.is_some())
            .min_by(|a, b| candidate_order(a, b))
            .map(|c| c.pairs.clone());
        if sizes.contains(&size) {
            candidates.append(&mut level);
        }
        let Some(best) = best else { break };
        if size >= max_size {
            break;
        }
        let grown: Vec<Vec<AnchorPair>> = universe
            .iter()
            .filter(|p| !best.contains(p))
            .map(|&p| {
                let mut set = best.clone();
                set.push(p);
                set.sort();
                set
            })
            .collect();
        level = evaluate_all(scenario, windows, grown, config, ekf);
    }
    candidates
}

/// Picks the cheapest candidate set for every (zone, heading) that has
/// crossings. Windows without a key are ignored. A candidate that yields no
/// evidence on any of a key's windows is disqualified for that key; a key
/// with no qualified candidate falls back to all pairs and is flagged.
pub fn select_pairs(
    scenario: &Scenario,
    windows: &[TransitionWindow],
    config: &CalibrationConfig,
    ekf: &EkfConfig,
) -> Result<(PairTable, CostReport)> {
    config.validate()?;
    ekf.validate()?;
    let universe = all_pairs(&scenario.anchor_ids())?;

    let mut groups: BTreeMap<DirectionKey, Vec<&TransitionWindow>> = BTreeMap::new();
    for w in windows {
        if let Some(key) = window_key(scenario, w, config) {
            groups.entry(key).or_default().push(w);
        }
    }
    if groups.is_empty() {
        return Err(Error::Calibration("no usable transition windows".into()));
    }

    let mut report = CostReport::default();
    let mut entries = BTreeMap::new();
    for (key, group) in groups {
        let candidates = match config.search {
            SearchMode::Exhaustive => exhaustive(scenario, &group, &universe, config, ekf),
            SearchMode::Greedy => greedy(scenario, &group, &universe, config, ekf),
        };
        let selected = candidates
            .iter()
            .enumerate()
            .filter(|(_, c)| c.total.is_some())
            .min_by(|(_, a), (_, b)| candidate_order(a, b))
            .map(|(i, _)| i);
        let pairs = match selected {
            Some(i) => candidates[i].pairs.clone(),
            None => universe.clone(),
        };
        entries.insert(key, pairs);
        report.keys.push(KeyReport {
            key,
            window_count: group.len(),
            candidates,
            selected,
            flagged: selected.is_none(),
        });
    }
    if report.keys.iter().all(|k| k.flagged) {
        return Err(Error::Calibration(
            "every candidate set was disqualified for every key".into(),
        ));
    }
    report.verify_argmin()?;
    Ok((PairTable::new(entries, universe)?, report))
}

/// Calibrated anchor pairs per (zone, heading), plus a fallback list for
/// keys without an entry.
///
/// Text form, one key per line, `#` starts a comment:
///
/// ```text
/// 1 up : (1 2) (1 6) (3 5) (5 6)
/// 2 left : (1 3) (1 5) (2 4) (3 6)
/// fallback : (1 2) (1 3) ...
/// ```
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PairTable {
    entries: BTreeMap<DirectionKey, Vec<AnchorPair>>,
    fallback: Vec<AnchorPair>,
}

fn check_list(what: &str, pairs: &[AnchorPair]) -> std::result::Result<(), String> {
    if pairs.len() < MIN_PAIRS_PER_SET {
        return Err(format!(
            "{what} has {} pairs, need at least {MIN_PAIRS_PER_SET}",
            pairs.len()
        ));
    }
    let unique: BTreeSet<_> = pairs.iter().collect();
    if unique.len() != pairs.len() {
        return Err(format!("{what} lists a pair twice"));
    }
    Ok(())
}

impl PairTable {
    /// An empty `fallback` means "no fallback"; callers then use all pairs.
    pub fn new(entries: BTreeMap<DirectionKey, Vec<AnchorPair>>, fallback: Vec<AnchorPair>) -> Result<Self> {
        for (key, pairs) in &entries {
            check_list(&format!("key {key}"), pairs).map_err(Error::InvalidInput)?;
        }
        if !fallback.is_empty() {
            check_list("fallback", &fallback).map_err(Error::InvalidInput)?;
        }
        Ok(PairTable { entries, fallback })
    }

    /// Every key mapped to the same list, which is also the fallback.
    pub fn uniform(keys: impl IntoIterator<Item = DirectionKey>, pairs: Vec<AnchorPair>) -> Result<Self> {
        let entries = keys.into_iter().map(|k| (k, pairs.clone())).collect();
        PairTable::new(entries, pairs)
    }

    pub fn get(&self, key: &DirectionKey) -> Option<&[AnchorPair]> {
        self.entries.get(key).map(Vec::as_slice)
    }

    pub fn fallback(&self) -> &[AnchorPair] {
        &self.fallback
    }

    pub fn entries(&self) -> &BTreeMap<DirectionKey, Vec<AnchorPair>> {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Every referenced anchor exists in `scenario`.
    pub fn validate_against(&self, scenario: &Scenario) -> Result<()> {
        let lists = self.entries.values().chain(std::iter::once(&self.fallback));
        for pair in lists.flatten() {
            for id in [pair.i(), pair.j()] {
                if scenario.anchor(id).is_none() {
                    return Err(Error::invalid(format!("pair {pair} references unknown anchor {id}")));
                }
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# zone heading : anchor pairs\n");
        for (key, pairs) in &self.entries {
            s.push_str(&format!("{} {} : {}\n", key.zone, key.heading, format_pairs(pairs)));
        }
        if !self.fallback.is_empty() {
            s.push_str(&format!("fallback : {}\n", format_pairs(&self.fallback)));
        }
        s
    }

    /// Parses the text form; `path` is only used in error messages.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut entries = BTreeMap::new();
        let mut fallback: Option<Vec<AnchorPair>> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (head, tail) = content.split_once(':').ok_or_else(|| err(line, "missing ':'".into()))?;
            let pairs = parse_pair_list(tail).map_err(|m| err(line, m))?;
            let head: Vec<&str> = head.split_whitespace().collect();
            match head.as_slice() {
                ["fallback"] => {
                    if fallback.replace(pairs).is_some() {
                        return Err(err(line, "duplicate fallback line".into()));
                    }
                }
                [zone, heading] => {
                    let zone: u32 = zone.parse().map_err(|_| err(line, format!("bad zone id {zone:?}")))?;
                    let heading = HeadingClass::from_label(heading)
                        .ok_or_else(|| err(line, format!("heading must be up|down|left|right, got {heading:?}")))?;
                    let key = DirectionKey { zone, heading };
                    check_list(&format!("key {key}"), &pairs).map_err(|m| err(line, m))?;
                    if entries.insert(key, pairs).is_some() {
                        return Err(err(line, format!("duplicate key {key}")));
                    }
                }
                _ => return Err(err(line, "expected '<zone> <heading> :' or 'fallback :'".into())),
            }
        }
        let fallback = fallback.unwrap_or_default();
        if !fallback.is_empty() {
            check_list("fallback", &fallback).map_err(|m| err(0, m))?;
        }
        Ok(PairTable { entries, fallback })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

fn parse_pair_list(s: &str) -> std::result::Result<Vec<AnchorPair>, String> {
    let mut pairs = Vec::new();
    let mut rest = s.trim();
    while !rest.is_empty() {
        let inner_start = rest
            .strip_prefix('(')
            .ok_or_else(|| format!("expected '(' at {rest:?}"))?;
        let (inner, after) = inner_start.split_once(')').ok_or_else(|| "unclosed '('".to_string())?;
        let ids: Vec<&str> = inner.split_whitespace().collect();
        let [a, b] = ids.as_slice() else {
            return Err(format!("pair ({inner}) must hold two anchor ids"));
        };
        let a: u32 = a.parse().map_err(|_| format!("bad anchor id {a:?}"))?;
        let b: u32 = b.parse().map_err(|_| format!("bad anchor id {b:?}"))?;
        pairs.push(AnchorPair::new(a, b).map_err(|e| e.to_string())?);
        rest = after.trim_start();
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(a: u32, b: u32) -> AnchorPair {
        AnchorPair::new(a, b).unwrap()
    }

    fn p(x: f64, y: f64) -> Point {
        Point::new(x, y)
    }

    #[test]
    fn heading_sectors() {
        assert_eq!(HeadingClass::of_direction(p(1., 0.)), Some(HeadingClass::East));
        assert_eq!(HeadingClass::of_direction(p(0., 1.)), Some(HeadingClass::North));
        assert_eq!(HeadingClass::of_direction(p(-1., 0.)), Some(HeadingClass::West));
        assert_eq!(HeadingClass::of_direction(p(0., -1.)), Some(HeadingClass::South));
        // Boundaries go counterclockwise.
        assert_eq!(HeadingClass::of_direction(p(1., 1.)), Some(HeadingClass::North));
        assert_eq!(HeadingClass::of_direction(p(-1., 1.)), Some(HeadingClass::West));
        assert_eq!(HeadingClass::of_direction(p(-1., -1.)), Some(HeadingClass::South));
        assert_eq!(HeadingClass::of_direction(p(1., -1.)), Some(HeadingClass::East));
        assert_eq!(HeadingClass::of_direction(p(0., 0.)), None);
    }

    #[test]
    fn binomials_and_combinations() {
        assert_eq!(binomial(15, 4) + binomial(15, 5) + binomial(15, 6), 9373);
        assert_eq!(combinations(15, 4).len(), 1365);
        assert_eq!(
            combinations(4, 2),
            vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]
        );
        assert!(combinations(3, 4).is_empty());
    }

    #[test]
    fn crossing_detection_and_interpolation() {
        let door = Door::new(1, p(0., 0.), p(0., 1.), 0.8).unwrap();
        // normal = (-1, 0): travelling west is the positive direction.
        let fixes = [(10.0, p(0.3, 0.1)), (10.5, p(-0.1, 0.1))];
        let c = door_crossings(&fixes, &door, 0.3);
        assert_eq!(c.len(), 1);
        assert!((c[0].0 - 10.375).abs() < 1e-12);
        assert_eq!(c[0].1, 1);
        // Outside the widened opening.
        let miss = [(0.0, p(0.3, 0.8)), (1.0, p(-0.3, 0.8))];
        assert!(door_crossings(&miss, &door, 0.3).is_empty());
        let hit = [(0.0, p(0.3, 0.65)), (1.0, p(-0.3, 0.65))];
        assert_eq!(door_crossings(&hit, &door, 0.3).len(), 1);
    }

    #[test]
    fn close_crossings_merge_to_later() {
        let merged = merge_crossings(vec![(1.0, 1), (2.0, -1), (10.0, 1)], 3.0);
        assert_eq!(merged, vec![(2.0, -1), (10.0, 1)]);
    }

    #[test]
    fn scoring_geometry() {
        let door = Door::new(1, p(0., 0.), p(1., 0.), 0.8).unwrap();
        let refs = door_reference_points(&door, 1).unwrap();
        let on = score_fixes(&door, &refs, [door.center].into_iter(), 1.0).unwrap();
        assert_eq!(on.cost, 0.0);
        let off = score_fixes(&door, &refs, [door.center + door.normal * 0.2].into_iter(), 1.0).unwrap();
        assert!((off.cost - 0.2).abs() < 1e-15);
        assert_eq!(off.n_points, 1);
        let far = score_fixes(&door, &refs, [door.center + door.normal * 1.5].into_iter(), 1.0);
        assert!(matches!(far, Err(Error::ZeroEvidence { door: 1 })));
    }

    #[test]
    fn dense_references_approach_perpendicular_distance() {
        let door = Door::new(1, p(0., 0.), p(1., 0.), 0.8).unwrap();
        for n in [1usize, 2, 5, 10, 100] {
            let refs = door_reference_points(&door, n).unwrap();
            for i in 0..=40 {
                let fix = p(-0.4 + i as f64 * 0.02, 0.3);
                let c = score_fixes(&door, &refs, [fix].into_iter(), 1.0).unwrap().cost;
                assert!(c >= 0.3 - 1e-12);
                assert!(c <= 0.3 + 0.8 / (2.0 * n as f64) + 1e-12, "n={n} fix={fix:?} c={c}");
            }
        }
    }

    #[test]
    fn tripling_references_never_hurts_a_fix() {
        // Cell midpoints nest when each cell is split in three; doubling does
        // not nest (count 1 -> center, count 2 -> +-w/4).
        let door = Door::new(1, p(0., 0.), p(1., 0.), 0.8).unwrap();
        let h = |refs: &[Point], fix: Point| {
            let r = refs
                .iter()
                .copied()
                .min_by(|a, b| a.distance(fix).total_cmp(&b.distance(fix)))
                .unwrap();
            decompose_against_door(&door, fix, r).0
        };
        for k in [1usize, 2, 3, 5] {
            let coarse = door_reference_points(&door, k).unwrap();
            let fine = door_reference_points(&door, 3 * k).unwrap();
            for i in 0..=60 {
                let fix = p(-0.6 + i as f64 * 0.02, 0.3);
                assert!(h(&fine, fix) <= h(&coarse, fix) + 1e-12);
            }
        }
        let one = door_reference_points(&door, 1).unwrap();
        let two = door_reference_points(&door, 2).unwrap();
        assert!(h(&two, door.center) > h(&one, door.center));
    }

    #[test]
    fn pair_table_text() {
        let text = "# calibrated\n1 up : (1 2) (1 6) (3 5) (5 6)\n2 left : (2 1) (3 1) (4 2)  # trailing\n";
        let t = PairTable::parse(text, Path::new("t.txt")).unwrap();
        let key = DirectionKey {
            zone: 1,
            heading: HeadingClass::North,
        };
        assert_eq!(t.get(&key).unwrap(), &[pair(1, 2), pair(1, 6), pair(3, 5), pair(5, 6)]);
        let left = DirectionKey {
            zone: 2,
            heading: HeadingClass::West,
        };
        assert_eq!(t.get(&left).unwrap()[0], pair(1, 2));
        assert!(t.fallback().is_empty());
        let again = PairTable::parse(&t.to_text(), Path::new("t.txt")).unwrap();
        assert_eq!(again, t);
    }

    #[test]
    fn pair_table_errors_carry_lines() {
        for (text, want) in [
            ("1 up : (1 2) (1 3) (2 3)\n\n1 sideways : (1 2) (1 3) (2 3)\n", 3),
            ("1 up : (1 2) (1 3)\n", 1),
            ("1 up : (1 2) (1 3) (2 3)\n1 up : (1 2) (1 3) (2 3)\n", 2),
            ("x up : (1 2) (1 3) (2 3)\n", 1),
            ("1 up (1 2) (1 3) (2 3)\n", 1),
            ("1 up : (1 2) (1 1) (2 3)\n", 1),
            ("# c\n1 up : (1 2) (1 3 4) (2 3)\n", 2),
            ("1 up : (1 2) (2 1) (2 3)\n", 1),
        ] {
            match PairTable::parse(text, Path::new("bad.txt")) {
                Err(Error::Parse { line, .. }) => assert_eq!(line, want, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }
}
