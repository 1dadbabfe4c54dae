//! Online tracking with direction-dependent pair sets.
//!
//! Each epoch the filter is predicted to the frame time, the zone and travel
//! heading are read off the predicted state, and the calibrated pair list
//! for that (zone, heading) drives the update. Key changes are debounced so
//! jitter at zone boundaries does not swap pair sets every epoch.

use std::io::Write;

use serde::Deserialize;

use crate::calibration::{DirectionKey, HeadingClass, PairTable};
use crate::error::{Error, Result};
use crate::simkit::ToaFrame;
use crate::tdoa_ekf::{
    all_pairs, fix_fields, form_tdoas, format_pairs, initialize, predict, update, AnchorPair, EkfConfig, TrackerState,
    FIX_CSV_HEADER,
};
use crate::world::{zone_of, Point, Scenario};

/// Cardinal class of `velocity`, or `None` below `speed_floor`.
pub fn classify_heading(velocity: Point, speed_floor: f64) -> Option<HeadingClass> {
    let speed = velocity.norm();
    if speed.is_nan() || speed_floor.is_nan() || speed < speed_floor {
        return None;
    }
    HeadingClass::of_direction(velocity)
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuntimeConfig {
    /// m/s; slower motion keeps the previous heading.
    pub speed_floor: f64,
    /// Consecutive agreeing epochs needed to commit a key change.
    pub hysteresis_epochs: u32,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        RuntimeConfig {
            speed_floor: 0.15,
            hysteresis_epochs: 3,
        }
    }
}

impl RuntimeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.speed_floor >= 0.0 && self.hysteresis_epochs >= 1 {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid runtime configuration {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuntimeState {
    pub tracker: TrackerState,
    pub active_key: Option<DirectionKey>,
    /// Key waiting to be committed and how many epochs in a row it was seen.
    pub pending_key: Option<DirectionKey>,
    pub hysteresis_count: u32,
}

/// One emitted position with the provenance of its update.
#[derive(Debug, Clone, PartialEq)]
pub struct Fix {
    pub state: TrackerState,
    /// Zone of the predicted position.
    pub zone: Option<u32>,
    /// Key whose pairs were used; `None` means the fallback list.
    pub key: Option<DirectionKey>,
    pub pairs: Vec<AnchorPair>,
    /// The predicted position lay outside every zone.
    pub out_of_zone: bool,
}

fn fallback_pairs(table: &PairTable, scenario: &Scenario) -> Result<Vec<AnchorPair>> {
    if table.fallback().is_empty() {
        all_pairs(&scenario.anchor_ids())
    } else {
        Ok(table.fallback().to_vec())
    }
}

/// Initializes on the first frame with the fallback pairs; no key is active
/// until one has been seen for `hysteresis_epochs` epochs.
pub fn start(frames: &[ToaFrame], table: &PairTable, scenario: &Scenario, ekf: &EkfConfig) -> Result<RuntimeState> {
    let tracker = initialize(frames, &fallback_pairs(table, scenario)?, scenario, ekf)?;
    Ok(RuntimeState {
        tracker,
        active_key: None,
        pending_key: None,
        hysteresis_count: 0,
    })
}

/// One feedback-loop epoch.
pub fn step(
    state: &RuntimeState,
    frame: &ToaFrame,
    table: &PairTable,
    scenario: &Scenario,
    ekf: &EkfConfig,
    config: &RuntimeConfig,
) -> Result<(RuntimeState, Fix)> {
    let predicted = predict(&state.tracker, frame.t - state.tracker.t, ekf)?;
    let zone = zone_of(scenario, predicted.position());
    let mut next = state.clone();

    if let Some(zone) = zone {
        let heading =
            classify_heading(predicted.velocity(), config.speed_floor).or(state.active_key.map(|k| k.heading));
        if let Some(heading) = heading {
            let candidate = DirectionKey { zone, heading };
            if Some(candidate) == state.active_key {
                next.pending_key = None;
                next.hysteresis_count = 0;
            } else {
                next.hysteresis_count = if state.pending_key == Some(candidate) {
                    state.hysteresis_count + 1
                } else {
                    1
                };
                next.pending_key = Some(candidate);
                if next.hysteresis_count >= config.hysteresis_epochs {
                    next.active_key = Some(candidate);
                    next.pending_key = None;
                    next.hysteresis_count = 0;
                }
            }
        }
    }

    // Keys without a calibrated entry use the fallback like out-of-zone fixes.
    let key = next.active_key.filter(|k| zone.is_some() && table.get(k).is_some());
    let pairs = match key.and_then(|k| table.get(&k)) {
        Some(pairs) => pairs.to_vec(),
        None => fallback_pairs(table, scenario)?,
    };
    let measurements = form_tdoas(frame, &pairs, scenario.speed_of_light());
    next.tracker = update(&predicted, &measurements, scenario, ekf)?;
    let fix = Fix {
        state: next.tracker,
        zone,
        key,
        pairs,
        out_of_zone: zone.is_none(),
    };
    Ok((next, fix))
}

/// Runs the loop over a whole session (the first frame is used both for
/// initialization and as the first epoch).
pub fn track(
    frames: &[ToaFrame],
    table: &PairTable,
    scenario: &Scenario,
    ekf: &EkfConfig,
    config: &RuntimeConfig,
) -> Result<Vec<Fix>> {
    config.validate()?;
    table.validate_against(scenario)?;
    let mut state = start(frames, table, scenario, ekf)?;
    let mut fixes = Vec::with_capacity(frames.len());
    for frame in frames {
        let (next, fix) = step(&state, frame, table, scenario, ekf, config)?;
        state = next;
        fixes.push(fix);
    }
    Ok(fixes)
}

/// Fix CSV extended with `zone,heading,pairs` describing the key used;
/// zone and heading are empty when the fallback list was used.
pub fn write_track_csv<W: Write>(fixes: &[Fix], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<&str> = FIX_CSV_HEADER
        .iter()
        .copied()
        .chain(["zone", "heading", "pairs"])
        .collect();
    w.write_record(&header)?;
    for f in fixes {
        let mut record: Vec<String> = fix_fields(&f.state).into();
        record.push(f.key.map(|k| k.zone.to_string()).unwrap_or_default());
        record.push(f.key.map(|k| k.heading.label().to_string()).unwrap_or_default());
        record.push(format_pairs(&f.pairs));
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| Error::io("<track csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heading_floor_and_boundaries() {
        assert_eq!(classify_heading(Point::new(1., 0.), 0.15), Some(HeadingClass::East));
        assert_eq!(classify_heading(Point::new(0.01, 0.), 0.15), None);
        assert_eq!(classify_heading(Point::new(1., 1.), 0.15), Some(HeadingClass::North));
        assert_eq!(classify_heading(Point::new(f64::NAN, 0.), 0.15), None);
    }
}
