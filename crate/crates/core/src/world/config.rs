//! Scenario files: TOML with a mandatory `format = 1` field.
//!
//! ```toml
//! format = 1
//! speed_of_light = 299792458.0     # optional
//!
//! [[anchors]]
//! id = 1
//! position = [0.2, 0.2]
//!
//! [[walls]]
//! a = [4.0, 0.0]
//! b = [4.0, 1.1]
//! attenuating = true               # optional, default true
//!
//! [[doors]]
//! id = 1
//! center = [4.0, 1.5]
//! axis = [0.0, 1.0]                # normalized on load
//! width = 0.8
//!
//! [[zones]]
//! id = 1
//! polygon = [[0.0, 0.0], [4.0, 0.0], [4.0, 3.0], [0.0, 3.0]]
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Anchor, Door, Scenario, Wall, Zone, SPEED_OF_LIGHT};
use crate::error::{Error, Result};

const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    format: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    speed_of_light: Option<f64>,
    /// Optional occupancy grid the doors were detected on; informational.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    occupancy_grid: Option<String>,
    #[serde(default)]
    anchors: Vec<RawAnchor>,
    #[serde(default)]
    walls: Vec<RawWall>,
    #[serde(default)]
    doors: Vec<RawDoor>,
    #[serde(default)]
    zones: Vec<RawZone>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAnchor {
    id: u32,
    position: [f64; 2],
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWall {
    a: [f64; 2],
    b: [f64; 2],
    #[serde(default = "default_true")]
    attenuating: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDoor {
    id: u32,
    center: [f64; 2],
    axis: [f64; 2],
    width: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawZone {
    id: u32,
    polygon: Vec<[f64; 2]>,
}

impl From<&Door> for RawDoor {
    fn from(d: &Door) -> Self {
        RawDoor {
            id: d.id,
            center: d.center.into(),
            axis: d.axis.into(),
            width: d.width,
        }
    }
}

impl RawDoor {
    fn build(&self) -> Result<Door> {
        Door::new(self.id, self.center.into(), self.axis.into(), self.width)
    }
}

fn config_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn de_error(path: &Path, text: &str, e: toml::de::Error) -> Error {
    let message = match e.span() {
        Some(span) => {
            let line = text[..span.start.min(text.len())].lines().count().max(1);
            format!("line {line}: {}", e.message())
        }
        None => e.message().to_string(),
    };
    config_error(path, message)
}

fn check_format(path: &Path, format: u32) -> Result<()> {
    if format != FORMAT_VERSION {
        return Err(config_error(
            path,
            format!("unsupported format {format}, expected {FORMAT_VERSION}"),
        ));
    }
    Ok(())
}

/// Parses scenario TOML; `path` is only used in error messages.
pub fn parse_scenario(text: &str, path: &Path) -> Result<Scenario> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| de_error(path, text, e))?;
    check_format(path, raw.format)?;
    let wrap = |e: Error| config_error(path, e.to_string());

    let anchors = raw
        .anchors
        .iter()
        .map(|a| Anchor {
            id: a.id,
            position: a.position.into(),
        })
        .collect();
    let walls = raw
        .walls
        .iter()
        .map(|w| Wall::new(w.a.into(), w.b.into(), w.attenuating))
        .collect::<Result<Vec<_>>>()
        .map_err(wrap)?;
    let doors = raw
        .doors
        .iter()
        .map(RawDoor::build)
        .collect::<Result<Vec<_>>>()
        .map_err(wrap)?;
    let zones = raw
        .zones
        .iter()
        .map(|z| Zone::new(z.id, z.polygon.iter().map(|&p| p.into()).collect()))
        .collect::<Result<Vec<_>>>()
        .map_err(wrap)?;
    Scenario::new(
        walls,
        doors,
        zones,
        anchors,
        raw.speed_of_light.unwrap_or(SPEED_OF_LIGHT),
    )
    .map_err(wrap)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scenario(&text, path)
}

pub fn scenario_to_toml(scenario: &Scenario) -> String {
    let raw = RawScenario {
        format: FORMAT_VERSION,
        speed_of_light: Some(scenario.speed_of_light()),
        occupancy_grid: None,
        anchors: scenario
            .anchors()
            .iter()
            .map(|a| RawAnchor {
                id: a.id,
                position: a.position.into(),
            })
            .collect(),
        walls: scenario
            .walls()
            .iter()
            .map(|w| RawWall {
                a: w.a.into(),
                b: w.b.into(),
                attenuating: w.attenuating,
            })
            .collect(),
        doors: scenario.doors().iter().map(RawDoor::from).collect(),
        zones: scenario
            .zones()
            .iter()
            .map(|z| RawZone {
                id: z.id,
                polygon: z.polygon().iter().map(|&p| p.into()).collect(),
            })
            .collect(),
    };
    toml::to_string(&raw).expect("scenario serializes")
}

pub fn write_scenario(scenario: &Scenario, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, scenario_to_toml(scenario)).map_err(|e| Error::io(path, e))
}

/// A standalone `doors` section, as produced by the door detector. It uses
/// the scenario schema so it can be pasted into (or merged with) a scenario.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DoorsSection {
    pub doors: Vec<Door>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDoors {
    format: u32,
    #[serde(default)]
    doors: Vec<RawDoor>,
}

impl DoorsSection {
    pub fn to_toml(&self) -> String {
        let raw = RawDoors {
            format: FORMAT_VERSION,
            doors: self.doors.iter().map(RawDoor::from).collect(),
        };
        toml::to_string(&raw).expect("doors serialize")
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let raw: RawDoors = toml::from_str(text).map_err(|e| de_error(path, text, e))?;
        check_format(path, raw.format)?;
        let doors = raw
            .doors
            .iter()
            .map(RawDoor::build)
            .collect::<Result<Vec<_>>>()
            .map_err(|e| config_error(path, e.to_string()))?;
        Ok(DoorsSection { doors })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
format = 1
speed_of_light = 3.0e8

[[anchors]]
id = 1
position = [0.0, 0.0]
[[anchors]]
id = 2
position = [4.0, 0.0]
[[anchors]]
id = 3
position = [0.0, 3.0]

[[walls]]
a = [2.0, 0.0]
b = [2.0, 1.0]

[[doors]]
id = 7
center = [2.0, 1.5]
axis = [0.0, 2.0]
width = 0.8

[[zones]]
id = 1
polygon = [[0.0, 0.0], [2.0, 0.0], [2.0, 3.0], [0.0, 3.0]]
"#;

    #[test]
    fn parse_small() {
        let s = parse_scenario(SMALL, Path::new("small.toml")).unwrap();
        assert_eq!(s.anchors().len(), 3);
        assert_eq!(s.speed_of_light(), 3.0e8);
        assert!(s.walls()[0].attenuating);
        let door = s.door(7).unwrap();
        assert_eq!(door.axis, crate::world::Point::new(0.0, 1.0));
        let again = parse_scenario(&scenario_to_toml(&s), Path::new("again.toml")).unwrap();
        assert_eq!(again, s);
    }

    #[test]
    fn format_field_is_mandatory() {
        let text = SMALL.replace("format = 1", "");
        let err = parse_scenario(&text, Path::new("x.toml")).unwrap_err();
        assert!(err.to_string().contains("format"), "{err}");
        let text = SMALL.replace("format = 1", "format = 2");
        assert!(parse_scenario(&text, Path::new("x.toml")).is_err());
    }

    #[test]
    fn syntax_errors_carry_a_line() {
        let text = SMALL.replace("width = 0.8", "width = ");
        let err = parse_scenario(&text, Path::new("x.toml")).unwrap_err();
        assert!(err.to_string().contains("line 23"), "{err}");
    }

    #[test]
    fn doors_section_round_trip() {
        let s = parse_scenario(SMALL, Path::new("small.toml")).unwrap();
        let section = DoorsSection {
            doors: s.doors().to_vec(),
        };
        let back = DoorsSection::parse(&section.to_toml(), Path::new("d.toml")).unwrap();
        assert_eq!(back, section);
    }
}
