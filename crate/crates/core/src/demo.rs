//! The bundled four-room apartment and a reference walk through it.

use std::path::Path;

use crate::world::{parse_scenario, Point, Scenario};

/// Scenario file text of the demo apartment.
pub const APARTMENT_TOML: &str = include_str!("../assets/apartment.toml");

pub fn apartment() -> Scenario {
    parse_scenario(APARTMENT_TOML, Path::new("apartment.toml")).expect("bundled scenario is valid")
}

/// A loop through all four rooms, crossing every door once, starting and
/// ending in zone 1.
pub fn test_path() -> Vec<Point> {
    [
        (1.0, 1.0),
        (3.0, 1.5),
        (5.0, 1.5),
        (6.0, 2.0),
        (6.0, 4.0),
        (7.0, 5.0),
        (5.0, 4.5),
        (3.0, 4.5),
        (1.0, 5.0),
        (2.0, 4.0),
        (2.0, 2.0),
        (1.0, 1.0),
    ]
    .into_iter()
    .map(|(x, y)| Point::new(x, y))
    .collect()
}
