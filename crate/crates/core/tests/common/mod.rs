#![allow(dead_code)]

use doorcal::tdoa_ekf::tdoa_jacobian;
use doorcal::world::{Zone, SPEED_OF_LIGHT};
use doorcal::{Anchor, AnchorPair, Door, Point, Scenario, Wall};

pub fn p(x: f64, y: f64) -> Point {
    Point::new(x, y)
}

pub fn pair(a: u32, b: u32) -> AnchorPair {
    AnchorPair::new(a, b).unwrap()
}

fn side(wall: &Wall, q: Point) -> f64 {
    (wall.b - wall.a).cross(q - wall.a)
}

/// Attenuating walls met by `from`-`to`, found by stepping along the
/// segment in 1 mm increments and watching each wall's side test flip.
/// A flip is bisected down to the crossing point, which must then lie on
/// the wall itself rather than its extension.
pub fn ray_march_crossings(scenario: &Scenario, from: Point, to: Point) -> usize {
    const STEP: f64 = 1e-3;
    let len = from.distance(to);
    let steps = (len / STEP).ceil().max(1.0) as usize;
    let at = |s: f64| from.lerp(to, s);
    let mut count = 0;
    for wall in scenario.walls().iter().filter(|w| w.attenuating) {
        let mut prev = side(wall, from);
        for k in 1..=steps {
            let s1 = k as f64 / steps as f64;
            let cur = side(wall, at(s1));
            if prev == 0.0 || cur == 0.0 || (prev > 0.0) != (cur > 0.0) {
                let (mut lo, mut hi) = ((k - 1) as f64 / steps as f64, s1);
                let lo_sign = prev > 0.0;
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if (side(wall, at(mid)) > 0.0) == lo_sign {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let hit = at(0.5 * (lo + hi));
                let d = wall.b - wall.a;
                let u = (hit - wall.a).dot(d) / d.dot(d);
                if (0.0..=1.0).contains(&u) {
                    count += 1;
                }
                break;
            }
            prev = cur;
        }
    }
    count
}

/// Central differences of the range difference with respect to position.
pub fn jacobian_fd(position: Point, pair: AnchorPair, scenario: &Scenario, h: f64) -> [f64; 2] {
    let a = scenario.anchor(pair.i()).unwrap().position;
    let b = scenario.anchor(pair.j()).unwrap().position;
    let f = |q: Point| q.distance(a) - q.distance(b);
    [
        (f(position + p(h, 0.)) - f(position - p(h, 0.))) / (2.0 * h),
        (f(position + p(0., h)) - f(position - p(0., h))) / (2.0 * h),
    ]
}

pub fn analytic_jacobian(position: Point, pair: AnchorPair, scenario: &Scenario) -> [f64; 2] {
    let j = tdoa_jacobian(position, pair, scenario).unwrap();
    assert_eq!((j[2], j[3]), (0.0, 0.0));
    [j[0], j[1]]
}

/// Two rooms side by side with a door between them. Anchor 6 sits north of
/// the door behind three attenuating walls; the room partition itself does
/// not attenuate.
pub fn nlos_scenario() -> Scenario {
    let w = |a: Point, b: Point, att: bool| Wall::new(a, b, att).unwrap();
    let walls = vec![
        w(p(0., 0.), p(8., 0.), true),
        w(p(8., 0.), p(8., 4.), true),
        w(p(0., 0.), p(0., 4.), true),
        w(p(4., 0.), p(4., 1.6), false),
        w(p(4., 2.4), p(4., 4.), false),
        w(p(-1., 4.), p(9., 4.), true),
        w(p(-1., 5.), p(9., 5.), true),
        w(p(-1., 6.), p(9., 6.), true),
    ];
    let doors = vec![Door::new(1, p(4., 2.), p(0., -1.), 0.8).unwrap()];
    let zones = vec![
        Zone::new(1, vec![p(0., 0.), p(4., 0.), p(4., 4.), p(0., 4.)]).unwrap(),
        Zone::new(2, vec![p(4., 0.), p(8., 0.), p(8., 4.), p(4., 4.)]).unwrap(),
    ];
    let anchors = [
        (1, 0.3, 0.3),
        (2, 0.3, 3.7),
        (3, 7.7, 0.3),
        (4, 7.7, 3.7),
        (5, 4.3, 0.3),
        (6, 4.0, 7.0),
    ]
    .into_iter()
    .map(|(id, x, y)| Anchor { id, position: p(x, y) })
    .collect();
    Scenario::new(walls, doors, zones, anchors, SPEED_OF_LIGHT).unwrap()
}

pub const NLOS_ANCHOR: u32 = 6;
