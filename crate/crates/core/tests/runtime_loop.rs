mod common;

use std::collections::BTreeMap;

use common::{p, pair};
use doorcal::calibration::DirectionKey;
use doorcal::demo::{apartment, test_path};
use doorcal::runtime::{start, step, track, write_track_csv};
use doorcal::simkit::{simulate_session, waypoint_trajectory};
use doorcal::tdoa_ekf::{all_pairs, run_filter};
use doorcal::{AnchorPair, EkfConfig, HeadingClass, PairTable, RuntimeConfig, SimConfig, ToaFrame};

fn apartment_keys() -> Vec<DirectionKey> {
    use HeadingClass::*;
    [
        (1, South),
        (1, West),
        (2, South),
        (2, East),
        (3, North),
        (3, East),
        (4, North),
        (4, West),
    ]
    .into_iter()
    .map(|(zone, heading)| DirectionKey { zone, heading })
    .collect()
}

fn session(seed: u64) -> Vec<ToaFrame> {
    let mut path = test_path();
    path.extend(test_path().into_iter().skip(1));
    let poses = waypoint_trajectory(&path, 1.0, 0.1).unwrap();
    simulate_session(
        &apartment(),
        &SimConfig {
            rng_seed: seed,
            ..SimConfig::default()
        },
        &poses,
    )
    .unwrap()
}

/// Every key gets its own four pairs so the list in use identifies the key.
fn distinct_table() -> PairTable {
    let all = all_pairs(&apartment().anchor_ids()).unwrap();
    let entries: BTreeMap<DirectionKey, Vec<AnchorPair>> = apartment_keys()
        .into_iter()
        .enumerate()
        .map(|(k, key)| (key, (0..4).map(|i| all[(k + 2 * i) % all.len()]).collect()))
        .collect();
    PairTable::new(entries, all).unwrap()
}

#[test]
fn uniform_table_reproduces_plain_filter_bit_for_bit() {
    let s = apartment();
    let frames = session(4);
    let ekf = EkfConfig::default();
    for pairs in [
        all_pairs(&s.anchor_ids()).unwrap(),
        vec![pair(1, 3), pair(2, 4), pair(5, 6), pair(1, 2)],
    ] {
        let table = PairTable::uniform(apartment_keys(), pairs.clone()).unwrap();
        let fixes = track(&frames, &table, &s, &ekf, &RuntimeConfig::default()).unwrap();
        let plain = run_filter(&frames, &pairs, &s, &ekf).unwrap();
        assert_eq!(fixes.len(), plain.len());
        for (f, q) in fixes.iter().zip(&plain) {
            assert_eq!(f.state, *q);
        }
    }
}

#[test]
fn active_key_selects_exactly_its_pairs() {
    let s = apartment();
    let table = distinct_table();
    let fixes = track(
        &session(5),
        &table,
        &s,
        &EkfConfig::default(),
        &RuntimeConfig::default(),
    )
    .unwrap();
    let mut seen = std::collections::BTreeSet::new();
    for f in &fixes {
        match f.key {
            Some(k) => {
                assert_eq!(f.pairs, table.get(&k).unwrap());
                seen.insert(k);
            }
            None => assert_eq!(f.pairs, table.fallback()),
        }
    }
    // The loop enters every room in both travel directions it allows.
    assert!(seen.len() >= 4, "{seen:?}");
}

#[test]
fn key_changes_are_debounced() {
    let s = apartment();
    let frames = session(6);
    for epochs in [1, 3, 10] {
        let cfg = RuntimeConfig {
            hysteresis_epochs: epochs,
            ..RuntimeConfig::default()
        };
        let fixes = track(&frames, &distinct_table(), &s, &EkfConfig::default(), &cfg).unwrap();
        let changes = fixes.windows(2).filter(|w| w[0].key != w[1].key).count();
        assert!(changes <= fixes.len() / epochs as usize, "{epochs}: {changes}");
    }
}

#[test]
fn oscillating_heading_does_not_commit() {
    // Alternate east/west every epoch: with a 3-epoch hysteresis no key is
    // ever committed and the fallback stays in use.
    let s = apartment();
    let table = distinct_table();
    let ekf = EkfConfig::default();
    let cfg = RuntimeConfig::default();
    let frames = session(7);
    let mut state = start(&frames, &table, &s, &ekf).unwrap();
    for (k, frame) in frames.iter().take(40).enumerate() {
        let v = if k % 2 == 0 { 1.0 } else { -1.0 };
        state.tracker.x[2] = v;
        state.tracker.x[3] = 0.0;
        let (next, fix) = step(&state, frame, &table, &s, &ekf, &cfg).unwrap();
        assert_eq!(fix.key, None, "epoch {k}");
        assert!(next.hysteresis_count <= 1);
        state = next;
    }
}

#[test]
fn stationary_tag_stays_on_fallback() {
    let s = apartment();
    let frames: Vec<ToaFrame> = simulate_session(
        &s,
        &SimConfig::ideal(),
        &(0..100)
            .map(|k| doorcal::Pose {
                t: f64::from(k) * 0.1,
                position: p(2.0, 1.5),
                heading: 0.0,
            })
            .collect::<Vec<_>>(),
    )
    .unwrap();
    let table = distinct_table();
    let fixes = track(&frames, &table, &s, &EkfConfig::default(), &RuntimeConfig::default()).unwrap();
    assert!(fixes.iter().all(|f| f.key.is_none() && f.pairs == table.fallback()));
    assert!(fixes.last().unwrap().state.position().distance(p(2.0, 1.5)) < 0.01);
}

#[test]
fn leaving_every_zone_falls_back() {
    let s = apartment();
    let poses = waypoint_trajectory(&[p(8.6, 0.5), p(8.6, 5.5)], 1.0, 0.1).unwrap();
    let frames = simulate_session(&s, &SimConfig::ideal(), &poses).unwrap();
    let table = distinct_table();
    let fixes = track(&frames, &table, &s, &EkfConfig::default(), &RuntimeConfig::default()).unwrap();
    let late = &fixes[20..];
    assert!(late
        .iter()
        .all(|f| f.out_of_zone && f.key.is_none() && f.pairs == table.fallback()));
}

#[test]
fn tables_must_match_the_scenario() {
    let s = apartment();
    let bad = PairTable::uniform(apartment_keys(), vec![pair(1, 2), pair(1, 3), pair(1, 9)]).unwrap();
    assert!(track(&session(1), &bad, &s, &EkfConfig::default(), &RuntimeConfig::default()).is_err());
}

#[test]
fn track_csv_names_the_key() {
    let s = apartment();
    let fixes = track(
        &session(2),
        &distinct_table(),
        &s,
        &EkfConfig::default(),
        &RuntimeConfig::default(),
    )
    .unwrap();
    let mut buf = Vec::new();
    write_track_csv(&fixes, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,x,y,vx,vy,p00,p11,zone,heading,pairs");
    assert_eq!(lines.count(), fixes.len());
    assert!(text.contains(",1,down,") || text.contains(",1,left,"));
}
