mod common;

use std::path::Path;

use common::p;
use doorcal::evalkit::{
    compare, ecdf, read_points_csv, trajectory_error, write_ecdf_csv, write_points_csv, write_summary_csv, ErrorSummary,
};
use doorcal::Point;
use proptest::prelude::*;

/// Tied values are common in quantized errors, so draw from a coarse grid
/// half the time.
fn samples() -> impl Strategy<Value = Vec<f64>> {
    prop_oneof![
        prop::collection::vec(0.0..5.0f64, 1..200),
        prop::collection::vec((0u32..20).prop_map(|k| f64::from(k) * 0.05), 1..200),
    ]
}

fn brute_ecdf(samples: &[f64]) -> Vec<(f64, f64)> {
    let mut values = samples.to_vec();
    values.sort_by(f64::total_cmp);
    values.dedup();
    values
        .into_iter()
        .map(|v| {
            let below = samples.iter().filter(|&&s| s <= v).count();
            (v, below as f64 / samples.len() as f64)
        })
        .collect()
}

fn rotate(q: Point, angle: f64, shift: Point) -> Point {
    let (s, c) = angle.sin_cos();
    p(c * q.x - s * q.y, s * q.x + c * q.y) + shift
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn ecdf_matches_counting(xs in samples()) {
        prop_assert_eq!(ecdf(&xs), brute_ecdf(&xs));
        let e = ecdf(&xs);
        prop_assert_eq!(e.last().unwrap().1, 1.0);
        for w in e.windows(2) {
            prop_assert!(w[0].0 < w[1].0 && w[0].1 < w[1].1);
        }
    }

    #[test]
    fn moments_match_brute_force(xs in samples()) {
        let s = ErrorSummary::from_samples(xs.clone()).unwrap();
        let n = xs.len();
        let mean: f64 = xs.iter().sum::<f64>() / n as f64;
        prop_assert!((s.mean - mean).abs() <= 1e-12 * mean.max(1.0));
        // Lower median: at least half the samples are <= it and at least
        // half are >= it, and it is one of the samples.
        let le = xs.iter().filter(|&&x| x <= s.median).count();
        let ge = xs.iter().filter(|&&x| x >= s.median).count();
        prop_assert!(2 * le >= n && 2 * ge >= n + usize::from(n % 2 == 0));
        prop_assert!(xs.contains(&s.median) && xs.contains(&s.p90));
        prop_assert!(s.median <= s.p90);
    }

    #[test]
    fn compare_is_antisymmetric(a in samples(), b in samples()) {
        let (a, b) = (ErrorSummary::from_samples(a).unwrap(), ErrorSummary::from_samples(b).unwrap());
        let (ab, ba) = (compare(&a, &b), compare(&b, &a));
        prop_assert_eq!(ab.median_gain, -ba.median_gain);
        prop_assert_eq!(ab.mean_gain, -ba.mean_gain);
        prop_assert_eq!(compare(&a, &a).median_gain, 0.0);
    }

    #[test]
    fn trajectory_error_is_rigid_invariant(
        fixes in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 1..30),
        path in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 2..8),
        angle in 0.0..std::f64::consts::TAU,
        shift in (-10.0..10.0f64, -10.0..10.0f64),
    ) {
        let fixes: Vec<Point> = fixes.into_iter().map(|(x, y)| p(x, y)).collect();
        let path: Vec<Point> = path.into_iter().map(|(x, y)| p(x, y)).collect();
        let shift = p(shift.0, shift.1);
        let moved = |v: &[Point]| v.iter().map(|&q| rotate(q, angle, shift)).collect::<Vec<_>>();
        let a = trajectory_error(&fixes, &path).unwrap();
        let b = trajectory_error(&moved(&fixes), &moved(&path)).unwrap();
        for (x, y) in a.samples.iter().zip(&b.samples) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn fixes_on_the_path_have_zero_error(path in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 2..8)) {
        let path: Vec<Point> = path.into_iter().map(|(x, y)| p(x, y)).collect();
        let s = trajectory_error(&path, &path).unwrap();
        prop_assert!(s.samples.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn points_csv_round_trip(pts in prop::collection::vec((-1e3..1e3f64, -1e3..1e3f64), 0..50)) {
        let pts: Vec<Point> = pts.into_iter().map(|(x, y)| p(x, y)).collect();
        let mut buf = Vec::new();
        write_points_csv(&pts, &mut buf).unwrap();
        prop_assert_eq!(read_points_csv(buf.as_slice(), Path::new("mem")).unwrap(), pts);
    }
}

#[test]
fn empty_inputs_are_rejected() {
    assert!(trajectory_error(&[], &[p(0., 0.), p(1., 0.)]).is_err());
    assert!(trajectory_error(&[p(0., 0.)], &[p(0., 0.)]).is_err());
    assert!(ErrorSummary::from_samples(vec![]).is_err());
}

#[test]
fn csv_exports_have_fixed_headers() {
    let s = ErrorSummary::from_samples(vec![0.1, 0.2, 0.4]).unwrap();
    let mut buf = Vec::new();
    write_ecdf_csv(&ecdf(&s.samples), &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("error_m,probability\n"));
    assert!(text.trim_end().ends_with(",1"));
    let mut buf = Vec::new();
    write_summary_csv(&[("adaptive", &s)], &mut buf).unwrap();
    assert_eq!(
        String::from_utf8(buf).unwrap(),
        "run,n,median_m,mean_m,p90_m\nadaptive,3,0.2,0.23333333333333336,0.2\n"
    );
}

#[test]
fn points_csv_reports_bad_lines() {
    let err = read_points_csv("t,x,y\n0,1,2\n1,oops,3\n".as_bytes(), Path::new("f.csv")).unwrap_err();
    assert!(err.to_string().contains("line 3"), "{err}");
    let err = read_points_csv("a,b\n1,2\n".as_bytes(), Path::new("f.csv")).unwrap_err();
    assert!(err.to_string().contains("missing column x"), "{err}");
}
