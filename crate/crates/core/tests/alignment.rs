//! Temporal alignment search against a brute-force evaluation of its
//! objective.

use proptest::prelude::*;
use rail_core::fuser::{align_offset, alignment_objective};
use rail_core::trajectory::PolynomialTrajectory;

fn poly(coeffs: Vec<Vec<f64>>, start: f64, end: f64) -> PolynomialTrajectory {
    PolynomialTrajectory::with_scale(coeffs, 0.0, 1.0, start, end).unwrap()
}

/// Argmax by exhaustive evaluation, first maximum wins.
fn brute_force(cur: &PolynomialTrajectory, inc: &PolynomialTrajectory, t_s: f64, t_w: f64, grid: f64) -> f64 {
    let mut best = (i64::MIN, 0.0);
    let mut n = 1;
    while (n as f64) * grid < t_w - 1e-12 {
        let t_a = n as f64 * grid;
        let score = alignment_objective(cur, inc, t_s, t_a).unwrap();
        if score > best.0 {
            best = (score, t_a);
        }
        n += 1;
    }
    best.1
}

fn channels(dims: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 4), dims)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn grid_search_matches_exhaustive_oracle(
        (cur, inc) in (1usize..=6).prop_flat_map(|d| (channels(d), channels(d))),
        t_s in 0.5f64..1.5,
        t_w in 0.1f64..0.8,
        grid in prop::sample::select(vec![0.005, 0.01, 0.02]),
    ) {
        let cur = poly(cur, 0.0, 3.0);
        let inc = poly(inc, t_s - 0.05, t_s + 1.0);
        let got = align_offset(&cur, &inc, t_s, t_w, grid).unwrap();
        prop_assert_eq!(got, brute_force(&cur, &inc, t_s, t_w, grid));
        prop_assert!(got > 0.0 && got < t_w);
    }

    #[test]
    fn recovers_known_shift_of_monotone_motion(
        delta in 0.001f64..=0.49,
        slopes in prop::collection::vec(prop_oneof![0.2f64..2.0, -2.0f64..-0.2], 1..=6),
    ) {
        // x_i(t) = s_i t + 0.05 s_i t³ is strictly monotone
        let coeffs: Vec<Vec<f64>> = slopes.iter().map(|&s| vec![0.3, s, 0.0, 0.05 * s]).collect();
        let cur = poly(coeffs, 0.0, 3.0);
        let t_s = 1.2;
        let inc = cur.clip_domain(t_s - delta, 3.0).unwrap();
        let grid = 0.01;
        let got = align_offset(&cur, &inc, t_s, 0.5, grid).unwrap();
        prop_assert!((got - delta).abs() <= grid + 1e-12, "delta {delta} -> {got}");
    }
}

#[test]
fn shift_beyond_last_grid_point_is_not_recovered() {
    // with t_w = 0.5 and step 0.01 the last candidate is 0.49; a true shift
    // of 0.495 leaves every candidate behind the current position, all
    // scores tie at -m and the smallest offset wins
    let cur = poly(vec![vec![0.0, 1.0]], 0.0, 3.0);
    let inc = cur.clip_domain(1.2 - 0.495, 3.0).unwrap();
    assert_eq!(alignment_objective(&cur, &inc, 1.2, 0.49).unwrap(), -1);
    assert_eq!(align_offset(&cur, &inc, 1.2, 0.5, 0.01).unwrap(), 0.01);
}

#[test]
fn resting_channels_pick_first_grid_point() {
    let cur = poly(vec![vec![0.4], vec![-1.0]], 0.0, 2.0);
    let inc = poly(vec![vec![0.4], vec![-1.0]], 0.9, 2.0);
    assert_eq!(align_offset(&cur, &inc, 1.0, 0.5, 0.01).unwrap(), 0.01);
}

#[test]
fn empty_grid_is_an_argument_error() {
    let cur = poly(vec![vec![0.0, 1.0]], 0.0, 2.0);
    assert!(align_offset(&cur, &cur, 1.0, 0.02, 0.01).is_err());
    assert!(align_offset(&cur, &cur, 1.0, 0.5, 0.0).is_err());
}
