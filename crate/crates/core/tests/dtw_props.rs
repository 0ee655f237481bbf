use hybridlearn_core::dtw::{diagonality, dtw_align, similarity, AlignmentPath};
use proptest::prelude::*;

fn cell(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Minimum over every warping path, enumerated by brute force.
fn oracle(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    fn walk(x: &[Vec<f64>], y: &[Vec<f64>], i: usize, j: usize, acc: f64, best: &mut f64) {
        let acc = acc + cell(&x[i], &y[j]);
        if i + 1 == x.len() && j + 1 == y.len() {
            *best = best.min(acc);
            return;
        }
        if i + 1 < x.len() && j + 1 < y.len() {
            walk(x, y, i + 1, j + 1, acc, best);
        }
        if i + 1 < x.len() {
            walk(x, y, i + 1, j, acc, best);
        }
        if j + 1 < y.len() {
            walk(x, y, i, j + 1, acc, best);
        }
    }
    let mut best = f64::INFINITY;
    walk(x, y, 0, 0, 0.0, &mut best);
    best
}

fn path_cost(x: &[Vec<f64>], y: &[Vec<f64>], p: &AlignmentPath) -> f64 {
    p.pairs.iter().map(|&(i, j)| cell(&x[i], &y[j])).sum()
}

fn grid_seq(max_len: usize, dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(
        prop::collection::vec(prop::sample::select(vec![0.0, 0.5, 1.0]), dim),
        1..=max_len,
    )
}

fn real_seq(max_len: usize, dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-10.0f64..10.0, dim), 1..=max_len)
}

fn pair(max_len: usize, real: bool) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    (1usize..=3).prop_flat_map(move |d| {
        if real {
            (real_seq(max_len, d), real_seq(max_len, d)).boxed()
        } else {
            (grid_seq(max_len, d), grid_seq(max_len, d)).boxed()
        }
    })
}

proptest! {
    #[test]
    fn matches_exhaustive_enumeration((x, y) in pair(6, false)) {
        let (d, path) = dtw_align(&x, &y).unwrap();
        prop_assert!((d - oracle(&x, &y)).abs() <= 1e-12);
        prop_assert!(path.is_valid(x.len(), y.len()));
        prop_assert!((path_cost(&x, &y, &path) - d).abs() <= 1e-12);
    }

    #[test]
    fn metric_properties((x, y) in pair(30, true)) {
        let (dxy, pxy) = dtw_align(&x, &y).unwrap();
        let (dyx, _) = dtw_align(&y, &x).unwrap();
        prop_assert!(dxy >= 0.0);
        prop_assert!((dxy - dyx).abs() <= 1e-9 * (1.0 + dxy));
        prop_assert_eq!(dtw_align(&x, &x).unwrap().0, 0.0);
        let r = diagonality(&pxy);
        prop_assert!((-1.0..=1.0).contains(&r));
        let s = similarity(&x, &y).unwrap();
        prop_assert!((s.distance * pxy.len() as f64 - dxy).abs() <= 1e-9 * (1.0 + dxy));
    }

    #[test]
    fn identity_path_has_unit_diagonality(n in 2usize..500) {
        let id = AlignmentPath { pairs: (0..n).map(|i| (i, i)).collect() };
        prop_assert_eq!(diagonality(&id), 1.0);
    }
}

#[test]
fn diagonality_of_degenerate_paths_is_zero() {
    let row = AlignmentPath {
        pairs: (0..5).map(|j| (0, j)).collect(),
    };
    assert_eq!(diagonality(&row), 0.0);
    assert_eq!(diagonality(&AlignmentPath { pairs: vec![(0, 0)] }), 0.0);
}

#[test]
fn dimension_mismatch_is_rejected() {
    assert!(dtw_align(&[vec![0.0]], &[vec![0.0, 1.0]]).is_err());
    assert!(dtw_align(&[], &[vec![0.0]]).is_err());
}
