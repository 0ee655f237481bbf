//! Dynamic time warping over multivariate sequences and the
//! `(distance, diagonality)` similarity index used to cluster segments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synthesis::StateRecord;

/// Monotone, continuous warping path of 0-based index pairs from `(0, 0)`
/// to `(N - 1, M - 1)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AlignmentPath {
    pub pairs: Vec<(usize, usize)>,
}

impl AlignmentPath {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Checks the start, end and unit-step constraints.
    pub fn is_valid(&self, n: usize, m: usize) -> bool {
        let (Some(&first), Some(&last)) = (self.pairs.first(), self.pairs.last()) else {
            return false;
        };
        first == (0, 0)
            && last == (n - 1, m - 1)
            && self.pairs.windows(2).all(|w| {
                let di = w[1].0 as isize - w[0].0 as isize;
                let dj = w[1].1 as isize - w[0].1 as isize;
                matches!((di, dj), (1, 0) | (0, 1) | (1, 1))
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimIndex {
    pub distance: f64,
    pub diagonality: f64,
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Minimal summed euclidean cell cost over all warping paths, and a path
/// attaining it. Backtracking prefers diagonal, then vertical `(i-1, j)`,
/// then horizontal `(i, j-1)` predecessors on ties.
pub fn dtw_align(x: &[Vec<f64>], y: &[Vec<f64>]) -> Result<(f64, AlignmentPath)> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::EmptySequence);
    }
    let dim = x[0].len();
    if let Some(bad) = x.iter().chain(y).find(|r| r.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: bad.len(),
        });
    }
    let (n, m) = (x.len(), y.len());
    let mut acc = vec![f64::INFINITY; n * m];
    let at = |i: usize, j: usize| i * m + j;
    for i in 0..n {
        for j in 0..m {
            let c = euclid(&x[i], &y[j]);
            let prev = if i == 0 && j == 0 {
                0.0
            } else {
                let diag = if i > 0 && j > 0 {
                    acc[at(i - 1, j - 1)]
                } else {
                    f64::INFINITY
                };
                let up = if i > 0 { acc[at(i - 1, j)] } else { f64::INFINITY };
                let left = if j > 0 { acc[at(i, j - 1)] } else { f64::INFINITY };
                diag.min(up).min(left)
            };
            acc[at(i, j)] = c + prev;
        }
    }

    let mut pairs = Vec::with_capacity(n + m);
    let (mut i, mut j) = (n - 1, m - 1);
    pairs.push((i, j));
    while i > 0 || j > 0 {
        (i, j) = if i == 0 {
            (0, j - 1)
        } else if j == 0 {
            (i - 1, 0)
        } else {
            let diag = acc[at(i - 1, j - 1)];
            let up = acc[at(i - 1, j)];
            let left = acc[at(i, j - 1)];
            if diag <= up && diag <= left {
                (i - 1, j - 1)
            } else if up <= left {
                (i - 1, j)
            } else {
                (i, j - 1)
            }
        };
        pairs.push((i, j));
    }
    pairs.reverse();
    Ok((acc[at(n - 1, m - 1)], AlignmentPath { pairs }))
}

/// Pearson correlation of the two index sequences of `path`; 0 when either
/// sequence is constant.
pub fn diagonality(path: &AlignmentPath) -> f64 {
    let k = path.len() as f64;
    if path.len() < 2 {
        return 0.0;
    }
    let mi = path.pairs.iter().map(|p| p.0 as f64).sum::<f64>() / k;
    let mj = path.pairs.iter().map(|p| p.1 as f64).sum::<f64>() / k;
    let (mut sij, mut sii, mut sjj) = (0.0, 0.0, 0.0);
    for &(i, j) in &path.pairs {
        let (di, dj) = (i as f64 - mi, j as f64 - mj);
        sij += di * dj;
        sii += di * di;
        sjj += dj * dj;
    }
    if sii == 0.0 || sjj == 0.0 {
        return 0.0;
    }
    let r = if sii == sjj {
        sij / sii
    } else {
        sij / (sii * sjj).sqrt()
    };
    r.clamp(-1.0, 1.0)
}

/// Similarity of two sequences with the distance normalized by path length.
pub fn similarity(x: &[Vec<f64>], y: &[Vec<f64>]) -> Result<SimIndex> {
    let (dist, path) = dtw_align(x, y)?;
    Ok(SimIndex {
        distance: dist / path.len() as f64,
        diagonality: diagonality(&path),
    })
}

/// Mean similarity between a segment and every representative stored in a
/// state.
pub fn segment_state_similarity(seg: &[Vec<f64>], state: &StateRecord) -> Result<SimIndex> {
    if state.segments.is_empty() {
        return Err(Error::EmptyState(state.id));
    }
    let mut total = SimIndex {
        distance: 0.0,
        diagonality: 0.0,
    };
    for stored in &state.segments {
        let s = similarity(seg, &stored.rows)?;
        total.distance += s.distance;
        total.diagonality += s.diagonality;
    }
    let k = state.segments.len() as f64;
    Ok(SimIndex {
        distance: total.distance / k,
        diagonality: total.diagonality / k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn identical_series() {
        let (d, p) = dtw_align(&col(&[1.0, 2.0, 3.0]), &col(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(d, 0.0);
        assert_eq!(p.pairs, vec![(0, 0), (1, 1), (2, 2)]);
        assert_eq!(diagonality(&p), 1.0);
    }

    #[test]
    fn warped_zero_distance_path() {
        let (d, p) = dtw_align(&col(&[0.0, 0.0, 1.0]), &col(&[0.0, 1.0, 1.0])).unwrap();
        assert_eq!(d, 0.0);
        assert_eq!(p.pairs, vec![(0, 0), (1, 0), (2, 1), (2, 2)]);
        // Pearson of (1,2,3,3) and (1,1,2,3) = 2.25 / 2.75
        assert!((diagonality(&p) - 2.25 / 2.75).abs() < 1e-12);
    }

    #[test]
    fn constant_offset() {
        let (d, p) = dtw_align(&col(&[1.0; 3]), &col(&[2.0; 3])).unwrap();
        assert_eq!(d, 3.0);
        assert_eq!(p.len(), 3);
    }

    #[test]
    fn length_one_has_zero_diagonality() {
        let (_, p) = dtw_align(&col(&[1.0]), &col(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(diagonality(&p), 0.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(dtw_align(&[], &col(&[1.0])), Err(Error::EmptySequence)));
        assert!(matches!(
            dtw_align(&[vec![1.0, 2.0]], &col(&[1.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn ramp_versus_flat_separated_by_distance() {
        // Against a constant every path costs at least the diagonal one, so
        // the path stays diagonal and only the distance tells them apart.
        let ramp: Vec<f64> = (0..30).map(|i| i as f64 / 29.0).collect();
        let flat = vec![0.0; 30];
        let s = similarity(&col(&ramp), &col(&flat)).unwrap();
        assert_eq!(s.diagonality, 1.0);
        assert!(s.distance > 0.1);
    }

    #[test]
    fn shifted_steps_warp_away_from_diagonal() {
        let mut early = vec![1.0; 30];
        early[..5].fill(0.0);
        let mut late = vec![0.0; 30];
        late[25..].fill(1.0);
        let s = similarity(&col(&early), &col(&late)).unwrap();
        assert_eq!(s.distance, 0.0);
        assert!(s.diagonality < 0.75, "{s:?}");
    }
}
