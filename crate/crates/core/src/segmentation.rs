//! Window-sliding change-point detection, segment tiling and change-point
//! neighborhoods.
//!
//! For every sample `i` the detector compares the window of `W` samples just
//! before `i` with the `W` samples starting at `i`:
//!
//! ```text
//! d(i) = Σ_channels cost(L ∪ R) − cost(L) − cost(R)
//! ```
//!
//! Local maxima of `d` above the penalty become change points, accepted
//! greedily from the highest down while keeping `min_size` spacing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::traces::IOTrace;

/// Multiplier on the median discrepancy used when no explicit penalty is set.
pub const AUTO_PENALTY_FACTOR: f64 = 50.0;

/// The automatic penalty never drops below this fraction of the highest
/// discrepancy, so slow drifts are not cut next to genuine jumps.
pub const AUTO_PENALTY_PEAK_FRACTION: f64 = 0.01;

/// Window cost model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostModel {
    /// Sum of squared deviations from the window mean (level shifts).
    #[default]
    L2,
    /// Residual sum of squares of a least-squares line (slope changes).
    Linear,
}

impl std::str::FromStr for CostModel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "l2" => Ok(CostModel::L2),
            "linear" => Ok(CostModel::Linear),
            other => Err(format!("unknown cost model `{other}` (expected l2 or linear)")),
        }
    }
}

impl CostModel {
    fn cost(self, xs: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        match self {
            CostModel::L2 => xs.iter().map(|x| (x - mean) * (x - mean)).sum(),
            CostModel::Linear => {
                let kbar = (n - 1.0) / 2.0;
                let (mut sxx, mut skk, mut skx) = (0.0, 0.0, 0.0);
                for (k, x) in xs.iter().enumerate() {
                    let dk = k as f64 - kbar;
                    let dx = x - mean;
                    sxx += dx * dx;
                    skk += dk * dk;
                    skx += dk * dx;
                }
                if skk > 0.0 {
                    (sxx - skx * skx / skk).max(0.0)
                } else {
                    sxx
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub window: usize,
    pub min_size: usize,
    /// `None` selects the automatic penalty.
    pub penalty: Option<f64>,
    pub cost: CostModel,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            window: 20,
            min_size: 20,
            penalty: None,
            cost: CostModel::L2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChangePointSet {
    /// Strictly increasing, 0-based, never the first or last sample.
    pub indices: Vec<usize>,
    /// Discrepancy at each selected index.
    pub discrepancy: Vec<f64>,
    pub window: usize,
    pub min_size: usize,
    /// The penalty actually applied (resolved when automatic).
    pub penalty: f64,
}

impl ChangePointSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Discrepancy curve over all channels of `trace`; zero where either window
/// would leave the trace.
pub fn discrepancy_curve(trace: &IOTrace, window: usize, cost: CostModel) -> Vec<f64> {
    let p = trace.len();
    let mut curve = vec![0.0; p];
    if window == 0 || p < 2 * window {
        return curve;
    }
    for values in &trace.channels {
        for (i, d) in curve.iter_mut().enumerate().take(p - window + 1).skip(window) {
            let left = &values[i - window..i];
            let right = &values[i..i + window];
            let both = &values[i - window..i + window];
            *d += (cost.cost(both) - cost.cost(left) - cost.cost(right)).max(0.0);
        }
    }
    curve
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn detect_change_points(trace: &IOTrace, cfg: &DetectorConfig) -> Result<ChangePointSet> {
    let w = cfg.window;
    if w < 2 {
        return Err(Error::InvalidConfig("change-point window must be at least 2".into()));
    }
    let p = trace.len();
    if p < 2 * w {
        return Err(Error::TraceTooShort { len: p, needed: 2 * w });
    }
    let curve = discrepancy_curve(trace, w, cfg.cost);
    let scored = &curve[w..=p - w];
    let penalty = match cfg.penalty {
        Some(v) => v,
        None => {
            let peak = scored.iter().copied().fold(0.0, f64::max);
            (AUTO_PENALTY_FACTOR * median(scored)).max(AUTO_PENALTY_PEAK_FRACTION * peak)
        }
    };
    let min_size = cfg.min_size.max(1);

    let mut candidates: Vec<usize> = (w + 1..p - w)
        .filter(|&i| {
            curve[i] > curve[i - 1]
                && curve[i] >= curve[i + 1]
                && curve[i] > penalty
                && i >= min_size
                && p - i >= min_size
        })
        .collect();
    candidates.sort_by(|&a, &b| curve[b].total_cmp(&curve[a]).then(a.cmp(&b)));

    let mut accepted: Vec<usize> = Vec::new();
    for i in candidates {
        if accepted.iter().all(|&j| i.abs_diff(j) >= min_size) {
            accepted.push(i);
        }
    }
    accepted.sort_unstable();
    Ok(ChangePointSet {
        discrepancy: accepted.iter().map(|&i| curve[i]).collect(),
        indices: accepted,
        window: w,
        min_size,
        penalty,
    })
}

/// Contiguous, inclusive sample range of a trace.
#[derive(Clone, Copy, Debug)]
pub struct Segment<'a> {
    pub trace: &'a IOTrace,
    pub start: usize,
    pub end: usize,
}

impl<'a> Segment<'a> {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Samples as rows over every channel (time excluded).
    pub fn rows(&self) -> Vec<Vec<f64>> {
        let all: Vec<usize> = (0..self.trace.channels.len()).collect();
        self.trace.rows(self.start, self.end, &all)
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 * self.trace.sampling_period
    }
}

/// `k` change points produce `k + 1` segments tiling the trace.
pub fn segment<'a>(trace: &'a IOTrace, cps: &ChangePointSet) -> Vec<Segment<'a>> {
    let mut bounds = Vec::with_capacity(cps.len() + 2);
    bounds.push(0);
    bounds.extend(cps.indices.iter().copied());
    bounds.push(trace.len());
    bounds
        .windows(2)
        .map(|b| Segment {
            trace,
            start: b[0],
            end: b[1] - 1,
        })
        .collect()
}

/// Fixed-width window of `2v + 1` samples around a change point; indices that
/// fall outside the trace replicate the nearest edge sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Neighborhood {
    pub cp: usize,
    pub half_width: usize,
    pub times: Vec<f64>,
    /// One window per schema channel.
    pub channels: Vec<Vec<f64>>,
}

impl Neighborhood {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

pub fn neighborhood(trace: &IOTrace, cp: usize, v: usize) -> Neighborhood {
    let last = trace.len() - 1;
    let idx: Vec<usize> = (0..=2 * v).map(|k| (cp + k).saturating_sub(v).min(last)).collect();
    Neighborhood {
        cp,
        half_width: v,
        times: idx.iter().map(|&i| trace.times[i]).collect(),
        channels: trace
            .channels
            .iter()
            .map(|c| idx.iter().map(|&i| c[i]).collect())
            .collect(),
    }
}
