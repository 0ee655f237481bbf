//! The online learning loop: each trace is segmented once and its segments
//! are attached, in temporal order, to existing states or to new ones.
//!
//! A segment joins the candidate state only when the candidate's mean
//! normalized DTW distance is below `dist_threshold` *and* its mean
//! diagonality is above `diag_threshold`. Candidates are scanned in ascending
//! id order and replace the incumbent only when they are better on both
//! criteria at once.

use serde::{Deserialize, Serialize};

use crate::dtw::{segment_state_similarity, SimIndex};
use crate::error::{Error, Result};
use crate::jumps::update_confidence;
use crate::segmentation::{
    detect_change_points, neighborhood, segment, CostModel, DetectorConfig, Neighborhood, Segment,
};
use crate::traces::{ChannelSchema, IOTrace, NormalizationParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub dist_threshold: f64,
    pub diag_threshold: f64,
    /// Change-point window `W`, in samples.
    pub window: usize,
    pub min_size: usize,
    /// Neighborhood half-width `v`, in samples.
    pub vicinity: usize,
    /// Representatives kept per state and per transition.
    pub max_segments: usize,
    pub degree: u32,
    pub beta: f64,
    pub time_var_threshold: f64,
    pub ridge: f64,
    /// `None` means automatic.
    pub penalty: Option<f64>,
    pub cost: CostModel,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            dist_threshold: 0.1,
            diag_threshold: 0.8,
            window: 20,
            min_size: 20,
            vicinity: 10,
            max_segments: 8,
            degree: 2,
            beta: 5.0,
            time_var_threshold: 1e-3,
            ridge: 1e-8,
            penalty: None,
            cost: CostModel::L2,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(self.dist_threshold > 0.0) {
            return bad("distance threshold must be positive");
        }
        if !(self.diag_threshold > 0.0 && self.diag_threshold <= 1.0) {
            return bad("diagonality threshold must lie in (0, 1]");
        }
        if self.window < 2 {
            return bad("window must be at least 2");
        }
        if self.min_size == 0 || self.vicinity == 0 || self.max_segments == 0 || self.degree == 0 {
            return bad("min size, vicinity, max segments and degree must be positive");
        }
        if !(self.beta > 0.0) || !(self.time_var_threshold > 0.0) || !(self.ridge >= 0.0) {
            return bad("beta and time-variance threshold must be positive, ridge non-negative");
        }
        if matches!(self.penalty, Some(p) if !(p >= 0.0)) {
            return bad("penalty must be non-negative");
        }
        Ok(())
    }

    pub fn detector(&self) -> DetectorConfig {
        DetectorConfig {
            window: self.window,
            min_size: self.min_size,
            penalty: self.penalty,
            cost: self.cost,
        }
    }
}

/// A state segment as kept by the store: normalized samples over every
/// channel plus the step of the mode-local clock in normalized time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredSegment {
    pub rows: Vec<Vec<f64>>,
    pub clock_step: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    pub id: usize,
    /// Most recent representatives, oldest first.
    pub segments: Vec<StoredSegment>,
    /// Dwell time in seconds of every segment ever attached.
    pub dwell: Vec<f64>,
    pub visits: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    /// `None` marks an initial transition.
    pub source: Option<usize>,
    pub target: usize,
    pub neighborhoods: Vec<Neighborhood>,
    /// One value per system input, in canonical input order.
    pub confidence: Vec<f64>,
    /// Running sums of per-input distances, one entry per confidence update.
    pub distance_sum: Vec<f64>,
    pub updates: usize,
    pub support: usize,
}

impl TransitionRecord {
    fn new(source: Option<usize>, target: usize, inputs: usize) -> Self {
        TransitionRecord {
            source,
            target,
            neighborhoods: Vec::new(),
            confidence: vec![1.0; inputs],
            distance_sum: vec![0.0; inputs],
            updates: 0,
            support: 0,
        }
    }
}

/// Everything the learner keeps between traces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelStore {
    pub config: LearnerConfig,
    pub schema: Option<ChannelSchema>,
    pub normalization: Option<NormalizationParams>,
    pub states: Vec<StateRecord>,
    /// Sorted by `(source, target)`.
    pub transitions: Vec<TransitionRecord>,
    pub traces_processed: usize,
}

/// What happened to one trace.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TraceReport {
    pub change_points: Vec<usize>,
    /// State id per segment, in temporal order.
    pub assignments: Vec<usize>,
    pub created: Vec<usize>,
}

impl ModelStore {
    pub fn new(config: LearnerConfig) -> Result<Self> {
        config.validate()?;
        Ok(ModelStore {
            config,
            schema: None,
            normalization: None,
            states: Vec::new(),
            transitions: Vec::new(),
            traces_processed: 0,
        })
    }

    pub fn transition(&self, source: Option<usize>, target: usize) -> Option<&TransitionRecord> {
        self.transitions
            .binary_search_by(|t| (t.source, t.target).cmp(&(source, target)))
            .ok()
            .map(|i| &self.transitions[i])
    }

    fn transition_mut(&mut self, source: Option<usize>, target: usize, inputs: usize) -> &mut TransitionRecord {
        let pos = self
            .transitions
            .binary_search_by(|t| (t.source, t.target).cmp(&(source, target)));
        let i = match pos {
            Ok(i) => i,
            Err(i) => {
                self.transitions
                    .insert(i, TransitionRecord::new(source, target, inputs));
                i
            }
        };
        &mut self.transitions[i]
    }

    pub fn outgoing(&self, source: usize) -> impl Iterator<Item = &TransitionRecord> {
        self.transitions.iter().filter(move |t| t.source == Some(source))
    }

    /// Normalized-time origin and unit, from the first trace.
    pub fn time_frame(&self) -> (f64, f64) {
        match &self.normalization {
            Some(p) => (p.time_span.0, p.time_unit()),
            None => (0.0, 1.0),
        }
    }

    /// Normalizes, segments and absorbs one raw trace. The first trace fixes
    /// the schema and the normalization parameters.
    pub fn learn_trace(&mut self, raw: &IOTrace) -> Result<TraceReport> {
        match &self.schema {
            None => {
                self.schema = Some(raw.schema.clone());
                self.normalization = Some(NormalizationParams::fit(raw));
            }
            Some(s) if *s != raw.schema => {
                return Err(Error::SchemaMismatch(format!(
                    "trace header {:?} differs from model header {:?}",
                    raw.schema.header(),
                    s.header()
                )));
            }
            Some(_) => {}
        }
        let params = self.normalization.as_ref().expect("set with schema");
        let trace = params.apply(raw)?;
        let cps = detect_change_points(&trace, &self.config.detector())?;
        let segments = segment(&trace, &cps);
        let mut report = self.process_trace(&trace, &segments)?;
        report.change_points = cps.indices;
        Ok(report)
    }

    /// Attaches the segments of one normalized trace.
    pub fn process_trace(&mut self, trace: &IOTrace, segments: &[Segment<'_>]) -> Result<TraceReport> {
        if let Some(s) = &self.schema {
            if *s != trace.schema {
                return Err(Error::SchemaMismatch("trace schema differs from model schema".into()));
            }
        } else {
            self.schema = Some(trace.schema.clone());
        }
        let inputs = trace.schema.input_count();
        let (origin, unit) = self.time_frame();
        let clock_step = trace.sampling_period / unit;
        let cfg = self.config.clone();

        let mut report = TraceReport::default();
        let mut current: Option<usize> = None;
        for seg in segments {
            let rows = seg.rows();
            let nb = neighborhood(trace, seg.start, cfg.vicinity);

            let chosen = match self.find_candidate_state(&rows)? {
                Some((id, sim)) if sim.distance < cfg.dist_threshold && sim.diagonality > cfg.diag_threshold => id,
                _ => {
                    let id = self.states.len();
                    self.states.push(StateRecord {
                        id,
                        segments: Vec::new(),
                        dwell: Vec::new(),
                        visits: 0,
                    });
                    report.created.push(id);
                    id
                }
            };

            let state = &mut self.states[chosen];
            state.segments.push(StoredSegment { rows, clock_step });
            if state.segments.len() > cfg.max_segments {
                state.segments.remove(0);
            }
            state.dwell.push(seg.duration());
            state.visits += 1;

            let tr = self.transition_mut(current, chosen, inputs);
            update_confidence(tr, nb, cfg.beta, &trace.schema, origin, unit)?;
            if tr.neighborhoods.len() > cfg.max_segments {
                tr.neighborhoods.remove(0);
            }
            tr.support += 1;

            report.assignments.push(chosen);
            current = Some(chosen);
        }
        self.traces_processed += 1;
        Ok(report)
    }

    /// Best state for a segment under the conjunctive dominance rule, or
    /// `None` when the store is empty or no state has positive diagonality.
    pub fn find_candidate_state(&self, rows: &[Vec<f64>]) -> Result<Option<(usize, SimIndex)>> {
        let sims = self
            .states
            .iter()
            .map(|s| segment_state_similarity(rows, s).map(|sim| (s.id, sim)))
            .collect::<Result<Vec<_>>>()?;
        Ok(select_candidate(sims))
    }
}

/// Scans `(id, similarity)` pairs in order, starting from `(+inf, 0)`.
pub fn select_candidate(sims: impl IntoIterator<Item = (usize, SimIndex)>) -> Option<(usize, SimIndex)> {
    let mut best: Option<(usize, SimIndex)> = None;
    let (mut dist, mut diag) = (f64::INFINITY, 0.0);
    for (id, sim) in sims {
        if sim.distance < dist && sim.diagonality > diag {
            dist = sim.distance;
            diag = sim.diagonality;
            best = Some((id, sim));
        }
    }
    best
}
