//! Jump conditions: per-input confidence of transition neighborhoods, time
//! conditions mined from dwell times, and the resulting guard labels.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segmentation::Neighborhood;
use crate::synthesis::{ModelStore, StateRecord, TransitionRecord};
use crate::traces::ChannelSchema;

/// Tolerance for clause values, in normalized units.
pub const CLAUSE_EPSILON: f64 = 0.05;

/// Input windows of a neighborhood in canonical input order. A time input is
/// expressed in normalized time so that it is comparable with the others.
pub fn input_windows(nb: &Neighborhood, schema: &ChannelSchema, origin: f64, unit: f64) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(schema.input_count());
    if schema.time_is_input {
        out.push(nb.times.iter().map(|t| (t - origin) / unit).collect());
    }
    for i in schema.input_indices() {
        out.push(nb.channels[i].clone());
    }
    out
}

fn window_distance(a: &[f64], b: &[f64]) -> f64 {
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    sq.sqrt() / a.len() as f64
}

/// Folds a new neighborhood into the transition's per-input confidence and
/// stores it. The first neighborhood leaves every confidence at 1.
pub fn update_confidence(
    tr: &mut TransitionRecord,
    nb: Neighborhood,
    beta: f64,
    schema: &ChannelSchema,
    origin: f64,
    unit: f64,
) -> Result<()> {
    if let Some(first) = tr.neighborhoods.first() {
        if first.len() != nb.len() {
            return Err(Error::LengthMismatch {
                expected: first.len(),
                got: nb.len(),
            });
        }
        let new = input_windows(&nb, schema, origin, unit);
        let mut d = vec![0.0; new.len()];
        for stored in &tr.neighborhoods {
            let old = input_windows(stored, schema, origin, unit);
            for (k, (a, b)) in new.iter().zip(&old).enumerate() {
                d[k] += window_distance(a, b);
            }
        }
        let count = tr.neighborhoods.len() as f64;
        tr.updates += 1;
        for (k, dk) in d.into_iter().enumerate() {
            tr.distance_sum[k] += dk / count;
            tr.confidence[k] = (-beta * tr.distance_sum[k] / tr.updates as f64).exp();
        }
    }
    tr.neighborhoods.push(nb);
    Ok(())
}

/// Mean dwell in normalized time when the dwell durations are consistent
/// enough (sample variance below `threshold`); needs at least two visits.
pub fn mine_time_condition(state: &StateRecord, unit: f64, threshold: f64) -> Option<f64> {
    let n = state.dwell.len();
    if n < 2 {
        return None;
    }
    let xs: Vec<f64> = state.dwell.iter().map(|d| d / unit).collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var < threshold).then_some(mean)
}

/// `channel` moves from `before` to `after` (normalized values).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Clause {
    pub channel: String,
    pub before: f64,
    pub after: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct JumpCondition {
    pub clauses: Vec<Clause>,
    /// Dwell in normalized time after which the switch fires.
    pub time: Option<f64>,
    pub support: usize,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub ambiguous: bool,
}

/// Three decimals, at least one.
pub fn fmt_value(v: f64) -> String {
    let r = (v * 1000.0).round() / 1000.0;
    let r = if r == 0.0 { 0.0 } else { r };
    let s = format!("{r}");
    if s.contains('.') || s.contains('e') || !r.is_finite() {
        s
    } else {
        format!("{s}.0")
    }
}

impl fmt::Display for JumpCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = self
            .clauses
            .iter()
            .map(|c| format!("'{}:{}->{}'", c.channel, fmt_value(c.before), fmt_value(c.after)))
            .collect();
        if let Some(t) = self.time {
            parts.push(format!("'time:{}'", fmt_value(t)));
        }
        let mut s = String::from("[");
        s.push_str(&parts.join("&"));
        write!(s, "]({})", self.support)?;
        f.write_str(&s)
    }
}

/// Input indices sorted by decreasing confidence, ties on the lower index.
/// The time input never becomes an event clause.
fn ranked_event_inputs(tr: &TransitionRecord, schema: &ChannelSchema) -> Vec<usize> {
    let first = usize::from(schema.time_is_input);
    let mut idx: Vec<usize> = (first..tr.confidence.len()).collect();
    idx.sort_by(|&a, &b| tr.confidence[b].total_cmp(&tr.confidence[a]).then(a.cmp(&b)));
    idx
}

fn clause_for(tr: &TransitionRecord, schema: &ChannelSchema, input: usize) -> Clause {
    let offset = usize::from(schema.time_is_input);
    let ch = schema.input_indices()[input - offset];
    let v = tr.neighborhoods.first().map_or(1, |n| n.half_width.max(1));
    let (mut before, mut after) = (0.0, 0.0);
    for nb in &tr.neighborhoods {
        let w = &nb.channels[ch];
        let head = &w[..v.min(w.len())];
        let tail = &w[w.len() - v.min(w.len())..];
        before += head.iter().sum::<f64>() / head.len() as f64;
        after += tail.iter().sum::<f64>() / tail.len() as f64;
    }
    let n = tr.neighborhoods.len().max(1) as f64;
    Clause {
        channel: schema.channels[ch].name.clone(),
        before: before / n,
        after: after / n,
    }
}

/// Two labels may fire together when they test a common channel and agree on
/// every common channel within `CLAUSE_EPSILON`.
fn overlapping(a: &JumpCondition, b: &JumpCondition) -> bool {
    let mut common = false;
    for ca in &a.clauses {
        if let Some(cb) = b.clauses.iter().find(|c| c.channel == ca.channel) {
            common = true;
            if (ca.before - cb.before).abs() >= CLAUSE_EPSILON || (ca.after - cb.after).abs() >= CLAUSE_EPSILON {
                return false;
            }
        }
    }
    common
}

/// Outgoing transitions of one state that could not be told apart.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndistinguishableTransitions {
    pub source: usize,
    pub targets: Vec<usize>,
}

impl fmt::Display for IndistinguishableTransitions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "transitions from state {} to {:?} are indistinguishable",
            self.source, self.targets
        )
    }
}

#[derive(Clone, Debug, Default)]
pub struct JumpLabels {
    /// Aligned with `ModelStore::transitions`.
    pub labels: Vec<JumpCondition>,
    pub warnings: Vec<IndistinguishableTransitions>,
}

pub fn build_jump_labels(store: &ModelStore) -> Result<JumpLabels> {
    let schema = store.schema.as_ref().ok_or(Error::EmptyModel)?;
    let (_, unit) = store.time_frame();
    let cfg = &store.config;

    let mut ranks = Vec::with_capacity(store.transitions.len());
    let mut labels = Vec::with_capacity(store.transitions.len());
    for tr in &store.transitions {
        let rank = ranked_event_inputs(tr, schema);
        let clauses = rank.first().map(|&k| clause_for(tr, schema, k)).into_iter().collect();
        let time = tr
            .source
            .and_then(|s| mine_time_condition(&store.states[s], unit, cfg.time_var_threshold));
        labels.push(JumpCondition {
            clauses,
            time,
            support: tr.support,
            ambiguous: false,
        });
        ranks.push(rank);
    }

    let mut warnings = Vec::new();
    for state in &store.states {
        let out: Vec<usize> = (0..store.transitions.len())
            .filter(|&i| store.transitions[i].source == Some(state.id))
            .collect();
        loop {
            let mut involved = Vec::new();
            for (x, &a) in out.iter().enumerate() {
                for &b in &out[x + 1..] {
                    if overlapping(&labels[a], &labels[b]) && !time_separates(&labels[a], &labels[b]) {
                        involved.push(a);
                        involved.push(b);
                    }
                }
            }
            involved.sort_unstable();
            involved.dedup();
            if involved.is_empty() {
                break;
            }
            let mut grew = false;
            for &i in &involved {
                let n = labels[i].clauses.len();
                if let Some(&k) = ranks[i].get(n) {
                    let c = clause_for(&store.transitions[i], schema, k);
                    labels[i].clauses.push(c);
                    grew = true;
                }
            }
            if !grew {
                for &i in &involved {
                    labels[i].ambiguous = true;
                }
                warnings.push(IndistinguishableTransitions {
                    source: state.id,
                    targets: involved.iter().map(|&i| store.transitions[i].target).collect(),
                });
                break;
            }
        }
    }
    Ok(JumpLabels { labels, warnings })
}

fn time_separates(a: &JumpCondition, b: &JumpCondition) -> bool {
    match (a.time, b.time) {
        (Some(x), Some(y)) => (x - y).abs() >= CLAUSE_EPSILON,
        _ => false,
    }
}
