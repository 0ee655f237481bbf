//! The learned hybrid automaton: finalization from a model store,
//! simulation, cost, versioned JSON and DOT export.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::flows::{evaluate_flow, fit_flow, PolynomialFlow};
use crate::jumps::{build_jump_labels, Clause, IndistinguishableTransitions, JumpCondition, CLAUSE_EPSILON};
use crate::synthesis::ModelStore;
use crate::traces::{ChannelSchema, IOTrace, NormalizationParams};

pub const MODEL_VERSION: u64 = 1;

/// Dwell statistics in seconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DwellStats {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
}

impl DwellStats {
    fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = if n > 0 { xs.iter().sum::<f64>() / n as f64 } else { 0.0 };
        let variance = if n > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        DwellStats {
            count: n,
            mean,
            variance,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub id: usize,
    pub flow: PolynomialFlow,
    pub dwell: DwellStats,
    /// Set when the regression failed and the flow is the output mean.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Switch {
    /// `None` for initial switches.
    pub src: Option<usize>,
    pub dst: usize,
    pub clauses: Vec<Clause>,
    pub time: Option<f64>,
    pub support: usize,
    pub confidence: Vec<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub ambiguous: bool,
}

impl Switch {
    pub fn jump(&self) -> JumpCondition {
        JumpCondition {
            clauses: self.clauses.clone(),
            time: self.time,
            support: self.support,
            ambiguous: self.ambiguous,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HybridAutomaton {
    pub version: u64,
    pub schema: ChannelSchema,
    pub normalization: NormalizationParams,
    pub modes: Vec<Mode>,
    pub switches: Vec<Switch>,
    /// Learner state for resumed sessions; not needed for simulation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learner: Option<ModelStore>,
}

pub fn finalize(store: &ModelStore) -> Result<(HybridAutomaton, Vec<IndistinguishableTransitions>)> {
    if store.states.is_empty() {
        return Err(Error::EmptyModel);
    }
    let schema = store.schema.clone().ok_or(Error::EmptyModel)?;
    let normalization = store.normalization.clone().ok_or(Error::EmptyModel)?;
    let cfg = &store.config;

    let mut modes = Vec::with_capacity(store.states.len());
    for st in &store.states {
        let (flow, fit_error) = match fit_flow(st, &schema, cfg.degree, cfg.ridge) {
            Ok(f) => (f, None),
            Err(e @ (Error::Underdetermined { .. } | Error::DegenerateDesign { .. })) => {
                let outs = schema.output_indices();
                let mut sums = vec![0.0; outs.len()];
                let mut n = 0usize;
                for row in st.segments.iter().flat_map(|s| &s.rows) {
                    for (s, &i) in sums.iter_mut().zip(&outs) {
                        *s += row[i];
                    }
                    n += 1;
                }
                let means: Vec<(String, f64)> = schema
                    .output_names()
                    .into_iter()
                    .zip(sums)
                    .map(|(name, s)| (name, s / n.max(1) as f64))
                    .collect();
                (
                    PolynomialFlow::constant(schema.input_names(), &means),
                    Some(e.to_string()),
                )
            }
            Err(e) => return Err(e),
        };
        modes.push(Mode {
            id: st.id,
            flow,
            dwell: DwellStats::of(&st.dwell),
            fit_error,
        });
    }

    let labels = build_jump_labels(store)?;
    let switches = store
        .transitions
        .iter()
        .zip(labels.labels)
        .map(|(tr, j)| Switch {
            src: tr.source,
            dst: tr.target,
            clauses: j.clauses,
            time: j.time,
            support: tr.support,
            confidence: tr.confidence.clone(),
            ambiguous: j.ambiguous,
        })
        .collect();

    Ok((
        HybridAutomaton {
            version: MODEL_VERSION,
            schema,
            normalization,
            modes,
            switches,
            learner: None,
        },
        labels.warnings,
    ))
}

/// Per-sample mode and normalized output predictions.
#[derive(Clone, Debug, PartialEq)]
pub struct Simulation {
    pub modes: Vec<usize>,
    /// `outputs[k][t]`: output `k` at sample `t`, normalized.
    pub outputs: Vec<Vec<f64>>,
}

impl HybridAutomaton {
    pub fn initial_modes(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self
            .switches
            .iter()
            .filter(|s| s.src.is_none())
            .map(|s| s.dst)
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Highest-support initial mode, lowest id on ties.
    pub fn initial_mode(&self) -> Option<usize> {
        self.switches
            .iter()
            .filter(|s| s.src.is_none())
            .min_by(|a, b| b.support.cmp(&a.support).then(a.dst.cmp(&b.dst)))
            .map(|s| s.dst)
    }

    fn mode(&self, id: usize) -> Result<&Mode> {
        self.modes
            .iter()
            .find(|m| m.id == id)
            .ok_or_else(|| Error::MalformedDocument(format!("switch refers to unknown mode {id}")))
    }

    /// Normalized input columns of `trace` in this automaton's canonical
    /// input order, excluding the mode clock.
    fn input_columns(&self, trace: &IOTrace) -> Result<Vec<Vec<f64>>> {
        self.schema
            .input_indices()
            .into_iter()
            .map(|i| {
                let name = &self.schema.channels[i].name;
                self.normalized_channel(trace, name)
            })
            .collect()
    }

    fn normalized_channel(&self, trace: &IOTrace, name: &str) -> Result<Vec<f64>> {
        let values = trace
            .channel(name)
            .ok_or_else(|| Error::SchemaMismatch(format!("trace lacks channel `{name}`")))?;
        let r = self
            .normalization
            .range(name)
            .ok_or_else(|| Error::SchemaMismatch(format!("no normalization for `{name}`")))?;
        let width = r.max - r.min;
        Ok(values
            .iter()
            .map(|v| if width > 0.0 { (v - r.min) / width } else { 0.0 })
            .collect())
    }

    /// Runs the automaton over the inputs of a raw trace. Clause channels are
    /// read from the trace in normalized units; the mode clock resets on
    /// every switch.
    pub fn simulate(&self, trace: &IOTrace) -> Result<Simulation> {
        let mut mode = self.initial_mode().ok_or(Error::EmptyModel)?;
        let inputs = self.input_columns(trace)?;
        let clause_cols: Vec<Vec<Vec<f64>>> = self
            .switches
            .iter()
            .map(|s| {
                s.clauses
                    .iter()
                    .map(|c| self.normalized_channel(trace, &c.channel))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        let step = trace.sampling_period / self.normalization.time_unit();
        let p = trace.len();
        let q = self.schema.output_indices().len();
        let mut out = Simulation {
            modes: Vec::with_capacity(p),
            outputs: vec![Vec::with_capacity(p); q],
        };
        let mut entry = 0usize;
        let mut x = Vec::with_capacity(inputs.len() + 1);
        for k in 0..p {
            if k > 0 {
                let elapsed = (k - entry) as f64 * step;
                let mut fired: Option<&Switch> = None;
                for (s, cols) in self.switches.iter().zip(&clause_cols) {
                    if s.src != Some(mode) {
                        continue;
                    }
                    // At least one clause must describe an actual change;
                    // clauses with before ~ after only qualify an event.
                    let by_event = s.clauses.iter().any(|c| (c.after - c.before).abs() >= CLAUSE_EPSILON)
                        && s.clauses.iter().zip(cols).all(|(c, col)| {
                            (col[k - 1] - c.before).abs() < CLAUSE_EPSILON && (col[k] - c.after).abs() < CLAUSE_EPSILON
                        });
                    let by_time = s.time.is_some_and(|t| elapsed >= t - 0.5 * step);
                    if by_event || by_time {
                        let better = match fired {
                            None => true,
                            Some(f) => s.support > f.support || (s.support == f.support && s.dst < f.dst),
                        };
                        if better {
                            fired = Some(s);
                        }
                    }
                }
                if let Some(s) = fired {
                    mode = s.dst;
                    entry = k;
                }
            }
            x.clear();
            if self.schema.time_is_input {
                x.push((k - entry) as f64 * step);
            }
            x.extend(inputs.iter().map(|c| c[k]));
            let y = evaluate_flow(&self.mode(mode)?.flow, &x)?;
            for (col, v) in out.outputs.iter_mut().zip(y) {
                col.push(v);
            }
            out.modes.push(mode);
        }
        Ok(out)
    }

    /// Simulated trace in physical units: inputs copied, outputs predicted.
    pub fn simulate_trace(&self, trace: &IOTrace) -> Result<IOTrace> {
        let sim = self.simulate(trace)?;
        let mut channels = Vec::with_capacity(self.schema.channels.len());
        let mut outs = sim.outputs.into_iter();
        for ch in &self.schema.channels {
            let values = match ch.role {
                crate::traces::Role::Input => trace
                    .channel(&ch.name)
                    .ok_or_else(|| Error::SchemaMismatch(format!("trace lacks channel `{}`", ch.name)))?
                    .to_vec(),
                crate::traces::Role::Output => {
                    let r = self
                        .normalization
                        .range(&ch.name)
                        .ok_or_else(|| Error::SchemaMismatch(format!("no normalization for `{}`", ch.name)))?;
                    let width = r.max - r.min;
                    outs.next()
                        .expect("one prediction per output")
                        .into_iter()
                        .map(|v| if width > 0.0 { r.min + v * width } else { r.min })
                        .collect()
                }
            };
            channels.push(values);
        }
        IOTrace::new(self.schema.clone(), trace.times.clone(), channels)
    }

    /// RMSE over outputs and samples of one trace, in normalized units.
    pub fn trace_error(&self, trace: &IOTrace) -> Result<f64> {
        let sim = self.simulate(trace)?;
        let mut sse = 0.0;
        let mut n = 0usize;
        for (pred, ch) in sim.outputs.iter().zip(self.schema.output_indices()) {
            let actual = self.normalized_channel(trace, &self.schema.channels[ch].name)?;
            sse += pred.iter().zip(&actual).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            n += pred.len();
        }
        Ok((sse / n.max(1) as f64).sqrt())
    }

    /// Mean per-trace RMSE.
    pub fn cost(&self, traces: &[IOTrace]) -> Result<f64> {
        if traces.is_empty() {
            return Err(Error::EmptyTestSet);
        }
        let mut total = 0.0;
        for t in traces {
            total += self.trace_error(t)?;
        }
        Ok(total / traces.len() as f64)
    }

    pub fn to_json(&self) -> Result<String> {
        to_canonical_json(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let h: HybridAutomaton = parse_versioned(text)?;
        for s in &h.switches {
            h.mode(s.dst)?;
            if let Some(src) = s.src {
                h.mode(src)?;
            }
        }
        Ok(h)
    }

    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph automaton {\n  rankdir=LR;\n  node [shape=box];\n");
        for m in &self.modes {
            let label = format!(
                "mode {}\\n{}",
                m.id,
                dot_escape(&m.flow.to_string()).replace('\n', "\\n")
            );
            s.push_str(&format!("  m{} [label=\"{}\"];\n", m.id, label));
        }
        for id in self.initial_modes() {
            s.push_str(&format!("  init{id} [shape=point, label=\"\"];\n"));
            s.push_str(&format!("  init{id} -> m{id};\n"));
        }
        for sw in &self.switches {
            if let Some(src) = sw.src {
                s.push_str(&format!(
                    "  m{} -> m{} [label=\"{}\"];\n",
                    src,
                    sw.dst,
                    dot_escape(&sw.jump().to_string())
                ));
            }
        }
        s.push_str("}\n");
        s
    }
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Rebuilds every object with keys inserted in sorted order, so output is
/// sorted whether or not the map type preserves insertion order.
fn canonical(v: Value) -> Value {
    match v {
        Value::Object(map) => {
            let mut entries: Vec<(String, Value)> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            Value::Object(entries.into_iter().map(|(k, v)| (k, canonical(v))).collect())
        }
        Value::Array(xs) => Value::Array(xs.into_iter().map(canonical).collect()),
        other => other,
    }
}

/// Pretty JSON with sorted keys and a trailing newline.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value).map_err(|e| Error::MalformedDocument(e.to_string()))?;
    let mut s = serde_json::to_string_pretty(&canonical(v)).map_err(|e| Error::MalformedDocument(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Parses a document carrying a top-level `version` equal to
/// [`MODEL_VERSION`].
pub fn parse_versioned<T: DeserializeOwned>(text: &str) -> Result<T> {
    let v: Value = serde_json::from_str(text).map_err(|e| Error::MalformedDocument(e.to_string()))?;
    let version = v
        .get("version")
        .ok_or_else(|| Error::MalformedDocument("missing `version`".into()))?;
    let found = version
        .as_u64()
        .ok_or_else(|| Error::MalformedDocument("`version` is not an unsigned integer".into()))?;
    if found != MODEL_VERSION {
        return Err(Error::SchemaVersionMismatch {
            found,
            expected: MODEL_VERSION,
        });
    }
    serde_json::from_value(v).map_err(|e| Error::MalformedDocument(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flows::{Polynomial, Term};
    use crate::traces::Channel;

    /// Two modes on one input `u` with output `y = u` in mode 0 and
    /// `y = 1 - u` in mode 1; switch 0->1 when `u` jumps 0 -> 1, and back by
    /// time after 0.2 normalized.
    fn toy() -> HybridAutomaton {
        let schema = ChannelSchema::new("t", false, vec![Channel::input("u"), Channel::output("y")]).unwrap();
        let lin = |c0: f64, c1: f64| PolynomialFlow {
            degree: 1,
            inputs: vec!["u".into()],
            outputs: vec![crate::flows::FlowOutput {
                name: "y".into(),
                poly: Polynomial {
                    terms: vec![
                        Term {
                            exponents: vec![0],
                            coef: c0,
                            factor: 1,
                        },
                        Term {
                            exponents: vec![1],
                            coef: c1,
                            factor: 1,
                        },
                    ],
                },
                rmse: 0.0,
            }],
        };
        let dwell = DwellStats {
            count: 1,
            mean: 1.0,
            variance: 0.0,
        };
        HybridAutomaton {
            version: MODEL_VERSION,
            schema,
            normalization: NormalizationParams {
                channels: vec![
                    crate::traces::ChannelRange {
                        name: "u".into(),
                        min: 0.0,
                        max: 1.0,
                    },
                    crate::traces::ChannelRange {
                        name: "y".into(),
                        min: 0.0,
                        max: 1.0,
                    },
                ],
                time_span: (0.0, 1.0),
            },
            modes: vec![
                Mode {
                    id: 0,
                    flow: lin(0.0, 1.0),
                    dwell: dwell.clone(),
                    fit_error: None,
                },
                Mode {
                    id: 1,
                    flow: lin(1.0, -1.0),
                    dwell,
                    fit_error: None,
                },
            ],
            switches: vec![
                Switch {
                    src: None,
                    dst: 0,
                    clauses: vec![],
                    time: None,
                    support: 1,
                    confidence: vec![1.0],
                    ambiguous: false,
                },
                Switch {
                    src: Some(0),
                    dst: 1,
                    clauses: vec![Clause {
                        channel: "u".into(),
                        before: 0.0,
                        after: 1.0,
                    }],
                    time: None,
                    support: 3,
                    confidence: vec![1.0],
                    ambiguous: false,
                },
                Switch {
                    src: Some(1),
                    dst: 0,
                    clauses: vec![],
                    time: Some(0.2),
                    support: 3,
                    confidence: vec![0.1],
                    ambiguous: false,
                },
            ],
            learner: None,
        }
    }

    fn input_trace(u: Vec<f64>) -> IOTrace {
        let n = u.len();
        let schema = ChannelSchema::new("t", false, vec![Channel::input("u"), Channel::output("y")]).unwrap();
        IOTrace::new(schema, (0..n).map(|i| i as f64 * 0.1).collect(), vec![u, vec![0.0; n]]).unwrap()
    }

    #[test]
    fn simulation_follows_event_and_time() {
        let h = toy();
        let mut u = vec![0.0; 10];
        u[3] = 1.0;
        u[4] = 1.0;
        let sim = h.simulate(&input_trace(u)).unwrap();
        // Event at sample 3, time switch back after 0.2 / 0.1 = 2 samples.
        assert_eq!(sim.modes, vec![0, 0, 0, 1, 1, 0, 0, 0, 0, 0]);
        assert_eq!(sim.outputs[0][3], 0.0);
        assert_eq!(sim.outputs[0][2], 0.0);
    }

    #[test]
    fn json_fixpoint_and_version() {
        let h = toy();
        let a = h.to_json().unwrap();
        let back = HybridAutomaton::from_json(&a).unwrap();
        assert_eq!(back, h);
        assert_eq!(back.to_json().unwrap(), a);
        let bumped = a.replacen("\"version\": 1", "\"version\": 2", 1);
        assert!(matches!(
            HybridAutomaton::from_json(&bumped),
            Err(Error::SchemaVersionMismatch { found: 2, expected: 1 })
        ));
        assert!(matches!(
            HybridAutomaton::from_json("{}"),
            Err(Error::MalformedDocument(_))
        ));
    }

    #[test]
    fn dot_has_entry_arrow() {
        let dot = toy().to_dot();
        assert!(dot.contains("init0 -> m0;"));
        assert!(dot.contains("m0 -> m1 [label=\"['u:0.0->1.0'](3)\"];"));
        assert!(dot.contains("['time:0.2'](3)"));
    }

    #[test]
    fn cost_needs_traces() {
        assert!(matches!(toy().cost(&[]), Err(Error::EmptyTestSet)));
        let err = toy().cost(&[input_trace(vec![0.0; 4])]).unwrap();
        assert_eq!(err, 0.0);
    }
}
