//! Synthetic benchmark systems with known ground truth.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::traces::{Channel, ChannelSchema, IOTrace};

fn trace_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut base = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..index {
        base.random::<u64>();
    }
    ChaCha8Rng::seed_from_u64(base.random::<u64>())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThermostatConfig {
    pub period: f64,
    /// Trace length is drawn uniformly from this range, in seconds, and then
    /// cut back to the last switch.
    pub duration: (f64, f64),
}

impl Default for ThermostatConfig {
    fn default() -> Self {
        ThermostatConfig {
            period: 0.01,
            duration: (8.0, 12.0),
        }
    }
}

/// Room temperature under a bang-bang heater: `x' = -0.1 x` while off,
/// `x' = 5 - 0.1 x` while on; on at `x <= 19`, off at `x >= 21`. Every trace
/// starts at 20 degrees with the heater off. Time is the only input.
pub fn gen_thermostat(n: usize, seed: u64) -> Vec<IOTrace> {
    gen_thermostat_with(n, seed, &ThermostatConfig::default())
}

pub fn gen_thermostat_with(n: usize, seed: u64, cfg: &ThermostatConfig) -> Vec<IOTrace> {
    let schema = ChannelSchema::new("t", true, vec![Channel::output("x")]).expect("static schema");
    (0..n)
        .map(|i| {
            let mut rng = trace_rng(seed, i);
            let duration = rng.random_range(cfg.duration.0..=cfg.duration.1);
            let samples = (duration / cfg.period).round() as usize;
            let (mut x, mut on) = (20.0_f64, false);
            let mut xs = Vec::with_capacity(samples);
            let mut last_switch = None;
            for k in 0..samples {
                if !on && x <= 19.0 {
                    on = true;
                    last_switch = Some(k);
                } else if on && x >= 21.0 {
                    on = false;
                    last_switch = Some(k);
                }
                xs.push(x);
                let dx = if on { 5.0 - 0.1 * x } else { -0.1 * x };
                x += cfg.period * dx;
            }
            if let Some(k) = last_switch {
                xs.truncate(k);
            }
            let times = (0..xs.len()).map(|k| k as f64 * cfg.period).collect();
            IOTrace::new(schema.clone(), times, vec![xs]).expect("generated trace is valid")
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSpec {
    pub name: String,
    /// While idle the input holds a level drawn from this band, redrawn at
    /// every mode change.
    pub idle: (f64, f64),
    /// Value when the input is asserted.
    pub active: f64,
    /// When set, an asserted input ramps linearly from `active` to this value
    /// over the dwell of the mode it triggered.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub release: Option<f64>,
    /// An idle input rises linearly by this amount over each dwell.
    #[serde(default)]
    pub drift: f64,
    /// Seconds an asserted input is held flat at both ends of its ramp.
    #[serde(default)]
    pub hold: f64,
}

impl InputSpec {
    /// Ramp progress in `[0, 1]`: flat for `hold` seconds at both ends.
    fn phase(&self, since: f64, dwell: f64) -> f64 {
        let span = dwell - 2.0 * self.hold;
        if since <= self.hold || span <= 0.0 {
            0.0
        } else {
            ((since - self.hold) / span).min(1.0)
        }
    }

    fn asserted_value(&self, since: f64, dwell: f64) -> f64 {
        match self.release {
            Some(end) => self.active + (end - self.active) * self.phase(since, dwell),
            None => self.active,
        }
    }

    fn idle_value(&self, level: f64, since: f64, dwell: f64) -> f64 {
        if dwell > 0.0 {
            level + self.drift * (since / dwell).min(1.0)
        } else {
            level
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub exponents: Vec<u32>,
    pub coef: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    pub name: String,
    /// Output as a polynomial of the inputs, in input order.
    pub terms: Vec<TermSpec>,
    /// Dwell range in seconds; defaults to the plant-wide range.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dwell: Option<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Guard {
    /// Toggles the named input; taken when the current dwell has elapsed.
    /// Among several such switches the least recently taken one wins.
    InputEvent { channel: String },
    /// Taken as soon as the output rises above `level`.
    OutputAbove { level: f64 },
    /// Taken as soon as the output falls below `level`.
    OutputBelow { level: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchSpec {
    pub from: String,
    pub to: String,
    pub guard: Guard,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSpec {
    pub inputs: Vec<InputSpec>,
    pub output: String,
    pub modes: Vec<ModeSpec>,
    pub switches: Vec<SwitchSpec>,
    pub initial: String,
    /// Default dwell range in seconds before the next input event.
    pub dwell: (f64, f64),
    /// Standard deviation of additive output noise.
    #[serde(default)]
    pub noise: f64,
    pub period: f64,
    /// Upper bound on trace length in seconds.
    pub duration: f64,
    /// When set, a trace ends where its `events + 1`-th mode change would
    /// start.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events: Option<usize>,
    #[serde(default = "default_traces")]
    pub traces: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_traces() -> usize {
    10
}

impl PlantSpec {
    /// Idle mode `A` and two asserted modes `B` (input `e1`) and `C`
    /// (input `e2`), each entered and left by toggling its input. Idle
    /// stretches are short and asserted ones long.
    pub fn three_mode() -> Self {
        let input = |name: &str| InputSpec {
            name: name.into(),
            idle: (0.0, 0.05),
            active: 1.0,
            release: Some(0.6),
            drift: 0.2,
            hold: 0.15,
        };
        let t = |e1: u32, e2: u32, coef: f64| TermSpec {
            exponents: vec![e1, e2],
            coef,
        };
        let sw = |from: &str, to: &str, ch: &str| SwitchSpec {
            from: from.into(),
            to: to.into(),
            guard: Guard::InputEvent { channel: ch.into() },
        };
        PlantSpec {
            inputs: vec![input("e1"), input("e2")],
            output: "y".into(),
            modes: vec![
                ModeSpec {
                    name: "A".into(),
                    terms: vec![t(0, 0, 0.5), t(1, 0, 1.0), t(0, 1, 1.0), t(2, 0, 3.0), t(0, 2, -2.0)],
                    dwell: Some((0.5, 3.5)),
                },
                ModeSpec {
                    name: "B".into(),
                    terms: vec![t(0, 0, 1.0), t(1, 0, 1.0), t(0, 1, 2.0), t(1, 1, -1.5), t(0, 2, 4.0)],
                    dwell: None,
                },
                ModeSpec {
                    name: "C".into(),
                    terms: vec![t(0, 0, -1.0), t(0, 1, 0.5), t(1, 0, 3.0), t(1, 1, 2.0), t(2, 0, -5.0)],
                    dwell: None,
                },
            ],
            switches: vec![
                sw("A", "B", "e1"),
                sw("B", "A", "e1"),
                sw("A", "C", "e2"),
                sw("C", "A", "e2"),
            ],
            initial: "A".into(),
            dwell: (3.5, 7.5),
            noise: 0.0,
            period: 0.01,
            duration: 30.0,
            events: Some(4),
            traces: 10,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.inputs.is_empty() {
            return bad("at least one input is required".into());
        }
        let mut names = BTreeSet::new();
        for i in &self.inputs {
            if !names.insert(i.name.as_str()) {
                return bad(format!("duplicate input `{}`", i.name));
            }
            if !(i.idle.0 <= i.idle.1)
                || !(i.hold >= 0.0)
                || !i.drift.is_finite()
                || !i.active.is_finite()
                || i.release.is_some_and(|r| !r.is_finite())
            {
                return bad(format!("input `{}` has an invalid band, level or hold", i.name));
            }
        }
        if self.output.is_empty() || names.contains(self.output.as_str()) || self.output == "t" || names.contains("t") {
            return bad("output name must be distinct from inputs and from `t`".into());
        }
        let mut modes = BTreeSet::new();
        for m in &self.modes {
            if !modes.insert(m.name.as_str()) {
                return bad(format!("duplicate mode `{}`", m.name));
            }
            if m.terms
                .iter()
                .any(|t| t.exponents.len() != self.inputs.len() || !t.coef.is_finite())
            {
                return bad(format!("mode `{}` has a term of the wrong arity", m.name));
            }
            if m.dwell.is_some_and(|d| !(d.0 > 0.0 && d.0 <= d.1)) {
                return bad(format!("mode `{}` has an invalid dwell range", m.name));
            }
        }
        if modes.is_empty() {
            return bad("at least one mode is required".into());
        }
        if !modes.contains(self.initial.as_str()) {
            return bad(format!("unknown initial mode `{}`", self.initial));
        }
        for s in &self.switches {
            if !modes.contains(s.from.as_str()) || !modes.contains(s.to.as_str()) {
                return bad(format!("switch {} -> {} names an unknown mode", s.from, s.to));
            }
            if let Guard::InputEvent { channel } = &s.guard {
                if !names.contains(channel.as_str()) {
                    return bad(format!("switch guard names unknown input `{channel}`"));
                }
            }
        }
        if !(self.dwell.0 > 0.0 && self.dwell.0 <= self.dwell.1) {
            return bad("dwell range must be positive and ordered".into());
        }
        if !(self.noise >= 0.0) || !(self.period > 0.0) || !(self.duration >= 2.0 * self.period) {
            return bad("noise, period or duration out of range".into());
        }
        Ok(())
    }

    pub fn schema(&self) -> ChannelSchema {
        let mut channels: Vec<Channel> = self.inputs.iter().map(|i| Channel::input(&i.name)).collect();
        channels.push(Channel::output(&self.output));
        ChannelSchema::new("t", false, channels).expect("validated spec")
    }
}

/// A mode change in a generated trace.
#[derive(Clone, Debug, PartialEq)]
pub struct PlantEvent {
    /// First sample in the new mode.
    pub sample: usize,
    pub from: usize,
    pub to: usize,
    /// The toggled input for input-event guards.
    pub trigger: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlantRun {
    pub trace: IOTrace,
    /// Ground-truth mode index (into `PlantSpec::modes`) per sample.
    pub modes: Vec<usize>,
    pub events: Vec<PlantEvent>,
}

fn eval_terms(terms: &[TermSpec], x: &[f64]) -> f64 {
    terms
        .iter()
        .map(|t| {
            t.coef
                * t.exponents
                    .iter()
                    .zip(x)
                    .map(|(&e, v)| v.powi(e as i32))
                    .product::<f64>()
        })
        .sum()
}

/// Generates `spec.traces` runs. Each trace is cut back to its last mode
/// change so that no segment is truncated.
pub fn gen_polyplant(spec: &PlantSpec) -> Result<Vec<PlantRun>> {
    spec.validate()?;
    let mode_of = |name: &str| spec.modes.iter().position(|m| m.name == name).expect("validated");
    let input_of = |name: &str| spec.inputs.iter().position(|i| i.name == name).expect("validated");
    let noise = Normal::new(0.0, spec.noise).map_err(|e| Error::InvalidSpec(e.to_string()))?;
    let schema = spec.schema();
    let samples = (spec.duration / spec.period).round() as usize;

    let dwell_of = |mode: usize| spec.modes[mode].dwell.unwrap_or(spec.dwell);
    let band = |_: usize, i: usize| spec.inputs[i].idle;

    let mut runs = Vec::with_capacity(spec.traces);
    for r in 0..spec.traces {
        let mut rng = trace_rng(spec.seed, r);
        let mut mode = mode_of(&spec.initial);
        let mut levels: Vec<f64> = (0..spec.inputs.len())
            .map(|i| {
                let (lo, hi) = band(mode, i);
                rng.random_range(lo..=hi)
            })
            .collect();
        // (assertion sample, dwell of the mode it entered)
        let mut asserted: Vec<Option<(usize, f64)>> = vec![None; spec.inputs.len()];
        let (lo, hi) = dwell_of(mode);
        let mut dwell_left = rng.random_range(lo..=hi);
        let (mut dwell, mut entry) = (dwell_left, 0usize);
        let mut inputs: Vec<Vec<f64>> = vec![Vec::with_capacity(samples); spec.inputs.len()];
        let mut ys = Vec::with_capacity(samples);
        let mut modes = Vec::with_capacity(samples);
        let mut events = Vec::new();
        let mut pending: Option<usize> = None;
        let mut last_taken = vec![0usize; spec.switches.len()];
        for k in 0..samples {
            if spec.events.is_some_and(|n| events.len() > n) {
                break;
            }
            let mut entered = None;
            if let Some(to) = pending.take() {
                events.push(PlantEvent {
                    sample: k,
                    from: mode,
                    to,
                    trigger: None,
                });
                entered = Some(to);
            } else if k > 0 && dwell_left <= 0.0 {
                let options: Vec<usize> = (0..spec.switches.len())
                    .filter(|&i| {
                        let s = &spec.switches[i];
                        mode_of(&s.from) == mode && matches!(s.guard, Guard::InputEvent { .. })
                    })
                    .collect();
                if options.is_empty() {
                    let (lo, hi) = dwell_of(mode);
                    dwell_left = rng.random_range(lo..=hi);
                } else {
                    // Least recently taken first, so every trace exercises
                    // every input; ties are broken at random.
                    let oldest = options.iter().map(|&i| last_taken[i]).min().expect("non-empty");
                    let ties: Vec<usize> = options.into_iter().filter(|&i| last_taken[i] == oldest).collect();
                    let pick = ties[rng.random_range(0..ties.len())];
                    last_taken[pick] = k;
                    let s = &spec.switches[pick];
                    let Guard::InputEvent { channel } = &s.guard else {
                        unreachable!()
                    };
                    let ch = input_of(channel);
                    let to = mode_of(&s.to);
                    events.push(PlantEvent {
                        sample: k,
                        from: mode,
                        to,
                        trigger: Some(ch),
                    });
                    asserted[ch] = if asserted[ch].is_some() { None } else { Some((k, 0.0)) };
                    entered = Some(to);
                }
            }
            if let Some(to) = entered {
                mode = to;
                let (lo, hi) = dwell_of(mode);
                dwell_left = rng.random_range(lo..=hi);
                dwell = dwell_left;
                entry = k;
                for (i, a) in asserted.iter_mut().enumerate() {
                    match a {
                        Some((at, d)) if *at == k => *d = dwell_left,
                        Some(_) => {}
                        None => {
                            let (lo, hi) = band(mode, i);
                            levels[i] = rng.random_range(lo..=hi);
                        }
                    }
                }
            }
            let since = (k - entry) as f64 * spec.period;
            let x: Vec<f64> = (0..spec.inputs.len())
                .map(|i| match asserted[i] {
                    Some((at, d)) => spec.inputs[i].asserted_value((k - at) as f64 * spec.period, d),
                    None => spec.inputs[i].idle_value(levels[i], since, dwell),
                })
                .collect();
            let mut y = eval_terms(&spec.modes[mode].terms, &x);
            if spec.noise > 0.0 {
                y += noise.sample(&mut rng);
            }
            for (col, v) in inputs.iter_mut().zip(&x) {
                col.push(*v);
            }
            ys.push(y);
            modes.push(mode);
            dwell_left -= spec.period;

            for s in &spec.switches {
                if mode_of(&s.from) != mode {
                    continue;
                }
                let hit = match s.guard {
                    Guard::OutputAbove { level } => y > level,
                    Guard::OutputBelow { level } => y < level,
                    Guard::InputEvent { .. } => false,
                };
                if hit {
                    pending = Some(mode_of(&s.to));
                    break;
                }
            }
        }

        let keep = events.last().map_or(ys.len(), |e| e.sample);
        if let Some(last) = events.last() {
            if last.sample == keep {
                events.pop();
            }
        }
        let keep = keep.max(2);
        for col in inputs.iter_mut() {
            col.truncate(keep);
        }
        ys.truncate(keep);
        modes.truncate(keep);
        let mut channels = inputs;
        channels.push(ys);
        let times = (0..keep).map(|k| k as f64 * spec.period).collect();
        runs.push(PlantRun {
            trace: IOTrace::new(schema.clone(), times, channels)?,
            modes,
            events,
        });
    }
    Ok(runs)
}
