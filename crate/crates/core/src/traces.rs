//! Trace data model: channel schemas, uniformly sampled input/output traces,
//! CSV ingestion, min-max normalization, and the binary-to-frequency
//! preprocessing used for square-wave channels.
//!
//! CSV layout: the first column is time in seconds, every other column is a
//! channel. Header names may carry an `i:` or `o:` prefix which sets the
//! channel role; an `i:` prefix on the time column marks time itself as an
//! input (the "working time" input of many plants).

use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance on the sampling period.
pub const SAMPLING_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Input,
    Output,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Channel {
    pub name: String,
    pub role: Role,
}

impl Channel {
    pub fn input(name: impl Into<String>) -> Self {
        Channel {
            name: name.into(),
            role: Role::Input,
        }
    }

    pub fn output(name: impl Into<String>) -> Self {
        Channel {
            name: name.into(),
            role: Role::Output,
        }
    }
}

/// Names and roles of the columns of a trace. Channel `k` lives in CSV
/// column `k + 1`; column 0 is always time.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelSchema {
    pub time: String,
    /// When set, elapsed time is one of the system inputs.
    pub time_is_input: bool,
    pub channels: Vec<Channel>,
}

impl ChannelSchema {
    pub fn new(time: impl Into<String>, time_is_input: bool, channels: Vec<Channel>) -> Result<Self> {
        let schema = ChannelSchema {
            time: time.into(),
            time_is_input,
            channels,
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        seen.insert(self.time.as_str());
        for ch in &self.channels {
            if ch.name.is_empty() {
                return Err(Error::InvalidSchema("empty channel name".into()));
            }
            if !seen.insert(ch.name.as_str()) {
                return Err(Error::InvalidSchema(format!("duplicate channel `{}`", ch.name)));
            }
        }
        if self.input_count() == 0 {
            return Err(Error::InvalidSchema("no input channel".into()));
        }
        if self.output_indices().is_empty() {
            return Err(Error::InvalidSchema("no output channel".into()));
        }
        Ok(())
    }

    /// Builds a schema from a CSV header using `i:`/`o:` prefixes. Unprefixed
    /// channel columns are outputs when listed in `outputs`, inputs otherwise.
    pub fn from_header(header: &[String], outputs: &[String]) -> Result<Self> {
        let Some((time_col, rest)) = header.split_first() else {
            return Err(Error::EmptyTrace);
        };
        let (time_role, time) = split_prefix(time_col);
        let channels = rest
            .iter()
            .map(|h| {
                let (role, name) = split_prefix(h);
                let role = role.unwrap_or(if outputs.iter().any(|o| o == name) {
                    Role::Output
                } else {
                    Role::Input
                });
                Channel {
                    name: name.to_string(),
                    role,
                }
            })
            .collect();
        ChannelSchema::new(time, time_role == Some(Role::Input), channels)
    }

    /// Header row with role prefixes, so that written files reload to the
    /// same schema.
    pub fn header(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.channels.len() + 1);
        out.push(if self.time_is_input {
            format!("i:{}", self.time)
        } else {
            self.time.clone()
        });
        for ch in &self.channels {
            let prefix = match ch.role {
                Role::Input => "i:",
                Role::Output => "o:",
            };
            out.push(format!("{prefix}{}", ch.name));
        }
        out
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c.name == name)
    }

    pub fn input_indices(&self) -> Vec<usize> {
        self.role_indices(Role::Input)
    }

    pub fn output_indices(&self) -> Vec<usize> {
        self.role_indices(Role::Output)
    }

    fn role_indices(&self, role: Role) -> Vec<usize> {
        self.channels
            .iter()
            .enumerate()
            .filter(|(_, c)| c.role == role)
            .map(|(i, _)| i)
            .collect()
    }

    /// Number of system inputs, counting time when it is an input.
    pub fn input_count(&self) -> usize {
        self.input_indices().len() + usize::from(self.time_is_input)
    }

    /// Input names in canonical order: time first (if it is an input), then
    /// input channels in column order.
    pub fn input_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        if self.time_is_input {
            names.push(self.time.clone());
        }
        names.extend(
            self.channels
                .iter()
                .filter(|c| c.role == Role::Input)
                .map(|c| c.name.clone()),
        );
        names
    }

    pub fn output_names(&self) -> Vec<String> {
        self.channels
            .iter()
            .filter(|c| c.role == Role::Output)
            .map(|c| c.name.clone())
            .collect()
    }
}

fn split_prefix(h: &str) -> (Option<Role>, &str) {
    let h = h.trim();
    if let Some(rest) = h.strip_prefix("i:") {
        (Some(Role::Input), rest)
    } else if let Some(rest) = h.strip_prefix("o:") {
        (Some(Role::Output), rest)
    } else {
        (None, h)
    }
}

/// A uniformly sampled multivariate input/output trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IOTrace {
    pub schema: ChannelSchema,
    pub times: Vec<f64>,
    /// One value sequence per schema channel.
    pub channels: Vec<Vec<f64>>,
    pub sampling_period: f64,
}

impl IOTrace {
    /// Validates lengths, monotone time and uniform sampling. The period is
    /// taken from the first two timestamps.
    pub fn new(schema: ChannelSchema, times: Vec<f64>, channels: Vec<Vec<f64>>) -> Result<Self> {
        schema.validate()?;
        if times.len() < 2 {
            return Err(Error::EmptyTrace);
        }
        if channels.len() != schema.channels.len() {
            return Err(Error::DimensionMismatch {
                expected: schema.channels.len(),
                got: channels.len(),
            });
        }
        if let Some(bad) = channels.iter().find(|c| c.len() != times.len()) {
            return Err(Error::DimensionMismatch {
                expected: times.len(),
                got: bad.len(),
            });
        }
        let period = check_uniform(&times)?;
        Ok(IOTrace {
            schema,
            times,
            channels,
            sampling_period: period,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.schema.index_of(name).map(|i| self.channels[i].as_slice())
    }

    /// `t_p - t_1`.
    pub fn span(&self) -> f64 {
        self.times[self.times.len() - 1] - self.times[0]
    }

    /// Row-major copy of samples `start..=end` over the given channels.
    pub fn rows(&self, start: usize, end: usize, channels: &[usize]) -> Vec<Vec<f64>> {
        (start..=end)
            .map(|i| channels.iter().map(|&c| self.channels[c][i]).collect())
            .collect()
    }
}

fn check_uniform(times: &[f64]) -> Result<f64> {
    for (i, w) in times.windows(2).enumerate() {
        if !(w[1] > w[0]) {
            return Err(Error::NonMonotonicTime { row: i + 2 });
        }
    }
    let period = times[1] - times[0];
    for (i, w) in times.windows(2).enumerate().skip(1) {
        let step = w[1] - w[0];
        if (step - period).abs() > SAMPLING_TOLERANCE * period {
            return Err(Error::NonUniformSampling {
                row: i + 2,
                step,
                period,
            });
        }
    }
    Ok(period)
}

/// Reads a CSV trace, mapping header names onto `schema`. Role prefixes in the
/// header override the roles in `schema`.
pub fn load_trace(path: impl AsRef<Path>, schema: &ChannelSchema) -> Result<IOTrace> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_trace(file, Some(schema), &[])
}

/// Reads a CSV trace whose schema is implied by its header prefixes.
pub fn load_trace_auto(path: impl AsRef<Path>, outputs: &[String]) -> Result<IOTrace> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_trace(file, None, outputs)
}

/// Reads a CSV holding at least the time and input columns of `schema`.
/// Output columns absent from the file are filled with zeros, so input-only
/// files can drive a simulation.
pub fn load_inputs(path: impl AsRef<Path>, schema: &ChannelSchema) -> Result<IOTrace> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_columns(file, Some(schema), &[], true)
}

pub fn read_trace<R: Read>(reader: R, schema: Option<&ChannelSchema>, outputs: &[String]) -> Result<IOTrace> {
    read_columns(reader, schema, outputs, false)
}

fn read_columns<R: Read>(
    reader: R,
    schema: Option<&ChannelSchema>,
    outputs: &[String],
    fill_outputs: bool,
) -> Result<IOTrace> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let from_header = ChannelSchema::from_header(&header, outputs);

    // Column of each schema channel in the file.
    let (schema, columns) = match schema {
        None => {
            let s = from_header?;
            let cols = (1..=s.channels.len()).map(Some).collect::<Vec<_>>();
            (s, cols)
        }
        Some(given) => {
            let names: Vec<(Option<Role>, &str)> = header.iter().map(|h| split_prefix(h)).collect();
            if names[0].1 != given.time {
                return Err(Error::MissingColumn(given.time.clone()));
            }
            let mut schema = given.clone();
            if names[0].0 == Some(Role::Input) {
                schema.time_is_input = true;
            }
            let mut cols = Vec::with_capacity(given.channels.len());
            for ch in schema.channels.iter_mut() {
                let found = names.iter().skip(1).position(|(_, n)| *n == ch.name).map(|c| c + 1);
                match found {
                    Some(col) => {
                        if let Some(role) = names[col].0 {
                            ch.role = role;
                        }
                    }
                    None if fill_outputs && ch.role == Role::Output => {}
                    None => return Err(Error::MissingColumn(ch.name.clone())),
                }
                cols.push(found);
            }
            schema.validate()?;
            (schema, cols)
        }
    };

    let mut times = Vec::new();
    let mut channels = vec![Vec::new(); schema.channels.len()];
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1;
        let parse = |col: usize| -> Result<f64> {
            let raw = record.get(col).unwrap_or("");
            raw.parse::<f64>().map_err(|_| Error::BadValue {
                row,
                column: header.get(col).cloned().unwrap_or_default(),
                value: raw.to_string(),
            })
        };
        times.push(parse(0)?);
        for (k, &col) in columns.iter().enumerate() {
            channels[k].push(match col {
                Some(c) => parse(c)?,
                None => 0.0,
            });
        }
    }
    if times.is_empty() {
        return Err(Error::EmptyTrace);
    }
    IOTrace::new(schema, times, channels)
}

pub fn write_trace<W: Write>(trace: &IOTrace, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(trace.schema.header())?;
    let mut row = Vec::with_capacity(trace.channels.len() + 1);
    for i in 0..trace.len() {
        row.clear();
        row.push(trace.times[i].to_string());
        row.extend(trace.channels.iter().map(|c| c[i].to_string()));
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelRange {
    pub name: String,
    pub min: f64,
    pub max: f64,
}

/// Per-channel affine normalization plus the time span used as the unit of
/// normalized time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub channels: Vec<ChannelRange>,
    pub time_span: (f64, f64),
}

impl NormalizationParams {
    pub fn fit(trace: &IOTrace) -> Self {
        let channels = trace
            .schema
            .channels
            .iter()
            .zip(&trace.channels)
            .map(|(ch, values)| {
                let (min, max) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                });
                ChannelRange {
                    name: ch.name.clone(),
                    min,
                    max,
                }
            })
            .collect();
        NormalizationParams {
            channels,
            time_span: (trace.times[0], trace.times[trace.len() - 1]),
        }
    }

    /// Length of the reference time span; one unit of normalized time.
    pub fn time_unit(&self) -> f64 {
        let span = self.time_span.1 - self.time_span.0;
        if span > 0.0 {
            span
        } else {
            1.0
        }
    }

    pub fn range(&self, name: &str) -> Option<&ChannelRange> {
        self.channels.iter().find(|c| c.name == name)
    }

    fn ranges_for(&self, schema: &ChannelSchema) -> Result<Vec<&ChannelRange>> {
        schema
            .channels
            .iter()
            .map(|ch| {
                self.range(&ch.name)
                    .ok_or_else(|| Error::SchemaMismatch(format!("no normalization for channel `{}`", ch.name)))
            })
            .collect()
    }

    /// Maps every channel with these (possibly foreign) parameters. Values
    /// outside the recorded range are not clamped.
    pub fn apply(&self, trace: &IOTrace) -> Result<IOTrace> {
        let ranges = self.ranges_for(&trace.schema)?;
        let mut out = trace.clone();
        for (values, r) in out.channels.iter_mut().zip(ranges) {
            let width = r.max - r.min;
            for v in values.iter_mut() {
                *v = if width > 0.0 { (*v - r.min) / width } else { 0.0 };
            }
        }
        Ok(out)
    }

    pub fn invert(&self, trace: &IOTrace) -> Result<IOTrace> {
        let ranges = self.ranges_for(&trace.schema)?;
        let mut out = trace.clone();
        for (values, r) in out.channels.iter_mut().zip(ranges) {
            let width = r.max - r.min;
            for v in values.iter_mut() {
                *v = if width > 0.0 { r.min + *v * width } else { r.min };
            }
        }
        Ok(out)
    }
}

/// Min-max normalizes every channel to `[0, 1]`; constant channels map to 0.
pub fn normalize(trace: &IOTrace) -> (IOTrace, NormalizationParams) {
    let params = NormalizationParams::fit(trace);
    let normalized = params.apply(trace).expect("parameters fitted on the same schema");
    (normalized, params)
}

pub fn denormalize(trace: &IOTrace, params: &NormalizationParams) -> Result<IOTrace> {
    params.invert(trace)
}

/// Replaces each selected binary channel by its rising-edge rate (Hz) over a
/// sliding window of `window` sampling intervals. Unselected channels are
/// averaged over the same window. An empty selection converts every channel
/// that is binary-valued.
///
/// Window `k` spans samples `k..=k+window`; output timestamps sit at window
/// centers. A window longer than the trace yields one aggregated sample.
pub fn to_frequency(trace: &IOTrace, window: usize, selected: &[String]) -> Result<IOTrace> {
    if window < 2 {
        return Err(Error::InvalidConfig("frequency window must be at least 2".into()));
    }
    let is_binary = |v: &[f64]| v.iter().all(|&x| x == 0.0 || x == 1.0);
    let convert: Vec<bool> = if selected.is_empty() {
        trace.channels.iter().map(|c| is_binary(c)).collect()
    } else {
        for name in selected {
            let values = trace.channel(name).ok_or_else(|| Error::MissingColumn(name.clone()))?;
            if !is_binary(values) {
                return Err(Error::NonBinaryChannel(name.clone()));
            }
        }
        trace
            .schema
            .channels
            .iter()
            .map(|c| selected.contains(&c.name))
            .collect()
    };

    let p = trace.len();
    let intervals = window.min(p - 1);
    let starts = p - intervals;
    let duration = intervals as f64 * trace.sampling_period;

    let times: Vec<f64> = (0..starts)
        .map(|k| 0.5 * (trace.times[k] + trace.times[k + intervals]))
        .collect();
    let channels = trace
        .channels
        .iter()
        .zip(&convert)
        .map(|(values, &conv)| {
            if conv {
                let rising: Vec<u32> = values
                    .windows(2)
                    .map(|w| u32::from(w[0] == 0.0 && w[1] == 1.0))
                    .collect();
                sliding_sums(&rising, intervals)
                    .into_iter()
                    .map(|n| n as f64 / duration)
                    .collect()
            } else {
                (0..starts)
                    .map(|k| values[k..=k + intervals].iter().sum::<f64>() / (intervals + 1) as f64)
                    .collect()
            }
        })
        .collect();

    if starts == 1 {
        // A single output sample has no period of its own; keep the input's.
        let mut out = trace.clone();
        out.times = times;
        out.channels = channels;
        return Ok(out);
    }
    IOTrace::new(trace.schema.clone(), times, channels)
}

fn sliding_sums(xs: &[u32], width: usize) -> Vec<u32> {
    let mut out = Vec::with_capacity(xs.len() + 1 - width);
    let mut acc: u32 = xs[..width].iter().sum();
    out.push(acc);
    for i in width..xs.len() {
        acc = acc + xs[i] - xs[i - width];
        out.push(acc);
    }
    out
}
