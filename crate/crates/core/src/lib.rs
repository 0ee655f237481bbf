//! Passive online learning of hybrid automata from input/output traces.
//!
//! Traces are segmented at change points, segments are clustered into
//! states by DTW similarity as they arrive, and each state receives a
//! polynomial flow while each transition receives a jump condition mined from
//! the input windows around its change points.

// Validation writes `!(x > 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod automaton;
pub mod datagen;
pub mod dtw;
pub mod error;
pub mod flows;
pub mod jumps;
pub mod segmentation;
pub mod synthesis;
pub mod traces;

pub use automaton::{finalize, HybridAutomaton, Mode, Simulation, Switch, MODEL_VERSION};
pub use error::{Error, Result};
pub use flows::PolynomialFlow;
pub use jumps::{Clause, JumpCondition};
pub use segmentation::{ChangePointSet, CostModel, DetectorConfig, Neighborhood, Segment};
pub use synthesis::{LearnerConfig, ModelStore, StateRecord, TraceReport, TransitionRecord};
pub use traces::{Channel, ChannelSchema, IOTrace, NormalizationParams, Role};
