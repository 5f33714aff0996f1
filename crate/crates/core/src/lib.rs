//! Learned sketches for range aggregate queries.
//!
//! A [`NeuroSketch`] partitions the query space with a kd-tree built over a
//! training workload, trains one small ReLU network per partition and answers
//! a query with one tree descent plus one forward pass. No data is touched at
//! query time.
//!
//! The [`theory`] module holds the constructive memorizing network (g-units)
//! together with the Monte-Carlo harnesses that check its error bounds and the
//! data-size / distribution dependence of query-answering error.

mod codec;
pub mod data;
pub mod error;
pub mod eval;
pub mod mlp;
pub mod query;
pub mod rng;
pub mod sketch;
pub mod theory;

pub use data::{Dataset, NormParams};
pub use error::{Error, Result};
pub use eval::{EvalReport, Engine};
pub use mlp::{AdamConfig, LabelScale, Mlp, TrainConfig, TrainOutcome};
pub use query::{
    Aggregation, Answer, PredicateKind, Query, QueryInstance, QuerySpec, RangeMode,
    RotatedRectQuery, TrainingSet,
};
pub use sketch::{NeuroSketch, SketchConfig};
pub use theory::{ConstructedNet, NormMode};
