//! The constructive memorizing network and the harnesses that check, by
//! simulation, how query-answering error depends on data size, data
//! distribution and the query workload.

pub mod construct;
pub mod dist;
pub mod dqd;
pub mod sampling;

pub use construct::{
    base_rep, coefficient_bound, compute_M, construct_network, construct_network_limited,
    construct_then_sgd, constructed_forward, g_unit_eval, max_vertex_error, verify_bounds,
    vertex_count, BoundReport, ConstructSgdOutcome, ConstructedNet, NormMode,
};
pub use dist::{ldq_gaussian_count, ldq_uniform_count, Dist};
pub use dqd::{dqd_experiment, inversions, DqdConfig, DqdReport, DqdRow, WidthSearch};
pub use sampling::{
    avg_sampling_check, compare_sizes, sampling_error_check, AvgMeasure, AvgRow, SamplingRow,
    SortedColumn,
};
