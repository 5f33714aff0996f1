//! Shared fixtures for the criterion benchmarks.

use neurosketch::data::gen_gmm;
use neurosketch::query::{sample_queries, sample_training_set};
use neurosketch::{Aggregation, Dataset, NeuroSketch, Query, QuerySpec, RangeMode, SketchConfig, TrainConfig};

pub struct Fixture {
    pub data: Dataset,
    pub spec: QuerySpec,
    pub sketch: NeuroSketch,
    pub queries: Vec<Query>,
}

/// A 5-attribute clustered table with a quickly trained default-shape sketch.
pub fn fixture(n: usize) -> Fixture {
    let data = gen_gmm(n, 5, 20, 1).expect("data");
    let spec = QuerySpec::axis(Aggregation::Avg, data.measure_index(), 1);
    let ts = sample_training_set(&data, &spec, 4_000, RangeMode::Uniform, 2).expect("training set");
    let cfg = SketchConfig {
        seed: 3,
        train: TrainConfig { max_epochs: 5, ..TrainConfig::default() },
        ..SketchConfig::default()
    };
    let sketch = NeuroSketch::build(&data, &ts, &spec, &cfg).expect("build");
    let queries = sample_queries(&spec, data.dims(), 256, 4, RangeMode::Uniform).expect("queries");
    Fixture { data, spec, sketch, queries }
}
