//! Criterion benchmarks for `fairsize-core`; see `benches/`.
