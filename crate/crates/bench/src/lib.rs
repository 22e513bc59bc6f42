//! Criterion benchmarks for the replay engine; see `benches/`.
