//! Criterion benchmarks for trendscope-core; see `benches/`.
