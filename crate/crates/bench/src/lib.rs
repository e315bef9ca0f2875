//! Criterion benchmarks for the core grid operations; see `benches/`.
