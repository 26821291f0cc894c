//! Criterion benchmarks for `gramgap-core`; see `benches/`.
