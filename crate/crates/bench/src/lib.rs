//! Criterion benchmarks for `dirinfo-core`; see `benches/`.
