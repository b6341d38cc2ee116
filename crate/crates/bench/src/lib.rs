//! Criterion benchmarks for the engines; see `benches/engines.rs`.
