//! Criterion benchmarks for `bohmspin`; see `benches/physics.rs`.
