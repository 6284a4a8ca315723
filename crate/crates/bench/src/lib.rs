//! Criterion benchmarks for assembly, the direct solves and the
//! conservation indicator; see `benches/solve.rs`.
