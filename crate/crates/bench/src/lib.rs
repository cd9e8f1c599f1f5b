//! Criterion benchmarks for the hypentropy updates live in `benches/`.
