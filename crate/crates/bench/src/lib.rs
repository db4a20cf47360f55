//! Criterion benchmarks for the PreOpNet engine. Run with `cargo bench -p preopnet-bench`.
