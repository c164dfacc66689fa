//! Criterion benchmarks for the solver, PWM accumulation and training; see `benches/`.
