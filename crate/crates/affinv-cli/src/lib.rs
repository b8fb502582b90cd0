//! Support library for the experiment runner binary: the canonical JSON
//! writer and the plot-data emitters, split out so integration tests can
//! exercise the byte-format contracts directly.

pub mod canon;
pub mod plots;
