//! Instance generation, verification suites and file formats.

pub mod generate;
pub mod io;
pub mod suite;

pub use generate::{generate_instance, BlockDims, InstanceKind, InstanceParams, InstanceSpec, WeightProfile};
pub use io::{load_instance, save_report, Format, Instance};
pub use suite::{run_suite, CheckRecord, SuiteReport, SUITES};
