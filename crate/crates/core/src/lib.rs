//! Numerical toolkit for continuous g-frames over finite weighted measure
//! spaces: optimal frame and L-g-frame bounds, woven pairs, atomic systems,
//! approximate L-duals and perturbation windows.
//!
//! All bounds are computed exactly (up to floating point) through Hermitian
//! pencil problems, see [`linalg`].

pub mod atomic;
pub mod error;
pub mod gframe;
pub mod harness;
pub mod linalg;
pub mod measure;
pub mod perturbation;
pub mod weaving;

pub use atomic::{
    approx_dual_ratio, atomic_certificate, construct_exact_dual, dual_perturbation_bound, mixed_lower_bound,
    woven_atomic_certificate, AtomicCertificate, DualReport,
};
pub use error::{Error, Result};
pub use gframe::{
    analysis_apply, bessel_bound, frame_operator, gframe_bounds, lg_frame_bounds, mixed_frame_operator,
    synthesis_apply, synthesis_matrix, BlockFamily, BoundsReport, CoefficientVector, TargetOperator,
};
pub use harness::{generate_instance, load_instance, run_suite, save_report, Instance, InstanceSpec, SuiteReport};
pub use linalg::{c64, pencil_inf, pencil_sup, Matrix, PencilResult, Tolerances, Vector, C64};
pub use measure::{build_space, enumerate_partitions, sample_partitions, MeasureSpace, Partition};
pub use perturbation::{perturbation_check, propagate_woven_bounds, relative_gap_measure, PerturbationReport};
pub use weaving::{
    crossed_lower_criterion, direct_sum_weave, operator_transform_weave, partition_frame_operator, remove_subset,
    single_family_transform, sum_weave, woven_bounds, OperatorTransform, Strategy, WovenReport,
};
