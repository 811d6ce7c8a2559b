//! Distances between empirical measures and paths.

pub mod lln;
pub mod modulus;
pub mod path;
pub mod skorohod;
pub mod wasserstein;

pub use lln::{lln_diagnostic, mean_stderr, DecayRow, DecayTable, LlnOptions, LlnReport, PathCost};
pub use modulus::modulus_wprime;
pub use path::{path_wasserstein_dt, sup_distance, PathSample, PathTransport};
pub use skorohod::{alignment_distance, skorohod_d, skorohod_do, AlignmentOptions, TimeChangePenalty};
pub use wasserstein::{
    nodewise_wasserstein, sup_time_wasserstein, sup_time_wasserstein_pow, wasserstein_p, wasserstein_pow,
    wasserstein_unsorted,
};
