//! Discrete log-concavity on `Z^d`.
//!
//! Lattice p.m.f.s and their convolutions, `Z^d`-convexity and log-concave
//! extensibility decisions, entropy and covariance diagnostics, B-spline
//! smoothing with differential entropy, lattice-versus-integral moment gaps,
//! Ball-body geometry, and the sweep harness that checks the quantitative
//! bounds on families of distributions.

pub mod bridge;
pub mod convexity;
pub mod convolve;
pub mod density;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod lattice;
pub mod linalg;
pub mod moments;
pub mod quadrature;
pub mod quantize;
pub mod simplex;
pub mod smoothing;
pub mod sum;

pub use convexity::{
    is_log_concave_extensible, is_zd_convex, log_concave_1d, minkowski_sum, ArithmeticMode, ConvexityReport,
    ExtensibilityReport,
};
pub use convolve::{convolve, self_convolve, ConvolveMethod, ConvolveOptions};
pub use bridge::{
    argmax_profile_moment, concentration_check, lattice_count_ratio, lattice_vs_integral_gaps, ArgmaxMoment,
    ConcentrationReport, GapReport,
};
pub use density::{ContinuousDensity, DensitySpec, TailBound};
pub use error::{LceError, Result};
pub use geometry::{
    check_inclusions, kls_second_moment_check, radial_integral_bounds, radius_bounds_check, ConvexBodySpec,
    InclusionCheck, KlsCheck, RadialIntegralReport, RadiusReport,
};
pub use harness::{run_config, CheckResult, CheckStatus, ExperimentConfig, FamilySpec, ReportDocument};
pub use lattice::{make_product, make_uniform_on_set, BoxDomain, IndexVector, LatticePmf, LatticeSet, PmfDocument};
pub use moments::{
    discrete_moments, entropy_covariance_bounds, isotropy_score, shannon_entropy, sum_of_maxima, variation_sum,
    BoundRatios, CovarianceMatrix, IsotropyScore, MomentSummary,
};
pub use quantize::{quantize_density, QuantizeOptions};
pub use smoothing::{
    bspline_eval, cell_deviation, differential_entropy, differential_entropy_report, elementary_estimate,
    smoothed_density_eval, EntropyOptions, EntropyReport,
};
