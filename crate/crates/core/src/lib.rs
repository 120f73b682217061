//! Gibbs measures of locally constant potentials on full shifts, their
//! pushforwards under symbol amalgamation and the induced potential of the
//! hidden process, with certified truncation errors.

pub mod bounds;
pub mod error;
pub mod markov;
pub mod oracle;
pub mod potentials;
pub mod projective;
pub mod pushforward;
pub mod symbolic;

pub use bounds::{
    decay_certificate, epsilon_budget, geometric_moment_tail, periodic_constants,
    periodic_envelope, pressure_gap_bound, r_star, schedule_n, Constants, DecayCertificate,
    DecayForm, ErrorBudget, PeriodicConstants,
};
pub use error::{Error, Result};
pub use markov::{
    build_transfer, measure_from, periodic_log_measure, pressure_periodic, pressure_trace,
    GibbsReport, MarkovGibbsMeasure, TransferMatrix,
};
pub use potentials::{
    approximant, birkhoff_sum_periodic, normalize, variation, DecayClass, Evaluator,
    LocallyConstantPotential, PotentialDocument, TableEntry, VariationBound,
    VariationBoundedPotential, VariationProfile,
};
pub use projective::{
    hilbert_metric, normalized_product, perron_data, perron_data_with, phi_of, primitivity_index,
    project_apply, tau_of, IndexSet, IndexedMatrix, PerronData, PerronOptions, SimplexVector,
};
pub use pushforward::{
    build_family, gibbs_check_pushforward, induced_potential_general, log_linear_slope,
    variation_report, EvaluatorMode, InducedPotentialEvaluator, InducedValue,
    PushforwardGibbsReport, PushforwardMeasure, RestrictedMatrixFamily, TailVector,
    VariationReport, VariationRow,
};
pub use symbolic::{
    enumerate_words, periodic_orbit_words, Alphabet, AmalgamationMap, Word,
    DEFAULT_ENUMERATION_CAP,
};
