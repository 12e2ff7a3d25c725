//! Plug-in estimation of mutual information and directed information rates
//! for finite-alphabet Markov chains, with likelihood-ratio tests of
//! independence and of causal influence.
//!
//! Information quantities are in nats throughout.

pub mod alphabet;
pub mod empirical;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod inference;
pub mod info;
pub mod layout;
pub mod markov;

pub use alphabet::{
    load_sequences, read_rows, read_sequences, univariate_view, write_sequences, Alphabet, SequenceFormat, Stream,
    Symbol, SymbolSequence, SymbolSequencePair,
};
pub use empirical::{
    count_blocks, count_blocks_sharded, empirical_law, ContextCounts, DiscreteDistribution, PairCounts,
};
pub use error::{Error, Result};
pub use estimators::{
    lr_statistic_di, lr_statistic_mi, max_loglik_full_di, max_loglik_full_mi, max_loglik_null_di, max_loglik_null_mi,
    plugin_di, plugin_mi, DiEstimate, MiEstimate,
};
pub use experiment::{run_experiment, ExperimentConfig, ExperimentKind, ExperimentResults, ModelSource};
pub use inference::{
    chi_sq_sf, confidence_interval_di, ks_distance, normal_quantile, test_causality, test_independence_markov,
    ConfidenceInterval, Decision, SigmaSource, TestReport,
};
pub use info::{conditional_mutual_information, entropy, mutual_information, relative_entropy};
pub use layout::{BlockLayout, SlotMask};
pub use markov::{
    analytic_di_rate, analytic_mi_rate, load_model, parse_model, sigma_sq_di, sigma_sq_mi, stationary_law, AnyModel,
    JointMarkovModel, ModelFile, StationaryLaw, UnivariateMarkovModel,
};
