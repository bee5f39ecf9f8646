#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod graphs;
pub mod mean_field;
pub mod policy;
pub mod scalar;
pub mod solver;
pub mod states;
pub mod timing;

pub use error::{Error, Result};

pub type TimingParams = timing::TimingParams<f64>;
pub type ModelConfig = dynamics::ModelConfig<f64>;
pub type Model = dynamics::Model<f64>;
pub type Mdp = dynamics::Mdp<f64>;
pub type MarkovChain = dynamics::MarkovChain<f64>;
pub type MeanField = mean_field::MeanField<f64>;
pub type EfficiencyReport = analysis::search::EfficiencyReport<f64>;
pub type PolicyReport = analysis::search::PolicyReport<f64>;

pub use graphs::Catalogue;
pub use policy::{FullPolicy, LocalPolicy};
pub use states::StateSpace;
