#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod archive;
pub mod data;
pub mod error;
pub mod hazard;
pub mod models;
pub mod numeric;
pub mod predict;
pub mod priors;
pub mod rj;
pub mod sampler;
pub mod summaries;
pub mod truncgamma;

pub use error::{Error, Result};
pub use hazard::{BaselineHazard, IntervalDecomposition, TimePartition};
pub use models::{observed_loglik, Dataset, LatentState, LcrmParams, ModelKind, ModelParams, SurvivalRecord};
pub use priors::{PriorSpec, ProprietyCondition, ProprietyReport};
pub use archive::{Draw, SampleArchive};
pub use rj::{run_rj_chain, RjConfig, RjOutput};
pub use sampler::{run_chain, McmcConfig};
