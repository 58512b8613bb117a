//! Data ingestion and preparation: CSV loading, standardisation, time-axis
//! partitions, Kaplan–Meier curves and the LCRM simulator.

mod io;
mod km;
mod partition;
mod simulate;
mod standardize;

pub use io::{load_dataset, read_dataset, write_dataset, Schema};
pub use km::{km_estimate, KmCurve};
pub use partition::{build_partition, event_time_quantile};
pub use simulate::{
    default_simulation, simulate_lcrm, CensoringSpec, CovariateGenerator, MembershipCovariates, SimulationSetup, SimulationTruth,
};
pub use standardize::{destandardize, standardize, ColumnScale, StandardizationRecord};
