//! The binary64 host side: golden oracle, Hermite integrator, initial
//! conditions and energy diagnostics.

pub mod diagnostics;
pub mod ic;
pub mod integrator;
pub mod oracle;

pub use diagnostics::{
    compare_energy_distribution, energy_report, force_deviation, energy_report_with_edges, histogram, total_energy,
    uniform_edges, Deviation, DistributionComparison, EnergyReport, ForceDeviation,
    Histogram,
};
pub use ic::{generate_initial_conditions, IcModel};
pub use integrator::{
    correct, initialize, predict, run, step, Backend, HermiteOrder, IntegratorConfig, Prediction,
    RunReport, StepRecord,
};
pub use oracle::{golden_acc_jerk, golden_snap};
