//! Time-to-solution, energy-to-solution, EDP and strong-scaling reports.

pub mod power;
pub mod report;
pub mod trace;

pub use power::{
    channel_energy, energy_channel_to_power, energy_increment, integrate_power, total_power,
    CombinedPower,
};
pub use report::{
    measure_trace, run_stats, scaling_report, scaling_table, BenchReport, ConfigSummary,
    PowerModel, RunMeasurement, RunStats, ScalingRow,
};
pub use trace::{Channel, ChannelKind, EnergyTrace, Window};
