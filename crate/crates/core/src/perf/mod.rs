//! Closed-form peak and bandwidth models, roofline bounds, the energy
//! model with its calibration preset, weak-scaling extrapolation and
//! report emission.

mod energy;
mod extrapolate;
mod peak;
mod report;

pub use energy::{
    calibration_scenario, energy_report, EnergyError, EnergyModel, EnergyReport, PerLevel, PerPrecision,
    CALIBRATION_FREQUENCY_HZ, CALIBRATION_GFLOPS_PER_W, CALIBRATION_POWER_W, CALIBRATION_STATIC_SHARE,
};
pub use extrapolate::{add_counters, extrapolate_full_chip, slice_ratio};
pub use peak::{one_decimal, peak_flops, roofline, system_arithmetic_checks, BandwidthModel, PeakModel, SystemReport};
pub use report::{Derived, Report, ReportFormat, CSV_COLUMNS};
