//! Bounded least-squares engine and the experiment-specific fit recipes.

mod cpmg;
mod deer_rabi;
pub mod lm;
mod peak;
mod rabi;
mod selection;
pub mod spectral;
pub mod stats;

pub use cpmg::{fit_cpmg_t2, T2Fit};
pub use deer_rabi::{fit_deer_rabi, fit_deer_rabi_with, omega_bounds, DeerRabiFit, DeerRabiOptions};
pub use lm::{nlls_fit, Bound, FitProblem, FitResult};
pub use peak::{
    fit_gaussian_peak, fit_gaussian_peak_with, fit_odmr_pair, gaussian_peak_raw, gaussian_peak_xy, OdmrFit, PeakFit,
    PeakOptions,
};
pub use rabi::{fit_rabi, RabiFit};
pub use selection::{select_spin_count, select_spin_count_with, KMode, SelectionOptions, SpinSelection};
pub use stats::adjusted_r_squared;
