//! Special functions: Gamma and the two-parameter Mittag-Leffler function.

mod gamma;
mod mittag_leffler;

pub use gamma::{gamma, ln_gamma, rgamma, sin_pi, upper_incomplete_gamma};
pub use mittag_leffler::{
    mittag_leffler, ml_sector_bound_check, ml_time_derivative, Branch, EvalResult, MLParams, MittagLeffler, SectorReport,
};
