//! Specification tests: residualized covariate balance and the density test
//! at the cutoff.

pub mod balance;
pub mod binning;
pub mod mccrary;

pub use balance::{
    balance_on, balance_test, default_covariate_models, BalanceError, BalanceResult, CovariateBalance, CovariateModel,
};
pub use binning::{BinGrid, Side};
pub use mccrary::{mccrary_test, McCraryError, McCraryOptions, McCraryResult};
