//! Missing-data imputation through indicator-variable regression.
//!
//! Missing responses are treated as parameters of an augmented regression.
//! With missingness confined to the response this gives the EM solution in
//! closed form; with several incomplete variables the stacked regressions
//! become a bilinear least-squares problem solved by Levenberg–Marquardt.

pub mod closed_form;
pub mod constraints;
pub mod dataset;
pub mod em;
pub mod error;
pub mod linalg;
pub mod nls;
pub mod ols;
pub mod report;
pub mod uncertainty;

pub use closed_form::{impute_closed_form, ImputationSet, ImputedCell};
pub use dataset::{load_csv, parse_csv, Cell, Dataset};
pub use error::{Error, Result};
pub use nls::{build_concatenated, solve_concatenated, InitPolicy, NlsOptions, NlsResult};
pub use report::{compare_reports, Report};
