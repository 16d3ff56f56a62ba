//! Distribution of sums of independent sample means of lattice-valued
//! random variables: exact convolution, Edgeworth expansions with lattice
//! corrections, bootstrap and Monte Carlo estimates, and number-theoretic
//! tools for choosing sample sizes.

pub mod bootstrap;
pub mod edgeworth;
pub mod error;
pub mod lattice;
pub mod model_file;
pub mod number_theory;
pub mod numeric;
pub mod rng;
pub mod simulate;

pub use error::{Error, Result};
