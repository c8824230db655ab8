//! Joint Bayesian inference of alignment and phylogeny, with complete indel
//! histories as the latent state.

pub mod alignment;
pub mod error;
pub mod guide;
pub mod history;
pub mod hky;
pub mod indel;
pub mod io;
pub mod mcmc;
pub mod prior;
pub mod proposal;
pub mod sequence;
pub mod simulate;
pub mod summary;
pub mod tree;
pub mod validation;

pub use error::{Error, ParseError, Result};
