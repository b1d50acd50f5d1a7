//! Threshold-autoregressive detection of nonlinear, direction-resolved
//! connectivity between node pairs of a multichannel time-series network.
//!
//! The crate is organised bottom-up:
//!
//! * [`series`]: recordings, epochs and lagged design matrices.
//! * [`confound`]: spectral dynamic PCA used to regress the rest of the
//!   network out of a node pair.
//! * [`tar`]: linear ADL and two-regime TAR fits with the `(r, d)` grid search.
//! * [`inference`]: sup-LR linearity test with residual bootstrap, robust Wald
//!   test for threshold Granger causality, the modified Schwarz criterion,
//!   p-value combination and the permutation Hotelling comparison.
//! * [`connectivity`]: TCI / TGCI edge indices and graph export.
//! * [`simgen`]: generators with known causal structure.
//! * [`pipeline`]: end-to-end batch runs over subjects, epochs and pairs.

pub mod confound;
pub mod connectivity;
pub mod error;
pub mod inference;
pub mod linalg;
pub mod pipeline;
pub mod rng;
pub mod series;
pub mod simgen;
pub mod tar;

pub use error::{Error, ErrorKind, Result};

/// Guide chapters, compiled so their snippets run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/confounds.md")]
    mod confounds {}
    #[doc = include_str!("../../../book/src/tar-model.md")]
    mod tar_model {}
    #[doc = include_str!("../../../book/src/inference.md")]
    mod inference {}
    #[doc = include_str!("../../../book/src/indices.md")]
    mod indices {}
    #[doc = include_str!("../../../book/src/comparison.md")]
    mod comparison {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
