//! Exact reduction from polynomial root-finding on the unit cube to
//! nonnegative matrix factorization.
//!
//! Given a polynomial equation `f = 0` with rational coefficients, the
//! [`compiler`] produces a concrete nonnegative rational matrix `M` and a
//! target size `k` such that the size-`k` nonnegative factorizations of `M`
//! encode exactly the roots of `f` inside `[0,1]^n`. The [`witness`] module
//! maps roots to exact factorizations and back; the [`solver`] module
//! provides a numeric factorization search and nonnegative-rank bounds used
//! to sanity-check the constructions at small scale.

pub mod compiler;
pub mod error;
pub mod exact;
pub mod gadgets;
pub mod incomplete;
pub mod poly;
pub mod solver;
pub mod witness;

pub use compiler::{compile, Instance};
pub use error::{Error, Result};
pub use exact::{RankOneFactor, Rat, RatMatrix};
pub use incomplete::{Assignment, IncompleteMatrix};
pub use poly::{parse_poly, Polynomial};
pub use solver::{nmf_search, rankplus_lower, rankplus_upper, DenseMatrix, SolveConfig};
pub use witness::{build_witness, extract_root, verify_factorization, Factorization};



