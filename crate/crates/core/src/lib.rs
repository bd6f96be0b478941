//! Finite-difference laboratory for the conformally invariant Paneitz
//! energy of sphere-valued maps on conformally flat 4-D domains.

pub mod config;
pub mod conformal;
pub mod convex;
pub mod energy;
pub mod error;
pub mod fieldio;
pub mod flow;
pub mod grid;
pub mod hardy;
pub mod noise;
pub mod scenario;
pub mod sphere;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/grids.md")]
    mod grids {}
    #[doc = include_str!("../../../book/src/energy.md")]
    mod energy {}
    #[doc = include_str!("../../../book/src/flow.md")]
    mod flow {}
    #[doc = include_str!("../../../book/src/hardy.md")]
    mod hardy {}
    #[doc = include_str!("../../../book/src/convexity.md")]
    mod convexity {}
    #[doc = include_str!("../../../book/src/scenarios.md")]
    mod scenarios {}
}
