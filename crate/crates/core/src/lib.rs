pub mod actors;
pub mod critics;
pub mod envs;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod mdp;
pub mod oracle;
pub mod schedule;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/critics.md")]
    mod critics {}
    #[doc = include_str!("../../../book/src/actors.md")]
    mod actors {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
