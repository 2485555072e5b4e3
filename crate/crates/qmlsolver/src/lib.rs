//! Satisfiability and validity for one-variable first-order modal logic with
//! equality, non-rigid partial constants and definite descriptions.

pub mod closure;
pub mod decide;
pub mod error;
pub mod extnat;
pub mod formula;
pub mod fresh;
pub mod kn;
pub mod levels;
pub mod links;
pub mod model;
pub mod oracle;
pub mod parse;
pub mod quasimodel;
pub mod quasistate;
pub mod random;
pub mod reductions;
pub mod solver;
pub mod render;

pub use error::{Error, Result};
