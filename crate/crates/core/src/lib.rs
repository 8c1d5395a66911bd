//! Privacy-preserving multi-agent planning with partial disclosure of private
//! dependencies between public actions.

pub mod corpus;
pub mod dependency;
pub mod disclosure;
pub mod extension;
pub mod io;
pub mod model;
pub mod projection;
pub mod search;
pub mod harness;
pub mod mafs;
pub mod cli;
