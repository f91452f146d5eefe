//! Simulation laboratory for the (1+1)-dimensional directed polymer in a
//! heavy-tailed random environment.

pub mod chaos;
pub mod disorder;
pub mod polymer;
pub(crate) mod quad;
