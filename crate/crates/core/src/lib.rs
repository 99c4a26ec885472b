//! Bilevel polynomial optimization.

pub mod bilevel;
pub mod fe;
pub mod model;
pub mod plme;
pub mod poly;
pub mod pop;
