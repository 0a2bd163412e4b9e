//! Killing-horizon initial data, transversal null foliations and the first-order
//! expansion of the metric off the horizon.

pub mod catalog;
pub mod expansion;
pub mod expr;
pub mod foliation;
pub mod geometry;
pub mod initial_data;
pub mod jet;
pub mod verify;
