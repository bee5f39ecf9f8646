//! Stationary analysis, PoW efficiency and the experiment drivers.

pub mod stationary;
pub mod efficiency;
pub mod oracle;
pub mod search;
