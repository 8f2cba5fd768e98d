pub mod autodiff;
pub mod cli;
pub mod complexity;
pub mod data;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod train;
