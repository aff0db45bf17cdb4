pub mod autodiff;
pub mod encoder;
pub mod error;
pub mod model;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod scene;
pub mod similarity;
pub mod metrics;
pub mod gan;
pub mod config;
pub mod checkpoint;
pub mod pipeline;
