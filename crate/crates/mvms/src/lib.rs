pub mod error;
pub mod integrator;
pub mod measure;
pub mod model;
pub mod quad;
pub mod rng;
pub mod stats;
