pub mod bounds;
pub mod dist;
pub mod experiment;
pub mod loo;
pub mod rng;
pub mod sim;
pub mod stats;
pub mod verify;
