pub mod bench;
pub mod config;
pub mod dev;
pub mod learn;
pub mod llm;
pub mod model;
pub mod sandbox;
pub mod tools;

pub use model::*;
