pub mod adversary;
pub mod batch;
pub mod checker;
pub mod config;
pub mod metrics;
pub mod replica;
pub mod sim;
pub mod store;
pub mod trace;
pub mod types;
