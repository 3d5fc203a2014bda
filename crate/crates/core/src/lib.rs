pub mod config;
pub mod diff;
pub mod dom;
pub mod gateway;
pub mod knowledge;
pub mod pipeline;
pub mod service;
