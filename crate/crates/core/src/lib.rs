pub mod av;
pub mod piers;
pub mod worldgen;
pub mod gameplay;
pub mod clears;
pub mod glados;
pub mod eet;
pub mod simulator;
pub mod config;
pub mod report;
