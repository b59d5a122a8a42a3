//! Evolutionary robotics toolkit for a two-wheeled, ten-sensor robot.

pub mod genotype;
pub mod rng;
pub mod world;
pub mod config;
pub mod controller;
pub mod fitness;
pub mod sim;
pub mod trace;
pub mod evolution;
pub mod estimation;
pub mod experiments;
