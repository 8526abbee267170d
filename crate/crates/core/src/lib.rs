//! Runtime-assured lane changing on a simulated highway.
//!
//! A velocity-obstacle baseline controller for car-like vehicles, pluggable
//! unverified controllers, and a mode manager that hands authority between
//! them based on sampled reachability.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod advanced_controllers;
pub mod controller;
pub mod geometry;
pub mod highway_env;
pub mod mode_manager;
pub mod orca_drive;
pub mod sim;
pub mod vehicle_dynamics;
