//! Adaptive cruise control digital twin.
//!
//! The physical-twin side (`ptsim`, `perception`) simulates a 1/10-scale
//! vehicle with a planar LiDAR and turns scans into object tracks. The
//! digital-twin side (`dtentity`) runs the offloaded ACC, stores data and
//! builds reports and visualization frames. `wire` carries everything in
//! between, and `runtime` wires the entities together either in one
//! deterministic process or over UDP.

pub mod domain;
pub mod wire;
pub mod ptsim;
pub mod perception;
pub mod dtentity;
pub mod gateway;
pub mod runtime;
