//! Numerical engine for irreversible capacity expansion under weighted
//! discounting: investment triggers, value functions, and the diagnostics
//! that decide whether the smooth-pasting construction is valid.

pub mod analysis;
pub mod discounting;
pub mod equilibrium;
pub mod quad;
pub mod verify;
