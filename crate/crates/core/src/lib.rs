//! Learned wind-disturbance dynamics for quadrotor trajectory tracking.

pub mod adapter;
pub mod bench;
pub mod data;
pub mod dynamics;
pub mod error;
pub mod mpc;
pub mod net;
pub mod train;
pub mod trajectory;
mod util;

pub use error::{Error, Result};
