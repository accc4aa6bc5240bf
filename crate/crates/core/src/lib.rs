//! Classical and buffered environmental contours from Monte Carlo samples,
//! and risk-based structural design on top of them.
//!
//! The pipeline runs [`envdata`] (samples) → [`contour`] (C(u), C̄(u) and
//! boundaries) → [`design`] / [`lindesign`] (risk of total cost and the
//! contour-based design search). [`risk`] holds the empirical risk measures
//! shared by all of them.

pub mod cli;
pub mod contour;
pub mod design;
pub mod envdata;
pub mod error;
pub mod lindesign;
pub mod normal;
pub mod risk;

pub use error::{Error, Result};
