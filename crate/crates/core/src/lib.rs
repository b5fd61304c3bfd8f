//! Online mutual-information learning on video streams driven by
//! second-order cognitive action laws, with a gravitational focus of
//! attention selecting where the network looks.

pub mod attention;
pub mod checkpoint;
pub mod dynamics;
pub mod error;
pub mod evaluation;
pub mod network;
pub mod objective;
pub mod rng;
pub mod stream;
pub mod theory;

pub use error::{Error, Result};
pub use stream::{Frame, StreamSpec};
