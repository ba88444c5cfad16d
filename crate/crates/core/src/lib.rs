pub mod bench;
pub mod cloud;
pub mod completion;
pub mod error;
pub mod filter;
pub mod grasp;
pub mod net;
pub mod nn;
pub mod pcf;
pub mod pipeline;
pub mod scene;

pub use error::{PcfError, Result};
