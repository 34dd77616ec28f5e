pub mod calib;
pub mod depth;
pub mod disparity;
pub mod error;
pub mod fill;
pub mod model;
pub mod panel;
pub mod par;
pub mod pipeline;
pub mod retarget;
pub mod service;
pub mod synth;
pub mod synthetic;

pub use error::{Error, Result};
pub use model::{AngularCoord, DepthMap, DisparityMap, LightFieldGrid, ScalarMap, ViewImage};
