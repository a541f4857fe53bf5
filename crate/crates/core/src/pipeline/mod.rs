//! Files, fixtures and presentation around the numerical core.

pub mod manifest;
pub mod raster;
pub mod scenes;
pub mod space;
pub mod volume;
