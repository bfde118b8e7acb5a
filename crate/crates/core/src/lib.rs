//! Quantitative phase reconstruction for three-wave lateral-shear holograms:
//! single shots, cutouts and patched whole-slide mosaics.

pub mod calibration;
pub mod corpus;
pub mod demod;
pub mod error;
pub mod field;
pub mod forward;
pub mod integrate;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod wsi;

pub use error::{Error, Result};
pub use field::{fft2_forward, fft2_inverse, extract_window, recenter_lobe, ComplexField, RealImage, Rect, SpectralWindow};
