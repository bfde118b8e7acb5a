//! File formats: the QPH raw container, PNG previews and masks, JSON helpers.

mod json;
mod png;
mod qph;

pub use self::json::{read_json, write_json};
pub use self::png::{read_gray_png, read_mask_png, write_mask_png, write_png16, PreviewScale};
pub use self::qph::{decode_qph, encode_qph, read_qph, read_real_qph, write_qph, write_real_qph, Dtype, QphArray, QphPayload};
pub use rustfft::num_complex::Complex32;
