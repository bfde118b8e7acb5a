//! QPH container: `"QPH1"`, u8 dtype, u32 LE rows, u32 LE cols, LE row-major samples.

use std::fs;
use std::path::Path;

use rustfft::num_complex::Complex32;

use crate::error::{Error, Result};
use crate::field::RealImage;

const MAGIC: &[u8; 4] = b"QPH1";
const HEADER_LEN: usize = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32 = 1,
    F64 = 2,
    Complex64 = 3,
}

impl Dtype {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(Dtype::F32),
            2 => Some(Dtype::F64),
            3 => Some(Dtype::Complex64),
            _ => None,
        }
    }

    pub fn sample_bytes(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 | Dtype::Complex64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum QphPayload {
    F32(Vec<f32>),
    F64(Vec<f64>),
    Complex64(Vec<Complex32>),
}

/// A decoded container, kept in its stored precision.
#[derive(Debug, Clone, PartialEq)]
pub struct QphArray {
    pub rows: usize,
    pub cols: usize,
    pub payload: QphPayload,
}

impl QphArray {
    pub fn new(rows: usize, cols: usize, payload: QphPayload) -> Result<Self> {
        let len = match &payload {
            QphPayload::F32(v) => v.len(),
            QphPayload::F64(v) => v.len(),
            QphPayload::Complex64(v) => v.len(),
        };
        if rows == 0 || cols == 0 || rows > u32::MAX as usize || cols > u32::MAX as usize {
            return Err(Error::size(format!("unsupported QPH dimensions {rows}x{cols}")));
        }
        if rows.checked_mul(cols) != Some(len) {
            return Err(Error::size(format!("payload length {len} does not match {rows}x{cols}")));
        }
        Ok(QphArray { rows, cols, payload })
    }

    pub fn dtype(&self) -> Dtype {
        match self.payload {
            QphPayload::F32(_) => Dtype::F32,
            QphPayload::F64(_) => Dtype::F64,
            QphPayload::Complex64(_) => Dtype::Complex64,
        }
    }

    /// Stores a real image at the requested real precision.
    pub fn from_real(img: &RealImage, dtype: Dtype) -> Result<Self> {
        let payload = match dtype {
            Dtype::F32 => QphPayload::F32(img.data().iter().map(|&v| v as f32).collect()),
            Dtype::F64 => QphPayload::F64(img.data().to_vec()),
            Dtype::Complex64 => return Err(Error::param("a real image cannot be stored as complex64")),
        };
        QphArray::new(img.rows(), img.cols(), payload)
    }

    /// Widens a real payload to a `RealImage`.
    pub fn to_real(&self) -> Result<RealImage> {
        let data = match &self.payload {
            QphPayload::F32(v) => v.iter().map(|&x| x as f64).collect(),
            QphPayload::F64(v) => v.clone(),
            QphPayload::Complex64(_) => return Err(Error::param("expected a real QPH payload, found complex64")),
        };
        RealImage::new(self.rows, self.cols, data)
    }
}

pub fn encode_qph(arr: &QphArray) -> Vec<u8> {
    let n = arr.rows * arr.cols;
    let mut out = Vec::with_capacity(HEADER_LEN + n * arr.dtype().sample_bytes());
    out.extend_from_slice(MAGIC);
    out.push(arr.dtype().code());
    out.extend_from_slice(&(arr.rows as u32).to_le_bytes());
    out.extend_from_slice(&(arr.cols as u32).to_le_bytes());
    match &arr.payload {
        QphPayload::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        QphPayload::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        QphPayload::Complex64(v) => v.iter().for_each(|z| {
            out.extend_from_slice(&z.re.to_le_bytes());
            out.extend_from_slice(&z.im.to_le_bytes());
        }),
    }
    out
}

/// Decodes a container; `path` is used only for diagnostics.
pub fn decode_qph(bytes: &[u8], path: &Path) -> Result<QphArray> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(path, format!("truncated header ({} bytes)", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::format(path, "bad magic bytes, expected \"QPH1\""));
    }
    let dtype = Dtype::from_code(bytes[4])
        .ok_or_else(|| Error::format(path, format!("unknown dtype code {}", bytes[4])))?;
    let rows = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::format(path, format!("zero dimension {rows}x{cols}")));
    }
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(dtype.sample_bytes()))
        .ok_or_else(|| Error::format(path, "dimensions overflow"))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != expected {
        return Err(Error::format(
            path,
            format!("payload is {} bytes, header implies {expected}", body.len()),
        ));
    }
    let payload = match dtype {
        Dtype::F32 => QphPayload::F32(
            body.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect(),
        ),
        Dtype::F64 => QphPayload::F64(
            body.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect(),
        ),
        Dtype::Complex64 => QphPayload::Complex64(
            body.chunks_exact(8)
                .map(|b| {
                    Complex32::new(
                        f32::from_le_bytes(b[..4].try_into().unwrap()),
                        f32::from_le_bytes(b[4..].try_into().unwrap()),
                    )
                })
                .collect(),
        ),
    };
    Ok(QphArray { rows, cols, payload })
}

pub fn read_qph(path: &Path) -> Result<QphArray> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_qph(&bytes, path)
}

pub fn write_qph(path: &Path, arr: &QphArray) -> Result<()> {
    fs::write(path, encode_qph(arr)).map_err(|e| Error::io(path, e))
}

/// Reads a real-valued container (f32 or f64) as a `RealImage`.
pub fn read_real_qph(path: &Path) -> Result<RealImage> {
    read_qph(path)?.to_real().map_err(|e| match e {
        Error::Parameter(m) | Error::Size(m) => Error::format(path, m),
        other => other,
    })
}

pub fn write_real_qph(path: &Path, img: &RealImage, dtype: Dtype) -> Result<()> {
    write_qph(path, &QphArray::from_real(img, dtype)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("mem.qph")
    }

    #[test]
    fn header_layout_is_exact() {
        let arr = QphArray::new(2, 3, QphPayload::F32(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0])).unwrap();
        let bytes = encode_qph(&arr);
        assert_eq!(&bytes[..4], b"QPH1");
        assert_eq!(bytes[4], 1);
        assert_eq!(&bytes[5..9], &[2, 0, 0, 0]);
        assert_eq!(&bytes[9..13], &[3, 0, 0, 0]);
        assert_eq!(&bytes[13..17], &1.0f32.to_le_bytes());
        assert_eq!(bytes.len(), 13 + 24);
    }

    #[test]
    fn round_trips_every_dtype_bit_exactly() {
        let cases = [
            QphPayload::F32(vec![0.1, -0.0, f32::MIN_POSITIVE, f32::NAN]),
            QphPayload::F64(vec![std::f64::consts::PI, -1e300, 5e-324, -0.0]),
            QphPayload::Complex64(vec![
                Complex32::new(1.5, -2.5),
                Complex32::new(0.0, f32::INFINITY),
                Complex32::new(-0.0, 3.0),
                Complex32::new(7.0, 8.0),
            ]),
        ];
        for payload in cases {
            let arr = QphArray::new(2, 2, payload).unwrap();
            let bytes = encode_qph(&arr);
            let back = decode_qph(&bytes, p()).unwrap();
            assert_eq!(encode_qph(&back), bytes);
        }
    }

    #[test]
    fn rejects_malformed_containers() {
        let good = encode_qph(&QphArray::new(1, 2, QphPayload::F64(vec![1.0, 2.0])).unwrap());
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(decode_qph(&bad_magic, p()), Err(Error::Format { .. })));
        let mut bad_dtype = good.clone();
        bad_dtype[4] = 9;
        assert!(matches!(decode_qph(&bad_dtype, p()), Err(Error::Format { .. })));
        assert!(matches!(decode_qph(&good[..good.len() - 1], p()), Err(Error::Format { .. })));
        let mut trailing = good.clone();
        trailing.push(0);
        assert!(matches!(decode_qph(&trailing, p()), Err(Error::Format { .. })));
        assert!(matches!(decode_qph(&good[..7], p()), Err(Error::Format { .. })));
    }

    #[test]
    fn format_error_names_the_file() {
        let err = decode_qph(b"nope", Path::new("/tmp/holo.qph")).unwrap_err();
        assert!(err.to_string().contains("/tmp/holo.qph"));
    }

    #[test]
    fn complex_payload_is_not_a_real_image() {
        let arr = QphArray::new(1, 1, QphPayload::Complex64(vec![Complex32::new(1.0, 0.0)])).unwrap();
        assert!(arr.to_real().is_err());
    }
}
