//! Bit-exact weight files.
//!
//! Layout: magic `QNW1`, u8 version (= 1), u32-le layer count, then per
//! layer: u16-le name length, UTF-8 name, u8 ndim, ndim u32-le dims,
//! dims-product f32-le values. A CRC32 (IEEE) of all preceding bytes trails
//! the file.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result, WeightError};

use super::{ArchDescriptor, QNetworkParams, Tensor};

const MAGIC: &[u8; 4] = b"QNW1";
const VERSION: u8 = 1;

/// Serializes parameters; `save -> load` round-trips bitwise.
pub fn save_params(params: &QNetworkParams, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.push(VERSION);
    let named = params.named_tensors();
    buf.extend_from_slice(&(named.len() as u32).to_le_bytes());
    for (name, tensor) in named {
        let name_bytes = name.as_bytes();
        buf.extend_from_slice(&(name_bytes.len() as u16).to_le_bytes());
        buf.extend_from_slice(name_bytes);
        buf.push(tensor.shape().len() as u8);
        for &d in tensor.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in tensor.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    fs::write(path, buf).map_err(|e| Error::io(e, path))
}

/// Loads parameters and validates them against `desc`'s layer table.
pub fn load_params(path: &Path, desc: &ArchDescriptor) -> Result<QNetworkParams> {
    let bytes = fs::read(path).map_err(|e| Error::io(e, path))?;
    let named = parse_weight_file(&bytes)?;

    let layout = desc.layer_layout();
    if named.len() != layout.len() {
        return Err(WeightError::LayerMismatch {
            expected: format!("{} layers", layout.len()),
            found: format!("{} layers", named.len()),
        }
        .into());
    }
    let mut tensors = Vec::with_capacity(named.len());
    for ((name, tensor), (want_name, want_shape)) in named.into_iter().zip(layout) {
        if name != want_name {
            return Err(WeightError::LayerMismatch {
                expected: want_name,
                found: name,
            }
            .into());
        }
        if tensor.shape() != want_shape.as_slice() {
            return Err(WeightError::ShapeMismatch {
                name,
                expected: want_shape,
                found: tensor.shape().to_vec(),
            }
            .into());
        }
        tensors.push(tensor);
    }
    QNetworkParams::from_tensors(desc.clone(), tensors)
}

fn parse_weight_file(bytes: &[u8]) -> Result<Vec<(String, Tensor)>> {
    if bytes.len() < 4 {
        return Err(WeightError::Truncated("magic").into());
    }
    if &bytes[..4] != MAGIC {
        return Err(WeightError::BadMagic.into());
    }
    if bytes.len() < 5 {
        return Err(WeightError::Truncated("version").into());
    }
    if bytes[4] != VERSION {
        return Err(WeightError::BadVersion(bytes[4]).into());
    }
    if bytes.len() < 4 + 1 + 4 + 4 {
        return Err(WeightError::Truncated("header").into());
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored_crc = u32::from_le_bytes(tail.try_into().unwrap());
    if crc32(body) != stored_crc {
        return Err(WeightError::ChecksumMismatch.into());
    }

    let mut cursor = Reader { buf: body, pos: 5 };
    let count = cursor.u32("layer count")?;
    let mut named = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let name_len = cursor.u16("name length")? as usize;
        let name_bytes = cursor.take(name_len, "layer name")?;
        let name = std::str::from_utf8(name_bytes)
            .map_err(|_| WeightError::BadName)?
            .to_string();
        let ndim = cursor.u8("ndim")? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(cursor.u32("dimension")? as usize);
        }
        let n: usize = shape.iter().product();
        let raw = cursor.take(n * 4, "tensor values")?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        named.push((
            name,
            Tensor::new(shape, data).map_err(|_| WeightError::Truncated("tensor shape"))?,
        ));
    }
    if cursor.pos != body.len() {
        return Err(WeightError::LayerMismatch {
            expected: "end of file after last tensor".into(),
            found: format!("{} trailing bytes", body.len() - cursor.pos),
        }
        .into());
    }
    Ok(named)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(WeightError::Truncated(what).into());
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &'static str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

/// CRC-32 (IEEE 802.3, reflected polynomial 0xEDB88320).
pub fn crc32(bytes: &[u8]) -> u32 {
    let mut crc = !0u32;
    for &b in bytes {
        crc ^= b as u32;
        for _ in 0..8 {
            let mask = (crc & 1).wrapping_neg();
            crc = (crc >> 1) ^ (0xEDB8_8320 & mask);
        }
    }
    !crc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::HeadKind;

    fn params() -> QNetworkParams {
        QNetworkParams::init(ArchDescriptor::standard(HeadKind::Dueling), 99).unwrap()
    }

    #[test]
    fn crc32_known_answer() {
        // Standard check value for the ASCII string "123456789".
        assert_eq!(crc32(b"123456789"), 0xCBF4_3926);
        assert_eq!(crc32(b""), 0);
    }

    #[test]
    fn roundtrip_is_bitwise_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.qnw");
        let p = params();
        save_params(&p, &path).unwrap();
        let loaded = load_params(&path, p.descriptor()).unwrap();
        for (a, b) in p.tensors().iter().zip(loaded.tensors()) {
            assert_eq!(a.shape(), b.shape());
            let ab: Vec<u32> = a.data().iter().map(|v| v.to_bits()).collect();
            let bb: Vec<u32> = b.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(ab, bb);
        }
    }

    #[test]
    fn truncated_file_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.qnw");
        let p = params();
        save_params(&p, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let cut = &bytes[..bytes.len() / 2];
        std::fs::write(&path, cut).unwrap();
        match load_params(&path, p.descriptor()) {
            Err(Error::Weights(WeightError::Truncated(_))) => {}
            // A cut that lands between sections can also read as a checksum
            // problem; either way it must not load.
            Err(Error::Weights(WeightError::ChecksumMismatch)) => {}
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn corrupted_payload_fails_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.qnw");
        let p = params();
        save_params(&p, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        std::fs::write(&path, bytes).unwrap();
        match load_params(&path, p.descriptor()) {
            Err(Error::Weights(WeightError::ChecksumMismatch)) => {}
            other => panic!("expected checksum error, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_and_version() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.qnw");
        std::fs::write(&path, b"NOPE").unwrap();
        match load_params(&path, params().descriptor()) {
            Err(Error::Weights(WeightError::BadMagic)) => {}
            other => panic!("expected magic error, got {other:?}"),
        }

        let p = params();
        save_params(&p, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4] = 9;
        let crc = crc32(&bytes[..bytes.len() - 4]);
        let n = bytes.len();
        bytes[n - 4..].copy_from_slice(&crc.to_le_bytes());
        std::fs::write(&path, bytes).unwrap();
        match load_params(&path, p.descriptor()) {
            Err(Error::Weights(WeightError::BadVersion(9))) => {}
            other => panic!("expected version error, got {other:?}"),
        }
    }

    #[test]
    fn architecture_mismatch_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.qnw");
        let p = params();
        save_params(&p, &path).unwrap();
        // Same layer names, different window -> different tensor shapes.
        let mut other = ArchDescriptor::standard(HeadKind::Dueling);
        other.window = 20;
        match load_params(&path, &other) {
            Err(Error::Weights(WeightError::ShapeMismatch { .. })) => {}
            other => panic!("expected shape mismatch, got {other:?}"),
        }
        // Different head kind -> layer list mismatch.
        let linear = ArchDescriptor::standard(HeadKind::Linear);
        match load_params(&path, &linear) {
            Err(Error::Weights(WeightError::LayerMismatch { .. })) => {}
            other => panic!("expected layer mismatch, got {other:?}"),
        }
    }
}
