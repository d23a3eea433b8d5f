//! IDX container decoding over in-memory bytes.
//!
//! Layout (big-endian): a `u32` magic, one `u32` per dimension, then raw
//! unsigned bytes. Images use magic `0x00000803` with dimensions
//! `count, rows, cols`; labels use `0x00000801` with dimension `count`.

use alloc::format;
use alloc::vec::Vec;

use super::ClassLabel;
use crate::ndmath::Vector;
use crate::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq)]
pub struct ImageStack {
    pub rows: usize,
    pub cols: usize,
    pub images: Vec<Vector>,
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    let chunk = bytes.get(offset..offset + 4).ok_or(Error::Truncated {
        needed: offset + 4,
        available: bytes.len(),
    })?;
    Ok(u32::from_be_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]))
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let found = read_u32(bytes, 0)?;
    if found != expected {
        return Err(Error::BadMagic { found, expected });
    }
    Ok(())
}

fn payload(bytes: &[u8], header: usize, len: usize) -> Result<&[u8]> {
    let needed = header + len;
    if bytes.len() < needed {
        return Err(Error::Truncated {
            needed,
            available: bytes.len(),
        });
    }
    if bytes.len() > needed {
        return Err(Error::IdxDimension(format!(
            "{} trailing bytes after declared payload",
            bytes.len() - needed
        )));
    }
    Ok(&bytes[header..])
}

/// Decodes an IDX3 image file; pixels are scaled to `[0, 1]` by `/ 255`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<ImageStack> {
    check_magic(bytes, IMAGES_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::IdxDimension(format!("degenerate image size {rows}x{cols}")));
    }
    let dim = rows * cols;
    let len = count
        .checked_mul(dim)
        .ok_or_else(|| Error::IdxDimension("image payload size overflows".into()))?;
    let raw = payload(bytes, 16, len)?;
    let images = raw
        .chunks_exact(dim)
        .map(|px| Vector::from_raw(px.iter().map(|&b| f64::from(b) / 255.0).collect()))
        .collect();
    Ok(ImageStack { rows, cols, images })
}

/// Decodes an IDX1 label file, validating every label against `0..=9`.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<ClassLabel>> {
    check_magic(bytes, LABELS_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    let raw = payload(bytes, 8, count)?;
    raw.iter().map(|&b| ClassLabel::new(b)).collect()
}

/// Re-encodes normalized images as an IDX3 file; `v * 255` is rounded back
/// to the nearest byte.
pub fn encode_idx_images(images: &[Vector], rows: usize, cols: usize) -> Result<Vec<u8>> {
    let dim = rows * cols;
    let mut out = Vec::with_capacity(16 + images.len() * dim);
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&(images.len() as u32).to_be_bytes());
    out.extend_from_slice(&(rows as u32).to_be_bytes());
    out.extend_from_slice(&(cols as u32).to_be_bytes());
    for img in images {
        if img.dim() != dim {
            return Err(Error::shape("encode_idx_images", img.dim(), dim));
        }
        out.extend(img.iter().map(|&v| libm::round(v.clamp(0.0, 1.0) * 255.0) as u8));
    }
    Ok(out)
}

pub fn encode_idx_labels(labels: &[ClassLabel]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend(labels.iter().map(|l| l.get()));
    out
}
