//! IDX container used by MNIST and Fashion-MNIST.
//!
//! Big-endian: a 4-byte magic `00 00 <type> <ndims>` (type `0x08` = unsigned
//! byte), one `u32` extent per dimension, then the raw values.

use std::fs;
use std::path::Path;

use super::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::Parse { offset: at as u64, message: format!("truncated {what}") })
}

fn check_magic(bytes: &[u8], expected: u32, kind: &str) -> Result<()> {
    let magic = read_u32(bytes, 0, "magic")?;
    if magic != expected {
        return Err(Error::Format(format!("{kind} file has magic 0x{magic:08x}, expected 0x{expected:08x}")));
    }
    Ok(())
}

/// Decodes an image file into `(count, rows, cols, pixels)`.
pub fn decode_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<u8>)> {
    check_magic(bytes, IMAGES_MAGIC, "images")?;
    let n = read_u32(bytes, 4, "image count")? as usize;
    let rows = read_u32(bytes, 8, "row count")? as usize;
    let cols = read_u32(bytes, 12, "column count")? as usize;
    let body = &bytes[16..];
    let need = n * rows * cols;
    if body.len() != need {
        return Err(Error::Parse {
            offset: 16 + body.len().min(need) as u64,
            message: format!("expected {need} pixel bytes, found {}", body.len()),
        });
    }
    Ok((n, rows, cols, body.to_vec()))
}

pub fn decode_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, LABELS_MAGIC, "labels")?;
    let n = read_u32(bytes, 4, "label count")? as usize;
    let body = &bytes[8..];
    if body.len() != n {
        return Err(Error::Parse {
            offset: 8 + body.len().min(n) as u64,
            message: format!("expected {n} label bytes, found {}", body.len()),
        });
    }
    Ok(body.to_vec())
}

pub fn encode_idx_images(rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    let n = pixels.len() / (rows * cols);
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGES_MAGIC, n as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Builds a dataset from decoded IDX bytes. Class names are the label
/// values `"0"…`; the class count is `max(label) + 1` (at least 2).
pub fn dataset_from_idx(images: &[u8], labels: &[u8]) -> Result<LabeledDataset> {
    let (n, rows, cols, pixels) = decode_idx_images(images)?;
    let labels = decode_idx_labels(labels)?;
    if labels.len() != n {
        return Err(Error::Validation(format!("images file holds {n} samples but labels file holds {}", labels.len())));
    }
    let classes = labels.iter().copied().max().map_or(2, |m| (m as usize + 1).max(2));
    let data = pixels.iter().map(|&p| p as f64 / 255.0).collect();
    let images = Tensor::new(vec![n, 1, rows, cols], data)?;
    LabeledDataset::new(
        images,
        labels.into_iter().map(usize::from).collect(),
        (0..classes).map(|c| c.to_string()).collect(),
    )
}

pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let images = fs::read(images_path)?;
    let labels = fs::read(labels_path)?;
    dataset_from_idx(&images, &labels)
}

/// Re-encodes a single-channel dataset as an `(images, labels)` IDX pair.
pub fn encode_idx_dataset(ds: &LabeledDataset) -> Result<(Vec<u8>, Vec<u8>)> {
    let [c, h, w] = ds.sample_shape();
    if c != 1 {
        return Err(Error::Validation(format!("IDX export needs one channel, got {c}")));
    }
    if ds.num_classes() > 256 {
        return Err(Error::Validation("IDX labels are single bytes".into()));
    }
    let pixels: Vec<u8> = ds.images().data().iter().map(|&v| (v * 255.0).round() as u8).collect();
    let labels: Vec<u8> = ds.labels().iter().map(|&l| l as u8).collect();
    Ok((encode_idx_images(h, w, &pixels), encode_idx_labels(&labels)))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two 2×3 images written out byte by byte.
    fn fixture() -> (Vec<u8>, Vec<u8>) {
        let images = vec![
            0x00, 0x00, 0x08, 0x03, // magic
            0x00, 0x00, 0x00, 0x02, // 2 images
            0x00, 0x00, 0x00, 0x02, // 2 rows
            0x00, 0x00, 0x00, 0x03, // 3 cols
            0, 51, 102, 153, 204, 255, //
            255, 0, 17, 34, 68, 136,
        ];
        let labels = vec![0x00, 0x00, 0x08, 0x01, 0x00, 0x00, 0x00, 0x02, 7, 3];
        (images, labels)
    }

    #[test]
    fn fixture_decodes_pixel_exact() {
        let (img, lab) = fixture();
        let ds = dataset_from_idx(&img, &lab).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.sample_shape(), [1, 2, 3]);
        assert_eq!(ds.labels(), &[7, 3]);
        assert_eq!(ds.num_classes(), 8);
        assert_eq!(ds.image(0), &[0.0, 0.2, 0.4, 0.6, 0.8, 1.0]);
        assert_eq!(ds.image(1)[2], 17.0 / 255.0);
    }

    #[test]
    fn fixture_reencodes_to_same_bytes() {
        let (img, lab) = fixture();
        let ds = dataset_from_idx(&img, &lab).unwrap();
        let (img2, lab2) = encode_idx_dataset(&ds).unwrap();
        assert_eq!(img2, img);
        assert_eq!(lab2, lab);
    }

    #[test]
    fn labels_with_image_magic_is_format_error() {
        let (img, _) = fixture();
        let bad = vec![0x00, 0x00, 0x08, 0x03, 0x00, 0x00, 0x00, 0x02, 7, 3];
        let err = dataset_from_idx(&img, &bad).unwrap_err();
        assert!(matches!(err, Error::Format(ref m) if m.contains("0x00000803")), "{err}");
    }

    #[test]
    fn count_mismatch_is_validation_error() {
        let (img, _) = fixture();
        let lab = encode_idx_labels(&[1, 2, 3]);
        assert!(matches!(dataset_from_idx(&img, &lab), Err(Error::Validation(_))));
    }

    #[test]
    fn truncated_pixels_is_parse_error() {
        let (img, lab) = fixture();
        assert!(matches!(dataset_from_idx(&img[..20], &lab), Err(Error::Parse { .. })));
    }
}
