use std::fs;
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

/// Reads an IDX image/label pair. Pixels are scaled to `[0, 1]`; labels are
/// kept as the digit value.
pub fn parse_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let img = fs::read(images)?;
    let lab = fs::read(labels)?;
    from_bytes(&img, images, &lab, labels)
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format { path: path.to_path_buf(), msg: "truncated header".into() })
}

pub(crate) fn from_bytes(img: &[u8], img_path: &Path, lab: &[u8], lab_path: &Path) -> Result<Dataset> {
    let bad = |path: &Path, msg: String| Error::Format { path: path.to_path_buf(), msg };
    let magic = be_u32(img, 0, img_path)?;
    if magic != IMAGE_MAGIC {
        return Err(bad(img_path, format!("bad image magic {magic:#x}")));
    }
    let magic = be_u32(lab, 0, lab_path)?;
    if magic != LABEL_MAGIC {
        return Err(bad(lab_path, format!("bad label magic {magic:#x}")));
    }
    let n = be_u32(img, 4, img_path)? as usize;
    let rows = be_u32(img, 8, img_path)? as usize;
    let cols = be_u32(img, 12, img_path)? as usize;
    let n_lab = be_u32(lab, 4, lab_path)? as usize;
    if n != n_lab {
        return Err(bad(lab_path, format!("{n_lab} labels for {n} images")));
    }
    let d = rows
        .checked_mul(cols)
        .ok_or_else(|| bad(img_path, "image size overflows".into()))?;
    let need = n
        .checked_mul(d)
        .and_then(|v| v.checked_add(16))
        .ok_or_else(|| bad(img_path, "image count overflows".into()))?;
    if img.len() < need {
        return Err(bad(img_path, format!("truncated: {} bytes, expected {need}", img.len())));
    }
    if lab.len() < 8 + n {
        return Err(bad(lab_path, format!("truncated: {} bytes, expected {}", lab.len(), 8 + n)));
    }
    let features = img[16..need].iter().map(|&b| b as f64 / 255.0).collect();
    let labels = lab[8..8 + n].iter().map(|&b| b as f64).collect();
    Dataset::new(d, features, labels, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn encode(images: &[[u8; 4]], labels: &[u8]) -> (Vec<u8>, Vec<u8>) {
        let mut img = Vec::new();
        img.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
        img.extend_from_slice(&(images.len() as u32).to_be_bytes());
        img.extend_from_slice(&2u32.to_be_bytes());
        img.extend_from_slice(&2u32.to_be_bytes());
        for im in images {
            img.extend_from_slice(im);
        }
        let mut lab = Vec::new();
        lab.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
        lab.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        lab.extend_from_slice(labels);
        (img, lab)
    }

    #[test]
    fn reads_and_scales_pixels() {
        let (img, lab) = encode(&[[0, 255, 51, 0], [255, 255, 0, 0]], &[7, 1]);
        let ds = from_bytes(&img, Path::new("i"), &lab, Path::new("l")).unwrap();
        assert_eq!(ds.dim(), 4);
        assert_eq!(ds.row(0), &[0.0, 1.0, 0.2, 0.0]);
        assert_eq!(ds.labels(), &[7.0, 1.0]);
    }

    #[test]
    fn rejects_wrong_magic() {
        let (mut img, lab) = encode(&[[0; 4]], &[1]);
        img[3] = 0x01;
        assert!(from_bytes(&img, Path::new("i"), &lab, Path::new("l")).is_err());
    }

    #[test]
    fn rejects_truncation() {
        let (img, lab) = encode(&[[0; 4], [1; 4]], &[1, 2]);
        assert!(from_bytes(&img[..img.len() - 1], Path::new("i"), &lab, Path::new("l")).is_err());
        assert!(from_bytes(&img, Path::new("i"), &lab[..lab.len() - 1], Path::new("l")).is_err());
    }
}
