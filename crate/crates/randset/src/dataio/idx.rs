//! IDX container parsing (the MNIST distribution format): big-endian magic
//! and dimension sizes, then raw unsigned bytes.

use crate::error::{Error, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

/// A stack of equally sized grayscale images, intensities 0-255.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pixels: Vec<u8>,
}

/// Borrowed view of one image inside an [`IdxImages`] stack.
#[derive(Debug, Clone, Copy)]
pub struct ImageRef<'a> {
    pub pixels: &'a [u8],
    pub rows: usize,
    pub cols: usize,
}

impl IdxImages {
    pub fn image(&self, i: usize) -> Result<ImageRef<'_>> {
        if i >= self.count {
            return Err(Error::InvalidArgument(format!(
                "image index {i} out of range for {} images",
                self.count
            )));
        }
        let n = self.rows * self.cols;
        Ok(ImageRef { pixels: &self.pixels[i * n..(i + 1) * n], rows: self.rows, cols: self.cols })
    }

    pub fn raw_pixels(&self) -> &[u8] {
        &self.pixels
    }
}

/// Either payload an IDX file can carry here.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IdxData {
    Images(IdxImages),
    Labels(Vec<u8>),
}

fn read_u32_be(bytes: &[u8], offset: usize) -> Result<u32> {
    let end = offset + 4;
    if end > bytes.len() {
        return Err(Error::Format(format!(
            "IDX header truncated at byte {offset}"
        )));
    }
    Ok(u32::from_be_bytes(bytes[offset..end].try_into().unwrap()))
}

/// Parses an IDX byte blob into images (magic 0x00000803) or labels
/// (magic 0x00000801). The payload length must match the header dimensions
/// exactly.
pub fn parse_idx(bytes: &[u8]) -> Result<IdxData> {
    let magic = read_u32_be(bytes, 0)?;
    match magic {
        IMAGES_MAGIC => {
            let count = read_u32_be(bytes, 4)? as usize;
            let rows = read_u32_be(bytes, 8)? as usize;
            let cols = read_u32_be(bytes, 12)? as usize;
            let want = count
                .checked_mul(rows)
                .and_then(|v| v.checked_mul(cols))
                .ok_or_else(|| Error::Format("IDX dimensions overflow".into()))?;
            let payload = &bytes[16.min(bytes.len())..];
            if payload.len() != want {
                return Err(Error::Format(format!(
                    "IDX image payload has {} bytes, header implies {want}",
                    payload.len()
                )));
            }
            Ok(IdxData::Images(IdxImages { count, rows, cols, pixels: payload.to_vec() }))
        }
        LABELS_MAGIC => {
            let count = read_u32_be(bytes, 4)? as usize;
            let payload = &bytes[8.min(bytes.len())..];
            if payload.len() != count {
                return Err(Error::Format(format!(
                    "IDX label payload has {} bytes, header implies {count}",
                    payload.len()
                )));
            }
            Ok(IdxData::Labels(payload.to_vec()))
        }
        other => Err(Error::Format(format!(
            "unrecognized IDX magic 0x{other:08X}"
        ))),
    }
}

/// [`parse_idx`] restricted to image files.
pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    match parse_idx(bytes)? {
        IdxData::Images(imgs) => Ok(imgs),
        IdxData::Labels(_) => {
            Err(Error::Format("expected an IDX image file, found labels".into()))
        }
    }
}

/// [`parse_idx`] restricted to label files.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    match parse_idx(bytes)? {
        IdxData::Labels(l) => Ok(l),
        IdxData::Images(_) => {
            Err(Error::Format("expected an IDX label file, found images".into()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image_file(count: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut f = Vec::new();
        f.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
        f.extend_from_slice(&count.to_be_bytes());
        f.extend_from_slice(&rows.to_be_bytes());
        f.extend_from_slice(&cols.to_be_bytes());
        f.extend_from_slice(pixels);
        f
    }

    #[test]
    fn parses_hand_built_image_file() {
        // 1 image of 2x2 with pixels [0, 255, 128, 1].
        let f = image_file(1, 2, 2, &[0, 255, 128, 1]);
        let imgs = parse_idx_images(&f).unwrap();
        assert_eq!((imgs.count, imgs.rows, imgs.cols), (1, 2, 2));
        let img = imgs.image(0).unwrap();
        assert_eq!(img.pixels, &[0, 255, 128, 1]);
        assert!(imgs.image(1).is_err());
    }

    #[test]
    fn parses_hand_built_label_file() {
        let mut f = Vec::new();
        f.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
        f.extend_from_slice(&1u32.to_be_bytes());
        f.push(7);
        assert_eq!(parse_idx_labels(&f).unwrap(), vec![7]);
    }

    #[test]
    fn rejects_bad_magic() {
        let f = 0xDEADBEEFu32.to_be_bytes().to_vec();
        assert!(matches!(parse_idx(&f), Err(Error::Format(_))));
    }

    #[test]
    fn rejects_truncated_and_oversized_payloads() {
        let f = image_file(2, 2, 2, &[0; 7]);
        assert!(matches!(parse_idx(&f), Err(Error::Format(_))));
        let f = image_file(1, 2, 2, &[0; 5]);
        assert!(matches!(parse_idx(&f), Err(Error::Format(_))));
        assert!(parse_idx(&[0x00, 0x08]).is_err());
    }

    #[test]
    fn kind_restrictions() {
        let f = image_file(1, 1, 1, &[9]);
        assert!(parse_idx_labels(&f).is_err());
    }
}
