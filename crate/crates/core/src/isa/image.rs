//! Binary program image.
//!
//! Layout (all little-endian):
//!
//! | offset | size | field                          |
//! |--------|------|--------------------------------|
//! | 0      | 4    | magic `SC3P`                   |
//! | 4      | 4    | version                        |
//! | 8      | 4    | text length in 32-bit words    |
//! | 12     | 4    | data length in bytes           |
//! | 16     | 4·n  | text words                     |
//! | …      | 8    | data base address              |
//! | …      | m    | data bytes                     |
//!
//! Symbol names are not stored.

use thiserror::Error;

use super::Program;

pub const IMAGE_MAGIC: [u8; 4] = *b"SC3P";
pub const IMAGE_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ImageError {
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported image version {0}")]
    Version(u32),
    #[error("image truncated")]
    Truncated,
    #[error("{0} trailing bytes after image")]
    Trailing(usize),
}

impl Program {
    pub fn to_image(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(24 + self.words().len() * 4 + self.data.len());
        out.extend_from_slice(&IMAGE_MAGIC);
        out.extend_from_slice(&IMAGE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.words().len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.data.len() as u32).to_le_bytes());
        for w in self.words() {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out.extend_from_slice(&self.data_base.to_le_bytes());
        out.extend_from_slice(&self.data);
        out
    }

    /// Load an image. Illegal instruction words are kept and trap when
    /// executed.
    pub fn from_image(bytes: &[u8]) -> Result<Program, ImageError> {
        let u32_at = |off: usize| -> Result<u32, ImageError> {
            bytes
                .get(off..off + 4)
                .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
                .ok_or(ImageError::Truncated)
        };
        if bytes.get(..4) != Some(&IMAGE_MAGIC[..]) {
            return Err(ImageError::BadMagic);
        }
        let version = u32_at(4)?;
        if version != IMAGE_VERSION {
            return Err(ImageError::Version(version));
        }
        let text_len = u32_at(8)? as usize;
        let data_len = u32_at(12)? as usize;
        let words = (0..text_len).map(|i| u32_at(16 + 4 * i)).collect::<Result<Vec<_>, _>>()?;
        let base_off = 16 + 4 * text_len;
        let data_base = bytes
            .get(base_off..base_off + 8)
            .map(|b| u64::from_le_bytes(b.try_into().unwrap()))
            .ok_or(ImageError::Truncated)?;
        let data_off = base_off + 8;
        let data = bytes.get(data_off..data_off + data_len).ok_or(ImageError::Truncated)?.to_vec();
        let end = data_off + data_len;
        if bytes.len() != end {
            return Err(ImageError::Trailing(bytes.len() - end));
        }
        Ok(Program::from_words(words, data_base, data))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::parse_assembly;

    #[test]
    fn header_and_round_trip() {
        let p = parse_assembly(".data 0x40\n.word64 5\n.text\nadd r1, r2, r3\nhalt").unwrap();
        let img = p.to_image();
        assert_eq!(&img[..4], b"SC3P");
        assert_eq!(u32::from_le_bytes(img[8..12].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(img[12..16].try_into().unwrap()), 8);
        assert!(Program::from_image(&img).unwrap().same_image(&p));
    }

    #[test]
    fn rejects_malformed() {
        assert_eq!(Program::from_image(b"nope"), Err(ImageError::BadMagic));
        let p = parse_assembly("halt").unwrap();
        let img = p.to_image();
        assert_eq!(Program::from_image(&img[..img.len() - 1]), Err(ImageError::Truncated));
        let mut long = img.clone();
        long.push(0);
        assert_eq!(Program::from_image(&long), Err(ImageError::Trailing(1)));
    }

    #[test]
    fn illegal_words_survive_loading() {
        let mut img = parse_assembly("halt").unwrap().to_image();
        img[16..20].copy_from_slice(&(63u32 << 26).to_le_bytes());
        let p = Program::from_image(&img).unwrap();
        assert!(p.fetch(0).unwrap().is_err());
    }
}
