//! Little-endian binary containers shared by the artifact formats.
//!
//! Every container opens with an 8-byte magic. Shorter tags are padded with
//! NUL bytes (`INFKERN\0`, `INFCIJ\0\0`, `INFP2P\0\0`).


use crate::error::{Error, Result};

pub const BASIS_MAGIC: [u8; 8] = *b"INFBASIS";
pub const MODEL_MAGIC: [u8; 8] = *b"INFMODEL";
pub const KERNEL_MAGIC: [u8; 8] = *b"INFKERN\0";
pub const COEFFS_MAGIC: [u8; 8] = *b"INFCIJ\0\0";
pub const P2P_MAGIC: [u8; 8] = *b"INFP2P\0\0";

#[derive(Default)]
pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new(magic: [u8; 8]) -> Writer {
        Writer { buf: magic.to_vec() }
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn f64s(&mut self, values: &[f64]) -> &mut Self {
        for v in values {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
        self
    }

    pub fn f32s(&mut self, values: &[f32]) -> &mut Self {
        for v in values {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
        self
    }

    /// Length-prefixed (u64) JSON blob.
    pub fn json_block<T: serde::Serialize>(&mut self, value: &T) -> Result<&mut Self> {
        let text = serde_json::to_vec(value)?;
        self.u64(text.len() as u64);
        self.buf.extend_from_slice(&text);
        Ok(self)
    }

    /// Unprefixed JSON running to the end of the file.
    pub fn json_trailer<T: serde::Serialize>(&mut self, value: &T) -> Result<&mut Self> {
        self.buf.extend_from_slice(&serde_json::to_vec(value)?);
        Ok(self)
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8], magic: [u8; 8]) -> Result<Reader<'a>> {
        if bytes.len() < 8 || bytes[..8] != magic {
            return Err(Error::Container(format!(
                "expected magic {:?}",
                String::from_utf8_lossy(&magic).trim_end_matches('\0')
            )));
        }
        Ok(Reader { bytes, pos: 8 })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Container("unexpected end of data".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Container("length overflow".into()))
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Container("length overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| Error::Container("length overflow".into()))?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn json_block<T: serde::de::DeserializeOwned>(&mut self) -> Result<T> {
        let n = self.len()?;
        Ok(serde_json::from_slice(self.take(n)?)?)
    }

    pub fn json_trailer<T: serde::de::DeserializeOwned>(&mut self) -> Result<T> {
        let rest = &self.bytes[self.pos..];
        self.pos = self.bytes.len();
        Ok(serde_json::from_slice(rest)?)
    }

    pub fn finish(&self) -> Result<()> {
        if self.pos == self.bytes.len() {
            Ok(())
        } else {
            Err(Error::Container(format!(
                "{} trailing bytes",
                self.bytes.len() - self.pos
            )))
        }
    }
}
