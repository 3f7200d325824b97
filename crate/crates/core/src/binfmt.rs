//! Little-endian writer/reader helpers shared by the store and index files.
//!
//! Every file ends with a CRC32 of all bytes that precede it.

use std::fmt;

pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new(magic: &[u8; 4]) -> Self {
        Self { buf: magic.to_vec() }
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64s(&mut self, vs: &[f64]) {
        for &v in vs {
            self.f64(v);
        }
    }

    pub fn str(&mut self, s: &str) {
        self.u32(u32::try_from(s.len()).expect("string shorter than 4 GiB"));
        self.buf.extend_from_slice(s.as_bytes());
    }

    pub fn finish(mut self) -> Vec<u8> {
        let crc = crc32fast::hash(&self.buf);
        self.buf.extend_from_slice(&crc.to_le_bytes());
        self.buf
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FormatError {
    TooShort,
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    Checksum { stored: u32, computed: u32 },
    Truncated { offset: usize, wanted: usize },
    BadUtf8 { offset: usize },
    TrailingBytes(usize),
    Invalid(String),
}

impl fmt::Display for FormatError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::TooShort => f.write_str("file too short"),
            Self::BadMagic { expected, found } => write!(
                f,
                "bad magic: expected {:?}, found {:?}",
                String::from_utf8_lossy(expected),
                String::from_utf8_lossy(found)
            ),
            Self::Checksum { stored, computed } => {
                write!(f, "checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")
            }
            Self::Truncated { offset, wanted } => {
                write!(f, "truncated at byte {offset} (wanted {wanted} more)")
            }
            Self::BadUtf8 { offset } => write!(f, "invalid UTF-8 string at byte {offset}"),
            Self::TrailingBytes(n) => write!(f, "{n} unexpected trailing bytes"),
            Self::Invalid(msg) => f.write_str(msg),
        }
    }
}

impl std::error::Error for FormatError {}

pub(crate) struct Reader<'a> {
    body: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    /// Verify magic and checksum, then position after the magic.
    pub fn open(bytes: &'a [u8], magic: &[u8; 4]) -> Result<Self, FormatError> {
        if bytes.len() < 8 {
            return Err(FormatError::TooShort);
        }
        let found: [u8; 4] = bytes[..4].try_into().unwrap();
        if &found != magic {
            return Err(FormatError::BadMagic {
                expected: *magic,
                found,
            });
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(FormatError::Checksum { stored, computed });
        }
        Ok(Self { body, pos: 4 })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let remaining = self.body.len() - self.pos;
        if n > remaining {
            return Err(FormatError::Truncated {
                offset: self.pos,
                wanted: n - remaining,
            });
        }
        let s = &self.body[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>, FormatError> {
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn str(&mut self) -> Result<String, FormatError> {
        let len = self.u32()? as usize;
        let offset = self.pos;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| FormatError::BadUtf8 { offset })
    }

    pub fn finish(self) -> Result<(), FormatError> {
        match self.body.len() - self.pos {
            0 => Ok(()),
            n => Err(FormatError::TrailingBytes(n)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checksum_detects_flip() {
        let mut w = Writer::new(b"TEST");
        w.u32(7);
        w.str("abc");
        let mut bytes = w.finish();
        {
            let mut r = Reader::open(&bytes, b"TEST").unwrap();
            assert_eq!(r.u32().unwrap(), 7);
            assert_eq!(r.str().unwrap(), "abc");
            r.finish().unwrap();
        }
        bytes[5] ^= 1;
        assert!(matches!(
            Reader::open(&bytes, b"TEST"),
            Err(FormatError::Checksum { .. })
        ));
    }

    #[test]
    fn wrong_magic() {
        let bytes = Writer::new(b"AAAA").finish();
        assert!(matches!(
            Reader::open(&bytes, b"BBBB"),
            Err(FormatError::BadMagic { .. })
        ));
    }
}
