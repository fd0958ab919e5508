//! Canonical byte encoding for everything that is hashed or signed.
//!
//! One encoding per structure: fields in declaration order, integers
//! little-endian fixed width, variable-length bytes prefixed with a u32
//! length, lists prefixed with a u32 count, options as a 0/1 tag byte,
//! enums as a u8 discriminant followed by the variant payload. Digests
//! are therefore bit-exact across runs and platforms.

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("input ended before the record was complete")]
    UnexpectedEnd,
    #[error("trailing bytes after a complete record")]
    TrailingBytes,
    #[error("unknown tag {tag} for {context}")]
    BadTag { tag: u8, context: &'static str },
    #[error("length prefix exceeds remaining input")]
    BadLength,
    #[error("byte string is not valid utf-8")]
    BadUtf8,
    #[error("invalid value for {0}")]
    BadValue(&'static str),
}

/// Append-only canonical byte writer.
#[derive(Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Writer { buf: Vec::new() }
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn bool(&mut self, v: bool) {
        self.buf.push(v as u8);
    }

    pub fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    /// Fixed-width bytes, no length prefix.
    pub fn raw(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    /// Variable-length bytes with a u32 length prefix.
    pub fn bytes(&mut self, bytes: &[u8]) {
        self.u32(bytes.len() as u32);
        self.buf.extend_from_slice(bytes);
    }

    pub fn str(&mut self, s: &str) {
        self.bytes(s.as_bytes());
    }
}

/// Cursor over a canonical byte record.
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.pos + n > self.buf.len() {
            return Err(DecodeError::UnexpectedEnd);
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    pub fn bool(&mut self) -> Result<bool, DecodeError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            tag => Err(DecodeError::BadTag { tag, context: "bool" }),
        }
    }

    pub fn u16(&mut self) -> Result<u16, DecodeError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn raw(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        self.take(n)
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], DecodeError> {
        let len = self.u32()? as usize;
        if self.pos + len > self.buf.len() {
            return Err(DecodeError::BadLength);
        }
        self.take(len)
    }

    pub fn str(&mut self) -> Result<String, DecodeError> {
        let raw = self.bytes()?;
        String::from_utf8(raw.to_vec()).map_err(|_| DecodeError::BadUtf8)
    }

    /// Fails unless every byte was consumed.
    pub fn finish(&self) -> Result<(), DecodeError> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(DecodeError::TrailingBytes)
        }
    }
}

/// Types with a single canonical byte encoding.
pub trait Canonical: Sized {
    fn encode(&self, w: &mut Writer);
    fn decode(r: &mut Reader) -> Result<Self, DecodeError>;

    fn canonical_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode(&mut w);
        w.into_bytes()
    }

    /// Decode a full record, rejecting trailing bytes.
    fn from_canonical_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let v = Self::decode(&mut r)?;
        r.finish()?;
        Ok(v)
    }
}

/// Encode an optional value as a presence tag plus payload.
pub fn encode_option<T: Canonical>(w: &mut Writer, v: &Option<T>) {
    match v {
        None => w.u8(0),
        Some(inner) => {
            w.u8(1);
            inner.encode(w);
        }
    }
}

pub fn decode_option<T: Canonical>(r: &mut Reader) -> Result<Option<T>, DecodeError> {
    match r.u8()? {
        0 => Ok(None),
        1 => Ok(Some(T::decode(r)?)),
        tag => Err(DecodeError::BadTag { tag, context: "option" }),
    }
}

/// Encode a list as a u32 count plus elements.
pub fn encode_list<T: Canonical>(w: &mut Writer, items: &[T]) {
    w.u32(items.len() as u32);
    for item in items {
        item.encode(w);
    }
}

pub fn decode_list<T: Canonical>(r: &mut Reader) -> Result<Vec<T>, DecodeError> {
    let n = r.u32()? as usize;
    let mut out = Vec::with_capacity(n.min(1 << 16));
    for _ in 0..n {
        out.push(T::decode(r)?);
    }
    Ok(out)
}
