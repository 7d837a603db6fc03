//! Binary model file.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic        4 bytes  "FAGM"
//! version      u16
//! classes      u32      number of classes K
//! dim          u32      feature dimension D
//! hyper_c      f64
//! seed         u64
//! labels       K × (u32 byte length, UTF-8 bytes)
//! weights      K × D f64, row-major
//! biases       K f64
//! checksum     u32      CRC-32 of every preceding byte
//! ```

use std::io::Write;
use std::path::Path;

use super::{ClassifierError, SvmModel};

pub const MODEL_MAGIC: &[u8; 4] = b"FAGM";
pub const MODEL_FORMAT_VERSION: u16 = 1;

impl SvmModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&MODEL_FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.classes.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim() as u32).to_le_bytes());
        out.extend_from_slice(&self.hyper_c.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        for label in &self.classes {
            out.extend_from_slice(&(label.len() as u32).to_le_bytes());
            out.extend_from_slice(label.as_bytes());
        }
        for row in &self.weights {
            for w in row {
                out.extend_from_slice(&w.to_le_bytes());
            }
        }
        for b in &self.biases {
            out.extend_from_slice(&b.to_le_bytes());
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ClassifierError> {
        let malformed = |what: &str| ClassifierError::FormatVersionMismatch(what.to_string());
        if bytes.len() < 6 || &bytes[..4] != MODEL_MAGIC {
            return Err(malformed("missing FAGM magic"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != MODEL_FORMAT_VERSION {
            return Err(malformed(&format!(
                "format version {version}, expected {MODEL_FORMAT_VERSION}"
            )));
        }
        if bytes.len() < 10 {
            return Err(malformed("file too short"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(ClassifierError::ChecksumMismatch { stored, computed });
        }

        let mut r = Reader { buf: body, pos: 6 };
        let k = r.u32()? as usize;
        let dim = r.u32()? as usize;
        let hyper_c = r.f64()?;
        let seed = r.u64()?;
        let mut classes = Vec::with_capacity(k.min(1 << 16));
        for _ in 0..k {
            let len = r.u32()? as usize;
            let raw = r.take(len)?;
            classes.push(
                String::from_utf8(raw.to_vec()).map_err(|_| malformed("class label is not UTF-8"))?,
            );
        }
        let mut weights = Vec::with_capacity(k.min(1 << 16));
        for _ in 0..k {
            weights.push((0..dim).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?);
        }
        let biases = (0..k).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        if r.pos != body.len() {
            return Err(malformed("trailing bytes after bias vector"));
        }
        SvmModel::from_parts(classes, weights, biases, hyper_c, seed)
            .map_err(|e| malformed(&e.to_string()))
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ClassifierError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| ClassifierError::FormatVersionMismatch("unexpected end of data".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ClassifierError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, ClassifierError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64, ClassifierError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Writes the model atomically (temporary file in the same directory, then
/// rename).
pub fn save_model(model: &SvmModel, path: &Path) -> Result<(), ClassifierError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(&model.to_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<SvmModel, ClassifierError> {
    SvmModel::from_bytes(&std::fs::read(path)?)
}
