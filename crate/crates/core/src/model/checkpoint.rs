use std::path::Path;

use super::config::config_hash;
use super::params::Tensor;
use crate::error::{Error, Result};
use crate::textio;

const MAGIC: &[u8; 8] = b"ECGLOCKP";
const VERSION: u32 = 1;

/// Named tensors plus the configuration text they were produced under.
///
/// Layout (little endian): magic, `u32` version, config text, config hash,
/// `u64` metadata count and key/value strings, `u64` tensor count and, per
/// tensor, name, `u64` rank, `u64` dims and raw `f64` bits. Strings are a
/// `u64` byte length followed by UTF-8.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config_text: String,
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<Tensor>,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a str,
}

impl<'a> Reader<'a> {
    fn fail(&self, msg: &str) -> Error {
        Error::parse(self.path, 0, format!("checkpoint byte {}: {msg}", self.pos))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(self.fail("truncated"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize> {
        let v = self.u64()?;
        if v > (self.buf.len() - self.pos) as u64 {
            return Err(self.fail("length exceeds file size"));
        }
        Ok(v as usize)
    }

    fn string(&mut self) -> Result<String> {
        let n = self.len()?;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| self.fail("invalid UTF-8"))
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u64).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

impl Checkpoint {
    pub fn config_hash(&self) -> String {
        config_hash(&self.config_text)
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Tensors whose names start with `prefix`, with the prefix removed.
    pub fn group(&self, prefix: &str) -> Vec<Tensor> {
        self.tensors
            .iter()
            .filter_map(|t| {
                t.name.strip_prefix(prefix).map(|n| Tensor {
                    name: n.to_owned(),
                    shape: t.shape.clone(),
                    data: t.data.clone(),
                })
            })
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        put_str(&mut out, &self.config_text);
        put_str(&mut out, &self.config_hash());
        out.extend_from_slice(&(self.meta.len() as u64).to_le_bytes());
        for (k, v) in &self.meta {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        out.extend_from_slice(&(self.tensors.len() as u64).to_le_bytes());
        for t in &self.tensors {
            put_str(&mut out, &t.name);
            out.extend_from_slice(&(t.shape.len() as u64).to_le_bytes());
            for &d in &t.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_bits().to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(buf: &[u8], path: &str) -> Result<Checkpoint> {
        let mut r = Reader { buf, pos: 0, path };
        if r.take(8)? != MAGIC {
            return Err(r.fail("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(r.fail(&format!("unsupported version {version}")));
        }
        let config_text = r.string()?;
        let hash = r.string()?;
        if hash != config_hash(&config_text) {
            return Err(r.fail("config hash does not match config text"));
        }
        let n_meta = r.len()?;
        let mut meta = Vec::with_capacity(n_meta);
        for _ in 0..n_meta {
            meta.push((r.string()?, r.string()?));
        }
        let n_tensors = r.len()?;
        let mut tensors = Vec::with_capacity(n_tensors);
        for _ in 0..n_tensors {
            let name = r.string()?;
            let rank = r.len()?;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.len()?);
            }
            let n: usize = shape.iter().product();
            if n.checked_mul(8).is_none_or(|b| b > buf.len() - r.pos) {
                return Err(r.fail("tensor exceeds file size"));
            }
            let data = r
                .take(n * 8)?
                .chunks_exact(8)
                .map(|c| f64::from_bits(u64::from_le_bytes(c.try_into().expect("8 bytes"))))
                .collect();
            tensors.push(Tensor { name, shape, data });
        }
        if r.pos != buf.len() {
            return Err(r.fail("trailing bytes"));
        }
        Ok(Checkpoint {
            config_text,
            meta,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        textio::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, &path.display().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        Checkpoint {
            config_text: "n_kp = 64\n".into(),
            meta: vec![("iter".into(), "12".into())],
            tensors: vec![
                Tensor {
                    name: "a".into(),
                    shape: vec![2, 2],
                    data: vec![0.1, -0.0, f64::MIN_POSITIVE, 1e300],
                },
                Tensor {
                    name: "b".into(),
                    shape: vec![0],
                    data: vec![],
                },
            ],
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = sample();
        let bytes = c.to_bytes();
        let back = Checkpoint::from_bytes(&bytes, "mem").unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.tensors[0].data[1].to_bits(), (-0.0f64).to_bits());
        assert_eq!(back.meta("iter"), Some("12"));
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = sample().to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3], "mem").is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad, "mem").is_err());
        let mut edited = bytes.clone();
        edited[8 + 4 + 8] = b'N';
        assert!(Checkpoint::from_bytes(&edited, "mem").is_err());
    }
}
