//! Binary artifact container: a short text header followed by
//! little-endian `f64` arrays.
//!
//! ```text
//! pbrom-artifact 1
//! kind operators
//! meta {"case_hash":"…","r":6}
//! array c 6
//! array l 36
//! END_HEADER
//! <raw bytes>
//! ```

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::scalar::Real;

const MAGIC: &str = "pbrom-artifact 1";
const END: &str = "END_HEADER";

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub kind: String,
    pub meta: Map<String, Value>,
    arrays: Vec<(String, Vec<f64>)>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

impl Container {
    pub fn new(kind: &str) -> Self {
        Container {
            kind: kind.to_string(),
            meta: Map::new(),
            arrays: Vec::new(),
        }
    }

    pub fn set<S: Serialize>(&mut self, key: &str, value: S) -> Result<()> {
        self.meta.insert(key.to_string(), serde_json::to_value(value)?);
        Ok(())
    }

    pub fn field<D: DeserializeOwned>(&self, key: &str) -> Result<D> {
        let v = self
            .meta
            .get(key)
            .ok_or_else(|| bad(format!("{} artifact lacks '{key}'", self.kind)))?;
        Ok(serde_json::from_value(v.clone())?)
    }

    pub fn push<T: Real>(&mut self, name: &str, values: &[T]) {
        self.arrays.push((name.to_string(), values.iter().map(|v| v.as_f64()).collect()));
    }

    /// Rows of equal length stored flat; the row count goes to the header.
    pub fn push_rows<T: Real>(&mut self, name: &str, rows: &[Vec<T>]) {
        self.arrays
            .push((name.to_string(), rows.iter().flatten().map(|v| v.as_f64()).collect()));
    }

    pub fn has(&self, name: &str) -> bool {
        self.arrays.iter().any(|(n, _)| n == name)
    }

    pub fn array<T: Real>(&self, name: &str) -> Result<Vec<T>> {
        self.arrays
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.iter().map(|&x| T::lit(x)).collect())
            .ok_or_else(|| bad(format!("{} artifact lacks array '{name}'", self.kind)))
    }

    pub fn array_opt<T: Real>(&self, name: &str) -> Result<Option<Vec<T>>> {
        if self.has(name) {
            self.array(name).map(Some)
        } else {
            Ok(None)
        }
    }

    pub fn rows<T: Real>(&self, name: &str, n_rows: usize) -> Result<Vec<Vec<T>>> {
        let flat = self.array::<T>(name)?;
        if flat.is_empty() {
            return Ok(vec![Vec::new(); n_rows]);
        }
        if n_rows == 0 || flat.len() % n_rows != 0 {
            return Err(bad(format!("array '{name}' of {} values is not {n_rows} rows", flat.len())));
        }
        Ok(flat.chunks(flat.len() / n_rows).map(|c| c.to_vec()).collect())
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "{MAGIC}")?;
        writeln!(w, "kind {}", self.kind)?;
        writeln!(w, "meta {}", serde_json::to_string(&self.meta)?)?;
        for (name, v) in &self.arrays {
            writeln!(w, "array {name} {}", v.len())?;
        }
        writeln!(w, "{END}")?;
        for (_, v) in &self.arrays {
            for x in v {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: impl Read) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut line = String::new();
        let mut next = |r: &mut BufReader<_>| -> Result<String> {
            line.clear();
            if r.read_line(&mut line)? == 0 {
                return Err(bad("truncated artifact header"));
            }
            Ok(line.trim_end_matches(['\n', '\r']).to_string())
        };
        if next(&mut r)? != MAGIC {
            return Err(bad("not a pbrom artifact"));
        }
        let kind = next(&mut r)?
            .strip_prefix("kind ")
            .ok_or_else(|| bad("missing kind line"))?
            .to_string();
        let meta_line = next(&mut r)?;
        let meta: Map<String, Value> = serde_json::from_str(
            meta_line.strip_prefix("meta ").ok_or_else(|| bad("missing meta line"))?,
        )?;
        let mut layout = Vec::new();
        loop {
            let l = next(&mut r)?;
            if l == END {
                break;
            }
            let mut parts = l.split(' ');
            match (parts.next(), parts.next(), parts.next(), parts.next()) {
                (Some("array"), Some(name), Some(len), None) => {
                    let len: usize = len.parse().map_err(|_| bad(format!("bad array length in '{l}'")))?;
                    layout.push((name.to_string(), len));
                }
                _ => return Err(bad(format!("unexpected header line '{l}'"))),
            }
        }
        let mut arrays = Vec::with_capacity(layout.len());
        let mut buf = [0u8; 8];
        for (name, len) in layout {
            let mut v = Vec::with_capacity(len);
            for _ in 0..len {
                r.read_exact(&mut buf)
                    .map_err(|_| bad(format!("array '{name}' truncated")))?;
                v.push(f64::from_le_bytes(buf));
            }
            arrays.push((name, v));
        }
        if r.read(&mut buf)? != 0 {
            return Err(bad("trailing bytes after the last array"));
        }
        Ok(Container { kind, meta, arrays })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        self.write_to(&mut out)?;
        fs::write(path, out)?;
        Ok(())
    }

    /// Reads `path` and checks the artifact kind.
    pub fn load(path: &Path, kind: &str) -> Result<Self> {
        let c = Self::read_from(fs::File::open(path)?)?;
        if c.kind != kind {
            return Err(Error::Incompatible(format!(
                "{} holds a {} artifact, expected {kind}",
                path.display(),
                c.kind
            )));
        }
        Ok(c)
    }
}
