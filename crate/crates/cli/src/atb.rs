//! `ATB1`: a little-endian container of named dense tensors.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        4 bytes   "ATB1"
//! count        u32       number of tensors
//! tensor * count:
//!   name_len   u16
//!   name       name_len bytes of UTF-8
//!   dtype      u8        1 = f32, 2 = f64, 3 = u64
//!   rank       u8
//!   dims       u64 * rank
//!   payload    product(dims) elements of dtype, row-major
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{CliError, CliResult};

pub const MAGIC: &[u8; 4] = b"ATB1";

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U64(Vec<u64>),
}

impl TensorData {
    fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
            TensorData::U64(v) => v.len(),
        }
    }

    fn dtype(&self) -> u8 {
        match self {
            TensorData::F32(_) => 1,
            TensorData::F64(_) => 2,
            TensorData::U64(_) => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: TensorData,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Container {
    pub tensors: Vec<Tensor>,
}

/// A typed view of one tensor, for readers that know what they expect.
pub struct View<'a, T> {
    pub shape: &'a [usize],
    pub data: &'a [T],
}

impl Container {
    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, data: TensorData) {
        let name = name.into();
        assert_eq!(shape.iter().product::<usize>(), data.len(), "tensor {name}: shape does not match payload");
        self.tensors.push(Tensor { name, shape, data });
    }

    fn find(&self, file: &Path, name: &str) -> CliResult<(usize, &Tensor)> {
        self.tensors
            .iter()
            .enumerate()
            .find(|(_, t)| t.name == name)
            .ok_or_else(|| CliError::schema(file, 0, name, "tensor not found"))
    }

    pub fn f64(&self, file: &Path, name: &str) -> CliResult<View<'_, f64>> {
        match self.find(file, name)? {
            (_, Tensor { shape, data: TensorData::F64(d), .. }) => Ok(View { shape, data: d }),
            (i, _) => Err(CliError::schema(file, i + 1, name, "expected dtype f64")),
        }
    }

    pub fn f32(&self, file: &Path, name: &str) -> CliResult<View<'_, f32>> {
        match self.find(file, name)? {
            (_, Tensor { shape, data: TensorData::F32(d), .. }) => Ok(View { shape, data: d }),
            (i, _) => Err(CliError::schema(file, i + 1, name, "expected dtype f32")),
        }
    }

    pub fn u64(&self, file: &Path, name: &str) -> CliResult<View<'_, u64>> {
        match self.find(file, name)? {
            (_, Tensor { shape, data: TensorData::U64(d), .. }) => Ok(View { shape, data: d }),
            (i, _) => Err(CliError::schema(file, i + 1, name, "expected dtype u64")),
        }
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for t in &self.tensors {
            w.write_all(&(t.name.len() as u16).to_le_bytes())?;
            w.write_all(t.name.as_bytes())?;
            w.write_all(&[t.data.dtype(), t.shape.len() as u8])?;
            for d in &t.shape {
                w.write_all(&(*d as u64).to_le_bytes())?;
            }
            match &t.data {
                TensorData::F32(v) => v.iter().try_for_each(|x| w.write_all(&x.to_le_bytes()))?,
                TensorData::F64(v) => v.iter().try_for_each(|x| w.write_all(&x.to_le_bytes()))?,
                TensorData::U64(v) => v.iter().try_for_each(|x| w.write_all(&x.to_le_bytes()))?,
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    /// Parses a container; `file` names the source in errors.
    pub fn from_bytes(bytes: &[u8], file: &Path) -> CliResult<Self> {
        let mut r = Cursor { bytes, pos: 0, file };
        if r.take(4, 0, "magic")? != MAGIC {
            return Err(CliError::schema(file, 0, "magic", "not an ATB1 container"));
        }
        let count = u32::from_le_bytes(r.array(0, "count")?) as usize;
        let mut tensors = Vec::with_capacity(count.min(1 << 16));
        for i in 1..=count {
            let name_len = u16::from_le_bytes(r.array(i, "name_len")?) as usize;
            let name = std::str::from_utf8(r.take(name_len, i, "name")?)
                .map_err(|e| CliError::schema(file, i, "name", e))?
                .to_string();
            let [dtype, rank] = r.array(i, "dtype")?;
            let mut shape = Vec::with_capacity(rank as usize);
            for _ in 0..rank {
                let d = u64::from_le_bytes(r.array(i, "dims")?);
                shape.push(usize::try_from(d).map_err(|e| CliError::schema(file, i, "dims", e))?);
            }
            let n = shape
                .iter()
                .try_fold(1usize, |acc, d| acc.checked_mul(*d))
                .ok_or_else(|| CliError::schema(file, i, "dims", "element count overflows"))?;
            let width = match dtype {
                1 => 4,
                2 | 3 => 8,
                other => return Err(CliError::schema(file, i, "dtype", format!("unknown dtype {other}"))),
            };
            let bytes = n
                .checked_mul(width)
                .ok_or_else(|| CliError::schema(file, i, "dims", "payload size overflows"))?;
            let payload = r.take(bytes, i, "payload")?;
            let data = match dtype {
                1 => TensorData::F32(payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect()),
                2 => TensorData::F64(payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()),
                _ => TensorData::U64(payload.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect()),
            };
            tensors.push(Tensor { name, shape, data });
        }
        if r.pos != bytes.len() {
            return Err(CliError::schema(file, count, "payload", "trailing bytes after the last tensor"));
        }
        Ok(Self { tensors })
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        let f = File::create(path).map_err(|e| CliError::io(path, e))?;
        let mut w = BufWriter::new(f);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path, producer: &'static str) -> CliResult<Self> {
        let f = File::open(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => CliError::MissingInput {
                file: path.to_path_buf(),
                producer,
            },
            _ => CliError::io(path, e),
        })?;
        let mut bytes = Vec::new();
        BufReader::new(f)
            .read_to_end(&mut bytes)
            .map_err(|e| CliError::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    file: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, index: usize, field: &str) -> CliResult<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(CliError::schema(self.file, index, field, "unexpected end of file")),
        }
    }

    fn array<const N: usize>(&mut self, index: usize, field: &str) -> CliResult<[u8; N]> {
        Ok(self.take(N, index, field)?.try_into().unwrap())
    }
}
