//! One-file-per-tensor format: a single-line JSON header
//! `{"dtype":"f32","shape":[...]}` and a newline, then the raw little-endian
//! elements in row-major order.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TensorError};
use crate::float::Float;
use crate::tensor::{numel, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    F64,
    U8,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
            DType::U8 => 1,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    dtype: DType,
    shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U8(Vec<u8>),
}

impl Payload {
    pub fn dtype(&self) -> DType {
        match self {
            Payload::F32(_) => DType::F32,
            Payload::F64(_) => DType::F64,
            Payload::U8(_) => DType::U8,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Payload::F32(v) => v.len(),
            Payload::F64(v) => v.len(),
            Payload::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Float payloads widened to f64; `None` for integer payloads.
    pub fn to_f64(&self) -> Option<Vec<f64>> {
        match self {
            Payload::F32(v) => Some(v.iter().map(|&x| x as f64).collect()),
            Payload::F64(v) => Some(v.clone()),
            Payload::U8(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TensorFile {
    pub shape: Vec<usize>,
    pub payload: Payload,
}

impl TensorFile {
    pub fn new(shape: Vec<usize>, payload: Payload) -> Result<Self> {
        if numel(&shape) != payload.len() {
            return Err(TensorError::DataLength { shape, len: payload.len() });
        }
        Ok(TensorFile { shape, payload })
    }

    pub fn encode(&self, mut w: impl Write) -> Result<()> {
        let header = Header { dtype: self.payload.dtype(), shape: self.shape.clone() };
        let line = serde_json::to_string(&header).map_err(|e| TensorError::Corrupt(e.to_string()))?;
        w.write_all(line.as_bytes())?;
        w.write_all(b"\n")?;
        let mut bytes = Vec::with_capacity(self.payload.len() * self.payload.dtype().size());
        match &self.payload {
            Payload::F32(v) => v.iter().for_each(|x| bytes.extend_from_slice(&x.to_le_bytes())),
            Payload::F64(v) => v.iter().for_each(|x| bytes.extend_from_slice(&x.to_le_bytes())),
            Payload::U8(v) => bytes.extend_from_slice(v),
        }
        w.write_all(&bytes)?;
        Ok(())
    }

    pub fn decode(r: impl Read) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut line = Vec::new();
        r.read_until(b'\n', &mut line)?;
        if line.last() != Some(&b'\n') {
            return Err(TensorError::Corrupt("missing header line".into()));
        }
        let header: Header = serde_json::from_slice(&line[..line.len() - 1])
            .map_err(|e| TensorError::Corrupt(format!("bad header: {e}")))?;
        let count = numel(&header.shape);
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let expected = count * header.dtype.size();
        if bytes.len() != expected {
            return Err(TensorError::Corrupt(format!(
                "payload has {} bytes, header {:?} {:?} needs {expected}",
                bytes.len(),
                header.dtype,
                header.shape
            )));
        }
        let payload = match header.dtype {
            DType::F32 => Payload::F32(
                bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect(),
            ),
            DType::F64 => Payload::F64(
                bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
            ),
            DType::U8 => Payload::U8(bytes),
        };
        Ok(TensorFile { shape: header.shape, payload })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::new();
        self.encode(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(fs::File::open(path)?)
    }
}

impl<T: Float> Tensor<T> {
    pub fn to_file(&self) -> TensorFile {
        let payload = match T::DTYPE {
            DType::F32 => Payload::F32(self.data().iter().map(|v| v.to_f32().unwrap()).collect()),
            _ => Payload::F64(self.to_f64_vec()),
        };
        TensorFile { shape: self.shape().to_vec(), payload }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_file().write(path)
    }

    /// Loads a float tensor file as a constant leaf, converting precision.
    pub fn load(path: impl AsRef<Path>) -> Result<Tensor<T>> {
        let file = TensorFile::read(path)?;
        let values = file
            .payload
            .to_f64()
            .ok_or_else(|| TensorError::Corrupt("expected a float payload".into()))?;
        Tensor::from_f64(&file.shape, &values)
    }
}
