//! Versioned binary checkpoint of the trained weight matrices.
//!
//! Layout, all little-endian:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "SNCK"
//! 4       4     format version (u32, currently 1)
//! 8       4     n_in (u32)
//! 12      4     n_hid (u32)
//! 16      4     n_out (u32)
//! 20      4     geometry side length (u32: 20 or 10)
//! 24      8     init seed (u64)
//! 32      4     completed epochs (u32)
//! 36      1     init scheme (0 = gaussian-fan, 1 = glorot-uniform)
//! 37      3     reserved, zero
//! 40      -     W1, n_hid * n_in i16 values, row-major
//! -       -     W2, n_out * n_hid i16 values, row-major
//! ```
//!
//! Reload reproduces bit-identical forward behavior; weights are validated
//! against the even-integer range on load.

use crate::circuit::Dims;
use crate::dataio::Geometry;
use crate::oracle::{InitScheme, OracleNet};
use crate::quant::{QuantError, QuantMatrix, WeightRole};
use byteorder::{LittleEndian, ReadBytesExt};
use std::io::{self, Read, Write};
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8; 4] = b"SNCK";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}: not a checkpoint (bad magic)")]
    BadMagic { path: String },
    #[error("{path}: unsupported checkpoint version {version}")]
    Version { path: String, version: u32 },
    #[error("{path}: geometry side {side} is not 20 or 10")]
    Geometry { path: String, side: u32 },
    #[error("{path}: invalid scheme byte {byte}")]
    Scheme { path: String, byte: u8 },
    #[error("{path}: weight data invalid: {source}")]
    Weights { path: String, source: QuantError },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub dims: Dims,
    pub geometry: Geometry,
    pub init_seed: u64,
    pub epochs: u32,
    pub scheme: InitScheme,
    pub w1: QuantMatrix,
    pub w2: QuantMatrix,
}

impl Checkpoint {
    pub fn net(&self) -> OracleNet {
        OracleNet { w1: self.w1.clone(), w2: self.w2.clone() }
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let mut body = Vec::with_capacity(
            40 + 2 * (self.w1.as_slice().len() + self.w2.as_slice().len()),
        );
        body.extend_from_slice(MAGIC);
        body.extend_from_slice(&VERSION.to_le_bytes());
        body.extend_from_slice(&(self.dims.n_in as u32).to_le_bytes());
        body.extend_from_slice(&(self.dims.n_hid as u32).to_le_bytes());
        body.extend_from_slice(&(self.dims.n_out as u32).to_le_bytes());
        body.extend_from_slice(&(self.geometry.side() as u32).to_le_bytes());
        body.extend_from_slice(&self.init_seed.to_le_bytes());
        body.extend_from_slice(&self.epochs.to_le_bytes());
        body.push(match self.scheme {
            InitScheme::GaussianFan => 0,
            InitScheme::GlorotUniform => 1,
        });
        body.extend_from_slice(&[0u8; 3]);
        for m in [&self.w1, &self.w2] {
            for &v in m.as_slice() {
                body.extend_from_slice(&v.to_le_bytes());
            }
        }
        std::fs::write(path, &body)
            .map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: &Path) -> Result<Checkpoint, CheckpointError> {
        let p = path.display().to_string();
        let bytes = std::fs::read(path)
            .map_err(|source| CheckpointError::Io { path: p.clone(), source })?;
        let mut r = io::Cursor::new(&bytes);
        let truncated = |_| CheckpointError::Io {
            path: p.clone(),
            source: io::Error::new(io::ErrorKind::UnexpectedEof, "truncated checkpoint"),
        };
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != MAGIC {
            return Err(CheckpointError::BadMagic { path: p });
        }
        let version = r.read_u32::<LittleEndian>().map_err(truncated)?;
        if version != VERSION {
            return Err(CheckpointError::Version { path: p, version });
        }
        let n_in = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
        let n_hid = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
        let n_out = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
        let side = r.read_u32::<LittleEndian>().map_err(truncated)?;
        let geometry = match side {
            20 => Geometry::Px20,
            10 => Geometry::Px10,
            _ => return Err(CheckpointError::Geometry { path: p, side }),
        };
        let init_seed = r.read_u64::<LittleEndian>().map_err(truncated)?;
        let epochs = r.read_u32::<LittleEndian>().map_err(truncated)?;
        let mut tail = [0u8; 4];
        r.read_exact(&mut tail).map_err(truncated)?;
        let scheme = match tail[0] {
            0 => InitScheme::GaussianFan,
            1 => InitScheme::GlorotUniform,
            byte => return Err(CheckpointError::Scheme { path: p, byte }),
        };
        let read_matrix = |r: &mut io::Cursor<&Vec<u8>>,
                               rows: usize,
                               cols: usize,
                               role|
         -> Result<QuantMatrix, CheckpointError> {
            let mut data = vec![0i16; rows * cols];
            r.read_i16_into::<LittleEndian>(&mut data).map_err(|_| CheckpointError::Io {
                path: p.clone(),
                source: io::Error::new(io::ErrorKind::UnexpectedEof, "truncated weights"),
            })?;
            QuantMatrix::from_data(rows, cols, data, role)
                .map_err(|source| CheckpointError::Weights { path: p.clone(), source })
        };
        let w1 = read_matrix(&mut r, n_hid, n_in, WeightRole::Forward)?;
        let w2 = read_matrix(&mut r, n_out, n_hid, WeightRole::Forward)?;
        Ok(Checkpoint {
            dims: Dims::new(n_in, n_hid, n_out),
            geometry,
            init_seed,
            epochs,
            scheme,
            w1,
            w2,
        })
    }

    /// Plain-text weight dump for diffing: one `matrix row col value` line
    /// per entry, in stable order.
    pub fn write_text<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(
            out,
            "# dims {} {} {} geometry {} seed {} epochs {} scheme {}",
            self.dims.n_in,
            self.dims.n_hid,
            self.dims.n_out,
            self.geometry.name(),
            self.init_seed,
            self.epochs,
            self.scheme.name()
        )?;
        for (name, m) in [("W1", &self.w1), ("W2", &self.w2)] {
            for r in 0..m.rows() {
                for c in 0..m.cols() {
                    writeln!(out, "{name} {r} {c} {}", m.get(r, c))?;
                }
            }
        }
        Ok(())
    }
}
