//! On-disk table format.
//!
//! A table file is a fixed 40-byte little-endian header followed by the
//! row-major payload:
//!
//! | offset | size | field            |
//! |--------|------|------------------|
//! | 0      | 4    | magic `ENGT`     |
//! | 4      | 4    | format version   |
//! | 8      | 8    | num_rows         |
//! | 16     | 4    | emb_dim          |
//! | 20     | 4    | num_heads        |
//! | 24     | 4    | elem_bytes       |
//! | 28     | 4    | reserved, zero   |
//! | 32     | 8    | hash_seed        |

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::EngramConfig;
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"ENGT";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 40;

const FILL_CHUNK: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TableFileHeader {
    pub format_version: u32,
    pub num_rows: u64,
    pub emb_dim: u32,
    pub num_heads: u32,
    pub elem_bytes: u32,
    pub hash_seed: u64,
}

impl TableFileHeader {
    pub fn for_config(cfg: &EngramConfig) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            num_rows: cfg.num_rows,
            emb_dim: cfg.emb_dim as u32,
            num_heads: cfg.num_heads as u32,
            elem_bytes: cfg.elem_bytes as u32,
            hash_seed: cfg.hash_seed,
        }
    }

    pub fn encode(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[0..4].copy_from_slice(&MAGIC);
        out[4..8].copy_from_slice(&self.format_version.to_le_bytes());
        out[8..16].copy_from_slice(&self.num_rows.to_le_bytes());
        out[16..20].copy_from_slice(&self.emb_dim.to_le_bytes());
        out[20..24].copy_from_slice(&self.num_heads.to_le_bytes());
        out[24..28].copy_from_slice(&self.elem_bytes.to_le_bytes());
        out[32..40].copy_from_slice(&self.hash_seed.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::RegionTooSmall {
                expected: HEADER_LEN as u64,
                found: bytes.len() as u64,
            });
        }
        let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(Error::BadMagic { found: magic });
        }
        let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        let u64_at = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
        let format_version = u32_at(4);
        if format_version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(format_version));
        }
        Ok(Self {
            format_version,
            num_rows: u64_at(8),
            emb_dim: u32_at(16),
            num_heads: u32_at(20),
            elem_bytes: u32_at(24),
            hash_seed: u64_at(32),
        })
    }

    pub fn payload_bytes(&self) -> u64 {
        self.num_rows * self.emb_dim as u64 * self.elem_bytes as u64
    }

    /// Fails with [`Error::ConfigMismatch`] on the first field that
    /// disagrees with `cfg`.
    pub fn check_matches(&self, cfg: &EngramConfig) -> Result<()> {
        let fields = [
            ("num_rows", self.num_rows, cfg.num_rows),
            ("emb_dim", self.emb_dim as u64, cfg.emb_dim as u64),
            ("num_heads", self.num_heads as u64, cfg.num_heads as u64),
            ("elem_bytes", self.elem_bytes as u64, cfg.elem_bytes as u64),
            ("hash_seed", self.hash_seed, cfg.hash_seed),
        ];
        for (field, header, config) in fields {
            if header != config {
                return Err(Error::ConfigMismatch {
                    field,
                    header,
                    config,
                });
            }
        }
        Ok(())
    }
}

/// Payload contents for a freshly built table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFill {
    Zeros,
    /// ChaCha8 byte stream keyed by the config's `hash_seed`.
    SeededRandom,
}

/// Streams the payload for `cfg` in chunks to `sink`. Chunk boundaries
/// never change the produced byte stream.
fn fill_payload(
    cfg: &EngramConfig,
    fill: TableFill,
    mut sink: impl FnMut(&[u8]) -> Result<()>,
) -> Result<()> {
    let mut remaining = cfg.table_bytes();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.hash_seed);
    let mut chunk = vec![0u8; FILL_CHUNK.min(remaining as usize)];
    while remaining > 0 {
        let n = (remaining as usize).min(chunk.len());
        if fill == TableFill::SeededRandom {
            rng.fill_bytes(&mut chunk[..n]);
        }
        sink(&chunk[..n])?;
        remaining -= n as u64;
    }
    Ok(())
}

/// Generates the table payload in memory.
pub fn generate_payload(cfg: &EngramConfig, fill: TableFill) -> Vec<u8> {
    if fill == TableFill::Zeros {
        return vec![0u8; cfg.table_bytes() as usize];
    }
    let mut out = Vec::with_capacity(cfg.table_bytes() as usize);
    fill_payload(cfg, fill, |bytes| {
        out.extend_from_slice(bytes);
        Ok(())
    })
    .expect("in-memory sink is infallible");
    out
}

/// Writes a complete table file (header and payload) to `path`.
pub fn write_table(path: &Path, cfg: &EngramConfig, fill: TableFill) -> Result<()> {
    cfg.check()?;
    let file_err = |source| Error::File {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(file_err)?;
    let mut out = BufWriter::with_capacity(FILL_CHUNK, file);
    out.write_all(&TableFileHeader::for_config(cfg).encode())
        .map_err(file_err)?;
    fill_payload(cfg, fill, |bytes| out.write_all(bytes).map_err(file_err))?;
    out.flush().map_err(file_err)?;
    Ok(())
}
