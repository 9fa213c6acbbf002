//! Read-only segment storage.
//!
//! Three backends share one interface: an in-process buffer, a
//! memory-mapped table file standing in for a DAX-exposed pooled-memory
//! device, and a wrapper that charges [`FabricModel`] latency for any
//! inner backend while still moving the real bytes.

mod fabric;
mod gather;

use std::fmt;
use std::fs::File;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use memmap2::Mmap;

pub use fabric::{FabricModel, ModeledLatency, PRESET_NAMES};

use crate::config::EngramConfig;
use crate::error::{Error, Result};
use crate::ngram::GatherPlan;
use crate::table::{generate_payload, TableFileHeader, TableFill, HEADER_LEN};

/// Which backend to construct over a table.
#[derive(Debug, Clone, PartialEq)]
pub enum BackendKind {
    LocalMemory,
    MappedFile,
    Modeled(Box<BackendKind>, FabricModel),
}

impl BackendKind {
    pub fn modeled(model: FabricModel) -> Self {
        Self::Modeled(Box::new(Self::LocalMemory), model)
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::LocalMemory => f.write_str("local"),
            Self::MappedFile => f.write_str("mapped"),
            Self::Modeled(inner, model) => match **inner {
                Self::LocalMemory => write!(f, "modeled:{}", model.name),
                _ => write!(f, "modeled:{}@{inner}", model.name),
            },
        }
    }
}

/// Table payload held in process memory.
#[derive(Clone)]
pub struct LocalMemory {
    payload: Arc<[u8]>,
}

/// Table payload mapped read-only from a table file.
#[derive(Clone)]
pub struct MappedTable {
    map: Arc<Mmap>,
    len: usize,
}

/// Clones share the underlying region.
#[derive(Clone)]
pub enum StorageBackend {
    LocalMemory(LocalMemory),
    MappedFile(MappedTable),
    Modeled {
        inner: Box<StorageBackend>,
        model: FabricModel,
    },
}

/// Outcome of one [`StorageBackend::read_segments`] call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GatherReport {
    pub bytes_moved: u64,
    pub messages: u64,
    /// Measured time to move the bytes.
    pub wall_ns: u64,
    /// Modeled service time for modeled backends, otherwise `wall_ns`.
    pub modeled_ns: f64,
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}

fn check_region(header: &TableFileHeader, cfg: &EngramConfig, found: u64) -> Result<()> {
    header.check_matches(cfg)?;
    let expected = cfg.table_bytes();
    if found < expected {
        return Err(Error::RegionTooSmall { expected, found });
    }
    Ok(())
}

/// Opens the table file at `path` as a backend of the given kind. The file
/// header must agree with `cfg`.
pub fn load_table(path: &Path, cfg: &EngramConfig, kind: &BackendKind) -> Result<StorageBackend> {
    cfg.check()?;
    match kind {
        BackendKind::LocalMemory => {
            let bytes = std::fs::read(path).map_err(|source| Error::File {
                path: path.to_path_buf(),
                source,
            })?;
            let header = TableFileHeader::decode(&bytes)?;
            check_region(&header, cfg, (bytes.len() - HEADER_LEN) as u64)?;
            let len = cfg.table_bytes() as usize;
            let mut payload = bytes;
            payload.drain(..HEADER_LEN);
            payload.truncate(len);
            Ok(StorageBackend::from_payload(payload))
        }
        BackendKind::MappedFile => {
            let file = open(path)?;
            let file_len = file.metadata()?.len();
            if file_len < HEADER_LEN as u64 {
                return Err(Error::RegionTooSmall {
                    expected: HEADER_LEN as u64,
                    found: file_len,
                });
            }
            // SAFETY: the mapping is read-only and table files are not
            // modified while a backend holds them.
            let map = unsafe { Mmap::map(&file)? };
            let header = TableFileHeader::decode(&map)?;
            check_region(&header, cfg, file_len - HEADER_LEN as u64)?;
            Ok(StorageBackend::MappedFile(MappedTable {
                map: Arc::new(map),
                len: cfg.table_bytes() as usize,
            }))
        }
        BackendKind::Modeled(inner, model) => {
            let model = model.clone().validate()?;
            Ok(StorageBackend::Modeled {
                inner: Box::new(load_table(path, cfg, inner)?),
                model,
            })
        }
    }
}

impl StorageBackend {
    /// A local-memory backend generated in place, without a table file.
    pub fn in_memory(cfg: &EngramConfig, fill: TableFill) -> Result<Self> {
        cfg.check()?;
        Ok(Self::from_payload(generate_payload(cfg, fill)))
    }

    pub fn from_payload(payload: Vec<u8>) -> Self {
        Self::LocalMemory(LocalMemory {
            payload: payload.into(),
        })
    }

    pub fn modeled(inner: StorageBackend, model: FabricModel) -> Result<Self> {
        Ok(Self::Modeled {
            inner: Box::new(inner),
            model: model.validate()?,
        })
    }

    /// The readable table payload.
    pub fn region(&self) -> &[u8] {
        match self {
            Self::LocalMemory(m) => &m.payload,
            Self::MappedFile(m) => &m.map[HEADER_LEN..HEADER_LEN + m.len],
            Self::Modeled { inner, .. } => inner.region(),
        }
    }

    pub fn region_len(&self) -> u64 {
        self.region().len() as u64
    }

    pub fn fabric(&self) -> Option<&FabricModel> {
        match self {
            Self::Modeled { model, .. } => Some(model),
            _ => None,
        }
    }

    pub fn kind(&self) -> BackendKind {
        match self {
            Self::LocalMemory(_) => BackendKind::LocalMemory,
            Self::MappedFile(_) => BackendKind::MappedFile,
            Self::Modeled { inner, model } => {
                BackendKind::Modeled(Box::new(inner.kind()), model.clone())
            }
        }
    }

    /// Rejects the plan if any segment falls outside the region.
    pub fn check_plan(&self, plan: &GatherPlan) -> Result<()> {
        let region_len = self.region_len();
        match plan.addresses.iter().find(|a| a.end() > region_len) {
            Some(a) => Err(Error::OutOfBounds {
                offset: a.byte_offset,
                length: a.length,
                region_len,
            }),
            None => Ok(()),
        }
    }

    /// Copies every planned segment, in plan order, into the front of
    /// `dst` using `workers` threads. Nothing is copied unless the whole
    /// plan is in bounds and fits `dst`.
    pub fn read_segments(
        &self,
        plan: &GatherPlan,
        dst: &mut [u8],
        workers: usize,
    ) -> Result<GatherReport> {
        if workers == 0 {
            return Err(Error::NoWorkers);
        }
        let needed = plan.total_bytes();
        if dst.len() < needed {
            return Err(Error::DestinationTooSmall {
                needed,
                available: dst.len(),
            });
        }
        self.check_plan(plan)?;

        let start = Instant::now();
        gather::copy_segments(self.region(), &plan.addresses, &mut dst[..needed], workers);
        let wall_ns = start.elapsed().as_nanos() as u64;

        let messages = plan.len() as u64;
        let bytes_moved = needed as u64;
        let modeled_ns = match self.fabric() {
            Some(model) => model.service(messages, bytes_moved).service_ns,
            None => wall_ns as f64,
        };
        Ok(GatherReport {
            bytes_moved,
            messages,
            wall_ns,
            modeled_ns,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ngram::{plan_gather, SegmentAddress, TokenContext};
    use crate::table::write_table;

    fn cfg() -> EngramConfig {
        EngramConfig {
            num_rows: 1_024,
            ..EngramConfig::engram_27b()
        }
    }

    fn plan_256(cfg: &EngramConfig) -> GatherPlan {
        let seqs: Vec<Vec<u32>> = (0..256u32).map(|i| vec![i, i ^ 0xABCD, i * 7]).collect();
        plan_gather(&TokenContext::decode_batch(&seqs), cfg).unwrap()
    }

    #[test]
    fn load_round_trip_exposes_payload_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.engt");
        let cfg = cfg();
        write_table(&path, &cfg, TableFill::SeededRandom).unwrap();
        let expected = generate_payload(&cfg, TableFill::SeededRandom);
        for kind in [
            BackendKind::LocalMemory,
            BackendKind::MappedFile,
            BackendKind::modeled(FabricModel::cxl()),
        ] {
            let b = load_table(&path, &cfg, &kind).unwrap();
            assert_eq!(b.region_len(), 1_024 * 1_280 * 2);
            assert_eq!(b.region(), &expected[..]);
            assert_eq!(b.kind(), kind);
        }
    }

    #[test]
    fn load_errors() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = cfg();
        let missing = dir.path().join("missing.engt");
        for kind in [BackendKind::LocalMemory, BackendKind::MappedFile] {
            assert!(matches!(
                load_table(&missing, &cfg, &kind),
                Err(Error::File { .. })
            ));
        }

        let path = dir.path().join("t.engt");
        write_table(&path, &cfg, TableFill::Zeros).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[..4].copy_from_slice(b"XXXX");
        let bad = dir.path().join("bad.engt");
        std::fs::write(&bad, &bytes).unwrap();
        let msg = load_table(&bad, &cfg, &BackendKind::MappedFile)
            .err()
            .unwrap()
            .to_string();
        assert!(msg.contains("bad magic"), "{msg}");

        let small = EngramConfig {
            num_rows: 100,
            ..cfg.clone()
        };
        let small_path = dir.path().join("small.engt");
        write_table(&small_path, &small, TableFill::Zeros).unwrap();
        let bigger = EngramConfig {
            num_rows: 200,
            ..cfg.clone()
        };
        for kind in [BackendKind::LocalMemory, BackendKind::MappedFile] {
            let msg = load_table(&small_path, &bigger, &kind)
                .err()
                .unwrap()
                .to_string();
            assert!(msg.contains("config mismatch"), "{msg}");
        }

        bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 1);
        let short = dir.path().join("short.engt");
        std::fs::write(&short, &bytes).unwrap();
        for kind in [BackendKind::LocalMemory, BackendKind::MappedFile] {
            assert!(matches!(
                load_table(&short, &cfg, &kind),
                Err(Error::RegionTooSmall { .. })
            ));
        }
    }

    #[test]
    fn parallel_gather_matches_sequential_copy() {
        let cfg = cfg();
        let backend = StorageBackend::in_memory(&cfg, TableFill::SeededRandom).unwrap();
        let plan = plan_256(&cfg);
        assert_eq!(plan.len(), 4_096);

        let mut oracle = Vec::new();
        for a in &plan.addresses {
            let row = a.row as usize * cfg.row_bytes();
            let start = row + a.head * cfg.segment_bytes();
            oracle.extend_from_slice(&backend.region()[start..start + cfg.segment_bytes()]);
        }

        let mut dst = vec![0u8; plan.total_bytes()];
        let report = backend.read_segments(&plan, &mut dst, 64).unwrap();
        assert_eq!(dst, oracle);
        assert_eq!(report.bytes_moved, 1_310_720);
        assert_eq!(report.modeled_ns, report.wall_ns as f64);
    }

    #[test]
    fn empty_plan_leaves_destination_untouched() {
        let backend = StorageBackend::in_memory(&cfg(), TableFill::Zeros).unwrap();
        let mut dst = vec![0xAAu8; 16];
        let report = backend
            .read_segments(&GatherPlan::default(), &mut dst, 4)
            .unwrap();
        assert_eq!(report.bytes_moved, 0);
        assert!(dst.iter().all(|&b| b == 0xAA));
    }

    #[test]
    fn modeled_report_uses_formula() {
        let cfg = cfg();
        let backend = StorageBackend::modeled(
            StorageBackend::in_memory(&cfg, TableFill::Zeros).unwrap(),
            FabricModel::rdma(),
        )
        .unwrap();
        let plan = plan_256(&cfg);
        let mut dst = vec![0u8; plan.total_bytes()];
        let report = backend.read_segments(&plan, &mut dst, 8).unwrap();
        let m = FabricModel::rdma();
        assert_eq!(
            report.modeled_ns,
            m.base_latency_ns + 128.0 * m.per_message_ns + 1_310_720.0 * m.per_byte_ns
        );
    }

    #[test]
    fn rejects_out_of_bounds_before_copying() {
        let cfg = cfg();
        let backend = StorageBackend::in_memory(&cfg, TableFill::SeededRandom).unwrap();
        let mut plan = plan_256(&cfg);
        let mut bad = SegmentAddress::new(cfg.num_rows - 1, 7, 0, &cfg);
        bad.byte_offset += 1;
        plan.addresses.push(bad);
        let mut dst = vec![0x55u8; plan.total_bytes()];
        let err = backend.read_segments(&plan, &mut dst, 8).unwrap_err();
        assert!(matches!(err, Error::OutOfBounds { .. }), "{err}");
        assert!(dst.iter().all(|&b| b == 0x55));
    }

    #[test]
    fn rejects_short_destination_and_zero_workers() {
        let cfg = cfg();
        let backend = StorageBackend::in_memory(&cfg, TableFill::Zeros).unwrap();
        let plan = plan_256(&cfg);
        let mut dst = vec![0u8; plan.total_bytes() - 1];
        assert!(matches!(
            backend.read_segments(&plan, &mut dst, 4),
            Err(Error::DestinationTooSmall { .. })
        ));
        let mut dst = vec![0u8; plan.total_bytes()];
        assert!(matches!(
            backend.read_segments(&plan, &mut dst, 0),
            Err(Error::NoWorkers)
        ));
    }

    #[test]
    fn kind_labels() {
        assert_eq!(BackendKind::LocalMemory.to_string(), "local");
        assert_eq!(
            BackendKind::modeled(FabricModel::cxl()).to_string(),
            "modeled:cxl"
        );
        assert_eq!(
            BackendKind::Modeled(Box::new(BackendKind::MappedFile), FabricModel::rdma())
                .to_string(),
            "modeled:rdma@mapped"
        );
    }
}
