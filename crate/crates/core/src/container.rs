//! `VROM` binary container and JSON sidecar manifests.
//!
//! Layout (all little-endian):
//!
//! ```text
//! 0   magic "VROM"
//! 4   u16 format version
//! 6   u16 payload kind
//! 8   u64 nx          16  u64 nv
//! 24  f64 dt          32  u64 snapshot stride
//! 40  f64 T           48  f64 alpha          56  f64 v0
//! 64  u64 record count
//! 72  u64 floats per record
//! 80  u64 layout length in bytes (JSON, zero-padded to 8)
//! 88  u64 reserved
//! 96  layout JSON, then records of f64
//! ```
//!
//! Records are fixed-size so any snapshot can be read with one seek.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{ParamPoint, PhaseGrid};

pub const MAGIC: &[u8; 4] = b"VROM";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[repr(u16)]
pub enum PayloadKind {
    /// One record per stored step: `[t, f (N_f), φ (nx), max|E|]`.
    Trajectory = 1,
    WindowBasis = 2,
    WindowOperators = 3,
    /// Reconstructed distributions, one record `[t, f]` each.
    FieldDump = 4,
    /// One record per ROM step: `[t, window, max|E|, f̂ (padded)]`.
    ReducedTrajectory = 5,
}

impl PayloadKind {
    fn from_u16(v: u16) -> Option<Self> {
        Some(match v {
            1 => Self::Trajectory,
            2 => Self::WindowBasis,
            3 => Self::WindowOperators,
            4 => Self::FieldDump,
            5 => Self::ReducedTrajectory,
            _ => return None,
        })
    }
}

/// A named dense block inside a record, shape in row-major (last index
/// fastest) order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl BlockSpec {
    pub fn new(name: &str, shape: &[usize]) -> Self {
        Self {
            name: name.to_string(),
            shape: shape.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Layout {
    pub blocks: Vec<BlockSpec>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub meta: serde_json::Value,
}

impl Layout {
    pub fn record_len(&self) -> usize {
        self.blocks.iter().map(BlockSpec::len).sum()
    }

    /// Splits a record into its named blocks.
    pub fn split<'a>(&self, record: &'a [f64]) -> Result<Vec<(&str, &'a [f64])>> {
        if record.len() != self.record_len() {
            return Err(Error::Dimension(format!(
                "record has {} floats, layout needs {}",
                record.len(),
                self.record_len()
            )));
        }
        let mut out = Vec::with_capacity(self.blocks.len());
        let mut at = 0;
        for b in &self.blocks {
            out.push((b.name.as_str(), &record[at..at + b.len()]));
            at += b.len();
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Header {
    pub kind: PayloadKind,
    pub nx: usize,
    pub nv: usize,
    pub dt: f64,
    pub stride: usize,
    pub mu: ParamPoint,
    pub record_count: usize,
    pub record_len: usize,
    pub layout: Layout,
}

impl Header {
    pub fn new(kind: PayloadKind, grid: &PhaseGrid, dt: f64, stride: usize, mu: ParamPoint, layout: Layout) -> Self {
        Self {
            kind,
            nx: grid.nx,
            nv: grid.nv,
            dt,
            stride,
            mu,
            record_count: 0,
            record_len: layout.record_len(),
            layout,
        }
    }

    fn layout_bytes(&self) -> Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec(&self.layout)?;
        while bytes.len() % 8 != 0 {
            bytes.push(0);
        }
        Ok(bytes)
    }

    fn encode(&self) -> Result<Vec<u8>> {
        let layout = self.layout_bytes()?;
        let mut h = Vec::with_capacity(HEADER_LEN + layout.len());
        h.extend_from_slice(MAGIC);
        h.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        h.extend_from_slice(&(self.kind as u16).to_le_bytes());
        h.extend_from_slice(&(self.nx as u64).to_le_bytes());
        h.extend_from_slice(&(self.nv as u64).to_le_bytes());
        h.extend_from_slice(&self.dt.to_le_bytes());
        h.extend_from_slice(&(self.stride as u64).to_le_bytes());
        h.extend_from_slice(&self.mu.temperature.to_le_bytes());
        h.extend_from_slice(&self.mu.alpha.to_le_bytes());
        h.extend_from_slice(&self.mu.v0.to_le_bytes());
        h.extend_from_slice(&(self.record_count as u64).to_le_bytes());
        h.extend_from_slice(&(self.record_len as u64).to_le_bytes());
        h.extend_from_slice(&(layout.len() as u64).to_le_bytes());
        h.extend_from_slice(&0u64.to_le_bytes());
        debug_assert_eq!(h.len(), HEADER_LEN);
        h.extend_from_slice(&layout);
        Ok(h)
    }

    fn decode<R: Read>(r: &mut R, path: &Path) -> Result<(Self, usize)> {
        let bad = |reason: &str| Error::Format {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        let mut h = [0u8; HEADER_LEN];
        r.read_exact(&mut h).map_err(|_| bad("truncated header"))?;
        if &h[0..4] != MAGIC {
            return Err(bad("bad magic bytes"));
        }
        let u16_at = |o: usize| u16::from_le_bytes(h[o..o + 2].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(h[o..o + 8].try_into().unwrap()) as usize;
        let f64_at = |o: usize| f64::from_le_bytes(h[o..o + 8].try_into().unwrap());
        let version = u16_at(4);
        if version != FORMAT_VERSION {
            return Err(bad(&format!("unsupported format version {version}")));
        }
        let kind = PayloadKind::from_u16(u16_at(6)).ok_or_else(|| bad("unknown payload kind"))?;
        let layout_len = u64_at(80);
        let mut layout_bytes = vec![0u8; layout_len];
        r.read_exact(&mut layout_bytes).map_err(|_| bad("truncated layout"))?;
        let end = layout_bytes.iter().rposition(|&b| b != 0).map_or(0, |p| p + 1);
        let layout: Layout = serde_json::from_slice(&layout_bytes[..end])?;
        let header = Self {
            kind,
            nx: u64_at(8),
            nv: u64_at(16),
            dt: f64_at(24),
            stride: u64_at(32),
            mu: ParamPoint {
                temperature: f64_at(40),
                alpha: f64_at(48),
                v0: f64_at(56),
            },
            record_count: u64_at(64),
            record_len: u64_at(72),
            layout,
        };
        if header.layout.record_len() != header.record_len {
            return Err(bad("layout does not match record length"));
        }
        Ok((header, HEADER_LEN + layout_len))
    }
}

/// Streaming writer; the record count is patched into the header on
/// [`ContainerWriter::finish`], which also returns the file checksum.
pub struct ContainerWriter {
    path: PathBuf,
    out: BufWriter<File>,
    header: Header,
}

impl ContainerWriter {
    pub fn create(path: impl AsRef<Path>, header: Header) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut out = BufWriter::with_capacity(1 << 20, File::create(&path)?);
        out.write_all(&header.encode()?)?;
        Ok(Self { path, out, header })
    }

    pub fn write_record(&mut self, record: &[f64]) -> Result<()> {
        if record.len() != self.header.record_len {
            return Err(Error::Dimension(format!(
                "record has {} floats, container expects {}",
                record.len(),
                self.header.record_len
            )));
        }
        for v in record {
            self.out.write_all(&v.to_le_bytes())?;
        }
        self.header.record_count += 1;
        Ok(())
    }

    /// Writes a record given as consecutive parts.
    pub fn write_parts(&mut self, parts: &[&[f64]]) -> Result<()> {
        let len: usize = parts.iter().map(|p| p.len()).sum();
        if len != self.header.record_len {
            return Err(Error::Dimension(format!(
                "record has {len} floats, container expects {}",
                self.header.record_len
            )));
        }
        for p in parts {
            for v in *p {
                self.out.write_all(&v.to_le_bytes())?;
            }
        }
        self.header.record_count += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<String> {
        self.out.flush()?;
        let mut file = self.out.into_inner().map_err(|e| e.into_error())?;
        file.seek(SeekFrom::Start(64))?;
        file.write_all(&(self.header.record_count as u64).to_le_bytes())?;
        file.sync_all()?;
        drop(file);
        file_checksum(&self.path)
    }
}

/// Random-access reader over fixed-size records.
pub struct ContainerReader {
    path: PathBuf,
    file: BufReader<File>,
    header: Header,
    data_offset: u64,
}

impl ContainerReader {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut file = BufReader::with_capacity(1 << 20, File::open(&path)?);
        let (header, offset) = Header::decode(&mut file, &path)?;
        let expected = offset as u64 + (header.record_count * header.record_len * 8) as u64;
        let actual = file.get_ref().metadata()?.len();
        if actual != expected {
            return Err(Error::Format {
                path,
                reason: format!("file is {actual} bytes, header implies {expected}"),
            });
        }
        Ok(Self {
            path,
            file,
            header,
            data_offset: offset as u64,
        })
    }

    pub fn header(&self) -> &Header {
        &self.header
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn read_record(&mut self, index: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.header.record_len];
        self.read_record_into(index, &mut out)?;
        Ok(out)
    }

    pub fn read_record_into(&mut self, index: usize, out: &mut [f64]) -> Result<()> {
        if index >= self.header.record_count {
            return Err(Error::Format {
                path: self.path.clone(),
                reason: format!("record {index} of {}", self.header.record_count),
            });
        }
        let at = self.data_offset + (index * self.header.record_len * 8) as u64;
        self.file.seek(SeekFrom::Start(at))?;
        let mut buf = [0u8; 8];
        for v in out.iter_mut() {
            self.file.read_exact(&mut buf)?;
            *v = f64::from_le_bytes(buf);
        }
        Ok(())
    }
}

pub fn file_checksum(path: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    let mut file = BufReader::new(File::open(path)?);
    let mut buf = vec![0u8; 1 << 20];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

pub fn verify_checksum(path: &Path, expected: &str) -> Result<()> {
    if file_checksum(path)? != expected {
        return Err(Error::Checksum(path.to_path_buf()));
    }
    Ok(())
}

/// JSON sidecar for one full-order trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryManifest {
    pub file: String,
    pub sha256: String,
    pub mu: ParamPoint,
    pub grid: PhaseGrid,
    pub dt: f64,
    pub stride: usize,
    pub steps: Vec<usize>,
    pub times: Vec<f64>,
}

impl TrajectoryManifest {
    pub fn trajectory_layout(grid: &PhaseGrid) -> Layout {
        Layout {
            blocks: vec![
                BlockSpec::new("t", &[1]),
                BlockSpec::new("f", &[grid.nx, grid.nv]),
                BlockSpec::new("phi", &[grid.nx]),
                BlockSpec::new("max_e", &[1]),
            ],
            meta: serde_json::Value::Null,
        }
    }

    pub fn sidecar_path(container: &Path) -> PathBuf {
        container.with_extension("json")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    /// Resolves the container path relative to the manifest location.
    pub fn container_path(&self, manifest_path: &Path) -> PathBuf {
        manifest_path
            .parent()
            .map(|d| d.join(&self.file))
            .unwrap_or_else(|| PathBuf::from(&self.file))
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

/// Runs the full-order model and streams it into a container plus manifest.
/// Returns the manifest path.
pub fn write_fom_trajectory(
    config: &crate::fom::FomConfig,
    mu: ParamPoint,
    container: &Path,
) -> Result<PathBuf> {
    let grid = &config.grid;
    let header = Header::new(
        PayloadKind::Trajectory,
        grid,
        config.dt,
        config.snapshot_stride,
        mu,
        TrajectoryManifest::trajectory_layout(grid),
    );
    let mut writer = ContainerWriter::create(container, header)?;
    let mut steps = Vec::new();
    let mut times = Vec::new();
    crate::fom::fom_run_with(config, mu, |s| {
        writer.write_parts(&[&[s.time], s.f, s.phi, &[s.max_e]])?;
        steps.push(s.step);
        times.push(s.time);
        Ok(())
    })?;
    let sha256 = writer.finish()?;
    let manifest = TrajectoryManifest {
        file: container
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        sha256,
        mu,
        grid: grid.clone(),
        dt: config.dt,
        stride: config.snapshot_stride,
        steps,
        times,
    };
    let path = TrajectoryManifest::sidecar_path(container);
    manifest.save(&path)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fom::FomConfig;

    #[test]
    fn trajectory_container_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let grid = PhaseGrid::new(8, 8, 1.0).unwrap();
        let cfg = FomConfig {
            t_final: 0.01,
            ..FomConfig::new(grid.clone())
        };
        let mu = ParamPoint::new(0.1, 0.01, 1.0).unwrap();
        let path = dir.path().join("run.vrom");
        let manifest_path = write_fom_trajectory(&cfg, mu, &path).unwrap();
        let manifest = TrajectoryManifest::load(&manifest_path).unwrap();
        assert_eq!(manifest.steps, vec![0, 1, 2, 3, 4]);
        let container = manifest.container_path(&manifest_path);
        verify_checksum(&container, &manifest.sha256).unwrap();

        let reference = crate::fom::fom_run(&cfg, mu).unwrap();
        let mut r = ContainerReader::open(&container).unwrap();
        assert_eq!(r.header().record_count, 5);
        assert_eq!(r.header().mu, mu);
        let rec = r.read_record(4).unwrap();
        let blocks = r.header().layout.split(&rec).unwrap();
        assert_eq!(blocks[1].0, "f");
        assert_eq!(blocks[1].1, reference.snapshots_f[4].values.as_slice());
        assert_eq!(blocks[2].1, reference.snapshots_phi[4].values.as_slice());

        let mut bytes = std::fs::read(&container).unwrap();
        assert_eq!(&bytes[0..4], b"VROM");
        let last = bytes.len() - 1;
        bytes[last] ^= 1;
        std::fs::write(&container, &bytes).unwrap();
        assert!(matches!(
            verify_checksum(&container, &manifest.sha256),
            Err(Error::Checksum(_))
        ));
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.vrom");
        std::fs::write(&p, b"NOPE0000").unwrap();
        assert!(ContainerReader::open(&p).is_err());

        let grid = PhaseGrid::new(8, 8, 1.0).unwrap();
        let mu = ParamPoint::new(0.1, 0.0, 1.0).unwrap();
        let layout = Layout {
            blocks: vec![BlockSpec::new("a", &[3])],
            meta: serde_json::Value::Null,
        };
        let mut w = ContainerWriter::create(&p, Header::new(PayloadKind::FieldDump, &grid, 0.1, 1, mu, layout)).unwrap();
        w.write_record(&[1.0, 2.0, 3.0]).unwrap();
        assert!(w.write_record(&[1.0]).is_err());
        w.finish().unwrap();
        let len = std::fs::metadata(&p).unwrap().len();
        let f = std::fs::OpenOptions::new().write(true).open(&p).unwrap();
        f.set_len(len - 8).unwrap();
        assert!(matches!(ContainerReader::open(&p), Err(Error::Format { .. })));
    }
}
