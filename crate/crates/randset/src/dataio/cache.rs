//! Binary dataset cache: magic, version, manifest, fixed-width cloud
//! records, and a trailing FNV-1a 64 checksum over everything between.
//! Coordinates are stored as f64 little-endian regardless of the in-memory
//! scalar, so a written file re-reads bit-exactly (f32 widens losslessly).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

use super::{fnv1a64, Dataset, DatasetManifest, PointCloud};

const MAGIC: &[u8; 4] = b"RSDC";
/// Current cache format version.
pub const CACHE_VERSION: u32 = 1;

/// Little-endian byte writer for the cache/embedding formats.
pub(crate) struct ByteWriter {
    pub buf: Vec<u8>,
}

impl ByteWriter {
    pub fn new() -> Self {
        ByteWriter { buf: Vec::new() }
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }
}

/// Bounds-checked little-endian reader; every overrun is a format error.
pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        ByteReader { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(e) => {
                let s = &self.bytes[self.pos..e];
                self.pos = e;
                Ok(s)
            }
            None => Err(Error::Format(format!(
                "record truncated at byte {} (wanted {n} more)",
                self.pos
            ))),
        }
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let s = self.take(n)?;
        String::from_utf8(s.to_vec())
            .map_err(|_| Error::Format("invalid UTF-8 in string field".into()))
    }

    pub fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

fn write_manifest(w: &mut ByteWriter, m: &DatasetManifest) {
    w.str(&m.name);
    w.str(&m.split);
    w.u32(m.class_names.len() as u32);
    for c in &m.class_names {
        w.str(c);
    }
    w.u64(m.item_count as u64);
    w.u64(m.points_per_cloud as u64);
    w.u64(m.creation_seed);
    w.u32(m.source_checksums.len() as u32);
    for (name, sum) in &m.source_checksums {
        w.str(name);
        w.u64(*sum);
    }
}

fn read_manifest(r: &mut ByteReader) -> Result<DatasetManifest> {
    let name = r.str()?;
    let split = r.str()?;
    let n_classes = r.u32()? as usize;
    let mut class_names = Vec::with_capacity(n_classes);
    for _ in 0..n_classes {
        class_names.push(r.str()?);
    }
    let item_count = r.u64()? as usize;
    let points_per_cloud = r.u64()? as usize;
    let creation_seed = r.u64()?;
    let n_sums = r.u32()? as usize;
    let mut source_checksums = Vec::with_capacity(n_sums);
    for _ in 0..n_sums {
        let n = r.str()?;
        let s = r.u64()?;
        source_checksums.push((n, s));
    }
    Ok(DatasetManifest {
        name,
        split,
        class_names,
        item_count,
        points_per_cloud,
        creation_seed,
        source_checksums,
    })
}

/// Serializes a dataset to `path`. The write goes through a temporary file
/// renamed into place, so a crash never leaves a partial cache behind.
pub fn write_cache<S: Scalar>(dataset: &Dataset<S>, path: &Path) -> Result<()> {
    let mut w = ByteWriter::new();
    write_manifest(&mut w, &dataset.manifest);
    for c in &dataset.clouds {
        w.str(&c.id);
        w.u32(c.label as u32);
        w.u32(c.n_points() as u32);
        w.u32(c.dim() as u32);
        for &v in c.points.data() {
            w.f64(v.to_f64());
        }
    }
    let payload = w.buf;
    let mut file = Vec::with_capacity(payload.len() + 16);
    file.extend_from_slice(MAGIC);
    file.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    file.extend_from_slice(&payload);
    file.extend_from_slice(&fnv1a64(&payload).to_le_bytes());

    let tmp = path.with_extension("tmp");
    fs::write(&tmp, &file)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Reads a dataset cache, verifying magic, version, and checksum before
/// parsing records.
pub fn read_cache<S: Scalar>(path: &Path) -> Result<Dataset<S>> {
    let bytes = fs::read(path)?;
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(Error::Format(format!(
            "{} is not a dataset cache (bad magic)",
            path.display()
        )));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CACHE_VERSION {
        return Err(Error::UnsupportedVersion { found: version, supported: CACHE_VERSION });
    }
    let payload = &bytes[8..bytes.len() - 8];
    let stored = u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().unwrap());
    let actual = fnv1a64(payload);
    if stored != actual {
        return Err(Error::ChecksumMismatch(format!(
            "{}: stored {stored:#018x}, computed {actual:#018x}",
            path.display()
        )));
    }

    let mut r = ByteReader::new(payload);
    let manifest = read_manifest(&mut r)?;
    let mut clouds = Vec::with_capacity(manifest.item_count);
    for _ in 0..manifest.item_count {
        let id = r.str()?;
        let label = r.u32()? as usize;
        let n = r.u32()? as usize;
        let d = r.u32()? as usize;
        let mut pts = Matrix::zeros(n, d);
        for v in pts.data_mut() {
            *v = S::cast(r.f64()?);
        }
        clouds.push(PointCloud::new(pts, label, id)?);
    }
    if !r.done() {
        return Err(Error::Format("trailing bytes after last record".into()));
    }
    Dataset::new(manifest, clouds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::build_shapes5;

    fn tmp_path(name: &str) -> std::path::PathBuf {
        let mut p = std::env::temp_dir();
        p.push(format!("randset-cache-test-{}-{name}", std::process::id()));
        p
    }

    #[test]
    fn round_trip_is_exact() {
        let ds: Dataset<f64> = build_shapes5(2, 32, 3, "train").unwrap();
        let path = tmp_path("roundtrip.rsdc");
        write_cache(&ds, &path).unwrap();
        let back: Dataset<f64> = read_cache(&path).unwrap();
        assert_eq!(ds, back);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn truncation_is_detected() {
        let ds: Dataset<f64> = build_shapes5(1, 16, 4, "t").unwrap();
        let path = tmp_path("trunc.rsdc");
        write_cache(&ds, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 21);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            read_cache::<f64>(&path),
            Err(Error::ChecksumMismatch(_))
        ));
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn corruption_is_detected() {
        let ds: Dataset<f64> = build_shapes5(1, 16, 5, "t").unwrap();
        let path = tmp_path("corrupt.rsdc");
        write_cache(&ds, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xFF;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            read_cache::<f64>(&path),
            Err(Error::ChecksumMismatch(_))
        ));
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn stale_version_is_rejected() {
        let ds: Dataset<f64> = build_shapes5(1, 16, 6, "t").unwrap();
        let path = tmp_path("version.rsdc");
        write_cache(&ds, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4..8].copy_from_slice(&99u32.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            read_cache::<f64>(&path),
            Err(Error::UnsupportedVersion { found: 99, .. })
        ));
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn bad_magic_is_rejected() {
        let path = tmp_path("magic.rsdc");
        std::fs::write(&path, b"NOTACACHEFILE???").unwrap();
        assert!(matches!(read_cache::<f64>(&path), Err(Error::Format(_))));
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn writes_are_deterministic() {
        let ds: Dataset<f64> = build_shapes5(1, 16, 7, "t").unwrap();
        let p1 = tmp_path("det1.rsdc");
        let p2 = tmp_path("det2.rsdc");
        write_cache(&ds, &p1).unwrap();
        write_cache(&ds, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        std::fs::remove_file(&p1).ok();
        std::fs::remove_file(&p2).ok();
    }
}
