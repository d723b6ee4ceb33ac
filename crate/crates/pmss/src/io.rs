//! On-disk formats. All binary formats are little-endian and versioned so
//! that round trips are bit-exact and mismatches fail loudly.
//!
//! Matrix container (`.dmat`):
//!
//! ```text
//! magic "DMAT" | u32 version = 1 | u64 rows | u64 cols | rows*cols f64, row-major
//! ```
//!
//! Adapter checkpoint (`.pmsa`) — the base matrix is not stored, only its
//! SHA-256 content hash (computed over its `.dmat` serialization):
//!
//! ```text
//! magic "PMSA" | u32 version = 1 | [u8; 32] base hash
//! | u64 m | u64 n | u64 c | u64 r | f64 alpha
//! | c u64 column indices (1-based) | r u64 row indices (1-based)
//! | c*r f64 core entries, row-major
//! ```
//!
//! Index files (`.idx`) are line-oriented text: a single header comment
//! followed by one 1-based index per line:
//!
//! ```text
//! # skel v1 axis=col count=3 strategy=pmss seed=-
//! 4
//! 1
//! 7
//! ```
//!
//! CSV matrices are plain comma-separated rows without a header; values are
//! written in the shortest form that parses back to the same `f64`.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::adapter::Checkpoint;
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::skeleton::SelectionStrategy;

const DMAT_MAGIC: &[u8; 4] = b"DMAT";
const PMSA_MAGIC: &[u8; 4] = b"PMSA";
const FORMAT_VERSION: u32 = 1;

/// Serialization format for matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Dmat,
    Csv,
}

impl FromStr for MatrixFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dmat" => Ok(MatrixFormat::Dmat),
            "csv" => Ok(MatrixFormat::Csv),
            other => Err(Error::Parameter(format!("unknown matrix format '{other}'"))),
        }
    }
}

/// Which index vector an index file carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Col,
    Row,
}

impl Axis {
    fn name(self) -> &'static str {
        match self {
            Axis::Col => "col",
            Axis::Row => "row",
        }
    }
}

/// Contents of a skeleton index file.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexFile {
    pub axis: Axis,
    /// 1-based indices in selection order.
    pub indices: Vec<usize>,
    pub strategy: SelectionStrategy,
    pub seed: Option<u64>,
}

/// The canonical binary serialization of a matrix; also the byte stream the
/// checkpoint content hash is computed over.
pub fn dmat_bytes(w: &DenseMatrix) -> Vec<u8> {
    let (rows, cols) = w.shape();
    let mut out = Vec::with_capacity(4 + 4 + 16 + 8 * rows * cols);
    out.extend_from_slice(DMAT_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(rows as u64).to_le_bytes());
    out.extend_from_slice(&(cols as u64).to_le_bytes());
    for v in w.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// SHA-256 over the canonical binary serialization of a matrix.
pub fn hash_matrix(w: &DenseMatrix) -> [u8; 32] {
    Sha256::digest(dmat_bytes(w)).into()
}

pub fn write_dmat(path: &Path, w: &DenseMatrix) -> Result<()> {
    let mut file = fs::File::create(path)?;
    file.write_all(&dmat_bytes(w))?;
    Ok(())
}

pub fn read_dmat(path: &Path) -> Result<DenseMatrix> {
    let bytes = fs::read(path)?;
    dmat_from_bytes(&bytes)
}

pub fn dmat_from_bytes(bytes: &[u8]) -> Result<DenseMatrix> {
    let mut cursor = Cursor::new(bytes);
    cursor.expect_magic(DMAT_MAGIC, "matrix")?;
    let version = cursor.read_u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported matrix format version {version}")));
    }
    let rows = cursor.read_dim()?;
    let cols = cursor.read_dim()?;
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::Format("matrix dimensions overflow".into()))?;
    let mut data = Vec::with_capacity(count);
    for _ in 0..count {
        data.push(cursor.read_f64()?);
    }
    cursor.expect_eof()?;
    DenseMatrix::new(rows, cols, data)
}

pub fn write_csv(path: &Path, w: &DenseMatrix) -> Result<()> {
    let mut out = String::new();
    for i in 0..w.rows() {
        let row: Vec<String> = w.row(i).iter().map(|v| format!("{v}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<DenseMatrix> {
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|cell| {
                cell.trim().parse::<f64>().map_err(|_| {
                    Error::Format(format!("line {}: '{cell}' is not a number", lineno + 1))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::Format(format!(
                    "line {}: expected {} values, got {}",
                    lineno + 1,
                    first.len(),
                    row.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Format("csv file holds no rows".into()));
    }
    DenseMatrix::from_rows(&rows)
}

/// Reads a matrix in either supported format, sniffing the binary magic.
pub fn read_matrix(path: &Path) -> Result<DenseMatrix> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(DMAT_MAGIC) {
        dmat_from_bytes(&bytes)
    } else {
        read_csv(path)
    }
}

pub fn write_matrix(path: &Path, w: &DenseMatrix, format: MatrixFormat) -> Result<()> {
    match format {
        MatrixFormat::Dmat => write_dmat(path, w),
        MatrixFormat::Csv => write_csv(path, w),
    }
}

pub fn write_index_file(path: &Path, file: &IndexFile) -> Result<()> {
    let seed = match file.seed {
        Some(s) => s.to_string(),
        None => "-".to_string(),
    };
    let mut out = format!(
        "# skel v1 axis={} count={} strategy={} seed={seed}\n",
        file.axis.name(),
        file.indices.len(),
        file.strategy
    );
    for idx in &file.indices {
        out.push_str(&idx.to_string());
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_index_file(path: &Path) -> Result<IndexFile> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Format("empty index file".into()))?;
    let rest = header
        .strip_prefix("# skel v1 ")
        .ok_or_else(|| Error::Format(format!("bad index header '{header}'")))?;

    let mut axis = None;
    let mut count = None;
    let mut strategy = None;
    let mut seed = None;
    for token in rest.split_whitespace() {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("bad header token '{token}'")))?;
        match key {
            "axis" => {
                axis = Some(match value {
                    "col" => Axis::Col,
                    "row" => Axis::Row,
                    other => return Err(Error::Format(format!("unknown axis '{other}'"))),
                });
            }
            "count" => {
                count = Some(value.parse::<usize>().map_err(|_| {
                    Error::Format(format!("bad count '{value}' in index header"))
                })?);
            }
            "strategy" => {
                strategy = Some(SelectionStrategy::from_str(value).map_err(|_| {
                    Error::Format(format!("unknown strategy '{value}' in index header"))
                })?);
            }
            "seed" => {
                seed = Some(if value == "-" {
                    None
                } else {
                    Some(value.parse::<u64>().map_err(|_| {
                        Error::Format(format!("bad seed '{value}' in index header"))
                    })?)
                });
            }
            other => return Err(Error::Format(format!("unknown header key '{other}'"))),
        }
    }
    let axis = axis.ok_or_else(|| Error::Format("index header lacks axis".into()))?;
    let count = count.ok_or_else(|| Error::Format("index header lacks count".into()))?;
    let strategy = strategy.ok_or_else(|| Error::Format("index header lacks strategy".into()))?;
    let seed = seed.ok_or_else(|| Error::Format("index header lacks seed".into()))?;

    let mut indices = Vec::with_capacity(count);
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let idx = line
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::Format(format!("bad index line '{line}'")))?;
        if idx == 0 {
            return Err(Error::Format("index entries are 1-based; found 0".into()));
        }
        indices.push(idx);
    }
    if indices.len() != count {
        return Err(Error::Format(format!(
            "index header promises {count} entries, file holds {}",
            indices.len()
        )));
    }
    Ok(IndexFile { axis, indices, strategy, seed })
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut file = fs::File::create(path)?;
    file.write_all(&checkpoint_bytes(ckpt))?;
    Ok(())
}

pub fn checkpoint_bytes(ckpt: &Checkpoint) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(PMSA_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&ckpt.w_hash);
    for dim in [ckpt.m, ckpt.n, ckpt.c, ckpt.r] {
        out.extend_from_slice(&dim.to_le_bytes());
    }
    out.extend_from_slice(&ckpt.alpha.to_le_bytes());
    for idx in ckpt.col_indices.iter().chain(&ckpt.row_indices) {
        out.extend_from_slice(&idx.to_le_bytes());
    }
    for v in &ckpt.u_data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path)?;
    checkpoint_from_bytes(&bytes)
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    let mut cursor = Cursor::new(bytes);
    cursor.expect_magic(PMSA_MAGIC, "checkpoint")?;
    let version = cursor.read_u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let mut w_hash = [0u8; 32];
    cursor.read_exact(&mut w_hash)?;
    let m = cursor.read_u64()?;
    let n = cursor.read_u64()?;
    let c = cursor.read_u64()?;
    let r = cursor.read_u64()?;
    let alpha = cursor.read_f64()?;
    let read_indices = |cursor: &mut Cursor, count: u64| -> Result<Vec<u64>> {
        (0..count).map(|_| cursor.read_u64()).collect()
    };
    let col_indices = read_indices(&mut cursor, c)?;
    let row_indices = read_indices(&mut cursor, r)?;
    let entries = c
        .checked_mul(r)
        .ok_or_else(|| Error::Format("checkpoint core size overflows".into()))?;
    let mut u_data = Vec::with_capacity(entries as usize);
    for _ in 0..entries {
        u_data.push(cursor.read_f64()?);
    }
    cursor.expect_eof()?;
    Ok(Checkpoint { m, n, c, r, alpha, w_hash, col_indices, row_indices, u_data })
}

/// Byte reader with format-error reporting for truncated input.
struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        if self.pos + len > self.bytes.len() {
            return Err(Error::Format(format!(
                "truncated file: wanted {len} bytes at offset {}, have {}",
                self.pos,
                self.bytes.len() - self.pos
            )));
        }
        let slice = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(slice)
    }

    fn expect_magic(&mut self, magic: &[u8; 4], what: &str) -> Result<()> {
        let got = self.take(4)?;
        if got != magic {
            return Err(Error::Format(format!("not a {what} file: bad magic {got:?}")));
        }
        Ok(())
    }

    fn expect_eof(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after the payload",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }

    fn read_exact(&mut self, buf: &mut [u8]) -> Result<()> {
        buf.copy_from_slice(self.take(buf.len())?);
        Ok(())
    }

    fn read_u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn read_u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn read_f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn read_dim(&mut self) -> Result<usize> {
        let v = self.read_u64()?;
        usize::try_from(v).map_err(|_| Error::Format(format!("dimension {v} too large")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapter::PmssAdapter;
    use crate::skeleton::SelectionStrategy;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use tempfile::tempdir;

    #[test]
    fn dmat_round_trip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("w.dmat");
        // Include awkward values: negative zero, subnormals, extremes.
        let w = DenseMatrix::new(
            2,
            3,
            vec![-0.0, 1.5e-310, f64::MAX, f64::MIN_POSITIVE, -3.25, 0.1],
        )
        .unwrap();
        write_dmat(&path, &w).unwrap();
        let bytes_a = std::fs::read(&path).unwrap();
        let back = read_dmat(&path).unwrap();
        assert_eq!(
            back.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            w.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        write_dmat(&path, &back).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), bytes_a);
    }

    #[test]
    fn dmat_rejects_bad_magic_version_and_truncation() {
        let w = DenseMatrix::identity(2);
        let mut bytes = dmat_bytes(&w);
        bytes[0] = b'X';
        assert!(matches!(dmat_from_bytes(&bytes), Err(Error::Format(_))));

        let mut bytes = dmat_bytes(&w);
        bytes[4] = 9;
        assert!(matches!(dmat_from_bytes(&bytes), Err(Error::Format(_))));

        let bytes = dmat_bytes(&w);
        assert!(matches!(dmat_from_bytes(&bytes[..bytes.len() - 3]), Err(Error::Format(_))));

        let mut bytes = dmat_bytes(&w);
        bytes.push(0);
        assert!(matches!(dmat_from_bytes(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn dmat_rejects_non_finite_payload() {
        let w = DenseMatrix::identity(2);
        let mut bytes = dmat_bytes(&w);
        let nan = f64::NAN.to_le_bytes();
        let off = bytes.len() - 8;
        bytes[off..].copy_from_slice(&nan);
        assert!(matches!(dmat_from_bytes(&bytes), Err(Error::NonFinite(_))));
    }

    #[test]
    fn csv_round_trip_preserves_values() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("w.csv");
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = DenseMatrix::gaussian(4, 3, 1.0, &mut rng);
        write_csv(&path, &w).unwrap();
        let back = read_csv(&path).unwrap();
        assert_eq!(back, w, "shortest float form must parse back exactly");
    }

    #[test]
    fn csv_rejects_ragged_rows_and_junk() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "1,2\n3\n").unwrap();
        assert!(matches!(read_csv(&path), Err(Error::Format(_))));
        std::fs::write(&path, "1,two\n").unwrap();
        assert!(matches!(read_csv(&path), Err(Error::Format(_))));
        std::fs::write(&path, "").unwrap();
        assert!(matches!(read_csv(&path), Err(Error::Format(_))));
    }

    #[test]
    fn read_matrix_sniffs_both_formats() {
        let dir = tempdir().unwrap();
        let w = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let bin = dir.path().join("w.dmat");
        write_dmat(&bin, &w).unwrap();
        assert_eq!(read_matrix(&bin).unwrap(), w);
        let csv = dir.path().join("w.csv");
        write_csv(&csv, &w).unwrap();
        assert_eq!(read_matrix(&csv).unwrap(), w);
    }

    #[test]
    fn index_file_round_trips_with_and_without_seed() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("j.idx");
        let seeded = IndexFile {
            axis: Axis::Col,
            indices: vec![4, 1, 7],
            strategy: SelectionStrategy::Random,
            seed: Some(99),
        };
        write_index_file(&path, &seeded).unwrap();
        assert_eq!(read_index_file(&path).unwrap(), seeded);

        let plain = IndexFile {
            axis: Axis::Row,
            indices: vec![2],
            strategy: SelectionStrategy::Pmss,
            seed: None,
        };
        write_index_file(&path, &plain).unwrap();
        assert_eq!(read_index_file(&path).unwrap(), plain);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# skel v1 axis=row count=1 strategy=pmss seed=-\n"), "{text}");
    }

    #[test]
    fn index_file_rejects_count_mismatch_and_zero() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("j.idx");
        std::fs::write(&path, "# skel v1 axis=col count=2 strategy=pmss seed=-\n1\n").unwrap();
        assert!(matches!(read_index_file(&path), Err(Error::Format(_))));
        std::fs::write(&path, "# skel v1 axis=col count=1 strategy=pmss seed=-\n0\n").unwrap();
        assert!(matches!(read_index_file(&path), Err(Error::Format(_))));
        std::fs::write(&path, "no header\n1\n").unwrap();
        assert!(matches!(read_index_file(&path), Err(Error::Format(_))));
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("a.pmsa");
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let w = DenseMatrix::gaussian(6, 5, 1.0, &mut rng);
        let mut adapter =
            PmssAdapter::init(w.clone(), SelectionStrategy::Pmss, 3, 2, 3.0, 0).unwrap();
        adapter.set_u(DenseMatrix::gaussian(3, 2, 1.0, &mut rng)).unwrap();
        let ckpt = crate::adapter::Checkpoint::from_adapter(&adapter);
        write_checkpoint(&path, &ckpt).unwrap();
        let bytes_a = std::fs::read(&path).unwrap();
        let back = read_checkpoint(&path).unwrap();
        assert_eq!(back, ckpt);
        write_checkpoint(&path, &back).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), bytes_a);
        let restored = back.into_adapter(w, SelectionStrategy::Pmss, None).unwrap();
        assert_eq!(restored, adapter);
    }

    #[test]
    fn checkpoint_rejects_corruption() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let w = DenseMatrix::gaussian(4, 4, 1.0, &mut rng);
        let adapter = PmssAdapter::init(w, SelectionStrategy::Pmss, 2, 2, 2.0, 0).unwrap();
        let bytes = checkpoint_bytes(&crate::adapter::Checkpoint::from_adapter(&adapter));

        let mut bad = bytes.clone();
        bad[0] = b'Q';
        assert!(matches!(checkpoint_from_bytes(&bad), Err(Error::Format(_))));
        assert!(matches!(
            checkpoint_from_bytes(&bytes[..bytes.len() - 1]),
            Err(Error::Format(_))
        ));
        let mut long = bytes.clone();
        long.push(7);
        assert!(matches!(checkpoint_from_bytes(&long), Err(Error::Format(_))));
    }

    #[test]
    fn hash_changes_with_content() {
        let a = DenseMatrix::identity(3);
        let mut b = DenseMatrix::identity(3);
        b.set(0, 0, 2.0);
        assert_ne!(hash_matrix(&a), hash_matrix(&b));
        assert_eq!(hash_matrix(&a), hash_matrix(&DenseMatrix::identity(3)));
    }
}
