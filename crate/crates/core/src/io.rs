//! On-disk formats for embedding sets and pair manifests.
//!
//! Binary embeddings: `b"SUE1"`, `u32` LE row count, `u32` LE column count,
//! then `n * d` little-endian `f32` values in row-major order.
//!
//! CSV embeddings: one row per point, comma-separated decimals. Lines that
//! start with `#` are headers/comments. Labels, when present, live in a
//! sidecar file `<path>.labels` holding one integer per line.
//!
//! Pair manifests: one `i\tj` line per pair, zero-based.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SUE1";
const HEADER_LEN: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Binary,
    Csv,
}

impl Format {
    /// `.csv` means CSV, anything else binary.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Binary,
        }
    }
}

/// One modality's point cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSet {
    pub name: String,
    data: Array2<f32>,
    labels: Option<Vec<u32>>,
}

impl EmbeddingSet {
    pub fn new(name: impl Into<String>, data: Array2<f32>) -> Result<Self> {
        let (n, d) = data.dim();
        if n == 0 || d == 0 {
            return Err(Error::Domain(format!(
                "embedding set must be non-empty, got {n}x{d}"
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite value at row {}, column {}",
                pos / d,
                pos % d
            )));
        }
        Ok(EmbeddingSet {
            name: name.into(),
            data,
            labels: None,
        })
    }

    pub fn from_f64(name: impl Into<String>, data: &Array2<f64>) -> Result<Self> {
        Self::new(name, data.mapv(|v| v as f32))
    }

    pub fn with_labels(mut self, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != self.n() {
            return Err(Error::dim(format!(
                "{} labels for {} points",
                labels.len(),
                self.n()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn d(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &Array2<f32> {
        &self.data
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f32> {
        self.data.row(i)
    }

    pub fn to_f64(&self) -> Array2<f64> {
        self.data.mapv(f64::from)
    }

    /// Subset of rows, labels carried along.
    pub fn select(&self, rows: &[usize]) -> Result<EmbeddingSet> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.n()) {
            return Err(Error::dim(format!(
                "row {bad} out of range for {} points",
                self.n()
            )));
        }
        let data = self.data.select(ndarray::Axis(0), rows);
        let mut set = EmbeddingSet::new(self.name.clone(), data)?;
        if let Some(l) = &self.labels {
            set.labels = Some(rows.iter().map(|&r| l[r]).collect());
        }
        Ok(set)
    }

    /// SHA-256 over the binary encoding (labels excluded).
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(encode_binary(self));
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn labels_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".labels");
    PathBuf::from(s)
}

pub fn read_embeddings(path: &Path, format: Format) -> Result<EmbeddingSet> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("embeddings")
        .to_string();
    let data = match format {
        Format::Binary => decode_binary(&bytes, path)?,
        Format::Csv => decode_csv(&bytes, path)?,
    };
    let mut set = EmbeddingSet::new(name, data)?;
    let lp = labels_path(path);
    if lp.exists() {
        let labels = read_labels(&lp)?;
        set = set.with_labels(labels)?;
    }
    Ok(set)
}

pub fn write_embeddings(set: &EmbeddingSet, path: &Path, format: Format) -> Result<()> {
    let bytes = match format {
        Format::Binary => encode_binary(set),
        Format::Csv => encode_csv(set).into_bytes(),
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    if let Some(labels) = set.labels() {
        let lp = labels_path(path);
        let mut s = String::with_capacity(labels.len() * 3);
        for l in labels {
            s.push_str(&l.to_string());
            s.push('\n');
        }
        fs::write(&lp, s).map_err(|e| Error::io(&lp, e))?;
    }
    Ok(())
}

pub fn encode_binary(set: &EmbeddingSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * set.data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(set.n() as u32).to_le_bytes());
    out.extend_from_slice(&(set.d() as u32).to_le_bytes());
    for v in set.data.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_binary(bytes: &[u8], path: &Path) -> Result<Array2<f32>> {
    let err = |offset: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        unit: "byte",
        offset: offset as u64,
        message,
    };
    if bytes.len() < HEADER_LEN {
        return Err(err(
            bytes.len(),
            format!("truncated header ({} of {HEADER_LEN} bytes)", bytes.len()),
        ));
    }
    if &bytes[..4] != MAGIC {
        return Err(err(0, "bad magic, expected \"SUE1\"".into()));
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if n == 0 || d == 0 {
        return Err(err(4, format!("empty shape {n}x{d}")));
    }
    let expected = n
        .checked_mul(d)
        .and_then(|c| c.checked_mul(4))
        .and_then(|c| c.checked_add(HEADER_LEN))
        .ok_or_else(|| err(4, format!("shape {n}x{d} overflows")))?;
    if bytes.len() != expected {
        return Err(err(
            bytes.len().min(expected),
            format!(
                "payload length {} does not match shape {n}x{d} ({} bytes expected)",
                bytes.len() - HEADER_LEN,
                expected - HEADER_LEN
            ),
        ));
    }
    let mut values = Vec::with_capacity(n * d);
    for (idx, chunk) in bytes[HEADER_LEN..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(err(
                HEADER_LEN + 4 * idx,
                format!("non-finite value {v} at row {}, column {}", idx / d, idx % d),
            ));
        }
        values.push(v);
    }
    Ok(Array2::from_shape_vec((n, d), values).expect("shape checked above"))
}

fn encode_csv(set: &EmbeddingSet) -> String {
    let mut s = String::new();
    for row in set.data.rows() {
        let mut first = true;
        for v in row {
            if !first {
                s.push(',');
            }
            first = false;
            // Shortest representation that parses back to the same f32.
            s.push_str(&v.to_string());
        }
        s.push('\n');
    }
    s
}

fn decode_csv(bytes: &[u8], path: &Path) -> Result<Array2<f32>> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        unit: "line",
        offset: line as u64,
        message,
    };
    let text = std::str::from_utf8(bytes).map_err(|e| {
        let line = bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count() + 1;
        err(line, "invalid UTF-8".into())
    })?;
    let mut values = Vec::new();
    let mut d = None;
    let mut n = 0usize;
    for (lineno, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())) {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let before = values.len();
        for field in line.split(',') {
            let field = field.trim();
            let v: f32 = field
                .parse()
                .map_err(|_| err(lineno, format!("cannot parse {field:?} as a number")))?;
            if !v.is_finite() {
                return Err(err(lineno, format!("non-finite value {field:?}")));
            }
            values.push(v);
        }
        let width = values.len() - before;
        match d {
            None => d = Some(width),
            Some(w) if w != width => {
                return Err(err(lineno, format!("expected {w} columns, found {width}")))
            }
            _ => {}
        }
        n += 1;
    }
    let d = d.ok_or_else(|| err(1, "no data rows".into()))?;
    Ok(Array2::from_shape_vec((n, d), values).expect("row widths checked"))
}

fn read_labels(path: &Path) -> Result<Vec<u32>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(i, l)| {
            l.trim().parse::<u32>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                unit: "line",
                offset: i as u64 + 1,
                message: format!("cannot parse label {l:?}"),
            })
        })
        .collect()
}

/// Known cross-modal pairs `(i, j)`: row `i` of X corresponds to row `j` of Y.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairManifest {
    pairs: Vec<(usize, usize)>,
}

impl PairManifest {
    pub fn new(pairs: Vec<(usize, usize)>, n1: usize, n2: usize) -> Result<Self> {
        let mut seen = HashSet::with_capacity(pairs.len());
        for &(i, j) in &pairs {
            if i >= n1 || j >= n2 {
                return Err(Error::Domain(format!(
                    "pair ({i}, {j}) out of range for sets of size {n1} and {n2}"
                )));
            }
            if !seen.insert((i, j)) {
                return Err(Error::Domain(format!("duplicate pair ({i}, {j})")));
            }
        }
        Ok(PairManifest { pairs })
    }

    pub fn empty() -> Self {
        PairManifest::default()
    }

    pub fn m(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn x_indices(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.0).collect()
    }

    pub fn y_indices(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.1).collect()
    }

    /// First `m` pairs.
    pub fn truncate(&self, m: usize) -> PairManifest {
        PairManifest {
            pairs: self.pairs.iter().take(m).copied().collect(),
        }
    }
}

pub fn read_pairs(path: &Path, n1: usize, n2: usize) -> Result<PairManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l)) {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            unit: "line",
            offset: lineno as u64,
            message,
        };
        let mut fields = line.split('\t');
        let (Some(a), Some(b), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(err(format!("expected two tab-separated indices, got {line:?}")));
        };
        let i: usize = a
            .trim()
            .parse()
            .map_err(|_| err(format!("bad index {a:?}")))?;
        let j: usize = b
            .trim()
            .parse()
            .map_err(|_| err(format!("bad index {b:?}")))?;
        if i >= n1 || j >= n2 {
            return Err(err(format!(
                "pair ({i}, {j}) out of range for sets of size {n1} and {n2}"
            )));
        }
        if !seen.insert((i, j)) {
            return Err(err(format!("duplicate pair ({i}, {j})")));
        }
        pairs.push((i, j));
    }
    Ok(PairManifest { pairs })
}

pub fn write_pairs(manifest: &PairManifest, path: &Path) -> Result<()> {
    let mut s = String::new();
    for (i, j) in manifest.pairs() {
        s.push_str(&format!("{i}\t{j}\n"));
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn csv_parse_two_rows() {
        let dir = tmp();
        let p = dir.path().join("a.csv");
        fs::write(&p, "1,0,0\n0,1,0").unwrap();
        let s = read_embeddings(&p, Format::Csv).unwrap();
        assert_eq!((s.n(), s.d()), (2, 3));
        assert_eq!(s.data()[[1, 1]], 1.0);
    }

    #[test]
    fn csv_header_is_skipped() {
        let dir = tmp();
        let p = dir.path().join("a.csv");
        fs::write(&p, "# f0,f1\n1.5,2\n3,4\n").unwrap();
        let s = read_embeddings(&p, Format::Csv).unwrap();
        assert_eq!((s.n(), s.d()), (2, 2));
    }

    #[test]
    fn csv_nan_is_rejected_with_line() {
        let dir = tmp();
        let p = dir.path().join("a.csv");
        fs::write(&p, "1,2\n3,nan\n").unwrap();
        match read_embeddings(&p, Format::Csv).unwrap_err() {
            Error::Parse { unit, offset, .. } => {
                assert_eq!(unit, "line");
                assert_eq!(offset, 2);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn csv_ragged_rows_rejected() {
        let dir = tmp();
        let p = dir.path().join("a.csv");
        fs::write(&p, "1,2\n3\n").unwrap();
        assert!(matches!(
            read_embeddings(&p, Format::Csv),
            Err(Error::Parse { offset: 2, .. })
        ));
    }

    #[test]
    fn binary_four_by_two() {
        let dir = tmp();
        let p = dir.path().join("a.bin");
        let mut bytes = MAGIC.to_vec();
        bytes.extend_from_slice(&4u32.to_le_bytes());
        bytes.extend_from_slice(&2u32.to_le_bytes());
        for i in 0..8 {
            bytes.extend_from_slice(&(i as f32 * 0.5).to_le_bytes());
        }
        fs::write(&p, &bytes).unwrap();
        let s = read_embeddings(&p, Format::Binary).unwrap();
        assert_eq!((s.n(), s.d()), (4, 2));
        assert_eq!(s.data()[[3, 1]], 3.5);
        write_embeddings(&s, &p, Format::Binary).unwrap();
        assert_eq!(fs::read(&p).unwrap(), bytes);
    }

    #[test]
    fn binary_inf_reports_byte_offset() {
        let mut bytes = MAGIC.to_vec();
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&1f32.to_le_bytes());
        bytes.extend_from_slice(&f32::INFINITY.to_le_bytes());
        match decode_binary(&bytes, Path::new("x")).unwrap_err() {
            Error::Parse { unit, offset, .. } => assert_eq!((unit, offset), ("byte", 16)),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn binary_bad_magic_and_truncation() {
        assert!(decode_binary(b"SUE", Path::new("x")).is_err());
        assert!(decode_binary(b"XXXX\x01\0\0\0\x01\0\0\0\0\0\0\0", Path::new("x")).is_err());
        assert!(decode_binary(b"SUE1\x02\0\0\0\x01\0\0\0\0\0\0\0", Path::new("x")).is_err());
    }

    #[test]
    fn csv_round_trip_of_pi() {
        let dir = tmp();
        let p = dir.path().join("pi.csv");
        let data = Array2::from_elem((3, 4), std::f32::consts::PI);
        let s = EmbeddingSet::new("pi", data.clone()).unwrap();
        write_embeddings(&s, &p, Format::Csv).unwrap();
        let back = read_embeddings(&p, Format::Csv).unwrap();
        let max = (back.data() - &data)
            .iter()
            .fold(0f32, |m, v| m.max(v.abs()));
        assert!(max <= 1e-6);
    }

    #[test]
    fn write_to_missing_directory_fails() {
        let dir = tmp();
        let p = dir.path().join("no/such/dir/a.bin");
        let s = EmbeddingSet::new("a", array![[1.0f32]]).unwrap();
        assert!(matches!(
            write_embeddings(&s, &p, Format::Binary),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn labels_sidecar_round_trip() {
        let dir = tmp();
        let p = dir.path().join("a.bin");
        let s = EmbeddingSet::new("a", array![[1.0f32], [2.0]])
            .unwrap()
            .with_labels(vec![3, 7])
            .unwrap();
        write_embeddings(&s, &p, Format::Binary).unwrap();
        let back = read_embeddings(&p, Format::Binary).unwrap();
        assert_eq!(back.labels(), Some(&[3u32, 7][..]));
    }

    #[test]
    fn label_length_checked() {
        let s = EmbeddingSet::new("a", array![[1.0f32], [2.0]]).unwrap();
        assert!(s.with_labels(vec![1]).is_err());
    }

    #[test]
    fn pairs_basic_range_and_empty() {
        let dir = tmp();
        let p = dir.path().join("p.tsv");
        fs::write(&p, "0\t0\n1\t1\n").unwrap();
        assert_eq!(read_pairs(&p, 2, 2).unwrap().m(), 2);
        fs::write(&p, "5\t0\n").unwrap();
        assert!(read_pairs(&p, 2, 2).is_err());
        fs::write(&p, "").unwrap();
        assert_eq!(read_pairs(&p, 2, 2).unwrap().m(), 0);
        fs::write(&p, "0\t1\n0\t1\n").unwrap();
        assert!(read_pairs(&p, 2, 2).is_err());
    }

    proptest! {
        #[test]
        fn binary_round_trip_is_identity(
            n in 1usize..8,
            d in 1usize..8,
            seed in proptest::collection::vec(-1e30f32..1e30, 64),
        ) {
            let data = Array2::from_shape_fn((n, d), |(i, j)| seed[(i * d + j) % seed.len()]);
            let s = EmbeddingSet::new("p", data).unwrap();
            let bytes = encode_binary(&s);
            let back = decode_binary(&bytes, Path::new("p")).unwrap();
            prop_assert_eq!(back, s.data().clone());
        }

        #[test]
        fn corrupted_binary_never_panics(
            flips in proptest::collection::vec((0usize..44, any::<u8>()), 1..6),
        ) {
            let s = EmbeddingSet::new("p", Array2::from_elem((4, 2), 1.25f32)).unwrap();
            let mut bytes = encode_binary(&s);
            for (pos, b) in flips {
                bytes[pos] = b;
            }
            if let Ok(m) = decode_binary(&bytes, Path::new("p")) {
                prop_assert!(m.iter().all(|v| v.is_finite()));
            }
        }

        #[test]
        fn truncated_binary_is_an_error(cut in 0usize..43) {
            let s = EmbeddingSet::new("p", Array2::from_elem((4, 2), 1.0f32)).unwrap();
            let bytes = encode_binary(&s);
            prop_assert!(decode_binary(&bytes[..cut], Path::new("p")).is_err());
        }
    }
}
