//! Data containers and on-disk formats.
//!
//! Four persisted types share one storage convention: a small JSON header
//! whose `data` field names a sibling binary payload of little-endian
//! 32-bit floats (or fixed-width records for sparse codes). Label maps are
//! plain CSV. All round-trips are bit-exact. Arithmetic elsewhere in the
//! crate is done in `f64`; `f32` is a storage format only.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// HsiCube
// ---------------------------------------------------------------------------

/// A hyperspectral reflectance volume stored band-sequential (BSQ):
/// one full row-major `height x width` plane per band.
#[derive(Debug, Clone, PartialEq)]
pub struct HsiCube {
    height: usize,
    width: usize,
    bands: usize,
    values: Vec<f32>,
    band_mask: Option<Vec<usize>>,
}

impl HsiCube {
    /// Build a cube from raw BSQ values, validating size and finiteness.
    ///
    /// `band_mask`, when present, records which original sensor bands the
    /// stored planes correspond to (one entry per stored band, strictly
    /// increasing). It is provenance metadata: the payload already contains
    /// exactly the retained bands.
    pub fn new(
        height: usize,
        width: usize,
        bands: usize,
        values: Vec<f32>,
        band_mask: Option<Vec<usize>>,
    ) -> Result<Self> {
        let expected = height * width * bands;
        if values.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "cube value count {} != {}x{}x{}",
                values.len(),
                height,
                width,
                bands
            )));
        }
        if let Some(idx) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue(idx));
        }
        if let Some(mask) = &band_mask {
            if mask.len() != bands {
                return Err(Error::HeaderParse(format!(
                    "band_mask has {} entries for {} bands",
                    mask.len(),
                    bands
                )));
            }
            if mask.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::HeaderParse(
                    "band_mask must be strictly increasing".into(),
                ));
            }
        }
        Ok(Self {
            height,
            width,
            bands,
            values,
            band_mask,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn num_pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn band_mask(&self) -> Option<&[usize]> {
        self.band_mask.as_deref()
    }

    pub fn raw_values(&self) -> &[f32] {
        &self.values
    }

    /// Value at `(row, col, band)` widened to f64.
    pub fn value(&self, row: usize, col: usize, band: usize) -> f64 {
        debug_assert!(row < self.height && col < self.width && band < self.bands);
        self.values[band * self.height * self.width + row * self.width + col] as f64
    }

    /// Spectrum of one pixel as an owned vector of length `bands`.
    pub fn pixel_spectrum(&self, row: usize, col: usize) -> Array1<f64> {
        let plane = self.height * self.width;
        let offset = row * self.width + col;
        Array1::from_iter(
            (0..self.bands).map(|b| self.values[b * plane + offset] as f64),
        )
    }

    /// The full `bands x (height*width)` signal matrix. Column `p`
    /// corresponds to pixel `p = row * width + col`.
    pub fn to_spectra(&self) -> Array2<f64> {
        let plane = self.height * self.width;
        Array2::from_shape_fn((self.bands, plane), |(b, p)| {
            self.values[b * plane + p] as f64
        })
    }
}

// ---------------------------------------------------------------------------
// LabelMap
// ---------------------------------------------------------------------------

/// One ground-truth entry: a labeled pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub row: u32,
    pub col: u32,
    pub class_id: u32,
}

/// Sparse ground-truth map with class ids starting at 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    pub entries: Vec<LabelEntry>,
    pub num_classes: u32,
}

impl LabelMap {
    /// Build from entries; `num_classes` is the maximum class id.
    pub fn new(entries: Vec<LabelEntry>) -> Self {
        let num_classes = entries.iter().map(|e| e.class_id).max().unwrap_or(0);
        Self {
            entries,
            num_classes,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entry count per class id, ascending.
    pub fn class_counts(&self) -> BTreeMap<u32, usize> {
        let mut counts = BTreeMap::new();
        for e in &self.entries {
            *counts.entry(e.class_id).or_insert(0usize) += 1;
        }
        counts
    }

    /// Check that class ids cover 1..=num_classes without gaps.
    pub fn validate_contiguous(&self) -> Result<()> {
        let present: HashSet<u32> = self.entries.iter().map(|e| e.class_id).collect();
        for id in 1..=self.num_classes {
            if !present.contains(&id) {
                return Err(Error::InvalidArgument(format!(
                    "class ids not contiguous: {} missing from 1..={}",
                    id, self.num_classes
                )));
            }
        }
        Ok(())
    }
}

/// Parse a label CSV (`row,col,class_id` with a one-line header), checking
/// bounds against the cube dimensions. Line numbers in errors are 1-based
/// file lines.
pub fn load_labels(path: &Path, height: usize, width: usize) -> Result<LabelMap> {
    let text = read_text(path)?;
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if i == 0 {
            continue; // header line
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::ParseError(
                line_no,
                format!("expected 3 fields, found {}", fields.len()),
            ));
        }
        let parse = |s: &str| -> std::result::Result<u32, std::num::ParseIntError> {
            s.trim().parse::<u32>()
        };
        let row = parse(fields[0])
            .map_err(|e| Error::ParseError(line_no, format!("row: {e}")))?;
        let col = parse(fields[1])
            .map_err(|e| Error::ParseError(line_no, format!("col: {e}")))?;
        let class_id = parse(fields[2])
            .map_err(|e| Error::ParseError(line_no, format!("class: {e}")))?;
        if class_id == 0 {
            return Err(Error::ParseError(line_no, "class id must be >= 1".into()));
        }
        if row as usize >= height || col as usize >= width {
            return Err(Error::OutOfBounds(line_no));
        }
        if !seen.insert((row, col)) {
            return Err(Error::DuplicateCoordinate(line_no));
        }
        entries.push(LabelEntry { row, col, class_id });
    }
    Ok(LabelMap::new(entries))
}

/// Write a label map back to CSV; inverse of [`load_labels`].
pub fn save_labels(labels: &LabelMap, path: &Path) -> Result<()> {
    let mut out = String::from("row,col,class\n");
    for e in &labels.entries {
        out.push_str(&format!("{},{},{}\n", e.row, e.col, e.class_id));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Per-class stratified random split. `ceil(fraction * count)` entries of
/// each class go to the train side (clamped so both sides keep at least one
/// sample). Deterministic given `seed`; output entries are sorted by
/// coordinate.
pub fn split_labels(
    labels: &LabelMap,
    fraction: f64,
    seed: u64,
) -> Result<(LabelMap, LabelMap)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "fraction must be in (0,1), got {fraction}"
        )));
    }
    let mut by_class: BTreeMap<u32, Vec<LabelEntry>> = BTreeMap::new();
    for e in &labels.entries {
        by_class.entry(e.class_id).or_default().push(*e);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (&class_id, members) in by_class.iter_mut() {
        let n = members.len();
        if n < 2 {
            return Err(Error::ClassTooSmall(class_id));
        }
        // canonical order before shuffling so the split does not depend on
        // the input entry order
        members.sort_by_key(|e| (e.row, e.col));
        members.shuffle(&mut rng);
        // the tiny nudge absorbs binary-float flak in fraction * n
        let want = (fraction * n as f64 - 1e-9).ceil() as usize;
        let n_train = want.clamp(1, n - 1);
        train.extend_from_slice(&members[..n_train]);
        test.extend_from_slice(&members[n_train..]);
    }
    train.sort_by_key(|e| (e.row, e.col));
    test.sort_by_key(|e| (e.row, e.col));
    let num_classes = labels.num_classes;
    Ok((
        LabelMap {
            entries: train,
            num_classes,
        },
        LabelMap {
            entries: test,
            num_classes,
        },
    ))
}

// ---------------------------------------------------------------------------
// Dictionary
// ---------------------------------------------------------------------------

/// A `bands x atoms` dictionary. Learning keeps every atom inside the unit
/// l2 ball; the type itself only requires finite values so that files
/// written through the f32 storage format reload unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    data: Array2<f64>,
}

impl Dictionary {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if let Some(idx) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue(idx));
        }
        Ok(Self { data })
    }

    pub fn bands(&self) -> usize {
        self.data.nrows()
    }

    pub fn atoms(&self) -> usize {
        self.data.ncols()
    }

    pub fn array(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_array(self) -> Array2<f64> {
        self.data
    }

    pub fn atom(&self, j: usize) -> ndarray::ArrayView1<'_, f64> {
        self.data.column(j)
    }
}

// ---------------------------------------------------------------------------
// CodeMatrix
// ---------------------------------------------------------------------------

/// One stored coefficient: `(sample, atom, value)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodeEntry {
    pub sample: u32,
    pub atom: u32,
    pub value: f32,
}

/// Sparse `atoms x n_samples` coefficient matrix as sorted nonzero triplets.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeMatrix {
    atoms: usize,
    n_samples: usize,
    entries: Vec<CodeEntry>,
}

impl CodeMatrix {
    /// Build from triplets, validating ranges, ordering, and uniqueness.
    pub fn new(atoms: usize, n_samples: usize, entries: Vec<CodeEntry>) -> Result<Self> {
        for (i, e) in entries.iter().enumerate() {
            if e.sample as usize >= n_samples || e.atom as usize >= atoms {
                return Err(Error::IndexOutOfRange(i));
            }
            if !e.value.is_finite() {
                return Err(Error::NonFiniteValue(i));
            }
            if i > 0 {
                let prev = &entries[i - 1];
                if (prev.sample, prev.atom) >= (e.sample, e.atom) {
                    return Err(Error::InvalidArgument(format!(
                        "code records not sorted by (sample, atom) at record {i}"
                    )));
                }
            }
        }
        Ok(Self {
            atoms,
            n_samples,
            entries,
        })
    }

    /// Convert a dense `atoms x n_samples` matrix, dropping zeros and
    /// narrowing values to the f32 storage width.
    pub fn from_dense(dense: &Array2<f64>) -> Self {
        let (atoms, n_samples) = dense.dim();
        let mut entries = Vec::new();
        for sample in 0..n_samples {
            for atom in 0..atoms {
                let v = dense[(atom, sample)] as f32;
                if v != 0.0 {
                    entries.push(CodeEntry {
                        sample: sample as u32,
                        atom: atom as u32,
                        value: v,
                    });
                }
            }
        }
        Self {
            atoms,
            n_samples,
            entries,
        }
    }

    pub fn atoms(&self) -> usize {
        self.atoms
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[CodeEntry] {
        &self.entries
    }

    /// Densify back to `atoms x n_samples`.
    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.atoms, self.n_samples));
        for e in &self.entries {
            out[(e.atom as usize, e.sample as usize)] = e.value as f64;
        }
        out
    }
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct CubeHeader {
    height: usize,
    width: usize,
    bands: usize,
    dtype: String,
    interleave: String,
    data: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    band_mask: Option<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct DictionaryHeader {
    bands: usize,
    atoms: usize,
    data: String,
}

#[derive(Serialize, Deserialize)]
struct CodesHeader {
    atoms: usize,
    n_samples: usize,
    nnz: usize,
    data: String,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path.to_path_buf())
        } else {
            Error::Io(e)
        }
    })
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path.to_path_buf())
        } else {
            Error::Io(e)
        }
    })
}

fn parse_header<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| Error::HeaderParse(e.to_string()))
}

fn payload_path(header_path: &Path, data_field: &str) -> PathBuf {
    let dir = header_path.parent().unwrap_or_else(|| Path::new("."));
    dir.join(data_field)
}

/// Sibling payload name used by the save functions: header stem + `.bin`.
fn default_payload_name(header_path: &Path) -> String {
    let stem = header_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "payload".to_string());
    format!("{stem}.bin")
}

fn read_f32_payload(path: &Path, expected_count: usize) -> Result<Vec<f32>> {
    let bytes = read_bytes(path)?;
    let expected_bytes = expected_count as u64 * 4;
    if bytes.len() as u64 != expected_bytes {
        return Err(Error::SizeMismatch {
            expected: expected_bytes,
            actual: bytes.len() as u64,
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn write_f32_payload(path: &Path, values: impl Iterator<Item = f32>) -> Result<()> {
    let mut bytes = Vec::new();
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

fn write_header<T: Serialize>(path: &Path, header: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(header)
        .map_err(|e| Error::HeaderParse(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Load a cube from its JSON header. The payload file named by the header's
/// `data` field (resolved relative to the header) must hold exactly
/// `height*width*bands` little-endian f32 values in BSQ order.
pub fn load_cube(header_path: &Path) -> Result<HsiCube> {
    let header: CubeHeader = parse_header(header_path)?;
    if header.dtype != "f32" {
        return Err(Error::HeaderParse(format!(
            "unsupported dtype {:?}, expected \"f32\"",
            header.dtype
        )));
    }
    if header.interleave != "bsq" {
        return Err(Error::HeaderParse(format!(
            "unsupported interleave {:?}, expected \"bsq\"",
            header.interleave
        )));
    }
    let values = read_f32_payload(
        &payload_path(header_path, &header.data),
        header.height * header.width * header.bands,
    )?;
    HsiCube::new(
        header.height,
        header.width,
        header.bands,
        values,
        header.band_mask,
    )
}

/// Write a cube as header + raw payload next to `header_path`.
pub fn save_cube(cube: &HsiCube, header_path: &Path) -> Result<()> {
    let data = default_payload_name(header_path);
    write_f32_payload(
        &payload_path(header_path, &data),
        cube.raw_values().iter().copied(),
    )?;
    write_header(
        header_path,
        &CubeHeader {
            height: cube.height,
            width: cube.width,
            bands: cube.bands,
            dtype: "f32".into(),
            interleave: "bsq".into(),
            data,
            band_mask: cube.band_mask.clone(),
        },
    )
}

/// Load a dictionary (atom-major f32 payload).
pub fn load_dictionary(header_path: &Path) -> Result<Dictionary> {
    let header: DictionaryHeader = parse_header(header_path)?;
    let values = read_f32_payload(
        &payload_path(header_path, &header.data),
        header.bands * header.atoms,
    )?;
    if let Some(idx) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue(idx));
    }
    // payload is atom-major: atom j occupies values[j*bands .. (j+1)*bands]
    let data = Array2::from_shape_fn((header.bands, header.atoms), |(b, j)| {
        values[j * header.bands + b] as f64
    });
    Dictionary::new(data)
}

/// Write a dictionary, narrowing values to f32.
pub fn save_dictionary(dict: &Dictionary, header_path: &Path) -> Result<()> {
    let data = default_payload_name(header_path);
    let arr = dict.array();
    let values = (0..dict.atoms())
        .flat_map(|j| (0..dict.bands()).map(move |b| arr[(b, j)] as f32));
    write_f32_payload(&payload_path(header_path, &data), values)?;
    write_header(
        header_path,
        &DictionaryHeader {
            bands: dict.bands(),
            atoms: dict.atoms(),
            data,
        },
    )
}

/// Load a sparse code matrix: `nnz` records of
/// `(u32 sample, u32 atom, f32 value)`, little-endian, sorted.
pub fn load_codes(header_path: &Path) -> Result<CodeMatrix> {
    let header: CodesHeader = parse_header(header_path)?;
    let bytes = read_bytes(&payload_path(header_path, &header.data))?;
    let expected = header.nnz as u64 * 12;
    if bytes.len() as u64 != expected {
        return Err(Error::SizeMismatch {
            expected,
            actual: bytes.len() as u64,
        });
    }
    let entries: Vec<CodeEntry> = bytes
        .chunks_exact(12)
        .map(|rec| CodeEntry {
            sample: u32::from_le_bytes(rec[0..4].try_into().unwrap()),
            atom: u32::from_le_bytes(rec[4..8].try_into().unwrap()),
            value: f32::from_le_bytes(rec[8..12].try_into().unwrap()),
        })
        .collect();
    CodeMatrix::new(header.atoms, header.n_samples, entries)
}

/// Write a sparse code matrix.
pub fn save_codes(codes: &CodeMatrix, header_path: &Path) -> Result<()> {
    let data = default_payload_name(header_path);
    let mut bytes = Vec::with_capacity(codes.nnz() * 12);
    for e in codes.entries() {
        bytes.extend_from_slice(&e.sample.to_le_bytes());
        bytes.extend_from_slice(&e.atom.to_le_bytes());
        bytes.extend_from_slice(&e.value.to_le_bytes());
    }
    fs::write(payload_path(header_path, &data), bytes)?;
    write_header(
        header_path,
        &CodesHeader {
            atoms: codes.atoms(),
            n_samples: codes.n_samples(),
            nnz: codes.nnz(),
            data,
        },
    )
}
