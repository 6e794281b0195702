// SPDX-License-Identifier: MIT OR Apache-2.0

//! NPY v1.0 tensor files and JSON dataset manifests.
//!
//! Only little-endian, C-ordered `float32`/`float64` arrays are read or
//! written. Manifests reference tensor files by path, relative paths being
//! resolved against the manifest's directory.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::pooling::{TokenFeatures, TokenMask};

pub const MAGIC: [u8; 8] = [0x93, b'N', b'U', b'M', b'P', b'Y', 0x01, 0x00];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }

    fn descr(self) -> &'static str {
        match self {
            DType::F32 => "<f4",
            DType::F64 => "<f8",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl TensorData {
    fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }
}

/// A dense row-major tensor as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub shape: Vec<usize>,
    pub data: TensorData,
}

impl TensorFile {
    pub fn new(shape: Vec<usize>, data: TensorData) -> Result<Self> {
        let count: usize = shape.iter().product();
        if count != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} holds {count} elements but {} were given",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn f64(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        Self::new(shape, TensorData::F64(data))
    }

    pub fn f32(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        Self::new(shape, TensorData::F32(data))
    }

    pub fn dtype(&self) -> DType {
        match self.data {
            TensorData::F32(_) => DType::F32,
            TensorData::F64(_) => DType::F64,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.len() == 0
    }

    /// Values widened to `f64`.
    pub fn to_f64(&self) -> Vec<f64> {
        match &self.data {
            TensorData::F32(v) => v.iter().map(|&x| f64::from(x)).collect(),
            TensorData::F64(v) => v.clone(),
        }
    }

    pub fn from_matrix(m: &Matrix) -> Self {
        let (r, c) = m.shape();
        let mut data = Vec::with_capacity(r * c);
        for i in 0..r {
            data.extend(m.row(i).iter());
        }
        TensorFile {
            shape: vec![r, c],
            data: TensorData::F64(data),
        }
    }

    pub fn from_vector(v: &[f64]) -> Self {
        TensorFile {
            shape: vec![v.len()],
            data: TensorData::F64(v.to_vec()),
        }
    }

    /// Interprets a 1-D tensor as a column and a 2-D tensor as a matrix.
    pub fn to_matrix(&self) -> Result<Matrix> {
        match self.shape.as_slice() {
            [n] => Ok(Matrix::from_column_slice(*n, 1, &self.to_f64())),
            [r, c] => Ok(Matrix::from_row_slice(*r, *c, &self.to_f64())),
            s => Err(Error::Shape(format!("expected a 1-D or 2-D tensor, got shape {s:?}"))),
        }
    }
}

fn header_string(tensor: &TensorFile) -> String {
    let shape = match tensor.shape.as_slice() {
        [] => "()".to_string(),
        [n] => format!("({n},)"),
        s => format!(
            "({})",
            s.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
        ),
    };
    let mut header = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': {shape}, }}",
        tensor.dtype().descr()
    );
    // magic (8) + length field (2) + header + '\n' must be a multiple of 64
    let unpadded = MAGIC.len() + 2 + header.len() + 1;
    let pad = (64 - unpadded % 64) % 64;
    header.extend(std::iter::repeat_n(' ', pad));
    header.push('\n');
    header
}

/// Serializes to NPY v1.0 bytes.
pub fn encode_tensor(tensor: &TensorFile) -> Result<Vec<u8>> {
    if tensor.shape.iter().product::<usize>() != tensor.len() {
        return Err(Error::Shape("tensor data does not match its shape".into()));
    }
    let header = header_string(tensor);
    let header_len = u16::try_from(header.len())
        .map_err(|_| Error::Format("header longer than 65535 bytes".into()))?;
    let mut out = Vec::with_capacity(MAGIC.len() + 2 + header.len() + tensor.len() * tensor.dtype().size());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&header_len.to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    match &tensor.data {
        TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
    }
    Ok(out)
}

pub fn write_tensor(path: impl AsRef<Path>, tensor: &TensorFile) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_tensor(tensor)?;
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<TensorFile> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensor(&bytes)
}

/// Parses NPY v1.0 bytes.
pub fn decode_tensor(bytes: &[u8]) -> Result<TensorFile> {
    if bytes.len() < 10 || bytes[..6] != MAGIC[..6] {
        return Err(Error::Format("missing NPY magic".into()));
    }
    if bytes[6..8] != MAGIC[6..8] {
        return Err(Error::Format(format!(
            "unsupported NPY version {}.{}",
            bytes[6], bytes[7]
        )));
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let data_start = 10 + header_len;
    if bytes.len() < data_start {
        return Err(Error::Format("truncated header".into()));
    }
    let header = std::str::from_utf8(&bytes[10..data_start])
        .map_err(|_| Error::Format("header is not ASCII".into()))?;
    let dict = HeaderDict::parse(header)?;
    if dict.fortran_order {
        return Err(Error::UnsupportedLayout("fortran_order arrays are not supported".into()));
    }
    let dtype = match dict.descr.as_str() {
        "<f4" => DType::F32,
        "<f8" => DType::F64,
        other => return Err(Error::Dtype(format!("'{other}' (expected '<f4' or '<f8')"))),
    };
    let count: usize = dict.shape.iter().product();
    let payload = &bytes[data_start..];
    let expected = count * dtype.size();
    if payload.len() != expected {
        return Err(Error::ByteLength {
            expected,
            actual: payload.len(),
        });
    }
    let data = match dtype {
        DType::F32 => TensorData::F32(
            payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
        DType::F64 => TensorData::F64(
            payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
    };
    TensorFile::new(dict.shape, data)
}

struct HeaderDict {
    descr: String,
    fortran_order: bool,
    shape: Vec<usize>,
}

impl HeaderDict {
    /// Reads the three keys of the Python dict literal numpy writes.
    fn parse(header: &str) -> Result<Self> {
        let body = header.trim().trim_start_matches('{').trim_end_matches('}');
        let value_of = |key: &str| -> Result<&str> {
            let quoted = [format!("'{key}'"), format!("\"{key}\"")];
            let pos = quoted
                .iter()
                .find_map(|q| body.find(q.as_str()).map(|p| p + q.len()))
                .ok_or_else(|| Error::Format(format!("header lacks key '{key}'")))?;
            let rest = body[pos..].trim_start();
            let rest = rest
                .strip_prefix(':')
                .ok_or_else(|| Error::Format(format!("malformed entry for '{key}'")))?
                .trim_start();
            Ok(rest)
        };

        let descr_raw = value_of("descr")?;
        let quote = descr_raw
            .chars()
            .next()
            .filter(|c| *c == '\'' || *c == '"')
            .ok_or_else(|| Error::Format("descr is not a string".into()))?;
        let descr_end = descr_raw[1..]
            .find(quote)
            .ok_or_else(|| Error::Format("unterminated descr".into()))?;
        let descr = descr_raw[1..1 + descr_end].to_string();

        let fortran_raw = value_of("fortran_order")?;
        let fortran_order = if fortran_raw.starts_with("True") {
            true
        } else if fortran_raw.starts_with("False") {
            false
        } else {
            return Err(Error::Format("fortran_order is not a boolean".into()));
        };

        let shape_raw = value_of("shape")?;
        let shape_raw = shape_raw
            .strip_prefix('(')
            .ok_or_else(|| Error::Format("shape is not a tuple".into()))?;
        let close = shape_raw
            .find(')')
            .ok_or_else(|| Error::Format("unterminated shape tuple".into()))?;
        let shape = shape_raw[..close]
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.trim_end_matches('L')
                    .parse::<usize>()
                    .map_err(|_| Error::Format(format!("bad shape entry '{s}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            descr,
            fortran_order,
            shape,
        })
    }
}

/// Train/test indices into the sample axis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

impl Split {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.train_indices.is_empty() || self.test_indices.is_empty() {
            return Err(Error::Split("train and test splits must be non-empty".into()));
        }
        let mut seen = vec![0u8; n];
        for (&i, tag) in self
            .train_indices
            .iter()
            .map(|i| (i, 1u8))
            .chain(self.test_indices.iter().map(|i| (i, 2u8)))
        {
            if i >= n {
                return Err(Error::Split(format!("index {i} out of range for {n} samples")));
            }
            if seen[i] != 0 && seen[i] != tag {
                return Err(Error::Split(format!("index {i} appears in both train and test")));
            }
            if seen[i] == tag {
                return Err(Error::Split(format!("index {i} repeated within a split")));
            }
            seen[i] = tag;
        }
        Ok(())
    }
}

/// Bookkeeping for one model, layer and dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub model_id: String,
    pub layer: usize,
    pub dataset_name: String,
    #[serde(default)]
    pub pooling_hint: String,
    pub feature_file: PathBuf,
    pub target_file: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_mask_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attention_entropy_file: Option<PathBuf>,
    /// Flattened, pre-resized images for the pixel-baseline control.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pixel_file: Option<PathBuf>,
    pub target_names: Vec<String>,
    #[serde(default)]
    pub target_units: String,
    pub split: Split,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub num_special_tokens: usize,
}

impl DatasetManifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Hidden states of one model layer plus everything needed to pool them.
#[derive(Debug, Clone)]
pub struct FeatureSet {
    pub model_id: String,
    pub layer: usize,
    pub dataset_name: String,
    pub pooling_hint: String,
    pub tokens: TokenFeatures,
    /// True when the file already held `n x d` pooled vectors.
    pub pre_pooled: bool,
    pub mask: TokenMask,
    pub split: Split,
    /// `n x H` per-head attention entropies, when supplied.
    pub entropies: Option<Matrix>,
    pub pixels: Option<Matrix>,
    pub seed: u64,
}

impl FeatureSet {
    pub fn pooled(&self) -> Result<Matrix> {
        crate::pooling::mean_pool(&self.tokens, &self.mask)
    }
}

#[derive(Debug, Clone)]
pub struct TargetSet {
    /// `n x K`
    pub values: Matrix,
    pub names: Vec<String>,
    pub units: String,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn load_dataset(manifest_path: impl AsRef<Path>) -> Result<(FeatureSet, TargetSet)> {
    let manifest_path = manifest_path.as_ref();
    let manifest = DatasetManifest::read(manifest_path)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    load_from_manifest(&manifest, base)
}

pub fn load_from_manifest(manifest: &DatasetManifest, base: &Path) -> Result<(FeatureSet, TargetSet)> {
    let features = read_tensor(resolve(base, &manifest.feature_file))?;
    let (tokens, pre_pooled) = match features.shape.as_slice() {
        &[n, t, d] => (TokenFeatures::new(n, t, d, features.to_f64())?, false),
        &[n, d] => (TokenFeatures::new(n, 1, d, features.to_f64())?, true),
        s => {
            return Err(Error::Manifest(format!(
                "feature tensor must be N x T x d or N x d, got {s:?}"
            )))
        }
    };
    let n = tokens.n();

    let targets = read_tensor(resolve(base, &manifest.target_file))?.to_matrix()?;
    if targets.nrows() != n {
        return Err(Error::Manifest(format!(
            "{n} feature rows but {} target rows",
            targets.nrows()
        )));
    }
    if targets.ncols() != manifest.target_names.len() {
        return Err(Error::Manifest(format!(
            "manifest names {} targets but the target tensor has {} columns",
            manifest.target_names.len(),
            targets.ncols()
        )));
    }
    manifest.split.validate(n)?;

    let t = tokens.tokens();
    let mask = match &manifest.token_mask_file {
        Some(p) => {
            let m = read_tensor(resolve(base, p))?;
            let flags: Vec<bool> = m.to_f64().iter().map(|&v| v != 0.0).collect();
            match m.shape.as_slice() {
                &[len] if len == t => TokenMask::shared(flags)?,
                &[rows, len] if rows == n && len == t => TokenMask::per_image(n, t, flags)?,
                s => {
                    return Err(Error::Manifest(format!(
                        "token mask shape {s:?} does not fit {n} images of {t} tokens"
                    )))
                }
            }
        }
        None if pre_pooled => TokenMask::all(1),
        None => TokenMask::excluding_leading(t, manifest.num_special_tokens)?,
    };

    let optional_matrix = |p: &Option<PathBuf>, what: &str| -> Result<Option<Matrix>> {
        p.as_ref()
            .map(|p| {
                let m = read_tensor(resolve(base, p))?.to_matrix()?;
                if m.nrows() != n {
                    return Err(Error::Manifest(format!(
                        "{what} tensor has {} rows for {n} samples",
                        m.nrows()
                    )));
                }
                Ok(m)
            })
            .transpose()
    };
    let entropies = optional_matrix(&manifest.attention_entropy_file, "attention entropy")?;
    let pixels = match &manifest.pixel_file {
        Some(p) => {
            let raw = read_tensor(resolve(base, p))?;
            if raw.shape.first() != Some(&n) {
                return Err(Error::Manifest(format!("pixel tensor shape {:?} does not start with {n}", raw.shape)));
            }
            let dim = raw.len() / n.max(1);
            Some(Matrix::from_row_slice(n, dim, &raw.to_f64()))
        }
        None => None,
    };

    Ok((
        FeatureSet {
            model_id: manifest.model_id.clone(),
            layer: manifest.layer,
            dataset_name: manifest.dataset_name.clone(),
            pooling_hint: manifest.pooling_hint.clone(),
            tokens,
            pre_pooled,
            mask,
            split: manifest.split.clone(),
            entropies,
            pixels,
            seed: manifest.seed,
        },
        TargetSet {
            values: targets,
            names: manifest.target_names.clone(),
            units: manifest.target_units.clone(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn round_trip_zeros() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("z.npy");
        let t = TensorFile::f64(vec![2, 3], vec![0.0; 6]).unwrap();
        write_tensor(&path, &t).unwrap();
        assert_eq!(read_tensor(&path).unwrap(), t);
    }

    #[test]
    fn scalar_payload_is_eight_bytes() {
        let t = TensorFile::f64(vec![], vec![1.0]).unwrap();
        let bytes = encode_tensor(&t).unwrap();
        let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
        assert_eq!(bytes.len() - 10 - header_len, 8);
        assert_eq!(decode_tensor(&bytes).unwrap(), t);
    }

    #[test]
    fn header_layout() {
        let t = TensorFile::f32(vec![2, 3], vec![0.0; 6]).unwrap();
        let bytes = encode_tensor(&t).unwrap();
        assert_eq!(&bytes[..8], &MAGIC);
        let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
        assert_eq!((10 + header_len) % 64, 0);
        let header = std::str::from_utf8(&bytes[10..10 + header_len]).unwrap();
        assert!(header.contains("'descr': '<f4'"));
        assert!(header.contains("'fortran_order': False"));
        assert!(header.contains("'shape': (2, 3)"));
        assert!(header.ends_with('\n'));
        assert_eq!(bytes.len(), 10 + header_len + 24);
    }

    #[test]
    fn one_dim_shape_has_trailing_comma() {
        let t = TensorFile::f64(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let bytes = encode_tensor(&t).unwrap();
        assert!(String::from_utf8_lossy(&bytes).contains("'shape': (3,)"));
    }

    fn with_header(header: &str, payload: &[u8]) -> Vec<u8> {
        let mut h = header.to_string();
        let pad = (64 - (10 + h.len() + 1) % 64) % 64;
        h.extend(std::iter::repeat_n(' ', pad));
        h.push('\n');
        let mut out = MAGIC.to_vec();
        out.extend_from_slice(&(h.len() as u16).to_le_bytes());
        out.extend_from_slice(h.as_bytes());
        out.extend_from_slice(payload);
        out
    }

    #[test]
    fn payload_longer_than_shape() {
        let bytes = with_header("{'descr': '<f4', 'fortran_order': False, 'shape': (3,), }", &[0u8; 16]);
        assert!(matches!(
            decode_tensor(&bytes),
            Err(Error::ByteLength { expected: 12, actual: 16 })
        ));
    }

    #[test]
    fn rejects_bad_magic_fortran_and_dtype() {
        let mut bytes = with_header("{'descr': '<f8', 'fortran_order': False, 'shape': (1,), }", &[0u8; 8]);
        bytes[1] = b'X';
        assert!(matches!(decode_tensor(&bytes), Err(Error::Format(_))));

        let bytes = with_header("{'descr': '<f8', 'fortran_order': True, 'shape': (2, 2), }", &[0u8; 32]);
        assert!(matches!(decode_tensor(&bytes), Err(Error::UnsupportedLayout(_))));

        let bytes = with_header("{'descr': '<i8', 'fortran_order': False, 'shape': (1,), }", &[0u8; 8]);
        assert!(matches!(decode_tensor(&bytes), Err(Error::Dtype(_))));

        let bytes = with_header("{'descr': '>f8', 'fortran_order': False, 'shape': (1,), }", &[0u8; 8]);
        assert!(matches!(decode_tensor(&bytes), Err(Error::Dtype(_))));
    }

    #[test]
    fn accepts_numpy_style_key_order() {
        let bytes = with_header("{'shape': (2,), 'fortran_order': False, 'descr': '<f8'}", &[0u8; 16]);
        let t = decode_tensor(&bytes).unwrap();
        assert_eq!(t.shape, vec![2]);
    }

    #[test]
    fn split_validation() {
        let split = Split {
            train_indices: vec![0, 7, 3],
            test_indices: vec![7, 9],
        };
        assert!(matches!(split.validate(10), Err(Error::Split(_))));
        let split = Split {
            train_indices: vec![0, 1],
            test_indices: vec![10],
        };
        assert!(matches!(split.validate(10), Err(Error::Split(_))));
    }

    proptest! {
        #[test]
        fn round_trip_bit_exact(
            shape in proptest::collection::vec(1usize..5, 0..4),
            seed in any::<u64>(),
            wide in any::<bool>(),
        ) {
            let count: usize = shape.iter().product();
            let mut r = crate::rng::stream_rng(seed, 0);
            let bits: Vec<u64> = (0..count).map(|_| rand::RngCore::next_u64(&mut r)).collect();
            let t = if wide {
                TensorFile::f64(shape, bits.iter().map(|&b| f64::from_bits(b)).collect()).unwrap()
            } else {
                TensorFile::f32(shape, bits.iter().map(|&b| f32::from_bits(b as u32)).collect()).unwrap()
            };
            let bytes = encode_tensor(&t).unwrap();
            let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
            prop_assert_eq!(bytes.len(), 10 + header_len + count * t.dtype().size());
            let back = decode_tensor(&bytes).unwrap();
            prop_assert_eq!(back.shape.clone(), t.shape.clone());
            prop_assert_eq!(encode_tensor(&back).unwrap(), bytes);
        }
    }
}
