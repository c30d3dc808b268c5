//! Image to 1000-component representation vectors, and the CSV feature cache.
//!
//! Two backends implement [`EmbeddingBackend`]: a frozen pretrained network
//! loaded from an ONNX file, and a fully specified deterministic stub used
//! for offline runs and tests.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::preprocess::{ImageTensor, CHANNELS, INPUT_SIDE};

pub const FEATURE_DIM: usize = 1000;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("embedding input must be 299x299x3, got {width}x{height}x3")]
    WrongInputShape { width: usize, height: usize },
    #[error("backend failure: {0}")]
    BackendFailure(String),
    #[error("cannot load model {path}: {message}")]
    ModelLoadError { path: PathBuf, message: String },
    #[error("model output has {found} components, expected {FEATURE_DIM}")]
    ShapeMismatch { found: usize },
    #[error("feature vector must have {FEATURE_DIM} components, got {0}")]
    WrongLength(usize),
    #[error("feature component {index} is not finite")]
    NonFinite { index: usize },
    #[error("feature cache line {line}: {message}")]
    CacheFormatError { line: usize, message: String },
    #[error("feature cache backend `{found}` does not match `{expected}`")]
    BackendMismatch { expected: String, found: String },
    #[error("feature cache i/o on {path}: {message}")]
    Io { path: PathBuf, message: String },
}

/// A 1000-component finite representation vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f32>);

impl FeatureVector {
    pub fn new(values: Vec<f32>) -> Result<Self, EmbeddingError> {
        if values.len() != FEATURE_DIM {
            return Err(EmbeddingError::WrongLength(values.len()));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite { index });
        }
        Ok(Self(values))
    }

    pub fn zeros() -> Self {
        Self(vec![0.0; FEATURE_DIM])
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.0
    }
}

impl AsRef<[f32]> for FeatureVector {
    fn as_ref(&self) -> &[f32] {
        &self.0
    }
}

/// A frozen image-to-vector map. Implementations must be deterministic for a
/// fixed [`backend_id`](EmbeddingBackend::backend_id).
pub trait EmbeddingBackend: Send + Sync {
    fn backend_id(&self) -> &str;

    /// Raw model output for a 299x299x3 input; shape checks happen in [`embed`].
    fn forward(&self, img: &ImageTensor) -> Result<Vec<f32>, EmbeddingError>;
}

pub fn embed(backend: &dyn EmbeddingBackend, img: &ImageTensor) -> Result<FeatureVector, EmbeddingError> {
    if !img.is_network_input() {
        return Err(EmbeddingError::WrongInputShape {
            width: img.width(),
            height: img.height(),
        });
    }
    let raw = backend.forward(img)?;
    if raw.len() != FEATURE_DIM {
        return Err(EmbeddingError::ShapeMismatch { found: raw.len() });
    }
    FeatureVector::new(raw).map_err(|e| EmbeddingError::BackendFailure(e.to_string()))
}

/// Pixel mapping applied before the pretrained network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// Pass `[0, 1]` values through.
    UnitInterval,
    /// `v -> 2v - 1`, the Inception convention.
    #[default]
    Symmetric,
}

impl Normalization {
    pub fn name(self) -> &'static str {
        match self {
            Normalization::UnitInterval => "unit_interval",
            Normalization::Symmetric => "symmetric",
        }
    }

    #[inline]
    pub fn apply(self, v: f32) -> f32 {
        match self {
            Normalization::UnitInterval => v,
            Normalization::Symmetric => 2.0 * v - 1.0,
        }
    }
}

impl FromStr for Normalization {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unit_interval" => Ok(Normalization::UnitInterval),
            "symmetric" => Ok(Normalization::Symmetric),
            other => Err(format!("unknown normalization `{other}`")),
        }
    }
}

pub const STUB_POOL_SIDE: usize = 16;
pub const STUB_POOLED_LEN: usize = STUB_POOL_SIDE * STUB_POOL_SIDE * CHANNELS;

const LCG_MUL: u64 = 6364136223846793005;
const LCG_INC: u64 = 1442695040888963407;

/// The 64-bit LCG behind the stub projection matrix.
#[derive(Debug, Clone)]
pub struct StubLcg {
    state: u64,
}

impl StubLcg {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Advances the recurrence and returns the new state.
    pub fn next_state(&mut self) -> u64 {
        self.state = self.state.wrapping_mul(LCG_MUL).wrapping_add(LCG_INC);
        self.state
    }

    /// Next matrix entry, `(x >> 33) / 2^30 - 1`, in `[-1, 1)`.
    pub fn next_entry(&mut self) -> f64 {
        (self.next_state() >> 33) as f64 / (1u64 << 30) as f64 - 1.0
    }
}

/// Deterministic stand-in for the pretrained network: 16x16 block-average
/// pooling, a fixed LCG-generated 1000x768 projection, then `tanh`.
///
/// The first matrix entry is derived from `x_1`, the first state after the
/// seed. Pooling block `i` along an axis of length `n` covers
/// `[floor(i*n/16), floor((i+1)*n/16))`; the pooled vector is ordered
/// (block_y, block_x, channel). Arithmetic runs in `f64`.
#[derive(Debug, Clone)]
pub struct StubBackend {
    id: String,
    projection: Vec<f64>,
}

impl StubBackend {
    pub fn new(seed: u64) -> Self {
        let mut lcg = StubLcg::new(seed);
        let projection = (0..FEATURE_DIM * STUB_POOLED_LEN)
            .map(|_| lcg.next_entry())
            .collect();
        Self {
            id: format!("stub:{seed}"),
            projection,
        }
    }

    /// Row-major 1000x768 projection matrix.
    pub fn projection(&self) -> &[f64] {
        &self.projection
    }

    pub fn pool(img: &ImageTensor) -> Vec<f64> {
        let bounds = |n: usize| -> Vec<(usize, usize)> {
            (0..STUB_POOL_SIDE)
                .map(|i| (i * n / STUB_POOL_SIDE, (i + 1) * n / STUB_POOL_SIDE))
                .collect()
        };
        let (rows, cols) = (bounds(img.height()), bounds(img.width()));
        let mut pooled = Vec::with_capacity(STUB_POOLED_LEN);
        for &(y0, y1) in &rows {
            for &(x0, x1) in &cols {
                let mut sums = [0.0f64; CHANNELS];
                for y in y0..y1 {
                    for x in x0..x1 {
                        for (c, s) in sums.iter_mut().enumerate() {
                            *s += img.get(y, x, c) as f64;
                        }
                    }
                }
                let count = ((y1 - y0) * (x1 - x0)).max(1) as f64;
                pooled.extend(sums.iter().map(|s| s / count));
            }
        }
        pooled
    }
}

impl EmbeddingBackend for StubBackend {
    fn backend_id(&self) -> &str {
        &self.id
    }

    fn forward(&self, img: &ImageTensor) -> Result<Vec<f32>, EmbeddingError> {
        let pooled = Self::pool(img);
        Ok(self
            .projection
            .chunks_exact(STUB_POOLED_LEN)
            .map(|row| {
                let z: f64 = row.iter().zip(&pooled).map(|(m, p)| m * p).sum();
                z.tanh() as f32
            })
            .collect())
    }
}

pub fn stub_backend(seed: u64) -> StubBackend {
    StubBackend::new(seed)
}

/// Short content hash used to tie caches to a model file.
pub fn file_digest(path: &Path) -> Result<String, EmbeddingError> {
    let bytes = std::fs::read(path).map_err(|e| EmbeddingError::ModelLoadError {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let digest = Sha256::digest(&bytes);
    Ok(digest[..8].iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    }))
}

#[cfg(feature = "onnx")]
mod pretrained {
    use super::*;
    use tract_onnx::prelude::*;
    use tract_onnx::tract_hir::infer::Factoid;

    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub enum InputLayout {
        ChannelsLast,
        ChannelsFirst,
    }

    /// Frozen ONNX network with one 1x299x299x3 (or 1x3x299x299) input and a
    /// single 1000-component output.
    pub struct PretrainedBackend {
        id: String,
        layout: InputLayout,
        normalization: Normalization,
        plan: TypedRunnableModel<TypedModel>,
    }

    impl std::fmt::Debug for PretrainedBackend {
        fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
            f.debug_struct("PretrainedBackend")
                .field("id", &self.id)
                .field("layout", &self.layout)
                .field("normalization", &self.normalization)
                .finish()
        }
    }

    fn declared_layout(model: &InferenceModel) -> TractResult<InputLayout> {
        let fact = model.input_fact(0)?;
        let dims: Vec<Option<i64>> = fact
            .shape
            .dims()
            .map(|d| d.concretize().and_then(|d| d.to_i64().ok()))
            .collect();
        Ok(match dims.as_slice() {
            [_, Some(3), _, _] if dims[3] != Some(3) => InputLayout::ChannelsFirst,
            _ => InputLayout::ChannelsLast,
        })
    }

    impl PretrainedBackend {
        pub fn load(model_file: &Path, normalization: Normalization) -> Result<Self, EmbeddingError> {
            let load_err = |e: TractError| EmbeddingError::ModelLoadError {
                path: model_file.to_path_buf(),
                message: format!("{e:#}"),
            };
            let digest = file_digest(model_file).map_err(|e| EmbeddingError::ModelLoadError {
                path: model_file.to_path_buf(),
                message: e.to_string(),
            })?;
            let mut model = tract_onnx::onnx().model_for_path(model_file).map_err(load_err)?;
            if model.inputs.len() != 1 || model.outputs.len() != 1 {
                return Err(EmbeddingError::ModelLoadError {
                    path: model_file.to_path_buf(),
                    message: format!(
                        "expected one input and one output, found {} and {}",
                        model.inputs.len(),
                        model.outputs.len()
                    ),
                });
            }
            let layout = declared_layout(&model).map_err(load_err)?;
            let shape: [usize; 4] = match layout {
                InputLayout::ChannelsLast => [1, INPUT_SIDE, INPUT_SIDE, CHANNELS],
                InputLayout::ChannelsFirst => [1, CHANNELS, INPUT_SIDE, INPUT_SIDE],
            };
            model
                .set_input_fact(0, f32::fact(shape).into())
                .map_err(load_err)?;
            let typed = model.into_optimized().map_err(load_err)?;
            let declared_len = typed
                .output_fact(0)
                .ok()
                .and_then(|f| f.shape.as_concrete().map(|s| s.iter().product::<usize>()));
            let plan = typed.into_runnable().map_err(load_err)?;
            let backend = Self {
                id: format!("pretrained:{digest}:{}", normalization.name()),
                layout,
                normalization,
                plan,
            };
            let out_len = match declared_len {
                Some(n) => n,
                None => backend
                    .forward(&ImageTensor::filled(INPUT_SIDE, INPUT_SIDE, 0.5).expect("valid"))?
                    .len(),
            };
            if out_len != FEATURE_DIM {
                return Err(EmbeddingError::ShapeMismatch { found: out_len });
            }
            Ok(backend)
        }

        pub fn layout(&self) -> InputLayout {
            self.layout
        }
    }

    impl EmbeddingBackend for PretrainedBackend {
        fn backend_id(&self) -> &str {
            &self.id
        }

        fn forward(&self, img: &ImageTensor) -> Result<Vec<f32>, EmbeddingError> {
            let norm = self.normalization;
            let input: Tensor = match self.layout {
                InputLayout::ChannelsLast => {
                    tract_ndarray::Array4::from_shape_fn((1, INPUT_SIDE, INPUT_SIDE, CHANNELS), |(_, y, x, c)| {
                        norm.apply(img.get(y, x, c))
                    })
                    .into()
                }
                InputLayout::ChannelsFirst => {
                    tract_ndarray::Array4::from_shape_fn((1, CHANNELS, INPUT_SIDE, INPUT_SIDE), |(_, c, y, x)| {
                        norm.apply(img.get(y, x, c))
                    })
                    .into()
                }
            };
            let fail = |e: TractError| EmbeddingError::BackendFailure(format!("{e:#}"));
            let outputs = self.plan.run(tvec!(input.into())).map_err(fail)?;
            let view = outputs[0].to_array_view::<f32>().map_err(fail)?;
            Ok(view.iter().copied().collect())
        }
    }
}

#[cfg(feature = "onnx")]
pub use pretrained::{InputLayout, PretrainedBackend};

/// Loads the frozen pretrained network.
#[cfg(feature = "onnx")]
pub fn pretrained_backend(model_file: &Path, normalization: Normalization) -> Result<PretrainedBackend, EmbeddingError> {
    PretrainedBackend::load(model_file, normalization)
}

#[cfg(not(feature = "onnx"))]
pub fn pretrained_backend(model_file: &Path, _normalization: Normalization) -> Result<StubBackend, EmbeddingError> {
    Err(EmbeddingError::ModelLoadError {
        path: model_file.to_path_buf(),
        message: "built without the `onnx` feature".into(),
    })
}

pub const CACHE_BACKEND_PREFIX: &str = "# backend=";

/// Feature cache header line: `image_id,f0,...,f999`.
pub fn cache_header() -> String {
    let mut h = String::from("image_id");
    for i in 0..FEATURE_DIM {
        let _ = write!(h, ",f{i}");
    }
    h
}

/// Serializes a cache. Values carry 9 significant digits, enough for an
/// exact `f32` round trip.
pub fn format_feature_cache(entries: &[(String, FeatureVector)], backend_id: &str) -> Result<String, EmbeddingError> {
    if backend_id.contains(['\n', '\r']) {
        return Err(EmbeddingError::CacheFormatError {
            line: 1,
            message: "backend id contains a line break".into(),
        });
    }
    let csv_err = |line: usize, e: csv::Error| EmbeddingError::CacheFormatError {
        line,
        message: e.to_string(),
    };
    let mut out = Vec::with_capacity(64 + entries.len() * FEATURE_DIM * 16);
    out.extend_from_slice(format!("{CACHE_BACKEND_PREFIX}{backend_id}\n").as_bytes());
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(cache_header().split(',')).map_err(|e| csv_err(2, e))?;
    let mut seen = HashSet::new();
    for (i, (id, v)) in entries.iter().enumerate() {
        let line = i + 3;
        if !crate::dataset::is_valid_image_id(id) || id.contains([',', '"', '\n', '\r']) {
            return Err(EmbeddingError::CacheFormatError {
                line,
                message: format!("invalid image id `{id}`"),
            });
        }
        if !seen.insert(id.as_str()) {
            return Err(EmbeddingError::CacheFormatError {
                line,
                message: format!("duplicate image id `{id}`"),
            });
        }
        let values = v.as_slice().iter().map(|x| format!("{x:.8e}"));
        writer
            .write_record(std::iter::once(id.clone()).chain(values))
            .map_err(|e| csv_err(line, e))?;
    }
    let bytes = writer.into_inner().map_err(|e| EmbeddingError::CacheFormatError {
        line: entries.len() + 2,
        message: e.to_string(),
    })?;
    Ok(String::from_utf8(bytes).expect("cache text is ASCII apart from the backend id"))
}

pub fn write_feature_cache(path: &Path, entries: &[(String, FeatureVector)], backend_id: &str) -> Result<(), EmbeddingError> {
    let text = format_feature_cache(entries, backend_id)?;
    std::fs::write(path, text).map_err(|e| EmbeddingError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Parsed feature cache.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCache {
    pub backend_id: String,
    pub entries: Vec<(String, FeatureVector)>,
}

pub fn parse_feature_cache(text: &str) -> Result<FeatureCache, EmbeddingError> {
    let bad = |line: usize, message: String| EmbeddingError::CacheFormatError { line, message };
    let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
    let backend_id = first
        .strip_suffix('\r')
        .unwrap_or(first)
        .strip_prefix(CACHE_BACKEND_PREFIX)
        .ok_or_else(|| bad(1, format!("expected `{CACHE_BACKEND_PREFIX}<id>`")))?
        .to_string();

    // Reader positions count from the line after the backend comment.
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(rest.as_bytes());
    let line_of = |pos: Option<&csv::Position>| pos.map_or(0, |p| p.line() as usize + 1);
    let mut rows = reader.records();

    let header = match rows.next() {
        None => return Err(bad(2, "missing header".into())),
        Some(r) => r.map_err(|e| bad(2, e.to_string()))?,
    };
    if header.len() != FEATURE_DIM + 1 {
        return Err(bad(
            2,
            format!("header has {} feature columns, expected {FEATURE_DIM}", header.len().saturating_sub(1)),
        ));
    }
    if !header.iter().eq(cache_header().split(',')) {
        return Err(bad(2, "header must be `image_id,f0,...,f999`".into()));
    }

    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for row in rows {
        let row = row.map_err(|e| bad(line_of(e.position()), e.to_string()))?;
        let line = line_of(row.position());
        let id = row.get(0).unwrap_or_default();
        if !crate::dataset::is_valid_image_id(id) {
            return Err(bad(line, format!("invalid image id `{id}`")));
        }
        let values = row
            .iter()
            .skip(1)
            .map(|f| f.trim().parse::<f32>().map_err(|_| bad(line, format!("bad value `{f}`"))))
            .collect::<Result<Vec<f32>, _>>()?;
        let vector = FeatureVector::new(values).map_err(|e| bad(line, e.to_string()))?;
        if !seen.insert(id.to_string()) {
            return Err(bad(line, format!("duplicate image id `{id}`")));
        }
        entries.push((id.to_string(), vector));
    }
    Ok(FeatureCache { backend_id, entries })
}

pub fn read_feature_cache(path: &Path) -> Result<FeatureCache, EmbeddingError> {
    let text = std::fs::read_to_string(path).map_err(|e| EmbeddingError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    parse_feature_cache(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(seed: u32) -> FeatureVector {
        FeatureVector::new((0..FEATURE_DIM).map(|i| ((i as u32 * 7 + seed) % 13) as f32 / 3.0 - 2.0).collect()).unwrap()
    }

    #[test]
    fn feature_vector_contract() {
        assert!(matches!(FeatureVector::new(vec![0.0; 999]), Err(EmbeddingError::WrongLength(999))));
        let mut v = vec![0.0; FEATURE_DIM];
        v[17] = f32::NAN;
        assert!(matches!(FeatureVector::new(v), Err(EmbeddingError::NonFinite { index: 17 })));
    }

    #[test]
    fn embed_rejects_wrong_shape() {
        let stub = stub_backend(1);
        let img = ImageTensor::filled(224, 224, 0.3).unwrap();
        assert!(matches!(embed(&stub, &img), Err(EmbeddingError::WrongInputShape { width: 224, .. })));
    }

    #[test]
    fn stub_zero_image_embeds_to_zero() {
        let stub = stub_backend(0x5EED5EED);
        let img = ImageTensor::filled(INPUT_SIDE, INPUT_SIDE, 0.0).unwrap();
        let v = embed(&stub, &img).unwrap();
        assert!(v.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn stub_pooling_blocks_cover_image() {
        let img = ImageTensor::filled(INPUT_SIDE, INPUT_SIDE, 0.75).unwrap();
        let pooled = StubBackend::pool(&img);
        assert_eq!(pooled.len(), STUB_POOLED_LEN);
        assert!(pooled.iter().all(|&p| (p - 0.75).abs() < 1e-12));
    }

    #[test]
    fn stub_is_deterministic() {
        let img = ImageTensor::from_pixels(
            INPUT_SIDE,
            INPUT_SIDE,
            (0..INPUT_SIDE * INPUT_SIDE * 3).map(|i| (i % 251) as f32 / 250.0).collect(),
        )
        .unwrap();
        let a = embed(&stub_backend(9), &img).unwrap();
        let b = embed(&stub_backend(9), &img).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, embed(&stub_backend(10), &img).unwrap());
        assert_eq!(stub_backend(9).backend_id(), "stub:9");
    }

    #[test]
    fn cache_round_trip() {
        let entries = vec![("a".to_string(), fv(1)), ("b".to_string(), fv(2)), ("c".to_string(), fv(3))];
        let text = format_feature_cache(&entries, "stub:7").unwrap();
        let cache = parse_feature_cache(&text).unwrap();
        assert_eq!(cache.backend_id, "stub:7");
        assert_eq!(cache.entries, entries);
    }

    #[test]
    fn empty_cache() {
        let text = format_feature_cache(&[], "stub:1").unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(parse_feature_cache(&text).unwrap().entries.is_empty());
    }

    #[test]
    fn cache_rejects_short_rows_and_headers() {
        let mut text = format_feature_cache(&[("a".to_string(), fv(1))], "x").unwrap();
        // Drop the last value of the row.
        text.truncate(text.trim_end().rfind(',').unwrap());
        assert!(matches!(parse_feature_cache(&text), Err(EmbeddingError::CacheFormatError { line: 3, .. })));

        let short_header: Vec<String> = std::iter::once("image_id".to_string())
            .chain((0..999).map(|i| format!("f{i}")))
            .collect();
        let text = format!("# backend=x\n{}\n", short_header.join(","));
        assert!(matches!(parse_feature_cache(&text), Err(EmbeddingError::CacheFormatError { line: 2, .. })));

        assert!(matches!(parse_feature_cache("image_id\n"), Err(EmbeddingError::CacheFormatError { line: 1, .. })));
    }
}
