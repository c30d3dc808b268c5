//! Image decoding, bilinear resizing and the four label-preserving
//! augmentations (mirror, crop, scale, brighten).

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::{Dataset, GroundTruthRecord};

/// Side length of the square network input.
pub const INPUT_SIDE: usize = 299;
pub const CHANNELS: usize = 3;

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("target dimensions must be at least 1x1, got {width}x{height}")]
    ZeroDimension { width: usize, height: usize },
    #[error("augmentation fraction {0} is outside [0, 1]")]
    FractionOutOfRange(f64),
    #[error("pixel buffer of length {len} does not match {width}x{height}x3")]
    BadBuffer { width: usize, height: usize, len: usize },
    #[error("{image_id}: cannot decode {path}: {message}")]
    Decode {
        image_id: String,
        path: PathBuf,
        message: String,
    },
    #[error("training set is empty")]
    EmptyDataset,
    #[error("invalid augmentation parameters: {0}")]
    BadParams(String),
}

/// An RGB image with channel values in `[0, 1]`, stored row-major as (y, x, c).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    pixels: Vec<f32>,
}

impl ImageTensor {
    /// Builds a tensor from raw values, clamping each into `[0, 1]`.
    /// Non-finite values map to 0.
    pub fn from_pixels(width: usize, height: usize, mut pixels: Vec<f32>) -> Result<Self, PreprocessError> {
        if width == 0 || height == 0 {
            return Err(PreprocessError::ZeroDimension { width, height });
        }
        if pixels.len() != width * height * CHANNELS {
            return Err(PreprocessError::BadBuffer {
                width,
                height,
                len: pixels.len(),
            });
        }
        for v in &mut pixels {
            *v = clamp_unit(*v);
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Result<Self, PreprocessError> {
        Self::from_pixels(width, height, vec![value; width * height * CHANNELS])
    }

    pub fn from_rgb8(img: &image::RgbImage) -> Self {
        let (w, h) = img.dimensions();
        let pixels = img.as_raw().iter().map(|&b| b as f32 / 255.0).collect();
        Self {
            height: h as usize,
            width: w as usize,
            pixels,
        }
    }

    /// Quantizes back to 8-bit RGB for inspection dumps.
    pub fn to_rgb8(&self) -> image::RgbImage {
        let raw = self
            .pixels
            .iter()
            .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        image::RgbImage::from_raw(self.width as u32, self.height as u32, raw)
            .expect("buffer length matches dimensions")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        CHANNELS
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.pixels[(y * self.width + x) * CHANNELS + c]
    }

    pub fn is_network_input(&self) -> bool {
        self.width == INPUT_SIDE && self.height == INPUT_SIDE
    }
}

#[inline]
fn clamp_unit(v: f32) -> f32 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

/// Decodes a JPEG or PNG file. Grayscale and alpha inputs are converted to RGB.
pub fn decode_image(image_id: &str, path: &Path) -> Result<ImageTensor, PreprocessError> {
    let img = image::ImageReader::open(path)
        .and_then(|r| r.with_guessed_format())
        .map_err(|e| e.to_string())
        .and_then(|r| r.decode().map_err(|e| e.to_string()))
        .map_err(|message| PreprocessError::Decode {
            image_id: image_id.to_string(),
            path: path.to_path_buf(),
            message,
        })?;
    Ok(ImageTensor::from_rgb8(&img.to_rgb8()))
}

/// Maps output index `i` of `n_out` samples onto the source axis of length
/// `n_in`, with the first and last samples on the first and last source pixels.
#[inline]
fn source_coord(i: usize, n_in: usize, n_out: usize) -> f64 {
    if n_out == 1 {
        (n_in - 1) as f64 / 2.0
    } else {
        i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64
    }
}

fn axis_taps(n_in: usize, n_out: usize) -> Vec<(usize, usize, f32)> {
    (0..n_out)
        .map(|i| {
            let s = source_coord(i, n_in, n_out);
            let lo = (s.floor() as usize).min(n_in - 1);
            let hi = (lo + 1).min(n_in - 1);
            (lo, hi, (s - lo as f64) as f32)
        })
        .collect()
}

#[inline]
fn lerp(a: f32, b: f32, t: f32) -> f32 {
    a + (b - a) * t
}

/// Bilinear resize with corner-aligned sampling; resizing to the source
/// dimensions returns the input unchanged.
pub fn resize_bilinear(img: &ImageTensor, out_w: usize, out_h: usize) -> Result<ImageTensor, PreprocessError> {
    if out_w == 0 || out_h == 0 {
        return Err(PreprocessError::ZeroDimension {
            width: out_w,
            height: out_h,
        });
    }
    if out_w == img.width && out_h == img.height {
        return Ok(img.clone());
    }
    let xs = axis_taps(img.width, out_w);
    let ys = axis_taps(img.height, out_h);
    let mut pixels = Vec::with_capacity(out_w * out_h * CHANNELS);
    for &(y0, y1, ty) in &ys {
        for &(x0, x1, tx) in &xs {
            for c in 0..CHANNELS {
                let top = lerp(img.get(y0, x0, c), img.get(y0, x1, c), tx);
                let bottom = lerp(img.get(y1, x0, c), img.get(y1, x1, c), tx);
                pixels.push(clamp_unit(lerp(top, bottom, ty)));
            }
        }
    }
    Ok(ImageTensor {
        height: out_h,
        width: out_w,
        pixels,
    })
}

/// Extracts the centered `crop_w x crop_h` window.
fn center_crop(img: &ImageTensor, crop_w: usize, crop_h: usize) -> ImageTensor {
    let crop_w = crop_w.clamp(1, img.width);
    let crop_h = crop_h.clamp(1, img.height);
    let x_off = (img.width - crop_w) / 2;
    let y_off = (img.height - crop_h) / 2;
    let mut pixels = Vec::with_capacity(crop_w * crop_h * CHANNELS);
    for y in y_off..y_off + crop_h {
        let start = (y * img.width + x_off) * CHANNELS;
        pixels.extend_from_slice(&img.pixels[start..start + crop_w * CHANNELS]);
    }
    ImageTensor {
        height: crop_h,
        width: crop_w,
        pixels,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransformKind {
    Mirror,
    Crop,
    Scale,
    Brighten,
}

impl TransformKind {
    pub const ALL: [TransformKind; 4] = [
        TransformKind::Mirror,
        TransformKind::Crop,
        TransformKind::Scale,
        TransformKind::Brighten,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TransformKind::Mirror => "mirror",
            TransformKind::Crop => "crop",
            TransformKind::Scale => "scale",
            TransformKind::Brighten => "brighten",
        }
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TransformKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TransformKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown transform `{s}`"))
    }
}

/// Strength of each augmentation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    /// Side fraction kept by the central crop.
    pub crop_fraction: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    pub brightness_factor: f32,
}

impl Default for AugmentParams {
    fn default() -> Self {
        Self {
            crop_fraction: 0.875,
            scale_min: 1.05,
            scale_max: 1.25,
            brightness_factor: 1.2,
        }
    }
}

impl AugmentParams {
    pub fn validate(&self) -> Result<(), PreprocessError> {
        let bad = |m: &str| Err(PreprocessError::BadParams(m.to_string()));
        if !(self.crop_fraction > 0.0 && self.crop_fraction <= 1.0) {
            return bad("crop_fraction must be in (0, 1]");
        }
        if !(self.scale_min >= 1.0 && self.scale_min <= self.scale_max && self.scale_max.is_finite()) {
            return bad("scale range must satisfy 1 <= scale_min <= scale_max < inf");
        }
        if !(self.brightness_factor > 0.0 && self.brightness_factor.is_finite()) {
            return bad("brightness_factor must be positive and finite");
        }
        Ok(())
    }
}

/// Applies one augmentation with default strengths. Output dimensions always
/// equal input dimensions.
pub fn apply_transform(img: &ImageTensor, kind: TransformKind, rng_seed: u64) -> ImageTensor {
    apply_transform_with(img, kind, rng_seed, &AugmentParams::default())
}

pub fn apply_transform_with(
    img: &ImageTensor,
    kind: TransformKind,
    rng_seed: u64,
    params: &AugmentParams,
) -> ImageTensor {
    let (w, h) = (img.width, img.height);
    match kind {
        TransformKind::Mirror => {
            let mut pixels = Vec::with_capacity(img.pixels.len());
            for row in img.pixels.chunks_exact(w * CHANNELS) {
                for px in row.chunks_exact(CHANNELS).rev() {
                    pixels.extend_from_slice(px);
                }
            }
            ImageTensor {
                height: h,
                width: w,
                pixels,
            }
        }
        TransformKind::Crop => {
            let cw = (w as f64 * params.crop_fraction).round() as usize;
            let ch = (h as f64 * params.crop_fraction).round() as usize;
            let cropped = center_crop(img, cw, ch);
            resize_bilinear(&cropped, w, h).expect("source dimensions are non-zero")
        }
        TransformKind::Scale => {
            let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
            let factor = if params.scale_max > params.scale_min {
                rng.gen_range(params.scale_min..=params.scale_max)
            } else {
                params.scale_min
            };
            let sw = ((w as f64 * factor).round() as usize).max(w);
            let sh = ((h as f64 * factor).round() as usize).max(h);
            let scaled = resize_bilinear(img, sw, sh).expect("scaled dimensions are non-zero");
            center_crop(&scaled, w, h)
        }
        TransformKind::Brighten => ImageTensor {
            height: h,
            width: w,
            pixels: img
                .pixels
                .iter()
                .map(|&v| (v * params.brightness_factor).min(1.0))
                .collect(),
        },
    }
}

/// Picks `floor(fraction * n)` distinct ids without replacement, returned in
/// their original order.
pub fn select_augmentation_subset<S: Clone>(
    image_ids: &[S],
    fraction: f64,
    seed: u64,
) -> Result<Vec<S>, PreprocessError> {
    Ok(select_augmentation_indices(image_ids.len(), fraction, seed)?
        .into_iter()
        .map(|i| image_ids[i].clone())
        .collect())
}

pub fn select_augmentation_indices(n: usize, fraction: f64, seed: u64) -> Result<Vec<usize>, PreprocessError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(PreprocessError::FractionOutOfRange(fraction));
    }
    let k = ((fraction * n as f64).floor() as usize).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, n, k).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// FNV-1a; stable across platforms and releases, unlike `DefaultHasher`.
pub fn stable_id_hash(id: &str) -> u64 {
    id.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Per-image generator seed, independent of processing order.
pub fn image_seed(seed: u64, image_id: &str) -> u64 {
    seed ^ stable_id_hash(image_id)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    Original,
    Augmented(TransformKind),
}

/// Where a pool tensor came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PoolTag {
    pub source_id: String,
    pub provenance: Provenance,
}

impl PoolTag {
    /// Identifier used in feature caches: the source id for originals,
    /// `augmented:<kind>:<source_id>` otherwise.
    pub fn pool_id(&self) -> String {
        match self.provenance {
            Provenance::Original => self.source_id.clone(),
            Provenance::Augmented(kind) => format!("augmented:{kind}:{}", self.source_id),
        }
    }

    pub fn provenance_label(&self) -> String {
        match self.provenance {
            Provenance::Original => "original".to_string(),
            Provenance::Augmented(kind) => format!("augmented:{kind}:{}", self.source_id),
        }
    }

    /// Inverse of [`PoolTag::pool_id`].
    pub fn parse_pool_id(id: &str) -> Option<PoolTag> {
        match id.strip_prefix("augmented:") {
            None => Some(PoolTag {
                source_id: id.to_string(),
                provenance: Provenance::Original,
            }),
            Some(rest) => {
                let (kind, source) = rest.split_once(':')?;
                let kind = kind.parse().ok()?;
                (!source.is_empty()).then(|| PoolTag {
                    source_id: source.to_string(),
                    provenance: Provenance::Augmented(kind),
                })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolEntry {
    pub tag: PoolTag,
    pub image: ImageTensor,
    pub labels: GroundTruthRecord,
}

impl PoolEntry {
    pub fn image_id(&self) -> &str {
        &self.tag.source_id
    }
}

/// One source image and the variants to produce from it. Materializing a
/// group decodes the source once.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolGroup {
    pub image_id: String,
    pub path: PathBuf,
    pub labels: GroundTruthRecord,
    pub augment: bool,
    pub seed: u64,
}

impl PoolGroup {
    pub fn len(&self) -> usize {
        if self.augment {
            1 + TransformKind::ALL.len()
        } else {
            1
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Decodes and resizes the source to 299x299x3, then derives the
    /// augmented variants from the resized original.
    pub fn materialize(&self, params: &AugmentParams) -> Result<Vec<PoolEntry>, PreprocessError> {
        let decoded = decode_image(&self.image_id, &self.path)?;
        self.materialize_from(&decoded, params)
    }

    pub fn materialize_from(&self, decoded: &ImageTensor, params: &AugmentParams) -> Result<Vec<PoolEntry>, PreprocessError> {
        let original = resize_bilinear(decoded, INPUT_SIDE, INPUT_SIDE)?;
        let mut out = Vec::with_capacity(self.len());
        if self.augment {
            let seed = image_seed(self.seed, &self.image_id);
            for kind in TransformKind::ALL {
                out.push(PoolEntry {
                    tag: PoolTag {
                        source_id: self.image_id.clone(),
                        provenance: Provenance::Augmented(kind),
                    },
                    image: apply_transform_with(&original, kind, seed, params),
                    labels: self.labels.clone(),
                });
            }
        }
        out.insert(
            0,
            PoolEntry {
                tag: PoolTag {
                    source_id: self.image_id.clone(),
                    provenance: Provenance::Original,
                },
                image: original,
                labels: self.labels.clone(),
            },
        );
        Ok(out)
    }
}

/// Decides which images get augmented without decoding anything.
pub fn plan_training_pool(train: &Dataset, fraction: f64, seed: u64) -> Result<Vec<PoolGroup>, PreprocessError> {
    if train.is_empty() {
        return Err(PreprocessError::EmptyDataset);
    }
    let selected = select_augmentation_indices(train.len(), fraction, seed)?;
    let mut flags = vec![false; train.len()];
    for i in selected {
        flags[i] = true;
    }
    Ok(train
        .examples
        .iter()
        .zip(flags)
        .map(|(ex, augment)| PoolGroup {
            image_id: ex.image_id.clone(),
            path: ex.path.clone(),
            labels: ex.record.clone(),
            augment,
            seed,
        })
        .collect())
}

/// Every original resized to 299x299x3, each followed by its four augmented
/// variants when it was selected. Holds the whole pool in memory; use
/// [`plan_training_pool`] and [`PoolGroup::materialize`] to stream instead.
pub fn build_training_pool(
    train: &Dataset,
    fraction: f64,
    seed: u64,
    params: &AugmentParams,
) -> Result<Vec<PoolEntry>, PreprocessError> {
    params.validate()?;
    let groups = plan_training_pool(train, fraction, seed)?;
    let nested: Vec<Vec<PoolEntry>> = groups
        .par_iter()
        .map(|g| g.materialize(params))
        .collect::<Result<_, _>>()?;
    Ok(nested.into_iter().flatten().collect())
}
