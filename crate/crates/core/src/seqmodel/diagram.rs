//! Diagram embedding: white-pad to square, resize to 224×224, split into 49
//! patches of 32×32, and map each patch through a fixed seed-initialized
//! linear featurizer. The featurizer is frozen by contract — it is generated
//! from its seed and never touched by training.

use image::imageops::FilterType;
use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::tensor::Tensor;
use crate::rng::SplitMix64;

pub const IMAGE_SIDE: u32 = 224;
pub const PATCH_SIDE: u32 = 32;
pub const PATCH_GRID: usize = 49;
const PATCH_PIXELS: usize = (PATCH_SIDE * PATCH_SIDE * 3) as usize;

/// Where the 49 patch vectors came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiagramProvenance {
    Featurized,
    Zero,
}

/// 49 patch vectors of width `d_model`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagramEmbedding {
    pub patches: Tensor,
    pub provenance: DiagramProvenance,
}

impl DiagramEmbedding {
    pub fn zero(d_model: usize) -> Self {
        Self { patches: Tensor::zeros(PATCH_GRID, d_model), provenance: DiagramProvenance::Zero }
    }

    /// Hash of the patch matrix bytes, for stability golden tests.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for v in &self.patches.data {
            hasher.update(v.to_le_bytes());
        }
        hex_digest(hasher)
    }
}

#[derive(Debug, Error)]
pub enum DiagramError {
    #[error("failed to decode diagram {path}: {message}")]
    Decode { path: String, message: String },
}

/// The frozen linear map from normalized patch pixels to `d_model` features.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchFeaturizer {
    pub seed: u64,
    pub d_model: usize,
    weights: Tensor,
}

impl PatchFeaturizer {
    /// Regenerate deterministically from the seed. Scale keeps patch features
    /// in the same magnitude range as token embeddings.
    pub fn from_seed(seed: u64, d_model: usize) -> Self {
        let mut rng = SplitMix64::new(seed);
        let scale = 1.0 / (PATCH_PIXELS as f64).sqrt();
        let weights = Tensor::uniform(PATCH_PIXELS, d_model, scale, &mut rng);
        Self { seed, d_model, weights }
    }

    pub fn weights_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for v in &self.weights.data {
            hasher.update(v.to_le_bytes());
        }
        hex_digest(hasher)
    }

    /// Embed a decoded image; `None` yields the all-zero embedding.
    pub fn embed(&self, image: Option<&RgbImage>) -> DiagramEmbedding {
        let Some(image) = image else {
            return DiagramEmbedding::zero(self.d_model);
        };
        let square = pad_to_square_white(image);
        let resized =
            image::imageops::resize(&square, IMAGE_SIDE, IMAGE_SIDE, FilterType::Triangle);
        let mut patches = Tensor::zeros(PATCH_GRID, self.d_model);
        let per_row = (IMAGE_SIDE / PATCH_SIDE) as usize;
        let mut pixels = vec![0.0f64; PATCH_PIXELS];
        for patch_idx in 0..PATCH_GRID {
            let px = (patch_idx % per_row) as u32 * PATCH_SIDE;
            let py = (patch_idx / per_row) as u32 * PATCH_SIDE;
            let mut k = 0;
            for y in 0..PATCH_SIDE {
                for x in 0..PATCH_SIDE {
                    let Rgb(rgb) = resized.get_pixel(px + x, py + y);
                    for channel in rgb {
                        pixels[k] = *channel as f64 / 255.0;
                        k += 1;
                    }
                }
            }
            for c in 0..self.d_model {
                let mut acc = 0.0;
                for (p, &v) in pixels.iter().enumerate() {
                    acc += v * self.weights.at(p, c);
                }
                *patches.at_mut(patch_idx, c) = acc;
            }
        }
        DiagramEmbedding { patches, provenance: DiagramProvenance::Featurized }
    }
}

/// Load and embed a diagram file. A missing/undecodable file is an input error.
pub fn embed_diagram_file(
    featurizer: &PatchFeaturizer,
    path: &std::path::Path,
) -> Result<DiagramEmbedding, DiagramError> {
    let image = image::open(path)
        .map_err(|e| DiagramError::Decode { path: path.display().to_string(), message: e.to_string() })?
        .to_rgb8();
    Ok(featurizer.embed(Some(&image)))
}

fn pad_to_square_white(image: &RgbImage) -> RgbImage {
    let (w, h) = image.dimensions();
    let side = w.max(h);
    if w == h {
        return image.clone();
    }
    let mut canvas = RgbImage::from_pixel(side, side, Rgb([255, 255, 255]));
    let ox = (side - w) / 2;
    let oy = (side - h) / 2;
    for (x, y, pixel) in image.enumerate_pixels() {
        canvas.put_pixel(ox + x, oy + y, *pixel);
    }
    canvas
}

fn hex_digest(hasher: Sha256) -> String {
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
