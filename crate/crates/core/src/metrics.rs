//! Embedding-based edit metrics for unordered sparse views.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::types::Image;

/// Joint image/text embedding. Outputs are unit-norm vectors of equal
/// dimension.
pub trait Embedder {
    fn name(&self) -> &str;
    fn embed_image(&self, image: &Image) -> Array1<f64>;
    fn embed_text(&self, text: &str) -> Array1<f64>;
}

const MOCK_GRID: usize = 4;
const MOCK_FEATURES: usize = 3 + 3 + MOCK_GRID * MOCK_GRID + 1;

/// Deterministic stand-in embedder: a seeded random projection of simple
/// pixel statistics, and a sum of per-token hashed directions for text.
#[derive(Debug, Clone)]
pub struct MockEmbedder {
    seed: u64,
    projection: Array2<f64>,
    text_bias: Array1<f64>,
}

impl MockEmbedder {
    pub const DIM: usize = 32;

    pub fn new(seed: u64) -> Self {
        let mut rng = Rng::new(seed, "mock-embedder");
        let projection = Array2::from_shape_simple_fn((Self::DIM, MOCK_FEATURES), || rng.standard_normal());
        let text_bias = Array1::from_shape_simple_fn(Self::DIM, || rng.standard_normal());
        Self {
            seed,
            projection,
            text_bias,
        }
    }

    fn image_features(image: &Image) -> Array1<f64> {
        let (h, w) = (image.height(), image.width());
        let n = (h * w) as f64;
        let mut f = Vec::with_capacity(MOCK_FEATURES);
        for c in 0..3 {
            let plane = image.data.index_axis(ndarray::Axis(2), c);
            let mean = plane.sum() / n;
            let var = plane.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            f.push(mean);
            f.push(var.sqrt());
        }
        for gy in 0..MOCK_GRID {
            for gx in 0..MOCK_GRID {
                let (y0, y1) = (gy * h / MOCK_GRID, ((gy + 1) * h / MOCK_GRID).max(gy * h / MOCK_GRID + 1).min(h));
                let (x0, x1) = (gx * w / MOCK_GRID, ((gx + 1) * w / MOCK_GRID).max(gx * w / MOCK_GRID + 1).min(w));
                let block = image.data.slice(ndarray::s![y0..y1, x0..x1, ..]);
                f.push(block.mean().unwrap_or(0.0));
            }
        }
        f.push(1.0);
        Array1::from(f)
    }

    fn token_direction(&self, token: &str) -> Array1<f64> {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(token.as_bytes());
        let digest: [u8; 32] = h.finalize().into();
        let key = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
        let mut rng = Rng::new(key, "mock-embedder-token");
        Array1::from_shape_simple_fn(Self::DIM, || rng.standard_normal())
    }
}

impl Default for MockEmbedder {
    fn default() -> Self {
        Self::new(0)
    }
}

fn normalize(v: Array1<f64>) -> Array1<f64> {
    let n = v.dot(&v).sqrt();
    if n == 0.0 || !n.is_finite() {
        let mut e = Array1::zeros(v.len());
        e[0] = 1.0;
        return e;
    }
    v / n
}

impl Embedder for MockEmbedder {
    fn name(&self) -> &str {
        "mock"
    }

    fn embed_image(&self, image: &Image) -> Array1<f64> {
        normalize(self.projection.dot(&Self::image_features(image)))
    }

    fn embed_text(&self, text: &str) -> Array1<f64> {
        let mut v = self.text_bias.clone();
        for token in text.split_whitespace() {
            v += &self.token_direction(&token.to_lowercase());
        }
        normalize(v)
    }
}

/// Embedder by name; only `mock` ships.
pub fn embedder_by_name(name: &str, seed: u64) -> Result<Box<dyn Embedder>> {
    match name {
        "mock" => Ok(Box::new(MockEmbedder::new(seed))),
        other => Err(Error::UnknownBackend {
            kind: "embedder",
            name: other.into(),
            available: "mock".into(),
        }),
    }
}

/// Cosine similarity; 0 if either vector is zero.
///
/// `dot / √(|a|²·|b|²)` makes `cosine(a, a)` exactly 1.
pub fn cosine(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    let aa = a.dot(a);
    let bb = b.dot(b);
    if aa == 0.0 || bb == 0.0 {
        return 0.0;
    }
    (a.dot(b) / (aa * bb).sqrt()).clamp(-1.0, 1.0)
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn clip_similarity(edits: &[Image], edited_caption: &str, embedder: &dyn Embedder) -> Result<f64> {
    if edits.is_empty() {
        return Err(Error::InsufficientViews(0));
    }
    let text = embedder.embed_text(edited_caption);
    let terms: Vec<f64> = edits.iter().map(|e| cosine(&embedder.embed_image(e), &text)).collect();
    Ok(mean(&terms))
}

fn check_pairs(originals: &[Image], edits: &[Image]) -> Result<()> {
    if originals.len() != edits.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} originals for {} edits",
            originals.len(),
            edits.len()
        )));
    }
    Ok(())
}

pub fn clip_directional(
    originals: &[Image],
    edits: &[Image],
    original_caption: &str,
    edited_caption: &str,
    embedder: &dyn Embedder,
) -> Result<f64> {
    check_pairs(originals, edits)?;
    if edits.is_empty() {
        return Err(Error::InsufficientViews(0));
    }
    let text_dir = embedder.embed_text(edited_caption) - embedder.embed_text(original_caption);
    let terms: Vec<f64> = originals
        .iter()
        .zip(edits)
        .map(|(o, e)| cosine(&(embedder.embed_image(e) - embedder.embed_image(o)), &text_dir))
        .collect();
    Ok(mean(&terms))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub i: usize,
    pub j: usize,
    pub value: f64,
}

/// Mean over all unordered pairs `i < j` of
/// `cos(φ(O_i) − φ(O_j), φ(E_i) − φ(E_j))`, plus the per-pair values in
/// lexicographic pair order.
pub fn clip_directional_consistency(
    originals: &[Image],
    edits: &[Image],
    embedder: &dyn Embedder,
) -> Result<(f64, Vec<PairScore>)> {
    check_pairs(originals, edits)?;
    let n = originals.len();
    if n < 2 {
        return Err(Error::InsufficientViews(n));
    }
    let o: Vec<Array1<f64>> = originals.iter().map(|im| embedder.embed_image(im)).collect();
    let e: Vec<Array1<f64>> = edits.iter().map(|im| embedder.embed_image(im)).collect();
    Ok(consistency_from_embeddings(&o, &e))
}

pub(crate) fn consistency_from_embeddings(o: &[Array1<f64>], e: &[Array1<f64>]) -> (f64, Vec<PairScore>) {
    let n = o.len();
    let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            pairs.push(PairScore {
                i,
                j,
                value: cosine(&(&o[i] - &o[j]), &(&e[i] - &e[j])),
            });
        }
    }
    let values: Vec<f64> = pairs.iter().map(|p| p.value).collect();
    (mean(&values), pairs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub embedder: String,
    pub clip_similarity: f64,
    pub clip_directional: f64,
    pub clip_consistency: f64,
    pub per_pair_consistency: Vec<PairScore>,
    pub n_pairs: usize,
}

pub fn evaluate(
    originals: &[Image],
    edits: &[Image],
    original_caption: &str,
    edited_caption: &str,
    embedder: &dyn Embedder,
) -> Result<EvalReport> {
    let (clip_consistency, per_pair) = clip_directional_consistency(originals, edits, embedder)?;
    Ok(EvalReport {
        embedder: embedder.name().to_string(),
        clip_similarity: clip_similarity(edits, edited_caption, embedder)?,
        clip_directional: clip_directional(originals, edits, original_caption, edited_caption, embedder)?,
        clip_consistency,
        n_pairs: per_pair.len(),
        per_pair_consistency: per_pair,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Embedder returning fixed vectors keyed by the image's top-left pixel
    /// value (as an index) and by exact text.
    struct Table {
        images: Vec<Array1<f64>>,
        texts: Vec<(String, Array1<f64>)>,
    }

    impl Embedder for Table {
        fn name(&self) -> &str {
            "table"
        }
        fn embed_image(&self, image: &Image) -> Array1<f64> {
            self.images[image.data[[0, 0, 0]].round() as usize].clone()
        }
        fn embed_text(&self, text: &str) -> Array1<f64> {
            self.texts.iter().find(|(t, _)| t == text).map(|(_, v)| v.clone()).unwrap()
        }
    }

    fn tagged(k: usize) -> Image {
        Image::filled(1, 1, k as f64)
    }

    fn unit(angle: f64) -> Array1<f64> {
        Array1::from(vec![angle.cos(), angle.sin()])
    }

    #[test]
    fn similarity_at_known_angles() {
        let angles = [0.1, 0.7, 1.9];
        let emb = Table {
            images: angles.iter().map(|&a| unit(a)).collect(),
            texts: vec![("cap".into(), unit(0.3))],
        };
        let edits: Vec<Image> = (0..3).map(tagged).collect();
        let expect = angles.iter().map(|a| (a - 0.3f64).cos()).sum::<f64>() / 3.0;
        assert!((clip_similarity(&edits, "cap", &emb).unwrap() - expect).abs() < 1e-10);
    }

    #[test]
    fn constant_embedder_scores_one() {
        let emb = Table {
            images: vec![unit(0.4)],
            texts: vec![("x".into(), unit(0.4))],
        };
        assert_eq!(clip_similarity(&[tagged(0), tagged(0)], "x", &emb).unwrap(), 1.0);
    }

    #[test]
    fn orthogonal_scores_zero() {
        let emb = Table {
            images: vec![unit(0.0)],
            texts: vec![("x".into(), unit(std::f64::consts::FRAC_PI_2))],
        };
        assert!(clip_similarity(&[tagged(0)], "x", &emb).unwrap().abs() < 1e-15);
    }

    #[test]
    fn directional_parallel_change() {
        let emb = Table {
            images: vec![Array1::from(vec![1.0, 0.0]), Array1::from(vec![0.6, 0.8])],
            texts: vec![
                ("a".into(), Array1::from(vec![0.0, 1.0])),
                ("b".into(), Array1::from(vec![-0.4, 1.8])),
            ],
        };
        let d = clip_directional(&[tagged(0)], &[tagged(1)], "a", "b", &emb).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
        assert_eq!(clip_directional(&[tagged(0)], &[tagged(0)], "a", "b", &emb).unwrap(), 0.0);
    }

    #[test]
    fn consistency_five_parallel_one_orthogonal() {
        // views on a line; the edit collapses views 0 and 1 onto one point,
        // so their edited difference is the zero vector (orthogonal to
        // everything, scored 0) while the other five stay parallel
        let u = Array1::from(vec![0.6, 0.8]);
        let o: Vec<Array1<f64>> = [0.0, 1.0, 2.0, 3.0].iter().map(|&x| &u * x).collect();
        let e: Vec<Array1<f64>> = [0.0, 0.0, 1.0, 2.0].iter().map(|&x| &u * x).collect();
        let (m, pairs) = consistency_from_embeddings(&o, &e);
        assert_eq!(pairs.len(), 6);
        assert_eq!(pairs[0], PairScore { i: 0, j: 1, value: 0.0 });
        assert!(pairs[1..].iter().all(|p| (p.value - 1.0).abs() < 1e-15));
        assert!((m - 5.0 / 6.0).abs() < 1e-10);
        let (same, _) = consistency_from_embeddings(&o, &o);
        assert_eq!(same, 1.0);
    }

    #[test]
    fn insufficient_views() {
        let emb = MockEmbedder::default();
        let err = clip_directional_consistency(&[tagged(0)], &[tagged(0)], &emb).unwrap_err();
        assert_eq!(err.kind(), "insufficient-views");
    }

    #[test]
    fn mock_is_unit_norm_and_deterministic() {
        let emb = MockEmbedder::new(3);
        let im = Image::filled(8, 8, 0.25);
        let v = emb.embed_image(&im);
        assert!((v.dot(&v).sqrt() - 1.0).abs() < 1e-12);
        assert_eq!(v, MockEmbedder::new(3).embed_image(&im));
        let t = emb.embed_text("a photo of a bear");
        assert!((t.dot(&t).sqrt() - 1.0).abs() < 1e-12);
        assert_eq!(emb.embed_text(""), normalize(emb.text_bias.clone()));
    }
}
