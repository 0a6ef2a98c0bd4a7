//! The three towers and their hand-written backward passes.
//!
//! Audio and image: `x -> ReLU(W1 x + b1) -> W2 h + b2 -> L2 normalize`.
//! Text: mean of token embeddings, linear projection, L2 normalize.

use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Pre-norm vectors shorter than this normalize to the first basis vector.
pub const NORM_EPS: f64 = 1e-12;

static DEGENERATE_NORMS: AtomicU64 = AtomicU64::new(0);

/// How many times a near-zero vector has been replaced by `e_1`.
pub fn degenerate_norm_count() -> u64 {
    DEGENERATE_NORMS.load(Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tower {
    Audio,
    Image,
    Text,
}

impl Tower {
    pub const ALL: [Tower; 3] = [Tower::Audio, Tower::Image, Tower::Text];

    pub fn as_str(&self) -> &'static str {
        match self {
            Tower::Audio => "audio",
            Tower::Image => "image",
            Tower::Text => "text",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextEncoder {
    pub embed: Array2<f64>,
    pub proj: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub audio: Mlp,
    pub image: Mlp,
    pub text: TextEncoder,
}

/// Named view of one parameter tensor.
pub struct TensorMut<'a> {
    pub tower: Tower,
    pub name: &'static str,
    pub shape: Vec<usize>,
    pub data: &'a mut [f64],
}

pub struct TensorRef<'a> {
    pub tower: Tower,
    pub name: &'static str,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

fn slice1(a: &Array1<f64>) -> &[f64] {
    a.as_slice().expect("standard layout")
}
fn slice2(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("standard layout")
}

impl Mlp {
    pub fn new(input: usize, hidden: usize, output: usize, rng: &mut Rng) -> Self {
        let he = |fan_in: usize| Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("valid std");
        let d1 = he(input);
        let d2 = Normal::new(0.0, (1.0 / hidden as f64).sqrt()).expect("valid std");
        Mlp {
            w1: Array2::from_shape_simple_fn((hidden, input), || d1.sample(rng)),
            b1: Array1::zeros(hidden),
            w2: Array2::from_shape_simple_fn((output, hidden), || d2.sample(rng)),
            b2: Array1::zeros(output),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Mlp {
            w1: Array2::zeros(self.w1.raw_dim()),
            b1: Array1::zeros(self.b1.raw_dim()),
            w2: Array2::zeros(self.w2.raw_dim()),
            b2: Array1::zeros(self.b2.raw_dim()),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }
}

impl TextEncoder {
    pub fn new(vocab: usize, embed_dim: usize, output: usize, rng: &mut Rng) -> Self {
        let de = Normal::new(0.0, 0.1).expect("valid std");
        let dp = Normal::new(0.0, (1.0 / embed_dim as f64).sqrt()).expect("valid std");
        TextEncoder {
            embed: Array2::from_shape_simple_fn((vocab, embed_dim), || de.sample(rng)),
            proj: Array2::from_shape_simple_fn((output, embed_dim), || dp.sample(rng)),
        }
    }

    pub fn zeros_like(&self) -> Self {
        TextEncoder {
            embed: Array2::zeros(self.embed.raw_dim()),
            proj: Array2::zeros(self.proj.raw_dim()),
        }
    }
}

impl EncoderParams {
    pub fn zeros_like(&self) -> Self {
        EncoderParams {
            audio: self.audio.zeros_like(),
            image: self.image.zeros_like(),
            text: self.text.zeros_like(),
        }
    }

    pub fn tensors(&self) -> Vec<TensorRef<'_>> {
        let mut out = Vec::with_capacity(10);
        for (tower, m) in [(Tower::Audio, &self.audio), (Tower::Image, &self.image)] {
            out.push(TensorRef {
                tower,
                name: "w1",
                shape: m.w1.shape().to_vec(),
                data: slice2(&m.w1),
            });
            out.push(TensorRef {
                tower,
                name: "b1",
                shape: m.b1.shape().to_vec(),
                data: slice1(&m.b1),
            });
            out.push(TensorRef {
                tower,
                name: "w2",
                shape: m.w2.shape().to_vec(),
                data: slice2(&m.w2),
            });
            out.push(TensorRef {
                tower,
                name: "b2",
                shape: m.b2.shape().to_vec(),
                data: slice1(&m.b2),
            });
        }
        let t = &self.text;
        out.push(TensorRef {
            tower: Tower::Text,
            name: "embed",
            shape: t.embed.shape().to_vec(),
            data: slice2(&t.embed),
        });
        out.push(TensorRef {
            tower: Tower::Text,
            name: "proj",
            shape: t.proj.shape().to_vec(),
            data: slice2(&t.proj),
        });
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        let mut out = Vec::with_capacity(10);
        for (tower, m) in [
            (Tower::Audio, &mut self.audio),
            (Tower::Image, &mut self.image),
        ] {
            let shapes = [
                m.w1.shape().to_vec(),
                m.b1.shape().to_vec(),
                m.w2.shape().to_vec(),
                m.b2.shape().to_vec(),
            ];
            let [s1, s2, s3, s4] = shapes;
            out.push(TensorMut {
                tower,
                name: "w1",
                shape: s1,
                data: m.w1.as_slice_mut().expect("standard layout"),
            });
            out.push(TensorMut {
                tower,
                name: "b1",
                shape: s2,
                data: m.b1.as_slice_mut().expect("standard layout"),
            });
            out.push(TensorMut {
                tower,
                name: "w2",
                shape: s3,
                data: m.w2.as_slice_mut().expect("standard layout"),
            });
            out.push(TensorMut {
                tower,
                name: "b2",
                shape: s4,
                data: m.b2.as_slice_mut().expect("standard layout"),
            });
        }
        let t = &mut self.text;
        let (se, sp) = (t.embed.shape().to_vec(), t.proj.shape().to_vec());
        out.push(TensorMut {
            tower: Tower::Text,
            name: "embed",
            shape: se,
            data: t.embed.as_slice_mut().expect("standard layout"),
        });
        out.push(TensorMut {
            tower: Tower::Text,
            name: "proj",
            shape: sp,
            data: t.proj.as_slice_mut().expect("standard layout"),
        });
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.data.iter().all(|v| v.is_finite()))
    }
}

/// Row-wise L2 normalization. Returns unit rows and the pre-norm lengths
/// (zero marks a degenerate row).
pub(crate) fn normalize_rows(u: &Array2<f64>) -> (Array2<f64>, Array1<f64>) {
    let mut y = u.clone();
    let mut norms = Array1::zeros(u.nrows());
    for (i, mut row) in y.axis_iter_mut(Axis(0)).enumerate() {
        let n = row.dot(&row).sqrt();
        if n < NORM_EPS {
            DEGENERATE_NORMS.fetch_add(1, Ordering::Relaxed);
            row.fill(0.0);
            row[0] = 1.0;
        } else {
            row /= n;
            norms[i] = n;
        }
    }
    (y, norms)
}

/// Backward of [`normalize_rows`]: `(g - y (y . g)) / |u|`; degenerate rows pass no gradient.
pub(crate) fn normalize_rows_backward(
    y: &Array2<f64>,
    norms: &Array1<f64>,
    gy: &Array2<f64>,
) -> Array2<f64> {
    let mut gu = gy.clone();
    for (i, mut row) in gu.axis_iter_mut(Axis(0)).enumerate() {
        if norms[i] == 0.0 {
            row.fill(0.0);
            continue;
        }
        let yi = y.row(i);
        let proj = yi.dot(&row);
        row.scaled_add(-proj, &yi);
        row /= norms[i];
    }
    gu
}

pub(crate) struct MlpCache {
    x: Array2<f64>,
    pre: Array2<f64>,
    hidden: Array2<f64>,
    pub y: Array2<f64>,
    norms: Array1<f64>,
}

pub(crate) fn mlp_forward(m: &Mlp, x: Array2<f64>) -> MlpCache {
    let pre = x.dot(&m.w1.t()) + &m.b1;
    let hidden = pre.mapv(|v| v.max(0.0));
    let u = hidden.dot(&m.w2.t()) + &m.b2;
    let (y, norms) = normalize_rows(&u);
    MlpCache {
        x,
        pre,
        hidden,
        y,
        norms,
    }
}

pub(crate) fn mlp_backward(m: &Mlp, c: &MlpCache, gy: &Array2<f64>) -> Mlp {
    let gu = normalize_rows_backward(&c.y, &c.norms, gy);
    let w2 = gu.t().dot(&c.hidden);
    let b2 = gu.sum_axis(Axis(0));
    let mut gh = gu.dot(&m.w2);
    gh.zip_mut_with(&c.pre, |g, &p| {
        if p <= 0.0 {
            *g = 0.0
        }
    });
    let w1 = gh.t().dot(&c.x);
    let b1 = gh.sum_axis(Axis(0));
    Mlp { w1, b1, w2, b2 }
}

pub(crate) struct TextCache {
    tokens: Vec<Vec<u32>>,
    pooled: Array2<f64>,
    pub y: Array2<f64>,
    norms: Array1<f64>,
}

pub(crate) fn text_forward(t: &TextEncoder, tokens: &[Vec<u32>]) -> TextCache {
    let e = t.embed.ncols();
    let mut pooled = Array2::zeros((tokens.len(), e));
    for (i, seq) in tokens.iter().enumerate() {
        let mut row = pooled.row_mut(i);
        for &tok in seq {
            row += &t.embed.row(tok as usize);
        }
        row /= seq.len().max(1) as f64;
    }
    let u = pooled.dot(&t.proj.t());
    let (y, norms) = normalize_rows(&u);
    TextCache {
        tokens: tokens.to_vec(),
        pooled,
        y,
        norms,
    }
}

pub(crate) fn text_backward(t: &TextEncoder, c: &TextCache, gy: &Array2<f64>) -> TextEncoder {
    let gu = normalize_rows_backward(&c.y, &c.norms, gy);
    let proj = gu.t().dot(&c.pooled);
    let gpooled = gu.dot(&t.proj);
    let mut embed = Array2::zeros(t.embed.raw_dim());
    for (i, seq) in c.tokens.iter().enumerate() {
        let share = 1.0 / seq.len().max(1) as f64;
        for &tok in seq {
            embed
                .row_mut(tok as usize)
                .scaled_add(share, &gpooled.row(i));
        }
    }
    TextEncoder { embed, proj }
}

pub(crate) fn check_mlp_input(m: &Mlp, x: ArrayView2<f64>, context: &'static str) -> Result<()> {
    if x.ncols() != m.input_dim() {
        return Err(Error::DimMismatch {
            expected: m.input_dim(),
            got: x.ncols(),
            context,
        });
    }
    Ok(())
}

pub(crate) fn check_tokens(t: &TextEncoder, tokens: &[Vec<u32>]) -> Result<()> {
    let vocab = t.embed.nrows();
    for seq in tokens {
        if seq.is_empty() {
            return Err(Error::InvalidConfig(
                "text input must contain at least one token".into(),
            ));
        }
        if let Some(&bad) = seq.iter().find(|&&id| id as usize >= vocab) {
            return Err(Error::DimMismatch {
                expected: vocab,
                got: bad as usize,
                context: "token id",
            });
        }
    }
    Ok(())
}

pub(crate) fn features_to_matrix(rows: &[&[f32]], dim: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows.len(), dim), |(i, j)| rows[i][j] as f64)
}

pub(crate) fn single_row(x: ArrayView1<f64>) -> Array2<f64> {
    x.to_owned().insert_axis(Axis(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;

    #[test]
    fn normalization_is_unit_and_handles_zero() {
        let u = ndarray::arr2(&[[3.0, 4.0], [0.0, 0.0]]);
        let before = degenerate_norm_count();
        let (y, n) = normalize_rows(&u);
        assert_eq!(y, ndarray::arr2(&[[0.6, 0.8], [1.0, 0.0]]));
        assert_eq!(n[1], 0.0);
        assert!(degenerate_norm_count() > before);
        let g = normalize_rows_backward(&y, &n, &ndarray::arr2(&[[1.0, 1.0], [1.0, 1.0]]));
        assert_eq!(g.row(1).to_vec(), vec![0.0, 0.0]);
    }

    #[test]
    fn zero_input_zero_bias_maps_to_first_basis_vector() {
        let m = Mlp::new(5, 4, 3, &mut rng_from(1));
        let c = mlp_forward(&m, Array2::zeros((1, 5)));
        assert_eq!(c.y.row(0).to_vec(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn tensor_views_cover_all_parameters() {
        let mut rng = rng_from(2);
        let mut p = EncoderParams {
            audio: Mlp::new(3, 4, 2, &mut rng),
            image: Mlp::new(5, 4, 2, &mut rng),
            text: TextEncoder::new(7, 3, 2, &mut rng),
        };
        let total: usize = p.tensors().iter().map(|t| t.data.len()).sum();
        assert_eq!(total, (12 + 4 + 8 + 2) + (20 + 4 + 8 + 2) + (21 + 6));
        for t in p.tensors_mut() {
            assert_eq!(t.shape.iter().product::<usize>(), t.data.len());
        }
    }
}
