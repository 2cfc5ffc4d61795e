//! Binary selection masks over frozen weights.
//!
//! Each maskable weight `W` gets a real-valued score matrix `M` of the same
//! shape. The forward pass uses `Ŵ = W ⊙ M_bin` where `M_bin = [M >= τ]`; the
//! backward pass treats the threshold as the identity, so the score gradient is
//! the gradient with respect to `M_bin`, i.e. `∂L/∂Ŵ ⊙ W`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskingConfig {
    /// Global threshold τ shared by every masked layer.
    pub tau: f32,
    /// Target fraction of zeros at initialization.
    pub init_sparsity: f64,
    /// Half-width δ of the uniform score distribution.
    pub init_halfwidth: f32,
    pub seed: u64,
}

impl Default for MaskingConfig {
    fn default() -> Self {
        MaskingConfig {
            tau: 0.5,
            init_sparsity: 0.05,
            init_halfwidth: 0.01,
            seed: 0,
        }
    }
}

impl MaskingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.init_sparsity) {
            return Err(Error::Config(format!(
                "initial sparsity must lie in [0, 1], got {}",
                self.init_sparsity
            )));
        }
        if self.init_halfwidth <= 0.0 || !self.init_halfwidth.is_finite() {
            return Err(Error::Config(format!(
                "score half-width must be positive, got {}",
                self.init_halfwidth
            )));
        }
        if !self.tau.is_finite() {
            return Err(Error::Config("threshold must be finite".into()));
        }
        Ok(())
    }
}

/// A 2-D matrix of selection bits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(rows: usize, cols: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != rows * cols {
            return Err(Error::shape("binary mask", &[rows, cols], &[bits.len()]));
        }
        Ok(BinaryMask { rows, cols, bits })
    }

    pub fn filled(rows: usize, cols: usize, value: bool) -> Self {
        BinaryMask {
            rows,
            cols,
            bits: vec![value; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn count_zeros(&self) -> usize {
        self.bits.iter().filter(|b| !**b).count()
    }

    /// Fraction of deselected entries.
    pub fn sparsity(&self) -> f64 {
        if self.bits.is_empty() {
            return 0.0;
        }
        self.count_zeros() as f64 / self.bits.len() as f64
    }

    /// Entrywise L1 distance (number of differing bits).
    pub fn l1_distance(&self, other: &BinaryMask) -> Result<usize> {
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return Err(Error::shape(
                "mask distance",
                &[self.rows, self.cols],
                &[other.rows, other.cols],
            ));
        }
        Ok(self.bits.iter().zip(&other.bits).filter(|(a, b)| a != b).count())
    }

    pub fn to_tensor(&self) -> Tensor {
        let data = self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        Tensor::from_parts(vec![self.rows, self.cols], data)
    }

    /// Row-major bits, least significant bit first within each byte, final
    /// byte zero-padded.
    pub fn pack(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.bits.len().div_ceil(8)];
        for (i, &b) in self.bits.iter().enumerate() {
            if b {
                out[i / 8] |= 1 << (i % 8);
            }
        }
        out
    }

    pub fn unpack(rows: usize, cols: usize, bytes: &[u8]) -> Result<Self> {
        let n = rows * cols;
        if bytes.len() != n.div_ceil(8) {
            return Err(Error::shape("packed mask", &[rows, cols], &[bytes.len()]));
        }
        let bits = (0..n).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect();
        Ok(BinaryMask { rows, cols, bits })
    }
}

/// Elementwise `scores >= tau`. Pure; no gradient flows through it.
pub fn binarize(scores: &Tensor, tau: f32) -> Result<BinaryMask> {
    let (rows, cols) = matrix_dims(scores)?;
    Ok(BinaryMask {
        rows,
        cols,
        bits: scores.data().iter().map(|&m| m >= tau).collect(),
    })
}

fn matrix_dims(t: &Tensor) -> Result<(usize, usize)> {
    match t.shape() {
        [r, c] => Ok((*r, *c)),
        other => Err(Error::shape("mask matrix", other, &[])),
    }
}

/// Draws `u ~ U[0,1)` per entry and returns `τ + δ(u − p)`, so each entry
/// falls below τ with probability `p`. `stream` separates layers sharing a seed.
pub fn init_scores(shape: &[usize], cfg: &MaskingConfig, stream: u64) -> Result<Tensor> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);
    let n: usize = shape.iter().product();
    let tau = f64::from(cfg.tau);
    let delta = f64::from(cfg.init_halfwidth);
    let data = (0..n)
        .map(|_| {
            let u: f64 = rng.gen();
            (tau + delta * (u - cfg.init_sparsity)) as f32
        })
        .collect();
    Tensor::new(shape.to_vec(), data)
}

/// Hadamard product of a frozen weight with the straight-through binarized
/// scores. Shared by [`MaskedLinear`] and the transformer model.
pub fn masked_weight(g: &mut Graph, weight: Var, scores: Var, tau: f32) -> Result<Var> {
    let bin = g.ste_binarize(scores, tau);
    g.mul(weight, bin)
}

/// Closed form of the straight-through score gradient: `∂L/∂Ŵ ⊙ W`.
pub fn ste_backward(weight: &Tensor, grad_masked: &Tensor) -> Result<Tensor> {
    grad_masked.zip_map(weight, |g, w| g * w)
}

/// Graph handles produced by [`MaskedLinear::forward`].
#[derive(Clone, Copy, Debug)]
pub struct MaskedForward {
    pub output: Var,
    pub masked_weight: Var,
    pub scores: Var,
}

/// A frozen `[in, out]` weight (and optional frozen bias) paired with trainable
/// scores.
#[derive(Clone, Debug)]
pub struct MaskedLinear {
    weight: Tensor,
    bias: Option<Tensor>,
    scores: Tensor,
    tau: f32,
    cached: Option<BinaryMask>,
}

impl MaskedLinear {
    pub fn new(weight: Tensor, bias: Option<Tensor>, cfg: &MaskingConfig, stream: u64) -> Result<Self> {
        let scores = init_scores(weight.shape(), cfg, stream)?;
        Self::with_scores(weight, bias, scores, cfg.tau)
    }

    pub fn with_scores(weight: Tensor, bias: Option<Tensor>, scores: Tensor, tau: f32) -> Result<Self> {
        let (_, cols) = matrix_dims(&weight)?;
        if scores.shape() != weight.shape() {
            return Err(Error::shape("mask scores", weight.shape(), scores.shape()));
        }
        if let Some(b) = &bias {
            if b.shape() != [cols] {
                return Err(Error::shape("masked linear bias", weight.shape(), b.shape()));
            }
        }
        Ok(MaskedLinear {
            weight,
            bias,
            scores,
            tau,
            cached: None,
        })
    }

    pub fn weight(&self) -> &Tensor {
        &self.weight
    }

    pub fn scores(&self) -> &Tensor {
        &self.scores
    }

    pub fn tau(&self) -> f32 {
        self.tau
    }

    /// Replaces the scores and drops the cached mask.
    pub fn set_scores(&mut self, scores: Tensor) -> Result<()> {
        if scores.shape() != self.weight.shape() {
            return Err(Error::shape("mask scores", self.weight.shape(), scores.shape()));
        }
        self.scores = scores;
        self.cached = None;
        Ok(())
    }

    /// Current binary mask, computed on first use after a score change.
    pub fn binary_mask(&mut self) -> &BinaryMask {
        let (scores, tau) = (&self.scores, self.tau);
        self.cached
            .get_or_insert_with(|| binarize(scores, tau).expect("weight is a matrix"))
    }

    pub fn realized_sparsity(&mut self) -> f64 {
        self.binary_mask().sparsity()
    }

    /// Dense `W ⊙ M_bin`.
    pub fn materialize(&mut self) -> Tensor {
        let mask = self.binary_mask().to_tensor();
        self.weight.zip_map(&mask, |w, m| w * m).expect("same shape")
    }

    /// `x · (W ⊙ binarize(M)) + b` with only the scores requiring grad.
    pub fn forward(&mut self, g: &mut Graph, x: Var) -> Result<MaskedForward> {
        self.binary_mask();
        let w = g.constant(self.weight.clone());
        let scores = g.leaf(self.scores.clone(), true);
        let masked = masked_weight(g, w, scores, self.tau)?;
        let mut output = g.matmul(x, masked)?;
        if let Some(b) = &self.bias {
            let b = g.constant(b.clone());
            output = g.add(output, b)?;
        }
        Ok(MaskedForward {
            output,
            masked_weight: masked,
            scores,
        })
    }
}
