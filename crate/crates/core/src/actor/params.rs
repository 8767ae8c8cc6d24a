//! Flat parameter vector layout.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Architecture hyperparameters of the generator.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Number of tokens in the library (the query slot gets one extra embedding row).
    pub vocab: usize,
    /// Embedding width `r`; must be even so the position code fills it.
    pub embed_dim: usize,
    pub ffn_dim: usize,
    pub layers: usize,
    /// Number of low-frequency rows kept before attention.
    pub dct_clip: usize,
    /// Longest sequence (generated nodes plus the query slot) the model sees.
    pub max_len: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab == 0 {
            return Err(Error::Config("vocabulary is empty".into()));
        }
        if self.embed_dim < 2 || !self.embed_dim.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "embedding dim must be even and at least 2, got {}",
                self.embed_dim
            )));
        }
        if self.ffn_dim == 0 || self.layers == 0 || self.dct_clip == 0 || self.max_len == 0 {
            return Err(Error::Config(
                "ffn size, decoder layers, DCT clip and max length must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Offsets of one decoder layer's blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerOffsets {
    pub ln1_gain: usize,
    pub ln1_bias: usize,
    pub q: usize,
    pub k: usize,
    pub v: usize,
    pub ln2_gain: usize,
    pub ln2_bias: usize,
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    blocks: Vec<Block>,
    pub embed: usize,
    pub layers: Vec<LayerOffsets>,
    pub lnf_gain: usize,
    pub lnf_bias: usize,
    pub head_w: usize,
    pub head_b: usize,
    total: usize,
}

impl ParamLayout {
    pub fn new(config: &ModelConfig) -> Self {
        let r = config.embed_dim;
        let f = config.ffn_dim;
        let mut blocks = Vec::new();
        let mut total = 0;
        let mut add = |name: String, rows: usize, cols: usize| {
            let offset = total;
            blocks.push(Block { name, rows, cols, offset });
            total += rows * cols;
            offset
        };
        let embed = add("token_embed".into(), config.vocab + 1, r);
        let layers = (0..config.layers)
            .map(|l| LayerOffsets {
                ln1_gain: add(format!("layer{l}.ln1.gain"), 1, r),
                ln1_bias: add(format!("layer{l}.ln1.bias"), 1, r),
                q: add(format!("layer{l}.attn.q"), r, r),
                k: add(format!("layer{l}.attn.k"), r, r),
                v: add(format!("layer{l}.attn.v"), r, r),
                ln2_gain: add(format!("layer{l}.ln2.gain"), 1, r),
                ln2_bias: add(format!("layer{l}.ln2.bias"), 1, r),
                w1: add(format!("layer{l}.ffn.w1"), r, f),
                b1: add(format!("layer{l}.ffn.b1"), 1, f),
                w2: add(format!("layer{l}.ffn.w2"), f, r),
                b2: add(format!("layer{l}.ffn.b2"), 1, r),
            })
            .collect();
        let lnf_gain = add("final_ln.gain".into(), 1, r);
        let lnf_bias = add("final_ln.bias".into(), 1, r);
        let head_w = add("head.w".into(), r, config.vocab);
        let head_b = add("head.b".into(), 1, config.vocab);
        Self {
            blocks,
            embed,
            layers,
            lnf_gain,
            lnf_bias,
            head_w,
            head_b,
            total,
        }
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, name: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.name == name)
    }

    /// Name of the block holding flat index `i`.
    pub fn locate(&self, i: usize) -> Option<(&Block, usize)> {
        self.blocks
            .iter()
            .find(|b| b.range().contains(&i))
            .map(|b| (b, i - b.offset))
    }

    /// Splits a flat vector into named blocks.
    pub fn to_named(&self, flat: &[f64]) -> BTreeMap<String, Vec<f64>> {
        assert_eq!(flat.len(), self.total);
        self.blocks
            .iter()
            .map(|b| (b.name.clone(), flat[b.range()].to_vec()))
            .collect()
    }

    /// Inverse of [`to_named`](Self::to_named); the map's iteration order is irrelevant.
    pub fn from_named<'a>(&self, named: impl IntoIterator<Item = (&'a String, &'a Vec<f64>)>) -> Result<Vec<f64>> {
        let mut flat = vec![0.0; self.total];
        let mut seen = vec![false; self.blocks.len()];
        for (name, values) in named {
            let idx = self
                .blocks
                .iter()
                .position(|b| &b.name == name)
                .ok_or_else(|| Error::Config(format!("unknown parameter block `{name}`")))?;
            let b = &self.blocks[idx];
            if values.len() != b.len() {
                return Err(Error::Config(format!(
                    "block `{name}` expects {} values, got {}",
                    b.len(),
                    values.len()
                )));
            }
            flat[b.range()].copy_from_slice(values);
            seen[idx] = true;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Config(format!("missing parameter block `{}`", self.blocks[i].name)));
        }
        Ok(flat)
    }

    /// Seeded initialisation: unit-normal embeddings, uniform
    /// `±1/sqrt(fan_in)` weight matrices, unit gains, zero biases.
    pub fn init(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut flat = vec![0.0; self.total];
        for b in &self.blocks {
            let slice = &mut flat[b.range()];
            if b.name == "token_embed" {
                for v in slice.iter_mut() {
                    *v = StandardNormal.sample(&mut rng);
                }
            } else if b.name.ends_with(".gain") {
                slice.fill(1.0);
            } else if b.rows > 1 {
                let bound = 1.0 / (b.rows as f64).sqrt();
                for v in slice.iter_mut() {
                    *v = rng.gen_range(-bound..bound);
                }
            }
        }
        flat
    }
}
