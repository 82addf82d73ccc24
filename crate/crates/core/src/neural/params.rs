//! Flat parameter storage with a named block table.
//!
//! All of a network's weights live in one contiguous `Vec<f64>`; layers hold
//! [`BlockId`]s into it. Gradients, Adam moments, soft updates, and
//! checkpoints all operate on the flat vector, which keeps target-network
//! maintenance a single elementwise pass.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockId(pub(crate) usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    blocks: Vec<ParamBlock>,
    data: Vec<f64>,
}

impl NetworkParams {
    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn block(&self, id: BlockId) -> &[f64] {
        let b = &self.blocks[id.0];
        &self.data[b.offset..b.offset + b.len]
    }

    pub fn block_info(&self, id: BlockId) -> &ParamBlock {
        &self.blocks[id.0]
    }

    /// Blend `online` into `self`: `self = tau * online + (1 - tau) * self`.
    pub fn soft_update_from(&mut self, online: &NetworkParams, tau: f64) {
        debug_assert_eq!(self.data.len(), online.data.len());
        for (t, o) in self.data.iter_mut().zip(online.data.iter()) {
            *t = tau * o + (1.0 - tau) * *t;
        }
    }

    /// Structural compatibility: same block table, irrespective of values.
    pub fn same_layout(&self, other: &NetworkParams) -> bool {
        self.blocks == other.blocks
    }
}

/// Weight-initialization rule for a block.
#[derive(Debug, Clone, Copy)]
pub enum Init {
    Zero,
    /// He-normal with the given fan-in (ReLU layers).
    HeNormal { fan_in: usize },
    /// Uniform in `[-bound, bound]` (output heads).
    Uniform { bound: f64 },
}

/// Accumulates blocks during network construction.
pub struct ParamBuilder<'r> {
    blocks: Vec<ParamBlock>,
    data: Vec<f64>,
    rng: &'r mut ChaCha8Rng,
}

impl<'r> ParamBuilder<'r> {
    pub fn new(rng: &'r mut ChaCha8Rng) -> Self {
        Self {
            blocks: Vec::new(),
            data: Vec::new(),
            rng,
        }
    }

    pub fn register(&mut self, name: &str, shape: &[usize], init: Init) -> BlockId {
        let len: usize = shape.iter().product();
        let offset = self.data.len();
        match init {
            Init::Zero => self.data.extend(std::iter::repeat(0.0).take(len)),
            Init::HeNormal { fan_in } => {
                let std = (2.0 / fan_in as f64).sqrt();
                let dist = Normal::new(0.0, std).expect("valid std");
                self.data.extend((0..len).map(|_| dist.sample(self.rng)));
            }
            Init::Uniform { bound } => {
                self.data
                    .extend((0..len).map(|_| self.rng.gen_range(-bound..=bound)));
            }
        }
        self.blocks.push(ParamBlock {
            name: name.to_string(),
            shape: shape.to_vec(),
            offset,
            len,
        });
        BlockId(self.blocks.len() - 1)
    }

    pub fn finish(self) -> NetworkParams {
        NetworkParams {
            blocks: self.blocks,
            data: self.data,
        }
    }
}
