//! Heap-indexed binary tree arithmetic.
//!
//! Node `1` is the root, node `n` has daughters `2n` and `2n + 1`, and
//! generation `q` holds the ids `2^q ..= 2^(q+1) - 1`. Populations store node
//! `n` at slot `n - 1`.

use std::ops::RangeInclusive;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{BmcError, Result};

/// Generation of a node, `floor(log2 n)`.
pub fn generation(n: u64) -> Result<u32> {
    if n == 0 {
        return Err(BmcError::InvalidNode(n));
    }
    Ok(63 - n.leading_zeros())
}

/// Node ids of generation `r`.
pub fn layer(r: u32) -> RangeInclusive<u64> {
    let start = 1u64 << r;
    start..=(2 * start - 1)
}

/// Number of nodes in generation `r`.
pub fn layer_size(r: u32) -> u64 {
    1u64 << r
}

/// Number of nodes in the subtree of depth `r`, `2^(r+1) - 1`.
pub fn tree_size(r: u32) -> u64 {
    (1u64 << (r + 1)) - 1
}

pub fn parent(n: u64) -> Result<Option<u64>> {
    match n {
        0 => Err(BmcError::InvalidNode(n)),
        1 => Ok(None),
        _ => Ok(Some(n / 2)),
    }
}

pub fn children(n: u64) -> Result<(u64, u64)> {
    if n == 0 {
        return Err(BmcError::InvalidNode(n));
    }
    Ok((2 * n, 2 * n + 1))
}

/// Mother-daughters triangle `(i, 2i, 2i+1)`.
pub fn triangle_indices(i: u64) -> Result<(u64, u64, u64)> {
    let (l, r) = children(i)?;
    Ok((i, l, r))
}

/// Ancestor of `n` in generation `q` (itself when `q` is its own generation).
pub fn ancestor_at(n: u64, q: u32) -> Result<u64> {
    let g = generation(n)?;
    if q > g {
        return Err(BmcError::OutOfRange(format!(
            "generation {q} is below node {n} (generation {g})"
        )));
    }
    Ok(n >> (g - q))
}

/// A permutation of `1..=2^(depth+1)-1` that maps every generation onto itself.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationPermutation {
    depth: u32,
    // images[i - 1] = pi(i)
    images: Vec<u64>,
}

impl GenerationPermutation {
    pub fn identity(depth: u32) -> Self {
        GenerationPermutation {
            depth,
            images: (1..=tree_size(depth)).collect(),
        }
    }

    /// Builds a permutation from explicit images, checking that each
    /// generation is mapped bijectively onto itself.
    pub fn from_images(depth: u32, images: Vec<u64>) -> Result<Self> {
        if images.len() as u64 != tree_size(depth) {
            return Err(BmcError::LengthMismatch(format!(
                "expected {} images, got {}",
                tree_size(depth),
                images.len()
            )));
        }
        let mut seen = vec![false; images.len()];
        for (slot, &img) in images.iter().enumerate() {
            let i = slot as u64 + 1;
            if img == 0 || img > tree_size(depth) || generation(img)? != generation(i)? {
                return Err(BmcError::InvalidParameter(format!(
                    "pi({i}) = {img} leaves the generation of {i}"
                )));
            }
            if std::mem::replace(&mut seen[img as usize - 1], true) {
                return Err(BmcError::InvalidParameter(format!("{img} is hit twice")));
            }
        }
        Ok(GenerationPermutation { depth, images })
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// `pi(i)` for `1 <= i <= 2^(depth+1)-1`.
    pub fn apply(&self, i: u64) -> Result<u64> {
        if i == 0 || i > self.images.len() as u64 {
            return Err(BmcError::OutOfRange(format!(
                "node {i} outside a permutation of depth {}",
                self.depth
            )));
        }
        Ok(self.images[i as usize - 1])
    }

    /// Images in order `pi(1), pi(2), ...`.
    pub fn images(&self) -> &[u64] {
        &self.images
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0u64; self.images.len()];
        for (slot, &img) in self.images.iter().enumerate() {
            inv[img as usize - 1] = slot as u64 + 1;
        }
        GenerationPermutation {
            depth: self.depth,
            images: inv,
        }
    }

    pub fn compose(&self, other: &Self) -> Result<Self> {
        if self.depth != other.depth {
            return Err(BmcError::LengthMismatch("permutation depths differ".into()));
        }
        let images = other
            .images
            .iter()
            .map(|&j| self.images[j as usize - 1])
            .collect();
        Ok(GenerationPermutation {
            depth: self.depth,
            images,
        })
    }
}

/// Draws a permutation uniformly among those preserving every generation:
/// an independent Fisher-Yates shuffle per layer.
pub fn sample_permutation<R: Rng + ?Sized>(depth: u32, rng: &mut R) -> GenerationPermutation {
    let mut images: Vec<u64> = (1..=tree_size(depth)).collect();
    for q in 1..=depth {
        let start = layer_size(q) as usize - 1;
        let end = start + layer_size(q) as usize;
        images[start..end].shuffle(rng);
    }
    GenerationPermutation { depth, images }
}
