use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::scalar::Scalar;

/// Per-patch routing: `true` patches go through the linear projection,
/// `false` patches are replaced by the mask embedding.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchMaskPlan {
    observed: Vec<bool>,
}

impl PatchMaskPlan {
    pub fn new(observed: Vec<bool>) -> Self {
        Self { observed }
    }

    pub fn all_observed(n_patches: usize) -> Self {
        Self { observed: vec![true; n_patches] }
    }

    /// A patch counts as observed only if every timestep inside it is.
    pub fn from_timesteps(mask: &[bool], patch_len: usize) -> Result<Self> {
        if patch_len == 0 || mask.len() % patch_len != 0 {
            bail!(Dimension, "mask of length {} does not split into patches of {patch_len}", mask.len());
        }
        Ok(Self { observed: mask.chunks(patch_len).map(|c| c.iter().all(|&m| m)).collect() })
    }

    pub fn len(&self) -> usize {
        self.observed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observed.is_empty()
    }

    pub fn is_observed(&self, patch: usize) -> bool {
        self.observed[patch]
    }

    pub fn flags(&self) -> &[bool] {
        &self.observed
    }

    pub fn n_masked(&self) -> usize {
        self.observed.iter().filter(|&&o| !o).count()
    }

    pub fn masked_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.observed.iter().enumerate().filter(|(_, &o)| !o).map(|(i, _)| i)
    }

    /// Patchwise AND of two plans.
    pub fn and(&self, other: &Self) -> Self {
        Self { observed: self.observed.iter().zip(&other.observed).map(|(&a, &b)| a && b).collect() }
    }

    /// Timestep-level mask obtained by repeating each patch flag `patch_len` times.
    pub fn timestep_mask(&self, patch_len: usize) -> Vec<bool> {
        self.observed.iter().flat_map(|&o| std::iter::repeat_n(o, patch_len)).collect()
    }
}

/// Splits `x` into consecutive, disjoint patches of `patch_len`.
pub fn patchify<S: Scalar>(x: &[S], patch_len: usize) -> Result<Vec<&[S]>> {
    if patch_len == 0 || x.len() % patch_len != 0 {
        bail!(Dimension, "length {} is not a multiple of patch length {patch_len}; left-pad first", x.len());
    }
    Ok(x.chunks(patch_len).collect())
}

/// Prepends zeros up to `target` and returns the matching observation mask.
pub fn left_pad<S: Scalar>(x: &[S], observed: &[bool], target: usize) -> Result<(Vec<S>, Vec<bool>)> {
    if x.len() > target {
        bail!(Dimension, "series of length {} exceeds window {target}; sub-sample first", x.len());
    }
    if x.len() != observed.len() {
        bail!(Dimension, "{} values with {} mask entries", x.len(), observed.len());
    }
    let pad = target - x.len();
    let mut values = vec![S::zero(); pad];
    values.extend_from_slice(x);
    let mut mask = vec![false; pad];
    mask.extend_from_slice(observed);
    Ok((values, mask))
}
