use std::fmt;
use std::ops::Range;

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{invert_symmetric, kron_identity, CONDITION_LIMIT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum BoundKind {
    Hcrb,
    Bcrb,
    Mcrb,
}

impl fmt::Display for BoundKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundKind::Hcrb => "HCRB",
            BoundKind::Bcrb => "BCRB",
            BoundKind::Mcrb => "MCRB",
        })
    }
}

/// Which unknown a block of the parameter vector belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    X,
    Gamma,
    Xi,
}

impl Target {
    pub fn as_str(&self) -> &'static str {
        match self {
            Target::X => "x",
            Target::Gamma => "gamma",
            Target::Xi => "xi",
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub label: Target,
    pub dim: usize,
}

/// Inputs echoed into a report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_vectors: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_obs: Option<usize>,
}

/// A Fisher information matrix with block labels and its inverse.
///
/// `fim` is stored in factored form when `kron_copies > 1`: the full
/// information matrix is `fim ⊗ I_M` (see [`BoundReport::materialized_fim`]).
#[derive(Debug, Clone)]
pub struct BoundReport {
    pub kind: BoundKind,
    pub name: String,
    pub blocks: Vec<Block>,
    pub fim: Array2<f64>,
    pub bound: Array2<f64>,
    pub params: BoundParams,
    pub kron_copies: usize,
    pub min_eigenvalue: f64,
    pub condition_number: f64,
    pub pseudo_inverse: bool,
}

impl BoundReport {
    pub(crate) fn new(
        kind: BoundKind,
        name: impl Into<String>,
        blocks: Vec<Block>,
        fim: Array2<f64>,
        params: BoundParams,
    ) -> Result<Self> {
        let total: usize = blocks.iter().map(|b| b.dim).sum();
        if fim.dim() != (total, total) {
            return Err(invalid(format!(
                "FIM is {:?} but blocks sum to {total}",
                fim.dim()
            )));
        }
        let ranges = block_ranges(&blocks);
        // Lemma-1 structure: zero cross-blocks are inverted block by block
        // so that the bound keeps exact zeros there.
        let decoupled = ranges.iter().enumerate().all(|(i, ri)| {
            ranges.iter().enumerate().all(|(j, rj)| {
                i == j || fim.slice(s![ri.clone(), rj.clone()]).iter().all(|&v| v == 0.0)
            })
        });
        let mut bound = Array2::zeros((total, total));
        let (mut min_eig, mut max_eig) = (f64::INFINITY, f64::NEG_INFINITY);
        let mut pseudo = false;
        let groups: Vec<Range<usize>> = if decoupled { ranges } else { vec![0..total] };
        for r in groups {
            let inv = invert_symmetric(&fim.slice(s![r.clone(), r.clone()]).to_owned())?;
            bound.slice_mut(s![r.clone(), r.clone()]).assign(&inv.inverse);
            min_eig = min_eig.min(inv.min_eigenvalue);
            max_eig = max_eig.max(inv.max_eigenvalue);
            pseudo |= inv.pseudo_inverse;
        }
        let condition = if min_eig > 0.0 { max_eig / min_eig } else { f64::INFINITY };
        Ok(Self {
            kind,
            name: name.into(),
            blocks,
            fim,
            bound,
            params,
            kron_copies: 1,
            min_eigenvalue: min_eig,
            condition_number: condition,
            pseudo_inverse: pseudo,
        })
    }

    pub(crate) fn with_kron(mut self, copies: usize) -> Self {
        self.kron_copies = copies;
        self
    }

    pub fn ill_conditioned(&self) -> bool {
        !(self.condition_number <= CONDITION_LIMIT)
    }

    pub fn block_range(&self, label: Target) -> Option<Range<usize>> {
        self.blocks
            .iter()
            .zip(block_ranges(&self.blocks))
            .find(|(b, _)| b.label == label)
            .map(|(_, r)| r)
    }

    pub fn fim_block(&self, row: Target, col: Target) -> Option<ArrayView2<'_, f64>> {
        let (r, c) = (self.block_range(row)?, self.block_range(col)?);
        Some(self.fim.slice(s![r, c]))
    }

    pub fn bound_block(&self, label: Target) -> Option<ArrayView2<'_, f64>> {
        let r = self.block_range(label)?;
        Some(self.bound.slice(s![r.clone(), r]))
    }

    /// Trace of the bound on one block, counting Kronecker copies.
    pub fn bound_trace(&self, label: Target) -> Option<f64> {
        self.bound_block(label)
            .map(|b| b.diag().sum() * self.kron_copies as f64)
    }

    pub fn total_bound_trace(&self) -> f64 {
        self.bound.diag().sum() * self.kron_copies as f64
    }

    pub fn materialized_fim(&self) -> Array2<f64> {
        if self.kron_copies == 1 {
            self.fim.clone()
        } else {
            kron_identity(&self.fim, self.kron_copies)
        }
    }

    pub fn materialized_bound(&self) -> Array2<f64> {
        if self.kron_copies == 1 {
            self.bound.clone()
        } else {
            kron_identity(&self.bound, self.kron_copies)
        }
    }

    pub fn summary(&self) -> BoundSummary {
        BoundSummary {
            kind: self.kind,
            name: self.name.clone(),
            blocks: self
                .blocks
                .iter()
                .map(|b| {
                    let fim = self.fim_block(b.label, b.label).expect("own block");
                    let bound = self.bound_block(b.label).expect("own block");
                    BlockSummary {
                        label: b.label,
                        dim: b.dim * self.kron_copies,
                        fim_diagonal: fim.diag().to_vec(),
                        bound_diagonal: bound.diag().to_vec(),
                        bound_trace: self.bound_trace(b.label).expect("own block"),
                    }
                })
                .collect(),
            bound_trace: self.total_bound_trace(),
            kron_copies: self.kron_copies,
            condition_number: self.condition_number,
            ill_conditioned: self.ill_conditioned(),
            pseudo_inverse: self.pseudo_inverse,
            params: self.params.clone(),
        }
    }
}

fn block_ranges(blocks: &[Block]) -> Vec<Range<usize>> {
    let mut start = 0;
    blocks
        .iter()
        .map(|b| {
            let r = start..start + b.dim;
            start += b.dim;
            r
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSummary {
    pub label: Target,
    pub dim: usize,
    /// Diagonal of the factored block (one copy when `kron_copies > 1`).
    pub fim_diagonal: Vec<f64>,
    pub bound_diagonal: Vec<f64>,
    pub bound_trace: f64,
}

/// JSON view of a [`BoundReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundSummary {
    pub kind: BoundKind,
    pub name: String,
    pub blocks: Vec<BlockSummary>,
    pub bound_trace: f64,
    pub kron_copies: usize,
    pub condition_number: f64,
    pub ill_conditioned: bool,
    pub pseudo_inverse: bool,
    pub params: BoundParams,
}
