//! Block cleaning: purging oversized blocks, per-entity block filtering, and
//! comparison-graph edge pruning. Output is the set of candidate pairs a
//! query must actually compare.

use std::collections::HashMap;

use crate::blocking::{Block, BlockCollection};
use crate::catalog::EntityRef;

/// Which cleaning stages run, always in purge -> filter -> prune order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stages {
    All,
    PurgeFilter,
    PurgePrune,
    None,
}

impl Stages {
    pub fn purge(self) -> bool {
        !matches!(self, Stages::None)
    }

    pub fn filter(self) -> bool {
        matches!(self, Stages::All | Stages::PurgeFilter)
    }

    pub fn prune(self) -> bool {
        matches!(self, Stages::All | Stages::PurgePrune)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MetaBlockingConfig {
    /// Tolerated density jump between adjacent block sizes before purging.
    pub smoothing_factor: f64,
    /// Fraction of each entity's smallest blocks kept by filtering.
    pub filter_ratio: f64,
    pub stages: Stages,
}

impl Default for MetaBlockingConfig {
    fn default() -> Self {
        MetaBlockingConfig {
            smoothing_factor: 1.025,
            filter_ratio: 0.5,
            stages: Stages::All,
        }
    }
}

/// Normalized (a < b), sorted, duplicate-free candidate pairs.
pub type ComparisonSet = Vec<(EntityRef, EntityRef)>;

#[derive(Debug, Clone, Default)]
pub struct CleaningReport {
    pub purge_threshold: u64,
    pub blocks_purged: usize,
    pub blocks_after_purge: usize,
    pub blocks_after_filter: usize,
    pub pairs_before_prune: usize,
    pub pairs_after_prune: usize,
}

/// Drops the largest blocks. Blocks are walked in canonical order and each
/// adjacent pair is checked for a comparison-density jump: with sizes s and
/// cardinalities c, position i triggers when s[i-1]*c[i] > SF*c[i-1]*s[i].
/// The cardinality just before the last trigger becomes the cutoff; every
/// block above it is purged. Without any trigger (e.g. all blocks the same
/// size) nothing is purged. Comparison-free blocks are dropped up front.
pub fn block_purging(blocks: BlockCollection, smoothing_factor: f64) -> (BlockCollection, u64) {
    let mut kept: Vec<Block> = blocks
        .blocks
        .into_iter()
        .filter(|b| b.cardinality() > 0)
        .collect();
    if kept.is_empty() {
        return (BlockCollection { blocks: kept }, 0);
    }
    let sizes: Vec<u64> = kept.iter().map(|b| b.size() as u64).collect();
    let cards: Vec<u64> = kept.iter().map(Block::cardinality).collect();
    let mut cutoff = *cards.last().unwrap();
    for i in 1..kept.len() {
        let lhs = sizes[i - 1] as f64 * cards[i] as f64;
        let rhs = smoothing_factor * cards[i - 1] as f64 * sizes[i] as f64;
        if lhs > rhs {
            cutoff = cards[i - 1];
        }
    }
    kept.retain(|b| b.cardinality() <= cutoff);
    (BlockCollection { blocks: kept }, cutoff)
}

/// Each entity stays only in the max(1, ceil(p * k)) smallest of its k blocks
/// (canonical order decides ties). Blocks left with fewer than two members
/// are dropped; survivors are re-sorted since sizes change.
pub fn block_filtering(blocks: BlockCollection, filter_ratio: f64) -> BlockCollection {
    let lists = blocks.entity_block_lists();
    let mut keep: HashMap<EntityRef, usize> = HashMap::with_capacity(lists.len());
    for (e, list) in &lists {
        let k = list.len();
        let n = ((filter_ratio * k as f64).ceil() as usize).max(1);
        keep.insert(*e, list[n.min(k) - 1]);
    }
    let mut out: Vec<Block> = Vec::new();
    for (i, block) in blocks.blocks.into_iter().enumerate() {
        let members: Vec<EntityRef> = block
            .members
            .into_iter()
            .filter(|m| i <= keep[m])
            .collect();
        if members.len() >= 2 {
            out.push(Block { key: block.key, members });
        }
    }
    let mut bc = BlockCollection { blocks: out };
    bc.resort();
    bc
}

fn pair_weights(blocks: &BlockCollection) -> HashMap<(EntityRef, EntityRef), u64> {
    let mut weights: HashMap<(EntityRef, EntityRef), u64> = HashMap::new();
    for block in &blocks.blocks {
        for i in 0..block.members.len() {
            for j in i + 1..block.members.len() {
                *weights
                    .entry((block.members[i], block.members[j]))
                    .or_insert(0) += 1;
            }
        }
    }
    weights
}

/// Keeps pairs whose common-block count reaches the mean count, compared in
/// integer arithmetic (w * pairs >= total) to avoid float drift.
pub fn edge_pruning(blocks: &BlockCollection) -> ComparisonSet {
    let weights = pair_weights(blocks);
    if weights.is_empty() {
        return Vec::new();
    }
    let total: u64 = weights.values().sum();
    let count = weights.len() as u64;
    let mut out: ComparisonSet = weights
        .into_iter()
        .filter(|&(_, w)| w * count >= total)
        .map(|(pair, _)| pair)
        .collect();
    out.sort_unstable();
    out
}

/// Every co-occurring pair, deduplicated across blocks.
pub fn all_pairs(blocks: &BlockCollection) -> ComparisonSet {
    let mut out: ComparisonSet = pair_weights(blocks).into_keys().collect();
    out.sort_unstable();
    out
}

/// Runs the configured stages over enriched query blocks and returns the
/// final candidate pairs plus per-stage counts.
pub fn restructure(
    blocks: BlockCollection,
    cfg: &MetaBlockingConfig,
) -> (ComparisonSet, CleaningReport) {
    let mut report = CleaningReport::default();
    let input_len = blocks.len();
    let mut current = blocks;
    if cfg.stages.purge() {
        let (purged, cutoff) = block_purging(current, cfg.smoothing_factor);
        report.purge_threshold = cutoff;
        report.blocks_after_purge = purged.len();
        current = purged;
    } else {
        report.blocks_after_purge = current.len();
    }
    report.blocks_purged = input_len - report.blocks_after_purge;
    if cfg.stages.filter() {
        current = block_filtering(current, cfg.filter_ratio);
    }
    report.blocks_after_filter = current.len();
    let pairs = if cfg.stages.prune() {
        report.pairs_before_prune = pair_weights(&current).len();
        edge_pruning(&current)
    } else {
        let p = all_pairs(&current);
        report.pairs_before_prune = p.len();
        p
    };
    report.pairs_after_prune = pairs.len();
    (pairs, report)
}
