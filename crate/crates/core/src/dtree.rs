//! Extremely randomized decision-tree training on the PIM system.
//!
//! The tree grows breadth-first. Each round runs three batched command
//! phases over all active leaves — min/max scan, split evaluation, split
//! commit — as one kernel launch each. Rows are sharded round-robin across
//! cores in a feature-major, leaf-contiguous layout; a commit partitions each
//! shard's leaf segment in place, so a leaf's rows stay contiguous per
//! feature block.
//!
//! Split thresholds are drawn on the host from a dedicated ChaCha substream
//! per (master seed, leaf uid, feature), where leaf uids follow creation
//! order. Draws therefore do not depend on the shard count, and the built
//! tree is bit-identical for 1 or 64 cores. A plain-float reference builder
//! consumes the same substreams for quality comparison.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;
use crate::machine::{CostBreakdown, MachineError, PimSystem, ScratchPlan};

/// Two streaming buffers of one DMA chunk each per thread; with the 64-KiB
/// scratchpad this admits at most 16 threads.
pub const PER_THREAD_SCRATCH_BYTES: u32 = 4096;

#[derive(Debug, Error)]
pub enum DtreeError {
    #[error(transparent)]
    Machine(#[from] MachineError),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("tree file: {0}")]
    BadTreeFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct DtreeConfig {
    pub max_depth: usize,
    pub min_samples_split: usize,
    /// Consecutive rounds a leaf may fail to find any valid split before it
    /// turns terminal.
    pub max_retries: usize,
    pub seed: u64,
    pub n_cores: usize,
    pub threads: u32,
}

impl Default for DtreeConfig {
    fn default() -> Self {
        Self {
            max_depth: 10,
            min_samples_split: 2,
            max_retries: 3,
            seed: 0,
            n_cores: 16,
            threads: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f32,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        class: u8,
        samples: u64,
    },
}

impl TreeNode {
    pub fn predict(&self, row: &[f64]) -> u8 {
        match self {
            TreeNode::Leaf { class, .. } => *class,
            TreeNode::Split { feature, threshold, left, right } => {
                if (row[*feature] as f32) < *threshold {
                    left.predict(row)
                } else {
                    right.predict(row)
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }
}

pub fn save_tree(tree: &TreeNode, path: &Path) -> Result<(), DtreeError> {
    let text = serde_json::to_string_pretty(tree).map_err(|e| DtreeError::BadTreeFile(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_tree(path: &Path) -> Result<TreeNode, DtreeError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| DtreeError::BadTreeFile(e.to_string()))
}

pub fn training_accuracy(tree: &TreeNode, ds: &Dataset) -> f64 {
    let n = ds.n_rows();
    let right = (0..n).filter(|&i| tree.predict(ds.row(i)) as f64 == ds.y[i]).count();
    right as f64 / n as f64
}

/// One batched per-leaf command executed by every shard.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TreeCommand {
    /// Per-feature min/max over the leaf's rows.
    MinMax { leaf: usize },
    /// Class counts of the would-be left side for one candidate split.
    SplitEvaluate { leaf: usize, feature: usize, threshold: f32 },
    /// Stable in-place partition of the leaf's segment.
    SplitCommit { leaf: usize, feature: usize, threshold: f32 },
}

impl TreeCommand {
    pub fn to_bytes(self) -> [u8; 16] {
        let (tag, leaf, feature, thr) = match self {
            TreeCommand::MinMax { leaf } => (0u32, leaf as u32, 0u32, 0f32),
            TreeCommand::SplitEvaluate { leaf, feature, threshold } => {
                (1, leaf as u32, feature as u32, threshold)
            }
            TreeCommand::SplitCommit { leaf, feature, threshold } => {
                (2, leaf as u32, feature as u32, threshold)
            }
        };
        let mut b = [0u8; 16];
        b[0..4].copy_from_slice(&tag.to_le_bytes());
        b[4..8].copy_from_slice(&leaf.to_le_bytes());
        b[8..12].copy_from_slice(&feature.to_le_bytes());
        b[12..16].copy_from_slice(&thr.to_le_bytes());
        b
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, DtreeError> {
        if b.len() != 16 {
            return Err(DtreeError::BadTreeFile("command must be 16 bytes".into()));
        }
        let tag = u32::from_le_bytes(b[0..4].try_into().unwrap());
        let leaf = u32::from_le_bytes(b[4..8].try_into().unwrap()) as usize;
        let feature = u32::from_le_bytes(b[8..12].try_into().unwrap()) as usize;
        let threshold = f32::from_le_bytes(b[12..16].try_into().unwrap());
        Ok(match tag {
            0 => TreeCommand::MinMax { leaf },
            1 => TreeCommand::SplitEvaluate { leaf, feature, threshold },
            2 => TreeCommand::SplitCommit { leaf, feature, threshold },
            t => return Err(DtreeError::BadTreeFile(format!("unknown command tag {t}"))),
        })
    }
}

/// Round-robin row sharding: row `i` lives on core `i % n_cores`.
#[derive(Debug, Clone)]
pub struct ShardLayout {
    pub n_cores: usize,
    pub rows_per_shard: Vec<usize>,
}

impl ShardLayout {
    pub fn new(n_rows: usize, n_cores: usize) -> Self {
        let rows_per_shard =
            (0..n_cores).map(|c| n_rows / n_cores + usize::from(c < n_rows % n_cores)).collect();
        Self { n_cores, rows_per_shard }
    }
}

/// One core's slice of the dataset, feature-major and leaf-contiguous.
struct Shard {
    rows: usize,
    /// `values[f * rows + i]`.
    values: Vec<f32>,
    labels: Vec<u8>,
}

impl Shard {
    fn value(&self, feature: usize, i: usize) -> f32 {
        self.values[feature * self.rows + i]
    }

    /// Stable partition of `[start, start+len)` by `value < threshold`,
    /// applied to every feature block and the labels. Returns the left size.
    fn partition(&mut self, start: usize, len: usize, feature: usize, threshold: f32) -> usize {
        let goes_left: Vec<bool> =
            (start..start + len).map(|i| self.value(feature, i) < threshold).collect();
        let n_left = goes_left.iter().filter(|&&l| l).count();
        let mut scratch = vec![0f32; len];
        for f in 0..self.values.len() / self.rows.max(1) {
            let block = &mut self.values[f * self.rows + start..f * self.rows + start + len];
            let mut l = 0;
            let mut r = n_left;
            for (i, &left) in goes_left.iter().enumerate() {
                let slot = if left { &mut l } else { &mut r };
                scratch[*slot] = block[i];
                *slot += 1;
            }
            block.copy_from_slice(&scratch);
        }
        let labels = &mut self.labels[start..start + len];
        let mut scratch_l = vec![0u8; len];
        let (mut l, mut r) = (0, n_left);
        for (i, &left) in goes_left.iter().enumerate() {
            let slot = if left { &mut l } else { &mut r };
            scratch_l[*slot] = labels[i];
            *slot += 1;
        }
        labels.copy_from_slice(&scratch_l);
        n_left
    }
}

/// The per-(leaf, feature) threshold substream. Retry `r` of a leaf takes the
/// `r`-th draw of the stream, so redraws stay shard-invariant too.
fn threshold_draw(master_seed: u64, leaf_uid: u64, feature: usize, draw: usize) -> f64 {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&master_seed.to_le_bytes());
    key[8..16].copy_from_slice(&leaf_uid.to_le_bytes());
    key[16..24].copy_from_slice(&(feature as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    let mut u = 0.0;
    for _ in 0..=draw {
        u = rng.gen_range(0.0..1.0);
    }
    u
}

fn gini(counts: &[u64]) -> f64 {
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

/// Majority class; ties resolve to the lowest class id.
fn majority(counts: &[u64]) -> u8 {
    let mut best = 0usize;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = c;
        }
    }
    best as u8
}

#[derive(Debug, Clone)]
struct LeafState {
    uid: u64,
    depth: usize,
    /// (start, len) per shard.
    segments: Vec<(usize, usize)>,
    class_counts: Vec<u64>,
    retries: usize,
    slot: usize,
}

enum ArenaNode {
    Pending,
    Split { feature: usize, threshold: f32, left: usize, right: usize },
    Leaf { class: u8, samples: u64 },
}

fn arena_to_tree(arena: &[ArenaNode], slot: usize) -> TreeNode {
    match &arena[slot] {
        ArenaNode::Leaf { class, samples } => TreeNode::Leaf { class: *class, samples: *samples },
        ArenaNode::Split { feature, threshold, left, right } => TreeNode::Split {
            feature: *feature,
            threshold: *threshold,
            left: Box::new(arena_to_tree(arena, *left)),
            right: Box::new(arena_to_tree(arena, *right)),
        },
        ArenaNode::Pending => unreachable!("unfinished arena node"),
    }
}

#[derive(Debug, Clone)]
pub struct DtreeOutput {
    pub tree: TreeNode,
    pub training_accuracy: f64,
    pub breakdown: CostBreakdown,
    /// Total kernel launches (three phases per growth round).
    pub launches: usize,
}

struct SplitChoice {
    feature: usize,
    threshold: f32,
    left_counts: Vec<u64>,
    /// Left size per shard (from the per-shard evaluation partials).
    left_per_shard: Vec<u64>,
}

/// Pick the best candidate by Gini gain; ties go to the lowest feature index.
/// Candidates with an empty side are invalid.
fn choose_split(
    parent_counts: &[u64],
    candidates: &[(usize, f32, Vec<Vec<u64>>)], // (feature, threshold, per-shard left counts)
    n_classes: usize,
) -> Option<SplitChoice> {
    let total: u64 = parent_counts.iter().sum();
    let parent_gini = gini(parent_counts);
    let mut best: Option<(f64, SplitChoice)> = None;
    for (feature, threshold, shard_counts) in candidates {
        let mut left = vec![0u64; n_classes];
        let mut left_per_shard = Vec::with_capacity(shard_counts.len());
        for sc in shard_counts {
            left_per_shard.push(sc.iter().sum());
            for (k, &v) in sc.iter().enumerate() {
                left[k] += v;
            }
        }
        let nl: u64 = left.iter().sum();
        if nl == 0 || nl == total {
            continue;
        }
        let right: Vec<u64> =
            parent_counts.iter().zip(&left).map(|(p, l)| p - l).collect();
        let gain = parent_gini
            - (nl as f64 / total as f64) * gini(&left)
            - ((total - nl) as f64 / total as f64) * gini(&right);
        let better = match &best {
            None => true,
            Some((g, c)) => gain > *g || (gain == *g && *feature < c.feature),
        };
        if better {
            best = Some((
                gain,
                SplitChoice {
                    feature: *feature,
                    threshold: *threshold,
                    left_counts: left,
                    left_per_shard,
                },
            ));
        }
    }
    best.map(|(_, c)| c)
}

fn align8(n: u64) -> u64 {
    n.div_ceil(8) * 8
}

pub fn train(
    ds: &Dataset,
    cfg: &DtreeConfig,
    sys: &mut PimSystem,
) -> Result<DtreeOutput, DtreeError> {
    let nf = ds.n_features;
    let n = ds.n_rows();
    if cfg.n_cores == 0 || cfg.n_cores > sys.n_cores() || n < cfg.n_cores {
        return Err(DtreeError::Precondition(format!(
            "core count {} invalid for {n} rows / {} system cores",
            cfg.n_cores,
            sys.n_cores()
        )));
    }
    if !ds.y.iter().all(|&y| y >= 0.0 && y == y.trunc() && y < 256.0) {
        return Err(DtreeError::Precondition("labels must be small non-negative integers".into()));
    }
    let n_classes = ds.y.iter().map(|&y| y as usize).max().unwrap() + 1;

    // Round-robin sharding into feature-major layout.
    let layout = ShardLayout::new(n, cfg.n_cores);
    let mut shards: Vec<Shard> = layout
        .rows_per_shard
        .iter()
        .map(|&rows| Shard { rows, values: vec![0f32; rows * nf], labels: vec![0u8; rows] })
        .collect();
    {
        let mut next = vec![0usize; cfg.n_cores];
        for i in 0..n {
            let c = i % cfg.n_cores;
            let s = &mut shards[c];
            let slot = next[c];
            for f in 0..nf {
                s.values[f * s.rows + slot] = ds.row(i)[f] as f32;
            }
            s.labels[slot] = ds.y[i] as u8;
            next[c] += 1;
        }
    }

    // Per-core bank layout: [values | labels | commands | results].
    let cmd_capacity: u64 = 32 * 1024;
    let offsets: Vec<(u64, u64, u64)> = shards
        .iter()
        .map(|s| {
            let labels_off = align8(s.rows as u64 * nf as u64 * 4);
            let cmd_off = labels_off + align8(s.rows as u64);
            (labels_off, cmd_off, cmd_off + cmd_capacity)
        })
        .collect();
    {
        let staged: Vec<(usize, u64, Vec<u8>)> = shards
            .iter()
            .enumerate()
            .flat_map(|(c, s)| {
                let vb: Vec<u8> = s.values.iter().flat_map(|v| v.to_le_bytes()).collect();
                vec![(c, 0u64, vb), (c, offsets[c].0, s.labels.clone())]
            })
            .collect();
        let writes: Vec<(usize, u64, &[u8])> =
            staged.iter().map(|(c, o, b)| (*c, *o, b.as_slice())).collect();
        sys.cpu_to_pim(&writes)?;
    }

    let cores: Vec<usize> = (0..cfg.n_cores).collect();
    let scratch = ScratchPlan { reserved_bytes: 0, per_thread_bytes: PER_THREAD_SCRATCH_BYTES };
    let cm = sys.cost_model.clone();
    let cmp = cm.instr_fp32_cmp as u64;
    let elem_overhead = cm.instr_overhead_per_element as u64;

    let mut arena: Vec<ArenaNode> = vec![ArenaNode::Pending];
    let mut next_uid = 1u64;
    let mut launches = 0usize;

    let mut root_counts = vec![0u64; n_classes];
    for &y in &ds.y {
        root_counts[y as usize] += 1;
    }
    let root = LeafState {
        uid: 0,
        depth: 0,
        segments: shards.iter().map(|s| (0usize, s.rows)).collect(),
        class_counts: root_counts,
        retries: 0,
        slot: 0,
    };

    // A leaf that is pure, too small, or at max depth turns terminal at once.
    let finalize = |leaf: &LeafState, arena: &mut Vec<ArenaNode>| {
        let samples: u64 = leaf.class_counts.iter().sum();
        arena[leaf.slot] =
            ArenaNode::Leaf { class: majority(&leaf.class_counts), samples };
    };
    let is_terminal = |leaf: &LeafState| {
        let samples: u64 = leaf.class_counts.iter().sum();
        leaf.depth >= cfg.max_depth
            || (samples as usize) < cfg.min_samples_split
            || leaf.class_counts.iter().filter(|&&c| c > 0).count() <= 1
    };

    let mut active: Vec<LeafState> = Vec::new();
    if is_terminal(&root) {
        finalize(&root, &mut arena);
    } else {
        active.push(root);
    }

    while !active.is_empty() {
        // ---- Phase 1: min/max scan over every active leaf.
        let minmax_cmds: Vec<TreeCommand> =
            active.iter().enumerate().map(|i| TreeCommand::MinMax { leaf: i.0 }).collect();
        write_commands(sys, &cores, &offsets, &minmax_cmds)?;
        let res_len = (active.len() * nf * 8) as u64;
        {
            let shards_ref = &shards;
            let active_ref = &active;
            sys.launch_kernel(&cores, cfg.threads, scratch, |ctx| {
                let c = ctx.core_id;
                let s = &shards_ref[c];
                let mut out = Vec::with_capacity(res_len as usize);
                let mut instr = 0u64;
                let mut bytes = 0u64;
                for leaf in active_ref {
                    let (start, len) = leaf.segments[c];
                    for f in 0..nf {
                        let mut lo = f32::INFINITY;
                        let mut hi = f32::NEG_INFINITY;
                        for i in start..start + len {
                            let v = s.value(f, i);
                            lo = lo.min(v);
                            hi = hi.max(v);
                        }
                        out.extend_from_slice(&lo.to_le_bytes());
                        out.extend_from_slice(&hi.to_le_bytes());
                    }
                    instr += len as u64 * nf as u64 * (2 * cmp + elem_overhead);
                    bytes += len as u64 * nf as u64 * 4;
                }
                ctx.instr(instr);
                ctx.dma(bytes);
                ctx.bank.write(offsets[c].2, &out).map_err(|_| "minmax result write")?;
                Ok(())
            })?;
            launches += 1;
        }
        let reads: Vec<(usize, u64, u64)> = cores.iter().map(|&c| (c, offsets[c].2, res_len)).collect();
        let (minmax_bufs, _) = sys.pim_to_cpu(&reads)?;
        // Reduce to global per-leaf per-feature (min, max). Empty segments
        // contribute infinities that vanish in the reduction.
        let mut ranges = vec![(f32::INFINITY, f32::NEG_INFINITY); active.len() * nf];
        for buf in &minmax_bufs {
            for (i, pair) in buf.chunks_exact(8).enumerate() {
                let lo = f32::from_le_bytes(pair[0..4].try_into().unwrap());
                let hi = f32::from_le_bytes(pair[4..8].try_into().unwrap());
                ranges[i].0 = ranges[i].0.min(lo);
                ranges[i].1 = ranges[i].1.max(hi);
            }
        }

        // ---- Phase 2: draw thresholds and evaluate candidates.
        let mut eval_cmds: Vec<TreeCommand> = Vec::new();
        // candidate -> (active leaf index, feature, threshold)
        let mut cand_of: Vec<(usize, usize, f32)> = Vec::new();
        for (li, leaf) in active.iter().enumerate() {
            for f in 0..nf {
                let (lo, hi) = ranges[li * nf + f];
                if lo < hi {
                    let u = threshold_draw(cfg.seed, leaf.uid, f, leaf.retries);
                    let thr = (lo as f64 + u * (hi as f64 - lo as f64)) as f32;
                    cand_of.push((li, f, thr));
                    eval_cmds.push(TreeCommand::SplitEvaluate { leaf: li, feature: f, threshold: thr });
                }
            }
        }
        // Per-shard left class counts per candidate.
        let mut shard_counts: Vec<Vec<Vec<u64>>> =
            vec![vec![vec![0u64; n_classes]; cfg.n_cores]; cand_of.len()];
        if !eval_cmds.is_empty() {
            write_commands(sys, &cores, &offsets, &eval_cmds)?;
            let eval_res_len = (cand_of.len() * n_classes * 8) as u64;
            let shards_ref = &shards;
            let active_ref = &active;
            let cand_ref = &cand_of;
            sys.launch_kernel(&cores, cfg.threads, scratch, |ctx| {
                let c = ctx.core_id;
                let s = &shards_ref[c];
                let mut out = Vec::with_capacity(eval_res_len as usize);
                let mut instr = 0u64;
                let mut bytes = 0u64;
                for &(li, f, thr) in cand_ref {
                    let (start, len) = active_ref[li].segments[c];
                    let mut counts = vec![0u64; n_classes];
                    for i in start..start + len {
                        if s.value(f, i) < thr {
                            counts[s.labels[i] as usize] += 1;
                        }
                    }
                    for v in &counts {
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                    instr += len as u64 * (cmp + cm.fxp.add32 as u64 + elem_overhead);
                    bytes += len as u64 * 5;
                }
                ctx.instr(instr);
                ctx.dma(bytes);
                ctx.bank.write(offsets[c].2, &out).map_err(|_| "eval result write")?;
                Ok(())
            })?;
            launches += 1;
            let reads: Vec<(usize, u64, u64)> =
                cores.iter().map(|&c| (c, offsets[c].2, eval_res_len)).collect();
            let (bufs, _) = sys.pim_to_cpu(&reads)?;
            for (c, buf) in bufs.iter().enumerate() {
                for (i, chunk) in buf.chunks_exact(8).enumerate() {
                    shard_counts[i / n_classes][c][i % n_classes] =
                        u64::from_le_bytes(chunk.try_into().unwrap());
                }
            }
        }

        // ---- Phase 3: choose and commit splits.
        let mut commits: Vec<(usize, SplitChoice)> = Vec::new(); // (active index, choice)
        let mut survivors: Vec<LeafState> = Vec::new();
        let mut commit_cmds: Vec<TreeCommand> = Vec::new();
        for (li, leaf) in active.iter().enumerate() {
            let candidates: Vec<(usize, f32, Vec<Vec<u64>>)> = cand_of
                .iter()
                .enumerate()
                .filter(|(_, &(l, _, _))| l == li)
                .map(|(ci, &(_, f, thr))| (f, thr, shard_counts[ci].clone()))
                .collect();
            match choose_split(&leaf.class_counts, &candidates, n_classes) {
                Some(choice) => {
                    commit_cmds.push(TreeCommand::SplitCommit {
                        leaf: li,
                        feature: choice.feature,
                        threshold: choice.threshold,
                    });
                    commits.push((li, choice));
                }
                None => {
                    let mut leaf = leaf.clone();
                    leaf.retries += 1;
                    if leaf.retries >= cfg.max_retries {
                        finalize(&leaf, &mut arena);
                    } else {
                        survivors.push(leaf);
                    }
                }
            }
        }
        if !commit_cmds.is_empty() {
            write_commands(sys, &cores, &offsets, &commit_cmds)?;
            let shards_mut = &mut shards;
            let active_ref = &active;
            let commits_ref = &commits;
            sys.launch_kernel(&cores, cfg.threads, scratch, |ctx| {
                let c = ctx.core_id;
                let s = &mut shards_mut[c];
                let mut instr = 0u64;
                let mut bytes = 0u64;
                for (li, choice) in commits_ref {
                    let (start, len) = active_ref[*li].segments[c];
                    let n_left = s.partition(start, len, choice.feature, choice.threshold);
                    if n_left as u64 != choice.left_per_shard[c] {
                        return Err("partition disagrees with evaluation counts".into());
                    }
                    instr += len as u64 * (cmp + nf as u64 * elem_overhead);
                    // Read and write back the whole leaf segment.
                    bytes += 2 * len as u64 * (nf as u64 * 4 + 1);
                }
                ctx.instr(instr);
                ctx.dma(bytes);
                Ok(())
            })?;
            launches += 1;
        }

        // Create children (uid order: leaves in this round's order, left
        // before right).
        for (li, choice) in &commits {
            let leaf = &active[*li];
            let left_slot = arena.len();
            arena.push(ArenaNode::Pending);
            let right_slot = arena.len();
            arena.push(ArenaNode::Pending);
            arena[leaf.slot] = ArenaNode::Split {
                feature: choice.feature,
                threshold: choice.threshold,
                left: left_slot,
                right: right_slot,
            };
            let left_segments: Vec<(usize, usize)> = leaf
                .segments
                .iter()
                .zip(&choice.left_per_shard)
                .map(|(&(start, _), &nl)| (start, nl as usize))
                .collect();
            let right_segments: Vec<(usize, usize)> = leaf
                .segments
                .iter()
                .zip(&choice.left_per_shard)
                .map(|(&(start, len), &nl)| (start + nl as usize, len - nl as usize))
                .collect();
            let right_counts: Vec<u64> = leaf
                .class_counts
                .iter()
                .zip(&choice.left_counts)
                .map(|(p, l)| p - l)
                .collect();
            let left = LeafState {
                uid: next_uid,
                depth: leaf.depth + 1,
                segments: left_segments,
                class_counts: choice.left_counts.clone(),
                retries: 0,
                slot: left_slot,
            };
            let right = LeafState {
                uid: next_uid + 1,
                depth: leaf.depth + 1,
                segments: right_segments,
                class_counts: right_counts,
                retries: 0,
                slot: right_slot,
            };
            next_uid += 2;
            for child in [left, right] {
                if is_terminal(&child) {
                    finalize(&child, &mut arena);
                } else {
                    survivors.push(child);
                }
            }
        }
        active = survivors;
    }

    let tree = arena_to_tree(&arena, 0);
    let training_accuracy = training_accuracy(&tree, ds);
    Ok(DtreeOutput { tree, training_accuracy, breakdown: sys.breakdown(), launches })
}

fn write_commands(
    sys: &mut PimSystem,
    cores: &[usize],
    offsets: &[(u64, u64, u64)],
    cmds: &[TreeCommand],
) -> Result<(), DtreeError> {
    let bytes: Vec<u8> = cmds.iter().flat_map(|c| c.to_bytes()).collect();
    let writes: Vec<(usize, u64, &[u8])> =
        cores.iter().map(|&c| (c, offsets[c].1, bytes.as_slice())).collect();
    sys.cpu_to_pim(&writes)?;
    Ok(())
}

/// Plain-float (f64) reference builder consuming the identical threshold
/// substreams: same uids, same draw indices, no sharding, no cost model.
pub fn train_reference(ds: &Dataset, cfg: &DtreeConfig) -> TreeNode {
    let nf = ds.n_features;
    let n = ds.n_rows();
    let n_classes = ds.y.iter().map(|&y| y as usize).max().unwrap() + 1;

    struct RefLeaf {
        uid: u64,
        depth: usize,
        rows: Vec<usize>,
        retries: usize,
        slot: usize,
    }
    let counts_of = |rows: &[usize], ds: &Dataset, n_classes: usize| {
        let mut c = vec![0u64; n_classes];
        for &r in rows {
            c[ds.y[r] as usize] += 1;
        }
        c
    };

    let mut arena: Vec<ArenaNode> = vec![ArenaNode::Pending];
    let mut next_uid = 1u64;
    let root = RefLeaf { uid: 0, depth: 0, rows: (0..n).collect(), retries: 0, slot: 0 };
    let mut active = vec![root];

    while !active.is_empty() {
        let mut survivors = Vec::new();
        for leaf in active {
            let counts = counts_of(&leaf.rows, ds, n_classes);
            let samples: u64 = counts.iter().sum();
            let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
            if leaf.depth >= cfg.max_depth || (samples as usize) < cfg.min_samples_split || pure {
                arena[leaf.slot] = ArenaNode::Leaf { class: majority(&counts), samples };
                continue;
            }
            let mut candidates: Vec<(usize, f32, Vec<Vec<u64>>)> = Vec::new();
            for f in 0..nf {
                let lo = leaf.rows.iter().map(|&r| ds.row(r)[f]).fold(f64::INFINITY, f64::min);
                let hi = leaf.rows.iter().map(|&r| ds.row(r)[f]).fold(f64::NEG_INFINITY, f64::max);
                if lo < hi {
                    let u = threshold_draw(cfg.seed, leaf.uid, f, leaf.retries);
                    let thr = lo + u * (hi - lo);
                    let mut left = vec![0u64; n_classes];
                    for &r in &leaf.rows {
                        if ds.row(r)[f] < thr {
                            left[ds.y[r] as usize] += 1;
                        }
                    }
                    candidates.push((f, thr as f32, vec![left]));
                }
            }
            match choose_split(&counts, &candidates, n_classes) {
                None => {
                    let retries = leaf.retries + 1;
                    if retries >= cfg.max_retries {
                        arena[leaf.slot] = ArenaNode::Leaf { class: majority(&counts), samples };
                    } else {
                        survivors.push(RefLeaf { retries, ..leaf });
                    }
                }
                Some(choice) => {
                    let thr = choice.threshold as f64;
                    let (l_rows, r_rows): (Vec<usize>, Vec<usize>) =
                        leaf.rows.iter().partition(|&&r| ds.row(r)[choice.feature] < thr);
                    let left_slot = arena.len();
                    arena.push(ArenaNode::Pending);
                    let right_slot = arena.len();
                    arena.push(ArenaNode::Pending);
                    arena[leaf.slot] = ArenaNode::Split {
                        feature: choice.feature,
                        threshold: choice.threshold,
                        left: left_slot,
                        right: right_slot,
                    };
                    survivors.push(RefLeaf {
                        uid: next_uid,
                        depth: leaf.depth + 1,
                        rows: l_rows,
                        retries: 0,
                        slot: left_slot,
                    });
                    survivors.push(RefLeaf {
                        uid: next_uid + 1,
                        depth: leaf.depth + 1,
                        rows: r_rows,
                        retries: 0,
                        slot: right_slot,
                    });
                    next_uid += 2;
                }
            }
        }
        active = survivors;
    }
    arena_to_tree(&arena, 0)
}
