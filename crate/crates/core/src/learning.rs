//! Staging search: backward hill-climbing by pairwise stage merges, and the
//! k-parents variant that bounds the in-degree of the minimal DAG.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use itertools::Itertools;
use ordered_float::OrderedFloat;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimation::{bic_value, fit_from_counts, local_loglik, Dataset, FitConfig, VertexCounts};
use crate::model::{saturated_staging, EventTree, StagedTreeModel, Staging};
use crate::parallel;

/// A merge is applied only when its BIC change is below `-ACCEPT_SLACK`.
pub const ACCEPT_SLACK: f64 = 1e-12;

/// Above this many candidate parent sets per depth, k-parents search goes greedy.
pub const EXHAUSTIVE_LIMIT: usize = 10_000;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SearchConfig {
    pub max_iter: Option<usize>,
    pub alpha: f64,
    /// Maximum in-degree of the minimal DAG (k-parents search only).
    pub k: Option<usize>,
}

impl SearchConfig {
    fn fit_config(&self) -> FitConfig {
        FitConfig { alpha: self.alpha }
    }
}

/// One applied merge; `stage_a < stage_b` and `stage_b` is absorbed into `stage_a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeMove {
    pub depth: usize,
    pub stage_a: usize,
    pub stage_b: usize,
    pub delta_bic: f64,
}

#[derive(Debug, Clone)]
pub struct SearchReport {
    pub model: StagedTreeModel,
    pub initial: Staging,
    pub moves: Vec<MergeMove>,
    /// BIC after 0, 1, .. applied moves.
    pub bic_trace: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct KParentsReport {
    pub model: StagedTreeModel,
    /// Selected parent variables (schema indices) for each depth.
    pub parent_sets: Vec<Vec<usize>>,
}

/// BIC change of merging two count vectors over the same edges (`alpha = 0`).
pub fn merge_delta(counts_a: &[u64], counts_b: &[u64], n: u64) -> f64 {
    let mask = if counts_a.len() >= 64 { u64::MAX } else { (1u64 << counts_a.len()) - 1 };
    merge_delta_masked(counts_a, counts_b, mask, n, 0.0)
}

/// BIC change of merging two stages restricted to the allowed edges in `mask`.
pub fn merge_delta_masked(counts_a: &[u64], counts_b: &[u64], mask: u64, n: u64, alpha: f64) -> f64 {
    let merged: Vec<u64> = counts_a.iter().zip(counts_b).map(|(a, b)| a + b).collect();
    let gain =
        local_loglik(&merged, mask, alpha) - local_loglik(counts_a, mask, alpha) - local_loglik(counts_b, mask, alpha);
    let m = mask.count_ones() as f64;
    -2.0 * gain - (m - 1.0) * (n as f64).ln()
}

#[derive(Debug, Clone)]
struct Block {
    counts: Vec<u64>,
    mask: u64,
    members: Vec<usize>,
    loglik: f64,
}

impl Block {
    fn new(counts: Vec<u64>, mask: u64, members: Vec<usize>, alpha: f64) -> Self {
        let loglik = local_loglik(&counts, mask, alpha);
        Block { counts, mask, members, loglik }
    }

    fn score(&self, n: u64) -> f64 {
        bic_value(self.loglik, (self.mask.count_ones() as usize).saturating_sub(1), n)
    }
}

type Key = (OrderedFloat<f64>, usize, usize, usize);

/// Greedy pairwise merging over blocks at one or more depths.
struct Merger {
    n: u64,
    alpha: f64,
    blocks: Vec<BTreeMap<usize, Block>>,
    queue: BTreeSet<Key>,
    deltas: HashMap<(usize, usize, usize), f64>,
}

impl Merger {
    fn new(n: u64, alpha: f64, blocks: Vec<BTreeMap<usize, Block>>) -> Self {
        let mut pairs = Vec::new();
        for (d, depth_blocks) in blocks.iter().enumerate() {
            let ids: Vec<usize> = depth_blocks.keys().copied().collect();
            for (i, &a) in ids.iter().enumerate() {
                let ba = &depth_blocks[&a];
                if ba.mask.count_ones() < 2 {
                    continue;
                }
                for &b in &ids[i + 1..] {
                    if depth_blocks[&b].mask == ba.mask {
                        pairs.push((d, a, b));
                    }
                }
            }
        }
        let mut merger = Merger { n, alpha, blocks, queue: BTreeSet::new(), deltas: HashMap::new() };
        let values: Vec<f64> = {
            let m = &merger;
            parallel::install(|| pairs.par_iter().map(|&(d, a, b)| m.delta(d, a, b)).collect())
        };
        for ((d, a, b), delta) in pairs.into_iter().zip(values) {
            merger.insert(d, a, b, delta);
        }
        merger
    }

    fn delta(&self, depth: usize, a: usize, b: usize) -> f64 {
        let ba = &self.blocks[depth][&a];
        let bb = &self.blocks[depth][&b];
        let merged: Vec<u64> = ba.counts.iter().zip(&bb.counts).map(|(x, y)| x + y).collect();
        let gain = local_loglik(&merged, ba.mask, self.alpha) - ba.loglik - bb.loglik;
        -2.0 * gain - (ba.mask.count_ones() as f64 - 1.0) * (self.n as f64).ln()
    }

    fn insert(&mut self, depth: usize, a: usize, b: usize, delta: f64) {
        self.queue.insert((OrderedFloat(delta), depth, a, b));
        self.deltas.insert((depth, a, b), delta);
    }

    fn remove(&mut self, depth: usize, a: usize, b: usize) {
        let key = (depth, a.min(b), a.max(b));
        if let Some(delta) = self.deltas.remove(&key) {
            self.queue.remove(&(OrderedFloat(delta), key.0, key.1, key.2));
        }
    }

    /// Applies the best improving merge, if any.
    fn step(&mut self) -> Option<MergeMove> {
        let &(delta, depth, a, b) = self.queue.first()?;
        if delta.0 >= -ACCEPT_SLACK {
            return None;
        }
        let others: Vec<usize> = self.blocks[depth].keys().copied().filter(|&c| c != a && c != b).collect();
        self.remove(depth, a, b);
        for &c in &others {
            self.remove(depth, a, c);
            self.remove(depth, b, c);
        }
        let absorbed = self.blocks[depth].remove(&b).expect("merge partner exists");
        let alpha = self.alpha;
        let target = self.blocks[depth].get_mut(&a).expect("merge target exists");
        for (x, y) in target.counts.iter_mut().zip(&absorbed.counts) {
            *x += y;
        }
        target.members.extend(absorbed.members);
        target.members.sort_unstable();
        target.loglik = local_loglik(&target.counts, target.mask, alpha);
        let mask = target.mask;
        for c in others {
            if self.blocks[depth][&c].mask == mask {
                let (lo, hi) = (a.min(c), a.max(c));
                let delta = self.delta(depth, lo, hi);
                self.insert(depth, lo, hi, delta);
            }
        }
        Some(MergeMove { depth, stage_a: a, stage_b: b, delta_bic: delta.0 })
    }

    fn depth_score(&self, depth: usize) -> f64 {
        self.blocks[depth].values().map(|b| b.score(self.n)).sum()
    }
}

fn blocks_from_staging(
    tree: &EventTree,
    staging: &Staging,
    counts: &VertexCounts,
    alpha: f64,
) -> Vec<BTreeMap<usize, Block>> {
    (0..tree.depth_count())
        .map(|d| {
            let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for (v, s) in staging.depth(d).iter().enumerate() {
                if let Some(s) = s {
                    members.entry(*s).or_default().push(v);
                }
            }
            members.into_iter().map(|(s, m)| (s, block_of(tree, counts, d, m, alpha))).collect()
        })
        .collect()
}

fn block_of(tree: &EventTree, counts: &VertexCounts, depth: usize, members: Vec<usize>, alpha: f64) -> Block {
    let mut acc = vec![0u64; tree.cardinality(depth)];
    for &v in &members {
        for (a, c) in acc.iter_mut().zip(counts.vertex(depth, v)) {
            *a += c;
        }
    }
    Block::new(acc, tree.allowed(depth, members[0]), members, alpha)
}

fn staging_from_blocks(tree: &EventTree, blocks: &[BTreeMap<usize, Block>]) -> Result<Staging> {
    let labels = blocks
        .iter()
        .enumerate()
        .map(|(d, depth_blocks)| {
            let mut labels = vec![None; tree.size(d)];
            for (&id, block) in depth_blocks {
                for &v in &block.members {
                    labels[v] = Some(id);
                }
            }
            labels
        })
        .collect();
    Staging::from_labels(tree, labels)
}

fn check_data(data: &Dataset) -> Result<()> {
    if data.n() == 0 {
        return Err(Error::EmptyData);
    }
    Ok(())
}

/// Backward hill-climbing from the saturated staging with the full audit trail.
pub fn bhc_search(tree: &EventTree, data: &Dataset, cfg: &SearchConfig) -> Result<SearchReport> {
    check_data(data)?;
    cfg.fit_config().validate()?;
    let counts = VertexCounts::new(tree, data)?;
    let initial = saturated_staging(tree);
    let mut merger = Merger::new(data.n(), cfg.alpha, blocks_from_staging(tree, &initial, &counts, cfg.alpha));

    let start: f64 = (0..tree.depth_count()).map(|d| merger.depth_score(d)).sum();
    let mut bic_trace = vec![start];
    let mut moves = Vec::new();
    while cfg.max_iter.is_none_or(|m| moves.len() < m) {
        match merger.step() {
            Some(mv) => {
                bic_trace.push(bic_trace.last().copied().unwrap_or(start) + mv.delta_bic);
                moves.push(mv);
            }
            None => break,
        }
    }
    let staging = staging_from_blocks(tree, &merger.blocks)?;
    let model = fit_from_counts(tree, &staging, &counts.stage_table(&staging), &cfg.fit_config())?;
    Ok(SearchReport { model, initial, moves, bic_trace })
}

/// Backward hill-climbing staging search minimizing BIC.
pub fn learn_bhc(tree: &EventTree, data: &Dataset, cfg: &SearchConfig) -> Result<StagedTreeModel> {
    bhc_search(tree, data, cfg).map(|r| r.model)
}

/// Replays a move log on a staging (used to audit search output).
pub fn replay_moves(tree: &EventTree, initial: &Staging, moves: &[MergeMove]) -> Result<Staging> {
    let mut labels: Vec<Vec<Option<usize>>> = (0..tree.depth_count()).map(|d| initial.depth(d).to_vec()).collect();
    for mv in moves {
        let depth = labels
            .get_mut(mv.depth)
            .ok_or_else(|| Error::Bounds(format!("move at depth {} outside the tree", mv.depth)))?;
        if !depth.contains(&Some(mv.stage_a)) || !depth.contains(&Some(mv.stage_b)) {
            return Err(Error::Constraint(format!(
                "move merges missing stage {} or {} at depth {}",
                mv.stage_a, mv.stage_b, mv.depth
            )));
        }
        for s in depth.iter_mut() {
            if *s == Some(mv.stage_b) {
                *s = Some(mv.stage_a);
            }
        }
    }
    Staging::from_labels(tree, labels)
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: usize = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

/// Score and final blocks of the block-restricted search at one depth for parent depths `parents`.
fn evaluate_parent_set(
    tree: &EventTree,
    counts: &VertexCounts,
    depth: usize,
    parents: &[usize],
    n: u64,
    alpha: f64,
) -> (f64, BTreeMap<usize, Block>) {
    let mut groups: BTreeMap<(Vec<usize>, u64), Vec<usize>> = BTreeMap::new();
    for v in tree.reachable_vertices(depth) {
        let key: Vec<usize> = parents.iter().map(|&j| tree.coordinate(depth, v, j)).collect();
        groups.entry((key, tree.allowed(depth, v))).or_default().push(v);
    }
    let depth_blocks: BTreeMap<usize, Block> =
        groups.into_values().map(|members| (members[0], block_of(tree, counts, depth, members, alpha))).collect();
    let mut blocks = vec![BTreeMap::new(); depth];
    blocks.push(depth_blocks);
    let mut merger = Merger::new(n, alpha, blocks);
    while merger.step().is_some() {}
    let score = merger.depth_score(depth);
    (score, merger.blocks.pop().expect("searched depth present"))
}

/// Staging search whose minimal DAG has in-degree at most `cfg.k`.
///
/// Each depth picks the parent set (among preceding variables) whose
/// context blocks, merged greedily, give the lowest BIC contribution.
/// Trigger variables of structural constraints on a depth are always parents.
pub fn kparents_search(tree: &EventTree, data: &Dataset, cfg: &SearchConfig) -> Result<KParentsReport> {
    check_data(data)?;
    cfg.fit_config().validate()?;
    let p = tree.depth_count();
    let k = cfg.k.ok_or_else(|| Error::Config("k-parents search requires k".into()))?;
    if k + 1 > p {
        return Err(Error::Config(format!("k = {k} must be at most p - 1 = {}", p - 1)));
    }
    let counts = VertexCounts::new(tree, data)?;
    let n = data.n();
    let schema = tree.schema();

    let mut final_blocks: Vec<BTreeMap<usize, Block>> = Vec::with_capacity(p);
    let mut parent_sets = Vec::with_capacity(p);
    final_blocks.push(BTreeMap::from([(0usize, block_of(tree, &counts, 0, vec![0], cfg.alpha))]));
    parent_sets.push(Vec::new());

    for d in 1..p {
        let var = tree.variable_at(d);
        let forced: Vec<usize> = tree
            .constraints()
            .iter()
            .filter(|c| c.consequence.0 == var)
            .map(|c| schema.depth_of(c.trigger.0))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if forced.len() > k {
            return Err(Error::Config(format!(
                "'{}' is constrained by {} earlier variables, more than k = {k}",
                schema.variable(var).name,
                forced.len()
            )));
        }
        let free: Vec<usize> = (0..d).filter(|j| !forced.contains(j)).collect();
        let extra = k - forced.len();
        let candidate_count: usize = (0..=extra.min(free.len())).map(|j| binomial(free.len(), j)).sum();

        let with_forced = |chosen: &[usize]| -> Vec<usize> {
            let mut s: Vec<usize> = forced.iter().chain(chosen).copied().collect();
            s.sort_unstable();
            s
        };

        let (best_set, best_blocks) = if candidate_count <= EXHAUSTIVE_LIMIT {
            let sets: Vec<Vec<usize>> = (0..=extra.min(free.len()))
                .flat_map(|size| free.iter().copied().combinations(size))
                .map(|c| with_forced(&c))
                .collect();
            let scored: Vec<(f64, BTreeMap<usize, Block>)> = parallel::install(|| {
                sets.par_iter().map(|s| evaluate_parent_set(tree, &counts, d, s, n, cfg.alpha)).collect()
            });
            let mut best = 0;
            for (i, (score, _)) in scored.iter().enumerate() {
                if *score < scored[best].0 - ACCEPT_SLACK {
                    best = i;
                }
            }
            let (_, blocks) = scored.into_iter().nth(best).expect("at least the empty set");
            (sets[best].clone(), blocks)
        } else {
            let mut chosen: Vec<usize> = Vec::new();
            let mut current = evaluate_parent_set(tree, &counts, d, &with_forced(&chosen), n, cfg.alpha);
            while chosen.len() < extra {
                let options: Vec<usize> = free.iter().copied().filter(|j| !chosen.contains(j)).collect();
                let scored: Vec<(f64, BTreeMap<usize, Block>)> = parallel::install(|| {
                    options
                        .par_iter()
                        .map(|&j| {
                            let mut trial = chosen.clone();
                            trial.push(j);
                            evaluate_parent_set(tree, &counts, d, &with_forced(&trial), n, cfg.alpha)
                        })
                        .collect()
                });
                let Some((i, _)) =
                    scored.iter().enumerate().min_by(|x, y| x.1 .0.total_cmp(&y.1 .0).then(x.0.cmp(&y.0)))
                else {
                    break;
                };
                if scored[i].0 < current.0 - ACCEPT_SLACK {
                    chosen.push(options[i]);
                    current = scored.into_iter().nth(i).expect("index in range");
                } else {
                    break;
                }
            }
            (with_forced(&chosen), current.1)
        };
        parent_sets.push(best_set.iter().map(|&j| tree.variable_at(j)).collect());
        final_blocks.push(best_blocks);
    }

    let staging = staging_from_blocks(tree, &final_blocks)?;
    let model = fit_from_counts(tree, &staging, &counts.stage_table(&staging), &cfg.fit_config())?;
    Ok(KParentsReport { model, parent_sets })
}

pub fn learn_kparents(tree: &EventTree, data: &Dataset, cfg: &SearchConfig) -> Result<StagedTreeModel> {
    kparents_search(tree, data, cfg).map(|r| r.model)
}
