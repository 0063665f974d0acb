//! Event trees, stagings and the staged tree model.
//!
//! A tree over `p` ordered categorical variables has inner vertices at depths
//! `0..p`; the vertex at depth `d` with prefix `(x_0, .., x_{d-1})` (levels in
//! tree order) has row-major index `sum_j x_j * prod_{j<l<d} |X_l|`, so the
//! first variable is the most significant digit.  Leaves live at depth `p`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Maximum number of levels per variable; allowed-edge sets are stored as `u64` masks.
pub const MAX_LEVELS: usize = 64;

/// Tolerance on the sum of a stage probability vector.
pub const SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variable {
    pub name: String,
    pub levels: Vec<String>,
}

impl Variable {
    pub fn new<S: Into<String>, L: Into<String>>(name: S, levels: impl IntoIterator<Item = L>) -> Self {
        Variable { name: name.into(), levels: levels.into_iter().map(Into::into).collect() }
    }

    pub fn cardinality(&self) -> usize {
        self.levels.len()
    }

    pub fn level_index(&self, level: &str) -> Option<usize> {
        self.levels.iter().position(|l| l == level)
    }
}

/// Ordered categorical variables plus the order placing each variable at a tree depth.
///
/// `order[d]` is the index (into `variables`) of the variable at depth `d`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    variables: Vec<Variable>,
    order: Vec<usize>,
}

impl Schema {
    pub fn new(variables: Vec<Variable>, order: Vec<usize>) -> Result<Self> {
        if variables.is_empty() {
            return Err(Error::Schema("schema has no variables".into()));
        }
        for (i, v) in variables.iter().enumerate() {
            if v.levels.len() < 2 {
                return Err(Error::Schema(format!("variable '{}' has fewer than 2 levels", v.name)));
            }
            if v.levels.len() > MAX_LEVELS {
                return Err(Error::Schema(format!("variable '{}' has more than {MAX_LEVELS} levels", v.name)));
            }
            if variables[..i].iter().any(|w| w.name == v.name) {
                return Err(Error::Schema(format!("duplicate variable name '{}'", v.name)));
            }
            for (k, l) in v.levels.iter().enumerate() {
                if v.levels[..k].contains(l) {
                    return Err(Error::Schema(format!("duplicate level '{l}' in variable '{}'", v.name)));
                }
            }
        }
        let p = variables.len();
        if order.len() != p {
            return Err(Error::Ordering(format!("order has {} entries for {p} variables", order.len())));
        }
        let mut seen = vec![false; p];
        for &v in &order {
            if v >= p || seen[v] {
                return Err(Error::Ordering("order is not a permutation of the variables".into()));
            }
            seen[v] = true;
        }
        Ok(Schema { variables, order })
    }

    /// Schema whose tree order is the listed order of the variables.
    pub fn in_listed_order(variables: Vec<Variable>) -> Result<Self> {
        let order = (0..variables.len()).collect();
        Schema::new(variables, order)
    }

    /// Same variables, tree order given by variable names.
    pub fn with_order_by_name<S: AsRef<str>>(&self, names: &[S]) -> Result<Self> {
        if names.len() != self.variables.len() {
            return Err(Error::Ordering(format!(
                "order names {} variables but the schema has {}",
                names.len(),
                self.variables.len()
            )));
        }
        let order = names.iter().map(|n| self.var_index(n.as_ref())).collect::<Result<Vec<_>>>()?;
        Schema::new(self.variables.clone(), order)
    }

    /// Same variables with a new order given by variable indices.
    pub fn with_order(&self, order: Vec<usize>) -> Result<Self> {
        Schema::new(self.variables.clone(), order)
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn variable(&self, var: usize) -> &Variable {
        &self.variables[var]
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn var_index(&self, name: &str) -> Result<usize> {
        self.variables
            .iter()
            .position(|v| v.name == name)
            .ok_or_else(|| Error::Schema(format!("unknown variable '{name}'")))
    }

    pub fn level_index(&self, var: usize, level: &str) -> Result<usize> {
        let v = self.variables.get(var).ok_or_else(|| Error::Schema(format!("unknown variable index {var}")))?;
        v.level_index(level).ok_or_else(|| Error::Schema(format!("unknown level '{level}' for variable '{}'", v.name)))
    }

    /// Depth at which `var` sits in the tree.
    pub fn depth_of(&self, var: usize) -> usize {
        self.order.iter().position(|&v| v == var).expect("variable index within schema")
    }

    /// Whether both schemas declare the same variables and levels (orders may differ).
    pub fn same_variables(&self, other: &Schema) -> bool {
        self.variables == other.variables
    }
}

/// `trigger` observed implies `consequence` (a later variable) is forced to one level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StructuralConstraint {
    /// (variable index, level index)
    pub trigger: (usize, usize),
    /// (variable index, forced level index)
    pub consequence: (usize, usize),
}

impl StructuralConstraint {
    pub fn new(trigger: (usize, usize), consequence: (usize, usize)) -> Self {
        StructuralConstraint { trigger, consequence }
    }

    pub fn from_names(schema: &Schema, trigger: (&str, &str), consequence: (&str, &str)) -> Result<Self> {
        let tv = schema.var_index(trigger.0)?;
        let tl = schema.level_index(tv, trigger.1)?;
        let cv = schema.var_index(consequence.0)?;
        let cl = schema.level_index(cv, consequence.1)?;
        Ok(StructuralConstraint::new((tv, tl), (cv, cl)))
    }
}

/// The uncolored tree skeleton over a schema, with structural zeros pruned.
#[derive(Debug, Clone, PartialEq)]
pub struct EventTree {
    schema: Schema,
    constraints: Vec<StructuralConstraint>,
    cards: Vec<usize>,
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    allowed: Vec<Vec<u64>>,
    reachable: Vec<Vec<bool>>,
}

impl EventTree {
    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn constraints(&self) -> &[StructuralConstraint] {
        &self.constraints
    }

    /// Number of variables (= number of inner depths).
    pub fn depth_count(&self) -> usize {
        self.cards.len()
    }

    /// Cardinality of the variable at `depth`.
    pub fn cardinality(&self, depth: usize) -> usize {
        self.cards[depth]
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cards
    }

    /// Variable index at `depth`.
    pub fn variable_at(&self, depth: usize) -> usize {
        self.schema.order[depth]
    }

    /// Vertex slots at `depth` for `depth` in `0..=p` (depth `p` are the leaves).
    pub fn size(&self, depth: usize) -> usize {
        self.sizes[depth]
    }

    /// Vertex slot counts for inner depths `0..p`.
    pub fn depth_sizes(&self) -> &[usize] {
        &self.sizes[..self.cards.len()]
    }

    /// Position of vertex `(depth, index)` in a global numbering of all slots.
    pub fn global_id(&self, depth: usize, index: usize) -> usize {
        self.offsets[depth] + index
    }

    /// Bitmask of allowed next levels at an inner vertex; 0 for pruned vertices.
    pub fn allowed(&self, depth: usize, index: usize) -> u64 {
        self.allowed[depth][index]
    }

    pub fn is_allowed(&self, depth: usize, index: usize, level: usize) -> bool {
        self.allowed[depth][index] & (1u64 << level) != 0
    }

    /// Whether the slot is reachable from the root through allowed edges.
    pub fn is_reachable(&self, depth: usize, index: usize) -> bool {
        self.reachable[depth][index]
    }

    pub fn reachable_vertices(&self, depth: usize) -> impl Iterator<Item = usize> + '_ {
        self.reachable[depth].iter().enumerate().filter_map(|(i, &r)| r.then_some(i))
    }

    pub fn child(&self, depth: usize, index: usize, level: usize) -> usize {
        index * self.cards[depth] + level
    }

    /// Level of the depth-`coord` variable in the prefix of vertex `(depth, index)`.
    pub fn coordinate(&self, depth: usize, index: usize, coord: usize) -> usize {
        debug_assert!(coord < depth);
        let stride: usize = self.cards[coord + 1..depth].iter().product();
        (index / stride) % self.cards[coord]
    }

    /// Index of the vertex obtained by replacing coordinate `coord` with `level`.
    pub fn with_coordinate(&self, depth: usize, index: usize, coord: usize, level: usize) -> usize {
        let stride: usize = self.cards[coord + 1..depth].iter().product();
        let current = (index / stride) % self.cards[coord];
        index - current * stride + level * stride
    }

    /// Row-major index of a prefix of level indices (given in tree order).
    pub fn vertex_index(&self, prefix: &[usize]) -> Result<usize> {
        if prefix.len() > self.cards.len() {
            return Err(Error::Bounds(format!(
                "prefix length {} exceeds tree depth {}",
                prefix.len(),
                self.cards.len()
            )));
        }
        let mut index = 0usize;
        for (d, &x) in prefix.iter().enumerate() {
            if x >= self.cards[d] {
                return Err(Error::Bounds(format!("level {x} at depth {d} exceeds cardinality {}", self.cards[d])));
            }
            index = index * self.cards[d] + x;
        }
        Ok(index)
    }

    /// Inverse of [`vertex_index`](Self::vertex_index).
    pub fn prefix_of(&self, depth: usize, index: usize) -> Result<Vec<usize>> {
        if depth > self.cards.len() || index >= self.sizes[depth] {
            return Err(Error::Bounds(format!("vertex ({depth}, {index}) does not exist")));
        }
        let mut prefix = vec![0; depth];
        let mut rest = index;
        for d in (0..depth).rev() {
            prefix[d] = rest % self.cards[d];
            rest /= self.cards[d];
        }
        Ok(prefix)
    }

    /// Reorders a tuple given per variable into tree order.
    pub fn to_tree_order(&self, row: &[usize]) -> Vec<usize> {
        self.schema.order.iter().map(|&v| row[v]).collect()
    }

    /// First constraint (if any) violated by a full tuple in tree order.
    pub fn violated_constraint(&self, path: &[usize]) -> Option<&StructuralConstraint> {
        self.constraints.iter().find(|c| {
            let t = self.schema.depth_of(c.trigger.0);
            let q = self.schema.depth_of(c.consequence.0);
            t < path.len() && q < path.len() && path[t] == c.trigger.1 && path[q] != c.consequence.1
        })
    }
}

/// Builds the tree skeleton, pruning edges excluded by structural constraints.
pub fn build_event_tree(schema: Schema, constraints: Vec<StructuralConstraint>) -> Result<EventTree> {
    let p = schema.len();
    for c in &constraints {
        for &(var, level) in [c.trigger, c.consequence].iter() {
            let v = schema
                .variables
                .get(var)
                .ok_or_else(|| Error::Schema(format!("constraint references unknown variable index {var}")))?;
            if level >= v.cardinality() {
                return Err(Error::Schema(format!(
                    "constraint references unknown level index {level} of '{}'",
                    v.name
                )));
            }
        }
        if schema.depth_of(c.trigger.0) >= schema.depth_of(c.consequence.0) {
            return Err(Error::Ordering(format!(
                "constraint consequence '{}' does not follow trigger '{}' in the order",
                schema.variables[c.consequence.0].name, schema.variables[c.trigger.0].name
            )));
        }
    }

    let cards: Vec<usize> = schema.order.iter().map(|&v| schema.variables[v].cardinality()).collect();
    let mut sizes = Vec::with_capacity(p + 1);
    sizes.push(1usize);
    for d in 0..p {
        let next = sizes[d].checked_mul(cards[d]).ok_or_else(|| Error::Schema("event tree too large".into()))?;
        sizes.push(next);
    }
    let mut offsets = Vec::with_capacity(p + 1);
    let mut acc = 0usize;
    for &s in &sizes {
        offsets.push(acc);
        acc += s;
    }

    // constraints grouped by the depth of their consequence: (trigger depth, trigger level, forced level)
    let mut by_depth: Vec<Vec<(usize, usize, usize)>> = vec![Vec::new(); p];
    for c in &constraints {
        by_depth[schema.depth_of(c.consequence.0)].push((schema.depth_of(c.trigger.0), c.trigger.1, c.consequence.1));
    }

    let mut allowed: Vec<Vec<u64>> = Vec::with_capacity(p);
    let mut reachable: Vec<Vec<bool>> = Vec::with_capacity(p + 1);
    reachable.push(vec![true]);
    for d in 0..p {
        let full = if cards[d] == 64 { u64::MAX } else { (1u64 << cards[d]) - 1 };
        let mut masks = vec![0u64; sizes[d]];
        for (idx, mask) in masks.iter_mut().enumerate() {
            if !reachable[d][idx] {
                continue;
            }
            let mut m = full;
            for &(t, tl, forced) in &by_depth[d] {
                let stride: usize = cards[t + 1..d].iter().product();
                if (idx / stride) % cards[t] == tl {
                    m &= 1u64 << forced;
                }
            }
            if m == 0 {
                return Err(Error::Constraint(format!(
                    "constraints leave no allowed value for '{}' at vertex {idx} of depth {d}",
                    schema.variables[schema.order[d]].name
                )));
            }
            *mask = m;
        }
        let mut next = vec![false; sizes[d + 1]];
        for (idx, &m) in masks.iter().enumerate() {
            if m == 0 {
                continue;
            }
            for l in 0..cards[d] {
                if m & (1u64 << l) != 0 {
                    next[idx * cards[d] + l] = true;
                }
            }
        }
        allowed.push(masks);
        reachable.push(next);
    }

    Ok(EventTree { schema, constraints, cards, sizes, offsets, allowed, reachable })
}

/// Per-depth partition of reachable vertices into stages.
///
/// Stage ids are the smallest member vertex index; pruned slots carry `None`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Staging {
    stages: Vec<Vec<Option<usize>>>,
}

impl Staging {
    /// Validates and canonicalizes an arbitrary labelling.
    ///
    /// `labels[d][v]` may use any integer label; vertices sharing a label share a stage.
    pub fn from_labels(tree: &EventTree, labels: Vec<Vec<Option<usize>>>) -> Result<Self> {
        let p = tree.depth_count();
        if labels.len() != p {
            return Err(Error::Constraint(format!("staging has {} depths, tree has {p}", labels.len())));
        }
        let mut stages = Vec::with_capacity(p);
        for (d, depth_labels) in labels.into_iter().enumerate() {
            if depth_labels.len() != tree.size(d) {
                return Err(Error::Constraint(format!(
                    "depth {d} staging has {} slots, tree has {}",
                    depth_labels.len(),
                    tree.size(d)
                )));
            }
            let mut canon: BTreeMap<usize, (usize, u64)> = BTreeMap::new();
            let mut out = vec![None; depth_labels.len()];
            for (v, label) in depth_labels.iter().enumerate() {
                match (label, tree.is_reachable(d, v)) {
                    (Some(_), false) => {
                        return Err(Error::Constraint(format!("pruned vertex {v} at depth {d} is staged")))
                    }
                    (None, true) => {
                        return Err(Error::Constraint(format!("reachable vertex {v} at depth {d} has no stage")))
                    }
                    (None, false) => {}
                    (Some(l), true) => {
                        let mask = tree.allowed(d, v);
                        let entry = canon.entry(*l).or_insert((v, mask));
                        if entry.1 != mask {
                            return Err(Error::Constraint(format!(
                                "vertices {} and {v} at depth {d} share a stage but differ in allowed edges",
                                entry.0
                            )));
                        }
                        out[v] = Some(entry.0);
                    }
                }
            }
            stages.push(out);
        }
        Ok(Staging { stages })
    }

    pub fn depth_count(&self) -> usize {
        self.stages.len()
    }

    pub fn stage_of(&self, depth: usize, vertex: usize) -> Option<usize> {
        self.stages[depth][vertex]
    }

    pub fn depth(&self, depth: usize) -> &[Option<usize>] {
        &self.stages[depth]
    }

    /// Sorted stage ids present at `depth`.
    pub fn stage_ids(&self, depth: usize) -> Vec<usize> {
        let mut ids: Vec<usize> = self.stages[depth].iter().flatten().copied().collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn members(&self, depth: usize, stage: usize) -> Vec<usize> {
        self.stages[depth].iter().enumerate().filter_map(|(v, s)| (*s == Some(stage)).then_some(v)).collect()
    }

    pub fn stage_count(&self, depth: usize) -> usize {
        self.stage_ids(depth).len()
    }

    pub fn total_stages(&self) -> usize {
        (0..self.stages.len()).map(|d| self.stage_count(d)).sum()
    }

    /// Whether `self` is obtained from `finer` by merging stages.
    pub fn is_coarsening_of(&self, finer: &Staging) -> bool {
        if self.stages.len() != finer.stages.len() {
            return false;
        }
        self.stages.iter().zip(&finer.stages).all(|(coarse, fine)| {
            let mut map: BTreeMap<usize, usize> = BTreeMap::new();
            coarse.iter().zip(fine).all(|(c, f)| match (c, f) {
                (None, None) => true,
                (Some(c), Some(f)) => *map.entry(*f).or_insert(*c) == *c,
                _ => false,
            })
        })
    }
}

/// Every reachable vertex is its own stage.
pub fn saturated_staging(tree: &EventTree) -> Staging {
    let labels = (0..tree.depth_count())
        .map(|d| (0..tree.size(d)).map(|v| tree.is_reachable(d, v).then_some(v)).collect())
        .collect();
    Staging::from_labels(tree, labels).expect("saturated staging is always valid")
}

/// One stage per depth; fails when a depth mixes allowed-edge sets.
pub fn full_staging(tree: &EventTree) -> Result<Staging> {
    let labels = (0..tree.depth_count())
        .map(|d| (0..tree.size(d)).map(|v| tree.is_reachable(d, v).then_some(0)).collect())
        .collect();
    Staging::from_labels(tree, labels)
}

/// Summary of a fit against data.
#[derive(Debug, Clone, PartialEq)]
pub struct FitMeta {
    pub n: u64,
    pub log_likelihood: f64,
    pub bic: f64,
    pub df: usize,
    /// `(depth, stage)` pairs that received no data.
    pub unsupported: Vec<(usize, usize)>,
}

/// An event tree with a staging and one probability vector per stage.
///
/// Stage vectors have one entry per level of the depth's variable; pruned
/// edges carry probability 0.
#[derive(Debug, Clone, PartialEq)]
pub struct StagedTreeModel {
    tree: EventTree,
    staging: Staging,
    params: Vec<BTreeMap<usize, Vec<f64>>>,
    fit_meta: Option<FitMeta>,
}

impl StagedTreeModel {
    pub fn new(
        tree: EventTree,
        staging: Staging,
        params: Vec<BTreeMap<usize, Vec<f64>>>,
        fit_meta: Option<FitMeta>,
    ) -> Result<Self> {
        let p = tree.depth_count();
        if staging.depth_count() != p || params.len() != p {
            return Err(Error::Invariant("staging/parameter depth count does not match tree".into()));
        }
        for d in 0..p {
            if staging.depth(d).len() != tree.size(d) {
                return Err(Error::Invariant(format!("staging slot count mismatch at depth {d}")));
            }
            let ids = staging.stage_ids(d);
            if params[d].len() != ids.len() || !ids.iter().all(|s| params[d].contains_key(s)) {
                return Err(Error::Invariant(format!("parameters at depth {d} do not match its stages")));
            }
            for (&s, probs) in &params[d] {
                let mask = tree.allowed(d, s);
                if !tree.is_reachable(d, s) || staging.stage_of(d, s) != Some(s) {
                    return Err(Error::Invariant(format!("parameters for unknown stage {s} at depth {d}")));
                }
                check_stage_vector(probs, mask, tree.cardinality(d))
                    .map_err(|m| Error::Invariant(format!("stage {s} at depth {d}: {m}")))?;
            }
        }
        Ok(StagedTreeModel { tree, staging, params, fit_meta })
    }

    pub fn tree(&self) -> &EventTree {
        &self.tree
    }

    pub fn schema(&self) -> &Schema {
        self.tree.schema()
    }

    pub fn staging(&self) -> &Staging {
        &self.staging
    }

    pub fn fit_meta(&self) -> Option<&FitMeta> {
        self.fit_meta.as_ref()
    }

    pub fn parameters(&self) -> &[BTreeMap<usize, Vec<f64>>] {
        &self.params
    }

    pub fn stage_probs(&self, depth: usize, stage: usize) -> &[f64] {
        &self.params[depth][&stage]
    }

    /// Conditional distribution of the next variable at a reachable vertex.
    pub fn vertex_probs(&self, depth: usize, vertex: usize) -> Option<&[f64]> {
        self.staging.stage_of(depth, vertex).map(|s| self.params[depth][&s].as_slice())
    }

    /// Product of edge probabilities along a full path given in tree order.
    pub fn path_probability(&self, path: &[usize]) -> f64 {
        let mut prob = 1.0;
        let mut idx = 0usize;
        for (d, &x) in path.iter().enumerate() {
            match self.vertex_probs(d, idx) {
                Some(theta) => prob *= theta[x],
                None => return 0.0,
            }
            idx = self.tree.child(d, idx, x);
        }
        prob
    }

    /// Joint probability of a full assignment given per variable.
    pub fn joint(&self, row: &[usize]) -> f64 {
        self.path_probability(&self.tree.to_tree_order(row))
    }
}

fn check_stage_vector(probs: &[f64], mask: u64, card: usize) -> std::result::Result<(), String> {
    if probs.len() != card {
        return Err(format!("vector has {} entries, expected {card}", probs.len()));
    }
    let mut sum = 0.0;
    for (l, &q) in probs.iter().enumerate() {
        if !q.is_finite() || q < 0.0 {
            return Err(format!("entry {l} is not a nonnegative number"));
        }
        if mask & (1u64 << l) == 0 && q != 0.0 {
            return Err(format!("positive probability on pruned edge {l}"));
        }
        sum += q;
    }
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(format!("probabilities sum to {sum}"));
    }
    if mask.count_ones() == 1 && probs[mask.trailing_zeros() as usize] != 1.0 {
        return Err("degenerate stage must put probability 1 on its only edge".into());
    }
    Ok(())
}
