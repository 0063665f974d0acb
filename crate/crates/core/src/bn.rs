//! Discrete Bayesian networks: DAGs, d-separation, order-constrained tabu
//! structure search, bootstrap arc strengths and exact conversion to staged trees.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use ordered_float::OrderedFloat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimation::{bic_value, estimate_vector, multinomial_loglik, uniform_vector, Dataset};
use crate::model::{build_event_tree, Schema, StagedTreeModel, Staging, SUM_TOLERANCE};
use crate::parallel;

/// Directed acyclic graph over variables `0..n` (schema indices).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dag {
    parents: Vec<BTreeSet<usize>>,
}

impl Dag {
    pub fn empty(n: usize) -> Self {
        Dag { parents: vec![BTreeSet::new(); n] }
    }

    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut dag = Dag::empty(n);
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::Schema(format!("edge {u} -> {v} references an unknown variable")));
            }
            if u == v {
                return Err(Error::Config(format!("self loop on variable {u}")));
            }
            dag.parents[v].insert(u);
        }
        if !dag.is_acyclic() {
            return Err(Error::Config("edge set contains a directed cycle".into()));
        }
        Ok(dag)
    }

    pub fn len(&self) -> usize {
        self.parents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parents.is_empty()
    }

    pub fn parents(&self, v: usize) -> &BTreeSet<usize> {
        &self.parents[v]
    }

    pub fn children(&self, v: usize) -> Vec<usize> {
        (0..self.len()).filter(|&c| self.parents[c].contains(&v)).collect()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.parents[v].contains(&u)
    }

    /// Edges `(parent, child)` sorted lexicographically.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<(usize, usize)> =
            self.parents.iter().enumerate().flat_map(|(v, ps)| ps.iter().map(move |&u| (u, v))).collect();
        e.sort_unstable();
        e
    }

    pub fn edge_count(&self) -> usize {
        self.parents.iter().map(BTreeSet::len).sum()
    }

    pub fn max_in_degree(&self) -> usize {
        self.parents.iter().map(BTreeSet::len).max().unwrap_or(0)
    }

    pub fn is_acyclic(&self) -> bool {
        let n = self.len();
        let mut indeg: Vec<usize> = self.parents.iter().map(BTreeSet::len).collect();
        let mut stack: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut seen = 0;
        while let Some(u) = stack.pop() {
            seen += 1;
            for c in self.children(u) {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    stack.push(c);
                }
            }
        }
        seen == n
    }

    /// Whether every edge points forward in `order` (a permutation of the variables).
    pub fn respects_order(&self, order: &[usize]) -> bool {
        let pos = positions(order);
        self.edges().iter().all(|&(u, v)| pos[u] < pos[v])
    }

    fn ancestors_of(&self, set: &BTreeSet<usize>) -> Vec<bool> {
        let mut anc = vec![false; self.len()];
        let mut stack: Vec<usize> = set.iter().copied().collect();
        while let Some(v) = stack.pop() {
            if anc[v] {
                continue;
            }
            anc[v] = true;
            stack.extend(self.parents[v].iter().copied());
        }
        anc
    }
}

fn positions(order: &[usize]) -> Vec<usize> {
    let mut pos = vec![0; order.len()];
    for (i, &v) in order.iter().enumerate() {
        pos[v] = i;
    }
    pos
}

/// d-separation of `a` and `b` given `z`, by reachability over (node, direction) states.
pub fn d_separated(dag: &Dag, a: usize, b: usize, z: &BTreeSet<usize>) -> Result<bool> {
    let n = dag.len();
    if a >= n || b >= n || z.iter().any(|&v| v >= n) {
        return Err(Error::Schema("d-separation query references an unknown variable".into()));
    }
    if a == b || z.contains(&a) || z.contains(&b) {
        return Err(Error::Config("d-separation needs distinct a, b outside the conditioning set".into()));
    }
    let anc = dag.ancestors_of(z);
    let children: Vec<Vec<usize>> = (0..n).map(|v| dag.children(v)).collect();
    // direction: true = arrived from a child (travelling up)
    let mut visited = vec![[false; 2]; n];
    let mut queue = VecDeque::from([(a, true)]);
    while let Some((y, up)) = queue.pop_front() {
        let slot = usize::from(up);
        if visited[y][slot] {
            continue;
        }
        visited[y][slot] = true;
        let observed = z.contains(&y);
        if !observed && y == b {
            return Ok(false);
        }
        if up {
            if !observed {
                queue.extend(dag.parents[y].iter().map(|&p| (p, true)));
                queue.extend(children[y].iter().map(|&c| (c, false)));
            }
        } else {
            if !observed {
                queue.extend(children[y].iter().map(|&c| (c, false)));
            }
            if anc[y] {
                queue.extend(dag.parents[y].iter().map(|&p| (p, true)));
            }
        }
    }
    Ok(true)
}

/// Conditional probability table of one variable.
///
/// Row `r` corresponds to the parent configuration whose levels, taken in
/// ascending parent index order, spell `r` in mixed radix (first parent most significant).
#[derive(Debug, Clone, PartialEq)]
pub struct Cpt {
    pub parents: Vec<usize>,
    pub rows: Vec<Vec<f64>>,
    pub unsupported: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnModel {
    schema: Schema,
    dag: Dag,
    cpts: Vec<Cpt>,
}

fn config_index(schema: &Schema, parents: &[usize], row: &[usize]) -> usize {
    parents.iter().fold(0, |acc, &p| acc * schema.variable(p).cardinality() + row[p])
}

fn config_count(schema: &Schema, parents: &[usize]) -> usize {
    parents.iter().map(|&p| schema.variable(p).cardinality()).product()
}

impl BnModel {
    pub fn new(schema: Schema, dag: Dag, cpts: Vec<Cpt>) -> Result<Self> {
        if dag.len() != schema.len() || cpts.len() != schema.len() {
            return Err(Error::Invariant("DAG/CPT count does not match the schema".into()));
        }
        for (v, cpt) in cpts.iter().enumerate() {
            let expected: Vec<usize> = dag.parents(v).iter().copied().collect();
            if cpt.parents != expected {
                return Err(Error::Invariant(format!("CPT parents of variable {v} differ from the DAG")));
            }
            let card = schema.variable(v).cardinality();
            if cpt.rows.len() != config_count(&schema, &cpt.parents) || cpt.unsupported.len() != cpt.rows.len() {
                return Err(Error::Invariant(format!("CPT of variable {v} has the wrong number of rows")));
            }
            for row in &cpt.rows {
                let sum: f64 = row.iter().sum();
                if row.len() != card || row.iter().any(|&q| q.is_nan() || q < 0.0) || (sum - 1.0).abs() > SUM_TOLERANCE
                {
                    return Err(Error::Invariant(format!("CPT row of variable {v} is not a distribution")));
                }
            }
        }
        Ok(BnModel { schema, dag, cpts })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn cpt(&self, v: usize) -> &Cpt {
        &self.cpts[v]
    }

    /// Conditional distribution of `v` given the full assignment `row`.
    pub fn conditional(&self, v: usize, row: &[usize]) -> &[f64] {
        let cpt = &self.cpts[v];
        &cpt.rows[config_index(&self.schema, &cpt.parents, row)]
    }
}

/// Joint probability as the product of CPT entries.
pub fn bn_joint(bn: &BnModel, assignment: &[usize]) -> Result<f64> {
    if assignment.len() != bn.schema.len() {
        return Err(Error::Config(format!("assignment has {} values, expected {}", assignment.len(), bn.schema.len())));
    }
    for (v, &x) in assignment.iter().enumerate() {
        if x >= bn.schema.variable(v).cardinality() {
            return Err(Error::Bounds(format!("level {x} out of range for variable {v}")));
        }
    }
    Ok((0..bn.schema.len()).map(|v| bn.conditional(v, assignment)[assignment[v]]).product())
}

fn family_counts(data: &Dataset, v: usize, parents: &[usize]) -> Vec<u64> {
    let schema = data.schema();
    let card = schema.variable(v).cardinality();
    let mut counts = vec![0u64; config_count(schema, parents) * card];
    for (row, w) in data.iter() {
        counts[config_index(schema, parents, row) * card + row[v]] += w;
    }
    counts
}

fn family_score(data: &Dataset, v: usize, parents: &[usize], alpha: f64) -> f64 {
    let card = data.schema().variable(v).cardinality();
    let counts = family_counts(data, v, parents);
    let full = if card == 64 { u64::MAX } else { (1u64 << card) - 1 };
    let ll: f64 =
        counts.chunks(card).map(|c| estimate_vector(c, full, alpha).map_or(0.0, |t| multinomial_loglik(c, &t))).sum();
    bic_value(ll, (counts.len() / card) * (card - 1), data.n())
}

/// Maximum-likelihood CPTs (plus optional pseudocount) for a fixed DAG.
pub fn fit_bn(schema: &Schema, dag: &Dag, data: &Dataset, alpha: f64) -> Result<BnModel> {
    if !schema.same_variables(data.schema()) {
        return Err(Error::Schema("dataset schema does not match the network schema".into()));
    }
    let cpts = (0..schema.len())
        .map(|v| {
            let parents: Vec<usize> = dag.parents(v).iter().copied().collect();
            let card = schema.variable(v).cardinality();
            let full = if card == 64 { u64::MAX } else { (1u64 << card) - 1 };
            let counts = family_counts(data, v, &parents);
            let mut unsupported = Vec::new();
            let rows = counts
                .chunks(card)
                .map(|c| match estimate_vector(c, full, alpha) {
                    Some(t) => {
                        unsupported.push(false);
                        t
                    }
                    None => {
                        unsupported.push(true);
                        uniform_vector(card, full)
                    }
                })
                .collect();
            Cpt { parents, rows, unsupported }
        })
        .collect();
    BnModel::new(schema.clone(), dag.clone(), cpts)
}

/// BIC of a network on data; CPT rows count `|X| - 1` free parameters each.
pub fn bn_bic(bn: &BnModel, data: &Dataset) -> Result<f64> {
    if !bn.schema.same_variables(data.schema()) {
        return Err(Error::Schema("dataset schema does not match the network schema".into()));
    }
    let mut ll = 0.0;
    for (row, w) in data.iter() {
        for v in 0..bn.schema.len() {
            let q = bn.conditional(v, row)[row[v]];
            if q == 0.0 {
                return Ok(f64::INFINITY);
            }
            ll += w as f64 * q.ln();
        }
    }
    let df: usize =
        (0..bn.schema.len()).map(|v| bn.cpts[v].rows.len() * (bn.schema.variable(v).cardinality() - 1)).sum();
    Ok(bic_value(ll, df, data.n()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HcConfig {
    /// Length of the list of forbidden inverse moves.
    pub tabu_len: usize,
    /// Consecutive non-improving moves allowed before stopping.
    pub patience: usize,
    pub max_parents: Option<usize>,
    pub max_iter: usize,
    pub alpha: f64,
}

impl Default for HcConfig {
    fn default() -> Self {
        HcConfig { tabu_len: 10, patience: 10, max_parents: None, max_iter: 10_000, alpha: 0.0 }
    }
}

#[derive(Debug, Clone)]
pub struct HcReport {
    pub bn: BnModel,
    pub bic: f64,
    /// Score of each new best network, starting from the empty graph.
    pub bic_trace: Vec<f64>,
}

fn validate_order(order: &[usize], p: usize) -> Result<Vec<usize>> {
    let mut seen = vec![false; p];
    if order.len() != p {
        return Err(Error::Ordering(format!("order has {} entries for {p} variables", order.len())));
    }
    for &v in order {
        if v >= p || seen[v] {
            return Err(Error::Ordering("order is not a permutation of the variables".into()));
        }
        seen[v] = true;
    }
    Ok(positions(order))
}

/// Tabu search over edge additions and deletions consistent with `order`.
///
/// Each step applies the best non-tabu toggle (ties broken by edge), even when
/// it worsens BIC; the best network seen is returned once `patience`
/// consecutive steps fail to improve it.
pub fn learn_dag_hc_report(
    data: &Dataset,
    order: &[usize],
    forbidden: &BTreeSet<(usize, usize)>,
    cfg: &HcConfig,
) -> Result<HcReport> {
    if data.n() == 0 {
        return Err(Error::EmptyData);
    }
    let p = data.schema().len();
    let pos = validate_order(order, p)?;
    let candidates: Vec<(usize, usize)> = (0..p)
        .flat_map(|u| (0..p).map(move |v| (u, v)))
        .filter(|&(u, v)| pos[u] < pos[v] && !forbidden.contains(&(u, v)))
        .collect();

    let mut cache: HashMap<(usize, Vec<usize>), f64> = HashMap::new();
    let mut score_of = |v: usize, parents: &BTreeSet<usize>| -> f64 {
        let ps: Vec<usize> = parents.iter().copied().collect();
        *cache.entry((v, ps)).or_insert_with_key(|(v, ps)| family_score(data, *v, ps, cfg.alpha))
    };

    let mut current = Dag::empty(p);
    let mut local: Vec<f64> = (0..p).map(|v| score_of(v, current.parents(v))).collect();
    let mut score: f64 = local.iter().sum();
    let mut best = current.clone();
    let mut best_score = score;
    let mut bic_trace = vec![score];
    let mut tabu: VecDeque<(usize, usize)> = VecDeque::new();
    let mut stale = 0;

    for _ in 0..cfg.max_iter {
        let mut choice: Option<(OrderedFloat<f64>, usize, usize, f64)> = None;
        for &(u, v) in &candidates {
            if tabu.contains(&(u, v)) {
                continue;
            }
            let mut ps = current.parents(v).clone();
            if !ps.remove(&u) {
                if cfg.max_parents.is_some_and(|m| ps.len() >= m) {
                    continue;
                }
                ps.insert(u);
            }
            let new_local = score_of(v, &ps);
            let key = (OrderedFloat(new_local - local[v]), u, v, new_local);
            if choice.is_none_or(|c| (key.0, key.1, key.2) < (c.0, c.1, c.2)) {
                choice = Some(key);
            }
        }
        let Some((delta, u, v, new_local)) = choice else { break };
        if !current.parents[v].remove(&u) {
            current.parents[v].insert(u);
        }
        local[v] = new_local;
        score += delta.0;
        tabu.push_back((u, v));
        if tabu.len() > cfg.tabu_len {
            tabu.pop_front();
        }
        if score < best_score - 1e-9 {
            best = current.clone();
            best_score = score;
            bic_trace.push(score);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    let schema = data.schema().with_order(order.to_vec())?;
    let bn = fit_bn(&schema, &best, &data.with_schema(schema.clone())?, cfg.alpha)?;
    Ok(HcReport { bn, bic: best_score, bic_trace })
}

pub fn learn_dag_hc(
    data: &Dataset,
    order: &[usize],
    forbidden: &BTreeSet<(usize, usize)>,
    cfg: &HcConfig,
) -> Result<BnModel> {
    learn_dag_hc_report(data, order, forbidden, cfg).map(|r| r.bn)
}

/// Frequency of each directed edge across bootstrap replications.
#[derive(Debug, Clone, PartialEq)]
pub struct ArcStrengthTable {
    n_vars: usize,
    replications: usize,
    freq: Vec<f64>,
}

impl ArcStrengthTable {
    pub fn new(n_vars: usize, replications: usize, freq: Vec<f64>) -> Result<Self> {
        if freq.len() != n_vars * n_vars || freq.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::Invariant("arc strengths must be an n x n table of frequencies".into()));
        }
        Ok(ArcStrengthTable { n_vars, replications, freq })
    }

    pub fn strength(&self, from: usize, to: usize) -> f64 {
        self.freq[from * self.n_vars + to]
    }

    pub fn replications(&self) -> usize {
        self.replications
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }
}

/// Nonparametric resample of `n` observations for replication `rep`.
pub fn bootstrap_resample(data: &Dataset, seed: u64, rep: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    let cumulative: Vec<u64> = data
        .weights()
        .iter()
        .scan(0u64, |acc, &w| {
            *acc += w;
            Some(*acc)
        })
        .collect();
    let mut counts = vec![0u64; cumulative.len()];
    for _ in 0..data.n() {
        let r = rng.gen_range(0..data.n());
        counts[cumulative.partition_point(|&c| c <= r)] += 1;
    }
    Dataset::new(data.schema().clone(), data.rows().to_vec(), counts)
}

pub fn bootstrap_arc_strength(
    data: &Dataset,
    order: &[usize],
    forbidden: &BTreeSet<(usize, usize)>,
    replications: usize,
    seed: u64,
    cfg: &HcConfig,
) -> Result<ArcStrengthTable> {
    if replications == 0 {
        return Err(Error::Config("bootstrap needs at least one replication".into()));
    }
    let p = data.schema().len();
    let dags: Vec<Result<Dag>> = parallel::install(|| {
        (0..replications)
            .into_par_iter()
            .map(|rep| {
                let sample = bootstrap_resample(data, seed, rep as u64)?;
                learn_dag_hc(&sample, order, forbidden, cfg).map(|bn| bn.dag().clone())
            })
            .collect()
    });
    let mut hits = vec![0usize; p * p];
    for dag in dags {
        for (u, v) in dag?.edges() {
            hits[u * p + v] += 1;
        }
    }
    let freq = hits.into_iter().map(|h| h as f64 / replications as f64).collect();
    ArcStrengthTable::new(p, replications, freq)
}

/// Edges whose strength strictly exceeds `threshold`.
pub fn average_network(strengths: &ArcStrengthTable, threshold: f64) -> Result<Dag> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Config(format!("threshold must lie in (0, 1), got {threshold}")));
    }
    let n = strengths.n_vars;
    let edges = (0..n)
        .flat_map(|u| (0..n).map(move |v| (u, v)))
        .filter(|&(u, v)| u != v && strengths.strength(u, v) > threshold);
    Dag::from_edges(n, edges)
}

/// Exact staged tree with the same joint distribution; `order` must be topological.
pub fn bn_to_staged_tree(bn: &BnModel, order: &[usize]) -> Result<StagedTreeModel> {
    let p = bn.schema.len();
    let pos = validate_order(order, p)?;
    if let Some((u, v)) = bn.dag.edges().into_iter().find(|&(u, v)| pos[u] >= pos[v]) {
        return Err(Error::NotTopological(format!("edge {u} -> {v} points backwards")));
    }
    let schema = bn.schema.with_order(order.to_vec())?;
    let tree = build_event_tree(schema.clone(), vec![])?;
    let mut labels = Vec::with_capacity(p);
    for d in 0..p {
        let v = order[d];
        let cpt = &bn.cpts[v];
        let depth_labels = (0..tree.size(d))
            .map(|idx| {
                let cfg = cpt
                    .parents
                    .iter()
                    .fold(0, |acc, &u| acc * schema.variable(u).cardinality() + tree.coordinate(d, idx, pos[u]));
                Some(cfg)
            })
            .collect();
        labels.push(depth_labels);
    }
    let staging = Staging::from_labels(&tree, labels.clone())?;
    let params = (0..p)
        .map(|d| {
            let rows = &bn.cpts[order[d]].rows;
            let mut map = BTreeMap::new();
            for (idx, cfg) in labels[d].iter().enumerate() {
                let s = staging.stage_of(d, idx).expect("product space is fully reachable");
                map.entry(s).or_insert_with(|| rows[cfg.expect("labelled")].clone());
            }
            map
        })
        .collect();
    StagedTreeModel::new(tree, staging, params, None)
}
