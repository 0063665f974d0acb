//! Independent oracles and random corpora shared by the integration tests.
//!
//! Everything here recomputes quantities from first principles (explicit
//! enumeration, direct counting) rather than calling the library routine under test.
#![allow(dead_code)]

pub mod dot;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stgt::bn::{BnModel, Cpt, Dag};
use stgt::estimation::Dataset;
use stgt::model::{build_event_tree, EventTree, Schema, StagedTreeModel, Staging, StructuralConstraint, Variable};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Row-major index of a tree-order prefix.
pub fn prefix_index(cards: &[usize], prefix: &[usize]) -> usize {
    prefix.iter().zip(cards).fold(0, |acc, (&x, &c)| acc * c + x)
}

/// All assignments of the given cardinalities, first coordinate most significant.
pub fn all_assignments(cards: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for &c in cards {
        out = out.into_iter().flat_map(|p: Vec<usize>| (0..c).map(move |l| [p.clone(), vec![l]].concat())).collect();
    }
    out
}

pub fn tree_cards(tree: &EventTree) -> Vec<usize> {
    (0..tree.depth_count()).map(|d| tree.cardinality(d)).collect()
}

/// Whether a tree-order path violates any constraint, checked directly.
pub fn violates(tree: &EventTree, path: &[usize]) -> bool {
    let schema = tree.schema();
    tree.constraints().iter().any(|c| {
        let (tv, tl) = c.trigger;
        let (cv, cl) = c.consequence;
        path[schema.depth_of(tv)] == tl && path[schema.depth_of(cv)] != cl
    })
}

/// Random event tree: 2..=max_vars variables, 2..=max_card levels, random order,
/// and sometimes one structural constraint.
pub fn random_tree(rng: &mut ChaCha8Rng, max_vars: usize, max_card: usize, constrained: bool) -> EventTree {
    loop {
        let p = rng.gen_range(2..=max_vars);
        let vars: Vec<Variable> = (0..p)
            .map(|i| {
                let c = rng.gen_range(2..=max_card);
                Variable::new(format!("X{i}"), (0..c).map(|l| format!("l{l}")))
            })
            .collect();
        let mut order: Vec<usize> = (0..p).collect();
        order.shuffle(rng);
        let schema = Schema::new(vars, order.clone()).unwrap();
        let mut constraints = Vec::new();
        if constrained && rng.gen_bool(0.5) {
            let i = rng.gen_range(0..p - 1);
            let j = rng.gen_range(i + 1..p);
            let (tv, cv) = (order[i], order[j]);
            let tl = rng.gen_range(0..schema.variable(tv).cardinality());
            let cl = rng.gen_range(0..schema.variable(cv).cardinality());
            constraints.push(StructuralConstraint::new((tv, tl), (cv, cl)));
        }
        if let Ok(tree) = build_event_tree(schema, constraints) {
            return tree;
        }
    }
}

/// Random staging: reachable vertices draw one of `max_labels` labels, kept
/// apart when their allowed masks differ.
pub fn random_staging(rng: &mut ChaCha8Rng, tree: &EventTree, max_labels: usize) -> Staging {
    let labels = (0..tree.depth_count())
        .map(|d| {
            let mut ids: BTreeMap<(u64, usize), usize> = BTreeMap::new();
            (0..tree.size(d))
                .map(|v| {
                    if !tree.is_reachable(d, v) {
                        return None;
                    }
                    let key = (tree.allowed(d, v), rng.gen_range(0..max_labels));
                    let next = ids.len();
                    Some(*ids.entry(key).or_insert(next))
                })
                .collect()
        })
        .collect();
    Staging::from_labels(tree, labels).unwrap()
}

fn random_vector(rng: &mut ChaCha8Rng, card: usize, mask: u64, zero_prob: f64) -> Vec<f64> {
    let allowed: Vec<usize> = (0..card).filter(|&l| mask & (1 << l) != 0).collect();
    if allowed.len() == 1 {
        let mut v = vec![0.0; card];
        v[allowed[0]] = 1.0;
        return v;
    }
    let mut w: Vec<f64> =
        (0..card).map(|l| if mask & (1 << l) == 0 { 0.0 } else { rng.gen_range(0.05..1.0) }).collect();
    if rng.gen_bool(zero_prob) {
        // exact zero on one allowed edge, keeping at least one positive
        w[allowed[rng.gen_range(0..allowed.len())]] = 0.0;
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    let err = 1.0 - w.iter().sum::<f64>();
    let top = (0..card).max_by(|&a, &b| w[a].total_cmp(&w[b])).unwrap();
    w[top] += err;
    w
}

/// Random stage parameters on a given staging; `zero_prob` plants exact zeros.
pub fn random_model(rng: &mut ChaCha8Rng, tree: &EventTree, staging: &Staging, zero_prob: f64) -> StagedTreeModel {
    let params = (0..tree.depth_count())
        .map(|d| {
            staging
                .stage_ids(d)
                .into_iter()
                .map(|s| (s, random_vector(rng, tree.cardinality(d), tree.allowed(d, s), zero_prob)))
                .collect()
        })
        .collect();
    StagedTreeModel::new(tree.clone(), staging.clone(), params, None).unwrap()
}

/// Rows drawn uniformly from the constraint-consistent assignments, in variable order.
pub fn random_dataset(rng: &mut ChaCha8Rng, tree: &EventTree, n: usize) -> Dataset {
    let schema = tree.schema().clone();
    let cards: Vec<usize> = schema.variables().iter().map(|v| v.cardinality()).collect();
    let mut rows = Vec::with_capacity(n);
    // skew each variable so that stages actually differ
    let skew: Vec<f64> = (0..cards.len()).map(|_| rng.gen_range(0.2..0.8)).collect();
    while rows.len() < n {
        let row: Vec<usize> =
            cards.iter().zip(&skew).map(|(&c, &s)| if rng.gen_bool(s) { 0 } else { rng.gen_range(0..c) }).collect();
        let path: Vec<usize> = schema.order().iter().map(|&v| row[v]).collect();
        if !violates(tree, &path) {
            rows.push(row);
        }
    }
    Dataset::from_rows(schema, rows).unwrap()
}

/// Stage frequencies by direct counting over the rows.
pub fn mle_oracle(tree: &EventTree, staging: &Staging, data: &Dataset) -> Vec<BTreeMap<usize, Vec<f64>>> {
    let schema = tree.schema();
    let cards = tree_cards(tree);
    let mut counts: Vec<BTreeMap<usize, Vec<u64>>> = vec![BTreeMap::new(); cards.len()];
    for (row, w) in data.iter() {
        let path: Vec<usize> = schema.order().iter().map(|&v| row[v]).collect();
        for d in 0..cards.len() {
            let v = prefix_index(&cards[..d], &path[..d]);
            let s = staging.stage_of(d, v).expect("observed vertices are reachable");
            counts[d].entry(s).or_insert_with(|| vec![0; cards[d]])[path[d]] += w;
        }
    }
    counts
        .into_iter()
        .map(|depth| {
            depth
                .into_iter()
                .map(|(s, c)| {
                    let total: u64 = c.iter().sum();
                    (s, c.iter().map(|&x| x as f64 / total as f64).collect())
                })
                .collect()
        })
        .collect()
}

/// Empirical multinomial log-likelihood over complete tuples.
pub fn empirical_loglik(data: &Dataset) -> f64 {
    let n = data.n() as f64;
    data.iter().map(|(_, w)| w as f64 * (w as f64 / n).ln()).sum()
}

/// Path probability as a product of stage parameters, indexing vertices directly.
pub fn path_prob_oracle(model: &StagedTreeModel, path: &[usize]) -> f64 {
    let tree = model.tree();
    let cards = tree_cards(tree);
    let mut p = 1.0;
    for d in 0..cards.len() {
        let v = prefix_index(&cards[..d], &path[..d]);
        match model.staging().stage_of(d, v) {
            Some(s) => p *= model.stage_probs(d, s)[path[d]],
            None => return 0.0,
        }
        if p == 0.0 {
            return 0.0;
        }
    }
    p
}

/// `P(target | evidence)` by summing over every leaf; `None` when the evidence has probability 0.
pub fn query_oracle(model: &StagedTreeModel, target: &[(usize, usize)], evidence: &[(usize, usize)]) -> Option<f64> {
    let schema = model.schema();
    let cards = tree_cards(model.tree());
    let (mut num, mut den) = (0.0, 0.0);
    for path in all_assignments(&cards) {
        let at = |v: usize| path[schema.depth_of(v)];
        if evidence.iter().any(|&(v, l)| at(v) != l) {
            continue;
        }
        let p = path_prob_oracle(model, &path);
        den += p;
        if target.iter().all(|&(v, l)| at(v) == l) {
            num += p;
        }
    }
    (den > 0.0).then(|| num / den)
}

/// Parents by brute force over vertex pairs that differ in exactly one coordinate.
pub fn toggle_oracle(tree: &EventTree, staging: &Staging) -> Vec<BTreeSet<usize>> {
    let schema = tree.schema();
    let cards = tree_cards(tree);
    let mut parents = vec![BTreeSet::new(); schema.len()];
    for d in 1..cards.len() {
        let prefixes = all_assignments(&cards[..d]);
        for a in &prefixes {
            for b in &prefixes {
                let diff: Vec<usize> = (0..d).filter(|&j| a[j] != b[j]).collect();
                if diff.len() != 1 {
                    continue;
                }
                let (va, vb) = (prefix_index(&cards[..d], a), prefix_index(&cards[..d], b));
                if !tree.is_reachable(d, va) || !tree.is_reachable(d, vb) {
                    continue;
                }
                if staging.stage_of(d, va) != staging.stage_of(d, vb) {
                    parents[tree.variable_at(d)].insert(tree.variable_at(diff[0]));
                }
            }
        }
    }
    parents
}

/// Random DAG on `n` nodes with edge probability `density`, consistent with a random order.
pub fn random_dag(rng: &mut ChaCha8Rng, n: usize, density: f64) -> (Dag, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(density) {
                edges.push((order[i], order[j]));
            }
        }
    }
    (Dag::from_edges(n, edges).unwrap(), order)
}

/// Random binary network with strictly positive CPTs.
pub fn random_binary_bn(rng: &mut ChaCha8Rng, p: usize) -> (BnModel, Vec<usize>) {
    let (dag, order) = random_dag(rng, p, 0.4);
    let vars = (0..p).map(|i| Variable::new(format!("V{i}"), ["0", "1"])).collect();
    let schema = Schema::new(vars, order.clone()).unwrap();
    let cpts = (0..p)
        .map(|v| {
            let parents: Vec<usize> = dag.parents(v).iter().copied().collect();
            let rows = (0..1usize << parents.len())
                .map(|_| {
                    let q = rng.gen_range(0.05..0.95);
                    vec![q, 1.0 - q]
                })
                .collect::<Vec<_>>();
            Cpt { parents, unsupported: vec![false; rows.len()], rows }
        })
        .collect();
    (BnModel::new(schema, dag, cpts).unwrap(), order)
}

/// d-separation by enumerating every simple path of the skeleton and testing whether it is active.
pub fn dsep_oracle(dag: &Dag, a: usize, b: usize, z: &BTreeSet<usize>) -> bool {
    let n = dag.len();
    let descendants = |v: usize| -> BTreeSet<usize> {
        let mut seen = BTreeSet::from([v]);
        let mut stack = vec![v];
        while let Some(u) = stack.pop() {
            for c in dag.children(u) {
                if seen.insert(c) {
                    stack.push(c);
                }
            }
        }
        seen
    };
    let neighbours =
        |v: usize| -> Vec<usize> { (0..n).filter(|&u| dag.has_edge(u, v) || dag.has_edge(v, u)).collect() };

    fn walk(
        path: &mut Vec<usize>,
        b: usize,
        neighbours: &dyn Fn(usize) -> Vec<usize>,
        active: &dyn Fn(&[usize]) -> bool,
    ) -> bool {
        let last = *path.last().unwrap();
        if last == b {
            return active(path);
        }
        for u in neighbours(last) {
            if path.contains(&u) {
                continue;
            }
            path.push(u);
            let found = walk(path, b, neighbours, active);
            path.pop();
            if found {
                return true;
            }
        }
        false
    }

    let active = |path: &[usize]| -> bool {
        path.windows(3).all(|w| {
            let (x, m, y) = (w[0], w[1], w[2]);
            let collider = dag.has_edge(x, m) && dag.has_edge(y, m);
            if collider {
                descendants(m).iter().any(|d| z.contains(d))
            } else {
                !z.contains(&m)
            }
        })
    };
    !walk(&mut vec![a], b, &neighbours, &active)
}

/// Closed-form 2x2 log odds ratio and its standard error; cells `[y0x0, y1x0, y0x1, y1x1]`.
pub fn cross_ratio(cells: [u64; 4]) -> (f64, f64) {
    let [a, b, c, d] = cells.map(|x| x as f64);
    let or = (d * a) / (c * b);
    (or, (1.0 / a + 1.0 / b + 1.0 / c + 1.0 / d).sqrt())
}

/// Owned two-variable dataset from `(response, predictor, count)` cells.
pub fn table_dataset(cells: &[(usize, usize, u64)], predictor_levels: usize) -> Dataset {
    let schema = Schema::in_listed_order(vec![
        Variable::new("Y", ["No", "Yes"]),
        Variable::new("X", (0..predictor_levels).map(|l| format!("x{l}"))),
    ])
    .unwrap();
    let rows = cells.iter().map(|&(y, x, _)| vec![y, x]).collect();
    let weights = cells.iter().map(|&(.., w)| w).collect();
    Dataset::new(schema, rows, weights).unwrap()
}
