//! Asymmetric independence read off a staging: minimal DAGs, dependence
//! subtrees and context-specific independence checks.

use std::collections::{BTreeMap, BTreeSet};

use crate::bn::Dag;
use crate::error::{Error, Result};
use crate::model::{EventTree, StagedTreeModel, Staging};

/// Parent set of each variable: the earlier variables whose value, toggled
/// alone, changes the stage of some vertex at the variable's depth.
pub fn minimal_dag_of(tree: &EventTree, staging: &Staging) -> Dag {
    let p = tree.depth_count();
    let mut edges = Vec::new();
    for d in 1..p {
        let mut parents = BTreeSet::new();
        for v in tree.reachable_vertices(d) {
            let stage = staging.stage_of(d, v);
            for j in 0..d {
                if parents.contains(&j) {
                    continue;
                }
                let differs = (0..tree.cardinality(j)).any(|l| {
                    let w = tree.with_coordinate(d, v, j, l);
                    tree.is_reachable(d, w) && staging.stage_of(d, w) != stage
                });
                if differs {
                    parents.insert(j);
                }
            }
            if parents.len() == d {
                break;
            }
        }
        edges.extend(parents.into_iter().map(|j| (tree.variable_at(j), tree.variable_at(d))));
    }
    Dag::from_edges(tree.schema().len(), edges).expect("forward edges are acyclic")
}

pub fn minimal_dag(model: &StagedTreeModel) -> Dag {
    minimal_dag_of(model.tree(), model.staging())
}

/// One parent context of a dependence subtree.
#[derive(Debug, Clone, PartialEq)]
pub struct SubtreeContext {
    /// Levels of the parents, in tree order.
    pub levels: Vec<usize>,
    /// Stage shared by every reachable vertex in this context; `None` when none is reachable.
    pub stage: Option<usize>,
}

/// The staging of one variable displayed over its minimal-DAG parents only.
#[derive(Debug, Clone, PartialEq)]
pub struct DependenceSubtree {
    pub target: usize,
    /// Parent variables (schema indices) in tree order.
    pub parents: Vec<usize>,
    /// Contexts in row-major order over the parents.
    pub contexts: Vec<SubtreeContext>,
    /// Distribution of the target for each stage that appears.
    pub stage_params: BTreeMap<usize, Vec<f64>>,
}

pub fn dependence_subtree(model: &StagedTreeModel, target: usize) -> Result<DependenceSubtree> {
    let tree = model.tree();
    let schema = tree.schema();
    if target >= schema.len() {
        return Err(Error::Schema(format!("unknown variable index {target}")));
    }
    let d = schema.depth_of(target);
    let dag = minimal_dag(model);
    let mut parent_depths: Vec<usize> = dag.parents(target).iter().map(|&v| schema.depth_of(v)).collect();
    parent_depths.sort_unstable();
    let cards: Vec<usize> = parent_depths.iter().map(|&j| tree.cardinality(j)).collect();
    let n_contexts: usize = cards.iter().product();

    let mut stage_by_context: Vec<Option<usize>> = vec![None; n_contexts];
    for v in tree.reachable_vertices(d) {
        let ctx = parent_depths.iter().zip(&cards).fold(0, |acc, (&j, &c)| acc * c + tree.coordinate(d, v, j));
        let stage = model.staging().stage_of(d, v);
        match stage_by_context[ctx] {
            None => stage_by_context[ctx] = stage,
            Some(s) if Some(s) != stage => {
                return Err(Error::Invariant(format!(
                    "context {ctx} of '{}' spans several stages",
                    schema.variable(target).name
                )))
            }
            _ => {}
        }
    }
    let contexts: Vec<SubtreeContext> = stage_by_context
        .into_iter()
        .enumerate()
        .map(|(ctx, stage)| {
            let mut levels = vec![0; cards.len()];
            let mut rest = ctx;
            for i in (0..cards.len()).rev() {
                levels[i] = rest % cards[i];
                rest /= cards[i];
            }
            SubtreeContext { levels, stage }
        })
        .collect();
    let stage_params = contexts.iter().filter_map(|c| c.stage).map(|s| (s, model.stage_probs(d, s).to_vec())).collect();
    Ok(DependenceSubtree {
        target,
        parents: parent_depths.iter().map(|&j| tree.variable_at(j)).collect(),
        contexts,
        stage_params,
    })
}

/// `target` independent of `separated` given `context`, for every value of
/// the remaining earlier variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsiStatement {
    pub target: usize,
    pub separated: Vec<usize>,
    /// `(variable, level)` pairs.
    pub context: Vec<(usize, usize)>,
}

pub fn csi_holds(model: &StagedTreeModel, stmt: &CsiStatement) -> Result<bool> {
    let tree = model.tree();
    let schema = tree.schema();
    let p = schema.len();
    if stmt.target >= p || stmt.separated.iter().any(|&v| v >= p) || stmt.context.iter().any(|&(v, _)| v >= p) {
        return Err(Error::Schema("statement references an unknown variable".into()));
    }
    let d = schema.depth_of(stmt.target);
    if stmt.separated.is_empty() {
        return Err(Error::Config("statement separates no variable".into()));
    }
    let mut fixed: BTreeMap<usize, usize> = BTreeMap::new();
    for &(v, l) in &stmt.context {
        if l >= schema.variable(v).cardinality() {
            return Err(Error::Bounds(format!("level {l} out of range for '{}'", schema.variable(v).name)));
        }
        if schema.depth_of(v) >= d || v == stmt.target {
            return Err(Error::Config(format!(
                "context variable '{}' does not precede the target",
                schema.variable(v).name
            )));
        }
        if stmt.separated.contains(&v) || fixed.insert(schema.depth_of(v), l).is_some() {
            return Err(Error::Config(format!("context variable '{}' is repeated", schema.variable(v).name)));
        }
    }
    let separated: BTreeSet<usize> = stmt.separated.iter().map(|&v| schema.depth_of(v)).collect();
    if separated.len() != stmt.separated.len() || separated.iter().any(|&j| j >= d) {
        return Err(Error::Config("separated variables must be distinct and precede the target".into()));
    }

    // vertices agreeing on context and free coordinates must share one stage
    let mut classes: BTreeMap<Vec<usize>, Option<usize>> = BTreeMap::new();
    for v in tree.reachable_vertices(d) {
        if fixed.iter().any(|(&j, &l)| tree.coordinate(d, v, j) != l) {
            continue;
        }
        let key: Vec<usize> = (0..d).filter(|j| !separated.contains(j)).map(|j| tree.coordinate(d, v, j)).collect();
        let stage = model.staging().stage_of(d, v);
        match classes.get(&key) {
            None => {
                classes.insert(key, stage);
            }
            Some(s) if *s != stage => return Ok(false),
            _ => {}
        }
    }
    Ok(true)
}
