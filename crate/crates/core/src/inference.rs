//! Exact conditional queries and forward sampling on staged trees.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bn::{bn_to_staged_tree, BnModel};
use crate::error::{Error, Result};
use crate::model::StagedTreeModel;
use crate::parallel;

/// Rows drawn per RNG stream; fixes the chunking independently of the worker count.
pub const SAMPLE_CHUNK: usize = 4096;

/// `P(target | evidence)`; both are `(variable, level)` assignments.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Query {
    pub target: Vec<(usize, usize)>,
    pub evidence: Vec<(usize, usize)>,
}

fn assignment_by_depth(model: &StagedTreeModel, pairs: &[(usize, usize)], what: &str) -> Result<Vec<Option<usize>>> {
    let schema = model.schema();
    let mut out = vec![None; schema.len()];
    for &(v, l) in pairs {
        if v >= schema.len() {
            return Err(Error::Schema(format!("{what} references unknown variable index {v}")));
        }
        if l >= schema.variable(v).cardinality() {
            return Err(Error::Bounds(format!("{what}: level {l} out of range for '{}'", schema.variable(v).name)));
        }
        let d = schema.depth_of(v);
        if out[d].is_some_and(|prev| prev != l) {
            return Err(Error::Config(format!("{what} assigns '{}' twice", schema.variable(v).name)));
        }
        out[d] = Some(l);
    }
    Ok(out)
}

struct Walk<'a> {
    model: &'a StagedTreeModel,
    evidence: Vec<Option<usize>>,
    target: Vec<Option<usize>>,
    last: usize,
    p_evidence: f64,
    p_joint: f64,
}

impl Walk<'_> {
    fn visit(&mut self, depth: usize, vertex: usize, prob: f64, target_ok: bool) {
        if depth >= self.last {
            self.p_evidence += prob;
            if target_ok {
                self.p_joint += prob;
            }
            return;
        }
        let tree = self.model.tree();
        let theta = self.model.vertex_probs(depth, vertex).expect("walk stays on reachable vertices");
        for (l, &q) in theta.iter().enumerate() {
            if q == 0.0 || self.evidence[depth].is_some_and(|e| e != l) {
                continue;
            }
            let ok = target_ok && self.target[depth].is_none_or(|t| t == l);
            self.visit(depth + 1, tree.child(depth, vertex, l), prob * q, ok);
        }
    }
}

/// Exact conditional probability by enumeration of consistent root-to-leaf paths.
///
/// A variable may appear in both target and evidence; conflicting levels give 0.
pub fn query(model: &StagedTreeModel, q: &Query) -> Result<f64> {
    let evidence = assignment_by_depth(model, &q.evidence, "evidence")?;
    let target = assignment_by_depth(model, &q.target, "target")?;
    let last = evidence.iter().zip(&target).rposition(|(e, t)| e.is_some() || t.is_some()).map_or(0, |d| d + 1);
    let mut walk = Walk { model, evidence, target, last, p_evidence: 0.0, p_joint: 0.0 };
    walk.visit(0, 0, 1.0, true);
    if walk.p_evidence <= 0.0 {
        return Err(Error::UndefinedConditional);
    }
    Ok(walk.p_joint / walk.p_evidence)
}

/// The same query on a Bayesian network, answered on its exact staged tree.
pub fn bn_query(bn: &BnModel, q: &Query) -> Result<f64> {
    query(&bn_to_staged_tree(bn, bn.schema().order())?, q)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    /// Level indices in schema variable order.
    pub rows: Vec<Vec<usize>>,
    pub seed: u64,
    pub warnings: Vec<String>,
}

fn draw(theta: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (l, &q) in theta.iter().enumerate() {
        if q <= 0.0 {
            continue;
        }
        acc += q;
        last = l;
        if u < acc {
            return l;
        }
    }
    last
}

/// Forward sampling of `n` root-to-leaf walks; chunk `c` uses stream `c` of a ChaCha8 generator.
pub fn sample(model: &StagedTreeModel, n: usize, seed: u64) -> SampleBatch {
    let tree = model.tree();
    let schema = model.schema();
    let mut warnings = Vec::new();
    if let Some(meta) = model.fit_meta() {
        for &(d, s) in &meta.unsupported {
            warnings.push(format!(
                "stage {s} of '{}' has no supporting data; sampling it uniformly",
                schema.variable(tree.variable_at(d)).name
            ));
        }
    }
    let chunks = n.div_ceil(SAMPLE_CHUNK);
    let parts: Vec<Vec<Vec<usize>>> = parallel::install(|| {
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(c as u64);
                let len = SAMPLE_CHUNK.min(n - c * SAMPLE_CHUNK);
                (0..len)
                    .map(|_| {
                        let mut row = vec![0; schema.len()];
                        let mut v = 0;
                        for d in 0..tree.depth_count() {
                            let theta = model.vertex_probs(d, v).expect("sampled paths stay reachable");
                            let l = draw(theta, &mut rng);
                            row[tree.variable_at(d)] = l;
                            v = tree.child(d, v, l);
                        }
                        row
                    })
                    .collect()
            })
            .collect()
    });
    SampleBatch { rows: parts.into_iter().flatten().collect(), seed, warnings }
}
