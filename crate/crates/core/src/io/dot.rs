//! Graphviz DOT text for staged trees, DAGs and dependence subtrees.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::bn::Dag;
use crate::independence::DependenceSubtree;
use crate::model::{Schema, StagedTreeModel};

/// Fill colors handed out to stages in order of first appearance, then reused cyclically.
pub const PALETTE: [&str; 12] = [
    "#e41a1c", "#377eb8", "#4daf4a", "#984ea3", "#ff7f00", "#ffff33", "#a65628", "#f781bf", "#66c2a5", "#8da0cb",
    "#e78ac3", "#a6d854",
];
pub const ROOT_FILL: &str = "white";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DotOptions {
    /// Append `(p)` to every edge label.
    pub probabilities: bool,
}

impl Default for DotOptions {
    fn default() -> Self {
        DotOptions { probabilities: true }
    }
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn edge_label(schema: &Schema, var: usize, level: usize, prob: Option<f64>) -> String {
    let v = schema.variable(var);
    match prob {
        Some(p) => quote(&format!("{} = {} ({p:.2})", v.name, v.levels[level])),
        None => quote(&format!("{} = {}", v.name, v.levels[level])),
    }
}

/// Colors keyed by `(depth, stage)`, assigned in tree order so equal stagings render identically.
fn stage_colors(model: &StagedTreeModel) -> BTreeMap<(usize, usize), &'static str> {
    let mut colors = BTreeMap::new();
    let mut next = 0;
    for d in 1..model.tree().depth_count() {
        for s in model.staging().stage_ids(d) {
            colors.insert((d, s), PALETTE[next % PALETTE.len()]);
            next += 1;
        }
    }
    colors
}

pub fn tree_dot(model: &StagedTreeModel, opts: DotOptions) -> String {
    let tree = model.tree();
    let schema = model.schema();
    let p = tree.depth_count();
    let colors = stage_colors(model);
    let mut out =
        String::from("digraph staged_tree {\n  rankdir=LR;\n  node [shape=circle, style=filled, label=\"\"];\n");
    for d in 0..=p {
        for v in 0..tree.size(d) {
            let reachable = if d < p {
                tree.is_reachable(d, v)
            } else {
                // leaf: reachable parent with the closing edge allowed
                let card = tree.cardinality(p - 1);
                tree.is_reachable(p - 1, v / card) && tree.is_allowed(p - 1, v / card, v % card)
            };
            if !reachable {
                continue;
            }
            let id = tree.global_id(d, v);
            if d == p {
                let _ = writeln!(out, "  v{id} [shape=point];");
            } else if d == 0 {
                let _ = writeln!(out, "  v{id} [fillcolor={}];", quote(ROOT_FILL));
            } else {
                let s = model.staging().stage_of(d, v).expect("reachable vertices are staged");
                let _ = writeln!(out, "  v{id} [fillcolor={}];", quote(colors[&(d, s)]));
            }
        }
    }
    for d in 0..p {
        let var = tree.variable_at(d);
        for v in tree.reachable_vertices(d) {
            let theta = model.vertex_probs(d, v).expect("reachable vertices have parameters");
            for l in 0..tree.cardinality(d) {
                if !tree.is_allowed(d, v, l) {
                    continue;
                }
                let child = tree.global_id(d + 1, tree.child(d, v, l));
                let label = edge_label(schema, var, l, opts.probabilities.then_some(theta[l]));
                let _ = writeln!(out, "  v{} -> v{child} [label={label}];", tree.global_id(d, v));
            }
        }
    }
    out.push_str("}\n");
    out
}

pub fn dag_dot(dag: &Dag, schema: &Schema) -> String {
    let mut out = String::from("digraph dag {\n");
    for v in 0..dag.len() {
        let _ = writeln!(out, "  {};", quote(&schema.variable(v).name));
    }
    for (u, v) in dag.edges() {
        let _ = writeln!(out, "  {} -> {};", quote(&schema.variable(u).name), quote(&schema.variable(v).name));
    }
    out.push_str("}\n");
    out
}

/// Tree over the target's parents; each context node carries its stage color
/// and the target's distribution on its outgoing edges. Unreachable contexts are omitted.
pub fn subtree_dot(sub: &DependenceSubtree, schema: &Schema, opts: DotOptions) -> String {
    let cards: Vec<usize> = sub.parents.iter().map(|&v| schema.variable(v).cardinality()).collect();
    let k = cards.len();
    let mut colors: BTreeMap<usize, &str> = BTreeMap::new();
    for s in sub.contexts.iter().filter_map(|c| c.stage) {
        let next = colors.len();
        colors.entry(s).or_insert(PALETTE[next % PALETTE.len()]);
    }

    // node ids: prefixes of context level vectors, numbered in breadth-first order
    let mut ids: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    let mut layer_prefixes: Vec<Vec<Vec<usize>>> = vec![Vec::new(); k + 1];
    for c in sub.contexts.iter().filter(|c| c.stage.is_some()) {
        for depth in 0..=k {
            let prefix = c.levels[..depth].to_vec();
            if !layer_prefixes[depth].contains(&prefix) {
                layer_prefixes[depth].push(prefix);
            }
        }
    }
    for prefix in layer_prefixes.iter().flatten() {
        let next = ids.len();
        ids.insert(prefix.clone(), next);
    }

    let mut out =
        String::from("digraph dependence_subtree {\n  rankdir=LR;\n  node [shape=circle, style=filled, label=\"\"];\n");
    let mut edges = String::new();
    let mut leaf = ids.len();
    for (depth, prefixes) in layer_prefixes.iter().enumerate() {
        for prefix in prefixes {
            let id = ids[prefix];
            if depth < k {
                let fill = if depth == 0 { ROOT_FILL } else { "lightgrey" };
                let _ = writeln!(out, "  s{id} [fillcolor={}];", quote(fill));
                continue;
            }
            let ctx = sub.contexts.iter().find(|c| &c.levels == prefix).expect("prefix comes from a context");
            let stage = ctx.stage.expect("only reachable contexts are drawn");
            let _ = writeln!(out, "  s{id} [fillcolor={}];", quote(colors[&stage]));
            for (l, &prob) in sub.stage_params[&stage].iter().enumerate() {
                if prob == 0.0 {
                    continue;
                }
                let _ = writeln!(out, "  s{leaf} [shape=point];");
                let label = edge_label(schema, sub.target, l, opts.probabilities.then_some(prob));
                let _ = writeln!(edges, "  s{id} -> s{leaf} [label={label}];");
                leaf += 1;
            }
        }
    }
    for (prefix, &id) in &ids {
        if let Some((&last, head)) = prefix.split_last() {
            let parent = ids[head];
            let var = sub.parents[prefix.len() - 1];
            let _ = writeln!(edges, "  s{parent} -> s{id} [label={}];", edge_label(schema, var, last, None));
        }
    }
    out.push_str(&edges);
    out.push_str("}\n");
    out
}
