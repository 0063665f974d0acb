//! Hand-built models used as fixtures and as synthetic data generators.
//!
//! None of these models is fitted to real patient data.

use std::collections::BTreeMap;

use crate::model::{build_event_tree, EventTree, Schema, StagedTreeModel, Staging, StructuralConstraint, Variable};

/// Four binary variables A, B, C, D with levels listed as `["1", "0"]`, so that
/// vertex numbering starts from the `1` branch.
pub fn fig1_tree() -> EventTree {
    let vars = ["A", "B", "C", "D"].iter().map(|n| Variable::new(*n, ["1", "0"])).collect();
    build_event_tree(Schema::in_listed_order(vars).expect("valid schema"), vec![]).expect("valid tree")
}

/// The asymmetric staging over [`fig1_tree`]:
///
/// * depth 1: one stage (A and B independent);
/// * depth 2: `{A=B}` and `{A!=B}` (a local independence);
/// * depth 3: all `A=1` vertices share a stage; under `A=0` the stage depends on C only.
pub fn fig1_staging(tree: &EventTree) -> Staging {
    let labels = vec![
        vec![Some(0)],
        vec![Some(0), Some(0)],
        vec![Some(0), Some(1), Some(1), Some(0)],
        vec![Some(0), Some(0), Some(0), Some(0), Some(4), Some(5), Some(4), Some(5)],
    ];
    Staging::from_labels(tree, labels).expect("valid staging")
}

/// Per-depth stage vectors for [`fig1_staging`], as `P(first level)` values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fig1Params {
    pub root: f64,
    pub depth1: f64,
    /// stages `{A=B}`, `{A!=B}`
    pub depth2: [f64; 2],
    /// stages `A=1`, `A=0,C=1`, `A=0,C=0`
    pub depth3: [f64; 3],
}

impl Default for Fig1Params {
    fn default() -> Self {
        Fig1Params { root: 0.45, depth1: 0.65, depth2: [0.2, 0.7], depth3: [0.15, 0.5, 0.85] }
    }
}

pub fn fig1_model_with(params: Fig1Params) -> StagedTreeModel {
    let tree = fig1_tree();
    let staging = fig1_staging(&tree);
    let bern = |q: f64| vec![q, 1.0 - q];
    let params = vec![
        BTreeMap::from([(0, bern(params.root))]),
        BTreeMap::from([(0, bern(params.depth1))]),
        BTreeMap::from([(0, bern(params.depth2[0])), (1, bern(params.depth2[1]))]),
        BTreeMap::from([(0, bern(params.depth3[0])), (4, bern(params.depth3[1])), (5, bern(params.depth3[2]))]),
    ];
    StagedTreeModel::new(tree, staging, params, None).expect("valid model")
}

pub fn fig1_model() -> StagedTreeModel {
    fig1_model_with(Fig1Params::default())
}

/// A synthetic patient-trajectory model over GR, RP, ICU, INT, DTH with the
/// structural zero `ICU=No => INT=No`. Parameters are illustrative only.
pub fn trajectory_model() -> StagedTreeModel {
    let schema = Schema::in_listed_order(vec![
        Variable::new("GR", ["Neutropenic", "Conventional", "Non-conventional"]),
        Variable::new("RP", ["Angioinvasive", "Broncoinvasive"]),
        Variable::new("ICU", ["No", "Yes"]),
        Variable::new("INT", ["No", "Yes"]),
        Variable::new("DTH", ["No", "Yes"]),
    ])
    .expect("valid schema");
    let constraint = StructuralConstraint::from_names(&schema, ("ICU", "No"), ("INT", "No")).expect("known levels");
    let tree = build_event_tree(schema, vec![constraint]).expect("valid tree");

    // GR: N=0, C=1, NC=2; RP: A=0, B=1; ICU/INT/DTH: No=0, Yes=1
    let rp = |gr: usize| if gr == 0 { 0 } else { 1 };
    let icu = |gr: usize, rp: usize| match (gr, rp) {
        (0, 1) | (2, _) => 0,
        _ => 1,
    };
    let int = |gr: usize, rp: usize, icu: usize| match (icu, gr, rp) {
        (0, ..) => None,
        (1, _, 1) => Some(0),
        (1, 0, 0) => Some(1),
        _ => Some(2),
    };
    let dth = |gr: usize, rp: usize, icu: usize, int: usize| match (gr, rp, icu, int) {
        (0, _, 1, _) => 0,
        (1 | 2, 0, 1, 1) => 1,
        (2, 0, 1, 0) | (1, 1, 0, _) => 2,
        (2, _, 0, _) | (1 | 2, 1, 1, 1) | (1, 0, 1, 0) => 3,
        _ => 4,
    };

    let mut labels: Vec<Vec<Option<usize>>> = (0..5).map(|d| vec![None; tree.size(d)]).collect();
    labels[0][0] = Some(0);
    for d in 1..5 {
        for v in tree.reachable_vertices(d).collect::<Vec<_>>() {
            let x = tree.prefix_of(d, v).expect("vertex exists");
            let label = match d {
                1 => rp(x[0]),
                2 => icu(x[0], x[1]),
                3 => match int(x[0], x[1], x[2]) {
                    // degenerate vertices get their own label
                    None => 100 + v,
                    Some(l) => l,
                },
                _ => dth(x[0], x[1], x[2], x[3]),
            };
            labels[d][v] = Some(label);
        }
    }
    let staging = Staging::from_labels(&tree, labels).expect("valid staging");

    let by_label: [BTreeMap<usize, Vec<f64>>; 5] = [
        BTreeMap::from([(0, vec![9.0 / 146.0, 105.0 / 146.0, 32.0 / 146.0])]),
        BTreeMap::from([(0, vec![0.89, 0.11]), (1, vec![0.42, 0.58])]),
        BTreeMap::from([(0, vec![0.30, 0.70]), (1, vec![0.57, 0.43])]),
        BTreeMap::from([(0, vec![0.0, 1.0]), (1, vec![1.0, 0.0]), (2, vec![0.18, 0.82])]),
        BTreeMap::from([
            (0, vec![0.0, 1.0]),
            (1, vec![0.37, 0.63]),
            (2, vec![0.82, 0.18]),
            (3, vec![0.56, 0.44]),
            (4, vec![0.71, 0.29]),
        ]),
    ];
    let mut params: Vec<BTreeMap<usize, Vec<f64>>> = vec![BTreeMap::new(); 5];
    for d in 0..5 {
        for v in tree.reachable_vertices(d).collect::<Vec<_>>() {
            let s = staging.stage_of(d, v).expect("reachable");
            if params[d].contains_key(&s) {
                continue;
            }
            let theta = if d == 0 {
                by_label[0][&0].clone()
            } else {
                let x = tree.prefix_of(d, v).expect("vertex exists");
                let label = match d {
                    1 => rp(x[0]),
                    2 => icu(x[0], x[1]),
                    3 => match int(x[0], x[1], x[2]) {
                        None => {
                            params[d].insert(s, vec![1.0, 0.0]);
                            continue;
                        }
                        Some(l) => l,
                    },
                    _ => dth(x[0], x[1], x[2], x[3]),
                };
                by_label[d][&label].clone()
            };
            params[d].insert(s, theta);
        }
    }
    StagedTreeModel::new(tree, staging, params, None).expect("valid model")
}
