//! Stage counts, maximum-likelihood parameters, log-likelihood and BIC.
//!
//! Throughout the crate BIC is `-2 * loglik + df * ln(n)`; lower is better.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{EventTree, FitMeta, Schema, StagedTreeModel, Staging};

/// Complete categorical observations, aggregated into distinct tuples with counts.
///
/// Tuples are level indices in the schema's variable order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Schema,
    rows: Vec<Vec<usize>>,
    weights: Vec<u64>,
    n: u64,
}

impl Dataset {
    /// Aggregates weighted tuples; duplicates are summed, zero weights dropped.
    pub fn new(schema: Schema, rows: Vec<Vec<usize>>, weights: Vec<u64>) -> Result<Self> {
        if rows.len() != weights.len() {
            return Err(Error::Config("rows and weights differ in length".into()));
        }
        let p = schema.len();
        let mut agg: BTreeMap<Vec<usize>, u64> = BTreeMap::new();
        for (i, (row, w)) in rows.into_iter().zip(weights).enumerate() {
            if row.len() != p {
                return Err(Error::Schema(format!("row {i} has {} values, expected {p}", row.len())));
            }
            for (v, &x) in row.iter().enumerate() {
                if x >= schema.variable(v).cardinality() {
                    return Err(Error::Bounds(format!(
                        "row {i}: level {x} out of range for '{}'",
                        schema.variable(v).name
                    )));
                }
            }
            if w > 0 {
                *agg.entry(row).or_default() += w;
            }
        }
        let n: u64 = agg.values().sum();
        if n == 0 {
            return Err(Error::EmptyData);
        }
        let (rows, weights) = agg.into_iter().unzip();
        Ok(Dataset { schema, rows, weights, n })
    }

    /// One observation per row.
    pub fn from_rows(schema: Schema, rows: Vec<Vec<usize>>) -> Result<Self> {
        let weights = vec![1; rows.len()];
        Dataset::new(schema, rows, weights)
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    /// Distinct tuples in lexicographic order.
    pub fn rows(&self) -> &[Vec<usize>] {
        &self.rows
    }

    pub fn weights(&self) -> &[u64] {
        &self.weights
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[usize], u64)> {
        self.rows.iter().map(Vec::as_slice).zip(self.weights.iter().copied())
    }

    /// Same observations under a schema with the same variables but another order.
    pub fn with_schema(&self, schema: Schema) -> Result<Self> {
        if !self.schema.same_variables(&schema) {
            return Err(Error::Schema("dataset variables differ from the target schema".into()));
        }
        Ok(Dataset { schema, ..self.clone() })
    }
}

/// Per-vertex transition counts: `depth -> vertex * card + level -> count`.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexCounts {
    counts: Vec<Vec<u64>>,
    cards: Vec<usize>,
    n: u64,
}

impl VertexCounts {
    pub fn new(tree: &EventTree, data: &Dataset) -> Result<Self> {
        if !tree.schema().same_variables(data.schema()) {
            return Err(Error::Schema("dataset schema does not match the tree schema".into()));
        }
        let p = tree.depth_count();
        let mut counts: Vec<Vec<u64>> = (0..p).map(|d| vec![0; tree.size(d) * tree.cardinality(d)]).collect();
        for (i, (row, w)) in data.iter().enumerate() {
            let path = tree.to_tree_order(row);
            if let Some(c) = tree.violated_constraint(&path) {
                let s = tree.schema();
                return Err(Error::DataConsistency {
                    row: i,
                    message: format!(
                        "{:?}: {}={} requires {}={}",
                        describe_row(s, row),
                        s.variable(c.trigger.0).name,
                        s.variable(c.trigger.0).levels[c.trigger.1],
                        s.variable(c.consequence.0).name,
                        s.variable(c.consequence.0).levels[c.consequence.1]
                    ),
                });
            }
            let mut idx = 0usize;
            for (d, &x) in path.iter().enumerate() {
                counts[d][idx * tree.cardinality(d) + x] += w;
                idx = tree.child(d, idx, x);
            }
        }
        Ok(VertexCounts { counts, cards: tree.cardinalities().to_vec(), n: data.n() })
    }

    pub fn vertex(&self, depth: usize, vertex: usize) -> &[u64] {
        let c = self.cards[depth];
        &self.counts[depth][vertex * c..(vertex + 1) * c]
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// Sums the counts of the vertices of each stage.
    pub fn stage_table(&self, staging: &Staging) -> CountTable {
        let depths = (0..self.cards.len())
            .map(|d| {
                let mut map: BTreeMap<usize, Vec<u64>> = BTreeMap::new();
                for (v, s) in staging.depth(d).iter().enumerate() {
                    if let Some(s) = s {
                        let acc = map.entry(*s).or_insert_with(|| vec![0; self.cards[d]]);
                        for (a, &c) in acc.iter_mut().zip(self.vertex(d, v)) {
                            *a += c;
                        }
                    }
                }
                map
            })
            .collect();
        CountTable { depths, n: self.n }
    }
}

fn describe_row(schema: &Schema, row: &[usize]) -> Vec<String> {
    row.iter()
        .enumerate()
        .map(|(v, &x)| format!("{}={}", schema.variable(v).name, schema.variable(v).levels[x]))
        .collect()
}

/// Count vectors per depth and stage.
#[derive(Debug, Clone, PartialEq)]
pub struct CountTable {
    pub depths: Vec<BTreeMap<usize, Vec<u64>>>,
    pub n: u64,
}

impl CountTable {
    pub fn stage(&self, depth: usize, stage: usize) -> &[u64] {
        &self.depths[depth][&stage]
    }
}

pub fn stage_counts(tree: &EventTree, staging: &Staging, data: &Dataset) -> Result<CountTable> {
    Ok(VertexCounts::new(tree, data)?.stage_table(staging))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    /// Pseudocount added to every allowed edge.
    pub alpha: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig { alpha: 0.0 }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be a finite nonnegative number, got {}", self.alpha)));
        }
        Ok(())
    }
}

/// Estimated stage vectors plus the stages that saw no data.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedParameters {
    pub params: Vec<BTreeMap<usize, Vec<f64>>>,
    pub unsupported: Vec<(usize, usize)>,
}

/// `(n_l + alpha) / (n + alpha * m)` over allowed edges; `None` when no mass at all.
pub fn estimate_vector(counts: &[u64], mask: u64, alpha: f64) -> Option<Vec<f64>> {
    let m = mask.count_ones() as f64;
    if m == 1.0 {
        return Some((0..counts.len()).map(|l| if mask & (1 << l) != 0 { 1.0 } else { 0.0 }).collect());
    }
    let total: f64 =
        counts.iter().enumerate().filter(|(l, _)| mask & (1 << l) != 0).map(|(_, &c)| c as f64).sum::<f64>()
            + alpha * m;
    if total == 0.0 {
        return None;
    }
    Some(
        counts
            .iter()
            .enumerate()
            .map(|(l, &c)| if mask & (1 << l) != 0 { (c as f64 + alpha) / total } else { 0.0 })
            .collect(),
    )
}

/// Uniform vector over the allowed edges.
pub fn uniform_vector(card: usize, mask: u64) -> Vec<f64> {
    let m = mask.count_ones() as f64;
    (0..card).map(|l| if mask & (1 << l) != 0 { 1.0 / m } else { 0.0 }).collect()
}

pub fn fit_parameters(tree: &EventTree, counts: &CountTable, cfg: &FitConfig) -> Result<FittedParameters> {
    cfg.validate()?;
    let mut unsupported = Vec::new();
    let params = counts
        .depths
        .iter()
        .enumerate()
        .map(|(d, stages)| {
            stages
                .iter()
                .map(|(&s, c)| {
                    let mask = tree.allowed(d, s);
                    let theta = estimate_vector(c, mask, cfg.alpha).unwrap_or_else(|| {
                        unsupported.push((d, s));
                        uniform_vector(c.len(), mask)
                    });
                    (s, theta)
                })
                .collect()
        })
        .collect();
    Ok(FittedParameters { params, unsupported })
}

/// `sum_l n_l ln(theta_l)` with `0 ln 0 = 0`; `-inf` when a count hits a zero probability.
pub fn multinomial_loglik(counts: &[u64], theta: &[f64]) -> f64 {
    let mut ll = 0.0;
    for (&c, &t) in counts.iter().zip(theta) {
        if c == 0 {
            continue;
        }
        if t == 0.0 {
            return f64::NEG_INFINITY;
        }
        ll += c as f64 * t.ln();
    }
    ll
}

/// Log-likelihood of a count vector under the estimate it induces.
pub fn local_loglik(counts: &[u64], mask: u64, alpha: f64) -> f64 {
    match estimate_vector(counts, mask, alpha) {
        Some(theta) => multinomial_loglik(counts, &theta),
        None => 0.0,
    }
}

/// Free parameters: `m_s - 1` summed over non-degenerate stages.
pub fn degrees_of_freedom(tree: &EventTree, staging: &Staging) -> usize {
    (0..tree.depth_count())
        .map(|d| {
            staging
                .stage_ids(d)
                .into_iter()
                .map(|s| (tree.allowed(d, s).count_ones() as usize).saturating_sub(1))
                .sum::<usize>()
        })
        .sum()
}

pub fn bic_value(loglik: f64, df: usize, n: u64) -> f64 {
    -2.0 * loglik + df as f64 * (n as f64).ln()
}

fn loglik_from_counts(params: &[BTreeMap<usize, Vec<f64>>], counts: &CountTable) -> f64 {
    counts
        .depths
        .iter()
        .enumerate()
        .map(|(d, stages)| stages.iter().map(|(s, c)| multinomial_loglik(c, &params[d][s])).sum::<f64>())
        .sum()
}

pub fn log_likelihood(model: &StagedTreeModel, data: &Dataset) -> Result<f64> {
    let counts = stage_counts(model.tree(), model.staging(), data)?;
    Ok(loglik_from_counts(model.parameters(), &counts))
}

pub fn score_bic(model: &StagedTreeModel, data: &Dataset) -> Result<f64> {
    if data.n() == 0 {
        return Err(Error::EmptyData);
    }
    let ll = log_likelihood(model, data)?;
    Ok(bic_value(ll, degrees_of_freedom(model.tree(), model.staging()), data.n()))
}

/// Estimates parameters for a staging and records the fit summary.
pub fn fit(tree: &EventTree, staging: &Staging, data: &Dataset, cfg: &FitConfig) -> Result<StagedTreeModel> {
    let counts = stage_counts(tree, staging, data)?;
    fit_from_counts(tree, staging, &counts, cfg)
}

pub(crate) fn fit_from_counts(
    tree: &EventTree,
    staging: &Staging,
    counts: &CountTable,
    cfg: &FitConfig,
) -> Result<StagedTreeModel> {
    let fitted = fit_parameters(tree, counts, cfg)?;
    let ll = loglik_from_counts(&fitted.params, counts);
    let df = degrees_of_freedom(tree, staging);
    let meta = FitMeta {
        n: counts.n,
        log_likelihood: ll,
        bic: bic_value(ll, df, counts.n),
        df,
        unsupported: fitted.unsupported,
    };
    StagedTreeModel::new(tree.clone(), staging.clone(), fitted.params, Some(meta))
}
