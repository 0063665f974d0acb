//! Univariate logistic regression with a dummy-coded categorical predictor.

use log::warn;
use nalgebra::{DMatrix, DVector};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::estimation::Dataset;

pub const MAX_ITER: usize = 50;
pub const TOLERANCE: f64 = 1e-10;
pub const Z_95: f64 = 1.96;

/// Coefficients beyond this magnitude in a separated fit are reported as 0 / Inf odds.
const DIVERGENT: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct LogitTerm {
    /// Predictor level; the first term is the intercept (reference level).
    pub level: String,
    pub intercept: bool,
    pub coefficient: f64,
    pub std_error: f64,
    pub odds_ratio: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
    pub separated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogitResult {
    pub response: String,
    pub predictor: String,
    /// Response level modelled as the event (second level).
    pub event_level: String,
    pub terms: Vec<LogitTerm>,
    pub converged: bool,
    pub iterations: usize,
    /// Some response x predictor cell is empty.
    pub separation: bool,
    pub dropped_levels: Vec<String>,
}

fn two_sided_p(z: f64) -> f64 {
    if z.is_nan() {
        return 1.0;
    }
    erfc(z.abs() / std::f64::consts::SQRT_2)
}

/// Fits `logit P(response = second level) ~ predictor` by IRLS.
pub fn logistic_univariate(data: &Dataset, response: usize, predictor: usize) -> Result<LogitResult> {
    let schema = data.schema();
    if response >= schema.len() || predictor >= schema.len() {
        return Err(Error::Schema("unknown response or predictor".into()));
    }
    if response == predictor {
        return Err(Error::Config("response and predictor must differ".into()));
    }
    let rv = schema.variable(response);
    let pv = schema.variable(predictor);
    if rv.cardinality() != 2 {
        return Err(Error::Config(format!("response '{}' is not binary", rv.name)));
    }

    // grouped binomial table: per predictor level (events, trials)
    let mut table = vec![(0u64, 0u64); pv.cardinality()];
    for (row, w) in data.iter() {
        let cell = &mut table[row[predictor]];
        cell.1 += w;
        if row[response] == 1 {
            cell.0 += w;
        }
    }
    let mut dropped_levels = Vec::new();
    let mut levels = Vec::new();
    for (l, &(_, trials)) in table.iter().enumerate() {
        if trials == 0 {
            warn!("level '{}' of '{}' has no observations; dropped", pv.levels[l], pv.name);
            dropped_levels.push(pv.levels[l].clone());
        } else {
            levels.push(l);
        }
    }
    if levels.len() < 2 {
        return Err(Error::Statistics(format!("predictor '{}' has fewer than two observed levels", pv.name)));
    }
    let events: u64 = levels.iter().map(|&l| table[l].0).sum();
    let trials: u64 = levels.iter().map(|&l| table[l].1).sum();
    if events == 0 || events == trials {
        return Err(Error::Statistics(format!("response '{}' is constant", rv.name)));
    }
    let zero_cell: Vec<bool> = levels.iter().map(|&l| table[l].0 == 0 || table[l].0 == table[l].1).collect();
    let separation = zero_cell.iter().any(|&z| z);

    let k = levels.len();
    let design = DMatrix::from_fn(k, k, |i, j| if j == 0 || i == j { 1.0 } else { 0.0 });
    let y = DVector::from_iterator(k, levels.iter().map(|&l| table[l].0 as f64));
    let m = DVector::from_iterator(k, levels.iter().map(|&l| table[l].1 as f64));

    let mut beta: DVector<f64> = DVector::zeros(k);
    let mut converged = false;
    let mut iterations = 0;
    let mut information: DMatrix<f64> = DMatrix::zeros(k, k);
    for it in 1..=MAX_ITER {
        iterations = it;
        let eta = &design * &beta;
        let mu = eta.map(|e| 1.0 / (1.0 + (-e).exp()));
        let w = DVector::from_iterator(k, (0..k).map(|i| m[i] * mu[i] * (1.0 - mu[i])));
        let score = design.transpose() * (&y - m.component_mul(&mu));
        information = design.transpose() * DMatrix::from_diagonal(&w) * &design;
        let Some(step) = information.clone().lu().solve(&score) else { break };
        beta += &step;
        if step.amax() < TOLERANCE {
            converged = true;
            break;
        }
    }
    let eta = &design * &beta;
    let mu = eta.map(|e| 1.0 / (1.0 + (-e).exp()));
    let w = DVector::from_iterator(k, (0..k).map(|i| m[i] * mu[i] * (1.0 - mu[i])));
    if converged {
        information = design.transpose() * DMatrix::from_diagonal(&w) * &design;
    }
    let covariance = information.try_inverse();

    let terms = (0..k)
        .map(|j| {
            let coefficient = beta[j];
            let std_error = covariance.as_ref().map_or(f64::INFINITY, |c| c[(j, j)].max(0.0).sqrt());
            let affected = zero_cell[0] || zero_cell[j];
            let p_value = two_sided_p(coefficient / std_error);
            let (odds_ratio, ci_low, ci_high) = if affected {
                let or = if coefficient.abs() > DIVERGENT {
                    if coefficient < 0.0 {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                } else {
                    coefficient.exp()
                };
                (or, 0.0, f64::INFINITY)
            } else {
                (coefficient.exp(), (coefficient - Z_95 * std_error).exp(), (coefficient + Z_95 * std_error).exp())
            };
            LogitTerm {
                level: pv.levels[levels[j]].clone(),
                intercept: j == 0,
                coefficient,
                std_error,
                odds_ratio,
                ci_low,
                ci_high,
                p_value,
                separated: affected,
            }
        })
        .collect();

    Ok(LogitResult {
        response: rv.name.clone(),
        predictor: pv.name.clone(),
        event_level: rv.levels[1].clone(),
        terms,
        converged,
        iterations,
        separation,
        dropped_levels,
    })
}
