//! Canonical JSON documents for staged tree models.
//!
//! Serialization is hand-written so that key order and number formatting are
//! fixed; parsing goes through serde and then re-validates every model invariant.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{build_event_tree, FitMeta, Schema, StagedTreeModel, Staging, StructuralConstraint, Variable};

pub const FORMAT_VERSION: u32 = 1;

/// 17 significant digits, enough to round-trip any f64.
fn number(x: f64) -> String {
    if x == 0.0 && x.is_sign_positive() {
        "0".into()
    } else {
        format!("{x:.16e}")
    }
}

fn string(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

fn assignment(schema: &Schema, (v, l): (usize, usize)) -> String {
    let var = schema.variable(v);
    format!("{{\"variable\": {}, \"level\": {}}}", string(&var.name), string(&var.levels[l]))
}

fn finite_or_null(x: f64) -> String {
    if x.is_finite() {
        number(x)
    } else {
        "null".into()
    }
}

pub fn serialize_model(model: &StagedTreeModel) -> String {
    let tree = model.tree();
    let schema = model.schema();
    let mut out = String::new();
    let w = &mut out;
    w.push_str("{\n");
    let _ = writeln!(w, "  \"format_version\": {FORMAT_VERSION},");

    w.push_str("  \"schema\": [\n");
    for (i, var) in schema.variables().iter().enumerate() {
        let levels: Vec<String> = var.levels.iter().map(|l| string(l)).collect();
        let sep = if i + 1 < schema.len() { "," } else { "" };
        let _ = writeln!(w, "    {{\"name\": {}, \"levels\": [{}]}}{sep}", string(&var.name), levels.join(", "));
    }
    w.push_str("  ],\n");

    let order: Vec<String> = schema.order().iter().map(|&v| string(&schema.variable(v).name)).collect();
    let _ = writeln!(w, "  \"order\": [{}],", order.join(", "));

    let constraints: Vec<String> = tree
        .constraints()
        .iter()
        .map(|c| {
            format!(
                "    {{\"if\": {}, \"then\": {}}}",
                assignment(schema, c.trigger),
                assignment(schema, c.consequence)
            )
        })
        .collect();
    if constraints.is_empty() {
        w.push_str("  \"constraints\": [],\n");
    } else {
        let _ = writeln!(w, "  \"constraints\": [\n{}\n  ],", constraints.join(",\n"));
    }

    let staging: Vec<String> = (0..tree.depth_count())
        .map(|d| {
            let slots: Vec<String> =
                model.staging().depth(d).iter().map(|s| s.map_or("-1".into(), |s| s.to_string())).collect();
            format!("    [{}]", slots.join(", "))
        })
        .collect();
    let _ = writeln!(w, "  \"staging\": [\n{}\n  ],", staging.join(",\n"));

    let params: Vec<String> = model
        .parameters()
        .iter()
        .map(|depth| {
            let stages: Vec<String> = depth
                .iter()
                .map(|(s, probs)| {
                    let probs: Vec<String> = probs.iter().map(|&p| number(p)).collect();
                    format!("\"{s}\": [{}]", probs.join(", "))
                })
                .collect();
            format!("    {{{}}}", stages.join(", "))
        })
        .collect();
    let _ = writeln!(w, "  \"parameters\": [\n{}\n  ],", params.join(",\n"));

    match model.fit_meta() {
        None => w.push_str("  \"fit_meta\": null\n"),
        Some(meta) => {
            let unsupported: Vec<String> = meta.unsupported.iter().map(|(d, s)| format!("[{d}, {s}]")).collect();
            let _ = writeln!(
                w,
                "  \"fit_meta\": {{\"n\": {}, \"log_likelihood\": {}, \"bic\": {}, \"df\": {}, \"unsupported\": [{}]}}",
                meta.n,
                finite_or_null(meta.log_likelihood),
                finite_or_null(meta.bic),
                meta.df,
                unsupported.join(", ")
            );
        }
    }
    w.push_str("}\n");
    out
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    #[allow(dead_code)]
    format_version: u32,
    schema: Vec<VariableDoc>,
    order: Vec<String>,
    constraints: Vec<ConstraintDoc>,
    staging: Vec<Vec<i64>>,
    parameters: Vec<BTreeMap<String, Vec<f64>>>,
    fit_meta: Option<FitMetaDoc>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VariableDoc {
    name: String,
    levels: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AssignmentDoc {
    variable: String,
    level: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstraintDoc {
    #[serde(rename = "if")]
    trigger: AssignmentDoc,
    #[serde(rename = "then")]
    consequence: AssignmentDoc,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FitMetaDoc {
    n: u64,
    log_likelihood: Option<f64>,
    bic: Option<f64>,
    df: usize,
    unsupported: Vec<(usize, usize)>,
}

pub fn parse_model(text: &str) -> Result<StagedTreeModel> {
    // check the version before the rest of the layout, which may differ across versions
    #[derive(Deserialize)]
    struct Loose {
        format_version: Option<u32>,
    }
    let loose: Loose = serde_json::from_str(text)?;
    match loose.format_version {
        Some(FORMAT_VERSION) => {}
        Some(found) => return Err(Error::Version { found, expected: FORMAT_VERSION }),
        None => return Err(Error::Parse("missing format_version".into())),
    }
    let doc: Document = serde_json::from_str(text)?;

    let variables: Vec<Variable> = doc.schema.into_iter().map(|v| Variable::new(v.name, v.levels)).collect();
    let schema = Schema::in_listed_order(variables)?.with_order_by_name(&doc.order)?;
    let constraints = doc
        .constraints
        .iter()
        .map(|c| {
            StructuralConstraint::from_names(
                &schema,
                (&c.trigger.variable, &c.trigger.level),
                (&c.consequence.variable, &c.consequence.level),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let tree = build_event_tree(schema, constraints)?;

    let labels = doc
        .staging
        .iter()
        .enumerate()
        .map(|(d, depth)| {
            depth
                .iter()
                .map(|&s| match s {
                    -1 => Ok(None),
                    s if s >= 0 => Ok(Some(s as usize)),
                    _ => Err(Error::Invariant(format!("invalid stage id {s} at depth {d}"))),
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let staging = Staging::from_labels(&tree, labels.clone())?;
    if (0..staging.depth_count()).any(|d| staging.depth(d) != labels[d].as_slice()) {
        return Err(Error::Invariant("stage ids are not canonical (smallest member vertex)".into()));
    }

    let params = doc
        .parameters
        .into_iter()
        .map(|depth| {
            depth
                .into_iter()
                .map(|(k, v)| {
                    let id = k
                        .parse::<usize>()
                        .map_err(|_| Error::Invariant(format!("parameter key '{k}' is not a stage id")))?;
                    Ok((id, v))
                })
                .collect::<Result<BTreeMap<_, _>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let fit_meta = doc.fit_meta.map(|m| FitMeta {
        n: m.n,
        log_likelihood: m.log_likelihood.unwrap_or(f64::NEG_INFINITY),
        bic: m.bic.unwrap_or(f64::INFINITY),
        df: m.df,
        unsupported: m.unsupported,
    });
    StagedTreeModel::new(tree, staging, params, fit_meta)
}
