//! Command-line front end. `run` is the whole program minus process exit.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::baselines::logistic_univariate;
use crate::bn::{
    average_network, bn_to_staged_tree, bootstrap_arc_strength, learn_dag_hc_report, ArcStrengthTable, HcConfig,
};
use crate::error::{Error, Result};
use crate::estimation::{bic_value, degrees_of_freedom, log_likelihood, Dataset};
use crate::independence::{csi_holds, dependence_subtree, minimal_dag, CsiStatement};
use crate::inference::{query, sample, Query};
use crate::io::{self, DotOptions, MissingPolicy};
use crate::learning::{learn_bhc, learn_kparents, SearchConfig};
use crate::model::{build_event_tree, EventTree, FitMeta, Schema, StagedTreeModel};
use crate::synthetic;

#[derive(Parser, Debug)]
#[command(name = "stgt", version, about = "Staged tree and Bayesian network learning for categorical data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct DataArgs {
    /// CSV file with a header row
    #[arg(long)]
    data: PathBuf,
    /// Schema file, one `name: level1, level2, ...` line per variable
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Comma-separated variable order (defaults to column order)
    #[arg(long)]
    order: Option<String>,
    /// Structural constraints file with `IF var=level THEN var=level` lines
    #[arg(long)]
    constraints: Option<PathBuf>,
    /// Treatment of rows with empty or NA cells
    #[arg(long, value_enum, default_value_t = Missing::Drop)]
    missing: Missing,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Missing {
    Drop,
    Error,
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq, Eq)]
enum Algo {
    Bhc,
    Kparents,
    Bn,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SynthModel {
    Trajectory,
    Fig1,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Learn a staged tree (or a Bayesian network, written as its staged tree)
    Learn {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value_t = Algo::Bhc)]
        algo: Algo,
        /// Maximum number of parents (required for kparents)
        #[arg(long)]
        k: Option<usize>,
        /// Pseudocount added to every allowed edge
        #[arg(long, default_value_t = 0.0)]
        alpha: f64,
        /// Forbidden edges for bn, e.g. `A->B` or `A->*`
        #[arg(long)]
        forbid: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Bootstrap arc strengths of tabu-searched networks (TSV)
    Strength {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long = "B", default_value_t = 100)]
        replications: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        alpha: f64,
        #[arg(long)]
        forbid: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Averaged network from an arc-strength table (DOT)
    Avgnet {
        /// TSV written by `strength`
        strengths: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Conditional probability of `--target` given `--given`
    Query {
        model: PathBuf,
        #[arg(long)]
        target: String,
        #[arg(long)]
        given: Option<String>,
    },
    /// Forward samples from a model (CSV)
    Sample {
        model: PathBuf,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Minimal DAG of a staged tree (DOT)
    Mindag {
        model: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dependence subtree of one variable (DOT)
    Subtree {
        model: PathBuf,
        #[arg(long)]
        var: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Decide `target _||_ var | given` (prints true or false)
    Csi {
        model: PathBuf,
        #[arg(long)]
        target: String,
        /// Comma-separated variables claimed independent of the target
        #[arg(long)]
        var: String,
        /// Context assignments, e.g. `A=1,B=0`
        #[arg(long)]
        given: Option<String>,
    },
    /// Render a staged tree (DOT)
    Dot {
        model: PathBuf,
        /// Omit probabilities from edge labels
        #[arg(long)]
        structure_only: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Univariate logistic regression (TSV, one row per term)
    Logit {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        response: String,
        #[arg(long)]
        predictor: String,
    },
    /// Write a synthetic dataset drawn from a bundled model (CSV)
    Synth {
        #[arg(long, value_enum, default_value_t = SynthModel::Trajectory)]
        model: SynthModel,
        #[arg(long, default_value_t = 146)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Failure of a run: usage problems exit with 2, everything else with 1.
enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Parses `args` (including the program name) and executes one subcommand.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                2
            } else {
                let _ = write!(stdout, "{text}");
                0
            };
        }
    };
    match execute(cli.command, stdout, stderr) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            2
        }
        Err(Failure::Runtime(e)) => {
            let _ = writeln!(stderr, "error: {e}");
            1
        }
    }
}

struct Loaded {
    tree: EventTree,
    data: Dataset,
}

fn load_data(args: &DataArgs, stderr: &mut dyn Write) -> Result<Loaded> {
    let policy = match args.missing {
        Missing::Drop => MissingPolicy::DropRow,
        Missing::Error => MissingPolicy::Error,
    };
    let declared = match &args.schema {
        Some(path) => Some(Schema::in_listed_order(io::parse_schema(&std::fs::read_to_string(path)?)?)?),
        None => None,
    };
    let csv = io::read_csv(&args.data, declared.as_ref(), policy)?;
    if csv.dropped > 0 {
        let _ = writeln!(stderr, "dropped {} rows with missing values, kept {}", csv.dropped, csv.kept);
    }
    let mut data = csv.dataset;
    if let Some(order) = &args.order {
        let schema = data.schema().with_order_by_name(&io::parse_order(order))?;
        data = data.with_schema(schema)?;
    }
    let constraints = match &args.constraints {
        Some(path) => io::parse_constraints(&std::fs::read_to_string(path)?, data.schema())?,
        None => Vec::new(),
    };
    let tree = build_event_tree(data.schema().clone(), constraints)?;
    Ok(Loaded { tree, data })
}

fn load_model(path: &Path) -> Result<StagedTreeModel> {
    io::parse_model(&std::fs::read_to_string(path)?)
}

fn emit(out: &Option<PathBuf>, text: &str, stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => stdout.write_all(text.as_bytes())?,
    }
    Ok(())
}

/// `A->B`, `A->*` or `*->B`.
fn parse_forbidden(rules: &[String], schema: &Schema) -> Result<BTreeSet<(usize, usize)>> {
    let mut out = BTreeSet::new();
    let all: Vec<usize> = (0..schema.len()).collect();
    for rule in rules {
        let (from, to) = rule
            .split_once("->")
            .ok_or_else(|| Error::Parse(format!("forbidden edge '{rule}' is not of the form A->B")))?;
        let side = |s: &str| -> Result<Vec<usize>> {
            match s.trim() {
                "*" => Ok(all.clone()),
                name => Ok(vec![schema.var_index(name)?]),
            }
        };
        for u in side(from)? {
            for v in side(to)? {
                if u != v {
                    out.insert((u, v));
                }
            }
        }
    }
    Ok(out)
}

/// Staged tree of a learned network with fit statistics recomputed on the data.
fn bn_as_staged_tree(report: &crate::bn::HcReport, data: &Dataset) -> Result<StagedTreeModel> {
    let m = bn_to_staged_tree(&report.bn, data.schema().order())?;
    let ll = log_likelihood(&m, data)?;
    let df = degrees_of_freedom(m.tree(), m.staging());
    let meta =
        FitMeta { n: data.n(), log_likelihood: ll, bic: bic_value(ll, df, data.n()), df, unsupported: Vec::new() };
    StagedTreeModel::new(m.tree().clone(), m.staging().clone(), m.parameters().to_vec(), Some(meta))
}

pub fn strength_tsv(table: &ArcStrengthTable, schema: &Schema) -> String {
    let mut out = String::from("from\tto\tstrength\n");
    for u in 0..table.n_vars() {
        for v in 0..table.n_vars() {
            if u != v {
                let _ =
                    writeln!(out, "{}\t{}\t{}", schema.variable(u).name, schema.variable(v).name, table.strength(u, v));
            }
        }
    }
    out
}

/// Inverse of [`strength_tsv`]; variables are numbered by first appearance.
pub fn parse_strength_tsv(text: &str) -> Result<(Vec<String>, ArcStrengthTable)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    if lines.next().map(str::trim) != Some("from\tto\tstrength") {
        return Err(Error::Parse("arc-strength table must start with 'from\\tto\\tstrength'".into()));
    }
    let mut names: Vec<String> = Vec::new();
    let mut entries = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split('\t').collect();
        let [from, to, s] = fields[..] else {
            return Err(Error::Parse(format!("arc-strength line {}: expected 3 fields", i + 2)));
        };
        let s: f64 = s.trim().parse().map_err(|_| Error::Parse(format!("arc-strength line {}: bad number", i + 2)))?;
        let mut id = |n: &str| match names.iter().position(|x| x == n) {
            Some(p) => p,
            None => {
                names.push(n.to_string());
                names.len() - 1
            }
        };
        entries.push((id(from), id(to), s));
    }
    let n = names.len();
    let mut freq = vec![0.0; n * n];
    for (u, v, s) in entries {
        freq[u * n + v] = s;
    }
    Ok((names, ArcStrengthTable::new(n, 0, freq)?))
}

fn execute(cmd: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<()> {
    match cmd {
        Command::Learn { data, algo, k, alpha, forbid, out } => {
            if algo == Algo::Kparents && k.is_none() {
                return Err(Failure::Usage("--algo kparents requires --k".into()));
            }
            let loaded = load_data(&data, stderr)?;
            let model = match algo {
                Algo::Bhc => learn_bhc(&loaded.tree, &loaded.data, &SearchConfig { alpha, ..Default::default() })?,
                Algo::Kparents => {
                    learn_kparents(&loaded.tree, &loaded.data, &SearchConfig { alpha, k, ..Default::default() })?
                }
                Algo::Bn => {
                    if !loaded.tree.constraints().is_empty() {
                        let _ = writeln!(stderr, "warning: structural constraints are ignored by --algo bn");
                    }
                    let forbidden = parse_forbidden(&forbid, loaded.data.schema())?;
                    let cfg = HcConfig { alpha, ..Default::default() };
                    let report = learn_dag_hc_report(&loaded.data, loaded.data.schema().order(), &forbidden, &cfg)?;
                    bn_as_staged_tree(&report, &loaded.data)?
                }
            };
            let doc = io::serialize_model(&model);
            let bic = model.fit_meta().map_or(f64::NAN, |m| m.bic);
            match out {
                Some(path) => {
                    std::fs::write(path, doc)?;
                    writeln!(stdout, "{bic}")?;
                }
                None => {
                    stdout.write_all(doc.as_bytes())?;
                    writeln!(stderr, "BIC {bic}")?;
                }
            }
        }
        Command::Strength { data, replications, seed, alpha, forbid, out } => {
            let loaded = load_data(&data, stderr)?;
            let schema = loaded.data.schema();
            let forbidden = parse_forbidden(&forbid, schema)?;
            let cfg = HcConfig { alpha, ..Default::default() };
            let table = bootstrap_arc_strength(&loaded.data, schema.order(), &forbidden, replications, seed, &cfg)?;
            emit(&out, &strength_tsv(&table, schema), stdout)?;
        }
        Command::Avgnet { strengths, threshold, out } => {
            let (names, table) = parse_strength_tsv(&std::fs::read_to_string(strengths)?)?;
            let dag = average_network(&table, threshold)?;
            // a schema only to carry names into the renderer
            let vars = names.iter().map(|n| crate::model::Variable::new(n.as_str(), ["0", "1"])).collect();
            emit(&out, &io::dag_dot(&dag, &Schema::in_listed_order(vars)?), stdout)?;
        }
        Command::Query { model, target, given } => {
            let m = load_model(&model)?;
            let q = Query {
                target: io::parse_assignments(&target, m.schema())?,
                evidence: match given {
                    Some(g) => io::parse_assignments(&g, m.schema())?,
                    None => Vec::new(),
                },
            };
            if q.target.is_empty() {
                return Err(Failure::Usage("--target needs at least one VAR=level".into()));
            }
            writeln!(stdout, "{}", query(&m, &q)?)?;
        }
        Command::Sample { model, n, seed, out } => {
            let m = load_model(&model)?;
            let batch = sample(&m, n, seed);
            for w in &batch.warnings {
                writeln!(stderr, "warning: {w}")?;
            }
            let mut buf = Vec::new();
            io::write_csv(&mut buf, m.schema(), &batch.rows)?;
            emit(&out, &String::from_utf8(buf).expect("level names are UTF-8"), stdout)?;
        }
        Command::Mindag { model, out } => {
            let m = load_model(&model)?;
            emit(&out, &io::dag_dot(&minimal_dag(&m), m.schema()), stdout)?;
        }
        Command::Subtree { model, var, out } => {
            let m = load_model(&model)?;
            let target = m.schema().var_index(&var)?;
            let sub = dependence_subtree(&m, target)?;
            emit(&out, &io::subtree_dot(&sub, m.schema(), DotOptions::default()), stdout)?;
        }
        Command::Csi { model, target, var, given } => {
            let m = load_model(&model)?;
            let schema = m.schema();
            let stmt = CsiStatement {
                target: schema.var_index(&target)?,
                separated: io::parse_order(&var).iter().map(|v| schema.var_index(v)).collect::<Result<_>>()?,
                context: match given {
                    Some(g) => io::parse_assignments(&g, schema)?,
                    None => Vec::new(),
                },
            };
            writeln!(stdout, "{}", csi_holds(&m, &stmt)?)?;
        }
        Command::Dot { model, structure_only, out } => {
            let m = load_model(&model)?;
            emit(&out, &io::tree_dot(&m, DotOptions { probabilities: !structure_only }), stdout)?;
        }
        Command::Logit { data, response, predictor } => {
            let loaded = load_data(&data, stderr)?;
            let schema = loaded.data.schema();
            let r = logistic_univariate(&loaded.data, schema.var_index(&response)?, schema.var_index(&predictor)?)?;
            for level in &r.dropped_levels {
                writeln!(stderr, "warning: level '{level}' of '{}' has no observations; dropped", r.predictor)?;
            }
            if !r.converged {
                writeln!(stderr, "warning: IRLS did not converge after {} iterations", r.iterations)?;
            }
            writeln!(stdout, "term\tcoefficient\tstd_error\todds_ratio\tci_low\tci_high\tp_value\tseparated")?;
            for t in &r.terms {
                let term = if t.intercept { "(Intercept)".to_string() } else { format!("{}{}", r.predictor, t.level) };
                writeln!(
                    stdout,
                    "{term}\t{}\t{}\t{}\t{}\t{}\t{:e}\t{}",
                    t.coefficient, t.std_error, t.odds_ratio, t.ci_low, t.ci_high, t.p_value, t.separated
                )?;
            }
        }
        Command::Synth { model, n, seed, out } => {
            let m = match model {
                SynthModel::Trajectory => synthetic::trajectory_model(),
                SynthModel::Fig1 => synthetic::fig1_model(),
            };
            let batch = sample(&m, n, seed);
            let mut buf = Vec::new();
            io::write_csv(&mut buf, m.schema(), &batch.rows)?;
            emit(&out, &String::from_utf8(buf).expect("level names are UTF-8"), stdout)?;
        }
    }
    Ok(())
}
