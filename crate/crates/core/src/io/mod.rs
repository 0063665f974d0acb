//! Reading data and configuration, model documents, and DOT rendering.

pub mod document;
pub mod dot;
pub mod table;
pub mod text;

pub use document::{parse_model, serialize_model, FORMAT_VERSION};
pub use dot::{dag_dot, subtree_dot, tree_dot, DotOptions};
pub use table::{read_csv, read_csv_from, write_csv, CsvData, MissingPolicy};
pub use text::{parse_assignments, parse_constraints, parse_order, parse_schema};
