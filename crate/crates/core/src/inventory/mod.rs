//! Notebook parsing and structural metrics.

pub mod language;
pub mod metrics;
pub mod naming;
pub mod notebook;

pub use language::{detect_language_version, Language};
pub use metrics::{compute_structure_metrics, StructureMetrics};
pub use naming::{check_name, NameFlags};
pub use notebook::{
    output_from_json, output_to_json, parse_notebook, parse_notebook_str, CellKind, CellRecord, InvalidNotebook,
    NotebookRecord, OutputBundle, ParsedNotebook,
};
