//! Static analysis of notebook code cells.

pub mod cells;
pub mod imports;
pub mod logical;
pub mod python;
pub mod style;
pub mod tokenize;

pub use cells::{code_views, python_view, Assembled, CellView};
pub use imports::{classify_import_locality, extract_imports, ImportForm, ImportRecord, Locality, ParseMode};
pub use style::{style_check, StyleFinding, STYLE_CODES};
