use serde::{Deserialize, Serialize};

use super::notebook::{CellKind, CellRecord};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StructureMetrics {
    pub total_cells: u64,
    pub code_cells: u64,
    pub markdown_cells: u64,
    pub raw_cells: u64,
    pub empty_cells: u64,
    pub cells_with_output: u64,
    pub max_execution_count: Option<u64>,
    /// `markdown_cells / code_cells`; `None` when there are no code cells.
    pub md_code_ratio: Option<f64>,
}

pub fn compute_structure_metrics(cells: &[CellRecord]) -> StructureMetrics {
    let mut m = StructureMetrics {
        total_cells: cells.len() as u64,
        ..Default::default()
    };
    for c in cells {
        match c.kind {
            CellKind::Code => {
                m.code_cells += 1;
                if !c.outputs.is_empty() {
                    m.cells_with_output += 1;
                }
                if let Some(n) = c.execution_count {
                    m.max_execution_count = Some(m.max_execution_count.map_or(n, |cur| cur.max(n)));
                }
            }
            CellKind::Markdown => m.markdown_cells += 1,
            CellKind::Raw => m.raw_cells += 1,
        }
        if c.source.trim().is_empty() {
            m.empty_cells += 1;
        }
    }
    m.md_code_ratio = (m.code_cells > 0).then(|| m.markdown_cells as f64 / m.code_cells as f64);
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(kind: CellKind, source: &str, ec: Option<u64>) -> CellRecord {
        CellRecord {
            index: 0,
            kind,
            source: source.into(),
            execution_count: ec,
            outputs: vec![],
        }
    }

    #[test]
    fn max_execution_count_skips_missing() {
        let cells = [
            cell(CellKind::Code, "a", Some(1)),
            cell(CellKind::Code, "b", None),
            cell(CellKind::Code, "c", Some(7)),
        ];
        assert_eq!(compute_structure_metrics(&cells).max_execution_count, Some(7));
        let none = [cell(CellKind::Code, "a", None)];
        assert_eq!(compute_structure_metrics(&none).max_execution_count, None);
    }

    #[test]
    fn ratio() {
        let mut cells: Vec<_> = (0..4).map(|_| cell(CellKind::Markdown, "m", None)).collect();
        cells.extend((0..2).map(|_| cell(CellKind::Code, "c", None)));
        assert_eq!(compute_structure_metrics(&cells).md_code_ratio, Some(2.0));
    }

    #[test]
    fn ratio_undefined_without_code() {
        let cells: Vec<_> = (0..3).map(|_| cell(CellKind::Markdown, "m", None)).collect();
        let m = compute_structure_metrics(&cells);
        assert_eq!(m.md_code_ratio, None);
        assert_eq!(
            serde_json::to_value(&m).unwrap()["md_code_ratio"],
            serde_json::Value::Null
        );
    }

    #[test]
    fn whitespace_only_is_empty() {
        let cells = [cell(CellKind::Code, " \n\t", None), cell(CellKind::Markdown, "x", None)];
        assert_eq!(compute_structure_metrics(&cells).empty_cells, 1);
    }
}
