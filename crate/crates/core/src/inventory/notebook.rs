use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::language::{detect_language_version, Language};
use super::metrics::{compute_structure_metrics, StructureMetrics};
use super::naming::{check_name, NameFlags};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    Code,
    Markdown,
    Raw,
}

impl CellKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CellKind::Code => "code",
            CellKind::Markdown => "markdown",
            CellKind::Raw => "raw",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "code" => Some(CellKind::Code),
            "markdown" => Some(CellKind::Markdown),
            "raw" => Some(CellKind::Raw),
            _ => None,
        }
    }
}

/// One stored or re-executed output, in nbformat 4 vocabulary.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OutputBundle {
    pub output_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub data: BTreeMap<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub execution_count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ename: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evalue: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub traceback: Vec<String>,
}

impl OutputBundle {
    pub fn stream(name: &str, text: &str) -> Self {
        Self {
            output_type: "stream".into(),
            name: Some(name.into()),
            text: Some(text.into()),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub index: usize,
    pub kind: CellKind,
    pub source: String,
    pub execution_count: Option<u64>,
    pub outputs: Vec<OutputBundle>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NotebookRecord {
    pub repo_id: i64,
    pub path: String,
    pub nbformat: (u32, u32),
    pub kernel_name: Option<String>,
    pub language: Language,
    pub language_version: Option<String>,
    pub metrics: StructureMetrics,
    pub name_flags: NameFlags,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedNotebook {
    pub record: NotebookRecord,
    pub cells: Vec<CellRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvalidNotebook {
    pub reason: String,
}

impl InvalidNotebook {
    fn new(reason: impl Into<String>) -> Self {
        Self { reason: reason.into() }
    }
}

/// Joins nbformat's "multiline string" (a string or a list of strings).
pub fn multiline(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Array(parts) => parts.iter().filter_map(Value::as_str).collect(),
        _ => String::new(),
    }
}

fn mime_value(v: &Value) -> Value {
    match v {
        Value::Array(_) => Value::String(multiline(v)),
        other => other.clone(),
    }
}

/// Reads one nbformat 4 output object. `None` for non-objects.
pub fn output_from_json(v: &Value) -> Option<OutputBundle> {
    v.as_object().map(parse_output_v4)
}

/// Inverse of [`output_from_json`] for the fields this crate keeps.
pub fn output_to_json(o: &OutputBundle) -> Value {
    let mut m = Map::new();
    m.insert("output_type".into(), Value::String(o.output_type.clone()));
    if let Some(n) = &o.name {
        m.insert("name".into(), Value::String(n.clone()));
    }
    if let Some(t) = &o.text {
        m.insert("text".into(), Value::String(t.clone()));
    }
    if !o.data.is_empty() || matches!(o.output_type.as_str(), "execute_result" | "display_data") {
        m.insert("data".into(), Value::Object(o.data.clone().into_iter().collect()));
        m.insert("metadata".into(), Value::Object(Map::new()));
    }
    if o.output_type == "execute_result" {
        m.insert(
            "execution_count".into(),
            o.execution_count.map(Value::from).unwrap_or(Value::Null),
        );
    }
    if o.output_type == "error" {
        m.insert("ename".into(), Value::String(o.ename.clone().unwrap_or_default()));
        m.insert("evalue".into(), Value::String(o.evalue.clone().unwrap_or_default()));
        m.insert("traceback".into(), Value::from(o.traceback.clone()));
    }
    Value::Object(m)
}

fn count(v: Option<&Value>) -> Option<u64> {
    v.and_then(Value::as_u64)
}

fn parse_output_v4(o: &Map<String, Value>) -> OutputBundle {
    let output_type = o.get("output_type").and_then(Value::as_str).unwrap_or("").to_string();
    let data = o
        .get("data")
        .and_then(Value::as_object)
        .map(|d| d.iter().map(|(k, v)| (k.clone(), mime_value(v))).collect())
        .unwrap_or_default();
    OutputBundle {
        name: o.get("name").and_then(Value::as_str).map(str::to_string),
        text: o.get("text").map(multiline),
        data,
        execution_count: count(o.get("execution_count")),
        ename: o.get("ename").and_then(Value::as_str).map(str::to_string),
        evalue: o.get("evalue").and_then(Value::as_str).map(str::to_string),
        traceback: o
            .get("traceback")
            .and_then(Value::as_array)
            .map(|t| t.iter().filter_map(Value::as_str).map(str::to_string).collect())
            .unwrap_or_default(),
        output_type,
    }
}

const V3_MIME_KEYS: &[(&str, &str)] = &[
    ("text", "text/plain"),
    ("html", "text/html"),
    ("png", "image/png"),
    ("jpeg", "image/jpeg"),
    ("svg", "image/svg+xml"),
    ("latex", "text/latex"),
    ("json", "application/json"),
    ("javascript", "application/javascript"),
    ("pdf", "application/pdf"),
];

fn parse_output_v3(o: &Map<String, Value>) -> OutputBundle {
    let raw_type = o.get("output_type").and_then(Value::as_str).unwrap_or("");
    match raw_type {
        "stream" => OutputBundle::stream(
            o.get("stream").and_then(Value::as_str).unwrap_or("stdout"),
            &o.get("text").map(multiline).unwrap_or_default(),
        ),
        "pyerr" | "error" => OutputBundle {
            output_type: "error".into(),
            ename: o.get("ename").and_then(Value::as_str).map(str::to_string),
            evalue: o.get("evalue").and_then(Value::as_str).map(str::to_string),
            traceback: o
                .get("traceback")
                .and_then(Value::as_array)
                .map(|t| t.iter().filter_map(Value::as_str).map(str::to_string).collect())
                .unwrap_or_default(),
            ..Default::default()
        },
        other => {
            let data = V3_MIME_KEYS
                .iter()
                .filter_map(|(k, mime)| o.get(*k).map(|v| (mime.to_string(), mime_value(v))))
                .collect();
            OutputBundle {
                output_type: if other == "pyout" {
                    "execute_result".into()
                } else {
                    "display_data".into()
                },
                data,
                execution_count: count(o.get("prompt_number")),
                ..Default::default()
            }
        }
    }
}

fn outputs(cell: &Map<String, Value>, v3: bool) -> Vec<OutputBundle> {
    cell.get("outputs")
        .and_then(Value::as_array)
        .map(|outs| {
            outs.iter()
                .filter_map(Value::as_object)
                .map(|o| if v3 { parse_output_v3(o) } else { parse_output_v4(o) })
                .collect()
        })
        .unwrap_or_default()
}

fn parse_cells(cells: &[Value], v3: bool) -> Vec<CellRecord> {
    cells
        .iter()
        .filter_map(Value::as_object)
        .enumerate()
        .map(|(index, c)| {
            let kind = match c.get("cell_type").and_then(Value::as_str).unwrap_or("") {
                "code" => CellKind::Code,
                "markdown" | "heading" => CellKind::Markdown,
                _ => CellKind::Raw,
            };
            let source_key = if v3 && kind == CellKind::Code {
                "input"
            } else {
                "source"
            };
            let source = c.get(source_key).map(multiline).unwrap_or_default();
            let (execution_count, outs) = if kind == CellKind::Code {
                let ec = if v3 {
                    count(c.get("prompt_number"))
                } else {
                    count(c.get("execution_count"))
                };
                (ec, outputs(c, v3))
            } else {
                (None, Vec::new())
            };
            CellRecord {
                index,
                kind,
                source,
                execution_count,
                outputs: outs,
            }
        })
        .collect()
}

/// Parses notebook JSON text. `path` only feeds the naming checks.
pub fn parse_notebook_str(text: &str, path: &str) -> Result<ParsedNotebook, InvalidNotebook> {
    let root: Value = serde_json::from_str(text).map_err(|_| InvalidNotebook::new("json parse"))?;
    let obj = root
        .as_object()
        .ok_or_else(|| InvalidNotebook::new("not a json object"))?;
    let major = obj
        .get("nbformat")
        .and_then(Value::as_u64)
        .ok_or_else(|| InvalidNotebook::new("missing nbformat"))? as u32;
    let minor = obj.get("nbformat_minor").and_then(Value::as_u64).unwrap_or(0) as u32;
    let empty = Map::new();
    let metadata = obj.get("metadata").and_then(Value::as_object).unwrap_or(&empty);

    let cells = match major {
        4 | 5 => {
            let cells = obj
                .get("cells")
                .and_then(Value::as_array)
                .ok_or_else(|| InvalidNotebook::new("missing cells array"))?;
            parse_cells(cells, false)
        }
        3 => {
            let worksheets = obj
                .get("worksheets")
                .and_then(Value::as_array)
                .ok_or_else(|| InvalidNotebook::new("missing cells array"))?;
            let flat: Vec<Value> = worksheets
                .iter()
                .filter_map(|w| w.get("cells").and_then(Value::as_array))
                .flatten()
                .cloned()
                .collect();
            parse_cells(&flat, true)
        }
        other => return Err(InvalidNotebook::new(format!("unsupported nbformat {other}"))),
    };

    let (language, language_version) = detect_language_version(metadata);
    let kernel_name = metadata
        .get("kernelspec")
        .and_then(|k| k.get("name"))
        .and_then(Value::as_str)
        .map(str::to_string);
    let metrics = compute_structure_metrics(&cells);
    let record = NotebookRecord {
        repo_id: 0,
        path: path.to_string(),
        nbformat: (major, minor),
        kernel_name,
        language,
        language_version,
        metrics,
        name_flags: check_name(path),
    };
    Ok(ParsedNotebook { record, cells })
}

pub fn parse_notebook(file: &Path, display_path: &str) -> Result<ParsedNotebook, InvalidNotebook> {
    let bytes = std::fs::read(file).map_err(|e| InvalidNotebook::new(format!("unreadable: {e}")))?;
    let text = String::from_utf8(bytes).map_err(|_| InvalidNotebook::new("json parse"))?;
    parse_notebook_str(&text, display_path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn minimal_v4() {
        let nb = json!({"nbformat": 4, "nbformat_minor": 2, "metadata": {},
            "cells": [{"cell_type": "code", "source": "x = 1", "execution_count": 1, "outputs": [], "metadata": {}}]});
        let p = parse_notebook_str(&nb.to_string(), "a.ipynb").unwrap();
        assert_eq!(p.record.metrics.total_cells, 1);
        assert_eq!(p.record.nbformat, (4, 2));
        assert_eq!(p.cells[0].execution_count, Some(1));
    }

    #[test]
    fn not_json() {
        assert_eq!(
            parse_notebook_str("not json", "a.ipynb").unwrap_err().reason,
            "json parse"
        );
    }

    #[test]
    fn missing_cells_and_bad_version() {
        let nb = json!({"nbformat": 4, "metadata": {}});
        assert_eq!(
            parse_notebook_str(&nb.to_string(), "a.ipynb").unwrap_err().reason,
            "missing cells array"
        );
        let nb = json!({"nbformat": 2, "cells": []});
        assert_eq!(
            parse_notebook_str(&nb.to_string(), "a.ipynb").unwrap_err().reason,
            "unsupported nbformat 2"
        );
    }

    #[test]
    fn mixed_cells() {
        let nb = json!({"nbformat": 4, "nbformat_minor": 4, "metadata": {}, "cells": [
            {"cell_type": "markdown", "source": ["# Title\n", "text"], "metadata": {}},
            {"cell_type": "code", "source": ["import os\n", "print(1)"], "execution_count": 3, "metadata": {},
             "outputs": [{"output_type": "stream", "name": "stdout", "text": ["1\n"]}]},
            {"cell_type": "raw", "source": "raw", "metadata": {}},
            {"cell_type": "markdown", "source": "", "metadata": {}},
            {"cell_type": "code", "source": "", "execution_count": null, "outputs": [], "metadata": {}}
        ]});
        let p = parse_notebook_str(&nb.to_string(), "a.ipynb").unwrap();
        let m = &p.record.metrics;
        assert_eq!((m.code_cells, m.markdown_cells, m.raw_cells), (2, 2, 1));
        assert_eq!(m.empty_cells, 2);
        assert_eq!(p.cells[0].source, "# Title\ntext");
        assert_eq!(p.cells[1].outputs, vec![OutputBundle::stream("stdout", "1\n")]);
    }

    #[test]
    fn v3_worksheets_are_flattened() {
        let nb = json!({"nbformat": 3, "nbformat_minor": 0, "metadata": {"name": ""},
        "worksheets": [{"cells": [
            {"cell_type": "heading", "level": 1, "source": ["Intro"]},
            {"cell_type": "code", "language": "python", "input": ["1 + 1"], "prompt_number": 2,
             "outputs": [{"output_type": "pyout", "prompt_number": 2, "text": ["2"], "metadata": {}}]},
            {"cell_type": "code", "language": "python", "input": "print('x')", "prompt_number": 3,
             "outputs": [{"output_type": "stream", "stream": "stdout", "text": "x\n"}]}
        ]}]});
        let p = parse_notebook_str(&nb.to_string(), "old.ipynb").unwrap();
        assert_eq!(p.cells.len(), 3);
        assert_eq!(p.cells[0].kind, CellKind::Markdown);
        assert_eq!(p.cells[1].source, "1 + 1");
        assert_eq!(p.cells[1].outputs[0].output_type, "execute_result");
        assert_eq!(p.cells[1].outputs[0].data["text/plain"], json!("2"));
        assert_eq!(p.cells[2].outputs[0], OutputBundle::stream("stdout", "x\n"));
        assert_eq!(p.record.metrics.max_execution_count, Some(3));
    }

    #[test]
    fn outputs_only_on_code_cells() {
        let nb = json!({"nbformat": 4, "nbformat_minor": 0, "metadata": {}, "cells": [
            {"cell_type": "markdown", "source": "m", "execution_count": 4,
             "outputs": [{"output_type": "stream", "name": "stdout", "text": "x"}], "metadata": {}}]});
        let p = parse_notebook_str(&nb.to_string(), "a.ipynb").unwrap();
        assert!(p.cells[0].outputs.is_empty());
        assert_eq!(p.cells[0].execution_count, None);
    }
}
