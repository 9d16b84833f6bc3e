//! The record file an executor writes after running a notebook.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub const RECORD_SCHEMA_VERSION: u32 = 1;

/// Ename an executor reports when a single cell outlives `--cell-timeout`.
pub const CELL_TIMEOUT_ENAME: &str = "CellTimeoutError";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Error,
    Skipped,
}

impl CellStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CellStatus::Ok => "ok",
            CellStatus::Error => "error",
            CellStatus::Skipped => "skipped",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "ok" => CellStatus::Ok,
            "error" => CellStatus::Error,
            "skipped" => CellStatus::Skipped,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Traceback {
    Lines(Vec<String>),
    Text(String),
}

impl Traceback {
    pub fn text(&self) -> String {
        match self {
            Traceback::Lines(l) => l.join("\n"),
            Traceback::Text(t) => t.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordCell {
    /// Position of the cell in the notebook, counting every cell kind.
    pub index: usize,
    pub status: CellStatus,
    #[serde(default)]
    pub duration_s: f64,
    /// nbformat 4 output objects.
    #[serde(default)]
    pub outputs: Vec<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ename: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evalue: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub traceback: Option<Traceback>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordFile {
    pub schema_version: u32,
    pub notebook: String,
    #[serde(default)]
    pub interpreter: Option<String>,
    pub cells: Vec<RecordCell>,
}

impl RecordFile {
    /// Parses and checks the structural rules: supported schema version,
    /// strictly increasing indices, nothing but skipped cells after an error.
    pub fn parse(text: &str) -> Result<Self> {
        let rec: RecordFile = serde_json::from_str(text)?;
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| {
            Err(Error::MalformedResponse {
                message: m,
                raw: String::new(),
            })
        };
        if self.schema_version != RECORD_SCHEMA_VERSION {
            return bad(format!("unsupported record schema_version {}", self.schema_version));
        }
        let mut prev: Option<usize> = None;
        let mut errored = false;
        for c in &self.cells {
            if prev.is_some_and(|p| c.index <= p) {
                return bad(format!("cell index {} not increasing", c.index));
            }
            prev = Some(c.index);
            if errored && c.status != CellStatus::Skipped {
                return bad(format!("cell {} ran after an error", c.index));
            }
            errored |= c.status == CellStatus::Error;
        }
        Ok(())
    }

    pub fn first_error(&self) -> Option<&RecordCell> {
        self.cells.iter().find(|c| c.status == CellStatus::Error)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_validates() {
        let text = r#"{"schema_version": 1, "notebook": "a.ipynb", "interpreter": "3.9.1",
            "cells": [{"index": 0, "status": "ok", "duration_s": 0.1,
                       "outputs": [{"output_type": "stream", "name": "stdout", "text": "1\n"}]},
                      {"index": 2, "status": "error", "ename": "NameError", "evalue": "x",
                       "traceback": ["line 1", "line 2"]},
                      {"index": 3, "status": "skipped"}]}"#;
        let r = RecordFile::parse(text).unwrap();
        assert_eq!(r.first_error().unwrap().index, 2);
        assert_eq!(r.cells[1].traceback.as_ref().unwrap().text(), "line 1\nline 2");
    }

    #[test]
    fn rejects_structural_violations() {
        let mk = |cells: &str, v: u32| format!(r#"{{"schema_version": {v}, "notebook": "a", "cells": [{cells}]}}"#);
        assert!(RecordFile::parse(&mk("", 2)).is_err());
        assert!(RecordFile::parse(&mk(r#"{"index": 1, "status": "ok"}, {"index": 1, "status": "ok"}"#, 1)).is_err());
        assert!(RecordFile::parse(&mk(
            r#"{"index": 0, "status": "error"}, {"index": 1, "status": "ok"}"#,
            1
        ))
        .is_err());
        assert!(RecordFile::parse(&mk(r#"{"index": 0, "status": "maybe"}"#, 1)).is_err());
    }

    #[test]
    fn round_trip_is_stable() {
        let r = RecordFile {
            schema_version: 1,
            notebook: "n.ipynb".into(),
            interpreter: Some("3.8".into()),
            cells: vec![RecordCell {
                index: 0,
                status: CellStatus::Error,
                duration_s: 0.5,
                outputs: vec![],
                ename: Some("KeyError".into()),
                evalue: Some("'a'".into()),
                traceback: Some(Traceback::Text("tb".into())),
            }],
        };
        let text = serde_json::to_string(&r).unwrap();
        assert_eq!(RecordFile::parse(&text).unwrap(), r);
    }
}
