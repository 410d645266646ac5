//! JSON-lines serialization. Every record carries the schema tag
//! "layoutforge/1" and a `type` discriminator so files can be mixed and
//! partially consumed.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Instruction, Layout, SemanticGraph};

pub const SCHEMA: &str = "layoutforge/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Record {
    Layout {
        schema: String,
        layout: Layout,
    },
    Graph {
        schema: String,
        graph: SemanticGraph,
    },
    Instruction {
        schema: String,
        instruction: Instruction,
    },
    /// One toy-corpus entry: layout plus its ground-truth graph and the
    /// instruction derived from it, with the per-object style ids and raw
    /// feature vectors the VQ stage trains on.
    Sample {
        schema: String,
        layout: Layout,
        graph: SemanticGraph,
        instruction: Instruction,
        styles: Vec<usize>,
        feature_vectors: Vec<Vec<f64>>,
    },
    /// A zero-shot task request/result pair.
    Task {
        schema: String,
        task: String,
        instruction: Instruction,
        known: Option<Layout>,
        result: Layout,
    },
}

impl Record {
    pub fn schema(&self) -> &str {
        match self {
            Record::Layout { schema, .. }
            | Record::Graph { schema, .. }
            | Record::Instruction { schema, .. }
            | Record::Sample { schema, .. }
            | Record::Task { schema, .. } => schema,
        }
    }
}

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: unsupported schema {found:?}, expected {expected:?}")]
    Schema { line: usize, found: String, expected: String },
}

pub fn write_records<W: Write>(mut w: W, records: &[Record]) -> Result<(), JsonlError> {
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| JsonlError::Parse { line: 0, source: e })?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_records<R: BufRead>(r: R) -> Result<Vec<Record>, JsonlError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record =
            serde_json::from_str(&line).map_err(|e| JsonlError::Parse { line: i + 1, source: e })?;
        if rec.schema() != SCHEMA {
            return Err(JsonlError::Schema {
                line: i + 1,
                found: rec.schema().to_string(),
                expected: SCHEMA.to_string(),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::{Bounds, LayoutKind, ObjectRecord};

    #[test]
    fn roundtrip_layout_record() {
        let layout = Layout {
            kind: LayoutKind::TwoD,
            bounds: Bounds::canvas(512.0, 512.0),
            objects: vec![ObjectRecord {
                category: 1,
                features: vec![0, 3, 2],
                location: vec![100.0, 200.0],
                size: vec![50.0, 30.0],
                rotation: 0.0,
            }],
            product_region: Some(crate::core::Rect { x: 128.0, y: 128.0, w: 256.0, h: 256.0 }),
        };
        let rec = Record::Layout { schema: SCHEMA.into(), layout };
        let mut buf = Vec::new();
        write_records(&mut buf, std::slice::from_ref(&rec)).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\"schema\":\"layoutforge/1\""));
        let back = read_records(&buf[..]).unwrap();
        assert_eq!(back, vec![rec]);
    }

    #[test]
    fn rejects_unknown_schema() {
        let line = br#"{"type":"layout","schema":"other/9","layout":{"kind":"2d","bounds":{"x":1.0,"y":1.0,"z":null},"objects":[],"product_region":null}}"#;
        let err = read_records(&line[..]).unwrap_err();
        assert!(matches!(err, JsonlError::Schema { .. }));
    }
}
