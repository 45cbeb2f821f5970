//! File formats: edge lists, dense adjacency CSV, dataset CSV, JSON sidecars.
//!
//! Edge lists are whitespace-separated `from to weight` triples, one per line,
//! with 0-based node indices and weight 1 for binary graphs. Dataset CSVs
//! carry a `x1,...,xd` header. Floats are written in shortest round-trip form
//! so identical runs produce byte-identical files.

use crate::bitmat::BitMatrix;
use crate::synthetic::{Dataset, WeightedGraph};
use nalgebra::DMatrix;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: expected `from to weight`, got {content:?}")]
    MalformedEdgeLine { line: usize, content: String },
    #[error("line {line}: {message}")]
    MalformedCsv { line: usize, message: String },
    #[error("edge ({from}, {to}) out of range for {d} nodes")]
    EdgeOutOfRange { from: usize, to: usize, d: usize },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub fn write_edge_list(mut w: impl Write, adj: &BitMatrix) -> Result<(), IoError> {
    for (child, parent) in adj.ones() {
        writeln!(w, "{parent} {child} 1")?;
    }
    Ok(())
}

pub fn write_weighted_edge_list(mut w: impl Write, g: &WeightedGraph) -> Result<(), IoError> {
    for (child, parent) in g.adjacency.ones() {
        writeln!(w, "{parent} {child} {}", g.weights[(child, parent)])?;
    }
    Ok(())
}

/// Parses `from to weight` triples. Blank lines and `#` comments are skipped.
pub fn read_edge_list(r: impl Read) -> Result<Vec<(usize, usize, f64)>, IoError> {
    let mut edges = Vec::new();
    for (idx, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut parts = trimmed.split_whitespace();
        let parsed = (|| {
            let from = parts.next()?.parse::<usize>().ok()?;
            let to = parts.next()?.parse::<usize>().ok()?;
            let weight = parts.next()?.parse::<f64>().ok()?;
            if parts.next().is_some() {
                return None;
            }
            Some((from, to, weight))
        })();
        match parsed {
            Some(triple) => edges.push(triple),
            None => {
                return Err(IoError::MalformedEdgeLine {
                    line: idx + 1,
                    content: line,
                })
            }
        }
    }
    Ok(edges)
}

/// Builds an adjacency matrix from `from -> to` triples; nonzero weight marks
/// an edge. `d` must cover every index (callers usually take it from a
/// sidecar or infer `max index + 1`).
pub fn edges_to_adjacency(d: usize, edges: &[(usize, usize, f64)]) -> Result<BitMatrix, IoError> {
    let mut adj = BitMatrix::zeros(d);
    for &(from, to, weight) in edges {
        if from >= d || to >= d {
            return Err(IoError::EdgeOutOfRange { from, to, d });
        }
        if weight != 0.0 {
            adj.set(to, from, true);
        }
    }
    Ok(adj)
}

pub fn infer_node_count(edges: &[(usize, usize, f64)]) -> usize {
    edges
        .iter()
        .map(|&(f, t, _)| f.max(t) + 1)
        .max()
        .unwrap_or(0)
}

/// Header-free d x d matrix of 0/1 entries.
pub fn write_dense_csv(mut w: impl Write, adj: &BitMatrix) -> Result<(), IoError> {
    let d = adj.size();
    for r in 0..d {
        let row: Vec<&str> = (0..d).map(|c| if adj.get(r, c) { "1" } else { "0" }).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn write_dataset_csv(mut w: impl Write, data: &Dataset) -> Result<(), IoError> {
    writeln!(w, "{}", data.names.join(","))?;
    for i in 0..data.n() {
        let row: Vec<String> = (0..data.d()).map(|j| data.values[(i, j)].to_string()).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn read_dataset_csv(r: impl Read) -> Result<Dataset, IoError> {
    let mut lines = BufReader::new(r).lines();
    let header = lines.next().ok_or_else(|| IoError::MalformedCsv {
        line: 1,
        message: "empty file".into(),
    })??;
    let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let d = names.len();
    let mut rows: Vec<f64> = Vec::new();
    let mut n = 0usize;
    for (idx, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d {
            return Err(IoError::MalformedCsv {
                line: idx + 2,
                message: format!("expected {d} fields, got {}", fields.len()),
            });
        }
        for f in fields {
            rows.push(f.trim().parse::<f64>().map_err(|e| IoError::MalformedCsv {
                line: idx + 2,
                message: e.to_string(),
            })?);
        }
        n += 1;
    }
    let values = DMatrix::from_row_slice(n, d, &rows);
    Ok(Dataset { names, values })
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut file, value)?;
    file.write_all(b"\n")?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let file = std::fs::File::open(path)?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}
