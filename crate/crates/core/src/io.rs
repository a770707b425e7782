//! Dataset file formats: edge lists, feature matrices, labels and splits.

use crate::dense::DenseMatrix;
use crate::graph::{Graph, GraphError};
use crate::synthetic::{Split, SplitRole};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn lines(path: &Path) -> Result<impl Iterator<Item = (usize, std::io::Result<String>)>, DataError> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    Ok(BufReader::new(f).lines().enumerate().map(|(i, l)| (i + 1, l)))
}

/// Reads `src dst` pairs, skipping blank and `#` lines.
pub fn read_edge_list(path: &Path, num_nodes: usize) -> Result<Graph, DataError> {
    let mut edges = Vec::new();
    for (line_no, line) in lines(path)? {
        let line = line.map_err(io_err(path))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let parse = |tok: Option<&str>| -> Result<usize, DataError> {
            tok.and_then(|s| s.parse().ok()).ok_or_else(|| DataError::Parse {
                path: path.to_path_buf(),
                line: line_no,
                msg: format!("expected `src dst`, got `{t}`"),
            })
        };
        let mut it = t.split_whitespace();
        let u = parse(it.next())?;
        let v = parse(it.next())?;
        if it.next().is_some() {
            return Err(DataError::Parse {
                path: path.to_path_buf(),
                line: line_no,
                msg: format!("trailing tokens in `{t}`"),
            });
        }
        edges.push((u, v));
    }
    Ok(Graph::new(num_nodes, edges)?)
}

pub fn write_edge_list(path: &Path, g: &Graph) -> Result<(), DataError> {
    let mut w = BufWriter::new(fs::File::create(path).map_err(io_err(path))?);
    writeln!(w, "# {} nodes, {} edges", g.num_nodes(), g.num_edges()).map_err(io_err(path))?;
    for &(u, v) in g.edges() {
        writeln!(w, "{u} {v}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Binary feature file: little-endian `u64 n`, `u64 d`, then `n·d` f32 row-major.
pub fn write_features_bin(path: &Path, x: &DenseMatrix) -> Result<(), DataError> {
    let mut buf = Vec::with_capacity(16 + 4 * x.values().len());
    buf.extend_from_slice(&(x.rows() as u64).to_le_bytes());
    buf.extend_from_slice(&(x.cols() as u64).to_le_bytes());
    for &v in x.values() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, buf).map_err(io_err(path))
}

pub fn read_features_bin(path: &Path) -> Result<DenseMatrix, DataError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let bad = |msg: String| DataError::Format {
        path: path.to_path_buf(),
        msg,
    };
    if bytes.len() < 16 {
        return Err(bad("truncated header".into()));
    }
    let n = u64::from_le_bytes(bytes[0..8].try_into().unwrap()) as usize;
    let d = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let expected = n
        .checked_mul(d)
        .and_then(|nd| nd.checked_mul(4))
        .ok_or_else(|| bad(format!("header overflow: n={n} d={d}")))?;
    if bytes.len() - 16 != expected {
        return Err(bad(format!(
            "payload has {} bytes, header (n={n}, d={d}) implies {expected}",
            bytes.len() - 16
        )));
    }
    let values = bytes[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok(DenseMatrix::from_vec(n, d, values).expect("length checked"))
}

/// CSV features: one node per line, comma-separated reals, no header.
pub fn read_features_csv(path: &Path) -> Result<DenseMatrix, DataError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line_no, line) in lines(path)? {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|tok| tok.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| DataError::Parse {
                path: path.to_path_buf(),
                line: line_no,
                msg: e.to_string(),
            })?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(DataError::Parse {
                    path: path.to_path_buf(),
                    line: line_no,
                    msg: format!("expected {} columns, got {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    Ok(DenseMatrix::from_rows(&rows))
}

/// Dispatches on extension: `.csv` is text, anything else binary.
pub fn read_features(path: &Path) -> Result<DenseMatrix, DataError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("csv") => read_features_csv(path),
        _ => read_features_bin(path),
    }
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>, DataError> {
    let mut labels = Vec::new();
    for (line_no, line) in lines(path)? {
        let line = line.map_err(io_err(path))?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        labels.push(t.parse().map_err(|_| DataError::Parse {
            path: path.to_path_buf(),
            line: line_no,
            msg: format!("expected class id, got `{t}`"),
        })?);
    }
    Ok(labels)
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<(), DataError> {
    let mut s = String::with_capacity(labels.len() * 3);
    for l in labels {
        s.push_str(&l.to_string());
        s.push('\n');
    }
    fs::write(path, s).map_err(io_err(path))
}

pub fn read_split(path: &Path) -> Result<Split, DataError> {
    let mut roles = Vec::new();
    for (line_no, line) in lines(path)? {
        let line = line.map_err(io_err(path))?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let mut chars = t.chars();
        let role = match (chars.next().and_then(SplitRole::from_char), chars.next()) {
            (Some(r), None) => r,
            _ => {
                return Err(DataError::Parse {
                    path: path.to_path_buf(),
                    line: line_no,
                    msg: format!("expected one of t/v/s, got `{t}`"),
                })
            }
        };
        roles.push(role);
    }
    Ok(Split::new(roles))
}

pub fn write_split(path: &Path, split: &Split) -> Result<(), DataError> {
    let s: String = split.roles().iter().flat_map(|r| [r.as_char(), '\n']).collect();
    fs::write(path, s).map_err(io_err(path))
}
