//! Plain-text graph files.
//!
//! A graph directory holds:
//! - `graph.edges`: `src<TAB>dst[<TAB>weight]` per line, 0-based ids, weight
//!   defaults to 1. The line `j i w` stores `w` at entry `(i, j)`: node `j`
//!   feeds node `i`.
//! - `graph.features`: CSV, row `i` holds the features of node `i`.
//! - `graph.labels`: one integer per line, `-1` for unlabeled.
//! - `graph.masks`: three lines of space-separated node ids (train, val, test).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::adjacency::WeightedAdjacency;
use super::dataset::{Graph, SplitMasks};
use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

pub const EDGES_FILE: &str = "graph.edges";
pub const FEATURES_FILE: &str = "graph.features";
pub const LABELS_FILE: &str = "graph.labels";
pub const MASKS_FILE: &str = "graph.masks";

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Directed `(dst, src, weight)` entries from an edge file. Duplicates are
/// summed when the matrix is assembled.
pub fn read_edges(path: &Path) -> Result<Vec<(usize, usize, f64)>> {
    let text = read(path)?;
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 2 || fields.len() > 3 {
            return Err(parse_err(path, ln + 1, "expected `src dst [weight]`"));
        }
        let src: usize = fields[0]
            .parse()
            .map_err(|_| parse_err(path, ln + 1, format!("bad node id `{}`", fields[0])))?;
        let dst: usize = fields[1]
            .parse()
            .map_err(|_| parse_err(path, ln + 1, format!("bad node id `{}`", fields[1])))?;
        let w: f64 = match fields.get(2) {
            Some(f) => f
                .parse()
                .map_err(|_| parse_err(path, ln + 1, format!("bad weight `{f}`")))?,
            None => 1.0,
        };
        if !w.is_finite() || w < 0.0 {
            return Err(parse_err(path, ln + 1, "weights must be finite and nonnegative"));
        }
        out.push((dst, src, w));
    }
    Ok(out)
}

/// Read a directed structure file into an `n × n` adjacency.
pub fn read_structure(path: &Path, n: usize) -> Result<WeightedAdjacency> {
    let entries = read_edges(path)?;
    if let Some(&(i, j, _)) = entries.iter().find(|&&(i, j, _)| i >= n || j >= n) {
        return Err(Error::InvalidInput(format!(
            "{}: edge ({j} → {i}) references a node ≥ {n}",
            path.display()
        )));
    }
    WeightedAdjacency::from_edges(n, entries)
}

/// Write every stored entry `(i, j, w)` as `j<TAB>i<TAB>w`, shortest
/// round-trip float formatting.
pub fn write_structure(path: &Path, adj: &WeightedAdjacency) -> Result<()> {
    let mut buf = String::with_capacity(adj.nnz() * 24);
    for (i, j, w) in adj.matrix().iter() {
        buf.push_str(&format!("{j}\t{i}\t{w:?}\n"));
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_features(path: &Path) -> Result<DenseMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| parse_err(path, 0, e.to_string()))?;
    let mut rows = Vec::new();
    for (ln, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(path, ln + 1, e.to_string()))?;
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| parse_err(path, ln + 1, format!("bad number `{f}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    DenseMatrix::from_rows(&rows)
}

pub fn write_features(path: &Path, x: &DenseMatrix) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| parse_err(path, 0, e.to_string()))?;
    for i in 0..x.rows() {
        w.write_record(x.row(i).iter().map(|v| format!("{v:?}")))
            .map_err(|e| parse_err(path, i + 1, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_labels(path: &Path) -> Result<Vec<Option<usize>>> {
    let text = read(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(ln, l)| {
            let v: i64 = l
                .trim()
                .parse()
                .map_err(|_| parse_err(path, ln + 1, format!("bad label `{}`", l.trim())))?;
            match v {
                -1 => Ok(None),
                v if v >= 0 => Ok(Some(v as usize)),
                _ => Err(parse_err(path, ln + 1, "labels must be ≥ 0 or -1")),
            }
        })
        .collect()
}

pub fn read_masks(path: &Path, n: usize) -> Result<SplitMasks> {
    let text = read(path)?;
    let lines: Vec<&str> = text.lines().collect();
    if lines.len() < 3 {
        return Err(parse_err(path, lines.len(), "expected three lines (train, val, test)"));
    }
    let mut sets = Vec::new();
    for (ln, line) in lines.iter().take(3).enumerate() {
        let ids = line
            .split_whitespace()
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|_| parse_err(path, ln + 1, format!("bad node id `{t}`")))
            })
            .collect::<Result<Vec<usize>>>()?;
        sets.push(ids);
    }
    SplitMasks::from_indices(n, &sets[0], &sets[1], &sets[2])
}

/// Load a graph directory. Edges are made undirected: an entry whose reverse
/// is missing gets a mirrored copy; files that list both directions are kept
/// as written.
pub fn read_graph_dir(dir: &Path) -> Result<Graph> {
    let features = read_features(&dir.join(FEATURES_FILE))?;
    let n = features.rows();
    let labels = read_labels(&dir.join(LABELS_FILE))?;
    if labels.len() != n {
        return Err(Error::dims("graph.labels", n, labels.len()));
    }
    let directed = read_structure(&dir.join(EDGES_FILE), n)?;
    let m = directed.matrix();
    let mirrored = m
        .iter()
        .filter(|&(i, j, _)| m.position(j, i).is_none())
        .map(|(i, j, w)| (j, i, w));
    let all: Vec<_> = m.iter().chain(mirrored).collect();
    let adjacency = WeightedAdjacency::from_edges(n, all)?;
    let masks = read_masks(&dir.join(MASKS_FILE), n)?;
    Graph::new(adjacency, features, labels, masks)
}

pub fn write_graph_dir(dir: &Path, g: &Graph) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_structure(&dir.join(EDGES_FILE), &g.adjacency)?;
    write_features(&dir.join(FEATURES_FILE), &g.features)?;
    let labels: String = g
        .labels
        .iter()
        .map(|l| match l {
            Some(k) => format!("{k}\n"),
            None => "-1\n".to_string(),
        })
        .collect();
    let lpath: PathBuf = dir.join(LABELS_FILE);
    fs::write(&lpath, labels).map_err(|e| Error::io(&lpath, e))?;
    let mpath = dir.join(MASKS_FILE);
    let mut f = fs::File::create(&mpath).map_err(|e| Error::io(&mpath, e))?;
    for mask in [&g.masks.train, &g.masks.val, &g.masks.test] {
        let ids: Vec<String> = SplitMasks::indices(mask).iter().map(usize::to_string).collect();
        writeln!(f, "{}", ids.join(" ")).map_err(|e| Error::io(&mpath, e))?;
    }
    Ok(())
}
