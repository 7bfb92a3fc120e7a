//! Plain-text dataset files.
//!
//! - edges: one `src dst` pair of integer ids per line
//! - features: one whitespace-separated float row per node
//! - labels: one integer class per line, or one 0/1 vector per line for
//!   multilabel tasks
//! - splits: one of `train`, `val`, `test` per line
//!
//! Blank lines and lines starting with `#` are ignored in the edge file.
//! The node count is the number of feature rows.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

use super::{Graph, Labels, Split};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetPaths {
    pub edges: PathBuf,
    pub features: PathBuf,
    pub labels: Option<PathBuf>,
    pub splits: Option<PathBuf>,
}

impl DatasetPaths {
    /// `edges.txt`, `features.txt`, `labels.txt` and `splits.txt` in `dir`.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        DatasetPaths {
            edges: dir.join("edges.txt"),
            features: dir.join("features.txt"),
            labels: Some(dir.join("labels.txt")),
            splits: Some(dir.join("splits.txt")),
        }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_edges(path: &Path) -> Result<Vec<(usize, usize)>> {
    let text = read(path)?;
    let mut edges = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let mut next = || -> Result<usize> {
            it.next()
                .ok_or_else(|| parse_err(path, i + 1, "expected `src dst`"))?
                .parse()
                .map_err(|_| parse_err(path, i + 1, "node ids must be non-negative integers"))
        };
        let (s, d) = (next()?, next()?);
        edges.push((s, d));
    }
    Ok(edges)
}

fn parse_features(path: &Path) -> Result<Tensor> {
    let text = read(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| parse_err(path, i + 1, format!("bad float {:?}", s))))
            .collect::<Result<_>>()?;
        rows.push(row);
    }
    Tensor::from_rows(&rows).map_err(|e| Error::Ingestion(format!("{}: {}", path.display(), e)))
}

fn parse_labels(path: &Path) -> Result<Labels> {
    let text = read(path)?;
    let rows: Vec<Vec<&str>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split_whitespace().collect())
        .collect();
    let width = rows.first().map_or(1, Vec::len);
    if width == 1 {
        let classes = rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                if r.len() != 1 {
                    return Err(parse_err(path, i + 1, "mixed label formats"));
                }
                r[0].parse().map_err(|_| parse_err(path, i + 1, "class ids must be integers"))
            })
            .collect::<Result<_>>()?;
        return Ok(Labels::Multiclass(classes));
    }
    let mut values = Vec::with_capacity(rows.len() * width);
    for (i, r) in rows.iter().enumerate() {
        if r.len() != width {
            return Err(parse_err(path, i + 1, format!("expected {} labels", width)));
        }
        for tok in r {
            values.push(match *tok {
                "0" => false,
                "1" => true,
                _ => return Err(parse_err(path, i + 1, "multilabel entries must be 0 or 1")),
            });
        }
    }
    Ok(Labels::Multilabel {
        num_labels: width,
        values,
    })
}

fn parse_splits(path: &Path) -> Result<Vec<Split>> {
    let text = read(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| l.trim().parse().map_err(|e: Error| parse_err(path, i + 1, e.to_string())))
        .collect()
}

/// Reads and validates a dataset. Every named file must exist.
pub fn load_dataset(paths: &DatasetPaths, directed: bool) -> Result<Graph> {
    let features = parse_features(&paths.features)?;
    let edges = parse_edges(&paths.edges)?;
    let labels = paths.labels.as_deref().map(parse_labels).transpose()?;
    let splits = paths.splits.as_deref().map(parse_splits).transpose()?;
    super::build_graph(&edges, features, labels, splits, directed)
}

/// Writes the graph in the dataset format, creating `dir` if needed.
/// Symmetric graphs are written with one line per undirected edge.
pub fn write_dataset(g: &Graph, dir: impl AsRef<Path>) -> Result<DatasetPaths> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = DatasetPaths::in_dir(dir);
    let write = |path: &Path, text: String| std::fs::write(path, text).map_err(|e| Error::io(path, e));

    let mut out = String::new();
    if g.is_symmetric() {
        for (s, d) in g.undirected_edges() {
            let _ = writeln!(out, "{} {}", s, d);
        }
    } else {
        for d in 0..g.num_nodes() {
            for &s in g.neighbors(d) {
                let _ = writeln!(out, "{} {}", s, d);
            }
        }
    }
    write(&paths.edges, out)?;

    let mut out = String::new();
    for i in 0..g.num_nodes() {
        let row: Vec<String> = g.features().row(i).iter().map(|v| format!("{}", v)).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    write(&paths.features, out)?;

    let labels_path = paths.labels.clone().expect("in_dir names a labels file");
    let splits_path = paths.splits.clone().expect("in_dir names a splits file");
    let mut written = DatasetPaths {
        labels: None,
        splits: None,
        ..paths
    };
    if let Some(labels) = g.labels() {
        let mut out = String::new();
        match labels {
            Labels::Multiclass(c) => c.iter().for_each(|v| {
                let _ = writeln!(out, "{}", v);
            }),
            Labels::Multilabel { num_labels, values } => {
                for row in values.chunks(*num_labels) {
                    let r: Vec<&str> = row.iter().map(|&b| if b { "1" } else { "0" }).collect();
                    out.push_str(&r.join(" "));
                    out.push('\n');
                }
            }
        }
        write(&labels_path, out)?;
        written.labels = Some(labels_path);
    }
    if let Some(splits) = g.splits() {
        let mut out = String::new();
        for s in splits {
            out.push_str(s.as_str());
            out.push('\n');
        }
        write(&splits_path, out)?;
        written.splits = Some(splits_path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_sbm, SbmConfig};

    #[test]
    fn round_trip_through_files() {
        let cfg = SbmConfig {
            nodes_per_block: 10,
            blocks: 2,
            p_in: 0.5,
            p_out: 0.05,
            feature_dim: 3,
            signal: 1.0,
            feature_noise: 0.3,
            seed: 11,
        };
        let g = generate_sbm(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let paths = write_dataset(&g, dir.path()).unwrap();
        let back = load_dataset(&paths, false).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn multilabel_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path();
        std::fs::write(p.join("edges.txt"), "0 1\n").unwrap();
        std::fs::write(p.join("features.txt"), "1 2\n3 4\n").unwrap();
        std::fs::write(p.join("labels.txt"), "1 0 1\n0 0 1\n").unwrap();
        std::fs::write(p.join("splits.txt"), "train\ntest\n").unwrap();
        let g = load_dataset(&DatasetPaths::in_dir(p), false).unwrap();
        assert!(g.labels().unwrap().is_multilabel());

        std::fs::write(p.join("features.txt"), "1 2\n3\n").unwrap();
        assert!(matches!(load_dataset(&DatasetPaths::in_dir(p), false), Err(Error::Ingestion(_))));

        std::fs::write(p.join("features.txt"), "1 2\n3 4\n").unwrap();
        std::fs::write(p.join("edges.txt"), "0 5\n").unwrap();
        assert!(load_dataset(&DatasetPaths::in_dir(p), false).is_err());

        std::fs::remove_file(p.join("features.txt")).unwrap();
        assert!(matches!(load_dataset(&DatasetPaths::in_dir(p), false), Err(Error::Io { .. })));
    }
}
