//! Text checkpoint format for named tensors.
//!
//! ```text
//! lrgi-checkpoint 1
//! <name> <rank> <dim_0> ... <dim_rank-1>
//! <v_0> <v_1> ... (row-major, one line, 17 significant digits)
//! ...
//! ```
//!
//! Names may not contain whitespace. Values are written as `{:.16e}`, which
//! round-trips every finite `f64` bit-exactly.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

use super::{Parameter, Tensor};

const MAGIC: &str = "lrgi-checkpoint 1";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    entries: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Checkpoint::default()
    }

    pub fn from_params<'a>(params: impl IntoIterator<Item = &'a Parameter>) -> Self {
        let mut ck = Checkpoint::new();
        for p in params {
            let mut t = p.tensor().clone();
            t.clear_grad();
            ck.entries.push((p.name().to_string(), t));
        }
        ck
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.entries.push((name.into(), tensor));
    }

    pub fn entries(&self) -> &[(String, Tensor)] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Overwrites each parameter with the entry of the same name.
    pub fn load_into<'a>(&self, params: impl IntoIterator<Item = &'a mut Parameter>) -> Result<()> {
        for p in params {
            let t = self.get(p.name()).ok_or_else(|| {
                Error::Ingestion(format!("checkpoint has no parameter {}", p.name()))
            })?;
            p.assign(t.clone())?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(MAGIC);
        out.push('\n');
        for (name, t) in &self.entries {
            let _ = write!(out, "{} {}", name, t.shape().len());
            for d in t.shape() {
                let _ = write!(out, " {}", d);
            }
            out.push('\n');
            let mut first = true;
            for v in t.values() {
                if !first {
                    out.push(' ');
                }
                first = false;
                let _ = write!(out, "{:.16e}", v);
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: String| Error::Parse {
            path: "<checkpoint>".into(),
            line,
            message: msg,
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim() == MAGIC => {}
            _ => return Err(bad(1, "missing checkpoint header".into())),
        }
        let mut ck = Checkpoint::new();
        while let Some((i, header)) = lines.next() {
            if header.trim().is_empty() {
                continue;
            }
            let mut parts = header.split_whitespace();
            let name = parts.next().unwrap_or_default().to_string();
            let rank: usize = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad(i + 1, "bad rank".into()))?;
            let shape: Vec<usize> = parts
                .map(|s| s.parse().map_err(|_| bad(i + 1, format!("bad dimension {:?}", s))))
                .collect::<Result<_>>()?;
            if shape.len() != rank {
                return Err(bad(i + 1, format!("rank {} but {} dimensions", rank, shape.len())));
            }
            let (j, data) = lines
                .next()
                .ok_or_else(|| bad(i + 2, format!("missing values for {}", name)))?;
            let values: Vec<f64> = data
                .split_whitespace()
                .map(|s| s.parse().map_err(|_| bad(j + 1, format!("bad value {:?}", s))))
                .collect::<Result<_>>()?;
            let t = Tensor::new(shape, values).map_err(|e| bad(j + 1, e.to_string()))?;
            ck.entries.push((name, t));
        }
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_text(&text).map_err(|e| match e {
            Error::Parse { line, message, .. } => Error::Parse {
                path: path.to_path_buf(),
                line,
                message,
            },
            other => other,
        })
    }
}
