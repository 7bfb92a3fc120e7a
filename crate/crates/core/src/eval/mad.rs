use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::Encoder;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::numerics::Tensor;

/// Mean cosine distance between neighbor embeddings: the average over nodes
/// with at least one neighbor of `mean_{j ∈ N(i)} (1 − cos(uᵢ, uⱼ))`.
///
/// A pair involving a zero row counts as distance 0 and is reported with a
/// warning.
pub fn mad(u: &Tensor, g: &Graph) -> Result<f64> {
    if u.rows() != g.num_nodes() {
        return Err(Error::dim(format!(
            "{} embedding rows for {} nodes",
            u.rows(),
            g.num_nodes()
        )));
    }
    let norms: Vec<f64> = (0..u.rows())
        .map(|i| u.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let mut zero_pairs = 0usize;
    let mut total = 0.0;
    let mut counted = 0usize;
    for i in 0..g.num_nodes() {
        let nb = g.neighbors(i);
        if nb.is_empty() {
            continue;
        }
        let mut acc = 0.0;
        for &j in nb {
            if norms[i] == 0.0 || norms[j] == 0.0 {
                zero_pairs += 1;
                continue;
            }
            let dot: f64 = u.row(i).iter().zip(u.row(j)).map(|(a, b)| a * b).sum();
            acc += 1.0 - dot / (norms[i] * norms[j]);
        }
        total += acc / nb.len() as f64;
        counted += 1;
    }
    if zero_pairs > 0 {
        log::warn!("{} neighbor pairs involve a zero embedding; counted as distance 0", zero_pairs);
    }
    Ok(if counted == 0 { 0.0 } else { total / counted as f64 })
}

/// MAD of every layer's output, bottom first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MadReport {
    pub values: Vec<f64>,
}

impl MadReport {
    /// Two columns, `layer,mad`, layers numbered from 1.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,mad\n");
        for (i, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, v));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

pub fn mad_per_layer(encoder: &Encoder, g: &Graph, features: &Tensor) -> Result<MadReport> {
    let values = encoder
        .layer_outputs(g, features)?
        .iter()
        .map(|u| mad(u, g))
        .collect::<Result<_>>()?;
    Ok(MadReport { values })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_rows_have_zero_distance() {
        let g = Graph::from_edges(3, &[(0, 1), (1, 2)], false).unwrap();
        let u = Tensor::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        assert!(mad(&u, &g).unwrap().abs() < 1e-15);
    }

    #[test]
    fn orthogonal_pair_is_one() {
        let g = Graph::from_edges(2, &[(0, 1)], false).unwrap();
        let u = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 3.0]]).unwrap();
        assert_eq!(mad(&u, &g).unwrap(), 1.0);
    }

    #[test]
    fn zero_rows_count_as_zero() {
        let g = Graph::from_edges(2, &[(0, 1)], false).unwrap();
        let u = Tensor::from_rows(&[vec![0.0, 0.0], vec![0.0, 3.0]]).unwrap();
        assert_eq!(mad(&u, &g).unwrap(), 0.0);
    }
}
