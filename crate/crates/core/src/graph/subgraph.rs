use crate::error::{Error, Result};

use super::Graph;

/// Induced subgraph plus the node relabeling.
#[derive(Debug, Clone)]
pub struct Subgraph {
    pub graph: Graph,
    /// `old_to_new[i]` is the new id of original node `i`, if kept.
    pub old_to_new: Vec<Option<usize>>,
    /// Original id of every new node, ascending.
    pub new_to_old: Vec<usize>,
}

/// Keeps `nodes` (in ascending original order) and every edge with both
/// endpoints kept. Features, labels and splits are carried along.
pub fn induced_subgraph(g: &Graph, nodes: &[usize]) -> Result<Subgraph> {
    let n = g.num_nodes();
    let mut keep = vec![false; n];
    for &i in nodes {
        if i >= n {
            return Err(Error::contract(format!("node {} out of range for {} nodes", i, n)));
        }
        keep[i] = true;
    }
    let new_to_old: Vec<usize> = (0..n).filter(|&i| keep[i]).collect();
    let mut old_to_new = vec![None; n];
    for (new, &old) in new_to_old.iter().enumerate() {
        old_to_new[old] = Some(new);
    }
    let mut edges = Vec::new();
    for (new_d, &old_d) in new_to_old.iter().enumerate() {
        for &old_s in g.neighbors(old_d) {
            if let Some(new_s) = old_to_new[old_s] {
                edges.push((new_s, new_d));
            }
        }
    }
    let mut sub = Graph::from_edges(new_to_old.len(), &edges, true)?
        .with_features(g.features().select_rows(&new_to_old)?)?;
    if let Some(l) = g.labels() {
        sub = sub.with_labels(l.select(&new_to_old))?;
    }
    if let Some(s) = g.splits() {
        sub = sub.with_splits(new_to_old.iter().map(|&i| s[i]).collect())?;
    }
    Ok(Subgraph {
        graph: sub,
        old_to_new,
        new_to_old,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_nodes_gives_a_copy() {
        let g = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)], false).unwrap();
        let s = induced_subgraph(&g, &[3, 2, 1, 0]).unwrap();
        assert_eq!(s.graph, g);
    }

    #[test]
    fn triangle_keeps_one_edge() {
        let g = Graph::from_edges(3, &[(0, 1), (1, 2), (0, 2)], false).unwrap();
        let s = induced_subgraph(&g, &[0, 1]).unwrap();
        assert_eq!(s.graph.undirected_edges(), vec![(0, 1)]);
        assert_eq!(s.old_to_new, vec![Some(0), Some(1), None]);
    }

    #[test]
    fn out_of_range_rejected() {
        let g = Graph::from_edges(2, &[(0, 1)], false).unwrap();
        assert!(matches!(induced_subgraph(&g, &[2]), Err(Error::Contract(_))));
    }
}
