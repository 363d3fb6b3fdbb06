//! Corpus-level tree shape statistics (node count and depths).

use serde::{Deserialize, Serialize};

use crate::tree::DepTree;

/// Population mean and standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    fn of(xs: &[f64]) -> Self {
        if xs.iter().all(|&x| x == xs[0]) {
            return Self { mean: xs[0], std: 0.0 };
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

/// Depths count the root as 1; a leaf is a node without children.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub trees: usize,
    pub nodes: MeanStd,
    pub max_depth: MeanStd,
    pub avg_leaf_depth: MeanStd,
    pub avg_node_depth: MeanStd,
}

/// Per-tree metrics: (nodes, max depth, mean leaf depth, mean node depth).
pub fn tree_metrics(tree: &DepTree) -> (f64, f64, f64, f64) {
    let depths = tree.depths();
    let n = depths.len() as f64;
    let max = depths.iter().copied().max().unwrap_or(0) as f64;
    let leaves: Vec<usize> = (0..tree.len())
        .filter(|&i| tree.children(i).is_empty())
        .map(|i| depths[i])
        .collect();
    let leaf_avg = leaves.iter().sum::<usize>() as f64 / leaves.len() as f64;
    let node_avg = depths.iter().sum::<usize>() as f64 / n;
    (n, max, leaf_avg, node_avg)
}

/// Returns `None` for an empty collection.
pub fn tree_stats<'a, I>(trees: I) -> Option<CorpusStats>
where
    I: IntoIterator<Item = &'a DepTree>,
{
    let (mut n, mut md, mut ld, mut nd) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for t in trees {
        let (a, b, c, d) = tree_metrics(t);
        n.push(a);
        md.push(b);
        ld.push(c);
        nd.push(d);
    }
    if n.is_empty() {
        return None;
    }
    Some(CorpusStats {
        trees: n.len(),
        nodes: MeanStd::of(&n),
        max_depth: MeanStd::of(&md),
        avg_leaf_depth: MeanStd::of(&ld),
        avg_node_depth: MeanStd::of(&nd),
    })
}
