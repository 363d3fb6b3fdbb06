//! Dependency parse trees.
//!
//! Heads follow the CoNLL convention on input: 1-indexed, `0` marks the root.
//! Internally nodes are 0-indexed and the root has no parent.

use thiserror::Error;

/// Structural problems in a head list. Node positions are 1-indexed, as in
/// the input.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("empty tree")]
    Empty,
    #[error("length mismatch: {tokens} tokens, {heads} heads, {rels} relations")]
    LengthMismatch { tokens: usize, heads: usize, rels: usize },
    #[error("node {node}: head {head} out of range")]
    HeadOutOfRange { node: usize, head: usize },
    #[error("node {node}: second root")]
    MultipleRoots { node: usize },
    #[error("node {node}: head links form a cycle")]
    Cycle { node: usize },
    #[error("no root node")]
    NoRoot,
}

/// Checks a CoNLL head list and converts it to 0-indexed parent links.
///
/// Returns the parent list and the root index.
pub fn validate_heads(heads: &[usize]) -> Result<(Vec<Option<usize>>, usize), TreeError> {
    let n = heads.len();
    if n == 0 {
        return Err(TreeError::Empty);
    }
    let mut parents = Vec::with_capacity(n);
    let mut root = None;
    for (i, &h) in heads.iter().enumerate() {
        if h > n {
            return Err(TreeError::HeadOutOfRange { node: i + 1, head: h });
        }
        if h == i + 1 {
            return Err(TreeError::Cycle { node: i + 1 });
        }
        if h == 0 {
            if root.is_some() {
                return Err(TreeError::MultipleRoots { node: i + 1 });
            }
            root = Some(i);
            parents.push(None);
        } else {
            parents.push(Some(h - 1));
        }
    }

    // 0 = unvisited, 1 = on current path, 2 = known to reach the root
    let mut state = vec![0u8; n];
    for start in 0..n {
        let mut path = Vec::new();
        let mut cur = start;
        loop {
            match state[cur] {
                2 => break,
                1 => return Err(TreeError::Cycle { node: cur + 1 }),
                _ => {}
            }
            state[cur] = 1;
            path.push(cur);
            match parents[cur] {
                Some(p) => cur = p,
                None => break,
            }
        }
        for v in path {
            state[v] = 2;
        }
    }

    let root = root.ok_or(TreeError::NoRoot)?;
    Ok((parents, root))
}

/// A validated dependency tree over vocabulary indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepTree {
    tokens: Vec<usize>,
    parents: Vec<Option<usize>>,
    relations: Vec<usize>,
    children: Vec<Vec<usize>>,
    root: usize,
}

impl DepTree {
    /// `relations[i]` is the relation on the edge from node `i` to its parent;
    /// the root carries the ROOT relation id.
    pub fn new(tokens: Vec<usize>, heads: &[usize], relations: Vec<usize>) -> Result<Self, TreeError> {
        if tokens.len() != heads.len() || relations.len() != heads.len() {
            return Err(TreeError::LengthMismatch {
                tokens: tokens.len(),
                heads: heads.len(),
                rels: relations.len(),
            });
        }
        let (parents, root) = validate_heads(heads)?;
        let mut children = vec![Vec::new(); parents.len()];
        for (i, p) in parents.iter().enumerate() {
            if let Some(p) = *p {
                children[p].push(i);
            }
        }
        Ok(Self {
            tokens,
            parents,
            relations,
            children,
            root,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn tokens(&self) -> &[usize] {
        &self.tokens
    }

    pub fn token(&self, node: usize) -> usize {
        self.tokens[node]
    }

    pub fn relation(&self, node: usize) -> usize {
        self.relations[node]
    }

    pub fn relations(&self) -> &[usize] {
        &self.relations
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        self.parents[node]
    }

    pub fn children(&self, node: usize) -> &[usize] {
        &self.children[node]
    }

    /// CoNLL-style heads (1-indexed, 0 = root).
    pub fn heads(&self) -> Vec<usize> {
        self.parents.iter().map(|p| p.map_or(0, |p| p + 1)).collect()
    }

    /// Depth of every node, root = 1.
    pub fn depths(&self) -> Vec<usize> {
        let mut depth = vec![0usize; self.len()];
        let mut stack = vec![(self.root, 1usize)];
        while let Some((node, d)) = stack.pop() {
            depth[node] = d;
            stack.extend(self.children[node].iter().map(|&c| (c, d + 1)));
        }
        depth
    }
}
