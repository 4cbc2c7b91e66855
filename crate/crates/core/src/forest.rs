//! Plane trees and forests, canonically represented by depth-first
//! outdegree sequences, plus vertex/edge-labeled forests.
//!
//! The text format is `(2,0,0)` for a tree and `(1,2,1,0,0|1,0)` for a
//! forest (trees joined by `|`); parsing is whitespace-insensitive and
//! printing round-trips bit-exactly.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::law::ReproductionLaw;
use crate::prob::Weight;

#[derive(Debug, Error, PartialEq)]
pub enum ForestError {
    #[error("empty outdegree sequence")]
    EmptySequence,
    #[error("first passage to -{k} is at index {found} instead of {expected}")]
    InvalidSequence {
        k: usize,
        found: usize,
        expected: usize,
    },
    #[error("walk never reaches -{k} (sequence sums to {sum} over {len} entries)")]
    NoPassage { k: usize, sum: u64, len: usize },
    #[error("cannot parse `{text}` at offset {pos}: {detail}")]
    Parse {
        text: String,
        pos: usize,
        detail: String,
    },
    #[error("vertex labels are not a bijection onto 1..={n}")]
    BadVertexLabels { n: usize },
    #[error("edge labels are not a bijection onto 1..={m}")]
    BadEdgeLabels { m: usize },
}

/// Partial-sum path of `outdegree - 1` steps.
///
/// Downwards skip-free: every step is at least -1, so the walk cannot pass
/// a level without visiting it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LukasiewiczWalk {
    steps: Vec<i64>,
    partial_sums: Vec<i64>,
}

impl LukasiewiczWalk {
    pub fn from_outdegrees(outdegrees: &[u32]) -> Self {
        let steps: Vec<i64> = outdegrees.iter().map(|&y| i64::from(y) - 1).collect();
        let mut partial_sums = Vec::with_capacity(steps.len());
        let mut s = 0i64;
        for &step in &steps {
            s += step;
            partial_sums.push(s);
        }
        Self {
            steps,
            partial_sums,
        }
    }

    pub fn steps(&self) -> &[i64] {
        &self.steps
    }

    /// `S_1, ..., S_n` (the walk starts at `S_0 = 0`, not stored).
    pub fn partial_sums(&self) -> &[i64] {
        &self.partial_sums
    }

    /// First 1-based index `ℓ` with `S_ℓ = -k`, if the walk ever gets there.
    pub fn first_passage(&self, k: usize) -> Option<usize> {
        let target = -(k as i64);
        self.partial_sums
            .iter()
            .position(|&s| s == target)
            .map(|i| i + 1)
    }
}

/// An unlabeled plane rooted tree: the outdegrees of its vertices in
/// depth-first order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PlanarTree {
    outdegrees: Vec<u32>,
}

impl PlanarTree {
    /// Validate that the sequence encodes exactly one tree: the walk's first
    /// passage to -1 must land on the last index.
    pub fn new(outdegrees: Vec<u32>) -> Result<Self, ForestError> {
        if outdegrees.is_empty() {
            return Err(ForestError::EmptySequence);
        }
        let walk = LukasiewiczWalk::from_outdegrees(&outdegrees);
        match walk.first_passage(1) {
            Some(ix) if ix == outdegrees.len() => Ok(Self { outdegrees }),
            Some(ix) => Err(ForestError::InvalidSequence {
                k: 1,
                found: ix,
                expected: outdegrees.len(),
            }),
            None => Err(ForestError::NoPassage {
                k: 1,
                sum: outdegrees.iter().map(|&y| u64::from(y)).sum(),
                len: outdegrees.len(),
            }),
        }
    }

    /// The single-vertex tree `(0)`.
    pub fn leaf() -> Self {
        Self {
            outdegrees: vec![0],
        }
    }

    pub fn size(&self) -> usize {
        self.outdegrees.len()
    }

    pub fn outdegrees(&self) -> &[u32] {
        &self.outdegrees
    }

    /// Parent position of each vertex position; the root maps to itself.
    pub fn parents(&self) -> Vec<usize> {
        parents_of_sequence(&self.outdegrees)
    }
}

/// An ordered sequence of plane trees.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PlanarForest {
    trees: Vec<PlanarTree>,
}

impl PlanarForest {
    pub fn from_trees(trees: Vec<PlanarTree>) -> Result<Self, ForestError> {
        if trees.is_empty() {
            return Err(ForestError::EmptySequence);
        }
        Ok(Self { trees })
    }

    pub fn from_tree(tree: PlanarTree) -> Self {
        Self { trees: vec![tree] }
    }

    pub fn trees(&self) -> &[PlanarTree] {
        &self.trees
    }

    /// Number of trees `k`.
    pub fn tree_count(&self) -> usize {
        self.trees.len()
    }

    /// Total number of vertices `n`.
    pub fn vertex_count(&self) -> usize {
        self.trees.iter().map(PlanarTree::size).sum()
    }

    /// Concatenated depth-first outdegree sequence of all trees.
    pub fn outdegree_seq(&self) -> Vec<u32> {
        self.trees
            .iter()
            .flat_map(|t| t.outdegrees().iter().copied())
            .collect()
    }

    /// Depth-first positions (0-based) of the tree roots.
    pub fn root_positions(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.trees.len());
        let mut pos = 0;
        for t in &self.trees {
            out.push(pos);
            pos += t.size();
        }
        out
    }
}

/// Split a depth-first outdegree sequence into the unique plane forest with
/// `k` trees, cutting at the walk's successive passage times to -1, ..., -k.
///
/// Fails if the walk's first passage to `-k` is not exactly at the final
/// index, reporting where it actually happened.
pub fn parse_forest(outdegree_seq: &[u32], k: usize) -> Result<PlanarForest, ForestError> {
    if outdegree_seq.is_empty() || k == 0 {
        return Err(ForestError::EmptySequence);
    }
    let walk = LukasiewiczWalk::from_outdegrees(outdegree_seq);
    match walk.first_passage(k) {
        Some(ix) if ix == outdegree_seq.len() => {}
        Some(ix) => {
            return Err(ForestError::InvalidSequence {
                k,
                found: ix,
                expected: outdegree_seq.len(),
            })
        }
        None => {
            return Err(ForestError::NoPassage {
                k,
                sum: outdegree_seq.iter().map(|&y| u64::from(y)).sum(),
                len: outdegree_seq.len(),
            })
        }
    }
    let mut trees = Vec::with_capacity(k);
    let mut start = 0usize;
    for level in 1..=k {
        let cut = walk.first_passage(level).expect("level reached before -k");
        trees.push(PlanarTree {
            outdegrees: outdegree_seq[start..cut].to_vec(),
        });
        start = cut;
    }
    Ok(PlanarForest { trees })
}

/// Parent position of each vertex of a valid forest sequence; roots map to
/// themselves.
fn parents_of_sequence(outdegrees: &[u32]) -> Vec<usize> {
    let mut parents = vec![0usize; outdegrees.len()];
    // stack of (position, remaining children)
    let mut stack: Vec<(usize, u32)> = Vec::new();
    for (pos, &deg) in outdegrees.iter().enumerate() {
        while let Some(&(_, 0)) = stack.last() {
            stack.pop();
        }
        match stack.last_mut() {
            Some((parent, remaining)) => {
                parents[pos] = *parent;
                *remaining -= 1;
            }
            None => parents[pos] = pos,
        }
        if deg > 0 {
            stack.push((pos, deg));
        }
    }
    parents
}

/// `Π_i μ(y_i)` over the depth-first outdegrees of `t`; exact in rational
/// mode, zero when any outdegree falls outside the support.
pub fn tree_probability<P: Weight>(law: &ReproductionLaw<P>, t: &PlanarTree) -> P {
    sequence_probability(law, t.outdegrees())
}

/// Product of [`tree_probability`] over the component trees.
pub fn forest_probability<P: Weight>(law: &ReproductionLaw<P>, f: &PlanarForest) -> P {
    sequence_probability(law, &f.outdegree_seq())
}

fn sequence_probability<P: Weight>(law: &ReproductionLaw<P>, seq: &[u32]) -> P {
    let mut acc = P::one();
    for &y in seq {
        let p = law.prob(y);
        if p.is_zero() {
            return P::zero();
        }
        acc = acc.mul(&p);
    }
    acc
}

/// A plane forest with vertex labels `1..=n` and edge labels `1..=n-k`.
///
/// Vertex labels are listed by depth-first position; edge labels by the
/// depth-first position of the child endpoint (each non-root vertex carries
/// exactly one in-edge).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabeledForest {
    shape: PlanarForest,
    vertex_labels: Vec<u32>,
    edge_labels: Vec<u32>,
}

/// One activated edge of a labeled forest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabeledEdge {
    /// Vertex label of the parent (grabbing) endpoint.
    pub from: u32,
    /// Vertex label of the child (grabbed) endpoint.
    pub to: u32,
    /// Activation label in `1..=n-k`.
    pub label: u32,
    /// 0-based child position under the parent (the arm's planar slot).
    pub slot: u32,
}

impl LabeledForest {
    pub fn new(
        shape: PlanarForest,
        vertex_labels: Vec<u32>,
        edge_labels: Vec<u32>,
    ) -> Result<Self, ForestError> {
        let n = shape.vertex_count();
        let m = n - shape.tree_count();
        if !is_bijection(&vertex_labels, n) {
            return Err(ForestError::BadVertexLabels { n });
        }
        if !is_bijection(&edge_labels, m) {
            return Err(ForestError::BadEdgeLabels { m });
        }
        Ok(Self {
            shape,
            vertex_labels,
            edge_labels,
        })
    }

    /// The unlabeled shape: image under the projection that forgets labels.
    pub fn shape(&self) -> &PlanarForest {
        &self.shape
    }

    pub fn into_shape(self) -> PlanarForest {
        self.shape
    }

    /// Vertex labels by depth-first position.
    pub fn vertex_labels(&self) -> &[u32] {
        &self.vertex_labels
    }

    /// Edge labels by depth-first position of the child endpoint.
    pub fn edge_labels(&self) -> &[u32] {
        &self.edge_labels
    }

    pub fn vertex_count(&self) -> usize {
        self.shape.vertex_count()
    }

    pub fn tree_count(&self) -> usize {
        self.shape.tree_count()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_labels.len()
    }

    /// Outdegree of the vertex carrying label `label`.
    pub fn outdegree_of_label(&self, label: u32) -> Option<u32> {
        let pos = self.vertex_labels.iter().position(|&v| v == label)?;
        Some(self.shape.outdegree_seq()[pos])
    }

    /// All edges with endpoint labels, activation labels, and slot positions.
    pub fn edges(&self) -> Vec<LabeledEdge> {
        let seq = self.shape.outdegree_seq();
        let parents = parents_of_sequence(&seq);
        let roots = self.shape.root_positions();
        let mut child_rank = vec![0u32; seq.len()];
        let mut next_child = vec![0u32; seq.len()];
        for pos in 0..seq.len() {
            if !roots.contains(&pos) {
                let p = parents[pos];
                child_rank[pos] = next_child[p];
                next_child[p] += 1;
            }
        }
        let mut edges = Vec::with_capacity(self.edge_labels.len());
        let mut edge_ix = 0usize;
        for pos in 0..seq.len() {
            if roots.contains(&pos) {
                continue;
            }
            edges.push(LabeledEdge {
                from: self.vertex_labels[parents[pos]],
                to: self.vertex_labels[pos],
                label: self.edge_labels[edge_ix],
                slot: child_rank[pos],
            });
            edge_ix += 1;
        }
        edges
    }

    /// Canonical text form: shape, then vertex labels, then edge labels,
    /// e.g. `(2,0,0)[v:1,2,3][e:2,1]`.
    pub fn render(&self) -> String {
        let vs = self
            .vertex_labels
            .iter()
            .map(u32::to_string)
            .collect::<Vec<_>>()
            .join(",");
        let es = self
            .edge_labels
            .iter()
            .map(u32::to_string)
            .collect::<Vec<_>>()
            .join(",");
        format!("{}[v:{vs}][e:{es}]", self.shape)
    }
}

impl fmt::Display for LabeledForest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

fn is_bijection(labels: &[u32], n: usize) -> bool {
    if labels.len() != n {
        return false;
    }
    let mut seen = vec![false; n];
    for &l in labels {
        if l == 0 || l as usize > n || seen[l as usize - 1] {
            return false;
        }
        seen[l as usize - 1] = true;
    }
    true
}

impl fmt::Display for PlanarTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, y) in self.outdegrees.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{y}")?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for PlanarForest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, t) in self.trees.iter().enumerate() {
            if i > 0 {
                write!(f, "|")?;
            }
            for (j, y) in t.outdegrees().iter().enumerate() {
                if j > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{y}")?;
            }
        }
        write!(f, ")")
    }
}

impl FromStr for PlanarForest {
    type Err = ForestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse_err = |pos: usize, detail: &str| ForestError::Parse {
            text: s.to_owned(),
            pos,
            detail: detail.to_owned(),
        };
        let trimmed: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let inner = trimmed
            .strip_prefix('(')
            .and_then(|t| t.strip_suffix(')'))
            .ok_or_else(|| parse_err(0, "expected outer parentheses"))?;
        if inner.is_empty() {
            return Err(parse_err(1, "empty forest"));
        }
        let mut trees = Vec::new();
        let mut seq = Vec::new();
        for part in inner.split('|') {
            let mut outdegs = Vec::new();
            for tok in part.split(',') {
                let y: u32 = tok
                    .parse()
                    .map_err(|_| parse_err(0, &format!("bad outdegree `{tok}`")))?;
                outdegs.push(y);
            }
            trees.push(outdegs.len());
            seq.extend(outdegs);
        }
        // Parse as a forest with as many trees as pipe-separated groups and
        // verify the groups are exactly the passage-time splits.
        let k = trees.len();
        let forest = parse_forest(&seq, k)?;
        let actual: Vec<usize> = forest.trees().iter().map(PlanarTree::size).collect();
        if actual != trees {
            return Err(parse_err(
                0,
                &format!("tree boundaries {trees:?} do not match walk splits {actual:?}"),
            ));
        }
        Ok(forest)
    }
}

impl FromStr for PlanarTree {
    type Err = ForestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let forest = PlanarForest::from_str(s)?;
        if forest.tree_count() != 1 {
            // Report where the walk first split off a tree.
            return Err(ForestError::InvalidSequence {
                k: 1,
                found: forest.trees[0].size(),
                expected: forest.vertex_count(),
            });
        }
        Ok(forest.trees[0].clone())
    }
}
