//! Symmetric, high-dimensional and incomplete (SHDI) matrices.
//!
//! An [`ShdiMatrix`] holds the known entries of a symmetric nonnegative matrix
//! as canonical undirected edges `(m, n, y)` with `m <= n`, together with a
//! CSR-style adjacency giving every node's known neighbours. Raw node labels
//! are remapped to dense 0-based indices through a shared [`LabelMap`].

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng::rng_for;

/// Two mentions of one undirected pair may differ by at most this relative
/// amount before they count as a conflict.
pub const DUPLICATE_REL_TOL: f64 = 1e-9;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ShdiError {
    #[error("{}negative weight {weight}", at(*.line))]
    NegativeWeight { line: Option<usize>, weight: f64 },
    #[error("{}weight is not a finite number", at(*.line))]
    NonFiniteWeight { line: Option<usize> },
    #[error(
        "{}conflicting duplicate for pair ({a}, {b}): {first} vs {second}{}",
        at(*.line),
        first_line.map(|l| alloc::format!(" (first seen on line {l})")).unwrap_or_default()
    )]
    ConflictingDuplicate {
        line: Option<usize>,
        first_line: Option<usize>,
        a: String,
        b: String,
        first: f64,
        second: f64,
    },
    #[error("{}node index {index} out of range for {node_count} nodes", at(*.line))]
    IndexOutOfRange {
        line: Option<usize>,
        index: usize,
        node_count: usize,
    },
    #[error("{}unknown node label `{label}`", at(*.line))]
    UnknownLabel { line: Option<usize>, label: String },
    #[error("duplicate node label `{0}` in label map")]
    DuplicateLabel(String),
    #[error("cannot split {edges} edges into {folds} folds")]
    TooFewEdges { edges: usize, folds: usize },
    #[error("a rotation needs at least 4 folds, got {0}")]
    TooFewFolds(usize),
    #[error("fold index {fold} out of range for {folds} folds")]
    FoldOutOfRange { fold: usize, folds: usize },
    #[error("label maps of the two matrices differ")]
    LabelMismatch,
}

fn at(line: Option<usize>) -> String {
    match line {
        Some(l) => alloc::format!("line {l}: "),
        None => String::new(),
    }
}

/// One known entry `y_{m,n}`, stored with `m <= n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub m: usize,
    pub n: usize,
    pub y: f64,
}

impl Edge {
    pub fn is_self_loop(&self) -> bool {
        self.m == self.n
    }
}

/// An entry of `Λ(u)`: the neighbour, the weight, and the index of the
/// undirected edge in [`ShdiMatrix::edges`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub node: usize,
    pub weight: f64,
    pub edge: usize,
}

/// Bidirectional mapping between raw node labels and dense indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    labels: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl LabelMap {
    /// Labels `"0"`, `"1"`, ... `"n-1"`.
    pub fn identity(node_count: usize) -> Self {
        let labels: Vec<String> = (0..node_count).map(|i| i.to_string()).collect();
        Self::from_ordered(labels).expect("identity labels are unique")
    }

    /// Uses the labels in the given order: `labels[i]` gets index `i`.
    pub fn from_ordered(labels: Vec<String>) -> Result<Self, ShdiError> {
        let mut index = BTreeMap::new();
        for (i, l) in labels.iter().enumerate() {
            if index.insert(l.clone(), i).is_some() {
                return Err(ShdiError::DuplicateLabel(l.clone()));
            }
        }
        Ok(Self { labels, index })
    }

    /// Collects distinct labels and orders them numerically when every label
    /// is a nonnegative integer, lexicographically otherwise. A file whose
    /// labels are exactly `0..n` therefore maps each label onto itself.
    pub fn from_raw<'a, I>(raw: I) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut distinct: Vec<&str> = raw.into_iter().collect();
        distinct.sort_unstable();
        distinct.dedup();
        let numeric: Option<Vec<(u64, &str)>> = distinct
            .iter()
            .map(|s| s.parse::<u64>().ok().map(|v| (v, *s)))
            .collect();
        let labels: Vec<String> = match numeric {
            Some(mut nums) => {
                // "07" and "7" parse to the same value; keep both, ordered by text.
                nums.sort();
                nums.into_iter().map(|(_, s)| s.to_string()).collect()
            }
            None => distinct.into_iter().map(|s| s.to_string()).collect(),
        };
        Self::from_ordered(labels).expect("labels deduplicated")
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, index: usize) -> Option<&str> {
        self.labels.get(index).map(String::as_str)
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

/// A labelled entry as read from an edge list.
#[derive(Debug, Clone, Copy)]
pub struct LabeledEntry<'a> {
    pub a: &'a str,
    pub b: &'a str,
    pub y: f64,
    pub line: Option<usize>,
}

/// An indexed entry with its source line, used when the label map is fixed.
#[derive(Debug, Clone, Copy)]
pub struct IndexedEntry {
    pub m: usize,
    pub n: usize,
    pub y: f64,
    pub line: Option<usize>,
}

/// The known entries `Λ` of a symmetric nonnegative matrix over `|U|` nodes.
///
/// Immutable once built; clones share the label map.
#[derive(Debug, Clone)]
pub struct ShdiMatrix {
    node_count: usize,
    edges: Vec<Edge>,
    offsets: Vec<usize>,
    adjacency: Vec<Neighbor>,
    labels: Arc<LabelMap>,
}

impl PartialEq for ShdiMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.node_count == other.node_count
            && self.edges == other.edges
            && (Arc::ptr_eq(&self.labels, &other.labels) || self.labels == other.labels)
    }
}

impl ShdiMatrix {
    /// Builds a matrix over `0..node_count` with identity labels.
    pub fn from_edges<I>(node_count: usize, entries: I) -> Result<Self, ShdiError>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        Self::from_indexed(
            Arc::new(LabelMap::identity(node_count)),
            entries.into_iter().map(|(m, n, y)| IndexedEntry {
                m,
                n,
                y,
                line: None,
            }),
        )
    }

    /// Builds a matrix from labelled entries, deriving the label map from them.
    pub fn from_labeled<'a, I>(entries: I) -> Result<Self, ShdiError>
    where
        I: IntoIterator<Item = LabeledEntry<'a>>,
        I::IntoIter: Clone,
    {
        let it = entries.into_iter();
        let map = LabelMap::from_raw(it.clone().flat_map(|e| [e.a, e.b]));
        Self::from_labeled_with(Arc::new(map), it)
    }

    /// Builds a matrix from labelled entries against a fixed label map.
    pub fn from_labeled_with<'a, I>(labels: Arc<LabelMap>, entries: I) -> Result<Self, ShdiError>
    where
        I: IntoIterator<Item = LabeledEntry<'a>>,
    {
        let mut indexed = Vec::new();
        for e in entries {
            let lookup = |l: &str| {
                labels.index_of(l).ok_or_else(|| ShdiError::UnknownLabel {
                    line: e.line,
                    label: l.to_string(),
                })
            };
            indexed.push(IndexedEntry {
                m: lookup(e.a)?,
                n: lookup(e.b)?,
                y: e.y,
                line: e.line,
            });
        }
        Self::from_indexed(labels, indexed)
    }

    /// Validates, canonicalizes and deduplicates indexed entries.
    pub fn from_indexed<I>(labels: Arc<LabelMap>, entries: I) -> Result<Self, ShdiError>
    where
        I: IntoIterator<Item = IndexedEntry>,
    {
        let node_count = labels.len();
        let mut seen: BTreeMap<(usize, usize), (f64, Option<usize>)> = BTreeMap::new();
        for e in entries {
            if !e.y.is_finite() {
                return Err(ShdiError::NonFiniteWeight { line: e.line });
            }
            if e.y < 0.0 {
                return Err(ShdiError::NegativeWeight {
                    line: e.line,
                    weight: e.y,
                });
            }
            for idx in [e.m, e.n] {
                if idx >= node_count {
                    return Err(ShdiError::IndexOutOfRange {
                        line: e.line,
                        index: idx,
                        node_count,
                    });
                }
            }
            let key = (e.m.min(e.n), e.m.max(e.n));
            match seen.get(&key) {
                Some(&(first, first_line)) => {
                    let scale = first.abs().max(e.y.abs());
                    if (first - e.y).abs() > DUPLICATE_REL_TOL * scale {
                        return Err(ShdiError::ConflictingDuplicate {
                            line: e.line,
                            first_line,
                            a: labels.label(key.0).unwrap_or_default().to_string(),
                            b: labels.label(key.1).unwrap_or_default().to_string(),
                            first,
                            second: e.y,
                        });
                    }
                }
                None => {
                    seen.insert(key, (e.y, e.line));
                }
            }
        }
        let edges = seen
            .into_iter()
            .map(|((m, n), (y, _))| Edge { m, n, y })
            .collect();
        Ok(Self::assemble(labels, edges))
    }

    // `edges` must already be canonical, sorted and unique.
    fn assemble(labels: Arc<LabelMap>, edges: Vec<Edge>) -> Self {
        let node_count = labels.len();
        let mut degree = vec![0usize; node_count];
        for e in &edges {
            degree[e.m] += 1;
            if !e.is_self_loop() {
                degree[e.n] += 1;
            }
        }
        let mut offsets = Vec::with_capacity(node_count + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets[..node_count].to_vec();
        let placeholder = Neighbor {
            node: 0,
            weight: 0.0,
            edge: 0,
        };
        let mut adjacency = vec![placeholder; offsets[node_count]];
        for (idx, e) in edges.iter().enumerate() {
            adjacency[fill[e.m]] = Neighbor {
                node: e.n,
                weight: e.y,
                edge: idx,
            };
            fill[e.m] += 1;
            if !e.is_self_loop() {
                adjacency[fill[e.n]] = Neighbor {
                    node: e.m,
                    weight: e.y,
                    edge: idx,
                };
                fill[e.n] += 1;
            }
        }
        for u in 0..node_count {
            adjacency[offsets[u]..offsets[u + 1]].sort_unstable_by_key(|nb| nb.node);
        }
        Self {
            node_count,
            edges,
            offsets,
            adjacency,
            labels,
        }
    }

    /// A matrix over the same nodes holding only the listed edges.
    pub fn subset(&self, edge_indices: &[usize]) -> Self {
        let mut idx = edge_indices.to_vec();
        idx.sort_unstable();
        idx.dedup();
        let edges = idx.into_iter().map(|i| self.edges[i]).collect();
        Self::assemble(self.labels.clone(), edges)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Known undirected entries, sorted by `(m, n)`.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn labels(&self) -> &Arc<LabelMap> {
        &self.labels
    }

    /// `Λ(u)` in ascending neighbour order.
    pub fn neighbors(&self, u: usize) -> Result<&[Neighbor], ShdiError> {
        if u >= self.node_count {
            return Err(ShdiError::IndexOutOfRange {
                line: None,
                index: u,
                node_count: self.node_count,
            });
        }
        Ok(self.row(u))
    }

    #[inline]
    pub(crate) fn row(&self, u: usize) -> &[Neighbor] {
        &self.adjacency[self.offsets[u]..self.offsets[u + 1]]
    }

    /// `|Λ(u)|`; zero for out-of-range nodes.
    pub fn degree(&self, u: usize) -> usize {
        if u >= self.node_count {
            0
        } else {
            self.offsets[u + 1] - self.offsets[u]
        }
    }

    /// Known entries over `|U|²`, counting each undirected entry once and the
    /// diagonal in the denominator.
    pub fn density(&self) -> f64 {
        let n = self.node_count as f64;
        if n == 0.0 {
            0.0
        } else {
            self.edges.len() as f64 / (n * n)
        }
    }

    /// Weight of the canonical pair, if known.
    pub fn weight(&self, m: usize, n: usize) -> Option<f64> {
        if m >= self.node_count || n >= self.node_count {
            return None;
        }
        let row = self.row(m);
        row.binary_search_by_key(&n, |nb| nb.node)
            .ok()
            .map(|i| row[i].weight)
    }

    /// Shuffles the edges with `seed` and deals them into `k` folds.
    pub fn kfold_split(&self, k: usize, seed: u64) -> Result<FoldSplit, ShdiError> {
        if k == 0 || self.edges.len() < k {
            return Err(ShdiError::TooFewEdges {
                edges: self.edges.len(),
                folds: k,
            });
        }
        let mut order: Vec<usize> = (0..self.edges.len()).collect();
        order.shuffle(&mut rng_for(seed, 0));
        let mut assignment = vec![0usize; order.len()];
        for (pos, &e) in order.iter().enumerate() {
            assignment[e] = pos % k;
        }
        FoldSplit::from_assignment(k, Some(seed), assignment)
    }
}

/// A partition of the edge indices of one matrix into `k` disjoint folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    k: usize,
    seed: Option<u64>,
    assignment: Vec<usize>,
    folds: Vec<Vec<usize>>,
}

/// The role of each fold for one repetition of the protocol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rotation {
    pub index: usize,
    pub validation_fold: usize,
    pub test_folds: [usize; 2],
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl FoldSplit {
    /// `assignment[e]` is the fold of edge `e`.
    pub fn from_assignment(
        k: usize,
        seed: Option<u64>,
        assignment: Vec<usize>,
    ) -> Result<Self, ShdiError> {
        let mut folds = vec![Vec::new(); k];
        for (e, &f) in assignment.iter().enumerate() {
            if f >= k {
                return Err(ShdiError::FoldOutOfRange { fold: f, folds: k });
            }
            folds[f].push(e);
        }
        Ok(Self {
            k,
            seed,
            assignment,
            folds,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Fold of each edge, indexed like [`ShdiMatrix::edges`].
    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Edge indices per fold, ascending.
    pub fn folds(&self) -> &[Vec<usize>] {
        &self.folds
    }

    /// Rotation `r`: validation is fold `r`, test is folds `r+1` and `r+2`
    /// (mod k), training is everything else.
    pub fn rotation(&self, r: usize) -> Result<Rotation, ShdiError> {
        if self.k < 4 {
            return Err(ShdiError::TooFewFolds(self.k));
        }
        let r = r % self.k;
        let t0 = (r + 1) % self.k;
        let t1 = (r + 2) % self.k;
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (e, &f) in self.assignment.iter().enumerate() {
            if f == t0 || f == t1 {
                test.push(e);
            } else if f != r {
                train.push(e);
            }
        }
        Ok(Rotation {
            index: r,
            validation_fold: r,
            test_folds: [t0, t1],
            train,
            validation: self.folds[r].clone(),
            test,
        })
    }
}
