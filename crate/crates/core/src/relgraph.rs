//! The shared word graph: semantic k-NN, sentence co-occurrence and
//! knowledge-triple edges, their union, ablation filters, statistics and the
//! normalized propagation operator.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::ops::{BitAnd, BitOr};
use core::str::FromStr;

use crate::corpus::{TextSample, Vocabulary};
use crate::embedstore::EmbeddingTable;
use crate::error::{Error, Result};
use crate::kgstore::TripleStore;
use crate::numerics::SparseMatrix;

pub const DEFAULT_K: usize = 8;
pub const DEFAULT_EPSILON: u32 = 5;

/// Bitmask of the relation sources that produced an edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Provenance(u8);

impl Provenance {
    pub const SR: Self = Self(1);
    pub const CR: Self = Self(2);
    pub const KR: Self = Self(4);
    pub const ALL: Self = Self(7);

    pub fn from_bits(bits: u8) -> Option<Self> {
        (bits & !7 == 0).then_some(Self(bits))
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn intersects(self, other: Self) -> bool {
        self.0 & other.0 != 0
    }

    pub fn contains(self, other: Self) -> bool {
        self.0 & other.0 == other.0
    }
}

impl BitOr for Provenance {
    type Output = Self;
    fn bitor(self, rhs: Self) -> Self {
        Self(self.0 | rhs.0)
    }
}

impl BitAnd for Provenance {
    type Output = Self;
    fn bitand(self, rhs: Self) -> Self {
        Self(self.0 & rhs.0)
    }
}

/// The four relation mixes compared in the ablation: SR alone, SR with
/// co-occurrence, SR with knowledge, and all three.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RelationMix {
    Sr,
    Scr,
    Skr,
    Sckr,
}

impl RelationMix {
    pub const ALL: [RelationMix; 4] = [Self::Sr, Self::Scr, Self::Skr, Self::Sckr];

    pub fn mask(self) -> Provenance {
        match self {
            Self::Sr => Provenance::SR,
            Self::Scr => Provenance::SR | Provenance::CR,
            Self::Skr => Provenance::SR | Provenance::KR,
            Self::Sckr => Provenance::ALL,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Sr => "SR",
            Self::Scr => "SCR",
            Self::Skr => "SKR",
            Self::Sckr => "SCKR",
        }
    }
}

impl fmt::Display for RelationMix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for RelationMix {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown relation mix `{s}` (SR, SCR, SKR, SCKR)")))
    }
}

/// Undirected simple graph over `0..n` with per-edge provenance. Edges are
/// stored once as `(i, j)` with `i < j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationGraph {
    n: usize,
    edges: BTreeMap<(u32, u32), Provenance>,
}

impl RelationGraph {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            edges: BTreeMap::new(),
        }
    }

    /// Builds from undirected edges; `(i, j)` and `(j, i)` merge and
    /// provenance is OR-ed.
    pub fn from_edges(
        n: usize,
        edges: impl IntoIterator<Item = (u32, u32, Provenance)>,
    ) -> Result<Self> {
        let mut g = Self::empty(n);
        for (i, j, p) in edges {
            g.add_edge(i, j, p)?;
        }
        Ok(g)
    }

    pub fn add_edge(&mut self, i: u32, j: u32, p: Provenance) -> Result<()> {
        if i == j {
            return Err(Error::Validation(format!("self-loop on node {i}")));
        }
        if i as usize >= self.n || j as usize >= self.n {
            return Err(Error::Validation(format!(
                "edge ({i}, {j}) outside a {}-node graph",
                self.n
            )));
        }
        if p.is_empty() {
            return Err(Error::Validation(format!("edge ({i}, {j}) has no provenance")));
        }
        let key = if i < j { (i, j) } else { (j, i) };
        let slot = self.edges.entry(key).or_default();
        *slot = *slot | p;
        Ok(())
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn provenance(&self, i: u32, j: u32) -> Option<Provenance> {
        let key = if i < j { (i, j) } else { (j, i) };
        self.edges.get(&key).copied()
    }

    pub fn has_edge(&self, i: u32, j: u32) -> bool {
        self.provenance(i, j).is_some()
    }

    /// Edges in canonical `(i < j)` ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32, Provenance)> + '_ {
        self.edges.iter().map(|(&(i, j), &p)| (i, j, p))
    }

    pub fn edge_set(&self) -> BTreeSet<(u32, u32)> {
        self.edges.keys().copied().collect()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = alloc::vec![0; self.n];
        for &(i, j) in self.edges.keys() {
            d[i as usize] += 1;
            d[j as usize] += 1;
        }
        d
    }

    /// 64-bit FNV-1a over the node count and the canonical edge list, used
    /// to tie checkpoints to the graph they were trained on.
    pub fn fingerprint(&self) -> u64 {
        const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
        const PRIME: u64 = 0x0100_0000_01b3;
        let mut h = OFFSET;
        let mut feed = |bytes: &[u8]| {
            for &b in bytes {
                h ^= u64::from(b);
                h = h.wrapping_mul(PRIME);
            }
        };
        feed(&(self.n as u64).to_le_bytes());
        for (&(i, j), p) in &self.edges {
            feed(&i.to_le_bytes());
            feed(&j.to_le_bytes());
            feed(&[p.bits()]);
        }
        h
    }
}

/// Semantic edges: `(i, j)` whenever either word is among the other's `k`
/// nearest neighbours by cosine similarity. Words without embeddings get no
/// edges.
pub fn build_sr(table: &EmbeddingTable, k: usize) -> Result<RelationGraph> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let mut g = RelationGraph::empty(table.len());
    for i in (0..table.len() as u32).filter(|&i| table.is_present(i)) {
        for (j, _) in table.knn(i, k)? {
            g.add_edge(i, j, Provenance::SR)?;
        }
    }
    Ok(g)
}

/// Number of sentences containing both words, for every co-occurring pair
/// of vocabulary words. Each sentence counts a pair at most once.
pub fn cooccurrence_counts<'a, I>(samples: I, vocab: &Vocabulary) -> BTreeMap<(u32, u32), u32>
where
    I: IntoIterator<Item = &'a TextSample>,
{
    let mut counts: BTreeMap<(u32, u32), u32> = BTreeMap::new();
    for s in samples {
        for sentence in s.sentence_tokens() {
            let mut ids: Vec<u32> = sentence.iter().filter_map(|t| vocab.id(t)).collect();
            ids.sort_unstable();
            ids.dedup();
            for (a, &i) in ids.iter().enumerate() {
                for &j in &ids[a + 1..] {
                    *counts.entry((i, j)).or_default() += 1;
                }
            }
        }
    }
    counts
}

/// Co-occurrence edges: pairs sharing at least `epsilon` sentences.
pub fn build_cr<'a, I>(samples: I, vocab: &Vocabulary, epsilon: u32) -> Result<RelationGraph>
where
    I: IntoIterator<Item = &'a TextSample>,
{
    if epsilon == 0 {
        return Err(Error::Config("epsilon must be at least 1".into()));
    }
    let counts = cooccurrence_counts(samples, vocab);
    RelationGraph::from_edges(
        vocab.len(),
        counts
            .into_iter()
            .filter(|&(_, c)| c >= epsilon)
            .map(|((i, j), _)| (i, j, Provenance::CR)),
    )
}

/// Knowledge edges: pairs of distinct words linked by any triple, with
/// words matched to triple labels exactly after normalization.
pub fn build_kr(store: &TripleStore, vocab: &Vocabulary) -> Result<RelationGraph> {
    let index = store.label_index(vocab);
    let mut g = RelationGraph::empty(vocab.len());
    for (a, b) in store.links() {
        let (Some(ia), Some(ib)) = (index.get(a), index.get(b)) else {
            continue;
        };
        for &i in ia {
            for &j in ib {
                if i != j {
                    g.add_edge(i, j, Provenance::KR)?;
                }
            }
        }
    }
    Ok(g)
}

/// Union of edge sets with provenance OR-ed per edge.
pub fn integrate(graphs: &[RelationGraph]) -> Result<RelationGraph> {
    let first = graphs
        .first()
        .ok_or_else(|| Error::Validation("nothing to integrate".into()))?;
    let mut out = first.clone();
    for g in &graphs[1..] {
        if g.n != out.n {
            return Err(Error::Validation(format!(
                "cannot integrate graphs with {} and {} nodes",
                out.n, g.n
            )));
        }
        for (i, j, p) in g.edges() {
            out.add_edge(i, j, p)?;
        }
    }
    Ok(out)
}

/// Keeps edges whose provenance intersects `mask`. Kept edges retain their
/// full provenance.
pub fn filter_by_provenance(graph: &RelationGraph, mask: Provenance) -> Result<RelationGraph> {
    if mask.is_empty() {
        return Err(Error::Validation("provenance mask is empty".into()));
    }
    Ok(RelationGraph {
        n: graph.n,
        edges: graph
            .edges
            .iter()
            .filter(|(_, p)| p.intersects(mask))
            .map(|(&k, &p)| (k, p))
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphStats {
    pub n_nodes: usize,
    pub n_edges: usize,
    /// `n_edges / (n (n-1) / 2)`; zero for graphs with fewer than two nodes.
    pub density: f64,
}

pub fn stats(graph: &RelationGraph) -> GraphStats {
    let n = graph.n as f64;
    let pairs = n * (n - 1.0) / 2.0;
    GraphStats {
        n_nodes: graph.n,
        n_edges: graph.n_edges(),
        density: if pairs > 0.0 {
            graph.n_edges() as f64 / pairs
        } else {
            0.0
        },
    }
}

impl fmt::Display for GraphStats {
    /// `nodes edges density%` with four decimals.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {:.4}", self.n_nodes, self.n_edges, self.density * 100.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PropagationScheme {
    /// `D̃^{-1/2} (A + I) D̃^{-1/2}` with `D̃` the degree matrix of `A + I`.
    #[default]
    SymRenorm,
}

impl FromStr for PropagationScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sym_renorm" => Ok(Self::SymRenorm),
            other => Err(Error::Config(format!("unknown propagation scheme `{other}`"))),
        }
    }
}

/// Graph-convolution operator in compressed-row form. Entry `(i, j)` is
/// computed as `r_i * r_j` with `r = 1/sqrt(deg + 1)`, so the result is
/// exactly symmetric.
pub fn propagation_matrix(graph: &RelationGraph, scheme: PropagationScheme) -> SparseMatrix {
    match scheme {
        PropagationScheme::SymRenorm => {
            let inv_sqrt: Vec<f64> = graph
                .degrees()
                .into_iter()
                .map(|d| 1.0 / libm::sqrt((d + 1) as f64))
                .collect();
            let diag = (0..graph.n).map(|i| (i, i, inv_sqrt[i] * inv_sqrt[i]));
            let off = graph.edges().flat_map(|(i, j, _)| {
                let (i, j) = (i as usize, j as usize);
                let w = inv_sqrt[i] * inv_sqrt[j];
                [(i, j, w), (j, i, w)]
            });
            SparseMatrix::from_triplets(graph.n, graph.n, diag.chain(off).collect::<Vec<_>>())
                .expect("graph edges are in bounds")
        }
    }
}

/// Checks that `graph` lives on `vocab`'s node set.
pub fn check_nodes(graph: &RelationGraph, vocab: &Vocabulary) -> Result<()> {
    if graph.n != vocab.len() {
        return Err(Error::Validation(format!(
            "graph has {} nodes but the vocabulary has {} words",
            graph.n,
            vocab.len()
        )));
    }
    Ok(())
}

/// Human-readable provenance such as `SR|KR`.
pub fn provenance_label(p: Provenance) -> String {
    let mut parts = Vec::new();
    for (bit, name) in [(Provenance::SR, "SR"), (Provenance::CR, "CR"), (Provenance::KR, "KR")] {
        if p.contains(bit) {
            parts.push(name);
        }
    }
    parts.join("|")
}
