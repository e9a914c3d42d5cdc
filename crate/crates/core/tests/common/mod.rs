//! Brute-force oracles and random instance generators shared by the
//! integration and acceptance tests. Nothing here calls the code paths it is
//! used to check.
#![allow(dead_code)]

pub mod fd;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use xmr_core::corpus::{TextSample, Vocabulary};
use xmr_core::kgstore::TripleStore;
use xmr_core::numerics::DenseMatrix;
use xmr_core::relgraph::{Provenance, RelationGraph};

pub fn vocab_of(words: &[String]) -> Vocabulary {
    Vocabulary::from_words(words.to_vec(), &[]).unwrap()
}

pub fn word_list(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("w{i:03}")).collect()
}

/// Random vectors with a fraction missing; entries drawn from a small grid
/// so exact cosine ties actually occur.
pub fn random_vectors(rng: &mut impl Rng, n: usize, dim: usize, p_missing: f64) -> Vec<Option<Vec<f64>>> {
    (0..n)
        .map(|_| {
            if rng.gen_bool(p_missing) {
                return None;
            }
            Some((0..dim).map(|_| f64::from(rng.gen_range(-3i32..=3))).collect())
        })
        .collect()
}

fn plain_cosine(u: &[f64], v: &[f64]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu: f64 = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    (dot / (nu * nv)).clamp(-1.0, 1.0)
}

fn usable(v: &Option<Vec<f64>>) -> Option<&Vec<f64>> {
    v.as_ref().filter(|v| v.iter().any(|&x| x != 0.0))
}

/// Exhaustive k-NN: score every other usable vector, full sort by
/// (descending cosine, ascending id), take k.
pub fn oracle_knn(vectors: &[Option<Vec<f64>>], query: usize, k: usize) -> Vec<(u32, f64)> {
    let q = usable(&vectors[query]).expect("query present");
    let mut all: Vec<(u32, f64)> = vectors
        .iter()
        .enumerate()
        .filter(|&(j, v)| j != query && usable(v).is_some())
        .map(|(j, v)| (j as u32, plain_cosine(q, usable(v).unwrap())))
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

/// Semantic edge membership tested for every pair.
pub fn oracle_sr_edges(vectors: &[Option<Vec<f64>>], k: usize) -> BTreeSet<(u32, u32)> {
    let n = vectors.len();
    let neighbours: Vec<BTreeSet<u32>> = (0..n)
        .map(|i| {
            if usable(&vectors[i]).is_some() {
                oracle_knn(vectors, i, k).into_iter().map(|p| p.0).collect()
            } else {
                BTreeSet::new()
            }
        })
        .collect();
    let mut edges = BTreeSet::new();
    for i in 0..n {
        for j in i + 1..n {
            if neighbours[j].contains(&(i as u32)) || neighbours[i].contains(&(j as u32)) {
                edges.insert((i as u32, j as u32));
            }
        }
    }
    edges
}

/// Random corpus over `words` plus out-of-vocabulary filler, split into
/// `n_docs` documents with a few sentences each.
pub fn random_corpus(rng: &mut impl Rng, words: &[String], n_sentences: usize, n_docs: usize) -> Vec<TextSample> {
    let filler = ["the", "of", "xyz", "and"];
    let hot: Vec<&String> = words.iter().take(words.len().min(8)).collect();
    let mut docs: Vec<String> = vec![String::new(); n_docs];
    for s in 0..n_sentences {
        let len = rng.gen_range(1..=9);
        let mut sentence = Vec::new();
        for _ in 0..len {
            let tok = match rng.gen_range(0..10) {
                0..=4 => hot.choose(rng).unwrap().as_str(),
                5..=7 => words.choose(rng).unwrap().as_str(),
                _ => filler.choose(rng).unwrap(),
            };
            sentence.push(tok.to_string());
        }
        let doc = &mut docs[s % n_docs];
        doc.push_str(&sentence.join(" "));
        doc.push_str(if rng.gen_bool(0.5) { ". " } else { "! " });
    }
    docs.into_iter()
        .enumerate()
        .map(|(i, text)| TextSample::new(format!("d{i}"), &text, (i % 3) as u32, format!("img{i}")))
        .collect()
}

/// Sentence co-occurrence by nested loops over token positions.
pub fn oracle_cooccurrence(samples: &[TextSample], words: &[String]) -> BTreeMap<(u32, u32), u32> {
    let mut counts = BTreeMap::new();
    for s in samples {
        for range in &s.sentences {
            let sentence = &s.tokens[range.clone()];
            for (i, wi) in words.iter().enumerate() {
                for (j, wj) in words.iter().enumerate().skip(i + 1) {
                    let has_i = sentence.iter().any(|t| t == wi);
                    let has_j = sentence.iter().any(|t| t == wj);
                    if has_i && has_j {
                        *counts.entry((i as u32, j as u32)).or_insert(0) += 1;
                    }
                }
            }
        }
    }
    counts
}

/// Triples over vocabulary words (random case and padding) and unrelated
/// labels.
pub fn random_triples(rng: &mut impl Rng, words: &[String], n: usize) -> Vec<(String, String, String)> {
    let relations = ["director_of", "part_of", "located_in", "instance_of"];
    let label = |rng: &mut dyn rand::RngCore| -> String {
        if rng.gen_bool(0.85) {
            let w = words.choose(rng).unwrap().clone();
            match rng.gen_range(0..3) {
                0 => w.to_uppercase(),
                1 => format!(" {w} "),
                _ => w,
            }
        } else {
            format!("entity {}", rng.gen_range(0..50))
        }
    };
    (0..n)
        .map(|_| {
            let s = label(rng);
            let o = label(rng);
            (s, relations.choose(rng).unwrap().to_string(), o)
        })
        .collect()
}

/// Knowledge edges by checking every vocabulary pair against the store.
pub fn oracle_kr_edges(store: &TripleStore, words: &[String]) -> BTreeSet<(u32, u32)> {
    let mut edges = BTreeSet::new();
    for i in 0..words.len() {
        for j in i + 1..words.len() {
            if store.related(&words[i], &words[j]) {
                edges.insert((i as u32, j as u32));
            }
        }
    }
    edges
}

/// Linear scan over raw triples, independent of the store's index.
pub fn oracle_related(triples: &[(String, String, String)], a: &str, b: &str) -> bool {
    let norm = |s: &str| s.trim().to_lowercase();
    let (a, b) = (norm(a), norm(b));
    triples.iter().any(|(s, _, o)| {
        let (s, o) = (norm(s), norm(o));
        (s == a && o == b) || (s == b && o == a)
    })
}

pub fn random_graph(rng: &mut impl Rng, n: usize, p: f64, prov: Provenance) -> RelationGraph {
    let mut edges = Vec::new();
    for i in 0..n as u32 {
        for j in i + 1..n as u32 {
            if rng.gen_bool(p) {
                edges.push((i, j, prov));
            }
        }
    }
    RelationGraph::from_edges(n, edges).unwrap()
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` with dense matrix products.
pub fn dense_propagation(graph: &RelationGraph) -> DenseMatrix {
    let n = graph.n_nodes();
    let mut a = DenseMatrix::identity(n);
    for (i, j, _) in graph.edges() {
        a.set(i as usize, j as usize, 1.0);
        a.set(j as usize, i as usize, 1.0);
    }
    let mut d = DenseMatrix::zeros(n, n);
    for i in 0..n {
        let deg: f64 = a.row(i).iter().sum();
        d.set(i, i, 1.0 / deg.sqrt());
    }
    d.matmul(&a).unwrap().matmul(&d).unwrap()
}
