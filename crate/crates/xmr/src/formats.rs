//! Readers and writers for every on-disk artifact. Parse errors carry the
//! file path and 1-based line number.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use xmr_core::corpus::{check_unique_ids, ExternalNodeFeatures, TextSample, Vocabulary};
use xmr_core::embedstore::EmbeddingTable;
use xmr_core::evalkit::MapReport;
use xmr_core::kgstore::TripleStore;
use xmr_core::numerics::DenseMatrix;
use xmr_core::relgraph::{Provenance, RelationGraph};
use xmr_core::trainer::TrainReport;

use crate::error::{Error, Result};

fn read(path: &Path, what: &'static str) -> Result<String> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingInput { what, path: path.to_path_buf() },
        _ => Error::io(path, e),
    })
}

/// Writes `contents` in one call so a failed run never leaves half a file.
pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Non-blank lines with their 1-based numbers.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l)).filter(|(_, l)| !l.trim().is_empty())
}

fn parse_num<T: std::str::FromStr>(path: &Path, line: usize, field: &str, what: &str) -> Result<T> {
    field
        .parse()
        .map_err(|_| Error::format(path, line, format!("invalid {what} `{field}`")))
}

fn parse_floats(path: &Path, line: usize, fields: &[&str]) -> Result<Vec<f64>> {
    fields
        .iter()
        .map(|f| {
            let v: f64 = parse_num(path, line, f, "number")?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::format(path, line, format!("non-finite value `{f}`")))
            }
        })
        .collect()
}

/// Two whitespace-separated counts on the first non-blank line.
fn header<'a>(
    path: &Path,
    mut it: impl Iterator<Item = (usize, &'a str)>,
    names: &str,
) -> Result<(usize, usize, usize)> {
    let Some((line, text)) = it.next() else {
        return Err(Error::format(path, 1, format!("missing header `{names}`")));
    };
    let f: Vec<&str> = text.split_whitespace().collect();
    if f.len() != 2 {
        return Err(Error::format(path, line, format!("header must be `{names}`")));
    }
    Ok((line, parse_num(path, line, f[0], "count")?, parse_num(path, line, f[1], "count")?))
}

// ---- corpus ---------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Jsonl,
    Tsv,
}

impl CorpusFormat {
    /// `.tsv` is TSV, anything else JSON lines.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") => Self::Tsv,
            _ => Self::Jsonl,
        }
    }
}

/// One corpus record as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub text: String,
    pub category: u32,
    pub image_id: String,
}

impl CorpusRecord {
    pub fn to_sample(&self) -> TextSample {
        TextSample::new(self.id.clone(), &self.text, self.category, self.image_id.clone())
    }
}

const TSV_HEADER: &str = "id\ttext\tcategory\timage_id";

pub fn load_corpus_records(path: &Path, format: CorpusFormat) -> Result<Vec<CorpusRecord>> {
    let text = read(path, "corpus")?;
    let mut out = Vec::new();
    for (line, raw) in lines(&text) {
        let record = match format {
            CorpusFormat::Jsonl => serde_json::from_str::<CorpusRecord>(raw)
                .map_err(|e| Error::format(path, line, e.to_string()))?,
            CorpusFormat::Tsv => {
                if out.is_empty() && raw == TSV_HEADER {
                    continue;
                }
                let f: Vec<&str> = raw.split('\t').collect();
                if f.len() != 4 {
                    return Err(Error::format(path, line, format!("expected 4 tab-separated columns, found {}", f.len())));
                }
                CorpusRecord {
                    id: f[0].to_string(),
                    text: f[1].to_string(),
                    category: parse_num(path, line, f[2], "category")?,
                    image_id: f[3].to_string(),
                }
            }
        };
        out.push(record);
    }
    Ok(out)
}

/// Loads and tokenizes a corpus; duplicate ids are rejected.
pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Vec<TextSample>> {
    let samples: Vec<TextSample> =
        load_corpus_records(path, format)?.iter().map(CorpusRecord::to_sample).collect();
    check_unique_ids(&samples)?;
    Ok(samples)
}

pub fn write_corpus(path: &Path, records: &[CorpusRecord], format: CorpusFormat) -> Result<()> {
    let mut out = String::new();
    match format {
        CorpusFormat::Jsonl => {
            for r in records {
                out.push_str(&serde_json::to_string(r).expect("plain record serializes"));
                out.push('\n');
            }
        }
        CorpusFormat::Tsv => {
            out.push_str(TSV_HEADER);
            out.push('\n');
            for r in records {
                if [&r.id, &r.text, &r.image_id].iter().any(|f| f.contains(['\t', '\n'])) {
                    return Err(Error::Config(format!("record `{}` has a tab or newline; use jsonl", r.id)));
                }
                let _ = writeln!(out, "{}\t{}\t{}\t{}", r.id, r.text, r.category, r.image_id);
            }
        }
    }
    write_file(path, out)
}

// ---- word lists -----------------------------------------------------------

/// Stopword or noun-lexicon file: one word per line, lowercased.
pub fn load_word_set(path: &Path, what: &'static str) -> Result<BTreeSet<String>> {
    let text = read(path, what)?;
    Ok(lines(&text).map(|(_, w)| w.trim().to_lowercase()).collect())
}

pub fn render_vocabulary(vocab: &Vocabulary) -> String {
    let mut out = String::new();
    for w in vocab.words() {
        out.push_str(w);
        out.push('\n');
    }
    out
}

/// Vocabulary file: words in id order. Duplicates are a format error.
pub fn load_vocabulary_words(path: &Path) -> Result<Vec<String>> {
    let text = read(path, "vocabulary")?;
    let mut seen = BTreeSet::new();
    let mut words = Vec::new();
    for (line, w) in lines(&text) {
        let w = w.trim();
        if !seen.insert(w) {
            return Err(Error::format(path, line, format!("duplicate word `{w}`")));
        }
        words.push(w.to_string());
    }
    Ok(words)
}

// ---- embeddings -----------------------------------------------------------

/// Raw `word v1 .. vd` lines. A leading `count dim` line, as written by
/// word2vec, is accepted and checked.
pub type EmbeddingEntries = Vec<(String, Vec<f64>)>;

pub fn load_embedding_entries(path: &Path) -> Result<(usize, EmbeddingEntries)> {
    let text = read(path, "embeddings")?;
    let mut it = lines(&text).peekable();
    let mut declared = None;
    if let Some(&(line, first)) = it.peek() {
        let f: Vec<&str> = first.split_whitespace().collect();
        if f.len() == 2 {
            if let (Ok(count), Ok(dim)) = (f[0].parse::<usize>(), f[1].parse::<usize>()) {
                declared = Some((line, count, dim));
                it.next();
            }
        }
    }
    let mut dim = declared.map(|d| d.2);
    let mut entries = Vec::new();
    for (line, raw) in it {
        let f: Vec<&str> = raw.split_whitespace().collect();
        let v = parse_floats(path, line, &f[1..])?;
        match dim {
            None if v.is_empty() => return Err(Error::format(path, line, "vector has no components")),
            None => dim = Some(v.len()),
            Some(d) if d != v.len() => {
                return Err(Error::format(path, line, format!("expected {d} components, found {}", v.len())))
            }
            Some(_) => {}
        }
        entries.push((f[0].to_string(), v));
    }
    if let Some((line, count, _)) = declared {
        if count != entries.len() {
            return Err(Error::format(path, line, format!("header declares {count} vectors, found {}", entries.len())));
        }
    }
    let dim = dim.ok_or_else(|| Error::format(path, 1, "no vectors"))?;
    Ok((dim, entries))
}

pub fn load_embeddings(path: &Path, vocab: &Vocabulary) -> Result<EmbeddingTable> {
    let (dim, entries) = load_embedding_entries(path)?;
    Ok(EmbeddingTable::from_entries(vocab, dim, entries)?)
}

pub fn write_embeddings(path: &Path, entries: &[(String, Vec<f64>)]) -> Result<()> {
    let mut out = String::new();
    for (w, v) in entries {
        out.push_str(w);
        for x in v {
            let _ = write!(out, " {x}");
        }
        out.push('\n');
    }
    write_file(path, out)
}

// ---- triples --------------------------------------------------------------

pub fn load_triple_rows(path: &Path) -> Result<Vec<(String, String, String)>> {
    let text = read(path, "triples")?;
    lines(&text)
        .map(|(line, raw)| {
            let f: Vec<&str> = raw.split('\t').collect();
            match f.as_slice() {
                [s, r, o] => Ok((s.to_string(), r.to_string(), o.to_string())),
                _ => Err(Error::format(path, line, format!("expected subject, relation, object; found {} columns", f.len()))),
            }
        })
        .collect()
}

pub fn load_triples(path: &Path) -> Result<TripleStore> {
    Ok(TripleStore::new(load_triple_rows(path)?))
}

pub fn write_triples(path: &Path, rows: &[(String, String, String)]) -> Result<()> {
    let mut out = String::new();
    for (s, r, o) in rows {
        let _ = writeln!(out, "{s}\t{r}\t{o}");
    }
    write_file(path, out)
}

// ---- graph ----------------------------------------------------------------

/// `n m` header, then `i j mask` per edge in canonical order.
pub fn render_graph(graph: &RelationGraph) -> String {
    let mut out = format!("{} {}\n", graph.n_nodes(), graph.n_edges());
    for (i, j, p) in graph.edges() {
        let _ = writeln!(out, "{i} {j} {}", p.bits());
    }
    out
}

pub fn parse_graph(path: &Path, text: &str) -> Result<RelationGraph> {
    let mut it = lines(text);
    let (hline, n, m) = header(path, &mut it, "n m")?;
    let mut graph = RelationGraph::empty(n);
    let mut count = 0;
    for (line, raw) in it {
        let f: Vec<&str> = raw.split_whitespace().collect();
        if f.len() != 3 {
            return Err(Error::format(path, line, "edge lines are `i j mask`"));
        }
        let i: u32 = parse_num(path, line, f[0], "node id")?;
        let j: u32 = parse_num(path, line, f[1], "node id")?;
        let bits: u8 = parse_num(path, line, f[2], "mask")?;
        let p = Provenance::from_bits(bits)
            .filter(|p| !p.is_empty())
            .ok_or_else(|| Error::format(path, line, format!("mask {bits} outside 1..=7")))?;
        if graph.has_edge(i, j) {
            return Err(Error::format(path, line, format!("duplicate edge {i} {j}")));
        }
        graph.add_edge(i, j, p).map_err(|e| Error::format(path, line, e.to_string()))?;
        count += 1;
    }
    if count != m {
        return Err(Error::format(path, hline, format!("header declares {m} edges, found {count}")));
    }
    Ok(graph)
}

pub fn load_graph(path: &Path) -> Result<RelationGraph> {
    parse_graph(path, &read(path, "graph")?)
}

// ---- visual features ------------------------------------------------------

/// `count dim` header, then `image_id v1 .. vdim`.
pub fn load_visual_features(path: &Path) -> Result<BTreeMap<String, Vec<f64>>> {
    let text = read(path, "visual features")?;
    let mut it = lines(&text);
    let (hline, count, dim) = header(path, &mut it, "count dim")?;
    let mut out = BTreeMap::new();
    for (line, raw) in it {
        let f: Vec<&str> = raw.split_whitespace().collect();
        let v = parse_floats(path, line, &f[1..])?;
        if v.len() != dim {
            return Err(Error::format(path, line, format!("expected {dim} components, found {}", v.len())));
        }
        if out.insert(f[0].to_string(), v).is_some() {
            return Err(Error::format(path, line, format!("duplicate image id `{}`", f[0])));
        }
    }
    if out.len() != count {
        return Err(Error::format(path, hline, format!("header declares {count} images, found {}", out.len())));
    }
    Ok(out)
}

pub fn write_visual_features(path: &Path, features: &BTreeMap<String, Vec<f64>>) -> Result<()> {
    let dim = features.values().next().map_or(0, Vec::len);
    let mut out = format!("{} {dim}\n", features.len());
    for (id, v) in features {
        out.push_str(id);
        for x in v {
            let _ = write!(out, " {x}");
        }
        out.push('\n');
    }
    write_file(path, out)
}

// ---- external node features -----------------------------------------------

/// `|V| channels` header, then per text a line with its id followed by |V|
/// rows of `channels` numbers.
pub fn load_node_features(path: &Path, n_nodes: usize) -> Result<ExternalNodeFeatures> {
    let text = read(path, "node features")?;
    let mut it = lines(&text);
    let (hline, n, channels) = header(path, &mut it, "|V| channels")?;
    if n != n_nodes {
        return Err(Error::format(path, hline, format!("features cover {n} nodes, the vocabulary has {n_nodes}")));
    }
    if channels == 0 {
        return Err(Error::format(path, hline, "channel count must be positive"));
    }
    let mut out = ExternalNodeFeatures::new(n, channels);
    while let Some((line, id)) = it.next() {
        let id = id.trim();
        if out.get(id).is_some() {
            return Err(Error::format(path, line, format!("duplicate text id `{id}`")));
        }
        let mut data = Vec::with_capacity(n * channels);
        for r in 0..n {
            let Some((rline, raw)) = it.next() else {
                return Err(Error::format(path, line, format!("text `{id}`: expected {n} rows, found {r}")));
            };
            let f: Vec<&str> = raw.split_whitespace().collect();
            if f.len() != channels {
                return Err(Error::format(path, rline, format!("text `{id}`: expected {channels} channels, found {}", f.len())));
            }
            data.extend(parse_floats(path, rline, &f)?);
        }
        out.insert(id, DenseMatrix::from_vec(n, channels, data)?)?;
    }
    Ok(out)
}

pub fn write_node_features(path: &Path, features: &ExternalNodeFeatures) -> Result<()> {
    let mut out = format!("{} {}\n", features.n_nodes, features.channels);
    for (id, m) in &features.matrices {
        let _ = writeln!(out, "{id}");
        for r in 0..m.rows() {
            let row: Vec<String> = m.row(r).iter().map(f64::to_string).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
    }
    write_file(path, out)
}

// ---- reports --------------------------------------------------------------

pub const REPORT_HEADER: &str = "model\tQ_T\tQ_I\tAvg";

/// MAP rows as percentages with one decimal.
pub fn render_report<'a>(rows: impl IntoIterator<Item = (&'a str, MapReport)>) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for (name, r) in rows {
        let _ = writeln!(out, "{name}\t{:.1}\t{:.1}\t{:.1}", r.q_t * 100.0, r.q_i * 100.0, r.avg * 100.0);
    }
    out
}

/// `epoch mean_loss [val_map]`, tab-separated.
pub fn render_train_log(report: &TrainReport) -> String {
    let mut out = String::new();
    for e in &report.epochs {
        let _ = write!(out, "{}\t{}", e.epoch, e.mean_loss);
        if let Some(v) = e.val {
            let _ = write!(out, "\t{}", v.avg);
        }
        out.push('\n');
    }
    out
}

/// Writes to stdout, mapping a closed pipe to success.
pub fn emit(out: &mut impl Write, text: &str) -> Result<()> {
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::io(Path::new("<stdout>"), e)),
        _ => Ok(()),
    }
}
