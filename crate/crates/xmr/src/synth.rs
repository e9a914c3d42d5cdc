//! Planted-structure corpus for end-to-end checks: each category has its own
//! nouns, word vectors clustered by category, knowledge triples mostly
//! within a category, and image features drawn around a category prototype.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::formats::{self, CorpusFormat, CorpusRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub seed: u64,
    pub categories: usize,
    pub texts_per_category: usize,
    pub nouns_per_category: usize,
    pub embedding_dim: usize,
    pub visual_dim: usize,
    /// Standard deviation of the image noise around each prototype.
    pub visual_noise: f64,
    /// Standard deviation of word vectors around their category centroid.
    pub embedding_noise: f64,
    /// Sentences per text, inclusive range.
    pub sentences: (usize, usize),
    /// Token mix in percent: own-category noun, shared noun, noun of another
    /// category; the rest are stopwords.
    pub own_percent: u32,
    pub shared_percent: u32,
    pub foreign_percent: u32,
    /// Category nouns per category left out of the embedding file.
    pub missing_embeddings: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            seed: 7,
            categories: 5,
            texts_per_category: 40,
            nouns_per_category: 8,
            embedding_dim: 16,
            visual_dim: 64,
            visual_noise: 1.0,
            embedding_noise: 0.5,
            sentences: (2, 4),
            own_percent: 30,
            shared_percent: 15,
            foreign_percent: 10,
            missing_embeddings: 2,
        }
    }
}

const THEMES: [[&str; 8]; 5] = [
    ["glacier", "summit", "ridge", "avalanche", "cabin", "pine", "slope", "climber"],
    ["harbor", "ship", "anchor", "sailor", "pier", "cargo", "lighthouse", "crane"],
    ["dune", "camel", "cactus", "oasis", "nomad", "mirage", "canyon", "caravan"],
    ["oven", "knife", "recipe", "chef", "spoon", "flour", "kettle", "stove"],
    ["stadium", "referee", "goal", "trophy", "whistle", "coach", "player", "crowd"],
];
const SHARED: [&str; 10] =
    ["day", "picture", "people", "place", "time", "view", "color", "year", "light", "side"];
const FILLER: [&str; 12] =
    ["the", "a", "of", "and", "in", "with", "is", "was", "on", "to", "over", "by"];
const RELATIONS: [&str; 4] = ["part_of", "located_in", "used_for", "associated_with"];

/// Alphabetic pseudo-word for categories beyond the built-in themes.
fn pseudo_word(mut n: usize) -> String {
    const C: &[u8] = b"bdfgklmnprstvz";
    const V: &[u8] = b"aeiou";
    let mut w = String::new();
    for _ in 0..3 {
        w.push(C[n % C.len()] as char);
        n /= C.len();
        w.push(V[n % V.len()] as char);
        n /= V.len();
    }
    w
}

pub struct SynthData {
    pub records: Vec<CorpusRecord>,
    pub nouns: Vec<Vec<String>>,
    pub embeddings: Vec<(String, Vec<f64>)>,
    pub triples: Vec<(String, String, String)>,
    pub visual: BTreeMap<String, Vec<f64>>,
    pub prototypes: Vec<Vec<f64>>,
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize, sigma: f64) -> Vec<f64> {
    let n = Normal::new(0.0, sigma).expect("positive sigma");
    (0..dim).map(|_| n.sample(rng)).collect()
}

pub fn generate(spec: &SynthSpec) -> SynthData {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let nouns: Vec<Vec<String>> = (0..spec.categories)
        .map(|c| {
            (0..spec.nouns_per_category)
                .map(|i| match THEMES.get(c).and_then(|t| t.get(i)) {
                    Some(w) => w.to_string(),
                    None => pseudo_word(1000 + c * spec.nouns_per_category + i),
                })
                .collect()
        })
        .collect();

    let mut records = Vec::new();
    for t in 0..spec.texts_per_category {
        for (c, own) in nouns.iter().enumerate() {
            let idx = t * spec.categories + c;
            let mut text = String::new();
            let (own_cut, shared_cut) = (spec.own_percent, spec.own_percent + spec.shared_percent);
            let foreign_cut = shared_cut + spec.foreign_percent;
            for _ in 0..rng.gen_range(spec.sentences.0..=spec.sentences.1) {
                let mut words = Vec::new();
                for _ in 0..rng.gen_range(5..=10) {
                    let roll = rng.gen_range(0..100);
                    let w = if roll < own_cut {
                        own.choose(&mut rng).unwrap().clone()
                    } else if roll < shared_cut {
                        SHARED.choose(&mut rng).unwrap().to_string()
                    } else if roll < foreign_cut {
                        nouns.choose(&mut rng).unwrap().choose(&mut rng).unwrap().clone()
                    } else {
                        FILLER.choose(&mut rng).unwrap().to_string()
                    };
                    words.push(w);
                }
                let mut sentence = words.join(" ");
                sentence[..1].make_ascii_uppercase();
                text.push_str(&sentence);
                text.push_str([". ", ". ", "! ", "? "][rng.gen_range(0..4)]);
            }
            records.push(CorpusRecord {
                id: format!("txt{idx:04}"),
                text: text.trim_end().to_string(),
                category: c as u32,
                image_id: format!("img{idx:04}"),
            });
        }
    }

    let mut embeddings = Vec::new();
    for own in &nouns {
        let centroid = gaussian(&mut rng, spec.embedding_dim, 1.0);
        for w in &own[spec.missing_embeddings.min(own.len())..] {
            let noise = gaussian(&mut rng, spec.embedding_dim, spec.embedding_noise);
            embeddings.push((w.clone(), centroid.iter().zip(noise).map(|(a, b)| a + b).collect()));
        }
    }
    for w in SHARED.iter().chain(&["volcano", "galaxy", "violin"]) {
        embeddings.push((w.to_string(), gaussian(&mut rng, spec.embedding_dim, 1.0)));
    }

    let mut triples = Vec::new();
    for own in &nouns {
        for _ in 0..spec.nouns_per_category + 2 {
            let pick: Vec<&String> = own.choose_multiple(&mut rng, 2).collect();
            let r = RELATIONS.choose(&mut rng).unwrap();
            triples.push((pick[0].clone(), r.to_string(), pick[1].clone()));
        }
    }
    for _ in 0..spec.categories {
        let a = nouns.choose(&mut rng).unwrap().choose(&mut rng).unwrap().clone();
        let b = nouns.choose(&mut rng).unwrap().choose(&mut rng).unwrap().clone();
        triples.push((a, "associated_with".into(), b));
    }
    for i in 0..10 {
        triples.push((format!("Entity {i}"), "instance_of".into(), "Landmark".into()));
    }

    let prototypes: Vec<Vec<f64>> =
        (0..spec.categories).map(|_| gaussian(&mut rng, spec.visual_dim, 1.0)).collect();
    let mut visual = BTreeMap::new();
    for r in &records {
        let p = &prototypes[r.category as usize];
        let noise = gaussian(&mut rng, spec.visual_dim, spec.visual_noise);
        visual.insert(r.image_id.clone(), p.iter().zip(noise).map(|(a, b)| a + b).collect());
    }

    SynthData { records, nouns, embeddings, triples, visual, prototypes }
}

/// Configuration written next to the generated files. Keys not listed keep
/// their defaults.
pub fn config_toml(spec: &SynthSpec) -> String {
    format!(
        "seed = {}\nworkdir = \"work\"\n\n\
         [paths]\ncorpus = \"corpus.jsonl\"\nembeddings = \"embeddings.txt\"\n\
         triples = \"triples.tsv\"\nvisual_features = \"visual.txt\"\n\n\
         [pairs]\npositives = 800\nnegatives = 800\nalignment = \"same_category\"\n",
        spec.seed
    )
}

/// Writes corpus, embeddings, triples, visual features and `config.toml`.
pub fn write(spec: &SynthSpec, dir: &Path) -> Result<SynthData> {
    let data = generate(spec);
    formats::write_corpus(&dir.join("corpus.jsonl"), &data.records, CorpusFormat::Jsonl)?;
    formats::write_embeddings(&dir.join("embeddings.txt"), &data.embeddings)?;
    formats::write_triples(&dir.join("triples.tsv"), &data.triples)?;
    formats::write_visual_features(&dir.join("visual.txt"), &data.visual)?;
    formats::write_file(&dir.join("config.toml"), config_toml(spec))?;
    Ok(data)
}
