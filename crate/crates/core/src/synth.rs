//! Seeded generator for a small collection with planted relevance.
//!
//! Every topic has a two-word query, a synonym for each query word and a set
//! of topical terms. Per topic the collection holds
//!
//! * lexical documents: both query words plus topical terms,
//! * paraphrase documents: the synonyms plus topical terms, no query word,
//! * distractors: short, off-topic texts repeating the query words,
//!
//! and the remainder is background filler. Relevant documents are graded 2
//! or 1 (denser topical text gets the higher grade); distractors are judged
//! 0. The stub pseudo-documents list topical terms and synonyms, and the
//! concept lexicon maps all of a topic's words to one concept.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::corpus::{Corpus, Document, Query};
use crate::evaluation::Qrels;

pub const DEFAULT_SEED: u64 = 20_260_301;

pub struct Topic {
    pub query: [&'static str; 2],
    pub synonyms: [&'static str; 2],
    pub topical: [&'static str; 8],
}

pub const TOPICS: [Topic; 10] = [
    Topic {
        query: ["dam", "collapse"],
        synonyms: ["reservoir", "breach"],
        topical: ["evacuation", "downstream", "engineers", "floodwater", "spillway", "hamlets", "rescue", "embankment"],
    },
    Topic {
        query: ["wildfire", "smoke"],
        synonyms: ["blaze", "haze"],
        topical: ["firefighters", "hectares", "containment", "scorched", "embers", "arson", "airtanker", "respiratory"],
    },
    Topic {
        query: ["vaccine", "shortage"],
        synonyms: ["immunization", "scarcity"],
        topical: ["doses", "clinics", "pharmacies", "manufacturer", "booster", "stockpile", "pediatric", "rollout"],
    },
    Topic {
        query: ["currency", "devaluation"],
        synonyms: ["monetary", "depreciation"],
        topical: ["inflation", "importers", "remittances", "banknotes", "speculators", "reserves", "peg", "forex"],
    },
    Topic {
        query: ["earthquake", "aftershock"],
        synonyms: ["tremor", "quake"],
        topical: ["magnitude", "epicenter", "rubble", "seismologists", "fault", "richter", "survivors", "tents"],
    },
    Topic {
        query: ["satellite", "launch"],
        synonyms: ["rocket", "liftoff"],
        topical: ["orbit", "payload", "cosmodrome", "telemetry", "trajectory", "countdown", "astronauts", "spaceport"],
    },
    Topic {
        query: ["oil", "pipeline"],
        synonyms: ["crude", "conduit"],
        topical: ["barrels", "refinery", "sabotage", "leakage", "compressor", "petroleum", "terminal", "tanker"],
    },
    Topic {
        query: ["election", "protest"],
        synonyms: ["ballot", "demonstration"],
        topical: ["polling", "rally", "opposition", "riot", "candidates", "turnout", "teargas", "crackdown"],
    },
    Topic {
        query: ["wheat", "drought"],
        synonyms: ["grain", "dryness"],
        topical: ["farmers", "irrigation", "crops", "yields", "famine", "rainfall", "livestock", "granary"],
    },
    Topic {
        query: ["cyber", "attack"],
        synonyms: ["hacker", "intrusion"],
        topical: ["malware", "ransomware", "servers", "passwords", "outage", "encryption", "phishing", "firewall"],
    },
];

/// Background vocabulary, disjoint from every topic after preprocessing.
pub const FILLER: &[&str] = &[
    "market", "minister", "report", "city", "government", "official", "statement", "region", "local", "national",
    "company", "council", "committee", "meeting", "agency", "program", "project", "budget", "economy", "school",
    "student", "teacher", "hospital", "doctor", "museum", "festival", "culture", "music", "film", "art",
    "weather", "highway", "traffic", "train", "airport", "tourism", "hotel", "restaurant", "football", "league",
    "team", "match", "coach", "player", "stadium", "science", "research", "university", "library", "court",
    "judge", "lawyer", "police", "street", "district", "province", "capital", "mayor", "parliament", "senator",
    "president", "spokesman", "interview", "newspaper", "television", "radio", "journalist", "magazine", "novel",
    "author", "painter", "concert", "theatre", "dance", "fashion", "design", "architect", "bridge", "tunnel",
    "railway", "station", "harbor", "ferry", "island", "mountain", "forest", "lake", "garden", "park", "zoo",
    "animal", "bird", "fish", "ocean", "beach", "summer", "winter", "spring", "autumn", "holiday", "anniversary",
    "ceremony", "award", "prize", "trophy", "champion", "record", "history", "heritage", "tradition", "language",
    "education", "exam", "graduate", "career", "salary", "pension", "tax", "loan", "mortgage", "housing",
    "apartment", "rent", "property", "retail", "shopping", "consumer", "price", "product", "factory", "export",
    "trade", "shipping", "warehouse", "logistics", "startup", "investor", "profit", "revenue", "quarter",
    "smartphone", "software", "internet", "website", "video", "game", "robot", "telescope", "planet", "galaxy",
    "chemistry", "physics", "biology", "medicine", "nutrition", "diet", "fitness", "marathon", "cycling", "tennis",
];

const LANGS: [(&str, &str); 3] = [("zho", "新闻报道"), ("fas", "گزارش خبری"), ("rus", "новостной репортаж")];

const LEXICAL_PER_TOPIC: usize = 4;
const PARAPHRASE_PER_TOPIC: usize = 4;
const DISTRACTORS_PER_TOPIC: usize = 5;

#[derive(Debug, Clone, Serialize)]
pub struct PseudoDocFixture {
    pub query_id: String,
    pub text: String,
}

/// A generated collection and its stub-provider fixtures.
#[derive(Debug, Clone)]
pub struct SyntheticFixture {
    pub corpus: Corpus,
    pub queries: Vec<Query>,
    pub qrels: Qrels,
    pub pseudo_docs: Vec<PseudoDocFixture>,
    pub lexicon: String,
}

enum Kind {
    Relevant { grade: u32, lexical: bool },
    Distractor,
    Background,
}

struct Planned {
    topic: Option<usize>,
    kind: Kind,
}

fn pick<'a>(rng: &mut ChaCha8Rng, words: &[&'a str], n: usize) -> Vec<&'a str> {
    (0..n).map(|_| *words.choose(rng).expect("non-empty word list")).collect()
}

fn text_for(rng: &mut ChaCha8Rng, plan: &Planned) -> Vec<String> {
    let mut tokens: Vec<&str> = match (&plan.kind, plan.topic) {
        (Kind::Relevant { grade, lexical }, Some(t)) => {
            let topic = &TOPICS[t];
            let (topical, filler) = if *grade >= 2 { (10, 8) } else { (6, 16) };
            let anchor = if *lexical { topic.query } else { topic.synonyms };
            let mut v = anchor.to_vec();
            v.extend(pick(rng, &topic.topical, topical));
            v.extend(pick(rng, FILLER, filler));
            v
        }
        (Kind::Distractor, Some(t)) => {
            let q = TOPICS[t].query;
            let mut v = vec![q[0], q[1], q[0]];
            v.extend(pick(rng, FILLER, 9));
            v
        }
        _ => {
            let n = rng.random_range(25..=45);
            pick(rng, FILLER, n)
        }
    };
    tokens.shuffle(rng);
    tokens.into_iter().map(str::to_string).collect()
}

/// Generates the collection; the same seed always yields the same files.
pub fn generate(num_docs: usize, seed: u64) -> SyntheticFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut plans = Vec::new();
    for t in 0..TOPICS.len() {
        for lexical in [true, false] {
            let n = if lexical { LEXICAL_PER_TOPIC } else { PARAPHRASE_PER_TOPIC };
            for i in 0..n {
                let grade = if i < n / 2 { 2 } else { 1 };
                plans.push(Planned { topic: Some(t), kind: Kind::Relevant { grade, lexical } });
            }
        }
        for _ in 0..DISTRACTORS_PER_TOPIC {
            plans.push(Planned { topic: Some(t), kind: Kind::Distractor });
        }
    }
    assert!(num_docs >= plans.len(), "at least {} documents are needed", plans.len());
    while plans.len() < num_docs {
        plans.push(Planned { topic: None, kind: Kind::Background });
    }
    plans.shuffle(&mut rng);

    let mut docs = Vec::with_capacity(num_docs);
    let mut qrels = Qrels::default();
    let mut judged: Vec<Vec<(String, u32)>> = vec![Vec::new(); TOPICS.len()];
    for (i, plan) in plans.iter().enumerate() {
        let doc_id = format!("doc{:04}", i + 1);
        let tokens = text_for(&mut rng, plan);
        let split = 5.min(tokens.len());
        let (lang, original) = LANGS[i % LANGS.len()];
        docs.push(Document {
            doc_id: doc_id.clone(),
            lang: lang.to_string(),
            title: format!("{original} {}", i + 1),
            body: original.to_string(),
            trans_title: tokens[..split].join(" "),
            trans_body: tokens[split..].join(" "),
        });
        match (&plan.kind, plan.topic) {
            (Kind::Relevant { grade, .. }, Some(t)) => judged[t].push((doc_id, *grade)),
            (Kind::Distractor, Some(t)) => judged[t].push((doc_id, 0)),
            _ => {}
        }
    }

    let mut queries = Vec::new();
    let mut pseudo_docs = Vec::new();
    let mut lexicon = String::from("# word\tconcept\n");
    for (t, topic) in TOPICS.iter().enumerate() {
        let query_id = format!("s{:02}", t + 1);
        queries.push(Query { query_id: query_id.clone(), text: topic.query.join(" ") });
        for (doc_id, grade) in &judged[t] {
            qrels.insert(&query_id, doc_id, *grade);
        }
        let mut words: Vec<&str> = topic.topical.iter().chain(topic.topical.iter()).copied().collect();
        words.extend(topic.synonyms);
        words.shuffle(&mut rng);
        pseudo_docs.push(PseudoDocFixture { query_id, text: words.join(" ") });
        for w in topic.query.iter().chain(&topic.synonyms).chain(&topic.topical) {
            writeln!(lexicon, "{w}\ttopic{:02}", t + 1).expect("string write");
        }
    }
    let corpus = Corpus::from_documents(docs).expect("generated documents are valid");
    SyntheticFixture { corpus, queries, qrels, pseudo_docs, lexicon }
}

impl SyntheticFixture {
    /// File names and contents, in a fixed order.
    pub fn files(&self) -> Vec<(&'static str, String)> {
        let jsonl = |lines: Vec<String>| lines.into_iter().map(|l| l + "\n").collect::<String>();
        vec![
            ("corpus.jsonl", jsonl(self.corpus.iter().map(|d| serde_json::to_string(d).expect("serialize")).collect())),
            ("queries.jsonl", jsonl(self.queries.iter().map(|q| serde_json::to_string(q).expect("serialize")).collect())),
            ("qrels.txt", self.qrels.format()),
            (
                "pseudo_docs.jsonl",
                jsonl(self.pseudo_docs.iter().map(|p| serde_json::to_string(p).expect("serialize")).collect()),
            ),
            ("lexicon.tsv", self.lexicon.clone()),
        ]
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, contents) in self.files() {
            std::fs::write(dir.join(name), contents)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textproc::preprocess;
    use std::collections::HashMap;

    #[test]
    fn vocabularies_are_disjoint_after_preprocessing() {
        let mut owner: HashMap<String, String> = HashMap::new();
        let groups = TOPICS
            .iter()
            .enumerate()
            .map(|(i, t)| (format!("topic{i}"), t.query.iter().chain(&t.synonyms).chain(&t.topical).copied().collect()))
            .chain(std::iter::once(("filler".to_string(), FILLER.to_vec())));
        for (group, words) in groups {
            let words: Vec<&str> = words;
            for w in words {
                let stems = preprocess(w).into_tokens();
                assert_eq!(stems.len(), 1, "{w} must survive preprocessing as one term");
                if let Some(prev) = owner.insert(stems[0].clone(), format!("{group}:{w}")) {
                    assert_eq!(prev.split(':').next(), Some(group.as_str()), "{w} collides with {prev}");
                }
            }
        }
    }

    #[test]
    fn same_seed_same_fixture() {
        let a = generate(200, 7).files();
        let b = generate(200, 7).files();
        assert_eq!(a, b);
        assert_ne!(a, generate(200, 8).files());
    }

    #[test]
    fn planted_structure() {
        let f = generate(500, DEFAULT_SEED);
        assert_eq!(f.corpus.len(), 500);
        assert_eq!(f.queries.len(), 10);
        let j = f.qrels.for_query("s01").unwrap();
        assert_eq!(j.len(), 13);
        assert_eq!(j.values().filter(|&&g| g > 0).count(), 8);
        for (doc_id, grade) in j {
            let view = crate::corpus::full_translation_view(f.corpus.by_id(doc_id).unwrap());
            let terms = preprocess(&view).into_tokens();
            let has_query = terms.iter().any(|t| t == "dam" || t == "collaps");
            if *grade == 0 {
                assert!(has_query);
            }
        }
    }
}
