//! Parsing and validation for all input data files: word vectors, concept
//! lexicons, bilingual dictionaries, sense inventories, and frequency
//! rankings.
//!
//! All text is treated as UTF-8 and word forms are NFC-normalized on load so
//! that lookups are exact byte-level matches. Embedding vectors are
//! L2-normalized at load time; every downstream formula assumes unit vectors.
//! Duplicate entries are hard errors rather than last-wins: a silent
//! overwrite would corrupt affinities silently.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use indexmap::IndexMap;
use unicode_normalization::UnicodeNormalization;

use crate::error::Error;
use crate::math;
use crate::types::{ConceptId, Language};
use crate::Result;

/// Norm below which a raw input vector is rejected as zero.
pub const ZERO_NORM_EPS: f64 = 1e-12;

fn nfc(s: &str) -> String {
    s.nfc().collect()
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Embedding tables
// ---------------------------------------------------------------------------

/// A per-language vocabulary mapped to fixed-dimension unit vectors.
///
/// Entries keep file order; iteration over an `EmbeddingTable` is
/// deterministic for identical input bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    language: Language,
    dim: usize,
    entries: IndexMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    /// Build a table from raw (word, vector) pairs, normalizing each vector.
    ///
    /// Used by the loader and by synthetic-data generators; enforces the same
    /// invariants as loading from a file (unique words, uniform dimension,
    /// no zero vectors).
    pub fn from_raw_entries(
        language: Language,
        dim: usize,
        entries: impl IntoIterator<Item = (String, Vec<f64>)>,
    ) -> Result<Self> {
        let mut map = IndexMap::new();
        for (word, mut vector) in entries {
            let word = nfc(&word);
            if vector.len() != dim {
                return Err(Error::DimensionMismatch {
                    path: "<memory>".into(),
                    line: map.len() + 1,
                    word,
                    expected: dim,
                    found: vector.len(),
                });
            }
            if math::normalize(&mut vector, ZERO_NORM_EPS).is_none() {
                return Err(Error::ZeroNormVector {
                    path: "<memory>".into(),
                    line: map.len() + 1,
                    word,
                });
            }
            if map.insert(word.clone(), vector).is_some() {
                return Err(Error::DuplicateWord {
                    path: "<memory>".into(),
                    line: map.len() + 1,
                    word,
                });
            }
        }
        Ok(EmbeddingTable {
            language,
            dim,
            entries: map,
        })
    }

    pub fn language(&self) -> &Language {
        &self.language
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.entries.get(word).map(Vec::as_slice)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains_key(word)
    }

    /// Iterate entries in file order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.entries.iter().map(|(w, v)| (w.as_str(), v.as_slice()))
    }

    /// Replace every vector via `f`, re-normalizing the result. Fails if any
    /// mapped vector collapses to zero norm.
    pub(crate) fn map_vectors(
        &self,
        mut f: impl FnMut(&str, &[f64]) -> Vec<f64>,
    ) -> Result<EmbeddingTable> {
        let mut entries = IndexMap::with_capacity(self.entries.len());
        for (word, vector) in &self.entries {
            let mut mapped = f(word, vector);
            if math::normalize(&mut mapped, ZERO_NORM_EPS).is_none() {
                return Err(Error::ProjectionCollapsed {
                    language: self.language.to_string(),
                    word: word.clone(),
                });
            }
            entries.insert(word.clone(), mapped);
        }
        Ok(EmbeddingTable {
            language: self.language.clone(),
            dim: self.dim,
            entries,
        })
    }
}

/// Load a fastText-style text vector file: a `<count> <dim>` header line
/// followed by `<word> <v1> ... <v_dim>` lines. Vectors are L2-normalized;
/// zero vectors, duplicate words, and count/dimension mismatches are errors.
pub fn load_embeddings(
    path: &Path,
    language: Language,
    expected_dim: Option<usize>,
) -> Result<EmbeddingTable> {
    let text = read_to_string(path)?;
    let p = || path.display().to_string();
    let mut lines = text.lines();

    let header = lines.next().unwrap_or("");
    let mut parts = header.split_whitespace();
    let (count, dim) = match (parts.next(), parts.next(), parts.next()) {
        (Some(c), Some(d), None) => match (c.parse::<usize>(), d.parse::<usize>()) {
            (Ok(c), Ok(d)) if d > 0 => (c, d),
            _ => {
                return Err(Error::MalformedHeader {
                    path: p(),
                    line: header.to_string(),
                })
            }
        },
        _ => {
            return Err(Error::MalformedHeader {
                path: p(),
                line: header.to_string(),
            })
        }
    };
    if let Some(expected) = expected_dim {
        if dim != expected {
            return Err(Error::TableDimensionMismatch {
                language: language.to_string(),
                expected,
                found: dim,
            });
        }
    }

    let mut entries: IndexMap<String, Vec<f64>> = IndexMap::with_capacity(count);
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let word = nfc(fields.next().expect("non-empty line has a first field"));
        let mut vector = Vec::with_capacity(dim);
        for tok in fields {
            let value: f64 = tok.parse().map_err(|_| Error::BadNumber {
                path: p(),
                line: lineno,
                token: tok.to_string(),
            })?;
            vector.push(value);
        }
        if vector.len() != dim {
            return Err(Error::DimensionMismatch {
                path: p(),
                line: lineno,
                word,
                expected: dim,
                found: vector.len(),
            });
        }
        if math::normalize(&mut vector, ZERO_NORM_EPS).is_none() {
            return Err(Error::ZeroNormVector {
                path: p(),
                line: lineno,
                word,
            });
        }
        if entries.contains_key(&word) {
            return Err(Error::DuplicateWord {
                path: p(),
                line: lineno,
                word,
            });
        }
        entries.insert(word, vector);
    }
    if entries.len() != count {
        return Err(Error::EntryCountMismatch {
            path: p(),
            expected: count,
            found: entries.len(),
        });
    }
    Ok(EmbeddingTable {
        language,
        dim,
        entries,
    })
}

/// Write a table back out in the same text format. Floats use the shortest
/// round-trip representation, so load -> save -> load reproduces the table
/// exactly.
pub fn save_embeddings(table: &EmbeddingTable, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("{} {}\n", table.len(), table.dim()));
    for (word, vector) in table.iter() {
        out.push_str(word);
        for v in vector {
            out.push(' ');
            out.push_str(&format!("{v}"));
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(bytes).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Concept lexicon
// ---------------------------------------------------------------------------

/// One concept with its per-language word forms.
#[derive(Debug, Clone, PartialEq)]
pub struct Concept {
    pub id: ConceptId,
    pub gloss: String,
    pub pos: String,
    pub domains: BTreeSet<String>,
    /// Per-language form lists, file order preserved.
    pub forms: IndexMap<Language, Vec<String>>,
}

/// Concept records grouped from a NorthEuralex-shaped TSV.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConceptLexicon {
    concepts: IndexMap<ConceptId, Concept>,
}

impl ConceptLexicon {
    pub fn from_concepts(concepts: impl IntoIterator<Item = Concept>) -> Self {
        ConceptLexicon {
            concepts: concepts.into_iter().map(|c| (c.id.clone(), c)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Concept> {
        self.concepts.get(id)
    }

    /// Concepts in file order.
    pub fn concepts(&self) -> impl Iterator<Item = &Concept> {
        self.concepts.values()
    }

    pub fn ids(&self) -> impl Iterator<Item = &ConceptId> {
        self.concepts.keys()
    }

    /// All distinct domain tags, sorted.
    pub fn domain_tags(&self) -> BTreeSet<String> {
        self.concepts
            .values()
            .flat_map(|c| c.domains.iter().cloned())
            .collect()
    }
}

const LEXICON_COLUMNS: [&str; 6] = ["concept_id", "gloss", "pos", "domains", "language", "forms"];

/// Load a concept lexicon from a TSV with header
/// `concept_id  gloss  pos  domains  language  forms`, where `domains` is
/// comma-separated (may be empty) and `forms` is pipe-separated.
pub fn load_lexicon(path: &Path) -> Result<ConceptLexicon> {
    let text = read_to_string(path)?;
    let p = || path.display().to_string();
    let mut lines = text.lines().enumerate();

    let (_, header) = lines.next().unwrap_or((0, ""));
    let names: Vec<&str> = header.split('\t').collect();
    for required in LEXICON_COLUMNS {
        if !names.contains(&required) {
            return Err(Error::MissingColumn {
                path: p(),
                column: required.to_string(),
            });
        }
    }
    let col = |name: &str| names.iter().position(|n| *n == name).unwrap();
    let (ci, gi, pi, di, li, fi) = (
        col("concept_id"),
        col("gloss"),
        col("pos"),
        col("domains"),
        col("language"),
        col("forms"),
    );

    let mut concepts: IndexMap<ConceptId, Concept> = IndexMap::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != names.len() {
            return Err(Error::FieldCount {
                path: p(),
                line: lineno,
                expected: names.len(),
                found: fields.len(),
            });
        }
        let id = ConceptId::new(fields[ci]);
        let gloss = fields[gi].to_string();
        let pos = fields[pi].to_string();
        let domains: BTreeSet<String> = fields[di]
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect();
        let language = Language::new(fields[li]);
        if fields[fi].is_empty() {
            return Err(Error::EmptyField {
                path: p(),
                line: lineno,
                field: "forms",
            });
        }
        let forms: Vec<String> = fields[fi]
            .split('|')
            .map(nfc)
            .filter(|s| !s.is_empty())
            .collect();
        if forms.is_empty() {
            return Err(Error::EmptyField {
                path: p(),
                line: lineno,
                field: "forms",
            });
        }

        match concepts.get_mut(id.as_str()) {
            None => {
                let mut form_map = IndexMap::new();
                form_map.insert(language, forms);
                concepts.insert(
                    id.clone(),
                    Concept {
                        id,
                        gloss,
                        pos,
                        domains,
                        forms: form_map,
                    },
                );
            }
            Some(existing) => {
                if existing.gloss != gloss {
                    return Err(Error::ConflictingConceptField {
                        path: p(),
                        line: lineno,
                        concept: id.to_string(),
                        field: "gloss",
                    });
                }
                if existing.pos != pos {
                    return Err(Error::ConflictingConceptField {
                        path: p(),
                        line: lineno,
                        concept: id.to_string(),
                        field: "pos",
                    });
                }
                if existing.domains != domains {
                    return Err(Error::ConflictingConceptField {
                        path: p(),
                        line: lineno,
                        concept: id.to_string(),
                        field: "domains",
                    });
                }
                if existing.forms.contains_key(&language) {
                    return Err(Error::DuplicateLexiconRow {
                        path: p(),
                        line: lineno,
                        concept: id.to_string(),
                        language: language.to_string(),
                    });
                }
                existing.forms.insert(language, forms);
            }
        }
    }
    Ok(ConceptLexicon { concepts })
}

// ---------------------------------------------------------------------------
// Bilingual dictionaries
// ---------------------------------------------------------------------------

/// Translation pairs between two languages. Pairs may be many-to-many: one
/// source form may map to several target forms and vice versa; repeated
/// pairs are kept as-is.
#[derive(Debug, Clone, PartialEq)]
pub struct BilingualDictionary {
    pub source: Language,
    pub target: Language,
    pub pairs: Vec<(String, String)>,
}

impl BilingualDictionary {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Load a dictionary of `<src_word>\t<tgt_word>` lines.
pub fn load_dictionary(path: &Path, source: Language, target: Language) -> Result<BilingualDictionary> {
    let text = read_to_string(path)?;
    let p = || path.display().to_string();
    let mut pairs = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(Error::FieldCount {
                path: p(),
                line: idx + 1,
                expected: 2,
                found: fields.len(),
            });
        }
        pairs.push((nfc(fields[0]), nfc(fields[1])));
    }
    Ok(BilingualDictionary {
        source,
        target,
        pairs,
    })
}

/// Write a dictionary back out as `<src>\t<tgt>` lines.
pub fn save_dictionary(dict: &BilingualDictionary, path: &Path) -> Result<()> {
    let mut out = String::new();
    for (src, tgt) in &dict.pairs {
        out.push_str(src);
        out.push('\t');
        out.push_str(tgt);
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

// ---------------------------------------------------------------------------
// Sense inventory
// ---------------------------------------------------------------------------

/// One (language, word form) sense record within a concept.
#[derive(Debug, Clone, PartialEq)]
pub struct SenseRecord {
    pub language: Language,
    pub word_form: String,
    pub sense_ids: BTreeSet<String>,
}

/// Cross-linguistic sense sets keyed by (concept, language, word form).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SenseInventory {
    records: IndexMap<ConceptId, Vec<SenseRecord>>,
}

impl SenseInventory {
    pub fn from_records(
        records: impl IntoIterator<Item = (ConceptId, SenseRecord)>,
    ) -> Self {
        let mut map: IndexMap<ConceptId, Vec<SenseRecord>> = IndexMap::new();
        for (id, record) in records {
            map.entry(id).or_default().push(record);
        }
        SenseInventory { records: map }
    }

    pub fn get(&self, concept: &str, language: &str, form: &str) -> Option<&BTreeSet<String>> {
        self.records.get(concept)?.iter().find_map(|r| {
            (r.language.as_str() == language && r.word_form == form).then_some(&r.sense_ids)
        })
    }

    pub fn records_for(&self, concept: &str) -> &[SenseRecord] {
        self.records.get(concept).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.records.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

const SENSE_COLUMNS: [&str; 4] = ["concept_id", "language", "word_form", "sense_ids"];

/// Load a sense inventory from a TSV with header
/// `concept_id  language  word_form  sense_ids` (comma-separated sense ids,
/// deduplicated per record).
pub fn load_sense_inventory(path: &Path) -> Result<SenseInventory> {
    let text = read_to_string(path)?;
    let p = || path.display().to_string();
    let mut lines = text.lines().enumerate();

    let (_, header) = lines.next().unwrap_or((0, ""));
    let names: Vec<&str> = header.split('\t').collect();
    for required in SENSE_COLUMNS {
        if !names.contains(&required) {
            return Err(Error::MissingColumn {
                path: p(),
                column: required.to_string(),
            });
        }
    }
    let col = |name: &str| names.iter().position(|n| *n == name).unwrap();
    let (ci, li, wi, si) = (
        col("concept_id"),
        col("language"),
        col("word_form"),
        col("sense_ids"),
    );

    let mut records: IndexMap<ConceptId, Vec<SenseRecord>> = IndexMap::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != names.len() {
            return Err(Error::FieldCount {
                path: p(),
                line: lineno,
                expected: names.len(),
                found: fields.len(),
            });
        }
        let concept = ConceptId::new(fields[ci]);
        let language = Language::new(fields[li]);
        let word_form = nfc(fields[wi]);
        let sense_ids: BTreeSet<String> = fields[si]
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect();
        if sense_ids.is_empty() {
            return Err(Error::EmptyField {
                path: p(),
                line: lineno,
                field: "sense_ids",
            });
        }
        let entry = records.entry(concept.clone()).or_default();
        if entry
            .iter()
            .any(|r| r.language == language && r.word_form == word_form)
        {
            return Err(Error::DuplicateSenseRecord {
                path: p(),
                line: lineno,
                concept: concept.to_string(),
                language: language.to_string(),
                form: word_form,
            });
        }
        entry.push(SenseRecord {
            language,
            word_form,
            sense_ids,
        });
    }
    Ok(SenseInventory { records })
}

// ---------------------------------------------------------------------------
// Frequency rankings
// ---------------------------------------------------------------------------

/// An ordered most-frequent-first word list; rank of a word is its 1-based
/// line number.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyRanking {
    language: Language,
    words: Vec<String>,
    index: IndexMap<String, usize>,
}

impl FrequencyRanking {
    pub fn from_words(language: Language, words: Vec<String>) -> Result<Self> {
        let mut index = IndexMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i + 1).is_some() {
                return Err(Error::DuplicateRankedWord {
                    path: "<memory>".into(),
                    line: i + 1,
                    word: w.clone(),
                });
            }
        }
        Ok(FrequencyRanking {
            language,
            words,
            index,
        })
    }

    pub fn language(&self) -> &Language {
        &self.language
    }

    /// 1-based rank, or `None` if the word is not listed.
    pub fn rank_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// Words in rank order (most frequent first).
    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Load a ranking file: one word per line, rank = line number.
pub fn load_ranking(path: &Path, language: Language) -> Result<FrequencyRanking> {
    let text = read_to_string(path)?;
    let p = || path.display().to_string();
    let mut words = Vec::new();
    let mut index = IndexMap::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let word = nfc(line.trim());
        if word.is_empty() {
            return Err(Error::EmptyField {
                path: p(),
                line: lineno,
                field: "word",
            });
        }
        if index.insert(word.clone(), lineno).is_some() {
            return Err(Error::DuplicateRankedWord {
                path: p(),
                line: lineno,
                word,
            });
        }
        words.push(word);
    }
    Ok(FrequencyRanking {
        language,
        words,
        index,
    })
}
