//! Seeded synthetic-world generators.
//!
//! Used by the test suites and the bundled toy dataset: languages are exact
//! rotations of a pivot space, concepts are planted with controlled
//! per-language noise, so ground truth (maps, affinity ordering) is known by
//! construction. Every generator takes an explicit seed; there is no ambient
//! randomness.

use indexmap::IndexMap;
use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::io::{BilingualDictionary, Concept, ConceptLexicon, EmbeddingTable};
use crate::types::{ConceptId, Language};

/// A random orthogonal matrix from the QR factorization of a Gaussian
/// matrix, with the sign convention diag(R) > 0.
pub fn random_orthogonal(dim: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| {
        let v: f64 = StandardNormal.sample(rng);
        v
    });
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for i in 0..dim {
        if r[(i, i)] < 0.0 {
            for row in 0..dim {
                q[(row, i)] = -q[(row, i)];
            }
        }
    }
    q
}

/// A random unit vector with Gaussian direction.
pub fn random_unit_vector(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        if crate::math::normalize(&mut v, 1e-9).is_some() {
            return v;
        }
    }
}

/// A d×n matrix of random unit columns.
pub fn random_unit_columns(dim: usize, n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let mut data = Vec::with_capacity(dim * n);
    for _ in 0..n {
        data.extend(random_unit_vector(dim, rng));
    }
    DMatrix::from_vec(dim, n, data)
}

/// A concept noise tier: `count` concepts whose per-language vectors are the
/// base direction plus Gaussian noise of scale `sigma` per component.
#[derive(Debug, Clone, Copy)]
pub struct NoiseTier {
    pub sigma: f64,
    pub count: usize,
}

/// Shape of a synthetic rotation world.
#[derive(Debug, Clone)]
pub struct RotationWorldSpec {
    pub languages: usize,
    pub dim: usize,
    pub tiers: Vec<NoiseTier>,
    /// Filler dictionary words per language used to supervise alignment.
    pub filler_words: usize,
    /// Filler pairs withheld from training for held-out validation.
    pub heldout_words: usize,
    pub seed: u64,
}

impl Default for RotationWorldSpec {
    fn default() -> Self {
        RotationWorldSpec {
            languages: 5,
            dim: 16,
            tiers: vec![
                NoiseTier {
                    sigma: 0.0,
                    count: 10,
                },
                NoiseTier {
                    sigma: 0.1,
                    count: 10,
                },
                NoiseTier {
                    sigma: 0.3,
                    count: 10,
                },
            ],
            filler_words: 120,
            heldout_words: 20,
            seed: 42,
        }
    }
}

/// A generated world: tables per language, training dictionaries to the
/// pivot, held-out dictionaries, a lexicon over the planted concepts, and
/// the ground-truth rotations.
pub struct RotationWorld {
    pub pivot: Language,
    pub tables: IndexMap<Language, EmbeddingTable>,
    pub dictionaries: IndexMap<Language, BilingualDictionary>,
    pub heldout: IndexMap<Language, BilingualDictionary>,
    pub lexicon: ConceptLexicon,
    /// Ground-truth rotation applied to each non-pivot language's vectors;
    /// the fitted map should recover its transpose.
    pub rotations: IndexMap<Language, DMatrix<f64>>,
    /// Planted noise scale per concept, in lexicon order.
    pub concept_sigma: IndexMap<ConceptId, f64>,
}

impl RotationWorld {
    pub fn languages(&self) -> Vec<Language> {
        self.tables.keys().cloned().collect()
    }
}

fn language_name(i: usize) -> Language {
    Language::new(format!("syn{i}"))
}

fn concept_word(concept: &ConceptId, language: &Language) -> String {
    format!("{}_{}", concept.as_str().to_lowercase(), language)
}

/// Generate a rotation world. Language `syn0` is the pivot; every other
/// language stores `R_k v` for each pivot vector `v`, so the ground-truth
/// map back to the pivot is `R_k^T`. Concept vectors additionally get
/// per-language noise before rotation, by tier.
pub fn rotation_world(spec: &RotationWorldSpec) -> RotationWorld {
    assert!(spec.languages >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let pivot = language_name(0);

    // Base directions in the pivot frame.
    let filler_base: Vec<Vec<f64>> = (0..spec.filler_words + spec.heldout_words)
        .map(|_| random_unit_vector(spec.dim, &mut rng))
        .collect();
    let mut concepts: Vec<(ConceptId, f64, Vec<f64>)> = Vec::new();
    for (t, tier) in spec.tiers.iter().enumerate() {
        for j in 0..tier.count {
            let id = ConceptId::new(format!("T{t}C{j:02}"));
            concepts.push((id, tier.sigma, random_unit_vector(spec.dim, &mut rng)));
        }
    }

    let mut rotations = IndexMap::new();
    let mut tables = IndexMap::new();
    let mut dictionaries = IndexMap::new();
    let mut heldout = IndexMap::new();

    for k in 0..spec.languages {
        let language = language_name(k);
        let rotation = if k == 0 {
            DMatrix::identity(spec.dim, spec.dim)
        } else {
            random_orthogonal(spec.dim, &mut rng)
        };

        let mut entries: Vec<(String, Vec<f64>)> = Vec::new();
        for (i, base) in filler_base.iter().enumerate() {
            let rotated = &rotation * nalgebra::DVector::from_column_slice(base);
            entries.push((format!("w{i:03}_{language}"), rotated.data.into()));
        }
        for (id, sigma, base) in &concepts {
            let mut noisy = base.clone();
            if *sigma > 0.0 {
                for x in noisy.iter_mut() {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    *x += sigma * g;
                }
            }
            crate::math::normalize(&mut noisy, 1e-12).expect("noise cannot cancel a unit vector");
            let rotated = &rotation * nalgebra::DVector::from_column_slice(&noisy);
            entries.push((concept_word(id, &language), rotated.data.into()));
        }
        let table = EmbeddingTable::from_raw_entries(language.clone(), spec.dim, entries)
            .expect("synthetic entries are valid");

        if k > 0 {
            let train_pairs: Vec<(String, String)> = (0..spec.filler_words)
                .map(|i| (format!("w{i:03}_{language}"), format!("w{i:03}_{pivot}")))
                .collect();
            // Concept words go into the training dictionary too; the
            // exclusion filter is expected to strip them before fitting.
            let mut with_concepts = train_pairs.clone();
            for (id, _, _) in &concepts {
                with_concepts.push((concept_word(id, &language), concept_word(id, &pivot)));
            }
            let heldout_pairs: Vec<(String, String)> = (spec.filler_words
                ..spec.filler_words + spec.heldout_words)
                .map(|i| (format!("w{i:03}_{language}"), format!("w{i:03}_{pivot}")))
                .collect();
            dictionaries.insert(
                language.clone(),
                BilingualDictionary {
                    source: language.clone(),
                    target: pivot.clone(),
                    pairs: with_concepts,
                },
            );
            heldout.insert(
                language.clone(),
                BilingualDictionary {
                    source: language.clone(),
                    target: pivot.clone(),
                    pairs: heldout_pairs,
                },
            );
            rotations.insert(language.clone(), rotation);
        }
        tables.insert(language, table);
    }

    let languages: Vec<Language> = tables.keys().cloned().collect();
    let mut lex_concepts = Vec::new();
    let mut concept_sigma = IndexMap::new();
    for (id, sigma, _) in &concepts {
        let mut forms = IndexMap::new();
        for language in &languages {
            forms.insert(language.clone(), vec![concept_word(id, language)]);
        }
        lex_concepts.push(Concept {
            id: id.clone(),
            gloss: id.as_str().to_lowercase(),
            pos: "NOUN".into(),
            domains: std::iter::once(format!("tier{}", sigma_label(*sigma))).collect(),
            forms,
        });
        concept_sigma.insert(id.clone(), *sigma);
    }

    RotationWorld {
        pivot,
        tables,
        dictionaries,
        heldout,
        lexicon: ConceptLexicon::from_concepts(lex_concepts),
        rotations,
        concept_sigma,
    }
}

fn sigma_label(sigma: f64) -> String {
    format!("{}", (sigma * 100.0).round() as u64)
}

// ---------------------------------------------------------------------------
// Full file-backed dataset
// ---------------------------------------------------------------------------

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crate::io::{FrequencyRanking, SenseInventory, SenseRecord};
use crate::typology::{ClimateTable, GeoTable};

/// Shape of a complete synthetic dataset (vectors, dictionaries, lexicon,
/// senses, rankings, tree, geo, climate).
#[derive(Debug, Clone)]
pub struct DatasetSpec {
    pub languages: usize,
    pub dim: usize,
    pub filler_words: usize,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            languages: 5,
            dim: 16,
            filler_words: 120,
            seed: 42,
        }
    }
}

/// One planted concept: identifier, metadata, and noise scale.
struct ConceptPlan {
    id: &'static str,
    gloss: &'static str,
    pos: &'static str,
    domains: &'static [&'static str],
    sigma: f64,
}

/// 30 concepts across four domains. Kinship noise grows with distance from
/// ego, symmetrically for female/male terms, so the kinship profile comes
/// out with the closest terms tightest. The ADJECTIVE tag has only 4
/// members, which exercises the minimum-group-size omission.
const CONCEPT_PLAN: &[ConceptPlan] = &[
    // kinship (10, NOUN)
    ConceptPlan { id: "DAUGHTER", gloss: "daughter", pos: "NOUN", domains: &["kinship"], sigma: 0.05 },
    ConceptPlan { id: "SON", gloss: "son", pos: "NOUN", domains: &["kinship"], sigma: 0.05 },
    ConceptPlan { id: "SISTER", gloss: "sister", pos: "NOUN", domains: &["kinship"], sigma: 0.08 },
    ConceptPlan { id: "BROTHER", gloss: "brother", pos: "NOUN", domains: &["kinship"], sigma: 0.08 },
    ConceptPlan { id: "MOTHER", gloss: "mother", pos: "NOUN", domains: &["kinship"], sigma: 0.11 },
    ConceptPlan { id: "FATHER", gloss: "father", pos: "NOUN", domains: &["kinship"], sigma: 0.11 },
    ConceptPlan { id: "GRANDMOTHER", gloss: "grandmother", pos: "NOUN", domains: &["kinship"], sigma: 0.2 },
    ConceptPlan { id: "GRANDFATHER", gloss: "grandfather", pos: "NOUN", domains: &["kinship"], sigma: 0.2 },
    ConceptPlan { id: "AUNT", gloss: "aunt", pos: "NOUN", domains: &["kinship"], sigma: 0.32 },
    ConceptPlan { id: "UNCLE", gloss: "uncle", pos: "NOUN", domains: &["kinship"], sigma: 0.32 },
    // body (8, NOUN)
    ConceptPlan { id: "AUGE", gloss: "eye", pos: "NOUN", domains: &["body"], sigma: 0.04 },
    ConceptPlan { id: "HAND", gloss: "hand", pos: "NOUN", domains: &["body"], sigma: 0.06 },
    ConceptPlan { id: "FUSS", gloss: "foot", pos: "NOUN", domains: &["body"], sigma: 0.09 },
    ConceptPlan { id: "HERZ", gloss: "heart", pos: "NOUN", domains: &["body"], sigma: 0.12 },
    ConceptPlan { id: "ZUNGE", gloss: "tongue", pos: "NOUN", domains: &["body"], sigma: 0.18 },
    ConceptPlan { id: "KNOCHEN", gloss: "bone", pos: "NOUN", domains: &["body"], sigma: 0.1 },
    ConceptPlan { id: "HAUT", gloss: "skin", pos: "NOUN", domains: &["body"], sigma: 0.15 },
    ConceptPlan { id: "BLUT", gloss: "blood", pos: "NOUN", domains: &["body"], sigma: 0.07 },
    // weather (7: 5 VERB + 2 NOUN); three also tagged environment (3 < 5,
    // so the environment tag lands in the omission list)
    ConceptPlan { id: "REGNEN", gloss: "to rain", pos: "VERB", domains: &["weather", "environment"], sigma: 0.14 },
    ConceptPlan { id: "SCHNEIEN", gloss: "to snow", pos: "VERB", domains: &["weather", "environment"], sigma: 0.22 },
    ConceptPlan { id: "FRIEREN", gloss: "to freeze", pos: "VERB", domains: &["weather", "environment"], sigma: 0.26 },
    ConceptPlan { id: "WEHEN", gloss: "to blow", pos: "VERB", domains: &["weather"], sigma: 0.19 },
    ConceptPlan { id: "DONNERN", gloss: "to thunder", pos: "VERB", domains: &["weather"], sigma: 0.24 },
    ConceptPlan { id: "WOLKE", gloss: "cloud", pos: "NOUN", domains: &["weather"], sigma: 0.13 },
    ConceptPlan { id: "NEBEL", gloss: "fog", pos: "NOUN", domains: &["weather"], sigma: 0.21 },
    // artifacts (5: 4 ADJ + 1 NOUN)
    ConceptPlan { id: "SCHARF", gloss: "sharp", pos: "ADJECTIVE", domains: &["artifact"], sigma: 0.17 },
    ConceptPlan { id: "STUMPF", gloss: "blunt", pos: "ADJECTIVE", domains: &["artifact"], sigma: 0.25 },
    ConceptPlan { id: "SCHWER", gloss: "heavy", pos: "ADJECTIVE", domains: &["artifact"], sigma: 0.16 },
    ConceptPlan { id: "LEICHT", gloss: "light", pos: "ADJECTIVE", domains: &["artifact"], sigma: 0.23 },
    ConceptPlan { id: "TOPF", gloss: "pot", pos: "NOUN", domains: &["artifact"], sigma: 0.28 },
];

/// Kinship figure ordering: (female, male) pairs, closest to ego first.
pub const KINSHIP_ORDER: [&str; 10] = [
    "DAUGHTER",
    "SON",
    "SISTER",
    "BROTHER",
    "MOTHER",
    "FATHER",
    "GRANDMOTHER",
    "GRANDFATHER",
    "AUNT",
    "UNCLE",
];

/// A complete in-memory dataset, writable to a directory in every input
/// format the toolkit reads, plus a ready-to-run config.
pub struct SynthDataset {
    pub pivot: Language,
    pub languages: Vec<Language>,
    pub tables: IndexMap<Language, EmbeddingTable>,
    pub dictionaries: IndexMap<Language, BilingualDictionary>,
    pub lexicon_rows: Vec<LexiconRow>,
    pub senses: SenseInventory,
    pub rankings: IndexMap<Language, FrequencyRanking>,
    pub newick: String,
    pub geo: GeoTable,
    pub climate: ClimateTable,
    pub concept_sigma: IndexMap<ConceptId, f64>,
}

/// One lexicon TSV row (kept explicitly so files are written rows-first).
pub struct LexiconRow {
    pub concept: ConceptId,
    pub gloss: String,
    pub pos: String,
    pub domains: Vec<String>,
    pub language: Language,
    pub forms: Vec<String>,
}

/// A balanced binary Newick tree over the given leaves, in order.
pub fn balanced_newick(languages: &[Language]) -> String {
    fn build(slice: &[Language]) -> String {
        match slice.len() {
            1 => slice[0].to_string(),
            n => {
                let mid = n / 2;
                format!("({},{})", build(&slice[..mid]), build(&slice[mid..]))
            }
        }
    }
    format!("{};", build(languages))
}

/// Generate a full dataset. Language `syn0` is the pivot. Concept vectors
/// follow the plan's noise scales; senses and frequency ranks are planted to
/// correlate with the noise so the concept-level regression has signal.
pub fn toy_dataset(spec: &DatasetSpec) -> SynthDataset {
    assert!(spec.languages >= 2);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let languages: Vec<Language> = (0..spec.languages).map(language_name).collect();
    let pivot = languages[0].clone();

    // base directions
    let filler_base: Vec<Vec<f64>> = (0..spec.filler_words)
        .map(|_| random_unit_vector(spec.dim, &mut rng))
        .collect();
    let concept_base: Vec<Vec<f64>> = CONCEPT_PLAN
        .iter()
        .map(|_| random_unit_vector(spec.dim, &mut rng))
        .collect();

    // per-language tables and dictionaries
    let mut tables = IndexMap::new();
    let mut dictionaries = IndexMap::new();
    let mut rotations: IndexMap<Language, DMatrix<f64>> = IndexMap::new();
    for (k, language) in languages.iter().enumerate() {
        let rotation = if k == 0 {
            DMatrix::identity(spec.dim, spec.dim)
        } else {
            random_orthogonal(spec.dim, &mut rng)
        };

        let mut entries: Vec<(String, Vec<f64>)> = Vec::new();
        for (i, base) in filler_base.iter().enumerate() {
            let rotated = &rotation * nalgebra::DVector::from_column_slice(base);
            entries.push((format!("w{i:03}_{language}"), rotated.data.into()));
        }
        for (c, plan) in CONCEPT_PLAN.iter().enumerate() {
            let mut noisy = concept_base[c].clone();
            for x in noisy.iter_mut() {
                let g: f64 = StandardNormal.sample(&mut rng);
                *x += plan.sigma * g;
            }
            crate::math::normalize(&mut noisy, 1e-12).expect("noise cannot cancel");
            let rotated = &rotation * nalgebra::DVector::from_column_slice(&noisy);
            let word = format!("{}_{}", plan.gloss.replace(' ', "_"), language);
            entries.push((word.clone(), rotated.data.into()));

            // secondary form for the first three body concepts: a slight
            // perturbation of the primary vector
            if plan.domains == ["body"] && c < 13 {
                let primary = entries.last().expect("just pushed").1.clone();
                let mut alt = primary.clone();
                for x in alt.iter_mut() {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    *x += 0.02 * g;
                }
                crate::math::normalize(&mut alt, 1e-12).unwrap();
                entries.push((format!("{}_alt_{}", plan.gloss, language), alt));
            }
        }
        let table = EmbeddingTable::from_raw_entries(language.clone(), spec.dim, entries)
            .expect("synthetic entries are valid");

        if k > 0 {
            let mut pairs: Vec<(String, String)> = (0..spec.filler_words)
                .map(|i| (format!("w{i:03}_{language}"), format!("w{i:03}_{pivot}")))
                .collect();
            // concept words also appear in the raw dictionary; the builder's
            // exclusion filter must strip them before fitting
            for plan in CONCEPT_PLAN {
                let gloss = plan.gloss.replace(' ', "_");
                pairs.push((format!("{gloss}_{language}"), format!("{gloss}_{pivot}")));
            }
            dictionaries.insert(
                language.clone(),
                BilingualDictionary {
                    source: language.clone(),
                    target: pivot.clone(),
                    pairs,
                },
            );
        }
        rotations.insert(language.clone(), rotation);
        tables.insert(language.clone(), table);
    }

    // lexicon rows; two planned irregularities: AUGE gets a second form
    // everywhere it exists, ZUNGE is missing from the last language, and
    // HAUT's form in the last language is out of vocabulary
    let last = languages.last().expect("at least two languages").clone();
    let mut lexicon_rows = Vec::new();
    let mut concept_sigma = IndexMap::new();
    for plan in CONCEPT_PLAN {
        let id = ConceptId::new(plan.id);
        concept_sigma.insert(id.clone(), plan.sigma);
        for language in &languages {
            if plan.id == "ZUNGE" && *language == last {
                continue;
            }
            let gloss = plan.gloss.replace(' ', "_");
            let mut forms = vec![format!("{gloss}_{language}")];
            if plan.id == "HAUT" && *language == last {
                forms = vec![format!("{gloss}_missing_{language}")];
            }
            if matches!(plan.id, "AUGE" | "HAND" | "FUSS") {
                forms.push(format!("{}_alt_{}", plan.gloss, language));
            }
            lexicon_rows.push(LexiconRow {
                concept: id.clone(),
                gloss: plan.gloss.to_string(),
                pos: plan.pos.to_string(),
                domains: plan.domains.iter().map(|d| d.to_string()).collect(),
                language: language.clone(),
                forms,
            });
        }
    }

    // senses: union size grows with the planted noise
    let mut sense_records: Vec<(ConceptId, SenseRecord)> = Vec::new();
    for (c, plan) in CONCEPT_PLAN.iter().enumerate() {
        for (k, language) in languages.iter().enumerate() {
            if plan.id == "ZUNGE" && *language == last {
                continue;
            }
            let gloss = plan.gloss.replace(' ', "_");
            let word = if plan.id == "HAUT" && *language == last {
                format!("{gloss}_missing_{language}")
            } else {
                format!("{gloss}_{language}")
            };
            let extra = (plan.sigma * 15.0).round() as usize + (k % 2);
            let mut ids: BTreeSet<String> = BTreeSet::new();
            ids.insert(format!("s{c:03}_core"));
            for e in 0..extra {
                ids.insert(format!("s{c:03}_{}", (k + e * 3) % (extra + 2)));
            }
            sense_records.push((
                ConceptId::new(plan.id),
                SenseRecord {
                    language: language.clone(),
                    word_form: word,
                    sense_ids: ids,
                },
            ));
        }
    }
    let senses = SenseInventory::from_records(sense_records);

    // rankings: noisier concepts get pushed down the frequency list
    let mut rankings = IndexMap::new();
    for language in &languages {
        let table = tables.get(language.as_str()).expect("table exists");
        let mut keyed: Vec<(f64, String)> = Vec::new();
        for (word, _) in table.iter() {
            let key = if let Some(plan) = CONCEPT_PLAN
                .iter()
                .find(|p| word.starts_with(&format!("{}_", p.gloss.replace(' ', "_"))))
            {
                plan.sigma * 1000.0 + rng.gen_range(0.0..60.0)
            } else {
                rng.gen_range(0.0..1000.0)
            };
            keyed.push((key, word.to_string()));
        }
        keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        let words: Vec<String> = keyed.into_iter().map(|(_, w)| w).collect();
        rankings.insert(
            language.clone(),
            FrequencyRanking::from_words(language.clone(), words).expect("unique words"),
        );
    }

    // tree, geography, climate
    let newick = balanced_newick(&languages);
    let geo = GeoTable::from_coords(languages.iter().enumerate().map(|(i, l)| {
        let lon = -10.0 + 6.5 * i as f64 + rng.gen_range(-1.5..1.5);
        let lat = 35.0 + 2.0 * ((i * 7) % 13) as f64 + rng.gen_range(-1.0..1.0);
        (l.clone(), (lon, lat))
    }));
    let climate = ClimateTable::from_vectors(
        vec![
            "t_mean".into(),
            "t_range".into(),
            "p_mean".into(),
            "p_range".into(),
        ],
        languages.iter().map(|l| {
            let (_, lat) = geo.get(l.as_str()).expect("coords exist");
            let t_mean = 24.0 - 0.4 * lat + rng.gen_range(-2.0..2.0);
            let t_range = 8.0 + 0.3 * lat + rng.gen_range(-1.0..1.0);
            let p_mean = 600.0 + 20.0 * rng.gen_range(-5.0..5.0);
            let p_range = 80.0 + 10.0 * rng.gen_range(-3.0..3.0);
            (l.clone(), vec![t_mean, t_range, p_mean, p_range])
        }),
    )
    .expect("uniform climate vectors");

    SynthDataset {
        pivot,
        languages,
        tables,
        dictionaries,
        lexicon_rows,
        senses,
        rankings,
        newick,
        geo,
        climate,
        concept_sigma,
    }
}

impl SynthDataset {
    /// Write every input file plus a ready-to-run `toy.toml` into `dir`.
    /// Returns the config path.
    pub fn write_to_dir(&self, dir: &Path) -> crate::Result<PathBuf> {
        use crate::io::write_atomic;
        let mkdir = |p: &Path| std::fs::create_dir_all(p).map_err(|e| crate::Error::io(p, e));
        mkdir(dir)?;
        mkdir(&dir.join("vec"))?;
        mkdir(&dir.join("dict"))?;
        mkdir(&dir.join("rank"))?;

        for (language, table) in &self.tables {
            crate::io::save_embeddings(table, &dir.join(format!("vec/{language}.vec")))?;
        }
        for (language, dict) in &self.dictionaries {
            crate::io::save_dictionary(dict, &dir.join(format!("dict/{language}.tsv")))?;
        }
        for (language, ranking) in &self.rankings {
            let mut out = String::new();
            for word in ranking.words() {
                out.push_str(word);
                out.push('\n');
            }
            write_atomic(&dir.join(format!("rank/{language}.txt")), out.as_bytes())?;
        }

        let mut lexicon = String::from("concept_id\tgloss\tpos\tdomains\tlanguage\tforms\n");
        for row in &self.lexicon_rows {
            lexicon.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                row.concept,
                row.gloss,
                row.pos,
                row.domains.join(","),
                row.language,
                row.forms.join("|")
            ));
        }
        write_atomic(&dir.join("lexicon.tsv"), lexicon.as_bytes())?;

        let mut senses = String::from("concept_id\tlanguage\tword_form\tsense_ids\n");
        for row in &self.lexicon_rows {
            for record in self.senses.records_for(row.concept.as_str()) {
                if record.language == row.language {
                    let ids: Vec<&str> =
                        record.sense_ids.iter().map(String::as_str).collect();
                    senses.push_str(&format!(
                        "{}\t{}\t{}\t{}\n",
                        row.concept,
                        record.language,
                        record.word_form,
                        ids.join(",")
                    ));
                }
            }
        }
        write_atomic(&dir.join("senses.tsv"), senses.as_bytes())?;

        write_atomic(&dir.join("tree.nwk"), format!("{}\n", self.newick).as_bytes())?;

        let mut geo = String::from("language\tlon\tlat\n");
        for language in &self.languages {
            let (lon, lat) = self.geo.get(language.as_str()).expect("coords");
            geo.push_str(&format!("{language}\t{lon}\t{lat}\n"));
        }
        write_atomic(&dir.join("geo.tsv"), geo.as_bytes())?;

        let mut climate = String::from("language\tt_mean\tt_range\tp_mean\tp_range\n");
        for language in &self.languages {
            let v = self.climate.get(language.as_str()).expect("vector");
            let cells: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
            climate.push_str(&format!("{language}\t{}\n", cells.join("\t")));
        }
        write_atomic(&dir.join("climate.tsv"), climate.as_bytes())?;

        let config_path = dir.join("toy.toml");
        write_atomic(&config_path, self.config_toml().as_bytes())?;
        Ok(config_path)
    }

    /// The TOML config text for a dataset laid out by [`Self::write_to_dir`].
    pub fn config_toml(&self) -> String {
        let mut out = String::new();
        out.push_str("[run]\n");
        out.push_str(&format!("pivot = \"{}\"\n", self.pivot));
        out.push_str("mode = \"orthogonal\"\nmin_coverage = 2\nstandardize = true\nstrict_ranks = true\nseed = 42\n\n");
        out.push_str("[inputs]\n");
        out.push_str("lexicon = \"lexicon.tsv\"\nsenses = \"senses.tsv\"\ntree = \"tree.nwk\"\ngeo = \"geo.tsv\"\nclimate = \"climate.tsv\"\n\n");
        out.push_str("[inputs.vectors]\n");
        for language in &self.languages {
            out.push_str(&format!("{language} = \"vec/{language}.vec\"\n"));
        }
        out.push_str("\n[inputs.dictionaries]\n");
        for language in self.dictionaries.keys() {
            out.push_str(&format!("{language} = \"dict/{language}.tsv\"\n"));
        }
        out.push_str("\n[inputs.rankings]\n");
        for language in &self.languages {
            out.push_str(&format!("{language} = \"rank/{language}.txt\"\n"));
        }
        out.push_str("\n[analysis]\n");
        let names: Vec<String> = self
            .languages
            .iter()
            .map(|l| format!("\"{l}\""))
            .collect();
        out.push_str(&format!("languages = [{}]\n", names.join(", ")));
        out.push_str("min_group_size = 5\n\n");
        out.push_str("[report]\n");
        let kinship: Vec<String> = KINSHIP_ORDER.iter().map(|c| format!("\"{c}\"")).collect();
        out.push_str(&format!("kinship_order = [{}]\n", kinship.join(", ")));
        out.push_str("scatter_concepts = [\"DAUGHTER\", \"TOPF\"]\n");
        out
    }
}
