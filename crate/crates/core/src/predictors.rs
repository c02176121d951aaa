//! Concept-level psycholinguistic predictors: mean word rank, degree of
//! polysemy, and mean word length.

use std::collections::BTreeSet;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::io::{Concept, ConceptLexicon, FrequencyRanking, SenseInventory};
use crate::types::{ConceptId, Language};
use crate::Result;

/// How languages without a ranked form contribute to mean word rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankPolicy {
    /// Skip languages whose forms are all unlisted (default).
    #[default]
    Strict,
    /// Assign rank list-length + 1 to languages whose forms are all
    /// unlisted. Languages with no ranking file at all are still skipped.
    Penalty,
}

/// Whether word length averages the first form per language or all forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LengthPolicy {
    #[default]
    FirstForm,
    AllForms,
}

/// One concept's predictor values, with per-predictor language coverage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorRow {
    pub concept: ConceptId,
    pub mean_word_rank: Option<f64>,
    pub degree_of_polysemy: Option<usize>,
    pub mean_word_length: Option<f64>,
    pub rank_languages: usize,
    pub sense_languages: usize,
    pub length_languages: usize,
    /// True when any predictor is missing; partial rows are excluded from
    /// regression by default.
    pub partial: bool,
}

/// Mean 1-based frequency rank of a concept's forms over the languages where
/// a form is listed. Multi-form entries contribute their best (lowest) rank.
/// Returns the mean and the number of contributing languages.
pub fn mean_word_rank(
    concept: &Concept,
    rankings: &IndexMap<Language, FrequencyRanking>,
    languages: &[Language],
    policy: RankPolicy,
) -> Result<(f64, usize)> {
    let mut ranks: Vec<f64> = Vec::new();
    for language in languages {
        let Some(forms) = concept.forms.get(language) else {
            continue;
        };
        let Some(ranking) = rankings.get(language) else {
            // no frequency data for this language at all
            continue;
        };
        let best = forms.iter().filter_map(|f| ranking.rank_of(f)).min();
        match (best, policy) {
            (Some(rank), _) => ranks.push(rank as f64),
            (None, RankPolicy::Penalty) => ranks.push((ranking.len() + 1) as f64),
            (None, RankPolicy::Strict) => {}
        }
    }
    if ranks.is_empty() {
        return Err(Error::NoRankedForms {
            concept: concept.id.to_string(),
        });
    }
    Ok((crate::math::mean(&ranks), ranks.len()))
}

/// Number of distinct sense identifiers attached to a concept's word forms
/// across the language set: the cardinality of the union of per-record sense
/// sets. Returns the count and the number of contributing languages.
pub fn degree_of_polysemy(
    concept_id: &ConceptId,
    inventory: &SenseInventory,
    languages: &[Language],
) -> Result<(usize, usize)> {
    let mut union: BTreeSet<&str> = BTreeSet::new();
    let mut covered: BTreeSet<&Language> = BTreeSet::new();
    for record in inventory.records_for(concept_id.as_str()) {
        if languages.contains(&record.language) {
            union.extend(record.sense_ids.iter().map(String::as_str));
            covered.insert(&record.language);
        }
    }
    if covered.is_empty() {
        return Err(Error::NoSenseRecords {
            concept: concept_id.to_string(),
        });
    }
    Ok((union.len(), covered.len()))
}

/// Mean word-form length in Unicode scalar values (forms are NFC-normalized
/// at load time). Returns the mean and the number of contributing languages.
pub fn mean_word_length(
    concept: &Concept,
    languages: &[Language],
    policy: LengthPolicy,
) -> Result<(f64, usize)> {
    let mut lengths: Vec<f64> = Vec::new();
    let mut covered = 0usize;
    for language in languages {
        let Some(forms) = concept.forms.get(language) else {
            continue;
        };
        match policy {
            LengthPolicy::FirstForm => {
                lengths.push(forms[0].chars().count() as f64);
            }
            LengthPolicy::AllForms => {
                let per_form: Vec<f64> =
                    forms.iter().map(|f| f.chars().count() as f64).collect();
                lengths.push(crate::math::mean(&per_form));
            }
        }
        covered += 1;
    }
    if lengths.is_empty() {
        return Err(Error::NoForms {
            concept: concept.id.to_string(),
        });
    }
    Ok((crate::math::mean(&lengths), covered))
}

/// Predictor-table options.
#[derive(Debug, Clone, Copy, Default)]
pub struct PredictorOptions {
    pub rank_policy: RankPolicy,
    pub length_policy: LengthPolicy,
}

/// One row per concept; rows missing any predictor are flagged partial.
pub fn build_predictor_table(
    lexicon: &ConceptLexicon,
    concepts: &[ConceptId],
    rankings: &IndexMap<Language, FrequencyRanking>,
    inventory: &SenseInventory,
    languages: &[Language],
    options: PredictorOptions,
) -> Result<Vec<PredictorRow>> {
    let mut rows = Vec::with_capacity(concepts.len());
    for id in concepts {
        let concept = lexicon.get(id.as_str()).ok_or_else(|| Error::UnknownConcept {
            concept: id.to_string(),
        })?;
        let rank = mean_word_rank(concept, rankings, languages, options.rank_policy).ok();
        let senses = degree_of_polysemy(id, inventory, languages).ok();
        let length = mean_word_length(concept, languages, options.length_policy).ok();
        let partial = rank.is_none() || senses.is_none() || length.is_none();
        rows.push(PredictorRow {
            concept: id.clone(),
            mean_word_rank: rank.map(|(v, _)| v),
            degree_of_polysemy: senses.map(|(v, _)| v),
            mean_word_length: length.map(|(v, _)| v),
            rank_languages: rank.map_or(0, |(_, n)| n),
            sense_languages: senses.map_or(0, |(_, n)| n),
            length_languages: length.map_or(0, |(_, n)| n),
            partial,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::SenseRecord;

    fn lang(s: &str) -> Language {
        Language::new(s)
    }

    fn concept(id: &str, forms: &[(&str, &[&str])]) -> Concept {
        Concept {
            id: ConceptId::new(id),
            gloss: id.to_lowercase(),
            pos: "NOUN".into(),
            domains: Default::default(),
            forms: forms
                .iter()
                .map(|(l, fs)| {
                    (
                        Language::new(*l),
                        fs.iter().map(|f| f.to_string()).collect(),
                    )
                })
                .collect(),
        }
    }

    fn ranking(language: &str, words: &[&str]) -> (Language, FrequencyRanking) {
        (
            lang(language),
            FrequencyRanking::from_words(
                lang(language),
                words.iter().map(|w| w.to_string()).collect(),
            )
            .unwrap(),
        )
    }

    #[test]
    fn mean_rank_averages_over_languages() {
        let c = concept("C", &[("l1", &["a"]), ("l2", &["b"]), ("l3", &["c"])]);
        let mut rankings = IndexMap::new();
        // ranks 10, 20, 30
        let mk = |target: &str, rank: usize| {
            let mut words: Vec<String> = (0..rank - 1).map(|i| format!("f{i}")).collect();
            words.push(target.to_string());
            FrequencyRanking::from_words(lang("x"), words).unwrap()
        };
        rankings.insert(lang("l1"), mk("a", 10));
        rankings.insert(lang("l2"), mk("b", 20));
        rankings.insert(lang("l3"), mk("c", 30));
        let languages = vec![lang("l1"), lang("l2"), lang("l3")];
        let (mean, used) = mean_word_rank(&c, &rankings, &languages, RankPolicy::Strict).unwrap();
        assert_eq!(mean, 20.0);
        assert_eq!(used, 3);
    }

    #[test]
    fn mean_rank_uses_best_form() {
        let c = concept("AUGE", &[("eng", &["eye", "eyeball"])]);
        let mut words: Vec<String> = (0..4000).map(|i| format!("w{i}")).collect();
        words[49] = "eye".into(); // rank 50
        words[3999] = "eyeball".into(); // rank 4000
        let mut rankings = IndexMap::new();
        rankings.insert(
            lang("eng"),
            FrequencyRanking::from_words(lang("eng"), words).unwrap(),
        );
        let (mean, _) =
            mean_word_rank(&c, &rankings, &[lang("eng")], RankPolicy::Strict).unwrap();
        assert_eq!(mean, 50.0);
    }

    #[test]
    fn mean_rank_strict_skips_unlisted_languages() {
        let c = concept("C", &[("l1", &["a"]), ("l2", &["zzz"])]);
        let mut rankings = IndexMap::new();
        let (k1, v1) = ranking("l1", &["x", "a", "y"]);
        let (k2, v2) = ranking("l2", &["p", "q"]);
        rankings.insert(k1, v1);
        rankings.insert(k2, v2);
        let languages = vec![lang("l1"), lang("l2")];
        // hand computation: only l1 contributes, rank 2
        let (mean, used) = mean_word_rank(&c, &rankings, &languages, RankPolicy::Strict).unwrap();
        assert_eq!((mean, used), (2.0, 1));
        // penalty mode: l2 contributes len+1 = 3, mean (2+3)/2
        let (mean, used) =
            mean_word_rank(&c, &rankings, &languages, RankPolicy::Penalty).unwrap();
        assert_eq!((mean, used), (2.5, 2));
    }

    #[test]
    fn mean_rank_invariant_to_language_iteration_order() {
        let c = concept("C", &[("l1", &["a"]), ("l2", &["b"])]);
        let mut rankings = IndexMap::new();
        let (k1, v1) = ranking("l1", &["a", "x"]);
        let (k2, v2) = ranking("l2", &["y", "b"]);
        rankings.insert(k1, v1);
        rankings.insert(k2, v2);
        let forward = vec![lang("l1"), lang("l2")];
        let backward = vec![lang("l2"), lang("l1")];
        let a = mean_word_rank(&c, &rankings, &forward, RankPolicy::Strict).unwrap();
        let b = mean_word_rank(&c, &rankings, &backward, RankPolicy::Strict).unwrap();
        assert_eq!(a.0, b.0);
    }

    #[test]
    fn mean_rank_errors_when_nothing_is_listed() {
        let c = concept("C", &[("l1", &["zzz"])]);
        let mut rankings = IndexMap::new();
        let (k1, v1) = ranking("l1", &["a", "b"]);
        rankings.insert(k1, v1);
        assert!(matches!(
            mean_word_rank(&c, &rankings, &[lang("l1")], RankPolicy::Strict).unwrap_err(),
            Error::NoRankedForms { .. }
        ));
    }

    fn inventory(records: &[(&str, &str, &str, &[&str])]) -> SenseInventory {
        SenseInventory::from_records(records.iter().map(|(c, l, w, ids)| {
            (
                ConceptId::new(*c),
                SenseRecord {
                    language: lang(l),
                    word_form: w.to_string(),
                    sense_ids: ids.iter().map(|s| s.to_string()).collect(),
                },
            )
        }))
    }

    #[test]
    fn polysemy_is_the_union_of_sense_sets() {
        let inv = inventory(&[
            ("C", "l1", "w1", &["s1", "s2"]),
            ("C", "l2", "w2", &["s2", "s3"]),
        ]);
        let (count, used) =
            degree_of_polysemy(&ConceptId::new("C"), &inv, &[lang("l1"), lang("l2")]).unwrap();
        assert_eq!((count, used), (3, 2));
    }

    #[test]
    fn polysemy_single_record() {
        let inv = inventory(&[("C", "l1", "w1", &["s1"])]);
        let (count, _) = degree_of_polysemy(&ConceptId::new("C"), &inv, &[lang("l1")]).unwrap();
        assert_eq!(count, 1);
    }

    #[test]
    fn polysemy_matches_brute_force_union() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let languages: Vec<Language> = (0..10).map(|i| lang(&format!("l{i}"))).collect();
        let mut raw: Vec<(String, Vec<String>)> = Vec::new();
        for language in &languages {
            let n = rng.gen_range(1..6);
            let ids: Vec<String> = (0..n)
                .map(|_| format!("s{}", rng.gen_range(0..12)))
                .collect();
            raw.push((language.to_string(), ids));
        }
        let inv = SenseInventory::from_records(raw.iter().map(|(l, ids)| {
            (
                ConceptId::new("C"),
                SenseRecord {
                    language: lang(l),
                    word_form: format!("w_{l}"),
                    sense_ids: ids.iter().cloned().collect(),
                },
            )
        }));
        let brute: BTreeSet<&String> = raw.iter().flat_map(|(_, ids)| ids.iter()).collect();
        let (count, used) = degree_of_polysemy(&ConceptId::new("C"), &inv, &languages).unwrap();
        assert_eq!(count, brute.len());
        assert_eq!(used, 10);
    }

    #[test]
    fn polysemy_is_monotone_in_the_language_set() {
        let inv = inventory(&[
            ("C", "l1", "w1", &["s1"]),
            ("C", "l2", "w2", &["s2", "s3"]),
            ("C", "l3", "w3", &["s1", "s4"]),
        ]);
        let mut previous = 0;
        let mut languages = Vec::new();
        for l in ["l1", "l2", "l3"] {
            languages.push(lang(l));
            let (count, _) =
                degree_of_polysemy(&ConceptId::new("C"), &inv, &languages).unwrap();
            assert!(count >= previous);
            previous = count;
        }
    }

    #[test]
    fn polysemy_errors_outside_language_set() {
        let inv = inventory(&[("C", "l1", "w1", &["s1"])]);
        assert!(matches!(
            degree_of_polysemy(&ConceptId::new("C"), &inv, &[lang("l9")]).unwrap_err(),
            Error::NoSenseRecords { .. }
        ));
    }

    #[test]
    fn word_length_counts_unicode_scalars() {
        let c = concept("C", &[("eng", &["cat"]), ("fra", &["chat"])]);
        let (mean, used) =
            mean_word_length(&c, &[lang("eng"), lang("fra")], LengthPolicy::FirstForm).unwrap();
        assert_eq!((mean, used), (3.5, 2));
    }

    #[test]
    fn word_length_of_combining_sequence() {
        // Cyrillic о + combining acute has no NFC composition, so the
        // combining mark stays a separate scalar: о́ко = 4 scalars
        let form = "о\u{0301}ко";
        let scalar_count = form.chars().count();
        assert_eq!(scalar_count, 4);
        let c = concept("OKO", &[("chu", &[form])]);
        let (mean, _) = mean_word_length(&c, &[lang("chu")], LengthPolicy::FirstForm).unwrap();
        assert_eq!(mean, scalar_count as f64);
    }

    #[test]
    fn word_length_constant_across_languages() {
        let c = concept("C", &[("l1", &["same"]), ("l2", &["same"]), ("l3", &["same"])]);
        let (mean, _) = mean_word_length(
            &c,
            &[lang("l1"), lang("l2"), lang("l3")],
            LengthPolicy::FirstForm,
        )
        .unwrap();
        assert_eq!(mean, 4.0);
    }

    #[test]
    fn word_length_all_forms_policy() {
        let c = concept("C", &[("l1", &["ab", "abcd"])]);
        let (first, _) = mean_word_length(&c, &[lang("l1")], LengthPolicy::FirstForm).unwrap();
        assert_eq!(first, 2.0);
        let (all, _) = mean_word_length(&c, &[lang("l1")], LengthPolicy::AllForms).unwrap();
        assert_eq!(all, 3.0);
    }

    #[test]
    fn predictor_table_flags_partial_rows() {
        let c1 = concept("C1", &[("l1", &["aa"]), ("l2", &["bb"])]);
        let c2 = concept("C2", &[("l1", &["cc"])]);
        let lexicon = ConceptLexicon::from_concepts(vec![c1, c2]);
        let mut rankings = IndexMap::new();
        let (k, v) = ranking("l1", &["aa", "cc"]);
        rankings.insert(k, v);
        // sense data only for C1
        let inv = inventory(&[("C1", "l1", "aa", &["s1", "s2"])]);
        let languages = vec![lang("l1"), lang("l2")];
        let ids: Vec<ConceptId> = lexicon.ids().cloned().collect();

        let rows = build_predictor_table(
            &lexicon,
            &ids,
            &rankings,
            &inv,
            &languages,
            PredictorOptions::default(),
        )
        .unwrap();
        assert_eq!(rows.len(), 2);
        assert!(!rows[0].partial);
        assert_eq!(rows[0].mean_word_rank, Some(1.0));
        assert_eq!(rows[0].degree_of_polysemy, Some(2));
        assert_eq!(rows[0].mean_word_length, Some(2.0));
        assert!(rows[1].partial, "C2 lacks sense data");
        assert_eq!(rows[1].degree_of_polysemy, None);
    }

    #[test]
    fn predictor_table_column_means_match_recomputation() {
        let c1 = concept("C1", &[("l1", &["aa"]), ("l2", &["bbb"])]);
        let c2 = concept("C2", &[("l1", &["cccc"]), ("l2", &["dd"])]);
        let lexicon = ConceptLexicon::from_concepts(vec![c1.clone(), c2.clone()]);
        let mut rankings = IndexMap::new();
        let (k1, v1) = ranking("l1", &["aa", "cccc"]);
        let (k2, v2) = ranking("l2", &["dd", "bbb"]);
        rankings.insert(k1, v1);
        rankings.insert(k2, v2);
        let inv = inventory(&[
            ("C1", "l1", "aa", &["s1"]),
            ("C2", "l2", "dd", &["s1", "s2"]),
        ]);
        let languages = vec![lang("l1"), lang("l2")];
        let ids: Vec<ConceptId> = lexicon.ids().cloned().collect();
        let rows = build_predictor_table(
            &lexicon,
            &ids,
            &rankings,
            &inv,
            &languages,
            PredictorOptions::default(),
        )
        .unwrap();

        let table_rank_mean =
            rows.iter().filter_map(|r| r.mean_word_rank).sum::<f64>() / rows.len() as f64;
        let direct: Vec<f64> = [&c1, &c2]
            .iter()
            .map(|c| {
                mean_word_rank(c, &rankings, &languages, RankPolicy::Strict)
                    .unwrap()
                    .0
            })
            .collect();
        let recomputed = crate::math::mean(&direct);
        assert!((table_rank_mean - recomputed).abs() < 1e-12);
    }
}
