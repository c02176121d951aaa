//! Supervised alignment of per-language embedding tables into a common
//! pivot-anchored space.
//!
//! Each non-pivot language gets a linear map `W` fitted on bilingual
//! dictionary pairs so that `W` applied to the source vectors approximates
//! the pivot vectors, minimizing the Frobenius norm of `WX - Y`. Two modes
//! are supported: unconstrained least squares, and orthogonal (Procrustes),
//! which solves the same objective under `W^T W = I` and therefore preserves
//! monolingual cosine geometry. Orthogonal is the default.

use std::collections::HashSet;

use indexmap::IndexMap;
use nalgebra::{DMatrix, DVector};

use crate::error::Error;
use crate::io::{BilingualDictionary, ConceptLexicon, EmbeddingTable};
use crate::math;
use crate::types::Language;
use crate::Result;

/// How a per-language map is fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapMode {
    LeastSquares,
    Orthogonal,
}

impl std::fmt::Display for MapMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MapMode::LeastSquares => f.write_str("least-squares"),
            MapMode::Orthogonal => f.write_str("orthogonal"),
        }
    }
}

/// A fitted d×d linear map from one language's space into another's.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap {
    pub source: Language,
    pub target: Language,
    pub mode: MapMode,
    pub matrix: DMatrix<f64>,
    /// Frobenius norm of `WX - Y` on the training pairs.
    pub residual: f64,
}

impl LinearMap {
    /// The identity map a pivot language carries.
    pub fn identity(language: Language, mode: MapMode, dim: usize) -> Self {
        LinearMap {
            source: language.clone(),
            target: language,
            mode,
            matrix: DMatrix::identity(dim, dim),
            residual: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Apply the map to a vector.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let x = DVector::from_column_slice(v);
        (&self.matrix * x).data.into()
    }

    /// Row-major text serialization, one row per line, space-separated.
    pub fn matrix_text(&self) -> String {
        matrix_to_text(&self.matrix)
    }
}

/// Serialize a matrix row-major, one row per line.
pub fn matrix_to_text(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if c > 0 {
                out.push(' ');
            }
            out.push_str(&format!("{}", m[(r, c)]));
        }
        out.push('\n');
    }
    out
}

/// Parse the row-major text format produced by [`matrix_to_text`].
pub fn matrix_from_text(text: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|_| Error::BadNumber {
                    path: "<matrix>".into(),
                    line: idx + 1,
                    token: tok.to_string(),
                })
            })
            .collect::<Result<_>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::InvalidValue {
                    path: "<matrix>".into(),
                    line: idx + 1,
                    message: format!("row has {} entries, expected {}", row.len(), first.len()),
                });
            }
        }
        rows.push(row);
    }
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(nrows, ncols, |r, c| rows[r][c]))
}

/// Frobenius norm: square root of the sum of squared entries.
pub fn frobenius_norm(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Unconstrained least squares: the `W` minimizing the Frobenius norm of
/// `WX - Y`, solved via the normal equations `W (XX^T) = YX^T` with a
/// Cholesky factorization. `X` and `Y` are d×n with one dictionary pair per
/// column.
///
/// Rank-deficient `X` (in particular n < d) is an error unless a ridge term
/// `lambda` is supplied, in which case `XX^T + lambda I` is used instead.
pub fn fit_least_squares(
    source: Language,
    target: Language,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    ridge: Option<f64>,
) -> Result<LinearMap> {
    let d = x.nrows();
    let n = x.ncols();
    assert_eq!(y.nrows(), d, "X and Y must share dimension");
    assert_eq!(y.ncols(), n, "X and Y must pair columns");
    if n == 0 {
        return Err(Error::EmptyFit);
    }
    if n < d && ridge.is_none() {
        return Err(Error::RankDeficientFit { pairs: n, dim: d });
    }

    let mut gram = x * x.transpose();
    if let Some(lambda) = ridge {
        for i in 0..d {
            gram[(i, i)] += lambda;
        }
    }
    let chol = gram
        .cholesky()
        .ok_or(Error::RankDeficientFit { pairs: n, dim: d })?;
    // Solve (XX^T) W^T = X Y^T, then transpose.
    let wt = chol.solve(&(x * y.transpose()));
    let w = wt.transpose();
    let residual = frobenius_norm(&(&w * x - y));
    Ok(LinearMap {
        source,
        target,
        mode: MapMode::LeastSquares,
        matrix: w,
        residual,
    })
}

/// Orthogonal Procrustes: the `W` minimizing the Frobenius norm of `WX - Y`
/// under `W^T W = I`, obtained as `U V^T` from the singular value
/// decomposition of `Y X^T`.
///
/// The SVD's singular-vector sign ambiguity is resolved by making the
/// largest-magnitude component of each left singular vector positive, so the
/// factorization (and anything serialized from it) is reproducible.
pub fn fit_procrustes(
    source: Language,
    target: Language,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
) -> Result<LinearMap> {
    let d = x.nrows();
    let n = x.ncols();
    assert_eq!(y.nrows(), d, "X and Y must share dimension");
    assert_eq!(y.ncols(), n, "X and Y must pair columns");
    if n == 0 {
        return Err(Error::EmptyFit);
    }

    let cross = y * x.transpose();
    if frobenius_norm(&cross) < 1e-12 {
        return Err(Error::DegenerateCrossCovariance);
    }
    let svd = cross.svd(true, true);
    let mut u = svd.u.expect("svd computed with u");
    let mut v_t = svd.v_t.expect("svd computed with v_t");
    fix_singular_vector_signs(&mut u, &mut v_t);
    let w = &u * &v_t;
    let residual = frobenius_norm(&(&w * x - y));
    Ok(LinearMap {
        source,
        target,
        mode: MapMode::Orthogonal,
        matrix: w,
        residual,
    })
}

/// Flip paired singular-vector signs so each column of `u` has its
/// largest-magnitude component positive. `u * v_t` is unchanged.
fn fix_singular_vector_signs(u: &mut DMatrix<f64>, v_t: &mut DMatrix<f64>) {
    for i in 0..u.ncols().min(v_t.nrows()) {
        let mut pivot = 0;
        let mut best = 0.0f64;
        for r in 0..u.nrows() {
            let mag = u[(r, i)].abs();
            if mag > best {
                best = mag;
                pivot = r;
            }
        }
        if u[(pivot, i)] < 0.0 {
            for r in 0..u.nrows() {
                u[(r, i)] = -u[(r, i)];
            }
            for c in 0..v_t.ncols() {
                v_t[(i, c)] = -v_t[(i, c)];
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Exclusion filtering
// ---------------------------------------------------------------------------

/// Word forms excluded from dictionary supervision, keyed by language.
///
/// Built from the concept lexicon so that the vectors whose affinity is later
/// measured never participate in fitting the maps.
#[derive(Debug, Clone, Default)]
pub struct ExclusionSet {
    forms: HashSet<(Language, String)>,
}

impl ExclusionSet {
    pub fn empty() -> Self {
        ExclusionSet::default()
    }

    /// Every word form of every concept in every language of the lexicon.
    pub fn from_lexicon(lexicon: &ConceptLexicon) -> Self {
        let mut forms = HashSet::new();
        for concept in lexicon.concepts() {
            for (language, word_forms) in &concept.forms {
                for form in word_forms {
                    forms.insert((language.clone(), form.clone()));
                }
            }
        }
        ExclusionSet { forms }
    }

    pub fn insert(&mut self, language: Language, form: impl Into<String>) {
        self.forms.insert((language, form.into()));
    }

    pub fn contains(&self, language: &Language, form: &str) -> bool {
        self.forms.contains(&(language.clone(), form.to_string()))
    }

    pub fn len(&self) -> usize {
        self.forms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forms.is_empty()
    }
}

/// Drop every pair whose source or target form is excluded. Survivor order
/// is preserved. An empty result is an error: there is nothing left to fit.
pub fn filter_dictionary(
    dict: &BilingualDictionary,
    exclusion: &ExclusionSet,
) -> Result<BilingualDictionary> {
    let pairs: Vec<(String, String)> = dict
        .pairs
        .iter()
        .filter(|(src, tgt)| {
            !exclusion.contains(&dict.source, src) && !exclusion.contains(&dict.target, tgt)
        })
        .cloned()
        .collect();
    if pairs.is_empty() {
        return Err(Error::EmptyDictionaryAfterFilter {
            from: dict.source.to_string(),
            to: dict.target.to_string(),
        });
    }
    Ok(BilingualDictionary {
        source: dict.source.clone(),
        target: dict.target.clone(),
        pairs,
    })
}

// ---------------------------------------------------------------------------
// Multilingual space
// ---------------------------------------------------------------------------

/// Settings for building a multilingual space.
#[derive(Debug, Clone)]
pub struct AlignmentConfig {
    pub pivot: Language,
    pub mode: MapMode,
    /// Ridge term enabling the least-squares fallback for rank-deficient X.
    pub ridge: Option<f64>,
    pub exclusion: ExclusionSet,
    /// Digest of the configuration the space is built under; embedded in the
    /// space for cache validation.
    pub provenance: String,
}

impl AlignmentConfig {
    pub fn new(pivot: Language) -> Self {
        AlignmentConfig {
            pivot,
            mode: MapMode::Orthogonal,
            ridge: None,
            exclusion: ExclusionSet::empty(),
            provenance: String::new(),
        }
    }
}

/// Per-language fit diagnostics recorded while building a space.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AlignmentQuality {
    pub used_pairs: usize,
    pub skipped_oov: usize,
    pub residual: f64,
    /// Mean cosine of projected source vectors to their pivot translations
    /// over the training pairs.
    pub mean_train_cosine: f64,
}

/// Embedding tables projected into one shared coordinate frame.
///
/// The pivot's table is untouched and its map is the identity; every other
/// table is projected by its fitted map and re-normalized to unit length.
#[derive(Debug, Clone, PartialEq)]
pub struct MultilingualSpace {
    pivot: Language,
    dim: usize,
    tables: IndexMap<Language, EmbeddingTable>,
    maps: IndexMap<Language, LinearMap>,
    quality: IndexMap<Language, AlignmentQuality>,
    provenance: String,
}

impl MultilingualSpace {
    pub fn pivot(&self) -> &Language {
        &self.pivot
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// Languages in build order (pivot first).
    pub fn languages(&self) -> impl Iterator<Item = &Language> {
        self.tables.keys()
    }

    pub fn contains_language(&self, language: &str) -> bool {
        self.tables.contains_key(language)
    }

    pub fn table(&self, language: &str) -> Option<&EmbeddingTable> {
        self.tables.get(language)
    }

    pub fn map(&self, language: &str) -> Option<&LinearMap> {
        self.maps.get(language)
    }

    pub fn quality(&self) -> &IndexMap<Language, AlignmentQuality> {
        &self.quality
    }

    /// Projected vector for a word, if the language and word are known.
    pub fn vector(&self, language: &str, word: &str) -> Option<&[f64]> {
        self.tables.get(language)?.get(word)
    }

    /// Reassemble a space from parts (used by the cache loader).
    pub(crate) fn from_parts(
        pivot: Language,
        dim: usize,
        tables: IndexMap<Language, EmbeddingTable>,
        maps: IndexMap<Language, LinearMap>,
        quality: IndexMap<Language, AlignmentQuality>,
        provenance: String,
    ) -> Self {
        MultilingualSpace {
            pivot,
            dim,
            tables,
            maps,
            quality,
            provenance,
        }
    }
}

/// Fit a map per non-pivot language and project every table into the pivot's
/// frame. Tables are processed in input order; the result is deterministic
/// for identical inputs and config.
pub fn build_multilingual_space(
    config: &AlignmentConfig,
    tables: &IndexMap<Language, EmbeddingTable>,
    dictionaries: &IndexMap<Language, BilingualDictionary>,
) -> Result<MultilingualSpace> {
    let pivot_table = tables
        .get(config.pivot.as_str())
        .ok_or_else(|| Error::MissingPivotTable {
            pivot: config.pivot.to_string(),
        })?;
    let dim = pivot_table.dim();
    for (language, table) in tables {
        if table.dim() != dim {
            return Err(Error::TableDimensionMismatch {
                language: language.to_string(),
                expected: dim,
                found: table.dim(),
            });
        }
    }

    let mut out_tables = IndexMap::with_capacity(tables.len());
    let mut maps = IndexMap::with_capacity(tables.len());
    let mut quality = IndexMap::new();

    out_tables.insert(config.pivot.clone(), pivot_table.clone());
    maps.insert(
        config.pivot.clone(),
        LinearMap::identity(config.pivot.clone(), config.mode, dim),
    );

    for (language, table) in tables {
        if *language == config.pivot {
            continue;
        }
        let wrap = |e: Error| Error::LanguageFit {
            language: language.to_string(),
            source: Box::new(e),
        };

        let dict = dictionaries
            .get(language.as_str())
            .ok_or_else(|| Error::MissingDictionary {
                language: language.to_string(),
            })?;
        if dict.source != *language || dict.target != config.pivot {
            return Err(Error::DictionaryDirection {
                language: language.to_string(),
                pivot: config.pivot.to_string(),
                found_source: dict.source.to_string(),
                found_target: dict.target.to_string(),
            });
        }
        let filtered = filter_dictionary(dict, &config.exclusion).map_err(wrap)?;

        let mut x_cols: Vec<f64> = Vec::new();
        let mut y_cols: Vec<f64> = Vec::new();
        let mut used = 0usize;
        let mut skipped = 0usize;
        let mut used_pairs: Vec<(&str, &str)> = Vec::new();
        for (src, tgt) in &filtered.pairs {
            match (table.get(src), pivot_table.get(tgt)) {
                (Some(sv), Some(tv)) => {
                    x_cols.extend_from_slice(sv);
                    y_cols.extend_from_slice(tv);
                    used_pairs.push((src, tgt));
                    used += 1;
                }
                _ => skipped += 1,
            }
        }
        if used == 0 {
            return Err(Error::NoUsablePairs {
                language: language.to_string(),
            });
        }
        // from_vec is column-major, so the Vecs hold one column per pair
        let x = DMatrix::from_vec(dim, used, x_cols);
        let y = DMatrix::from_vec(dim, used, y_cols);

        let map = match config.mode {
            MapMode::Orthogonal => {
                fit_procrustes(language.clone(), config.pivot.clone(), &x, &y).map_err(wrap)?
            }
            MapMode::LeastSquares => {
                fit_least_squares(language.clone(), config.pivot.clone(), &x, &y, config.ridge)
                    .map_err(wrap)?
            }
        };

        let projected = table
            .map_vectors(|_, v| map.apply(v))
            .map_err(wrap)?;

        let mut cosine_sum = 0.0;
        for (src, tgt) in &used_pairs {
            let sv = projected.get(src).expect("projected table keeps vocab");
            let tv = pivot_table.get(tgt).expect("pair was in vocab");
            cosine_sum += math::cosine(sv, tv);
        }
        quality.insert(
            language.clone(),
            AlignmentQuality {
                used_pairs: used,
                skipped_oov: skipped,
                residual: map.residual,
                mean_train_cosine: cosine_sum / used as f64,
            },
        );
        out_tables.insert(language.clone(), projected);
        maps.insert(language.clone(), map);
    }

    Ok(MultilingualSpace {
        pivot: config.pivot.clone(),
        dim,
        tables: out_tables,
        maps,
        quality,
        provenance: config.provenance.clone(),
    })
}

/// Held-out validation of a space: mean cosine of projected pair vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct HeldoutQuality {
    pub mean_cosine: f64,
    pub used_pairs: usize,
    pub skipped_oov: usize,
}

/// Mean cosine of held-out translation pairs in the common space. Pairs with
/// out-of-vocabulary words on either side are skipped and counted; zero
/// usable pairs is an error.
pub fn alignment_quality(
    space: &MultilingualSpace,
    heldout: &BilingualDictionary,
) -> Result<HeldoutQuality> {
    let mut used = 0usize;
    let mut skipped = 0usize;
    let mut sum = 0.0;
    for (src, tgt) in &heldout.pairs {
        match (
            space.vector(heldout.source.as_str(), src),
            space.vector(heldout.target.as_str(), tgt),
        ) {
            (Some(a), Some(b)) => {
                sum += math::cosine(a, b);
                used += 1;
            }
            _ => skipped += 1,
        }
    }
    if used == 0 {
        return Err(Error::NoUsableHeldout { skipped });
    }
    Ok(HeldoutQuality {
        mean_cosine: sum / used as f64,
        used_pairs: used,
        skipped_oov: skipped,
    })
}
