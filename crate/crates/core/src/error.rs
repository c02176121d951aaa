//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by loading, alignment, analysis, and pipeline stages.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    // ---- input parsing ----
    #[error("{path}: malformed header {line:?} (expected \"<count> <dim>\")")]
    MalformedHeader { path: String, line: String },
    #[error("{path} line {line}: expected {expected} fields, found {found}")]
    FieldCount {
        path: String,
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("{path} line {line}: vector for {word:?} has {found} components, header says {expected}")]
    DimensionMismatch {
        path: String,
        line: usize,
        word: String,
        expected: usize,
        found: usize,
    },
    #[error("{path} line {line}: cannot parse number {token:?}")]
    BadNumber {
        path: String,
        line: usize,
        token: String,
    },
    #[error("{path} line {line}: duplicate word {word:?}")]
    DuplicateWord {
        path: String,
        line: usize,
        word: String,
    },
    #[error("{path} line {line}: zero-norm vector for {word:?}")]
    ZeroNormVector {
        path: String,
        line: usize,
        word: String,
    },
    #[error("{path}: header declares {expected} entries, file has {found}")]
    EntryCountMismatch {
        path: String,
        expected: usize,
        found: usize,
    },
    #[error("{path}: missing column {column:?}")]
    MissingColumn { path: String, column: String },
    #[error("{path} line {line}: duplicate row for ({concept}, {language})")]
    DuplicateLexiconRow {
        path: String,
        line: usize,
        concept: String,
        language: String,
    },
    #[error("{path} line {line}: conflicting {field} for concept {concept}")]
    ConflictingConceptField {
        path: String,
        line: usize,
        concept: String,
        field: &'static str,
    },
    #[error("{path} line {line}: empty {field} field")]
    EmptyField {
        path: String,
        line: usize,
        field: &'static str,
    },
    #[error("{path} line {line}: duplicate sense record for ({concept}, {language}, {form})")]
    DuplicateSenseRecord {
        path: String,
        line: usize,
        concept: String,
        language: String,
        form: String,
    },
    #[error("{path} line {line}: duplicate ranked word {word:?}")]
    DuplicateRankedWord {
        path: String,
        line: usize,
        word: String,
    },
    #[error("{path} line {line}: {message}")]
    InvalidValue {
        path: String,
        line: usize,
        message: String,
    },

    // ---- alignment ----
    #[error("least-squares fit: X is rank deficient ({pairs} pairs for dimension {dim}); enable the ridge fallback or supply more pairs")]
    RankDeficientFit { pairs: usize, dim: usize },
    #[error("procrustes fit: cross-covariance YX^T is numerically zero")]
    DegenerateCrossCovariance,
    #[error("fit requires at least one dictionary pair")]
    EmptyFit,
    #[error("dictionary {from}->{to} is empty after exclusion filtering")]
    EmptyDictionaryAfterFilter { from: String, to: String },
    #[error("no dictionary to pivot for language {language}")]
    MissingDictionary { language: String },
    #[error("dictionary for {language} maps {found_source}->{found_target}, expected {language}->{pivot}")]
    DictionaryDirection {
        language: String,
        pivot: String,
        found_source: String,
        found_target: String,
    },
    #[error("language {language}: no dictionary pair has in-vocabulary words on both sides")]
    NoUsablePairs { language: String },
    #[error("language {language}: {source}")]
    LanguageFit {
        language: String,
        #[source]
        source: Box<Error>,
    },
    #[error("pivot language {pivot} has no embedding table")]
    MissingPivotTable { pivot: String },
    #[error("embedding tables disagree on dimension: {language} has {found}, expected {expected}")]
    TableDimensionMismatch {
        language: String,
        expected: usize,
        found: usize,
    },
    #[error("projection collapsed word {word:?} of language {language} to a zero vector")]
    ProjectionCollapsed { language: String, word: String },
    #[error("no usable held-out pairs (all {skipped} were out of vocabulary)")]
    NoUsableHeldout { skipped: usize },

    // ---- affinity ----
    #[error("concept {concept}: member vectors cancel out (centroid norm below {threshold:e})")]
    DegenerateCluster { concept: String, threshold: f64 },
    #[error("unknown concept {concept}")]
    UnknownConcept { concept: String },
    #[error("concept {concept}: coverage {coverage} below minimum {minimum}")]
    InsufficientCoverage {
        concept: String,
        coverage: usize,
        minimum: usize,
    },
    #[error("no concept resolvable in both {first} and {second}")]
    NoSharedConcepts { first: String, second: String },
    #[error("sdist matrix needs at least two languages, got {found}")]
    TooFewLanguages { found: usize },

    // ---- predictors ----
    #[error("concept {concept}: no language yields a frequency rank")]
    NoRankedForms { concept: String },
    #[error("concept {concept}: no sense records within the language set")]
    NoSenseRecords { concept: String },
    #[error("concept {concept}: no word forms within the language set")]
    NoForms { concept: String },

    // ---- typology ----
    #[error("newick parse error at byte {position}: {message}")]
    NewickParse { position: usize, message: String },
    #[error("duplicate leaf label {label:?} in tree")]
    DuplicateLeaf { label: String },
    #[error("language {language} not covered by {dataset}")]
    CoverageGap {
        language: String,
        dataset: &'static str,
    },
    #[error("climate vectors disagree on length: {language} has {found}, expected {expected}")]
    ClimateLengthMismatch {
        language: String,
        expected: usize,
        found: usize,
    },

    // ---- statistics ----
    #[error("regression needs n > k + 1 (n = {n}, k = {k})")]
    TooFewObservations { n: usize, k: usize },
    #[error("design matrix is rank deficient")]
    RankDeficientDesign,
    #[error("{name} has zero variance")]
    ZeroVariance { name: String },
    #[error("partial correlation undefined: {name} residuals have zero variance")]
    UndefinedPartial { name: String },
    #[error("pearson needs at least 3 observations, got {n}")]
    TooFewForPearson { n: usize },
    #[error("partial correlation needs n >= controls + 3 (n = {n}, controls = {controls})")]
    TooFewForPartial { n: usize, controls: usize },
    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },

    // ---- report ----
    #[error("2d projection needs at least two vectors, got {found}")]
    TooFewVectors { found: usize },
    #[error("report kind {kind} does not support format {format}")]
    IncompatibleReportFormat { kind: String, format: String },
    #[error("kinship ordering is empty")]
    EmptyOrdering,
    #[error("kinship ordering must pair concepts (odd length {found})")]
    UnpairedOrdering { found: usize },
    #[error("no affinity record for concept {concept}")]
    MissingRecord { concept: String },

    // ---- pipeline ----
    #[error("config {path}: {message}")]
    Config { path: String, message: String },
    #[error("cache {path}: digest mismatch (file is stale or tampered)")]
    StaleCache { path: String },
    #[error("cache {path}: {message}")]
    BadCache { path: String, message: String },
    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Wrap an error with the pipeline stage it occurred in.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
