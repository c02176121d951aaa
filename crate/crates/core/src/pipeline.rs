//! End-to-end orchestration: load inputs, build (or reuse) the space,
//! compute affinities, predictors, factor matrices, and statistics, and
//! write a run directory with a manifest.
//!
//! Runs are deterministic in serial mode: identical inputs and config
//! produce byte-identical output trees. Caching is keyed by a content
//! digest of the config and every input file, never by timestamps.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::affinity::{
    self, AffinityRecord, AggregateOutcome, DistanceMatrix, FormReduction,
};
use crate::align::{
    self, AlignmentConfig, AlignmentQuality, ExclusionSet, LinearMap, MapMode, MultilingualSpace,
};
use crate::error::Error;
use crate::io::{
    self, BilingualDictionary, ConceptLexicon, EmbeddingTable, FrequencyRanking, SenseInventory,
};
use crate::predictors::{
    self, LengthPolicy, PredictorOptions, PredictorRow, RankPolicy,
};
use crate::report::PartialCorrBar;
use crate::stats::{self, MantelResult, PartialCorrResult, RegressionResult};
use crate::typology::{self, ClimateTable, FactorMatrices, GeoTable, PhyloTree};
use crate::types::{ConceptId, Language};
use crate::Result;

/// Significance threshold used for partial-correlation flags.
pub const SIGNIFICANCE_ALPHA: f64 = 0.05;

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

fn default_min_coverage() -> usize {
    2
}
fn default_min_group_size() -> usize {
    5
}
fn default_true() -> bool {
    true
}
fn default_mode() -> MapMode {
    MapMode::Orthogonal
}

/// `[run]` section: global switches.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSection {
    pub pivot: String,
    #[serde(default = "default_mode")]
    pub mode: MapMode,
    #[serde(default = "default_min_coverage")]
    pub min_coverage: usize,
    #[serde(default = "default_true")]
    pub standardize: bool,
    #[serde(default = "default_true")]
    pub strict_ranks: bool,
    #[serde(default)]
    pub form_reduction: FormReduction,
    #[serde(default)]
    pub length_all_forms: bool,
    #[serde(default)]
    pub z_score_climate: bool,
    /// Measure geographic distance on the great circle (km) instead of in
    /// degree space. The choice is part of the provenance digest.
    #[serde(default)]
    pub geo_mode: typology::GeoMode,
    #[serde(default)]
    pub ridge: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// When set, run seeded Mantel permutation tests of SDist against each
    /// factor with this many permutations.
    #[serde(default)]
    pub mantel_permutations: Option<usize>,
}

/// `[inputs]` section: file paths, resolved relative to the config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputsSection {
    pub lexicon: PathBuf,
    #[serde(default)]
    pub senses: Option<PathBuf>,
    #[serde(default)]
    pub tree: Option<PathBuf>,
    #[serde(default)]
    pub geo: Option<PathBuf>,
    #[serde(default)]
    pub climate: Option<PathBuf>,
    /// language -> vector file
    pub vectors: BTreeMap<String, PathBuf>,
    /// non-pivot language -> dictionary file (language to pivot)
    #[serde(default)]
    pub dictionaries: BTreeMap<String, PathBuf>,
    /// language -> frequency ranking file
    #[serde(default)]
    pub rankings: BTreeMap<String, PathBuf>,
}

/// `[analysis]` section: scopes and thresholds.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AnalysisSection {
    /// Languages to analyze; default = every language with vectors, sorted.
    #[serde(default)]
    pub languages: Option<Vec<String>>,
    /// Languages entering the SDist analysis; default = `languages`.
    #[serde(default)]
    pub sdist_languages: Option<Vec<String>>,
    /// Concept subset; default = the whole lexicon.
    #[serde(default)]
    pub concepts: Option<Vec<String>>,
    /// Domain tags for the per-domain partial-correlation loop; default =
    /// every tag in the lexicon.
    #[serde(default)]
    pub domains: Option<Vec<String>>,
    #[serde(default = "default_min_group_size")]
    pub min_group_size: usize,
}

/// `[report]` section: figure inputs.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ReportSection {
    /// Kinship figure ordering: concepts as consecutive (female, male)
    /// pairs, closest to ego first.
    #[serde(default)]
    pub kinship_order: Vec<String>,
    /// Concepts whose member vectors are projected in the 2D scatter.
    #[serde(default)]
    pub scatter_concepts: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub run: RunSection,
    pub inputs: InputsSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub report: ReportSection,
}

/// A parsed config plus its base directory and content digest.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base_dir: PathBuf,
    pub config_digest: String,
    /// Path strings exactly as written in the config, for the manifest.
    pub source_path: PathBuf,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<LoadedConfig> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let text = String::from_utf8(bytes).map_err(|e| Error::Config {
            path: path.display().to_string(),
            message: format!("not UTF-8: {e}"),
        })?;
        let config: RunConfig = toml::from_str(&text).map_err(|e| Error::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        let mut loaded = LoadedConfig {
            config,
            base_dir,
            config_digest: String::new(),
            source_path: path.to_path_buf(),
        };
        loaded.refresh_digest();
        loaded.validate()?;
        Ok(loaded)
    }

    /// Recompute the config digest from the effective configuration. The
    /// digest covers the canonical serialized form (defaults applied,
    /// command-line overrides included), not the raw file bytes, so two
    /// runs behave identically exactly when their digests match.
    pub fn refresh_digest(&mut self) {
        let canonical = toml::to_string(&self.config).expect("config serializes");
        self.config_digest = digest_bytes(canonical.as_bytes());
    }

    fn validate(&self) -> Result<()> {
        let c = &self.config;
        let err = |message: String| Error::Config {
            path: self.source_path.display().to_string(),
            message,
        };
        if !c.inputs.vectors.contains_key(&c.run.pivot) {
            return Err(err(format!(
                "pivot {} has no vector file in [inputs.vectors]",
                c.run.pivot
            )));
        }
        if let Some(languages) = &c.analysis.languages {
            if !languages.contains(&c.run.pivot) {
                return Err(err(format!(
                    "pivot {} is not in analysis.languages",
                    c.run.pivot
                )));
            }
            for l in languages {
                if !c.inputs.vectors.contains_key(l) {
                    return Err(err(format!("language {l} has no vector file")));
                }
            }
        }
        Ok(())
    }

    pub fn resolve(&self, relative: &Path) -> PathBuf {
        if relative.is_absolute() {
            relative.to_path_buf()
        } else {
            self.base_dir.join(relative)
        }
    }

    /// Languages in analysis order: the explicit list, or every vector
    /// language sorted.
    pub fn languages(&self) -> Vec<Language> {
        match &self.config.analysis.languages {
            Some(list) => list.iter().map(Language::new).collect(),
            None => self
                .config
                .inputs
                .vectors
                .keys()
                .map(Language::new)
                .collect(),
        }
    }

    pub fn sdist_languages(&self) -> Vec<Language> {
        match &self.config.analysis.sdist_languages {
            Some(list) => list.iter().map(Language::new).collect(),
            None => self.languages(),
        }
    }

    pub fn pivot(&self) -> Language {
        Language::new(&self.config.run.pivot)
    }

    pub fn rank_policy(&self) -> RankPolicy {
        if self.config.run.strict_ranks {
            RankPolicy::Strict
        } else {
            RankPolicy::Penalty
        }
    }

    pub fn length_policy(&self) -> LengthPolicy {
        if self.config.run.length_all_forms {
            LengthPolicy::AllForms
        } else {
            LengthPolicy::FirstForm
        }
    }
}

// ---------------------------------------------------------------------------
// Digests and manifest
// ---------------------------------------------------------------------------

pub fn digest_bytes(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex::encode(hasher.finalize())
}

pub fn digest_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(digest_bytes(&bytes))
}

/// Provenance record written at the root of every run directory. The
/// manifest digest covers the toolkit version, the config digest, and every
/// input digest; every output artifact embeds it. Wall-clock timestamps are
/// off by default so reruns are byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub toolkit_version: String,
    pub manifest_digest: String,
    pub config_digest: String,
    /// Input path (as written in the config) -> content digest.
    pub input_digests: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
    pub stage_counts: BTreeMap<String, usize>,
}

impl RunManifest {
    fn assemble(config: &LoadedConfig) -> Result<RunManifest> {
        let c = &config.config;
        let mut input_digests = BTreeMap::new();
        let mut add = |rel: &Path| -> Result<()> {
            let digest = digest_file(&config.resolve(rel))?;
            input_digests.insert(rel.display().to_string(), digest);
            Ok(())
        };
        add(&c.inputs.lexicon)?;
        for path in [&c.inputs.senses, &c.inputs.tree, &c.inputs.geo, &c.inputs.climate]
            .into_iter()
            .flatten()
        {
            add(path)?;
        }
        for path in c.inputs.vectors.values() {
            add(path)?;
        }
        for path in c.inputs.dictionaries.values() {
            add(path)?;
        }
        for path in c.inputs.rankings.values() {
            add(path)?;
        }

        let mut hasher = Sha256::new();
        hasher.update(TOOLKIT_VERSION.as_bytes());
        hasher.update(b"\n");
        hasher.update(config.config_digest.as_bytes());
        for (path, digest) in &input_digests {
            hasher.update(b"\n");
            hasher.update(path.as_bytes());
            hasher.update(b"=");
            hasher.update(digest.as_bytes());
        }
        Ok(RunManifest {
            toolkit_version: TOOLKIT_VERSION.to_string(),
            manifest_digest: hex::encode(hasher.finalize()),
            config_digest: config.config_digest.clone(),
            input_digests,
            timestamp: None,
            stage_counts: BTreeMap::new(),
        })
    }
}

// ---------------------------------------------------------------------------
// Loaded inputs and pipeline context
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct LoadedInputs {
    pub tables: IndexMap<Language, EmbeddingTable>,
    pub dictionaries: IndexMap<Language, BilingualDictionary>,
    pub rankings: IndexMap<Language, FrequencyRanking>,
    pub lexicon: ConceptLexicon,
    pub senses: Option<SenseInventory>,
    pub tree: Option<PhyloTree>,
    pub geo: Option<GeoTable>,
    pub climate: Option<ClimateTable>,
}

/// Everything a run needs: config, loaded inputs, the built space, and the
/// manifest skeleton.
pub struct PipelineContext {
    pub config: LoadedConfig,
    pub inputs: LoadedInputs,
    pub space: MultilingualSpace,
    pub manifest: RunManifest,
    /// Set when the space came from a valid cache instead of a fresh build.
    pub space_from_cache: bool,
    pub warnings: Vec<String>,
}

/// Load every input file named in the config (stage `load`).
pub fn load_inputs(config: &LoadedConfig) -> Result<LoadedInputs> {
    let stage = |e: Error| e.in_stage("load");
    let c = &config.config;
    let languages = config.languages();
    let pivot = config.pivot();

    let mut tables = IndexMap::new();
    for language in &languages {
        let rel = c.inputs.vectors.get(language.as_str()).ok_or_else(|| {
            Error::Config {
                path: config.source_path.display().to_string(),
                message: format!("language {language} has no vector file"),
            }
        })?;
        let table = io::load_embeddings(&config.resolve(rel), language.clone(), None)
            .map_err(stage)?;
        tables.insert(language.clone(), table);
    }

    let mut dictionaries = IndexMap::new();
    for language in &languages {
        if *language == pivot {
            continue;
        }
        if let Some(rel) = c.inputs.dictionaries.get(language.as_str()) {
            let dict = io::load_dictionary(&config.resolve(rel), language.clone(), pivot.clone())
                .map_err(stage)?;
            dictionaries.insert(language.clone(), dict);
        }
    }

    let mut rankings = IndexMap::new();
    for language in &languages {
        if let Some(rel) = c.inputs.rankings.get(language.as_str()) {
            let ranking =
                io::load_ranking(&config.resolve(rel), language.clone()).map_err(stage)?;
            rankings.insert(language.clone(), ranking);
        }
    }

    let lexicon = io::load_lexicon(&config.resolve(&c.inputs.lexicon)).map_err(stage)?;
    let senses = match &c.inputs.senses {
        Some(rel) => Some(io::load_sense_inventory(&config.resolve(rel)).map_err(stage)?),
        None => None,
    };
    let tree = match &c.inputs.tree {
        Some(rel) => Some(typology::load_tree(&config.resolve(rel)).map_err(stage)?),
        None => None,
    };
    let geo = match &c.inputs.geo {
        Some(rel) => Some(typology::load_geo(&config.resolve(rel)).map_err(stage)?),
        None => None,
    };
    let climate = match &c.inputs.climate {
        Some(rel) => {
            let table = typology::load_climate(&config.resolve(rel)).map_err(stage)?;
            Some(if c.run.z_score_climate {
                table.z_scored()
            } else {
                table
            })
        }
        None => None,
    };

    Ok(LoadedInputs {
        tables,
        dictionaries,
        rankings,
        lexicon,
        senses,
        tree,
        geo,
        climate,
    })
}

/// Load inputs and build the space (stages `load` + `align`). When
/// `cache_path` points at a cache whose provenance matches this config and
/// input set, the cached space is reused instead of refitting.
pub fn prepare(config: LoadedConfig, cache_path: Option<&Path>) -> Result<PipelineContext> {
    let manifest = RunManifest::assemble(&config).map_err(|e| e.in_stage("load"))?;
    let inputs = load_inputs(&config)?;
    let mut warnings = Vec::new();

    if let Some(path) = cache_path {
        if path.exists() {
            match load_cached_space(path) {
                Ok(loaded) => {
                    warnings.extend(loaded.warnings.iter().cloned());
                    if loaded.space.provenance() == manifest.manifest_digest {
                        return Ok(PipelineContext {
                            config,
                            inputs,
                            space: loaded.space,
                            manifest,
                            space_from_cache: true,
                            warnings,
                        });
                    }
                    warnings.push(format!(
                        "cache {} was built under a different config; rebuilding",
                        path.display()
                    ));
                }
                Err(e) => return Err(e.in_stage("cache")),
            }
        }
    }

    let mut alignment = AlignmentConfig::new(config.pivot());
    alignment.mode = config.config.run.mode;
    alignment.ridge = config.config.run.ridge;
    alignment.exclusion = ExclusionSet::from_lexicon(&inputs.lexicon);
    alignment.provenance = manifest.manifest_digest.clone();
    let space = align::build_multilingual_space(&alignment, &inputs.tables, &inputs.dictionaries)
        .map_err(|e| e.in_stage("align"))?;

    Ok(PipelineContext {
        config,
        inputs,
        space,
        manifest,
        space_from_cache: false,
        warnings,
    })
}

// ---------------------------------------------------------------------------
// Space cache
// ---------------------------------------------------------------------------

const CACHE_HEADER: &str = "semaff-space-cache v1";

#[derive(Serialize, Deserialize)]
struct CachedTable {
    language: Language,
    words: Vec<String>,
    vectors: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct CachedMap {
    source: Language,
    target: Language,
    mode: MapMode,
    residual: f64,
    matrix: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct CacheBody {
    toolkit_version: String,
    provenance: String,
    pivot: Language,
    dim: usize,
    tables: Vec<CachedTable>,
    maps: Vec<CachedMap>,
    quality: Vec<(Language, AlignmentQuality)>,
}

/// Serialize a space to `path` with an integrity digest. Vectors round-trip
/// exactly (shortest-round-trip float encoding).
pub fn cache_space(space: &MultilingualSpace, path: &Path) -> Result<()> {
    let body = CacheBody {
        toolkit_version: TOOLKIT_VERSION.to_string(),
        provenance: space.provenance().to_string(),
        pivot: space.pivot().clone(),
        dim: space.dim(),
        tables: space
            .languages()
            .map(|l| {
                let table = space.table(l.as_str()).expect("language has a table");
                CachedTable {
                    language: l.clone(),
                    words: table.iter().map(|(w, _)| w.to_string()).collect(),
                    vectors: table.iter().map(|(_, v)| v.to_vec()).collect(),
                }
            })
            .collect(),
        maps: space
            .languages()
            .map(|l| {
                let map = space.map(l.as_str()).expect("language has a map");
                CachedMap {
                    source: map.source.clone(),
                    target: map.target.clone(),
                    mode: map.mode,
                    residual: map.residual,
                    matrix: (0..map.matrix.nrows())
                        .map(|r| (0..map.matrix.ncols()).map(|c| map.matrix[(r, c)]).collect())
                        .collect(),
                }
            })
            .collect(),
        quality: space
            .quality()
            .iter()
            .map(|(l, q)| (l.clone(), q.clone()))
            .collect(),
    };
    let body_json = serde_json::to_string(&body).expect("cache body serializes");
    let digest = digest_bytes(body_json.as_bytes());
    let contents = format!("{CACHE_HEADER} {digest}\n{body_json}");
    io::write_atomic(path, contents.as_bytes())
}

/// A cache load: the space plus non-fatal warnings (e.g. version skew).
#[derive(Debug)]
pub struct CacheLoad {
    pub space: MultilingualSpace,
    pub warnings: Vec<String>,
}

/// Load a cached space, verifying the integrity digest. A digest mismatch is
/// a hard error; a toolkit version mismatch is a warning.
pub fn load_cached_space(path: &Path) -> Result<CacheLoad> {
    let contents = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let p = || path.display().to_string();
    let (header, body_json) = contents.split_once('\n').ok_or_else(|| Error::BadCache {
        path: p(),
        message: "missing header line".into(),
    })?;
    let digest = header
        .strip_prefix(CACHE_HEADER)
        .map(str::trim)
        .ok_or_else(|| Error::BadCache {
            path: p(),
            message: format!("unrecognized header {header:?}"),
        })?;
    if digest_bytes(body_json.as_bytes()) != digest {
        return Err(Error::StaleCache { path: p() });
    }
    let body: CacheBody = serde_json::from_str(body_json).map_err(|e| Error::BadCache {
        path: p(),
        message: e.to_string(),
    })?;

    let mut warnings = Vec::new();
    if body.toolkit_version != TOOLKIT_VERSION {
        warnings.push(format!(
            "cache {} was written by toolkit {} (this is {})",
            p(),
            body.toolkit_version,
            TOOLKIT_VERSION
        ));
    }

    let mut tables = IndexMap::new();
    for t in body.tables {
        let entries = t.words.into_iter().zip(t.vectors);
        let table = EmbeddingTable::from_raw_entries(t.language.clone(), body.dim, entries)
            .map_err(|e| Error::BadCache {
                path: p(),
                message: e.to_string(),
            })?;
        tables.insert(t.language, table);
    }
    let mut maps = IndexMap::new();
    for m in body.maps {
        let nrows = m.matrix.len();
        let ncols = m.matrix.first().map_or(0, Vec::len);
        let matrix = nalgebra::DMatrix::from_fn(nrows, ncols, |r, c| m.matrix[r][c]);
        maps.insert(
            m.source.clone(),
            LinearMap {
                source: m.source,
                target: m.target,
                mode: m.mode,
                matrix,
                residual: m.residual,
            },
        );
    }
    let quality: IndexMap<Language, AlignmentQuality> = body.quality.into_iter().collect();

    Ok(CacheLoad {
        space: MultilingualSpace::from_parts(
            body.pivot,
            body.dim,
            tables,
            maps,
            quality,
            body.provenance,
        ),
        warnings,
    })
}

// ---------------------------------------------------------------------------
// Concept-level analysis
// ---------------------------------------------------------------------------

/// Output of the concept-level pipeline: affinity records, predictors, the
/// affinity-on-predictors regression, and POS/domain aggregations.
pub struct ConceptAnalysis {
    pub records: Vec<AffinityRecord>,
    /// Concepts that produced no record, with the reason.
    pub skipped_concepts: Vec<(ConceptId, String)>,
    pub predictor_rows: Vec<PredictorRow>,
    /// Regression of affinity on the three predictors over complete rows;
    /// absent when the config provides no rankings or no sense inventory.
    pub regression: Option<RegressionResult>,
    pub pos_summaries: AggregateOutcome,
    pub domain_summaries: AggregateOutcome,
}

/// Concept ids in analysis scope, in lexicon order.
fn analysis_concepts(config: &LoadedConfig, lexicon: &ConceptLexicon) -> Vec<ConceptId> {
    match &config.config.analysis.concepts {
        Some(list) => list.iter().map(ConceptId::new).collect(),
        None => lexicon.ids().cloned().collect(),
    }
}

/// Regression of affinity on the three predictors, complete rows only.
pub fn concept_regression(
    records: &[AffinityRecord],
    rows: &[PredictorRow],
    standardize: bool,
) -> Result<RegressionResult> {
    let affinity_of: IndexMap<&str, f64> = records
        .iter()
        .map(|r| (r.concept.as_str(), r.sem_aff))
        .collect();
    let mut y = Vec::new();
    let mut data: Vec<[f64; 3]> = Vec::new();
    for row in rows {
        if row.partial {
            continue;
        }
        let Some(&aff) = affinity_of.get(row.concept.as_str()) else {
            continue;
        };
        y.push(aff);
        data.push([
            row.mean_word_rank.expect("complete row"),
            row.degree_of_polysemy.expect("complete row") as f64,
            row.mean_word_length.expect("complete row"),
        ]);
    }
    let x = nalgebra::DMatrix::from_fn(data.len(), 3, |r, c| data[r][c]);
    let names = vec![
        "mean_word_rank".to_string(),
        "degree_of_polysemy".to_string(),
        "mean_word_length".to_string(),
    ];
    stats::ols_fit(&x, &y, &names, standardize)
}

/// Affinities for every in-scope concept meeting coverage, the predictor
/// table, the Table-2-style regression, and POS/domain aggregation.
pub fn concept_analysis(ctx: &PipelineContext) -> Result<ConceptAnalysis> {
    let config = &ctx.config;
    let c = &config.config;
    let lexicon = &ctx.inputs.lexicon;
    let concepts = analysis_concepts(config, lexicon);
    let reduction = c.run.form_reduction;

    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for id in &concepts {
        match affinity::concept_affinity(
            &ctx.space,
            lexicon,
            id.as_str(),
            c.run.min_coverage,
            reduction,
        ) {
            Ok(record) => records.push(record),
            Err(e @ Error::InsufficientCoverage { .. }) => {
                skipped.push((id.clone(), e.to_string()));
            }
            Err(e) => return Err(e.in_stage("affinity")),
        }
    }

    let languages = config.languages();
    let covered: Vec<ConceptId> = records.iter().map(|r| r.concept.clone()).collect();
    let have_predictor_inputs =
        !ctx.inputs.rankings.is_empty() && ctx.inputs.senses.is_some();
    let (predictor_rows, regression) = if have_predictor_inputs {
        let rows = predictors::build_predictor_table(
            lexicon,
            &covered,
            &ctx.inputs.rankings,
            ctx.inputs.senses.as_ref().expect("checked above"),
            &languages,
            PredictorOptions {
                rank_policy: config.rank_policy(),
                length_policy: config.length_policy(),
            },
        )
        .map_err(|e| e.in_stage("predictors"))?;
        let regression = concept_regression(&records, &rows, c.run.standardize)
            .map_err(|e| e.in_stage("regression"))?;
        (rows, Some(regression))
    } else {
        (Vec::new(), None)
    };

    // POS aggregation
    let pos_grouping: IndexMap<ConceptId, String> = records
        .iter()
        .filter_map(|r| {
            lexicon
                .get(r.concept.as_str())
                .map(|concept| (r.concept.clone(), concept.pos.clone()))
        })
        .collect();
    let pos_summaries = affinity::aggregate(&records, &pos_grouping, c.analysis.min_group_size);

    // Domain aggregation: a concept may carry several tags, so aggregate one
    // tag at a time and merge.
    let mut domain_summaries = Vec::new();
    let mut domain_omitted = Vec::new();
    for tag in domain_tags(config, lexicon) {
        let grouping: IndexMap<ConceptId, String> = records
            .iter()
            .filter(|r| {
                lexicon
                    .get(r.concept.as_str())
                    .is_some_and(|concept| concept.domains.contains(&tag))
            })
            .map(|r| (r.concept.clone(), tag.clone()))
            .collect();
        if grouping.is_empty() {
            domain_omitted.push((tag.clone(), 0));
            continue;
        }
        let outcome = affinity::aggregate(&records, &grouping, c.analysis.min_group_size);
        domain_summaries.extend(outcome.summaries);
        domain_omitted.extend(outcome.omitted);
    }
    domain_summaries.sort_by(|a, b| {
        b.mean_sem_aff
            .total_cmp(&a.mean_sem_aff)
            .then_with(|| a.label.cmp(&b.label))
    });
    domain_omitted.sort();

    Ok(ConceptAnalysis {
        records,
        skipped_concepts: skipped,
        predictor_rows,
        regression,
        pos_summaries,
        domain_summaries: AggregateOutcome {
            summaries: domain_summaries,
            omitted: domain_omitted,
        },
    })
}

fn domain_tags(config: &LoadedConfig, lexicon: &ConceptLexicon) -> Vec<String> {
    match &config.config.analysis.domains {
        Some(list) => list.clone(),
        None => lexicon.domain_tags().into_iter().collect(),
    }
}

/// The manifest a run of this config would carry (config + input digests).
pub fn manifest_for(config: &LoadedConfig) -> Result<RunManifest> {
    RunManifest::assemble(config).map_err(|e| e.in_stage("load"))
}

/// Build just the PHY/GEO/CLM matrices for the configured languages.
pub fn factors_only(config: &LoadedConfig, inputs: &LoadedInputs) -> Result<FactorMatrices> {
    let missing = |what: &str| Error::Config {
        path: config.source_path.display().to_string(),
        message: format!("factor matrices need [inputs] {what}"),
    };
    let tree = inputs.tree.as_ref().ok_or_else(|| missing("tree"))?;
    let geo = inputs.geo.as_ref().ok_or_else(|| missing("geo"))?;
    let climate = inputs.climate.as_ref().ok_or_else(|| missing("climate"))?;
    typology::factor_matrices(
        &config.sdist_languages(),
        tree,
        geo,
        climate,
        config.config.run.geo_mode,
    )
    .map_err(|e| e.in_stage("factors"))
}

/// Spec-level entry point: load, align, and run the concept-level analysis.
pub fn run_concept_analysis(config: LoadedConfig) -> Result<ConceptAnalysis> {
    let ctx = prepare(config, None)?;
    concept_analysis(&ctx)
}

// ---------------------------------------------------------------------------
// Language-level analysis
// ---------------------------------------------------------------------------

/// Pairwise correlation between two named distance vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorCorrelation {
    pub first: String,
    pub second: String,
    pub r: f64,
    pub p_value: f64,
}

/// Output of the language-level pipeline: the four matrices, their pairwise
/// correlations, the SDist regression, and partial correlations overall and
/// per domain.
pub struct LanguageAnalysis {
    pub sdist: DistanceMatrix,
    pub factors: FactorMatrices,
    pub correlations: Vec<FactorCorrelation>,
    pub regression: RegressionResult,
    /// Overall and per-domain partial correlations as chart-ready bars.
    pub partial_bars: Vec<PartialCorrBar>,
    /// Domains that could not be tested, with reasons.
    pub skipped_domains: Vec<(String, String)>,
    pub mantel: Option<Vec<(String, MantelResult)>>,
}

fn partial_bar(domain: &str, factor: &str, result: &PartialCorrResult) -> PartialCorrBar {
    PartialCorrBar {
        domain: domain.to_string(),
        factor: factor.to_string(),
        r: result.r,
        p_value: result.p_value,
        significant: result.p_value <= SIGNIFICANCE_ALPHA,
    }
}

/// SDist + PHY/GEO/CLM matrices, pairwise Pearson correlations, OLS of SDist
/// on the three factors, and per-domain partial correlations.
pub fn language_analysis(ctx: &PipelineContext) -> Result<LanguageAnalysis> {
    let config = &ctx.config;
    let c = &config.config;
    let lexicon = &ctx.inputs.lexicon;
    let languages = config.sdist_languages();
    let reduction = c.run.form_reduction;
    let stage = |e: Error| e.in_stage("factors");

    let tree = ctx.inputs.tree.as_ref().ok_or_else(|| {
        Error::Config {
            path: config.source_path.display().to_string(),
            message: "language analysis needs [inputs] tree".into(),
        }
    })?;
    let geo = ctx.inputs.geo.as_ref().ok_or_else(|| Error::Config {
        path: config.source_path.display().to_string(),
        message: "language analysis needs [inputs] geo".into(),
    })?;
    let climate = ctx.inputs.climate.as_ref().ok_or_else(|| Error::Config {
        path: config.source_path.display().to_string(),
        message: "language analysis needs [inputs] climate".into(),
    })?;

    let concepts = analysis_concepts(config, lexicon);
    let sdist = affinity::sdist_matrix(&ctx.space, lexicon, &languages, &concepts, reduction)
        .map_err(|e| e.in_stage("sdist"))?;
    let factors = typology::factor_matrices(&languages, tree, geo, climate, c.run.geo_mode)
        .map_err(stage)?;

    let vec_sdist = stats::vectorize_matrix(&sdist).map_err(stage)?;
    let vec_phy = stats::vectorize_matrix(&factors.phy).map_err(stage)?;
    let vec_geo = stats::vectorize_matrix(&factors.geo).map_err(stage)?;
    let vec_clm = stats::vectorize_matrix(&factors.clm).map_err(stage)?;

    // refuse the whole analysis up front when there are too few language
    // pairs to fit SDist on three factors
    let n_pairs = vec_sdist.values.len();
    if n_pairs <= 4 {
        return Err(Error::TooFewObservations { n: n_pairs, k: 3 }.in_stage("regression"));
    }

    let named: [(&str, &Vec<f64>); 4] = [
        ("SDist", &vec_sdist.values),
        ("PHY", &vec_phy.values),
        ("GEO", &vec_geo.values),
        ("CLM", &vec_clm.values),
    ];
    let mut correlations = Vec::new();
    for i in 0..named.len() {
        for j in (i + 1)..named.len() {
            let (r, p_value) = stats::pearson(named[i].1, named[j].1)
                .map_err(|e| e.in_stage("correlations"))?;
            correlations.push(FactorCorrelation {
                first: named[i].0.to_string(),
                second: named[j].0.to_string(),
                r,
                p_value,
            });
        }
    }

    let mut design = nalgebra::DMatrix::zeros(n_pairs, 3);
    for i in 0..n_pairs {
        design[(i, 0)] = vec_phy.values[i];
        design[(i, 1)] = vec_geo.values[i];
        design[(i, 2)] = vec_clm.values[i];
    }
    let names = vec!["PHY".to_string(), "GEO".to_string(), "CLM".to_string()];
    let regression = stats::ols_fit(&design, &vec_sdist.values, &names, c.run.standardize)
        .map_err(|e| e.in_stage("regression"))?;

    // overall + per-domain partial correlations
    let mut partial_bars = Vec::new();
    let mut skipped_domains = Vec::new();
    let factor_vectors: [(&str, &Vec<f64>); 3] = [
        ("PHY", &vec_phy.values),
        ("GEO", &vec_geo.values),
        ("CLM", &vec_clm.values),
    ];
    let test_domain = |label: &str, values: &[f64]| -> Result<Vec<PartialCorrBar>> {
        let mut bars = Vec::new();
        for (factor, target) in factor_vectors {
            let controls: Vec<(&str, &[f64])> = factor_vectors
                .iter()
                .filter(|(name, _)| name != &factor)
                .map(|(name, v)| (*name, v.as_slice()))
                .collect();
            let result = stats::partial_correlation(values, target, &controls)?;
            bars.push(partial_bar(label, factor, &result));
        }
        Ok(bars)
    };
    partial_bars.extend(
        test_domain("(all)", &vec_sdist.values).map_err(|e| e.in_stage("partial"))?,
    );

    for tag in domain_tags(config, lexicon) {
        let domain_concepts: Vec<ConceptId> = concepts
            .iter()
            .filter(|id| {
                lexicon
                    .get(id.as_str())
                    .is_some_and(|concept| concept.domains.contains(&tag))
            })
            .cloned()
            .collect();
        if domain_concepts.is_empty() {
            skipped_domains.push((tag.clone(), "no concepts in scope".into()));
            continue;
        }
        let domain_sdist = match affinity::sdist_matrix(
            &ctx.space,
            lexicon,
            &languages,
            &domain_concepts,
            reduction,
        ) {
            Ok(m) => m,
            Err(e) => {
                skipped_domains.push((tag.clone(), e.to_string()));
                continue;
            }
        };
        let vec_domain = stats::vectorize_matrix(&domain_sdist).map_err(stage)?;
        match test_domain(&tag, &vec_domain.values) {
            Ok(bars) => partial_bars.extend(bars),
            Err(e) => skipped_domains.push((tag.clone(), e.to_string())),
        }
    }

    let mantel = match c.run.mantel_permutations {
        Some(permutations) if permutations > 0 => {
            let mut results = Vec::new();
            for (name, factor) in [
                ("PHY", &factors.phy),
                ("GEO", &factors.geo),
                ("CLM", &factors.clm),
            ] {
                let result = stats::mantel_test(&sdist, factor, permutations, c.run.seed)
                    .map_err(|e| e.in_stage("mantel"))?;
                results.push((name.to_string(), result));
            }
            Some(results)
        }
        _ => None,
    };

    Ok(LanguageAnalysis {
        sdist,
        factors,
        correlations,
        regression,
        partial_bars,
        skipped_domains,
        mantel,
    })
}

/// Spec-level entry point: load, align, and run the language-level analysis.
pub fn run_language_analysis(config: LoadedConfig) -> Result<LanguageAnalysis> {
    let ctx = prepare(config, None)?;
    language_analysis(&ctx)
}

// ---------------------------------------------------------------------------
// run-all and output writing
// ---------------------------------------------------------------------------

/// Options for a full run.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Record a wall-clock timestamp in the manifest. Off by default so
    /// reruns are byte-identical.
    pub wall_clock: bool,
}

/// Result of `run_all`: the final manifest and where things were written.
pub struct RunSummary {
    pub manifest: RunManifest,
    pub out_dir: PathBuf,
    pub warnings: Vec<String>,
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Write a TSV artifact: a `# manifest <digest>` line, optional comment
/// lines, the header, then rows.
pub fn write_tsv(path: &Path, manifest: &str, header: &str, rows: &[String], comments: &[String]) -> Result<()> {
    let mut out = format!("# manifest {manifest}\n");
    for comment in comments {
        out.push_str(&format!("# {comment}\n"));
    }
    out.push_str(header);
    out.push('\n');
    for row in rows {
        out.push_str(row);
        out.push('\n');
    }
    io::write_atomic(path, out.as_bytes())
}

/// Write a JSON artifact with an injected top-level `manifest` field.
pub fn write_json<T: Serialize>(path: &Path, manifest: &str, payload: &T) -> Result<()> {
    let mut value = serde_json::to_value(payload).expect("payload serializes");
    if let serde_json::Value::Object(map) = &mut value {
        map.insert(
            "manifest".to_string(),
            serde_json::Value::String(manifest.to_string()),
        );
    }
    let text = serde_json::to_string_pretty(&value).expect("value serializes");
    io::write_atomic(path, format!("{text}\n").as_bytes())
}

/// Write a distance matrix as a labeled TSV.
pub fn write_matrix(path: &Path, manifest: &str, matrix: &DistanceMatrix) -> Result<()> {
    let (header, rows) = matrix_rows(matrix);
    write_tsv(path, manifest, &header, &rows, &[])
}

/// Write a regression as `<stem>.tsv` (Table-shaped: coef x10 display
/// column, std err, t, p) plus a `<stem>.json` mirror.
pub fn write_regression(out_dir: &Path, stem: &str, manifest: &str, result: &RegressionResult) -> Result<()> {
    let (header, rows, comments) = regression_rows(result);
    write_tsv(
        &out_dir.join(format!("{stem}.tsv")),
        manifest,
        &header,
        &rows,
        &comments,
    )?;
    write_json(&out_dir.join(format!("{stem}.json")), manifest, result)
}

/// Write the per-language alignment diagnostics TSV.
pub fn write_alignment_quality(path: &Path, manifest: &str, space: &MultilingualSpace) -> Result<()> {
    let header = "language	used_pairs	skipped_oov	residual	mean_train_cosine";
    let rows: Vec<String> = space
        .quality()
        .iter()
        .map(|(l, q)| {
            format!(
                "{l}	{}	{}	{}	{}",
                q.used_pairs, q.skipped_oov, q.residual, q.mean_train_cosine
            )
        })
        .collect();
    write_tsv(path, manifest, header, &rows, &[])
}

/// Write the pairwise factor correlation TSV.
pub fn write_factor_correlations(path: &Path, manifest: &str, correlations: &[FactorCorrelation]) -> Result<()> {
    let header = "first	second	r	p_value";
    let rows: Vec<String> = correlations
        .iter()
        .map(|c| format!("{}	{}	{}	{}", c.first, c.second, c.r, c.p_value))
        .collect();
    write_tsv(path, manifest, header, &rows, &[])
}

/// Write overall and per-domain partial correlations with skip comments.
pub fn write_partial_correlations(
    path: &Path,
    manifest: &str,
    bars: &[PartialCorrBar],
    skipped: &[(String, String)],
) -> Result<()> {
    let header = "domain	factor	r	p_value	significant";
    let rows: Vec<String> = bars
        .iter()
        .map(|b| {
            format!(
                "{}	{}	{}	{}	{}",
                b.domain, b.factor, b.r, b.p_value, b.significant
            )
        })
        .collect();
    let comments: Vec<String> = skipped
        .iter()
        .map(|(domain, reason)| format!("skipped {domain}: {reason}"))
        .collect();
    write_tsv(path, manifest, header, &rows, &comments)
}

fn matrix_rows(matrix: &DistanceMatrix) -> (String, Vec<String>) {
    let mut header = String::from("language");
    for l in &matrix.languages {
        header.push('\t');
        header.push_str(l.as_str());
    }
    let rows = matrix
        .languages
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let mut row = l.to_string();
            for j in 0..matrix.len() {
                row.push('\t');
                row.push_str(&format!("{}", matrix.get(i, j)));
            }
            row
        })
        .collect();
    (header, rows)
}

fn regression_rows(result: &RegressionResult) -> (String, Vec<String>, Vec<String>) {
    let header = "predictor\tcoef_x10\tcoef\tstd_err\tt_stat\tp_value".to_string();
    let fmt = crate::math::fmt_float;
    let rows = result
        .names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            format!(
                "{name}\t{}\t{}\t{}\t{}\t{}",
                fmt(result.coefficients[i] * 10.0),
                fmt(result.coefficients[i]),
                fmt(result.std_errors[i]),
                fmt(result.t_stats[i]),
                fmt(result.p_values[i])
            )
        })
        .collect();
    let comments = vec![
        format!("n {}", result.n),
        format!("dof {}", result.dof()),
        format!("r_squared {}", result.r_squared),
        format!("adj_r_squared {}", result.adj_r_squared),
        format!("standardized {}", result.standardized),
    ];
    (header, rows, comments)
}

/// Serializable mirror of an affinity record for the JSON report.
#[derive(Serialize)]
struct AffinityJsonRow<'a> {
    concept_id: &'a str,
    gloss: &'a str,
    pos: &'a str,
    domains: Vec<&'a str>,
    coverage: usize,
    sem_aff: f64,
    negative: bool,
    per_language: Vec<(&'a Language, f64)>,
    skipped: Vec<(&'a Language, String)>,
}

#[derive(Serialize)]
struct AffinityJson<'a> {
    records: Vec<AffinityJsonRow<'a>>,
    skipped_concepts: Vec<(&'a ConceptId, &'a str)>,
}

/// Write `affinity.tsv` and its JSON mirror (per-language cosines and skip
/// reasons) into `out_dir`.
pub fn write_affinity_outputs(
    out_dir: &Path,
    manifest: &str,
    lexicon: &ConceptLexicon,
    analysis: &ConceptAnalysis,
) -> Result<()> {
    let header = "concept_id\tgloss\tpos\tdomains\tcoverage\tsem_aff";
    let mut rows = Vec::new();
    let mut json_rows = Vec::new();
    for record in &analysis.records {
        let concept = lexicon
            .get(record.concept.as_str())
            .expect("record concepts come from the lexicon");
        let domains: Vec<&str> = concept.domains.iter().map(String::as_str).collect();
        rows.push(format!(
            "{}\t{}\t{}\t{}\t{}\t{}",
            concept.id,
            concept.gloss,
            concept.pos,
            domains.join(","),
            record.coverage,
            record.sem_aff
        ));
        json_rows.push(AffinityJsonRow {
            concept_id: concept.id.as_str(),
            gloss: &concept.gloss,
            pos: &concept.pos,
            domains,
            coverage: record.coverage,
            sem_aff: record.sem_aff,
            negative: record.sem_aff < 0.0,
            per_language: record
                .per_language
                .iter()
                .map(|(l, c)| (l, *c))
                .collect(),
            skipped: record
                .skipped
                .iter()
                .map(|(l, reason)| (l, reason.to_string()))
                .collect(),
        });
    }
    let comments: Vec<String> = analysis
        .skipped_concepts
        .iter()
        .map(|(id, reason)| format!("skipped {id}: {reason}"))
        .collect();
    write_tsv(
        &out_dir.join("affinity.tsv"),
        manifest,
        header,
        &rows,
        &comments,
    )?;
    write_json(
        &out_dir.join("affinity.json"),
        manifest,
        &AffinityJson {
            records: json_rows,
            skipped_concepts: analysis
                .skipped_concepts
                .iter()
                .map(|(id, reason)| (id, reason.as_str()))
                .collect(),
        },
    )
}

/// Write `predictors.tsv` into `out_dir`.
pub fn write_predictor_outputs(out_dir: &Path, manifest: &str, rows: &[PredictorRow]) -> Result<()> {
    let header = "concept_id\tmean_word_rank\tdegree_of_polysemy\tmean_word_length\tflags";
    let fmt_opt = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x}"));
    let body: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{}\t{}\t{}\t{}\t{}",
                r.concept,
                fmt_opt(r.mean_word_rank),
                r.degree_of_polysemy
                    .map_or("NA".to_string(), |v| v.to_string()),
                fmt_opt(r.mean_word_length),
                if r.partial { "partial" } else { "ok" }
            )
        })
        .collect();
    write_tsv(
        &out_dir.join("predictors.tsv"),
        manifest,
        header,
        &body,
        &[],
    )
}

/// Write a POS- or domain-aggregation TSV.
pub fn write_aggregate(
    path: &Path,
    manifest: &str,
    outcome: &AggregateOutcome,
) -> Result<()> {
    let header = "group\tcount\tsem_aff_mean\tsem_aff_sd";
    let rows: Vec<String> = outcome
        .summaries
        .iter()
        .map(|s| {
            format!(
                "{}\t{}\t{}\t{}",
                s.label, s.concept_count, s.mean_sem_aff, s.sd_sem_aff
            )
        })
        .collect();
    let comments: Vec<String> = outcome
        .omitted
        .iter()
        .map(|(label, n)| format!("omitted {label} ({n} below minimum group size)"))
        .collect();
    write_tsv(path, manifest, header, &rows, &comments)
}

/// Execute every stage and write the full run directory. Returns the final
/// manifest (it is also written as `manifest.json` at the run root).
pub fn run_all(ctx: &PipelineContext, out_dir: &Path, options: &RunOptions) -> Result<RunSummary> {
    ensure_dir(out_dir)?;
    let figures = out_dir.join("figures");
    ensure_dir(&figures)?;
    let digest = ctx.manifest.manifest_digest.clone();

    // space artifacts
    cache_space(&ctx.space, &out_dir.join("space.cache.json"))?;
    write_alignment_quality(&out_dir.join("alignment_quality.tsv"), &digest, &ctx.space)?;

    // concept level
    let concept = concept_analysis(ctx)?;
    write_affinity_outputs(out_dir, &digest, &ctx.inputs.lexicon, &concept)?;
    write_predictor_outputs(out_dir, &digest, &concept.predictor_rows)?;
    if let Some(regression) = &concept.regression {
        write_regression(out_dir, "concept_regression", &digest, regression)?;
    }
    write_aggregate(&out_dir.join("pos_summary.tsv"), &digest, &concept.pos_summaries)?;
    write_aggregate(
        &out_dir.join("domain_summary.tsv"),
        &digest,
        &concept.domain_summaries,
    )?;

    // figures from concept-level data
    let domain_chart = crate::report::domain_bars(
        "Semantic affinity by domain",
        &concept.domain_summaries.summaries,
        &digest,
    );
    io::write_atomic(&figures.join("domain_bars.svg"), domain_chart.svg.as_bytes())?;
    io::write_atomic(&figures.join("domain_bars.tsv"), domain_chart.tsv.as_bytes())?;

    if !ctx.config.config.report.kinship_order.is_empty() {
        let ordering: Vec<ConceptId> = ctx
            .config
            .config
            .report
            .kinship_order
            .iter()
            .map(ConceptId::new)
            .collect();
        let (chart, _) =
            crate::report::kinship_profile(&concept.records, &ordering, &digest)
                .map_err(|e| e.in_stage("report"))?;
        io::write_atomic(&figures.join("kinship.svg"), chart.svg.as_bytes())?;
        io::write_atomic(&figures.join("kinship.tsv"), chart.tsv.as_bytes())?;
    }

    if !ctx.config.config.report.scatter_concepts.is_empty() {
        let mut labeled: Vec<(String, Vec<f64>)> = Vec::new();
        for id in &ctx.config.config.report.scatter_concepts {
            let (vectors, _) = affinity::resolve_concept_vectors(
                &ctx.space,
                &ctx.inputs.lexicon,
                id,
                ctx.config.config.run.form_reduction,
            )
            .map_err(|e| e.in_stage("report"))?;
            for (language, v) in vectors.members {
                labeled.push((format!("{id}:{language}"), v));
            }
        }
        let projection =
            crate::report::project_2d(&labeled.iter().map(|(_, v)| v.clone()).collect::<Vec<_>>())
                .map_err(|e| e.in_stage("report"))?;
        let points: Vec<(String, f64, f64)> = labeled
            .iter()
            .zip(&projection.points)
            .map(|((label, _), &(x, y))| (label.clone(), x, y))
            .collect();
        let chart = crate::report::scatter_2d("Concept projection", &points, &digest);
        io::write_atomic(&figures.join("scatter.svg"), chart.svg.as_bytes())?;
        io::write_atomic(&figures.join("scatter.tsv"), chart.tsv.as_bytes())?;
    }

    // language level (only when the factor inputs are configured)
    let mut language_counts: BTreeMap<String, usize> = BTreeMap::new();
    let have_factors = ctx.inputs.tree.is_some()
        && ctx.inputs.geo.is_some()
        && ctx.inputs.climate.is_some()
        && ctx.config.sdist_languages().len() >= 2;
    if have_factors {
        let language = language_analysis(ctx)?;
        for (name, matrix) in [
            ("sdist", &language.sdist),
            ("phy", &language.factors.phy),
            ("geo", &language.factors.geo),
            ("clm", &language.factors.clm),
        ] {
            write_matrix(&out_dir.join(format!("{name}.tsv")), &digest, matrix)?;
        }
        write_factor_correlations(
            &out_dir.join("factor_correlations.tsv"),
            &digest,
            &language.correlations,
        )?;
        write_regression(out_dir, "sdist_regression", &digest, &language.regression)?;
        write_partial_correlations(
            &out_dir.join("partial_correlations.tsv"),
            &digest,
            &language.partial_bars,
            &language.skipped_domains,
        )?;
        if let Some(mantel) = &language.mantel {
            let header = "factor\tr\tp_value\tpermutations";
            let rows: Vec<String> = mantel
                .iter()
                .map(|(name, m)| format!("{name}\t{}\t{}\t{}", m.r, m.p_value, m.permutations))
                .collect();
            write_tsv(&out_dir.join("mantel.tsv"), &digest, header, &rows, &[])?;
        }

        let chart = crate::report::partial_corr_bars(&language.partial_bars, &digest);
        io::write_atomic(&figures.join("partial_corr.svg"), chart.svg.as_bytes())?;
        io::write_atomic(&figures.join("partial_corr.tsv"), chart.tsv.as_bytes())?;

        language_counts.insert("sdist_pairs".into(), language.sdist.len() * (language.sdist.len() - 1) / 2);
        language_counts.insert("partial_bars".into(), language.partial_bars.len());
    }

    // manifest last, with final stage counts
    let mut manifest = ctx.manifest.clone();
    manifest.timestamp = options.wall_clock.then(|| {
        let now = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        format!("{now}")
    });
    manifest.stage_counts.insert(
        "languages".into(),
        ctx.space.languages().count(),
    );
    manifest
        .stage_counts
        .insert("affinity_records".into(), concept.records.len());
    manifest
        .stage_counts
        .insert("skipped_concepts".into(), concept.skipped_concepts.len());
    manifest
        .stage_counts
        .insert("predictor_rows".into(), concept.predictor_rows.len());
    for (key, value) in language_counts {
        manifest.stage_counts.insert(key, value);
    }
    let manifest_json =
        serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    io::write_atomic(&out_dir.join("manifest.json"), format!("{manifest_json}\n").as_bytes())?;

    Ok(RunSummary {
        manifest,
        out_dir: out_dir.to_path_buf(),
        warnings: ctx.warnings.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{rotation_world, RotationWorldSpec};
    use rand::Rng;
    use rand::SeedableRng;

    #[test]
    fn cache_round_trip_preserves_affinities_exactly() {
        let world = rotation_world(&RotationWorldSpec {
            languages: 4,
            dim: 10,
            seed: 71,
            ..Default::default()
        });
        let mut config = AlignmentConfig::new(world.pivot.clone());
        config.exclusion = ExclusionSet::from_lexicon(&world.lexicon);
        config.provenance = "test-digest".into();
        let space =
            align::build_multilingual_space(&config, &world.tables, &world.dictionaries).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("space.cache.json");
        cache_space(&space, &path).unwrap();
        let loaded = load_cached_space(&path).unwrap();
        assert!(loaded.warnings.is_empty());
        assert_eq!(loaded.space.provenance(), "test-digest");

        for id in world.lexicon.ids() {
            let a = affinity::concept_affinity(
                &space,
                &world.lexicon,
                id.as_str(),
                2,
                FormReduction::Average,
            )
            .unwrap();
            let b = affinity::concept_affinity(
                &loaded.space,
                &world.lexicon,
                id.as_str(),
                2,
                FormReduction::Average,
            )
            .unwrap();
            assert!((a.sem_aff - b.sem_aff).abs() <= 1e-12);
        }
    }

    #[test]
    fn tampered_cache_is_rejected() {
        let world = rotation_world(&RotationWorldSpec {
            languages: 2,
            dim: 6,
            seed: 72,
            ..Default::default()
        });
        let mut config = AlignmentConfig::new(world.pivot.clone());
        config.exclusion = ExclusionSet::from_lexicon(&world.lexicon);
        let space =
            align::build_multilingual_space(&config, &world.tables, &world.dictionaries).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("space.cache.json");
        cache_space(&space, &path).unwrap();

        let mut contents = std::fs::read_to_string(&path).unwrap();
        // flip one byte inside the body
        let idx = contents.len() - 10;
        let original = contents.as_bytes()[idx];
        let replacement = if original == b'1' { '2' } else { '1' };
        contents.replace_range(idx..idx + 1, &replacement.to_string());
        std::fs::write(&path, contents).unwrap();

        assert!(matches!(
            load_cached_space(&path).unwrap_err(),
            Error::StaleCache { .. }
        ));
    }

    #[test]
    fn version_skew_warns_but_loads() {
        let world = rotation_world(&RotationWorldSpec {
            languages: 2,
            dim: 6,
            seed: 73,
            ..Default::default()
        });
        let mut config = AlignmentConfig::new(world.pivot.clone());
        config.exclusion = ExclusionSet::from_lexicon(&world.lexicon);
        let space =
            align::build_multilingual_space(&config, &world.tables, &world.dictionaries).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("space.cache.json");
        cache_space(&space, &path).unwrap();

        // rewrite the body with a bogus version and a fresh digest
        let contents = std::fs::read_to_string(&path).unwrap();
        let (_, body) = contents.split_once('\n').unwrap();
        let patched = body.replace(
            &format!("\"toolkit_version\":\"{TOOLKIT_VERSION}\""),
            "\"toolkit_version\":\"0.0.0-old\"",
        );
        assert_ne!(body, patched, "version field must be present");
        let digest = digest_bytes(patched.as_bytes());
        std::fs::write(&path, format!("{CACHE_HEADER} {digest}\n{patched}")).unwrap();

        let loaded = load_cached_space(&path).unwrap();
        assert_eq!(loaded.warnings.len(), 1);
        assert!(loaded.warnings[0].contains("0.0.0-old"));
    }

    #[test]
    fn concept_regression_recovers_planted_linear_law() {
        // records and rows built directly with sem_aff = a - b * rank
        let (a, b) = (0.9, 0.002);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(74);
        let mut records = Vec::new();
        let mut rows = Vec::new();
        for i in 0..40 {
            let rank = 10.0 + i as f64 * 7.0;
            let concept = ConceptId::new(format!("C{i:02}"));
            records.push(AffinityRecord {
                concept: concept.clone(),
                sem_aff: a - b * rank,
                coverage: 5,
                per_language: vec![],
                skipped: vec![],
            });
            rows.push(PredictorRow {
                concept,
                mean_word_rank: Some(rank),
                degree_of_polysemy: Some(rng.gen_range(1..20)),
                mean_word_length: Some(rng.gen_range(3.0..12.0)),
                rank_languages: 5,
                sense_languages: 5,
                length_languages: 5,
                partial: false,
            });
        }
        let fit = concept_regression(&records, &rows, false).unwrap();
        assert!((fit.coefficient("intercept").unwrap() - a).abs() < 1e-6);
        assert!((fit.coefficient("mean_word_rank").unwrap() + b).abs() < 1e-6);
        assert!(fit.coefficient("degree_of_polysemy").unwrap().abs() < 1e-6);
        assert!(fit.coefficient("mean_word_length").unwrap().abs() < 1e-6);
        assert!((fit.r_squared - 1.0).abs() < 1e-8);
    }

    #[test]
    fn output_rows_are_reproducible_from_module_operations() {
        let dataset = crate::synth::toy_dataset(&crate::synth::DatasetSpec::default());
        let data_dir = tempfile::tempdir().unwrap();
        let config_path = dataset.write_to_dir(data_dir.path()).unwrap();
        let out_dir = tempfile::tempdir().unwrap();

        let config = LoadedConfig::load(&config_path).unwrap();
        let ctx = prepare(config, None).unwrap();
        run_all(&ctx, out_dir.path(), &RunOptions::default()).unwrap();

        // every affinity row parses back to exactly what concept_affinity
        // computes on the same inputs
        let text = std::fs::read_to_string(out_dir.path().join("affinity.tsv")).unwrap();
        let mut checked = 0;
        for line in text.lines() {
            if line.starts_with('#') || line.starts_with("concept_id") {
                continue;
            }
            let cells: Vec<&str> = line.split('\t').collect();
            let (concept, coverage, sem_aff) = (
                cells[0],
                cells[4].parse::<usize>().unwrap(),
                cells[5].parse::<f64>().unwrap(),
            );
            let record = affinity::concept_affinity(
                &ctx.space,
                &ctx.inputs.lexicon,
                concept,
                ctx.config.config.run.min_coverage,
                ctx.config.config.run.form_reduction,
            )
            .unwrap();
            assert_eq!(record.coverage, coverage);
            assert_eq!(record.sem_aff.to_bits(), sem_aff.to_bits(), "{concept}");
            checked += 1;
        }
        assert_eq!(checked, 30);
    }

    #[test]
    fn partial_rows_are_excluded_from_regression() {
        let mut records = Vec::new();
        let mut rows = Vec::new();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(75);
        for i in 0..20 {
            let concept = ConceptId::new(format!("C{i:02}"));
            let rank = 5.0 + i as f64;
            records.push(AffinityRecord {
                concept: concept.clone(),
                sem_aff: 0.8 - 0.01 * rank,
                coverage: 3,
                per_language: vec![],
                skipped: vec![],
            });
            rows.push(PredictorRow {
                concept,
                mean_word_rank: Some(rank),
                degree_of_polysemy: if i < 15 { Some(rng.gen_range(1..9)) } else { None },
                mean_word_length: Some(rng.gen_range(3.0..9.0)),
                rank_languages: 3,
                sense_languages: if i < 15 { 3 } else { 0 },
                length_languages: 3,
                partial: i >= 15,
            });
        }
        let fit = concept_regression(&records, &rows, false).unwrap();
        assert_eq!(fit.n, 15);
    }
}
