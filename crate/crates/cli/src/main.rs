//! `semaff`: build multilingual semantic spaces, quantify cross-linguistic
//! semantic affinity, and run the concept- and language-level analyses.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use semaff_core::affinity;
use semaff_core::align::MapMode;
use semaff_core::pipeline::{self, LoadedConfig, PipelineContext, RunOptions};
use semaff_core::report::{self, ReportKind};
use semaff_core::types::ConceptId;
use semaff_core::Error;

#[derive(Parser)]
#[command(name = "semaff", version, about = "Cross-linguistic semantic affinity toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliMode {
    /// Unconstrained least squares
    Ls,
    /// Orthogonal Procrustes (default)
    Procrustes,
}

#[derive(Clone, Copy, ValueEnum)]
enum OnOff {
    On,
    Off,
}

impl OnOff {
    fn as_bool(self) -> bool {
        matches!(self, OnOff::On)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CliReportKind {
    AffinityTable,
    DomainBars,
    KinshipProfile,
    PartialCorrBars,
    #[value(name = "scatter-2d")]
    Scatter2d,
}

impl From<CliReportKind> for ReportKind {
    fn from(kind: CliReportKind) -> ReportKind {
        match kind {
            CliReportKind::AffinityTable => ReportKind::AffinityTable,
            CliReportKind::DomainBars => ReportKind::DomainBars,
            CliReportKind::KinshipProfile => ReportKind::KinshipProfile,
            CliReportKind::PartialCorrBars => ReportKind::PartialCorrBars,
            CliReportKind::Scatter2d => ReportKind::Scatter2d,
        }
    }
}

/// Flags shared by every analysis subcommand; they override config values.
#[derive(clap::Args)]
struct CommonArgs {
    /// Run configuration (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Alignment mode override
    #[arg(long, value_enum)]
    mode: Option<CliMode>,
    /// Minimum language coverage per concept
    #[arg(long)]
    min_coverage: Option<usize>,
    /// Z-score regression predictors
    #[arg(long, value_enum)]
    standardize: Option<OnOff>,
    /// Seed for permutation tests
    #[arg(long)]
    seed: Option<u64>,
    /// Skip languages without a ranked form (on) or assign list length + 1 (off)
    #[arg(long, value_enum)]
    strict_ranks: Option<OnOff>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit per-language maps and cache the multilingual space
    BuildSpace(CommonArgs),
    /// Per-concept semantic affinity (TSV + JSON)
    Affinity(CommonArgs),
    /// POS and domain aggregation tables
    Aggregate(CommonArgs),
    /// Pairwise language semantic-distance matrix
    Sdist(CommonArgs),
    /// Phylogenetic, geographic, and climate distance matrices
    Factors(CommonArgs),
    /// Concept- and language-level regressions
    Regress(CommonArgs),
    /// Partial correlations of SDist with each factor, overall and per domain
    Pcorr(CommonArgs),
    /// Emit a figure (SVG + TSV) or data table
    Report {
        #[command(flatten)]
        common: CommonArgs,
        /// What to render
        #[arg(long, value_enum)]
        kind: CliReportKind,
    },
    /// Run every stage and write a full run directory
    RunAll {
        #[command(flatten)]
        common: CommonArgs,
        /// Record a wall-clock timestamp in the manifest (breaks
        /// byte-identical reruns)
        #[arg(long)]
        wall_clock: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            let mut chain = Vec::new();
            let mut source: Option<&dyn std::error::Error> = std::error::Error::source(&error);
            while let Some(cause) = source {
                chain.push(cause.to_string());
                source = cause.source();
            }
            let payload = serde_json::json!({
                "error": error.to_string(),
                "chain": chain,
            });
            eprintln!("{payload}");
            ExitCode::from(1)
        }
    }
}

fn load_config(common: &CommonArgs) -> Result<LoadedConfig, Error> {
    let mut loaded = LoadedConfig::load(&common.config)?;
    if let Some(mode) = common.mode {
        loaded.config.run.mode = match mode {
            CliMode::Ls => MapMode::LeastSquares,
            CliMode::Procrustes => MapMode::Orthogonal,
        };
    }
    if let Some(min_coverage) = common.min_coverage {
        loaded.config.run.min_coverage = min_coverage;
    }
    if let Some(standardize) = common.standardize {
        loaded.config.run.standardize = standardize.as_bool();
    }
    if let Some(seed) = common.seed {
        loaded.config.run.seed = seed;
    }
    if let Some(strict) = common.strict_ranks {
        loaded.config.run.strict_ranks = strict.as_bool();
    }
    loaded.refresh_digest();
    Ok(loaded)
}

fn prepare(common: &CommonArgs, with_cache: bool) -> Result<PipelineContext, Error> {
    let loaded = load_config(common)?;
    std::fs::create_dir_all(&common.out)
        .map_err(|e| Error::Io { path: common.out.display().to_string(), source: e })?;
    let cache = common.out.join("space.cache.json");
    let ctx = pipeline::prepare(loaded, with_cache.then_some(cache.as_path()))?;
    for warning in &ctx.warnings {
        eprintln!("warning: {warning}");
    }
    Ok(ctx)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::BuildSpace(common) => {
            let ctx = prepare(&common, true)?;
            let cache = common.out.join("space.cache.json");
            if !ctx.space_from_cache {
                pipeline::cache_space(&ctx.space, &cache)?;
            }
            pipeline::write_alignment_quality(
                &common.out.join("alignment_quality.tsv"),
                &ctx.manifest.manifest_digest,
                &ctx.space,
            )?;
            // per-language maps in the row-major text format
            let maps_dir = common.out.join("maps");
            std::fs::create_dir_all(&maps_dir)
                .map_err(|e| Error::Io { path: maps_dir.display().to_string(), source: e })?;
            for language in ctx.space.languages() {
                let map = ctx.space.map(language.as_str()).expect("map exists");
                let path = maps_dir.join(format!("{language}.txt"));
                std::fs::write(&path, map.matrix_text())
                    .map_err(|e| Error::Io { path: path.display().to_string(), source: e })?;
            }
            println!(
                "space: {} languages, dim {}, pivot {} -> {}",
                ctx.space.languages().count(),
                ctx.space.dim(),
                ctx.space.pivot(),
                cache.display()
            );
            Ok(())
        }
        Command::Affinity(common) => {
            let ctx = prepare(&common, true)?;
            let analysis = pipeline::concept_analysis(&ctx)?;
            pipeline::write_affinity_outputs(
                &common.out,
                &ctx.manifest.manifest_digest,
                &ctx.inputs.lexicon,
                &analysis,
            )?;
            println!(
                "affinity: {} records, {} skipped -> {}",
                analysis.records.len(),
                analysis.skipped_concepts.len(),
                common.out.join("affinity.tsv").display()
            );
            Ok(())
        }
        Command::Aggregate(common) => {
            let ctx = prepare(&common, true)?;
            let analysis = pipeline::concept_analysis(&ctx)?;
            let digest = &ctx.manifest.manifest_digest;
            pipeline::write_aggregate(
                &common.out.join("pos_summary.tsv"),
                digest,
                &analysis.pos_summaries,
            )?;
            pipeline::write_aggregate(
                &common.out.join("domain_summary.tsv"),
                digest,
                &analysis.domain_summaries,
            )?;
            println!(
                "aggregate: {} POS groups, {} domain groups -> {}",
                analysis.pos_summaries.summaries.len(),
                analysis.domain_summaries.summaries.len(),
                common.out.display()
            );
            Ok(())
        }
        Command::Sdist(common) => {
            let ctx = prepare(&common, true)?;
            let languages = ctx.config.sdist_languages();
            let concepts: Vec<ConceptId> = match &ctx.config.config.analysis.concepts {
                Some(list) => list.iter().map(ConceptId::new).collect(),
                None => ctx.inputs.lexicon.ids().cloned().collect(),
            };
            let matrix = affinity::sdist_matrix(
                &ctx.space,
                &ctx.inputs.lexicon,
                &languages,
                &concepts,
                ctx.config.config.run.form_reduction,
            )?;
            pipeline::write_matrix(
                &common.out.join("sdist.tsv"),
                &ctx.manifest.manifest_digest,
                &matrix,
            )?;
            println!(
                "sdist: {} languages over {} concepts -> {}",
                languages.len(),
                concepts.len(),
                common.out.join("sdist.tsv").display()
            );
            Ok(())
        }
        Command::Factors(common) => {
            let loaded = load_config(&common)?;
            std::fs::create_dir_all(&common.out)
                .map_err(|e| Error::Io { path: common.out.display().to_string(), source: e })?;
            let manifest = pipeline::manifest_for(&loaded)?;
            let inputs = pipeline::load_inputs(&loaded)?;
            let factors = pipeline::factors_only(&loaded, &inputs)?;
            for (name, matrix) in [
                ("phy", &factors.phy),
                ("geo", &factors.geo),
                ("clm", &factors.clm),
            ] {
                pipeline::write_matrix(
                    &common.out.join(format!("{name}.tsv")),
                    &manifest.manifest_digest,
                    matrix,
                )?;
            }
            println!(
                "factors: PHY/GEO/CLM over {} languages -> {}",
                factors.phy.len(),
                common.out.display()
            );
            Ok(())
        }
        Command::Regress(common) => {
            let ctx = prepare(&common, true)?;
            let digest = ctx.manifest.manifest_digest.clone();
            let mut wrote = 0usize;
            let concept = pipeline::concept_analysis(&ctx)?;
            if let Some(regression) = &concept.regression {
                pipeline::write_regression(&common.out, "concept_regression", &digest, regression)?;
                println!(
                    "concept regression: n={}, adj R^2 = {:.4}",
                    regression.n, regression.adj_r_squared
                );
                wrote += 1;
            }
            if ctx.inputs.tree.is_some()
                && ctx.inputs.geo.is_some()
                && ctx.inputs.climate.is_some()
            {
                let language = pipeline::language_analysis(&ctx)?;
                pipeline::write_regression(
                    &common.out,
                    "sdist_regression",
                    &digest,
                    &language.regression,
                )?;
                println!(
                    "sdist regression: n={}, adj R^2 = {:.4}",
                    language.regression.n, language.regression.adj_r_squared
                );
                wrote += 1;
            }
            if wrote == 0 {
                return Err(Error::Config {
                    path: common.config.display().to_string(),
                    message:
                        "regress needs senses+rankings (concept level) or tree+geo+climate (language level)"
                            .into(),
                });
            }
            Ok(())
        }
        Command::Pcorr(common) => {
            let ctx = prepare(&common, true)?;
            let language = pipeline::language_analysis(&ctx)?;
            pipeline::write_partial_correlations(
                &common.out.join("partial_correlations.tsv"),
                &ctx.manifest.manifest_digest,
                &language.partial_bars,
                &language.skipped_domains,
            )?;
            println!(
                "pcorr: {} bars, {} domains skipped -> {}",
                language.partial_bars.len(),
                language.skipped_domains.len(),
                common.out.join("partial_correlations.tsv").display()
            );
            Ok(())
        }
        Command::Report { common, kind } => {
            let kind: ReportKind = kind.into();
            let ctx = prepare(&common, true)?;
            let digest = ctx.manifest.manifest_digest.clone();
            match kind {
                ReportKind::AffinityTable => {
                    let analysis = pipeline::concept_analysis(&ctx)?;
                    pipeline::write_affinity_outputs(
                        &common.out,
                        &digest,
                        &ctx.inputs.lexicon,
                        &analysis,
                    )?;
                    println!("report: affinity table -> {}", common.out.display());
                }
                ReportKind::DomainBars => {
                    let analysis = pipeline::concept_analysis(&ctx)?;
                    let chart = report::domain_bars(
                        "Semantic affinity by domain",
                        &analysis.domain_summaries.summaries,
                        &digest,
                    );
                    write_chart(&common.out, "domain_bars", &chart)?;
                }
                ReportKind::KinshipProfile => {
                    let analysis = pipeline::concept_analysis(&ctx)?;
                    let ordering: Vec<ConceptId> = ctx
                        .config
                        .config
                        .report
                        .kinship_order
                        .iter()
                        .map(ConceptId::new)
                        .collect();
                    let (chart, _) =
                        report::kinship_profile(&analysis.records, &ordering, &digest)?;
                    write_chart(&common.out, "kinship", &chart)?;
                }
                ReportKind::PartialCorrBars => {
                    let language = pipeline::language_analysis(&ctx)?;
                    let chart = report::partial_corr_bars(&language.partial_bars, &digest);
                    write_chart(&common.out, "partial_corr", &chart)?;
                }
                ReportKind::Scatter2d => {
                    let mut labeled: Vec<(String, Vec<f64>)> = Vec::new();
                    for id in &ctx.config.config.report.scatter_concepts {
                        let (vectors, _) = affinity::resolve_concept_vectors(
                            &ctx.space,
                            &ctx.inputs.lexicon,
                            id,
                            ctx.config.config.run.form_reduction,
                        )?;
                        for (language, v) in vectors.members {
                            labeled.push((format!("{id}:{language}"), v));
                        }
                    }
                    let vectors: Vec<Vec<f64>> =
                        labeled.iter().map(|(_, v)| v.clone()).collect();
                    let projection = report::project_2d(&vectors)?;
                    let points: Vec<(String, f64, f64)> = labeled
                        .iter()
                        .zip(&projection.points)
                        .map(|((label, _), &(x, y))| (label.clone(), x, y))
                        .collect();
                    let chart = report::scatter_2d("Concept projection", &points, &digest);
                    write_chart(&common.out, "scatter", &chart)?;
                }
            }
            Ok(())
        }
        Command::RunAll { common, wall_clock } => {
            let ctx = prepare(&common, true)?;
            let summary = pipeline::run_all(&ctx, &common.out, &RunOptions { wall_clock })?;
            println!(
                "run-all: manifest {} -> {}",
                summary.manifest.manifest_digest,
                summary.out_dir.display()
            );
            Ok(())
        }
    }
}

fn write_chart(out: &std::path::Path, stem: &str, chart: &report::ChartArtifact) -> Result<(), Error> {
    std::fs::create_dir_all(out)
        .map_err(|e| Error::Io { path: out.display().to_string(), source: e })?;
    let svg_path = out.join(format!("{stem}.svg"));
    let tsv_path = out.join(format!("{stem}.tsv"));
    std::fs::write(&svg_path, &chart.svg)
        .map_err(|e| Error::Io { path: svg_path.display().to_string(), source: e })?;
    std::fs::write(&tsv_path, &chart.tsv)
        .map_err(|e| Error::Io { path: tsv_path.display().to_string(), source: e })?;
    println!("report: {} + {}", svg_path.display(), tsv_path.display());
    Ok(())
}
