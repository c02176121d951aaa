//! Deterministic 2D projection and static SVG/TSV report emission.
//!
//! Figures are plain vector SVG assembled by hand so outputs are diffable
//! and byte-reproducible. Every chart is emitted together with a TSV holding
//! exactly the numbers drawn.

use serde::{Deserialize, Serialize};

use crate::affinity::{AffinityRecord, DomainSummary};
use crate::error::Error;
use crate::math;
use crate::types::ConceptId;
use crate::Result;

/// Report kinds the CLI can emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportKind {
    AffinityTable,
    DomainBars,
    KinshipProfile,
    PartialCorrBars,
    Scatter2d,
}

impl ReportKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ReportKind::AffinityTable => "affinity-table",
            ReportKind::DomainBars => "domain-bars",
            ReportKind::KinshipProfile => "kinship-profile",
            ReportKind::PartialCorrBars => "partial-corr-bars",
            ReportKind::Scatter2d => "scatter-2d",
        }
    }

    /// Chart kinds render to SVG; the affinity table is data-only.
    pub fn supports_svg(&self) -> bool {
        !matches!(self, ReportKind::AffinityTable)
    }
}

/// Output format of a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ReportFormat {
    Tsv,
    Json,
    Svg,
}

/// Check kind/format compatibility (SVG only exists for chart kinds).
pub fn validate_report_spec(kind: ReportKind, format: ReportFormat) -> Result<()> {
    if format == ReportFormat::Svg && !kind.supports_svg() {
        return Err(Error::IncompatibleReportFormat {
            kind: kind.as_str().to_string(),
            format: "SVG".to_string(),
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// 2D projection
// ---------------------------------------------------------------------------

/// PCA projection onto the top two principal components.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub points: Vec<(f64, f64)>,
    /// True when all inputs coincide and no direction is defined; points are
    /// all (0, 0) in that case.
    pub degenerate: bool,
}

/// Project vectors onto the top two principal components of the centered
/// set. The sign of each component is fixed by making its largest-magnitude
/// loading positive, so the projection is deterministic.
pub fn project_2d(vectors: &[Vec<f64>]) -> Result<Projection> {
    let n = vectors.len();
    if n < 2 {
        return Err(Error::TooFewVectors { found: n });
    }
    let dim = vectors[0].len();
    assert!(
        vectors.iter().all(|v| v.len() == dim),
        "vectors must share dimension"
    );

    let mean = math::mean_vector(vectors.iter().map(Vec::as_slice), dim);
    let mut centered = nalgebra::DMatrix::zeros(n, dim);
    for (i, v) in vectors.iter().enumerate() {
        for j in 0..dim {
            centered[(i, j)] = v[j] - mean[j];
        }
    }
    if crate::align::frobenius_norm(&centered) < 1e-12 {
        return Ok(Projection {
            points: vec![(0.0, 0.0); n],
            degenerate: true,
        });
    }

    let svd = centered.clone().svd(true, true);
    let v_t = svd.v_t.expect("svd computed with v_t");
    // order directions by singular value, largest first
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .total_cmp(&svd.singular_values[a])
            .then(a.cmp(&b))
    });

    let mut directions: Vec<Vec<f64>> = Vec::with_capacity(2);
    for &idx in order.iter().take(2) {
        let mut direction: Vec<f64> = (0..dim).map(|j| v_t[(idx, j)]).collect();
        // fix sign: largest-magnitude loading positive
        let pivot = direction
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| a.abs().total_cmp(&b.abs()))
            .map(|(i, _)| i)
            .unwrap();
        if direction[pivot] < 0.0 {
            for x in direction.iter_mut() {
                *x = -*x;
            }
        }
        directions.push(direction);
    }

    let points: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let row: Vec<f64> = (0..dim).map(|j| centered[(i, j)]).collect();
            let x = math::dot(&row, &directions[0]);
            let y = if directions.len() > 1 {
                math::dot(&row, &directions[1])
            } else {
                0.0
            };
            (x, y)
        })
        .collect();

    Ok(Projection {
        points,
        degenerate: false,
    })
}

// ---------------------------------------------------------------------------
// SVG assembly
// ---------------------------------------------------------------------------

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn fmt2(v: f64) -> String {
    format!("{v:.2}")
}

/// Minimal SVG document builder with fixed coordinate formatting.
struct Svg {
    width: f64,
    height: f64,
    body: String,
}

impl Svg {
    fn new(width: f64, height: f64) -> Self {
        Svg {
            width,
            height,
            body: String::new(),
        }
    }

    fn comment(&mut self, text: &str) {
        self.body
            .push_str(&format!("  <!-- {} -->\n", xml_escape(text)));
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, width: f64) {
        self.body.push_str(&format!(
            "  <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{stroke}\" stroke-width=\"{}\"/>\n",
            fmt2(x1), fmt2(y1), fmt2(x2), fmt2(y2), fmt2(width)
        ));
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str, stroke: &str) {
        self.body.push_str(&format!(
            "  <rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{fill}\" stroke=\"{stroke}\"/>\n",
            fmt2(x), fmt2(y), fmt2(w), fmt2(h)
        ));
    }

    fn circle(&mut self, cx: f64, cy: f64, r: f64, fill: &str) {
        self.body.push_str(&format!(
            "  <circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"{fill}\"/>\n",
            fmt2(cx),
            fmt2(cy),
            fmt2(r)
        ));
    }

    fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, content: &str) {
        self.body.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" font-size=\"{}\" font-family=\"sans-serif\" text-anchor=\"{anchor}\">{}</text>\n",
            fmt2(x), fmt2(y), fmt2(size), xml_escape(content)
        ));
    }

    fn finish(self) -> String {
        format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n{}</svg>\n",
            fmt2(self.width),
            fmt2(self.height),
            fmt2(self.width),
            fmt2(self.height),
            self.body
        )
    }
}

/// A rendered chart: the SVG plus the TSV of exactly the numbers drawn.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartArtifact {
    pub svg: String,
    pub tsv: String,
}

const CHART_W: f64 = 640.0;
const CHART_H: f64 = 400.0;
const MARGIN_L: f64 = 60.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 70.0;

struct ValueScale {
    min: f64,
    max: f64,
}

impl ValueScale {
    fn to_y(&self, v: f64) -> f64 {
        let plot_h = CHART_H - MARGIN_T - MARGIN_B;
        let frac = (v - self.min) / (self.max - self.min);
        CHART_H - MARGIN_B - frac * plot_h
    }
}

fn axis(svg: &mut Svg, scale: &ValueScale, ticks: &[f64]) {
    svg.line(
        MARGIN_L,
        MARGIN_T,
        MARGIN_L,
        CHART_H - MARGIN_B,
        "black",
        1.0,
    );
    svg.line(
        MARGIN_L,
        CHART_H - MARGIN_B,
        CHART_W - MARGIN_R,
        CHART_H - MARGIN_B,
        "black",
        1.0,
    );
    for &tick in ticks {
        if tick < scale.min - 1e-12 || tick > scale.max + 1e-12 {
            continue;
        }
        let y = scale.to_y(tick);
        svg.line(MARGIN_L - 4.0, y, MARGIN_L, y, "black", 1.0);
        svg.text(MARGIN_L - 8.0, y + 4.0, 11.0, "end", &format!("{tick}"));
    }
}

/// One bar per group mean, SD whiskers on top, emitted with a TSV of the
/// plotted summaries.
pub fn domain_bars(title: &str, summaries: &[DomainSummary], manifest: &str) -> ChartArtifact {
    let mut tsv = String::from("group\tcount\tsem_aff_mean\tsem_aff_sd\n");
    for s in summaries {
        tsv.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            s.label, s.concept_count, s.mean_sem_aff, s.sd_sem_aff
        ));
    }

    let mut svg = Svg::new(CHART_W, CHART_H);
    if !manifest.is_empty() {
        svg.comment(&format!("manifest {manifest}"));
    }
    svg.text(CHART_W / 2.0, 24.0, 15.0, "middle", title);
    let lowest = summaries
        .iter()
        .map(|s| s.mean_sem_aff - s.sd_sem_aff)
        .fold(0.0f64, f64::min);
    let scale = ValueScale {
        min: lowest.min(0.0),
        max: 1.0,
    };
    axis(&mut svg, &scale, &[0.0, 0.25, 0.5, 0.75, 1.0]);

    let plot_w = CHART_W - MARGIN_L - MARGIN_R;
    let slot = plot_w / summaries.len().max(1) as f64;
    let bar_w = (slot * 0.6).min(60.0);
    for (i, s) in summaries.iter().enumerate() {
        let cx = MARGIN_L + slot * (i as f64 + 0.5);
        let y0 = scale.to_y(0.0);
        let y1 = scale.to_y(s.mean_sem_aff);
        let (top, height) = if y1 <= y0 { (y1, y0 - y1) } else { (y0, y1 - y0) };
        svg.rect(cx - bar_w / 2.0, top, bar_w, height, "#4878a8", "none");
        // SD whisker
        let y_hi = scale.to_y(s.mean_sem_aff + s.sd_sem_aff);
        let y_lo = scale.to_y(s.mean_sem_aff - s.sd_sem_aff);
        svg.line(cx, y_hi, cx, y_lo, "black", 1.0);
        svg.line(cx - 4.0, y_hi, cx + 4.0, y_hi, "black", 1.0);
        svg.line(cx - 4.0, y_lo, cx + 4.0, y_lo, "black", 1.0);
        svg.text(
            cx,
            CHART_H - MARGIN_B + 16.0,
            11.0,
            "middle",
            &format!("{} (n={})", s.label, s.concept_count),
        );
    }

    ChartArtifact {
        svg: svg.finish(),
        tsv,
    }
}

/// A position on the kinship profile: one female and one male concept.
#[derive(Debug, Clone, PartialEq)]
pub struct KinshipPosition {
    pub female: (ConceptId, f64),
    pub male: (ConceptId, f64),
}

/// Paired-bar chart of kinship affinities: the ordering lists concepts as
/// consecutive (female, male) pairs, closest-to-ego first.
pub fn kinship_profile(
    records: &[AffinityRecord],
    ordering: &[ConceptId],
    manifest: &str,
) -> Result<(ChartArtifact, Vec<KinshipPosition>)> {
    if ordering.is_empty() {
        return Err(Error::EmptyOrdering);
    }
    if !ordering.len().is_multiple_of(2) {
        return Err(Error::UnpairedOrdering {
            found: ordering.len(),
        });
    }
    let lookup = |id: &ConceptId| -> Result<f64> {
        records
            .iter()
            .find(|r| r.concept == *id)
            .map(|r| r.sem_aff)
            .ok_or_else(|| Error::MissingRecord {
                concept: id.to_string(),
            })
    };
    let mut positions = Vec::with_capacity(ordering.len() / 2);
    for pair in ordering.chunks(2) {
        positions.push(KinshipPosition {
            female: (pair[0].clone(), lookup(&pair[0])?),
            male: (pair[1].clone(), lookup(&pair[1])?),
        });
    }

    let mut tsv = String::from("position\tfemale_concept\tfemale_sem_aff\tmale_concept\tmale_sem_aff\n");
    for (i, p) in positions.iter().enumerate() {
        tsv.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            i + 1,
            p.female.0,
            p.female.1,
            p.male.0,
            p.male.1
        ));
    }

    let mut svg = Svg::new(CHART_W, CHART_H);
    if !manifest.is_empty() {
        svg.comment(&format!("manifest {manifest}"));
    }
    svg.text(CHART_W / 2.0, 24.0, 15.0, "middle", "Kinship affinity by relatedness to ego");
    let lowest = positions
        .iter()
        .flat_map(|p| [p.female.1, p.male.1])
        .fold(0.0f64, f64::min);
    let scale = ValueScale {
        min: lowest.min(0.0),
        max: 1.0,
    };
    axis(&mut svg, &scale, &[0.0, 0.25, 0.5, 0.75, 1.0]);

    let plot_w = CHART_W - MARGIN_L - MARGIN_R;
    let slot = plot_w / positions.len().max(1) as f64;
    let bar_w = (slot * 0.3).min(34.0);
    for (i, p) in positions.iter().enumerate() {
        let cx = MARGIN_L + slot * (i as f64 + 0.5);
        let y0 = scale.to_y(0.0);
        for (offset, (concept, value), fill) in [
            (-bar_w / 2.0 - 1.0, &p.female, "#b0567c"),
            (bar_w / 2.0 + 1.0, &p.male, "#4878a8"),
        ] {
            let y1 = scale.to_y(*value);
            let (top, height) = if y1 <= y0 { (y1, y0 - y1) } else { (y0, y1 - y0) };
            svg.rect(cx + offset - bar_w / 2.0, top, bar_w, height, fill, "none");
            svg.text(
                cx + offset,
                CHART_H - MARGIN_B + 16.0,
                9.0,
                "middle",
                concept.as_str(),
            );
        }
    }
    // legend
    svg.rect(MARGIN_L + 6.0, MARGIN_T, 10.0, 10.0, "#b0567c", "none");
    svg.text(MARGIN_L + 20.0, MARGIN_T + 9.0, 11.0, "start", "female");
    svg.rect(MARGIN_L + 76.0, MARGIN_T, 10.0, 10.0, "#4878a8", "none");
    svg.text(MARGIN_L + 90.0, MARGIN_T + 9.0, 11.0, "start", "male");

    Ok((
        ChartArtifact {
            svg: svg.finish(),
            tsv,
        },
        positions,
    ))
}

/// One partial-correlation bar: factor r within a domain, hollow when not
/// significant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialCorrBar {
    pub domain: String,
    pub factor: String,
    pub r: f64,
    pub p_value: f64,
    pub significant: bool,
}

/// Grouped bars of partial correlations per domain and factor. Bars with
/// p > threshold are drawn hollow.
pub fn partial_corr_bars(bars: &[PartialCorrBar], manifest: &str) -> ChartArtifact {
    let mut tsv = String::from("domain\tfactor\tr\tp_value\tsignificant\n");
    for b in bars {
        tsv.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            b.domain,
            b.factor,
            math::fmt_float(b.r),
            math::fmt_float(b.p_value),
            b.significant
        ));
    }

    let mut domains: Vec<&str> = Vec::new();
    for b in bars {
        if !domains.contains(&b.domain.as_str()) {
            domains.push(&b.domain);
        }
    }
    let factors = ["PHY", "GEO", "CLM"];
    let palette = ["#4878a8", "#5ea860", "#c8803c"];

    let mut svg = Svg::new(CHART_W, CHART_H);
    if !manifest.is_empty() {
        svg.comment(&format!("manifest {manifest}"));
    }
    svg.text(CHART_W / 2.0, 24.0, 15.0, "middle", "Partial correlation with SDist by domain");
    let extent = bars.iter().map(|b| b.r.abs()).fold(0.5f64, f64::max);
    let scale = ValueScale {
        min: -extent,
        max: extent,
    };
    axis(&mut svg, &scale, &[-0.5, 0.0, 0.5]);
    // zero line across the plot
    let y0 = scale.to_y(0.0);
    svg.line(MARGIN_L, y0, CHART_W - MARGIN_R, y0, "#999999", 0.5);

    let plot_w = CHART_W - MARGIN_L - MARGIN_R;
    let slot = plot_w / domains.len().max(1) as f64;
    let bar_w = (slot / 4.0).min(26.0);
    for (d, domain) in domains.iter().enumerate() {
        let base = MARGIN_L + slot * d as f64 + slot / 2.0;
        for (f, factor) in factors.iter().enumerate() {
            let Some(bar) = bars
                .iter()
                .find(|b| b.domain == *domain && b.factor == *factor)
            else {
                continue;
            };
            let cx = base + (f as f64 - 1.0) * (bar_w + 2.0);
            let y1 = scale.to_y(bar.r);
            let (top, height) = if y1 <= y0 { (y1, y0 - y1) } else { (y0, y1 - y0) };
            let (fill, stroke) = if bar.significant {
                (palette[f], "none")
            } else {
                ("none", palette[f])
            };
            svg.rect(cx - bar_w / 2.0, top, bar_w, height.max(0.5), fill, stroke);
        }
        svg.text(base, CHART_H - MARGIN_B + 16.0, 10.0, "middle", domain);
    }
    // legend
    for (f, factor) in factors.iter().enumerate() {
        let x = MARGIN_L + 6.0 + f as f64 * 70.0;
        svg.rect(x, MARGIN_T, 10.0, 10.0, palette[f], "none");
        svg.text(x + 14.0, MARGIN_T + 9.0, 11.0, "start", factor);
    }

    ChartArtifact {
        svg: svg.finish(),
        tsv,
    }
}

/// Scatter plot of labeled 2D points (PCA projections).
pub fn scatter_2d(
    title: &str,
    labeled_points: &[(String, f64, f64)],
    manifest: &str,
) -> ChartArtifact {
    let mut tsv = String::from("label\tx\ty\n");
    for (label, x, y) in labeled_points {
        tsv.push_str(&format!("{label}\t{x}\t{y}\n"));
    }

    let mut svg = Svg::new(CHART_W, CHART_H);
    if !manifest.is_empty() {
        svg.comment(&format!("manifest {manifest}"));
    }
    svg.text(CHART_W / 2.0, 24.0, 15.0, "middle", title);

    let xs: Vec<f64> = labeled_points.iter().map(|(_, x, _)| *x).collect();
    let ys: Vec<f64> = labeled_points.iter().map(|(_, _, y)| *y).collect();
    let pad = |lo: f64, hi: f64| {
        let span = (hi - lo).max(1e-9);
        (lo - 0.05 * span, hi + 0.05 * span)
    };
    let (xmin, xmax) = pad(
        xs.iter().cloned().fold(f64::INFINITY, f64::min),
        xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    );
    let (ymin, ymax) = pad(
        ys.iter().cloned().fold(f64::INFINITY, f64::min),
        ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    );
    let to_px = |x: f64| MARGIN_L + (x - xmin) / (xmax - xmin) * (CHART_W - MARGIN_L - MARGIN_R);
    let to_py = |y: f64| CHART_H - MARGIN_B - (y - ymin) / (ymax - ymin) * (CHART_H - MARGIN_T - MARGIN_B);

    svg.line(MARGIN_L, MARGIN_T, MARGIN_L, CHART_H - MARGIN_B, "black", 1.0);
    svg.line(
        MARGIN_L,
        CHART_H - MARGIN_B,
        CHART_W - MARGIN_R,
        CHART_H - MARGIN_B,
        "black",
        1.0,
    );
    for (label, x, y) in labeled_points {
        let px = to_px(*x);
        let py = to_py(*y);
        svg.circle(px, py, 3.0, "#4878a8");
        svg.text(px + 5.0, py - 5.0, 9.0, "start", label);
    }

    ChartArtifact {
        svg: svg.finish(),
        tsv,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::random_unit_vector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_vectors_project_onto_first_component_only() {
        let vectors = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]];
        let projection = project_2d(&vectors).unwrap();
        assert!(!projection.degenerate);
        let (x0, y0) = projection.points[0];
        let (x1, y1) = projection.points[1];
        assert!((x0 - x1).abs() > 0.5, "separated on the first component");
        assert!(y0.abs() < 1e-9 && y1.abs() < 1e-9);
    }

    #[test]
    fn projection_of_2d_input_preserves_pairwise_distances() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let vectors: Vec<Vec<f64>> = (0..12).map(|_| random_unit_vector(2, &mut rng)).collect();
        let projection = project_2d(&vectors).unwrap();
        for i in 0..vectors.len() {
            for j in (i + 1)..vectors.len() {
                let original = math::euclidean(&vectors[i], &vectors[j]);
                let a = projection.points[i];
                let b = projection.points[j];
                let projected = ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
                assert!((original - projected).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn reconstruction_error_equals_tail_eigenvalue_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        let dim = 300;
        let vectors: Vec<Vec<f64>> = (0..10).map(|_| random_unit_vector(dim, &mut rng)).collect();
        let projection = project_2d(&vectors).unwrap();

        // total centered energy minus projected energy = residual energy
        let mean = math::mean_vector(vectors.iter().map(Vec::as_slice), dim);
        let total: f64 = vectors
            .iter()
            .map(|v| {
                v.iter()
                    .zip(&mean)
                    .map(|(x, m)| (x - m) * (x - m))
                    .sum::<f64>()
            })
            .sum();
        let kept: f64 = projection
            .points
            .iter()
            .map(|(x, y)| x * x + y * y)
            .sum();
        let residual = total - kept;

        // oracle: eigenvalues of the scatter matrix A^T A via symmetric eigen
        let mut centered = nalgebra::DMatrix::zeros(10, dim);
        for (i, v) in vectors.iter().enumerate() {
            for j in 0..dim {
                centered[(i, j)] = v[j] - mean[j];
            }
        }
        let scatter = centered.transpose() * &centered;
        let eigen = nalgebra::SymmetricEigen::new(scatter);
        let mut eigenvalues: Vec<f64> = eigen.eigenvalues.iter().copied().collect();
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        let tail: f64 = eigenvalues.iter().skip(2).sum();

        assert!(
            (residual - tail).abs() <= 1e-8,
            "residual {residual} vs tail {tail}"
        );
    }

    #[test]
    fn identical_vectors_are_degenerate() {
        let vectors = vec![vec![0.5, 0.5], vec![0.5, 0.5], vec![0.5, 0.5]];
        let projection = project_2d(&vectors).unwrap();
        assert!(projection.degenerate);
        assert!(projection.points.iter().all(|&(x, y)| x == 0.0 && y == 0.0));
    }

    #[test]
    fn projection_needs_two_vectors() {
        assert!(matches!(
            project_2d(&[vec![1.0, 0.0]]).unwrap_err(),
            Error::TooFewVectors { found: 1 }
        ));
    }

    /// Stack-based well-formedness check good enough for our own output:
    /// balanced tags, quoted attributes, declarations and comments skipped.
    fn assert_well_formed_xml(doc: &str) {
        let mut stack: Vec<String> = Vec::new();
        let mut rest = doc;
        while let Some(start) = rest.find('<') {
            rest = &rest[start + 1..];
            let end = rest.find('>').expect("unterminated tag");
            let tag = &rest[..end];
            rest = &rest[end + 1..];
            if tag.starts_with('?') || tag.starts_with("!--") {
                continue;
            }
            if let Some(name) = tag.strip_prefix('/') {
                let open = stack.pop().unwrap_or_else(|| panic!("stray </{name}>"));
                assert_eq!(open, name, "mismatched closing tag");
            } else if tag.ends_with('/') {
                // self-closing
            } else {
                let name: String = tag
                    .split(|c: char| c.is_whitespace())
                    .next()
                    .unwrap()
                    .to_string();
                stack.push(name);
            }
        }
        assert!(stack.is_empty(), "unclosed tags {stack:?}");
    }

    fn summary(label: &str, mean: f64, sd: f64, count: usize) -> DomainSummary {
        DomainSummary {
            label: label.into(),
            concept_count: count,
            mean_sem_aff: mean,
            sd_sem_aff: sd,
        }
    }

    #[test]
    fn domain_bars_svg_is_well_formed_and_reproducible() {
        let summaries = vec![
            summary("numerals", 0.71, 0.03, 21),
            summary("body", 0.64, 0.04, 42),
            summary("containers", 0.61, 0.03, 9),
        ];
        let a = domain_bars("Affinity by domain", &summaries, "abc123");
        let b = domain_bars("Affinity by domain", &summaries, "abc123");
        assert_eq!(a.svg, b.svg);
        assert_well_formed_xml(&a.svg);
        // one bar per group
        assert_eq!(a.svg.matches("<rect").count(), summaries.len());
        // the TSV carries exactly the drawn numbers
        assert!(a.tsv.contains("numerals\t21\t0.71\t0.03"));
        assert_eq!(a.tsv.lines().count(), 1 + summaries.len());
    }

    fn record(id: &str, aff: f64) -> AffinityRecord {
        AffinityRecord {
            concept: ConceptId::new(id),
            sem_aff: aff,
            coverage: 3,
            per_language: vec![],
            skipped: vec![],
        }
    }

    #[test]
    fn kinship_profile_pairs_in_given_order() {
        let records = vec![
            record("DAUGHTER", 0.77),
            record("SON", 0.76),
            record("MOTHER", 0.72),
            record("FATHER", 0.71),
            record("SISTER", 0.74),
            record("BROTHER", 0.73),
            record("GRANDMOTHER", 0.65),
            record("GRANDFATHER", 0.66),
            record("AUNT", 0.58),
            record("UNCLE", 0.59),
        ];
        let ordering: Vec<ConceptId> = [
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
        ]
        .iter()
        .map(|s| ConceptId::new(*s))
        .collect();
        let (artifact, positions) = kinship_profile(&records, &ordering, "").unwrap();
        assert_eq!(positions.len(), 5);
        assert_eq!(positions[0].female.0.as_str(), "DAUGHTER");
        assert_eq!(positions[4].male.0.as_str(), "UNCLE");
        assert_well_formed_xml(&artifact.svg);
        assert_eq!(artifact.tsv.lines().count(), 6);
    }

    #[test]
    fn kinship_profile_error_cases() {
        let records = vec![record("A", 0.5), record("B", 0.6)];
        assert!(matches!(
            kinship_profile(&records, &[], "").unwrap_err(),
            Error::EmptyOrdering
        ));
        assert!(matches!(
            kinship_profile(&records, &[ConceptId::new("A")], "").unwrap_err(),
            Error::UnpairedOrdering { found: 1 }
        ));
        let ordering = vec![ConceptId::new("A"), ConceptId::new("MISSING")];
        assert!(matches!(
            kinship_profile(&records, &ordering, "").unwrap_err(),
            Error::MissingRecord { .. }
        ));
    }

    #[test]
    fn partial_corr_bars_hollow_when_not_significant() {
        let bars = vec![
            PartialCorrBar {
                domain: "body".into(),
                factor: "PHY".into(),
                r: 0.4,
                p_value: 0.001,
                significant: true,
            },
            PartialCorrBar {
                domain: "body".into(),
                factor: "GEO".into(),
                r: 0.1,
                p_value: 0.4,
                significant: false,
            },
            PartialCorrBar {
                domain: "body".into(),
                factor: "CLM".into(),
                r: -0.2,
                p_value: 0.06,
                significant: false,
            },
        ];
        let artifact = partial_corr_bars(&bars, "digest");
        assert_well_formed_xml(&artifact.svg);
        assert!(artifact.svg.contains("fill=\"none\""), "hollow bars exist");
        assert!(artifact.tsv.contains("body\tGEO\t0.1\t0.4\tfalse"));
    }

    #[test]
    fn scatter_emits_all_points() {
        let points = vec![
            ("daughter_eng".to_string(), 0.1, -0.2),
            ("daughter_fra".to_string(), 0.12, -0.18),
            ("edge_eng".to_string(), -0.4, 0.3),
        ];
        let artifact = scatter_2d("projection", &points, "");
        assert_well_formed_xml(&artifact.svg);
        assert_eq!(artifact.svg.matches("<circle").count(), 3);
        assert_eq!(artifact.tsv.lines().count(), 4);
    }

    #[test]
    fn report_spec_validation() {
        assert!(validate_report_spec(ReportKind::DomainBars, ReportFormat::Svg).is_ok());
        assert!(validate_report_spec(ReportKind::AffinityTable, ReportFormat::Tsv).is_ok());
        assert!(matches!(
            validate_report_spec(ReportKind::AffinityTable, ReportFormat::Svg).unwrap_err(),
            Error::IncompatibleReportFormat { .. }
        ));
    }
}
