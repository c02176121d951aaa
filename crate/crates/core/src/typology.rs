//! Phylogenetic, geographic, and climate distances between languages.
//!
//! Phylogenetic distance is the unweighted edge count on the leaf-to-leaf
//! path in a family tree; geographic distance is plain Euclidean distance in
//! (longitude, latitude) degree space; climate distance is Euclidean
//! distance between per-language climate vectors.

use std::path::Path;

use indexmap::IndexMap;
use nalgebra::DMatrix;

use crate::affinity::{DistanceMatrix, MatrixKind};
use crate::error::Error;
use crate::math;
use crate::types::Language;
use crate::Result;

// ---------------------------------------------------------------------------
// Phylogenetic tree
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct TreeNode {
    parent: Option<usize>,
}

/// A rooted tree with uniquely labeled leaves. Branch lengths and internal
/// labels are accepted on parse but ignored; only topology matters here.
#[derive(Debug, Clone)]
pub struct PhyloTree {
    nodes: Vec<TreeNode>,
    leaves: IndexMap<String, usize>,
}

impl PhyloTree {
    pub fn leaf_labels(&self) -> impl Iterator<Item = &str> {
        self.leaves.keys().map(String::as_str)
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    pub fn contains_leaf(&self, label: &str) -> bool {
        self.leaves.contains_key(label)
    }

    fn depth_path(&self, mut node: usize) -> Vec<usize> {
        let mut path = vec![node];
        while let Some(parent) = self.nodes[node].parent {
            path.push(parent);
            node = parent;
        }
        path
    }
}

/// Parse a Newick string. Leaves must be labeled and unique; internal labels
/// and `:length` suffixes are tolerated and discarded.
pub fn parse_newick(text: &str) -> Result<PhyloTree> {
    let src = text.trim();
    let body = src.strip_suffix(';').ok_or_else(|| Error::NewickParse {
        position: src.len(),
        message: "missing trailing semicolon".into(),
    })?;
    let bytes = body.as_bytes();

    let mut nodes: Vec<TreeNode> = Vec::new();
    let mut leaves: IndexMap<String, usize> = IndexMap::new();
    let mut stack: Vec<usize> = Vec::new();
    let mut pos = 0usize;

    // the root
    nodes.push(TreeNode { parent: None });
    stack.push(0);

    let mut expect_node = true;
    while pos < bytes.len() {
        match bytes[pos] {
            b'(' => {
                let parent = *stack.last().unwrap();
                nodes.push(TreeNode {
                    parent: Some(parent),
                });
                let id = nodes.len() - 1;
                stack.push(id);
                expect_node = true;
                pos += 1;
            }
            b')' => {
                if stack.len() <= 1 {
                    return Err(Error::NewickParse {
                        position: pos,
                        message: "unbalanced closing bracket".into(),
                    });
                }
                stack.pop();
                // optional internal label / branch length
                pos += 1;
                pos += skip_label_and_length(&bytes[pos..]);
                expect_node = false;
            }
            b',' => {
                expect_node = true;
                pos += 1;
            }
            b' ' | b'\t' | b'\n' | b'\r' => {
                pos += 1;
            }
            _ => {
                if !expect_node {
                    return Err(Error::NewickParse {
                        position: pos,
                        message: "unexpected token after subtree".into(),
                    });
                }
                let start = pos;
                while pos < bytes.len() && !b"(),;:".contains(&bytes[pos]) {
                    pos += 1;
                }
                let label = body[start..pos].trim().to_string();
                if label.is_empty() {
                    return Err(Error::NewickParse {
                        position: start,
                        message: "empty leaf label".into(),
                    });
                }
                pos += skip_label_and_length(&bytes[pos..]);
                let parent = *stack.last().unwrap();
                nodes.push(TreeNode {
                    parent: Some(parent),
                });
                if leaves.insert(label.clone(), nodes.len() - 1).is_some() {
                    return Err(Error::DuplicateLeaf { label });
                }
                expect_node = false;
            }
        }
    }
    if stack.len() != 1 {
        return Err(Error::NewickParse {
            position: bytes.len(),
            message: "unbalanced opening bracket".into(),
        });
    }
    if leaves.is_empty() {
        return Err(Error::NewickParse {
            position: 0,
            message: "tree has no leaves".into(),
        });
    }

    // The wrapper root has exactly one child (the outermost group); splice it
    // out so path lengths do not count a phantom edge.
    let children_of_root: Vec<usize> = (1..nodes.len())
        .filter(|&i| nodes[i].parent == Some(0))
        .collect();
    if children_of_root.len() == 1 {
        let real_root = children_of_root[0];
        nodes[real_root].parent = None;
        for node in nodes.iter_mut() {
            if node.parent == Some(0) {
                node.parent = Some(real_root);
            }
        }
    }

    Ok(PhyloTree { nodes, leaves })
}

fn skip_label_and_length(rest: &[u8]) -> usize {
    let mut consumed = 0;
    // internal label (letters/digits) directly after ')'
    while consumed < rest.len() && !b"(),;:".contains(&rest[consumed]) {
        consumed += 1;
    }
    if consumed < rest.len() && rest[consumed] == b':' {
        consumed += 1;
        while consumed < rest.len() && !b"(),;".contains(&rest[consumed]) {
            consumed += 1;
        }
    }
    consumed
}

/// Load a Newick file.
pub fn load_tree(path: &Path) -> Result<PhyloTree> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_newick(&text)
}

/// Unweighted path length (edge count) between two leaves; 0 iff the same
/// leaf.
pub fn phylo_distance(tree: &PhyloTree, first: &Language, second: &Language) -> Result<usize> {
    let a = *tree
        .leaves
        .get(first.as_str())
        .ok_or_else(|| Error::CoverageGap {
            language: first.to_string(),
            dataset: "tree",
        })?;
    let b = *tree
        .leaves
        .get(second.as_str())
        .ok_or_else(|| Error::CoverageGap {
            language: second.to_string(),
            dataset: "tree",
        })?;
    if a == b {
        return Ok(0);
    }
    let path_a = tree.depth_path(a);
    let path_b = tree.depth_path(b);
    // walk back from the root until the paths diverge
    let mut ia = path_a.len();
    let mut ib = path_b.len();
    while ia > 0 && ib > 0 && path_a[ia - 1] == path_b[ib - 1] {
        ia -= 1;
        ib -= 1;
    }
    Ok(ia + ib)
}

// ---------------------------------------------------------------------------
// Geography
// ---------------------------------------------------------------------------

/// Per-language (longitude, latitude) coordinates in degrees.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GeoTable {
    coords: IndexMap<Language, (f64, f64)>,
}

impl GeoTable {
    pub fn from_coords(coords: impl IntoIterator<Item = (Language, (f64, f64))>) -> Self {
        GeoTable {
            coords: coords.into_iter().collect(),
        }
    }

    pub fn get(&self, language: &str) -> Option<(f64, f64)> {
        self.coords.get(language).copied()
    }

    pub fn contains(&self, language: &str) -> bool {
        self.coords.contains_key(language)
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }
}

/// Load a TSV with header `language  lon  lat`.
pub fn load_geo(path: &Path) -> Result<GeoTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let p = || path.display().to_string();
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().unwrap_or((0, ""));
    let names: Vec<&str> = header.split('\t').collect();
    for required in ["language", "lon", "lat"] {
        if !names.contains(&required) {
            return Err(Error::MissingColumn {
                path: p(),
                column: required.to_string(),
            });
        }
    }
    let col = |n: &str| names.iter().position(|x| *x == n).unwrap();
    let (li, xi, yi) = (col("language"), col("lon"), col("lat"));

    let mut coords = IndexMap::new();
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
        let parse = |tok: &str| -> Result<f64> {
            tok.parse().map_err(|_| Error::BadNumber {
                path: p(),
                line: lineno,
                token: tok.to_string(),
            })
        };
        let lon = parse(fields[xi])?;
        let lat = parse(fields[yi])?;
        if !(-180.0..=180.0).contains(&lon) || !(-90.0..=90.0).contains(&lat) {
            return Err(Error::InvalidValue {
                path: p(),
                line: lineno,
                message: format!("coordinates ({lon}, {lat}) out of range"),
            });
        }
        let language = Language::new(fields[li]);
        if coords.insert(language.clone(), (lon, lat)).is_some() {
            return Err(Error::InvalidValue {
                path: p(),
                line: lineno,
                message: format!("duplicate language {language}"),
            });
        }
    }
    Ok(GeoTable { coords })
}

/// Euclidean distance in degree space. A great-circle alternative exists
/// behind [`geo_distance_great_circle`] but degree-space is the default.
pub fn geo_distance(geo: &GeoTable, first: &Language, second: &Language) -> Result<f64> {
    let a = geo.get(first.as_str()).ok_or_else(|| Error::CoverageGap {
        language: first.to_string(),
        dataset: "geo",
    })?;
    let b = geo.get(second.as_str()).ok_or_else(|| Error::CoverageGap {
        language: second.to_string(),
        dataset: "geo",
    })?;
    Ok(math::euclidean(&[a.0, a.1], &[b.0, b.1]))
}

/// Great-circle distance in kilometers (haversine, mean Earth radius).
/// Opt-in alternative to the degree-space default; outputs produced with it
/// are labeled in provenance.
pub fn geo_distance_great_circle(
    geo: &GeoTable,
    first: &Language,
    second: &Language,
) -> Result<f64> {
    const EARTH_RADIUS_KM: f64 = 6371.0;
    let a = geo.get(first.as_str()).ok_or_else(|| Error::CoverageGap {
        language: first.to_string(),
        dataset: "geo",
    })?;
    let b = geo.get(second.as_str()).ok_or_else(|| Error::CoverageGap {
        language: second.to_string(),
        dataset: "geo",
    })?;
    let (lon1, lat1) = (a.0.to_radians(), a.1.to_radians());
    let (lon2, lat2) = (b.0.to_radians(), b.1.to_radians());
    let dlat = lat2 - lat1;
    let dlon = lon2 - lon1;
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    Ok(2.0 * EARTH_RADIUS_KM * h.sqrt().asin())
}

// ---------------------------------------------------------------------------
// Climate
// ---------------------------------------------------------------------------

/// Per-language climate feature vectors, all of one length.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClimateTable {
    features: Vec<String>,
    vectors: IndexMap<Language, Vec<f64>>,
}

impl ClimateTable {
    pub fn from_vectors(
        features: Vec<String>,
        vectors: impl IntoIterator<Item = (Language, Vec<f64>)>,
    ) -> Result<Self> {
        let k = features.len();
        let mut map = IndexMap::new();
        for (language, v) in vectors {
            if v.len() != k {
                return Err(Error::ClimateLengthMismatch {
                    language: language.to_string(),
                    expected: k,
                    found: v.len(),
                });
            }
            map.insert(language, v);
        }
        Ok(ClimateTable {
            features,
            vectors: map,
        })
    }

    pub fn feature_count(&self) -> usize {
        self.features.len()
    }

    pub fn get(&self, language: &str) -> Option<&[f64]> {
        self.vectors.get(language).map(Vec::as_slice)
    }

    pub fn contains(&self, language: &str) -> bool {
        self.vectors.contains_key(language)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Z-score each component across languages (opt-in; off by default to
    /// keep distances on the raw measurement scale).
    pub fn z_scored(&self) -> ClimateTable {
        let k = self.feature_count();
        let n = self.vectors.len() as f64;
        let mut means = vec![0.0; k];
        for v in self.vectors.values() {
            for (m, x) in means.iter_mut().zip(v) {
                *m += x;
            }
        }
        for m in means.iter_mut() {
            *m /= n;
        }
        let mut sds = vec![0.0; k];
        for v in self.vectors.values() {
            for ((s, x), m) in sds.iter_mut().zip(v).zip(&means) {
                *s += (x - m) * (x - m);
            }
        }
        for s in sds.iter_mut() {
            *s = (*s / n).sqrt();
            if *s == 0.0 {
                *s = 1.0; // constant component: leave it centered only
            }
        }
        let vectors = self
            .vectors
            .iter()
            .map(|(l, v)| {
                let z: Vec<f64> = v
                    .iter()
                    .zip(&means)
                    .zip(&sds)
                    .map(|((x, m), s)| (x - m) / s)
                    .collect();
                (l.clone(), z)
            })
            .collect();
        ClimateTable {
            features: self.features.clone(),
            vectors,
        }
    }
}

/// Load a TSV whose header is `language` followed by one column per climate
/// feature; every row must fill all columns.
pub fn load_climate(path: &Path) -> Result<ClimateTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let p = || path.display().to_string();
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().unwrap_or((0, ""));
    let names: Vec<&str> = header.split('\t').collect();
    if names.first() != Some(&"language") {
        return Err(Error::MissingColumn {
            path: p(),
            column: "language".to_string(),
        });
    }
    if names.len() < 2 {
        return Err(Error::MissingColumn {
            path: p(),
            column: "<at least one climate feature>".to_string(),
        });
    }
    let features: Vec<String> = names[1..].iter().map(|s| s.to_string()).collect();
    let k = features.len();

    let mut vectors = IndexMap::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != k + 1 {
            return Err(Error::FieldCount {
                path: p(),
                line: lineno,
                expected: k + 1,
                found: fields.len(),
            });
        }
        let language = Language::new(fields[0]);
        let vector: Vec<f64> = fields[1..]
            .iter()
            .map(|tok| {
                tok.parse::<f64>().map_err(|_| Error::BadNumber {
                    path: p(),
                    line: lineno,
                    token: tok.to_string(),
                })
            })
            .collect::<Result<_>>()?;
        if vectors.insert(language.clone(), vector).is_some() {
            return Err(Error::InvalidValue {
                path: p(),
                line: lineno,
                message: format!("duplicate language {language}"),
            });
        }
    }
    Ok(ClimateTable { features, vectors })
}

/// Euclidean distance between two languages' climate vectors.
pub fn climate_distance(clim: &ClimateTable, first: &Language, second: &Language) -> Result<f64> {
    let a = clim.get(first.as_str()).ok_or_else(|| Error::CoverageGap {
        language: first.to_string(),
        dataset: "climate",
    })?;
    let b = clim.get(second.as_str()).ok_or_else(|| Error::CoverageGap {
        language: second.to_string(),
        dataset: "climate",
    })?;
    if a.len() != b.len() {
        return Err(Error::ClimateLengthMismatch {
            language: second.to_string(),
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(math::euclidean(a, b))
}

// ---------------------------------------------------------------------------
// Factor matrices
// ---------------------------------------------------------------------------

/// How geographic distance is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeoMode {
    /// Euclidean distance in (lon, lat) degree space (default).
    #[default]
    Degrees,
    /// Haversine great-circle distance in kilometers.
    GreatCircleKm,
}

/// The three extra-linguistic distance matrices aligned to one language
/// ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorMatrices {
    pub phy: DistanceMatrix,
    pub geo: DistanceMatrix,
    pub clm: DistanceMatrix,
}

/// Build PHY, GEO, and CLM matrices over a shared language ordering. Any
/// coverage gap is an error naming the language and source.
pub fn factor_matrices(
    languages: &[Language],
    tree: &PhyloTree,
    geo: &GeoTable,
    clim: &ClimateTable,
    geo_mode: GeoMode,
) -> Result<FactorMatrices> {
    for language in languages {
        if !tree.contains_leaf(language.as_str()) {
            return Err(Error::CoverageGap {
                language: language.to_string(),
                dataset: "tree",
            });
        }
        if !geo.contains(language.as_str()) {
            return Err(Error::CoverageGap {
                language: language.to_string(),
                dataset: "geo",
            });
        }
        if !clim.contains(language.as_str()) {
            return Err(Error::CoverageGap {
                language: language.to_string(),
                dataset: "climate",
            });
        }
    }
    let n = languages.len();
    let mut phy = DMatrix::zeros(n, n);
    let mut geo_m = DMatrix::zeros(n, n);
    let mut clm = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let p = phylo_distance(tree, &languages[i], &languages[j])? as f64;
            let g = match geo_mode {
                GeoMode::Degrees => geo_distance(geo, &languages[i], &languages[j])?,
                GeoMode::GreatCircleKm => {
                    geo_distance_great_circle(geo, &languages[i], &languages[j])?
                }
            };
            let c = climate_distance(clim, &languages[i], &languages[j])?;
            phy[(i, j)] = p;
            phy[(j, i)] = p;
            geo_m[(i, j)] = g;
            geo_m[(j, i)] = g;
            clm[(i, j)] = c;
            clm[(j, i)] = c;
        }
    }
    Ok(FactorMatrices {
        phy: DistanceMatrix::new(MatrixKind::Phy, languages.to_vec(), phy),
        geo: DistanceMatrix::new(MatrixKind::Geo, languages.to_vec(), geo_m),
        clm: DistanceMatrix::new(MatrixKind::Clm, languages.to_vec(), clm),
    })
}
