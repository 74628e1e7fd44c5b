//! Candidate pools: measurements, embeddings and the hit predicate.
//!
//! A pool is built once per dataset and is immutable afterwards, so a single
//! instance can be shared by any number of concurrent runs.
//!
//! Measurements are a CSV with header `name,score[,hit]`. When the `hit`
//! column is present its 0/1 values define a ground-truth hit set. Embeddings
//! are a headerless CSV whose rows are `name,v1,...,vd`.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Metric {
    #[serde(rename = "cosine")]
    Cosine,
    #[default]
    #[serde(rename = "l2sq", alias = "l2-squared")]
    L2Squared,
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Metric::Cosine),
            "l2sq" | "l2-squared" | "l2_squared" => Ok(Metric::L2Squared),
            other => Err(Error::Config(format!("unknown metric {other:?}"))),
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Metric::Cosine => "cosine",
            Metric::L2Squared => "l2sq",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    pub name: String,
    pub score: f64,
    pub index: usize,
}

/// Row-major embedding matrix in pool order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    data: Vec<f64>,
    sq_norms: Vec<f64>,
}

impl EmbeddingTable {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map(Vec::len).ok_or(Error::EmptyPool)?;
        if dim == 0 {
            return Err(Error::DimMismatch {
                expected: 1,
                got: 0,
            });
        }
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::RaggedEmbedding {
                    name: format!("row {i}"),
                    got: row.len(),
                    expected: dim,
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("embedding row {i}")));
            }
            data.extend_from_slice(row);
        }
        let sq_norms = data.chunks_exact(dim).map(sq_norm).collect();
        Ok(Self {
            dim,
            data,
            sq_norms,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.sq_norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sq_norms.is_empty()
    }

    pub fn row(&self, index: usize) -> &[f64] {
        &self.data[index * self.dim..(index + 1) * self.dim]
    }

    pub(crate) fn sq_norm(&self, index: usize) -> f64 {
        self.sq_norms[index]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }
}

pub(crate) fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum HitRule {
    GroundTruthSet { names: BTreeSet<String> },
    TopPercentile { percentile: f64 },
    AbsTopPercentile { percentile: f64 },
}

impl HitRule {
    pub fn top_percentile(percentile: f64) -> Self {
        HitRule::TopPercentile { percentile }
    }
}

impl Default for HitRule {
    fn default() -> Self {
        HitRule::TopPercentile { percentile: 90.0 }
    }
}

/// A hit rule resolved against a concrete pool.
#[derive(Debug, Clone, PartialEq)]
pub struct HitPolicy {
    pub rule: HitRule,
    /// Score (or |score|) of the best non-hit. `None` for ground-truth sets and
    /// when every candidate is a hit.
    pub threshold: Option<f64>,
    flags: Vec<bool>,
}

impl HitPolicy {
    /// Resolves `rule` over `candidates` (in pool order).
    ///
    /// Percentile rules keep the `k = floor((1 - p/100) * n)` best candidates;
    /// at equal values the lower index takes the slot.
    pub fn resolve(rule: HitRule, candidates: &[Candidate]) -> Result<Self> {
        let n = candidates.len();
        match &rule {
            HitRule::GroundTruthSet { names } => {
                let mut flags = vec![false; n];
                let by_name: HashMap<&str, usize> = candidates
                    .iter()
                    .map(|c| (c.name.as_str(), c.index))
                    .collect();
                for name in names {
                    let i = by_name
                        .get(name.as_str())
                        .ok_or_else(|| Error::GroundTruthNotInPool(name.clone()))?;
                    flags[*i] = true;
                }
                Ok(Self {
                    rule,
                    threshold: None,
                    flags,
                })
            }
            HitRule::TopPercentile { percentile } | HitRule::AbsTopPercentile { percentile } => {
                let p = *percentile;
                if !(p > 0.0 && p < 100.0) {
                    return Err(Error::InvalidPercentile(p));
                }
                if n == 0 {
                    return Err(Error::EmptyPool);
                }
                let k = hit_count(p, n);
                if k == 0 {
                    return Err(Error::PercentileTooCoarse {
                        percentile: p,
                        pool_size: n,
                    });
                }
                let abs = matches!(rule, HitRule::AbsTopPercentile { .. });
                let value = |c: &Candidate| if abs { c.score.abs() } else { c.score };
                let mut order: Vec<usize> = (0..n).collect();
                order.sort_by(|&a, &b| {
                    value(&candidates[b])
                        .total_cmp(&value(&candidates[a]))
                        .then(a.cmp(&b))
                });
                let mut flags = vec![false; n];
                for &i in &order[..k] {
                    flags[i] = true;
                }
                let threshold = order.get(k).map(|&i| value(&candidates[i]));
                Ok(Self {
                    rule,
                    threshold,
                    flags,
                })
            }
        }
    }

    pub fn is_hit_index(&self, index: usize) -> bool {
        self.flags[index]
    }

    pub fn hit_count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }
}

/// `floor((1 - p/100) * n)`, computed as `(100 - p) * n / 100` so that round
/// percentiles stay exact.
pub fn hit_count(percentile: f64, n: usize) -> usize {
    (((100.0 - percentile) * n as f64) / 100.0 + 1e-9).floor() as usize
}

#[derive(Debug, Clone)]
pub struct CandidatePool {
    candidates: Vec<Candidate>,
    embeddings: EmbeddingTable,
    hit_policy: HitPolicy,
    metric: Metric,
    by_name: HashMap<String, usize>,
}

impl CandidatePool {
    /// Builds a pool from `(name, score)` pairs and their embedding rows.
    pub fn new(
        entries: Vec<(String, f64)>,
        embeddings: Vec<Vec<f64>>,
        rule: HitRule,
        metric: Metric,
    ) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyPool);
        }
        if entries.len() != embeddings.len() {
            return Err(Error::LengthMismatch(entries.len(), embeddings.len()));
        }
        let mut by_name = HashMap::with_capacity(entries.len());
        let mut candidates = Vec::with_capacity(entries.len());
        for (index, (name, score)) in entries.into_iter().enumerate() {
            if name.is_empty() {
                return Err(Error::Config(format!("empty candidate name at row {index}")));
            }
            if !score.is_finite() {
                return Err(Error::NonFinite(name));
            }
            if by_name.insert(name.clone(), index).is_some() {
                return Err(Error::DuplicateName(name));
            }
            candidates.push(Candidate { name, score, index });
        }
        let embeddings = EmbeddingTable::from_rows(embeddings)?;
        if metric == Metric::Cosine {
            if let Some(i) = (0..embeddings.len()).find(|&i| embeddings.sq_norm(i) == 0.0) {
                return Err(Error::Config(format!(
                    "candidate {:?} has a zero embedding, undefined under cosine",
                    candidates[i].name
                )));
            }
        }
        let hit_policy = HitPolicy::resolve(rule, &candidates)?;
        Ok(Self {
            candidates,
            embeddings,
            hit_policy,
            metric,
            by_name,
        })
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn candidates(&self) -> &[Candidate] {
        &self.candidates
    }

    pub fn candidate(&self, index: usize) -> &Candidate {
        &self.candidates[index]
    }

    pub fn name(&self, index: usize) -> &str {
        &self.candidates[index].name
    }

    pub fn score(&self, index: usize) -> f64 {
        self.candidates[index].score
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    pub fn embeddings(&self) -> &EmbeddingTable {
        &self.embeddings
    }

    pub fn embedding(&self, index: usize) -> &[f64] {
        self.embeddings.row(index)
    }

    pub fn dim(&self) -> usize {
        self.embeddings.dim()
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn hit_policy(&self) -> &HitPolicy {
        &self.hit_policy
    }

    pub fn is_hit(&self, name: &str) -> Result<bool> {
        let i = self
            .index_of(name)
            .ok_or_else(|| Error::UnknownCandidate(name.to_string()))?;
        Ok(self.hit_policy.is_hit_index(i))
    }

    pub fn is_hit_index(&self, index: usize) -> bool {
        self.hit_policy.is_hit_index(index)
    }

    pub fn names(&self, indices: &[usize]) -> Vec<String> {
        indices.iter().map(|&i| self.name(i).to_string()).collect()
    }

    /// Writes the pool back out in the ingestion formats. A `hit` column is
    /// emitted only for ground-truth pools.
    pub fn write_csv(&self, measurements: &Path, embeddings: &Path) -> Result<()> {
        let ground_truth = matches!(self.hit_policy.rule, HitRule::GroundTruthSet { .. });
        let mut out = String::from(if ground_truth { "name,score,hit\n" } else { "name,score\n" });
        for c in &self.candidates {
            out.push_str(&csv_field(&c.name));
            out.push(',');
            out.push_str(&c.score.to_string());
            if ground_truth {
                out.push_str(if self.is_hit_index(c.index) { ",1" } else { ",0" });
            }
            out.push('\n');
        }
        write_file(measurements, out.as_bytes())?;

        let mut out = String::new();
        for c in &self.candidates {
            out.push_str(&csv_field(&c.name));
            for v in self.embedding(c.index) {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        write_file(embeddings, out.as_bytes())
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    File::create(path)
        .and_then(|mut f| f.write_all(bytes))
        .map_err(|e| Error::io(path, e))
}

/// Pool-wide `resolve` entry point; returns the policy with its threshold.
pub fn resolve_hit_policy(pool: &CandidatePool) -> Result<HitPolicy> {
    HitPolicy::resolve(pool.hit_policy.rule.clone(), &pool.candidates)
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    pub expected_dim: Option<usize>,
    /// Keep only molecules whose SMILES use these element symbols.
    pub element_filter: Option<BTreeSet<String>>,
    /// Inclusive score bounds; candidates outside are dropped.
    pub score_range: Option<(f64, f64)>,
    /// Overrides the hit rule implied by the measurements file.
    pub hit_rule: Option<HitRule>,
    pub metric: Metric,
}

impl LoadOptions {
    /// Ion. E. preparation: CHNO molecules with scores in [-10, 10].
    pub fn ionization_energy() -> Self {
        Self {
            element_filter: Some(["C", "H", "N", "O"].iter().map(|s| s.to_string()).collect()),
            score_range: Some((-10.0, 10.0)),
            ..Self::default()
        }
    }
}

pub fn load_pool(measurements: &Path, embeddings: &Path, options: &LoadOptions) -> Result<CandidatePool> {
    let rows = read_measurements(measurements)?;
    let has_hit_column = rows.iter().any(|r| r.hit.is_some());

    let mut seen = BTreeSet::new();
    let mut entries = Vec::with_capacity(rows.len());
    let mut ground_truth = BTreeSet::new();
    for row in rows {
        if !seen.insert(row.name.clone()) {
            return Err(Error::DuplicateName(row.name));
        }
        if let Some((lo, hi)) = options.score_range {
            if row.score < lo || row.score > hi {
                continue;
            }
        }
        if let Some(allowed) = &options.element_filter {
            match smiles_elements(&row.name) {
                Some(elements) if elements.iter().all(|e| allowed.contains(e)) => {}
                _ => continue,
            }
        }
        if row.hit == Some(true) {
            ground_truth.insert(row.name.clone());
        }
        entries.push((row.name, row.score));
    }
    if entries.is_empty() {
        return Err(Error::EmptyPool);
    }

    let mut vectors = read_embeddings(embeddings, options.expected_dim)?;
    let mut ordered = Vec::with_capacity(entries.len());
    for (name, _) in &entries {
        let v = vectors
            .remove(name)
            .ok_or_else(|| Error::MissingEmbedding(name.clone()))?;
        ordered.push(v);
    }

    let rule = match &options.hit_rule {
        Some(rule) => rule.clone(),
        None if has_hit_column => HitRule::GroundTruthSet { names: ground_truth },
        None => HitRule::default(),
    };
    CandidatePool::new(entries, ordered, rule, options.metric)
}

struct MeasurementRow {
    name: String,
    score: f64,
    hit: Option<bool>,
}

fn reader(path: &Path, headers: bool) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(headers)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: u64, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn read_measurements(path: &Path) -> Result<Vec<MeasurementRow>> {
    let mut rdr = reader(path, true)?;
    let headers = rdr.headers().map_err(csv_err(path))?.clone();
    let column = |want: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(want));
    let name_col = column("name").ok_or_else(|| parse_err(path, 1, "missing `name` column"))?;
    let score_col = column("score").ok_or_else(|| parse_err(path, 1, "missing `score` column"))?;
    let hit_col = column("hit");

    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_err(path))?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(i).unwrap_or("");
        let name = field(name_col).to_string();
        if name.is_empty() {
            return Err(parse_err(path, line, "empty candidate name"));
        }
        let score: f64 = field(score_col)
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad score {:?}", field(score_col))))?;
        if !score.is_finite() {
            return Err(Error::NonFinite(name));
        }
        let hit = match hit_col.map(field) {
            None | Some("") => None,
            Some("1") => Some(true),
            Some("0") => Some(false),
            Some(other) => return Err(parse_err(path, line, format!("hit must be 0 or 1, got {other:?}"))),
        };
        rows.push(MeasurementRow { name, score, hit });
    }
    Ok(rows)
}

fn read_embeddings(path: &Path, expected_dim: Option<usize>) -> Result<HashMap<String, Vec<f64>>> {
    let mut rdr = reader(path, false)?;
    let mut out = HashMap::new();
    let mut dim = None;
    for record in rdr.records() {
        let record = record.map_err(csv_err(path))?;
        let line = record.position().map_or(0, |p| p.line());
        let mut fields = record.iter();
        let name = match fields.next() {
            Some(n) if !n.is_empty() => n.to_string(),
            _ => continue,
        };
        let vector = fields
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| parse_err(path, line, format!("bad embedding value {f:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(name));
        }
        let expected = *dim.get_or_insert(vector.len());
        if vector.len() != expected {
            return Err(Error::RaggedEmbedding {
                name,
                got: vector.len(),
                expected,
            });
        }
        if out.insert(name.clone(), vector).is_some() {
            return Err(Error::DuplicateName(name));
        }
    }
    match (dim, expected_dim) {
        (Some(got), Some(expected)) if got != expected => Err(Error::DimMismatch { expected, got }),
        (Some(0), _) => Err(parse_err(path, 1, "embedding rows carry no values")),
        _ => Ok(out),
    }
}

/// Element symbols appearing in a SMILES string, or `None` if the string is
/// not parseable at the atom level.
///
/// Bracket atoms contribute their element symbol and any explicit hydrogens;
/// aromatic lowercase atoms are reported in upper case.
pub fn smiles_elements(smiles: &str) -> Option<BTreeSet<String>> {
    const ORGANIC_TWO: [&str; 2] = ["Cl", "Br"];
    const ORGANIC_ONE: &str = "BCNOPSFI";
    const AROMATIC: &str = "bcnops";

    let chars: Vec<char> = smiles.chars().collect();
    let mut out = BTreeSet::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '[' {
            let end = chars[i..].iter().position(|&ch| ch == ']')? + i;
            let inner: String = chars[i + 1..end].iter().collect();
            let body = inner.trim_start_matches(|ch: char| ch.is_ascii_digit());
            let mut it = body.chars().peekable();
            let first = it.next()?;
            let symbol = if first.is_ascii_uppercase() {
                match it.peek() {
                    Some(&l) if l.is_ascii_lowercase() && is_element(&format!("{first}{l}")) => {
                        it.next();
                        format!("{first}{l}")
                    }
                    _ => first.to_string(),
                }
            } else if first.is_ascii_lowercase() {
                if body.starts_with("se") || body.starts_with("as") {
                    it.next();
                    body[..2].to_string()
                } else {
                    first.to_string()
                }
            } else {
                return None;
            };
            out.insert(capitalize(&symbol));
            if it.any(|ch| ch == 'H') {
                out.insert("H".to_string());
            }
            i = end + 1;
            continue;
        }
        if c.is_ascii_alphabetic() {
            let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
            if ORGANIC_TWO.contains(&two.as_str()) {
                out.insert(two);
                i += 2;
                continue;
            }
            if ORGANIC_ONE.contains(c) {
                out.insert(c.to_string());
            } else if AROMATIC.contains(c) {
                out.insert(c.to_ascii_uppercase().to_string());
            } else {
                return None;
            }
        }
        i += 1;
    }
    Some(out)
}

fn capitalize(s: &str) -> String {
    let mut cs = s.chars();
    match cs.next() {
        Some(f) => f.to_ascii_uppercase().to_string() + cs.as_str(),
        None => String::new(),
    }
}

fn is_element(symbol: &str) -> bool {
    const TWO_LETTER: &[&str] = &[
        "He", "Li", "Be", "Ne", "Na", "Mg", "Al", "Si", "Cl", "Ar", "Ca", "Sc", "Ti", "Cr", "Mn",
        "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr", "Zr", "Nb",
        "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In", "Sn", "Sb", "Te", "Xe", "Cs", "Ba", "La",
        "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf",
        "Ta", "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra",
        "Ac", "Th", "Pa", "Np", "Pu", "Am", "Cm", "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr",
    ];
    TWO_LETTER.contains(&symbol)
}
