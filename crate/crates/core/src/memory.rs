//! Candidate memory: explored flags plus exact nearest-unexplored queries.

use crate::data::{sq_norm, CandidatePool, Metric};
use crate::error::{Error, Result};

/// Distance between two embeddings.
///
/// Cosine distance is `1 - a.b / sqrt(|a|^2 |b|^2)`, clamped to `[0, 2]`.
pub fn distance(metric: Metric, a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    match metric {
        Metric::L2Squared => Ok(l2_squared(a, b)),
        Metric::Cosine => {
            let (aa, bb) = (sq_norm(a), sq_norm(b));
            if aa == 0.0 || bb == 0.0 {
                return Err(Error::ZeroVector);
            }
            Ok(cosine_from_parts(dot(a, b), aa, bb))
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn l2_squared(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

// sqrt(aa * bb) rather than sqrt(aa) * sqrt(bb): the former is exact when a == b.
fn cosine_from_parts(ab: f64, aa: f64, bb: f64) -> f64 {
    (1.0 - ab / (aa * bb).sqrt()).clamp(0.0, 2.0)
}

/// Equal-budget split of `batch` over `centers`; the first `batch % centers`
/// entries get one extra.
pub fn center_quotas(batch: usize, centers: usize) -> Vec<usize> {
    let base = batch / centers;
    let extra = batch % centers;
    (0..centers).map(|i| base + usize::from(i < extra)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CenterAllocation {
    pub quotas: Vec<usize>,
    /// Candidates taken by each center, in center order.
    pub per_center: Vec<Vec<usize>>,
}

impl CenterAllocation {
    pub fn selected(&self) -> Vec<usize> {
        self.per_center.iter().flatten().copied().collect()
    }
}

/// Per-run explored state over a shared pool.
#[derive(Debug, Clone)]
pub struct CandidateMemory<'p> {
    pool: &'p CandidatePool,
    explored: Vec<bool>,
    explored_count: usize,
}

impl<'p> CandidateMemory<'p> {
    pub fn new(pool: &'p CandidatePool) -> Self {
        Self {
            pool,
            explored: vec![false; pool.len()],
            explored_count: 0,
        }
    }

    pub fn pool(&self) -> &'p CandidatePool {
        self.pool
    }

    pub fn is_explored(&self, index: usize) -> bool {
        self.explored[index]
    }

    pub fn explored_count(&self) -> usize {
        self.explored_count
    }

    pub fn unexplored_count(&self) -> usize {
        self.explored.len() - self.explored_count
    }

    pub fn unexplored(&self) -> impl Iterator<Item = usize> + '_ {
        self.explored
            .iter()
            .enumerate()
            .filter(|(_, &e)| !e)
            .map(|(i, _)| i)
    }

    pub fn explored(&self) -> impl Iterator<Item = usize> + '_ {
        self.explored
            .iter()
            .enumerate()
            .filter(|(_, &e)| e)
            .map(|(i, _)| i)
    }

    /// Marks candidates by name. Either every name is marked or, on an
    /// unknown name, none is.
    pub fn mark_explored<S: AsRef<str>>(&mut self, names: &[S]) -> Result<()> {
        let indices = names
            .iter()
            .map(|n| {
                self.pool
                    .index_of(n.as_ref())
                    .ok_or_else(|| Error::UnknownCandidate(n.as_ref().to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        self.mark_indices(&indices);
        Ok(())
    }

    pub fn mark_indices(&mut self, indices: &[usize]) {
        for &i in indices {
            if !self.explored[i] {
                self.explored[i] = true;
                self.explored_count += 1;
            }
        }
    }

    /// Distance from `query` to candidate `index` under the pool metric.
    /// `query_sq_norm` must be `sq_norm(query)`.
    fn distance_to(&self, query: &[f64], query_sq_norm: f64, index: usize) -> f64 {
        let row = self.pool.embedding(index);
        match self.pool.metric() {
            Metric::L2Squared => l2_squared(query, row),
            Metric::Cosine => cosine_from_parts(
                dot(query, row),
                query_sq_norm,
                self.pool.embeddings().sq_norm(index),
            ),
        }
    }

    fn check_query(&self, query: &[f64]) -> Result<f64> {
        if query.len() != self.pool.dim() {
            return Err(Error::DimMismatch {
                expected: self.pool.dim(),
                got: query.len(),
            });
        }
        let qq = sq_norm(query);
        if self.pool.metric() == Metric::Cosine && qq == 0.0 {
            return Err(Error::ZeroVector);
        }
        Ok(qq)
    }

    /// The `k` unexplored candidates closest to `query`, nearest first; ties
    /// go to the lower index. Exhaustive scan.
    pub fn nearest_unexplored(&self, query: &[f64], k: usize) -> Result<Vec<usize>> {
        let qq = self.check_query(query)?;
        let mut scored: Vec<(f64, usize)> = self
            .unexplored()
            .map(|i| (self.distance_to(query, qq, i), i))
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k == 0 {
            return Ok(Vec::new());
        }
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, cmp);
            scored.truncate(k);
        }
        scored.sort_unstable_by(cmp);
        Ok(scored.into_iter().map(|(_, i)| i).collect())
    }

    /// Name-level wrapper over [`Self::nearest_unexplored`].
    pub fn nearest_unexplored_names(&self, query: &[f64], k: usize) -> Result<Vec<String>> {
        Ok(self.pool.names(&self.nearest_unexplored(query, k)?))
    }

    /// Fills a batch of `batch` candidates around `centers`.
    ///
    /// Centers are processed in order; each takes its quota of nearest
    /// unexplored candidates and marks them explored before the next center
    /// runs. A pool that runs dry yields a short batch.
    pub fn allocate_batch(&mut self, centers: &[Vec<f64>], batch: usize) -> Result<CenterAllocation> {
        if centers.is_empty() {
            return Err(Error::NoCenters);
        }
        for c in centers {
            self.check_query(c)?;
        }
        let quotas = center_quotas(batch, centers.len());
        let mut per_center = Vec::with_capacity(centers.len());
        for (center, &quota) in centers.iter().zip(&quotas) {
            let picked = self.nearest_unexplored(center, quota)?;
            self.mark_indices(&picked);
            per_center.push(picked);
        }
        Ok(CenterAllocation { quotas, per_center })
    }
}
