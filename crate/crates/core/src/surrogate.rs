//! Classical surrogates over candidate embeddings: a single-model LinUCB and
//! RBF Gaussian-process regression with a UCB acquisition.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memory::CandidateMemory;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurrogateParams {
    pub linucb_lambda: f64,
    pub linucb_alpha: f64,
    /// `None` selects the median pairwise distance of a subsample.
    pub gp_length_scale: Option<f64>,
    /// `None` uses the sample variance of the (standardized) targets.
    pub gp_signal_variance: Option<f64>,
    /// Noise variance as a fraction of the signal variance.
    pub gp_noise_ratio: f64,
    pub gp_beta: f64,
    /// z-score rewards before fitting either surrogate.
    pub standardize: bool,
}

impl Default for SurrogateParams {
    fn default() -> Self {
        Self {
            linucb_lambda: 1.0,
            linucb_alpha: 1.0,
            gp_length_scale: None,
            gp_signal_variance: None,
            gp_noise_ratio: 1e-4,
            gp_beta: 2.0,
            standardize: true,
        }
    }
}

/// Ridge-regression bandit state. `a = lambda*I + sum x x^T`, `b = sum y x`;
/// the inverse of `a` is kept current with Sherman-Morrison updates.
#[derive(Debug, Clone)]
pub struct LinUcbState {
    lambda: f64,
    alpha: f64,
    a: DMatrix<f64>,
    a_inv: DMatrix<f64>,
    b: DVector<f64>,
}

impl LinUcbState {
    pub fn new(dim: usize, lambda: f64, alpha: f64) -> Result<Self> {
        if dim == 0 || !lambda.is_finite() || lambda <= 0.0 || !alpha.is_finite() || alpha < 0.0 {
            return Err(Error::Config(format!(
                "LinUCB needs dim > 0, lambda > 0, alpha >= 0 (got {dim}, {lambda}, {alpha})"
            )));
        }
        Ok(Self {
            lambda,
            alpha,
            a: DMatrix::identity(dim, dim) * lambda,
            a_inv: DMatrix::identity(dim, dim) / lambda,
            b: DVector::zeros(dim),
        })
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn response(&self) -> &DVector<f64> {
        &self.b
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn update(&mut self, x: &[f64], y: f64) -> Result<()> {
        self.check(x)?;
        if !y.is_finite() {
            return Err(Error::NonFinite("LinUCB reward".into()));
        }
        let x = DVector::from_column_slice(x);
        self.a.ger(1.0, &x, &x, 1.0);
        self.b.axpy(y, &x, 1.0);
        let ax = &self.a_inv * &x;
        let denom = 1.0 + x.dot(&ax);
        self.a_inv.ger(-1.0 / denom, &ax, &ax, 1.0);
        Ok(())
    }

    /// Ridge estimate `a^-1 b`.
    pub fn theta(&self) -> DVector<f64> {
        &self.a_inv * &self.b
    }

    /// `x^T a^-1 x`.
    pub fn uncertainty(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        let x = DVector::from_column_slice(x);
        Ok(x.dot(&(&self.a_inv * &x)).max(0.0))
    }

    pub fn score(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        let mean = self.theta().as_slice().iter().zip(x).map(|(t, v)| t * v).sum::<f64>();
        Ok(mean + self.alpha * self.uncertainty(x)?.sqrt())
    }

    /// Scores every row of `xs` (row-major, `dim` columns).
    pub fn score_rows<'a>(&self, xs: impl IntoIterator<Item = &'a [f64]>) -> Result<Vec<f64>> {
        let theta = self.theta();
        xs.into_iter()
            .map(|x| {
                self.check(x)?;
                let v = DVector::from_column_slice(x);
                let mean = theta.dot(&v);
                let u = v.dot(&(&self.a_inv * &v)).max(0.0);
                Ok(mean + self.alpha * u.sqrt())
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RbfKernel {
    pub length_scale: f64,
    pub signal_variance: f64,
}

impl RbfKernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        self.signal_variance * (-0.5 * d2 / (self.length_scale * self.length_scale)).exp()
    }
}

/// Exact GP regression with a zero prior mean.
#[derive(Debug, Clone)]
pub struct GpState {
    kernel: RbfKernel,
    noise_variance: f64,
    beta: f64,
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    fit: Option<GpFit>,
}

#[derive(Debug, Clone)]
struct GpFit {
    chol: Cholesky<f64, Dyn>,
    weights: DVector<f64>,
}

const MAX_JITTER_STEPS: usize = 8;

impl GpState {
    pub fn new(kernel: RbfKernel, noise_variance: f64, beta: f64) -> Result<Self> {
        if !(kernel.length_scale > 0.0 && kernel.signal_variance > 0.0 && noise_variance >= 0.0 && beta >= 0.0) {
            return Err(Error::Config(format!(
                "GP needs length_scale > 0, signal_variance > 0, noise >= 0, beta >= 0 (got {kernel:?}, {noise_variance}, {beta})"
            )));
        }
        Ok(Self {
            kernel,
            noise_variance,
            beta,
            inputs: Vec::new(),
            targets: Vec::new(),
            fit: None,
        })
    }

    pub fn kernel(&self) -> RbfKernel {
        self.kernel
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Replaces the training set and refactorizes `K + noise*I`, adding
    /// escalating diagonal jitter if the factorization fails.
    pub fn fit(&mut self, inputs: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<()> {
        if inputs.len() != targets.len() {
            return Err(Error::LengthMismatch(inputs.len(), targets.len()));
        }
        if let Some(d) = inputs.first().map(Vec::len) {
            if let Some(bad) = inputs.iter().find(|x| x.len() != d) {
                return Err(Error::LengthMismatch(d, bad.len()));
            }
        }
        self.inputs = inputs;
        self.targets = targets;
        self.fit = None;
        let n = self.targets.len();
        if n == 0 {
            return Ok(());
        }
        let k = DMatrix::from_fn(n, n, |i, j| self.kernel.eval(&self.inputs[i], &self.inputs[j]));
        let mut jitter = 0.0;
        for step in 0..=MAX_JITTER_STEPS {
            let mut m = k.clone();
            for i in 0..n {
                m[(i, i)] += self.noise_variance + jitter;
            }
            if let Some(chol) = m.cholesky() {
                let weights = chol.solve(&DVector::from_column_slice(&self.targets));
                self.fit = Some(GpFit { chol, weights });
                return Ok(());
            }
            jitter = self.kernel.signal_variance * 1e-10 * 10f64.powi(step as i32);
        }
        Err(Error::NotPositiveDefinite)
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        match self.inputs.first() {
            Some(first) if first.len() != x.len() => Err(Error::DimMismatch {
                expected: first.len(),
                got: x.len(),
            }),
            _ => Ok(()),
        }
    }

    pub fn posterior(&self, x: &[f64]) -> Result<(f64, f64)> {
        self.check(x)?;
        let Some(fit) = &self.fit else {
            return Ok((0.0, self.kernel.signal_variance));
        };
        let ks = DVector::from_iterator(self.inputs.len(), self.inputs.iter().map(|xi| self.kernel.eval(xi, x)));
        let mean = ks.dot(&fit.weights);
        let v = fit.chol.l().solve_lower_triangular(&ks).expect("cholesky factor is invertible");
        let var = (self.kernel.signal_variance - v.norm_squared()).max(0.0);
        Ok((mean, var))
    }

    /// Posterior for many queries at once.
    pub fn posterior_rows(&self, xs: &[&[f64]]) -> Result<Vec<(f64, f64)>> {
        for x in xs {
            self.check(x)?;
        }
        let Some(fit) = &self.fit else {
            return Ok(vec![(0.0, self.kernel.signal_variance); xs.len()]);
        };
        let n = self.inputs.len();
        let ks = DMatrix::from_fn(n, xs.len(), |i, j| self.kernel.eval(&self.inputs[i], xs[j]));
        let means = ks.tr_mul(&fit.weights);
        let v = fit.chol.l().solve_lower_triangular(&ks).expect("cholesky factor is invertible");
        Ok((0..xs.len())
            .map(|j| {
                let var = (self.kernel.signal_variance - v.column(j).norm_squared()).max(0.0);
                (means[j], var)
            })
            .collect())
    }

    pub fn acquisition(&self, x: &[f64]) -> Result<f64> {
        let (m, v) = self.posterior(x)?;
        Ok(m + self.beta * v.sqrt())
    }

    pub fn acquisition_rows(&self, xs: &[&[f64]]) -> Result<Vec<f64>> {
        Ok(self
            .posterior_rows(xs)?
            .into_iter()
            .map(|(m, v)| m + self.beta * v.sqrt())
            .collect())
    }
}

/// Median Euclidean distance over pairs drawn from at most `max_points`
/// evenly strided rows. Falls back to 1.0 when every pair coincides.
pub fn median_heuristic(rows: &[&[f64]], max_points: usize) -> f64 {
    let stride = rows.len().div_ceil(max_points.max(1)).max(1);
    let sample: Vec<&[f64]> = rows.iter().step_by(stride).copied().collect();
    let mut dists = Vec::with_capacity(sample.len() * sample.len().saturating_sub(1) / 2);
    for i in 0..sample.len() {
        for j in i + 1..sample.len() {
            let d2: f64 = sample[i].iter().zip(sample[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            dists.push(d2.sqrt());
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    let mid = dists.len() / 2;
    let (_, m, _) = dists.select_nth_unstable_by(mid, f64::total_cmp);
    let median = *m;
    if median > 0.0 {
        median
    } else {
        1.0
    }
}

/// z-scores `ys`; returns the transformed values with `(mean, std)`.
/// A zero spread leaves values centered but unscaled.
pub fn standardize(ys: &[f64]) -> (Vec<f64>, f64, f64) {
    if ys.is_empty() {
        return (Vec::new(), 0.0, 1.0);
    }
    let n = ys.len() as f64;
    let mean = ys.iter().sum::<f64>() / n;
    let var = ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n;
    let std = if var > 0.0 { var.sqrt() } else { 1.0 };
    (ys.iter().map(|y| (y - mean) / std).collect(), mean, std)
}

/// Takes the `batch` unexplored candidates with the highest `scores`
/// (indexed by candidate), ties to the lower index, and marks them explored.
pub fn select_top_b(scores: &[f64], memory: &mut CandidateMemory<'_>, batch: usize) -> Result<Vec<usize>> {
    if batch == 0 {
        return Err(Error::ZeroBatch);
    }
    if scores.len() != memory.pool().len() {
        return Err(Error::LengthMismatch(memory.pool().len(), scores.len()));
    }
    let mut order: Vec<usize> = memory.unexplored().collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(batch);
    memory.mark_indices(&order);
    Ok(order)
}
