//! Shared fixtures and brute-force reference implementations for the
//! integration and acceptance tests. Nothing here calls into the library's
//! numerics; the references are written from the textbook formulas.

#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::BTreeSet;

use expdesign_core::agents::{Feedback, FeedbackRecord};
use expdesign_core::data::{CandidatePool, HitRule, Metric};
use expdesign_core::llm::{render_prompt, Descriptor, Domain, PromptSpec, PromptVariant};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard normal draw via Box-Muller.
pub fn normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn gaussian_rows(rng: &mut impl Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..dim).map(|_| normal(rng)).collect()).collect()
}

/// `n` candidates named `c0..` with distinct scores `0..n` in shuffled order;
/// the top `floor(n / 10)` scores are hits.
pub fn random_pool(rng: &mut impl Rng, n: usize, dim: usize, metric: Metric) -> CandidatePool {
    let mut scores: Vec<f64> = (0..n).map(|i| i as f64).collect();
    scores.shuffle(rng);
    let cut = (n - n / 10) as f64;
    let names = (0..n).filter(|&i| scores[i] >= cut).map(|i| format!("c{i}")).collect();
    let entries = scores.iter().enumerate().map(|(i, &s)| (format!("c{i}"), s)).collect();
    CandidatePool::new(entries, gaussian_rows(rng, n, dim), HitRule::GroundTruthSet { names }, metric).unwrap()
}

/// Pool of `n` points with hits given by a fixed name set.
pub fn pool_with_hits(rows: Vec<Vec<f64>>, scores: Vec<f64>, hits: &[usize], metric: Metric) -> CandidatePool {
    let names: BTreeSet<String> = hits.iter().map(|i| format!("c{i}")).collect();
    let entries = scores.into_iter().enumerate().map(|(i, s)| (format!("c{i}"), s)).collect();
    CandidatePool::new(entries, rows, HitRule::GroundTruthSet { names }, metric).unwrap()
}

/// Synthetic benchmark: `n` points in `dim` dimensions drawn from N(0, I),
/// score `-|x - c*|` plus N(0, noise^2) with `|c*| = 10` along a random
/// direction, hits the top 10% by score, squared-L2 metric. The seed is
/// salted so the pool never shares a stream with a run seeded the same way.
pub fn benchmark_pool(seed: u64, n: usize, dim: usize, noise: f64) -> CandidatePool {
    let mut r = rng(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut dir: Vec<f64> = (0..dim).map(|_| normal(&mut r)).collect();
    let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in &mut dir {
        *x *= 10.0 / norm;
    }
    let rows = gaussian_rows(&mut r, n, dim);
    let entries = rows
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let d = x.iter().zip(&dir).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            (format!("c{i}"), -d + noise * normal(&mut r))
        })
        .collect();
    CandidatePool::new(entries, rows, HitRule::top_percentile(90.0), Metric::L2Squared).unwrap()
}

pub fn ref_distance(metric: Metric, a: &[f64], b: &[f64]) -> f64 {
    let mut ab = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    let mut l2 = 0.0;
    for i in 0..a.len() {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
        l2 += (a[i] - b[i]) * (a[i] - b[i]);
    }
    match metric {
        Metric::L2Squared => l2,
        Metric::Cosine => (1.0 - ab / (aa * bb).sqrt()).clamp(0.0, 2.0),
    }
}

/// Brute-force k nearest unexplored: score everything, stable sort, cut.
pub fn ref_nearest(pool: &CandidatePool, explored: &[bool], query: &[f64], k: usize) -> Vec<usize> {
    let mut all: Vec<(f64, usize)> = (0..pool.len())
        .filter(|&i| !explored[i])
        .map(|i| (ref_distance(pool.metric(), query, pool.embedding(i)), i))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    all.into_iter().take(k).map(|(_, i)| i).collect()
}

/// Solves `m x = v` by Gaussian elimination with partial pivoting.
pub fn solve(mut m: Vec<Vec<f64>>, mut v: Vec<f64>) -> Vec<f64> {
    let n = v.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&a, &b| m[a][col].abs().partial_cmp(&m[b][col].abs()).unwrap())
            .unwrap();
        m.swap(col, piv);
        v.swap(col, piv);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for c in col..n {
                m[row][c] -= f * m[col][c];
            }
            v[row] -= f * v[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| m[row][c] * x[c]).sum();
        x[row] = (v[row] - s) / m[row][row];
    }
    x
}

/// Ridge solution `(X^T X + lambda I)^-1 X^T y`.
pub fn ref_ridge(xs: &[Vec<f64>], ys: &[f64], lambda: f64) -> Vec<f64> {
    let d = xs[0].len();
    let mut a = vec![vec![0.0; d]; d];
    let mut b = vec![0.0; d];
    for (x, &y) in xs.iter().zip(ys) {
        for i in 0..d {
            b[i] += x[i] * y;
            for j in 0..d {
                a[i][j] += x[i] * x[j];
            }
        }
    }
    for (i, row) in a.iter_mut().enumerate() {
        row[i] += lambda;
    }
    solve(a, b)
}

pub fn ref_rbf(a: &[f64], b: &[f64], length_scale: f64, signal_variance: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    signal_variance * (-d2 / (2.0 * length_scale * length_scale)).exp()
}

/// GP posterior mean and variance at `x`:
/// `k*^T (K + s I)^-1 y` and `k(x, x) - k*^T (K + s I)^-1 k*`.
pub fn ref_gp(
    xs: &[Vec<f64>],
    ys: &[f64],
    x: &[f64],
    length_scale: f64,
    signal_variance: f64,
    noise: f64,
) -> (f64, f64) {
    let n = xs.len();
    let kernel = |a: &[f64], b: &[f64]| ref_rbf(a, b, length_scale, signal_variance);
    let mut k = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            k[i][j] = kernel(&xs[i], &xs[j]);
        }
        k[i][i] += noise;
    }
    let ks: Vec<f64> = xs.iter().map(|xi| kernel(xi, x)).collect();
    let alpha = solve(k.clone(), ys.to_vec());
    let v = solve(k, ks.clone());
    let mean = ks.iter().zip(&alpha).map(|(a, b)| a * b).sum();
    let var = kernel(x, x) - ks.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
    (mean, var)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

/// A well-formed LLM answer listing `names` under `**Solution:`.
pub fn answer<S: AsRef<str>>(names: &[S]) -> String {
    let mut s = String::from("**Reflection: scripted.\n**Research Plan: scripted.\n**Solution:\n");
    for n in names {
        s.push_str("## ");
        s.push_str(n.as_ref());
        s.push('\n');
    }
    s
}

fn table_rows<'a>(lines: impl Iterator<Item = &'a str>) -> Vec<(String, f64)> {
    let mut rows = Vec::new();
    for line in lines {
        let mut parts = line.split_whitespace();
        match (parts.next(), parts.next().map(str::parse::<f64>), parts.next()) {
            (Some(n), Some(Ok(s)), None) => rows.push((n.to_string(), s)),
            _ => break,
        }
    }
    rows.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    rows
}

/// Rows of the `[HITS]` table in a rendered prompt, best score first.
pub fn hits_in_prompt(user: &str) -> Vec<(String, f64)> {
    table_rows(user.lines().skip_while(|l| *l != "[HITS]").skip(2))
}

/// Every feedback row in a rendered prompt, best score first.
pub fn feedback_in_prompt(user: &str) -> Vec<(String, f64)> {
    let mut rows = hits_in_prompt(user);
    rows.extend(table_rows(user.lines().skip_while(|l| *l != "[OTHER RESULTS]").skip(2)));
    rows.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    rows
}

/// How many names a rendered prompt asks for, read from its last
/// placeholder line, e.g. `## <Gene 5>`.
pub fn requested_count(user: &str) -> usize {
    user.lines()
        .rev()
        .find_map(|l| l.strip_prefix("## <")?.strip_suffix('>')?.rsplit(' ').next()?.parse().ok())
        .unwrap_or(0)
}

pub fn golden_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/golden")
        .canonicalize()
        .expect("golden directory exists")
}

fn sample_feedback(domain: Domain) -> Feedback {
    let names: [&str; 5] = match domain {
        Domain::Genes => ["WDR5", "MYC", "ABL1", "QRFP", "HNF4A"],
        Domain::Molecules => ["CCO", "c1ccccc1O", "CC(=O)N", "CCN(CC)CC", "OC(=O)CO"],
    };
    let scores = [0.82, 0.41, 0.09, 0.0, -0.004];
    let hits = [true, true, false, false, false];
    Feedback::new(
        names
            .iter()
            .zip(scores)
            .zip(hits)
            .map(|((n, score), hit)| FeedbackRecord {
                name: n.to_string(),
                score,
                hit,
            })
            .collect(),
    )
}

/// Batch and centre counts used by the benchmark for each dataset.
fn budget(dataset: &str) -> (usize, usize) {
    match dataset {
        "ESOL" => (64, 4),
        "FreeSolv" => (32, 4),
        _ => (128, 5),
    }
}

fn slug(dataset: &str) -> String {
    dataset
        .chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .map(|c| c.to_ascii_lowercase())
        .collect()
}

/// Every dataset descriptor x prompt variant x {first, later} round, as
/// `(golden file name, rendered text)`.
pub fn golden_cases() -> Vec<(String, String)> {
    let variants = [
        (PromptVariant::Llmnn, "llmnn"),
        (PromptVariant::LlmnnNoexp, "llmnn-noexp"),
        (PromptVariant::Bda, "bda"),
    ];
    let mut out = Vec::new();
    for dataset in Descriptor::PRESETS {
        let d = Descriptor::preset(dataset).unwrap();
        let (batch_len, num_centers) = budget(dataset);
        let fb = sample_feedback(d.domain);
        for (variant, vname) in variants {
            for round in [1, 2] {
                let p = render_prompt(&PromptSpec {
                    descriptor: &d,
                    variant,
                    round,
                    batch_len,
                    num_centers,
                    feedback: (round > 1).then_some(&fb),
                    followup: None,
                })
                .unwrap();
                out.push((
                    format!("{}_{vname}_round{round}.txt", slug(dataset)),
                    format!("[SYSTEM]\n{}\n[USER]\n{}\n", p.system, p.user),
                ));
            }
        }
    }
    out
}

/// The feedback table shown in round 2 of the published IL2 trace.
pub fn il2_round2_feedback() -> Feedback {
    let text = std::fs::read_to_string(golden_dir().join("il2_round2_feedback.csv")).unwrap();
    let records = text
        .lines()
        .skip(1)
        .map(|l| {
            let mut parts = l.split(',');
            let name = parts.next().unwrap().to_string();
            let score: f64 = parts.next().unwrap().parse().unwrap();
            let hit = parts.next().unwrap() == "1";
            FeedbackRecord { name, score, hit }
        })
        .collect();
    Feedback::new(records)
}

/// The two IL2 LLMNN prompts from the published trace, rendered, as
/// `(golden file name, rendered text)`.
pub fn il2_trace_cases() -> Vec<(String, String)> {
    let d = Descriptor::preset("IL2").unwrap();
    let fb = il2_round2_feedback();
    let mut out = Vec::new();
    for round in [1, 2] {
        let p = render_prompt(&PromptSpec {
            descriptor: &d,
            variant: PromptVariant::Llmnn,
            round,
            batch_len: 128,
            num_centers: 5,
            feedback: (round > 1).then_some(&fb),
            followup: None,
        })
        .unwrap();
        out.push((format!("il2_llmnn_round{round}.system.txt"), p.system));
        out.push((format!("il2_llmnn_round{round}.user.txt"), p.user));
    }
    out
}
