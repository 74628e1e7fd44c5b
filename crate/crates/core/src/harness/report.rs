use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::RunResult;
use crate::agents::{AgentKind, FeedbackMode};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Mean and population standard deviation of cumulative hits across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub agent: AgentKind,
    pub dataset: String,
    pub feedback: FeedbackMode,
    pub rounds: usize,
    pub runs: usize,
    pub excluded_incomplete: usize,
    pub mean_final: f64,
    pub std_final: f64,
    pub mean_trajectory: Vec<f64>,
}

/// True versus randomized feedback over runs sharing a seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub pairs: usize,
    pub mean_true: f64,
    pub mean_randomized: f64,
    /// Mean of `true - randomized` final hits over the pairs.
    pub mean_difference: f64,
    pub std_difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub summaries: Vec<Summary>,
    pub paired: Option<PairedComparison>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Aggregates runs of one configuration. Incomplete runs are dropped
/// unless `include_incomplete` is set.
pub fn aggregate_runs(runs: &[RunResult], include_incomplete: bool) -> Result<Summary> {
    let first = runs.first().ok_or_else(|| Error::Config("no runs to aggregate".into()))?;
    for r in runs {
        if r.agent != first.agent
            || r.dataset != first.dataset
            || r.feedback != first.feedback
            || r.rounds_planned != first.rounds_planned
        {
            return Err(Error::MixedConfigs(format!(
                "{}/{}/{} vs {}/{}/{}",
                first.agent, first.dataset, first.feedback, r.agent, r.dataset, r.feedback
            )));
        }
    }
    let kept: Vec<&RunResult> = runs.iter().filter(|r| include_incomplete || r.complete).collect();
    let rounds = first.rounds_planned;
    let finals: Vec<f64> = kept.iter().map(|r| r.final_hits() as f64).collect();
    let (mean_final, std_final) = mean_std(&finals);
    let mean_trajectory = (0..rounds)
        .map(|t| {
            let col: Vec<f64> = kept
                .iter()
                .map(|r| {
                    // short runs carry their last total forward
                    r.rounds
                        .get(t)
                        .or(r.rounds.last())
                        .map_or(0.0, |x| x.cumulative_hits as f64)
                })
                .collect();
            mean_std(&col).0
        })
        .collect();
    Ok(Summary {
        schema_version: SCHEMA_VERSION,
        agent: first.agent,
        dataset: first.dataset.clone(),
        feedback: first.feedback,
        rounds,
        runs: kept.len(),
        excluded_incomplete: runs.len() - kept.len(),
        mean_final,
        std_final,
        mean_trajectory,
    })
}

/// Pairs complete runs by seed.
pub fn compare_paired(true_runs: &[RunResult], randomized: &[RunResult]) -> PairedComparison {
    let mut t = Vec::new();
    let mut r = Vec::new();
    for a in true_runs.iter().filter(|a| a.complete) {
        if let Some(b) = randomized.iter().find(|b| b.complete && b.seed == a.seed) {
            t.push(a.final_hits() as f64);
            r.push(b.final_hits() as f64);
        }
    }
    let diffs: Vec<f64> = t.iter().zip(&r).map(|(a, b)| a - b).collect();
    let (mean_difference, std_difference) = mean_std(&diffs);
    PairedComparison {
        pairs: t.len(),
        mean_true: mean_std(&t).0,
        mean_randomized: mean_std(&r).0,
        mean_difference,
        std_difference,
    }
}

fn write(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `results.csv`, `summary.json`, `runs.json` and one trace file per
/// run into `dir`. Output depends only on the inputs.
pub fn write_report(dir: &Path, groups: &[Vec<RunResult>], include_incomplete: bool) -> Result<Report> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let rounds = groups
        .iter()
        .flatten()
        .map(|r| r.rounds_planned)
        .max()
        .unwrap_or(0);

    let mut csv = String::from("schema_version,agent,dataset,feedback,run,seed,complete,final_hits");
    for t in 1..=rounds {
        csv.push_str(&format!(",hits_r{t}"));
    }
    csv.push('\n');

    let mut all = Vec::new();
    let mut summaries = Vec::new();
    for group in groups {
        if group.is_empty() {
            continue;
        }
        summaries.push(aggregate_runs(group, include_incomplete)?);
        for run in group {
            let mut run = run.clone();
            let name = format!("trace-{}-{}-run{}.jsonl", run.agent, run.feedback, run.run);
            run.trace.write_jsonl(&dir.join(&name))?;
            run.trace_path = Some(name.into());

            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{}",
                SCHEMA_VERSION,
                run.agent,
                run.dataset,
                run.feedback,
                run.run,
                run.seed,
                run.complete,
                run.final_hits()
            ));
            for t in 0..rounds {
                match run.rounds.get(t) {
                    Some(r) => csv.push_str(&format!(",{}", r.cumulative_hits)),
                    None => csv.push(','),
                }
            }
            csv.push('\n');
            all.push(run);
        }
    }

    let true_runs: Vec<RunResult> = all.iter().filter(|r| r.feedback == FeedbackMode::True).cloned().collect();
    let rand_runs: Vec<RunResult> = all
        .iter()
        .filter(|r| r.feedback == FeedbackMode::Randomized)
        .cloned()
        .collect();
    let paired = (!true_runs.is_empty() && !rand_runs.is_empty()).then(|| compare_paired(&true_runs, &rand_runs));

    let report = Report {
        schema_version: SCHEMA_VERSION,
        summaries,
        paired,
    };
    write(&dir.join("results.csv"), csv.as_bytes())?;
    write(&dir.join("summary.json"), &serde_json::to_vec_pretty(&report)?)?;
    write(&dir.join("runs.json"), &serde_json::to_vec_pretty(&all)?)?;
    Ok(report)
}

/// Reads `runs.json` back and regroups it by agent and feedback mode.
pub fn read_runs(dir: &Path) -> Result<Vec<Vec<RunResult>>> {
    let path = dir.join("runs.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let runs: Vec<RunResult> = serde_json::from_str(&text)?;
    let mut groups: Vec<Vec<RunResult>> = Vec::new();
    for run in runs {
        match groups
            .iter_mut()
            .find(|g| g[0].agent == run.agent && g[0].feedback == run.feedback && g[0].dataset == run.dataset)
        {
            Some(g) => g.push(run),
            None => groups.push(vec![run]),
        }
    }
    Ok(groups)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::RoundRecord;
    use crate::trace::Trace;

    fn run(seed: u64, hits: &[usize], complete: bool, feedback: FeedbackMode) -> RunResult {
        RunResult {
            agent: AgentKind::Llmnn,
            dataset: "d".into(),
            feedback,
            run: seed as usize,
            seed,
            rounds_planned: 3,
            batch_size: 2,
            rounds: hits
                .iter()
                .enumerate()
                .map(|(i, &h)| RoundRecord {
                    round: i + 1,
                    selected: vec![],
                    hits: vec![],
                    cumulative_hits: h,
                })
                .collect(),
            complete,
            error: None,
            warnings: vec![],
            trace_path: None,
            trace: Trace::default(),
        }
    }

    #[test]
    fn population_std_and_trajectory() {
        let runs = [
            run(0, &[1, 2, 4], true, FeedbackMode::True),
            run(1, &[0, 2, 6], true, FeedbackMode::True),
        ];
        let s = aggregate_runs(&runs, false).unwrap();
        assert_eq!(s.mean_final, 5.0);
        assert_eq!(s.std_final, 1.0);
        assert_eq!(s.mean_trajectory, [0.5, 2.0, 5.0]);
    }

    #[test]
    fn incomplete_runs_are_excluded_by_default() {
        let runs = [
            run(0, &[1, 2, 4], true, FeedbackMode::True),
            run(1, &[3], false, FeedbackMode::True),
        ];
        let s = aggregate_runs(&runs, false).unwrap();
        assert_eq!((s.runs, s.excluded_incomplete, s.mean_final), (1, 1, 4.0));
        let s = aggregate_runs(&runs, true).unwrap();
        assert_eq!(s.mean_final, 3.5);
        assert_eq!(s.mean_trajectory, [2.0, 2.5, 3.5]);
    }

    #[test]
    fn mixed_configs_are_rejected() {
        let mut b = run(1, &[1, 1, 1], true, FeedbackMode::True);
        b.agent = AgentKind::Bda;
        let err = aggregate_runs(&[run(0, &[1, 1, 1], true, FeedbackMode::True), b], false);
        assert!(matches!(err, Err(Error::MixedConfigs(_))));
    }

    #[test]
    fn paired_by_seed() {
        let t = [
            run(0, &[1, 2, 5], true, FeedbackMode::True),
            run(1, &[1, 2, 7], true, FeedbackMode::True),
        ];
        let r = [
            run(1, &[1, 2, 4], true, FeedbackMode::Randomized),
            run(0, &[1, 2, 4], true, FeedbackMode::Randomized),
        ];
        let p = compare_paired(&t, &r);
        assert_eq!(p.pairs, 2);
        assert_eq!(p.mean_difference, 2.0);
        assert_eq!(p.std_difference, 1.0);
    }

    #[test]
    fn report_round_trips_through_runs_json() {
        let dir = tempfile::tempdir().unwrap();
        let groups = vec![
            vec![run(0, &[1, 2, 4], true, FeedbackMode::True)],
            vec![run(0, &[0, 1, 1], true, FeedbackMode::Randomized)],
        ];
        let report = write_report(dir.path(), &groups, false).unwrap();
        assert_eq!(report.paired.as_ref().unwrap().mean_difference, 3.0);
        let csv = fs::read_to_string(dir.path().join("results.csv")).unwrap();
        assert_eq!(
            csv.lines().next().unwrap(),
            "schema_version,agent,dataset,feedback,run,seed,complete,final_hits,hits_r1,hits_r2,hits_r3"
        );
        assert_eq!(csv.lines().nth(1).unwrap(), "1,llmnn,d,true,0,0,true,4,1,2,4");
        let back = read_runs(dir.path()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0][0].trajectory(), [1, 2, 4]);
        assert!(dir.path().join("trace-llmnn-randomized-run0.jsonl").exists());
    }
}
