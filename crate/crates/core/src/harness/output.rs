//! CSV output of experiment results.
//!
//! * `runs.csv`: `run,step,strategy,auc` (empty `auc` when not evaluable)
//! * `aggregate.csv`: `step,strategy,mean_auc,stderr,runs`
//! * `trajectories.csv`: `object,affordance,strategy,step,mean_probability`
//! * `evaluation.csv`: `run,step,strategy,restricted,evaluated_predicates`

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::experiment::{ExperimentResult, StepReport};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub step: usize,
    pub strategy: String,
    pub mean_auc: f64,
    /// Standard error of the mean over runs (0 for a single run).
    pub stderr: f64,
    pub runs: usize,
}

/// Mean and standard error of the AUC per (step, strategy), over the runs in
/// which it was evaluable.
pub fn aggregate(reports: &[StepReport]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(usize, &str), Vec<f64>> = BTreeMap::new();
    for r in reports {
        if let Some(a) = r.auc {
            groups.entry((r.step, r.strategy.as_str())).or_default().push(a);
        }
    }
    groups
        .into_iter()
        .map(|((step, strategy), v)| {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let stderr = if v.len() > 1 {
                let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
                (var / n).sqrt()
            } else {
                0.0
            };
            AggregateRow {
                step,
                strategy: strategy.to_string(),
                mean_auc: mean,
                stderr,
                runs: v.len(),
            }
        })
        .collect()
}

/// Writes the four CSV files into `dir` (created if missing) and returns their paths.
pub fn emit_results(result: &ExperimentResult, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let paths: Vec<PathBuf> = ["runs.csv", "aggregate.csv", "trajectories.csv", "evaluation.csv"]
        .iter()
        .map(|f| dir.join(f))
        .collect();

    let mut w = csv::Writer::from_path(&paths[0])?;
    w.write_record(["run", "step", "strategy", "auc"])?;
    for r in &result.reports {
        let auc = r.auc.map(|a| a.to_string()).unwrap_or_default();
        w.write_record([r.run.to_string(), r.step.to_string(), r.strategy.clone(), auc])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(&paths[1])?;
    w.write_record(["step", "strategy", "mean_auc", "stderr", "runs"])?;
    for a in aggregate(&result.reports) {
        w.write_record([
            a.step.to_string(),
            a.strategy,
            a.mean_auc.to_string(),
            a.stderr.to_string(),
            a.runs.to_string(),
        ])?;
    }
    w.flush()?;

    let mut traj: BTreeMap<(String, String, String, usize), (f64, usize)> = BTreeMap::new();
    for r in &result.reports {
        for (atom, p) in &r.marginals {
            let object = atom.args.first().cloned().unwrap_or_default();
            let rest = atom.args[1.min(atom.args.len())..].join(",");
            let e = traj
                .entry((object, rest, r.strategy.clone(), r.step))
                .or_insert((0.0, 0));
            e.0 += p;
            e.1 += 1;
        }
    }
    let mut w = csv::Writer::from_path(&paths[2])?;
    w.write_record(["object", "affordance", "strategy", "step", "mean_probability"])?;
    for ((object, aff, strategy, step), (sum, n)) in traj {
        w.write_record([object, aff, strategy, step.to_string(), (sum / n as f64).to_string()])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(&paths[3])?;
    w.write_record(["run", "step", "strategy", "restricted", "evaluated_predicates"])?;
    for r in &result.reports {
        w.write_record([
            r.run.to_string(),
            r.step.to_string(),
            r.strategy.clone(),
            r.restricted.to_string(),
            r.evaluated_predicates.join(";"),
        ])?;
    }
    w.flush()?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grounding::GroundAtom;

    fn report(run: usize, step: usize, s: &str, auc: Option<f64>) -> StepReport {
        StepReport {
            run,
            step,
            strategy: s.into(),
            auc,
            evaluated_predicates: vec!["P".into()],
            restricted: false,
            marginals: vec![(GroundAtom::new("HasAffordance", ["O1", "Push"]), 0.25 * (run + 1) as f64)],
        }
    }

    #[test]
    fn empty_result_gives_headers_only() {
        let dir = tempfile::tempdir().unwrap();
        let res = ExperimentResult {
            reports: vec![],
            final_formulas: vec![],
        };
        for p in emit_results(&res, dir.path()).unwrap() {
            let text = std::fs::read_to_string(p).unwrap();
            assert_eq!(text.lines().count(), 1);
        }
    }

    #[test]
    fn aggregation_and_trajectories() {
        let res = ExperimentResult {
            reports: vec![report(0, 1, "naive", Some(0.5)), report(1, 1, "naive", Some(0.7)), report(0, 2, "naive", None)],
            final_formulas: vec![],
        };
        let agg = aggregate(&res.reports);
        assert_eq!(agg.len(), 1);
        assert!((agg[0].mean_auc - 0.6).abs() < 1e-15);
        assert!((agg[0].stderr - 0.1).abs() < 1e-12);
        let dir = tempfile::tempdir().unwrap();
        let paths = emit_results(&res, dir.path()).unwrap();
        let runs = std::fs::read_to_string(&paths[0]).unwrap();
        assert!(runs.contains("0,2,naive,\n"));
        let traj = std::fs::read_to_string(&paths[2]).unwrap();
        assert!(traj.contains("O1,Push,naive,1,0.375"));
    }
}
