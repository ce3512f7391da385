use std::collections::BTreeSet;

use mlncla::harness::{
    aggregate, emit_results, generate_synthetic_dataset, run_formulas_experiment, ExperimentConfig,
};

#[test]
fn formulas_experiment_at_full_scale() {
    let ds = generate_synthetic_dataset(1, 40, 22).unwrap();
    let mut cfg = ExperimentConfig::new(ds);
    cfg.runs = 5;
    let res = run_formulas_experiment(&cfg).unwrap();
    let names: BTreeSet<&str> = res.reports.iter().map(|r| r.strategy.as_str()).collect();
    assert_eq!(names.len(), 5);
    for n in &names {
        let mine: Vec<_> = res.reports.iter().filter(|r| r.strategy == *n).collect();
        assert_eq!(mine.len(), 25, "{n}");
        let steps: BTreeSet<(usize, usize)> = mine.iter().map(|r| (r.run, r.step)).collect();
        assert_eq!(steps.len(), 25);
    }
    for r in &res.reports {
        if let Some(a) = r.auc {
            assert!((0.0..=1.0).contains(&a));
        }
        if r.step == 5 {
            assert!(!r.restricted);
            assert!(r.auc.is_some());
        }
    }
    // All runs end with the full formula set, whatever the order.
    assert!(res.final_formulas.iter().all(|(_, _, f)| *f == res.final_formulas[0].2));

    let dir = tempfile::tempdir().unwrap();
    emit_results(&res, dir.path()).unwrap();
    let eval = std::fs::read_to_string(dir.path().join("evaluation.csv")).unwrap();
    assert_eq!(eval.lines().count(), 1 + 5 * 25);
    assert_eq!(aggregate(&res.reports).iter().filter(|a| a.step == 5).count(), 5);
}
