//! Constant-stream and formula-stream experiments with batch baselines.

use std::collections::{BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::auc::auc_roc;
use super::synthetic::Dataset;
use crate::cumulative::{cla_step, ClaOptions, Incoming, KnowledgeList, UpdateStrategy};
use crate::error::{Error, Result};
use crate::grounding::{GroundAtom, GroundingOptions};
use crate::inference::{query, GibbsParams, InferenceMethod, DEFAULT_MAX_FREE_ATOMS};
use crate::learning::{learn_discriminative, learn_generative, LearnOptions};
use crate::logic::{find_decl, EvidenceDatabase, MlnModel};

pub const BATCH_GENERATIVE: &str = "batch-generative";
pub const BATCH_DISCRIMINATIVE: &str = "batch-discriminative";

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub dataset: Dataset,
    /// Learning steps (constants experiment); the formulas experiment takes
    /// one step per formula.
    pub steps: usize,
    pub runs: usize,
    pub strategies: Vec<UpdateStrategy>,
    pub seed: u64,
    pub cla: ClaOptions,
    /// Options for the discriminative baseline.
    pub discriminative: LearnOptions,
    pub inference: InferenceMethod,
    pub baselines: bool,
}

impl ExperimentConfig {
    pub fn new(dataset: Dataset) -> Self {
        let discriminative = LearnOptions {
            method: crate::learning::LearnMethod::Discriminative,
            query_predicates: vec![dataset.query_predicate.clone()],
            ..LearnOptions::default()
        };
        ExperimentConfig {
            dataset,
            steps: 8,
            runs: 20,
            strategies: UpdateStrategy::BUILTIN.to_vec(),
            seed: 0,
            cla: ClaOptions::default(),
            discriminative,
            inference: InferenceMethod::Auto {
                max_free_atoms: DEFAULT_MAX_FREE_ATOMS,
                gibbs: GibbsParams::with_seed(0),
            },
            baselines: true,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Invalid("an experiment needs at least one run".into()));
        }
        if self.steps == 0 {
            return Err(Error::Invalid("an experiment needs at least one step".into()));
        }
        if find_decl(&self.dataset.model.decls, &self.dataset.query_predicate).is_none() {
            return Err(Error::UndeclaredPredicate {
                name: self.dataset.query_predicate.clone(),
                line: 0,
            });
        }
        Ok(())
    }

    fn grounding(&self) -> &GroundingOptions {
        &self.cla.learn.grounding
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub run: usize,
    /// 1-based.
    pub step: usize,
    pub strategy: String,
    /// `None` when the query predicate is not known yet or the labels hold a
    /// single class.
    pub auc: Option<f64>,
    /// Predicates whose test evidence was used.
    pub evaluated_predicates: Vec<String>,
    /// Whether the test evidence was restricted to known predicates.
    pub restricted: bool,
    pub marginals: Vec<(GroundAtom, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub reports: Vec<StepReport>,
    /// Canonical formula keys of each (run, strategy) final list.
    pub final_formulas: Vec<(usize, String, BTreeSet<String>)>,
}

/// Test evidence without the query atoms, restricted to `known` predicates,
/// and the set of positive query atoms.
fn split_test(ds: &Dataset, known: &BTreeSet<String>) -> (EvidenceDatabase, HashSet<GroundAtom>) {
    let evidence = ds
        .test
        .filter(|a| a.predicate != ds.query_predicate && known.contains(&a.predicate));
    let labels = ds
        .test
        .atoms
        .iter()
        .filter(|a| a.predicate == ds.query_predicate && a.positive)
        .map(|a| GroundAtom::new(a.predicate.clone(), a.args.iter().cloned()))
        .collect();
    (evidence, labels)
}

/// Marginals of the query predicate over the test objects and their AUC.
fn evaluate(
    cfg: &ExperimentConfig,
    model: &MlnModel,
    known: &BTreeSet<String>,
) -> Result<(Option<f64>, Vec<String>, Vec<(GroundAtom, f64)>)> {
    let ds = &cfg.dataset;
    let evaluated: Vec<String> = known.iter().cloned().collect();
    if !known.contains(&ds.query_predicate) {
        return Ok((None, evaluated, Vec::new()));
    }
    let (evidence, labels) = split_test(ds, known);
    let model = model.without_extra_constants();
    let mut model = model;
    for a in &ds.test.atoms {
        if let Some(d) = find_decl(&model.decls, &a.predicate) {
            for (c, dom) in a.args.iter().zip(&d.arg_domains) {
                if dom == &ds.object_domain {
                    model.domains.insert(dom.clone(), c.clone());
                }
            }
        }
    }
    let result = query(
        &model,
        &evidence,
        std::slice::from_ref(&ds.query_predicate),
        &cfg.inference,
        cfg.grounding(),
    )?;
    let scores: Vec<f64> = result.probabilities.clone();
    let truth: Vec<bool> = result.atoms.iter().map(|a| labels.contains(a)).collect();
    let auc = match auc_roc(&scores, &truth) {
        Ok(v) => Some(v),
        Err(Error::SingleClass) => None,
        Err(e) => return Err(e),
    };
    Ok((auc, evaluated, result.iter().map(|(a, p)| (a.clone(), p)).collect()))
}

fn object_positions(ds: &Dataset, predicate: &str) -> Vec<usize> {
    find_decl(&ds.model.decls, predicate)
        .map(|d| {
            d.arg_domains
                .iter()
                .enumerate()
                .filter(|(_, dom)| **dom == ds.object_domain)
                .map(|(i, _)| i)
                .collect()
        })
        .unwrap_or_default()
}

/// Training objects in first-appearance order.
pub fn training_objects(ds: &Dataset) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for a in &ds.train.atoms {
        for i in object_positions(ds, &a.predicate) {
            if seen.insert(a.args[i].clone()) {
                out.push(a.args[i].clone());
            }
        }
    }
    out
}

/// Splits `objects` into `steps` contiguous batches whose sizes differ by at most one.
pub fn schedule(objects: &[String], steps: usize) -> Result<Vec<Vec<String>>> {
    if steps == 0 || steps > objects.len() {
        return Err(Error::Invalid(format!(
            "cannot split {} objects into {steps} steps",
            objects.len()
        )));
    }
    let (q, r) = (objects.len() / steps, objects.len() % steps);
    let mut out = Vec::with_capacity(steps);
    let mut start = 0;
    for k in 0..steps {
        let len = q + usize::from(k < r);
        out.push(objects[start..start + len].to_vec());
        start += len;
    }
    Ok(out)
}

/// Training atoms about the batch's objects (atoms with no object argument go
/// to every batch).
fn batch_db(ds: &Dataset, batch: &[String]) -> EvidenceDatabase {
    let set: HashSet<&str> = batch.iter().map(String::as_str).collect();
    ds.train.filter(|a| {
        let pos = object_positions(ds, &a.predicate);
        pos.is_empty() || pos.iter().all(|&i| set.contains(a.args[i].as_str()))
    })
}

fn shuffled<T: Clone>(items: &[T], seed: u64, run: usize) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run as u64);
    let mut v = items.to_vec();
    v.shuffle(&mut rng);
    v
}

fn all_predicates(model: &MlnModel) -> BTreeSet<String> {
    model.decls.iter().map(|d| d.name.clone()).collect()
}

fn known_predicates(kl: &KnowledgeList) -> BTreeSet<String> {
    kl.decls.iter().map(|d| d.name.clone()).collect()
}

struct Baseline {
    name: &'static str,
    model: MlnModel,
}

fn baselines(cfg: &ExperimentConfig) -> Result<Vec<Baseline>> {
    if !cfg.baselines {
        return Ok(Vec::new());
    }
    let ds = &cfg.dataset;
    let gen = learn_generative(&ds.model, &ds.train, None, &cfg.cla.learn)?;
    let disc = learn_discriminative(
        &ds.model,
        &ds.train,
        std::slice::from_ref(&ds.query_predicate),
        None,
        &cfg.discriminative,
    )?;
    Ok(vec![
        Baseline {
            name: BATCH_GENERATIVE,
            model: gen.to_model(&ds.model),
        },
        Baseline {
            name: BATCH_DISCRIMINATIVE,
            model: disc.to_model(&ds.model),
        },
    ])
}

type Job = (usize, UpdateStrategy);

fn jobs(cfg: &ExperimentConfig) -> Vec<Job> {
    (0..cfg.runs)
        .flat_map(|r| cfg.strategies.iter().map(move |s| (r, s.clone())))
        .collect()
}

fn collect(
    outcomes: Vec<Result<(Vec<StepReport>, (usize, String, BTreeSet<String>))>>,
    mut extra: Vec<StepReport>,
) -> Result<ExperimentResult> {
    let mut reports = Vec::new();
    let mut final_formulas = Vec::new();
    for o in outcomes {
        let (r, f) = o?;
        reports.extend(r);
        final_formulas.push(f);
    }
    reports.append(&mut extra);
    reports.sort_by(|a, b| (a.run, a.step, &a.strategy).cmp(&(b.run, b.step, &b.strategy)));
    Ok(ExperimentResult {
        reports,
        final_formulas,
    })
}

/// New objects each step, formulas fixed. The list starts from the untrained
/// model and every batch, including the first, goes through a learning step.
pub fn run_constants_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let ds = &cfg.dataset;
    let objects = training_objects(ds);
    schedule(&objects, cfg.steps)?;
    let initial = crate::cumulative::build_knowledge_list(&ds.model, &EvidenceDatabase::default())?;
    let known = all_predicates(&ds.model);

    let outcomes: Vec<_> = jobs(cfg)
        .into_par_iter()
        .map(|(run, s)| -> Result<_> {
            let order = shuffled(&objects, cfg.seed, run);
            let batches = schedule(&order, cfg.steps)?;
            let mut kl = initial.clone();
            let mut out = Vec::with_capacity(batches.len());
            for (k, batch) in batches.iter().enumerate() {
                kl = cla_step(&kl, &Incoming::db(batch_db(ds, batch)), &s, &cfg.cla)?;
                let (auc, evaluated, marginals) = evaluate(cfg, &kl.to_mln(), &known)?;
                out.push(StepReport {
                    run,
                    step: k + 1,
                    strategy: s.name().to_string(),
                    auc,
                    evaluated_predicates: evaluated,
                    restricted: false,
                    marginals,
                });
            }
            Ok((out, (run, s.name().to_string(), kl.formula_keys())))
        })
        .collect();

    let mut extra = Vec::new();
    for b in baselines(cfg)? {
        let (auc, evaluated, marginals) = evaluate(cfg, &b.model, &known)?;
        for run in 0..cfg.runs {
            for step in 1..=cfg.steps {
                extra.push(StepReport {
                    run,
                    step,
                    strategy: b.name.to_string(),
                    auc,
                    evaluated_predicates: evaluated.clone(),
                    restricted: false,
                    marginals: marginals.clone(),
                });
            }
        }
    }
    collect(outcomes, extra)
}

/// One new formula per step, with the declarations of its predicates and
/// the training evidence of those predicates. Each run permutes the formula
/// order. Evaluation uses only test evidence of predicates known at that step.
pub fn run_formulas_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let ds = &cfg.dataset;
    let formulas = ds.model.formulas.clone();
    if formulas.is_empty() {
        return Err(Error::Invalid("the formulas experiment needs formulas".into()));
    }
    let all = all_predicates(&ds.model);
    let orders: Vec<Vec<usize>> = (0..cfg.runs)
        .map(|r| shuffled(&(0..formulas.len()).collect::<Vec<_>>(), cfg.seed, r))
        .collect();

    let outcomes: Vec<_> = jobs(cfg)
        .into_par_iter()
        .map(|(run, s)| -> Result<_> {
            let mut kl = KnowledgeList::default();
            let mut out = Vec::new();
            for (k, &fi) in orders[run].iter().enumerate() {
                let wf = &formulas[fi];
                let preds: BTreeSet<&str> = wf.formula.predicates();
                let decls = ds
                    .model
                    .decls
                    .iter()
                    .filter(|d| preds.contains(d.name.as_str()))
                    .cloned()
                    .collect();
                let incoming = Incoming::both(
                    MlnModel {
                        decls,
                        formulas: vec![wf.clone()],
                        domains: Default::default(),
                    },
                    ds.train.filter(|a| preds.contains(a.predicate.as_str())),
                );
                kl = cla_step(&kl, &incoming, &s, &cfg.cla)?;
                let known = known_predicates(&kl);
                let (auc, evaluated, marginals) = evaluate(cfg, &kl.to_mln(), &known)?;
                out.push(StepReport {
                    run,
                    step: k + 1,
                    strategy: s.name().to_string(),
                    auc,
                    evaluated_predicates: evaluated,
                    restricted: known != all,
                    marginals,
                });
            }
            Ok((out, (run, s.name().to_string(), kl.formula_keys())))
        })
        .collect();

    let mut extra = Vec::new();
    for b in baselines(cfg)? {
        for (run, order) in orders.iter().enumerate() {
            let mut known = BTreeSet::new();
            for (k, &fi) in order.iter().enumerate() {
                known.extend(formulas[fi].formula.predicates().into_iter().map(str::to_string));
                let (auc, evaluated, marginals) = evaluate(cfg, &b.model, &known)?;
                extra.push(StepReport {
                    run,
                    step: k + 1,
                    strategy: b.name.to_string(),
                    auc,
                    evaluated_predicates: evaluated,
                    restricted: known != all,
                    marginals,
                });
            }
        }
    }
    collect(outcomes, extra)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::generate_synthetic_dataset;

    #[test]
    fn schedule_covers_every_object_once() {
        let objs: Vec<String> = (0..40).map(|i| format!("O{i}")).collect();
        let s = schedule(&objs, 8).unwrap();
        assert_eq!(s.len(), 8);
        assert!(s.iter().all(|b| b.len() == 5));
        let flat: Vec<String> = s.concat();
        assert_eq!(flat, objs);
        let uneven = schedule(&objs[..7], 3).unwrap();
        assert_eq!(uneven.iter().map(Vec::len).collect::<Vec<_>>(), vec![3, 2, 2]);
        assert!(schedule(&objs[..3], 4).is_err());
    }

    #[test]
    fn shuffles_differ_by_run_and_repeat_by_seed() {
        let v: Vec<usize> = (0..20).collect();
        assert_eq!(shuffled(&v, 5, 1), shuffled(&v, 5, 1));
        assert_ne!(shuffled(&v, 5, 1), shuffled(&v, 5, 2));
    }

    #[test]
    fn small_constants_experiment() {
        let ds = generate_synthetic_dataset(3, 6, 4).unwrap();
        let mut cfg = ExperimentConfig::new(ds);
        cfg.steps = 2;
        cfg.runs = 2;
        cfg.discriminative.perceptron_iters = 5;
        cfg.discriminative.gibbs_samples = 50;
        let res = run_constants_experiment(&cfg).unwrap();
        assert_eq!(res.reports.len(), 2 * 2 * 5);
        for r in &res.reports {
            let auc = r.auc.expect("both classes present");
            assert!((0.0..=1.0).contains(&auc));
        }
        let first = &res.final_formulas[0].2;
        assert!(res.final_formulas.iter().all(|(_, _, f)| f == first));
    }

    #[test]
    fn small_formulas_experiment() {
        let ds = generate_synthetic_dataset(4, 5, 4).unwrap();
        let mut cfg = ExperimentConfig::new(ds);
        cfg.runs = 2;
        cfg.baselines = false;
        cfg.strategies = vec![UpdateStrategy::Balanced];
        let res = run_formulas_experiment(&cfg).unwrap();
        assert_eq!(res.reports.len(), 2 * 5);
        for r in &res.reports {
            let has_query = r.evaluated_predicates.iter().any(|p| p == "HasAffordance");
            assert_eq!(r.auc.is_some(), has_query);
            if r.step == 5 {
                assert!(!r.restricted);
            }
        }
    }
}
