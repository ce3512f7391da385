//! Weight learning: generative (pseudo-likelihood with an L2 prior) and
//! discriminative (voted perceptron with Gibbs-estimated expectations), plus
//! the per-formula evidence count.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::grounding::{ground, materialize, FormulaTemplate, GroundAtom, GroundNetwork, GroundingOptions};
use crate::inference::{chain_rng, Chain};
use crate::logic::{extract_domains, DomainMap, EvidenceDatabase, Formula, MlnModel, Weight, WeightedFormula};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LearnMethod {
    Generative,
    Discriminative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnOptions {
    pub method: LearnMethod,
    /// Gradient-ascent iterations (generative).
    pub max_iters: usize,
    pub initial_step: f64,
    /// Line search gives up below this step.
    pub min_step: f64,
    pub l2_prior_sigma: f64,
    /// Stop once the largest gradient component (generative) or weight
    /// update (discriminative) falls below this.
    pub tolerance: f64,
    pub seed: u64,
    pub query_predicates: Vec<String>,
    /// Perceptron rounds and learning rate (discriminative).
    pub perceptron_iters: usize,
    pub learning_rate: f64,
    pub gibbs_samples: usize,
    pub gibbs_burn_in: usize,
    pub grounding: GroundingOptions,
}

impl Default for LearnOptions {
    fn default() -> Self {
        LearnOptions {
            method: LearnMethod::Generative,
            max_iters: 500,
            initial_step: 1.0,
            min_step: 1e-12,
            l2_prior_sigma: 2.0,
            tolerance: 1e-4,
            seed: 0,
            query_predicates: Vec::new(),
            perceptron_iters: 100,
            learning_rate: 0.01,
            gibbs_samples: 2_000,
            gibbs_burn_in: 100,
            grounding: GroundingOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnDiagnostics {
    /// Final penalised pseudo-log-likelihood (generative only).
    pub objective: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Largest gradient component (generative) or last update (discriminative).
    pub final_delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnedWeights {
    /// Trained templates; their `weight` fields hold the learned values.
    pub templates: Vec<FormulaTemplate>,
    pub weights: Vec<f64>,
    /// Evidence count per template.
    pub evidence_counts: Vec<u64>,
    pub diagnostics: LearnDiagnostics,
}

impl LearnedWeights {
    /// A model holding one formula per trained template.
    pub fn to_model(&self, base: &MlnModel) -> MlnModel {
        MlnModel {
            decls: base.decls.clone(),
            formulas: self.templates.iter().map(FormulaTemplate::to_weighted).collect(),
            domains: base.domains.clone(),
        }
    }
}

/// Number of evidence atoms whose predicate occurs in the formula.
pub fn count_formula_evidence(formula: &Formula, db: &EvidenceDatabase) -> u64 {
    let preds = formula.predicates();
    db.atoms
        .iter()
        .filter(|a| preds.contains(a.predicate.as_str()))
        .count() as u64
}

/// A grounded training instance: templates, network, and the closed-world
/// completion of the training database.
#[derive(Debug, Clone)]
pub struct TrainingProblem {
    pub templates: Vec<FormulaTemplate>,
    pub net: GroundNetwork,
    pub world: Vec<bool>,
    pub evidence_counts: Vec<u64>,
}

impl TrainingProblem {
    /// Grounds `model` over its constants and those of `db`. Plus-variables
    /// range over `plus_domains` (if given) joined with the same constants.
    pub fn new(
        model: &MlnModel,
        db: &EvidenceDatabase,
        plus_domains: Option<&DomainMap>,
        grounding: &GroundingOptions,
    ) -> Result<Self> {
        if db.is_empty() {
            return Err(Error::Invalid("training database is empty".into()));
        }
        db.validate(&model.decls)?;
        let db = db.dedup();
        let domains = model.domains.union(&extract_domains(&db, &model.decls));
        let plus = match plus_domains {
            Some(p) => p.union(&domains),
            None => domains.clone(),
        };
        let grounded = MlnModel {
            decls: model.decls.clone(),
            formulas: model.formulas.clone(),
            domains,
        };
        let templates = materialize(&grounded, &plus)?;
        let net = ground(&grounded, &templates, grounding)?;
        if net.clauses().is_empty() {
            return Err(Error::EmptyGrounding);
        }
        let mut listed: HashMap<GroundAtom, bool> = HashMap::new();
        for a in &db.atoms {
            listed.insert(GroundAtom::new(a.predicate.clone(), a.args.iter().cloned()), a.positive);
        }
        let world = net
            .atoms()
            .iter()
            .map(|a| listed.get(a).copied().unwrap_or(false))
            .collect();
        let evidence_counts = templates
            .iter()
            .map(|t| count_formula_evidence(&t.formula, &db))
            .collect();
        Ok(TrainingProblem {
            templates,
            net,
            world,
            evidence_counts,
        })
    }

    /// Current template weights (0 for hard templates).
    pub fn initial_weights(&self) -> Vec<f64> {
        self.templates
            .iter()
            .map(|t| t.weight.value().unwrap_or(0.0))
            .collect()
    }

    fn finish(&self, weights: Vec<f64>, diagnostics: LearnDiagnostics) -> LearnedWeights {
        let templates = self
            .templates
            .iter()
            .zip(&weights)
            .map(|(t, &w)| FormulaTemplate {
                weight: match t.weight {
                    Weight::Hard => Weight::Hard,
                    Weight::Soft(_) => Weight::Soft(w),
                },
                ..t.clone()
            })
            .collect();
        LearnedWeights {
            templates,
            weights,
            evidence_counts: self.evidence_counts.clone(),
            diagnostics,
        }
    }
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Pseudo-log-likelihood of `world` and its gradient with respect to the
/// template weights. With `prior_sigma`, adds `-w²/(2σ²)` per soft template.
pub fn pseudo_log_likelihood(
    net: &GroundNetwork,
    world: &[bool],
    weights: &[f64],
    prior_sigma: Option<f64>,
) -> (f64, Vec<f64>) {
    let clause_w = net.clause_weights(weights);
    let clauses = net.clauses();
    let hard: Vec<bool> = net.templates().iter().map(|t| t.weight.is_hard()).collect();
    let mut pll = 0.0;
    let mut grad = vec![0.0; weights.len()];
    let true_count: Vec<u32> = clauses
        .iter()
        .map(|c| c.literals.iter().filter(|l| world[l.atom as usize] == l.positive).count() as u32)
        .collect();

    for atom in 0..net.num_atoms() {
        let cur = world[atom];
        // Satisfaction of each incident clause with the atom forced false / true.
        let mut soft = [0.0f64; 2];
        let mut hard_sat = [0i64; 2];
        for &(c, positive) in net.incidence(atom) {
            let c = c as usize;
            let others = true_count[c] - u32::from(cur == positive);
            for v in 0..2 {
                let sat = others > 0 || (v == 1) == positive;
                if sat {
                    if clause_w[c].is_infinite() {
                        hard_sat[v] += 1;
                    } else {
                        soft[v] += clause_w[c];
                    }
                }
            }
        }
        let p1 = if hard_sat[1] > hard_sat[0] {
            1.0
        } else if hard_sat[1] < hard_sat[0] {
            0.0
        } else {
            (soft[1] - log_sum_exp(soft[0], soft[1])).exp()
        };
        let p = [1.0 - p1, p1];
        let observed = usize::from(cur);
        pll += if hard_sat[0] == hard_sat[1] {
            soft[observed] - log_sum_exp(soft[0], soft[1])
        } else {
            p[observed].ln()
        };
        for &(c, positive) in net.incidence(atom) {
            let c = c as usize;
            let t = clauses[c].template;
            if hard[t] {
                continue;
            }
            let others = true_count[c] - u32::from(cur == positive);
            if others > 0 {
                continue;
            }
            let sat = |v: usize| f64::from(u8::from((v == 1) == positive));
            let expected = p[0] * sat(0) + p[1] * sat(1);
            grad[t] += clauses[c].scale * (sat(observed) - expected);
        }
    }
    if let Some(sigma) = prior_sigma {
        let s2 = sigma * sigma;
        for (t, w) in weights.iter().enumerate() {
            if !hard[t] {
                pll -= w * w / (2.0 * s2);
                grad[t] -= w / s2;
            }
        }
    }
    (pll, grad)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Gradient ascent with step halving on a prepared problem.
pub fn learn_generative_on(
    problem: &TrainingProblem,
    warm_start: Option<&[f64]>,
    opts: &LearnOptions,
) -> Result<LearnedWeights> {
    let net = &problem.net;
    let n = net.num_templates();
    let mut w: Vec<f64> = match warm_start {
        Some(ws) if ws.len() == n => ws.to_vec(),
        Some(ws) => {
            return Err(Error::Invalid(format!(
                "warm start has {} weights for {} templates",
                ws.len(),
                n
            )))
        }
        None => vec![0.0; n],
    };
    let sigma = Some(opts.l2_prior_sigma);
    let (mut f, mut g) = pseudo_log_likelihood(net, &problem.world, &w, sigma);
    if !f.is_finite() {
        return Err(Error::NonFiniteObjective {
            step: opts.initial_step,
        });
    }
    let mut step = opts.initial_step;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iters {
        if max_abs(&g) < opts.tolerance {
            converged = true;
            break;
        }
        iterations += 1;
        let mut accepted = false;
        while step >= opts.min_step {
            let candidate: Vec<f64> = w.iter().zip(&g).map(|(wi, gi)| wi + step * gi).collect();
            let (cf, cg) = pseudo_log_likelihood(net, &problem.world, &candidate, sigma);
            if cf.is_finite() && cf > f {
                w = candidate;
                f = cf;
                g = cg;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // No ascent direction left at machine precision.
            converged = max_abs(&g) < opts.tolerance;
            break;
        }
        step = (step * 2.0).min(opts.initial_step);
    }
    if !converged && max_abs(&g) < opts.tolerance {
        converged = true;
    }
    Ok(problem.finish(
        w,
        LearnDiagnostics {
            objective: Some(f),
            iterations,
            converged,
            final_delta: max_abs(&g),
        },
    ))
}

/// Generative weight learning. Starts from `warm_start` (aligned with the
/// materialised templates) or zeros.
pub fn learn_generative(
    model: &MlnModel,
    db: &EvidenceDatabase,
    warm_start: Option<&[f64]>,
    opts: &LearnOptions,
) -> Result<LearnedWeights> {
    let problem = TrainingProblem::new(model, db, None, &opts.grounding)?;
    learn_generative_on(&problem, warm_start, opts)
}

/// Voted perceptron on a prepared problem: query atoms are free, everything
/// else is fixed to the training world.
pub fn learn_discriminative_on(
    problem: &TrainingProblem,
    query_predicates: &[String],
    warm_start: Option<&[f64]>,
    opts: &LearnOptions,
) -> Result<LearnedWeights> {
    if query_predicates.is_empty() {
        return Err(Error::Invalid("discriminative learning needs query predicates".into()));
    }
    let net = &problem.net;
    let n = net.num_templates();
    let mut w: Vec<f64> = match warm_start {
        Some(ws) if ws.len() == n => ws.to_vec(),
        Some(ws) => {
            return Err(Error::Invalid(format!(
                "warm start has {} weights for {} templates",
                ws.len(),
                n
            )))
        }
        None => vec![0.0; n],
    };
    let hard: Vec<bool> = net.templates().iter().map(|t| t.weight.is_hard()).collect();
    let evidence: Vec<Option<bool>> = net
        .atoms()
        .iter()
        .zip(&problem.world)
        .map(|(a, &v)| {
            if query_predicates.contains(&a.predicate) {
                None
            } else {
                Some(v)
            }
        })
        .collect();
    let free_clauses: Vec<usize> = net
        .clauses()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.literals.iter().any(|l| evidence[l.atom as usize].is_none()))
        .map(|(i, _)| i)
        .collect();
    let mut observed = vec![0.0; n];
    for &ci in &free_clauses {
        let c = &net.clauses()[ci];
        if c.satisfied(&problem.world) {
            observed[c.template] += c.scale;
        }
    }
    let s2 = opts.l2_prior_sigma * opts.l2_prior_sigma;
    let samples = opts.gibbs_samples.max(1);
    let mut sum = vec![0.0; n];
    let mut rounds = 0;
    let mut converged = false;
    let mut last_delta = 0.0;
    for round in 0..opts.perceptron_iters {
        let clause_w = net.clause_weights(&w);
        let mut rng = chain_rng(opts.seed, round);
        let mut chain = Chain::new(net, &clause_w, &evidence, &mut rng);
        for _ in 0..opts.gibbs_burn_in {
            chain.sweep(&mut rng);
        }
        let mut expected = vec![0.0; n];
        for _ in 0..samples {
            chain.sweep(&mut rng);
            for &ci in &free_clauses {
                if chain.clause_satisfied(ci) {
                    let c = &net.clauses()[ci];
                    expected[c.template] += c.scale;
                }
            }
        }
        let mut delta = 0.0f64;
        for t in 0..n {
            if hard[t] {
                continue;
            }
            let grad = observed[t] - expected[t] / samples as f64 - w[t] / s2;
            let step = opts.learning_rate * grad;
            w[t] += step;
            delta = delta.max(step.abs());
        }
        for (s, wi) in sum.iter_mut().zip(&w) {
            *s += wi;
        }
        rounds += 1;
        last_delta = delta;
        if delta < opts.tolerance {
            converged = true;
            break;
        }
    }
    let averaged: Vec<f64> = if rounds == 0 {
        w
    } else {
        sum.iter().map(|s| s / rounds as f64).collect()
    };
    Ok(problem.finish(
        averaged,
        LearnDiagnostics {
            objective: None,
            iterations: rounds,
            converged,
            final_delta: last_delta,
        },
    ))
}

pub fn learn_discriminative(
    model: &MlnModel,
    db: &EvidenceDatabase,
    query_predicates: &[String],
    warm_start: Option<&[f64]>,
    opts: &LearnOptions,
) -> Result<LearnedWeights> {
    if query_predicates.is_empty() {
        return Err(Error::Invalid("discriminative learning needs query predicates".into()));
    }
    let problem = TrainingProblem::new(model, db, None, &opts.grounding)?;
    learn_discriminative_on(&problem, query_predicates, warm_start, opts)
}

/// Dispatches on `opts.method`.
pub fn learn(
    model: &MlnModel,
    db: &EvidenceDatabase,
    warm_start: Option<&[f64]>,
    opts: &LearnOptions,
) -> Result<LearnedWeights> {
    match opts.method {
        LearnMethod::Generative => learn_generative(model, db, warm_start, opts),
        LearnMethod::Discriminative => {
            learn_discriminative(model, db, &opts.query_predicates, warm_start, opts)
        }
    }
}

/// Learned formulas paired with their evidence counts.
pub fn weighted_with_counts(learned: &LearnedWeights) -> Vec<(WeightedFormula, u64)> {
    learned
        .templates
        .iter()
        .zip(&learned.evidence_counts)
        .map(|(t, &z)| (t.to_weighted(), z))
        .collect()
}
