//! Marginal inference over a ground network.
//!
//! [`exact_marginals`] enumerates every completion of the free atoms, one
//! connected component at a time, and serves as the oracle for the sampler.
//! [`gibbs_marginals`] runs independent single-site Gibbs chains.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grounding::{
    ground_with_atoms, materialize, GroundAtom, GroundNetwork, GroundingOptions,
};
use crate::logic::{extract_domains, find_decl, EvidenceDatabase, MlnModel};

pub const DEFAULT_MAX_FREE_ATOMS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GibbsParams {
    pub chains: usize,
    pub burn_in: usize,
    /// Post-burn-in sweeps per chain.
    pub samples: usize,
    pub seed: u64,
}

impl GibbsParams {
    /// 3 chains, 5,000 burn-in sweeps, 50,000 samples.
    pub fn with_seed(seed: u64) -> Self {
        GibbsParams {
            chains: 3,
            burn_in: 5_000,
            samples: 50_000,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InferenceMethod {
    Exact { max_free_atoms: usize },
    Gibbs(GibbsParams),
    /// Exact when every free component is small enough, Gibbs otherwise.
    Auto {
        max_free_atoms: usize,
        gibbs: GibbsParams,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    pub atoms: Vec<GroundAtom>,
    pub probabilities: Vec<f64>,
    /// Sampler settings, when the result was sampled.
    pub sampler: Option<GibbsParams>,
}

impl QueryResult {
    pub fn get(&self, atom: &GroundAtom) -> Option<f64> {
        self.atoms
            .iter()
            .position(|a| a == atom)
            .map(|i| self.probabilities[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&GroundAtom, f64)> {
        self.atoms.iter().zip(self.probabilities.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Connected components of free atoms, linked through shared clauses.
pub(crate) fn free_components(net: &GroundNetwork, evidence: &[Option<bool>]) -> Vec<Vec<usize>> {
    let n = net.num_atoms();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for c in net.clauses() {
        let mut first = None;
        for l in &c.literals {
            let a = l.atom as usize;
            if evidence[a].is_some() {
                continue;
            }
            match first {
                None => first = Some(a),
                Some(f) => {
                    let (ra, rb) = (find(&mut parent, f), find(&mut parent, a));
                    if ra != rb {
                        parent[ra.max(rb)] = ra.min(rb);
                    }
                }
            }
        }
    }
    let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut order = Vec::new();
    for a in 0..n {
        if evidence[a].is_some() {
            continue;
        }
        let r = find(&mut parent, a);
        groups
            .entry(r)
            .or_insert_with(|| {
                order.push(r);
                Vec::new()
            })
            .push(a);
    }
    order.into_iter().map(|r| groups.remove(&r).unwrap()).collect()
}

enum ClauseLit {
    Local(usize, bool),
}

/// Exact marginals of one component by enumerating its 2^k completions.
fn component_marginals(
    net: &GroundNetwork,
    clause_weights: &[f64],
    evidence: &[Option<bool>],
    atoms: &[usize],
    out: &mut [f64],
) -> Result<()> {
    let local: HashMap<usize, usize> = atoms.iter().enumerate().map(|(i, &a)| (a, i)).collect();
    let mut seen = vec![false; net.clauses().len()];
    let mut relevant: Vec<(f64, Vec<ClauseLit>)> = Vec::new();
    for &a in atoms {
        for &ci in net.clauses_of(a) {
            if std::mem::replace(&mut seen[ci], true) {
                continue;
            }
            let c = &net.clauses()[ci];
            let mut lits = Vec::new();
            let mut fixed_true = false;
            for l in &c.literals {
                match evidence[l.atom as usize] {
                    Some(v) => fixed_true |= v == l.positive,
                    None => lits.push(ClauseLit::Local(local[&(l.atom as usize)], l.positive)),
                }
            }
            if !fixed_true {
                relevant.push((clause_weights[ci], lits));
            }
        }
    }
    let k = atoms.len();
    let worlds = 1usize << k;
    let mut energies = vec![f64::NEG_INFINITY; worlds];
    for (mask, e) in energies.iter_mut().enumerate() {
        let mut total = 0.0;
        let mut feasible = true;
        for (w, lits) in &relevant {
            let sat = lits
                .iter()
                .any(|ClauseLit::Local(i, pos)| ((mask >> i) & 1 == 1) == *pos);
            if sat {
                if w.is_finite() {
                    total += w;
                }
            } else if w.is_infinite() {
                feasible = false;
                break;
            }
        }
        if feasible {
            *e = total;
        }
    }
    let max = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::Invalid("hard constraints cannot all be satisfied".into()));
    }
    let mut z = 0.0;
    let mut on = vec![0.0; k];
    for (mask, e) in energies.iter().enumerate() {
        let p = (e - max).exp();
        if p == 0.0 {
            continue;
        }
        z += p;
        for (i, acc) in on.iter_mut().enumerate() {
            if (mask >> i) & 1 == 1 {
                *acc += p;
            }
        }
    }
    for (i, &a) in atoms.iter().enumerate() {
        out[a] = on[i] / z;
    }
    Ok(())
}

pub(crate) fn exact_with_weights(
    net: &GroundNetwork,
    clause_weights: &[f64],
    evidence: &[Option<bool>],
    max_free_atoms: usize,
) -> Result<Vec<f64>> {
    let comps = free_components(net, evidence);
    if let Some(big) = comps.iter().map(Vec::len).max() {
        if big > max_free_atoms {
            return Err(Error::TooManyFreeAtoms {
                free: big,
                limit: max_free_atoms,
            });
        }
    }
    let mut out: Vec<f64> = evidence
        .iter()
        .map(|e| match e {
            Some(true) => 1.0,
            Some(false) => 0.0,
            None => f64::NAN,
        })
        .collect();
    for comp in &comps {
        component_marginals(net, clause_weights, evidence, comp, &mut out)?;
    }
    Ok(out)
}

/// Exact marginals for every atom of the network under its template weights.
///
/// Free atoms are split into connected components and each component is
/// enumerated separately; a component with more than `max_free_atoms` atoms
/// is refused.
pub fn exact_marginals(
    net: &GroundNetwork,
    evidence: &[Option<bool>],
    max_free_atoms: usize,
) -> Result<QueryResult> {
    let weights = net.clause_weights(&net.soft_weights());
    let probabilities = exact_with_weights(net, &weights, evidence, max_free_atoms)?;
    Ok(QueryResult {
        atoms: net.atoms().to_vec(),
        probabilities,
        sampler: None,
    })
}

/// Single-site Gibbs chain over the free atoms of a network.
pub(crate) struct Chain<'a> {
    net: &'a GroundNetwork,
    weights: &'a [f64],
    pub(crate) state: Vec<bool>,
    true_count: Vec<u32>,
    free: Vec<usize>,
}

impl<'a> Chain<'a> {
    pub(crate) fn new(
        net: &'a GroundNetwork,
        weights: &'a [f64],
        evidence: &[Option<bool>],
        rng: &mut impl Rng,
    ) -> Self {
        let state: Vec<bool> = evidence
            .iter()
            .map(|e| e.unwrap_or_else(|| rng.gen_bool(0.5)))
            .collect();
        let free = (0..evidence.len()).filter(|&a| evidence[a].is_none()).collect();
        let true_count = net
            .clauses()
            .iter()
            .map(|c| {
                c.literals
                    .iter()
                    .filter(|l| state[l.atom as usize] == l.positive)
                    .count() as u32
            })
            .collect();
        Chain {
            net,
            weights,
            state,
            true_count,
            free,
        }
    }

    fn prob_true(&self, atom: usize) -> f64 {
        let cur = self.state[atom];
        let mut soft = 0.0;
        let mut hard = 0i64;
        for &(c, positive) in self.net.incidence(atom) {
            let c = c as usize;
            let others = self.true_count[c] - u32::from(cur == positive);
            if others > 0 {
                continue;
            }
            // Only this atom decides the clause: true iff atom == positive.
            let w = self.weights[c];
            let sign = if positive { 1.0 } else { -1.0 };
            if w.is_infinite() {
                hard += if positive { 1 } else { -1 };
            } else {
                soft += sign * w;
            }
        }
        match hard.signum() {
            1 => 1.0,
            -1 => 0.0,
            _ => sigmoid(soft),
        }
    }

    fn set(&mut self, atom: usize, value: bool) {
        if self.state[atom] == value {
            return;
        }
        self.state[atom] = value;
        for &(c, positive) in self.net.incidence(atom) {
            if value == positive {
                self.true_count[c as usize] += 1;
            } else {
                self.true_count[c as usize] -= 1;
            }
        }
    }

    pub(crate) fn sweep(&mut self, rng: &mut impl Rng) {
        for i in 0..self.free.len() {
            let a = self.free[i];
            let p = self.prob_true(a);
            let v = rng.gen::<f64>() < p;
            self.set(a, v);
        }
    }

    pub(crate) fn clause_satisfied(&self, clause: usize) -> bool {
        self.true_count[clause] > 0
    }
}

pub(crate) fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

pub(crate) fn gibbs_with_weights(
    net: &GroundNetwork,
    clause_weights: &[f64],
    evidence: &[Option<bool>],
    params: &GibbsParams,
) -> Vec<f64> {
    let chains = params.chains.max(1);
    let samples = params.samples.max(1);
    let counts: Vec<Vec<u64>> = (0..chains)
        .into_par_iter()
        .map(|ch| {
            let mut rng = chain_rng(params.seed, ch);
            let mut chain = Chain::new(net, clause_weights, evidence, &mut rng);
            for _ in 0..params.burn_in {
                chain.sweep(&mut rng);
            }
            let mut counts = vec![0u64; net.num_atoms()];
            for _ in 0..samples {
                chain.sweep(&mut rng);
                for &a in &chain.free {
                    counts[a] += u64::from(chain.state[a]);
                }
            }
            counts
        })
        .collect();
    let total = (chains * samples) as f64;
    (0..net.num_atoms())
        .map(|a| match evidence[a] {
            Some(true) => 1.0,
            Some(false) => 0.0,
            None => counts.iter().map(|c| c[a]).sum::<u64>() as f64 / total,
        })
        .collect()
}

/// Gibbs-sampled marginals for every atom. Deterministic for a fixed seed
/// and chain count.
pub fn gibbs_marginals(
    net: &GroundNetwork,
    evidence: &[Option<bool>],
    params: &GibbsParams,
) -> QueryResult {
    let weights = net.clause_weights(&net.soft_weights());
    QueryResult {
        atoms: net.atoms().to_vec(),
        probabilities: gibbs_with_weights(net, &weights, evidence, params),
        sampler: Some(*params),
    }
}

pub(crate) fn run_inference(
    net: &GroundNetwork,
    clause_weights: &[f64],
    evidence: &[Option<bool>],
    method: &InferenceMethod,
) -> Result<(Vec<f64>, Option<GibbsParams>)> {
    match method {
        InferenceMethod::Exact { max_free_atoms } => {
            Ok((exact_with_weights(net, clause_weights, evidence, *max_free_atoms)?, None))
        }
        InferenceMethod::Gibbs(p) => Ok((gibbs_with_weights(net, clause_weights, evidence, p), Some(*p))),
        InferenceMethod::Auto {
            max_free_atoms,
            gibbs,
        } => {
            let big = free_components(net, evidence)
                .iter()
                .map(Vec::len)
                .max()
                .unwrap_or(0);
            if big <= *max_free_atoms {
                Ok((exact_with_weights(net, clause_weights, evidence, *max_free_atoms)?, None))
            } else {
                Ok((gibbs_with_weights(net, clause_weights, evidence, gibbs), Some(*gibbs)))
            }
        }
    }
}

/// Marginals of every grounding of the query predicates given evidence.
///
/// The model is grounded over its own constants plus those of `db`. Query
/// atoms listed in `db` are fixed to their listed value; all other query atoms
/// are free. Atoms of other predicates follow the closed-world rule: unlisted
/// groundings are false.
pub fn query(
    model: &MlnModel,
    db: &EvidenceDatabase,
    query_predicates: &[String],
    method: &InferenceMethod,
    grounding: &GroundingOptions,
) -> Result<QueryResult> {
    for q in query_predicates {
        if find_decl(&model.decls, q).is_none() {
            return Err(Error::UndeclaredPredicate {
                name: q.clone(),
                line: 0,
            });
        }
    }
    db.validate(&model.decls)?;
    let domains = model.domains.union(&extract_domains(db, &model.decls));
    let grounded = MlnModel {
        decls: model.decls.clone(),
        formulas: model.formulas.clone(),
        domains,
    };
    let templates = materialize(&grounded, &grounded.domains)?;

    let mut query_atoms = Vec::new();
    for q in query_predicates {
        let decl = find_decl(&model.decls, q).expect("checked above");
        let choices: Vec<Vec<&str>> = decl
            .arg_domains
            .iter()
            .map(|d| grounded.domains.constants(d).collect())
            .collect();
        let mut combo = Vec::new();
        enumerate(&choices, &mut combo, &mut |args| {
            query_atoms.push(GroundAtom::new(q.clone(), args.iter().copied()));
        });
    }
    let net = ground_with_atoms(&grounded, &templates, query_atoms.iter().cloned(), grounding)?;

    let mut listed: HashMap<GroundAtom, bool> = HashMap::new();
    for a in &db.atoms {
        listed.insert(GroundAtom::new(a.predicate.clone(), a.args.iter().cloned()), a.positive);
    }
    let evidence: Vec<Option<bool>> = net
        .atoms()
        .iter()
        .map(|a| match listed.get(a) {
            Some(&v) => Some(v),
            None if query_predicates.contains(&a.predicate) => None,
            None => Some(false),
        })
        .collect();
    let weights = net.clause_weights(&net.soft_weights());
    let (probs, sampler) = run_inference(&net, &weights, &evidence, method)?;
    let ids: Vec<usize> = query_atoms
        .iter()
        .map(|a| net.atom_id(a).expect("query atoms are interned"))
        .collect();
    Ok(QueryResult {
        atoms: query_atoms,
        probabilities: ids.iter().map(|&i| probs[i]).collect(),
        sampler,
    })
}

fn enumerate<'a>(choices: &[Vec<&'a str>], combo: &mut Vec<&'a str>, f: &mut impl FnMut(&[&'a str])) {
    if combo.len() == choices.len() {
        f(combo);
        return;
    }
    for &c in &choices[combo.len()] {
        combo.push(c);
        enumerate(choices, combo, f);
        combo.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::{parse_db, parse_mln, Weight};

    fn single_atom_net(w: f64) -> GroundNetwork {
        GroundNetwork::from_clauses(
            vec![GroundAtom::new("A", ["X"])],
            vec![Weight::Soft(w)],
            vec![(vec![(0, true)], 0)],
        )
    }

    #[test]
    fn no_formulas_gives_one_half() {
        let net = GroundNetwork::from_clauses(vec![GroundAtom::new("A", ["X"])], vec![], vec![]);
        let r = exact_marginals(&net, &[None], 20).unwrap();
        assert_eq!(r.probabilities, vec![0.5]);
        let g = gibbs_marginals(
            &net,
            &[None],
            &GibbsParams {
                chains: 1,
                burn_in: 100,
                samples: 10_000,
                seed: 3,
            },
        );
        assert!((g.probabilities[0] - 0.5).abs() < 0.02);
    }

    #[test]
    fn single_clause_is_logistic() {
        for w in [-2.0, 0.3, 1.7] {
            let r = exact_marginals(&single_atom_net(w), &[None], 20).unwrap();
            let expected = w.exp() / (1.0 + w.exp());
            assert!((r.probabilities[0] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn full_evidence_is_reported_exactly() {
        let net = single_atom_net(1.0);
        let g = gibbs_marginals(&net, &[Some(false)], &GibbsParams::with_seed(1));
        assert_eq!(g.probabilities, vec![0.0]);
        let e = exact_marginals(&net, &[Some(true)], 20).unwrap();
        assert_eq!(e.probabilities, vec![1.0]);
    }

    #[test]
    fn refuses_large_components() {
        let atoms: Vec<GroundAtom> = (0..21).map(|i| GroundAtom::new("A", [format!("C{i}")])).collect();
        let clauses = (0..20).map(|i| (vec![(i, true), (i + 1, false)], 0)).collect();
        let net = GroundNetwork::from_clauses(atoms, vec![Weight::Soft(1.0)], clauses);
        let ev = vec![None; 21];
        assert!(matches!(
            exact_marginals(&net, &ev, 20),
            Err(Error::TooManyFreeAtoms { free: 21, limit: 20 })
        ));
        let mut ev = ev;
        ev[10] = Some(true);
        assert!(exact_marginals(&net, &ev, 20).is_ok());
    }

    #[test]
    fn hard_clause_forces_value() {
        let net = GroundNetwork::from_clauses(
            vec![GroundAtom::new("A", ["X"]), GroundAtom::new("B", ["X"])],
            vec![Weight::Hard],
            vec![(vec![(0, false), (1, true)], 0)],
        );
        let r = exact_marginals(&net, &[Some(true), None], 20).unwrap();
        assert_eq!(r.probabilities[1], 1.0);
        let g = gibbs_marginals(
            &net,
            &[Some(true), None],
            &GibbsParams {
                chains: 1,
                burn_in: 1,
                samples: 100,
                seed: 0,
            },
        );
        assert_eq!(g.probabilities[1], 1.0);
    }

    #[test]
    fn gibbs_is_deterministic_for_a_seed() {
        let net = GroundNetwork::from_clauses(
            vec![GroundAtom::new("A", ["X"]), GroundAtom::new("B", ["X"])],
            vec![Weight::Soft(0.8)],
            vec![(vec![(0, false), (1, true)], 0)],
        );
        let p = GibbsParams {
            chains: 2,
            burn_in: 10,
            samples: 500,
            seed: 9,
        };
        assert_eq!(gibbs_marginals(&net, &[None, None], &p), gibbs_marginals(&net, &[None, None], &p));
    }

    #[test]
    fn query_semantics() {
        let m = parse_mln("Q(obj)\nE(obj)\n2 E(x) => Q(x)\n").unwrap();
        let db = parse_db("E(A)\nQ(B)\n", &m.decls).unwrap();
        let exact = InferenceMethod::Exact { max_free_atoms: 20 };
        let r = query(&m, &db, &["Q".into()], &exact, &GroundingOptions::default()).unwrap();
        assert_eq!(r.len(), 2);
        let qa = r.get(&GroundAtom::new("Q", ["A"])).unwrap();
        assert!((qa - 2f64.exp() / (1.0 + 2f64.exp())).abs() < 1e-12);
        assert_eq!(r.get(&GroundAtom::new("Q", ["B"])), Some(1.0));

        let empty = MlnModel::new(m.decls.clone(), vec![], Default::default()).unwrap();
        let r = query(&empty, &db, &["Q".into()], &exact, &GroundingOptions::default()).unwrap();
        assert_eq!(r.get(&GroundAtom::new("Q", ["A"])), Some(0.5));

        assert!(query(&m, &db, &["Nope".into()], &exact, &GroundingOptions::default()).is_err());
    }
}
