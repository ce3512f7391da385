//! Markov logic networks with cumulative weight learning.
//!
//! The crate is organised bottom-up:
//!
//! * [`logic`]: formulas, declarations, domains, and the `.mln` / `.db` file formats.
//! * [`grounding`]: `+`-variable expansion and propositional grounding.
//! * [`inference`]: exact and Gibbs-sampled marginals.
//! * [`learning`]: pseudo-likelihood and voted-perceptron weight learning.
//! * [`cumulative`]: knowledge lists, knowledge categories, update strategies
//!   and the incremental learning step.
//! * [`harness`]: AUC, a synthetic affordance dataset and the streaming experiments.

pub mod cumulative;
pub mod error;
pub mod grounding;
pub mod harness;
pub mod inference;
pub mod learning;
pub mod logic;

pub use cumulative::{
    build_knowledge_list, cla_step, merge_triplet, normalize, ClaOptions, Incoming,
    KnowledgeCategory, KnowledgeList, KnowledgeTriplet, UpdateStrategy,
};
pub use error::{Error, Result};
pub use grounding::{
    expand_plus, ground, materialize, FormulaTemplate, GroundAtom, GroundNetwork, GroundingOptions,
};
pub use inference::{
    exact_marginals, gibbs_marginals, query, GibbsParams, InferenceMethod, QueryResult,
};
pub use learning::{
    learn, learn_discriminative, learn_generative, LearnMethod, LearnOptions, LearnedWeights,
};
pub use logic::{
    format_db, format_mln, parse_db, parse_formula, parse_mln, DomainMap, EvidenceAtom, EvidenceDatabase, Formula, MlnModel,
    PredicateDecl, Term, Weight, WeightedFormula,
};
