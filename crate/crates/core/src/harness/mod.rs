//! Experiment harness: AUC, the synthetic dataset, the constants and formulas
//! experiments, and CSV output.

mod auc;
mod experiment;
mod output;
mod synthetic;

pub use auc::auc_roc;
pub use experiment::{
    run_constants_experiment, run_formulas_experiment, schedule, training_objects,
    ExperimentConfig, ExperimentResult, StepReport, BATCH_DISCRIMINATIVE, BATCH_GENERATIVE,
};
pub use output::{aggregate, emit_results, AggregateRow};
pub use synthetic::{
    affordance_model, generate_synthetic_dataset, oracle_model, Dataset, AFFORDANCES,
    AFFORDANCE_FORMULAS, ATTRIBUTES, OBJECT_DOMAIN, QUERY_PREDICATE, RULES, SIZES, WEIGHTS,
};

use std::path::Path;

use crate::error::Result;
use crate::logic::{parse_db, parse_mln};

/// Reads a dataset from a `.mln` model and training/test `.db` files.
pub fn load_dataset(
    mln: impl AsRef<Path>,
    train: impl AsRef<Path>,
    test: impl AsRef<Path>,
    query_predicate: &str,
    object_domain: &str,
) -> Result<Dataset> {
    let model = parse_mln(&std::fs::read_to_string(mln)?)?;
    let train = parse_db(&std::fs::read_to_string(train)?, &model.decls)?;
    let test = parse_db(&std::fs::read_to_string(test)?, &model.decls)?;
    Ok(Dataset {
        model,
        train,
        test,
        query_predicate: query_predicate.into(),
        object_domain: object_domain.into(),
    })
}
