use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use mlncla::cumulative::{
    classify, load_knowledge_list, save_knowledge_list, SplitTraining, StructureHook,
};
use mlncla::harness::{
    emit_results, generate_synthetic_dataset, load_dataset, run_constants_experiment,
    run_formulas_experiment, Dataset, ExperimentConfig, OBJECT_DOMAIN, QUERY_PREDICATE,
};
use mlncla::{
    build_knowledge_list, cla_step, format_db, format_mln, learn, parse_db, parse_mln,
    ClaOptions, EvidenceDatabase, GibbsParams, GroundingOptions, Incoming, InferenceMethod,
    LearnMethod, LearnOptions, MlnModel, UpdateStrategy,
};

#[derive(Parser)]
#[command(name = "mlncla", version, about = "Markov logic networks with cumulative learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn formula weights from a database.
    Learn(LearnArgs),
    /// Print marginal probabilities of query atoms.
    Infer(InferArgs),
    /// Create a knowledge list from a model and an optional database.
    KlInit(KlInitArgs),
    /// Apply one cumulative learning step to a knowledge list.
    ClaStep(ClaStepArgs),
    /// Run a streaming experiment.
    #[command(subcommand)]
    Experiment(ExperimentKind),
    /// Write a synthetic affordance dataset.
    GenData(GenDataArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Generative,
    Discriminative,
}

#[derive(Clone, Copy, ValueEnum)]
enum InferKind {
    Exact,
    Gibbs,
    Auto,
}

#[derive(Clone, Copy, ValueEnum)]
enum Hook {
    Unsupported,
    WeightsOnly,
}

#[derive(Clone, Copy, ValueEnum)]
enum Split {
    Joint,
    Independent,
}

#[derive(Args)]
struct LearnOpts {
    #[arg(long, value_enum, default_value = "generative")]
    method: Method,
    /// Query predicates for discriminative learning, comma separated.
    #[arg(long, value_delimiter = ',')]
    query: Vec<String>,
    /// Standard deviation of the Gaussian weight prior.
    #[arg(long, default_value_t = 2.0)]
    sigma: f64,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl LearnOpts {
    fn options(&self) -> LearnOptions {
        LearnOptions {
            method: match self.method {
                Method::Generative => LearnMethod::Generative,
                Method::Discriminative => LearnMethod::Discriminative,
            },
            query_predicates: self.query.clone(),
            l2_prior_sigma: self.sigma,
            max_iters: self.max_iters,
            seed: self.seed,
            grounding: GroundingOptions::from_env(),
            ..LearnOptions::default()
        }
    }
}

#[derive(Args)]
struct LearnArgs {
    #[arg(long)]
    mln: PathBuf,
    #[arg(long)]
    db: PathBuf,
    /// Output model; evidence counts go to `<out>.z.json`.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    opts: LearnOpts,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    mln: PathBuf,
    #[arg(long)]
    db: Option<PathBuf>,
    /// Query predicates, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    query: Vec<String>,
    #[arg(long, value_enum, default_value = "auto")]
    method: InferKind,
    #[arg(long, default_value_t = 20)]
    max_free_atoms: usize,
    #[arg(long, default_value_t = 3)]
    chains: usize,
    #[arg(long, default_value_t = 5_000)]
    burn_in: usize,
    #[arg(long, default_value_t = 50_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct KlInitArgs {
    #[arg(long)]
    mln: PathBuf,
    #[arg(long)]
    db: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClaStepArgs {
    #[arg(long)]
    kl: PathBuf,
    #[arg(long)]
    db: Option<PathBuf>,
    #[arg(long)]
    mln: Option<PathBuf>,
    #[arg(long, default_value = "balanced")]
    strategy: String,
    #[arg(long)]
    out: PathBuf,
    /// What to do when everything incoming is already known.
    #[arg(long, value_enum, default_value = "unsupported")]
    hook: Hook,
    #[arg(long, value_enum, default_value = "joint")]
    split: Split,
    #[command(flatten)]
    opts: LearnOpts,
}

#[derive(Subcommand)]
enum ExperimentKind {
    /// New objects each step, formulas fixed.
    Constants(ExperimentArgs),
    /// One new formula per step.
    Formulas(ExperimentArgs),
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Strategies to run, comma separated, or `all`.
    #[arg(long, value_delimiter = ',', default_value = "all")]
    strategy: Vec<String>,
    #[arg(long, default_value_t = 20)]
    runs: usize,
    #[arg(long, default_value_t = 8)]
    steps: usize,
    #[arg(long, default_value = "results")]
    out_dir: PathBuf,
    /// Seed of the synthetic dataset.
    #[arg(long, default_value_t = 1)]
    data_seed: u64,
    #[arg(long, default_value_t = 40)]
    train_objects: usize,
    #[arg(long, default_value_t = 22)]
    test_objects: usize,
    /// Use these files instead of synthetic data (all three are required).
    #[arg(long, requires_all = ["train_db", "test_db"])]
    mln: Option<PathBuf>,
    #[arg(long)]
    train_db: Option<PathBuf>,
    #[arg(long)]
    test_db: Option<PathBuf>,
    #[arg(long, default_value = QUERY_PREDICATE)]
    query: String,
    #[arg(long, default_value = OBJECT_DOMAIN)]
    object_domain: String,
    #[arg(long)]
    no_baselines: bool,
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 40)]
    train_objects: usize,
    #[arg(long, default_value_t = 22)]
    test_objects: usize,
    #[arg(long, default_value = "data")]
    out_dir: PathBuf,
}

fn read_model(path: &Path) -> anyhow::Result<MlnModel> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_mln(&text).with_context(|| format!("in {}", path.display()))
}

fn read_db(path: &Path, model: &MlnModel) -> anyhow::Result<EvidenceDatabase> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_db(&text, &model.decls).with_context(|| format!("in {}", path.display()))
}

fn cmd_learn(a: &LearnArgs) -> anyhow::Result<()> {
    let model = read_model(&a.mln)?;
    let db = read_db(&a.db, &model)?;
    let learned = learn(&model, &db, None, &a.opts.options())?;
    let out = learned.to_model(&model.without_extra_constants());
    fs::write(&a.out, format_mln(&out))?;
    let counts: Vec<serde_json::Value> = learned
        .templates
        .iter()
        .zip(&learned.evidence_counts)
        .map(|(t, z)| {
            serde_json::json!({
                "formula": t.formula.to_string(),
                "weight": t.weight.value(),
                "z": z,
            })
        })
        .collect();
    let mut sidecar = a.out.clone().into_os_string();
    sidecar.push(".z.json");
    fs::write(sidecar, serde_json::to_string_pretty(&counts)? + "\n")?;
    let d = &learned.diagnostics;
    eprintln!(
        "{} templates, {} iterations, converged: {}",
        learned.templates.len(),
        d.iterations,
        d.converged
    );
    Ok(())
}

fn cmd_infer(a: &InferArgs) -> anyhow::Result<()> {
    let model = read_model(&a.mln)?;
    let db = match &a.db {
        Some(p) => read_db(p, &model)?,
        None => EvidenceDatabase::default(),
    };
    let gibbs = GibbsParams {
        chains: a.chains,
        burn_in: a.burn_in,
        samples: a.samples,
        seed: a.seed,
    };
    let method = match a.method {
        InferKind::Exact => InferenceMethod::Exact {
            max_free_atoms: a.max_free_atoms,
        },
        InferKind::Gibbs => InferenceMethod::Gibbs(gibbs),
        InferKind::Auto => InferenceMethod::Auto {
            max_free_atoms: a.max_free_atoms,
            gibbs,
        },
    };
    let result = mlncla::query(&model, &db, &a.query, &method, &GroundingOptions::from_env())?;
    for (atom, p) in result.iter() {
        println!("{atom}\t{p}");
    }
    Ok(())
}

fn cmd_kl_init(a: &KlInitArgs) -> anyhow::Result<()> {
    let model = read_model(&a.mln)?;
    let db = match &a.db {
        Some(p) => read_db(p, &model)?,
        None => EvidenceDatabase::default(),
    };
    let kl = build_knowledge_list(&model, &db)?;
    save_knowledge_list(&kl, &a.out)?;
    Ok(())
}

fn cmd_cla_step(a: &ClaStepArgs) -> anyhow::Result<()> {
    let kl = load_knowledge_list(&a.kl).with_context(|| format!("loading {}", a.kl.display()))?;
    let strategy: UpdateStrategy = a.strategy.parse()?;
    let model = a.mln.as_deref().map(read_model).transpose()?;
    let mut decls = kl.decls.clone();
    if let Some(m) = &model {
        for d in &m.decls {
            if !decls.iter().any(|x| x.name == d.name) {
                decls.push(d.clone());
            }
        }
    }
    let db = match &a.db {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Some(parse_db(&text, &decls).with_context(|| format!("in {}", p.display()))?)
        }
        None => None,
    };
    if model.is_none() && db.is_none() {
        bail!(mlncla::Error::EmptyIncoming);
    }
    let incoming = Incoming { model, db };
    let opts = ClaOptions {
        learn: a.opts.options(),
        split_training: match a.split {
            Split::Joint => SplitTraining::Joint,
            Split::Independent => SplitTraining::Independent,
        },
        structure_hook: match a.hook {
            Hook::Unsupported => StructureHook::Unsupported,
            Hook::WeightsOnly => StructureHook::WeightsOnly,
        },
        ..ClaOptions::default()
    };
    let novelty = classify(&kl, &incoming)?;
    let out = cla_step(&kl, &incoming, &strategy, &opts)?;
    save_knowledge_list(&out, &a.out)?;
    eprintln!(
        "{} new predicates, {} new constants, {} new formulas; {} categories, {} formulas",
        novelty.new_predicates.len(),
        novelty.new_constants.len(),
        novelty.new_formulas,
        out.categories.len(),
        out.num_formulas()
    );
    Ok(())
}

fn dataset(a: &ExperimentArgs) -> anyhow::Result<Dataset> {
    match (&a.mln, &a.train_db, &a.test_db) {
        (Some(m), Some(tr), Some(te)) => Ok(load_dataset(m, tr, te, &a.query, &a.object_domain)?),
        (None, None, None) => Ok(generate_synthetic_dataset(a.data_seed, a.train_objects, a.test_objects)?),
        _ => bail!("--mln, --train-db and --test-db must be given together"),
    }
}

fn cmd_experiment(kind: &ExperimentKind) -> anyhow::Result<()> {
    let (a, formulas) = match kind {
        ExperimentKind::Constants(a) => (a, false),
        ExperimentKind::Formulas(a) => (a, true),
    };
    let mut cfg = ExperimentConfig::new(dataset(a)?);
    cfg.seed = a.seed;
    cfg.runs = a.runs;
    cfg.steps = a.steps;
    cfg.baselines = !a.no_baselines;
    cfg.cla.learn.grounding = GroundingOptions::from_env();
    cfg.discriminative.grounding = cfg.cla.learn.grounding;
    cfg.discriminative.seed = a.seed;
    if !a.strategy.iter().any(|s| s == "all") {
        cfg.strategies = a
            .strategy
            .iter()
            .map(|s| s.parse())
            .collect::<Result<_, _>>()?;
    }
    let result = if formulas {
        run_formulas_experiment(&cfg)?
    } else {
        run_constants_experiment(&cfg)?
    };
    for p in emit_results(&result, &a.out_dir)? {
        println!("{}", p.display());
    }
    Ok(())
}

fn cmd_gen_data(a: &GenDataArgs) -> anyhow::Result<()> {
    let ds = generate_synthetic_dataset(a.seed, a.train_objects, a.test_objects)?;
    fs::create_dir_all(&a.out_dir)?;
    let files = [
        ("model.mln", format_mln(&ds.model)),
        ("train.db", format_db(&ds.train)),
        ("test.db", format_db(&ds.test)),
    ];
    for (name, text) in files {
        let p = a.out_dir.join(name);
        fs::write(&p, text)?;
        println!("{}", p.display());
    }
    Ok(())
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<mlncla::Error>() {
        Some(err) if err.is_resource_limit() => 3,
        Some(err) if err.is_validation() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let r = match &cli.command {
        Command::Learn(a) => cmd_learn(a),
        Command::Infer(a) => cmd_infer(a),
        Command::KlInit(a) => cmd_kl_init(a),
        Command::ClaStep(a) => cmd_cla_step(a),
        Command::Experiment(k) => cmd_experiment(k),
        Command::GenData(a) => cmd_gen_data(a),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
