use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use loghd::codebook::{build_codebook, min_code_length, CodebookSpec};
use loghd::compression::QuantSpec;
use loghd::faults::{evaluate_state, matched_budget_configs, BudgetLedger, FaultSpec, DEFAULT_TRIALS};
use loghd::harness::plan::{Cell, DEFAULT_HYPER_DIM};
use loghd::harness::{
    emit_results, generate_blobs, load_labeled, load_model, run_plan, save_model, write_dataset_csv,
    BlobSpec, BundleChoice, DatasetSource, DatasetSpec, ExperimentPlan, ModelFile, PlanContext,
};
use loghd::hdc::{EncodedSet, Nonlinearity};
use loghd::loghd::{DEFAULT_EPOCHS, DEFAULT_LEARNING_RATE};
use loghd::{Error, ErrorKind, Method};

const OUT_DIR_ENV: &str = "LOGHD_OUT_DIR";

#[derive(Parser)]
#[command(name = "loghd", version, about = "Hyperdimensional classifiers with class-axis compression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and write it as a quantized model file.
    Train(TrainArgs),
    /// Score a model file on a CSV split, optionally under bit flips.
    Eval(EvalArgs),
    /// Run an experiment plan and write the result table.
    Sweep(SweepArgs),
    /// Dump a model file header, or a codebook with its budget arithmetic.
    Inspect(InspectArgs),
    /// Write a synthetic Gaussian-blob train/test pair as CSV.
    GenBlobs(GenBlobsArgs),
}

#[derive(Args, Clone)]
struct BlobArgs {
    #[arg(long, default_value_t = 16)]
    classes: usize,
    #[arg(long, default_value_t = 16)]
    features: usize,
    #[arg(long, default_value_t = 40)]
    train_per_class: usize,
    #[arg(long, default_value_t = 25)]
    test_per_class: usize,
    #[arg(long, default_value_t = 0.12)]
    spread: f64,
    /// Seed of the blob generator (independent of the model seed).
    #[arg(long, default_value_t = 0)]
    data_seed: u64,
}

impl BlobArgs {
    fn spec(&self) -> BlobSpec {
        BlobSpec {
            classes: self.classes,
            features: self.features,
            train_per_class: self.train_per_class,
            test_per_class: self.test_per_class,
            spread: self.spread,
            seed: self.data_seed,
        }
    }
}

/// CSV train/test files, or synthetic blobs when none are given.
#[derive(Args, Clone)]
struct DataArgs {
    #[arg(long, requires = "test")]
    train: Option<PathBuf>,
    #[arg(long, requires = "train")]
    test: Option<PathBuf>,
    /// Dataset name; isolet, ucihar, pamap2 and page get their shapes checked.
    #[arg(long, default_value = "csv")]
    name: String,
    #[command(flatten)]
    blobs: BlobArgs,
}

impl DataArgs {
    fn source(&self) -> DatasetSource {
        match (&self.train, &self.test) {
            (Some(train), Some(test)) => DatasetSource::Csv(DatasetSpec {
                name: self.name.clone(),
                train: train.clone(),
                test: test.clone(),
                features: None,
                classes: None,
            }),
            _ => DatasetSource::Blobs(self.blobs.spec()),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum NonlinearityArg {
    Cosine,
    Sign,
    None,
}

impl From<NonlinearityArg> for Nonlinearity {
    fn from(n: NonlinearityArg) -> Self {
        match n {
            NonlinearityArg::Cosine => Nonlinearity::Cosine,
            NonlinearityArg::Sign => Nonlinearity::Sign,
            NonlinearityArg::None => Nonlinearity::None,
        }
    }
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Hypervector dimension (10000 for full-scale runs).
    #[arg(long, default_value_t = DEFAULT_HYPER_DIM)]
    dim: usize,
    #[arg(long, value_enum, default_value = "cosine")]
    nonlinearity: NonlinearityArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_EPOCHS)]
    epochs: usize,
    #[arg(long, default_value_t = DEFAULT_LEARNING_RATE)]
    learning_rate: f64,
    /// Keep the profiles estimated before refinement.
    #[arg(long)]
    no_profile_refresh: bool,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
}

impl ModelArgs {
    fn apply(&self, plan: &mut ExperimentPlan) {
        plan.hyper_dim = self.dim;
        plan.nonlinearity = self.nonlinearity.into();
        plan.seed = self.seed;
        plan.epochs = self.epochs;
        plan.learning_rate = self.learning_rate;
        plan.refresh_profiles = !self.no_profile_refresh;
        plan.alpha = self.alpha;
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value = "loghd")]
    method: Method,
    /// Alphabet size k of the codebook.
    #[arg(short, long, default_value_t = 2)]
    k: u32,
    /// Bundle count; defaults to ceil(log_k C) plus the redundancy.
    #[arg(short, long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    redundancy: usize,
    /// Fraction of dimensions pruned (sparsehd, hybrid).
    #[arg(long, default_value_t = 0.0)]
    sparsity: f64,
    #[arg(long, default_value_t = 8)]
    bits: u8,
    /// Output model file; defaults to $LOGHD_OUT_DIR/model.loghd.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    /// CSV file with features then label, no header.
    #[arg(long)]
    data: PathBuf,
    /// Bit-flip probability applied to the stored payload.
    #[arg(short, long, default_value_t = 0.0)]
    p: f64,
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON plan file; when given, the plan flags below are ignored.
    #[arg(long)]
    plan: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_delimiter = ',', default_value = "loghd,sparsehd")]
    methods: Vec<Method>,
    #[arg(long = "k", value_delimiter = ',', default_value = "2,3")]
    alphabet_sizes: Vec<u32>,
    /// Pin the bundle count instead of fitting it to each budget.
    #[arg(long, conflicts_with = "redundancy")]
    bundles: Option<usize>,
    /// Pin the bundle count at ceil(log_k C) + r.
    #[arg(long)]
    redundancy: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0,0.2,0.4,0.6,0.8")]
    hybrid_sparsities: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "8")]
    bits: Vec<u8>,
    #[arg(long = "p", value_delimiter = ',', default_value = "0,0.1,0.2,0.4,0.6,0.8")]
    flip_probabilities: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.25")]
    budgets: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    trials: usize,
    /// Write the resolved plan as JSON here.
    #[arg(long)]
    save_plan: Option<PathBuf>,
    /// Result CSV; defaults to $LOGHD_OUT_DIR/sweep.csv.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

impl SweepArgs {
    fn plan(&self) -> loghd::Result<ExperimentPlan> {
        if let Some(path) = &self.plan {
            return ExperimentPlan::load(path);
        }
        let mut plan = ExperimentPlan::new(self.data.source());
        self.model.apply(&mut plan);
        plan.methods = self.methods.clone();
        plan.alphabet_sizes = self.alphabet_sizes.clone();
        plan.bundles = match (self.bundles, self.redundancy) {
            (Some(n), _) => BundleChoice::Fixed(n),
            (None, Some(r)) => BundleChoice::Redundant(r),
            (None, None) => BundleChoice::Budget,
        };
        plan.hybrid_sparsities = self.hybrid_sparsities.clone();
        plan.precisions = self.bits.clone();
        plan.flip_probabilities = self.flip_probabilities.clone();
        plan.budgets = self.budgets.clone();
        plan.trials = self.trials;
        plan.validate()?;
        Ok(plan)
    }
}

#[derive(Args)]
struct InspectArgs {
    /// Model file to describe.
    #[arg(long, conflicts_with_all = ["classes", "k"])]
    model: Option<PathBuf>,
    #[arg(long, required_unless_present = "model")]
    classes: Option<usize>,
    #[arg(short, long, required_unless_present = "model")]
    k: Option<u32>,
    #[arg(short, long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also report the configurations matching this budget fraction.
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_HYPER_DIM)]
    dim: usize,
}

#[derive(Args)]
struct GenBlobsArgs {
    #[command(flatten)]
    blobs: BlobArgs,
    /// Directory for `<name>-train.csv` and `<name>-test.csv`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn out_dir(explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn default_out(explicit: &Option<PathBuf>, file: &str) -> std::io::Result<PathBuf> {
    if let Some(p) = explicit {
        return Ok(p.clone());
    }
    let dir = out_dir(None);
    std::fs::create_dir_all(&dir)?;
    Ok(dir.join(file))
}

fn train(args: &TrainArgs) -> loghd::Result<()> {
    let mut plan = ExperimentPlan::new(args.data.source());
    args.model.apply(&mut plan);
    plan.alphabet_sizes = vec![args.k];
    let quant = QuantSpec::new(args.bits)?;
    let mut ctx = PlanContext::new(plan)?;
    let classes = ctx.class_count();
    let n = args
        .n
        .unwrap_or_else(|| min_code_length(classes, args.k).max(1) + args.redundancy);
    let cell = Cell {
        method: args.method,
        budget: 1.0,
        k: args.k,
        n,
        sparsity: args.sparsity,
    };
    let model = ctx.build(&cell)?;
    let file = ModelFile::new(
        &model,
        &quant,
        Some(ctx.split.scaler.clone()),
        ctx.split.label_values.clone(),
    )?;
    let accuracy = file.model.accuracy(&ctx.test);
    let ledger = BudgetLedger::from_state(&file.state, classes, model.hyper_dim());
    let out = default_out(&args.out, "model.loghd")?;
    save_model(&out, &file)?;
    println!("dataset        {}", ctx.split.name);
    println!("method         {}", model.method());
    if model.method().is_class_axis() {
        println!("k, n           {}, {n}", args.k);
    }
    println!("classes        {classes}");
    println!("dim            {}", model.hyper_dim());
    println!("sparsity       {}", model.sparsity());
    println!("bits           {}", args.bits);
    println!("fraction       {:.6}", ledger.fraction());
    println!("payload bytes  {}", ledger.total_bytes);
    println!("test accuracy  {accuracy:.6}");
    println!("wrote          {}", out.display());
    Ok(())
}

fn eval(args: &EvalArgs) -> loghd::Result<()> {
    let file = load_model(&args.model)?;
    let data = load_labeled(&args.data, &file.label_values, file.scaler.as_ref())?;
    let encoder = match file.model.as_loghd() {
        Some(m) => m.encoder().clone(),
        None => file.model.as_prototypes().expect("prototype state").encoder().clone(),
    };
    let set = EncodedSet::encode(&encoder, &data)?;
    let faults = FaultSpec::new(args.p, args.seed, args.trials)?;
    let result = evaluate_state(&file.model, &file.state, &set, &faults)?;
    println!("samples        {}", set.len());
    println!("clean accuracy {:.6}", result.clean_accuracy);
    if args.p > 0.0 {
        println!("p              {}", args.p);
        println!("mean accuracy  {:.6}", result.mean());
        println!("std dev        {:.6}", result.std_dev());
    }
    Ok(())
}

fn sweep(args: &SweepArgs) -> loghd::Result<()> {
    let plan = args.plan()?;
    if let Some(path) = &args.save_plan {
        std::fs::write(path, plan.to_json())?;
    }
    let results = run_plan(&plan)?;
    let out = default_out(&args.out, "sweep.csv")?;
    emit_results(&results, &out)?;
    eprintln!("{} rows -> {}", results.rows.len(), out.display());
    Ok(())
}

fn inspect(args: &InspectArgs) -> loghd::Result<()> {
    if let Some(path) = &args.model {
        let file = load_model(path)?;
        let m = &file.model;
        let classes = m.class_count();
        let ledger = BudgetLedger::from_state(&file.state, classes, m.hyper_dim());
        println!("method         {}", m.method());
        println!("classes        {classes}");
        println!("dim            {}", m.hyper_dim());
        println!("vectors        {}", m.vector_count());
        println!("sparsity       {}", m.sparsity());
        println!("retained       {}", m.mask().retained_count());
        println!("bits           {}", ledger.bits);
        println!("model bits     {}", ledger.model_bits);
        println!("profile bits   {}", ledger.profile_bits);
        println!("payload bytes  {}", ledger.total_bytes);
        println!("fraction       {:.6}", ledger.fraction());
        println!("labels         {:?}", file.label_values);
        if let Some(cb) = m.codebook() {
            println!("alphabet       {}", cb.alphabet_size());
            println!("loads          {:?}", cb.loads());
            print!("{}", cb.to_csv());
        }
        return Ok(());
    }
    let classes = args.classes.expect("required by clap");
    let k = args.k.expect("required by clap");
    let min_n = min_code_length(classes, k).max(1);
    let n = args.n.unwrap_or(min_n);
    let cb = build_codebook(
        &CodebookSpec::new(classes, k, n)
            .with_alpha(args.alpha)
            .with_seed(args.seed),
    )?;
    println!("min bundles    {min_n}");
    println!("min fraction   {:.6}", min_n as f64 / classes as f64);
    println!("loads          {:?}", cb.loads());
    println!("max load       {}", cb.max_load());
    if let Some(x) = args.budget {
        let m = matched_budget_configs(classes, args.dim, k, x)?;
        println!("budget         {x}");
        match m.loghd {
            Some(n) => println!("loghd          n={n}"),
            None => println!("loghd          infeasible"),
        }
        match m.sparsehd {
            Some(s) => println!("sparsehd       S={:.6} retained={}", s.sparsity, s.retained),
            None => println!("sparsehd       infeasible"),
        }
        for h in &m.hybrid {
            println!("hybrid         n={} S={:.6} retained={}", h.bundles, h.sparsity, h.retained);
        }
    }
    print!("{}", cb.to_csv());
    Ok(())
}

fn gen_blobs(args: &GenBlobsArgs) -> loghd::Result<()> {
    let spec = args.blobs.spec();
    let (train, test) = generate_blobs(&spec)?;
    let dir = out_dir(args.out_dir.as_deref());
    std::fs::create_dir_all(&dir)?;
    let train_path = dir.join(format!("{}-train.csv", spec.name()));
    let test_path = dir.join(format!("{}-test.csv", spec.name()));
    write_dataset_csv(&train_path, &train)?;
    write_dataset_csv(&test_path, &test)?;
    println!("{}", train_path.display());
    println!("{}", test_path.display());
    Ok(())
}

fn exit_code(err: &Error) -> u8 {
    match err.kind() {
        ErrorKind::Config => 2,
        ErrorKind::Ingestion => 3,
        ErrorKind::Format => 4,
        ErrorKind::Other => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => sweep(a),
        Command::Inspect(a) => inspect(a),
        Command::GenBlobs(a) => gen_blobs(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
