use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::warn;

use relclust::cluster::{cluster_rows, l2_normalize_rows, write_dendrogram_tsv, Algorithm, ClusterAssignment};
use relclust::container::{load_features, save_features, save_pca};
use relclust::corpus::{compute_idf_with, load_corpus, IdfScheme};
use relclust::embeddings::load_embeddings;
use relclust::evaluate::{compare_runs, pairwise_f1};
use relclust::featurize::{featurize_corpus, BlockKind, DegeneratePolicy};
use relclust::pipeline::{
    run_pipeline, sweep, with_threads, write_report, RunConfig, SweepGrid, ASSIGNMENT_FILE, DENDROGRAM_FILE,
    REPORT_FILE,
};
use relclust::reduce::{concat, parse_pca_arg, reduce_blocks, ReductionPlan, DEFAULT_COMPONENTS};
use relclust::{Error, Result};

const FEATURES_FILE: &str = "features.bin";
const REDUCED_FILE: &str = "reduced.bin";

/// Unsupervised relation clustering over annotated entity-pair sentences.
#[derive(Parser)]
#[command(name = "relclust", version)]
struct Cli {
    /// Log progress messages.
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build feature blocks and dump them to <out>/features.bin.
    Featurize(RunArgs),
    /// Apply per-block PCA to a feature dump; writes <out>/reduced.bin and one
    /// pca_<block>.bin per reduced block.
    Reduce(ReduceArgs),
    /// Cluster the concatenated blocks of a feature dump.
    Cluster(ClusterArgs),
    /// Score an assignment TSV against the corpus gold labels.
    Evaluate(EvaluateArgs),
    /// Run every stage end to end.
    Run(RunArgs),
    /// Run the pipeline over a parameter grid and rank the results.
    Sweep(SweepArgs),
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    /// TOML file with pipeline settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Expected embedding dimension (inferred from the file when absent).
    #[arg(long)]
    embedding_dim: Option<usize>,
    /// Comma-separated blocks: tfidf, emb_sum, emb_idf, emb_dep, ent_types.
    #[arg(long, value_delimiter = ',')]
    blocks: Option<Vec<String>>,
    #[arg(long)]
    c_in: Option<f64>,
    #[arg(long)]
    c_out: Option<f64>,
    /// Per-block reduction, `block=components` or `block=none`; repeatable.
    #[arg(long = "pca")]
    pca: Vec<String>,
    /// Components for sparse blocks without an explicit --pca.
    #[arg(long)]
    pca_components: Option<usize>,
    /// hac or kmeans.
    #[arg(long)]
    algo: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Empty dependency paths: error, skip-instance or all-c-out.
    #[arg(long)]
    degenerate: Option<String>,
    /// smoothed or plain.
    #[arg(long)]
    idf: Option<String>,
    #[arg(long)]
    normalize_blocks: bool,
    #[arg(long)]
    normalize_final: bool,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReduceArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long = "pca")]
    pca: Vec<String>,
    #[arg(long, default_value_t = DEFAULT_COMPONENTS)]
    pca_components: usize,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct ClusterArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long, default_value = "hac")]
    algo: String,
    #[arg(long, default_value_t = relclust::cluster::DEFAULT_K)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = relclust::cluster::DEFAULT_MAX_ITER)]
    max_iter: usize,
    #[arg(long)]
    normalize_final: bool,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    assignment: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// Also write <out>/report.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_delimiter = ',')]
    grid_c_in: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    grid_c_out: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    grid_components: Vec<usize>,
}

fn parse_overrides(items: &[String]) -> Result<BTreeMap<String, usize>> {
    items
        .iter()
        .map(|s| parse_pca_arg(s).map(|(name, k)| (name, k.unwrap_or(0))))
        .collect()
}

fn parse_scheme(s: &str) -> Result<IdfScheme> {
    match s {
        "smoothed" => Ok(IdfScheme::Smoothed),
        "plain" => Ok(IdfScheme::Plain),
        other => Err(Error::Config(format!("unknown idf scheme {other:?}"))),
    }
}

impl RunArgs {
    fn into_config(self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(v) = self.corpus {
            cfg.corpus = v;
        }
        if let Some(v) = self.embeddings {
            cfg.embeddings = v;
        }
        if self.embedding_dim.is_some() {
            cfg.embedding_dim = self.embedding_dim;
        }
        if let Some(blocks) = self.blocks {
            cfg.blocks = blocks
                .iter()
                .map(|b| b.trim().parse::<BlockKind>())
                .collect::<Result<_>>()?;
        }
        if let Some(v) = self.c_in {
            cfg.c_in = v;
        }
        if let Some(v) = self.c_out {
            cfg.c_out = v;
        }
        cfg.pca.extend(parse_overrides(&self.pca)?);
        if let Some(v) = self.pca_components {
            cfg.pca_components = v;
        }
        if let Some(v) = self.algo {
            cfg.algo = v.parse()?;
        }
        if let Some(v) = self.k {
            cfg.k = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.max_iter {
            cfg.max_iter = v;
        }
        if let Some(v) = self.degenerate {
            cfg.degenerate = v.parse::<DegeneratePolicy>()?;
        }
        if let Some(v) = self.idf {
            cfg.idf = parse_scheme(&v)?;
        }
        cfg.normalize_blocks |= self.normalize_blocks;
        cfg.normalize_final |= self.normalize_final;
        if self.threads.is_some() {
            cfg.threads = self.threads;
        }
        if let Some(v) = self.out {
            cfg.out = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_error(dir))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(io_error(path))
}

fn cmd_featurize(args: RunArgs) -> Result<()> {
    let cfg = args.into_config()?;
    with_threads(cfg.threads, || {
        let corpus = load_corpus(&cfg.corpus)?;
        let table = load_embeddings(&cfg.embeddings, cfg.embedding_dim)?;
        let idf = compute_idf_with(&corpus, cfg.idf);
        let fm = featurize_corpus(&corpus, &table, &idf, &cfg.featurize_options(), &cfg.selection())?;
        create_dir(&cfg.out)?;
        let path = cfg.out.join(FEATURES_FILE);
        save_features(&path, &fm)?;
        println!("{}: {} instances, {} blocks", path.display(), fm.n_instances(), fm.blocks.len());
        Ok(())
    })
}

fn cmd_reduce(args: ReduceArgs) -> Result<()> {
    with_threads(args.threads, || {
        let fm = load_features(&args.features)?;
        let plan = ReductionPlan::for_matrix(&fm, args.pca_components, &parse_overrides(&args.pca)?)?;
        let (reduced, models) = reduce_blocks(&fm, &plan)?;
        create_dir(&args.out)?;
        save_features(args.out.join(REDUCED_FILE), &reduced)?;
        for (name, model) in &models {
            save_pca(args.out.join(format!("pca_{name}.bin")), model)?;
        }
        for b in &reduced.blocks {
            println!("{}\t{}\t{}", b.name, plan.directives[&b.name], b.width);
        }
        Ok(())
    })
}

fn cmd_cluster(args: ClusterArgs) -> Result<()> {
    let algo: Algorithm = args.algo.parse()?;
    if args.k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    with_threads(args.threads, || {
        let fm = load_features(&args.features)?;
        let (mut vectors, _) = concat(&fm);
        if args.normalize_final {
            l2_normalize_rows(&mut vectors);
        }
        let clustering = cluster_rows(&vectors, algo, args.k, args.seed, args.max_iter)?;
        let assignment = ClusterAssignment::new(fm.instance_ids.clone(), clustering.labels, args.k)?;
        create_dir(&args.out)?;
        let path = args.out.join(ASSIGNMENT_FILE);
        assignment.write_tsv(create(&path)?).map_err(io_error(&path))?;
        if let Some(d) = &clustering.dendrogram {
            let path = args.out.join(DENDROGRAM_FILE);
            write_dendrogram_tsv(d, create(&path)?).map_err(io_error(&path))?;
        }
        println!("{} instances in {} clusters", assignment.labels.len(), assignment.n_clusters());
        Ok(())
    })
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let file = File::open(&args.assignment).map_err(io_error(&args.assignment))?;
    let assignment = ClusterAssignment::read_tsv(file)?;
    let corpus = load_corpus(&args.corpus)?;
    let report = pairwise_f1(&assignment, &corpus.gold_labels())?;
    if let Some(dir) = &args.out {
        create_dir(dir)?;
        write_report(&dir.join(REPORT_FILE), &report)?;
    }
    let name = args.assignment.display().to_string();
    print!("{}", compare_runs(&[(name, report)]).render());
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let cfg = args.into_config()?;
    let out = run_pipeline(&cfg)?;
    for f in &out.files {
        println!("wrote {}", f.display());
    }
    match out.result.report {
        Some(r) => print!("{}", compare_runs(&[("run".into(), r)]).render()),
        None => warn!("no gold labels: clustering written without evaluation"),
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let cfg = args.run.into_config()?;
    let grid = SweepGrid {
        c_in: args.grid_c_in,
        c_out: args.grid_c_out,
        n_components: args.grid_components,
    };
    let outcome = sweep(&cfg, &grid)?;
    for p in outcome.points.iter().filter(|p| p.error.is_some()) {
        eprintln!("{}: {}", p.name, p.error.as_deref().unwrap_or_default());
    }
    create_dir(&cfg.out)?;
    let path = cfg.out.join("sweep.json");
    serde_json::to_writer_pretty(create(&path)?, &outcome).map_err(|e| io_error(&path)(e.into()))?;
    print!("{}", outcome.ranking.render());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if cli.verbose { "info" } else { "warn" }))
        .init();

    let result = match cli.command {
        Command::Featurize(a) => cmd_featurize(a),
        Command::Reduce(a) => cmd_reduce(a),
        Command::Cluster(a) => cmd_cluster(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
