//! End-to-end runs: load, featurize, reduce, cluster, evaluate.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cluster::{self, write_dendrogram_tsv, Algorithm, ClusterAssignment, Dendrogram, DEFAULT_K, DEFAULT_MAX_ITER};
use crate::corpus::{compute_idf_with, load_corpus, Corpus, Idf, IdfScheme};
use crate::embeddings::{load_embeddings, EmbeddingTable};
use crate::error::{Error, Result};
use crate::evaluate::{compare_runs, pairwise_f1, EvalReport, RankingTable};
use crate::featurize::{
    featurize_corpus, BlockKind, DegeneratePolicy, FeatureMatrix, FeaturizeOptions, WeightingConfig, DEFAULT_C_IN,
    DEFAULT_C_OUT,
};
use crate::reduce::{reduce_and_concat, ColumnRange, PcaModel, ReductionPlan, DEFAULT_COMPONENTS};

pub const ASSIGNMENT_FILE: &str = "assignment.tsv";
pub const DENDROGRAM_FILE: &str = "dendrogram.tsv";
pub const REPORT_FILE: &str = "report.json";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: PathBuf,
    pub embeddings: PathBuf,
    pub embedding_dim: Option<usize>,
    pub blocks: Vec<BlockKind>,
    pub c_in: f64,
    pub c_out: f64,
    pub degenerate: DegeneratePolicy,
    pub idf: IdfScheme,
    /// L2-normalize each block row after featurization.
    pub normalize_blocks: bool,
    /// Explicit PCA component counts per block; 0 means passthrough.
    pub pca: BTreeMap<String, usize>,
    /// Components for sparse blocks without an explicit entry.
    pub pca_components: usize,
    pub algo: Algorithm,
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// L2-normalize the concatenated vectors before clustering.
    pub normalize_final: bool,
    pub out: PathBuf,
    #[serde(skip_serializing)]
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus: PathBuf::new(),
            embeddings: PathBuf::new(),
            embedding_dim: None,
            blocks: vec![BlockKind::EmbDep, BlockKind::EntTypes],
            c_in: DEFAULT_C_IN,
            c_out: DEFAULT_C_OUT,
            degenerate: DegeneratePolicy::default(),
            idf: IdfScheme::default(),
            normalize_blocks: false,
            pca: BTreeMap::new(),
            pca_components: DEFAULT_COMPONENTS,
            algo: Algorithm::HacWard,
            k: DEFAULT_K,
            seed: 0,
            max_iter: DEFAULT_MAX_ITER,
            normalize_final: false,
            out: PathBuf::from("out"),
            threads: None,
        }
    }
}

impl RunConfig {
    /// Checks everything that can be checked without touching the filesystem.
    pub fn validate(&self) -> Result<()> {
        if self.corpus.as_os_str().is_empty() {
            return Err(Error::Config("no corpus path given".into()));
        }
        if self.embeddings.as_os_str().is_empty() {
            return Err(Error::Config("no embeddings path given".into()));
        }
        self.validate_parameters()
    }

    /// Like [`RunConfig::validate`] but ignores the input paths, for runs on
    /// already-loaded inputs.
    pub fn validate_parameters(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        self.weighting().validate()?;
        if self.blocks.is_empty() {
            return Err(Error::Config("at least one feature block must be selected".into()));
        }
        if self.embedding_dim == Some(0) {
            return Err(Error::Config("embedding_dim must be positive".into()));
        }
        if self.pca_components == 0 {
            return Err(Error::Config("pca_components must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be positive".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        let selected: BTreeSet<&str> = self.blocks.iter().map(|b| b.as_str()).collect();
        for name in self.pca.keys() {
            if !selected.contains(name.as_str()) {
                return Err(Error::Config(format!("PCA directive for unselected block {name:?}")));
            }
        }
        Ok(())
    }

    pub fn weighting(&self) -> WeightingConfig {
        WeightingConfig {
            c_in: self.c_in,
            c_out: self.c_out,
        }
    }

    pub fn featurize_options(&self) -> FeaturizeOptions {
        FeaturizeOptions {
            weighting: self.weighting(),
            degenerate: self.degenerate,
            normalize: self.normalize_blocks,
        }
    }

    pub fn selection(&self) -> BTreeSet<BlockKind> {
        self.blocks.iter().copied().collect()
    }

    pub fn reduction_plan(&self, fm: &FeatureMatrix) -> Result<ReductionPlan> {
        ReductionPlan::for_matrix(fm, self.pca_components, &self.pca)
    }
}

/// Runs `f` on a dedicated pool of `threads` workers, or on the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("building thread pool: {e}")))?
            .install(f),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub struct Inputs {
    pub corpus: Corpus,
    pub table: EmbeddingTable,
    pub idf: Idf,
    pub hashes: Vec<FileHash>,
}

pub fn load_inputs(cfg: &RunConfig) -> Result<Inputs> {
    let corpus = load_corpus(&cfg.corpus)?;
    let table = load_embeddings(&cfg.embeddings, cfg.embedding_dim)?;
    let idf = compute_idf_with(&corpus, cfg.idf);
    let hashes = [&cfg.corpus, &cfg.embeddings]
        .into_iter()
        .map(|p| {
            Ok(FileHash {
                path: p.display().to_string(),
                sha256: sha256_file(p)?,
            })
        })
        .collect::<Result<_>>()?;
    info!(
        "loaded {} instances, {} embeddings of dim {}",
        corpus.n_instances(),
        table.len(),
        table.dim()
    );
    Ok(Inputs {
        corpus,
        table,
        idf,
        hashes,
    })
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub assignment: ClusterAssignment,
    pub dendrogram: Option<Dendrogram>,
    pub report: Option<EvalReport>,
    pub provenance: Vec<ColumnRange>,
    pub models: BTreeMap<String, PcaModel>,
}

/// Featurize, reduce, cluster and evaluate already-loaded inputs.
pub fn execute(cfg: &RunConfig, inputs: &Inputs) -> Result<RunResult> {
    cfg.validate_parameters()?;
    let fm = featurize_corpus(
        &inputs.corpus,
        &inputs.table,
        &inputs.idf,
        &cfg.featurize_options(),
        &cfg.selection(),
    )
    .map_err(|e| e.in_stage("featurize"))?;

    let reduction = cfg
        .reduction_plan(&fm)
        .and_then(|plan| reduce_and_concat(&fm, &plan))
        .map_err(|e| e.in_stage("reduce"))?;

    let mut vectors = reduction.matrix;
    if cfg.normalize_final {
        cluster::l2_normalize_rows(&mut vectors);
    }
    let clustering = cluster::cluster_rows(&vectors, cfg.algo, cfg.k, cfg.seed, cfg.max_iter)
        .map_err(|e| e.in_stage("cluster"))?;
    let assignment = ClusterAssignment::new(fm.instance_ids.clone(), clustering.labels, cfg.k)
        .map_err(|e| e.in_stage("cluster"))?;

    let gold = inputs.corpus.gold_labels();
    let report = match pairwise_f1(&assignment, &gold) {
        Ok(r) => Some(r),
        Err(e) => {
            warn!("skipping evaluation: {e}");
            None
        }
    };

    Ok(RunResult {
        assignment,
        dendrogram: clustering.dendrogram,
        report,
        provenance: reduction.provenance,
        models: reduction.models,
    })
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    config: &'a RunConfig,
    inputs: &'a [FileHash],
    provenance: &'a [ColumnRange],
    outputs: Vec<FileHash>,
}

fn write_file(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    write(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn write_report(path: &Path, report: &EvalReport) -> Result<()> {
    write_file(path, |w| {
        serde_json::to_writer_pretty(&mut *w, report)?;
        w.write_all(b"\n")
    })
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub result: RunResult,
    /// Files written, manifest last.
    pub files: Vec<PathBuf>,
}

/// Validates `cfg`, runs every stage and writes the assignment, dendrogram
/// (HAC only), report (when gold labels exist) and manifest to `cfg.out`.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    with_threads(cfg.threads, || {
        let inputs = load_inputs(cfg).map_err(|e| e.in_stage("load"))?;
        let result = execute(cfg, &inputs)?;
        let files = write_outputs(cfg, &inputs, &result).map_err(|e| e.in_stage("write"))?;
        Ok(RunOutput { result, files })
    })
}

fn write_outputs(cfg: &RunConfig, inputs: &Inputs, result: &RunResult) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let mut files = Vec::new();

    let path = cfg.out.join(ASSIGNMENT_FILE);
    write_file(&path, |w| result.assignment.write_tsv(w))?;
    files.push(path);

    if let Some(d) = &result.dendrogram {
        let path = cfg.out.join(DENDROGRAM_FILE);
        write_file(&path, |w| write_dendrogram_tsv(d, w))?;
        files.push(path);
    }
    if let Some(r) = &result.report {
        let path = cfg.out.join(REPORT_FILE);
        write_report(&path, r)?;
        files.push(path);
    }

    let outputs = files
        .iter()
        .map(|p| {
            Ok(FileHash {
                path: p.file_name().unwrap().to_string_lossy().into_owned(),
                sha256: sha256_file(p)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        config: cfg,
        inputs: &inputs.hashes,
        provenance: &result.provenance,
        outputs,
    };
    let path = cfg.out.join(MANIFEST_FILE);
    write_file(&path, |w| {
        serde_json::to_writer_pretty(&mut *w, &manifest)?;
        w.write_all(b"\n")
    })?;
    files.push(path);
    Ok(files)
}

/// Parameter values to try. An empty axis keeps the base configuration's
/// value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub c_in: Vec<f64>,
    pub c_out: Vec<f64>,
    pub n_components: Vec<usize>,
}

impl SweepGrid {
    pub fn is_empty(&self) -> bool {
        self.c_in.is_empty() && self.c_out.is_empty() && self.n_components.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub name: String,
    pub c_in: f64,
    pub c_out: f64,
    pub n_components: usize,
    pub report: Option<EvalReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepOutcome {
    pub points: Vec<SweepPoint>,
    pub ranking: RankingTable,
}

fn point_config(base: &RunConfig, c_in: f64, c_out: f64, n_components: usize) -> RunConfig {
    let mut cfg = base.clone();
    cfg.c_in = c_in;
    cfg.c_out = c_out;
    cfg.pca_components = n_components;
    for v in cfg.pca.values_mut() {
        if *v != 0 {
            *v = n_components;
        }
    }
    cfg
}

/// Runs the pipeline once per grid point on inputs loaded once. Points that
/// fail validation or a stage are recorded with their error and excluded
/// from the ranking.
pub fn sweep(base: &RunConfig, grid: &SweepGrid) -> Result<SweepOutcome> {
    if grid.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    let mut probe = base.clone();
    // Grid values are validated per point, so only check the rest here.
    probe.c_in = DEFAULT_C_IN;
    probe.c_out = DEFAULT_C_OUT;
    probe.validate()?;

    with_threads(base.threads, || {
        let inputs = load_inputs(base).map_err(|e| e.in_stage("load"))?;
        if inputs.corpus.gold_labels().len() < 2 {
            return Err(Error::Config("sweep needs gold labels on at least 2 instances".into()));
        }
        let or_base = |axis: &[f64], v: f64| if axis.is_empty() { vec![v] } else { axis.to_vec() };
        let c_ins = or_base(&grid.c_in, base.c_in);
        let c_outs = or_base(&grid.c_out, base.c_out);
        let comps = if grid.n_components.is_empty() {
            vec![base.pca_components]
        } else {
            grid.n_components.clone()
        };

        let mut points = Vec::new();
        for &c_in in &c_ins {
            for &c_out in &c_outs {
                for &nc in &comps {
                    let name = format!("c_in={c_in},c_out={c_out},pca={nc}");
                    let cfg = point_config(base, c_in, c_out, nc);
                    let outcome = cfg.validate().and_then(|_| execute(&cfg, &inputs)).and_then(|r| {
                        r.report
                            .ok_or_else(|| Error::Config("no gold-labeled instances were clustered".into()))
                    });
                    let (report, error) = match outcome {
                        Ok(r) => (Some(r), None),
                        Err(e) => {
                            warn!("sweep point {name} failed: {e}");
                            (None, Some(e.to_string()))
                        }
                    };
                    points.push(SweepPoint {
                        name,
                        c_in,
                        c_out,
                        n_components: nc,
                        report,
                        error,
                    });
                }
            }
        }
        let scored: Vec<(String, EvalReport)> = points
            .iter()
            .filter_map(|p| p.report.map(|r| (p.name.clone(), r)))
            .collect();
        Ok(SweepOutcome {
            ranking: compare_runs(&scored),
            points,
        })
    })
}
