//! `whitevec` command-line tool.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{Context, Result};
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use log::warn;
use whitevec::io::{self as wio, Dtype, Emb1Reader};
use whitevec::{
    build_index, evaluate, sweep_k, sym_eig, Components, EmbeddingMatrix, EvalReport, MomentState,
    PairedDataset, WhiteningTransform,
};

#[derive(Parser)]
#[command(
    name = "whitevec",
    version,
    about = "Whitening transforms for embedding vectors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a whitening transform on an embedding file.
    Fit(FitArgs),
    /// Apply a fitted transform to an embedding file.
    Transform(TransformArgs),
    /// Spearman correlation of pair cosines against gold scores.
    Eval(EvalArgs),
    /// Evaluate several values of k from one fit; TSV output.
    Sweep(SweepArgs),
    /// Summary statistics of an embedding file, computed in one pass.
    Stats(StatsArgs),
    /// Exact top-k cosine search.
    Search(SearchArgs),
    /// Measure search throughput and index size.
    Bench(BenchArgs),
}

#[derive(Args)]
struct Threads {
    /// Worker threads.
    #[arg(long, env = "WHITEVEC_THREADS", default_value_t = 1,
          value_parser = clap::value_parser!(u64).range(1..))]
    threads: u64,
}

impl Threads {
    fn get(&self) -> usize {
        usize::try_from(self.threads).unwrap_or(usize::MAX)
    }
}

#[derive(Args)]
struct Output {
    /// Write output here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Output {
    fn open(&self) -> Result<Box<dyn Write>> {
        Ok(match &self.out {
            Some(p) => Box::new(BufWriter::new(
                File::create(p).with_context(|| format!("creating {}", p.display()))?,
            )),
            None => Box::new(BufWriter::new(io::stdout().lock())),
        })
    }
}

#[derive(Args)]
struct FitArgs {
    /// Embeddings to fit on.
    #[arg(long)]
    input: PathBuf,
    /// Components to keep: a positive integer or "full".
    #[arg(long, value_parser = Components::from_str)]
    k: Components,
    /// Where to write the transform JSON.
    #[arg(long)]
    out: PathBuf,
    /// Rank threshold on eigenvalues [default: 1e-12 * trace / d].
    #[arg(long)]
    eps: Option<f64>,
    /// Accumulate moments row by row instead of loading the whole file.
    #[arg(long)]
    streaming: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum DtypeArg {
    F32,
    F64,
}

impl From<DtypeArg> for Dtype {
    fn from(d: DtypeArg) -> Self {
        match d {
            DtypeArg::F32 => Dtype::F32,
            DtypeArg::F64 => Dtype::F64,
        }
    }
}

#[derive(Args)]
struct TransformArgs {
    #[arg(long)]
    input: PathBuf,
    /// Transform JSON written by `fit`.
    #[arg(long)]
    transform: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Element type of the output file.
    #[arg(long, value_enum, default_value_t = DtypeArg::F64)]
    dtype: DtypeArg,
    #[command(flatten)]
    threads: Threads,
}

/// Where the whitening transform comes from.
#[derive(Clone, Debug)]
enum FitSource {
    /// Fit on the union of both sides of the evaluation pairs.
    Target,
    /// Raw embeddings, no transform.
    None,
    /// An embedding file to fit on.
    File(PathBuf),
}

impl FromStr for FitSource {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "" => Err("empty --fit value".into()),
            "target" => Ok(FitSource::Target),
            "none" => Ok(FitSource::None),
            path => Ok(FitSource::File(PathBuf::from(path))),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    Json,
    Tsv,
}

#[derive(Args)]
struct PairArgs {
    /// First sentence of each pair, one row per pair.
    #[arg(long)]
    left: PathBuf,
    /// Second sentence of each pair.
    #[arg(long)]
    right: PathBuf,
    /// One score per line, aligned with the embedding rows.
    #[arg(long)]
    gold: PathBuf,
    /// "target", "none", or an embedding file to fit on.
    #[arg(long, default_value = "target", value_parser = FitSource::from_str)]
    fit: FitSource,
    /// Dataset name in reports [default: gold file stem].
    #[arg(long)]
    name: Option<String>,
    /// Rank threshold on eigenvalues [default: 1e-12 * trace / d].
    #[arg(long)]
    eps: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    pairs: PairArgs,
    /// Components to keep: a positive integer or "full". Ignored with --fit none.
    #[arg(long, default_value = "full", value_parser = Components::from_str)]
    k: Components,
    /// Report format.
    #[arg(long, value_enum, default_value_t = ReportFormat::Json)]
    report: ReportFormat,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    pairs: PairArgs,
    /// Comma-separated list of k values.
    #[arg(long, value_delimiter = ',', required = true, value_parser = Components::from_str)]
    ks: Vec<Components>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    input: PathBuf,
    /// Number of leading eigenvalues to print.
    #[arg(long, default_value_t = 10)]
    top: usize,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct SearchArgs {
    /// Embeddings to search; hit ids are row numbers in this file.
    #[arg(long)]
    index: PathBuf,
    /// One query per row.
    #[arg(long)]
    query: PathBuf,
    /// Applied to both index and query rows.
    #[arg(long)]
    transform: Option<PathBuf>,
    /// Hits per query.
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    top: u64,
    #[command(flatten)]
    threads: Threads,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    search: SearchArgs,
    /// Timed repetitions; the median rate is reported.
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(3..))]
    reps: u64,
}

fn read_emb(path: &Path) -> Result<EmbeddingMatrix> {
    wio::read_emb1(path).with_context(|| format!("reading {}", path.display()))
}

fn read_transform(path: &Path) -> Result<WhiteningTransform> {
    wio::load_transform(path).with_context(|| format!("loading {}", path.display()))
}

fn stream_moments(path: &Path) -> Result<MomentState> {
    let ctx = || format!("reading {}", path.display());
    let mut reader = Emb1Reader::open(path).with_context(ctx)?;
    let mut state = MomentState::with_dim(reader.header().dim as usize);
    while let Some(row) = reader.next_row().with_context(ctx)? {
        state.update(row)?;
    }
    Ok(state)
}

fn fit(args: &FitArgs) -> Result<()> {
    let t = if args.streaming {
        let state = stream_moments(&args.input)?;
        let (mean, cov) = state.finalize()?;
        WhiteningTransform::fit_moments(mean, &cov, state.count(), args.k, args.eps)?
    } else {
        WhiteningTransform::fit(&read_emb(&args.input)?, args.k, args.eps)?
    };
    wio::save_transform(&args.out, &t)
        .with_context(|| format!("writing {}", args.out.display()))?;
    log::info!(
        "fitted {} -> {} dims on {} rows",
        t.input_dim(),
        t.output_dim(),
        t.fit_count()
    );
    Ok(())
}

fn transform(args: &TransformArgs) -> Result<()> {
    let t = read_transform(&args.transform)?;
    let data = read_emb(&args.input)?;
    let out = t.apply_batch_threads(&data, args.threads.get())?;
    wio::write_emb1_as(&args.out, &out, args.dtype.into())
        .with_context(|| format!("writing {}", args.out.display()))?;
    Ok(())
}

fn load_pairs(args: &PairArgs) -> Result<PairedDataset> {
    let name = match &args.name {
        Some(n) => n.clone(),
        None => args
            .gold
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    let gold =
        wio::read_gold(&args.gold).with_context(|| format!("reading {}", args.gold.display()))?;
    Ok(PairedDataset::new(
        name,
        read_emb(&args.left)?,
        read_emb(&args.right)?,
        gold,
    )?)
}

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("string serialization")
}

fn report_line(r: &EvalReport, k: &str, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => format!(
            "{{\"dataset\":{},\"n_pairs\":{},\"skipped\":{},\"k\":{},\"dim\":{},\"spearman_rho_x100\":{:.5}}}\n",
            json_string(&r.dataset),
            r.n_pairs,
            r.skipped,
            k,
            r.dim_used,
            r.rho_x100()
        ),
        ReportFormat::Tsv => format!(
            "dataset\tn_pairs\tskipped\tk\tdim\tspearman_rho_x100\n{}\t{}\t{}\t{}\t{}\t{:.5}\n",
            r.dataset,
            r.n_pairs,
            r.skipped,
            k.trim_matches('"'),
            r.dim_used,
            r.rho_x100()
        ),
    }
}

fn warn_skipped(r: &EvalReport) {
    if r.skipped > 0 {
        warn!(
            "{}: skipped {} pairs with a zero-norm side",
            r.dataset, r.skipped
        );
    }
}

fn eval(args: &EvalArgs) -> Result<()> {
    let data = load_pairs(&args.pairs)?;
    let (report, k) = match &args.pairs.fit {
        FitSource::None => (evaluate(&data, None)?, "null".to_string()),
        source => {
            let t = match source {
                FitSource::File(p) => {
                    WhiteningTransform::fit(&read_emb(p)?, args.k, args.pairs.eps)?
                }
                _ => WhiteningTransform::fit(&data.union(), args.k, args.pairs.eps)?,
            };
            let k = match args.k {
                Components::All => "\"full\"".to_string(),
                Components::Top(k) => k.to_string(),
            };
            (evaluate(&data, Some(&t))?, k)
        }
    };
    warn_skipped(&report);
    let mut out = args.output.open()?;
    out.write_all(report_line(&report, &k, args.report).as_bytes())?;
    out.flush()?;
    Ok(())
}

fn sweep(args: &SweepArgs) -> Result<()> {
    let corpus = match &args.pairs.fit {
        FitSource::None => unreachable!("rejected during argument validation"),
        FitSource::Target => None,
        FitSource::File(p) => Some(read_emb(p)?),
    };
    let data = load_pairs(&args.pairs)?;
    let s = sweep_k(&data, corpus.as_ref(), &args.ks, args.pairs.eps)?;
    for k in &s.skipped {
        warn!("k={k} exceeds the numerical rank {}; skipped", s.rank);
    }
    let mut out = args.output.open()?;
    writeln!(out, "k\tdim\tspearman_rho_x100")?;
    for p in &s.points {
        warn_skipped(&p.report);
        writeln!(
            out,
            "{}\t{}\t{:.5}",
            p.components,
            p.report.dim_used,
            p.report.rho_x100()
        )?;
    }
    out.flush()?;
    Ok(())
}

fn stats(args: &StatsArgs) -> Result<()> {
    let state = stream_moments(&args.input)?;
    let (mean, cov) = state.finalize()?;
    let eig = sym_eig(&cov)?;
    let top: Vec<String> = eig
        .eigenvalues
        .iter()
        .take(args.top)
        .map(|v| v.to_string())
        .collect();
    let mut out = args.output.open()?;
    writeln!(out, "n\t{}", state.count())?;
    writeln!(out, "dim\t{}", state.dim())?;
    writeln!(out, "mean_norm\t{}", whitevec::linalg::norm(&mean))?;
    writeln!(out, "trace\t{}", cov.trace())?;
    writeln!(out, "top_eigenvalues\t{}", top.join(","))?;
    out.flush()?;
    Ok(())
}

fn prepare_search(args: &SearchArgs) -> Result<(whitevec::CosineIndex, EmbeddingMatrix)> {
    let threads = args.threads.get();
    let mut base = read_emb(&args.index)?;
    let mut queries = read_emb(&args.query)?;
    if let Some(p) = &args.transform {
        let t = read_transform(p)?;
        base = t.apply_batch_threads(&base, threads)?;
        queries = t.apply_batch_threads(&queries, threads)?;
    }
    let index = build_index(&base)?;
    if index.norms_dropped() > 0 {
        warn!("dropped {} zero-norm index rows", index.norms_dropped());
    }
    Ok((index, queries))
}

fn search(args: &SearchArgs) -> Result<()> {
    let (index, queries) = prepare_search(args)?;
    let k = usize::try_from(args.top).unwrap_or(usize::MAX);
    let results = index.top_k_batch(&queries, k, args.threads.get());
    let mut out = args.output.open()?;
    writeln!(out, "query_row\trank\tid\tscore")?;
    for (row, result) in results.into_iter().enumerate() {
        let hits = match result {
            Ok(h) => h,
            Err(whitevec::Error::ZeroVector) => {
                warn!("query row {row} has zero norm; skipped");
                continue;
            }
            Err(e) => return Err(e).with_context(|| format!("query row {row}")),
        };
        for (rank, h) in hits.iter().enumerate() {
            writeln!(out, "{row}\t{}\t{}\t{:.6}", rank + 1, h.id, h.score)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn bench(args: &BenchArgs) -> Result<()> {
    let s = &args.search;
    let (index, queries) = prepare_search(s)?;
    let b = whitevec::benchmark(
        &index,
        &queries,
        usize::try_from(s.top).unwrap_or(usize::MAX),
        usize::try_from(args.reps).unwrap_or(usize::MAX),
        s.threads.get(),
    )?;
    let mut out = s.output.open()?;
    serde_json::to_writer_pretty(&mut out, &b.report)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Fit(a) => fit(a),
        Command::Transform(a) => transform(a),
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => sweep(a),
        Command::Stats(a) => stats(a),
        Command::Search(a) => search(a),
        Command::Bench(a) => bench(a),
    }
}

/// Name of the first library error in the chain, or a generic one.
fn error_name(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<whitevec::Error>() {
            return e.name();
        }
        if cause.downcast_ref::<io::Error>().is_some() {
            return "Io";
        }
    }
    "Error"
}

// Cross-flag checks clap cannot express; run before any file is opened.
fn validate(cli: &Cli) {
    if let Command::Sweep(a) = &cli.command {
        if matches!(a.pairs.fit, FitSource::None) {
            Cli::command()
                .error(
                    clap::error::ErrorKind::ValueValidation,
                    "sweep needs a fit corpus: use --fit target or --fit <file>",
                )
                .exit();
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format(|buf, rec| {
            writeln!(
                buf,
                "{}: {}",
                rec.level().as_str().to_ascii_lowercase(),
                rec.args()
            )
        })
        .init();
    let cli = Cli::parse();
    validate(&cli);
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {e:#}", error_name(&e));
            ExitCode::FAILURE
        }
    }
}
