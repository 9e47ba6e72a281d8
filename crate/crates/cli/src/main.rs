//! `ragseg`: batch segmentation, scoring and parameter sweeps.

mod config;
mod dataset;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Parser;
use rayon::prelude::*;

use config::{RunConfig, Sweep};
use dataset::{collect_inputs, stem, GroundTruthIndex};
use run::{ensure_writable, process, write_metrics, write_sweep, Artifacts, ImageJob, SweepRow};

/// Segment images by iterated community detection on region adjacency
/// graphs.
///
/// Outputs per image: <id>.labels.png, <id>.labels.txt, <id>.overlay.png,
/// <id>.trace.json, plus metrics.csv when ground truths are found. With
/// --sweep, writes sweep_detail.csv and sweep_summary.csv instead.
#[derive(Debug, Parser)]
#[command(name = "ragseg", version)]
struct Args {
    /// Image files (PNG, PPM) or directories of images.
    #[arg(long, short, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    /// Directory of <id>.gt<k>.{png,txt} label maps, optionally with manifest.json.
    #[arg(long)]
    gt_dir: Option<PathBuf>,
    #[arg(long, short, default_value = "out")]
    out: PathBuf,
    /// TOML file mirroring the pipeline configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// louvain, fast_greedy, infomap or fmcdrn.
    #[arg(long)]
    algorithm: Option<String>,
    /// meanshift or superpixels (default parameters).
    #[arg(long)]
    initializer: Option<String>,
    /// Texture-color balance.
    #[arg(long)]
    a: Option<f64>,
    /// Color similarity width in LAB units.
    #[arg(long)]
    sigma: Option<f64>,
    /// Global seed; each image derives its own from it and its path.
    #[arg(long)]
    seed: Option<u64>,
    /// Boundary match tolerance in pixels.
    #[arg(long)]
    tol: Option<f64>,
    /// Any config field as a dotted key, e.g. similarity.min_edge_weight=0.05.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Run every image once per value: <param>=<v1,v2,...>.
    #[arg(long)]
    sweep: Option<String>,
    /// Also write the final weighted region graph as <id>.rag.txt.
    #[arg(long)]
    dump_rag: bool,
}

fn build_config(args: &Args) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    // initializer first so dotted initializer keys apply to the chosen kind
    if let Some(v) = &args.initializer {
        cfg = cfg.with("initializer", v)?;
    }
    for kv in &args.overrides {
        let (k, v) = kv.split_once('=').with_context(|| format!("--set expects KEY=VALUE, got {kv:?}"))?;
        cfg = cfg.with(k.trim(), v.trim())?;
    }
    if let Some(v) = &args.algorithm {
        cfg = cfg.with("algorithm", v)?;
    }
    if let Some(v) = args.a {
        cfg = cfg.with("a", &v.to_string())?;
    }
    if let Some(v) = args.sigma {
        cfg = cfg.with("sigma", &v.to_string())?;
    }
    if let Some(v) = args.tol {
        cfg = cfg.with("tol", &v.to_string())?;
    }
    if let Some(v) = args.seed {
        cfg.pipeline.seed = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn jobs(args: &Args) -> Result<Vec<ImageJob>> {
    let inputs = collect_inputs(&args.input)?;
    let index = match &args.gt_dir {
        Some(dir) => GroundTruthIndex::scan(dir)?,
        None => GroundTruthIndex::default(),
    };
    inputs
        .into_iter()
        .map(|path| {
            let id = stem(&path);
            let ground_truths = index.lookup(&id)?.to_vec();
            Ok(ImageJob { path, id, ground_truths })
        })
        .collect()
}

fn single(args: &Args, cfg: &RunConfig, jobs: &[ImageJob]) -> Result<bool> {
    let artifacts = Artifacts {
        dir: &args.out,
        dump_rag: args.dump_rag,
    };
    let results: Vec<Result<run::Outcome>> = jobs.par_iter().map(|j| process(j, cfg, Some(artifacts))).collect();
    let mut ok = Vec::new();
    let mut failed = None;
    for (job, r) in jobs.iter().zip(results) {
        match r {
            Ok(o) => {
                eprintln!("{}: {} iterations, {:.3} s", o.id, o.iterations, o.seconds);
                ok.push(o);
            }
            Err(e) => {
                eprintln!("error: {}: {e:#}", job.path.display());
                failed.get_or_insert(e);
            }
        }
    }
    if ok.iter().any(|o| o.metrics.is_some()) {
        write_metrics(&args.out.join("metrics.csv"), &ok.iter().collect::<Vec<_>>())?;
    }
    match failed {
        Some(e) => Err(e.context("some images failed")),
        None => Ok(true),
    }
}

fn sweep(args: &Args, cfg: &RunConfig, spec: &str, jobs: &[ImageJob]) -> Result<bool> {
    if args.gt_dir.is_none() {
        bail!("--sweep needs --gt-dir");
    }
    let axis = Sweep::parse(spec)?;
    let configs = axis.configs(cfg)?;
    let tasks: Vec<(&String, &RunConfig, &ImageJob)> =
        configs.iter().flat_map(|(name, c)| jobs.iter().map(move |j| (name, c, j))).collect();
    let rows: Vec<SweepRow> = tasks
        .par_iter()
        .map(|&(name, c, job)| {
            let outcome = if job.ground_truths.is_empty() {
                Err("no ground truth".to_string())
            } else {
                process(job, c, None).map_err(|e| format!("{e:#}"))
            };
            SweepRow {
                config: name.clone(),
                id: job.id.clone(),
                outcome,
            }
        })
        .collect();
    for r in &rows {
        if let Err(e) = &r.outcome {
            eprintln!("error: {} [{}]: {e}", r.id, r.config);
        }
    }
    let names: Vec<String> = configs.into_iter().map(|(n, _)| n).collect();
    write_sweep(&args.out.join("sweep_detail.csv"), &args.out.join("sweep_summary.csv"), &names, &rows)?;
    Ok(rows.iter().all(|r| r.outcome.is_ok()))
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("RAGSEG_THREADS") {
        let n: usize = v.trim().parse().with_context(|| format!("RAGSEG_THREADS must be a positive integer, got {v:?}"))?;
        if n == 0 {
            bail!("RAGSEG_THREADS must be a positive integer, got 0");
        }
        builder = builder.num_threads(n);
    }
    builder.build().context("cannot start worker pool")
}

fn run(args: &Args) -> Result<bool> {
    let cfg = build_config(args)?;
    let jobs = jobs(args)?;
    ensure_writable(&args.out)?;
    let pool = thread_pool()?;
    pool.install(|| match &args.sweep {
        Some(spec) => sweep(args, &cfg, spec, &jobs),
        None => single(args, &cfg, &jobs),
    })
}

/// I/O failures exit with 2, everything else with 1.
fn exit_code(e: &anyhow::Error) -> u8 {
    let io = e.chain().any(|c| {
        c.is::<std::io::Error>()
            || matches!(
                c.downcast_ref::<ragseg::Error>(),
                Some(ragseg::Error::Read { .. } | ragseg::Error::Write { .. })
            )
    });
    if io {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
